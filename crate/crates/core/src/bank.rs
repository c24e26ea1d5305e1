//! Accounts, credit checks and double-entry charging.
//!
//! Charges only move credit between accounts, so the sum of all balances is
//! fixed once the accounts are opened. Every settled charge is appended to
//! an immutable ledger that can be replayed against the opening balances.

use std::io::Write;

use thiserror::Error;

use crate::ids::{AccountId, JobId, ResourceId};
use crate::scalar::{sum, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum BankError {
    #[error("initial credit {0} is negative")]
    NegativeCredit(String),
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("account {account} holds {balance}, cannot pay {amount}")]
    InsufficientFunds { account: AccountId, balance: String, amount: String },
    #[error("usage record amount {0} is negative")]
    NegativeAmount(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Account<T> {
    pub id: AccountId,
    pub owner: String,
    pub balance: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UsageRecord<T> {
    pub consumer: AccountId,
    pub provider: AccountId,
    pub resource: ResourceId,
    pub job: JobId,
    pub pe_seconds: T,
    pub data_mb: T,
    pub amount: T,
    pub time: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transaction<T> {
    pub debit: (AccountId, T),
    pub credit: (AccountId, T),
    pub record: UsageRecord<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Statement<T> {
    pub account: AccountId,
    pub opening: T,
    pub rows: Vec<Transaction<T>>,
    pub closing: T,
}

#[derive(Clone, Debug, Default)]
pub struct Bank<T> {
    accounts: Vec<Account<T>>,
    opening: Vec<T>,
    ledger: Vec<Transaction<T>>,
}

impl<T: Scalar> Bank<T> {
    pub fn new() -> Self {
        Self {
            accounts: Vec::new(),
            opening: Vec::new(),
            ledger: Vec::new(),
        }
    }

    pub fn open_account(&mut self, owner: impl Into<String>, initial_credit: T) -> Result<AccountId, BankError> {
        if initial_credit < T::zero() {
            return Err(BankError::NegativeCredit(initial_credit.to_string()));
        }
        let id = AccountId(self.accounts.len());
        self.accounts.push(Account {
            id,
            owner: owner.into(),
            balance: initial_credit.clone(),
        });
        self.opening.push(initial_credit);
        Ok(id)
    }

    pub fn account(&self, id: AccountId) -> Result<&Account<T>, BankError> {
        self.accounts.get(id.0).ok_or(BankError::UnknownAccount(id))
    }

    pub fn balance(&self, id: AccountId) -> Result<T, BankError> {
        Ok(self.account(id)?.balance.clone())
    }

    pub fn accounts(&self) -> &[Account<T>] {
        &self.accounts
    }

    pub fn opening_balances(&self) -> &[T] {
        &self.opening
    }

    pub fn ledger(&self) -> &[Transaction<T>] {
        &self.ledger
    }

    pub fn check_credit(&self, id: AccountId, required: &T) -> Result<bool, BankError> {
        Ok(self.account(id)?.balance >= *required)
    }

    /// Moves `record.amount` from consumer to provider. Nothing changes on
    /// error.
    pub fn charge(&mut self, record: UsageRecord<T>) -> Result<Transaction<T>, BankError> {
        let amount = record.amount.clone();
        if amount < T::zero() {
            return Err(BankError::NegativeAmount(amount.to_string()));
        }
        self.account(record.provider)?;
        let consumer = self.account(record.consumer)?;
        if consumer.balance < amount {
            return Err(BankError::InsufficientFunds {
                account: record.consumer,
                balance: consumer.balance.to_string(),
                amount: amount.to_string(),
            });
        }
        let c = &mut self.accounts[record.consumer.0].balance;
        *c = c.clone() - amount.clone();
        let p = &mut self.accounts[record.provider.0].balance;
        *p = p.clone() + amount.clone();
        let tx = Transaction {
            debit: (record.consumer, amount.clone()),
            credit: (record.provider, amount),
            record,
        };
        self.ledger.push(tx.clone());
        Ok(tx)
    }

    pub fn statement(&self, id: AccountId) -> Result<Statement<T>, BankError> {
        self.account(id)?;
        let opening = self.opening[id.0].clone();
        let mut closing = opening.clone();
        let mut rows = Vec::new();
        for tx in &self.ledger {
            let touched = tx.debit.0 == id || tx.credit.0 == id;
            if tx.debit.0 == id {
                closing = closing - tx.debit.1.clone();
            }
            if tx.credit.0 == id {
                closing = closing + tx.credit.1.clone();
            }
            if touched {
                rows.push(tx.clone());
            }
        }
        Ok(Statement {
            account: id,
            opening,
            rows,
            closing,
        })
    }

    pub fn total_balance(&self) -> T {
        sum(self.accounts.iter().map(|a| a.balance.clone()))
    }

    pub fn total_opening(&self) -> T {
        sum(self.opening.iter().cloned())
    }

    /// Sum of balances unchanged since opening, within the rounding the
    /// scalar type admits.
    pub fn conservation_holds(&self) -> bool {
        let scale = sum(self.opening.iter().map(|b| b.abs()));
        T::conserved(&self.total_opening(), &self.total_balance(), &scale, 2 * self.ledger.len() + self.accounts.len())
    }

    /// Rebuilds every balance by folding the ledger over the opening
    /// balances, in ledger order and with the same operations as `charge`.
    pub fn replay(&self) -> Vec<T> {
        let mut bal = self.opening.clone();
        for tx in &self.ledger {
            bal[tx.debit.0 .0] = bal[tx.debit.0 .0].clone() - tx.debit.1.clone();
            bal[tx.credit.0 .0] = bal[tx.credit.0 .0].clone() + tx.credit.1.clone();
        }
        bal
    }

    pub fn replay_matches(&self) -> bool {
        self.replay().iter().zip(&self.accounts).all(|(r, a)| *r == a.balance)
    }
}

pub const LEDGER_HEADER: [&str; 8] = ["time", "job", "consumer", "provider", "resource", "pe_seconds", "data_mb", "amount"];

/// Writes the ledger as CSV. Ids are rendered through the supplied name
/// lookups.
pub fn write_ledger_csv<T: Scalar, W: Write>(
    ledger: &[Transaction<T>],
    job_name: impl Fn(JobId) -> String,
    account_name: impl Fn(AccountId) -> String,
    resource_name: impl Fn(ResourceId) -> String,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEDGER_HEADER)?;
    for tx in ledger {
        let r = &tx.record;
        w.write_record([
            r.time.to_string(),
            job_name(r.job),
            account_name(r.consumer),
            account_name(r.provider),
            resource_name(r.resource),
            r.pe_seconds.to_string(),
            r.data_mb.to_string(),
            r.amount.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::scalar::ratio;

    fn record<T: Scalar>(consumer: usize, provider: usize, amount: T) -> UsageRecord<T> {
        UsageRecord {
            consumer: AccountId(consumer),
            provider: AccountId(provider),
            resource: ResourceId(0),
            job: JobId(0),
            pe_seconds: T::one(),
            data_mb: T::zero(),
            amount,
            time: T::zero(),
        }
    }

    #[test]
    fn open_accounts() {
        let mut b = Bank::new();
        let a = b.open_account("alice", 100.0).unwrap();
        let p = b.open_account("prov", 0.0).unwrap();
        assert_eq!(b.balance(a), Ok(100.0));
        assert_eq!(b.balance(p), Ok(0.0));
        assert!(matches!(b.open_account("x", -5.0), Err(BankError::NegativeCredit(_))));
    }

    #[test]
    fn credit_check_boundaries() {
        let mut b = Bank::new();
        let a = b.open_account("alice", 100.0).unwrap();
        assert_eq!(b.check_credit(a, &100.0), Ok(true));
        assert_eq!(b.check_credit(a, &100.01), Ok(false));
        assert_eq!(b.check_credit(a, &0.0), Ok(true));
        assert_eq!(b.check_credit(AccountId(7), &0.0), Err(BankError::UnknownAccount(AccountId(7))));
    }

    #[test]
    fn charge_moves_exact_amount() {
        let mut b = Bank::new();
        let c = b.open_account("c", 100.0).unwrap();
        let p = b.open_account("p", 0.0).unwrap();
        let tx = b.charge(record(0, 1, 20.0)).unwrap();
        assert_eq!(tx.debit, (c, 20.0));
        assert_eq!(tx.credit, (p, 20.0));
        assert_eq!((b.balance(c).unwrap(), b.balance(p).unwrap()), (80.0, 20.0));
        b.charge(record(0, 1, 0.0)).unwrap();
        assert_eq!((b.balance(c).unwrap(), b.balance(p).unwrap()), (80.0, 20.0));
        assert_eq!(b.ledger().len(), 2);
    }

    #[test]
    fn insufficient_funds_changes_nothing() {
        let mut b = Bank::new();
        b.open_account("c", 10.0).unwrap();
        b.open_account("p", 0.0).unwrap();
        assert!(matches!(b.charge(record(0, 1, 20.0)), Err(BankError::InsufficientFunds { .. })));
        assert_eq!(b.balance(AccountId(0)), Ok(10.0));
        assert!(b.ledger().is_empty());
        assert!(matches!(b.charge(record(0, 5, 1.0)), Err(BankError::UnknownAccount(_))));
    }

    #[test]
    fn statements() {
        let mut b = Bank::new();
        let c = b.open_account("c", 100.0).unwrap();
        b.open_account("p", 0.0).unwrap();
        let quiet = b.statement(c).unwrap();
        assert!(quiet.rows.is_empty());
        assert_eq!(quiet.closing, 100.0);
        b.charge(record(0, 1, 20.0)).unwrap();
        b.charge(record(0, 1, 30.0)).unwrap();
        let s = b.statement(c).unwrap();
        assert_eq!((s.rows.len(), s.closing), (2, 50.0));
        assert_eq!(b.statement(AccountId(1)).unwrap().closing, 50.0);
    }

    #[test]
    fn ledger_csv_header() {
        let mut b = Bank::new();
        b.open_account("c", 100.0).unwrap();
        b.open_account("p", 0.0).unwrap();
        b.charge(record(0, 1, 2.5)).unwrap();
        let mut out = Vec::new();
        write_ledger_csv(b.ledger(), |j| format!("j{j}"), |a| format!("acct{a}"), |r| format!("r{r}"), &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "time,job,consumer,provider,resource,pe_seconds,data_mb,amount\n0,j0,acct0,acct1,r0,1,0,2.5\n"
        );
    }

    proptest! {
        #[test]
        fn exact_conservation_and_replay(opening in proptest::collection::vec(0i64..1000, 2..6),
                                         charges in proptest::collection::vec((0usize..6, 0usize..6, 0i64..300, 1i64..7), 0..40)) {
            let mut b = Bank::new();
            for (i, o) in opening.iter().enumerate() {
                b.open_account(format!("a{i}"), ratio(*o, 1)).unwrap();
            }
            let n = opening.len();
            let total = b.total_balance();
            for (c, p, num, den) in charges {
                let _ = b.charge(record(c % n, p % n, ratio(num, den)));
                prop_assert_eq!(b.total_balance(), total.clone());
                prop_assert!(b.accounts().iter().all(|a| a.balance >= ratio(0, 1)));
            }
            prop_assert!(b.conservation_holds());
            prop_assert!(b.replay_matches());
            for a in b.accounts() {
                prop_assert_eq!(&b.statement(a.id).unwrap().closing, &a.balance);
            }
        }
    }
}

mod common;

use common::*;
use num_traits::Zero;
use utilgrid::bank::Bank;
use utilgrid::bank::UsageRecord;
use utilgrid::ids::{AccountId, JobId, ResourceId};
use utilgrid::scalar::ratio;
use utilgrid::Exact;

fn r(n: i64, d: i64) -> Exact {
    ratio(n, d)
}

fn four_jobs() -> TinyInstance {
    TinyInstance {
        jobs: 4,
        resources: vec![
            TinyResource { n_pe: 1, cost: r(1, 1), time: r(1, 1) },
            TinyResource { n_pe: 1, cost: r(3, 2), time: r(1, 2) },
        ],
        deadline: r(5, 2),
        budget: r(100, 1),
    }
}

#[test]
fn four_job_example_min_cost_is_five() {
    let o = brute_force_optimal(&four_jobs(), Goal::MinCost).unwrap().unwrap();
    assert_eq!(o.value, r(5, 1));
    assert_eq!(o.witness.iter().filter(|&&x| x == 0).count(), 2);
}

#[test]
fn four_job_example_min_makespan_is_one_and_a_half() {
    let o = brute_force_optimal(&four_jobs(), Goal::MinMakespan).unwrap().unwrap();
    assert_eq!(o.value, r(3, 2));
    assert_eq!(o.cost, r(11, 2));
}

#[test]
fn single_job_single_resource() {
    let inst = TinyInstance {
        jobs: 1,
        resources: vec![TinyResource { n_pe: 1, cost: r(7, 1), time: r(3, 1) }],
        deadline: r(10, 1),
        budget: r(10, 1),
    };
    let o = brute_force_optimal(&inst, Goal::MinCost).unwrap().unwrap();
    assert_eq!((o.value, o.witness), (r(7, 1), vec![0]));
}

#[test]
fn nothing_fits_a_tight_deadline() {
    let mut inst = four_jobs();
    inst.deadline = r(1, 4);
    assert_eq!(brute_force_optimal(&inst, Goal::MinCost).unwrap(), None);
    assert!(brute_force_optimal(&inst, Goal::MinMakespan).unwrap().is_some());
}

#[test]
fn multi_pe_packing() {
    let inst = TinyInstance {
        jobs: 5,
        resources: vec![TinyResource { n_pe: 2, cost: r(1, 1), time: r(2, 1) }],
        deadline: r(100, 1),
        budget: r(100, 1),
    };
    let o = brute_force_optimal(&inst, Goal::MinMakespan).unwrap().unwrap();
    assert_eq!(o.value, r(6, 1));
}

#[test]
fn oversized_instance_is_refused() {
    let mut inst = four_jobs();
    inst.jobs = 9;
    assert_eq!(brute_force_optimal(&inst, Goal::MinCost), Err(OracleError::TooLarge { jobs: 9, resources: 2 }));
    inst.jobs = 2;
    inst.resources = vec![inst.resources[0].clone(); 4];
    assert!(brute_force_optimal(&inst, Goal::MinCost).is_err());
}

fn record(job: usize, amount: Exact, time: Exact) -> UsageRecord<Exact> {
    UsageRecord {
        consumer: AccountId(0),
        provider: AccountId(1),
        resource: ResourceId(0),
        job: JobId(job),
        pe_seconds: Exact::zero(),
        data_mb: Exact::zero(),
        amount,
        time,
    }
}

#[test]
fn empty_ledger_replays_to_opening() {
    let open = vec![r(100, 1), r(0, 1)];
    assert_eq!(replay_ledger(&open, &[]).unwrap(), open);
}

#[test]
fn one_charge_of_twenty() {
    let mut bank: Bank<Exact> = Bank::new();
    bank.open_account("user", r(100, 1)).unwrap();
    bank.open_account("owner", r(0, 1)).unwrap();
    bank.charge(record(0, r(20, 1), r(1, 1))).unwrap();
    let replayed = replay_ledger(bank.opening_balances(), bank.ledger()).unwrap();
    assert_eq!(replayed, vec![r(80, 1), r(20, 1)]);
    let live: Vec<Exact> = bank.accounts().iter().map(|a| a.balance.clone()).collect();
    assert_eq!(replayed, live);
}

#[test]
fn overdraft_and_disorder_are_caught() {
    let mut bank: Bank<Exact> = Bank::new();
    bank.open_account("user", r(100, 1)).unwrap();
    bank.open_account("owner", r(0, 1)).unwrap();
    bank.charge(record(0, r(60, 1), r(2, 1))).unwrap();
    bank.charge(record(1, r(30, 1), r(1, 1))).unwrap();
    assert_eq!(replay_ledger(bank.opening_balances(), bank.ledger()), Err(OracleError::OutOfOrder { step: 1 }));
    let poorer = vec![r(50, 1), r(0, 1)];
    assert_eq!(
        replay_ledger(&poorer, &bank.ledger()[..1]),
        Err(OracleError::NegativeBalance { step: 0, account: 0 })
    );
}

#[test]
fn replica_enumeration_prefers_local_copy() {
    let links = vec![(1, 0, r(10, 1), r(0, 1))];
    let got = best_replica_by_enumeration(&r(5, 1), &[0, 1], 0, &links, true).unwrap();
    assert_eq!(got, (0, r(0, 1), r(0, 1)));
    let got = best_replica_by_enumeration(&r(5, 1), &[1, 2], 0, &links, false).unwrap();
    assert_eq!(got, (1, r(1, 2), r(0, 1)));
    assert_eq!(best_replica_by_enumeration(&r(5, 1), &[2], 0, &links, false), None);
}

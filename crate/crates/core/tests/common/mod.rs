//! Reference implementations for the test suites. Nothing here calls the
//! broker's planners: assignments are enumerated outright and ledgers are
//! folded by hand.

#![allow(dead_code)]

use num_traits::Zero;
use utilgrid::bank::Transaction;
use utilgrid::Exact;

pub const MAX_TINY_JOBS: usize = 8;
pub const MAX_TINY_RESOURCES: usize = 3;

/// One resource of a tiny instance: fixed per-job cost and time, empty queue.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyResource {
    pub n_pe: usize,
    pub cost: Exact,
    pub time: Exact,
}

/// Identical jobs on a handful of idle resources. `deadline` is relative
/// to the planning instant.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyInstance {
    pub jobs: usize,
    pub resources: Vec<TinyResource>,
    pub deadline: Exact,
    pub budget: Exact,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Goal {
    MinCost,
    MinMakespan,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimum {
    pub value: Exact,
    /// Resource index per job.
    pub witness: Vec<usize>,
    pub cost: Exact,
    pub makespan: Exact,
}

#[derive(Debug, PartialEq)]
pub enum OracleError {
    TooLarge { jobs: usize, resources: usize },
    NegativeBalance { step: usize, account: usize },
    OutOfOrder { step: usize },
}

/// Completion time of the last of `k` jobs of length `time` handed one by
/// one to whichever of `n_pe` processors frees up first.
fn fcfs_finish(k: usize, n_pe: usize, time: &Exact) -> Exact {
    let mut free = vec![Exact::zero(); n_pe];
    let mut last = Exact::zero();
    for _ in 0..k {
        let pe = (0..n_pe).min_by(|&a, &b| free[a].cmp(&free[b])).expect("at least one PE");
        free[pe] = free[pe].clone() + time.clone();
        if free[pe] > last {
            last = free[pe].clone();
        }
    }
    last
}

/// Exhaustive optimum. `MinCost` ranges over assignments that finish by
/// the deadline, `MinMakespan` over all of them. `Ok(None)` means no
/// assignment qualifies. Ties keep the first assignment in enumeration
/// order.
pub fn brute_force_optimal(inst: &TinyInstance, goal: Goal) -> Result<Option<Optimum>, OracleError> {
    let (n, m) = (inst.jobs, inst.resources.len());
    if n > MAX_TINY_JOBS || m > MAX_TINY_RESOURCES || m == 0 {
        return Err(OracleError::TooLarge { jobs: n, resources: m });
    }
    let mut best: Option<Optimum> = None;
    let mut assign = vec![0usize; n];
    loop {
        let mut counts = vec![0usize; m];
        let mut cost = Exact::zero();
        for &r in &assign {
            counts[r] += 1;
            cost = cost + inst.resources[r].cost.clone();
        }
        let makespan = (0..m)
            .map(|r| fcfs_finish(counts[r], inst.resources[r].n_pe, &inst.resources[r].time))
            .max()
            .unwrap_or_else(Exact::zero);
        let admissible = match goal {
            Goal::MinCost => makespan <= inst.deadline,
            Goal::MinMakespan => true,
        };
        if admissible {
            let value = match goal {
                Goal::MinCost => cost.clone(),
                Goal::MinMakespan => makespan.clone(),
            };
            if best.as_ref().map_or(true, |b| value < b.value) {
                best = Some(Optimum {
                    value,
                    witness: assign.clone(),
                    cost,
                    makespan,
                });
            }
        }
        // next assignment, odometer style
        let mut i = 0;
        loop {
            if i == n {
                return Ok(best);
            }
            assign[i] += 1;
            if assign[i] < m {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
    }
}

/// Folds the transactions over the opening balances, in order. Fails on a
/// transaction dated before its predecessor or one that would overdraw.
pub fn replay_ledger(initial: &[Exact], txs: &[Transaction<Exact>]) -> Result<Vec<Exact>, OracleError> {
    let mut bal = initial.to_vec();
    for (step, tx) in txs.iter().enumerate() {
        if step > 0 && tx.record.time < txs[step - 1].record.time {
            return Err(OracleError::OutOfOrder { step });
        }
        let (from, amount) = (tx.debit.0 .0, &tx.debit.1);
        bal[from] = bal[from].clone() - amount.clone();
        if bal[from] < Exact::zero() {
            return Err(OracleError::NegativeBalance { step, account: from });
        }
        let (to, amount) = (tx.credit.0 .0, &tx.credit.1);
        bal[to] = bal[to].clone() + amount.clone();
    }
    Ok(bal)
}

/// Per-file exhaustive replica choice: every replica with a route to
/// `dest` is priced, then the lexicographic minimum of (primary metric,
/// secondary metric, site) wins. Returns (site, time, cost).
pub fn best_replica_by_enumeration(
    size_mb: &Exact,
    replicas: &[usize],
    dest: usize,
    links: &[(usize, usize, Exact, Exact)],
    min_time: bool,
) -> Option<(usize, Exact, Exact)> {
    let mut all = Vec::new();
    for &src in replicas {
        let priced = if src == dest {
            Some((Exact::zero(), Exact::zero()))
        } else {
            links
                .iter()
                .find(|(a, b, _, _)| (*a == src && *b == dest) || (*a == dest && *b == src))
                .map(|(_, _, bw, price)| (size_mb.clone() / bw.clone(), size_mb.clone() * price.clone()))
        };
        if let Some((time, cost)) = priced {
            all.push((src, time, cost));
        }
    }
    all.into_iter().min_by(|x, y| {
        let (p, q) = if min_time { ((&x.1, &x.2), (&y.1, &y.2)) } else { ((&x.2, &x.1), (&y.2, &y.1)) };
        p.cmp(&q).then(x.0.cmp(&y.0))
    })
}

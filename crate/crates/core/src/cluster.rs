//! Economy-driven cluster scheduling with deadline/budget admission control
//! and proportional CPU shares.
//!
//! A job needs `remaining / (rating * (deadline - now))` of a node to finish
//! exactly on time. Admission keeps the sum of those required shares at or
//! below one per node. Spare capacity is handed out in proportion to the
//! required shares, so every job runs at least as fast as it must and the
//! node is never idle while it holds work. Shares change only when a job
//! arrives or leaves; between those instants progress is linear.

use thiserror::Error;

use crate::ids::{AccountId, JobId, NodeId};
use crate::scalar::{smax, sum, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("job {job}: deadline {deadline} is not after {now}")]
    PastDeadline { job: String, deadline: String, now: String },
    #[error("node {node}: required shares sum to {total}, above 1")]
    Infeasible { node: NodeId, total: String },
}

/// `price = alpha * length + beta * length / (deadline - submit)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterPricing<T> {
    /// G$ per MI.
    pub alpha: T,
    /// G$ * s per MI.
    pub beta: T,
}

impl<T: Scalar> Default for ClusterPricing<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.01),
            beta: T::one(),
        }
    }
}

impl<T: Scalar> ClusterPricing<T> {
    pub fn price(&self, length_mi: &T, submit: &T, deadline: &T) -> T {
        let window = deadline.clone() - submit.clone();
        self.alpha.clone() * length_mi.clone() + self.beta.clone() * length_mi.clone() / window
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterJob<T> {
    pub job: JobId,
    pub name: String,
    pub consumer: AccountId,
    pub submit: T,
    pub deadline: T,
    pub budget: T,
    pub length_mi: T,
    pub remaining_mi: T,
    pub share: T,
    pub price: T,
}

impl<T: Scalar> ClusterJob<T> {
    pub fn new(job: JobId, name: impl Into<String>, consumer: AccountId, submit: T, deadline: T, budget: T, length_mi: T) -> Self {
        Self {
            job,
            name: name.into(),
            consumer,
            submit,
            deadline,
            budget,
            remaining_mi: length_mi.clone(),
            length_mi,
            share: T::zero(),
            price: T::zero(),
        }
    }
}

/// Share of a node of rating `rating_mips` needed to finish `remaining_mi`
/// by `deadline`. Values above 1 cannot be met on that node.
pub fn required_share<T: Scalar>(remaining_mi: &T, rating_mips: &T, deadline: &T, now: &T) -> Option<T> {
    if now >= deadline {
        return None;
    }
    Some(remaining_mi.clone() / (rating_mips.clone() * (deadline.clone() - now.clone())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterNode<T> {
    pub id: NodeId,
    pub name: String,
    pub rating_mips: T,
    pub active: Vec<ClusterJob<T>>,
    clock: T,
}

/// A job that ran to completion, with its finish time.
#[derive(Clone, Debug, PartialEq)]
pub struct Completion<T> {
    pub node: NodeId,
    pub job: ClusterJob<T>,
    pub finish: T,
}

impl<T: Scalar> ClusterNode<T> {
    pub fn new(id: NodeId, name: impl Into<String>, rating_mips: T) -> Self {
        Self {
            id,
            name: name.into(),
            rating_mips,
            active: Vec::new(),
            clock: T::zero(),
        }
    }

    pub fn clock(&self) -> &T {
        &self.clock
    }

    fn required(&self, job: &ClusterJob<T>, now: &T) -> Result<T, ClusterError> {
        required_share(&job.remaining_mi, &self.rating_mips, &job.deadline, now).ok_or_else(|| ClusterError::PastDeadline {
            job: job.name.clone(),
            deadline: job.deadline.to_string(),
            now: now.to_string(),
        })
    }

    /// Sum of required shares of the active jobs at the node's clock.
    pub fn load(&self) -> Result<T, ClusterError> {
        let mut total = T::zero();
        for j in &self.active {
            total = total + self.required(j, &self.clock)?;
        }
        Ok(total)
    }

    pub fn share_sum(&self) -> T {
        sum(self.active.iter().map(|j| j.share.clone()))
    }

    /// Gives each job its required share plus a cut of the spare capacity
    /// proportional to that requirement.
    pub fn recompute_shares(&mut self) -> Result<(), ClusterError> {
        if self.active.is_empty() {
            return Ok(());
        }
        let now = self.clock.clone();
        let req: Vec<T> = self.active.iter().map(|j| self.required(j, &now)).collect::<Result<_, _>>()?;
        let total = sum(req.iter().cloned());
        // binary floats may overshoot 1 by rounding when a job is admitted with no slack
        let limit = if T::EXACT { T::one() } else { T::lit(1.0 + 1e-9) };
        if total > limit {
            return Err(ClusterError::Infeasible {
                node: self.id,
                total: total.to_string(),
            });
        }
        let spare = smax(T::one() - total.clone(), T::zero());
        for (job, r) in self.active.iter_mut().zip(req) {
            job.share = r.clone() + spare.clone() * (r / total.clone());
        }
        Ok(())
    }

    /// Seconds until the next active job finishes at current shares.
    pub fn next_completion(&self) -> Option<T> {
        self.active
            .iter()
            .map(|j| j.remaining_mi.clone() / (j.share.clone() * self.rating_mips.clone()))
            .reduce(|a, b| if b < a { b } else { a })
    }

    /// Runs the node for `dt` seconds at fixed shares. Jobs whose remaining
    /// work fits in the interval complete at the end of it; the caller must
    /// not step past the earliest completion. Survivors get new shares.
    pub fn advance(&mut self, dt: &T) -> Result<Vec<Completion<T>>, ClusterError> {
        if self.active.is_empty() {
            self.clock = self.clock.clone() + dt.clone();
            return Ok(Vec::new());
        }
        let end = self.clock.clone() + dt.clone();
        let mut done = Vec::new();
        let mut kept = Vec::with_capacity(self.active.len());
        for mut job in self.active.drain(..) {
            let speed = job.share.clone() * self.rating_mips.clone();
            let need = job.remaining_mi.clone() / speed.clone();
            if need <= *dt {
                job.remaining_mi = T::zero();
                done.push(Completion {
                    node: self.id,
                    job,
                    finish: end.clone(),
                });
            } else {
                job.remaining_mi = job.remaining_mi.clone() - speed * dt.clone();
                kept.push(job);
            }
        }
        self.active = kept;
        self.clock = end;
        if !done.is_empty() {
            self.recompute_shares()?;
        }
        Ok(done)
    }

    /// Advances to absolute time `t`, completing jobs at their exact finish
    /// instants along the way.
    pub fn advance_to(&mut self, t: &T) -> Result<Vec<Completion<T>>, ClusterError> {
        let mut out = Vec::new();
        while self.clock < *t {
            let remaining = t.clone() - self.clock.clone();
            let step = match self.next_completion() {
                Some(c) if c <= remaining => c,
                _ => remaining,
            };
            out.extend(self.advance(&step)?);
        }
        // with binary floats a completion can fall due within rounding of the clock
        while let Some(c) = self.next_completion() {
            if self.clock.clone() + c.clone() > *t {
                break;
            }
            out.extend(self.advance(&c)?);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RejectReason {
    DeadlineInfeasible,
    BudgetInsufficient,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::DeadlineInfeasible => "deadline-infeasible",
            RejectReason::BudgetInsufficient => "budget-insufficient",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Admission {
    Accepted(NodeId),
    Rejected(RejectReason),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster<T> {
    pub nodes: Vec<ClusterNode<T>>,
    pub pricing: ClusterPricing<T>,
}

impl<T: Scalar> Cluster<T> {
    pub fn new(ratings: impl IntoIterator<Item = (String, T)>, pricing: ClusterPricing<T>) -> Self {
        let nodes = ratings
            .into_iter()
            .enumerate()
            .map(|(i, (name, r))| ClusterNode::new(NodeId(i), name, r))
            .collect();
        Self { nodes, pricing }
    }

    pub fn advance_to(&mut self, t: &T) -> Result<Vec<Completion<T>>, ClusterError> {
        let mut out = Vec::new();
        for n in &mut self.nodes {
            out.extend(n.advance_to(t)?);
        }
        Ok(out)
    }

    /// Where the job would be placed, if anywhere. Nodes must already be at
    /// `now`. Does not change any state.
    pub fn decide(&self, job: &ClusterJob<T>, now: &T) -> Result<Admission, ClusterError> {
        if job.deadline <= *now {
            return Ok(Admission::Rejected(RejectReason::DeadlineInfeasible));
        }
        let price = self.pricing.price(&job.length_mi, &job.submit, &job.deadline);
        if price > job.budget {
            return Ok(Admission::Rejected(RejectReason::BudgetInsufficient));
        }
        let mut order = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            order.push((n.load()?, n.id));
        }
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite load").then(a.1.cmp(&b.1)));
        for (load, id) in order {
            let node = &self.nodes[id.0];
            let req = required_share(&job.remaining_mi, &node.rating_mips, &job.deadline, now).expect("deadline checked above");
            if load + req <= T::one() {
                return Ok(Admission::Accepted(id));
            }
        }
        Ok(Admission::Rejected(RejectReason::DeadlineInfeasible))
    }

    /// Admits the job on the least-loaded node that can still meet its
    /// deadline, then rebalances that node. Rejection leaves every share
    /// untouched.
    pub fn admit(&mut self, mut job: ClusterJob<T>, now: &T) -> Result<Admission, ClusterError> {
        let decision = self.decide(&job, now)?;
        if let Admission::Accepted(id) = decision {
            job.price = self.pricing.price(&job.length_mi, &job.submit, &job.deadline);
            let node = &mut self.nodes[id.0];
            node.active.push(job);
            node.recompute_shares()?;
        }
        Ok(decision)
    }

    /// Earliest absolute completion instant across all nodes.
    pub fn next_completion_time(&self) -> Option<T> {
        self.nodes
            .iter()
            .filter_map(|n| n.next_completion().map(|d| n.clock.clone() + d))
            .reduce(|a, b| if b < a { b } else { a })
    }
}

#[cfg(test)]
mod tests {
    use num_rational::BigRational;

    use super::*;
    use crate::scalar::ratio;

    fn job<T: Scalar>(id: usize, length: f64, deadline: f64, budget: f64) -> ClusterJob<T> {
        ClusterJob::new(JobId(id), format!("j{id}"), AccountId(0), T::zero(), T::lit(deadline), T::lit(budget), T::lit(length))
    }

    #[test]
    fn required_share_examples() {
        assert_eq!(required_share(&1000.0, &100.0, &20.0, &0.0), Some(0.5));
        assert_eq!(required_share(&600.0, &100.0, &30.0, &0.0), Some(0.2));
        assert_eq!(required_share(&2000.0, &100.0, &10.0, &0.0), Some(2.0));
        assert_eq!(required_share(&1.0, &100.0, &10.0, &10.0), None);
    }

    #[test]
    fn proportional_split_of_spare() {
        let mut n: ClusterNode<BigRational> = ClusterNode::new(NodeId(0), "n", ratio(100, 1));
        n.active.push(job(0, 1000.0, 20.0, 100.0));
        n.active.push(job(1, 600.0, 30.0, 100.0));
        n.recompute_shares().unwrap();
        assert_eq!(n.active[0].share, ratio(5, 7));
        assert_eq!(n.active[1].share, ratio(2, 7));
        assert_eq!(n.share_sum(), ratio(1, 1));
        // the float path matches the spelled-out formula
        let mut f: ClusterNode<f64> = ClusterNode::new(NodeId(0), "n", 100.0);
        f.active.push(job(0, 1000.0, 20.0, 100.0));
        f.active.push(job(1, 600.0, 30.0, 100.0));
        f.recompute_shares().unwrap();
        assert_eq!(f.active[0].share, 0.5 + 0.3 * (0.5 / 0.7));
        assert!((f.active[0].share - 0.714_285_714_285_714_3).abs() < 1e-15);
        assert!((f.active[1].share - 0.285_714_285_714_285_7).abs() < 1e-15);
    }

    #[test]
    fn lone_job_takes_whole_node() {
        let mut n: ClusterNode<BigRational> = ClusterNode::new(NodeId(0), "n", ratio(100, 1));
        n.active.push(job(0, 800.0, 20.0, 100.0));
        n.recompute_shares().unwrap();
        assert_eq!(n.active[0].share, ratio(1, 1));
    }

    #[test]
    fn worked_example_runs_to_completion() {
        let mut c: Cluster<BigRational> = Cluster::new([("n0".to_string(), ratio(100, 1))], ClusterPricing::default());
        let zero = ratio(0, 1);
        assert_eq!(c.admit(job(0, 1000.0, 20.0, 1e6), &zero).unwrap(), Admission::Accepted(NodeId(0)));
        assert_eq!(c.admit(job(1, 600.0, 30.0, 1e6), &zero).unwrap(), Admission::Accepted(NodeId(0)));
        // 1000 / (100 * 5/7) = 14
        assert_eq!(c.next_completion_time(), Some(ratio(14, 1)));
        let done = c.advance_to(&ratio(100, 1)).unwrap();
        assert_eq!(done.len(), 2);
        assert_eq!((done[0].job.job, done[0].finish.clone()), (JobId(0), ratio(14, 1)));
        // 400 MI done by t=14, the last 200 MI at full speed
        assert_eq!((done[1].job.job, done[1].finish.clone()), (JobId(1), ratio(16, 1)));
        assert!(done.iter().all(|d| d.finish <= d.job.deadline));
    }

    #[test]
    fn admission_examples() {
        let mut c: Cluster<BigRational> = Cluster::new([("n0".to_string(), ratio(100, 1))], ClusterPricing::default());
        let zero = ratio(0, 1);
        // existing load 0.7
        c.admit(job(0, 1400.0, 20.0, 1e6), &zero).unwrap();
        assert_eq!(c.nodes[0].load().unwrap(), ratio(7, 10));
        let before = c.nodes[0].active[0].share.clone();
        // 0.8 more does not fit
        assert_eq!(c.decide(&job(1, 1600.0, 20.0, 1e6), &zero).unwrap(), Admission::Rejected(RejectReason::DeadlineInfeasible));
        assert_eq!(c.admit(job(1, 1600.0, 20.0, 1e6), &zero).unwrap(), Admission::Rejected(RejectReason::DeadlineInfeasible));
        assert_eq!(c.nodes[0].active[0].share, before);
        // 0.2 does
        assert_eq!(c.admit(job(2, 400.0, 20.0, 1e6), &zero).unwrap(), Admission::Accepted(NodeId(0)));
    }

    #[test]
    fn price_above_budget_is_rejected() {
        // alpha 0.01 * 1000 + beta 1.0 * 1000 / 20 = 60 G$
        let c: Cluster<f64> = Cluster::new([("n0".to_string(), 100.0)], ClusterPricing::default());
        assert_eq!(c.pricing.price(&1000.0, &0.0, &20.0), 60.0);
        assert_eq!(c.decide(&job(0, 1000.0, 20.0, 50.0), &0.0).unwrap(), Admission::Rejected(RejectReason::BudgetInsufficient));
        assert_eq!(c.decide(&job(0, 1000.0, 20.0, 60.0), &0.0).unwrap(), Admission::Accepted(NodeId(0)));
    }

    #[test]
    fn least_loaded_node_wins_ties_by_id() {
        let mut c: Cluster<BigRational> = Cluster::new(
            [("a".to_string(), ratio(100, 1)), ("b".to_string(), ratio(100, 1))],
            ClusterPricing::default(),
        );
        let zero = ratio(0, 1);
        assert_eq!(c.admit(job(0, 500.0, 20.0, 1e6), &zero).unwrap(), Admission::Accepted(NodeId(0)));
        assert_eq!(c.admit(job(1, 500.0, 20.0, 1e6), &zero).unwrap(), Admission::Accepted(NodeId(1)));
        assert_eq!(c.admit(job(2, 100.0, 20.0, 1e6), &zero).unwrap(), Admission::Accepted(NodeId(0)));
    }

    #[test]
    fn empty_node_advance_is_a_no_op() {
        let mut n: ClusterNode<f64> = ClusterNode::new(NodeId(0), "n", 100.0);
        assert!(n.advance(&5.0).unwrap().is_empty());
        assert_eq!(*n.clock(), 5.0);
        assert!(n.active.is_empty());
    }
}

//! Deadline- and budget-constrained planners.
//!
//! Every planner works on a [`PlanProblem`]: per-job, per-candidate cost and
//! time estimates plus each candidate's PE count and current backlog. A
//! candidate's PEs are modelled as loads (seconds of booked work from now);
//! a job lands on the least-loaded PE and finishes at that load plus its
//! own time. For homogeneous jobs this is exactly
//! `now + ceil((backlog + k) / n_pe) * per_job_time` for the k-th job.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ids::{JobId, ResourceId};
use crate::scalar::Scalar;

use super::Strategy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no candidate resources")]
    NoCandidates,
    #[error("deadline cannot be met: {placed} of {total} jobs fit")]
    DeadlineInfeasible { placed: usize, total: usize },
    #[error("projected cost {cost} exceeds budget {budget}")]
    BudgetInfeasible { cost: String, budget: String },
}

impl PlanError {
    pub fn reason(&self) -> &'static str {
        match self {
            PlanError::NoCandidates => "no-candidates",
            PlanError::DeadlineInfeasible { .. } => "deadline-infeasible",
            PlanError::BudgetInfeasible { .. } => "budget-infeasible",
        }
    }
}

/// A resource the planner may use.
#[derive(Clone, Debug, PartialEq)]
pub struct Slot<T> {
    pub resource: ResourceId,
    pub n_pe: usize,
    /// Jobs already outstanding on the resource.
    pub backlog: usize,
    /// Assumed duration of each backlog job.
    pub backlog_unit: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate<T> {
    pub cost: T,
    pub time: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanProblem<T> {
    pub now: T,
    pub deadline: T,
    pub budget: T,
    pub slots: Vec<Slot<T>>,
    pub jobs: Vec<JobId>,
    /// `estimates[j][c]` is `None` when job `j` cannot use slot `c`.
    pub estimates: Vec<Vec<Option<Estimate<T>>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment<T> {
    pub resource: ResourceId,
    pub slot: usize,
    pub cost: T,
    /// Projected completion, absolute.
    pub finish: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchedulePlan<T> {
    pub assignment: BTreeMap<JobId, Assignment<T>>,
    pub projected_cost: T,
    /// Projected time from planning to the last completion.
    pub projected_makespan: T,
}

impl<T: Scalar> SchedulePlan<T> {
    fn empty() -> Self {
        Self {
            assignment: BTreeMap::new(),
            projected_cost: T::zero(),
            projected_makespan: T::zero(),
        }
    }

    pub fn resource_of(&self, job: JobId) -> Option<ResourceId> {
        self.assignment.get(&job).map(|a| a.resource)
    }

    pub fn jobs_on(&self, resource: ResourceId) -> usize {
        self.assignment.values().filter(|a| a.resource == resource).count()
    }
}

struct Loads<T> {
    per_slot: Vec<Vec<T>>,
}

impl<T: Scalar> Loads<T> {
    fn new(slots: &[Slot<T>]) -> Self {
        let per_slot = slots
            .iter()
            .map(|s| {
                let q = s.backlog / s.n_pe;
                let r = s.backlog % s.n_pe;
                (0..s.n_pe)
                    .map(|i| T::from_count(q + usize::from(i < r)) * s.backlog_unit.clone())
                    .collect()
            })
            .collect();
        Self { per_slot }
    }

    fn least(&self, slot: usize) -> (usize, &T) {
        let pes = &self.per_slot[slot];
        let mut best = 0;
        for i in 1..pes.len() {
            if pes[i] < pes[best] {
                best = i;
            }
        }
        (best, &pes[best])
    }

    /// Finish offset (from now) if a job of `time` went to `slot`.
    fn finish(&self, slot: usize, time: &T) -> T {
        self.least(slot).1.clone() + time.clone()
    }

    fn book(&mut self, slot: usize, time: &T) -> T {
        let (pe, load) = self.least(slot);
        let f = load.clone() + time.clone();
        self.per_slot[slot][pe] = f.clone();
        f
    }
}

fn by_cost_then_id<T: Scalar>(a: (&T, ResourceId), b: (&T, ResourceId)) -> std::cmp::Ordering {
    a.0.partial_cmp(b.0).expect("finite cost").then(a.1.cmp(&b.1))
}

/// Runs the strategy. With `partial`, stops at the first job that cannot be
/// placed within deadline and budget and returns the plan so far together
/// with the reason; otherwise any shortfall is an error.
pub fn plan<T: Scalar>(strategy: Strategy, p: &PlanProblem<T>, partial: bool) -> Result<(SchedulePlan<T>, Option<PlanError>), PlanError> {
    if p.slots.is_empty() {
        return Err(PlanError::NoCandidates);
    }
    let horizon = p.deadline.clone() - p.now.clone();
    let mut loads = Loads::new(&p.slots);
    let mut out: SchedulePlan<T> = SchedulePlan::empty();
    let mut stop: Option<PlanError> = None;

    for (j, &job) in p.jobs.iter().enumerate() {
        let row = &p.estimates[j];
        let usable: Vec<usize> = (0..p.slots.len()).filter(|&c| row[c].is_some()).collect();
        let est = |c: usize| row[c].as_ref().expect("usable slot");
        let fits = |loads: &Loads<T>, c: usize| loads.finish(c, &est(c).time) <= horizon;

        let chosen = match strategy {
            Strategy::CostOpt => {
                let mut order = usable.clone();
                order.sort_by(|&a, &b| by_cost_then_id((&est(a).cost, p.slots[a].resource), (&est(b).cost, p.slots[b].resource)));
                order.into_iter().find(|&c| fits(&loads, c))
            }
            Strategy::TimeOpt => ect(&usable, &loads, |c| est(c), &p.slots),
            Strategy::CostTime => {
                let mut tiers: Vec<&T> = usable.iter().map(|&c| &est(c).cost).collect();
                tiers.sort_by(|a, b| a.partial_cmp(b).expect("finite cost"));
                tiers.dedup_by(|a, b| a == b);
                tiers.into_iter().find_map(|tier| {
                    let members: Vec<usize> = usable
                        .iter()
                        .copied()
                        .filter(|&c| est(c).cost == *tier && fits(&loads, c))
                        .collect();
                    ect(&members, &loads, |c| est(c), &p.slots)
                })
            }
        };

        let Some(c) = chosen else {
            stop = Some(PlanError::DeadlineInfeasible {
                placed: out.assignment.len(),
                total: p.jobs.len(),
            });
            break;
        };
        let e = est(c);
        let offset = loads.finish(c, &e.time);
        if offset > horizon {
            // only reachable for TimeOpt: the earliest finish is already late
            stop = Some(PlanError::DeadlineInfeasible {
                placed: out.assignment.len(),
                total: p.jobs.len(),
            });
            break;
        }
        let cost = out.projected_cost.clone() + e.cost.clone();
        if cost > p.budget {
            stop = Some(PlanError::BudgetInfeasible {
                cost: cost.to_string(),
                budget: p.budget.to_string(),
            });
            break;
        }
        loads.book(c, &e.time);
        out.projected_cost = cost;
        if offset > out.projected_makespan {
            out.projected_makespan = offset.clone();
        }
        out.assignment.insert(
            job,
            Assignment {
                resource: p.slots[c].resource,
                slot: c,
                cost: e.cost.clone(),
                finish: p.now.clone() + offset,
            },
        );
    }

    match stop {
        Some(e) if !partial => Err(full_plan_error(strategy, p, e)),
        other => Ok((out, other)),
    }
}

/// On failure, report budget infeasibility with the cost the whole job set
/// would have had when the deadline alone permits it.
fn full_plan_error<T: Scalar>(strategy: Strategy, p: &PlanProblem<T>, first: PlanError) -> PlanError {
    if let PlanError::BudgetInfeasible { .. } = first {
        let mut unbounded = p.clone();
        unbounded.budget = p
            .estimates
            .iter()
            .flat_map(|r| r.iter().flatten())
            .fold(T::zero(), |acc, e| acc + e.cost.abs());
        if let Ok((full, None)) = plan(strategy, &unbounded, true) {
            return PlanError::BudgetInfeasible {
                cost: full.projected_cost.to_string(),
                budget: p.budget.to_string(),
            };
        }
    }
    first
}

/// Earliest completion among `members`; ties go to the cheaper slot, then
/// the lower resource id.
fn ect<'a, T: Scalar>(
    members: &[usize],
    loads: &Loads<T>,
    est: impl Fn(usize) -> &'a Estimate<T>,
    slots: &[Slot<T>],
) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for &c in members {
        let f = loads.finish(c, &est(c).time);
        let better = match &best {
            None => true,
            Some((b, bf)) => {
                f < *bf
                    || (f == *bf
                        && by_cost_then_id((&est(c).cost, slots[c].resource), (&est(*b).cost, slots[*b].resource)).is_lt())
            }
        };
        if better {
            best = Some((c, f));
        }
    }
    best.map(|(c, _)| c)
}

//! Resource discovery, per-job cost and time estimates, and the scheduling
//! strategies built on them.

mod planner;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::data::{DataGrid, Objective};
use crate::grid::{job_runtime, price_at, GridResource, Site};
use crate::ids::{AccountId, EntryId, JobId, ResourceId, SiteId};
use crate::market::Directory;
use crate::scalar::{to_count, Scalar};

pub use planner::{plan, Assignment, Estimate, PlanError, PlanProblem, SchedulePlan, Slot};

/// Service type the broker asks the directory for.
pub const COMPUTE_SERVICE: &str = "compute";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    CostOpt,
    TimeOpt,
    CostTime,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::CostOpt, Strategy::TimeOpt, Strategy::CostTime];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::CostOpt => "cost",
            Strategy::TimeOpt => "time",
            Strategy::CostTime => "cost-time",
        }
    }

    /// Replica choice that matches what the strategy optimises.
    pub fn replica_objective(self) -> Objective {
        match self {
            Strategy::CostOpt => Objective::MinCost,
            Strategy::TimeOpt | Strategy::CostTime => Objective::MinTime,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown strategy '{0}' (expected cost, time or cost-time)")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "cost" | "cost-opt" | "costopt" => Ok(Strategy::CostOpt),
            "time" | "time-opt" | "timeopt" => Ok(Strategy::TimeOpt),
            "cost-time" | "costtime" | "cost-time-opt" => Ok(Strategy::CostTime),
            _ => Err(UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QoSRequest<T> {
    /// Absolute simulated time by which all jobs should finish.
    pub deadline: T,
    pub budget: T,
    pub strategy: Strategy,
    pub consumer: AccountId,
    pub home_site: SiteId,
    pub app: String,
    /// Size of the application code to stage to resources that do not
    /// host `app`. `None` restricts discovery to hosting resources.
    pub code_mb: Option<T>,
}

/// What the broker needs to know about one job to price it.
#[derive(Clone, Debug, PartialEq)]
pub struct JobProfile<T> {
    pub length_mi: T,
    pub inputs: Vec<String>,
    pub output_mb: T,
}

impl<T: Scalar> JobProfile<T> {
    pub fn new(length_mi: T) -> Self {
        Self {
            length_mi,
            inputs: Vec::new(),
            output_mb: T::zero(),
        }
    }
}

/// A discovered resource with the per-job estimates for one job profile.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateResource<T> {
    pub entry: EntryId,
    pub resource: ResourceId,
    pub site: SiteId,
    pub n_pe: usize,
    pub backlog: usize,
    pub compute_cost: T,
    /// Input, code and output staging charges.
    pub data_cost: T,
    pub per_job_cost: T,
    /// Staging in plus compute; output return is not on the critical path.
    pub per_job_time: T,
    pub transfer_time: T,
    pub runtime: T,
    /// Megabytes crossing a network link per job.
    pub moved_mb: T,
    pub stages_code: bool,
    pub capacity_by_deadline: usize,
}

/// The broker's view of the grid at planning time.
pub struct Market<'a, T> {
    pub directory: &'a Directory<T>,
    pub resources: &'a [GridResource<T>],
    pub sites: &'a [Site],
    pub data: &'a DataGrid<T>,
    /// Outstanding jobs per resource, indexed by `ResourceId`.
    pub backlog: &'a [usize],
}

fn capacity<T: Scalar>(n_pe: usize, backlog: usize, per_job_time: &T, horizon: &T) -> usize {
    if *horizon < T::zero() {
        return 0;
    }
    if per_job_time.is_zero() {
        return usize::MAX;
    }
    let rounds = to_count(&(horizon.clone() / per_job_time.clone()).floor());
    n_pe.saturating_mul(rounds).saturating_sub(backlog)
}

impl<T: Scalar> Market<'_, T> {
    /// Directory entries the session may use: every compute entry hosting
    /// the app, plus non-hosting ones when code staging is allowed.
    pub fn entries(&self, qos: &QoSRequest<T>) -> Vec<(EntryId, ResourceId)> {
        let app = if qos.code_mb.is_some() { None } else { Some(qos.app.as_str()) };
        self.directory
            .query(COMPUTE_SERVICE, app, None)
            .into_iter()
            .map(|(id, e)| (id, e.resource))
            .collect()
    }

    /// Estimates for running `job` on `resource`; `None` when an input,
    /// the code or the output cannot be moved.
    pub fn evaluate(
        &self,
        entry: EntryId,
        resource: ResourceId,
        qos: &QoSRequest<T>,
        job: &JobProfile<T>,
        now: &T,
    ) -> Option<CandidateResource<T>> {
        let r = &self.resources[resource.0];
        let site = &self.sites[r.site.0];
        let hosts = self
            .directory
            .get(entry)
            .map_or_else(|| r.hosts(&qos.app), |e| e.apps.contains(&qos.app));
        let stages_code = !hosts;
        if stages_code && qos.code_mb.is_none() {
            return None;
        }

        let input = self.data.data_overhead(&job.inputs, r.site, qos.strategy.replica_objective()).ok()?;
        let mut transfer_time = input.transfer_time;
        let mut data_cost = input.transfer_cost;
        let mut moved_mb = input.moved_mb;

        if let (true, Some(code)) = (stages_code, &qos.code_mb) {
            let route = self.data.route(qos.home_site, r.site).ok()?;
            transfer_time = transfer_time + route.transfer_time(code);
            data_cost = data_cost + route.transfer_cost(code);
            if !route.is_local() {
                moved_mb = moved_mb + code.clone();
            }
        }
        if job.output_mb > T::zero() {
            let route = self.data.route(r.site, qos.home_site).ok()?;
            data_cost = data_cost + route.transfer_cost(&job.output_mb);
            if !route.is_local() {
                moved_mb = moved_mb + job.output_mb.clone();
            }
        }

        let runtime = job_runtime(&job.length_mi, &r.pe_rating_mips).ok()?;
        let compute_cost = runtime.clone() * price_at(r, site, now);
        let per_job_time = transfer_time.clone() + runtime.clone();
        let backlog = self.backlog.get(resource.0).copied().unwrap_or(0);
        let horizon = qos.deadline.clone() - now.clone();
        Some(CandidateResource {
            entry,
            resource,
            site: r.site,
            n_pe: r.n_pe,
            backlog,
            per_job_cost: compute_cost.clone() + data_cost.clone(),
            compute_cost,
            data_cost,
            capacity_by_deadline: capacity(r.n_pe, backlog, &per_job_time, &horizon),
            per_job_time,
            transfer_time,
            runtime,
            moved_mb,
            stages_code,
        })
    }

    /// Candidates for `job`, cheapest first (ties by resource id).
    pub fn discover(&self, qos: &QoSRequest<T>, job: &JobProfile<T>, now: &T) -> Vec<CandidateResource<T>> {
        let mut out: Vec<_> = self
            .entries(qos)
            .into_iter()
            .filter_map(|(e, r)| self.evaluate(e, r, qos, job, now))
            .collect();
        sort_candidates(&mut out);
        out
    }

    /// Builds the planning problem for `jobs`, evaluating every
    /// job against every usable directory entry.
    pub fn problem(&self, qos: &QoSRequest<T>, jobs: &[(JobId, JobProfile<T>)], now: &T) -> (PlanProblem<T>, Vec<Vec<Option<CandidateResource<T>>>>) {
        let entries = self.entries(qos);
        let rows: Vec<Vec<Option<CandidateResource<T>>>> = jobs
            .iter()
            .map(|(_, j)| entries.iter().map(|&(e, r)| self.evaluate(e, r, qos, j, now)).collect())
            .collect();
        let mut slots = Vec::new();
        let mut keep = Vec::new();
        for (c, &(_, resource)) in entries.iter().enumerate() {
            let Some(first) = rows.iter().find_map(|row| row[c].as_ref()) else { continue };
            keep.push(c);
            slots.push(Slot {
                resource,
                n_pe: first.n_pe,
                backlog: first.backlog,
                backlog_unit: first.per_job_time.clone(),
            });
        }
        let rows: Vec<Vec<Option<CandidateResource<T>>>> = rows
            .into_iter()
            .map(|row| {
                let mut row: Vec<_> = row.into_iter().map(Some).collect();
                keep.iter().map(|&c| row[c].take().flatten()).collect()
            })
            .collect();
        let estimates = rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| {
                        c.as_ref().map(|c| Estimate {
                            cost: c.per_job_cost.clone(),
                            time: c.per_job_time.clone(),
                        })
                    })
                    .collect()
            })
            .collect();
        let problem = PlanProblem {
            now: now.clone(),
            deadline: qos.deadline.clone(),
            budget: qos.budget.clone(),
            slots,
            jobs: jobs.iter().map(|(id, _)| *id).collect(),
            estimates,
        };
        (problem, rows)
    }
}

pub fn sort_candidates<T: Scalar>(c: &mut [CandidateResource<T>]) {
    c.sort_by(|a, b| {
        a.per_job_cost
            .partial_cmp(&b.per_job_cost)
            .expect("finite cost")
            .then(a.resource.cmp(&b.resource))
    });
}

/// Planning problem for identical jobs over a fixed candidate list.
pub fn homogeneous_problem<T: Scalar>(jobs: &[JobId], candidates: &[CandidateResource<T>], qos: &QoSRequest<T>, now: &T) -> PlanProblem<T> {
    let row: Vec<Option<Estimate<T>>> = candidates
        .iter()
        .map(|c| {
            Some(Estimate {
                cost: c.per_job_cost.clone(),
                time: c.per_job_time.clone(),
            })
        })
        .collect();
    PlanProblem {
        now: now.clone(),
        deadline: qos.deadline.clone(),
        budget: qos.budget.clone(),
        slots: candidates
            .iter()
            .map(|c| Slot {
                resource: c.resource,
                n_pe: c.n_pe,
                backlog: c.backlog,
                backlog_unit: c.per_job_time.clone(),
            })
            .collect(),
        jobs: jobs.to_vec(),
        estimates: vec![row; jobs.len()],
    }
}

fn run<T: Scalar>(strategy: Strategy, jobs: &[JobId], candidates: &[CandidateResource<T>], qos: &QoSRequest<T>, now: &T) -> Result<SchedulePlan<T>, PlanError> {
    let p = homogeneous_problem(jobs, candidates, qos, now);
    plan(strategy, &p, false).map(|(s, _)| s)
}

/// Fills the cheapest resources first, each up to what it can finish by
/// the deadline.
pub fn schedule_cost_opt<T: Scalar>(jobs: &[JobId], candidates: &[CandidateResource<T>], qos: &QoSRequest<T>, now: &T) -> Result<SchedulePlan<T>, PlanError> {
    run(Strategy::CostOpt, jobs, candidates, qos, now)
}

/// Sends each job where it would complete earliest.
pub fn schedule_time_opt<T: Scalar>(jobs: &[JobId], candidates: &[CandidateResource<T>], qos: &QoSRequest<T>, now: &T) -> Result<SchedulePlan<T>, PlanError> {
    run(Strategy::TimeOpt, jobs, candidates, qos, now)
}

/// Earliest completion within the cheapest price tier that still has
/// room before the deadline.
pub fn schedule_cost_time<T: Scalar>(jobs: &[JobId], candidates: &[CandidateResource<T>], qos: &QoSRequest<T>, now: &T) -> Result<SchedulePlan<T>, PlanError> {
    run(Strategy::CostTime, jobs, candidates, qos, now)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResourceTally<T> {
    pub jobs: usize,
    pub cost: T,
}

/// Outcome of one broker session.
#[derive(Clone, Debug, PartialEq)]
pub struct BrokerReport<T> {
    pub session: String,
    pub strategy: Strategy,
    pub jobs_total: usize,
    pub jobs_done: usize,
    pub jobs_failed: usize,
    pub total_cost: T,
    pub compute_cost: T,
    pub data_cost: T,
    pub budget: T,
    pub deadline: T,
    /// Last completion minus session start; zero when nothing finished.
    pub makespan: T,
    pub deadline_met: bool,
    pub budget_respected: bool,
    pub per_resource: BTreeMap<String, ResourceTally<T>>,
    pub failures: BTreeMap<String, usize>,
    pub aborted: Option<String>,
}

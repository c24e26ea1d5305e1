//! Priced computational resources and space-shared job execution.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ids::{AccountId, JobId, ResourceId, SiteId};
use crate::scalar::Scalar;

const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("PE rating must be positive, got {0}")]
    NonPositiveRating(String),
    #[error("job length must be non-negative, got {0}")]
    NegativeLength(String),
    #[error("resource {resource}: {reason}")]
    InvalidResource { resource: String, reason: String },
    #[error("site {site}: UTC offset {offset} outside [-12, 14]")]
    InvalidOffset { site: String, offset: i32 },
    #[error("job {job}: illegal status transition {from:?} -> {to:?}")]
    IllegalTransition { job: String, from: JobStatus, to: JobStatus },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Site {
    pub id: SiteId,
    pub name: String,
    pub utc_offset_hours: i32,
}

impl Site {
    pub fn new(id: SiteId, name: impl Into<String>, utc_offset_hours: i32) -> Result<Self, GridError> {
        let name = name.into();
        if !(-12..=14).contains(&utc_offset_hours) {
            return Err(GridError::InvalidOffset {
                site: name,
                offset: utc_offset_hours,
            });
        }
        Ok(Self {
            id,
            name,
            utc_offset_hours,
        })
    }
}

/// Daily local-time interval `[start_hour, end_hour)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeakWindow<T> {
    pub start_hour: T,
    pub end_hour: T,
}

impl<T: Scalar> PeakWindow<T> {
    pub fn contains(&self, hour_of_day: &T) -> bool {
        *hour_of_day >= self.start_hour && *hour_of_day < self.end_hour
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResource<T> {
    pub id: ResourceId,
    pub name: String,
    pub site: SiteId,
    pub n_pe: usize,
    /// Million instructions per second, per PE.
    pub pe_rating_mips: T,
    /// G$ per PE-second.
    pub base_price: T,
    pub peak_multiplier: T,
    pub peak_window: Option<PeakWindow<T>>,
    pub provider_account: AccountId,
    pub apps: BTreeSet<String>,
}

impl<T: Scalar> GridResource<T> {
    /// Checks the structural invariants of a resource declaration.
    pub fn validate(&self) -> Result<(), GridError> {
        let bad = |reason: String| GridError::InvalidResource {
            resource: self.name.clone(),
            reason,
        };
        if self.n_pe < 1 {
            return Err(bad("needs at least one PE".into()));
        }
        if self.pe_rating_mips <= T::zero() {
            return Err(bad(format!("PE rating {} is not positive", self.pe_rating_mips)));
        }
        if self.base_price < T::zero() {
            return Err(bad(format!("base price {} is negative", self.base_price)));
        }
        if self.peak_multiplier < T::one() {
            return Err(bad(format!("peak multiplier {} is below 1", self.peak_multiplier)));
        }
        if let Some(w) = &self.peak_window {
            let ok = w.start_hour >= T::zero() && w.start_hour < w.end_hour && w.end_hour <= T::lit(24.0);
            if !ok {
                return Err(bad(format!("peak window [{}, {}) is not within a day", w.start_hour, w.end_hour)));
            }
        }
        Ok(())
    }

    pub fn hosts(&self, app: &str) -> bool {
        self.apps.contains(app)
    }

    /// The highest rate this resource can ever charge.
    pub fn max_price(&self) -> T {
        match self.peak_window {
            Some(_) => self.base_price.clone() * self.peak_multiplier.clone(),
            None => self.base_price.clone(),
        }
    }
}

/// Seconds to run `length_mi` on one PE of the given rating.
pub fn job_runtime<T: Scalar>(length_mi: &T, pe_rating_mips: &T) -> Result<T, GridError> {
    if *pe_rating_mips <= T::zero() {
        return Err(GridError::NonPositiveRating(pe_rating_mips.to_string()));
    }
    if *length_mi < T::zero() {
        return Err(GridError::NegativeLength(length_mi.to_string()));
    }
    Ok(length_mi.clone() / pe_rating_mips.clone())
}

/// Local hour of day at the site for simulated time `t`.
pub fn local_hour<T: Scalar>(t: &T, utc_offset_hours: i32) -> T {
    let hours = t.clone() / T::lit(SECONDS_PER_HOUR) + T::lit(f64::from(utc_offset_hours));
    hours.rem_euclid(&T::lit(24.0))
}

/// Price per PE-second in effect at time `t`.
pub fn price_at<T: Scalar>(resource: &GridResource<T>, site: &Site, t: &T) -> T {
    match &resource.peak_window {
        Some(w) if w.contains(&local_hour(t, site.utc_offset_hours)) => {
            resource.base_price.clone() * resource.peak_multiplier.clone()
        }
        _ => resource.base_price.clone(),
    }
}

/// Compute charge for a job of `length_mi` starting at `start`. The rate
/// is sampled at `start` and held for the whole run.
pub fn compute_cost<T: Scalar>(length_mi: &T, resource: &GridResource<T>, site: &Site, start: &T) -> Result<T, GridError> {
    Ok(job_runtime(length_mi, &resource.pe_rating_mips)? * price_at(resource, site, start))
}

/// Planning estimate: `t + ceil((backlog + 1) / n_pe) * runtime`.
pub fn estimate_completion<T: Scalar>(
    resource: &GridResource<T>,
    backlog_jobs: usize,
    length_mi: &T,
    t: &T,
) -> Result<T, GridError> {
    let runtime = job_runtime(length_mi, &resource.pe_rating_mips)?;
    let rounds = (T::from_count(backlog_jobs + 1) / T::from_count(resource.n_pe)).ceil();
    Ok(t.clone() + rounds * runtime)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JobStatus {
    Created,
    Queued,
    Dispatched,
    Transferring,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }

    pub fn can_become(self, next: JobStatus) -> bool {
        use JobStatus::*;
        match (self, next) {
            (Created, Queued) | (Queued, Dispatched) | (Dispatched, Transferring) | (Transferring, Running) | (Running, Done) => true,
            (from, Failed) => !from.is_terminal(),
            _ => false,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobStatus::Created => "created",
            JobStatus::Queued => "queued",
            JobStatus::Dispatched => "dispatched",
            JobStatus::Transferring => "transferring",
            JobStatus::Running => "running",
            JobStatus::Done => "done",
            JobStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Job<T> {
    pub id: JobId,
    pub name: String,
    pub length_mi: T,
    pub input_files: Vec<String>,
    pub output_mb: T,
    pub status: JobStatus,
    pub assigned_resource: Option<ResourceId>,
    pub submit_time: Option<T>,
    pub start_time: Option<T>,
    pub finish_time: Option<T>,
    pub compute_cost: T,
    pub data_cost: T,
    pub cost_incurred: T,
    pub failure: Option<String>,
}

impl<T: Scalar> Job<T> {
    pub fn new(id: JobId, name: impl Into<String>, length_mi: T) -> Self {
        Self {
            id,
            name: name.into(),
            length_mi,
            input_files: Vec::new(),
            output_mb: T::zero(),
            status: JobStatus::Created,
            assigned_resource: None,
            submit_time: None,
            start_time: None,
            finish_time: None,
            compute_cost: T::zero(),
            data_cost: T::zero(),
            cost_incurred: T::zero(),
            failure: None,
        }
    }

    pub fn transition(&mut self, next: JobStatus) -> Result<(), GridError> {
        if !self.status.can_become(next) {
            return Err(GridError::IllegalTransition {
                job: self.name.clone(),
                from: self.status,
                to: next,
            });
        }
        self.status = next;
        Ok(())
    }

    pub fn fail(&mut self, reason: impl Into<String>) -> Result<(), GridError> {
        self.transition(JobStatus::Failed)?;
        self.failure = Some(reason.into());
        Ok(())
    }
}

/// Space-shared FCFS bookkeeping for one resource.
#[derive(Clone, Debug, PartialEq)]
pub struct ResourceState<T> {
    pe_free: Vec<T>,
    queue: Vec<JobId>,
}

/// Where and when a submitted job runs.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement<T> {
    pub pe: usize,
    pub start: T,
    pub finish: T,
}

impl<T: Scalar> ResourceState<T> {
    pub fn new(n_pe: usize) -> Self {
        Self {
            pe_free: vec![T::zero(); n_pe],
            queue: Vec::new(),
        }
    }

    pub fn pe_free(&self) -> &[T] {
        &self.pe_free
    }

    /// Jobs placed on the resource and not yet released.
    pub fn queued(&self) -> &[JobId] {
        &self.queue
    }

    /// PE with the earliest next-free time; ties go to the lowest index.
    pub fn earliest_pe(&self) -> usize {
        let mut best = 0;
        for (i, free) in self.pe_free.iter().enumerate().skip(1) {
            if *free < self.pe_free[best] {
                best = i;
            }
        }
        best
    }

    /// Where a job arriving at `arrival` would run, without committing it.
    pub fn preview(&self, runtime: &T, arrival: &T) -> Placement<T> {
        let pe = self.earliest_pe();
        let free = &self.pe_free[pe];
        let start = if free > arrival { free.clone() } else { arrival.clone() };
        let finish = start.clone() + runtime.clone();
        Placement { pe, start, finish }
    }

    /// Places the job on the earliest-free PE and books it until `finish`.
    pub fn submit(&mut self, job: JobId, runtime: &T, arrival: &T) -> Placement<T> {
        let p = self.preview(runtime, arrival);
        self.pe_free[p.pe] = p.finish.clone();
        self.queue.push(job);
        p
    }

    pub fn release(&mut self, job: JobId) {
        self.queue.retain(|j| *j != job);
    }
}

/// `submit_to_resource` for a job of the given length.
pub fn submit_to_resource<T: Scalar>(
    state: &mut ResourceState<T>,
    resource: &GridResource<T>,
    job: &Job<T>,
    arrival: &T,
) -> Result<Placement<T>, GridError> {
    let runtime = job_runtime(&job.length_mi, &resource.pe_rating_mips)?;
    Ok(state.submit(job.id, &runtime, arrival))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    pub(crate) fn resource(n_pe: usize, mips: f64, base: f64, mult: f64, window: Option<(f64, f64)>) -> GridResource<f64> {
        GridResource {
            id: ResourceId(0),
            name: "r".into(),
            site: SiteId(0),
            n_pe,
            pe_rating_mips: mips,
            base_price: base,
            peak_multiplier: mult,
            peak_window: window.map(|(s, e)| PeakWindow { start_hour: s, end_hour: e }),
            provider_account: AccountId(0),
            apps: BTreeSet::new(),
        }
    }

    fn site(offset: i32) -> Site {
        Site::new(SiteId(0), "s", offset).unwrap()
    }

    #[test]
    fn runtime_is_length_over_rating() {
        assert_eq!(job_runtime(&1000.0, &100.0), Ok(10.0));
        assert_eq!(job_runtime(&0.0, &50.0), Ok(0.0));
        assert_eq!(job_runtime(&377.0, &13.0), Ok(29.0));
        assert!(matches!(job_runtime(&1.0, &0.0), Err(GridError::NonPositiveRating(_))));
    }

    #[test]
    fn price_follows_local_peak_window() {
        let r = resource(1, 100.0, 1.0, 2.0, Some((9.0, 17.0)));
        assert_eq!(price_at(&r, &site(0), &(10.0 * 3600.0)), 2.0);
        assert_eq!(price_at(&r, &site(0), &(20.0 * 3600.0)), 1.0);
        // UTC midnight is 10:00 at +10
        assert_eq!(price_at(&r, &site(10), &0.0), 2.0);
        // 17:00 is outside [9, 17)
        assert_eq!(price_at(&r, &site(0), &(17.0 * 3600.0)), 1.0);
        // negative offsets wrap to the previous day
        assert_eq!(price_at(&r, &site(-5), &(14.0 * 3600.0)), 2.0);
        assert_eq!(price_at(&r, &site(-5), &(3.0 * 3600.0)), 1.0);
    }

    #[test]
    fn cost_samples_rate_at_start() {
        let r = resource(1, 100.0, 2.0, 1.0, None);
        assert_eq!(compute_cost(&1000.0, &r, &site(0), &0.0), Ok(20.0));
        assert_eq!(compute_cost(&0.0, &r, &site(0), &0.0), Ok(0.0));
        // starts 10 s before the window opens and runs 100 s into it
        let p = resource(1, 1.0, 1.0, 3.0, Some((9.0, 17.0)));
        let start = 9.0 * 3600.0 - 10.0;
        assert_eq!(compute_cost(&110.0, &p, &site(0), &start), Ok(110.0));
    }

    #[test]
    fn fcfs_on_earliest_free_pe() {
        let r = resource(2, 1.0, 0.0, 1.0, None);
        let mut st = ResourceState::new(2);
        let mut out = Vec::new();
        for i in 0..3 {
            let job = Job::new(JobId(i), format!("j{i}"), 1.0);
            let p = submit_to_resource(&mut st, &r, &job, &0.0).unwrap();
            out.push((p.start, p.finish));
        }
        assert_eq!(out, [(0.0, 1.0), (0.0, 1.0), (1.0, 2.0)]);
    }

    #[test]
    fn idle_pe_starts_on_arrival() {
        let r = resource(1, 10.0, 0.0, 1.0, None);
        let mut st = ResourceState::new(1);
        let p = submit_to_resource(&mut st, &r, &Job::new(JobId(0), "j", 40.0), &5.0).unwrap();
        assert_eq!((p.start, p.finish), (5.0, 9.0));
    }

    #[test]
    fn seven_jobs_on_three_pes_take_six_seconds() {
        // hand timeline: PE0 0-2,2-4,4-6  PE1 0-2,2-4  PE2 0-2,2-4
        let r = resource(3, 1.0, 0.0, 1.0, None);
        let mut st = ResourceState::new(3);
        let makespan = (0..7)
            .map(|i| submit_to_resource(&mut st, &r, &Job::new(JobId(i), "j", 2.0), &0.0).unwrap().finish)
            .fold(0.0, f64::max);
        assert_eq!(makespan, 6.0);
    }

    #[test]
    fn estimator_examples() {
        let one = resource(1, 1.0, 0.0, 1.0, None);
        assert_eq!(estimate_completion(&one, 0, &1.0, &0.0), Ok(1.0));
        let two = resource(2, 1.0, 0.0, 1.0, None);
        assert_eq!(estimate_completion(&two, 3, &1.0, &0.0), Ok(2.0));
    }

    #[test]
    fn status_machine_rejects_skips() {
        let mut j = Job::new(JobId(0), "j", 1.0f64);
        assert!(j.transition(JobStatus::Dispatched).is_err());
        j.transition(JobStatus::Queued).unwrap();
        assert!(j.transition(JobStatus::Running).is_err());
        j.transition(JobStatus::Dispatched).unwrap();
        j.transition(JobStatus::Transferring).unwrap();
        j.transition(JobStatus::Running).unwrap();
        j.transition(JobStatus::Done).unwrap();
        assert!(j.fail("late").is_err());
        let mut k = Job::new(JobId(1), "k", 1.0f64);
        k.transition(JobStatus::Queued).unwrap();
        k.fail("budget").unwrap();
        assert_eq!(k.failure.as_deref(), Some("budget"));
    }

    #[test]
    fn resource_validation() {
        assert!(resource(1, 1.0, 1.0, 1.0, None).validate().is_ok());
        assert!(resource(0, 1.0, 1.0, 1.0, None).validate().is_err());
        assert!(resource(1, 0.0, 1.0, 1.0, None).validate().is_err());
        assert!(resource(1, 1.0, 1.0, 0.5, None).validate().is_err());
        assert!(resource(1, 1.0, 1.0, 2.0, Some((17.0, 9.0))).validate().is_err());
        assert!(Site::new(SiteId(0), "x", 15).is_err());
    }

    proptest! {
        // Homogeneous jobs all queued at t on an idle resource: the
        // estimator never exceeds the simulated finish.
        #[test]
        fn estimate_never_exceeds_actual(n_pe in 1usize..6, backlog in 0usize..20, len in 1u32..500, mips in 1u32..100, t in 0u32..1000) {
            let r = resource(n_pe, f64::from(mips), 0.0, 1.0, None);
            let len = f64::from(len);
            let t = f64::from(t);
            let mut st = ResourceState::new(n_pe);
            let mut last = 0.0;
            for i in 0..=backlog {
                last = submit_to_resource(&mut st, &r, &Job::new(JobId(i), "j", len), &t).unwrap().finish;
            }
            let est = estimate_completion(&r, backlog, &len, &t).unwrap();
            prop_assert!(est <= last + 1e-9 * last.abs());
        }

        // Per-PE busy intervals never overlap.
        #[test]
        fn pe_intervals_are_disjoint(n_pe in 1usize..4, jobs in proptest::collection::vec((1u32..50, 0u32..100), 1..30)) {
            let r = resource(n_pe, 1.0, 0.0, 1.0, None);
            let mut st = ResourceState::new(n_pe);
            let mut arrivals = jobs.clone();
            arrivals.sort_by_key(|j| j.1);
            let mut per_pe: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_pe];
            for (i, (len, at)) in arrivals.iter().enumerate() {
                let p = submit_to_resource(&mut st, &r, &Job::new(JobId(i), "j", f64::from(*len)), &f64::from(*at)).unwrap();
                prop_assert_eq!(p.finish - p.start, f64::from(*len));
                per_pe[p.pe].push((p.start, p.finish));
            }
            for iv in per_pe {
                for w in iv.windows(2) {
                    prop_assert!(w[0].1 <= w[1].0);
                }
            }
        }
    }
}

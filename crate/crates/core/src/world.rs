//! The integrated grid: broker sessions, resources, the market directory,
//! the bank and economy clusters, all driven by one event kernel.
//!
//! A session runs: credit check, directory query, plan, dispatch. Jobs
//! the plan cannot place stay queued and are retried every reschedule
//! interval until the deadline. A dispatched job stages its inputs, runs on
//! the resource, is metered and charged, and the broker records the
//! settlement. Dispatched jobs never move.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bank::{Bank, BankError, UsageRecord};
use crate::broker::{plan, BrokerReport, CandidateResource, JobProfile, Market, QoSRequest, ResourceTally};
use crate::cluster::{Admission, Cluster, ClusterError, ClusterJob, ClusterPricing, Completion};
use crate::data::{DataError, DataGrid, LogicalFile, NetworkLink};
use crate::grid::{job_runtime, price_at, GridError, GridResource, Job, JobStatus, ResourceState, Site};
use crate::ids::{AccountId, ClusterId, EntryId, JobId, ResourceId, SessionId, SiteId};
use crate::kernel::{Event, EntityId, Handler, KernelError, Scheduler, Simulation, TraceNote, TraceRow};
use crate::market::{Directory, MarketError, PriceSummary, ServiceEntry};
use crate::scalar::{sum, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub enum Msg {
    SessionStart(SessionId),
    Query(SessionId),
    QueryReply(SessionId),
    Replan(SessionId),
    JobArrive(JobId),
    JobStart(JobId),
    JobDone(JobId),
    Charge(JobId),
    Settled(JobId),
    ClusterSubmit(JobId),
    ClusterTick { cluster: ClusterId, epoch: u64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionJob<T> {
    pub name: String,
    pub profile: JobProfile<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionSpec<T> {
    pub name: String,
    pub qos: QoSRequest<T>,
    pub start: T,
    pub reschedule_interval: T,
    pub jobs: Vec<SessionJob<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterJobSpec<T> {
    pub name: String,
    pub consumer: AccountId,
    pub submit: T,
    /// Absolute.
    pub deadline: T,
    pub budget: T,
    pub length_mi: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSpec<T> {
    pub name: String,
    pub provider: AccountId,
    pub pricing: ClusterPricing<T>,
    pub nodes: Vec<(String, T)>,
    pub jobs: Vec<ClusterJobSpec<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Owner {
    Session(SessionId),
    Cluster(ClusterId),
}

struct JobRecord<T> {
    job: Job<T>,
    owner: Owner,
    consumer: AccountId,
    profile: JobProfile<T>,
    estimate: Option<CandidateResource<T>>,
    /// Amount to charge, fixed once the job is accepted for execution.
    actual: Option<T>,
    pe_seconds: T,
    data_mb: T,
    node: Option<usize>,
    deadline: Option<T>,
}

struct SessionRt<T> {
    name: String,
    qos: QoSRequest<T>,
    start: T,
    interval: T,
    entity: EntityId,
    jobs: Vec<JobId>,
    /// Expected charge of every job dispatched and not yet settled.
    committed: BTreeMap<JobId, T>,
    charged: T,
    last_reason: Option<String>,
    aborted: Option<String>,
    finished_at: Option<T>,
    plans: usize,
}

struct ClusterRt<T> {
    name: String,
    provider: AccountId,
    cluster: Cluster<T>,
    entity: EntityId,
    epoch: u64,
    meter_base: usize,
    jobs: Vec<JobId>,
    pending: BTreeMap<JobId, ClusterJob<T>>,
}

struct State<T> {
    sites: Vec<Site>,
    resources: Vec<GridResource<T>>,
    res_state: Vec<ResourceState<T>>,
    outstanding: Vec<usize>,
    res_entity: Vec<EntityId>,
    directory: Directory<T>,
    data: DataGrid<T>,
    bank: Bank<T>,
    reserved: Vec<T>,
    gmd: EntityId,
    bank_entity: EntityId,
    gmd_latency: T,
    clusters: Vec<ClusterRt<T>>,
    sessions: Vec<SessionRt<T>>,
    jobs: Vec<JobRecord<T>>,
    violations: Vec<String>,
}

/// Per-cluster outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterReport<T> {
    pub name: String,
    pub submitted: usize,
    pub admitted: usize,
    pub done: usize,
    pub rejected: BTreeMap<String, usize>,
    pub revenue: T,
    pub deadline_misses: usize,
}

/// Why a run ended the way it did.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ExitReason {
    Completed,
    Incomplete,
    InvariantViolation,
}

impl ExitReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitReason::Completed => "completed",
            ExitReason::Incomplete => "incomplete",
            ExitReason::InvariantViolation => "invariant-violation",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome<T> {
    pub sessions: Vec<BrokerReport<T>>,
    pub clusters: Vec<ClusterReport<T>>,
    pub events: u64,
    pub final_time: T,
    pub conservation_ok: bool,
    pub replay_ok: bool,
    pub violations: Vec<String>,
    /// Sessions and clusters left with unfinished jobs or aborted.
    pub incomplete: Vec<String>,
}

impl<T: Scalar> RunOutcome<T> {
    pub fn exit_reason(&self) -> ExitReason {
        if !self.violations.is_empty() || !self.conservation_ok || !self.replay_ok {
            ExitReason::InvariantViolation
        } else if !self.incomplete.is_empty() {
            ExitReason::Incomplete
        } else {
            ExitReason::Completed
        }
    }
}

/// One line of `jobs.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct JobRow<T> {
    pub job: String,
    pub resource: String,
    pub submit: Option<T>,
    pub start: Option<T>,
    pub finish: Option<T>,
    pub compute_cost: T,
    pub data_cost: T,
    pub status: JobStatus,
    pub failure: Option<String>,
}

pub struct World<T: Scalar> {
    sim: Simulation<T, Msg>,
    state: State<T>,
    started: bool,
}

impl<T: Scalar> Default for World<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> World<T> {
    pub fn new() -> Self {
        let mut sim = Simulation::new();
        let gmd = sim.register("gmd");
        let bank_entity = sim.register("bank");
        Self {
            sim,
            state: State {
                sites: Vec::new(),
                resources: Vec::new(),
                res_state: Vec::new(),
                outstanding: Vec::new(),
                res_entity: Vec::new(),
                directory: Directory::new([]),
                data: DataGrid::new(),
                bank: Bank::new(),
                reserved: Vec::new(),
                gmd,
                bank_entity,
                gmd_latency: T::zero(),
                clusters: Vec::new(),
                sessions: Vec::new(),
                jobs: Vec::new(),
                violations: Vec::new(),
            },
            started: false,
        }
    }

    pub fn enable_trace(&mut self) {
        self.sim.enable_trace();
    }

    pub fn set_gmd_latency(&mut self, latency: T) -> Result<(), WorldError> {
        if latency < T::zero() {
            return Err(WorldError::Invalid(format!("directory latency {latency} is negative")));
        }
        self.state.gmd_latency = latency;
        Ok(())
    }

    pub fn add_site(&mut self, name: &str, utc_offset_hours: i32) -> Result<SiteId, WorldError> {
        let id = SiteId(self.state.sites.len());
        self.state.sites.push(Site::new(id, name, utc_offset_hours)?);
        Ok(id)
    }

    pub fn open_account(&mut self, owner: &str, credit: T) -> Result<AccountId, WorldError> {
        let id = self.state.bank.open_account(owner, credit)?;
        self.state.reserved.push(T::zero());
        Ok(id)
    }

    /// Adds a resource; its `id` is assigned here.
    pub fn add_resource(&mut self, mut resource: GridResource<T>) -> Result<ResourceId, WorldError> {
        let id = ResourceId(self.state.resources.len());
        resource.id = id;
        resource.validate()?;
        if resource.site.0 >= self.state.sites.len() {
            return Err(WorldError::Invalid(format!("resource {}: unknown site {}", resource.name, resource.site)));
        }
        self.state.bank.account(resource.provider_account)?;
        let entity = self.sim.register(&resource.name);
        self.state.directory.register_resource(id);
        self.state.res_state.push(ResourceState::new(resource.n_pe));
        self.state.outstanding.push(0);
        self.state.res_entity.push(entity);
        self.state.resources.push(resource);
        Ok(id)
    }

    /// Lists a resource in the directory. `apps` defaults to what the
    /// resource hosts.
    pub fn publish(&mut self, resource: ResourceId, service_type: &str, apps: Option<Vec<String>>) -> Result<EntryId, WorldError> {
        let r = self
            .state
            .resources
            .get(resource.0)
            .ok_or(MarketError::UnknownResource(resource))?;
        let entry = ServiceEntry {
            provider_account: r.provider_account,
            resource,
            service_type: service_type.to_string(),
            apps: apps.map_or_else(|| r.apps.clone(), |a| a.into_iter().collect()),
            price_summary: PriceSummary {
                base_price: r.base_price.clone(),
                peak_multiplier: r.peak_multiplier.clone(),
            },
            published_at: self.sim.now().seconds().clone(),
        };
        Ok(self.state.directory.publish(entry)?)
    }

    pub fn add_link(&mut self, link: NetworkLink<T>) -> Result<(), WorldError> {
        Ok(self.state.data.add_link(link)?)
    }

    pub fn add_file(&mut self, file: LogicalFile<T>) -> Result<(), WorldError> {
        Ok(self.state.data.add_file(file)?)
    }

    pub fn add_cluster(&mut self, spec: ClusterSpec<T>) -> Result<ClusterId, WorldError> {
        let id = ClusterId(self.state.clusters.len());
        self.state.bank.account(spec.provider)?;
        if spec.nodes.is_empty() {
            return Err(WorldError::Invalid(format!("cluster {} has no nodes", spec.name)));
        }
        if let Some((n, r)) = spec.nodes.iter().find(|(_, r)| *r <= T::zero()) {
            return Err(WorldError::Invalid(format!("cluster {}: node {n} rating {r} is not positive", spec.name)));
        }
        let entity = self.sim.register(&spec.name);
        let mut rt = ClusterRt {
            name: spec.name.clone(),
            provider: spec.provider,
            cluster: Cluster::new(spec.nodes, spec.pricing),
            entity,
            epoch: 0,
            meter_base: 0,
            jobs: Vec::new(),
            pending: BTreeMap::new(),
        };
        for j in spec.jobs {
            self.state.bank.account(j.consumer)?;
            if j.submit < T::zero() || j.length_mi < T::zero() {
                return Err(WorldError::Invalid(format!("cluster job {}: negative submit time or length", j.name)));
            }
            let jid = JobId(self.state.jobs.len());
            let name = format!("{}/{}", spec.name, j.name);
            let mut job = Job::new(jid, name.clone(), j.length_mi.clone());
            job.submit_time = Some(j.submit.clone());
            rt.pending.insert(jid, ClusterJob::new(jid, name, j.consumer, j.submit, j.deadline.clone(), j.budget, j.length_mi.clone()));
            rt.jobs.push(jid);
            self.state.jobs.push(JobRecord {
                job,
                owner: Owner::Cluster(id),
                consumer: j.consumer,
                profile: JobProfile::new(j.length_mi),
                estimate: None,
                actual: None,
                pe_seconds: T::zero(),
                data_mb: T::zero(),
                node: None,
                deadline: Some(j.deadline),
            });
        }
        self.state.clusters.push(rt);
        Ok(id)
    }

    pub fn add_session(&mut self, spec: SessionSpec<T>) -> Result<SessionId, WorldError> {
        let id = SessionId(self.state.sessions.len());
        let q = &spec.qos;
        let bad = |m: String| WorldError::Invalid(format!("session {}: {m}", spec.name));
        self.state.bank.account(q.consumer)?;
        if q.home_site.0 >= self.state.sites.len() {
            return Err(bad(format!("unknown home site {}", q.home_site)));
        }
        if q.budget <= T::zero() {
            return Err(bad(format!("budget {} is not positive", q.budget)));
        }
        if spec.start < T::zero() || q.deadline <= spec.start {
            return Err(bad(format!("deadline {} is not after start {}", q.deadline, spec.start)));
        }
        if spec.reschedule_interval <= T::zero() {
            return Err(bad("reschedule interval must be positive".into()));
        }
        if spec.jobs.is_empty() {
            return Err(bad("no jobs".into()));
        }
        let entity = self.sim.register(&format!("broker:{}", spec.name));
        let mut jobs = Vec::with_capacity(spec.jobs.len());
        for sj in spec.jobs {
            let jid = JobId(self.state.jobs.len());
            let mut job = Job::new(jid, format!("{}/{}", spec.name, sj.name), sj.profile.length_mi.clone());
            job.input_files = sj.profile.inputs.clone();
            job.output_mb = sj.profile.output_mb.clone();
            self.state.jobs.push(JobRecord {
                job,
                owner: Owner::Session(id),
                consumer: q.consumer,
                profile: sj.profile,
                estimate: None,
                actual: None,
                pe_seconds: T::zero(),
                data_mb: T::zero(),
                node: None,
                deadline: None,
            });
            jobs.push(jid);
        }
        self.state.sessions.push(SessionRt {
            name: spec.name,
            qos: spec.qos,
            start: spec.start,
            interval: spec.reschedule_interval,
            entity,
            jobs,
            committed: BTreeMap::new(),
            charged: T::zero(),
            last_reason: None,
            aborted: None,
            finished_at: None,
            plans: 0,
        });
        Ok(id)
    }

    /// Runs to `limit`, or until no events remain. A world runs once.
    pub fn run(&mut self, limit: Option<&T>) -> Result<RunOutcome<T>, WorldError> {
        if self.started {
            return Err(WorldError::Invalid("world has already run".into()));
        }
        self.started = true;
        let mut base = self.state.resources.len();
        for c in &mut self.state.clusters {
            c.meter_base = base;
            base += c.cluster.nodes.len();
        }
        for (i, s) in self.state.sessions.iter().enumerate() {
            self.sim.schedule_at(s.start.clone(), s.entity, Msg::SessionStart(SessionId(i)))?;
        }
        for c in &self.state.clusters {
            for (jid, cj) in &c.pending {
                self.sim.schedule_at(cj.submit.clone(), c.entity, Msg::ClusterSubmit(*jid))?;
            }
        }
        let stats = match limit {
            Some(l) => self.sim.run_until(l, &mut self.state),
            None => self.sim.run(&mut self.state),
        };
        Ok(self.state.outcome(stats.events_delivered, stats.final_time.into_inner()))
    }

    pub fn bank(&self) -> &Bank<T> {
        &self.state.bank
    }

    pub fn resources(&self) -> &[GridResource<T>] {
        &self.state.resources
    }

    pub fn trace(&self) -> Option<&[TraceRow<T>]> {
        self.sim.trace()
    }

    pub fn job_name(&self, id: JobId) -> &str {
        &self.state.jobs[id.0].job.name
    }

    pub fn account_name(&self, id: AccountId) -> &str {
        &self.state.bank.accounts()[id.0].owner
    }

    /// Name of a metered resource: a grid resource or a cluster node.
    pub fn meter_name(&self, id: ResourceId) -> String {
        self.state.meter_name(id)
    }

    /// Consumer debits per session, in ledger order.
    pub fn session_debits(&self, session: SessionId) -> Vec<T> {
        let s = &self.state.sessions[session.0];
        self.state
            .bank
            .ledger()
            .iter()
            .filter(|tx| self.state.jobs[tx.record.job.0].owner == Owner::Session(session) && tx.debit.0 == s.qos.consumer)
            .map(|tx| tx.debit.1.clone())
            .collect()
    }

    pub fn jobs(&self) -> Vec<JobRow<T>> {
        self.state
            .jobs
            .iter()
            .map(|r| {
                let resource = match (r.owner, r.job.assigned_resource, r.node) {
                    (Owner::Session(_), Some(id), _) => self.state.resources[id.0].name.clone(),
                    (Owner::Cluster(c), _, Some(n)) => self.state.clusters[c.0].cluster.nodes[n].name.clone(),
                    _ => String::new(),
                };
                JobRow {
                    job: r.job.name.clone(),
                    resource,
                    submit: r.job.submit_time.clone(),
                    start: r.job.start_time.clone(),
                    finish: r.job.finish_time.clone(),
                    compute_cost: r.job.compute_cost.clone(),
                    data_cost: r.job.data_cost.clone(),
                    status: r.job.status,
                    failure: r.job.failure.clone(),
                }
            })
            .collect()
    }
}

fn now_of<T: Scalar>(sched: &Scheduler<T, Msg>) -> T {
    sched.now().seconds().clone()
}

impl<T: Scalar> State<T> {
    fn meter_name(&self, id: ResourceId) -> String {
        if let Some(r) = self.resources.get(id.0) {
            return r.name.clone();
        }
        for c in &self.clusters {
            if id.0 >= c.meter_base && id.0 < c.meter_base + c.cluster.nodes.len() {
                return format!("{}/{}", c.name, c.cluster.nodes[id.0 - c.meter_base].name);
            }
        }
        format!("R{}", id.0)
    }

    fn fail(&mut self, j: JobId, reason: &str) -> Result<(), WorldError> {
        Ok(self.jobs[j.0].job.fail(reason)?)
    }

    fn check_done(&mut self, s: SessionId, now: &T) {
        let sess = &self.sessions[s.0];
        if sess.finished_at.is_none() && sess.jobs.iter().all(|j| self.jobs[j.0].job.status.is_terminal()) {
            self.sessions[s.0].finished_at = Some(now.clone());
        }
    }

    fn session_start(&mut self, s: SessionId, sched: &mut Scheduler<T, Msg>) -> Result<TraceNote, WorldError> {
        let now = now_of(sched);
        let (consumer, budget) = {
            let q = &self.sessions[s.0].qos;
            (q.consumer, q.budget.clone())
        };
        let name = self.sessions[s.0].name.clone();
        if !self.bank.check_credit(consumer, &budget)? {
            self.sessions[s.0].aborted = Some("credit".into());
            for j in self.sessions[s.0].jobs.clone() {
                self.fail(j, "credit")?;
            }
            self.check_done(s, &now);
            return Ok(TraceNote::kind("abort").job(name).value("credit"));
        }
        for j in &self.sessions[s.0].jobs {
            self.jobs[j.0].job.transition(JobStatus::Queued)?;
        }
        sched.schedule_at(now, self.gmd, Msg::Query(s))?;
        Ok(TraceNote::kind("session-start").job(name).value(budget))
    }

    fn query(&mut self, s: SessionId, sched: &mut Scheduler<T, Msg>) -> Result<TraceNote, WorldError> {
        let sess = &self.sessions[s.0];
        sched.schedule_in(self.gmd_latency.clone(), sess.entity, Msg::QueryReply(s))?;
        Ok(TraceNote::kind("query").job(sess.name.clone()).value(self.directory.len()))
    }

    fn replan(&mut self, s: SessionId, sched: &mut Scheduler<T, Msg>) -> Result<TraceNote, WorldError> {
        let now = now_of(sched);
        let sess = &self.sessions[s.0];
        let name = sess.name.clone();
        let held: Vec<JobId> = sess
            .jobs
            .iter()
            .copied()
            .filter(|j| self.jobs[j.0].job.status == JobStatus::Queued)
            .collect();
        if held.is_empty() || sess.aborted.is_some() {
            return Ok(TraceNote::kind("plan").job(name).value(0));
        }
        if now >= sess.qos.deadline {
            let reason = sess.last_reason.clone().unwrap_or_else(|| "deadline".into());
            for &j in &held {
                self.fail(j, &reason)?;
            }
            self.check_done(s, &now);
            return Ok(TraceNote::kind("give-up").job(name).value(held.len()));
        }

        let committed = sum(sess.committed.values().cloned());
        let mut qos = sess.qos.clone();
        qos.budget = qos.budget - sess.charged.clone() - committed;
        let strategy = qos.strategy;
        let profiles: Vec<(JobId, JobProfile<T>)> = held.iter().map(|&j| (j, self.jobs[j.0].profile.clone())).collect();
        let market = Market {
            directory: &self.directory,
            resources: &self.resources,
            sites: &self.sites,
            data: &self.data,
            backlog: &self.outstanding,
        };
        let (problem, rows) = market.problem(&qos, &profiles, &now);
        self.sessions[s.0].plans += 1;
        if problem.slots.is_empty() {
            for &j in &held {
                self.fail(j, "no-candidates")?;
            }
            self.check_done(s, &now);
            return Ok(TraceNote::kind("plan").job(name).value("no-candidates"));
        }
        let (planned, why) = plan(strategy, &problem, true).map_err(|e| WorldError::Invalid(e.to_string()))?;

        let mut dispatched = 0;
        for (idx, j) in held.iter().enumerate() {
            if let Some(a) = planned.assignment.get(j) {
                let cand = rows[idx][a.slot].clone().expect("planned slot is usable");
                self.dispatch(s, *j, cand, &now, sched)?;
                dispatched += 1;
            }
        }
        if let Some(why) = why {
            self.sessions[s.0].last_reason = Some(why.reason().to_string());
            let sess = &self.sessions[s.0];
            let next = now.clone() + sess.interval.clone();
            if next < sess.qos.deadline {
                sched.schedule_at(next, sess.entity, Msg::Replan(s))?;
            } else {
                let reason = why.reason();
                for j in held.iter().filter(|j| !planned.assignment.contains_key(j)) {
                    self.fail(*j, reason)?;
                }
            }
        }
        self.check_done(s, &now);
        Ok(TraceNote::kind("plan").job(name).value(dispatched))
    }

    fn dispatch(&mut self, s: SessionId, j: JobId, cand: CandidateResource<T>, now: &T, sched: &mut Scheduler<T, Msg>) -> Result<(), WorldError> {
        let rec = &mut self.jobs[j.0];
        rec.job.transition(JobStatus::Dispatched)?;
        rec.job.transition(JobStatus::Transferring)?;
        rec.job.assigned_resource = Some(cand.resource);
        rec.job.submit_time = Some(now.clone());
        rec.job.data_cost = cand.data_cost.clone();
        rec.data_mb = cand.moved_mb.clone();
        self.sessions[s.0].committed.insert(j, cand.per_job_cost.clone());
        self.outstanding[cand.resource.0] += 1;
        let arrive = now.clone() + cand.transfer_time.clone();
        sched.schedule_at(arrive, self.res_entity[cand.resource.0], Msg::JobArrive(j))?;
        rec.estimate = Some(cand);
        Ok(())
    }

    fn job_arrive(&mut self, j: JobId, sched: &mut Scheduler<T, Msg>) -> Result<TraceNote, WorldError> {
        let now = now_of(sched);
        let rec = &self.jobs[j.0];
        let Owner::Session(s) = rec.owner else {
            return Err(WorldError::Invalid(format!("job {} is not a broker job", rec.job.name)));
        };
        let cand = rec.estimate.clone().expect("dispatched job has an estimate");
        let r = cand.resource;
        let res = &self.resources[r.0];
        let place = self.res_state[r.0].preview(&cand.runtime, &now);
        let compute = cand.runtime.clone() * price_at(res, &self.sites[res.site.0], &place.start);
        let actual = compute.clone() + cand.data_cost.clone();

        let sess = &self.sessions[s.0];
        let others = sum(sess.committed.iter().filter(|(k, _)| **k != j).map(|(_, v)| v.clone()));
        let within = sess.charged.clone() + others + actual.clone() <= sess.qos.budget;
        let consumer = rec.consumer;
        let free = self.bank.balance(consumer)? - self.reserved[consumer.0].clone();
        let note = TraceNote::kind("arrive").job(rec.job.name.clone()).resource(res.name.clone());
        if !within || free < actual {
            let reason = if within { "credit" } else { "budget" };
            self.fail(j, reason)?;
            self.sessions[s.0].committed.remove(&j);
            self.outstanding[r.0] -= 1;
            self.check_done(s, &now);
            return Ok(TraceNote { kind: "reject", ..note }.value(reason));
        }

        let place = self.res_state[r.0].submit(j, &cand.runtime, &now);
        self.sessions[s.0].committed.insert(j, actual.clone());
        self.reserved[consumer.0] = self.reserved[consumer.0].clone() + actual.clone();
        let rec = &mut self.jobs[j.0];
        rec.job.start_time = Some(place.start.clone());
        rec.job.compute_cost = compute;
        rec.actual = Some(actual);
        rec.pe_seconds = cand.runtime.clone();
        let entity = self.res_entity[r.0];
        sched.schedule_at(place.start.clone(), entity, Msg::JobStart(j))?;
        sched.schedule_at(place.finish, entity, Msg::JobDone(j))?;
        Ok(note.value(place.pe))
    }

    fn resource_name_of(&self, j: JobId) -> String {
        self.jobs[j.0]
            .job
            .assigned_resource
            .map(|r| self.resources[r.0].name.clone())
            .unwrap_or_default()
    }

    fn job_start(&mut self, j: JobId, _sched: &mut Scheduler<T, Msg>) -> Result<TraceNote, WorldError> {
        self.jobs[j.0].job.transition(JobStatus::Running)?;
        Ok(TraceNote::kind("start").job(self.jobs[j.0].job.name.clone()).resource(self.resource_name_of(j)))
    }

    fn job_done(&mut self, j: JobId, sched: &mut Scheduler<T, Msg>) -> Result<TraceNote, WorldError> {
        let now = now_of(sched);
        let r = self.jobs[j.0].job.assigned_resource.expect("running job has a resource");
        self.res_state[r.0].release(j);
        self.outstanding[r.0] -= 1;
        self.jobs[j.0].job.finish_time = Some(now.clone());
        sched.schedule_at(now, self.bank_entity, Msg::Charge(j))?;
        Ok(TraceNote::kind("finish").job(self.jobs[j.0].job.name.clone()).resource(self.resource_name_of(j)))
    }

    fn charge(&mut self, j: JobId, sched: &mut Scheduler<T, Msg>) -> Result<TraceNote, WorldError> {
        let now = now_of(sched);
        let rec = &self.jobs[j.0];
        let amount = rec.actual.clone().expect("accepted job has a price");
        let (provider, meter, reply_to) = match rec.owner {
            Owner::Session(s) => {
                let r = rec.job.assigned_resource.expect("assigned");
                (self.resources[r.0].provider_account, r, self.sessions[s.0].entity)
            }
            Owner::Cluster(c) => {
                let rt = &self.clusters[c.0];
                (rt.provider, ResourceId(rt.meter_base + rec.node.expect("admitted")), rt.entity)
            }
        };
        let record = UsageRecord {
            consumer: rec.consumer,
            provider,
            resource: meter,
            job: j,
            pe_seconds: rec.pe_seconds.clone(),
            data_mb: rec.data_mb.clone(),
            amount: amount.clone(),
            time: now.clone(),
        };
        let consumer = rec.consumer;
        let name = rec.job.name.clone();
        self.reserved[consumer.0] = self.reserved[consumer.0].clone() - amount.clone();
        match self.bank.charge(record) {
            Ok(_) => {
                sched.schedule_at(now, reply_to, Msg::Settled(j))?;
                Ok(TraceNote::kind("charge").job(name).resource(self.meter_name(meter)).value(amount))
            }
            Err(e) => {
                self.violations.push(format!("charge for {name} rejected: {e}"));
                self.fail(j, "charge-rejected")?;
                if let Owner::Session(s) = self.jobs[j.0].owner {
                    self.sessions[s.0].committed.remove(&j);
                    self.check_done(s, &now);
                }
                Ok(TraceNote::kind("charge-rejected").job(name).value(amount))
            }
        }
    }

    fn settled(&mut self, j: JobId, sched: &mut Scheduler<T, Msg>) -> Result<TraceNote, WorldError> {
        let now = now_of(sched);
        let rec = &mut self.jobs[j.0];
        let amount = rec.actual.clone().expect("charged job has a price");
        rec.job.transition(JobStatus::Done)?;
        rec.job.cost_incurred = amount.clone();
        let name = rec.job.name.clone();
        if let Owner::Session(s) = rec.owner {
            let sess = &mut self.sessions[s.0];
            sess.charged = sess.charged.clone() + amount.clone();
            sess.committed.remove(&j);
            self.check_done(s, &now);
        }
        Ok(TraceNote::kind("settled").job(name).value(amount))
    }

    fn complete(&mut self, c: ClusterId, done: Vec<Completion<T>>, sched: &mut Scheduler<T, Msg>) -> Result<(), WorldError> {
        let now = now_of(sched);
        for d in done {
            self.jobs[d.job.job.0].job.finish_time = Some(d.finish);
            sched.schedule_at(now.clone(), self.bank_entity, Msg::Charge(d.job.job))?;
        }
        let rt = &mut self.clusters[c.0];
        rt.epoch += 1;
        if let Some(t) = rt.cluster.next_completion_time() {
            let at = if t < now { now } else { t };
            sched.schedule_at(at, rt.entity, Msg::ClusterTick { cluster: c, epoch: rt.epoch })?;
        }
        Ok(())
    }

    fn cluster_submit(&mut self, j: JobId, sched: &mut Scheduler<T, Msg>) -> Result<TraceNote, WorldError> {
        let now = now_of(sched);
        let Owner::Cluster(c) = self.jobs[j.0].owner else {
            return Err(WorldError::Invalid(format!("job {} is not a cluster job", self.jobs[j.0].job.name)));
        };
        let cj = self.clusters[c.0].pending.remove(&j).expect("submitted once");
        let done = self.clusters[c.0].cluster.advance_to(&now)?;
        let name = cj.name.clone();
        self.jobs[j.0].job.transition(JobStatus::Queued)?;

        let rt = &self.clusters[c.0];
        let price = rt.cluster.pricing.price(&cj.length_mi, &cj.submit, &cj.deadline);
        let mut decision = rt.cluster.decide(&cj, &now)?;
        if matches!(decision, Admission::Accepted(_)) {
            let free = self.bank.balance(cj.consumer)? - self.reserved[cj.consumer.0].clone();
            if free < price {
                self.fail(j, "credit")?;
                self.complete(c, done, sched)?;
                return Ok(TraceNote::kind("reject").job(name).value("credit"));
            }
            decision = self.clusters[c.0].cluster.admit(cj.clone(), &now)?;
        }
        let note = match decision {
            Admission::Accepted(node) => {
                let rt = &self.clusters[c.0];
                let n = &rt.cluster.nodes[node.0];
                let node_name = n.name.clone();
                let pe_seconds = job_runtime(&cj.length_mi, &n.rating_mips)?;
                let rec = &mut self.jobs[j.0];
                rec.job.transition(JobStatus::Dispatched)?;
                rec.job.transition(JobStatus::Transferring)?;
                rec.job.transition(JobStatus::Running)?;
                rec.job.start_time = Some(now.clone());
                rec.job.compute_cost = price.clone();
                rec.actual = Some(price.clone());
                rec.pe_seconds = pe_seconds;
                rec.node = Some(node.0);
                self.reserved[cj.consumer.0] = self.reserved[cj.consumer.0].clone() + price.clone();
                TraceNote::kind("admit").job(name).resource(node_name).value(price)
            }
            Admission::Rejected(reason) => {
                self.fail(j, reason.as_str())?;
                TraceNote::kind("reject").job(name).value(reason.as_str())
            }
        };
        self.complete(c, done, sched)?;
        Ok(note)
    }

    fn cluster_tick(&mut self, c: ClusterId, epoch: u64, sched: &mut Scheduler<T, Msg>) -> Result<TraceNote, WorldError> {
        let now = now_of(sched);
        if self.clusters[c.0].epoch != epoch {
            return Ok(TraceNote::kind("stale-tick"));
        }
        let done = self.clusters[c.0].cluster.advance_to(&now)?;
        let n = done.len();
        self.complete(c, done, sched)?;
        Ok(TraceNote::kind("tick").value(n))
    }

    fn session_report(&self, s: usize) -> BrokerReport<T> {
        let sess = &self.sessions[s];
        let mut total_cost = T::zero();
        let mut debits = 0;
        for tx in self.bank.ledger() {
            if self.jobs[tx.record.job.0].owner == Owner::Session(SessionId(s)) {
                total_cost = total_cost + tx.debit.1.clone();
                debits += 1;
            }
        }
        let mut compute_cost = T::zero();
        let mut data_cost = T::zero();
        let mut last: Option<T> = None;
        let mut done = 0;
        let mut failed = 0;
        let mut per_resource: BTreeMap<String, ResourceTally<T>> = BTreeMap::new();
        let mut failures: BTreeMap<String, usize> = BTreeMap::new();
        for j in &sess.jobs {
            let job = &self.jobs[j.0].job;
            match job.status {
                JobStatus::Done => {
                    done += 1;
                    compute_cost = compute_cost + job.compute_cost.clone();
                    data_cost = data_cost + job.data_cost.clone();
                    let f = job.finish_time.clone().expect("done job has a finish time");
                    if last.as_ref().is_none_or(|l| f > *l) {
                        last = Some(f);
                    }
                    let r = job.assigned_resource.expect("done job ran somewhere");
                    let t = per_resource.entry(self.resources[r.0].name.clone()).or_insert_with(|| ResourceTally {
                        jobs: 0,
                        cost: T::zero(),
                    });
                    t.jobs += 1;
                    t.cost = t.cost.clone() + job.cost_incurred.clone();
                }
                JobStatus::Failed => {
                    failed += 1;
                    *failures.entry(job.failure.clone().unwrap_or_default()).or_default() += 1;
                }
                _ => {}
            }
        }
        let total = sess.jobs.len();
        let makespan = last.as_ref().map_or_else(T::zero, |l| l.clone() - sess.start.clone());
        let deadline_met = done == total && last.as_ref().is_none_or(|l| *l <= sess.qos.deadline);
        BrokerReport {
            session: sess.name.clone(),
            strategy: sess.qos.strategy,
            jobs_total: total,
            jobs_done: done,
            jobs_failed: failed,
            budget_respected: T::at_most(&total_cost, &sess.qos.budget, &sess.qos.budget, debits + total),
            total_cost,
            compute_cost,
            data_cost,
            budget: sess.qos.budget.clone(),
            deadline: sess.qos.deadline.clone(),
            makespan,
            deadline_met,
            per_resource,
            failures,
            aborted: sess.aborted.clone(),
        }
    }

    fn cluster_report(&self, c: usize) -> ClusterReport<T> {
        let rt = &self.clusters[c];
        let mut rep = ClusterReport {
            name: rt.name.clone(),
            submitted: rt.jobs.len(),
            admitted: 0,
            done: 0,
            rejected: BTreeMap::new(),
            revenue: T::zero(),
            deadline_misses: 0,
        };
        for j in &rt.jobs {
            let rec = &self.jobs[j.0];
            if rec.node.is_some() {
                rep.admitted += 1;
            }
            match rec.job.status {
                JobStatus::Done => {
                    rep.done += 1;
                    rep.revenue = rep.revenue.clone() + rec.job.cost_incurred.clone();
                }
                JobStatus::Failed if rec.node.is_none() => {
                    *rep.rejected.entry(rec.job.failure.clone().unwrap_or_default()).or_default() += 1;
                }
                _ => {}
            }
            if let (Some(f), Some(d)) = (&rec.job.finish_time, &rec.deadline) {
                if !T::at_most(f, d, d, rt.jobs.len() * 4) {
                    rep.deadline_misses += 1;
                }
            }
        }
        rep
    }

    fn outcome(&mut self, events: u64, final_time: T) -> RunOutcome<T> {
        let sessions: Vec<_> = (0..self.sessions.len()).map(|s| self.session_report(s)).collect();
        let clusters: Vec<_> = (0..self.clusters.len()).map(|c| self.cluster_report(c)).collect();
        let mut violations = self.violations.clone();
        let mut incomplete = Vec::new();
        for r in &sessions {
            if !r.budget_respected {
                violations.push(format!("session {} spent {} over budget {}", r.session, r.total_cost, r.budget));
            }
            if r.aborted.is_some() || r.jobs_done + r.jobs_failed < r.jobs_total {
                incomplete.push(r.session.clone());
            }
        }
        for (c, r) in clusters.iter().enumerate() {
            if r.deadline_misses > 0 {
                violations.push(format!("cluster {}: {} admitted jobs missed their deadline", r.name, r.deadline_misses));
            }
            let open = self.clusters[c]
                .jobs
                .iter()
                .any(|j| !self.jobs[j.0].job.status.is_terminal());
            if open {
                incomplete.push(r.name.clone());
            }
        }
        RunOutcome {
            sessions,
            clusters,
            events,
            final_time,
            conservation_ok: self.bank.conservation_holds(),
            replay_ok: self.bank.replay_matches(),
            violations,
            incomplete,
        }
    }
}

impl<T: Scalar> Handler<T, Msg> for State<T> {
    fn handle(&mut self, sched: &mut Scheduler<T, Msg>, event: Event<T, Msg>) -> TraceNote {
        let result = match event.payload {
            Msg::SessionStart(s) => self.session_start(s, sched),
            Msg::Query(s) => self.query(s, sched),
            Msg::QueryReply(s) | Msg::Replan(s) => self.replan(s, sched),
            Msg::JobArrive(j) => self.job_arrive(j, sched),
            Msg::JobStart(j) => self.job_start(j, sched),
            Msg::JobDone(j) => self.job_done(j, sched),
            Msg::Charge(j) => self.charge(j, sched),
            Msg::Settled(j) => self.settled(j, sched),
            Msg::ClusterSubmit(j) => self.cluster_submit(j, sched),
            Msg::ClusterTick { cluster, epoch } => self.cluster_tick(cluster, epoch, sched),
        };
        result.unwrap_or_else(|e| {
            let msg = e.to_string();
            self.violations.push(msg.clone());
            TraceNote::kind("error").value(msg)
        })
    }
}

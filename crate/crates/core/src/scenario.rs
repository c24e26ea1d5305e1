//! Scenario files: TOML descriptions of a whole grid plus its workload.
//!
//! ```toml
//! seed = 7
//! [[sites]]
//! name = "melbourne"
//! utc_offset = 10
//! [[accounts]]
//! name = "alice"
//! credit = 1000.0
//! [[resources]]
//! name = "r1"
//! site = "melbourne"
//! n_pe = 4
//! mips = 500.0
//! base_price = 1.0
//! provider = "alice"
//! apps = ["belle"]
//! [[sessions]]
//! name = "run"
//! consumer = "alice"
//! home_site = "melbourne"
//! app = "belle"
//! strategy = "cost"
//! deadline = 3600.0
//! budget = 500.0
//! plan = "parameter e integer range 1 10 step 1; task t length 1000 endtask"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broker::{JobProfile, QoSRequest, Strategy, COMPUTE_SERVICE};
use crate::cluster::ClusterPricing;
use crate::data::{LogicalFile, NetworkLink};
use crate::grid::{GridResource, PeakWindow};
use crate::ids::{AccountId, ResourceId, SiteId};
use crate::kernel::SeededRng;
use crate::scalar::Scalar;
use crate::sweep::{expand, parse_plan, JobSet};
use crate::world::{ClusterJobSpec, ClusterSpec, SessionJob, SessionSpec, World};

fn one() -> f64 {
    1.0
}

fn ten() -> f64 {
    10.0
}

fn compute() -> String {
    COMPUTE_SERVICE.to_string()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    /// Stop the simulation here; by default it runs until no events remain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_time: Option<f64>,
    /// Seconds between a directory query and its reply.
    #[serde(default)]
    pub gmd_latency: f64,
    #[serde(default)]
    pub sites: Vec<SiteCfg>,
    #[serde(default)]
    pub accounts: Vec<AccountCfg>,
    #[serde(default)]
    pub resources: Vec<ResourceCfg>,
    /// Directory entries. When empty, every resource is listed as a
    /// compute service for the apps it hosts.
    #[serde(default)]
    pub gmd: Vec<GmdCfg>,
    #[serde(default)]
    pub links: Vec<LinkCfg>,
    #[serde(default)]
    pub files: Vec<FileCfg>,
    #[serde(default)]
    pub clusters: Vec<ClusterCfg>,
    #[serde(default)]
    pub sessions: Vec<SessionCfg>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteCfg {
    pub name: String,
    #[serde(default)]
    pub utc_offset: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountCfg {
    pub name: String,
    #[serde(default)]
    pub credit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceCfg {
    pub name: String,
    pub site: String,
    pub n_pe: usize,
    pub mips: f64,
    pub base_price: f64,
    #[serde(default = "one")]
    pub peak_multiplier: f64,
    /// Local hours `[start, end)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_window: Option<[f64; 2]>,
    pub provider: String,
    #[serde(default)]
    pub apps: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmdCfg {
    pub resource: String,
    #[serde(default = "compute")]
    pub service_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apps: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkCfg {
    pub a: String,
    pub b: String,
    /// MB/s.
    pub bandwidth: f64,
    pub price_per_mb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileCfg {
    pub name: String,
    pub size_mb: f64,
    pub replicas: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeCfg {
    pub name: String,
    pub mips: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterJobCfg {
    pub name: String,
    pub consumer: String,
    pub submit: f64,
    pub deadline: f64,
    pub budget: f64,
    pub length_mi: f64,
}

/// Random arrivals drawn from the scenario seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadCfg {
    pub count: usize,
    pub consumer: String,
    pub mean_interarrival: f64,
    /// MI, uniform.
    pub length: [f64; 2],
    /// Deadline = submit + slack * length / mean node rating.
    pub slack: [f64; 2],
    /// Budget = price * factor.
    pub budget_factor: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterCfg {
    pub name: String,
    pub provider: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub nodes: Vec<NodeCfg>,
    #[serde(default)]
    pub jobs: Vec<ClusterJobCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload: Option<WorkloadCfg>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionCfg {
    pub name: String,
    pub consumer: String,
    pub home_site: String,
    pub app: String,
    pub strategy: String,
    /// Absolute simulated time.
    pub deadline: f64,
    pub budget: f64,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "ten")]
    pub reschedule_interval: f64,
    /// Path relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    /// Inputs missing from the file catalogue are assumed to live here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_file_site: Option<String>,
    /// Application size staged to resources that do not host `app`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_mb: Option<f64>,
}

/// One problem found while validating a scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("scenario is invalid ({} problems)", .0.len())]
    Invalid(Vec<Finding>),
}

/// Command-line adjustments applied before validation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub strategy: Option<Strategy>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(s) = o.strategy {
            for sess in &mut self.sessions {
                sess.strategy = s.as_str().to_string();
            }
        }
    }
}

/// Reads and parses a scenario file; returns it with its directory, against
/// which plan files resolve.
pub fn load(path: &Path) -> Result<(Scenario, PathBuf), ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let sc = Scenario::parse(&text)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((sc, dir))
}

struct Checker {
    findings: Vec<Finding>,
}

impl Checker {
    fn add(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            location: location.into(),
            message: message.into(),
        });
    }

    fn unique<'a>(&mut self, kind: &str, names: impl IntoIterator<Item = &'a str>) -> BTreeSet<&'a str> {
        let mut seen = BTreeSet::new();
        for n in names {
            if n.is_empty() {
                self.add(kind, "empty name");
            } else if !seen.insert(n) {
                self.add(format!("{kind} {n}"), "declared more than once");
            }
        }
        seen
    }

    fn known(&mut self, at: &str, what: &str, name: &str, set: &BTreeSet<&str>) {
        if !set.contains(name) {
            self.add(at, format!("unknown {what} '{name}'"));
        }
    }

    fn finite(&mut self, at: &str, what: &str, x: f64) -> bool {
        if !x.is_finite() {
            self.add(at, format!("{what} {x} is not a finite number"));
            return false;
        }
        true
    }

    fn positive(&mut self, at: &str, what: &str, x: f64) {
        if self.finite(at, what, x) && x <= 0.0 {
            self.add(at, format!("{what} {x} must be positive"));
        }
    }

    fn non_negative(&mut self, at: &str, what: &str, x: f64) {
        if self.finite(at, what, x) && x < 0.0 {
            self.add(at, format!("{what} {x} must not be negative"));
        }
    }

    fn range(&mut self, at: &str, what: &str, r: [f64; 2], min: f64) {
        if self.finite(at, what, r[0]) && self.finite(at, what, r[1]) && !(min <= r[0] && r[0] <= r[1]) {
            self.add(at, format!("{what} [{}, {}] must satisfy {min} <= lo <= hi", r[0], r[1]));
        }
    }
}

/// A session's plan, read and expanded.
fn session_jobs(s: &SessionCfg, base: &Path) -> Result<JobSet<f64>, String> {
    let (text, origin) = match (&s.plan, &s.plan_file) {
        (Some(t), None) => (t.clone(), "inline plan".to_string()),
        (None, Some(f)) => {
            let p = base.join(f);
            let t = std::fs::read_to_string(&p).map_err(|e| format!("cannot read plan file {}: {e}", p.display()))?;
            (t, format!("plan file {f}"))
        }
        (Some(_), Some(_)) => return Err("give either plan or plan_file, not both".into()),
        (None, None) => return Err("no plan or plan_file".into()),
    };
    let plan = parse_plan(&text).map_err(|e| format!("{origin}: {e}"))?;
    expand(&plan).map_err(|e| format!("{origin}: {e}"))
}

/// Every problem that would stop the scenario from running, without
/// simulating anything. An empty list means `build` succeeds.
pub fn validate(sc: &Scenario, base: &Path) -> Vec<Finding> {
    let mut c = Checker { findings: Vec::new() };
    let sites = c.unique("site", sc.sites.iter().map(|s| s.name.as_str()));
    let accounts = c.unique("account", sc.accounts.iter().map(|a| a.name.as_str()));
    let resources = c.unique("resource", sc.resources.iter().map(|r| r.name.as_str()));
    c.unique("file", sc.files.iter().map(|f| f.name.as_str()));
    c.unique(
        "session or cluster",
        sc.sessions.iter().map(|s| s.name.as_str()).chain(sc.clusters.iter().map(|c| c.name.as_str())),
    );

    if let Some(t) = sc.end_time {
        c.positive("scenario", "end_time", t);
    }
    c.non_negative("scenario", "gmd_latency", sc.gmd_latency);
    if sc.sessions.is_empty() {
        c.add("scenario", "at least one session is required");
    }
    for s in &sc.sites {
        if !(-12..=14).contains(&s.utc_offset) {
            c.add(format!("site {}", s.name), format!("utc_offset {} outside [-12, 14]", s.utc_offset));
        }
    }
    for a in &sc.accounts {
        c.non_negative(&format!("account {}", a.name), "credit", a.credit);
    }
    for r in &sc.resources {
        let at = format!("resource {}", r.name);
        c.known(&at, "site", &r.site, &sites);
        c.known(&at, "provider account", &r.provider, &accounts);
        if r.n_pe == 0 {
            c.add(&at, "n_pe must be at least 1");
        }
        c.positive(&at, "mips", r.mips);
        c.non_negative(&at, "base_price", r.base_price);
        if c.finite(&at, "peak_multiplier", r.peak_multiplier) && r.peak_multiplier < 1.0 {
            c.add(&at, format!("peak_multiplier {} is below 1", r.peak_multiplier));
        }
        if let Some([s, e]) = r.peak_window {
            if !(s.is_finite() && e.is_finite() && 0.0 <= s && s < e && e <= 24.0) {
                c.add(&at, format!("peak_window [{s}, {e}] is not within a day"));
            }
        }
    }
    let mut listed = BTreeSet::new();
    for g in &sc.gmd {
        let at = format!("gmd entry for {}", g.resource);
        c.known(&at, "resource", &g.resource, &resources);
        if !listed.insert((g.resource.as_str(), g.service_type.as_str())) {
            c.add(&at, format!("service type '{}' listed twice", g.service_type));
        }
    }
    let mut linked = BTreeSet::new();
    for l in &sc.links {
        let at = format!("link {}-{}", l.a, l.b);
        c.known(&at, "site", &l.a, &sites);
        c.known(&at, "site", &l.b, &sites);
        if l.a == l.b {
            c.add(&at, "a link must join two different sites");
        }
        let key = if l.a <= l.b { (l.a.as_str(), l.b.as_str()) } else { (l.b.as_str(), l.a.as_str()) };
        if !linked.insert(key) {
            c.add(&at, "declared more than once");
        }
        c.positive(&at, "bandwidth", l.bandwidth);
        c.non_negative(&at, "price_per_mb", l.price_per_mb);
    }
    for f in &sc.files {
        let at = format!("file {}", f.name);
        c.non_negative(&at, "size_mb", f.size_mb);
        if f.replicas.is_empty() {
            c.add(&at, "no replicas");
        }
        for r in &f.replicas {
            c.known(&at, "replica site", r, &sites);
        }
    }
    for cl in &sc.clusters {
        let at = format!("cluster {}", cl.name);
        c.known(&at, "provider account", &cl.provider, &accounts);
        if let Some(a) = cl.alpha {
            c.non_negative(&at, "alpha", a);
        }
        if let Some(b) = cl.beta {
            c.non_negative(&at, "beta", b);
        }
        if cl.nodes.is_empty() {
            c.add(&at, "no nodes");
        }
        c.unique(&format!("{at} node"), cl.nodes.iter().map(|n| n.name.as_str()));
        for n in &cl.nodes {
            c.positive(&format!("{at} node {}", n.name), "mips", n.mips);
        }
        c.unique(&format!("{at} job"), cl.jobs.iter().map(|j| j.name.as_str()));
        for j in &cl.jobs {
            let jat = format!("{at} job {}", j.name);
            c.known(&jat, "consumer account", &j.consumer, &accounts);
            c.non_negative(&jat, "submit", j.submit);
            c.positive(&jat, "length_mi", j.length_mi);
            c.positive(&jat, "budget", j.budget);
            if c.finite(&jat, "deadline", j.deadline) && j.deadline <= j.submit {
                c.add(&jat, format!("deadline {} is not after submit {}", j.deadline, j.submit));
            }
        }
        if let Some(w) = &cl.workload {
            let wat = format!("{at} workload");
            c.known(&wat, "consumer account", &w.consumer, &accounts);
            c.positive(&wat, "mean_interarrival", w.mean_interarrival);
            c.range(&wat, "length", w.length, f64::MIN_POSITIVE);
            c.range(&wat, "slack", w.slack, f64::MIN_POSITIVE);
            c.range(&wat, "budget_factor", w.budget_factor, f64::MIN_POSITIVE);
        }
    }

    let catalogue: BTreeSet<&str> = sc.files.iter().map(|f| f.name.as_str()).collect();
    for s in &sc.sessions {
        let at = format!("session {}", s.name);
        c.known(&at, "consumer account", &s.consumer, &accounts);
        c.known(&at, "home site", &s.home_site, &sites);
        if let Some(d) = &s.default_file_site {
            c.known(&at, "default file site", d, &sites);
        }
        if let Err(e) = s.strategy.parse::<Strategy>() {
            c.add(&at, e.to_string());
        }
        c.positive(&at, "budget", s.budget);
        c.non_negative(&at, "start", s.start);
        c.positive(&at, "reschedule_interval", s.reschedule_interval);
        if let Some(m) = s.code_mb {
            c.non_negative(&at, "code_mb", m);
        }
        if c.finite(&at, "deadline", s.deadline) && s.deadline <= s.start {
            c.add(&at, format!("deadline {} is not after start {}", s.deadline, s.start));
        }
        match session_jobs(s, base) {
            Err(e) => c.add(&at, e),
            Ok(set) => {
                if set.is_empty() {
                    c.add(&at, "plan expands to no jobs");
                }
                if s.default_file_site.is_none() {
                    let missing: BTreeSet<&str> = set
                        .jobs
                        .iter()
                        .flat_map(|j| j.inputs.iter())
                        .map(|f| f.name.as_str())
                        .filter(|n| !catalogue.contains(n))
                        .collect();
                    const SHOWN: usize = 5;
                    for name in missing.iter().take(SHOWN) {
                        c.add(&at, format!("input file '{name}' is not in the file catalogue"));
                    }
                    if missing.len() > SHOWN {
                        c.add(&at, format!("{} more input files are not in the file catalogue", missing.len() - SHOWN));
                    }
                }
            }
        }
    }
    c.findings
}

fn lit<T: Scalar>(x: f64) -> T {
    T::lit(x)
}

fn draw(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Generated cluster jobs, `workload` streams keyed by cluster index.
fn workload_jobs(cl: &ClusterCfg, index: usize, seed: u64) -> Vec<ClusterJobCfg> {
    let Some(w) = &cl.workload else { return Vec::new() };
    let mut rng = SeededRng::new(seed).stream(WORKLOAD_STREAM + index as u64);
    let mean_mips = cl.nodes.iter().map(|n| n.mips).sum::<f64>() / cl.nodes.len().max(1) as f64;
    let pricing = ClusterPricing::<f64> {
        alpha: cl.alpha.unwrap_or(0.01),
        beta: cl.beta.unwrap_or(1.0),
    };
    let mut t = 0.0;
    (0..w.count)
        .map(|i| {
            let u: f64 = rng.random();
            t += -w.mean_interarrival * (1.0 - u).ln();
            let length = draw(&mut rng, w.length);
            let deadline = t + draw(&mut rng, w.slack) * length / mean_mips;
            let budget = pricing.price(&length, &t, &deadline) * draw(&mut rng, w.budget_factor);
            ClusterJobCfg {
                name: format!("gen-{}", i + 1),
                consumer: w.consumer.clone(),
                submit: t,
                deadline,
                budget,
                length_mi: length,
            }
        })
        .collect()
}

/// Random streams for generated workloads start here, clear of entity ids.
const WORKLOAD_STREAM: u64 = 1 << 32;

/// Builds a world from a scenario, validating it first.
pub fn build<T: Scalar>(sc: &Scenario, base: &Path) -> Result<World<T>, Vec<Finding>> {
    let findings = validate(sc, base);
    if !findings.is_empty() {
        return Err(findings);
    }
    construct(sc, base).map_err(|(location, message)| vec![Finding { location, message }])
}

/// Validation plus a trial build; the list is empty exactly when a run
/// would get past validation.
pub fn check(sc: &Scenario, base: &Path) -> Vec<Finding> {
    match build::<f64>(sc, base) {
        Ok(_) => Vec::new(),
        Err(f) => f,
    }
}

fn construct<T: Scalar>(sc: &Scenario, base: &Path) -> Result<World<T>, (String, String)> {
    let mut w = World::new();
    let ctx = |at: String| move |e: crate::world::WorldError| (at.clone(), e.to_string());
    w.set_gmd_latency(lit(sc.gmd_latency)).map_err(ctx("scenario".into()))?;
    let mut site_ids = BTreeMap::new();
    for s in &sc.sites {
        site_ids.insert(s.name.as_str(), w.add_site(&s.name, s.utc_offset).map_err(ctx(format!("site {}", s.name)))?);
    }
    let mut acct = BTreeMap::new();
    for a in &sc.accounts {
        acct.insert(a.name.as_str(), w.open_account(&a.name, lit(a.credit)).map_err(ctx(format!("account {}", a.name)))?);
    }
    let site = |n: &str| site_ids[n];
    let account = |n: &str| -> AccountId { acct[n] };
    let mut res_ids = BTreeMap::new();
    for r in &sc.resources {
        let id = w
            .add_resource(GridResource {
                id: ResourceId(0),
                name: r.name.clone(),
                site: site(&r.site),
                n_pe: r.n_pe,
                pe_rating_mips: lit(r.mips),
                base_price: lit(r.base_price),
                peak_multiplier: lit(r.peak_multiplier),
                peak_window: r.peak_window.map(|[s, e]| PeakWindow {
                    start_hour: lit(s),
                    end_hour: lit(e),
                }),
                provider_account: account(&r.provider),
                apps: r.apps.iter().cloned().collect(),
            })
            .map_err(ctx(format!("resource {}", r.name)))?;
        res_ids.insert(r.name.as_str(), id);
    }
    if sc.gmd.is_empty() {
        for r in &sc.resources {
            w.publish(res_ids[r.name.as_str()], COMPUTE_SERVICE, None)
                .map_err(ctx(format!("resource {}", r.name)))?;
        }
    }
    for g in &sc.gmd {
        w.publish(res_ids[g.resource.as_str()], &g.service_type, g.apps.clone())
            .map_err(ctx(format!("gmd entry for {}", g.resource)))?;
    }
    for l in &sc.links {
        w.add_link(NetworkLink {
            a: site(&l.a),
            b: site(&l.b),
            bandwidth_mb_s: lit(l.bandwidth),
            price_per_mb: lit(l.price_per_mb),
        })
        .map_err(ctx(format!("link {}-{}", l.a, l.b)))?;
    }

    // plan inputs outside the catalogue become files at the session's default site
    let mut catalogue: BTreeMap<String, (f64, BTreeSet<SiteId>)> = sc
        .files
        .iter()
        .map(|f| (f.name.clone(), (f.size_mb, f.replicas.iter().map(|r| site(r)).collect())))
        .collect();
    let declared: BTreeSet<String> = catalogue.keys().cloned().collect();
    let mut sessions = Vec::new();
    for s in &sc.sessions {
        let set = session_jobs(s, base).map_err(|e| (format!("session {}", s.name), e))?;
        if let Some(d) = &s.default_file_site {
            for f in set.jobs.iter().flat_map(|j| j.inputs.iter()) {
                if !declared.contains(&f.name) {
                    catalogue.entry(f.name.clone()).or_insert_with(|| (f.size_mb, BTreeSet::new())).1.insert(site(d));
                }
            }
        }
        sessions.push((s, set));
    }
    for (name, (size, replicas)) in catalogue {
        w.add_file(LogicalFile {
            name: name.clone(),
            size_mb: lit(size),
            replicas,
        })
        .map_err(ctx(format!("file {name}")))?;
    }

    for (i, cl) in sc.clusters.iter().enumerate() {
        let mut jobs = cl.jobs.clone();
        jobs.extend(workload_jobs(cl, i, sc.seed));
        let pricing = ClusterPricing {
            alpha: cl.alpha.map_or_else(|| ClusterPricing::<T>::default().alpha, lit),
            beta: cl.beta.map_or_else(T::one, lit),
        };
        w.add_cluster(ClusterSpec {
            name: cl.name.clone(),
            provider: account(&cl.provider),
            pricing,
            nodes: cl.nodes.iter().map(|n| (n.name.clone(), lit(n.mips))).collect(),
            jobs: jobs
                .iter()
                .map(|j| ClusterJobSpec {
                    name: j.name.clone(),
                    consumer: account(&j.consumer),
                    submit: lit(j.submit),
                    deadline: lit(j.deadline),
                    budget: lit(j.budget),
                    length_mi: lit(j.length_mi),
                })
                .collect(),
        })
        .map_err(ctx(format!("cluster {}", cl.name)))?;
    }

    for (s, set) in sessions {
        let strategy: Strategy = s.strategy.parse().map_err(|e: crate::broker::UnknownStrategy| (format!("session {}", s.name), e.to_string()))?;
        let jobs = set
            .jobs
            .iter()
            .map(|j| SessionJob {
                name: j.name.clone(),
                profile: JobProfile {
                    length_mi: lit(j.length_mi),
                    inputs: j.inputs.iter().map(|f| f.name.clone()).collect(),
                    output_mb: lit(j.output_mb),
                },
            })
            .collect();
        w.add_session(SessionSpec {
            name: s.name.clone(),
            qos: QoSRequest {
                deadline: lit(s.deadline),
                budget: lit(s.budget),
                strategy,
                consumer: account(&s.consumer),
                home_site: site(&s.home_site),
                app: s.app.clone(),
                code_mb: s.code_mb.map(lit),
            },
            start: lit(s.start),
            reschedule_interval: lit(s.reschedule_interval),
            jobs,
        })
        .map_err(ctx(format!("session {}", s.name)))?;
    }
    Ok(w)
}

/// A large random scenario for throughput runs: `jobs` jobs split over ten
/// sessions (all three strategies) on `resources` resources across eight
/// sites, with generous deadlines and budgets.
pub fn synthetic(jobs: usize, resources: usize, seed: u64) -> Scenario {
    let mut rng = SeededRng::new(seed).stream(0);
    const SITES: usize = 8;
    let sessions = jobs.clamp(1, 10);
    let mut sc = Scenario {
        seed,
        ..Scenario::default()
    };
    for i in 0..SITES {
        sc.sites.push(SiteCfg {
            name: format!("site-{i}"),
            utc_offset: rng.random_range(-12..=14),
        });
    }
    for i in 1..SITES {
        sc.links.push(LinkCfg {
            a: "site-0".into(),
            b: format!("site-{i}"),
            bandwidth: rng.random_range(5.0..50.0),
            price_per_mb: rng.random_range(0.0..0.05),
        });
    }
    sc.accounts.push(AccountCfg {
        name: "provider".into(),
        credit: 0.0,
    });
    for r in 0..resources {
        let peak = rng.random_bool(0.3);
        sc.resources.push(ResourceCfg {
            name: format!("res-{r}"),
            site: format!("site-{}", r % SITES),
            n_pe: rng.random_range(1..=8),
            mips: rng.random_range(100.0..1000.0),
            base_price: rng.random_range(0.5..5.0),
            peak_multiplier: if peak { 1.5 } else { 1.0 },
            peak_window: peak.then_some([9.0, 17.0]),
            provider: "provider".into(),
            apps: vec!["sweep".into()],
        });
    }
    let mut left = jobs;
    for s in 0..sessions {
        let n = left / (sessions - s);
        left -= n;
        let strategy = Strategy::ALL[s % 3];
        sc.accounts.push(AccountCfg {
            name: format!("user-{s}"),
            credit: 1e12,
        });
        sc.sessions.push(SessionCfg {
            name: format!("sweep-{s}"),
            consumer: format!("user-{s}"),
            home_site: "site-0".into(),
            app: "sweep".into(),
            strategy: strategy.as_str().into(),
            deadline: 1e7,
            budget: 1e11,
            start: (s * 5) as f64,
            reschedule_interval: 10.0,
            plan_file: None,
            plan: Some(format!(
                "parameter i integer range 1 {n} step 1;\ntask t\n  input \"sweep-{s}-${{i}}.dat\" 1\n  length 1000 + 10 * i\n  output 0.1\nendtask\n"
            )),
            default_file_site: Some(format!("site-{}", s % SITES)),
            code_mb: None,
        });
    }
    sc
}

//! Running a scenario end to end and writing its artefacts:
//! `summary.json`, `jobs.csv`, `ledger.csv` and, when tracing,
//! `events.csv`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};

use crate::bank::write_ledger_csv;
use crate::kernel::write_trace_csv;
use crate::scalar::Scalar;
use crate::scenario::{build, check, load, Finding, Overrides, Scenario, ScenarioError};
use crate::world::{ExitReason, JobRow, RunOutcome, World};

pub const EXIT_OK: i32 = 0;
/// A session aborted or was left with unfinished jobs.
pub const EXIT_INCOMPLETE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;
/// Output files could not be written.
pub const EXIT_IO: i32 = 5;

pub const JOBS_HEADER: [&str; 8] = ["job", "resource", "submit", "start", "finish", "compute_cost", "data_cost", "status"];

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub overrides: Overrides,
    pub out_dir: PathBuf,
    pub trace: bool,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub code: i32,
    /// Short machine-readable reason, e.g. `completed` or `validation`.
    pub reason: String,
    pub findings: Vec<Finding>,
    pub message: Option<String>,
    pub summary: Option<Value>,
}

impl RunResult {
    fn failed(code: i32, reason: &str, message: String, findings: Vec<Finding>) -> Self {
        Self {
            code,
            reason: reason.into(),
            findings,
            message: Some(message),
            summary: None,
        }
    }

    /// One JSON object describing the result, for stderr.
    pub fn status_json(&self) -> Value {
        json!({
            "exit": self.code,
            "reason": self.reason,
            "message": self.message,
            "findings": self.findings.iter().map(ToString::to_string).collect::<Vec<_>>(),
        })
    }
}

fn load_error(e: ScenarioError) -> RunResult {
    let code = match e {
        ScenarioError::Invalid(_) => EXIT_INVALID,
        _ => EXIT_PARSE,
    };
    let reason = if code == EXIT_PARSE { "config-parse" } else { "validation" };
    let findings = match &e {
        ScenarioError::Invalid(f) => f.clone(),
        _ => Vec::new(),
    };
    RunResult::failed(code, reason, e.to_string(), findings)
}

/// Problems that would stop `run_scenario` at validation.
pub fn validate_scenario(path: &Path) -> Result<Vec<Finding>, ScenarioError> {
    let (sc, base) = load(path)?;
    Ok(check(&sc, &base))
}

pub fn run_scenario(path: &Path, opts: &RunOptions) -> RunResult {
    match load(path) {
        Ok((sc, base)) => run_loaded(sc, &base, opts),
        Err(e) => load_error(e),
    }
}

/// Runs an already parsed scenario; plan files resolve against `base`.
pub fn run_loaded(mut sc: Scenario, base: &Path, opts: &RunOptions) -> RunResult {
    sc.apply(&opts.overrides);
    let clock = Instant::now();
    let mut world: World<f64> = match build(&sc, base) {
        Ok(w) => w,
        Err(findings) => return load_error(ScenarioError::Invalid(findings)),
    };
    if opts.trace {
        world.enable_trace();
    }
    let mut outcome = match world.run(sc.end_time.as_ref()) {
        Ok(o) => o,
        Err(e) => return RunResult::failed(EXIT_INVARIANT, "invariant-violation", e.to_string(), Vec::new()),
    };
    let runtime_ms = clock.elapsed().as_millis();

    let rows = world.jobs();
    let expected: usize = outcome.sessions.iter().map(|s| s.jobs_total).sum::<usize>() + outcome.clusters.iter().map(|c| c.submitted).sum::<usize>();
    if rows.len() != expected {
        outcome.violations.push(format!("jobs.csv has {} rows, reports count {expected}", rows.len()));
    }
    let reason = outcome.exit_reason();
    let summary = summary_json(&outcome, sc.seed, runtime_ms);
    if let Err(e) = write_outputs(&world, &rows, &summary, opts) {
        return RunResult::failed(EXIT_IO, "io", format!("cannot write outputs to {}: {e}", opts.out_dir.display()), Vec::new());
    }
    let code = match reason {
        ExitReason::Completed => EXIT_OK,
        ExitReason::Incomplete => EXIT_INCOMPLETE,
        ExitReason::InvariantViolation => EXIT_INVARIANT,
    };
    let message = match reason {
        ExitReason::Completed => None,
        ExitReason::Incomplete => Some(format!("incomplete: {}", outcome.incomplete.join(", "))),
        ExitReason::InvariantViolation => Some(outcome.violations.join("; ")),
    };
    RunResult {
        code,
        reason: reason.as_str().into(),
        findings: Vec::new(),
        message,
        summary: Some(summary),
    }
}

fn write_outputs<T: Scalar>(world: &World<T>, rows: &[JobRow<T>], summary: &Value, opts: &RunOptions) -> std::io::Result<()> {
    let dir = &opts.out_dir;
    fs::create_dir_all(dir)?;
    let mut s = BufWriter::new(File::create(dir.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut s, summary)?;
    s.write_all(b"\n")?;
    s.flush()?;
    write_jobs_csv(rows, BufWriter::new(File::create(dir.join("jobs.csv"))?))?;
    write_ledger_csv(
        world.bank().ledger(),
        |j| world.job_name(j).to_string(),
        |a| world.account_name(a).to_string(),
        |r| world.meter_name(r),
        BufWriter::new(File::create(dir.join("ledger.csv"))?),
    )?;
    if let Some(trace) = world.trace() {
        write_trace_csv(trace, BufWriter::new(File::create(dir.join("events.csv"))?))?;
    }
    Ok(())
}

fn opt<T: Scalar>(x: &Option<T>) -> String {
    x.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// Writes `job,resource,submit,start,finish,compute_cost,data_cost,status`.
pub fn write_jobs_csv<T: Scalar, W: Write>(rows: &[JobRow<T>], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(JOBS_HEADER)?;
    for r in rows {
        w.write_record([
            r.job.clone(),
            r.resource.clone(),
            opt(&r.submit),
            opt(&r.start),
            opt(&r.finish),
            r.compute_cost.to_string(),
            r.data_cost.to_string(),
            r.status.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn num<T: Scalar>(x: &T) -> Value {
    json!(x.to_f64_lossy())
}

/// The summary document. Stable keys: `sessions`, `conservation_ok`,
/// `events`, `runtime_ms`; also `seed`, `exit_reason`, `replay_ok`,
/// `final_time`, `clusters`, `violations`, `incomplete`.
pub fn summary_json<T: Scalar>(o: &RunOutcome<T>, seed: u64, runtime_ms: u128) -> Value {
    let sessions: Vec<Value> = o
        .sessions
        .iter()
        .map(|r| {
            let per_resource: Map<String, Value> = r
                .per_resource
                .iter()
                .map(|(k, t)| (k.clone(), json!({ "jobs": t.jobs, "cost": num(&t.cost) })))
                .collect();
            json!({
                "name": r.session,
                "strategy": r.strategy.as_str(),
                "jobs_total": r.jobs_total,
                "jobs_done": r.jobs_done,
                "jobs_failed": r.jobs_failed,
                "makespan": num(&r.makespan),
                "total_cost": num(&r.total_cost),
                "compute_cost": num(&r.compute_cost),
                "data_cost": num(&r.data_cost),
                "budget": num(&r.budget),
                "deadline": num(&r.deadline),
                "deadline_met": r.deadline_met,
                "budget_respected": r.budget_respected,
                "aborted": r.aborted,
                "failures": r.failures,
                "per_resource": per_resource,
            })
        })
        .collect();
    let clusters: Vec<Value> = o
        .clusters
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "submitted": c.submitted,
                "admitted": c.admitted,
                "done": c.done,
                "rejected": c.rejected,
                "revenue": num(&c.revenue),
                "deadline_misses": c.deadline_misses,
            })
        })
        .collect();
    json!({
        "seed": seed,
        "exit_reason": o.exit_reason().as_str(),
        "conservation_ok": o.conservation_ok,
        "replay_ok": o.replay_ok,
        "events": o.events,
        "final_time": num(&o.final_time),
        "runtime_ms": runtime_ms as u64,
        "sessions": sessions,
        "clusters": clusters,
        "violations": o.violations,
        "incomplete": o.incomplete,
    })
}

//! Parameter-sweep plans: a small line-oriented language that declares
//! parameters and one task template, expanded into one job per point of
//! the parameters' cartesian product.
//!
//! ```text
//! # comments run to end of line
//! parameter event integer range 1 100 step 1;
//! parameter cut float select 0.5 1.5;
//! parameter tag text select "a" "b";
//! task main
//!   input "event-${event}.dat" 3
//!   length 2000 * cut + 50
//!   output 0.5
//! endtask
//! ```

mod expr;
mod parse;
mod render;

use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;

pub use expr::{BinOp, Expr};
pub use parse::parse_plan;
pub use render::render_plan;

/// Refuse to materialise domains larger than this.
pub const MAX_DOMAIN: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: placeholder `{name}` does not name a declared parameter")]
    UndeclaredPlaceholder { line: usize, name: String },
    #[error("line {line}: parameter `{name}` has an empty domain")]
    EmptyDomain { line: usize, name: String },
    #[error("line {line}: parameter `{name}` declared twice")]
    DuplicateParameter { line: usize, name: String },
    #[error("line {line}: parameter `{name}`: {message}")]
    InvalidDomain { line: usize, name: String, message: String },
}

impl PlanError {
    pub fn line(&self) -> usize {
        match self {
            PlanError::Syntax { line, .. }
            | PlanError::UndeclaredPlaceholder { line, .. }
            | PlanError::EmptyDomain { line, .. }
            | PlanError::DuplicateParameter { line, .. }
            | PlanError::InvalidDomain { line, .. } => *line,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpandError {
    #[error("job {job}: division by zero in length expression")]
    DivisionByZero { job: String },
    #[error("job {job}: length {length} is not positive")]
    NonPositiveLength { job: String, length: String },
    #[error("job {job}: parameter `{name}` is not numeric")]
    NotNumeric { job: String, name: String },
    #[error("parameter `{0}` has more than {MAX_DOMAIN} values")]
    DomainTooLarge(String),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Integer,
    Float,
    Text,
}

impl ParamKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ParamKind::Integer => "integer",
            ParamKind::Float => "float",
            ParamKind::Text => "text",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    IntRange { lo: i64, hi: i64, step: i64 },
    FloatRange { lo: f64, hi: f64, step: f64 },
    Select(Vec<Value>),
}

impl Domain {
    /// Every value in declaration order. Float ranges are generated as
    /// `lo + k * step`, never by accumulation.
    pub fn values(&self) -> Result<Vec<Value>, usize> {
        let mut out = Vec::new();
        match self {
            Domain::IntRange { lo, hi, step } => {
                let mut k: i64 = 0;
                while let Some(v) = step.checked_mul(k).and_then(|d| lo.checked_add(d)) {
                    if v > *hi {
                        break;
                    }
                    if out.len() == MAX_DOMAIN {
                        return Err(MAX_DOMAIN);
                    }
                    out.push(Value::Int(v));
                    k += 1;
                }
            }
            Domain::FloatRange { lo, hi, step } => {
                let mut k: u64 = 0;
                loop {
                    let v = lo + (k as f64) * step;
                    if v > *hi {
                        break;
                    }
                    if out.len() == MAX_DOMAIN {
                        return Err(MAX_DOMAIN);
                    }
                    out.push(Value::Float(v));
                    k += 1;
                }
            }
            Domain::Select(v) => out.clone_from(v),
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub kind: ParamKind,
    pub domain: Domain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InputTemplate {
    /// File name with `${param}` placeholders.
    pub pattern: String,
    pub size_mb: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskTemplate {
    pub name: String,
    pub inputs: Vec<InputTemplate>,
    pub length_mi: Expr,
    pub output_mb: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub parameters: Vec<Parameter>,
    pub task: TaskTemplate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InputFile<T> {
    pub name: String,
    pub size_mb: T,
}

/// One expanded job, before it is bound to a session.
#[derive(Clone, Debug, PartialEq)]
pub struct JobSpec<T> {
    pub name: String,
    pub bindings: Vec<(String, Value)>,
    pub length_mi: T,
    pub inputs: Vec<InputFile<T>>,
    pub output_mb: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobSet<T> {
    pub jobs: Vec<JobSpec<T>>,
}

impl<T: Scalar> JobSet<T> {
    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn total_input_mb(&self) -> T {
        self.jobs
            .iter()
            .flat_map(|j| j.inputs.iter())
            .fold(T::zero(), |acc, f| acc + f.size_mb.clone())
    }
}

/// Splits a pattern into literal text and placeholder names.
pub(crate) fn placeholders(pattern: &str) -> Result<Vec<Segment<'_>>, String> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(at) = rest.find("${") {
        if at > 0 {
            out.push(Segment::Text(&rest[..at]));
        }
        let after = &rest[at + 2..];
        let end = after.find('}').ok_or_else(|| format!("unterminated placeholder in \"{pattern}\""))?;
        let name = &after[..end];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("bad placeholder `${{{name}}}`"));
        }
        out.push(Segment::Param(name));
        rest = &after[end + 1..];
    }
    if !rest.is_empty() {
        out.push(Segment::Text(rest));
    }
    Ok(out)
}

#[derive(Debug, PartialEq)]
pub(crate) enum Segment<'a> {
    Text(&'a str),
    Param(&'a str),
}

/// Expands the plan into one job per point of the parameter product, in
/// odometer order (the last declared parameter varies fastest).
pub fn expand<T: Scalar>(plan: &Plan) -> Result<JobSet<T>, ExpandError> {
    let domains: Vec<Vec<Value>> = plan
        .parameters
        .iter()
        .map(|p| p.domain.values().map_err(|_| ExpandError::DomainTooLarge(p.name.clone())))
        .collect::<Result<_, _>>()?;
    let total: usize = domains.iter().map(Vec::len).product();
    let mut jobs = Vec::with_capacity(total);
    let mut idx = vec![0usize; domains.len()];
    for n in 0..total {
        let bindings: Vec<(String, Value)> = plan
            .parameters
            .iter()
            .zip(&idx)
            .zip(&domains)
            .map(|((p, &i), d)| (p.name.clone(), d[i].clone()))
            .collect();
        let name = format!("{}-{}", plan.task.name, n + 1);
        let lookup = |k: &str| bindings.iter().find(|(b, _)| b == k).map(|(_, v)| v);
        let length: T = plan.task.length_mi.eval(&lookup).map_err(|e| match e {
            expr::EvalError::DivisionByZero => ExpandError::DivisionByZero { job: name.clone() },
            expr::EvalError::NotNumeric(p) => ExpandError::NotNumeric { job: name.clone(), name: p },
        })?;
        if length <= T::zero() {
            return Err(ExpandError::NonPositiveLength {
                job: name,
                length: length.to_string(),
            });
        }
        let inputs = plan
            .task
            .inputs
            .iter()
            .map(|inp| InputFile {
                name: substitute(&inp.pattern, &lookup),
                size_mb: T::lit(inp.size_mb),
            })
            .collect();
        jobs.push(JobSpec {
            name,
            bindings,
            length_mi: length,
            inputs,
            output_mb: T::lit(plan.task.output_mb),
        });
        // odometer
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < domains[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(JobSet { jobs })
}

fn substitute<'a>(pattern: &str, lookup: &impl Fn(&str) -> Option<&'a Value>) -> String {
    // patterns are validated at parse time
    let segs = placeholders(pattern).expect("validated pattern");
    let mut s = String::new();
    for seg in segs {
        match seg {
            Segment::Text(t) => s.push_str(t),
            Segment::Param(p) => s.push_str(&lookup(p).map(Value::to_string).unwrap_or_default()),
        }
    }
    s
}

use std::fmt::Write;

use super::expr::Expr;
use super::{Domain, Plan, Value};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn value(v: &Value) -> String {
    match v {
        Value::Text(s) => quote(s),
        other => other.to_string(),
    }
}

fn expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Num(x) => {
            let _ = write!(out, "{x}");
        }
        Expr::Param(p) => out.push_str(p),
        Expr::Neg(inner) => {
            out.push('-');
            let wrap = matches!(**inner, Expr::Bin(..) | Expr::Neg(_));
            operand(inner, wrap, out);
        }
        Expr::Bin(op, a, b) => {
            // the parser is left-associative: parenthesise a right operand of equal precedence
            let wrap_l = matches!(**a, Expr::Bin(o, ..) if o.precedence() < op.precedence());
            let wrap_r = matches!(**b, Expr::Bin(o, ..) if o.precedence() <= op.precedence());
            operand(a, wrap_l, out);
            let _ = write!(out, " {} ", op.symbol());
            operand(b, wrap_r, out);
        }
    }
}

fn operand(e: &Expr, wrap: bool, out: &mut String) {
    if wrap {
        out.push('(');
        expr(e, out);
        out.push(')');
    } else {
        expr(e, out);
    }
}

/// Canonical text form; `parse_plan(render_plan(p)) == p`.
pub fn render_plan(plan: &Plan) -> String {
    let mut out = String::new();
    for p in &plan.parameters {
        let _ = write!(out, "parameter {} {} ", p.name, p.kind.keyword());
        match &p.domain {
            Domain::IntRange { lo, hi, step } => {
                let _ = write!(out, "range {lo} {hi} step {step}");
            }
            Domain::FloatRange { lo, hi, step } => {
                let _ = write!(out, "range {lo} {hi} step {step}");
            }
            Domain::Select(vals) => {
                out.push_str("select");
                for v in vals {
                    out.push(' ');
                    out.push_str(&value(v));
                }
            }
        }
        out.push_str(";\n");
    }
    let t = &plan.task;
    let _ = writeln!(out, "task {}", t.name);
    for i in &t.inputs {
        let _ = writeln!(out, "  input {} {}", quote(&i.pattern), i.size_mb);
    }
    out.push_str("  length ");
    expr(&t.length_mi, &mut out);
    out.push('\n');
    let _ = writeln!(out, "  output {}", t.output_mb);
    out.push_str("endtask\n");
    out
}

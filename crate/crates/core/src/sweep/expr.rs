use crate::scalar::Scalar;

use super::Value;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Arithmetic over parameters and numeric literals.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Param(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, PartialEq)]
pub(crate) enum EvalError {
    DivisionByZero,
    NotNumeric(String),
}

impl Expr {
    pub(crate) fn params(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Param(p) => out.push(p.clone()),
            Expr::Neg(e) => e.params(out),
            Expr::Bin(_, a, b) => {
                a.params(out);
                b.params(out);
            }
        }
    }

    pub(crate) fn eval<'a, T: Scalar>(&self, lookup: &impl Fn(&str) -> Option<&'a Value>) -> Result<T, EvalError> {
        Ok(match self {
            Expr::Num(x) => T::lit(*x),
            Expr::Param(p) => match lookup(p) {
                Some(Value::Int(i)) => T::from_i64(*i).expect("integer fits scalar"),
                Some(Value::Float(x)) => T::lit(*x),
                _ => return Err(EvalError::NotNumeric(p.clone())),
            },
            Expr::Neg(e) => -e.eval::<T>(lookup)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval::<T>(lookup)?;
                let b = b.eval::<T>(lookup)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b.is_zero() {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                }
            }
        })
    }
}

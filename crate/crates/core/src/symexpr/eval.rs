use thiserror::Error;

use super::{Expr, Func, Node, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    DivisionByZero,
    LogNonPositive,
    SqrtNegative,
    NonFinite,
}

impl std::fmt::Display for DomainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::LogNonPositive => "log of a non-positive value",
            DomainKind::SqrtNegative => "sqrt of a negative value",
            DomainKind::NonFinite => "non-finite result",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(Var),
    #[error("{kind} in `{subexpr}`")]
    Domain { kind: DomainKind, subexpr: String },
}

/// Variable bindings for evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalPoint {
    slots: [Option<f64>; 10],
}

impl EvalPoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: &[(Var, f64)]) -> Self {
        let mut pt = Self::new();
        for &(v, x) in pairs {
            pt.set(v, x);
        }
        pt
    }

    /// Binds x, y, z, p, q.
    pub fn jet(x: f64, y: f64, z: f64, p: f64, q: f64) -> Self {
        Self::from_pairs(&[
            (Var::X, x),
            (Var::Y, y),
            (Var::Z, z),
            (Var::P, p),
            (Var::Q, q),
        ])
    }

    pub fn set(&mut self, v: Var, value: f64) {
        self.slots[v.index()] = Some(value);
    }

    pub fn with(mut self, v: Var, value: f64) -> Self {
        self.set(v, value);
        self
    }

    pub fn get(&self, v: Var) -> Option<f64> {
        self.slots[v.index()]
    }

    pub fn bindings(&self) -> impl Iterator<Item = (Var, f64)> + '_ {
        Var::ALL
            .iter()
            .filter_map(move |&v| self.get(v).map(|x| (v, x)))
    }
}

fn domain(kind: DomainKind, e: &Expr) -> EvalError {
    EvalError::Domain {
        kind,
        subexpr: e.to_string(),
    }
}

impl Expr {
    /// Evaluate with IEEE doubles. Division by exact zero, log of a
    /// non-positive value, sqrt of a negative value and overflow to a
    /// non-finite value are reported with the offending subexpression.
    pub fn eval(&self, pt: &EvalPoint) -> Result<f64, EvalError> {
        let mut scale = 0.0;
        self.eval_tracked(pt, &mut scale)
    }

    /// Evaluate and also return the largest absolute value taken by any
    /// subterm, used as the scale for relative zero tests.
    pub fn eval_with_scale(&self, pt: &EvalPoint) -> Result<(f64, f64), EvalError> {
        let mut scale = 0.0;
        let v = self.eval_tracked(pt, &mut scale)?;
        Ok((v, scale))
    }

    fn eval_tracked(&self, pt: &EvalPoint, scale: &mut f64) -> Result<f64, EvalError> {
        let v = match self.node() {
            Node::Const(c) => *c,
            Node::Var(v) => pt.get(*v).ok_or(EvalError::Unbound(*v))?,
            Node::Add(a, b) => a.eval_tracked(pt, scale)? + b.eval_tracked(pt, scale)?,
            Node::Sub(a, b) => a.eval_tracked(pt, scale)? - b.eval_tracked(pt, scale)?,
            Node::Mul(a, b) => a.eval_tracked(pt, scale)? * b.eval_tracked(pt, scale)?,
            Node::Div(a, b) => {
                let num = a.eval_tracked(pt, scale)?;
                let den = b.eval_tracked(pt, scale)?;
                if den == 0.0 {
                    return Err(domain(DomainKind::DivisionByZero, self));
                }
                num / den
            }
            Node::Pow(a, n) => {
                let base = a.eval_tracked(pt, scale)?;
                if base == 0.0 && *n < 0 {
                    return Err(domain(DomainKind::DivisionByZero, self));
                }
                base.powi(*n)
            }
            Node::Neg(a) => -a.eval_tracked(pt, scale)?,
            Node::Call(func, a) => {
                let arg = a.eval_tracked(pt, scale)?;
                match func {
                    Func::Sin => arg.sin(),
                    Func::Cos => arg.cos(),
                    Func::Exp => arg.exp(),
                    Func::Log => {
                        if arg <= 0.0 {
                            return Err(domain(DomainKind::LogNonPositive, self));
                        }
                        arg.ln()
                    }
                    Func::Sqrt => {
                        if arg < 0.0 {
                            return Err(domain(DomainKind::SqrtNegative, self));
                        }
                        arg.sqrt()
                    }
                    Func::Abs => arg.abs(),
                }
            }
        };
        if !v.is_finite() {
            return Err(domain(DomainKind::NonFinite, self));
        }
        if v.abs() > *scale {
            *scale = v.abs();
        }
        Ok(v)
    }
}

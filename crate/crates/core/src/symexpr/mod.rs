//! A small computer-algebra core: expression trees over the chart variables,
//! a recursive-descent parser, exact symbolic differentiation, and
//! point evaluation with domain checking.
//!
//! Simplification is limited to constant folding and the 0/1 identities
//! applied by the smart constructors.

mod diff;
mod eval;
mod parse;
mod sampling;

use std::collections::BTreeSet;
use std::fmt;
use std::ops;
use std::sync::Arc;

pub use eval::{DomainKind, EvalError, EvalPoint};
pub use parse::{parse, ParseError, ParseErrorKind};
pub use sampling::{is_identically_zero, SampleBox, SampleError, ZeroTest, ZeroVerdict};

/// A variable of the expression language.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X,
    Y,
    Z,
    P,
    Q,
    S,
    T,
    U,
    V,
    W,
}

impl Var {
    pub const ALL: [Var; 10] = [
        Var::X,
        Var::Y,
        Var::Z,
        Var::P,
        Var::Q,
        Var::S,
        Var::T,
        Var::U,
        Var::V,
        Var::W,
    ];

    /// The five coordinates of the 1-jet chart, in chart order.
    pub const JET: [Var; 5] = [Var::X, Var::Y, Var::Z, Var::P, Var::Q];

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Z => "z",
            Var::P => "p",
            Var::Q => "q",
            Var::S => "s",
            Var::T => "t",
            Var::U => "u",
            Var::V => "v",
            Var::W => "w",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        Var::ALL.iter().copied().find(|v| v.name() == name)
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Built-in unary functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 6] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }
}

/// One node of an expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, i32),
    Neg(Expr),
    Call(Func, Expr),
}

/// Immutable, cheaply clonable expression tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr(Arc<Node>);

impl Expr {
    fn wrap(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(c: f64) -> Expr {
        Expr::wrap(Node::Const(c))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn var(v: Var) -> Expr {
        Expr::wrap(Node::Var(v))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn add(a: &Expr, b: &Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if (x + y).is_finite() {
                return Expr::constant(x + y);
            }
        }
        if a.is_zero() {
            return b.clone();
        }
        if b.is_zero() {
            return a.clone();
        }
        if let Node::Neg(inner) = b.node() {
            return Expr::sub(a, inner);
        }
        Expr::wrap(Node::Add(a.clone(), b.clone()))
    }

    pub fn sub(a: &Expr, b: &Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if (x - y).is_finite() {
                return Expr::constant(x - y);
            }
        }
        if b.is_zero() {
            return a.clone();
        }
        if a.is_zero() {
            return Expr::neg(b);
        }
        if let Node::Neg(inner) = b.node() {
            return Expr::add(a, inner);
        }
        Expr::wrap(Node::Sub(a.clone(), b.clone()))
    }

    pub fn mul(a: &Expr, b: &Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if (x * y).is_finite() {
                return Expr::constant(x * y);
            }
        }
        if a.is_zero() || b.is_zero() {
            return Expr::zero();
        }
        if a.is_one() {
            return b.clone();
        }
        if b.is_one() {
            return a.clone();
        }
        if a.as_const() == Some(-1.0) {
            return Expr::neg(b);
        }
        if b.as_const() == Some(-1.0) {
            return Expr::neg(a);
        }
        Expr::wrap(Node::Mul(a.clone(), b.clone()))
    }

    pub fn div(a: &Expr, b: &Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if y != 0.0 && (x / y).is_finite() {
                return Expr::constant(x / y);
            }
        }
        if a.is_zero() && !b.is_zero() {
            return Expr::zero();
        }
        if b.is_one() {
            return a.clone();
        }
        Expr::wrap(Node::Div(a.clone(), b.clone()))
    }

    pub fn neg(a: &Expr) -> Expr {
        match a.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::wrap(Node::Neg(a.clone())),
        }
    }

    pub fn powi(&self, n: i32) -> Expr {
        if n == 0 {
            return Expr::one();
        }
        if n == 1 {
            return self.clone();
        }
        if let Some(c) = self.as_const() {
            let v = c.powi(n);
            if v.is_finite() && !(c == 0.0 && n < 0) {
                return Expr::constant(v);
            }
        }
        Expr::wrap(Node::Pow(self.clone(), n))
    }

    pub fn call(f: Func, arg: &Expr) -> Expr {
        if let Some(c) = arg.as_const() {
            let v = match f {
                Func::Sin => Some(c.sin()),
                Func::Cos => Some(c.cos()),
                Func::Exp => Some(c.exp()),
                Func::Log if c > 0.0 => Some(c.ln()),
                Func::Sqrt if c >= 0.0 => Some(c.sqrt()),
                Func::Abs => Some(c.abs()),
                _ => None,
            };
            if let Some(v) = v.filter(|v| v.is_finite()) {
                return Expr::constant(v);
            }
        }
        Expr::wrap(Node::Call(f, arg.clone()))
    }

    pub fn sin(&self) -> Expr {
        Expr::call(Func::Sin, self)
    }
    pub fn cos(&self) -> Expr {
        Expr::call(Func::Cos, self)
    }
    pub fn exp(&self) -> Expr {
        Expr::call(Func::Exp, self)
    }
    pub fn ln(&self) -> Expr {
        Expr::call(Func::Log, self)
    }
    pub fn sqrt(&self) -> Expr {
        Expr::call(Func::Sqrt, self)
    }
    pub fn abs(&self) -> Expr {
        Expr::call(Func::Abs, self)
    }

    /// Set of variables occurring in the expression.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self.node() {
            Node::Const(_) => {}
            Node::Var(v) => {
                out.insert(*v);
            }
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Node::Pow(a, _) | Node::Neg(a) | Node::Call(_, a) => a.collect_vars(out),
        }
    }

    /// True when every free variable is in `allowed`.
    pub fn uses_only(&self, allowed: &[Var]) -> bool {
        self.free_vars().iter().all(|v| allowed.contains(v))
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self.node() {
            Node::Const(_) | Node::Var(_) => 1,
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                1 + a.size() + b.size()
            }
            Node::Pow(a, _) | Node::Neg(a) | Node::Call(_, a) => 1 + a.size(),
        }
    }

    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Pow(..) => 4,
            Node::Const(c) if *c < 0.0 => 3,
            Node::Const(_) | Node::Var(_) | Node::Call(..) => 5,
        }
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Expr {
        Expr::constant(c)
    }
}

impl From<Var> for Expr {
    fn from(v: Var) -> Expr {
        Expr::var(v)
    }
}

fn fmt_const(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c < 0.0 {
        write!(f, "-{}", -c)
    } else {
        write!(f, "{c}")
    }
}

fn fmt_child(child: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if child.precedence() < min_prec {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => fmt_const(*c, f),
            Node::Var(v) => write!(f, "{v}"),
            Node::Add(a, b) => {
                fmt_child(a, 1, f)?;
                f.write_str(" + ")?;
                fmt_child(b, 2, f)
            }
            Node::Sub(a, b) => {
                fmt_child(a, 1, f)?;
                f.write_str(" - ")?;
                fmt_child(b, 2, f)
            }
            Node::Mul(a, b) => {
                fmt_child(a, 2, f)?;
                f.write_str("*")?;
                fmt_child(b, 3, f)
            }
            Node::Div(a, b) => {
                fmt_child(a, 2, f)?;
                f.write_str("/")?;
                fmt_child(b, 3, f)
            }
            Node::Neg(a) => {
                f.write_str("-")?;
                // the grammar's unary minus binds tighter than '^'
                fmt_child(a, 5, f)
            }
            Node::Pow(a, n) => {
                fmt_child(a, 5, f)?;
                write!(f, "^{n}")
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

macro_rules! bin_op {
    ($trait:ident, $method:ident, $ctor:path) => {
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $ctor(&self, &rhs)
            }
        }
        impl ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $ctor(&self, rhs)
            }
        }
        impl ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $ctor(self, &rhs)
            }
        }
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $ctor(self, rhs)
            }
        }
        impl ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $ctor(&self, &Expr::constant(rhs))
            }
        }
        impl ops::$trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                $ctor(self, &Expr::constant(rhs))
            }
        }
        impl ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $ctor(&Expr::constant(self), &rhs)
            }
        }
        impl ops::$trait<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $ctor(&Expr::constant(self), rhs)
            }
        }
    };
}

bin_op!(Add, add, Expr::add);
bin_op!(Sub, sub, Expr::sub);
bin_op!(Mul, mul, Expr::mul);
bin_op!(Div, div, Expr::div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

/// Symbolic partial derivative; see [`Expr::diff`].
pub fn diff(e: &Expr, v: Var) -> Expr {
    e.diff(v)
}

/// Evaluate at a point; see [`Expr::eval`].
pub fn eval(e: &Expr, pt: &EvalPoint) -> Result<f64, EvalError> {
    e.eval(pt)
}


#[cfg(test)]
mod props;

use super::{Expr, Func, Node, Var};

impl Expr {
    /// Exact partial derivative with respect to `v`.
    pub fn diff(&self, v: Var) -> Expr {
        match self.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(w) => {
                if *w == v {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(a, b) => a.diff(v) + b.diff(v),
            Node::Sub(a, b) => a.diff(v) - b.diff(v),
            Node::Mul(a, b) => a.diff(v) * b + a * b.diff(v),
            Node::Div(a, b) => {
                let da = a.diff(v);
                let db = b.diff(v);
                if db.is_zero() {
                    da / b
                } else {
                    (da * b - a * db) / b.powi(2)
                }
            }
            Node::Pow(a, n) => Expr::constant(*n as f64) * a.powi(n - 1) * a.diff(v),
            Node::Neg(a) => -a.diff(v),
            Node::Call(func, a) => {
                let da = a.diff(v);
                if da.is_zero() {
                    return Expr::zero();
                }
                let outer = match func {
                    Func::Sin => a.cos(),
                    Func::Cos => -a.sin(),
                    Func::Exp => self.clone(),
                    Func::Log => return da / a,
                    Func::Sqrt => return da / (2.0 * self),
                    Func::Abs => a / self,
                };
                outer * da
            }
        }
    }

    /// Repeated partial derivative along `vars` in order.
    pub fn diff_chain(&self, vars: &[Var]) -> Expr {
        vars.iter().fold(self.clone(), |e, &v| e.diff(v))
    }
}

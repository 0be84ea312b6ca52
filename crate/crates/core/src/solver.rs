//! Geometric singular solutions: integrate the reduced ODE along a seed
//! curve, lift the resulting leaf-space surface through the chart inverse
//! and assemble the integral surface and its front `F(s, t) = (x, y, z)`.

use thiserror::Error;

use crate::model::{AlphaSystem, JetPoint};
use crate::reduction::{
    default_guess, phi_inverse_with, Mode, NewtonOptions, ReducedPoint, ReductionError,
};
use crate::symexpr::{self, EvalError, EvalPoint, Expr, ParseError, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("range [{lo}, {hi}] is empty or not finite")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("seed curve may only depend on t, found `{0}`")]
    SeedVariable(Var),
    #[error("right-hand side failed at t = {t} (last valid t = {last_valid_t}): {source}")]
    Rhs {
        t: f64,
        last_valid_t: f64,
        source: ReductionError,
    },
    #[error("right-hand side depends on the fiber coordinate (derivative {derivative:e})")]
    NotBaseFunction { derivative: f64 },
    #[error("t = {t} lies outside the integrated range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("grid needs at least one node in each direction")]
    EmptyGrid,
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Seed curve `ξ(t)` with exact derivatives up to fifth order.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedCurve {
    derivs: [Expr; 6],
    t_range: (f64, f64),
}

impl SeedCurve {
    pub fn new(xi: Expr, t_min: f64, t_max: f64) -> Result<Self, SolverError> {
        if let Some(v) = xi.free_vars().into_iter().find(|&v| v != Var::T) {
            return Err(SolverError::SeedVariable(v));
        }
        if !(t_min.is_finite() && t_max.is_finite() && t_min < t_max) {
            return Err(SolverError::InvalidRange {
                lo: t_min,
                hi: t_max,
            });
        }
        let mut derivs: [Expr; 6] = std::array::from_fn(|_| Expr::zero());
        derivs[0] = xi;
        for k in 1..6 {
            derivs[k] = derivs[k - 1].diff(Var::T);
        }
        Ok(Self {
            derivs,
            t_range: (t_min, t_max),
        })
    }

    pub fn parse(src: &str, t_min: f64, t_max: f64) -> Result<Self, SolverError> {
        Self::new(symexpr::parse(src)?, t_min, t_max)
    }

    pub fn xi(&self) -> &Expr {
        &self.derivs[0]
    }

    /// `ξ⁽ᵏ⁾` for `k <= 5`.
    pub fn derivative(&self, k: usize) -> &Expr {
        &self.derivs[k]
    }

    pub fn t_range(&self) -> (f64, f64) {
        self.t_range
    }

    pub fn eval(&self, k: usize, t: f64) -> Result<f64, EvalError> {
        self.derivs[k].eval(&EvalPoint::new().with(Var::T, t))
    }
}

/// Cubic Hermite interpolant of `μ` on a uniform node set.
#[derive(Clone, Debug, PartialEq)]
pub struct MuSolution {
    nodes: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    step: f64,
}

impl MuSolution {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn range(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    fn locate(&self, t: f64) -> Result<(usize, f64, f64), SolverError> {
        let (lo, hi) = self.range();
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(SolverError::OutOfRange { t, lo, hi });
        }
        let k = (((t - lo) / self.step).floor().max(0.0) as usize).min(self.nodes.len() - 2);
        let h = self.nodes[k + 1] - self.nodes[k];
        Ok((k, (t - self.nodes[k]) / h, h))
    }

    pub fn eval(&self, t: f64) -> Result<f64, SolverError> {
        let (k, u, h) = self.locate(t)?;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        Ok(h00 * self.values[k]
            + h10 * h * self.slopes[k]
            + h01 * self.values[k + 1]
            + h11 * h * self.slopes[k + 1])
    }

    /// Derivative of the interpolant.
    pub fn eval_slope(&self, t: f64) -> Result<f64, SolverError> {
        let (k, u, h) = self.locate(t)?;
        let u2 = u * u;
        let d00 = (6.0 * u2 - 6.0 * u) / h;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = (-6.0 * u2 + 6.0 * u) / h;
        let d11 = 3.0 * u2 - 2.0 * u;
        Ok(d00 * self.values[k]
            + d10 * self.slopes[k]
            + d01 * self.values[k + 1]
            + d11 * self.slopes[k + 1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuOptions {
    pub step: f64,
    /// Fiber coordinate at which the base-function right-hand side is evaluated.
    pub x0_ref: f64,
    /// Extra integration range on both sides of the seed range, so that
    /// finite-difference stencils near the edges stay inside it.
    pub margin: f64,
    /// Chart inversion settings used for every lift.
    pub newton: NewtonOptions,
}

impl Default for MuOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            x0_ref: 1.0,
            margin: 0.05,
            newton: NewtonOptions::default(),
        }
    }
}

/// Reduced coordinates of the leaf point over `(s, t)` carrying `μ`.
pub fn reduced_target(
    mode: Mode,
    seed: &SeedCurve,
    s: f64,
    t: f64,
    mu: f64,
) -> Result<ReducedPoint, EvalError> {
    let xi = seed.eval(0, t)?;
    let dxi = seed.eval(1, t)?;
    Ok(match mode {
        Mode::Generic => ReducedPoint::new(s, -dxi, xi, mu, t),
        Mode::NonGeneric => ReducedPoint::new(s, dxi, mu, xi, t),
    })
}

/// `dμ/dt` expressed through the lifted jet point.
fn mu_rhs_at(sys: &AlphaSystem, mode: Mode, pt: &JetPoint) -> Result<f64, EvalError> {
    let ep = pt.eval_point();
    Ok(match mode {
        Mode::Generic => sys.alpha().eval(&ep)?,
        Mode::NonGeneric => -sys.beta().eval(&ep)?,
    })
}

fn lift_with_fallback(
    sys: &AlphaSystem,
    mode: Mode,
    target: &ReducedPoint,
    guess: &JetPoint,
    newton: &NewtonOptions,
) -> Result<JetPoint, ReductionError> {
    phi_inverse_with(sys, mode, target, guess, newton).or_else(|e| {
        let fresh = default_guess(target);
        if fresh == *guess {
            Err(e)
        } else {
            phi_inverse_with(sys, mode, target, &fresh, newton)
        }
    })
}

struct Rhs<'a> {
    sys: &'a AlphaSystem,
    mode: Mode,
    seed: &'a SeedCurve,
    x0: f64,
    newton: NewtonOptions,
    guess: Option<JetPoint>,
}

impl Rhs<'_> {
    fn eval(&mut self, t: f64, mu: f64) -> Result<f64, ReductionError> {
        let target = reduced_target(self.mode, self.seed, self.x0, t, mu)?;
        let guess = self.guess.unwrap_or_else(|| default_guess(&target));
        let pt = lift_with_fallback(self.sys, self.mode, &target, &guess, &self.newton)?;
        self.guess = Some(pt);
        Ok(mu_rhs_at(self.sys, self.mode, &pt)?)
    }
}

/// Classical fixed-step RK4 for `μ` from `(t0, mu0)` over the seed range
/// (widened by `opts.margin`). Generic systems solve `μ' = ᾱ(x0, −ξ', ξ, μ, t)`,
/// non-generic ones `μ' = −β̄(x0, ξ', μ, ξ, t)`, with `x0 = opts.x0_ref`.
pub fn integrate_mu(
    sys: &AlphaSystem,
    mode: Mode,
    seed: &SeedCurve,
    t0: f64,
    mu0: f64,
    opts: &MuOptions,
) -> Result<MuSolution, SolverError> {
    let step = opts.step;
    if !(step > 0.0 && step.is_finite()) {
        return Err(SolverError::NonPositiveStep(step));
    }
    let (t_min, t_max) = seed.t_range();
    let lo = t_min.min(t0) - opts.margin;
    let hi = t_max.max(t0) + opts.margin;
    let k_lo = ((lo - t0) / step).floor() as i64;
    let k_hi = ((hi - t0) / step).ceil() as i64;
    let node = |k: i64| t0 + k as f64 * step;

    let mut rhs = Rhs {
        sys,
        mode,
        seed,
        x0: opts.x0_ref,
        newton: opts.newton,
        guess: None,
    };
    let wrap = |t: f64, last: f64| {
        move |source| SolverError::Rhs {
            t,
            last_valid_t: last,
            source,
        }
    };
    let f0 = rhs.eval(t0, mu0).map_err(wrap(t0, t0))?;
    check_base_function(sys, mode, seed, t0, mu0, opts, f0)?;
    let start_guess = rhs.guess;

    let mut march = |dir: i64, count: i64| -> Result<Vec<(f64, f64, f64)>, SolverError> {
        rhs.guess = start_guess;
        let mut out = Vec::with_capacity(count as usize);
        let (mut t, mut mu, mut slope) = (t0, mu0, f0);
        for k in 1..=count {
            let t_next = node(dir * k);
            let h = t_next - t;
            let k1 = slope;
            let k2 = rhs
                .eval(t + 0.5 * h, mu + 0.5 * h * k1)
                .map_err(wrap(t + 0.5 * h, t))?;
            let k3 = rhs
                .eval(t + 0.5 * h, mu + 0.5 * h * k2)
                .map_err(wrap(t + 0.5 * h, t))?;
            let k4 = rhs.eval(t_next, mu + h * k3).map_err(wrap(t_next, t))?;
            mu += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t = t_next;
            slope = rhs.eval(t, mu).map_err(wrap(t, t))?;
            out.push((t, mu, slope));
        }
        Ok(out)
    };
    let backward = march(-1, -k_lo)?;
    let forward = march(1, k_hi)?;

    let n = backward.len() + 1 + forward.len();
    let (mut nodes, mut values, mut slopes) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (t, m, d) in backward
        .into_iter()
        .rev()
        .chain(std::iter::once((t0, mu0, f0)))
        .chain(forward)
    {
        nodes.push(t);
        values.push(m);
        slopes.push(d);
    }
    Ok(MuSolution {
        nodes,
        values,
        slopes,
        step,
    })
}

/// The right-hand side must not depend on the fiber coordinate; checked
/// once by a central difference at the initial point.
fn check_base_function(
    sys: &AlphaSystem,
    mode: Mode,
    seed: &SeedCurve,
    t0: f64,
    mu0: f64,
    opts: &MuOptions,
    f0: f64,
) -> Result<(), SolverError> {
    let x0 = opts.x0_ref;
    let h = 1e-5;
    let at = |x: f64| -> Result<f64, SolverError> {
        let mut rhs = Rhs {
            sys,
            mode,
            seed,
            x0: x,
            newton: opts.newton,
            guess: None,
        };
        rhs.eval(t0, mu0).map_err(|source| SolverError::Rhs {
            t: t0,
            last_valid_t: t0,
            source,
        })
    };
    let derivative = (at(x0 + h)? - at(x0 - h)?) / (2.0 * h);
    if derivative.abs() > 1e-6 * (1.0 + f0.abs()) {
        return Err(SolverError::NotBaseFunction { derivative });
    }
    Ok(())
}

/// Everything needed to lift arbitrary `(s, t)` to the jet space.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionContext {
    pub sys: AlphaSystem,
    pub mode: Mode,
    pub seed: SeedCurve,
    pub mu: MuSolution,
    pub newton: NewtonOptions,
}

impl SolutionContext {
    pub fn new(sys: AlphaSystem, mode: Mode, seed: SeedCurve, mu: MuSolution) -> Self {
        Self {
            sys,
            mode,
            seed,
            mu,
            newton: NewtonOptions::default(),
        }
    }

    pub fn with_newton(mut self, newton: NewtonOptions) -> Self {
        self.newton = newton;
        self
    }

    pub fn target(&self, s: f64, t: f64) -> Result<ReducedPoint, SolverError> {
        let mu = self.mu.eval(t)?;
        Ok(reduced_target(self.mode, &self.seed, s, t, mu)?)
    }

    /// Jet point over `(s, t)`; `guess` seeds Newton's method.
    pub fn lift(&self, s: f64, t: f64, guess: Option<&JetPoint>) -> Result<JetPoint, SolverError> {
        let target = self.target(s, t)?;
        let guess = guess.copied().unwrap_or_else(|| default_guess(&target));
        Ok(lift_with_fallback(
            &self.sys,
            self.mode,
            &target,
            &guess,
            &self.newton,
        )?)
    }

    /// Tangent vectors `∂J/∂s`, `∂J/∂t` of the jet surface at `pt`, obtained by
    /// solving `dΦ · v = d(target)` with exact seed derivatives.
    pub fn tangent_lift(&self, t: f64, pt: &JetPoint) -> Result<[[f64; 5]; 2], SolverError> {
        let (_, d) = self.sys.eval_first(pt)?;
        let ddxi = self.seed.eval(2, t)?;
        let dxi = self.seed.eval(1, t)?;
        let dmu = mu_rhs_at(&self.sys, self.mode, pt)?;
        let dt_target = match self.mode {
            Mode::Generic => [0.0, -ddxi, dxi, dmu, 1.0],
            Mode::NonGeneric => [0.0, ddxi, dmu, dxi, 1.0],
        };
        let row1 = match self.mode {
            Mode::Generic => {
                let a = self.sys.alpha().eval(&pt.eval_point())?;
                [
                    a + pt.x * d[0],
                    1.0 + pt.x * d[1],
                    pt.x * d[2],
                    pt.x * d[3],
                    pt.x * d[4],
                ]
            }
            Mode::NonGeneric => d,
        };
        let solve = |rhs: [f64; 5]| -> [f64; 5] {
            let (dx, dp, dq) = (rhs[0], rhs[3], rhs[4]);
            let b1 = rhs[1] - row1[0] * dx - row1[3] * dp - row1[4] * dq;
            let b2 = rhs[2] + pt.p * dx + pt.x * dp + pt.y * dq;
            // [row1_y row1_z; -q 1] (dy, dz) = (b1, b2)
            let det = row1[1] + pt.q * row1[2];
            let dy = (b1 - row1[2] * b2) / det;
            let dz = b2 + pt.q * dy;
            [dx, dy, dz, dp, dq]
        };
        Ok([solve([1.0, 0.0, 0.0, 0.0, 0.0]), solve(dt_target)])
    }

    /// Front tangents `(∂sF, ∂tF)` from the closed-form expressions.
    pub fn closed_form_tangents(
        &self,
        t: f64,
        pt: &JetPoint,
    ) -> Result<([f64; 3], [f64; 3]), SolverError> {
        let ep = pt.eval_point();
        let ddxi = self.seed.eval(2, t)?;
        let (p, q, x) = (pt.p, pt.q, pt.x);
        Ok(match self.mode {
            Mode::Generic => {
                let a = self.sys.alpha().eval(&ep)?;
                let rho = self.sys.rho().eval(&ep)?;
                let lam = ddxi + self.sys.k().eval(&ep)?;
                ([1.0, -a, p - a * q], [0.0, -rho * lam, -rho * q * lam])
            }
            Mode::NonGeneric => {
                let w = x
                    * (self.sys.partial(Var::X).eval(&ep)?
                        + p * self.sys.partial(Var::Z).eval(&ep)?);
                let lam = self.sys.l().eval(&ep)? - ddxi;
                ([1.0, w, p + q * w], [0.0, x * lam, q * x * lam])
            }
        })
    }
}

/// Data-only view of a lifted grid: parameters and jet points, `None` at holes.
/// Nodes are stored grid-major: `t` outer, `s` inner.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceGrid {
    pub s_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub points: Vec<Option<JetPoint>>,
}

impl SurfaceGrid {
    pub fn new(s_grid: Vec<f64>, t_grid: Vec<f64>, points: Vec<Option<JetPoint>>) -> Self {
        assert_eq!(
            points.len(),
            s_grid.len() * t_grid.len(),
            "grid size mismatch"
        );
        Self {
            s_grid,
            t_grid,
            points,
        }
    }

    pub fn ns(&self) -> usize {
        self.s_grid.len()
    }

    pub fn nt(&self) -> usize {
        self.t_grid.len()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.ns() + i
    }

    pub fn point(&self, i: usize, j: usize) -> Option<&JetPoint> {
        self.points[self.index(i, j)].as_ref()
    }

    pub fn front(&self, i: usize, j: usize) -> Option<[f64; 3]> {
        self.point(i, j).map(|p| [p.x, p.y, p.z])
    }

    pub fn hole_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_none()).count()
    }

    pub fn valid_count(&self) -> usize {
        self.points.len() - self.hole_count()
    }

    /// `true` where the lift failed.
    pub fn hole_mask(&self) -> Vec<bool> {
        self.points.iter().map(Option::is_none).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegralSurface {
    pub ctx: SolutionContext,
    pub grid: SurfaceGrid,
    /// Closed-form front tangents per node, `None` at holes.
    pub tangents: Vec<Option<([f64; 3], [f64; 3])>>,
}

impl IntegralSurface {
    pub fn mode(&self) -> Mode {
        self.ctx.mode
    }

    pub fn s_grid(&self) -> &[f64] {
        &self.grid.s_grid
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.grid.t_grid
    }

    pub fn point(&self, i: usize, j: usize) -> Option<&JetPoint> {
        self.grid.point(i, j)
    }

    pub fn front(&self, i: usize, j: usize) -> Option<[f64; 3]> {
        self.grid.front(i, j)
    }

    /// Jet point at the grid node closest to `(s, t)`, if that node is valid.
    pub fn nearest_point(&self, s: f64, t: f64) -> Option<JetPoint> {
        let nearest = |grid: &[f64], v: f64| {
            (0..grid.len())
                .min_by(|&a, &b| (grid[a] - v).abs().total_cmp(&(grid[b] - v).abs()))
                .unwrap_or(0)
        };
        let i = nearest(&self.grid.s_grid, s);
        let j = nearest(&self.grid.t_grid, t);
        self.grid.point(i, j).copied()
    }

    /// Lift of an arbitrary parameter pair, warm-started from the nearest node.
    pub fn lift(&self, s: f64, t: f64) -> Result<JetPoint, SolverError> {
        let guess = self.nearest_point(s, t);
        self.ctx.lift(s, t, guess.as_ref())
    }
}

/// Lifts every `(s_i, t_j)` through the chart inverse. Rows of fixed `t`
/// are solved in order, each node warm-started from its left neighbour or
/// the node below; Newton failures leave holes.
pub fn build_surface(
    ctx: SolutionContext,
    s_grid: Vec<f64>,
    t_grid: Vec<f64>,
) -> Result<IntegralSurface, SolverError> {
    if s_grid.is_empty() || t_grid.is_empty() {
        return Err(SolverError::EmptyGrid);
    }
    for &t in &t_grid {
        ctx.mu.eval(t)?;
    }
    let (ns, nt) = (s_grid.len(), t_grid.len());
    let mut points: Vec<Option<JetPoint>> = Vec::with_capacity(ns * nt);
    for (j, &t) in t_grid.iter().enumerate() {
        for (i, &s) in s_grid.iter().enumerate() {
            let left = if i > 0 { points[j * ns + i - 1] } else { None };
            let below = if j > 0 {
                points[(j - 1) * ns + i]
            } else {
                None
            };
            let guess = left.or(below);
            points.push(ctx.lift(s, t, guess.as_ref()).ok());
        }
    }
    let tangents = points
        .iter()
        .enumerate()
        .map(|(k, p)| p.and_then(|pt| ctx.closed_form_tangents(t_grid[k / ns], &pt).ok()))
        .collect();
    Ok(IntegralSurface {
        ctx,
        grid: SurfaceGrid::new(s_grid, t_grid, points),
        tangents,
    })
}

/// Integrates `μ` and builds the surface on uniform grids in one call.
#[allow(clippy::too_many_arguments)]
pub fn solve_surface(
    sys: &AlphaSystem,
    mode: Mode,
    seed: &SeedCurve,
    t0: f64,
    mu0: f64,
    opts: &MuOptions,
    s_range: (f64, f64),
    t_range: (f64, f64),
    n: (usize, usize),
) -> Result<IntegralSurface, SolverError> {
    let mu = integrate_mu(sys, mode, seed, t0, mu0, opts)?;
    let ctx = SolutionContext::new(sys.clone(), mode, seed.clone(), mu).with_newton(opts.newton);
    build_surface(
        ctx,
        linspace(s_range.0, s_range.1, n.0),
        linspace(t_range.0, t_range.1, n.1),
    )
}

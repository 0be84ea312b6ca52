//! Singular set of the front map and its classification through the
//! singularity identifier `λ̂` and its derivatives along `η = ∂/∂t`.

use std::fmt;

use crate::model::JetPoint;
use crate::reduction::Mode;
use crate::solver::{IntegralSurface, SolutionContext, SolverError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SingularityClass {
    CuspidalEdge,
    Swallowtail,
    Butterfly,
    Beaks,
    Unclassified,
}

impl SingularityClass {
    pub const ALL: [SingularityClass; 5] = [
        Self::CuspidalEdge,
        Self::Swallowtail,
        Self::Butterfly,
        Self::Beaks,
        Self::Unclassified,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SingularityClass::CuspidalEdge => "CuspidalEdge",
            SingularityClass::Swallowtail => "Swallowtail",
            SingularityClass::Butterfly => "Butterfly",
            SingularityClass::Beaks => "Beaks",
            SingularityClass::Unclassified => "Unclassified",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for SingularityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a point of the singular set was found.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointKind {
    /// Zero of `λ̂` on a grid edge.
    Curve,
    /// Common zero of `λ̂` and `λ̂_t`.
    Special,
    /// Common zero of `λ̂` and `∇λ̂`.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularityOptions {
    /// Relative threshold for "vanishes"; multiplied by `max(1, max|λ̂|)`.
    pub eps_zero: f64,
    /// Target `|λ̂|` for located points.
    pub locate_tol: f64,
    /// Finite-difference steps for first, second and third derivatives.
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    /// Singular-value cut for the rank test of the front Jacobian.
    pub rank_tol: f64,
    /// Bound on `|λ̂|` at an accepted degenerate point.
    pub degenerate_tol: f64,
    pub max_newton: usize,
}

impl Default for SingularityOptions {
    fn default() -> Self {
        Self {
            eps_zero: 1e-6,
            locate_tol: 1e-10,
            h1: 1e-4,
            h2: 1e-3,
            h3: 1e-2,
            rank_tol: 1e-6,
            degenerate_tol: 1e-8,
            max_newton: 100,
        }
    }
}

/// Partial derivatives of `λ̂` at one parameter point.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Derivatives {
    pub s: f64,
    pub t: f64,
    pub ss: f64,
    pub st: f64,
    pub tt: f64,
    pub ttt: f64,
}

impl Derivatives {
    pub fn det_hessian(&self) -> f64 {
        self.ss * self.tt - self.st * self.st
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub derivatives: Derivatives,
    pub det_hessian: f64,
    /// Singular values of the 3×2 front Jacobian.
    pub front_sigma: (f64, f64),
    /// Singular values of the 5×2 jet-surface Jacobian.
    pub jet_sigma: (f64, f64),
    /// Absolute threshold used for every "vanishes" decision.
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degeneracy {
    NonDegenerate,
    Degenerate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub class: SingularityClass,
    pub degenerate: bool,
    pub diagnostics: Option<Diagnostics>,
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingularPoint {
    pub s: f64,
    pub t: f64,
    pub lambda_hat: f64,
    pub kind: PointKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifiedPoint {
    pub s: f64,
    pub t: f64,
    pub lambda_hat: f64,
    pub kind: PointKind,
    pub grad_lambda: (f64, f64),
    pub degenerate: bool,
    pub class: SingularityClass,
    pub diagnostics: Option<Diagnostics>,
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingularityReport {
    pub points: Vec<ClassifiedPoint>,
    pub threshold: f64,
}

impl SingularityReport {
    /// Point closest to `(s, t)`, if any.
    pub fn nearest(&self, s: f64, t: f64) -> Option<&ClassifiedPoint> {
        self.points
            .iter()
            .min_by(|a, b| dist2(a.s, a.t, s, t).total_cmp(&dist2(b.s, b.t, s, t)))
    }

    pub fn count(&self, class: SingularityClass) -> usize {
        self.points.iter().filter(|p| p.class == class).count()
    }
}

fn dist2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    (a - c).powi(2) + (b - d).powi(2)
}

/// `λ̂` at a lifted point: `ξ'' + K` (generic) or `L − ξ''` (non-generic).
pub fn lambda_hat_at(ctx: &SolutionContext, t: f64, pt: &JetPoint) -> Result<f64, SolverError> {
    let ddxi = ctx.seed.eval(2, t)?;
    let ep = pt.eval_point();
    Ok(match ctx.mode {
        Mode::Generic => ddxi + ctx.sys.k().eval(&ep)?,
        Mode::NonGeneric => ctx.sys.l().eval(&ep)? - ddxi,
    })
}

pub fn lambda_hat(surface: &IntegralSurface, s: f64, t: f64) -> Result<f64, SolverError> {
    let pt = surface.lift(s, t)?;
    lambda_hat_at(&surface.ctx, t, &pt)
}

/// `λ̂` at every grid node (grid-major), `None` at holes.
pub fn lambda_grid(surface: &IntegralSurface) -> Vec<Option<f64>> {
    let ns = surface.grid.ns();
    surface
        .grid
        .points
        .iter()
        .enumerate()
        .map(|(k, p)| {
            p.and_then(|pt| lambda_hat_at(&surface.ctx, surface.t_grid()[k / ns], &pt).ok())
        })
        .collect()
}

/// Unit normal `(−p, −q, 1)/√(p² + q² + 1)` of the front.
pub fn unit_normal_at(pt: &JetPoint) -> [f64; 3] {
    let n = (pt.p * pt.p + pt.q * pt.q + 1.0).sqrt();
    [-pt.p / n, -pt.q / n, 1.0 / n]
}

pub fn unit_normal(surface: &IntegralSurface, s: f64, t: f64) -> Result<[f64; 3], SolverError> {
    Ok(unit_normal_at(&surface.lift(s, t)?))
}

/// Singular values `(σ_max, σ_min)` of the matrix with columns `a`, `b`.
pub fn singular_values(a: &[f64], b: &[f64]) -> (f64, f64) {
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    // Lagrange identity keeps the area accurate when the columns are nearly parallel
    let mut area2 = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            area2 += (a[i] * b[j] - a[j] * b[i]).powi(2);
        }
    }
    let lmax = 0.5 * (aa + bb) + (0.25 * (aa - bb).powi(2) + ab * ab).sqrt();
    let smax = lmax.sqrt();
    let smin = if smax > 0.0 { area2.sqrt() / smax } else { 0.0 };
    (smax, smin)
}

const D1: [(f64, f64); 4] = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
const D2: [(f64, f64); 5] = [
    (-2.0, -1.0),
    (-1.0, 16.0),
    (0.0, -30.0),
    (1.0, 16.0),
    (2.0, -1.0),
];
const D3: [(f64, f64); 6] = [
    (-3.0, 1.0),
    (-2.0, -8.0),
    (-1.0, 13.0),
    (1.0, -13.0),
    (2.0, 8.0),
    (3.0, -1.0),
];

/// Cached analysis state for one surface: grid values of `λ̂` and the
/// scale-normalized zero threshold.
pub struct Analyzer<'a> {
    surface: &'a IntegralSurface,
    opts: SingularityOptions,
    grid: Vec<Option<f64>>,
    threshold: f64,
}

impl<'a> Analyzer<'a> {
    pub fn new(surface: &'a IntegralSurface, opts: SingularityOptions) -> Self {
        let grid = lambda_grid(surface);
        let scale = grid.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        Self {
            surface,
            opts,
            grid,
            threshold: opts.eps_zero * scale,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn grid_values(&self) -> &[Option<f64>] {
        &self.grid
    }

    pub fn lambda(&self, s: f64, t: f64) -> Result<f64, SolverError> {
        lambda_hat(self.surface, s, t)
    }

    fn line<const N: usize>(
        &self,
        s: f64,
        t: f64,
        ds: f64,
        dt: f64,
        w: &[(f64, f64); N],
    ) -> Result<f64, SolverError> {
        let mut acc = 0.0;
        for &(k, c) in w {
            acc += c * self.lambda(s + k * ds, t + k * dt)?;
        }
        Ok(acc)
    }

    pub fn lambda_s(&self, s: f64, t: f64, h: f64) -> Result<f64, SolverError> {
        Ok(self.line(s, t, h, 0.0, &D1)? / (12.0 * h))
    }

    pub fn lambda_t(&self, s: f64, t: f64, h: f64) -> Result<f64, SolverError> {
        Ok(self.line(s, t, 0.0, h, &D1)? / (12.0 * h))
    }

    pub fn derivatives(&self, s: f64, t: f64) -> Result<Derivatives, SolverError> {
        let (h1, h2, h3) = (self.opts.h1, self.opts.h2, self.opts.h3);
        let mut st = 0.0;
        for &(a, wa) in &D1 {
            for &(b, wb) in &D1 {
                st += wa * wb * self.lambda(s + a * h2, t + b * h2)?;
            }
        }
        Ok(Derivatives {
            s: self.lambda_s(s, t, h1)?,
            t: self.lambda_t(s, t, h1)?,
            ss: self.line(s, t, h2, 0.0, &D2)? / (12.0 * h2 * h2),
            st: st / (144.0 * h2 * h2),
            tt: self.line(s, t, 0.0, h2, &D2)? / (12.0 * h2 * h2),
            ttt: self.line(s, t, 0.0, h3, &D3)? / (8.0 * h3 * h3 * h3),
        })
    }

    fn vanishes(&self, v: f64) -> bool {
        v.abs() <= self.threshold
    }

    pub fn degeneracy(&self, s: f64, t: f64) -> Result<Degeneracy, SolverError> {
        let h = self.opts.h1;
        let gs = self.lambda_s(s, t, h)?;
        let gt = self.lambda_t(s, t, h)?;
        Ok(if gs.abs().max(gt.abs()) > self.threshold {
            Degeneracy::NonDegenerate
        } else {
            Degeneracy::Degenerate
        })
    }

    pub fn diagnostics(&self, s: f64, t: f64) -> Result<Diagnostics, SolverError> {
        let d = self.derivatives(s, t)?;
        let pt = self.surface.lift(s, t)?;
        let (fs, ft) = self.surface.ctx.closed_form_tangents(t, &pt)?;
        let [js, jt] = self.surface.ctx.tangent_lift(t, &pt)?;
        Ok(Diagnostics {
            derivatives: d,
            det_hessian: d.det_hessian(),
            front_sigma: singular_values(&fs, &ft),
            jet_sigma: singular_values(&js, &jt),
            threshold: self.threshold,
        })
    }

    /// Applies the ordered criteria with `η = ∂/∂t`.
    pub fn classify(&self, s: f64, t: f64) -> Classification {
        let diag = match self.diagnostics(s, t) {
            Ok(d) => d,
            Err(e) => {
                return Classification {
                    class: SingularityClass::Unclassified,
                    degenerate: false,
                    diagnostics: None,
                    reason: Some(format!("evaluation failed: {e}")),
                }
            }
        };
        let d = diag.derivatives;
        let z = |v: f64| self.vanishes(v);
        let degenerate = z(d.s) && z(d.t);
        let (smax, smin) = diag.front_sigma;
        let rank_one = smin < self.opts.rank_tol && smax > self.opts.rank_tol;
        let class = if !degenerate && !z(d.t) {
            SingularityClass::CuspidalEdge
        } else if !degenerate && !z(d.s) && z(d.t) && !z(d.tt) {
            SingularityClass::Swallowtail
        } else if !degenerate && !z(d.s) && z(d.t) && z(d.tt) && !z(d.ttt) {
            SingularityClass::Butterfly
        } else if degenerate && diag.det_hessian < -self.threshold && !z(d.tt) && rank_one {
            SingularityClass::Beaks
        } else {
            SingularityClass::Unclassified
        };
        let reason = (class == SingularityClass::Unclassified).then(|| {
            if degenerate {
                format!(
                    "degenerate point fails the beaks conditions (det H = {:e}, lambda_tt = {:e}, sigma = ({:e}, {:e}))",
                    diag.det_hessian, d.tt, smax, smin
                )
            } else {
                format!(
                    "no criterion holds (lambda_s = {:e}, lambda_t = {:e}, lambda_tt = {:e}, lambda_ttt = {:e})",
                    d.s, d.t, d.tt, d.ttt
                )
            }
        });
        Classification {
            class,
            degenerate,
            diagnostics: Some(diag),
            reason,
        }
    }

    fn in_box(&self, s: f64, t: f64) -> bool {
        let (sg, tg) = (self.surface.s_grid(), self.surface.t_grid());
        let (s0, s1) = (sg[0].min(sg[sg.len() - 1]), sg[0].max(sg[sg.len() - 1]));
        let (t0, t1) = (tg[0].min(tg[tg.len() - 1]), tg[0].max(tg[tg.len() - 1]));
        s >= s0 && s <= s1 && t >= t0 && t <= t1
    }

    fn spacing(&self) -> (f64, f64) {
        let sp = |g: &[f64]| {
            if g.len() > 1 {
                (g[g.len() - 1] - g[0]).abs() / (g.len() - 1) as f64
            } else {
                1.0
            }
        };
        (sp(self.surface.s_grid()), sp(self.surface.t_grid()))
    }

    /// Bisection of `λ̂` along the segment between two nodes of opposite sign.
    fn bisect(&self, a: (f64, f64), b: (f64, f64), fa: f64) -> Option<SingularPoint> {
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut flo = fa;
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            let (s, t) = (a.0 + m * (b.0 - a.0), a.1 + m * (b.1 - a.1));
            let fm = self.lambda(s, t).ok()?;
            if fm.abs() < self.opts.locate_tol {
                return Some(SingularPoint {
                    s,
                    t,
                    lambda_hat: fm,
                    kind: PointKind::Curve,
                });
            }
            if (fm > 0.0) == (flo > 0.0) {
                lo = m;
                flo = fm;
            } else {
                hi = m;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        None
    }

    fn curve_points(&self) -> Vec<SingularPoint> {
        let g = &self.surface.grid;
        let (ns, nt) = (g.ns(), g.nt());
        let tol = self.opts.locate_tol;
        let node = |i: usize, j: usize| (g.s_grid[i], g.t_grid[j]);
        let mut out = Vec::new();
        for j in 0..nt {
            for i in 0..ns {
                let Some(v) = self.grid[g.index(i, j)] else {
                    continue;
                };
                if v.abs() < tol {
                    let (s, t) = node(i, j);
                    out.push(SingularPoint {
                        s,
                        t,
                        lambda_hat: v,
                        kind: PointKind::Curve,
                    });
                    continue;
                }
                for (ii, jj) in [(i + 1, j), (i, j + 1)] {
                    if ii >= ns || jj >= nt {
                        continue;
                    }
                    let Some(w) = self.grid[g.index(ii, jj)] else {
                        continue;
                    };
                    if w.abs() >= tol && (v > 0.0) != (w > 0.0) {
                        out.extend(self.bisect(node(i, j), node(ii, jj), v));
                    }
                }
            }
        }
        out
    }

    /// 2-D Newton on `f(s, t) = 0` with a caller-supplied Jacobian.
    fn newton2<F, J>(
        &self,
        start: (f64, f64),
        f: F,
        jac: J,
        done: impl Fn(&[f64; 2]) -> bool,
    ) -> Option<(f64, f64)>
    where
        F: Fn(f64, f64) -> Result<[f64; 2], SolverError>,
        J: Fn(f64, f64) -> Result<[[f64; 2]; 2], SolverError>,
    {
        let (ds, dt) = self.spacing();
        let reach = 3.0 * ds.max(dt);
        let (mut s, mut t) = start;
        for _ in 0..self.opts.max_newton {
            let r = f(s, t).ok()?;
            if done(&r) {
                return Some((s, t));
            }
            let m = jac(s, t).ok()?;
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            if det.abs() <= 1e-12 * scale * scale || !det.is_finite() {
                return None;
            }
            let step_s = (r[0] * m[1][1] - m[0][1] * r[1]) / det;
            let step_t = (m[0][0] * r[1] - m[1][0] * r[0]) / det;
            s -= step_s;
            t -= step_t;
            if !self.in_box(s, t) || dist2(s, t, start.0, start.1).sqrt() > reach {
                return None;
            }
            if step_s.abs().max(step_t.abs()) < 1e-14 {
                let r = f(s, t).ok()?;
                return done(&r).then_some((s, t));
            }
        }
        let r = f(s, t).ok()?;
        done(&r).then_some((s, t))
    }

    fn degenerate_points(&self) -> Vec<SingularPoint> {
        let g = &self.surface.grid;
        let (ns, nt) = (g.ns(), g.nt());
        if ns < 3 || nt < 3 {
            return Vec::new();
        }
        let (ds, dt) = self.spacing();
        let val = |i: usize, j: usize| self.grid[g.index(i, j)];
        let grad = |i: usize, j: usize| -> Option<f64> {
            if i == 0 || j == 0 || i + 1 >= ns || j + 1 >= nt {
                return None;
            }
            let gs = (val(i + 1, j)? - val(i - 1, j)?) / (2.0 * ds);
            let gt = (val(i, j + 1)? - val(i, j - 1)?) / (2.0 * dt);
            Some(gs.hypot(gt))
        };
        let grads: Vec<Option<f64>> = (0..nt)
            .flat_map(|j| (0..ns).map(move |i| (i, j)))
            .map(|(i, j)| grad(i, j))
            .collect();
        let (h1, h2) = (self.opts.h1, self.opts.h2);
        let mut out = Vec::new();
        for j in 1..nt - 1 {
            for i in 1..ns - 1 {
                let Some(c) = grads[g.index(i, j)] else {
                    continue;
                };
                let mut is_min = true;
                let mut strictly_below_one = false;
                let (mut pos, mut neg) = (false, false);
                for (di, dj) in [
                    (-1i64, -1i64),
                    (0, -1),
                    (1, -1),
                    (-1, 0),
                    (0, 0),
                    (1, 0),
                    (-1, 1),
                    (0, 1),
                    (1, 1),
                ] {
                    let (ii, jj) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    if let Some(v) = val(ii, jj) {
                        pos |= v >= 0.0;
                        neg |= v <= 0.0;
                    }
                    if (di, dj) == (0, 0) {
                        continue;
                    }
                    match grads.get(g.index(ii, jj)).copied().flatten() {
                        Some(n) if n < c => is_min = false,
                        Some(n) if n > c => strictly_below_one = true,
                        _ => {}
                    }
                }
                if !(is_min && strictly_below_one && pos && neg) {
                    continue;
                }
                let start = (g.s_grid[i], g.t_grid[j]);
                let f = |s: f64, t: f64| Ok([self.lambda_s(s, t, h1)?, self.lambda_t(s, t, h1)?]);
                let jac = |s: f64, t: f64| {
                    let d = self.derivatives_second(s, t, h2)?;
                    Ok([[d.0, d.1], [d.1, d.2]])
                };
                let thr = 1e-3 * self.threshold;
                if let Some((s, t)) =
                    self.newton2(start, f, jac, |r| r[0].abs().max(r[1].abs()) <= thr)
                {
                    let Ok(v) = self.lambda(s, t) else { continue };
                    if v.abs() <= self.opts.degenerate_tol {
                        out.push(SingularPoint {
                            s,
                            t,
                            lambda_hat: v,
                            kind: PointKind::Degenerate,
                        });
                    }
                }
            }
        }
        out
    }

    /// `(λ̂_ss, λ̂_st, λ̂_tt)` at step `h`.
    fn derivatives_second(&self, s: f64, t: f64, h: f64) -> Result<(f64, f64, f64), SolverError> {
        let mut st = 0.0;
        for &(a, wa) in &D1 {
            for &(b, wb) in &D1 {
                st += wa * wb * self.lambda(s + a * h, t + b * h)?;
            }
        }
        Ok((
            self.line(s, t, h, 0.0, &D2)? / (12.0 * h * h),
            st / (144.0 * h * h),
            self.line(s, t, 0.0, h, &D2)? / (12.0 * h * h),
        ))
    }

    fn special_points(&self, curve: &[SingularPoint]) -> Vec<SingularPoint> {
        let (ds, dt) = self.spacing();
        let radius = 1.5 * ds.hypot(dt);
        let h1 = self.opts.h1;
        let lt: Vec<Option<f64>> = curve
            .iter()
            .map(|p| self.lambda_t(p.s, p.t, h1).ok().map(f64::abs))
            .collect();
        let max_lt = lt.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        let mut out = Vec::new();
        for (k, p) in curve.iter().enumerate() {
            let Some(v) = lt[k] else { continue };
            if v > 0.5 * max_lt && v > self.threshold {
                continue;
            }
            let local_min = curve.iter().zip(&lt).all(|(q, w)| {
                dist2(p.s, p.t, q.s, q.t).sqrt() > radius || w.is_none_or(|w| w >= v)
            });
            if !local_min {
                continue;
            }
            let f = |s: f64, t: f64| Ok([self.lambda(s, t)?, self.lambda_t(s, t, h1)?]);
            let jac = |s: f64, t: f64| {
                let (_, st, tt) = self.derivatives_second(s, t, self.opts.h2)?;
                Ok([
                    [self.lambda_s(s, t, h1)?, self.lambda_t(s, t, h1)?],
                    [st, tt],
                ])
            };
            let (tol, thr) = (self.opts.locate_tol, 1e-3 * self.threshold);
            let converged = |r: &[f64; 2]| r[0].abs() < tol && r[1].abs() <= thr;
            let found = self.newton2((p.s, p.t), f, jac, converged).or_else(|| {
                // linear convergence at higher-order zeros of λ̂_t can stall
                // above the tight target; accept the coarser threshold
                let relaxed = |r: &[f64; 2]| r[0].abs() < tol && r[1].abs() <= self.threshold;
                relaxed(&[p.lambda_hat, v]).then_some((p.s, p.t))
            });
            if let Some((s, t)) = found {
                if let Ok(lv) = self.lambda(s, t) {
                    out.push(SingularPoint {
                        s,
                        t,
                        lambda_hat: lv,
                        kind: PointKind::Special,
                    });
                }
            }
        }
        out
    }

    /// Zeros of `λ̂` on the grid box: edge crossings refined by bisection,
    /// degenerate points (`∇λ̂ = 0`) and special points (`λ̂ = λ̂_t = 0`),
    /// deduplicated and sorted by `(t, s)`.
    pub fn singular_set(&self) -> Vec<SingularPoint> {
        let (ds, dt) = self.spacing();
        let mut curve = self.curve_points();
        curve.sort_by(|a, b| (a.t, a.s).partial_cmp(&(b.t, b.s)).unwrap());
        curve.dedup_by(|a, b| dist2(a.s, a.t, b.s, b.t).sqrt() < 1e-9);
        let mut isolated = self.degenerate_points();
        isolated.extend(self.special_points(&curve));
        let merge = 0.5 * ds.min(dt);
        let mut kept: Vec<SingularPoint> = Vec::new();
        for p in isolated {
            match kept
                .iter_mut()
                .find(|q| dist2(p.s, p.t, q.s, q.t).sqrt() < merge)
            {
                Some(q) => {
                    let better = (p.kind == PointKind::Degenerate
                        && q.kind != PointKind::Degenerate)
                        || (p.kind == q.kind && p.lambda_hat.abs() < q.lambda_hat.abs());
                    if better {
                        *q = p;
                    }
                }
                None => kept.push(p),
            }
        }
        let exclusion = ds.max(dt);
        curve.retain(|c| {
            kept.iter()
                .all(|q| dist2(c.s, c.t, q.s, q.t).sqrt() >= exclusion)
        });
        kept.extend(curve);
        kept.sort_by(|a, b| (a.t, a.s).partial_cmp(&(b.t, b.s)).unwrap());
        kept
    }

    pub fn report(&self) -> SingularityReport {
        let points = self
            .singular_set()
            .into_iter()
            .map(|p| {
                let c = self.classify(p.s, p.t);
                let grad = c
                    .diagnostics
                    .map_or((f64::NAN, f64::NAN), |d| (d.derivatives.s, d.derivatives.t));
                ClassifiedPoint {
                    s: p.s,
                    t: p.t,
                    lambda_hat: p.lambda_hat,
                    kind: p.kind,
                    grad_lambda: grad,
                    degenerate: c.degenerate,
                    class: c.class,
                    diagnostics: c.diagnostics,
                    reason: c.reason,
                }
            })
            .collect();
        SingularityReport {
            points,
            threshold: self.threshold,
        }
    }
}

pub fn singular_set(surface: &IntegralSurface, opts: &SingularityOptions) -> Vec<SingularPoint> {
    Analyzer::new(surface, *opts).singular_set()
}

pub fn degeneracy_test(
    surface: &IntegralSurface,
    s: f64,
    t: f64,
    opts: &SingularityOptions,
) -> Result<Degeneracy, SolverError> {
    Analyzer::new(surface, *opts).degeneracy(s, t)
}

pub fn classify_singularity(
    surface: &IntegralSurface,
    s: f64,
    t: f64,
    opts: &SingularityOptions,
) -> Classification {
    Analyzer::new(surface, *opts).classify(s, t)
}

pub fn analyze(surface: &IntegralSurface, opts: &SingularityOptions) -> SingularityReport {
    Analyzer::new(surface, *opts).report()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AlphaSystem;
    use crate::solver::{solve_surface, MuOptions, SeedCurve};

    const LN2: f64 = std::f64::consts::LN_2;

    fn surface(
        alpha: &str,
        mode: Mode,
        xi: &str,
        mu: (f64, f64),
        s: (f64, f64),
        t: (f64, f64),
        n: usize,
    ) -> IntegralSurface {
        let sys = AlphaSystem::parse(alpha).unwrap();
        let seed = SeedCurve::parse(xi, t.0, t.1).unwrap();
        solve_surface(
            &sys,
            mode,
            &seed,
            mu.0,
            mu.1,
            &MuOptions::default(),
            s,
            t,
            (n, n),
        )
        .unwrap()
    }

    fn q_surface(n: i32) -> IntegralSurface {
        surface(
            "q",
            Mode::Generic,
            &format!("t^{n}"),
            (0.0, 0.0),
            (-0.5, 0.5),
            (-0.5, 0.5),
            51,
        )
    }

    fn beaks_surface(n: usize) -> IntegralSurface {
        surface(
            "p + q^2",
            Mode::Generic,
            "(t - log(2))^4",
            (0.0, -1.0),
            (-0.5, 0.5),
            (LN2 - 0.3, LN2 + 0.3),
            n,
        )
    }

    fn nongeneric_surface(n: i32) -> IntegralSurface {
        surface(
            "(q - y)/x",
            Mode::NonGeneric,
            &format!("t^2 + t^{n}"),
            (0.0, 0.0),
            (0.3, 0.8),
            (-0.3, 0.3),
            51,
        )
    }

    #[test]
    fn lambda_matches_closed_forms() {
        for n in [3, 4, 5] {
            let nf = n as f64;
            let q = q_surface(n);
            let ng = nongeneric_surface(n);
            for j in 0..51 {
                for i in 0..51 {
                    let (s, t) = (q.s_grid()[i], q.t_grid()[j]);
                    let got = lambda_hat_at(&q.ctx, t, q.point(i, j).unwrap()).unwrap();
                    assert!((got - (nf * (nf - 1.0) * t.powi(n - 2) + s)).abs() < 1e-8);
                    let (s, t) = (ng.s_grid()[i], ng.t_grid()[j]);
                    let got = lambda_hat_at(&ng.ctx, t, ng.point(i, j).unwrap()).unwrap();
                    assert!((got - (1.0 / s - 2.0 - nf * (nf - 1.0) * t.powi(n - 2))).abs() < 1e-8);
                }
            }
        }
        let b = beaks_surface(31);
        for j in 0..31 {
            for i in 0..31 {
                let (s, t) = (b.s_grid()[i], b.t_grid()[j]);
                let want = 12.0 * (t - LN2).powi(2) + s * (t.exp() - 2.0);
                assert!((lambda_hat(&b, s, t).unwrap() - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn headline_classification() {
        let opts = SingularityOptions::default();
        let expect = [
            (3, SingularityClass::CuspidalEdge),
            (4, SingularityClass::Swallowtail),
            (5, SingularityClass::Butterfly),
        ];
        for (n, class) in expect {
            for (surf, at) in [
                (q_surface(n), (0.0, 0.0)),
                (nongeneric_surface(n), (0.5, 0.0)),
            ] {
                let report = analyze(&surf, &opts);
                let p = report.nearest(at.0, at.1).unwrap();
                assert!(
                    dist2(p.s, p.t, at.0, at.1).sqrt() < 1e-6,
                    "n={n} located at ({}, {})",
                    p.s,
                    p.t
                );
                assert_eq!(p.class, class, "n={n}");
                assert!(p.lambda_hat.abs() < opts.locate_tol);
                assert_eq!(classify_singularity(&surf, at.0, at.1, &opts).class, class);
            }
        }
    }

    #[test]
    fn beaks_point() {
        let surf = beaks_surface(41);
        let opts = SingularityOptions::default();
        assert_eq!(
            degeneracy_test(&surf, 0.0, LN2, &opts).unwrap(),
            Degeneracy::Degenerate
        );
        let report = analyze(&surf, &opts);
        let p = report.nearest(0.0, LN2).unwrap();
        assert_eq!(p.kind, PointKind::Degenerate);
        assert_eq!(p.class, SingularityClass::Beaks);
        assert!(dist2(p.s, p.t, 0.0, LN2).sqrt() < 1e-6);
        let d = p.diagnostics.unwrap();
        assert!((d.det_hessian + 4.0).abs() < 1e-4, "{}", d.det_hessian);
        assert!((d.derivatives.tt - 24.0).abs() < 1e-3);
        assert_eq!(report.count(SingularityClass::Beaks), 1);
    }

    #[test]
    fn degeneracy_examples() {
        let opts = SingularityOptions::default();
        assert_eq!(
            degeneracy_test(&q_surface(3), 0.0, 0.0, &opts).unwrap(),
            Degeneracy::NonDegenerate
        );
        let ng = nongeneric_surface(3);
        let a = Analyzer::new(&ng, opts);
        assert!((a.lambda_s(0.5, 0.0, opts.h1).unwrap() + 4.0).abs() < 1e-8);
        assert_eq!(a.degeneracy(0.5, 0.0).unwrap(), Degeneracy::NonDegenerate);
    }

    #[test]
    fn singular_curve_for_cubic_seed() {
        let surf = q_surface(3);
        let set = singular_set(&surf, &SingularityOptions::default());
        assert!(!set.is_empty());
        for p in &set {
            assert!((p.s + 6.0 * p.t).abs() < 1e-9);
        }
        assert!(set.iter().any(|p| p.s == 0.0 && p.t == 0.0));
        for w in set.windows(2) {
            assert!((w[0].t, w[0].s) <= (w[1].t, w[1].s));
        }
    }

    #[test]
    fn empty_singular_set() {
        let surf = surface(
            "q",
            Mode::Generic,
            "t^3",
            (0.0, 0.0),
            (1.0, 2.0),
            (0.5, 1.0),
            21,
        );
        assert!(singular_set(&surf, &SingularityOptions::default()).is_empty());
    }

    #[test]
    fn classes_are_exclusive_and_singular_values_behave() {
        let opts = SingularityOptions::default();
        for surf in [q_surface(4), nongeneric_surface(5), beaks_surface(31)] {
            let report = analyze(&surf, &opts);
            let thr = report.threshold;
            let z = |v: f64| v.abs() <= thr;
            for p in &report.points {
                let d = p.diagnostics.unwrap();
                let v = d.derivatives;
                let nd = !(z(v.s) && z(v.t));
                let (smax, smin) = d.front_sigma;
                let holds = [
                    nd && !z(v.t),
                    nd && !z(v.s) && z(v.t) && !z(v.tt),
                    nd && !z(v.s) && z(v.t) && z(v.tt) && !z(v.ttt),
                    !nd && d.det_hessian < -thr
                        && !z(v.tt)
                        && smin < opts.rank_tol
                        && smax > opts.rank_tol,
                ];
                assert!(holds.iter().filter(|&&h| h).count() <= 1);
                assert!(p.lambda_hat.abs() < opts.locate_tol.max(opts.degenerate_tol));
                assert!(smin < 1e-6, "front sigma_min {smin}");
                assert!(d.jet_sigma.1 > 1e-3, "jet map lost rank");
            }
        }
    }

    #[test]
    fn fd_step_halving_is_stable() {
        let opts = SingularityOptions::default();
        for surf in [q_surface(4), beaks_surface(21), nongeneric_surface(3)] {
            let a = Analyzer::new(&surf, opts);
            let (sg, tg) = (surf.s_grid(), surf.t_grid());
            for (s, t) in [(sg[5], tg[7]), (sg[12], tg[3]), (sg[9], tg[15])] {
                let full = a.lambda_t(s, t, opts.h1).unwrap();
                let half = a.lambda_t(s, t, 0.5 * opts.h1).unwrap();
                assert!((full - half).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn normals() {
        assert_eq!(
            unit_normal_at(&JetPoint::new(1.0, 2.0, 3.0, 0.0, 0.0)),
            [0.0, 0.0, 1.0]
        );
        let surf = surface(
            "q",
            Mode::Generic,
            "t^3",
            (0.0, 0.0),
            (0.0, 2.0),
            (0.0, 1.5),
            5,
        );
        let n = unit_normal(&surf, 1.0, 1.0).unwrap();
        let want = [-0.5 / 1.5, -1.0 / 1.5, 1.0 / 1.5];
        assert!(n.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-10));
        for surf in [q_surface(3), beaks_surface(11)] {
            for (s, t) in [(0.1, 0.2), (0.0, 0.5), (-0.3, 0.45)] {
                let pt = surf.lift(s, t).unwrap();
                let (a, b) = surf.ctx.closed_form_tangents(t, &pt).unwrap();
                let n = unit_normal_at(&pt);
                let dot = |u: &[f64; 3]| u.iter().zip(&n).map(|(x, y)| x * y).sum::<f64>();
                assert!(dot(&a).abs() < 1e-10 && dot(&b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn singular_value_helper() {
        let (a, b) = singular_values(&[3.0, 0.0, 0.0], &[0.0, 4.0, 0.0]);
        assert!((a - 4.0).abs() < 1e-15 && (b - 3.0).abs() < 1e-15);
        let (a, b) = singular_values(&[1.0, 1.0, 0.0], &[2.0, 2.0, 1e-12]);
        assert!(a > 3.0 && b < 1e-11 && b > 0.0);
    }
}

//! Independent numerical checks of constructed surfaces: residuals of the
//! generating 1-forms on tangents, the graph-patch PDE residual and a
//! finite-difference audit of every cached symbolic derivative.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::model::{AlphaSystem, JetPoint};
use crate::solver::{IntegralSurface, SeedCurve, SolverError, SurfaceGrid};
use crate::symexpr::{EvalError, EvalPoint, Expr, SampleBox, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("surface needs at least 2x2 valid nodes with tangents, found {valid} valid nodes")]
    TooSmall { valid: usize },
    #[error("patch contains {0} holes")]
    Holes(usize),
    #[error("patch is not a graph over (x, y): {0}")]
    NotInjective(String),
    #[error("patch is not structured: {0}")]
    NotStructured(String),
    #[error(
        "patch [{i0}..={i1}] x [{j0}..={j1}] does not fit the grid or has fewer than 3 x 5 nodes"
    )]
    BadPatch {
        i0: usize,
        i1: usize,
        j0: usize,
        j1: usize,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdeResiduals {
    /// `max |z_xx − α z_xy|`
    pub r1: f64,
    /// `max |z_xy − α z_yy|`
    pub r2: f64,
}

impl PdeResiduals {
    pub fn max(&self) -> f64 {
        self.r1.max(self.r2)
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ResidualSummary {
    /// `max |ω₀(T)|` over discrete grid tangents.
    pub max_contact_residual: f64,
    /// `max |Ψ(T)|` over discrete grid tangents.
    pub max_psi_residual: f64,
    pub max_fd_mismatch: f64,
    pub pde_residuals: Option<PdeResiduals>,
    /// Same maxima over the analytic tangents of the lift, when the
    /// construction context is available.
    pub lift_contact_residual: Option<f64>,
    pub lift_psi_residual: Option<f64>,
}

/// Index rectangle `[i0, i1] x [j0, j1]` (inclusive) of a surface grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Patch {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl Patch {
    pub fn full(grid: &SurfaceGrid) -> Self {
        Self {
            i0: 0,
            i1: grid.ns().saturating_sub(1),
            j0: 0,
            j1: grid.nt().saturating_sub(1),
        }
    }
}

/// Central first-derivative weights by half-width: orders 2, 4, 6.
const CENTRAL: [&[f64]; 3] = [
    &[-0.5, 0.0, 0.5],
    &[1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0],
    &[
        -1.0 / 60.0,
        9.0 / 60.0,
        -45.0 / 60.0,
        0.0,
        45.0 / 60.0,
        -9.0 / 60.0,
        1.0 / 60.0,
    ],
];

/// Discrete derivative of the jet coordinates at node `k` along a line of
/// `n` nodes with spacing `h`, using the widest central stencil the line
/// length allows. `None` when the stencil does not fit or touches a hole.
fn line_derivative(
    n: usize,
    k: usize,
    h: f64,
    at: impl Fn(usize) -> Option<JetPoint>,
) -> Option<[f64; 5]> {
    if n == 2 {
        let (a, b) = (at(0)?.to_array(), at(1)?.to_array());
        return Some(std::array::from_fn(|c| (b[c] - a[c]) / h));
    }
    let half = ((n - 1) / 2).min(3);
    let w = CENTRAL[half - 1];
    if k < half || k + half >= n {
        return None;
    }
    let mut d = [0.0; 5];
    for (m, &c) in w.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let v = at(k + m - half)?.to_array();
        for (o, x) in d.iter_mut().zip(v) {
            *o += c * x;
        }
    }
    Some(d.map(|x| x / h))
}

fn spacing(g: &[f64]) -> f64 {
    if g.len() < 2 {
        1.0
    } else {
        (g[g.len() - 1] - g[0]) / (g.len() - 1) as f64
    }
}

fn form_residuals(sys: &AlphaSystem, pt: &JetPoint, v: &[f64; 5]) -> Result<(f64, f64), EvalError> {
    let alpha = sys.alpha().eval(&pt.eval_point())?;
    let contact = v[2] - pt.p * v[0] - pt.q * v[1];
    let psi = v[3] - alpha * v[4];
    Ok((contact.abs(), psi.abs()))
}

/// Maxima of `|ω₀(T)|` and `|Ψ(T)|` over discrete tangents `T = ∂_s J, ∂_t J`
/// of the grid data. Uses only the stored points, so a reloaded table
/// reproduces the values.
pub fn discrete_pullback_residuals(
    sys: &AlphaSystem,
    grid: &SurfaceGrid,
) -> Result<(f64, f64), VerifyError> {
    let (ns, nt) = (grid.ns(), grid.nt());
    if ns < 2 || nt < 2 || grid.valid_count() < 4 {
        return Err(VerifyError::TooSmall {
            valid: grid.valid_count(),
        });
    }
    let (ds, dt) = (spacing(&grid.s_grid), spacing(&grid.t_grid));
    let (mut contact, mut psi) = (0.0f64, 0.0f64);
    let mut used = 0;
    for j in 0..nt {
        for i in 0..ns {
            let Some(pt) = grid.point(i, j) else { continue };
            let ts = line_derivative(ns, i, ds, |k| grid.point(k, j).copied());
            let tt = line_derivative(nt, j, dt, |k| grid.point(i, k).copied());
            let (Some(ts), Some(tt)) = (ts, tt) else {
                continue;
            };
            used += 1;
            for v in [ts, tt] {
                let (c, p) = form_residuals(sys, pt, &v)?;
                contact = contact.max(c);
                psi = psi.max(p);
            }
        }
    }
    if used == 0 {
        return Err(VerifyError::TooSmall {
            valid: grid.valid_count(),
        });
    }
    Ok((contact, psi))
}

/// Maxima of `|ω₀|` and `|Ψ|` on the analytic tangent lifts at every valid node.
pub fn pullback_residuals(surface: &IntegralSurface) -> Result<(f64, f64), VerifyError> {
    let grid = &surface.grid;
    if grid.ns() < 2 || grid.nt() < 2 || grid.valid_count() < 4 {
        return Err(VerifyError::TooSmall {
            valid: grid.valid_count(),
        });
    }
    let (mut contact, mut psi) = (0.0f64, 0.0f64);
    for j in 0..grid.nt() {
        for i in 0..grid.ns() {
            let Some(pt) = grid.point(i, j) else { continue };
            let t = grid.t_grid[j];
            for v in surface.ctx.tangent_lift(t, pt)? {
                let (c, p) = form_residuals(&surface.ctx.sys, pt, &v)?;
                contact = contact.max(c);
                psi = psi.max(p);
            }
        }
    }
    Ok((contact, psi))
}

/// Quintic Hermite value at `y` from knots `ys` (monotone) carrying
/// values, first and second derivatives.
fn hermite5(ys: &[f64], z: &[f64], dz: &[f64], ddz: &[f64], y: f64) -> f64 {
    let n = ys.len();
    let increasing = ys[n - 1] > ys[0];
    let mut k = 0;
    while k + 2 < n && ((increasing && ys[k + 1] < y) || (!increasing && ys[k + 1] > y)) {
        k += 1;
    }
    let h = ys[k + 1] - ys[k];
    let u = (y - ys[k]) / h;
    let (u2, u3, u4, u5) = (u * u, u.powi(3), u.powi(4), u.powi(5));
    let h0 = 1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5;
    let h1 = u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5;
    let h2 = 0.5 * u2 - 1.5 * u3 + 1.5 * u4 - 0.5 * u5;
    let g0 = 10.0 * u3 - 15.0 * u4 + 6.0 * u5;
    let g1 = -4.0 * u3 + 7.0 * u4 - 3.0 * u5;
    let g2 = 0.5 * u3 - u4 + 0.5 * u5;
    h0 * z[k]
        + h1 * h * dz[k]
        + h2 * h * h * ddz[k]
        + g0 * z[k + 1]
        + g1 * h * dz[k + 1]
        + g2 * h * h * ddz[k + 1]
}

/// Fourth-order derivative of samples on a uniform grid, one-sided at the ends.
fn uniform_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|k| {
            let d = if k >= 2 && k + 2 < n {
                f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2]
            } else if k < 2 {
                -25.0 * f[k] + 48.0 * f[k + 1] - 36.0 * f[k + 2] + 16.0 * f[k + 3] - 3.0 * f[k + 4]
            } else {
                25.0 * f[k] - 48.0 * f[k - 1] + 36.0 * f[k - 2] - 16.0 * f[k - 3] + 3.0 * f[k - 4]
            };
            d / (12.0 * h)
        })
        .collect()
}

/// Residuals of `z_xx = α z_xy`, `z_xy = α z_yy` on the graph of a patch.
///
/// Each grid column (fixed `s`) lies in a plane `x = const`; its points are
/// resampled onto a common regular `y` grid by cubic Hermite interpolation
/// of `z(y)` with the exact slopes `dz/dy = q` and curvatures `q_t / Y_t`
/// from fourth-order differences in `t`, then second differences are formed
/// on the regular `(x, y)` grid. The column map `t ↦ Y` must be
/// strictly monotone with `|Y_t|` bounded away from zero.
///
/// Maxima are taken over nodes at least 10% of the patch extent away from
/// each edge, so the measured region stays fixed under refinement.
pub fn pde_residual_on_graph(
    sys: &AlphaSystem,
    grid: &SurfaceGrid,
    patch: Patch,
) -> Result<PdeResiduals, VerifyError> {
    pde_residual_on_graph_with(sys, grid, patch, 0.1)
}

/// As [`pde_residual_on_graph`] with an explicit edge inset fraction in `[0, 0.5)`.
pub fn pde_residual_on_graph_with(
    sys: &AlphaSystem,
    grid: &SurfaceGrid,
    patch: Patch,
    inset: f64,
) -> Result<PdeResiduals, VerifyError> {
    let Patch { i0, i1, j0, j1 } = patch;
    if i1 >= grid.ns() || j1 >= grid.nt() || i1 < i0 + 2 || j1 < j0 + 4 {
        return Err(VerifyError::BadPatch { i0, i1, j0, j1 });
    }
    let holes = (j0..=j1)
        .flat_map(|j| (i0..=i1).map(move |i| (i, j)))
        .filter(|&(i, j)| grid.point(i, j).is_none())
        .count();
    if holes > 0 {
        return Err(VerifyError::Holes(holes));
    }
    let pt = |i: usize, j: usize| *grid.point(i, j).expect("holes rejected above");
    let (nx, ny) = (i1 - i0 + 1, j1 - j0 + 1);

    let xs: Vec<f64> = (i0..=i1).map(|i| pt(i, j0).x).collect();
    for (c, i) in (i0..=i1).enumerate() {
        for j in j0..=j1 {
            if (pt(i, j).x - xs[c]).abs() > 1e-12 * (1.0 + xs[c].abs()) {
                return Err(VerifyError::NotStructured(format!(
                    "x varies along column {i}"
                )));
            }
        }
    }
    let dx = (xs[nx - 1] - xs[0]) / (nx - 1) as f64;
    if xs
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dx).abs() > 1e-9 * dx.abs().max(1e-300))
        || dx == 0.0
    {
        return Err(VerifyError::NotStructured(
            "columns are not evenly spaced in x".into(),
        ));
    }

    let mut cols = Vec::with_capacity(nx);
    let (mut y_lo, mut y_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut sign = 0.0;
    for i in i0..=i1 {
        let ys: Vec<f64> = (j0..=j1).map(|j| pt(i, j).y).collect();
        let steps: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
        let max_step = steps.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for &d in &steps {
            let sg = d.signum();
            if sign == 0.0 {
                sign = sg;
            }
            if sg != sign || d == 0.0 {
                return Err(VerifyError::NotInjective(format!(
                    "Y_t changes sign in column {i}"
                )));
            }
            if d.abs() < 1e-3 * max_step {
                return Err(VerifyError::NotInjective(format!(
                    "|Y_t| nearly vanishes in column {i}"
                )));
            }
        }
        let (lo, hi) = (ys[0].min(ys[ny - 1]), ys[0].max(ys[ny - 1]));
        y_lo = y_lo.max(lo);
        y_hi = y_hi.min(hi);
        let zs: Vec<f64> = (j0..=j1).map(|j| pt(i, j).z).collect();
        let qs: Vec<f64> = (j0..=j1).map(|j| pt(i, j).q).collect();
        let dt = spacing(&grid.t_grid);
        let yt = uniform_derivative(&ys, dt);
        let qt = uniform_derivative(&qs, dt);
        let curv: Vec<f64> = qt.iter().zip(&yt).map(|(a, b)| a / b).collect();
        cols.push((ys, zs, qs, curv));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(y_hi > y_lo) {
        return Err(VerifyError::NotInjective(
            "columns share no common y range".into(),
        ));
    }
    let dy = (y_hi - y_lo) / (ny - 1) as f64;
    let yk = |k: usize| y_lo + dy * k as f64;
    let z: Vec<Vec<f64>> = cols
        .iter()
        .map(|(ys, zs, qs, cv)| (0..ny).map(|k| hermite5(ys, zs, qs, cv, yk(k))).collect())
        .collect();

    let inside = |v: f64, lo: f64, hi: f64| {
        let m = inset * (hi - lo).abs();
        let slack = 1e-9 * (hi - lo).abs();
        v >= lo.min(hi) + m - slack && v <= lo.max(hi) - m + slack
    };
    let mut out = PdeResiduals { r1: 0.0, r2: 0.0 };
    let mut used = 0;
    for i in 1..nx - 1 {
        for k in 1..ny - 1 {
            if !inside(xs[i], xs[0], xs[nx - 1]) || !inside(yk(k), y_lo, y_hi) {
                continue;
            }
            used += 1;
            let zx = (z[i + 1][k] - z[i - 1][k]) / (2.0 * dx);
            let zy = (z[i][k + 1] - z[i][k - 1]) / (2.0 * dy);
            let zxx = (z[i + 1][k] - 2.0 * z[i][k] + z[i - 1][k]) / (dx * dx);
            let zyy = (z[i][k + 1] - 2.0 * z[i][k] + z[i][k - 1]) / (dy * dy);
            let zxy = (z[i + 1][k + 1] - z[i + 1][k - 1] - z[i - 1][k + 1] + z[i - 1][k - 1])
                / (4.0 * dx * dy);
            let alpha = sys
                .alpha()
                .eval(&EvalPoint::jet(xs[i], yk(k), z[i][k], zx, zy))?;
            out.r1 = out.r1.max((zxx - alpha * zxy).abs());
            out.r2 = out.r2.max((zxy - alpha * zyy).abs());
        }
    }
    if used == 0 {
        return Err(VerifyError::BadPatch { i0, i1, j0, j1 });
    }
    Ok(out)
}

fn rel_mismatch(exact: f64, approx: f64) -> f64 {
    (exact - approx).abs() / exact.abs().max(1.0)
}

fn central(e: &Expr, pt: &EvalPoint, v: Var, h: f64) -> Result<f64, EvalError> {
    let x = pt.get(v).unwrap_or(0.0);
    let hp = h * x.abs().max(1.0);
    let up = e.eval(&(*pt).with(v, x + hp))?;
    let dn = e.eval(&(*pt).with(v, x - hp))?;
    Ok((up - dn) / (2.0 * hp))
}

/// Worst relative mismatch between every cached symbolic first and second
/// partial of `α` (and, if given, every seed-curve derivative) and central
/// differences at step `1e-5`, over `samples` random points of `domain`.
pub fn fd_crosscheck_suite(
    sys: &AlphaSystem,
    seed: Option<&SeedCurve>,
    domain: &SampleBox,
    samples: usize,
    rng_seed: u64,
) -> f64 {
    let h = 1e-5;
    let mut rng = StdRng::seed_from_u64(rng_seed);
    let mut worst = 0.0f64;
    let (mut done, mut attempts) = (0, 0);
    while done < samples && attempts < 20 * samples {
        attempts += 1;
        let pt = domain.sample(&mut rng);
        let check = || -> Result<f64, EvalError> {
            let mut w = 0.0f64;
            for (a, &u) in Var::JET.iter().enumerate() {
                let first = sys.partial(u);
                w = w.max(rel_mismatch(
                    first.eval(&pt)?,
                    central(sys.alpha(), &pt, u, h)?,
                ));
                for &v in &Var::JET[a..] {
                    w = w.max(rel_mismatch(
                        sys.second(u, v).eval(&pt)?,
                        central(first, &pt, v, h)?,
                    ));
                }
            }
            Ok(w)
        };
        if let Ok(w) = check() {
            worst = worst.max(w);
            done += 1;
        }
    }
    if let Some(seed) = seed {
        let (lo, hi) = seed.t_range();
        for _ in 0..samples {
            let t = rng.gen_range(lo..=hi);
            let tp = EvalPoint::new().with(Var::T, t);
            for k in 1..6 {
                let exact = seed.eval(k, t);
                let fd = central(seed.derivative(k - 1), &tp, Var::T, h);
                if let (Ok(e), Ok(f)) = (exact, fd) {
                    worst = worst.max(rel_mismatch(e, f));
                }
            }
        }
    }
    worst
}

/// All checks for a freshly built surface. `patch` selects the graph patch
/// for the PDE residual.
pub fn verify_surface(
    surface: &IntegralSurface,
    patch: Option<Patch>,
) -> Result<ResidualSummary, VerifyError> {
    let sys = &surface.ctx.sys;
    let (contact, psi) = discrete_pullback_residuals(sys, &surface.grid)?;
    let (lc, lp) = pullback_residuals(surface)?;
    let pde = patch
        .map(|p| pde_residual_on_graph(sys, &surface.grid, p))
        .transpose()?;
    let fd = fd_crosscheck_suite(
        sys,
        Some(&surface.ctx.seed),
        &fd_domain(&surface.grid),
        100,
        0xfd,
    );
    Ok(ResidualSummary {
        max_contact_residual: contact,
        max_psi_residual: psi,
        max_fd_mismatch: fd,
        pde_residuals: pde,
        lift_contact_residual: Some(lc),
        lift_psi_residual: Some(lp),
    })
}

/// Bounding box of the valid jet points, used as the finite-difference domain.
pub fn fd_domain(grid: &SurfaceGrid) -> SampleBox {
    let mut lo = [f64::INFINITY; 5];
    let mut hi = [f64::NEG_INFINITY; 5];
    for p in grid.points.iter().flatten() {
        for (c, v) in p.to_array().into_iter().enumerate() {
            lo[c] = lo[c].min(v);
            hi[c] = hi[c].max(v);
        }
    }
    Var::JET
        .iter()
        .enumerate()
        .fold(SampleBox::empty(), |b, (c, &v)| {
            if lo[c] <= hi[c] {
                b.with(v, lo[c], hi[c])
            } else {
                b
            }
        })
}

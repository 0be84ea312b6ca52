//! Reduction along Cauchy characteristics: the first-integral charts,
//! their local inverse by Newton's method, bar functions `f̄ = f ∘ Φ⁻¹`
//! and the generators of the reduced system on the leaf space.

use std::fmt;

use rand::rngs::StdRng;
use rand::SeedableRng;
use thiserror::Error;

use crate::classify::{genericity_test, ClassifyError, ClassifyOptions, Genericity};
use crate::model::{AlphaSystem, JetPoint};
use crate::symexpr::{EvalError, Expr, SampleBox};

/// Which first-integral chart applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// `1 + x(α_y + qα_z) ≠ 0`; chart `(x, y + αx, z − px − qy, p, q)`.
    Generic,
    /// `1 + x(α_y + qα_z) ≡ 0`; chart `(x, α, z − px − qy, p, q)`.
    NonGeneric,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Generic => "generic",
            Mode::NonGeneric => "nongeneric",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    Diverged { iterations: usize, residual: f64 },
    #[error("Newton Jacobian is singular (det {det:e}); the point left the chart")]
    SingularJacobian { det: f64 },
    #[error("mode {mode} does not match the system's genericity ({found:?})")]
    ModeMismatch { mode: Mode, found: Genericity },
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

/// Leaf-space coordinates `x1..x4` plus the fiber coordinate `x0`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ReducedPoint {
    pub x0: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

impl ReducedPoint {
    pub fn new(x0: f64, x1: f64, x2: f64, x3: f64, x4: f64) -> Self {
        Self { x0, x1, x2, x3, x4 }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.x0, self.x1, self.x2, self.x3, self.x4]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    /// The leaf coordinates `(x1, x2, x3, x4)`.
    pub fn leaf(&self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    fn coord(&self, i: usize) -> f64 {
        self.to_array()[i]
    }

    pub fn max_abs_diff(&self, other: &ReducedPoint) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn phi_forward(
    sys: &AlphaSystem,
    mode: Mode,
    pt: &JetPoint,
) -> Result<ReducedPoint, EvalError> {
    let alpha = sys.alpha().eval(&pt.eval_point())?;
    let x1 = match mode {
        Mode::Generic => pt.y + alpha * pt.x,
        Mode::NonGeneric => alpha,
    };
    Ok(ReducedPoint::new(
        pt.x,
        x1,
        pt.z - pt.p * pt.x - pt.q * pt.y,
        pt.p,
        pt.q,
    ))
}

/// Jacobian of the chart, rows `x0..x4`, columns `x, y, z, p, q`.
pub fn phi_jacobian(
    sys: &AlphaSystem,
    mode: Mode,
    pt: &JetPoint,
) -> Result<[[f64; 5]; 5], EvalError> {
    let (alpha, d) = sys.eval_first(pt)?;
    let row1 = match mode {
        Mode::Generic => [
            alpha + pt.x * d[0],
            1.0 + pt.x * d[1],
            pt.x * d[2],
            pt.x * d[3],
            pt.x * d[4],
        ],
        Mode::NonGeneric => d,
    };
    Ok([
        [1.0, 0.0, 0.0, 0.0, 0.0],
        row1,
        [-pt.p, -pt.q, 1.0, -pt.x, -pt.y],
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Convergence when `max|residual| <= tol * (1 + max(|x1|, |x2|))`.
    pub tol: f64,
    pub max_iter: usize,
    pub min_det: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            min_det: 1e-14,
        }
    }
}

/// Starting point when no neighbouring solution is available:
/// `(y, z) = (x1, x2)` with `x, p, q` copied from the target.
pub fn default_guess(target: &ReducedPoint) -> JetPoint {
    JetPoint::new(target.x0, target.x1, target.x2, target.x3, target.x4)
}

pub fn phi_inverse(
    sys: &AlphaSystem,
    mode: Mode,
    target: &ReducedPoint,
    guess: &JetPoint,
) -> Result<JetPoint, ReductionError> {
    phi_inverse_with(sys, mode, target, guess, &NewtonOptions::default())
}

/// Damped Newton on the unknowns `(y, z)`; `x, p, q` are copied from the
/// target since they are the fiber coordinate and two first integrals.
pub fn phi_inverse_with(
    sys: &AlphaSystem,
    mode: Mode,
    target: &ReducedPoint,
    guess: &JetPoint,
    opts: &NewtonOptions,
) -> Result<JetPoint, ReductionError> {
    let mut pt = JetPoint::new(target.x0, guess.y, guess.z, target.x3, target.x4);
    let scale = 1.0 + target.x1.abs().max(target.x2.abs());
    let residual = |pt: &JetPoint| -> Result<[f64; 2], EvalError> {
        let alpha = sys.alpha().eval(&pt.eval_point())?;
        let first = match mode {
            Mode::Generic => pt.y + alpha * pt.x,
            Mode::NonGeneric => alpha,
        };
        Ok([
            first - target.x1,
            pt.z - pt.p * pt.x - pt.q * pt.y - target.x2,
        ])
    };
    let norm = |r: &[f64; 2]| r[0].abs().max(r[1].abs());

    let mut r = residual(&pt)?;
    for _ in 0..opts.max_iter {
        if norm(&r) <= opts.tol * scale {
            return Ok(pt);
        }
        let (_, d) = sys.eval_first(&pt)?;
        let (j11, j12) = match mode {
            Mode::Generic => (1.0 + pt.x * d[1], pt.x * d[2]),
            Mode::NonGeneric => (d[1], d[2]),
        };
        let (j21, j22) = (-pt.q, 1.0);
        let det = j11 * j22 - j12 * j21;
        if det.abs() < opts.min_det || !det.is_finite() {
            return Err(ReductionError::SingularJacobian { det });
        }
        let dy = (r[0] * j22 - j12 * r[1]) / det;
        let dz = (j11 * r[1] - j21 * r[0]) / det;

        let mut lambda = 1.0;
        loop {
            let trial = JetPoint {
                y: pt.y - lambda * dy,
                z: pt.z - lambda * dz,
                ..pt
            };
            match residual(&trial) {
                Ok(rt) if norm(&rt) < norm(&r) || lambda < 1.0 / 1024.0 => {
                    pt = trial;
                    r = rt;
                    break;
                }
                Ok(_) => lambda *= 0.5,
                Err(e) if lambda < 1.0 / 1024.0 => return Err(e.into()),
                Err(_) => lambda *= 0.5,
            }
        }
    }
    if norm(&r) <= opts.tol * scale {
        return Ok(pt);
    }
    Err(ReductionError::Diverged {
        iterations: opts.max_iter,
        residual: norm(&r),
    })
}

/// `f̄(target) = f(Φ⁻¹(target))`.
pub fn bar_eval(
    sys: &AlphaSystem,
    mode: Mode,
    f: &Expr,
    target: &ReducedPoint,
    guess: &JetPoint,
) -> Result<f64, ReductionError> {
    let pt = phi_inverse(sys, mode, target, guess)?;
    Ok(f.eval(&pt.eval_point())?)
}

/// Central difference of `f̄` in the fiber coordinate at the image of `pt`.
pub fn fiber_derivative(
    sys: &AlphaSystem,
    mode: Mode,
    f: &Expr,
    pt: &JetPoint,
    h: f64,
) -> Result<f64, ReductionError> {
    let target = phi_forward(sys, mode, pt)?;
    let shifted = |dx: f64| {
        let t = ReducedPoint {
            x0: target.x0 + dx,
            ..target
        };
        let guess = JetPoint {
            x: pt.x + dx,
            ..*pt
        };
        bar_eval(sys, mode, f, &t, &guess)
    };
    Ok((shifted(h)? - shifted(-h)?) / (2.0 * h))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseCheck {
    pub holds: bool,
    pub max_abs_derivative: f64,
    pub worst_point: Option<JetPoint>,
}

/// Sampled test that `f̄` does not depend on the fiber coordinate, i.e.
/// descends to the leaf space: `|∂f̄/∂x0| < 1e-6` by central differences
/// with step `1e-5` at every sample drawn from `domain`.
pub fn base_function_report(
    sys: &AlphaSystem,
    mode: Mode,
    f: &Expr,
    domain: &SampleBox,
    samples: usize,
    seed: u64,
) -> Result<BaseCheck, ReductionError> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = BaseCheck {
        holds: true,
        max_abs_derivative: 0.0,
        worst_point: None,
    };
    for _ in 0..samples {
        let pt = JetPoint::from_eval_point(&domain.sample(&mut rng));
        let d = fiber_derivative(sys, mode, f, &pt, 1e-5)?.abs();
        if d > out.max_abs_derivative || out.worst_point.is_none() {
            out.max_abs_derivative = d;
            out.worst_point = Some(pt);
        }
        if d >= 1e-6 {
            out.holds = false;
        }
    }
    Ok(out)
}

pub fn base_function_check(
    sys: &AlphaSystem,
    mode: Mode,
    f: &Expr,
    domain: &SampleBox,
) -> Result<bool, ReductionError> {
    Ok(base_function_report(sys, mode, f, domain, 50, 0xba5e)?.holds)
}

/// Coefficient of a reduced 1-form.
#[derive(Clone, Debug, PartialEq)]
pub enum Coef {
    Const(f64),
    /// `sign * x_index`, with `index` in `1..=4`.
    Coord {
        index: usize,
        sign: f64,
    },
    /// `sign * f̄` for a jet-space function `f`.
    Bar {
        expr: Expr,
        sign: f64,
        label: &'static str,
    },
}

impl Coef {
    pub fn eval(
        &self,
        sys: &AlphaSystem,
        mode: Mode,
        target: &ReducedPoint,
        guess: &JetPoint,
    ) -> Result<f64, ReductionError> {
        match self {
            Coef::Const(c) => Ok(*c),
            Coef::Coord { index, sign } => Ok(sign * target.coord(*index)),
            Coef::Bar { expr, sign, .. } => Ok(sign * bar_eval(sys, mode, expr, target, guess)?),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Coef::Const(c) if *c == 0.0)
    }

    fn sign(&self) -> f64 {
        match self {
            Coef::Const(c) => c.signum(),
            Coef::Coord { sign, .. } | Coef::Bar { sign, .. } => *sign,
        }
    }

    fn magnitude_label(&self) -> Option<String> {
        match self {
            Coef::Const(c) if c.abs() == 1.0 => None,
            Coef::Const(c) => Some(format!("{}", c.abs())),
            Coef::Coord { index, .. } => Some(format!("x{index}")),
            Coef::Bar { label, .. } => Some(format!("bar({label})")),
        }
    }
}

/// 1-form `Σ c_i dx_i` on the leaf space, `i = 1..4`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedForm {
    pub coeffs: [Coef; 4],
}

impl ReducedForm {
    pub fn eval(
        &self,
        sys: &AlphaSystem,
        mode: Mode,
        target: &ReducedPoint,
        guess: &JetPoint,
    ) -> Result<[f64; 4], ReductionError> {
        let mut out = [0.0; 4];
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            *o = c.eval(sys, mode, target, guess)?;
        }
        Ok(out)
    }

    /// `(π*ξ)(v)` at the jet point `pt`, through the chart differential.
    pub fn pullback(
        &self,
        sys: &AlphaSystem,
        mode: Mode,
        pt: &JetPoint,
        v: &[f64; 5],
    ) -> Result<f64, ReductionError> {
        let target = phi_forward(sys, mode, pt)?;
        let coeffs = self.eval(sys, mode, &target, pt)?;
        let jac = phi_jacobian(sys, mode, pt)?;
        let mut s = 0.0;
        for (i, c) in coeffs.iter().enumerate() {
            let row = &jac[i + 1];
            s += c * row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(s)
    }
}

impl fmt::Display for ReducedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let negative = c.sign() < 0.0;
            match (first, negative) {
                (true, true) => f.write_str("-")?,
                (false, true) => f.write_str(" - ")?,
                (false, false) => f.write_str(" + ")?,
                (true, false) => {}
            }
            first = false;
            if let Some(m) = c.magnitude_label() {
                write!(f, "{m}*")?;
            }
            write!(f, "dx{}", i + 1)?;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedGenerators {
    pub mode: Mode,
    pub xi1: ReducedForm,
    pub xi2: ReducedForm,
}

/// Generators of the reduced system, without a genericity check.
pub fn reduced_generators_unchecked(sys: &AlphaSystem, mode: Mode) -> ReducedGenerators {
    let one = || Coef::Const(1.0);
    let zero = || Coef::Const(0.0);
    let (xi1, xi2) = match mode {
        Mode::Generic => (
            [
                zero(),
                one(),
                zero(),
                Coef::Coord {
                    index: 1,
                    sign: 1.0,
                },
            ],
            [
                zero(),
                zero(),
                one(),
                Coef::Bar {
                    expr: sys.alpha().clone(),
                    sign: -1.0,
                    label: "alpha",
                },
            ],
        ),
        Mode::NonGeneric => (
            [
                zero(),
                one(),
                zero(),
                Coef::Bar {
                    expr: sys.beta().clone(),
                    sign: 1.0,
                    label: "y + alpha*x",
                },
            ],
            [
                zero(),
                zero(),
                one(),
                Coef::Coord {
                    index: 1,
                    sign: -1.0,
                },
            ],
        ),
    };
    ReducedGenerators {
        mode,
        xi1: ReducedForm { coeffs: xi1 },
        xi2: ReducedForm { coeffs: xi2 },
    }
}

/// Generators `(ξ₁, ξ₂)` of the reduced system after confirming that
/// `mode` agrees with the genericity of `sys` over `domain`.
pub fn reduced_generators(
    sys: &AlphaSystem,
    mode: Mode,
    domain: &SampleBox,
    opts: &ClassifyOptions,
) -> Result<ReducedGenerators, ReductionError> {
    let found = genericity_test(sys, domain, opts)?.verdict;
    let ok = matches!(
        (mode, found),
        (Mode::Generic, Genericity::Generic) | (Mode::NonGeneric, Genericity::NonGeneric)
    );
    if !ok {
        return Err(ReductionError::ModeMismatch { mode, found });
    }
    Ok(reduced_generators_unchecked(sys, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical_forms;
    use rand::Rng;

    fn sys(src: &str) -> AlphaSystem {
        AlphaSystem::parse(src).unwrap()
    }

    #[test]
    fn forward_examples() {
        let pt = JetPoint::new(1.0, 2.0, 3.0, 4.0, 5.0);
        assert_eq!(
            phi_forward(&sys("q"), Mode::Generic, &pt).unwrap(),
            ReducedPoint::new(1.0, 7.0, -11.0, 4.0, 5.0)
        );
        assert_eq!(
            phi_forward(&sys("(q - y)/x"), Mode::NonGeneric, &pt).unwrap(),
            ReducedPoint::new(1.0, 3.0, -11.0, 4.0, 5.0)
        );
        let flat = JetPoint::new(1.3, -0.2, 0.7, 0.0, 0.0);
        assert_eq!(
            phi_forward(&sys("sin(x) + y*z"), Mode::Generic, &flat)
                .unwrap()
                .x2,
            0.7
        );
    }

    #[test]
    fn inverse_recovers_example_point() {
        let t = ReducedPoint::new(1.0, 7.0, -11.0, 4.0, 5.0);
        let got = phi_inverse(&sys("q"), Mode::Generic, &t, &default_guess(&t)).unwrap();
        assert_eq!(got, JetPoint::new(1.0, 2.0, 3.0, 4.0, 5.0));
    }

    #[test]
    fn inverse_round_trip_nonlinear() {
        let s = sys("p + q^2 + 0.1*sin(y) + 0.05*z");
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..300 {
            let pt = JetPoint::from_array(std::array::from_fn(|_| rng.gen_range(0.5..1.5)));
            let target = phi_forward(&s, Mode::Generic, &pt).unwrap();
            let guess = JetPoint {
                y: pt.y + 0.05,
                z: pt.z - 0.05,
                ..pt
            };
            let back = phi_inverse(&s, Mode::Generic, &target, &guess).unwrap();
            let again = phi_forward(&s, Mode::Generic, &back).unwrap();
            assert!(again.max_abs_diff(&target) < 1e-10);
            assert_eq!((back.x, back.p, back.q), (target.x0, target.x3, target.x4));
        }
    }

    #[test]
    fn singular_jacobian_reported() {
        // α = -y/x gives G ≡ 0, so the generic chart degenerates
        let s = sys("-y/x");
        let t = ReducedPoint::new(1.0, 0.5, 0.2, 0.3, 0.4);
        let err = phi_inverse(&s, Mode::Generic, &t, &default_guess(&t)).unwrap_err();
        assert!(matches!(err, ReductionError::SingularJacobian { .. }));
    }

    #[test]
    fn divergence_reported() {
        // y + x*y^2 = x1 has no real root for x1 very negative with x = 1
        let s = sys("y^2");
        let t = ReducedPoint::new(1.0, -10.0, 0.0, 0.0, 0.0);
        let err = phi_inverse(&s, Mode::Generic, &t, &default_guess(&t)).unwrap_err();
        assert!(matches!(
            err,
            ReductionError::Diverged { .. } | ReductionError::SingularJacobian { .. }
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let s = sys("p*q + sin(y*z) + x^2");
        let pt = JetPoint::new(1.2, 0.7, 0.4, 1.1, 0.9);
        for mode in [Mode::Generic, Mode::NonGeneric] {
            let jac = phi_jacobian(&s, mode, &pt).unwrap();
            for col in 0..5 {
                let h = 1e-6;
                let mut a = pt.to_array();
                let mut b = pt.to_array();
                a[col] += h;
                b[col] -= h;
                let fa = phi_forward(&s, mode, &JetPoint::from_array(a))
                    .unwrap()
                    .to_array();
                let fb = phi_forward(&s, mode, &JetPoint::from_array(b))
                    .unwrap()
                    .to_array();
                for row in 0..5 {
                    let fd = (fa[row] - fb[row]) / (2.0 * h);
                    assert!((fd - jac[row][col]).abs() < 1e-8, "{mode} {row} {col}");
                }
            }
        }
    }

    #[test]
    fn bar_function_examples() {
        let mut rng = StdRng::seed_from_u64(22);
        let pq = sys("p + q^2");
        let nongen = sys("(q - y)/x");
        for _ in 0..100 {
            let t = ReducedPoint::new(
                rng.gen_range(1.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let g = default_guess(&t);
            assert_eq!(
                bar_eval(&sys("q"), Mode::Generic, sys("q").alpha(), &t, &g).unwrap(),
                t.x4
            );
            let v = bar_eval(&pq, Mode::Generic, pq.alpha(), &t, &g).unwrap();
            assert!((v - (t.x3 + t.x4 * t.x4)).abs() < 1e-14);
            let v = bar_eval(&nongen, Mode::NonGeneric, nongen.beta(), &t, &g).unwrap();
            assert!((v - t.x4).abs() < 1e-12 * (1.0 + t.x4.abs()));
        }
    }

    #[test]
    fn base_function_examples() {
        let b = SampleBox::jet_unit();
        for src in ["q", "p + q^2", "(z - p*x - q*y)*p"] {
            let s = sys(src);
            assert!(
                base_function_check(&s, Mode::Generic, s.alpha(), &b).unwrap(),
                "{src}"
            );
        }
        let s = sys("(q - y)/x");
        assert!(base_function_check(&s, Mode::NonGeneric, s.beta(), &b).unwrap());
        let s = sys("q");
        assert!(
            !base_function_check(&s, Mode::Generic, &Expr::var(crate::symexpr::Var::X), &b)
                .unwrap()
        );
    }

    #[test]
    fn generator_displays() {
        let g = reduced_generators(
            &sys("q"),
            Mode::Generic,
            &SampleBox::jet_unit(),
            &ClassifyOptions::default(),
        )
        .unwrap();
        assert_eq!(g.xi1.to_string(), "dx2 + x1*dx4");
        assert_eq!(g.xi2.to_string(), "dx3 - bar(alpha)*dx4");
        let g = reduced_generators_unchecked(&sys("(q - y)/x"), Mode::NonGeneric);
        assert_eq!(g.xi1.to_string(), "dx2 + bar(y + alpha*x)*dx4");
        assert_eq!(g.xi2.to_string(), "dx3 - x1*dx4");
        let err = reduced_generators(
            &sys("q"),
            Mode::NonGeneric,
            &SampleBox::jet_unit(),
            &ClassifyOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ReductionError::ModeMismatch { .. }));
    }

    #[test]
    fn generator_coefficients_match_closed_forms() {
        let mut rng = StdRng::seed_from_u64(23);
        let cases = [
            ("q", Mode::Generic),
            ("p + q^2", Mode::Generic),
            ("(q - y)/x", Mode::NonGeneric),
        ];
        for (src, mode) in cases {
            let s = sys(src);
            let gens = reduced_generators_unchecked(&s, mode);
            for _ in 0..50 {
                let t = ReducedPoint::from_array(std::array::from_fn(|_| rng.gen_range(1.0..2.0)));
                let g = default_guess(&t);
                let c1 = gens.xi1.eval(&s, mode, &t, &g).unwrap();
                let c2 = gens.xi2.eval(&s, mode, &t, &g).unwrap();
                let (want1, want2) = match src {
                    "q" => (t.x1, -t.x4),
                    "p + q^2" => (t.x1, -(t.x3 + t.x4 * t.x4)),
                    _ => (t.x4, -t.x1),
                };
                assert!(
                    (c1[3] - want1).abs() < 1e-12 && (c2[3] - want2).abs() < 1e-12,
                    "{src}"
                );
                assert_eq!(&c1[..3], &[0.0, 1.0, 0.0]);
                assert_eq!(&c2[..3], &[0.0, 0.0, 1.0]);
            }
        }
    }

    #[test]
    fn pullback_identities() {
        let mut rng = StdRng::seed_from_u64(24);
        for (src, mode) in [
            ("p + q^2", Mode::Generic),
            ("-z/(q*x) + 1/x + p/q", Mode::NonGeneric),
        ] {
            let s = sys(src);
            let gens = reduced_generators_unchecked(&s, mode);
            let (omega0, psi) = canonical_forms(&s);
            for _ in 0..50 {
                let pt = JetPoint::from_array(std::array::from_fn(|_| rng.gen_range(1.0..2.0)));
                let v: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let w0 = omega0.apply(&pt, &v).unwrap();
                let wp = psi.apply(&pt, &v).unwrap();
                let p1 = gens.xi1.pullback(&s, mode, &pt, &v).unwrap();
                let p2 = gens.xi2.pullback(&s, mode, &pt, &v).unwrap();
                assert!((p1 - (w0 - pt.x * wp)).abs() < 1e-10);
                assert!((p2 - wp).abs() < 1e-10);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const EXAMPLES: [(&str, Mode); 4] = [
            ("q", Mode::Generic),
            ("p + q^2", Mode::Generic),
            ("z - p*x - q*y", Mode::Generic),
            ("(q - y)/x", Mode::NonGeneric),
        ];

        proptest! {
            #[test]
            fn inverse_then_forward_is_identity(k in 0usize..4, t in prop::array::uniform5(1.0f64..2.0)) {
                let (src, mode) = EXAMPLES[k];
                let s = sys(src);
                let target = ReducedPoint::from_array(t);
                let back = phi_inverse(&s, mode, &target, &default_guess(&target)).unwrap();
                let again = phi_forward(&s, mode, &back).unwrap();
                prop_assert!(again.max_abs_diff(&target) < 1e-10, "{}: {:?} -> {:?}", src, target, again);
            }
        }
    }
}

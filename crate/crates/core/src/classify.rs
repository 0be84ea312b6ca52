//! Classification criteria: Cauchy-characteristic dimension of the general
//! system, involutivity and genericity of an α-system, and the derived type
//! of the reduced system.

use rand::rngs::StdRng;
use rand::SeedableRng;
use thiserror::Error;

use crate::model::{
    annihilated_subspace, contact_form, reduced_derivative, AlphaSystem, Case, DerivTag,
    GeneralGmas, JetPoint, ModelError,
};
use crate::symexpr::{EvalError, Expr, SampleBox, SampleError, Var, ZeroTest, ZeroVerdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// Tolerance and sampling knobs shared by every verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifyOptions {
    pub eps_zero: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            eps_zero: 1e-9,
            samples: 200,
            seed: 0x5eed_2024,
        }
    }
}

impl ClassifyOptions {
    pub fn zero_test(&self) -> ZeroTest {
        ZeroTest::new(self.samples, self.eps_zero).with_seed(self.seed)
    }

    fn vanishes(&self, value: f64, scale: f64) -> bool {
        value.abs() <= self.eps_zero * (1.0 + scale)
    }
}

/// The two-line condition for `dim Ch = 1` in one case of the general system.
#[derive(Clone, Debug)]
pub struct CauchyCondition {
    pub case: Case,
    pub line1: Expr,
    pub line2: Expr,
    coefficient: Expr,
}

impl CauchyCondition {
    pub fn new(g: &GeneralGmas, case: Case) -> Result<Self, ClassifyError> {
        let rd = |f: &Expr, tag: DerivTag| reduced_derivative(f, g, case, tag);
        let (a, b, c, d) = (&g.a, &g.b, &g.c, &g.d);
        use DerivTag::{P, Q, X, Y};
        let (line1, line2) = match case {
            Case::A => {
                let inner = rd(b, Y)? - rd(d, Q)? - (rd(a, Y)? * b - d * rd(a, Q)?) / a;
                let l1 =
                    rd(b, X)? - rd(c, Q)? - (rd(a, X)? * b - c * rd(a, Q)?) / a + b / a * &inner;
                let l2 =
                    rd(d, X)? - rd(c, Y)? - (rd(a, X)? * d - rd(a, Y)? * c) / a + d / a * &inner;
                (l1, l2)
            }
            Case::B => {
                let inner = rd(a, X)? - rd(c, P)? - (rd(b, X)? * a - c * rd(b, P)?) / b;
                let l1 =
                    rd(d, X)? - rd(c, Y)? - (rd(b, X)? * d - rd(b, Y)? * c) / b - c / b * &inner;
                let l2 =
                    rd(a, Y)? - rd(d, P)? - (rd(b, Y)? * a - d * rd(b, P)?) / b + a / b * &inner;
                (l1, l2)
            }
            Case::C => {
                let inner = rd(b, Y)? - rd(d, Q)? - (rd(c, Y)? * b - rd(c, Q)? * d) / c;
                let l1 =
                    rd(a, Y)? - rd(d, P)? - (rd(c, Y)? * a - rd(c, P)? * d) / c + d / c * &inner;
                let l2 =
                    rd(b, P)? - rd(a, Q)? - (rd(c, P)? * b - rd(c, Q)? * a) / c - b / c * &inner;
                (l1, l2)
            }
            Case::D => {
                let inner = rd(a, X)? - rd(c, P)? - (rd(d, X)? * a - rd(d, P)? * c) / d;
                let l1 =
                    rd(b, X)? - rd(c, Q)? - (rd(d, X)? * b - rd(d, Q)? * c) / d + c / d * &inner;
                let l2 =
                    rd(b, P)? - rd(a, Q)? - (rd(d, P)? * b - rd(d, Q)? * a) / d + a / d * &inner;
                (l1, l2)
            }
        };
        Ok(Self {
            case,
            line1,
            line2,
            coefficient: g.coefficient(case).clone(),
        })
    }

    /// Values of both lines with their evaluation scales.
    pub fn residuals_at(&self, pt: &JetPoint) -> Result<[(f64, f64); 2], ClassifyError> {
        let ep = pt.eval_point();
        let value = self.coefficient.eval(&ep)?;
        if value.abs() <= 1e-12 {
            return Err(ModelError::CoefficientVanishes {
                case: self.case,
                value,
            }
            .into());
        }
        Ok([
            self.line1.eval_with_scale(&ep)?,
            self.line2.eval_with_scale(&ep)?,
        ])
    }

    pub fn dim_at(&self, pt: &JetPoint, eps_zero: f64) -> Result<u8, ClassifyError> {
        let opts = ClassifyOptions {
            eps_zero,
            ..Default::default()
        };
        let holds = self
            .residuals_at(pt)?
            .iter()
            .all(|&(v, s)| opts.vanishes(v, s));
        Ok(u8::from(holds))
    }
}

/// Dimension (0 or 1) of the Cauchy characteristics at `pt`, using the
/// chosen case's condition with the default tolerance.
pub fn cauchy_dim_general(g: &GeneralGmas, case: Case, pt: &JetPoint) -> Result<u8, ClassifyError> {
    CauchyCondition::new(g, case)?.dim_at(pt, ClassifyOptions::default().eps_zero)
}

/// Case-free cross-check: `dim Ch = 1` iff `dΨ` restricted to the plane
/// `{ω₀ = Ψ = 0}` is a multiple of the restriction of `dω₀`.
pub fn cauchy_dim_direct(g: &GeneralGmas, pt: &JetPoint, tol: f64) -> Result<u8, ClassifyError> {
    let omega0 = contact_form();
    let psi = g.psi();
    let basis = annihilated_subspace(&[omega0.eval_at(pt)?, psi.eval_at(pt)?]);
    if basis.len() != 3 {
        return Err(ClassifyError::Precondition(
            "Ψ is proportional to ω₀ at the point".into(),
        ));
    }
    let restrict = |m: [[f64; 5]; 5]| -> [f64; 3] {
        let pair = |u: &[f64; 5], v: &[f64; 5]| {
            let mut s = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    s += u[i] * m[i][j] * v[j];
                }
            }
            s
        };
        [
            pair(&basis[0], &basis[1]),
            pair(&basis[0], &basis[2]),
            pair(&basis[1], &basis[2]),
        ]
    };
    let w_psi = restrict(psi.exterior_derivative().eval_at(pt)?);
    let w_0 = restrict(omega0.exterior_derivative().eval_at(pt)?);
    let cross = [
        w_psi[1] * w_0[2] - w_psi[2] * w_0[1],
        w_psi[2] * w_0[0] - w_psi[0] * w_0[2],
        w_psi[0] * w_0[1] - w_psi[1] * w_0[0],
    ];
    let norm = |v: &[f64; 3]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok(u8::from(
        norm(&cross) <= tol * (1.0 + norm(&w_psi)) * norm(&w_0),
    ))
}

/// One row of the four-case table; `None` where the case coefficient vanishes.
#[derive(Clone, Debug, PartialEq)]
pub struct CauchyTableRow {
    pub point: JetPoint,
    pub dims: [Option<u8>; 4],
}

pub fn cauchy_table(
    g: &GeneralGmas,
    points: &[JetPoint],
    eps_zero: f64,
) -> Result<Vec<CauchyTableRow>, ClassifyError> {
    let conditions = Case::ALL.map(|case| CauchyCondition::new(g, case));
    let mut rows = Vec::with_capacity(points.len());
    for pt in points {
        let mut dims = [None; 4];
        for (slot, cond) in dims.iter_mut().zip(&conditions) {
            let cond = cond.as_ref().map_err(Clone::clone)?;
            match cond.dim_at(pt, eps_zero) {
                Ok(d) => *slot = Some(d),
                Err(ClassifyError::Model(ModelError::CoefficientVanishes { .. })) => {}
                Err(ClassifyError::Eval(_)) => {}
                Err(e) => return Err(e),
            }
        }
        rows.push(CauchyTableRow { point: *pt, dims });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Involutive {
    Yes,
    No,
    PointwiseOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvolutiveReport {
    pub verdict: Involutive,
    /// Largest `|E_inv|` seen over the box samples.
    pub max_residual: f64,
    pub witness: Option<JetPoint>,
}

/// Involutivity over `domain`: `Yes` when `E_inv` vanishes on the box,
/// `PointwiseOnly` when it fails on the box but vanishes at every pinned
/// point, `No` otherwise.
pub fn involutive_test(
    sys: &AlphaSystem,
    domain: &SampleBox,
    pinned: &[JetPoint],
    opts: &ClassifyOptions,
) -> Result<InvolutiveReport, ClassifyError> {
    let verdict = opts.zero_test().run(sys.e_inv(), domain)?;
    let witness = verdict.witness.as_ref().map(JetPoint::from_eval_point);
    let kind = if verdict.is_zero {
        Involutive::Yes
    } else if !pinned.is_empty() && pinned_zero(sys.e_inv(), pinned, opts)? {
        Involutive::PointwiseOnly
    } else {
        Involutive::No
    };
    Ok(InvolutiveReport {
        verdict: kind,
        max_residual: verdict.max_abs,
        witness,
    })
}

fn pinned_zero(
    e: &Expr,
    pinned: &[JetPoint],
    opts: &ClassifyOptions,
) -> Result<bool, ClassifyError> {
    for pt in pinned {
        let (v, s) = e.eval_with_scale(&pt.eval_point())?;
        if !opts.vanishes(v, s) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Genericity {
    Generic,
    NonGeneric,
    Mixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenericityReport {
    pub verdict: Genericity,
    pub min_abs_g: f64,
    pub max_abs_g: f64,
    pub positive_witness: Option<JetPoint>,
    pub negative_witness: Option<JetPoint>,
    pub zero_witness: Option<JetPoint>,
}

/// Sign survey of `G = 1 + x(α_y + qα_z)` over `domain`.
///
/// Generic needs every sample to be nonzero with one common sign (a sign
/// change means `G` vanishes inside the box); non-generic needs every sample
/// to vanish; anything else is mixed.
pub fn genericity_test(
    sys: &AlphaSystem,
    domain: &SampleBox,
    opts: &ClassifyOptions,
) -> Result<GenericityReport, ClassifyError> {
    let zt = opts.zero_test();
    let mut rng = StdRng::seed_from_u64(zt.seed);
    let mut report = GenericityReport {
        verdict: Genericity::Mixed,
        min_abs_g: f64::INFINITY,
        max_abs_g: 0.0,
        positive_witness: None,
        negative_witness: None,
        zero_witness: None,
    };
    let cap = zt.samples.saturating_mul(zt.retry_factor);
    let (mut valid, mut attempts) = (0, 0);
    let mut last_err = None;
    while valid < zt.samples {
        if attempts >= cap {
            return Err(SampleError::RetryCapExhausted {
                valid,
                wanted: zt.samples,
                attempts,
                last: last_err.expect("failures precede the cap"),
            }
            .into());
        }
        attempts += 1;
        let ep = domain.sample(&mut rng);
        let (g, scale) = match sys.g().eval_with_scale(&ep) {
            Ok(v) => v,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        valid += 1;
        let pt = JetPoint::from_eval_point(&ep);
        report.min_abs_g = report.min_abs_g.min(g.abs());
        report.max_abs_g = report.max_abs_g.max(g.abs());
        let slot = if opts.vanishes(g, scale) {
            &mut report.zero_witness
        } else if g > 0.0 {
            &mut report.positive_witness
        } else {
            &mut report.negative_witness
        };
        slot.get_or_insert(pt);
    }
    report.verdict = match (
        &report.positive_witness,
        &report.negative_witness,
        &report.zero_witness,
    ) {
        (_, _, Some(_))
            if report.positive_witness.is_none() && report.negative_witness.is_none() =>
        {
            Genericity::NonGeneric
        }
        (Some(_), None, None) | (None, Some(_), None) => Genericity::Generic,
        _ => Genericity::Mixed,
    };
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivedType {
    Type23,
    Type234,
    Undetermined,
}

impl std::fmt::Display for DerivedType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DerivedType::Type23 => "(2,3)",
            DerivedType::Type234 => "(2,3,4)",
            DerivedType::Undetermined => "undetermined",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminant {
    pub name: &'static str,
    pub expr: Expr,
    pub identically_zero: bool,
    pub max_abs: f64,
    pub witness: Option<JetPoint>,
}

impl Discriminant {
    fn sample(
        name: &'static str,
        expr: Expr,
        domain: &SampleBox,
        opts: &ClassifyOptions,
    ) -> Result<Self, ClassifyError> {
        let ZeroVerdict {
            is_zero,
            max_abs,
            witness,
            ..
        } = opts.zero_test().run(&expr, domain)?;
        let witness = witness.as_ref().map(JetPoint::from_eval_point);
        Ok(Self {
            name,
            expr,
            identically_zero: is_zero,
            max_abs,
            witness,
        })
    }

    pub fn value_at(&self, pt: &JetPoint) -> Result<f64, EvalError> {
        self.expr.eval(&pt.eval_point())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedTypeReport {
    pub derived_type: DerivedType,
    pub discriminants: Vec<Discriminant>,
    /// Reason when the type was not determined.
    pub note: Option<String>,
}

/// The two discriminants of the generic criterion.
pub fn generic_discriminants(sys: &AlphaSystem) -> (Expr, Expr) {
    let q = Expr::var(Var::Q);
    let a = sys.alpha();
    let (ap, az) = (sys.partial(Var::P), sys.partial(Var::Z));
    let h = sys.partial(Var::Y) + &q * az;
    let d1 = ap * &h - a * h.diff(Var::P) - h.diff(Var::Q) - az;
    let d2 = sys.second(Var::Y, Var::Y).clone()
        + 2.0 * &q * sys.second(Var::Y, Var::Z)
        + &q * &q * sys.second(Var::Z, Var::Z);
    (d1, d2)
}

/// `α_p + x α_z`, the non-generic discriminant.
pub fn nongeneric_discriminant(sys: &AlphaSystem) -> Expr {
    sys.partial(Var::P) + Expr::var(Var::X) * sys.partial(Var::Z)
}

fn require(
    sys: &AlphaSystem,
    domain: &SampleBox,
    opts: &ClassifyOptions,
    want: Genericity,
) -> Result<(), ClassifyError> {
    let inv = involutive_test(sys, domain, &[], opts)?;
    if inv.verdict != Involutive::Yes {
        return Err(ClassifyError::Precondition(format!(
            "system is not involutive on the box (max |E_inv| = {:e})",
            inv.max_residual
        )));
    }
    let gen = genericity_test(sys, domain, opts)?;
    if gen.verdict != want {
        return Err(ClassifyError::Precondition(format!(
            "expected {want:?} system, found {:?}",
            gen.verdict
        )));
    }
    Ok(())
}

pub fn derived_type_generic(
    sys: &AlphaSystem,
    domain: &SampleBox,
    opts: &ClassifyOptions,
) -> Result<DerivedTypeReport, ClassifyError> {
    require(sys, domain, opts, Genericity::Generic)?;
    let (d1, d2) = generic_discriminants(sys);
    let discriminants = vec![
        Discriminant::sample("D1", d1, domain, opts)?,
        Discriminant::sample("D2", d2, domain, opts)?,
    ];
    let zero = discriminants.iter().all(|d| d.identically_zero);
    Ok(DerivedTypeReport {
        derived_type: if zero {
            DerivedType::Type23
        } else {
            DerivedType::Type234
        },
        discriminants,
        note: None,
    })
}

pub fn derived_type_nongeneric(
    sys: &AlphaSystem,
    domain: &SampleBox,
    opts: &ClassifyOptions,
) -> Result<DerivedTypeReport, ClassifyError> {
    require(sys, domain, opts, Genericity::NonGeneric)?;
    let disc = Discriminant::sample(
        "alpha_p + x*alpha_z",
        nongeneric_discriminant(sys),
        domain,
        opts,
    )?;
    let ty = if disc.identically_zero {
        DerivedType::Type23
    } else {
        DerivedType::Type234
    };
    Ok(DerivedTypeReport {
        derived_type: ty,
        discriminants: vec![disc],
        note: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationReport {
    pub involutive: InvolutiveReport,
    pub genericity: GenericityReport,
    pub cauchy_dim_at: Vec<(JetPoint, u8)>,
    pub derived: DerivedTypeReport,
}

/// Full classification of an α-system over `domain`. The derived type is
/// only determined for involutive systems of a definite genericity.
pub fn classify(
    sys: &AlphaSystem,
    domain: &SampleBox,
    pinned: &[JetPoint],
    opts: &ClassifyOptions,
) -> Result<ClassificationReport, ClassifyError> {
    let involutive = involutive_test(sys, domain, pinned, opts)?;
    let genericity = genericity_test(sys, domain, opts)?;

    let condition = CauchyCondition::new(&sys.as_general(), Case::A)?;
    let mut probes = vec![JetPoint::from_eval_point(&domain.center())];
    let mut rng = StdRng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    probes.extend((0..4).map(|_| JetPoint::from_eval_point(&domain.sample(&mut rng))));
    probes.extend_from_slice(pinned);
    let mut cauchy_dim_at = Vec::new();
    for pt in probes {
        if let Ok(d) = condition.dim_at(&pt, opts.eps_zero) {
            cauchy_dim_at.push((pt, d));
        }
    }

    let undetermined = |note: String| DerivedTypeReport {
        derived_type: DerivedType::Undetermined,
        discriminants: Vec::new(),
        note: Some(note),
    };
    let derived = if involutive.verdict != Involutive::Yes {
        undetermined("refused: system is not involutive on the box".into())
    } else {
        match genericity.verdict {
            Genericity::Generic => derived_type_generic(sys, domain, opts)?,
            Genericity::NonGeneric => derived_type_nongeneric(sys, domain, opts)?,
            Genericity::Mixed => undetermined("refused: genericity is mixed on the box".into()),
        }
    };
    Ok(ClassificationReport {
        involutive,
        genericity,
        cauchy_dim_at,
        derived,
    })
}

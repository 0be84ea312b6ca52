//! Data model of the systems: jet-chart points, 1- and 2-forms with
//! symbolic coefficients, the general `(A, B, C, D)` system and the
//! α-system with its cached derived fields.

use std::fmt;

use thiserror::Error;

use crate::symexpr::{self, EvalError, EvalPoint, Expr, ParseError, SampleBox, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("expression uses `{0}`, which is not a jet coordinate")]
    UnsupportedVariable(Var),
    #[error("all four coefficients vanish identically")]
    AllCoefficientsZero,
    #[error("case {case} coefficient vanishes at the point (value {value:e})")]
    CoefficientVanishes { case: Case, value: f64 },
    #[error("derivative tag `{tag}` is not defined for case {case}")]
    UnknownTag { case: Case, tag: DerivTag },
    #[error("{field} disagrees with its defining combination (residual {residual:e})")]
    Inconsistent { field: &'static str, residual: f64 },
    #[error("factorization residual {residual:e} exceeds tolerance")]
    CongruenceFailed { residual: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Point `(x, y, z, p, q)` of the 1-jet chart.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct JetPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub p: f64,
    pub q: f64,
}

impl JetPoint {
    pub fn new(x: f64, y: f64, z: f64, p: f64, q: f64) -> Self {
        Self { x, y, z, p, q }
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.x, self.y, self.z, self.p, self.q]
    }

    pub fn eval_point(&self) -> EvalPoint {
        EvalPoint::jet(self.x, self.y, self.z, self.p, self.q)
    }

    /// Reads x, y, z, p, q from bindings; missing ones become 0.
    pub fn from_eval_point(pt: &EvalPoint) -> Self {
        let g = |v| pt.get(v).unwrap_or(0.0);
        Self::new(g(Var::X), g(Var::Y), g(Var::Z), g(Var::P), g(Var::Q))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }
}

/// Total derivative `d/dx = ∂x + p ∂z`.
pub fn total_dx(f: &Expr) -> Expr {
    f.diff(Var::X) + Expr::var(Var::P) * f.diff(Var::Z)
}

/// Total derivative `d/dy = ∂y + q ∂z`.
pub fn total_dy(f: &Expr) -> Expr {
    f.diff(Var::Y) + Expr::var(Var::Q) * f.diff(Var::Z)
}

/// 1-form in the basis dx, dy, dz, dp, dq.
#[derive(Clone, Debug, PartialEq)]
pub struct OneForm {
    pub coeffs: [Expr; 5],
}

impl OneForm {
    pub fn new(dx: Expr, dy: Expr, dz: Expr, dp: Expr, dq: Expr) -> Self {
        Self {
            coeffs: [dx, dy, dz, dp, dq],
        }
    }

    pub fn zero() -> Self {
        Self {
            coeffs: std::array::from_fn(|_| Expr::zero()),
        }
    }

    /// The differential of the i-th chart coordinate.
    pub fn basis(i: usize) -> Self {
        let mut f = Self::zero();
        f.coeffs[i] = Expr::one();
        f
    }

    pub fn coeff(&self, v: Var) -> &Expr {
        &self.coeffs[jet_index(v)]
    }

    pub fn scaled(&self, k: &Expr) -> Self {
        Self {
            coeffs: std::array::from_fn(|i| k * &self.coeffs[i]),
        }
    }

    pub fn plus(&self, other: &OneForm) -> Self {
        Self {
            coeffs: std::array::from_fn(|i| &self.coeffs[i] + &other.coeffs[i]),
        }
    }

    pub fn minus(&self, other: &OneForm) -> Self {
        Self {
            coeffs: std::array::from_fn(|i| &self.coeffs[i] - &other.coeffs[i]),
        }
    }

    pub fn eval_at(&self, pt: &JetPoint) -> Result<[f64; 5], EvalError> {
        let ep = pt.eval_point();
        let mut out = [0.0; 5];
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            *o = c.eval(&ep)?;
        }
        Ok(out)
    }

    /// Contraction with a tangent vector at `pt`.
    pub fn apply(&self, pt: &JetPoint, v: &[f64; 5]) -> Result<f64, EvalError> {
        let c = self.eval_at(pt)?;
        Ok(dot(&c, v))
    }

    pub fn exterior_derivative(&self) -> TwoForm {
        let mut out = TwoForm::zero();
        for i in 0..5 {
            for j in (i + 1)..5 {
                let c = self.coeffs[j].diff(Var::JET[i]) - self.coeffs[i].diff(Var::JET[j]);
                out.set(i, j, c);
            }
        }
        out
    }

    pub fn wedge(&self, other: &OneForm) -> TwoForm {
        let mut out = TwoForm::zero();
        for i in 0..5 {
            for j in (i + 1)..5 {
                let c = &self.coeffs[i] * &other.coeffs[j] - &self.coeffs[j] * &other.coeffs[i];
                out.set(i, j, c);
            }
        }
        out
    }
}

impl fmt::Display for OneForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (c, v) in self.coeffs.iter().zip(Var::JET) {
            if c.is_zero() {
                continue;
            }
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            if c.is_one() {
                write!(f, "d{v}")?;
            } else {
                write!(f, "({c})*d{v}")?;
            }
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

/// 2-form stored by its coefficients on `dx_i ∧ dx_j`, `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoForm {
    upper: [Expr; 10],
}

fn pair_index(i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < 5);
    // row offsets for i = 0..4 in the strict upper triangle
    const OFFSET: [usize; 4] = [0, 4, 7, 9];
    OFFSET[i] + (j - i - 1)
}

impl TwoForm {
    pub fn zero() -> Self {
        Self {
            upper: std::array::from_fn(|_| Expr::zero()),
        }
    }

    /// Coefficient of `dx_i ∧ dx_j`; antisymmetric in `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> Expr {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.upper[pair_index(i, j)].clone(),
            std::cmp::Ordering::Greater => -&self.upper[pair_index(j, i)],
            std::cmp::Ordering::Equal => Expr::zero(),
        }
    }

    pub fn set(&mut self, i: usize, j: usize, c: Expr) {
        if i < j {
            self.upper[pair_index(i, j)] = c;
        } else if j < i {
            self.upper[pair_index(j, i)] = -c;
        }
    }

    pub fn minus(&self, other: &TwoForm) -> Self {
        Self {
            upper: std::array::from_fn(|k| &self.upper[k] - &other.upper[k]),
        }
    }

    /// Antisymmetric coefficient matrix at `pt`.
    #[allow(clippy::needless_range_loop)]
    pub fn eval_at(&self, pt: &JetPoint) -> Result<[[f64; 5]; 5], EvalError> {
        let ep = pt.eval_point();
        let mut m = [[0.0; 5]; 5];
        for i in 0..5 {
            for j in (i + 1)..5 {
                let c = self.upper[pair_index(i, j)].eval(&ep)?;
                m[i][j] = c;
                m[j][i] = -c;
            }
        }
        Ok(m)
    }

    pub fn apply(&self, pt: &JetPoint, u: &[f64; 5], v: &[f64; 5]) -> Result<f64, EvalError> {
        let m = self.eval_at(pt)?;
        Ok(bilinear(&m, u, v))
    }
}

pub(crate) fn dot(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn bilinear(m: &[[f64; 5]; 5], u: &[f64; 5], v: &[f64; 5]) -> f64 {
    let mut s = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            s += u[i] * m[i][j] * v[j];
        }
    }
    s
}

fn jet_index(v: Var) -> usize {
    Var::JET
        .iter()
        .position(|&w| w == v)
        .expect("jet coordinate")
}

/// Orthonormal basis of the common kernel of the given covectors.
pub fn annihilated_subspace(covectors: &[[f64; 5]]) -> Vec<[f64; 5]> {
    let mut span: Vec<[f64; 5]> = Vec::new();
    let push = |span: &mut Vec<[f64; 5]>, mut v: [f64; 5]| {
        for b in span.iter() {
            let c = dot(&v, b);
            for k in 0..5 {
                v[k] -= c * b[k];
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-10 {
            span.push(v.map(|c| c / n));
        }
    };
    for r in covectors {
        let n = dot(r, r).sqrt();
        if n > 0.0 {
            push(&mut span, r.map(|c| c / n));
        }
    }
    let rank = span.len();
    for i in 0..5 {
        let mut e = [0.0; 5];
        e[i] = 1.0;
        push(&mut span, e);
    }
    span.split_off(rank)
}

/// Largest absolute value of `form` on pairs of vectors annihilated by all
/// of `ideal`, i.e. how far `form` is from lying in the ideal at `pt`.
pub fn congruence_residual(
    form: &TwoForm,
    ideal: &[&OneForm],
    pt: &JetPoint,
) -> Result<f64, EvalError> {
    let rows = ideal
        .iter()
        .map(|f| f.eval_at(pt))
        .collect::<Result<Vec<_>, _>>()?;
    let basis = annihilated_subspace(&rows);
    let m = form.eval_at(pt)?;
    let mut worst: f64 = 0.0;
    for a in 0..basis.len() {
        for b in (a + 1)..basis.len() {
            worst = worst.max(bilinear(&m, &basis[a], &basis[b]).abs());
        }
    }
    Ok(worst)
}

/// Contact form `ω₀ = dz − p dx − q dy`.
pub fn contact_form() -> OneForm {
    OneForm::new(
        -Expr::var(Var::P),
        -Expr::var(Var::Q),
        Expr::one(),
        Expr::zero(),
        Expr::zero(),
    )
}

/// Which coefficient of `Ψ = A dp + B dq + C dx + D dy` is used to solve
/// for one differential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Case {
    A,
    B,
    C,
    D,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::A, Case::B, Case::C, Case::D];

    /// The three reduced-derivative tags available in this case.
    pub fn tags(self) -> [DerivTag; 3] {
        use DerivTag::*;
        match self {
            Case::A => [X, Y, Q],
            Case::B => [X, Y, P],
            Case::C => [Y, P, Q],
            Case::D => [X, P, Q],
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::A => "A",
            Case::B => "B",
            Case::C => "C",
            Case::D => "D",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DerivTag {
    X,
    Y,
    P,
    Q,
}

impl fmt::Display for DerivTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DerivTag::X => "x",
            DerivTag::Y => "y",
            DerivTag::P => "p",
            DerivTag::Q => "q",
        })
    }
}

fn check_jet_only(e: &Expr) -> Result<(), ModelError> {
    match e.free_vars().into_iter().find(|v| !Var::JET.contains(v)) {
        Some(v) => Err(ModelError::UnsupportedVariable(v)),
        None => Ok(()),
    }
}

/// General system with `Ψ = A dp + B dq + C dx + D dy`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralGmas {
    pub a: Expr,
    pub b: Expr,
    pub c: Expr,
    pub d: Expr,
}

impl GeneralGmas {
    pub fn new(a: Expr, b: Expr, c: Expr, d: Expr) -> Result<Self, ModelError> {
        for e in [&a, &b, &c, &d] {
            check_jet_only(e)?;
        }
        let all_zero = [&a, &b, &c, &d].iter().all(|e| {
            symexpr::is_identically_zero(e, &SampleBox::jet_unit(), 20, 0.0).unwrap_or(false)
        });
        if all_zero {
            return Err(ModelError::AllCoefficientsZero);
        }
        Ok(Self { a, b, c, d })
    }

    pub fn parse(a: &str, b: &str, c: &str, d: &str) -> Result<Self, ModelError> {
        Self::new(
            symexpr::parse(a)?,
            symexpr::parse(b)?,
            symexpr::parse(c)?,
            symexpr::parse(d)?,
        )
    }

    pub fn coefficient(&self, case: Case) -> &Expr {
        match case {
            Case::A => &self.a,
            Case::B => &self.b,
            Case::C => &self.c,
            Case::D => &self.d,
        }
    }

    pub fn psi(&self) -> OneForm {
        OneForm::new(
            self.c.clone(),
            self.d.clone(),
            Expr::zero(),
            self.a.clone(),
            self.b.clone(),
        )
    }

    fn require_nonzero(&self, case: Case, pt: &JetPoint) -> Result<f64, ModelError> {
        let value = self.coefficient(case).eval(&pt.eval_point())?;
        if value.abs() <= 1e-12 {
            return Err(ModelError::CoefficientVanishes { case, value });
        }
        Ok(value)
    }
}

/// Reduced derivative `f_{tag,case}`; `d/dx` and `d/dy` are total
/// derivatives along the contact distribution.
pub fn reduced_derivative(
    f: &Expr,
    g: &GeneralGmas,
    case: Case,
    tag: DerivTag,
) -> Result<Expr, ModelError> {
    if !case.tags().contains(&tag) {
        return Err(ModelError::UnknownTag { case, tag });
    }
    let (a, b, c, d) = (&g.a, &g.b, &g.c, &g.d);
    let fx = || total_dx(f);
    let fy = || total_dy(f);
    let fp = || f.diff(Var::P);
    let fq = || f.diff(Var::Q);
    use DerivTag as T;
    Ok(match (case, tag) {
        (Case::A, T::X) => fx() - c / a * fp(),
        (Case::A, T::Y) => fy() - d / a * fp(),
        (Case::A, T::Q) => fq() - b / a * fp(),
        (Case::B, T::X) => fx() - c / b * fq(),
        (Case::B, T::Y) => fy() - d / b * fq(),
        (Case::B, T::P) => fp() - a / b * fq(),
        (Case::C, T::Y) => fy() - d / c * fx(),
        (Case::C, T::P) => fp() - a / c * fx(),
        (Case::C, T::Q) => fq() - b / c * fx(),
        (Case::D, T::X) => fx() - c / d * fy(),
        (Case::D, T::P) => fp() - a / d * fy(),
        (Case::D, T::Q) => fq() - b / d * fy(),
        _ => unreachable!("tag membership checked above"),
    })
}

/// The pair `(η₁, η₂)` with `dω₀ ≡ η₁ ∧ η₂ mod ω₀, Ψ`, for the chosen case.
/// The congruence is checked at `pt` before returning.
pub fn eta_factorization(
    g: &GeneralGmas,
    case: Case,
    pt: &JetPoint,
) -> Result<(OneForm, OneForm), ModelError> {
    g.require_nonzero(case, pt)?;
    let (a, b, c, d) = (&g.a, &g.b, &g.c, &g.d);
    let o = Expr::one;
    let z = Expr::zero;
    let (eta1, eta2) = match case {
        Case::A => (
            OneForm::new(-(b / a), o(), z(), z(), z()),
            OneForm::new(d / a, z(), z(), z(), o()),
        ),
        Case::B => (
            OneForm::new(o(), -(a / b), z(), z(), z()),
            OneForm::new(z(), c / b, z(), o(), z()),
        ),
        Case::C => (
            OneForm::new(z(), o(), z(), b / c, z()),
            OneForm::new(z(), z(), z(), -(d / c), o()),
        ),
        Case::D => (
            OneForm::new(o(), z(), z(), z(), a / d),
            OneForm::new(z(), z(), z(), o(), -(c / d)),
        ),
    };
    let omega0 = contact_form();
    let diff = omega0.exterior_derivative().minus(&eta1.wedge(&eta2));
    let residual = congruence_residual(&diff, &[&omega0, &g.psi()], pt)?;
    let ep = pt.eval_point();
    let largest = [a, b, c, d]
        .iter()
        .try_fold(0.0f64, |m, e| e.eval(&ep).map(|v| m.max(v.abs())))?;
    let ratio = largest / g.coefficient(case).eval(&ep)?.abs();
    if residual > 1e-9 * (1.0 + ratio * ratio) {
        return Err(ModelError::CongruenceFailed { residual });
    }
    Ok((eta1, eta2))
}

/// α-system: `Ψ = dp − α dq`, with cached partials and derived fields.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaSystem {
    alpha: Expr,
    first: [Expr; 5],
    second: [[Expr; 5]; 5],
    e_inv: Expr,
    g: Expr,
    rho: Expr,
    beta: Expr,
    k: Expr,
    l: Expr,
}

impl AlphaSystem {
    pub fn new(alpha: Expr) -> Result<Self, ModelError> {
        check_jet_only(&alpha)?;
        let first: [Expr; 5] = Var::JET.map(|v| alpha.diff(v));
        let second: [[Expr; 5]; 5] = std::array::from_fn(|i| {
            std::array::from_fn(|j| first[i.min(j)].diff(Var::JET[i.max(j)]))
        });
        let [ax, ay, az, ap, aq] = first.clone();
        let (x, y, p, q) = (
            Expr::var(Var::X),
            Expr::var(Var::Y),
            Expr::var(Var::P),
            Expr::var(Var::Q),
        );
        let h = &ay + &q * &az;
        let e_inv = &ax + &p * &az - &alpha * &h;
        let g = 1.0 + &x * &h;
        let rho = 1.0 / &g;
        let beta = &y + &alpha * &x;
        let l = &aq + &alpha * &ap;
        let k = &x * &l;
        let sys = Self {
            alpha,
            first,
            second,
            e_inv,
            g,
            rho,
            beta,
            k,
            l,
        };
        sys.spot_check()?;
        Ok(sys)
    }

    pub fn parse(source: &str) -> Result<Self, ModelError> {
        Self::new(symexpr::parse(source)?)
    }

    fn spot_check(&self) -> Result<(), ModelError> {
        let probes = [
            JetPoint::new(1.25, 1.5, 1.75, 1.375, 1.625),
            JetPoint::new(1.8, 1.1, 1.4, 1.9, 1.3),
            JetPoint::new(-0.7, 0.3, -1.2, 0.45, 2.2),
        ];
        for pt in probes {
            let ep = pt.eval_point();
            let Ok(a) = self.alpha.eval(&ep) else {
                continue;
            };
            let Ok(d) = self
                .first
                .iter()
                .map(|e| e.eval(&ep))
                .collect::<Result<Vec<_>, _>>()
            else {
                continue;
            };
            let h = d[1] + pt.q * d[2];
            let want = [
                ("E_inv", &self.e_inv, d[0] + pt.p * d[2] - a * h),
                ("G", &self.g, 1.0 + pt.x * h),
                ("beta", &self.beta, pt.y + a * pt.x),
                ("K", &self.k, pt.x * (d[4] + a * d[3])),
                ("L", &self.l, d[4] + a * d[3]),
            ];
            for (field, e, v) in want {
                let Ok((got, scale)) = e.eval_with_scale(&ep) else {
                    continue;
                };
                let residual = (got - v).abs();
                if residual > 1e-9 * (1.0 + scale) {
                    return Err(ModelError::Inconsistent { field, residual });
                }
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> &Expr {
        &self.alpha
    }

    /// First partial `α_v`.
    pub fn partial(&self, v: Var) -> &Expr {
        &self.first[jet_index(v)]
    }

    /// Second partial `α_{uv}`.
    pub fn second(&self, u: Var, v: Var) -> &Expr {
        &self.second[jet_index(u)][jet_index(v)]
    }

    pub fn e_inv(&self) -> &Expr {
        &self.e_inv
    }

    pub fn g(&self) -> &Expr {
        &self.g
    }

    pub fn rho(&self) -> &Expr {
        &self.rho
    }

    pub fn beta(&self) -> &Expr {
        &self.beta
    }

    pub fn k(&self) -> &Expr {
        &self.k
    }

    pub fn l(&self) -> &Expr {
        &self.l
    }

    /// The same system written as `A = 1, B = −α, C = D = 0`.
    pub fn as_general(&self) -> GeneralGmas {
        GeneralGmas {
            a: Expr::one(),
            b: -&self.alpha,
            c: Expr::zero(),
            d: Expr::zero(),
        }
    }

    /// `α` and its five first partials at `pt`.
    pub fn eval_first(&self, pt: &JetPoint) -> Result<(f64, [f64; 5]), EvalError> {
        let ep = pt.eval_point();
        let a = self.alpha.eval(&ep)?;
        let mut d = [0.0; 5];
        for (o, e) in d.iter_mut().zip(&self.first) {
            *o = e.eval(&ep)?;
        }
        Ok((a, d))
    }
}

/// `(ω₀, Ψ)` with `Ψ = dp − α dq`.
pub fn canonical_forms(sys: &AlphaSystem) -> (OneForm, OneForm) {
    let psi = OneForm::new(
        Expr::zero(),
        Expr::zero(),
        Expr::zero(),
        Expr::one(),
        -sys.alpha(),
    );
    (contact_form(), psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::parse;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_point(rng: &mut StdRng) -> JetPoint {
        JetPoint::from_array(std::array::from_fn(|_| rng.gen_range(1.0..2.0)))
    }

    #[test]
    fn canonical_forms_examples() {
        let sys = AlphaSystem::parse("q").unwrap();
        let (omega0, psi) = canonical_forms(&sys);
        let pt = JetPoint::new(1.0, 2.0, 3.0, 4.0, 5.0);
        let c = psi.eval_at(&pt).unwrap();
        assert_eq!((c[3], c[4]), (1.0, -5.0));
        assert_eq!(omega0.apply(&pt, &[1.0, 0.0, pt.p, 0.0, 0.0]).unwrap(), 0.0);
        let zero = AlphaSystem::parse("0").unwrap();
        let (_, psi) = canonical_forms(&zero);
        assert_eq!(psi, OneForm::basis(3));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn d_omega0_is_symplectic_pairing() {
        let d = contact_form().exterior_derivative();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let m = d.eval_at(&random_point(&mut rng)).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    let want = match (i, j) {
                        (0, 3) | (1, 4) => 1.0,
                        (3, 0) | (4, 1) => -1.0,
                        _ => 0.0,
                    };
                    assert_eq!(m[i][j], want);
                }
            }
        }
    }

    #[test]
    fn g_times_rho_is_one() {
        let mut rng = StdRng::seed_from_u64(4);
        for src in ["q", "p + q^2", "y", "z*p - x*q", "sin(x*y) + q"] {
            let sys = AlphaSystem::parse(src).unwrap();
            for _ in 0..50 {
                let ep = random_point(&mut rng).eval_point();
                let g = sys.g().eval(&ep).unwrap();
                if g.abs() > 1e-8 {
                    let prod = g * sys.rho().eval(&ep).unwrap();
                    assert!((prod - 1.0).abs() < 1e-12, "{src}");
                }
            }
        }
    }

    #[test]
    fn reduced_derivative_examples() {
        let g = GeneralGmas::parse("1", "-q", "0", "0").unwrap();
        let pt = JetPoint::new(1.1, 1.2, 1.3, 1.4, 1.5).eval_point();
        let z = Expr::var(Var::Z);
        let fx = reduced_derivative(&z, &g, Case::A, DerivTag::X).unwrap();
        assert_eq!(fx.eval(&pt).unwrap(), 1.4);
        let p = Expr::var(Var::P);
        let fq = reduced_derivative(&p, &g, Case::A, DerivTag::Q).unwrap();
        assert_eq!(fq.eval(&pt).unwrap(), 1.5);
        assert_eq!(
            reduced_derivative(&p, &g, Case::A, DerivTag::P).unwrap_err(),
            ModelError::UnknownTag {
                case: Case::A,
                tag: DerivTag::P
            }
        );
        // d/dy uses ∂y, not ∂x
        let y = Expr::var(Var::Y);
        let fy = reduced_derivative(&y, &g, Case::A, DerivTag::Y).unwrap();
        assert_eq!(fy.eval(&pt).unwrap(), 1.0);
    }

    #[test]
    fn reduced_derivative_of_alpha_matches_finite_differences() {
        let sys = AlphaSystem::parse("sin(x*y) + z*q - p^2/x").unwrap();
        let g = sys.as_general();
        let fx = reduced_derivative(sys.alpha(), &g, Case::A, DerivTag::X).unwrap();
        let mut rng = StdRng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..100 {
            let pt = random_point(&mut rng);
            let f = |dx: f64| {
                let shifted = JetPoint {
                    x: pt.x + dx,
                    z: pt.z + pt.p * dx,
                    ..pt
                };
                sys.alpha().eval(&shifted.eval_point()).unwrap()
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let got = fx.eval(&pt.eval_point()).unwrap();
            assert!((got - fd).abs() < 1e-7 * (1.0 + got.abs()));
        }
    }

    #[test]
    fn eta_factorization_cases() {
        let pt = JetPoint::new(1.2, 1.4, 1.6, 1.8, 1.3);
        let sys = AlphaSystem::parse("p*q + z").unwrap();
        let (e1, e2) = eta_factorization(&sys.as_general(), Case::A, &pt).unwrap();
        let c1 = e1.eval_at(&pt).unwrap();
        let alpha = sys.alpha().eval(&pt.eval_point()).unwrap();
        assert_eq!(c1, [alpha, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(e2.eval_at(&pt).unwrap(), [0.0, 0.0, 0.0, 0.0, 1.0]);

        let g = GeneralGmas::parse("0", "0", "1", "0").unwrap();
        let (e1, e2) = eta_factorization(&g, Case::C, &pt).unwrap();
        assert_eq!(e1.eval_at(&pt).unwrap(), [0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(e2.eval_at(&pt).unwrap(), [0.0, 0.0, 0.0, 0.0, 1.0]);

        let g = GeneralGmas::parse("1", "y - 1.4", "0", "0").unwrap();
        assert!(matches!(
            eta_factorization(&g, Case::B, &pt),
            Err(ModelError::CoefficientVanishes { case: Case::B, .. })
        ));
    }

    #[test]
    fn eta_factorization_all_cases_general_coefficients() {
        let g = GeneralGmas::parse("1 + x*p", "q - 3", "z + y^2", "2 + sin(x*q)").unwrap();
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..50 {
            let pt = random_point(&mut rng);
            for case in Case::ALL {
                eta_factorization(&g, case, &pt).unwrap();
            }
        }
    }

    #[test]
    fn alpha_system_wedge_lies_in_ideal() {
        let sys = AlphaSystem::parse("z - p*x - q*y").unwrap();
        let (omega0, psi) = canonical_forms(&sys);
        let eta1 = OneForm::new(
            sys.alpha().clone(),
            Expr::one(),
            Expr::zero(),
            Expr::zero(),
            Expr::zero(),
        );
        let eta2 = OneForm::basis(4);
        let diff = eta1.wedge(&eta2).minus(&omega0.exterior_derivative());
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let r = congruence_residual(&diff, &[&omega0, &psi], &random_point(&mut rng)).unwrap();
            assert!(r < 1e-9);
        }
    }

    #[test]
    fn rejects_non_jet_variables() {
        assert_eq!(
            AlphaSystem::parse("q + t").unwrap_err(),
            ModelError::UnsupportedVariable(Var::T)
        );
        assert!(matches!(
            GeneralGmas::parse("0", "0", "0", "0"),
            Err(ModelError::AllCoefficientsZero)
        ));
    }

    #[test]
    fn second_partials_symmetric() {
        let sys = AlphaSystem::parse("x*y^2*z + p*q^3").unwrap();
        let ep = JetPoint::new(1.1, 1.2, 1.3, 1.4, 1.5).eval_point();
        for u in Var::JET {
            for v in Var::JET {
                let a = sys.second(u, v).eval(&ep).unwrap();
                let b = sys.second(v, u).eval(&ep).unwrap();
                assert_eq!(a, b);
            }
        }
        let direct = parse("2*y*z").unwrap().eval(&ep).unwrap();
        assert_eq!(sys.second(Var::X, Var::Y).eval(&ep).unwrap(), direct);
    }
}

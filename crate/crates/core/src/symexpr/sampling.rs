use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use super::{EvalError, EvalPoint, Expr, Var};

/// Axis-aligned box of variable ranges used for random sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBox {
    ranges: [Option<(f64, f64)>; 10],
}

impl Default for SampleBox {
    fn default() -> Self {
        Self::jet_unit()
    }
}

impl SampleBox {
    pub fn empty() -> Self {
        Self { ranges: [None; 10] }
    }

    /// `[1,2]` in each of x, y, z, p, q.
    pub fn jet_unit() -> Self {
        Self::jet_cube(1.0, 2.0)
    }

    pub fn jet_cube(lo: f64, hi: f64) -> Self {
        Var::JET
            .iter()
            .fold(Self::empty(), |b, &v| b.with(v, lo, hi))
    }

    pub fn with(mut self, v: Var, lo: f64, hi: f64) -> Self {
        self.ranges[v.index()] = Some((lo.min(hi), lo.max(hi)));
        self
    }

    pub fn range(&self, v: Var) -> Option<(f64, f64)> {
        self.ranges[v.index()]
    }

    pub fn vars(&self) -> impl Iterator<Item = (Var, (f64, f64))> + '_ {
        Var::ALL
            .iter()
            .filter_map(move |&v| self.range(v).map(|r| (v, r)))
    }

    pub fn center(&self) -> EvalPoint {
        let mut pt = EvalPoint::new();
        for (v, (lo, hi)) in self.vars() {
            pt.set(v, 0.5 * (lo + hi));
        }
        pt
    }

    /// Box with every side scaled by `factor` about the same center.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for (v, (lo, hi)) in self.vars() {
            let c = 0.5 * (lo + hi);
            let h = 0.5 * (hi - lo) * factor;
            out.ranges[v.index()] = Some((c - h, c + h));
        }
        out
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> EvalPoint {
        let mut pt = EvalPoint::new();
        for (v, (lo, hi)) in self.vars() {
            let x = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            pt.set(v, x);
        }
        pt
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SampleError {
    #[error("only {valid} of {wanted} samples were evaluable after {attempts} draws; last error: {last}")]
    RetryCapExhausted {
        valid: usize,
        wanted: usize,
        attempts: usize,
        last: EvalError,
    },
    #[error("sample count must be at least 1")]
    NoSamples,
}

/// Outcome of a sampled zero test, with the worst sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroVerdict {
    pub is_zero: bool,
    /// Largest `|e| / (1 + scale)` over the samples.
    pub max_normalized: f64,
    /// Largest raw `|e|` over the samples.
    pub max_abs: f64,
    /// Sample at which the normalized value was largest.
    pub witness: Option<EvalPoint>,
}

/// Probabilistic test that an expression vanishes on an open box.
///
/// A sample passes when `|e| <= tol * (1 + scale)`, with `scale` the largest
/// absolute subterm value at that sample. Samples that hit a domain error
/// are redrawn, up to `retry_factor * samples` draws in total.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroTest {
    pub samples: usize,
    pub tol: f64,
    pub seed: u64,
    pub retry_factor: usize,
}

impl Default for ZeroTest {
    fn default() -> Self {
        Self {
            samples: 200,
            tol: 1e-9,
            seed: 0x5eed_2024,
            retry_factor: 20,
        }
    }
}

impl ZeroTest {
    pub fn new(samples: usize, tol: f64) -> Self {
        Self {
            samples,
            tol,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn run(&self, e: &Expr, domain: &SampleBox) -> Result<ZeroVerdict, SampleError> {
        if self.samples == 0 {
            return Err(SampleError::NoSamples);
        }
        let mut rng = StdRng::seed_from_u64(self.seed);
        let cap = self.samples.saturating_mul(self.retry_factor.max(1));
        let mut verdict = ZeroVerdict {
            is_zero: true,
            max_normalized: 0.0,
            max_abs: 0.0,
            witness: None,
        };
        let mut valid = 0;
        let mut attempts = 0;
        let mut last_err = None;
        while valid < self.samples {
            if attempts >= cap {
                return Err(SampleError::RetryCapExhausted {
                    valid,
                    wanted: self.samples,
                    attempts,
                    last: last_err.expect("cap reached only after failures"),
                });
            }
            attempts += 1;
            let pt = domain.sample(&mut rng);
            match e.eval_with_scale(&pt) {
                Ok((v, scale)) => {
                    valid += 1;
                    let normalized = v.abs() / (1.0 + scale);
                    verdict.max_abs = verdict.max_abs.max(v.abs());
                    if verdict.witness.is_none() || normalized > verdict.max_normalized {
                        verdict.max_normalized = normalized;
                        verdict.witness = Some(pt);
                    }
                    if v.abs() > self.tol * (1.0 + scale) {
                        verdict.is_zero = false;
                    }
                }
                Err(err) => last_err = Some(err),
            }
        }
        Ok(verdict)
    }
}

/// Sampled zero test with a fixed default seed; see [`ZeroTest`].
pub fn is_identically_zero(
    e: &Expr,
    domain: &SampleBox,
    samples: usize,
    tol: f64,
) -> Result<bool, SampleError> {
    ZeroTest::new(samples, tol)
        .run(e, domain)
        .map(|v| v.is_zero)
}

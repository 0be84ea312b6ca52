//! Flat `key = value` run configurations.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::verify::Patch;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}` (`{value}`): {reason}")]
    Invalid {
        key: String,
        value: String,
        reason: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeChoice {
    Auto,
    Generic,
    NonGeneric,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Relative zero threshold of the singularity criteria.
    pub eps_zero: f64,
    pub newton_tol: f64,
    pub locate_tol: f64,
    /// Zero threshold of the symbolic classification tests.
    pub classify_eps: f64,
    pub contact_gate: f64,
    pub psi_gate: f64,
    pub pde_gate: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_zero: 1e-6,
            newton_tol: 1e-12,
            locate_tol: 1e-10,
            classify_eps: 1e-9,
            contact_gate: 1e-6,
            psi_gate: 1e-6,
            pde_gate: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outputs {
    pub csv: PathBuf,
    pub obj: PathBuf,
    pub markers: PathBuf,
    pub report: PathBuf,
    pub classify_report: PathBuf,
}

impl Outputs {
    fn from_prefix(prefix: &Path) -> Self {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        Self {
            csv: with(".csv"),
            obj: with(".obj"),
            markers: with("_markers.csv"),
            report: with("_report.txt"),
            classify_report: with("_classify.txt"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub alpha: String,
    pub mode: ModeChoice,
    pub seed_xi: Option<String>,
    pub t0: f64,
    pub mu0: f64,
    pub t_range: (f64, f64),
    pub s_range: (f64, f64),
    pub grid: (usize, usize),
    pub step: f64,
    pub tolerances: Tolerances,
    pub x0_ref: f64,
    /// Sampling box for the classification tests, in `x, y, z, p, q` order.
    pub domain: [(f64, f64); 5],
    /// Coefficients `(A, B, C, D)` of a general system for the Cauchy table.
    pub general: Option<[String; 4]>,
    pub pde_patch: Option<Patch>,
    pub outputs: Outputs,
}

const KEYS: &[&str] = &[
    "alpha",
    "mode",
    "xi",
    "t0",
    "mu0",
    "t_range",
    "s_range",
    "grid",
    "step",
    "eps_zero",
    "newton_tol",
    "locate_tol",
    "classify_eps",
    "contact_gate",
    "psi_gate",
    "pde_gate",
    "x0_ref",
    "box",
    "box_x",
    "box_y",
    "box_z",
    "box_p",
    "box_q",
    "a",
    "b",
    "c",
    "d",
    "pde_patch",
    "output_prefix",
    "csv_path",
    "obj_path",
    "markers_path",
    "report_path",
    "classify_report_path",
];

/// Keys accepted by `--tolerance-override`.
pub const TOLERANCE_KEYS: &[&str] = &[
    "eps_zero",
    "newton_tol",
    "locate_tol",
    "classify_eps",
    "contact_gate",
    "psi_gate",
    "pde_gate",
];

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn real(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| invalid(key, value, "not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, value, "not finite"))
    }
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v = real(key, value)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, value, "must be positive"))
    }
}

fn list<'a>(key: &str, value: &'a str, n: usize) -> Result<Vec<&'a str>, ConfigError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() == n && parts.iter().all(|p| !p.is_empty()) {
        Ok(parts)
    } else {
        Err(invalid(
            key,
            value,
            format!("expected {n} comma-separated values"),
        ))
    }
}

fn range(key: &str, value: &str) -> Result<(f64, f64), ConfigError> {
    let parts = list(key, value, 2)?;
    let (lo, hi) = (real(key, parts[0])?, real(key, parts[1])?);
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err(invalid(key, value, "range is empty"))
    }
}

fn counts(key: &str, value: &str) -> Result<(usize, usize), ConfigError> {
    let parts = list(key, value, 2)?;
    let n = |s: &str| -> Result<usize, ConfigError> {
        let n: usize = s.parse().map_err(|_| invalid(key, value, "not a count"))?;
        if n >= 2 {
            Ok(n)
        } else {
            Err(invalid(key, value, "counts must be at least 2"))
        }
    };
    Ok((n(parts[0])?, n(parts[1])?))
}

fn patch(key: &str, value: &str) -> Result<Patch, ConfigError> {
    let parts = list(key, value, 4)?;
    let mut idx = [0usize; 4];
    for (slot, p) in idx.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| invalid(key, value, "not an index"))?;
    }
    let [i0, i1, j0, j1] = idx;
    if i0 < i1 && j0 < j1 {
        Ok(Patch { i0, i1, j0, j1 })
    } else {
        Err(invalid(key, value, "expected i0 < i1, j0 < j1"))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let stem = path
            .file_stem()
            .map_or_else(|| "gmae".into(), |s| s.to_string_lossy().into_owned());
        Self::parse(&text, base, &stem)
    }

    /// Parses configuration text. Relative output paths resolve against
    /// `base`; the default output prefix is `base/stem`.
    pub fn parse(text: &str, base: &Path, stem: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        let mut seen = BTreeSet::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.trim().into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.trim().into(),
                });
            }
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.into(),
                });
            }
            entries.push((line, key.into(), value.into()));
        }
        let get = |key: &str| {
            entries
                .iter()
                .find(|(_, k, _)| k == key)
                .map(|(_, _, v)| v.as_str())
        };

        let alpha = get("alpha")
            .ok_or(ConfigError::Missing("alpha"))?
            .to_string();
        let mode = match get("mode").unwrap_or("auto") {
            "auto" => ModeChoice::Auto,
            "generic" => ModeChoice::Generic,
            "nongeneric" | "non-generic" => ModeChoice::NonGeneric,
            other => {
                return Err(invalid(
                    "mode",
                    other,
                    "expected auto, generic or nongeneric",
                ))
            }
        };
        let opt_real = |key: &str, default: f64| get(key).map_or(Ok(default), |v| real(key, v));
        let opt_pos = |key: &str, default: f64| get(key).map_or(Ok(default), |v| positive(key, v));
        let opt_range =
            |key: &str, default: (f64, f64)| get(key).map_or(Ok(default), |v| range(key, v));

        let defaults = Tolerances::default();
        let tolerances = Tolerances {
            eps_zero: opt_pos("eps_zero", defaults.eps_zero)?,
            newton_tol: opt_pos("newton_tol", defaults.newton_tol)?,
            locate_tol: opt_pos("locate_tol", defaults.locate_tol)?,
            classify_eps: opt_pos("classify_eps", defaults.classify_eps)?,
            contact_gate: opt_pos("contact_gate", defaults.contact_gate)?,
            psi_gate: opt_pos("psi_gate", defaults.psi_gate)?,
            pde_gate: get("pde_gate")
                .map(|v| positive("pde_gate", v))
                .transpose()?,
        };

        let cube = opt_range("box", (1.0, 2.0))?;
        let mut domain = [cube; 5];
        for (slot, key) in domain
            .iter_mut()
            .zip(["box_x", "box_y", "box_z", "box_p", "box_q"])
        {
            *slot = opt_range(key, *slot)?;
        }

        let general = if ["a", "b", "c", "d"].iter().any(|k| get(k).is_some()) {
            Some(["a", "b", "c", "d"].map(|k| get(k).unwrap_or("0").to_string()))
        } else {
            None
        };

        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let prefix = get("output_prefix").map_or_else(|| base.join(stem), resolve);
        let mut outputs = Outputs::from_prefix(&prefix);
        for (key, slot) in [
            ("csv_path", &mut outputs.csv),
            ("obj_path", &mut outputs.obj),
            ("markers_path", &mut outputs.markers),
            ("report_path", &mut outputs.report),
            ("classify_report_path", &mut outputs.classify_report),
        ] {
            if let Some(v) = get(key) {
                *slot = resolve(v);
            }
        }

        Ok(Self {
            alpha,
            mode,
            seed_xi: get("xi").map(str::to_string),
            t0: opt_real("t0", 0.0)?,
            mu0: opt_real("mu0", 0.0)?,
            t_range: opt_range("t_range", (-0.5, 0.5))?,
            s_range: opt_range("s_range", (-0.5, 0.5))?,
            grid: get("grid").map_or(Ok((51, 51)), |v| counts("grid", v))?,
            step: opt_pos("step", 1e-3)?,
            tolerances,
            x0_ref: opt_real("x0_ref", 1.0)?,
            domain,
            general,
            pde_patch: get("pde_patch")
                .map(|v| patch("pde_patch", v))
                .transpose()?,
            outputs,
        })
    }

    /// Applies one `key=value` tolerance override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(invalid(
                "--tolerance-override",
                assignment,
                "expected key=value",
            ));
        };
        let (key, value) = (key.trim(), value.trim());
        let tol = &mut self.tolerances;
        let slot = match key {
            "eps_zero" => &mut tol.eps_zero,
            "newton_tol" => &mut tol.newton_tol,
            "locate_tol" => &mut tol.locate_tol,
            "classify_eps" => &mut tol.classify_eps,
            "contact_gate" => &mut tol.contact_gate,
            "psi_gate" => &mut tol.psi_gate,
            "pde_gate" => {
                tol.pde_gate = Some(positive(key, value)?);
                return Ok(());
            }
            _ => {
                return Err(invalid(
                    "--tolerance-override",
                    assignment,
                    format!(
                        "unknown tolerance; expected one of {}",
                        TOLERANCE_KEYS.join(", ")
                    ),
                ))
            }
        };
        *slot = positive(key, value)?;
        Ok(())
    }
}

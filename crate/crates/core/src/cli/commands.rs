//! The three pipeline commands.

use std::fmt::Write as _;
use std::path::Path;

use rand::rngs::StdRng;
use rand::SeedableRng;

use super::config::{ModeChoice, RunConfig};
use super::table::{self, kind_name, node_marks, num};
use super::CliError;
use crate::classify::{
    cauchy_table, classify, involutive_test, ClassificationReport, ClassifyError, ClassifyOptions,
    Genericity, Involutive,
};
use crate::model::{AlphaSystem, GeneralGmas, JetPoint};
use crate::reduction::{Mode, NewtonOptions};
use crate::singularity::{Analyzer, SingularityOptions, SingularityReport};
use crate::solver::{
    solve_surface, IntegralSurface, MuOptions, SeedCurve, SolverError, SurfaceGrid,
};
use crate::symexpr::{SampleBox, Var};
use crate::verify::{
    discrete_pullback_residuals, fd_crosscheck_suite, fd_domain, pde_residual_on_graph,
    pullback_residuals, Patch, PdeResiduals, VerifyError,
};

fn sample_box(cfg: &RunConfig) -> SampleBox {
    Var::JET
        .iter()
        .zip(cfg.domain)
        .fold(SampleBox::empty(), |b, (&v, (lo, hi))| b.with(v, lo, hi))
}

fn classify_options(cfg: &RunConfig) -> ClassifyOptions {
    ClassifyOptions {
        eps_zero: cfg.tolerances.classify_eps,
        ..ClassifyOptions::default()
    }
}

fn parse_system(cfg: &RunConfig) -> Result<AlphaSystem, CliError> {
    AlphaSystem::parse(&cfg.alpha).map_err(|e| CliError::Usage(format!("alpha: {e}")))
}

fn classify_failure(e: ClassifyError) -> CliError {
    match e {
        ClassifyError::Precondition(msg) => CliError::Gate(msg),
        other => CliError::Numeric(format!("classification failed: {other}")),
    }
}

fn solver_failure(e: SolverError) -> CliError {
    match e {
        SolverError::NotBaseFunction { .. } => CliError::Gate(e.to_string()),
        SolverError::Parse(_) | SolverError::SeedVariable(_) | SolverError::InvalidRange { .. } => {
            CliError::Usage(format!("xi: {e}"))
        }
        other => CliError::Numeric(other.to_string()),
    }
}

fn genericity_name(g: Genericity) -> &'static str {
    match g {
        Genericity::Generic => "generic",
        Genericity::NonGeneric => "nongeneric",
        Genericity::Mixed => "mixed",
    }
}

/// Resolves the pipeline mode against the genericity survey.
fn resolve_mode(choice: ModeChoice, found: Genericity) -> Result<Mode, CliError> {
    match (choice, found) {
        (ModeChoice::Auto | ModeChoice::Generic, Genericity::Generic) => Ok(Mode::Generic),
        (ModeChoice::Auto | ModeChoice::NonGeneric, Genericity::NonGeneric) => Ok(Mode::NonGeneric),
        (ModeChoice::Auto, Genericity::Mixed) => Err(CliError::Gate(
            "genericity is mixed on the sampling box; no pipeline applies".into(),
        )),
        (choice, found) => Err(CliError::Gate(format!(
            "mode {} requested but the system is {} on the sampling box",
            if choice == ModeChoice::Generic {
                "generic"
            } else {
                "nongeneric"
            },
            genericity_name(found)
        ))),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn fmt_point(p: &JetPoint) -> String {
    format!(
        "({:.6}, {:.6}, {:.6}, {:.6}, {:.6})",
        p.x, p.y, p.z, p.p, p.q
    )
}

fn box_line(cfg: &RunConfig) -> String {
    let parts: Vec<String> = Var::JET
        .iter()
        .zip(cfg.domain)
        .map(|(v, (lo, hi))| format!("{v} in [{lo}, {hi}]"))
        .collect();
    parts.join(", ")
}

pub struct ClassifyOutcome {
    pub report: String,
    pub classification: ClassificationReport,
    /// Set when an explicitly requested mode contradicts the survey.
    pub mode_mismatch: Option<String>,
}

/// Classification report of the α-system, plus the Cauchy table when
/// general coefficients are configured.
pub fn cmd_classify(cfg: &RunConfig) -> Result<ClassifyOutcome, CliError> {
    let sys = parse_system(cfg)?;
    let general = cfg
        .general
        .as_ref()
        .map(|[a, b, c, d]| {
            GeneralGmas::parse(a, b, c, d).map_err(|e| CliError::Usage(format!("a, b, c, d: {e}")))
        })
        .transpose()?;
    let domain = sample_box(cfg);
    let opts = classify_options(cfg);
    let report = classify(&sys, &domain, &[], &opts).map_err(classify_failure)?;

    let mut out = String::new();
    let _ = writeln!(out, "classification report");
    let _ = writeln!(out, "alpha = {}", cfg.alpha);
    let _ = writeln!(out, "sampling box: {}", box_line(cfg));
    let _ = writeln!(
        out,
        "zero threshold: {:e} ({} samples)",
        opts.eps_zero, opts.samples
    );
    let inv = &report.involutive;
    let verdict = match inv.verdict {
        Involutive::Yes => "yes",
        Involutive::No => "no",
        Involutive::PointwiseOnly => "pointwise only",
    };
    let _ = writeln!(
        out,
        "involutive: {verdict} (max |E_inv| = {:.3e})",
        inv.max_residual
    );
    if let (Some(w), false) = (&inv.witness, inv.verdict == Involutive::Yes) {
        let _ = writeln!(out, "  worst point: {}", fmt_point(w));
    }
    let gen = &report.genericity;
    let _ = writeln!(
        out,
        "genericity: {} (|G| in [{:.3e}, {:.3e}])",
        genericity_name(gen.verdict),
        gen.min_abs_g,
        gen.max_abs_g
    );
    let derived = &report.derived;
    let _ = writeln!(out, "derived type: {}", derived.derived_type);
    for d in &derived.discriminants {
        let _ = writeln!(
            out,
            "  {}: max |.| = {:.3e}, identically zero: {}",
            d.name,
            d.max_abs,
            if d.identically_zero { "yes" } else { "no" }
        );
    }
    if let Some(note) = &derived.note {
        let _ = writeln!(out, "  {note}");
    }
    if !report.cauchy_dim_at.is_empty() {
        let _ = writeln!(out, "cauchy dimension (alpha form):");
        for (pt, d) in &report.cauchy_dim_at {
            let _ = writeln!(out, "  {} -> {d}", fmt_point(pt));
        }
    }
    if let (Some(g), Some([a, b, c, d])) = (&general, &cfg.general) {
        let mut rng = StdRng::seed_from_u64(opts.seed ^ 0x00c0_ffee);
        let mut probes = vec![JetPoint::from_eval_point(&domain.center())];
        probes.extend((0..4).map(|_| JetPoint::from_eval_point(&domain.sample(&mut rng))));
        let rows = cauchy_table(g, &probes, opts.eps_zero).map_err(classify_failure)?;
        let _ = writeln!(out, "cauchy table for A = {a}, B = {b}, C = {c}, D = {d}:");
        let _ = writeln!(
            out,
            "  point (x, y, z, p, q) | case A | case B | case C | case D"
        );
        for row in rows {
            let cells: Vec<String> = row
                .dims
                .iter()
                .map(|d| d.map_or_else(|| "-".to_string(), |v| v.to_string()))
                .collect();
            let _ = writeln!(out, "  {} | {}", fmt_point(&row.point), cells.join(" | "));
        }
    }

    let mode_mismatch = match cfg.mode {
        ModeChoice::Auto => None,
        choice => resolve_mode(choice, gen.verdict)
            .err()
            .map(|e| e.to_string()),
    };
    if let Some(m) = &mode_mismatch {
        let _ = writeln!(out, "{m}");
    }
    Ok(ClassifyOutcome {
        report: out,
        classification: report,
        mode_mismatch,
    })
}

/// Gates shared by `solve` and in-memory `verify`: the system must be
/// involutive on the box and of the requested (or a definite) genericity.
fn gated_surface(cfg: &RunConfig) -> Result<IntegralSurface, CliError> {
    let sys = parse_system(cfg)?;
    let xi = cfg
        .seed_xi
        .as_deref()
        .ok_or_else(|| CliError::Usage("missing required key `xi`".into()))?;
    let seed = SeedCurve::parse(xi, cfg.t_range.0, cfg.t_range.1).map_err(solver_failure)?;
    let domain = sample_box(cfg);
    let opts = classify_options(cfg);
    let inv = involutive_test(&sys, &domain, &[], &opts).map_err(classify_failure)?;
    if inv.verdict != Involutive::Yes {
        return Err(CliError::Gate(format!(
            "system is not involutive on the sampling box (max |E_inv| = {:.3e})",
            inv.max_residual
        )));
    }
    let gen = crate::classify::genericity_test(&sys, &domain, &opts).map_err(classify_failure)?;
    let mode = resolve_mode(cfg.mode, gen.verdict)?;
    let mu_opts = MuOptions {
        step: cfg.step,
        x0_ref: cfg.x0_ref,
        newton: NewtonOptions {
            tol: cfg.tolerances.newton_tol,
            ..NewtonOptions::default()
        },
        ..MuOptions::default()
    };
    solve_surface(
        &sys,
        mode,
        &seed,
        cfg.t0,
        cfg.mu0,
        &mu_opts,
        cfg.s_range,
        cfg.t_range,
        cfg.grid,
    )
    .map_err(solver_failure)
}

fn singularity_options(cfg: &RunConfig) -> SingularityOptions {
    SingularityOptions {
        eps_zero: cfg.tolerances.eps_zero,
        locate_tol: cfg.tolerances.locate_tol,
        ..SingularityOptions::default()
    }
}

pub struct SolveOutcome {
    pub report: String,
    pub singularities: SingularityReport,
    pub holes: usize,
}

/// Builds the surface, classifies its singular points and writes the
/// sample table, mesh, markers and report. Holes leave partial outputs and
/// a numeric failure.
pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveOutcome, CliError> {
    let surface = gated_surface(cfg)?;
    let grid = &surface.grid;
    if grid.valid_count() == 0 {
        return Err(CliError::Numeric("no grid node could be lifted".into()));
    }
    let analyzer = Analyzer::new(&surface, singularity_options(cfg));
    let singular = analyzer.report();
    let lambda = analyzer.grid_values().to_vec();
    let marks = node_marks(grid, &singular.points);
    let fronts: Vec<Option<[f64; 3]>> = singular
        .points
        .iter()
        .map(|p| surface.lift(p.s, p.t).ok().map(|j| [j.x, j.y, j.z]))
        .collect();

    let report = solve_report(cfg, &surface, &singular, &fronts);
    write_file(&cfg.outputs.csv, &table::write_csv(grid, &lambda, &marks))?;
    write_file(&cfg.outputs.obj, &table::write_obj(grid))?;
    write_file(
        &cfg.outputs.markers,
        &table::write_markers(&singular.points, &fronts),
    )?;
    write_file(&cfg.outputs.report, &report)?;

    let holes = grid.hole_count();
    Ok(SolveOutcome {
        report,
        singularities: singular,
        holes,
    })
}

fn solve_report(
    cfg: &RunConfig,
    surface: &IntegralSurface,
    singular: &SingularityReport,
    fronts: &[Option<[f64; 3]>],
) -> String {
    let grid = &surface.grid;
    let mut out = String::new();
    let _ = writeln!(out, "solve report");
    let _ = writeln!(out, "alpha = {}", cfg.alpha);
    let _ = writeln!(out, "mode = {}", surface.mode());
    let _ = writeln!(out, "xi(t) = {}", cfg.seed_xi.as_deref().unwrap_or(""));
    let _ = writeln!(out, "mu({}) = {}", cfg.t0, cfg.mu0);
    let (lo, hi) = surface.ctx.mu.range();
    let _ = writeln!(
        out,
        "mu integrated by RK4, step {:e}, over [{lo:.6}, {hi:.6}] ({} nodes)",
        surface.ctx.mu.step(),
        surface.ctx.mu.nodes().len()
    );
    let _ = writeln!(
        out,
        "grid: {} x {} over s in [{}, {}], t in [{}, {}]",
        grid.ns(),
        grid.nt(),
        cfg.s_range.0,
        cfg.s_range.1,
        cfg.t_range.0,
        cfg.t_range.1
    );
    let _ = writeln!(
        out,
        "lifted nodes: {} valid, {} holes",
        grid.valid_count(),
        grid.hole_count()
    );
    if grid.hole_count() > 0 {
        let _ = writeln!(out, "hole mask (i, j):");
        for (k, hole) in grid.hole_mask().into_iter().enumerate() {
            if hole {
                let _ = writeln!(out, "  ({}, {})", k % grid.ns(), k / grid.ns());
            }
        }
    }
    let _ = writeln!(out, "zero threshold: {:.3e}", singular.threshold);
    if singular.points.is_empty() {
        let _ = writeln!(out, "no singular points");
        return out;
    }
    let _ = writeln!(out, "singular points: {}", singular.points.len());
    for (k, (p, f)) in singular.points.iter().zip(fronts).enumerate() {
        let _ = writeln!(
            out,
            "[{k}] {} at (s, t) = ({}, {}) [{}], lambda_hat = {:.3e}",
            p.class,
            num(p.s),
            num(p.t),
            kind_name(p.kind),
            p.lambda_hat
        );
        if let Some([x, y, z]) = f {
            let _ = writeln!(out, "    front = ({x:.9}, {y:.9}, {z:.9})");
        }
        if let Some(d) = &p.diagnostics {
            let v = &d.derivatives;
            let _ = writeln!(
                out,
                "    lambda_s = {:.6e}, lambda_t = {:.6e}, lambda_tt = {:.6e}, lambda_ttt = {:.6e}",
                v.s, v.t, v.tt, v.ttt
            );
            let _ = writeln!(
                out,
                "    det H = {:.6e}, front sigma = ({:.3e}, {:.3e}), degenerate: {}",
                d.det_hessian,
                d.front_sigma.0,
                d.front_sigma.1,
                if p.degenerate { "yes" } else { "no" }
            );
        }
        if let Some(reason) = &p.reason {
            let _ = writeln!(out, "    note: {reason}");
        }
    }
    let mut counts = String::new();
    for class in crate::singularity::SingularityClass::ALL {
        let n = singular.count(class);
        if n > 0 {
            let _ = write!(counts, " {class} {n};");
        }
    }
    let _ = writeln!(out, "counts:{}", counts.trim_end_matches(';'));
    out
}

/// Residuals reported by `verify`.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOutcome {
    pub contact: f64,
    pub psi: f64,
    pub lift: Option<(f64, f64)>,
    pub fd_mismatch: f64,
    pub pde: Result<PdeResiduals, String>,
    pub failures: Vec<String>,
    pub report: String,
}

/// Residual checks on a reloaded table (`surface = Some`) or on a surface
/// rebuilt from the configuration.
pub fn cmd_verify(cfg: &RunConfig, surface: Option<&Path>) -> Result<VerifyOutcome, CliError> {
    let sys = parse_system(cfg)?;
    let (grid, seed, lift) = match surface {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let table = table::read_csv(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let seed = cfg
                .seed_xi
                .as_deref()
                .map(|xi| SeedCurve::parse(xi, cfg.t_range.0, cfg.t_range.1))
                .transpose()
                .map_err(solver_failure)?;
            (table.grid, seed, None)
        }
        None => {
            let s = gated_surface(cfg)?;
            let lift = pullback_residuals(&s).map_err(verify_failure)?;
            (s.grid, Some(s.ctx.seed), Some(lift))
        }
    };
    let (contact, psi) = discrete_pullback_residuals(&sys, &grid).map_err(verify_failure)?;
    let fd_mismatch = fd_crosscheck_suite(&sys, seed.as_ref(), &fd_domain(&grid), 100, 0xfd);
    let pde = pde_check(&sys, &grid, cfg.pde_patch);

    let gates = &cfg.tolerances;
    let mut failures = Vec::new();
    let mut gate = |name: &str, value: f64, limit: f64| {
        // NaN residuals fail the gate
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(value <= limit) {
            failures.push(format!("{name} = {value:.3e} exceeds {limit:.1e}"));
        }
    };
    gate("max_contact_residual", contact, gates.contact_gate);
    gate("max_psi_residual", psi, gates.psi_gate);
    if let Some((lc, lp)) = lift {
        gate("lift_contact_residual", lc, gates.contact_gate);
        gate("lift_psi_residual", lp, gates.psi_gate);
    }
    if let (Some(limit), Ok(r)) = (gates.pde_gate, &pde) {
        gate("pde_residual", r.max(), limit);
    }

    let mut out = String::new();
    let _ = writeln!(out, "max_contact_residual = {}", num(contact));
    let _ = writeln!(out, "max_psi_residual = {}", num(psi));
    let _ = writeln!(out, "max_fd_mismatch = {}", num(fd_mismatch));
    match &pde {
        Ok(r) => {
            let _ = writeln!(out, "pde_residual_r1 = {}", num(r.r1));
            let _ = writeln!(out, "pde_residual_r2 = {}", num(r.r2));
        }
        Err(reason) => {
            let _ = writeln!(out, "pde_residual = skipped ({reason})");
        }
    }
    if let Some((lc, lp)) = lift {
        let _ = writeln!(out, "lift_contact_residual = {}", num(lc));
        let _ = writeln!(out, "lift_psi_residual = {}", num(lp));
    }
    if failures.is_empty() {
        let _ = writeln!(out, "gates: pass");
    } else {
        for f in &failures {
            let _ = writeln!(out, "gate failed: {f}");
        }
    }
    Ok(VerifyOutcome {
        contact,
        psi,
        lift,
        fd_mismatch,
        pde,
        failures,
        report: out,
    })
}

fn verify_failure(e: VerifyError) -> CliError {
    CliError::Numeric(e.to_string())
}

fn pde_check(
    sys: &AlphaSystem,
    grid: &SurfaceGrid,
    patch: Option<Patch>,
) -> Result<PdeResiduals, String> {
    let patch = patch.unwrap_or_else(|| Patch::full(grid));
    pde_residual_on_graph(sys, grid, patch).map_err(|e| e.to_string())
}

pub(super) fn check_mode(outcome: &ClassifyOutcome) -> Result<(), CliError> {
    outcome
        .mode_mismatch
        .clone()
        .map_or(Ok(()), |m| Err(CliError::Gate(m)))
}

pub(super) fn check_outputs(outcome: &SolveOutcome) -> Result<(), CliError> {
    if outcome.holes > 0 {
        return Err(CliError::Numeric(format!(
            "{} grid nodes could not be lifted; partial outputs written",
            outcome.holes
        )));
    }
    Ok(())
}

pub(super) fn check_gates(outcome: &VerifyOutcome) -> Result<(), CliError> {
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Gate(outcome.failures.join("; ")))
    }
}

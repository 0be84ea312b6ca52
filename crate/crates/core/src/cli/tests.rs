use std::path::{Path, PathBuf};

use tempfile::TempDir;

use super::run;

struct Output {
    code: i32,
    out: String,
    err: String,
}

fn gmae(args: &[&str]) -> Output {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(
        std::iter::once("gmae").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    Output {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run_config(sub: &str, cfg: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    gmae(&args)
}

/// `key = value` lines of a verify report, parsed as numbers where possible.
fn residuals(report: &str) -> Vec<(String, f64)> {
    report
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .filter_map(|(k, v)| v.trim().parse::<f64>().ok().map(|v| (k.to_string(), v)))
        .collect()
}

const SWALLOWTAIL: &str = "alpha = q\nxi = t^4\nt0 = 0\nmu0 = 0\ns_range = -0.5, 0.5\nt_range = -0.5, 0.5\ngrid = 101, 101\nbox = -1, 1\n";
const REGULAR: &str =
    "alpha = q\nxi = t^2\nmu0 = 0.3\ns_range = 0.5, 1\nt_range = 0.1, 0.5\ngrid = 21, 21\n";

#[test]
fn classify_reports_the_worked_examples() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (
            "alpha = p + q^2\n",
            [
                "involutive: yes",
                "genericity: generic",
                "derived type: (2,3)",
            ],
        ),
        (
            "alpha = (q - y)/x\n",
            [
                "involutive: yes",
                "genericity: nongeneric",
                "derived type: (2,3)",
            ],
        ),
        (
            "alpha = x\n",
            ["involutive: no", "derived type: undetermined", "refused"],
        ),
    ];
    for (k, (body, expected)) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("c{k}.cfg"), body);
        let out = run_config("classify", &cfg, &[]);
        assert_eq!(out.code, 0);
        for e in expected {
            assert!(out.out.contains(e), "{body}: missing `{e}` in\n{}", out.out);
        }
        let written =
            std::fs::read_to_string(dir.path().join(format!("c{k}_classify.txt"))).unwrap();
        assert_eq!(written, out.out);
    }
}

#[test]
fn classify_prints_cauchy_table_and_rejects_wrong_mode() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "t.cfg", "alpha = q\na = 1\nb = -q\n");
    let text = run_config("classify", &cfg, &[]).out;
    assert!(text.contains("cauchy table for A = 1, B = -q, C = 0, D = 0"));
    assert_eq!(
        text.lines()
            .filter(|l| l.ends_with("| 1 | 1 | - | -"))
            .count(),
        5
    );

    let cfg = write_config(dir.path(), "m.cfg", "alpha = q\nmode = nongeneric\n");
    let out = run_config("classify", &cfg, &[]);
    assert_eq!(out.code, 2);
    assert!(out.err.contains("mode nongeneric requested"));
}

#[test]
fn solve_locates_swallowtail() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "st.cfg", SWALLOWTAIL);
    let out = run_config("solve", &cfg, &[]);
    assert_eq!(out.code, 0, "{}", out.err);
    assert!(out.out.contains("Swallowtail at (s, t)"));

    let markers = std::fs::read_to_string(dir.path().join("st_markers.csv")).unwrap();
    let found = markers.lines().skip(1).any(|l| {
        let f: Vec<&str> = l.split(',').collect();
        let (s, t): (f64, f64) = (f[1].parse().unwrap(), f[2].parse().unwrap());
        f[8] == "Swallowtail" && s.abs() < 1e-8 && t.abs() < 1e-8
    });
    assert!(found, "{markers}");

    let csv = std::fs::read_to_string(dir.path().join("st.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("s,t,X,Y,Z,p,q,lambda_hat,is_singular,class")
    );
    assert_eq!(csv.lines().count(), 1 + 101 * 101);
    let centre = csv
        .lines()
        .find(|l| l.starts_with("0.0000000000000000e0,0.0000000000000000e0,"))
        .unwrap();
    assert!(centre.ends_with(",1,Swallowtail"), "{centre}");

    let obj = std::fs::read_to_string(dir.path().join("st.obj")).unwrap();
    assert_eq!(
        obj.lines().filter(|l| l.starts_with("v ")).count(),
        101 * 101
    );
    assert_eq!(
        obj.lines().filter(|l| l.starts_with("f ")).count(),
        2 * 100 * 100
    );
}

#[test]
fn solve_reports_beaks() {
    let dir = TempDir::new().unwrap();
    let body = "alpha = p + q^2\nxi = (t - log(2))^4\nt0 = 0\nmu0 = -1\ns_range = -0.5, 0.5\n\
                t_range = 0.39314718, 0.99314718\ngrid = 61, 61\n";
    let cfg = write_config(dir.path(), "bk.cfg", body);
    assert_eq!(run_config("solve", &cfg, &[]).code, 0);
    let markers = std::fs::read_to_string(dir.path().join("bk_markers.csv")).unwrap();
    let beaks: Vec<Vec<f64>> = markers
        .lines()
        .filter(|l| l.contains(",Beaks,"))
        .map(|l| l.split(',').filter_map(|f| f.parse().ok()).collect())
        .collect();
    assert_eq!(beaks.len(), 1, "{markers}");
    // index, s, t, X, Y, Z, lambda_hat, det_hessian, lambda_tt
    let b = &beaks[0];
    assert!(
        b[1].abs() < 1e-6 && (b[2] - std::f64::consts::LN_2).abs() < 1e-6,
        "{b:?}"
    );
    assert!(
        (b[7] + 4.0).abs() < 1e-4 && (b[8] - 24.0).abs() < 1e-3,
        "{b:?}"
    );
}

#[test]
fn regular_patch_writes_outputs_and_says_so() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "reg.cfg", REGULAR);
    assert_eq!(run_config("solve", &cfg, &[]).code, 0);
    let report = std::fs::read_to_string(dir.path().join("reg_report.txt")).unwrap();
    assert!(report.contains("no singular points"));
    for f in ["reg.csv", "reg.obj", "reg_markers.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let markers = std::fs::read_to_string(dir.path().join("reg_markers.csv")).unwrap();
    assert_eq!(markers.lines().count(), 1);
}

#[test]
fn outputs_are_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        let cfg = write_config(dir.path(), "st.cfg", SWALLOWTAIL);
        assert_eq!(run_config("solve", &cfg, &[]).code, 0);
    }
    for f in ["st.csv", "st.obj", "st_markers.csv", "st_report.txt"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn csv_reload_reproduces_residuals() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "reg.cfg", REGULAR);
    assert_eq!(run_config("solve", &cfg, &[]).code, 0);
    let fresh = run_config("verify", &cfg, &[]);
    assert_eq!(fresh.code, 0);
    let csv = dir.path().join("reg.csv");
    let reloaded = run_config("verify", &cfg, &["--surface", csv.to_str().unwrap()]);
    assert_eq!(reloaded.code, 0);

    let (r1, r2) = (residuals(&fresh.out), residuals(&reloaded.out));
    assert!(r2.len() >= 5, "{r2:?}");
    for (k, v) in &r2 {
        let (_, w) = r1
            .iter()
            .find(|(k1, _)| k1 == k)
            .unwrap_or_else(|| panic!("{k} missing"));
        assert!((v - w).abs() <= 1e-12, "{k}: {v} vs {w}");
    }
}

#[test]
fn corrupted_table_fails_the_gate() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "reg.cfg", REGULAR);
    assert_eq!(run_config("solve", &cfg, &[]).code, 0);
    let text = std::fs::read_to_string(dir.path().join("reg.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut fields: Vec<String> = lines[200].split(',').map(str::to_string).collect();
    fields[4] = format!("{:.16e}", fields[4].parse::<f64>().unwrap() + 1e-3);
    lines[200] = fields.join(",");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let out = run_config("verify", &cfg, &["--surface", bad.to_str().unwrap()]);
    assert_eq!(out.code, 2);
    assert!(out.out.contains("gate failed: max_contact_residual"));
}

#[test]
fn trivial_system_passes_verification() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "z.cfg",
        "alpha = 0\nxi = t^2\nmu0 = 0.7\ns_range = 0.5, 1\nt_range = 0.1, 0.5\ngrid = 21, 21\n",
    );
    let out = run_config("verify", &cfg, &[]);
    assert_eq!(out.code, 0);
    assert!(out.out.contains("gates: pass"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let reg = write_config(dir.path(), "reg.cfg", REGULAR);
    assert_eq!(gmae(&[]).code, 1);
    assert_eq!(gmae(&["solve"]).code, 1);
    assert_eq!(gmae(&["--help"]).code, 0);
    assert_eq!(gmae(&["solve", "--config", "/nonexistent/x.cfg"]).code, 1);
    assert_eq!(
        run_config("verify", &reg, &["--tolerance-override", "step=1"]).code,
        1
    );
    assert_eq!(
        run_config(
            "verify",
            &reg,
            &["--tolerance-override", "contact_gate=1e-30"]
        )
        .code,
        2
    );

    let bad_alpha = write_config(dir.path(), "b.cfg", "alpha = q +\nxi = t\n");
    assert_eq!(run_config("classify", &bad_alpha, &[]).code, 1);

    let not_involutive = write_config(dir.path(), "x.cfg", "alpha = x\nxi = t^3\n");
    let out = run_config("solve", &not_involutive, &[]);
    assert_eq!(out.code, 2);
    assert!(out.err.contains("not involutive"));

    // The chart is undefined on x = 0, so the s = 0 column cannot be lifted.
    let holes = write_config(
        dir.path(),
        "h.cfg",
        "alpha = (q - y)/x\nxi = t^2 + t^3\nmu0 = 0\ns_range = -0.5, 0.5\nt_range = -0.3, 0.3\ngrid = 11, 11\n",
    );
    let out = run_config("solve", &holes, &[]);
    assert_eq!(out.code, 3);
    let report = std::fs::read_to_string(dir.path().join("h_report.txt")).unwrap();
    assert!(
        report.contains("11 holes") && report.contains("hole mask"),
        "{report}"
    );
}

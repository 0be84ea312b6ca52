//! Sample tables, meshes and marker files written by `solve`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::JetPoint;
use crate::singularity::{ClassifiedPoint, PointKind, SingularityClass};
use crate::solver::SurfaceGrid;

pub const CSV_HEADER: &str = "s,t,X,Y,Z,p,q,lambda_hat,is_singular,class";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("header must be `{CSV_HEADER}`")]
    Header,
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("table is not a full grid: {0}")]
    Shape(String),
}

/// Full-precision number: 17 significant digits, `nan` for missing values.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "nan".into()
    }
}

/// Per-node annotation derived from the classified singular points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeMark {
    pub class: SingularityClass,
    kind: PointKind,
}

fn rank(kind: PointKind) -> u8 {
    match kind {
        PointKind::Curve => 0,
        PointKind::Special => 1,
        PointKind::Degenerate => 2,
    }
}

pub fn kind_name(kind: PointKind) -> &'static str {
    match kind {
        PointKind::Curve => "curve",
        PointKind::Special => "special",
        PointKind::Degenerate => "degenerate",
    }
}

/// Marks the grid node nearest to each singular point. Where several points
/// share a node, degenerate points win over special ones, which win over
/// plain curve points.
pub fn node_marks(grid: &SurfaceGrid, points: &[ClassifiedPoint]) -> Vec<Option<NodeMark>> {
    let nearest = |g: &[f64], v: f64| {
        (0..g.len())
            .min_by(|&a, &b| (g[a] - v).abs().total_cmp(&(g[b] - v).abs()))
            .unwrap_or(0)
    };
    let mut marks: Vec<Option<NodeMark>> = vec![None; grid.ns() * grid.nt()];
    for p in points {
        let k = grid.index(nearest(&grid.s_grid, p.s), nearest(&grid.t_grid, p.t));
        let mark = NodeMark {
            class: p.class,
            kind: p.kind,
        };
        match marks[k] {
            Some(m) if rank(m.kind) >= rank(p.kind) => {}
            _ => marks[k] = Some(mark),
        }
    }
    marks
}

/// Sample table in grid-major order (`t` outer, `s` inner). Holes carry
/// `nan` in every jet column.
pub fn write_csv(grid: &SurfaceGrid, lambda: &[Option<f64>], marks: &[Option<NodeMark>]) -> String {
    let mut out = String::with_capacity(grid.ns() * grid.nt() * 200);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (j, &t) in grid.t_grid.iter().enumerate() {
        for (i, &s) in grid.s_grid.iter().enumerate() {
            let k = grid.index(i, j);
            let jet = grid.points[k].map_or([f64::NAN; 5], JetPoint::to_array);
            let lam = lambda.get(k).copied().flatten().unwrap_or(f64::NAN);
            let mark = marks.get(k).copied().flatten();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                num(s),
                num(t),
                num(jet[0]),
                num(jet[1]),
                num(jet[2]),
                num(jet[3]),
                num(jet[4]),
                num(lam),
                u8::from(mark.is_some()),
                mark.map_or("", |m| m.class.name()),
            );
        }
    }
    out
}

/// A reloaded sample table.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceTable {
    pub grid: SurfaceGrid,
    pub lambda: Vec<Option<f64>>,
    pub classes: Vec<Option<SingularityClass>>,
}

pub fn read_csv(text: &str) -> Result<SurfaceTable, TableError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(TableError::Header);
    }
    let mut rows = Vec::new();
    for (r, line) in lines.enumerate() {
        let row = r + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 10 {
            return Err(TableError::Row {
                row,
                reason: format!("expected 10 fields, found {}", fields.len()),
            });
        }
        let mut v = [0.0f64; 8];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| TableError::Row {
                row,
                reason: format!("`{f}` is not a number"),
            })?;
        }
        if !(v[0].is_finite() && v[1].is_finite()) {
            return Err(TableError::Row {
                row,
                reason: "parameters must be finite".into(),
            });
        }
        let class = match fields[9] {
            "" => None,
            name => Some(
                SingularityClass::from_name(name).ok_or_else(|| TableError::Row {
                    row,
                    reason: format!("unknown class `{name}`"),
                })?,
            ),
        };
        rows.push((v, class));
    }
    let Some(first) = rows.first() else {
        return Err(TableError::Shape("no data rows".into()));
    };
    let t0 = first.0[1];
    let ns = rows.iter().take_while(|(v, _)| v[1] == t0).count();
    if rows.len() % ns != 0 {
        return Err(TableError::Shape(format!(
            "{} rows do not split into rows of {ns}",
            rows.len()
        )));
    }
    let nt = rows.len() / ns;
    let s_grid: Vec<f64> = rows[..ns].iter().map(|(v, _)| v[0]).collect();
    let mut t_grid = Vec::with_capacity(nt);
    for j in 0..nt {
        let block = &rows[j * ns..(j + 1) * ns];
        let t = block[0].0[1];
        if block.iter().any(|(v, _)| v[1] != t)
            || block.iter().zip(&s_grid).any(|((v, _), &s)| v[0] != s)
        {
            return Err(TableError::Shape(format!(
                "row block {j} does not repeat the s grid at constant t"
            )));
        }
        t_grid.push(t);
    }
    let points = rows
        .iter()
        .map(|(v, _)| {
            let jet = [v[2], v[3], v[4], v[5], v[6]];
            jet.iter()
                .all(|x| x.is_finite())
                .then(|| JetPoint::from_array(jet))
        })
        .collect();
    let lambda = rows
        .iter()
        .map(|(v, _)| v[7].is_finite().then_some(v[7]))
        .collect();
    let classes = rows.iter().map(|(_, c)| *c).collect();
    Ok(SurfaceTable {
        grid: SurfaceGrid::new(s_grid, t_grid, points),
        lambda,
        classes,
    })
}

/// Front mesh: valid nodes as vertices in grid-major order, each grid quad
/// with four valid corners split into two triangles.
pub fn write_obj(grid: &SurfaceGrid) -> String {
    let (ns, nt) = (grid.ns(), grid.nt());
    let mut vertex = vec![0usize; ns * nt];
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# front mesh, grid {ns} x {nt}, {} vertices",
        grid.valid_count()
    );
    let mut next = 1;
    for j in 0..nt {
        for i in 0..ns {
            if let Some([x, y, z]) = grid.front(i, j) {
                let _ = writeln!(out, "v {} {} {}", num(x), num(y), num(z));
                vertex[grid.index(i, j)] = next;
                next += 1;
            }
        }
    }
    for j in 0..nt.saturating_sub(1) {
        for i in 0..ns.saturating_sub(1) {
            let [a, b, c, d] = [
                grid.index(i, j),
                grid.index(i + 1, j),
                grid.index(i + 1, j + 1),
                grid.index(i, j + 1),
            ]
            .map(|k| vertex[k]);
            if a > 0 && b > 0 && c > 0 && d > 0 {
                let _ = writeln!(out, "f {a} {b} {c}");
                let _ = writeln!(out, "f {a} {c} {d}");
            }
        }
    }
    out
}

pub const MARKER_HEADER: &str = "index,s,t,X,Y,Z,lambda_hat,kind,class,det_hessian,lambda_tt";

/// Sidecar table of singular points with their front positions.
pub fn write_markers(points: &[ClassifiedPoint], fronts: &[Option<[f64; 3]>]) -> String {
    let mut out = String::from(MARKER_HEADER);
    out.push('\n');
    for (k, (p, f)) in points.iter().zip(fronts).enumerate() {
        let [x, y, z] = f.unwrap_or([f64::NAN; 3]);
        let (det, tt) = p
            .diagnostics
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |d| (d.det_hessian, d.derivatives.tt));
        let _ = writeln!(
            out,
            "{k},{},{},{},{},{},{},{},{},{},{}",
            num(p.s),
            num(p.t),
            num(x),
            num(y),
            num(z),
            num(p.lambda_hat),
            kind_name(p.kind),
            p.class.name(),
            num(det),
            num(tt),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SurfaceGrid {
        let s = vec![0.0, 0.5, 1.0];
        let t = vec![-1.0, 1.0 / 3.0];
        let points = (0..6)
            .map(|k| {
                (k != 5).then(|| {
                    JetPoint::new(
                        k as f64 * 0.1,
                        1.0 / (k + 1) as f64,
                        std::f64::consts::PI * k as f64,
                        -2.5,
                        1e-300,
                    )
                })
            })
            .collect();
        SurfaceGrid::new(s, t, points)
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = grid();
        let lambda: Vec<Option<f64>> = (0..6).map(|k| (k != 5).then(|| k as f64 / 7.0)).collect();
        let mut marks = vec![None; 6];
        marks[1] = Some(NodeMark {
            class: SingularityClass::Swallowtail,
            kind: PointKind::Special,
        });
        let text = write_csv(&g, &lambda, &marks);
        assert!(text.starts_with(CSV_HEADER));
        let back = read_csv(&text).unwrap();
        assert_eq!(back.grid, g);
        assert_eq!(back.lambda, lambda);
        assert_eq!(back.classes[1], Some(SingularityClass::Swallowtail));
        assert_eq!(back.classes.iter().filter(|c| c.is_some()).count(), 1);
        assert_eq!(write_csv(&back.grid, &back.lambda, &marks), text);
    }

    #[test]
    fn csv_rejects_malformed_tables() {
        assert_eq!(read_csv("a,b\n"), Err(TableError::Header));
        let text = write_csv(&grid(), &[], &[]);
        let truncated: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_csv(&truncated), Err(TableError::Shape(_))));
        let bad = text.replacen("-2.5000000000000000e0", "oops", 1);
        assert!(matches!(
            read_csv(&bad),
            Err(TableError::Row { row: 1, .. })
        ));
    }

    #[test]
    fn obj_skips_holes() {
        let obj = write_obj(&grid());
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 5);
        // Of the two quads only the first has four valid corners.
        let faces: Vec<&str> = obj.lines().filter(|l| l.starts_with("f ")).collect();
        assert_eq!(faces, ["f 1 2 5", "f 1 5 4"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn finite() -> impl Strategy<Value = f64> {
            prop_oneof![-1e6f64..1e6, -1e-6f64..1e-6, prop::num::f64::NORMAL]
        }

        proptest! {
            #[test]
            fn csv_round_trip(
                (ns, nt, cells) in (2usize..6, 2usize..6).prop_flat_map(|(ns, nt)| {
                    let cell = (prop::option::weighted(0.9, prop::array::uniform5(finite())), prop::option::of(finite()));
                    (Just(ns), Just(nt), prop::collection::vec(cell, ns * nt))
                }),
                s0 in -10.0f64..10.0,
                t0 in -10.0f64..10.0,
            ) {
                let s_grid: Vec<f64> = (0..ns).map(|i| s0 + 0.1 * i as f64).collect();
                let t_grid: Vec<f64> = (0..nt).map(|j| t0 + 0.3 * j as f64).collect();
                let points = cells.iter().map(|(p, _)| p.map(JetPoint::from_array)).collect();
                let lambda: Vec<Option<f64>> = cells.iter().map(|(_, l)| *l).collect();
                let g = SurfaceGrid::new(s_grid, t_grid, points);
                let text = write_csv(&g, &lambda, &[]);
                let back = read_csv(&text).unwrap();
                prop_assert_eq!(&back.grid, &g);
                prop_assert_eq!(&back.lambda, &lambda);
                prop_assert_eq!(write_csv(&back.grid, &back.lambda, &[]), text);
            }
        }
    }
}

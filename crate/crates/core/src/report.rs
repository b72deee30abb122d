//! ε-sweep reports, rate fitting, tabular output, and deformed-mesh export.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::VectorField;
use crate::geometry::{Domain3, Eps};
use crate::linalg::{is_finite3, Vec2, Vec3};
use crate::rigidity::FkTable;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub eps: Eps,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricFit {
    pub metric: String,
    #[serde(flatten)]
    pub fit: Fit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub id: String,
    pub pass: bool,
    pub detail: String,
}

/// Sweep table with per-metric log-log fits and criterion verdicts.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<Row>,
    pub fits: Vec<MetricFit>,
    pub verdicts: Vec<Verdict>,
}

/// Least-squares slope of `log value` against `log ε`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<Fit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some((e, v)) = points.iter().find(|(e, v)| !(*e > 0.0) || !(*v > 0.0)) {
        return Err(Error::Fit(format!("non-positive entry (ε = {e}, value = {v})")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all ε values coincide".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(Fit { slope, intercept: my - slope * mx, r2 })
}

impl ConvergenceReport {
    pub fn push(&mut self, eps: Eps, metric: &str, value: f64) {
        self.rows.push(Row { eps, metric: metric.to_string(), value });
    }

    pub fn verdict(&mut self, id: &str, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict { id: id.to_string(), pass, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// `(ε, value)` pairs of one metric in row order.
    pub fn series(&self, metric: &str) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.metric == metric).map(|r| (r.eps.value(), r.value)).collect()
    }

    /// Sorts rows by descending ε (stable within equal ε) and refits every
    /// metric with at least three rows.
    pub fn finalize(&mut self) {
        self.rows.sort_by(|a, b| b.eps.value().total_cmp(&a.eps.value()));
        let mut metrics: Vec<String> = Vec::new();
        for r in &self.rows {
            if !metrics.contains(&r.metric) {
                metrics.push(r.metric.clone());
            }
        }
        self.fits = metrics
            .into_iter()
            .filter_map(|m| {
                let s = self.series(&m);
                fit_rate(&s).ok().map(|fit| MetricFit { metric: m, fit })
            })
            .collect();
    }

    pub fn fit(&self, metric: &str) -> Option<Fit> {
        self.fits.iter().find(|f| f.metric == metric).map(|f| f.fit)
    }

    /// Columns `eps, metric, value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["eps", "metric", "value"]).map_err(csv_err)?;
        for r in &self.rows {
            c.write_record([r.eps.to_string(), r.metric.clone(), fmt(r.value)]).map_err(csv_err)?;
        }
        c.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Columns `eps, xi, xi_norm, value, fitted_C, slack`; `xi` is written as
/// `"ξ₁ ξ₂"`.
pub fn write_fk_csv<W: Write>(tables: &[FkTable], w: W) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["eps", "xi", "xi_norm", "value", "fitted_C", "slack"]).map_err(csv_err)?;
    for t in tables {
        for r in &t.rows {
            c.write_record([
                fmt(t.eps),
                format!("{} {}", fmt(r.xi[0]), fmt(r.xi[1])),
                fmt(r.xi_norm),
                fmt(r.value),
                fmt(t.fitted_c),
                fmt(r.slack),
            ])
            .map_err(csv_err)?;
        }
    }
    c.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma31Row {
    pub case: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Columns `case, lhs, rhs, ratio`.
pub fn write_lemma31_csv<W: Write>(rows: &[Lemma31Row], w: W) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["case", "lhs", "rhs", "ratio"]).map_err(csv_err)?;
    for r in rows {
        c.write_record([r.case.clone(), fmt(r.lhs), fmt(r.rhs), fmt(r.ratio)]).map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Vtk,
}

impl std::str::FromStr for MeshFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "obj" => Ok(MeshFormat::Obj),
            "vtk" => Ok(MeshFormat::Vtk),
            _ => Err(Error::Parse(format!("unknown mesh format `{s}` (expected obj or vtk)"))),
        }
    }
}

/// Deformed boundary surface of `Ω` plus optional deformed fiber lines.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshExport {
    pub reference: Vec<Vec3>,
    pub vertices: Vec<Vec3>,
    pub quads: Vec<[usize; 4]>,
    pub lines: Vec<Vec<usize>>,
}

impl MeshExport {
    /// Samples `u` on the boundary lattice with `res[i] ≥ 2` points per axis;
    /// quads are wound counter-clockwise seen from outside `Ω`. Each fiber
    /// base point `x'` adds a polyline of `res[2]` points along `x₃`.
    pub fn build(u: &dyn VectorField, domain: &Domain3, res: [usize; 3], fibers: &[Vec2]) -> Result<Self> {
        if res.iter().any(|&n| n < 2) {
            return Err(Error::InvalidParameter("mesh resolution must be at least 2 per axis".into()));
        }
        let o = &domain.omega;
        let coord = |i: usize, j: usize, k: usize| {
            Vec3::new(
                o.min[0] + o.width() * i as f64 / (res[0] - 1) as f64,
                o.min[1] + o.height() * j as f64 / (res[1] - 1) as f64,
                domain.height * k as f64 / (res[2] - 1) as f64,
            )
        };
        let mut ids: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
        let mut reference = Vec::new();
        let mut id = |key: (usize, usize, usize), reference: &mut Vec<Vec3>| {
            *ids.entry(key).or_insert_with(|| {
                reference.push(coord(key.0, key.1, key.2));
                reference.len() - 1
            })
        };
        let [n1, n2, n3] = res;
        let mut quads = Vec::new();
        // (fixed axis, fixed index, outward sign)
        for (axis, fixed, outward) in [(0, 0, -1), (0, n1 - 1, 1), (1, 0, -1), (1, n2 - 1, 1), (2, 0, -1), (2, n3 - 1, 1)] {
            let (a, b) = match axis {
                0 => (1, 2),
                1 => (2, 0),
                _ => (0, 1),
            };
            let (na, nb) = (res[a], res[b]);
            for jb in 0..nb - 1 {
                for ja in 0..na - 1 {
                    let key = |da: usize, db: usize| {
                        let mut t = [0usize; 3];
                        t[axis] = fixed;
                        t[a] = ja + da;
                        t[b] = jb + db;
                        (t[0], t[1], t[2])
                    };
                    let mut q = [
                        id(key(0, 0), &mut reference),
                        id(key(1, 0), &mut reference),
                        id(key(1, 1), &mut reference),
                        id(key(0, 1), &mut reference),
                    ];
                    // (a, b, axis) is a right-handed triple, so this order faces +axis
                    if outward < 0 {
                        q.swap(1, 3);
                    }
                    quads.push(q);
                }
            }
        }
        let mut lines = Vec::new();
        for f in fibers {
            if !o.contains(f) {
                return Err(Error::InvalidParameter(format!("fiber base ({}, {}) lies outside ω", f.x, f.y)));
            }
            let mut l = Vec::with_capacity(n3);
            for k in 0..n3 {
                reference.push(Vec3::new(f.x, f.y, domain.height * k as f64 / (n3 - 1) as f64));
                l.push(reference.len() - 1);
            }
            lines.push(l);
        }
        let vertices: Vec<Vec3> = reference.iter().map(|x| u.value(x)).collect();
        if let Some(v) = vertices.iter().zip(&reference).find(|(v, _)| !is_finite3(v)) {
            return Err(Error::NonFinite(crate::linalg::arr3(v.1)));
        }
        Ok(MeshExport { reference, vertices, quads, lines })
    }

    /// `v`, `f` and `l` records only.
    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for q in &self.quads {
            writeln!(w, "f {} {} {} {}", q[0] + 1, q[1] + 1, q[2] + 1, q[3] + 1)?;
        }
        for l in &self.lines {
            let ids: Vec<String> = l.iter().map(|i| (i + 1).to_string()).collect();
            writeln!(w, "l {}", ids.join(" "))?;
        }
        Ok(())
    }

    /// Legacy ASCII polydata with the displacement as point data.
    pub fn write_vtk<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "fibrig deformed configuration")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET POLYDATA")?;
        writeln!(w, "POINTS {} double", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
        }
        writeln!(w, "POLYGONS {} {}", self.quads.len(), 5 * self.quads.len())?;
        for q in &self.quads {
            writeln!(w, "4 {} {} {} {}", q[0], q[1], q[2], q[3])?;
        }
        if !self.lines.is_empty() {
            let size: usize = self.lines.iter().map(|l| l.len() + 1).sum();
            writeln!(w, "LINES {} {}", self.lines.len(), size)?;
            for l in &self.lines {
                let ids: Vec<String> = l.iter().map(|i| i.to_string()).collect();
                writeln!(w, "{} {}", l.len(), ids.join(" "))?;
            }
        }
        writeln!(w, "POINT_DATA {}", self.vertices.len())?;
        writeln!(w, "VECTORS displacement double")?;
        for (v, x) in self.vertices.iter().zip(&self.reference) {
            let d = v - x;
            writeln!(w, "{} {} {}", d.x, d.y, d.z)?;
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, format: MeshFormat, w: W) -> Result<()> {
        match format {
            MeshFormat::Obj => self.write_obj(w),
            MeshFormat::Vtk => self.write_vtk(w),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ClosedForm;
    use crate::limit::Preset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fit_examples() {
        let e = [0.125, 0.0625, 0.03125, 0.015625];
        let f = fit_rate(&e.map(|x| (x, x))).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let f = fit_rate(&e.map(|x| (x, x * x))).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<(f64, f64)> = e.iter().map(|&x| (x, 3.0 * x.powf(1.5) * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))).collect();
        assert!((fit_rate(&pts).unwrap().slope - 1.5).abs() < 0.05);
        assert!(fit_rate(&[(0.5, 1.0), (0.25, 0.0), (0.125, 1.0)]).is_err());
        assert!(fit_rate(&[(0.5, 1.0), (0.25, 1.0)]).is_err());
    }

    #[test]
    fn report_rows_sorted_and_fitted() {
        let mut r = ConvergenceReport::default();
        for n in [32, 8, 16] {
            r.push(Eps::inv(n), "err", 1.0 / n as f64);
            r.push(Eps::inv(n), "sup", 2.0 / n as f64);
        }
        r.push(Eps::inv(4), "lonely", 1.0);
        r.finalize();
        let eps: Vec<u64> = r.rows.iter().map(|x| x.eps.denom()).collect();
        assert_eq!(eps, vec![4, 8, 8, 16, 16, 32, 32]);
        assert_eq!(r.fits.len(), 2);
        assert!((r.fit("sup").unwrap().slope - 1.0).abs() < 1e-12);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("eps,metric,value\n1/4,lonely,1e0\n"));
    }

    #[test]
    fn identity_cube_mesh() {
        let m = MeshExport::build(&ClosedForm::identity(), &Domain3::unit_cube(), [2, 2, 2], &[]).unwrap();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.quads.len(), 6);
        // outward winding: the quad normal points away from the center
        let c = Vec3::new(0.5, 0.5, 0.5);
        for q in &m.quads {
            let v: Vec<Vec3> = q.iter().map(|&i| m.vertices[i]).collect();
            let n = (v[1] - v[0]).cross(&(v[2] - v[0]));
            let mid = (v[0] + v[1] + v[2] + v[3]) / 4.0;
            assert!(n.dot(&(mid - c)) > 0.0);
        }
        // every edge is shared by exactly two quads in opposite directions
        let mut edges = BTreeMap::new();
        for q in &m.quads {
            for i in 0..4 {
                *edges.entry((q[i], q[(i + 1) % 4])).or_insert(0) += 1;
            }
        }
        for (&(a, b), &n) in &edges {
            assert_eq!(n, 1);
            assert_eq!(edges.get(&(b, a)), Some(&1));
        }
    }

    #[test]
    fn shear_and_twist_meshes() {
        let d = Domain3::unit_cube();
        let shear = Preset::Shear { gamma: 1.0 }.field(&d).unwrap();
        let m = MeshExport::build(&*shear, &d, [3, 3, 3], &[]).unwrap();
        let i = m.reference.iter().position(|x| (x - Vec3::new(1.0, 1.0, 1.0)).norm() == 0.0).unwrap();
        assert!((m.vertices[i] - Vec3::new(1.0, 2.0, 1.0)).norm() < 1e-14);

        let p = Preset::Twist;
        let d = Domain3::new([0.0, 0.0], [4.0, 1.0], 1.0).unwrap();
        let u = p.field(&d).unwrap();
        let fibers: Vec<Vec2> = (0..5).map(|i| Vec2::new(0.1 + 0.95 * i as f64, 0.5)).collect();
        let m = MeshExport::build(&*u, &d, [9, 3, 11], &fibers).unwrap();
        for l in &m.lines {
            let a = m.vertices[l[0]];
            let b = m.vertices[*l.last().unwrap()];
            assert!(((b - a).norm() - 1.0).abs() < 1e-12);
            let dir = (b - a).normalize();
            for w in l.windows(2) {
                let s = m.vertices[w[1]] - m.vertices[w[0]];
                assert!((s - dir * 0.1).norm() < 1e-12);
            }
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        m.write_obj(&mut a).unwrap();
        m.write_obj(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.lines().all(|l| l.starts_with("v ") || l.starts_with("f ") || l.starts_with("l ")));
        let mut v = Vec::new();
        m.write_vtk(&mut v).unwrap();
        assert!(String::from_utf8(v).unwrap().contains("LINES 5 60"));
        assert!(MeshExport::build(&*u, &d, [1, 2, 2], &[]).is_err());
    }
}

//! Rigidity diagnostics: nearest rotations, per-fiber rotation extraction,
//! piecewise-rigid comparison fields, translation moduli of the director
//! field, the neighboring-rotation lower bound, and the two-phase energy.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{grad, integrate, translate_diff, QuadratureSpec, Region, VectorField};
use crate::geometry::{CellIndex, Domain3, FiberLayout, Rect2};
use crate::linalg::{axis_angle, from_columns, Mat3, Vec2, Vec3};

/// Nearest rotation in the Frobenius norm.
pub fn project_so3(f: &Mat3) -> Result<Mat3> {
    let det = f.determinant();
    if !(det > 0.0) {
        return Err(Error::NotOrientationPreserving(det));
    }
    let svd = f.svd(true, true);
    let s = svd.singular_values;
    if s.min() <= 1e-14 * s.max() {
        return Err(Error::NotOrientationPreserving(det));
    }
    let (u, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        // flip the direction of the smallest singular value
        let i = s.imin();
        let mut d = Mat3::identity();
        d[(i, i)] = -1.0;
        r = u * d * vt;
    }
    Ok(r)
}

/// `dist(F, SO(3))` from the singular values.
pub fn dist_so3(f: &Mat3) -> f64 {
    let mut s: Vec<f64> = f.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let flip = f.determinant() < 0.0;
    let t = [1.0, 1.0, if flip { -1.0 } else { 1.0 }];
    s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Brute-force `min_R |F − R|` over a quaternion grid with `n` nodes per axis,
/// refined by a shrinking local search.
pub fn dist_so3_brute_force(f: &Mat3, n: usize) -> f64 {
    let quat = |q: [f64; 4]| -> Mat3 {
        let [w, x, y, z] = q;
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    };
    let g = |i: usize| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
    let best = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut best = (f64::INFINITY, Mat3::identity());
            let w = (a as f64 + 0.5) / n as f64;
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let q = [w, g(b), g(c), g(d)];
                        let nq = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let r = quat(q.map(|v| v / nq));
                        let e = (f - r).norm();
                        if e < best.0 {
                            best = (e, r);
                        }
                    }
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::INFINITY, Mat3::identity()), |a, b| if b.0 < a.0 { b } else { a });
    let (mut e, mut r) = best;
    let mut step = 2.0 / n as f64;
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
    while step > 1e-9 {
        let mut improved = false;
        for ax in &axes {
            for s in [step, -step] {
                let cand = r * axis_angle(ax, s);
                let ce = (f - cand).norm();
                if ce < e {
                    e = ce;
                    r = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    e
}

/// Rotation and translation per interior cell.
#[derive(Clone, Debug, Serialize)]
pub struct PiecewiseRotationField {
    #[serde(skip)]
    pub layout: FiberLayout,
    pub cells: BTreeMap<CellIndex, (Mat3, Vec3)>,
}

impl PiecewiseRotationField {
    /// `Σ_ε(x') = R_ε^k e₃` on cell `k`.
    pub fn sigma(&self, x: &Vec2) -> Option<Vec3> {
        self.cells.get(&self.layout.cell_of(x)).map(|(r, _)| r.column(2).into_owned())
    }

    /// `w_ε(x) = R_ε^k x + b_ε^k`.
    pub fn w(&self, x: &Vec3) -> Option<Vec3> {
        self.cells.get(&self.layout.cell_of(&Vec2::new(x.x, x.y))).map(|(r, b)| r * x + b)
    }

    /// Bounding box of the cells.
    pub fn support(&self) -> Option<Rect2> {
        let mut it = self.cells.keys();
        let first = self.layout.cell_rect(*it.next()?);
        Some(self.cells.keys().fold(first, |acc, k| {
            let r = self.layout.cell_rect(*k);
            Rect2 {
                min: [acc.min[0].min(r.min[0]), acc.min[1].min(r.min[1])],
                max: [acc.max[0].max(r.max[0]), acc.max[1].max(r.max[1])],
            }
        }))
    }

    /// Table rows `k₁, k₂, R (row-major), b`.
    pub fn table(&self) -> Vec<(i64, i64, [f64; 9], [f64; 3])> {
        self.cells
            .iter()
            .map(|(k, (r, b))| {
                let mut m = [0.0; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        m[3 * i + j] = r[(i, j)];
                    }
                }
                (k.k[0], k.k[1], m, [b.x, b.y, b.z])
            })
            .collect()
    }
}

fn fiber_nodes(layout: &FiberLayout, k: CellIndex, height: f64, n: usize, n3: usize) -> Vec<Vec3> {
    let s = layout.inner_square(k);
    let mut v = Vec::with_capacity(n * n * n3);
    for c in 0..n3 {
        let z = height * (c as f64 + 0.5) / n3 as f64;
        for j in 0..n {
            for i in 0..n {
                v.push(Vec3::new(
                    s.min[0] + s.width() * (i as f64 + 0.5) / n as f64,
                    s.min[1] + s.height() * (j as f64 + 0.5) / n as f64,
                    z,
                ));
            }
        }
    }
    v
}

/// Average `∇u` over each inner square `S_ε^k × (0, L)` of the interior cells
/// and project; `b_ε^k` is the mean of `u − R_ε^k x` over the same nodes.
pub fn extract_rotations(
    u: &dyn VectorField,
    layout: &FiberLayout,
    domain: &Domain3,
    quad: &QuadratureSpec,
) -> Result<PiecewiseRotationField> {
    let cells = layout.interior_cells(&domain.omega);
    if cells.is_empty() {
        return Err(Error::NoInteriorCell);
    }
    let h = quad.fd_step(&domain.omega);
    let rows: Vec<Result<(CellIndex, (Mat3, Vec3))>> = cells
        .par_iter()
        .map(|k| {
            let nodes = fiber_nodes(layout, *k, domain.height, 4, quad.n3);
            let mut g = Mat3::zeros();
            for x in &nodes {
                g += grad(u, x, h)?;
            }
            g /= nodes.len() as f64;
            let r = project_so3(&g).map_err(|_| Error::ExtractionFailed(k.k[0], k.k[1]))?;
            let b = nodes.iter().fold(Vec3::zeros(), |acc, x| acc + (u.value(x) - r * x)) / nodes.len() as f64;
            Ok((*k, (r, b)))
        })
        .collect();
    let mut map = BTreeMap::new();
    for row in rows {
        let (k, v) = row?;
        map.insert(k, v);
    }
    Ok(PiecewiseRotationField { layout: layout.clone(), cells: map })
}

/// `‖u_ε − w_ε‖_{L^p}` over the union of the extracted cells.
pub fn piecewise_rigid_error(
    u: &dyn VectorField,
    prf: &PiecewiseRotationField,
    p: f64,
    domain: &Domain3,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let support = prf.support().ok_or(Error::NoInteriorCell)?;
    let region = Region::cuboid(support, (0.0, domain.height));
    let s = integrate(
        |x| match prf.w(x) {
            Some(w) => (u.value(x) - w).norm().powf(p),
            None => 0.0,
        },
        domain,
        &region,
        quad,
    )?;
    Ok(s.powf(1.0 / p))
}

/// `∫_{U'} |Σ_ε(x' + ξ) − Σ_ε(x')|^p dx'`, exact for the piecewise-constant
/// director.
pub fn fk_value(prf: &PiecewiseRotationField, xi: &Vec2, p: f64, region: &Rect2) -> Result<f64> {
    let l = &prf.layout;
    let sig = |k: CellIndex| -> Result<Vec3> {
        prf.cells.get(&k).map(|(r, _)| r.column(2).into_owned()).ok_or(Error::MissingCell(k.k[0], k.k[1]))
    };
    let mut total = 0.0;
    for k in l.cells_meeting(region) {
        let Some(part) = l.cell_rect(k).intersect(region) else { continue };
        let sk = sig(k)?;
        let moved = Rect2 { min: [part.min[0] + xi.x, part.min[1] + xi.y], max: [part.max[0] + xi.x, part.max[1] + xi.y] };
        for j in l.cells_meeting(&moved) {
            let Some(ov) = l.cell_rect(j).intersect(&moved) else { continue };
            if ov.area() <= 0.0 {
                continue;
            }
            let d = (sig(j)? - sk).norm();
            if d > 0.0 {
                total += ov.area() * d.powf(p);
            }
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, Serialize)]
pub struct FkRow {
    pub xi: [f64; 2],
    pub xi_norm: f64,
    pub value: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FkTable {
    pub eps: f64,
    pub rows: Vec<FkRow>,
    /// Smallest `C` with `value ≤ C(|ξ|^p + ε^p)` on all rows.
    pub fitted_c: f64,
}

pub fn fk_modulus(prf: &PiecewiseRotationField, xis: &[Vec2], p: f64, region: &Rect2, omega: &Rect2) -> Result<FkTable> {
    let e = prf.layout.eps();
    let bound = region.inset_in(omega);
    let mut vals = Vec::with_capacity(xis.len());
    for xi in xis {
        if xi.norm() > 0.0 && xi.norm() >= bound / 2.0 {
            return Err(Error::TranslationTooLarge { len: xi.norm(), bound: bound / 2.0 });
        }
        vals.push(fk_value(prf, xi, p, region)?);
    }
    let c = xis
        .iter()
        .zip(&vals)
        .map(|(xi, v)| v / (xi.norm().powf(p) + e.powf(p)))
        .fold(0.0, f64::max);
    let rows = xis
        .iter()
        .zip(vals)
        .map(|(xi, v)| FkRow {
            xi: [xi.x, xi.y],
            xi_norm: xi.norm(),
            value: v,
            slack: c * (xi.norm().powf(p) + e.powf(p)) - v,
        })
        .collect();
    Ok(FkTable { eps: e, rows, fitted_c: c })
}

/// `max_ξ (∫_{U'} |f(·+ξ) − f|^p)^{1/p} / |ξ|`.
pub fn difference_quotient_norm<F>(f: F, xis: &[Vec2], p: f64, region: &Rect2, omega: &Rect2, quad: &QuadratureSpec) -> Result<f64>
where
    F: Fn(&Vec2) -> Vec3 + Sync,
{
    let mut best: f64 = 0.0;
    for xi in xis {
        if xi.norm() == 0.0 {
            continue;
        }
        let t = translate_diff(&f, xi, p, region, omega, quad)?;
        best = best.max(t.powf(1.0 / p) / xi.norm());
    }
    Ok(best)
}

/// Parallelogram set-up of the neighboring-rotation bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma31Config {
    pub p: f64,
    pub l: [f64; 3],
    pub m: f64,
    pub a1: Mat3,
    pub a2: Mat3,
    pub b1: Vec3,
    pub b2: Vec3,
}

impl Lemma31Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || self.l.iter().any(|v| !(*v > 0.0)) || !self.m.is_finite() {
            return Err(Error::InvalidParameter("need p ≥ 1, L₁, L₂, L₃ > 0 and finite m".into()));
        }
        Ok(())
    }

    /// `d = (e₁ + m e₂)/√(1 + m²)`.
    pub fn direction(&self) -> Vec3 {
        Vec3::new(1.0, self.m, 0.0) / (1.0 + self.m * self.m).sqrt()
    }

    /// Point of `E` with sheared coordinates `y`.
    pub fn point(&self, y: &Vec3) -> Vec3 {
        Vec3::new(y.x, y.y + self.m * y.x, y.z)
    }

    pub fn w1(&self, x: &Vec3) -> Vec3 {
        self.a1 * x + self.b1
    }

    pub fn w2(&self, x: &Vec3) -> Vec3 {
        self.a2 * x + self.b2
    }
}

/// `L₃^{p+1}L₂ |(A₂ − A₁)e₃|^p / (2^p (p+1) (1+m²)^{p/2} L₁^{p−1})`.
pub fn lemma31_rhs(p: f64, l1: f64, l2: f64, l3: f64, m: f64, a1: &Mat3, a2: &Mat3) -> f64 {
    let c = (a2 - a1).column(2).norm();
    l3.powf(p + 1.0) * l2 / (2f64.powf(p) * (p + 1.0) * (1.0 + m * m).powf(p / 2.0) * l1.powf(p - 1.0)) * c.powf(p)
}

/// Linear interpolation between the traces along the sheared coordinate.
pub fn lemma31_interpolant(cfg: &Lemma31Config) -> crate::fields::ClosedForm {
    let c = cfg.clone();
    let c2 = cfg.clone();
    let parts = move |c: &Lemma31Config, x: &Vec3| {
        let l1 = c.l[0];
        let t = x.x / l1;
        let y2 = x.y - c.m * x.x;
        let p = c.a1 * Vec3::new(0.0, y2, x.z) + c.b1;
        let q = c.a2 * Vec3::new(l1, y2 + c.m * l1, x.z) + c.b2;
        (t, p, q)
    };
    crate::fields::ClosedForm::new(move |x| {
        let (t, p, q) = parts(&c, x);
        p * (1.0 - t) + q * t
    })
    .with_gradient(move |x| {
        let c = &c2;
        let (t, p, q) = parts(c, x);
        let e2 = c.a1.column(1) * (1.0 - t) + c.a2.column(1) * t;
        let e3 = c.a1.column(2) * (1.0 - t) + c.a2.column(2) * t;
        let e1 = (q - p) / c.l[0] - e2 * c.m;
        from_columns(&e1, &e2, &e3)
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma31Report {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub trace_residual: f64,
}

/// `∫_E |∂_d v|^p` against the closed-form bound, after checking the traces.
pub fn lemma31_verify(v: &dyn VectorField, cfg: &Lemma31Config, n: usize) -> Result<Lemma31Report> {
    cfg.validate()?;
    let [l1, l2, l3] = cfg.l;
    let mut trace: f64 = 0.0;
    let k = 9;
    for j in 0..k {
        for i in 0..k {
            let y2 = l2 * (j as f64 + 0.5) / k as f64;
            let y3 = l3 * (i as f64 + 0.5) / k as f64;
            let x0 = cfg.point(&Vec3::new(0.0, y2, y3));
            let x1 = cfg.point(&Vec3::new(l1, y2, y3));
            trace = trace.max((v.value(&x0) - cfg.w1(&x0)).norm());
            trace = trace.max((v.value(&x1) - cfg.w2(&x1)).norm());
        }
    }
    if trace > 1e-8 {
        return Err(Error::TraceViolation(trace));
    }
    let d = cfg.direction();
    let h = 1e-4 * l1.min(l2).min(l3);
    let g = gauss_legendre(n)?;
    let mut lhs = 0.0;
    for &(a, wa) in &g {
        for &(b, wb) in &g {
            for &(c, wc) in &g {
                let y = Vec3::new(l1 * a, l2 * b, l3 * c);
                let v = (grad(v, &cfg.point(&y), h)? * d).norm().powf(cfg.p);
                if !v.is_finite() {
                    return Err(Error::NonFinite(crate::linalg::arr3(&y)));
                }
                lhs += wa * wb * wc * v;
            }
        }
    }
    lhs *= l1 * l2 * l3;
    let rhs = lemma31_rhs(cfg.p, l1, l2, l3, cfg.m, &cfg.a1, &cfg.a2);
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(Lemma31Report { lhs, rhs, ratio, trace_residual: trace })
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one Gauss node".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((1.0 - x) / 2.0, w / 2.0));
    }
    out.reverse();
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscreteMinimum {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub sweeps: usize,
}

/// Coordinate descent for `p = 2` on an `n³` node grid in sheared
/// coordinates; only the two trace faces are fixed.
pub fn lemma31_discrete_min(cfg: &Lemma31Config, n: usize, max_sweeps: usize) -> Result<DiscreteMinimum> {
    cfg.validate()?;
    if cfg.p != 2.0 {
        return Err(Error::InvalidParameter("the discrete minimizer handles p = 2".into()));
    }
    if n < 3 {
        return Err(Error::InvalidParameter("need at least 3 nodes per axis".into()));
    }
    let [l1, l2, l3] = cfg.l;
    let hs = [l1 / (n - 1) as f64, l2 / (n - 1) as f64, l3 / (n - 1) as f64];
    let idx = |i: usize, j: usize, k: usize| i + n * (j + n * k);
    let mut v = vec![Vec3::zeros(); n * n * n];
    for k in 0..n {
        for j in 0..n {
            let y = |i: usize| Vec3::new(i as f64 * hs[0], j as f64 * hs[1], k as f64 * hs[2]);
            let left = cfg.w1(&cfg.point(&y(0)));
            let right = cfg.w2(&cfg.point(&y(n - 1)));
            for i in 0..n {
                v[idx(i, j, k)] = if i == n - 1 { right } else { left };
            }
        }
    }
    // trapezoid weights across the fibers
    let tw = |i: usize, h: f64| if i == 0 || i == n - 1 { 0.5 * h } else { h };
    let energy = |v: &[Vec3]| -> f64 {
        let mut e = 0.0;
        for k in 0..n {
            for j in 0..n {
                let w = tw(j, hs[1]) * tw(k, hs[2]);
                for i in 0..n - 1 {
                    e += w * (v[idx(i + 1, j, k)] - v[idx(i, j, k)]).norm_squared() / hs[0];
                }
            }
        }
        e / (1.0 + cfg.m * cfg.m)
    };
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut change: f64 = 0.0;
        for k in 0..n {
            for j in 0..n {
                for i in 1..n - 1 {
                    let new = (v[idx(i - 1, j, k)] + v[idx(i + 1, j, k)]) * 0.5;
                    change = change.max((new - v[idx(i, j, k)]).norm());
                    v[idx(i, j, k)] = new;
                }
            }
        }
        if change < 1e-13 {
            break;
        }
    }
    let lhs = energy(&v);
    let rhs = lemma31_rhs(2.0, l1, l2, l3, cfg.m, &cfg.a1, &cfg.a2);
    Ok(DiscreteMinimum { lhs, rhs, ratio: if rhs > 0.0 { lhs / rhs } else { f64::NAN }, sweeps })
}

/// Soft-phase density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SoftDensity {
    /// `dist^p(F, SO(3))`.
    DistP { p: f64 },
    /// `|FᵀF − I|^p / 2^p` for `det F > 0`, `dist^p` otherwise.
    StvkLike { p: f64 },
}

impl SoftDensity {
    pub fn eval(&self, f: &Mat3) -> f64 {
        match *self {
            SoftDensity::DistP { p } => dist_so3(f).powf(p),
            SoftDensity::StvkLike { p } => {
                if f.determinant() > 0.0 {
                    ((f.transpose() * f - Mat3::identity()).norm() / 2.0).powf(p)
                } else {
                    dist_so3(f).powf(p)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergySpec {
    pub soft: SoftDensity,
    /// Feasibility tolerance of the rigid phase.
    pub tau: f64,
    /// Exponent of the rigid `dist^p` diagnostic.
    pub p: f64,
}

impl Default for EnergySpec {
    fn default() -> Self {
        EnergySpec { soft: SoftDensity::DistP { p: 2.0 }, tau: 1e-8, p: 4.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub soft: f64,
    /// `Some(0)` when feasible, `None` when the rigid constraint is violated.
    pub rigid: Option<f64>,
    pub max_rigid_dist: f64,
    /// `∫_{Y_ε^rig ∩ Ω} dist^p(∇u, SO(3))`.
    pub rigid_dist_p: f64,
}

pub fn energy(u: &dyn VectorField, layout: &FiberLayout, domain: &Domain3, spec: &EnergySpec, quad: &QuadratureSpec) -> Result<EnergyReport> {
    let h = quad.fd_step(&domain.omega);
    let nodes = quad.nodes3d(&domain.omega, (0.0, domain.height));
    let parts: Vec<Result<(f64, f64, f64)>> = nodes
        .par_chunks(4096)
        .map(|chunk| {
            let (mut soft, mut dp, mut mx) = (0.0, 0.0, 0.0f64);
            for (x, w) in chunk {
                let g = grad(u, x, h)?;
                if layout.is_rigid(x) {
                    let d = dist_so3(&g);
                    mx = mx.max(d);
                    dp += w * d.powf(spec.p);
                } else {
                    soft += w * spec.soft.eval(&g);
                }
            }
            Ok((soft, dp, mx))
        })
        .collect();
    let (mut soft, mut dp, mut mx) = (0.0, 0.0, 0.0f64);
    for part in parts {
        let (s, d, m) = part?;
        soft += s;
        dp += d;
        mx = mx.max(m);
    }
    Ok(EnergyReport { soft, rigid: if mx <= spec.tau { Some(0.0) } else { None }, max_rigid_dist: mx, rigid_dist_p: dp })
}

/// `|{x ∈ Q : dist(V(x), SO(3)) > γ}|`.
pub fn deviation_measure<V>(v: V, gamma: f64, q: &Rect2, z: (f64, f64), domain: &Domain3, quad: &QuadratureSpec) -> Result<f64>
where
    V: Fn(&Vec3) -> Mat3 + Sync,
{
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter("γ must be positive".into()));
    }
    let region = Region::cuboid(*q, z);
    integrate(|x| if dist_so3(&v(x)) > gamma { 1.0 } else { 0.0 }, domain, &region, quad)
}

/// `V_ε(x') = ⨍ (∇'u_ε | Σ_ε(x')) dx₃`.
pub fn averaged_frame(u: &dyn VectorField, prf: &PiecewiseRotationField, x: &Vec2, height: f64, n3: usize, h: f64) -> Result<Option<Mat3>> {
    let Some(s) = prf.sigma(x) else { return Ok(None) };
    let mut c = [Vec3::zeros(), Vec3::zeros()];
    for k in 0..n3 {
        let g = grad(u, &Vec3::new(x.x, x.y, height * (k as f64 + 0.5) / n3 as f64), h)?;
        c[0] += g.column(0);
        c[1] += g.column(1);
    }
    Ok(Some(from_columns(&(c[0] / n3 as f64), &(c[1] / n3 as f64), &s)))
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularizedRow {
    pub eps: f64,
    /// `max_{i,j ∈ {1,2}} ‖∂_i∂_j u_ε‖_{L^p}`.
    pub second_diff: f64,
    pub fk_fitted_c: f64,
    /// `fitted C / ε^p`.
    pub fk_rescaled: f64,
    /// `‖dist(V_ε, SO(3))‖_{L^p}` on the fibers.
    pub v_dist_rigid: f64,
    /// `‖V_ε − ⨍∇u dx₃‖_{L^p(U')}` against the candidate limit.
    pub v_to_limit: Option<f64>,
}

/// One row of the regularized diagnostics for a sequence member.
#[allow(clippy::too_many_arguments)]
pub fn regularized_row(
    u: &dyn VectorField,
    limit: Option<&dyn VectorField>,
    layout: &FiberLayout,
    domain: &Domain3,
    p: f64,
    xis: &[Vec2],
    region: &Rect2,
    quad: &QuadratureSpec,
) -> Result<RegularizedRow> {
    let e = layout.eps();
    let mut sd: f64 = 0.0;
    let reg = Region::cuboid(*region, (0.0, domain.height));
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        sd = sd.max(crate::fields::second_diff_norm(u, i, j, p, domain, &reg, quad)?);
    }
    let prf = extract_rotations(u, layout, domain, quad)?;
    let fk = fk_modulus(&prf, xis, p, region, &domain.omega)?;
    let h = quad.fd_step(&domain.omega);
    let n3 = quad.n3;
    let rigid: f64 = quad.sum2d_try(region, |x| {
        if !layout.is_rigid_2d(x) {
            return Ok(0.0);
        }
        Ok(match averaged_frame(u, &prf, x, domain.height, n3, h)? {
            Some(v) => dist_so3(&v).powf(p),
            None => 0.0,
        })
    })?;
    let v_to_limit = match limit {
        None => None,
        Some(lim) => {
            let s = quad.sum2d_try(region, |x| {
                let Some(v) = averaged_frame(u, &prf, x, domain.height, n3, h)? else { return Ok(0.0) };
                let mut g = Mat3::zeros();
                for k in 0..n3 {
                    g += grad(lim, &Vec3::new(x.x, x.y, domain.height * (k as f64 + 0.5) / n3 as f64), h)?;
                }
                Ok((v - g / n3 as f64).norm().powf(p))
            })?;
            Some((s * domain.height).powf(1.0 / p))
        }
    };
    Ok(RegularizedRow {
        eps: e,
        second_diff: sd,
        fk_fitted_c: fk.fitted_c,
        fk_rescaled: fk.fitted_c / e.powf(p),
        v_dist_rigid: (rigid * domain.height).powf(1.0 / p),
        v_to_limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx_identity::ApproxIdentity;
    use crate::fields::ClosedForm;
    use crate::geometry::Eps;
    use crate::limit::{preset, to_rotation_form, Lift, Preset, RotationForm};
    use crate::linalg::orthogonality_defect;
    use crate::sequence::build;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
        let ax = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        axis_angle(&ax, rng.random_range(-3.0..3.0))
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_so3(&Mat3::identity()).unwrap(), Mat3::identity());
        let d = Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0));
        assert!((project_so3(&d).unwrap() - Mat3::identity()).norm() < 1e-14);
        let r0 = axis_angle(&Vec3::new(0.2, -1.0, 0.4), 1.1);
        let f = r0 * Mat3::from_diagonal(&Vec3::new(1.3, 1.0, 1.0));
        assert!((project_so3(&f).unwrap() - r0).norm() < 1e-13);
        assert!(matches!(project_so3(&-Mat3::identity()), Err(Error::NotOrientationPreserving(_))));
        assert!(project_so3(&Mat3::zeros()).is_err());
    }

    #[test]
    fn distance_examples() {
        assert!(dist_so3(&axis_angle(&Vec3::x(), 0.4)) < 1e-14);
        assert!((dist_so3(&Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0))) - 1.0).abs() < 1e-14);
        assert!((dist_so3(&Mat3::zeros()) - 3f64.sqrt()).abs() < 1e-15);
        // reflection: distance 2 to the nearest rotation diag(1, 1, 1)
        assert!((dist_so3(&Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0))) - 2.0).abs() < 1e-14);
        let f = Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0));
        assert!((dist_so3_brute_force(&f, 16) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn projection_idempotent_and_distance_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let r = random_rotation(&mut rng);
            assert!((project_so3(&r).unwrap() - r).norm() <= 1e-12);
            let f = Mat3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let q = random_rotation(&mut rng);
            let d = dist_so3(&f);
            assert!((dist_so3(&(q * f)) - d).abs() < 1e-10);
            assert!((dist_so3(&(f * q)) - d).abs() < 1e-10);
            if f.determinant() > 0.0 {
                assert!(((f - project_so3(&f).unwrap()).norm() - d).abs() < 1e-10);
            }
        }
    }

    fn built(p: &Preset, n: u64) -> (Domain3, FiberLayout, crate::sequence::ApproxDeformation) {
        let d = p.default_domain();
        let rf = to_rotation_form(&preset(p, &d).unwrap(), Lift::R, None).unwrap();
        let l = FiberLayout::standard(Eps::inv(n));
        let id = ApproxIdentity::for_layout(&l, d.omega).unwrap();
        let u = build(&rf, &l, &id, Vec2::zeros()).unwrap();
        (d, l, u)
    }

    #[test]
    fn extraction_recovers_collapsed_rotations() {
        let (d, l, u) = built(&Preset::Shear { gamma: 1.0 }, 8);
        let q = QuadratureSpec::for_layout(&l);
        let prf = extract_rotations(&u, &l, &d, &q).unwrap();
        assert_eq!(prf.cells.len(), 256);
        for (k, (r, _)) in &prf.cells {
            assert!(orthogonality_defect(r) <= 1e-10);
            let want = u.rf.rotation(&u.collapsed_point(&l, *k));
            assert!((r - want).norm() <= 1e-10);
        }
        // the director is constant: no translation modulus
        let region = Rect2::new([-0.5, -0.5], [0.5, 0.5]).unwrap();
        let fk = fk_modulus(&prf, &[Vec2::new(0.125, 0.0), Vec2::zeros()], 4.0, &region, &d.omega).unwrap();
        assert_eq!(fk.fitted_c, 0.0);
    }

    #[test]
    fn rigid_motion_pipeline_is_exact() {
        let d = Domain3::unit_cube();
        let r0 = axis_angle(&Vec3::new(1.0, 0.0, 1.0), 0.8);
        let b0 = Vec3::new(1.0, 2.0, 3.0);
        let u = ClosedForm::affine(r0, b0);
        let l = FiberLayout::standard(Eps::inv(8));
        let q = QuadratureSpec::for_layout(&l);
        let prf = extract_rotations(&u, &l, &d, &q).unwrap();
        for (r, b) in prf.cells.values() {
            assert!((r - r0).norm() < 1e-12 && (b - b0).norm() < 1e-12);
        }
        assert!(piecewise_rigid_error(&u, &prf, 4.0, &d, &q).unwrap() < 1e-10);
        let e = energy(&u, &l, &d, &EnergySpec::default(), &q).unwrap();
        assert!(e.soft < 1e-20 && e.rigid == Some(0.0));
    }

    #[test]
    fn shear_sequence_energy_is_feasible() {
        let (d, l, u) = built(&Preset::Shear { gamma: 1.0 }, 8);
        let q = QuadratureSpec::for_layout(&l);
        let e = energy(&u, &l, &d, &EnergySpec::default(), &q).unwrap();
        assert_eq!(e.rigid, Some(0.0));
        assert!(e.soft > 0.0);
        assert!(e.max_rigid_dist <= 1e-12);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in 1..8 {
            let g = gauss_legendre(n).unwrap();
            for deg in 0..2 * n {
                let s: f64 = g.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((s - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "{n} {deg}");
            }
        }
    }

    #[test]
    fn lemma31_rhs_examples() {
        let i = Mat3::identity();
        assert_eq!(lemma31_rhs(2.0, 1.0, 1.0, 1.0, 0.0, &i, &i), 0.0);
        let mut a2 = Mat3::zeros();
        a2[(0, 2)] = 1.0;
        let z = Mat3::zeros();
        assert!((lemma31_rhs(2.0, 1.0, 1.0, 1.0, 0.0, &z, &a2) - 1.0 / 12.0).abs() < 1e-16);
        let p = 3.0;
        let r1 = lemma31_rhs(p, 1.0, 0.7, 1.3, 0.4, &z, &a2);
        let r2 = lemma31_rhs(p, 2.0, 0.7, 1.3, 0.4, &z, &a2);
        assert!((r1 / r2 - 2f64.powf(p - 1.0)).abs() < 1e-12);
    }

    fn attaining_config() -> Lemma31Config {
        let mut a2 = Mat3::zeros();
        a2[(0, 2)] = 1.0;
        Lemma31Config { p: 2.0, l: [1.0, 1.0, 1.0], m: 0.0, a1: Mat3::zeros(), a2, b1: Vec3::zeros(), b2: Vec3::new(-0.5, 0.0, 0.0) }
    }

    #[test]
    fn lemma31_interpolant_and_minimizer() {
        let cfg = attaining_config();
        let v = lemma31_interpolant(&cfg);
        let r = lemma31_verify(&v, &cfg, 24).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-6, "{r:?}");
        let dm = lemma31_discrete_min(&cfg, 17, 50_000).unwrap();
        assert!(dm.ratio >= 0.999 && dm.ratio <= 1.05, "{dm:?}");

        let same = Lemma31Config { a2: Mat3::zeros(), b2: Vec3::zeros(), ..cfg.clone() };
        let r = lemma31_verify(&lemma31_interpolant(&same), &same, 8).unwrap();
        assert_eq!((r.lhs, r.rhs, r.ratio), (0.0, 0.0, 1.0));

        let bad = ClosedForm::identity();
        assert!(matches!(lemma31_verify(&bad, &cfg, 8), Err(Error::TraceViolation(_))));
    }

    #[test]
    fn lemma31_holds_for_sheared_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let cfg = Lemma31Config {
                p: [1.5, 2.0, 4.0][rng.random_range(0..3)],
                l: [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)],
                m: rng.random_range(-1.0..1.0),
                a1: Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                a2: Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                b1: Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                b2: Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            };
            let r = lemma31_verify(&lemma31_interpolant(&cfg), &cfg, 16).unwrap();
            assert!(r.ratio >= 0.98, "{r:?}");
        }
    }

    #[test]
    fn difference_quotients() {
        let omega = Rect2::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        let u = Rect2::new([0.25, 0.25], [0.75, 0.75]).unwrap();
        let q = QuadratureSpec::uniform(400, 4, 2).unwrap();
        let c = difference_quotient_norm(|_| Vec3::x(), &[Vec2::new(0.01, 0.0)], 2.0, &u, &omega, &q).unwrap();
        assert_eq!(c, 0.0);
        // a jump across x₁ = 1/2: ∫|Δ|² = |ξ|·(1/2), quotient ∝ |ξ|^{-1/2}
        let step = |x: &Vec2| if x.x < 0.5 { Vec3::zeros() } else { Vec3::x() };
        let a = difference_quotient_norm(step, &[Vec2::new(0.04, 0.0)], 2.0, &u, &omega, &q).unwrap();
        let b = difference_quotient_norm(step, &[Vec2::new(0.01, 0.0)], 2.0, &u, &omega, &q).unwrap();
        assert!((b / a - 2.0).abs() < 0.05, "{a} {b}");
    }

    #[test]
    fn deviation_examples() {
        let d = Domain3::unit_cube();
        let q = QuadratureSpec::uniform(16, 16, 2).unwrap();
        let box_ = Rect2::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        assert_eq!(deviation_measure(|_| Mat3::identity(), 0.1, &box_, (0.0, 1.0), &d, &q).unwrap(), 0.0);
        let g = 0.1;
        let m = deviation_measure(|_| Mat3::identity() + Mat3::from_diagonal(&Vec3::new(2.0 * g, 0.0, 0.0)), g, &box_, (0.0, 1.0), &d, &q).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        let l = FiberLayout::standard(Eps::inv(8));
        let q = QuadratureSpec::for_layout(&l);
        let m = deviation_measure(|x| if l.is_rigid(x) { Mat3::identity() } else { Mat3::identity() * 3.0 }, 0.5, &box_, (0.0, 1.0), &d, &q).unwrap();
        assert!((m - 0.84).abs() < 1e-12);
    }

    #[test]
    fn regularized_row_for_rigid_sequence() {
        let d = Domain3::new([0.0, 0.0], [2.0, 2.0], 1.0).unwrap();
        let rf = RotationForm::constant(d.omega, axis_angle(&Vec3::y(), 0.3), Vec3::zeros()).unwrap();
        let l = FiberLayout::standard(Eps::inv(4));
        let id = ApproxIdentity::for_layout(&l, d.omega).unwrap();
        let u = build(&rf, &l, &id, Vec2::zeros()).unwrap();
        let q = QuadratureSpec::for_layout(&l);
        let region = Rect2::new([0.6, 0.6], [1.4, 1.4]).unwrap();
        let row = regularized_row(&u, Some(&rf), &l, &d, 2.0, &[Vec2::new(0.25, 0.0)], &region, &q).unwrap();
        assert!(row.second_diff < 1e-8 && row.fk_fitted_c == 0.0 && row.v_dist_rigid < 1e-12);
        assert!(row.v_to_limit.unwrap() < 1e-12);
    }
}

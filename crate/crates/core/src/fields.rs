//! Field calculus on `Ω`: closed-form and grid-sampled vector fields,
//! gradients, midpoint tensor quadrature with region masks, translation
//! differences and second differences.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Domain3, FiberLayout, FiberShape, Rect2};
use crate::linalg::{arr3, Mat3, Vec2, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    ClosedForm,
    Sampled,
}

/// A map `Ω → ℝ³`. Gradients are column-ordered `(∂₁u | ∂₂u | ∂₃u)`.
pub trait VectorField: Send + Sync {
    fn value(&self, x: &Vec3) -> Vec3;

    /// Exact gradient, when known.
    fn gradient(&self, _x: &Vec3) -> Option<Mat3> {
        None
    }

    /// Exact `∂_i∂_j u` for cross-section axes `i, j ∈ {0, 1}`, when known.
    fn second_derivative(&self, _x: &Vec3, _i: usize, _j: usize) -> Option<Vec3> {
        None
    }

    /// Box outside of which the field cannot be evaluated (sampled fields).
    fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        None
    }

    fn kind(&self) -> FieldKind {
        FieldKind::ClosedForm
    }
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn value(&self, x: &Vec3) -> Vec3 {
        (**self).value(x)
    }
    fn gradient(&self, x: &Vec3) -> Option<Mat3> {
        (**self).gradient(x)
    }
    fn second_derivative(&self, x: &Vec3, i: usize, j: usize) -> Option<Vec3> {
        (**self).second_derivative(x, i, j)
    }
    fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        (**self).bounds()
    }
    fn kind(&self) -> FieldKind {
        (**self).kind()
    }
}

impl<T: VectorField + ?Sized> VectorField for Arc<T> {
    fn value(&self, x: &Vec3) -> Vec3 {
        (**self).value(x)
    }
    fn gradient(&self, x: &Vec3) -> Option<Mat3> {
        (**self).gradient(x)
    }
    fn second_derivative(&self, x: &Vec3, i: usize, j: usize) -> Option<Vec3> {
        (**self).second_derivative(x, i, j)
    }
    fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        (**self).bounds()
    }
    fn kind(&self) -> FieldKind {
        (**self).kind()
    }
}

impl<T: VectorField + ?Sized> VectorField for Box<T> {
    fn value(&self, x: &Vec3) -> Vec3 {
        (**self).value(x)
    }
    fn gradient(&self, x: &Vec3) -> Option<Mat3> {
        (**self).gradient(x)
    }
    fn second_derivative(&self, x: &Vec3, i: usize, j: usize) -> Option<Vec3> {
        (**self).second_derivative(x, i, j)
    }
    fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        (**self).bounds()
    }
    fn kind(&self) -> FieldKind {
        (**self).kind()
    }
}

pub type ValueFn = Arc<dyn Fn(&Vec3) -> Vec3 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&Vec3) -> Mat3 + Send + Sync>;
pub type SecondFn = Arc<dyn Fn(&Vec3, usize, usize) -> Vec3 + Send + Sync>;

/// Field given by closures.
#[derive(Clone)]
pub struct ClosedForm {
    value: ValueFn,
    gradient: Option<GradientFn>,
    second: Option<SecondFn>,
}

impl fmt::Debug for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedForm")
            .field("gradient", &self.gradient.is_some())
            .field("second", &self.second.is_some())
            .finish()
    }
}

impl ClosedForm {
    pub fn new(value: impl Fn(&Vec3) -> Vec3 + Send + Sync + 'static) -> Self {
        ClosedForm { value: Arc::new(value), gradient: None, second: None }
    }

    pub fn with_gradient(mut self, g: impl Fn(&Vec3) -> Mat3 + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_second(mut self, s: impl Fn(&Vec3, usize, usize) -> Vec3 + Send + Sync + 'static) -> Self {
        self.second = Some(Arc::new(s));
        self
    }

    pub fn identity() -> Self {
        ClosedForm::new(|x| *x)
            .with_gradient(|_| Mat3::identity())
            .with_second(|_, _, _| Vec3::zeros())
    }

    /// `x ↦ R x + b`.
    pub fn affine(r: Mat3, b: Vec3) -> Self {
        ClosedForm::new(move |x| r * x + b)
            .with_gradient(move |_| r)
            .with_second(|_, _, _| Vec3::zeros())
    }
}

impl VectorField for ClosedForm {
    fn value(&self, x: &Vec3) -> Vec3 {
        (self.value)(x)
    }
    fn gradient(&self, x: &Vec3) -> Option<Mat3> {
        self.gradient.as_ref().map(|g| g(x))
    }
    fn second_derivative(&self, x: &Vec3, i: usize, j: usize) -> Option<Vec3> {
        self.second.as_ref().map(|s| s(x, i, j))
    }
}

/// Node values on a tensor grid, trilinearly interpolated.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledField {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    /// x₁ fastest, then x₂, then x₃.
    pub values: Vec<Vec3>,
}

impl SampledField {
    /// Sample `u` on `dims` nodes spanning the closed domain.
    pub fn sample(u: &dyn VectorField, domain: &Domain3, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::InvalidParameter("sampled grids need at least 2 nodes per axis".into()));
        }
        let origin = [domain.omega.min[0], domain.omega.min[1], 0.0];
        let ext = [domain.omega.width(), domain.omega.height(), domain.height];
        let spacing = [0, 1, 2].map(|a| ext[a] / (dims[a] - 1) as f64);
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let x = Vec3::new(
                        origin[0] + i as f64 * spacing[0],
                        origin[1] + j as f64 * spacing[1],
                        origin[2] + k as f64 * spacing[2],
                    );
                    values.push(u.value(&x));
                }
            }
        }
        Ok(SampledField { dims, origin, spacing, values })
    }

    fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.values[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# fibrig-grid v1")?;
        writeln!(w, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        writeln!(w, "origin {:e} {:e} {:e}", self.origin[0], self.origin[1], self.origin[2])?;
        writeln!(w, "spacing {:e} {:e} {:e}", self.spacing[0], self.spacing[1], self.spacing[2])?;
        for v in &self.values {
            writeln!(w, "{:e} {:e} {:e}", v.x, v.y, v.z)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim_start().starts_with('#')));
        let mut header = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing '{key}' line")))??;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::Parse(format!("expected '{key}' line, got '{line}'")));
            }
            Ok(it.map(str::to_owned).collect())
        };
        let parse_f = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
        let d = header("dims")?;
        let o = header("origin")?;
        let h = header("spacing")?;
        if d.len() != 3 || o.len() != 3 || h.len() != 3 {
            return Err(Error::Parse("header lines need three entries".into()));
        }
        let mut dims = [0usize; 3];
        let mut origin = [0.0; 3];
        let mut spacing = [0.0; 3];
        for a in 0..3 {
            dims[a] = d[a].parse().map_err(|e| Error::Parse(format!("dims: {e}")))?;
            origin[a] = parse_f(&o[a])?;
            spacing[a] = parse_f(&h[a])?;
        }
        let n = dims.iter().product::<usize>();
        let mut values = Vec::with_capacity(n);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let c: Vec<f64> = line.split_whitespace().map(parse_f).collect::<Result<_>>()?;
            if c.len() != 3 {
                return Err(Error::Parse(format!("bad value line '{line}'")));
            }
            values.push(Vec3::new(c[0], c[1], c[2]));
        }
        if values.len() != n {
            return Err(Error::Parse(format!("expected {n} values, found {}", values.len())));
        }
        Ok(SampledField { dims, origin, spacing, values })
    }
}

impl VectorField for SampledField {
    fn value(&self, x: &Vec3) -> Vec3 {
        let mut idx = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let s = ((x[a] - self.origin[a]) / self.spacing[a]).clamp(0.0, (self.dims[a] - 1) as f64);
            let i = (s.floor() as usize).min(self.dims[a] - 2);
            idx[a] = i;
            t[a] = s - i as f64;
        }
        let mut acc = Vec3::zeros();
        for (dk, wk) in [(0, 1.0 - t[2]), (1, t[2])] {
            for (dj, wj) in [(0, 1.0 - t[1]), (1, t[1])] {
                for (di, wi) in [(0, 1.0 - t[0]), (1, t[0])] {
                    acc += self.node(idx[0] + di, idx[1] + dj, idx[2] + dk) * (wi * wj * wk);
                }
            }
        }
        acc
    }

    fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        let hi = [0, 1, 2].map(|a| self.origin[a] + self.spacing[a] * (self.dims[a] - 1) as f64);
        Some((self.origin, hi))
    }

    fn kind(&self) -> FieldKind {
        FieldKind::Sampled
    }
}

fn inside(bounds: &Option<([f64; 3], [f64; 3])>, x: &Vec3) -> bool {
    match bounds {
        None => true,
        Some((lo, hi)) => (0..3).all(|a| x[a] >= lo[a] - 1e-12 && x[a] <= hi[a] + 1e-12),
    }
}

/// First derivative along axis `a` with step `h`: central when the stencil
/// fits, one-sided second order within `h` of the bounds.
fn derivative_axis(u: &dyn VectorField, x: &Vec3, a: usize, h: f64) -> Result<Vec3> {
    let b = u.bounds();
    let e = Vec3::ith(a, h);
    let (p, m) = (x + e, x - e);
    if inside(&b, &p) && inside(&b, &m) {
        return Ok((u.value(&p) - u.value(&m)) / (2.0 * h));
    }
    if inside(&b, x) && inside(&b, &(x + 2.0 * e)) {
        return Ok((-3.0 * u.value(x) + 4.0 * u.value(&p) - u.value(&(x + 2.0 * e))) / (2.0 * h));
    }
    if inside(&b, x) && inside(&b, &(x - 2.0 * e)) {
        return Ok((3.0 * u.value(x) - 4.0 * u.value(&m) + u.value(&(x - 2.0 * e))) / (2.0 * h));
    }
    Err(Error::StencilOutOfDomain(arr3(x)))
}

/// Gradient with central differences, ignoring any exact gradient.
pub fn fd_gradient(u: &dyn VectorField, x: &Vec3, h: f64) -> Result<Mat3> {
    let mut g = Mat3::zeros();
    for a in 0..3 {
        g.set_column(a, &derivative_axis(u, x, a, h)?);
    }
    Ok(g)
}

/// `∇u(x)`: exact when available, otherwise finite differences with step `h`.
pub fn grad(u: &dyn VectorField, x: &Vec3, h: f64) -> Result<Mat3> {
    if !inside(&u.bounds(), x) {
        return Err(Error::StencilOutOfDomain(arr3(x)));
    }
    match u.gradient(x) {
        Some(g) => Ok(g),
        None => fd_gradient(u, x, h),
    }
}

/// `∂_i∂_j u(x)` for `i, j ∈ {0, 1}`: exact when available, otherwise second
/// differences with step `h`.
pub fn second_derivative(u: &dyn VectorField, x: &Vec3, i: usize, j: usize, h: f64) -> Result<Vec3> {
    if let Some(v) = u.second_derivative(x, i, j) {
        return Ok(v);
    }
    let b = u.bounds();
    let ei = Vec3::ith(i, h);
    let ej = Vec3::ith(j, h);
    if i == j {
        let pts = [x + ei, x - ei];
        if pts.iter().all(|p| inside(&b, p)) {
            return Ok((u.value(&pts[0]) - 2.0 * u.value(x) + u.value(&pts[1])) / (h * h));
        }
        for s in [1.0, -1.0] {
            let q: Vec<Vec3> = (0..4).map(|n| x + ei * (s * n as f64)).collect();
            if q.iter().all(|p| inside(&b, p)) {
                let v: Vec<Vec3> = q.iter().map(|p| u.value(p)).collect();
                return Ok((2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h));
            }
        }
        return Err(Error::StencilOutOfDomain(arr3(x)));
    }
    let pts = [x + ei + ej, x + ei - ej, x - ei + ej, x - ei - ej];
    if pts.iter().all(|p| inside(&b, p)) {
        let v: Vec<Vec3> = pts.iter().map(|p| u.value(p)).collect();
        return Ok((v[0] - v[1] - v[2] + v[3]) / (4.0 * h * h));
    }
    // mixed derivative near the bounds: difference of one-sided first derivatives
    let dp = derivative_axis(u, &(x + ej), i, h);
    let dm = derivative_axis(u, &(x - ej), i, h);
    match (dp, dm) {
        (Ok(a), Ok(c)) if inside(&b, &(x + ej)) && inside(&b, &(x - ej)) => Ok((a - c) / (2.0 * h)),
        _ => {
            let d0 = derivative_axis(u, x, i, h)?;
            for s in [1.0, -1.0] {
                let e1 = x + ej * s;
                let e2 = x + ej * (2.0 * s);
                if inside(&b, &e1) && inside(&b, &e2) {
                    let d1 = derivative_axis(u, &e1, i, h)?;
                    let d2 = derivative_axis(u, &e2, i, h)?;
                    return Ok((-3.0 * d0 + 4.0 * d1 - d2) * (s / (2.0 * h)));
                }
            }
            Err(Error::StencilOutOfDomain(arr3(x)))
        }
    }
}

/// Cross-section rule of the midpoint tensor quadrature.
#[derive(Clone, Debug, PartialEq)]
pub enum CrossSectionRule {
    /// `n1 × n2` equal panels over the integration rectangle.
    Uniform { n1: usize, n2: usize },
    /// Cell by cell, with panel edges on the lattice lines, the margin lines
    /// `ε(k+α)`, `ε(k+1−α)` (the kinks of the approximate identity) and the
    /// fiber edges; at least `panels_per_cell` panels per cell and axis.
    CellAligned { layout: FiberLayout, panels_per_cell: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub rule: CrossSectionRule,
    /// Panels across the height.
    pub n3: usize,
}

/// Tensor block of 1D nodes `(position, weight)`.
#[derive(Clone, Debug)]
pub struct Block {
    pub xs: Vec<(f64, f64)>,
    pub ys: Vec<(f64, f64)>,
}

fn midpoints(a: f64, b: f64, n: usize, out: &mut Vec<(f64, f64)>) {
    let w = (b - a) / n as f64;
    out.extend((0..n).map(|i| (a + (i as f64 + 0.5) * w, w)));
}

fn split_nodes(breaks: &mut Vec<f64>, lo: f64, hi: f64, per_unit: f64) -> Vec<(f64, f64)> {
    breaks.retain(|&b| b > lo && b < hi);
    breaks.push(lo);
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * (1.0 + b.abs()));
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let n = ((w[1] - w[0]) * per_unit - 1e-9).ceil().max(1.0) as usize;
        midpoints(w[0], w[1], n, &mut out);
    }
    out
}

impl QuadratureSpec {
    pub fn uniform(n1: usize, n2: usize, n3: usize) -> Result<Self> {
        if n1 < 2 || n2 < 2 || n3 < 2 {
            return Err(Error::InvalidParameter("quadrature needs at least 2 panels per axis".into()));
        }
        Ok(QuadratureSpec { rule: CrossSectionRule::Uniform { n1, n2 }, n3 })
    }

    pub fn cell_aligned(layout: &FiberLayout, panels_per_cell: usize, n3: usize) -> Result<Self> {
        if panels_per_cell < 2 || n3 < 2 {
            return Err(Error::InvalidParameter("quadrature needs at least 2 panels per axis".into()));
        }
        Ok(QuadratureSpec {
            rule: CrossSectionRule::CellAligned { layout: layout.clone(), panels_per_cell },
            n3,
        })
    }

    /// Default refinement: 8 panels per cell (≥ 8/ε per unit length), 8 in height.
    pub fn for_layout(layout: &FiberLayout) -> Self {
        QuadratureSpec::cell_aligned(layout, 8, 8).expect("valid")
    }

    /// Finite-difference step: half the nominal panel width.
    pub fn fd_step(&self, region: &Rect2) -> f64 {
        match &self.rule {
            CrossSectionRule::Uniform { n1, n2 } => {
                0.5 * (region.width() / *n1 as f64).min(region.height() / *n2 as f64)
            }
            CrossSectionRule::CellAligned { layout, panels_per_cell } => 0.5 * layout.eps() / *panels_per_cell as f64,
        }
    }

    pub fn blocks(&self, region: &Rect2) -> Vec<Block> {
        match &self.rule {
            CrossSectionRule::Uniform { n1, n2 } => {
                let mut xs = Vec::new();
                midpoints(region.min[0], region.max[0], *n1, &mut xs);
                let mut ys = Vec::new();
                midpoints(region.min[1], region.max[1], *n2, &mut ys);
                ys.into_iter().map(|y| Block { xs: xs.clone(), ys: vec![y] }).collect()
            }
            CrossSectionRule::CellAligned { layout, panels_per_cell } => {
                let e = layout.eps();
                let per_unit = *panels_per_cell as f64 / e;
                layout
                    .cells_meeting(region)
                    .into_iter()
                    .filter_map(|k| {
                        let cell = layout.cell_rect(k);
                        let clip = cell.intersect(region)?;
                        let o = layout.cell_origin(k);
                        let mut bx = vec![o.x + layout.alpha * e, o.x + (1.0 - layout.alpha) * e];
                        let mut by = vec![o.y + layout.alpha * e, o.y + (1.0 - layout.alpha) * e];
                        match &layout.shape {
                            FiberShape::Square => {
                                let s = layout.inner_square(k);
                                bx.extend([s.min[0], s.max[0]]);
                                by.extend([s.min[1], s.max[1]]);
                            }
                            FiberShape::Polygon { .. } => {
                                for v in layout.cross_section(k) {
                                    bx.push(v.x);
                                    by.push(v.y);
                                }
                            }
                        }
                        let xs = split_nodes(&mut bx, clip.min[0], clip.max[0], per_unit);
                        let ys = split_nodes(&mut by, clip.min[1], clip.max[1], per_unit);
                        Some(Block { xs, ys })
                    })
                    .collect()
            }
        }
    }

    /// `Σ w f(x')` over the cross-section nodes in `region`.
    pub fn sum2d<F>(&self, region: &Rect2, f: F) -> Result<f64>
    where
        F: Fn(&Vec2) -> f64 + Sync,
    {
        let parts: Vec<Result<f64>> = self
            .blocks(region)
            .par_iter()
            .map(|b| {
                let mut s = 0.0;
                for &(y, wy) in &b.ys {
                    for &(x, wx) in &b.xs {
                        let p = Vec2::new(x, y);
                        let v = f(&p);
                        if !v.is_finite() {
                            return Err(Error::NonFinite([x, y, 0.0]));
                        }
                        s += wx * wy * v;
                    }
                }
                Ok(s)
            })
            .collect();
        parts.into_iter().sum()
    }

    /// `Σ w f(x)` over the nodes of `region × (z0, z1)`.
    pub fn sum3d<F>(&self, region: &Rect2, z: (f64, f64), f: F) -> Result<f64>
    where
        F: Fn(&Vec3) -> f64 + Sync,
    {
        let mut zs = Vec::new();
        midpoints(z.0, z.1, self.n3, &mut zs);
        self.sum2d_multi(region, |p| {
            let mut s = 0.0;
            for &(z, wz) in &zs {
                let x = Vec3::new(p.x, p.y, z);
                let v = f(&x);
                if !v.is_finite() {
                    return Err(Error::NonFinite(arr3(&x)));
                }
                s += wz * v;
            }
            Ok(s)
        })
    }

    fn sum2d_multi<F>(&self, region: &Rect2, f: F) -> Result<f64>
    where
        F: Fn(&Vec2) -> Result<f64> + Sync,
    {
        let parts: Vec<Result<f64>> = self
            .blocks(region)
            .par_iter()
            .map(|b| {
                let mut s = 0.0;
                for &(y, wy) in &b.ys {
                    for &(x, wx) in &b.xs {
                        s += wx * wy * f(&Vec2::new(x, y))?;
                    }
                }
                Ok(s)
            })
            .collect();
        parts.into_iter().sum()
    }

    /// Every 3D node with its weight, in a fixed order.
    pub fn nodes3d(&self, region: &Rect2, z: (f64, f64)) -> Vec<(Vec3, f64)> {
        let mut zs = Vec::new();
        midpoints(z.0, z.1, self.n3, &mut zs);
        let mut out = Vec::new();
        for b in self.blocks(region) {
            for &(y, wy) in &b.ys {
                for &(x, wx) in &b.xs {
                    for &(z, wz) in &zs {
                        out.push((Vec3::new(x, y, z), wx * wy * wz));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Mask<'a> {
    All,
    Rigid(&'a FiberLayout),
    Soft(&'a FiberLayout),
}

/// Integration region: a cuboid `cross × (z0, z1)` intersected with a mask.
#[derive(Clone, Copy, Debug)]
pub struct Region<'a> {
    pub cross: Option<Rect2>,
    pub z: Option<(f64, f64)>,
    pub mask: Mask<'a>,
}

impl<'a> Region<'a> {
    pub fn omega() -> Self {
        Region { cross: None, z: None, mask: Mask::All }
    }

    pub fn rigid(layout: &'a FiberLayout) -> Self {
        Region { cross: None, z: None, mask: Mask::Rigid(layout) }
    }

    pub fn soft(layout: &'a FiberLayout) -> Self {
        Region { cross: None, z: None, mask: Mask::Soft(layout) }
    }

    pub fn cuboid(cross: Rect2, z: (f64, f64)) -> Self {
        Region { cross: Some(cross), z: Some(z), mask: Mask::All }
    }

    pub fn within(mut self, cross: Rect2) -> Self {
        self.cross = Some(cross);
        self
    }

    fn resolve(&self, domain: &Domain3) -> Result<(Rect2, (f64, f64))> {
        let cross = match self.cross {
            Some(c) => c.intersect(&domain.omega).ok_or_else(|| {
                Error::InvalidParameter("integration region does not meet the domain".into())
            })?,
            None => domain.omega,
        };
        Ok((cross, self.z.unwrap_or((0.0, domain.height))))
    }

    fn admits(&self, x: &Vec3) -> bool {
        match self.mask {
            Mask::All => true,
            Mask::Rigid(l) => l.is_rigid(x),
            Mask::Soft(l) => !l.is_rigid(x),
        }
    }
}

/// `∫_region f dx` for a scalar integrand.
pub fn integrate<F>(f: F, domain: &Domain3, region: &Region, quad: &QuadratureSpec) -> Result<f64>
where
    F: Fn(&Vec3) -> f64 + Sync,
{
    let (cross, z) = region.resolve(domain)?;
    quad.sum3d(&cross, z, |x| if region.admits(x) { f(x) } else { 0.0 })
}

/// Measure of the region as seen by the quadrature.
pub fn measure(domain: &Domain3, region: &Region, quad: &QuadratureSpec) -> Result<f64> {
    integrate(|_| 1.0, domain, region, quad)
}

/// `(∫_region |f|^p dx)^{1/p}` where `magnitude` returns `|f(x)|`.
pub fn lp_norm<F>(magnitude: F, p: f64, domain: &Domain3, region: &Region, quad: &QuadratureSpec) -> Result<f64>
where
    F: Fn(&Vec3) -> f64 + Sync,
{
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must be ≥ 1")));
    }
    let (cross, z) = region.resolve(domain)?;
    let s = quad.sum3d(&cross, z, |x| {
        if !region.admits(x) {
            return 0.0;
        }
        let m = magnitude(x);
        if m.is_finite() {
            m.abs().powf(p)
        } else {
            f64::NAN
        }
    })?;
    Ok(s.powf(1.0 / p))
}

/// `‖u‖_{L^p}` of a vector field.
pub fn field_lp_norm(u: &dyn VectorField, p: f64, domain: &Domain3, region: &Region, quad: &QuadratureSpec) -> Result<f64> {
    lp_norm(|x| u.value(x).norm(), p, domain, region, quad)
}

/// `∫_{U'} |f(x'+ξ) − f(x')|^p dx'` for a field on the cross-section.
pub fn translate_diff<F>(f: F, xi: &Vec2, p: f64, region: &Rect2, omega: &Rect2, quad: &QuadratureSpec) -> Result<f64>
where
    F: Fn(&Vec2) -> Vec3 + Sync,
{
    let bound = region.inset_in(omega);
    if xi.norm() >= bound && xi.norm() > 0.0 {
        return Err(Error::TranslationTooLarge { len: xi.norm(), bound });
    }
    if xi.norm() == 0.0 {
        return Ok(0.0);
    }
    quad.sum2d(region, |x| (f(&(x + xi)) - f(x)).norm().powf(p))
}

/// `‖∂_i∂_j u‖_{L^p(Ω)}` for cross-section axes `i, j ∈ {0, 1}`.
pub fn second_diff_norm(
    u: &dyn VectorField,
    i: usize,
    j: usize,
    p: f64,
    domain: &Domain3,
    region: &Region,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if i > 1 || j > 1 {
        return Err(Error::InvalidParameter("second differences are taken in x₁, x₂ only".into()));
    }
    let (cross, z) = region.resolve(domain)?;
    // a full panel width, so stencils around a node straddle the panel edges
    let h = 2.0 * quad.fd_step(&cross);
    let s = quad.sum3d_try(&cross, z, |x| {
        if !region.admits(x) {
            return Ok(0.0);
        }
        Ok(second_derivative(u, x, i, j, h)?.norm().powf(p))
    })?;
    Ok(s.powf(1.0 / p))
}

impl QuadratureSpec {
    /// As [`QuadratureSpec::sum2d`] with a fallible integrand.
    pub fn sum2d_try<F>(&self, region: &Rect2, f: F) -> Result<f64>
    where
        F: Fn(&Vec2) -> Result<f64> + Sync,
    {
        self.sum2d_multi(region, |p| {
            let v = f(p)?;
            if !v.is_finite() {
                return Err(Error::NonFinite([p.x, p.y, 0.0]));
            }
            Ok(v)
        })
    }

    /// As [`QuadratureSpec::sum3d`] with a fallible integrand.
    pub fn sum3d_try<F>(&self, region: &Rect2, z: (f64, f64), f: F) -> Result<f64>
    where
        F: Fn(&Vec3) -> Result<f64> + Sync,
    {
        let mut zs = Vec::new();
        midpoints(z.0, z.1, self.n3, &mut zs);
        self.sum2d_multi(region, |p| {
            let mut s = 0.0;
            for &(z, wz) in &zs {
                let x = Vec3::new(p.x, p.y, z);
                let v = f(&x)?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(arr3(&x)));
                }
                s += wz * v;
            }
            Ok(s)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Eps;

    fn shear() -> ClosedForm {
        ClosedForm::new(|x| Vec3::new(x.x, x.x + x.y, x.z))
    }

    #[test]
    fn gradient_examples() {
        let h = 1e-3;
        let x = Vec3::new(0.3, 0.4, 0.5);
        let g = grad(&ClosedForm::new(|x| *x), &x, h).unwrap();
        assert!((g - Mat3::identity()).norm() < 1e-10);
        let g = grad(&shear(), &x, h).unwrap();
        let expect = Mat3::new(1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!((g - expect).norm() < 1e-10);
        // x₃Σ + d with Σ = e₃, d = (x₁, x₂, 0)
        let director = ClosedForm::new(|x| x.z * Vec3::z() + Vec3::new(x.x, x.y, 0.0));
        assert!((grad(&director, &x, h).unwrap() - Mat3::identity()).norm() < 1e-10);
    }

    #[test]
    fn sampled_gradient_needs_room() {
        let d = Domain3::unit_cube();
        let s = SampledField::sample(&shear(), &d, [11, 11, 11]).unwrap();
        // one-sided near the boundary, still exact for a linear field
        let g = grad(&s, &Vec3::new(0.0, 0.5, 0.5), 0.05).unwrap();
        assert!((g[(1, 0)] - 1.0).abs() < 1e-10);
        assert!(matches!(grad(&s, &Vec3::new(1.5, 0.5, 0.5), 0.05), Err(Error::StencilOutOfDomain(_))));
    }

    #[test]
    fn lp_norm_examples() {
        let d = Domain3::unit_cube();
        let q = QuadratureSpec::uniform(16, 16, 16).unwrap();
        let c = lp_norm(|_| 3.0, 4.0, &d, &Region::omega(), &q).unwrap();
        assert!((c - 3.0).abs() < 1e-12);
        let n = lp_norm(|x| x.z, 2.0, &d, &Region::omega(), &q).unwrap();
        // midpoint error for ∫z² is h²/12 = 1/3072
        assert!((n * n - 1.0 / 3.0).abs() < 1.0 / 3072.0 + 1e-12);
        assert!(lp_norm(|_| f64::NAN, 2.0, &d, &Region::omega(), &q).is_err());
        assert!(lp_norm(|_| 1.0, 0.5, &d, &Region::omega(), &q).is_err());
    }

    #[test]
    fn rigid_measure_matches_volume_fraction() {
        let d = Domain3::unit_cube();
        let l = FiberLayout::standard(Eps::inv(8));
        let q = QuadratureSpec::for_layout(&l);
        let m = measure(&d, &Region::rigid(&l), &q).unwrap();
        assert!((m - 0.16).abs() < 1e-12);
        let s = measure(&d, &Region::soft(&l), &q).unwrap();
        assert!((s - 0.84).abs() < 1e-12);
    }

    #[test]
    fn translate_diff_examples() {
        let omega = Rect2::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        let u = Rect2::new([0.25, 0.25], [0.75, 0.75]).unwrap();
        let q = QuadratureSpec::uniform(20, 20, 2).unwrap();
        let c = translate_diff(|_| Vec3::x(), &Vec2::new(0.1, 0.0), 4.0, &u, &omega, &q).unwrap();
        assert_eq!(c, 0.0);
        let t = 0.1;
        let lin = translate_diff(|x| Vec3::new(x.x, 0.0, 0.0), &Vec2::new(t, 0.0), 3.0, &u, &omega, &q).unwrap();
        assert!((lin - 0.25 * t.powi(3)).abs() < 1e-14);
        assert_eq!(translate_diff(|x| Vec3::new(x.x, 0.0, 0.0), &Vec2::zeros(), 2.0, &u, &omega, &q).unwrap(), 0.0);
        assert!(translate_diff(|_| Vec3::x(), &Vec2::new(0.3, 0.0), 2.0, &u, &omega, &q).is_err());
    }

    #[test]
    fn second_diff_of_affine_is_zero() {
        let d = Domain3::unit_cube();
        let q = QuadratureSpec::uniform(8, 8, 4).unwrap();
        let a = ClosedForm::new(|x| Vec3::new(2.0 * x.x + x.y, x.z - x.x, 3.0 * x.y));
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let n = second_diff_norm(&a, i, j, 2.0, &d, &Region::omega(), &q).unwrap();
            assert!(n < 1e-6, "{n}");
        }
    }

    #[test]
    fn sampled_round_trip_text() {
        let d = Domain3::unit_cube();
        let s = SampledField::sample(&shear(), &d, [3, 4, 2]).unwrap();
        let mut buf = Vec::new();
        s.write_text(&mut buf).unwrap();
        let back = SampledField::read_text(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, s);
        let x = Vec3::new(0.3, 0.7, 0.2);
        assert!((s.value(&x) - shear().value(&x)).norm() < 1e-12);
    }

    #[test]
    fn partition_independent_sums() {
        let d = Domain3::unit_cube();
        let l = FiberLayout::standard(Eps::inv(8));
        let q = QuadratureSpec::for_layout(&l);
        let f = |x: &Vec3| (x.x * 7.0).sin() * x.y + x.z * x.z;
        let a = integrate(f, &d, &Region::omega(), &q).unwrap();
        let b = integrate(f, &d, &Region::omega(), &q).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let serial: f64 = q.nodes3d(&d.omega, (0.0, 1.0)).iter().map(|(x, w)| w * f(x)).sum();
        assert!((a - serial).abs() < 1e-13);
    }
}

//! Reference configuration and the lattice of fiber cross-sections.
//!
//! The body is `Ω = ω × (0, L)` with a rectangular cross-section `ω`. Space is
//! tiled by the half-open cells `ε(k + [0,1)²)`; every cell carries one fiber
//! cross-section `ω_ε^k` confined to the margin box `ε(k + [α, 1−α)²)` and
//! containing the inner square `S_ε^k = a_ε^k + ε[−δ/2, δ/2)²`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Vec2, Vec3};

/// Cell size as an exact positive rational.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Eps {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Eps {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidParameter(format!("epsilon {num}/{den} must be positive")));
        }
        let g = gcd(num, den);
        Ok(Eps { num: num / g, den: den / g })
    }

    /// `1/n`.
    pub fn inv(n: u64) -> Self {
        Eps::new(1, n.max(1)).expect("positive")
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    pub fn half(&self) -> Self {
        if self.num.is_multiple_of(2) {
            Eps::new(self.num / 2, self.den).expect("positive")
        } else {
            Eps::new(self.num, self.den * 2).expect("positive")
        }
    }
}

impl fmt::Display for Eps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Eps {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("cannot parse epsilon '{s}'"));
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| bad())?;
            let d: u64 = d.trim().parse().map_err(|_| bad())?;
            return Eps::new(n, d);
        }
        // decimal literal, converted exactly
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 15 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let den = 10u64.pow(frac.len() as u32);
        let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        Eps::new(int * den + frac_v, den)
    }
}

impl Serialize for Eps {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Eps {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned rectangle `[min, max]` in the cross-section plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect2 {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect2 {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        if !(min[0] < max[0] && min[1] < max[1]) {
            return Err(Error::InvalidParameter(format!("degenerate rectangle {min:?}..{max:?}")));
        }
        Ok(Rect2 { min, max })
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }

    pub fn contains_rect(&self, other: &Rect2) -> bool {
        other.min[0] >= self.min[0]
            && other.min[1] >= self.min[1]
            && other.max[0] <= self.max[0]
            && other.max[1] <= self.max[1]
    }

    pub fn intersect(&self, other: &Rect2) -> Option<Rect2> {
        let min = [self.min[0].max(other.min[0]), self.min[1].max(other.min[1])];
        let max = [self.max[0].min(other.max[0]), self.max[1].min(other.max[1])];
        (min[0] < max[0] && min[1] < max[1]).then_some(Rect2 { min, max })
    }

    /// Nearest point of the closed rectangle.
    pub fn clamp(&self, p: &Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.min[0], self.max[0]), p.y.clamp(self.min[1], self.max[1]))
    }

    /// Distance from this rectangle to the boundary of an enclosing rectangle.
    pub fn inset_in(&self, outer: &Rect2) -> f64 {
        [
            self.min[0] - outer.min[0],
            self.min[1] - outer.min[1],
            outer.max[0] - self.max[0],
            outer.max[1] - self.max[1],
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    pub fn shrink(&self, by: f64) -> Result<Rect2> {
        Rect2::new([self.min[0] + by, self.min[1] + by], [self.max[0] - by, self.max[1] - by])
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1]))
    }

    pub fn as_polygon(&self) -> Vec<Vec2> {
        vec![
            Vec2::new(self.min[0], self.min[1]),
            Vec2::new(self.max[0], self.min[1]),
            Vec2::new(self.max[0], self.max[1]),
            Vec2::new(self.min[0], self.max[1]),
        ]
    }
}

/// `Ω = ω × (0, L)` with a rectangular cross-section.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain3 {
    pub omega: Rect2,
    pub height: f64,
}

impl Domain3 {
    pub fn new(omega_min: [f64; 2], omega_max: [f64; 2], height: f64) -> Result<Self> {
        if !(height > 0.0) {
            return Err(Error::InvalidParameter(format!("height {height} must be positive")));
        }
        Ok(Domain3 { omega: Rect2::new(omega_min, omega_max)?, height })
    }

    pub fn unit_cube() -> Self {
        Domain3::new([0.0, 0.0], [1.0, 1.0], 1.0).expect("valid")
    }

    pub fn volume(&self) -> f64 {
        self.omega.area() * self.height
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        self.omega.contains(&Vec2::new(x.x, x.y)) && x.z >= 0.0 && x.z <= self.height
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub k: [i64; 2],
}

impl CellIndex {
    pub fn new(k1: i64, k2: i64) -> Self {
        CellIndex { k: [k1, k2] }
    }

    pub fn shifted(&self, d1: i64, d2: i64) -> Self {
        CellIndex::new(self.k[0] + d1, self.k[1] + d2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CenterMode {
    /// `a_ε^k = ε(k + a)`.
    Periodic { a: [f64; 2] },
    /// Centers drawn per cell from `[α+δ/2, 1−α−δ/2)²` with a seeded generator.
    Jittered { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FiberShape {
    /// `ω_ε^k = S_ε^k`.
    Square,
    /// Convex polygon in unit-cell coordinates (counter-clockwise), scaled by ε
    /// and translated to the cell corner.
    Polygon { vertices: Vec<[f64; 2]> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Horizontal,
    Vertical,
}

/// Parallelogram joining facing edges of neighboring inner squares, in the
/// normal form `{0 < s < l1, m s < t < m s + l2}` of the neighbor estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Connector {
    pub l1: f64,
    pub l2: f64,
    pub slope: f64,
    /// Lower end of the first boundary segment (in physical coordinates).
    pub anchor: [f64; 2],
    pub direction: Direction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectorVariant {
    /// Full facing edges, half-width δ/2.
    Edge,
    /// Quarter-square edges, half-width δ/4, overlapping the squares.
    Overlap,
}

/// ε-indexed lattice of fiber cross-sections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberLayout {
    pub epsilon: Eps,
    pub alpha: f64,
    pub delta: f64,
    pub center_mode: CenterMode,
    pub shape: FiberShape,
}

impl FiberLayout {
    pub fn new(epsilon: Eps, alpha: f64, delta: f64, center_mode: CenterMode, shape: FiberShape) -> Result<Self> {
        let layout = FiberLayout { epsilon, alpha, delta, center_mode, shape };
        layout.validate()?;
        Ok(layout)
    }

    /// Periodic square fibers centered in their cells.
    pub fn periodic(epsilon: Eps, alpha: f64, delta: f64) -> Result<Self> {
        FiberLayout::new(epsilon, alpha, delta, CenterMode::Periodic { a: [0.5, 0.5] }, FiberShape::Square)
    }

    /// α = 0.25, δ = 0.4, centered squares.
    pub fn standard(epsilon: Eps) -> Self {
        FiberLayout::periodic(epsilon, 0.25, 0.4).expect("valid defaults")
    }

    pub fn with_epsilon(&self, epsilon: Eps) -> Self {
        FiberLayout { epsilon, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, d) = (self.alpha, self.delta);
        if !(a > 0.0 && a < 0.5) {
            return Err(Error::InvalidParameter(format!("alpha {a} must lie in (0, 1/2)")));
        }
        if !(d > 0.0 && d + 2.0 * a < 1.0 + 1e-15) {
            return Err(Error::InvalidParameter(format!("delta {d} must satisfy 0 < δ and δ + 2α < 1")));
        }
        let (lo, hi) = (a + d / 2.0, 1.0 - a - d / 2.0);
        if let CenterMode::Periodic { a: c } = &self.center_mode {
            for &ci in c {
                if !(ci >= lo - 1e-15 && ci <= hi + 1e-15) {
                    return Err(Error::InvalidParameter(format!(
                        "center {c:?} must lie in [{lo}, {hi})²"
                    )));
                }
            }
        }
        if let FiberShape::Polygon { vertices } = &self.shape {
            let c = match &self.center_mode {
                CenterMode::Periodic { a } => *a,
                CenterMode::Jittered { .. } => {
                    return Err(Error::InvalidParameter("polygon fibers require periodic centers".into()))
                }
            };
            if vertices.len() < 3 {
                return Err(Error::InvalidParameter("polygon needs at least 3 vertices".into()));
            }
            let poly: Vec<Vec2> = vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect();
            if polygon_area(&poly) <= 0.0 || !is_convex_ccw(&poly) {
                return Err(Error::InvalidParameter("polygon must be convex and counter-clockwise".into()));
            }
            let tol = 1e-12;
            if poly.iter().any(|v| v.x < a - tol || v.x > 1.0 - a + tol || v.y < a - tol || v.y > 1.0 - a + tol) {
                return Err(Error::InvalidParameter("polygon leaves the margin box [α, 1−α]²".into()));
            }
            let h = d / 2.0;
            for (sx, sy) in [(-h, -h), (h, -h), (h, h), (-h, h)] {
                let q = Vec2::new(c[0] + sx, c[1] + sy);
                if !in_convex(&poly, &q, -tol) {
                    return Err(Error::InvalidParameter("polygon does not contain the inner square".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eps(&self) -> f64 {
        self.epsilon.value()
    }

    pub fn cell_of(&self, x: &Vec2) -> CellIndex {
        let (n, d) = (self.epsilon.numer() as f64, self.epsilon.denom() as f64);
        // x/ε = x·den/num; exact for dyadic ε and representable x
        CellIndex::new((x.x * d / n).floor() as i64, (x.y * d / n).floor() as i64)
    }

    /// Lower-left corner `εk`.
    pub fn cell_origin(&self, k: CellIndex) -> Vec2 {
        let (n, d) = (self.epsilon.numer() as f64, self.epsilon.denom() as f64);
        Vec2::new(k.k[0] as f64 * n / d, k.k[1] as f64 * n / d)
    }

    pub fn cell_rect(&self, k: CellIndex) -> Rect2 {
        let o = self.cell_origin(k);
        let e = self.eps();
        Rect2 { min: [o.x, o.y], max: [o.x + e, o.y + e] }
    }

    /// Center of the inner square in unit-cell coordinates.
    pub fn unit_center(&self, k: CellIndex) -> Vec2 {
        match &self.center_mode {
            CenterMode::Periodic { a } => Vec2::new(a[0], a[1]),
            CenterMode::Jittered { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(*seed, k));
                let lo = self.alpha + self.delta / 2.0;
                let hi = 1.0 - self.alpha - self.delta / 2.0;
                if hi <= lo {
                    return Vec2::new(lo, lo);
                }
                Vec2::new(rng.random_range(lo..hi), rng.random_range(lo..hi))
            }
        }
    }

    /// `a_ε^k`.
    pub fn center(&self, k: CellIndex) -> Vec2 {
        self.cell_origin(k) + self.unit_center(k) * self.eps()
    }

    /// `S_ε^k` as a rectangle.
    pub fn inner_square(&self, k: CellIndex) -> Rect2 {
        let c = self.center(k);
        let h = 0.5 * self.delta * self.eps();
        Rect2 { min: [c.x - h, c.y - h], max: [c.x + h, c.y + h] }
    }

    /// Margin box `ε(k + [α, 1−α)²)`.
    pub fn margin_box(&self, k: CellIndex) -> Rect2 {
        let o = self.cell_origin(k);
        let e = self.eps();
        Rect2 {
            min: [o.x + self.alpha * e, o.y + self.alpha * e],
            max: [o.x + (1.0 - self.alpha) * e, o.y + (1.0 - self.alpha) * e],
        }
    }

    /// Cross-section `ω_ε^k` as a polygon in physical coordinates.
    pub fn cross_section(&self, k: CellIndex) -> Vec<Vec2> {
        match &self.shape {
            FiberShape::Square => self.inner_square(k).as_polygon(),
            FiberShape::Polygon { vertices } => {
                let o = self.cell_origin(k);
                vertices.iter().map(|v| o + Vec2::new(v[0], v[1]) * self.eps()).collect()
            }
        }
    }

    /// Whether `x'` lies in the fiber cross-section of its own cell.
    pub fn is_rigid_2d(&self, x: &Vec2) -> bool {
        let k = self.cell_of(x);
        match &self.shape {
            FiberShape::Square => {
                let c = self.center(k);
                let h = 0.5 * self.delta * self.eps();
                x.x >= c.x - h && x.x < c.x + h && x.y >= c.y - h && x.y < c.y + h
            }
            FiberShape::Polygon { .. } => in_convex(&self.cross_section(k), x, 1e-300),
        }
    }

    /// Membership in `Y_ε^rig`; fibers are x₃-invariant.
    pub fn is_rigid(&self, x: &Vec3) -> bool {
        self.is_rigid_2d(&Vec2::new(x.x, x.y))
    }

    /// Cells meeting the rectangle (half-open convention on the upper edges).
    pub fn cells_meeting(&self, r: &Rect2) -> Vec<CellIndex> {
        let (n, d) = (self.epsilon.numer() as f64, self.epsilon.denom() as f64);
        let k0 = self.cell_of(&Vec2::new(r.min[0], r.min[1]));
        let k1 = [((r.max[0] * d / n).ceil() as i64) - 1, ((r.max[1] * d / n).ceil() as i64) - 1];
        let mut out = Vec::new();
        for j in k0.k[1]..=k1[1] {
            for i in k0.k[0]..=k1[0] {
                out.push(CellIndex::new(i, j));
            }
        }
        out
    }

    /// Cells whose closed cell rectangle lies inside `r`.
    pub fn interior_cells(&self, r: &Rect2) -> Vec<CellIndex> {
        let tol = 1e-12 * self.eps();
        let grown = Rect2 { min: [r.min[0] - tol, r.min[1] - tol], max: [r.max[0] + tol, r.max[1] + tol] };
        self.cells_meeting(r).into_iter().filter(|k| grown.contains_rect(&self.cell_rect(*k))).collect()
    }

    /// `|Y_ε^rig ∩ Ω| / |Ω|` from exact clipped areas.
    pub fn rigid_volume_fraction(&self, domain: &Domain3) -> Result<f64> {
        if self.interior_cells(&domain.omega).is_empty() {
            return Err(Error::NoInteriorCell);
        }
        let clip = domain.omega.as_polygon();
        let total: f64 = self
            .cells_meeting(&domain.omega)
            .into_iter()
            .map(|k| polygon_area(&clip_convex(&self.cross_section(k), &clip)))
            .sum();
        Ok(total / domain.omega.area())
    }

    /// `(1 − 2α − δ) / (2α)`, the largest slope of any connector.
    pub fn slope_bound(&self) -> f64 {
        (1.0 - 2.0 * self.alpha - self.delta) / (2.0 * self.alpha)
    }

    /// Largest |slope| over the connectors between interior cells of `domain`.
    pub fn realized_max_slope(&self, domain: &Domain3) -> f64 {
        let cells = self.interior_cells(&domain.omega);
        let set: std::collections::BTreeSet<_> = cells.iter().copied().collect();
        let mut worst: f64 = 0.0;
        for k in &cells {
            for (dir, n) in [(Direction::Horizontal, k.shifted(1, 0)), (Direction::Vertical, k.shifted(0, 1))] {
                if set.contains(&n) {
                    worst = worst.max(self.connector_unchecked(*k, dir, ConnectorVariant::Edge).slope.abs());
                }
            }
        }
        worst
    }

    /// Connector between cell `k` and its right (horizontal) or upper (vertical) neighbor.
    pub fn connector(
        &self,
        domain: &Domain3,
        k: CellIndex,
        direction: Direction,
        variant: ConnectorVariant,
    ) -> Result<Connector> {
        let n = match direction {
            Direction::Horizontal => k.shifted(1, 0),
            Direction::Vertical => k.shifted(0, 1),
        };
        for c in [k, n] {
            if !domain.omega.contains_rect(&self.cell_rect(c)) {
                return Err(Error::MissingCell(c.k[0], c.k[1]));
            }
        }
        Ok(self.connector_unchecked(k, direction, variant))
    }

    fn connector_unchecked(&self, k: CellIndex, direction: Direction, variant: ConnectorVariant) -> Connector {
        let h = match variant {
            ConnectorVariant::Edge => 0.5,
            ConnectorVariant::Overlap => 0.25,
        } * self.delta
            * self.eps();
        let (along, across) = match direction {
            Direction::Horizontal => (0, 1),
            Direction::Vertical => (1, 0),
        };
        let a = self.center(k);
        let b = self.center(match direction {
            Direction::Horizontal => k.shifted(1, 0),
            Direction::Vertical => k.shifted(0, 1),
        });
        let start = a[along] + h;
        let l1 = (b[along] - h) - start;
        let slope = (b[across] - a[across]) / l1;
        let mut anchor = [0.0; 2];
        anchor[along] = start;
        anchor[across] = a[across] - h;
        Connector { l1, l2: 2.0 * h, slope, anchor, direction }
    }
}

fn cell_seed(seed: u64, k: CellIndex) -> u64 {
    // splitmix64 over (seed, k1, k2)
    let mut z = seed
        ^ (k.k[0] as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (k.k[1] as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Signed shoelace area (positive for counter-clockwise).
pub fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let n = poly.len();
    0.5 * (0..n).map(|i| poly[i].perp(&poly[(i + 1) % n])).sum::<f64>()
}

fn is_convex_ccw(poly: &[Vec2]) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let (a, b, c) = (poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
        (b - a).perp(&(c - b)) >= 0.0
    })
}

/// Point strictly inside a convex counter-clockwise polygon (margin `tol`).
fn in_convex(poly: &[Vec2], p: &Vec2, tol: f64) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        (b - a).perp(&(p - a)) >= tol
    })
}

/// Sutherland–Hodgman clip of `subject` against a convex counter-clockwise `clip`.
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut out = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let inside = |p: &Vec2| (b - a).perp(&(p - a)) >= 0.0;
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (pin, qin) = (inside(&p), inside(&q));
            if pin {
                out.push(p);
            }
            if pin != qin {
                let d = q - p;
                let t = (b - a).perp(&(a - p)) / (b - a).perp(&d);
                out.push(p + d * t);
            }
        }
    }
    out
}

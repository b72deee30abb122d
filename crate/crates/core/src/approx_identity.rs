//! Piecewise-affine approximation of the identity that collapses every fiber
//! cross-section to a single point.

use serde::Serialize;

use crate::error::Result;
use crate::fields::QuadratureSpec;
use crate::geometry::{CellIndex, Eps, FiberLayout, Rect2};
use crate::linalg::{Mat2, Vec2};

/// Piece of the translated cell `Z = [−α, 1−α)²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Piece {
    Z1,
    Z2,
    Z3,
    Z4,
}

/// Locate `z` in the periodic partition: the `Z`-cell index, the piece and
/// the local coordinate in `Z`.
pub fn locate(z: &Vec2, alpha: f64) -> ([i64; 2], Piece, Vec2) {
    let k = [(z.x + alpha).floor() as i64, (z.y + alpha).floor() as i64];
    let l = Vec2::new(z.x - k[0] as f64, z.y - k[1] as f64);
    let piece = match (l.x < alpha, l.y < alpha) {
        (true, true) => Piece::Z1,
        (true, false) => Piece::Z2,
        (false, false) => Piece::Z3,
        (false, true) => Piece::Z4,
    };
    (k, piece, l)
}

/// `φ(z')`.
pub fn phi(z: &Vec2, alpha: f64) -> Vec2 {
    let (k, piece, l) = locate(z, alpha);
    let s = 1.0 / (2.0 * alpha);
    let local = match piece {
        Piece::Z1 => l * s,
        Piece::Z2 => Vec2::new(l.x * s, 0.5),
        Piece::Z3 => Vec2::new(0.5, 0.5),
        Piece::Z4 => Vec2::new(0.5, l.y * s),
    };
    Vec2::new(k[0] as f64, k[1] as f64) + local
}

/// Gradient of `φ` on a piece.
pub fn piece_gradient(piece: Piece, alpha: f64) -> Mat2 {
    let s = 1.0 / (2.0 * alpha);
    match piece {
        Piece::Z1 => Mat2::new(s, 0.0, 0.0, s),
        Piece::Z2 => Mat2::new(s, 0.0, 0.0, 0.0),
        Piece::Z3 => Mat2::zeros(),
        Piece::Z4 => Mat2::new(0.0, 0.0, 0.0, s),
    }
}

pub fn phi_grad(z: &Vec2, alpha: f64) -> Mat2 {
    piece_gradient(locate(z, alpha).1, alpha)
}

/// `φ_ε(x') = εφ(x'/ε) + d_ε`, normalized to the mean of the identity on `U`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApproxIdentity {
    pub alpha: f64,
    pub epsilon: Eps,
    pub d_eps: [f64; 2],
    pub region: Rect2,
}

impl ApproxIdentity {
    pub fn new(alpha: f64, epsilon: Eps, region: Rect2) -> Result<Self> {
        let mut id = ApproxIdentity { alpha, epsilon, d_eps: [0.0; 2], region };
        // a reference layout only to obtain the kink-aligned quadrature
        let layout = FiberLayout::periodic(epsilon, alpha, 0.5 * (1.0 - 2.0 * alpha))?;
        if !whole_cells(&layout, &region) {
            let quad = QuadratureSpec::cell_aligned(&layout, 4, 2)?;
            let area = region.area();
            let mut d = [0.0; 2];
            for (c, dc) in d.iter_mut().enumerate() {
                let s = quad.sum2d(&region, |x| x[c] - id.eval(x)[c])?;
                *dc = s / area;
            }
            id.d_eps = d;
        }
        Ok(id)
    }

    /// Matches a layout (same ε and α) on `U`.
    pub fn for_layout(layout: &FiberLayout, region: Rect2) -> Result<Self> {
        ApproxIdentity::new(layout.alpha, layout.epsilon, region)
    }

    pub fn eps(&self) -> f64 {
        self.epsilon.value()
    }

    fn scaled(&self, x: &Vec2) -> Vec2 {
        let (n, d) = (self.epsilon.numer() as f64, self.epsilon.denom() as f64);
        Vec2::new(x.x * d / n, x.y * d / n)
    }

    pub fn eval(&self, x: &Vec2) -> Vec2 {
        phi(&self.scaled(x), self.alpha) * self.eps() + Vec2::new(self.d_eps[0], self.d_eps[1])
    }

    pub fn gradient(&self, x: &Vec2) -> Mat2 {
        phi_grad(&self.scaled(x), self.alpha)
    }

    pub fn piece(&self, x: &Vec2) -> Piece {
        locate(&self.scaled(x), self.alpha).1
    }

    /// Translated cell `ε(k + Z)` as a rectangle.
    pub fn z_cell(&self, k: [i64; 2]) -> Rect2 {
        let e = self.eps();
        let lo = [(k[0] as f64 - self.alpha) * e, (k[1] as f64 - self.alpha) * e];
        Rect2 { min: lo, max: [lo[0] + e, lo[1] + e] }
    }

    /// Closed image square `ε(k + [−1/2, 1/2]²) + d_ε` of `ε(k + Z)`.
    pub fn image_square(&self, k: [i64; 2]) -> Rect2 {
        let e = self.eps();
        let d = self.d_eps;
        Rect2 {
            min: [(k[0] as f64 - 0.5) * e + d[0], (k[1] as f64 - 0.5) * e + d[1]],
            max: [(k[0] as f64 + 0.5) * e + d[0], (k[1] as f64 + 0.5) * e + d[1]],
        }
    }
}

fn whole_cells(layout: &FiberLayout, r: &Rect2) -> bool {
    let (n, d) = (layout.epsilon.numer() as f64, layout.epsilon.denom() as f64);
    r.min.iter().chain(r.max.iter()).all(|&v| {
        let s = v * d / n;
        (s - s.round()).abs() < 1e-12
    })
}

/// Outcome of one checked property.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PiecesReport {
    pub norms: [f64; 4],
    pub max_norm: f64,
    pub expected: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertiesReport {
    pub epsilon: Eps,
    pub alpha: f64,
    pub d_eps: [f64; 2],
    pub gradient: PiecesReport,
    pub bounded_gradient: Check,
    pub constant_on_fibers: Check,
    pub disjoint_images: Check,
    pub image_squares: usize,
    pub sup_distance: f64,
    pub sup_distance_expected: f64,
    pub uniform_convergence: Check,
}

/// Checks the four defining properties on `U` for the given layout.
pub fn verify_properties(id: &ApproxIdentity, layout: &FiberLayout) -> Result<PropertiesReport> {
    let a = id.alpha;
    let pieces = [Piece::Z1, Piece::Z2, Piece::Z3, Piece::Z4];
    let norms = pieces.map(|p| piece_gradient(p, a).norm());
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let expected = 2f64.sqrt() / (2.0 * a);
    let gradient = PiecesReport { norms, max_norm, expected, bound: 1.0 / a };
    let bounded_gradient = Check {
        pass: (max_norm - expected).abs() <= 1e-12 && max_norm < 1.0 / a,
        detail: format!("max |∇'φ_ε| = {max_norm:.15}, 1/α = {}", 1.0 / a),
    };

    // constancy on every fiber cross-section inside U
    let mut worst: Option<(CellIndex, f64)> = None;
    let cells = layout.interior_cells(&id.region);
    for k in &cells {
        let s = layout.inner_square(*k);
        let poly = layout.cross_section(*k);
        let mut pts: Vec<Vec2> = Vec::new();
        let n = 6;
        for j in 0..n {
            for i in 0..n {
                let t = Vec2::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                pts.push(Vec2::new(s.min[0] + t.x * s.width(), s.min[1] + t.y * s.height()));
            }
        }
        pts.push(Vec2::new(s.min[0], s.min[1]));
        let c = poly.iter().fold(Vec2::zeros(), |acc, v| acc + v) / poly.len() as f64;
        pts.extend(poly.iter().map(|v| c + (v - c) * (1.0 - 1e-9)));
        let v0 = id.eval(&pts[0]);
        for p in &pts[1..] {
            let v = id.eval(p);
            if v.x.to_bits() != v0.x.to_bits() || v.y.to_bits() != v0.y.to_bits() {
                let dev = (v - v0).norm();
                if worst.is_none_or(|(_, w)| dev > w) {
                    worst = Some((*k, dev));
                }
            }
        }
    }
    let constant_on_fibers = Check {
        pass: worst.is_none(),
        detail: match worst {
            None => format!("{} fibers, one value each", cells.len()),
            Some((k, d)) => format!("cell {:?} varies by {d:e}", k.k),
        },
    };

    // images of the translated cells carrying the interior fibers
    let e = id.eps();
    let kz: Vec<[i64; 2]> = cells.iter().map(|k| k.k).collect();
    let mut image_fail: Option<String> = None;
    let m = 9;
    for k in &kz {
        let cell = id.z_cell(*k);
        let sq = id.image_square(*k);
        let tol = 1e-12 * (1.0 + e);
        for j in 0..m {
            for i in 0..m {
                let p = Vec2::new(
                    cell.min[0] + cell.width() * i as f64 / m as f64,
                    cell.min[1] + cell.height() * j as f64 / m as f64,
                );
                let v = id.eval(&p);
                let inside = v.x >= sq.min[0] - tol && v.x <= sq.max[0] + tol && v.y >= sq.min[1] - tol && v.y <= sq.max[1] + tol;
                if !inside && image_fail.is_none() {
                    image_fail = Some(format!("point {:?} of cell {k:?} maps outside its square", [p.x, p.y]));
                }
            }
        }
    }
    // pairwise: image squares may share edges but never interior area
    let squares: Vec<Rect2> = kz.iter().map(|k| id.image_square(*k)).collect();
    for i in 0..squares.len() {
        for j in (i + 1)..squares.len() {
            if let Some(r) = squares[i].intersect(&squares[j]) {
                if r.area() > 1e-12 * e * e && image_fail.is_none() {
                    image_fail = Some(format!("image squares of cells {:?} and {:?} overlap", kz[i], kz[j]));
                }
            }
        }
    }
    let disjoint_images = Check {
        pass: image_fail.is_none(),
        detail: image_fail.unwrap_or_else(|| format!("{} image squares of side {e}, interiors pairwise disjoint", kz.len())),
    };

    let sup_distance = sup_distance(id);
    let sup_distance_expected = 2f64.sqrt() * (0.5 - a) * e;
    let uniform_convergence = Check {
        pass: sup_distance <= sup_distance_expected * (1.0 + 1e-9) + (id.d_eps[0].hypot(id.d_eps[1])),
        detail: format!("sup |φ_ε − id| = {sup_distance:e}"),
    };
    Ok(PropertiesReport {
        epsilon: id.epsilon,
        alpha: a,
        d_eps: id.d_eps,
        gradient,
        bounded_gradient,
        constant_on_fibers,
        disjoint_images,
        image_squares: kz.len(),
        sup_distance,
        sup_distance_expected,
        uniform_convergence,
    })
}

/// `sup_U |φ_ε(x') − x'|`, attained at piece corners.
pub fn sup_distance(id: &ApproxIdentity) -> f64 {
    let e = id.eps();
    let a = id.alpha;
    let r = &id.region;
    // candidate abscissae per axis: region edges and kink lines inside U
    let axis = |c: usize| -> Vec<f64> {
        let mut v = vec![r.min[c], r.max[c]];
        let k0 = (r.min[c] / e).floor() as i64 - 1;
        let k1 = (r.max[c] / e).ceil() as i64 + 1;
        for k in k0..=k1 {
            for t in [k as f64 + a, k as f64 + 1.0 - a] {
                let x = t * e;
                if x > r.min[c] && x < r.max[c] {
                    v.push(x);
                }
            }
        }
        v
    };
    let (xs, ys) = (axis(0), axis(1));
    let shrink = 1e-12 * e;
    let mut best: f64 = 0.0;
    for &x in &xs {
        for &y in &ys {
            // φ_ε is continuous: probe slightly inside each neighboring piece
            for sx in [-shrink, shrink] {
                for sy in [-shrink, shrink] {
                    let p = Vec2::new((x + sx).clamp(r.min[0], r.max[0]), (y + sy).clamp(r.min[1], r.max[1]));
                    best = best.max((id.eval(&p) - p).norm());
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Vec2, b: [f64; 2]) -> bool {
        (a - Vec2::new(b[0], b[1])).norm() < 1e-15
    }

    #[test]
    fn phi_examples() {
        assert!(close(phi(&Vec2::new(0.1, 0.2), 0.25), [0.2, 0.4]));
        assert!(close(phi(&Vec2::new(0.5, 0.5), 0.25), [0.5, 0.5]));
        assert!(close(phi(&Vec2::new(0.3, 0.1), 0.25), [0.5, 0.2]));
        for a in [0.1, 0.25, 0.4] {
            assert!(close(phi(&Vec2::zeros(), a), [0.0, 0.0]));
        }
    }

    #[test]
    fn continuity_across_interfaces() {
        let a = 0.25;
        let h = 1e-13;
        for t in [-0.2, 0.0, 0.1, 0.3, 0.6, 0.74] {
            for line in [a, 1.0 - a, -a] {
                let l = phi(&Vec2::new(line - h, t), a);
                let r = phi(&Vec2::new(line, t), a);
                assert!((l - r).norm() < 1e-12);
                let l = phi(&Vec2::new(t, line - h), a);
                let r = phi(&Vec2::new(t, line), a);
                assert!((l - r).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_is_periodic_and_averages_to_identity() {
        let a = 0.3;
        let z = Vec2::new(0.12, 0.55);
        assert_eq!(phi_grad(&z, a), phi_grad(&(z + Vec2::new(3.0, -2.0)), a));
        let areas = [4.0 * a * a, 2.0 * a * (1.0 - 2.0 * a), (1.0 - 2.0 * a).powi(2), 2.0 * a * (1.0 - 2.0 * a)];
        let pieces = [Piece::Z1, Piece::Z2, Piece::Z3, Piece::Z4];
        let mean = pieces.iter().zip(areas).fold(Mat2::zeros(), |m, (p, w)| m + piece_gradient(*p, a) * w);
        assert!((mean - Mat2::identity()).norm() < 1e-15);
    }

    #[test]
    fn unit_scale_matches_phi() {
        let u = Rect2::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        let id = ApproxIdentity::new(0.25, Eps::inv(1), u).unwrap();
        assert_eq!(id.d_eps, [0.0, 0.0]);
        let x = Vec2::new(0.1, 0.2);
        assert_eq!(id.eval(&x), phi(&x, 0.25));
    }

    #[test]
    fn partial_cells_get_a_shift() {
        let u = Rect2::new([0.0, 0.0], [0.3, 0.45]).unwrap();
        let id = ApproxIdentity::new(0.25, Eps::inv(8), u).unwrap();
        let q = QuadratureSpec::cell_aligned(&FiberLayout::standard(Eps::inv(8)), 4, 2).unwrap();
        for c in 0..2 {
            let m = q.sum2d(&u, |x| id.eval(x)[c] - x[c]).unwrap();
            assert!(m.abs() < 1e-15, "{m}");
        }
        assert!(id.d_eps[0] != 0.0);
    }

    #[test]
    fn properties_hold_at_one_eighth() {
        let u = Rect2::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        let layout = FiberLayout::standard(Eps::inv(8));
        let id = ApproxIdentity::for_layout(&layout, u).unwrap();
        let r = verify_properties(&id, &layout).unwrap();
        assert!(r.bounded_gradient.pass);
        let want = [2.0 * 2f64.sqrt(), 2.0, 0.0, 2.0];
        for (g, w) in r.gradient.norms.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        assert!(r.constant_on_fibers.pass, "{}", r.constant_on_fibers.detail);
        assert!(r.disjoint_images.pass, "{}", r.disjoint_images.detail);
        assert_eq!(r.image_squares, 64);
        assert!((r.sup_distance - r.sup_distance_expected).abs() < 1e-10);
    }

    #[test]
    fn sup_distance_is_linear_in_eps() {
        let u = Rect2::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        let d: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&n| sup_distance(&ApproxIdentity::new(0.25, Eps::inv(n), u).unwrap()))
            .collect();
        for w in d.windows(2) {
            assert!((w[0] / w[1] - 2.0).abs() < 1e-6);
        }
    }
}

//! Sequences `u_ε` with rotation-valued gradients on the fibers that
//! converge to a given effective deformation, the layer-bending sequence,
//! and small perturbations off the exact constraint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::approx_identity::ApproxIdentity;
use crate::error::{Error, Result};
use crate::fields::{lp_norm, QuadratureSpec, Region, VectorField};
use crate::geometry::{Domain3, Eps, FiberLayout, Rect2};
use crate::limit::{BendingCurve, RotationForm};
use crate::linalg::{from_columns, Mat3, Vec2, Vec3};

/// `u_ε(x) = R(y)x + b(y)` with `y = clamp_ω(φ_ε(x') + a)`.
#[derive(Clone, Debug)]
pub struct ApproxDeformation {
    pub rf: RotationForm,
    pub id: ApproxIdentity,
    pub a: Vec2,
}

impl ApproxDeformation {
    /// Argument at which `R` and `b` are evaluated, and which of its
    /// coordinates were clamped to `ω̄`.
    pub fn argument(&self, x: &Vec2) -> (Vec2, [bool; 2]) {
        let y = self.id.eval(x) + self.a;
        let c = self.rf.omega.clamp(&y);
        (c, [c.x != y.x, c.y != y.y])
    }

    /// Point of `ω̄` that the fiber of cell `k` collapses to.
    pub fn collapsed_point(&self, layout: &FiberLayout, k: crate::geometry::CellIndex) -> Vec2 {
        self.argument(&layout.center(k)).0
    }

    pub fn eps(&self) -> f64 {
        self.id.eps()
    }
}

impl VectorField for ApproxDeformation {
    fn value(&self, x: &Vec3) -> Vec3 {
        let (y, _) = self.argument(&Vec2::new(x.x, x.y));
        let s = self.rf.sample(&y);
        s.r * x + s.b
    }

    fn gradient(&self, x: &Vec3) -> Option<Mat3> {
        let p = Vec2::new(x.x, x.y);
        let (y, clamped) = self.argument(&p);
        let s = self.rf.sample(&y);
        let mut jac = self.id.gradient(&p);
        for (j, c) in clamped.iter().enumerate() {
            if *c {
                jac.row_mut(j).fill(0.0);
            }
        }
        // ∂_y (R(y)x + b(y)) for y₁, y₂
        let dy = [s.dr[0] * x + s.db[0], s.dr[1] * x + s.db[1]];
        let col = |i: usize| s.r.column(i) + dy[0] * jac[(0, i)] + dy[1] * jac[(1, i)];
        Some(from_columns(&col(0), &col(1), &s.r.column(2).into_owned()))
    }
}

/// `u_ε` for translation `a`, `|a| < ε`.
pub fn build(rf: &RotationForm, layout: &FiberLayout, id: &ApproxIdentity, a: Vec2) -> Result<ApproxDeformation> {
    if id.epsilon != layout.epsilon || id.alpha != layout.alpha {
        return Err(Error::InvalidParameter("approximate identity and layout disagree on ε or α".into()));
    }
    if !(a.norm() < id.eps()) {
        return Err(Error::InvalidParameter(format!("translation |a| = {} must be below ε = {}", a.norm(), id.eps())));
    }
    Ok(ApproxDeformation { rf: rf.clone(), id: id.clone(), a })
}

#[derive(Clone, Debug, Serialize)]
pub struct TranslationChoice {
    pub a: [f64; 2],
    /// `‖∇u_ε^a‖_{L^p(Ω)}` for the chosen `a`.
    pub norm: f64,
    /// Mean of the norms over all samples.
    pub mean: f64,
    pub samples: usize,
}

/// Generator seeded by `(seed, ε)`.
pub fn rng_for(seed: u64, eps: Eps) -> ChaCha8Rng {
    let mix = seed ^ eps.numer().wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ eps.denom().wrapping_mul(0xD1B5_4A32_D192_ED03);
    ChaCha8Rng::seed_from_u64(mix)
}

/// Picks, among `m` uniform samples of `B(0, ε)`, the translation with the
/// smallest `‖∇u_ε^a‖_{L^p(Ω)}`.
#[allow(clippy::too_many_arguments)]
pub fn select_translation(
    rf: &RotationForm,
    layout: &FiberLayout,
    id: &ApproxIdentity,
    domain: &Domain3,
    p: f64,
    m: usize,
    seed: u64,
    quad: &QuadratureSpec,
) -> Result<TranslationChoice> {
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one translation sample".into()));
    }
    let e = id.eps();
    let mut rng = rng_for(seed, layout.epsilon);
    let samples: Vec<Vec2> = (0..m)
        .map(|_| {
            let r = e * rng.random::<f64>().sqrt();
            let t = std::f64::consts::TAU * rng.random::<f64>();
            Vec2::new(r * t.cos(), r * t.sin())
        })
        .collect();
    let mut norms = Vec::with_capacity(m);
    for a in &samples {
        let u = build(rf, layout, id, *a)?;
        norms.push(lp_norm(|x| u.gradient(x).expect("exact").norm(), p, domain, &Region::omega(), quad)?);
    }
    let (best, norm) = norms
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bn), (i, n)| if *n < bn { (i, *n) } else { (bi, bn) });
    let mean = norms.iter().sum::<f64>() / m as f64;
    Ok(TranslationChoice { a: [samples[best].x, samples[best].y], norm, mean, samples: m })
}

/// Rigid layers `ε(i + [α, 1−α)) × ℝ²` bent uniformly along a circular arc.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BendingSequence {
    pub curve: BendingCurve,
    pub epsilon: Eps,
    pub alpha: f64,
}

impl BendingSequence {
    pub fn new(rho: f64, epsilon: Eps, alpha: f64, domain: &Domain3) -> Result<Self> {
        if !(rho > domain.height / std::f64::consts::PI) {
            return Err(Error::InvalidParameter(format!("bending radius {rho} must exceed L/π")));
        }
        if !(epsilon.value() < 1.0) {
            return Err(Error::InvalidParameter("bending sequence needs ε < 1".into()));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} must lie in (0, 1/2)")));
        }
        Ok(BendingSequence { curve: BendingCurve { rho }, epsilon, alpha })
    }

    fn eps(&self) -> f64 {
        self.epsilon.value()
    }

    fn layer(&self, j: i64, x: &Vec3) -> Vec3 {
        let e = self.eps();
        let c = &self.curve;
        Vec3::x() * (e * j as f64) + Vec3::y() * x.y + c.gamma(x.z) + c.normal(x.z) * (x.x - e * j as f64)
    }

    fn layer_d3(&self, j: i64, x: &Vec3) -> Vec3 {
        let c = &self.curve;
        c.tangent(x.z) + c.normal_derivative(x.z) * (x.x - self.eps() * j as f64)
    }

    /// `Some(j)` on rigid layer `j`, otherwise `Err(j)` for the soft band
    /// between layers `j` and `j + 1`.
    fn locate(&self, x1: f64) -> std::result::Result<i64, i64> {
        let (n, d) = (self.epsilon.numer() as f64, self.epsilon.denom() as f64);
        let s = x1 * d / n;
        let i = s.floor();
        let t = s - i;
        let i = i as i64;
        if t >= self.alpha && t < 1.0 - self.alpha {
            Ok(i)
        } else if t < self.alpha {
            Err(i - 1)
        } else {
            Err(i)
        }
    }

    pub fn is_layer(&self, x1: f64) -> bool {
        self.locate(x1).is_ok()
    }

    /// The limit `x₁e₁ + x₂e₂ + γ(x₃)`.
    pub fn limit(&self) -> impl VectorField {
        self.curve.limit_field()
    }
}

impl VectorField for BendingSequence {
    fn value(&self, x: &Vec3) -> Vec3 {
        match self.locate(x.x) {
            Ok(j) => self.layer(j, x),
            Err(j) => {
                let e = self.eps();
                let x0 = e * (j as f64 + 1.0 - self.alpha);
                let x1 = e * (j as f64 + 1.0 + self.alpha);
                let lam = (x.x - x0) / (x1 - x0);
                let l = self.layer(j, &Vec3::new(x0, x.y, x.z));
                let r = self.layer(j + 1, &Vec3::new(x1, x.y, x.z));
                l * (1.0 - lam) + r * lam
            }
        }
    }

    fn gradient(&self, x: &Vec3) -> Option<Mat3> {
        let c = &self.curve;
        Some(match self.locate(x.x) {
            Ok(j) => from_columns(&c.normal(x.z), &Vec3::y(), &self.layer_d3(j, x)),
            Err(j) => {
                let e = self.eps();
                let x0 = e * (j as f64 + 1.0 - self.alpha);
                let x1 = e * (j as f64 + 1.0 + self.alpha);
                let lam = (x.x - x0) / (x1 - x0);
                let pl = Vec3::new(x0, x.y, x.z);
                let pr = Vec3::new(x1, x.y, x.z);
                let d1 = (self.layer(j + 1, &pr) - self.layer(j, &pl)) / (x1 - x0);
                let d3 = self.layer_d3(j, &pl) * (1.0 - lam) + self.layer_d3(j + 1, &pr) * lam;
                from_columns(&d1, &Vec3::y(), &d3)
            }
        })
    }
}

/// `u + ε^{β/p}ψ` with `ψ(x) = (0, 0, sin(πx₁/d_ω)·d_ω/π)`, `‖∇ψ‖_∞ = 1`.
#[derive(Clone, Debug)]
pub struct Perturbed<U> {
    pub base: U,
    pub scale: f64,
    pub width: f64,
}

pub fn perturb_beta<U: VectorField>(base: U, eps: Eps, beta: f64, p: f64, omega: &Rect2) -> Result<Perturbed<U>> {
    if !(beta > 0.0) || !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("need β > 0 and p ≥ 1, got β = {beta}, p = {p}")));
    }
    Ok(Perturbed { base, scale: eps.value().powf(beta / p), width: omega.width() })
}

impl<U: VectorField> Perturbed<U> {
    fn psi(&self, x: &Vec3) -> Vec3 {
        let d = self.width;
        Vec3::new(0.0, 0.0, (std::f64::consts::PI * x.x / d).sin() * d / std::f64::consts::PI)
    }

    fn psi_grad(&self, x: &Vec3) -> Mat3 {
        let mut g = Mat3::zeros();
        g[(2, 0)] = (std::f64::consts::PI * x.x / self.width).cos();
        g
    }
}

impl<U: VectorField> VectorField for Perturbed<U> {
    fn value(&self, x: &Vec3) -> Vec3 {
        self.base.value(x) + self.psi(x) * self.scale
    }

    fn gradient(&self, x: &Vec3) -> Option<Mat3> {
        self.base.gradient(x).map(|g| g + self.psi_grad(x) * self.scale)
    }
}

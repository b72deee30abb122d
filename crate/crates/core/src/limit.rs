//! Effective deformations `u(x) = x₃Σ(x') + d(x') = R(x')x + b(x')`: the
//! gallery presets, lifts of director fields to rotation fields, and the
//! membership and incompressibility diagnostics.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{grad, ClosedForm, QuadratureSpec, VectorField};
use crate::geometry::{Domain3, Rect2};
use crate::linalg::{arr3, axis_angle, from_columns, Mat3, Vec2, Vec3};

/// Pole tolerance for single-vector lifts: `Σ₁² + Σ₂² ≥ η²`.
pub const ETA_VECTOR: f64 = 1e-2;
/// Required margin `min (QΣ)₁² + (QΣ)₂²` when lifting whole fields.
pub const ETA2_FIELD: f64 = 1e-4;

type Vec2Fn<T> = Arc<dyn Fn(&Vec2) -> T + Send + Sync>;
type SecondFn = Arc<dyn Fn(&Vec2, usize, usize) -> (Vec3, Vec3) + Send + Sync>;

/// `u(x) = x₃Σ(x') + d(x')` with exact cross-section derivatives.
#[derive(Clone)]
pub struct DirectorForm {
    pub omega: Rect2,
    sigma: Vec2Fn<Vec3>,
    dsigma: Vec2Fn<[Vec3; 2]>,
    drift: Vec2Fn<Vec3>,
    ddrift: Vec2Fn<[Vec3; 2]>,
    /// `(∂_i∂_jΣ, ∂_i∂_jd)` when known.
    second: Option<SecondFn>,
}

impl fmt::Debug for DirectorForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirectorForm").field("omega", &self.omega).finish()
    }
}

impl DirectorForm {
    pub fn new(
        omega: Rect2,
        sigma: impl Fn(&Vec2) -> Vec3 + Send + Sync + 'static,
        dsigma: impl Fn(&Vec2) -> [Vec3; 2] + Send + Sync + 'static,
        drift: impl Fn(&Vec2) -> Vec3 + Send + Sync + 'static,
        ddrift: impl Fn(&Vec2) -> [Vec3; 2] + Send + Sync + 'static,
    ) -> Self {
        DirectorForm {
            omega,
            sigma: Arc::new(sigma),
            dsigma: Arc::new(dsigma),
            drift: Arc::new(drift),
            ddrift: Arc::new(ddrift),
            second: None,
        }
    }

    pub fn with_second(mut self, s: impl Fn(&Vec2, usize, usize) -> (Vec3, Vec3) + Send + Sync + 'static) -> Self {
        self.second = Some(Arc::new(s));
        self
    }

    pub fn sigma(&self, x: &Vec2) -> Vec3 {
        (self.sigma)(x)
    }

    pub fn dsigma(&self, x: &Vec2) -> [Vec3; 2] {
        (self.dsigma)(x)
    }

    pub fn drift(&self, x: &Vec2) -> Vec3 {
        (self.drift)(x)
    }

    pub fn ddrift(&self, x: &Vec2) -> [Vec3; 2] {
        (self.ddrift)(x)
    }
}

impl VectorField for DirectorForm {
    fn value(&self, x: &Vec3) -> Vec3 {
        let p = Vec2::new(x.x, x.y);
        self.sigma(&p) * x.z + self.drift(&p)
    }

    fn gradient(&self, x: &Vec3) -> Option<Mat3> {
        let p = Vec2::new(x.x, x.y);
        let ds = self.dsigma(&p);
        let dd = self.ddrift(&p);
        Some(from_columns(&(ds[0] * x.z + dd[0]), &(ds[1] * x.z + dd[1]), &self.sigma(&p)))
    }

    fn second_derivative(&self, x: &Vec3, i: usize, j: usize) -> Option<Vec3> {
        let s = self.second.as_ref()?;
        let (ss, dd) = s(&Vec2::new(x.x, x.y), i, j);
        Some(ss * x.z + dd)
    }
}

/// Circular arc `γ(t) = ρ(1 − cos(t/ρ), 0, sin(t/ρ))` with unit tangent
/// `γ'(t)` and in-plane normal `ν(t) = (cos(t/ρ), 0, −sin(t/ρ))`; `γ'(0) = e₃`
/// and `ν(0) = e₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BendingCurve {
    pub rho: f64,
}

impl BendingCurve {
    pub fn gamma(&self, t: f64) -> Vec3 {
        let s = t / self.rho;
        Vec3::new(self.rho * (1.0 - s.cos()), 0.0, self.rho * s.sin())
    }

    pub fn tangent(&self, t: f64) -> Vec3 {
        let s = t / self.rho;
        Vec3::new(s.sin(), 0.0, s.cos())
    }

    pub fn normal(&self, t: f64) -> Vec3 {
        let s = t / self.rho;
        Vec3::new(s.cos(), 0.0, -s.sin())
    }

    /// `ν'(t) = −γ'(t)/ρ`.
    pub fn normal_derivative(&self, t: f64) -> Vec3 {
        -self.tangent(t) / self.rho
    }

    /// `u(x) = x₁e₁ + x₂e₂ + γ(x₃)`.
    pub fn limit_field(&self) -> ClosedForm {
        let c = *self;
        ClosedForm::new(move |x| Vec3::new(x.x, x.y, 0.0) + c.gamma(x.z))
            .with_gradient(move |x| from_columns(&Vec3::x(), &Vec3::y(), &c.tangent(x.z)))
            .with_second(|_, _, _| Vec3::zeros())
    }
}

/// Gallery of effective deformations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    Paraboloid,
    Shear { gamma: f64 },
    Twist,
    Tyre { r: f64 },
    Hedgehog,
    Trophy,
    Rigid { axis: [f64; 3], angle: f64, b: [f64; 3] },
    BendingLimit { rho: f64 },
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Paraboloid => "paraboloid",
            Preset::Shear { .. } => "shear",
            Preset::Twist => "twist",
            Preset::Tyre { .. } => "tyre",
            Preset::Hedgehog => "hedgehog",
            Preset::Trophy => "trophy",
            Preset::Rigid { .. } => "rigid",
            Preset::BendingLimit { .. } => "bending_limit",
        }
    }

    /// Reference configuration used for the gallery pictures.
    pub fn default_domain(&self) -> Domain3 {
        let sq = |h| Domain3::new([-1.0, -1.0], [1.0, 1.0], h).expect("valid");
        match self {
            Preset::Twist => Domain3::new([0.0, 0.0], [4.0, 1.0], 1.0).expect("valid"),
            Preset::Trophy => sq(4.0),
            Preset::BendingLimit { .. } => Domain3::unit_cube(),
            _ => sq(1.0),
        }
    }

    /// Rotation `R₀` and translation `b₀` of the rigid preset.
    fn rigid_parts(axis: &[f64; 3], angle: f64, b: &[f64; 3]) -> Result<(Mat3, Vec3)> {
        let ax = Vec3::new(axis[0], axis[1], axis[2]);
        if !(ax.norm() > 0.0) || !angle.is_finite() {
            return Err(Error::InvalidParameter("rigid preset needs a nonzero axis and a finite angle".into()));
        }
        Ok((axis_angle(&ax, angle), Vec3::new(b[0], b[1], b[2])))
    }

    /// The deformation as a field on `Ω`; every preset has one.
    pub fn field(&self, domain: &Domain3) -> Result<Arc<dyn VectorField>> {
        match self {
            Preset::BendingLimit { rho } => {
                if !(*rho > domain.height / std::f64::consts::PI) {
                    return Err(Error::InvalidParameter(format!("bending radius {rho} must exceed L/π")));
                }
                Ok(Arc::new(BendingCurve { rho: *rho }.limit_field()))
            }
            _ => Ok(Arc::new(preset(self, domain)?)),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Shear { gamma } => write!(f, "shear={gamma}"),
            Preset::Tyre { r } => write!(f, "tyre={r}"),
            Preset::BendingLimit { rho } => write!(f, "bending_limit={rho}"),
            p => f.write_str(p.name()),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    /// `name` or `name=parameter`, e.g. `shear=2`, `tyre=1.5`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once('=') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let num = |default: f64| -> Result<f64> {
            match arg {
                None => Ok(default),
                Some(a) => a.parse().map_err(|_| Error::Parse(format!("bad preset parameter '{a}'"))),
            }
        };
        let p = match name {
            "paraboloid" => Preset::Paraboloid,
            "shear" => Preset::Shear { gamma: num(1.0)? },
            "twist" => Preset::Twist,
            "tyre" => Preset::Tyre { r: num(1.5)? },
            "hedgehog" => Preset::Hedgehog,
            "trophy" => Preset::Trophy,
            "rigid" => Preset::Rigid { axis: [1.0, 1.0, 1.0], angle: num(0.3)?, b: [0.1, -0.2, 0.3] },
            "bending_limit" | "bending" => Preset::BendingLimit { rho: num(2.0)? },
            _ => return Err(Error::Parse(format!("unknown preset '{name}'"))),
        };
        if arg.is_some() && matches!(p, Preset::Paraboloid | Preset::Twist | Preset::Hedgehog | Preset::Trophy) {
            return Err(Error::Parse(format!("preset '{name}' takes no parameter")));
        }
        Ok(p)
    }
}

/// Director form of a gallery preset on the given domain.
pub fn preset(p: &Preset, domain: &Domain3) -> Result<DirectorForm> {
    let om = domain.omega;
    let z = Vec3::zeros();
    let e3 = Vec3::z();
    Ok(match p {
        Preset::Paraboloid => DirectorForm::new(
            om,
            move |_| e3,
            move |_| [z, z],
            |x| Vec3::new(x.x, x.y, -x.x * x.x - x.y * x.y),
            |x| [Vec3::new(1.0, 0.0, -2.0 * x.x), Vec3::new(0.0, 1.0, -2.0 * x.y)],
        )
        .with_second(move |_, i, j| (z, if i == j { Vec3::new(0.0, 0.0, -2.0) } else { z })),
        Preset::Shear { gamma } => {
            let g = *gamma;
            if !g.is_finite() {
                return Err(Error::InvalidParameter("shear parameter must be finite".into()));
            }
            DirectorForm::new(
                om,
                move |_| e3,
                move |_| [z, z],
                move |x| Vec3::new(x.x, g * x.x + x.y, 0.0),
                move |_| [Vec3::new(1.0, g, 0.0), Vec3::y()],
            )
            .with_second(move |_, _, _| (z, z))
        }
        Preset::Twist => {
            let pi = std::f64::consts::PI;
            DirectorForm::new(
                om,
                move |x| {
                    let t = x.x / pi;
                    Vec3::new(0.0, -t.sin(), t.cos())
                },
                move |x| {
                    let t = x.x / pi;
                    [Vec3::new(0.0, -t.cos(), -t.sin()) / pi, z]
                },
                move |x| {
                    let t = x.x / pi;
                    Vec3::new(x.x, x.y * t.cos(), x.y * t.sin())
                },
                move |x| {
                    let t = x.x / pi;
                    [Vec3::new(1.0, -x.y * t.sin() / pi, x.y * t.cos() / pi), Vec3::new(0.0, t.cos(), t.sin())]
                },
            )
            .with_second(move |x, i, j| {
                let t = x.x / pi;
                match (i.min(j), i.max(j)) {
                    (0, 0) => (
                        Vec3::new(0.0, t.sin(), -t.cos()) / (pi * pi),
                        Vec3::new(0.0, -x.y * t.cos(), -x.y * t.sin()) / (pi * pi),
                    ),
                    (0, 1) => (z, Vec3::new(0.0, -t.sin(), t.cos()) / pi),
                    _ => (z, z),
                }
            })
        }
        Preset::Tyre { r } => {
            let r = *r;
            let reach = om.min[0].abs().max(om.max[0].abs());
            if !(r > reach) {
                return Err(Error::InvalidParameter(format!(
                    "tyre radius {r} must exceed max |x₁| = {reach} on ω"
                )));
            }
            let s = move |x1: f64| (r * r - x1 * x1).sqrt();
            DirectorForm::new(
                om,
                move |x| Vec3::new(x.x, 0.0, s(x.x)) / r,
                move |x| [Vec3::new(1.0, 0.0, -x.x / s(x.x)) / r, z],
                move |x| Vec3::new(x.x, x.y + x.y.exp(), s(x.x)),
                move |x| [Vec3::new(1.0, 0.0, -x.x / s(x.x)), Vec3::new(0.0, 1.0 + x.y.exp(), 0.0)],
            )
        }
        Preset::Hedgehog => {
            let n = |x: &Vec2| Vec3::new(2.0 * x.x, 2.0 * x.y, 1.0);
            let q = |x: &Vec2| (4.0 * x.norm_squared() + 1.0).sqrt();
            DirectorForm::new(
                om,
                move |x| n(x) / q(x),
                move |x| {
                    let (nn, qq) = (n(x), q(x));
                    let d = |j: usize| Vec3::ith(j, 2.0) / qq - nn * (4.0 * x[j]) / qq.powi(3);
                    [d(0), d(1)]
                },
                |x| Vec3::new(x.x, x.y, -x.x * x.x - x.y * x.y),
                |x| [Vec3::new(1.0, 0.0, -2.0 * x.x), Vec3::new(0.0, 1.0, -2.0 * x.y)],
            )
        }
        Preset::Trophy => {
            let r2 = 2f64.sqrt();
            let n = move |x: &Vec2| Vec3::new(-x.x - x.y, x.x - x.y, r2);
            let w = |x: &Vec2| (x.norm_squared() + 1.0).sqrt();
            DirectorForm::new(
                om,
                move |x| n(x) / (r2 * w(x)),
                move |x| {
                    let (nn, ww) = (n(x), w(x));
                    let dn = [Vec3::new(-1.0, 1.0, 0.0), Vec3::new(-1.0, -1.0, 0.0)];
                    let d = |j: usize| dn[j] / (r2 * ww) - nn * x[j] / (r2 * ww.powi(3));
                    [d(0), d(1)]
                },
                |x| Vec3::new(x.x, x.y, 0.0),
                |_| [Vec3::x(), Vec3::y()],
            )
        }
        Preset::Rigid { axis, angle, b } => {
            let (r0, b0) = Preset::rigid_parts(axis, *angle, b)?;
            DirectorForm::new(
                om,
                move |_| r0.column(2).into_owned(),
                move |_| [z, z],
                move |x| r0 * Vec3::new(x.x, x.y, 0.0) + b0,
                move |_| [r0.column(0).into_owned(), r0.column(1).into_owned()],
            )
            .with_second(move |_, _, _| (z, z))
        }
        Preset::BendingLimit { .. } => {
            return Err(Error::InvalidParameter(
                "the bending limit has an x₃-dependent fiber direction and no director form".into(),
            ))
        }
    })
}

/// Closed-form lift of a director to a rotation with third column `Σ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Lift {
    /// `Re₂ = (−Σ₂, Σ₁, 0)/ρ`.
    #[default]
    R,
    /// `Se₂ = (−Σ₁Σ₃, −Σ₂Σ₃, 1 − Σ₃²)/ρ`.
    S,
}

type VecMap = Box<dyn Fn(&Vec3) -> Vec3>;

/// Lift of `s` and, for each direction in `dirs`, its directional derivative.
/// No pole check; `ρ = √(s₁² + s₂²)` must be positive.
pub fn lift_with_derivatives(kind: Lift, s: &Vec3, dirs: &[Vec3]) -> (Mat3, Vec<Mat3>) {
    let rho = s.x.hypot(s.y);
    let (n, dn): (Vec3, VecMap) = match kind {
        Lift::R => (Vec3::new(-s.y, s.x, 0.0), Box::new(|v: &Vec3| Vec3::new(-v.y, v.x, 0.0))),
        Lift::S => {
            let s = *s;
            (
                Vec3::new(-s.x * s.z, -s.y * s.z, 1.0 - s.z * s.z),
                Box::new(move |v: &Vec3| {
                    Vec3::new(-v.x * s.z - s.x * v.z, -v.y * s.z - s.y * v.z, -2.0 * s.z * v.z)
                }),
            )
        }
    };
    let e2 = n / rho;
    let e1 = e2.cross(s);
    let r = from_columns(&e1, &e2, s);
    let ds = dirs
        .iter()
        .map(|v| {
            let drho = (s.x * v.x + s.y * v.y) / rho;
            let de2 = dn(v) / rho - n * (drho / (rho * rho));
            let de1 = de2.cross(s) + e2.cross(v);
            from_columns(&de1, &de2, v)
        })
        .collect();
    (r, ds)
}

fn checked_lift(kind: Lift, s: &Vec3) -> Result<Mat3> {
    if !(s.x * s.x + s.y * s.y >= ETA_VECTOR * ETA_VECTOR) {
        return Err(Error::Pole(arr3(s)));
    }
    Ok(lift_with_derivatives(kind, s, &[]).0)
}

pub fn lift_r(s: &Vec3) -> Result<Mat3> {
    checked_lift(Lift::R, s)
}

pub fn lift_s(s: &Vec3) -> Result<Mat3> {
    checked_lift(Lift::S, s)
}

/// The 26 lattice directions of `{−1, 0, 1}³ ∖ {0}`, normalized, in
/// lexicographic order.
pub fn candidate_axes() -> Vec<Vec3> {
    let mut v = Vec::with_capacity(26);
    for i in -1..=1 {
        for j in -1..=1 {
            for k in -1..=1 {
                if (i, j, k) != (0, 0, 0) {
                    v.push(Vec3::new(i as f64, j as f64, k as f64).normalize());
                }
            }
        }
    }
    v
}

/// Rotation `Q` with `Qn = e₃`.
pub fn rotation_to_e3(n: &Vec3) -> Mat3 {
    let n = n.normalize();
    let e3 = Vec3::z();
    let c = n.dot(&e3);
    if c > 1.0 - 1e-15 {
        return Mat3::identity();
    }
    if c < -1.0 + 1e-15 {
        return axis_angle(&Vec3::x(), std::f64::consts::PI);
    }
    axis_angle(&n.cross(&e3), c.clamp(-1.0, 1.0).acos())
}

fn sample_grid(omega: &Rect2, n: usize) -> Vec<Vec2> {
    let mut pts = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            pts.push(Vec2::new(
                omega.min[0] + omega.width() * i as f64 / (n - 1) as f64,
                omega.min[1] + omega.height() * j as f64 / (n - 1) as f64,
            ));
        }
    }
    pts
}

/// Margin `min (QΣ)₁² + (QΣ)₂²` of `Q` over the samples.
fn pole_margin(q: &Mat3, sigmas: &[Vec3]) -> f64 {
    sigmas.iter().map(|s| {
        let t = q * s;
        t.x * t.x + t.y * t.y
    })
    .fold(f64::INFINITY, f64::min)
}

/// Pre-rotation among the 26 candidates that keeps `QΣ` farthest from the
/// poles on a 17×17 sample of `ω̄`.
pub fn select_pre_rotation(df: &DirectorForm) -> Result<(Mat3, f64)> {
    let sigmas: Vec<Vec3> = sample_grid(&df.omega, 17).iter().map(|x| df.sigma(x)).collect();
    let mut best: Option<(Mat3, f64)> = None;
    for n in candidate_axes() {
        let q = rotation_to_e3(&n);
        let m = pole_margin(&q, &sigmas);
        if best.as_ref().is_none_or(|(_, b)| m > *b) {
            best = Some((q, m));
        }
    }
    let (q, m) = best.expect("26 candidates");
    if m < ETA2_FIELD {
        return Err(Error::NoPreRotation(m));
    }
    Ok((q, m))
}

/// `R`, `∂₁R`, `∂₂R`, `b`, `∂₁b`, `∂₂b` at one cross-section point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationSample {
    pub r: Mat3,
    pub dr: [Mat3; 2],
    pub b: Vec3,
    pub db: [Vec3; 2],
}

type SampleFn = Arc<dyn Fn(&Vec2) -> RotationSample + Send + Sync>;

/// `u(x) = R(x')x + b(x')` with `R ∈ SO(3)` and exact derivatives on `ω̄`.
#[derive(Clone)]
pub struct RotationForm {
    pub omega: Rect2,
    sample: SampleFn,
    pub pre_rotation: Mat3,
    pub lift: Lift,
}

impl fmt::Debug for RotationForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RotationForm")
            .field("omega", &self.omega)
            .field("pre_rotation", &self.pre_rotation)
            .field("lift", &self.lift)
            .finish()
    }
}

impl RotationForm {
    /// Constant `(R₀, b₀)`.
    pub fn constant(omega: Rect2, r0: Mat3, b0: Vec3) -> Result<Self> {
        if crate::linalg::orthogonality_defect(&r0) > 1e-12 || (r0.determinant() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("constant rotation form needs R₀ ∈ SO(3)".into()));
        }
        let z = Mat3::zeros();
        let s = RotationSample { r: r0, dr: [z, z], b: b0, db: [Vec3::zeros(); 2] };
        Ok(RotationForm { omega, sample: Arc::new(move |_| s), pre_rotation: Mat3::identity(), lift: Lift::R })
    }

    pub fn sample(&self, x: &Vec2) -> RotationSample {
        (self.sample)(x)
    }

    pub fn rotation(&self, x: &Vec2) -> Mat3 {
        self.sample(x).r
    }

    /// Back to `(Σ, d)`: `Σ = Re₃`, `d = b + x₁Re₁ + x₂Re₂`.
    pub fn director_at(&self, x: &Vec2) -> (Vec3, Vec3) {
        let s = self.sample(x);
        (s.r.column(2).into_owned(), s.b + s.r.column(0) * x.x + s.r.column(1) * x.y)
    }
}

impl VectorField for RotationForm {
    fn value(&self, x: &Vec3) -> Vec3 {
        let s = self.sample(&Vec2::new(x.x, x.y));
        s.r * x + s.b
    }

    fn gradient(&self, x: &Vec3) -> Option<Mat3> {
        let s = self.sample(&Vec2::new(x.x, x.y));
        let c0 = s.r.column(0) + s.dr[0] * x + s.db[0];
        let c1 = s.r.column(1) + s.dr[1] * x + s.db[1];
        Some(from_columns(&c0, &c1, &s.r.column(2).into_owned()))
    }
}

/// Rotation form `R̃ = Qᵀ·lift(QΣ)`, `b = d − x₁R̃e₁ − x₂R̃e₂`. Without `Q`
/// the pre-rotation is selected automatically.
pub fn to_rotation_form(df: &DirectorForm, lift: Lift, pre_rotation: Option<Mat3>) -> Result<RotationForm> {
    let q = match pre_rotation {
        Some(q) => {
            let sigmas: Vec<Vec3> = sample_grid(&df.omega, 17).iter().map(|x| df.sigma(x)).collect();
            if let Some(s) = sigmas.iter().find(|s| {
                let t = q * *s;
                t.x * t.x + t.y * t.y < ETA2_FIELD
            }) {
                return Err(Error::Pole(arr3(&(q * s))));
            }
            q
        }
        None => select_pre_rotation(df)?.0,
    };
    let omega = df.omega;
    let df = df.clone();
    let qt = q.transpose();
    let sample = move |x: &Vec2| {
        let s = df.sigma(x);
        let ds = df.dsigma(x);
        let (l, dl) = lift_with_derivatives(lift, &(q * s), &[q * ds[0], q * ds[1]]);
        let r = qt * l;
        let dr = [qt * dl[0], qt * dl[1]];
        let d = df.drift(x);
        let dd = df.ddrift(x);
        let (r1, r2) = (r.column(0).into_owned(), r.column(1).into_owned());
        let b = d - r1 * x.x - r2 * x.y;
        let db = [0, 1].map(|j| dd[j] - r.column(j) - dr[j].column(0) * x.x - dr[j].column(1) * x.y);
        RotationSample { r, dr, b, db }
    };
    Ok(RotationForm { omega, sample: Arc::new(sample), pre_rotation: q, lift })
}

/// Interior sample points: `n × n` in the cross-section, `m` heights.
fn interior_samples(domain: &Domain3, n: usize, m: usize) -> Vec<(Vec2, Vec<f64>)> {
    let om = &domain.omega;
    let zs: Vec<f64> = (0..m).map(|k| domain.height * (k as f64 + 0.5) / m as f64).collect();
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let p = Vec2::new(
                om.min[0] + om.width() * (i as f64 + 0.5) / n as f64,
                om.min[1] + om.height() * (j as f64 + 0.5) / n as f64,
            );
            out.push((p, zs.clone()));
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct A0Report {
    /// `max |∂₃u(x', s) − ∂₃u(x', t)|`.
    pub x3_dependence: f64,
    /// `max ||∂₃u| − 1|`.
    pub unit_defect: f64,
    pub tol: f64,
    pub pass: bool,
    pub witness: Option<[f64; 3]>,
}

/// `∂₃u` is an x₃-independent unit vector field.
pub fn membership_a0(u: &dyn VectorField, domain: &Domain3, tol: f64) -> Result<A0Report> {
    let h = 1e-3 * domain.height;
    let mut dep: f64 = 0.0;
    let mut unit: f64 = 0.0;
    let mut witness = None;
    for (p, zs) in interior_samples(domain, 7, 5) {
        let cols: Vec<Vec3> = zs
            .iter()
            .map(|&z| grad(u, &Vec3::new(p.x, p.y, z), h).map(|g| g.column(2).into_owned()))
            .collect::<Result<_>>()?;
        for (c, &z) in cols.iter().zip(&zs) {
            let d = (c - cols[0]).norm();
            if d > dep {
                dep = d;
                witness = Some([p.x, p.y, z]);
            }
            unit = unit.max((c.norm() - 1.0).abs());
        }
    }
    Ok(A0Report { x3_dependence: dep, unit_defect: unit, tol, pass: dep <= tol && unit <= tol, witness })
}

#[derive(Clone, Debug, Serialize)]
pub struct B0Report {
    /// Largest second difference in x₂ over the samples.
    pub x2_affinity: f64,
    /// Largest second difference in x₃.
    pub x3_affinity: f64,
    /// Largest mixed difference in (x₂, x₃).
    pub mixed_affinity: f64,
    /// Largest defect of the (x₂, x₃) coefficient columns from orthonormality.
    pub rotation_defect: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Layered class: `u(x) = R(x₁)x + b(x₁)`, i.e. `u` is affine in `(x₂, x₃)`
/// for every `x₁` with orthonormal coefficient columns.
pub fn membership_b0(u: &dyn VectorField, domain: &Domain3, tol: f64) -> Result<B0Report> {
    let om = &domain.omega;
    let h2 = om.height() / 8.0;
    let h3 = domain.height / 8.0;
    let n = 7;
    let (mut a2, mut a3, mut mx, mut rot) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        let x1 = om.min[0] + om.width() * (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let x2 = om.min[1] + h2 + (om.height() - 2.0 * h2) * j as f64 / (n - 1) as f64;
            for k in 0..n {
                let x3 = h3 + (domain.height - 2.0 * h3) * k as f64 / (n - 1) as f64;
                let at = |d2: f64, d3: f64| u.value(&Vec3::new(x1, x2 + d2 * h2, x3 + d3 * h3));
                let c = at(0.0, 0.0);
                a2 = a2.max((at(1.0, 0.0) - 2.0 * c + at(-1.0, 0.0)).norm() / (h2 * h2));
                a3 = a3.max((at(0.0, 1.0) - 2.0 * c + at(0.0, -1.0)).norm() / (h3 * h3));
                mx = mx.max((at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)).norm() / (4.0 * h2 * h3));
                let c2 = (at(1.0, 0.0) - at(-1.0, 0.0)) / (2.0 * h2);
                let c3 = (at(0.0, 1.0) - at(0.0, -1.0)) / (2.0 * h3);
                rot = rot.max((c2.norm() - 1.0).abs()).max((c3.norm() - 1.0).abs()).max(c2.dot(&c3).abs());
            }
        }
    }
    Ok(B0Report {
        x2_affinity: a2,
        x3_affinity: a3,
        mixed_affinity: mx,
        rotation_defect: rot,
        tol,
        pass: a2 <= tol && a3 <= tol && mx <= tol && rot <= tol,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IncompressibilityReport {
    /// `max |det∇u − 1|`.
    pub det_residual: f64,
    /// `max |∂₁Σ × ∂₂Σ|`.
    pub parallel_residual: f64,
    pub nodes: usize,
}

/// Volume change and the parallelism of `∂₁Σ`, `∂₂Σ` over the quadrature nodes.
pub fn incompressibility(df: &DirectorForm, domain: &Domain3, quad: &QuadratureSpec) -> IncompressibilityReport {
    let nodes = quad.nodes3d(&domain.omega, (0.0, domain.height));
    let (mut det, mut par) = (0.0f64, 0.0f64);
    for (x, _) in &nodes {
        let g = df.gradient(x).expect("director forms carry gradients");
        det = det.max((g.determinant() - 1.0).abs());
        let ds = df.dsigma(&Vec2::new(x.x, x.y));
        par = par.max(ds[0].cross(&ds[1]).norm());
    }
    IncompressibilityReport { det_residual: det, parallel_residual: par, nodes: nodes.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::fd_gradient;
    use crate::linalg::orthogonality_defect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dom(p: &Preset) -> Domain3 {
        p.default_domain()
    }

    fn gallery() -> Vec<Preset> {
        ["paraboloid", "shear", "twist", "tyre", "hedgehog", "trophy", "rigid"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect()
    }

    #[test]
    fn preset_examples() {
        let d = Domain3::new([-1.0, -1.0], [2.0, 1.0], 1.0).unwrap();
        let shear = preset(&Preset::Shear { gamma: 1.0 }, &d).unwrap();
        assert_eq!(shear.value(&Vec3::new(1.0, 0.0, 1.0)), Vec3::new(1.0, 1.0, 1.0));
        let p = preset(&Preset::Paraboloid, &d).unwrap();
        assert_eq!(p.value(&Vec3::new(0.0, 0.0, 0.7)), Vec3::new(0.0, 0.0, 0.7));
        let t = preset(&Preset::Twist, &dom(&Preset::Twist)).unwrap();
        assert_eq!(t.value(&Vec3::new(0.0, 0.6, 0.0)), Vec3::new(0.0, 0.6, 0.0));
        assert!(preset(&Preset::Tyre { r: 1.0 }, &dom(&Preset::Paraboloid)).is_err());
        assert!(preset(&Preset::BendingLimit { rho: 2.0 }, &Domain3::unit_cube()).is_err());
    }

    #[test]
    fn exact_gradients_match_differences() {
        for p in gallery() {
            let d = dom(&p);
            let u = preset(&p, &d).unwrap();
            let x = Vec3::new(0.31, 0.42, 0.57);
            let g = u.gradient(&x).unwrap();
            let e1 = (fd_gradient(&u, &x, 1e-3).unwrap() - g).abs().max();
            let e2 = (fd_gradient(&u, &x, 5e-4).unwrap() - g).abs().max();
            assert!(e1 < 1e-5, "{p}: {e1}");
            assert!(e2 <= e1 / 3.5 || e1 < 1e-11, "{p}: {e1} {e2}");
        }
    }

    #[test]
    fn lift_examples() {
        let s = Vec3::x();
        let r = lift_r(&s).unwrap();
        assert_eq!(r, from_columns(&Vec3::new(0.0, 0.0, -1.0), &Vec3::y(), &Vec3::x()));
        let q = lift_s(&s).unwrap();
        assert_eq!(q, from_columns(&Vec3::y(), &Vec3::z(), &Vec3::x()));
        assert!((r - q).norm() > 0.1);
        assert!(matches!(lift_r(&Vec3::z()), Err(Error::Pole(_))));
        assert!(matches!(lift_s(&Vec3::z()), Err(Error::Pole(_))));
    }

    #[test]
    fn lifts_are_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut n = 0;
        while n < 2000 {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() > 1.0 || v.norm() < 1e-3 {
                continue;
            }
            let s = v.normalize();
            if s.x * s.x + s.y * s.y < 1e-2 {
                continue;
            }
            n += 1;
            for r in [lift_r(&s).unwrap(), lift_s(&s).unwrap()] {
                assert!(orthogonality_defect(&r) <= 1e-12);
                assert!((r.determinant() - 1.0).abs() <= 1e-12);
                assert!((r.column(2) - s).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn lift_derivative_matches_differences() {
        let s0 = Vec3::new(0.3, -0.5, 0.7).normalize();
        let t = Vec3::new(0.2, 0.4, 0.1);
        let v = t - s0 * s0.dot(&t);
        let h = 1e-6;
        for kind in [Lift::R, Lift::S] {
            let (_, d) = lift_with_derivatives(kind, &s0, &[v]);
            let curve = |e: f64| {
                let s = (s0 + v * e).normalize();
                lift_with_derivatives(kind, &s, &[]).0
            };
            let fd = (curve(h) - curve(-h)) / (2.0 * h);
            assert!((fd - d[0]).norm() < 1e-8, "{kind:?}");
        }
    }

    #[test]
    fn rotation_form_round_trip() {
        for p in gallery() {
            let d = dom(&p);
            let df = preset(&p, &d).unwrap();
            for lift in [Lift::R, Lift::S] {
                let rf = to_rotation_form(&df, lift, None).unwrap();
                let mut worst: f64 = 0.0;
                for j in 0..9 {
                    for i in 0..9 {
                        let x = Vec2::new(
                            d.omega.min[0] + d.omega.width() * i as f64 / 8.0,
                            d.omega.min[1] + d.omega.height() * j as f64 / 8.0,
                        );
                        let r = rf.rotation(&x);
                        assert!(orthogonality_defect(&r) <= 1e-12);
                        assert!((r.determinant() - 1.0).abs() <= 1e-12);
                        let (s, dd) = rf.director_at(&x);
                        worst = worst.max((s - df.sigma(&x)).norm()).max((dd - df.drift(&x)).norm());
                        let y = Vec3::new(x.x, x.y, 0.3 * d.height);
                        worst = worst.max((rf.value(&y) - df.value(&y)).norm());
                        let g = rf.gradient(&y).unwrap() - df.gradient(&y).unwrap();
                        worst = worst.max(g.norm());
                    }
                }
                assert!(worst <= 1e-10, "{p} {lift:?}: {worst}");
            }
        }
    }

    #[test]
    fn identity_round_trip_with_given_pre_rotation() {
        let d = Domain3::unit_cube();
        let df = DirectorForm::new(
            d.omega,
            |_| Vec3::z(),
            |_| [Vec3::zeros(); 2],
            |x| Vec3::new(x.x, x.y, 0.0),
            |_| [Vec3::x(), Vec3::y()],
        );
        let q = rotation_to_e3(&Vec3::x()).transpose();
        assert!((q * Vec3::z() - Vec3::x()).norm() < 1e-15);
        let rf = to_rotation_form(&df, Lift::R, Some(q)).unwrap();
        let x = Vec3::new(0.2, 0.9, 0.4);
        assert!((rf.rotation(&Vec2::new(x.x, x.y)).column(2) - Vec3::z()).norm() < 1e-15);
        assert!((rf.value(&x) - x).norm() < 1e-12);
        assert!(to_rotation_form(&df, Lift::R, Some(Mat3::identity())).is_err());
    }

    #[test]
    fn pole_dense_fields_are_rejected() {
        // Σ visits every candidate axis on the sample grid
        let d = Domain3::new([0.0, 0.0], [16.0, 16.0], 1.0).unwrap();
        let axes = candidate_axes();
        let df = DirectorForm::new(
            d.omega,
            move |x| axes[(x.x.round() as usize + 17 * x.y.round() as usize) % 26],
            |_| [Vec3::zeros(); 2],
            |_| Vec3::zeros(),
            |_| [Vec3::zeros(); 2],
        );
        assert!(matches!(select_pre_rotation(&df), Err(Error::NoPreRotation(_))));
    }

    #[test]
    fn membership_examples() {
        for p in gallery() {
            let d = dom(&p);
            let u = preset(&p, &d).unwrap();
            assert!(membership_a0(&u, &d, 1e-9).unwrap().pass, "{p}");
        }
        let d = Domain3::unit_cube();
        let bend = BendingCurve { rho: 2.0 }.limit_field();
        let a = membership_a0(&bend, &d, 1e-9).unwrap();
        assert!(!a.pass && a.x3_dependence > 0.1);
        let stretch = ClosedForm::new(|x| Vec3::new(x.x, x.y, 2.0 * x.z));
        let a = membership_a0(&stretch, &d, 1e-9).unwrap();
        assert!(a.x3_dependence < 1e-9 && (a.unit_defect - 1.0).abs() < 1e-6);

        let b = membership_b0(&bend, &d, 1e-9).unwrap();
        assert!(b.x2_affinity <= 1e-9 && b.x3_affinity > 0.1 && !b.pass);
        for (name, member) in [("twist", true), ("rigid", true), ("shear", true), ("hedgehog", false), ("paraboloid", false)] {
            let p: Preset = name.parse().unwrap();
            let d = dom(&p);
            let r = membership_b0(&preset(&p, &d).unwrap(), &d, 1e-9).unwrap();
            assert_eq!(r.pass, member, "{name}: {r:?}");
        }
    }

    #[test]
    fn incompressibility_examples() {
        let q = QuadratureSpec::uniform(12, 12, 3).unwrap();
        for name in ["paraboloid", "shear", "twist"] {
            let p: Preset = name.parse().unwrap();
            let d = dom(&p);
            let r = incompressibility(&preset(&p, &d).unwrap(), &d, &q);
            assert!(r.det_residual <= 1e-10 && r.parallel_residual <= 1e-10, "{name}: {r:?}");
        }
        for name in ["hedgehog", "trophy"] {
            let p: Preset = name.parse().unwrap();
            let d = dom(&p);
            assert!(incompressibility(&preset(&p, &d).unwrap(), &d, &q).parallel_residual >= 0.1);
        }
        let p = Preset::Tyre { r: 1.5 };
        let d = dom(&p);
        let r = incompressibility(&preset(&p, &d).unwrap(), &d, &q);
        assert!(r.parallel_residual <= 1e-10 && r.det_residual >= 0.1);
    }
}

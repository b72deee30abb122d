//! The twelve acceptance checks, each returning a verdict with its measured
//! numbers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::approx_identity::{sup_distance, verify_properties, ApproxIdentity};
use crate::config::Config;
use crate::error::Result;
use crate::fields::{integrate, lp_norm, ClosedForm, QuadratureSpec, Region, VectorField};
use crate::geometry::{Domain3, Eps, FiberLayout, Rect2};
use crate::limit::{incompressibility, lift_r, lift_s, membership_a0, membership_b0, preset, to_rotation_form, Lift, Preset, RotationForm};
use crate::linalg::{axis_angle, orthogonality_defect, Mat3, Vec2, Vec3};
use crate::report::fit_rate;
use crate::rigidity::{
    dist_so3, dist_so3_brute_force, energy, extract_rotations, fk_modulus, lemma31_discrete_min, lemma31_interpolant, lemma31_rhs,
    lemma31_verify, piecewise_rigid_error, regularized_row, EnergySpec, Lemma31Config,
};
use crate::sequence::{build, perturb_beta, ApproxDeformation, BendingSequence};

pub const CRITERIA: [(u32, &str); 12] = [
    (1, "exact membership"),
    (2, "convergence to the limit"),
    (3, "approximation of identity"),
    (4, "lifting"),
    (5, "incompressibility"),
    (6, "neighboring-rotation lower bound"),
    (7, "translation modulus"),
    (8, "bending counterexample"),
    (9, "approximate inclusion"),
    (10, "regularized rigidity"),
    (11, "rotation projection oracle"),
    (12, "determinism"),
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub config: Config,
    pub criteria: Vec<CriterionResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Acc {
    id: u32,
    fails: Vec<String>,
    notes: Vec<String>,
    metrics: BTreeMap<String, f64>,
}

impl Acc {
    fn new(id: u32) -> Self {
        Acc { id, fails: Vec::new(), notes: Vec::new(), metrics: BTreeMap::new() }
    }

    fn metric(&mut self, k: impl Into<String>, v: f64) {
        self.metrics.insert(k.into(), v);
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let w = what.into();
        if ok {
            self.notes.push(w);
        } else {
            self.fails.push(w);
        }
    }

    fn finish(self) -> CriterionResult {
        let name = CRITERIA[(self.id - 1) as usize].1.to_string();
        let pass = self.fails.is_empty();
        let detail = if pass { self.notes.join("; ") } else { format!("FAILED: {}", self.fails.join("; ")) };
        CriterionResult { id: self.id, name, pass, detail, metrics: self.metrics }
    }
}

fn sweep(ns: &[u64]) -> Vec<Eps> {
    ns.iter().map(|&n| Eps::inv(n)).collect()
}

fn built(rf: &RotationForm, layout: &FiberLayout, omega: Rect2) -> Result<ApproxDeformation> {
    let id = ApproxIdentity::for_layout(layout, omega)?;
    build(rf, layout, &id, Vec2::zeros())
}

fn rigid_sample(rng: &mut ChaCha8Rng, layout: &FiberLayout, d: &Domain3) -> Vec3 {
    loop {
        let o = &d.omega;
        let x = Vec3::new(
            rng.random_range(o.min[0]..o.max[0]),
            rng.random_range(o.min[1]..o.max[1]),
            rng.random_range(0.0..d.height),
        );
        if layout.is_rigid(&x) {
            return x;
        }
    }
}

fn membership_presets() -> [Preset; 3] {
    [Preset::Shear { gamma: 1.0 }, Preset::Twist, Preset::Paraboloid]
}

fn ac1(cfg: &Config) -> Result<CriterionResult> {
    let mut acc = Acc::new(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for p in membership_presets() {
        let d = p.default_domain();
        let rf = to_rotation_form(&preset(&p, &d)?, Lift::R, None)?;
        for e in sweep(&[8, 16, 32]) {
            let l = cfg.layout(e)?;
            let u = built(&rf, &l, d.omega)?;
            let mut worst: f64 = 0.0;
            for _ in 0..10_000 {
                let x = rigid_sample(&mut rng, &l, &d);
                worst = worst.max(dist_so3(&u.gradient(&x).expect("analytic gradient")));
            }
            acc.metric(format!("{}/{e}/max_dist", p.name()), worst);
            acc.check(worst <= 1e-10, format!("{} ε={e}: max dist {worst:.2e}", p.name()));
        }
    }
    Ok(acc.finish())
}

fn ac2(cfg: &Config) -> Result<CriterionResult> {
    let mut acc = Acc::new(2);
    for p in membership_presets() {
        let d = p.default_domain();
        let lim = p.field(&d)?;
        let rf = to_rotation_form(&preset(&p, &d)?, Lift::R, None)?;
        let mut pts = Vec::new();
        for e in sweep(&[8, 16, 32]) {
            let l = cfg.layout(e)?;
            let u = built(&rf, &l, d.omega)?;
            let q = cfg.quadrature(&l)?;
            let err = lp_norm(|x| (u.value(x) - lim.value(x)).norm(), 4.0, &d, &Region::omega(), &q)?;
            acc.metric(format!("{}/{e}/l4_error", p.name()), err);
            pts.push((e.value(), err));
        }
        let decreasing = pts.windows(2).all(|w| w[1].1 < w[0].1);
        let slope = fit_rate(&pts)?.slope;
        acc.metric(format!("{}/slope", p.name()), slope);
        acc.check(decreasing && slope >= 0.9, format!("{}: slope {slope:.3}, decreasing {decreasing}", p.name()));
    }
    Ok(acc.finish())
}

fn ac3(cfg: &Config) -> Result<CriterionResult> {
    let mut acc = Acc::new(3);
    let unit = Rect2::new([0.0, 0.0], [1.0, 1.0])?;
    let l = cfg.layout(Eps::inv(8))?;
    let id = ApproxIdentity::for_layout(&l, unit)?;
    let r = verify_properties(&id, &l)?;
    acc.metric("max_gradient", r.gradient.max_norm);
    acc.metric("image_squares", r.image_squares as f64);
    acc.check(r.bounded_gradient.pass, r.bounded_gradient.detail.clone());
    acc.check(r.constant_on_fibers.pass, r.constant_on_fibers.detail.clone());
    acc.check(r.disjoint_images.pass, r.disjoint_images.detail.clone());
    let mut pts = Vec::new();
    for e in sweep(&[8, 16, 32, 64, 128]) {
        let id = ApproxIdentity::new(cfg.alpha, e, unit)?;
        let s = sup_distance(&id);
        acc.metric(format!("{e}/sup_distance"), s);
        pts.push((e.value(), s));
    }
    let slope = fit_rate(&pts)?.slope;
    acc.metric("sup_slope", slope);
    acc.check((slope - 1.0).abs() <= 0.1, format!("uniform convergence slope {slope:.4}"));
    Ok(acc.finish())
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn ac4(cfg: &Config) -> Result<CriterionResult> {
    let mut acc = Acc::new(4);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut orth, mut det, mut col) = (0.0f64, 0.0f64, 0.0f64);
    let mut n = 0;
    while n < 10_000 {
        let s = random_unit(&mut rng);
        if s.x * s.x + s.y * s.y < 1e-2 {
            continue;
        }
        n += 1;
        for r in [lift_r(&s)?, lift_s(&s)?] {
            orth = orth.max(orthogonality_defect(&r));
            det = det.max((r.determinant() - 1.0).abs());
            col = col.max((r.column(2) - s).norm());
        }
    }
    acc.metric("orthogonality", orth);
    acc.metric("determinant", det);
    acc.metric("third_column", col);
    acc.check(orth <= 1e-12 && det <= 1e-12 && col <= 1e-12, format!("residuals {orth:.1e}, {det:.1e}, {col:.1e}"));
    let s = Vec3::x();
    let gap = (lift_r(&s)? - lift_s(&s)?).norm();
    acc.metric("lift_gap", gap);
    acc.check(gap >= 0.1, format!("‖R − S‖ = {gap:.4} at Σ = e₁"));
    Ok(acc.finish())
}

fn ac5(_cfg: &Config) -> Result<CriterionResult> {
    let mut acc = Acc::new(5);
    let q = QuadratureSpec::uniform(16, 16, 4)?;
    let run = |p: &Preset| -> Result<(f64, f64)> {
        let d = p.default_domain();
        let r = incompressibility(&preset(p, &d)?, &d, &q);
        Ok((r.det_residual, r.parallel_residual))
    };
    for p in membership_presets() {
        let (det, par) = run(&p)?;
        acc.metric(format!("{}/det", p.name()), det);
        acc.metric(format!("{}/parallel", p.name()), par);
        acc.check(det <= 1e-10 && par <= 1e-10, format!("{}: det {det:.1e}, parallel {par:.1e}", p.name()));
    }
    for p in [Preset::Hedgehog, Preset::Trophy] {
        let (_, par) = run(&p)?;
        acc.metric(format!("{}/parallel", p.name()), par);
        acc.check(par >= 0.1, format!("{}: parallel residual {par:.3}", p.name()));
    }
    let p = Preset::Tyre { r: 1.5 };
    let (det, par) = run(&p)?;
    acc.metric("tyre/det", det);
    acc.metric("tyre/parallel", par);
    acc.check(par <= 1e-10 && det >= 0.1, format!("tyre: det {det:.3}, parallel {par:.1e}"));
    Ok(acc.finish())
}

fn random_mat(rng: &mut ChaCha8Rng) -> Mat3 {
    Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

fn random_vec(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

/// Interpolant plus `t(1−t)·g(y)` with a random smooth `g`, so both traces
/// are kept.
fn perturbed_interpolant(cfg: &Lemma31Config, rng: &mut ChaCha8Rng) -> ClosedForm {
    let base = lemma31_interpolant(cfg);
    let c = cfg.clone();
    let amp = random_vec(rng) * rng.random_range(0.0..2.0);
    let k = [rng.random_range(0.5..3.0), rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)];
    let shift = rng.random_range(0.0..std::f64::consts::TAU);
    ClosedForm::new(move |x| {
        let t = x.x / c.l[0];
        let y2 = x.y - c.m * x.x;
        let g = (k[0] * x.x + k[1] * y2 + k[2] * x.z + shift).sin();
        base.value(x) + amp * (t * (1.0 - t) * g)
    })
}

fn ac6(cfg: &Config) -> Result<CriterionResult> {
    let mut acc = Acc::new(6);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let lc = Lemma31Config {
            p: [1.5, 2.0, 4.0][rng.random_range(0..3)],
            l: [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)],
            m: rng.random_range(-1.0..1.0),
            a1: random_mat(&mut rng),
            a2: random_mat(&mut rng),
            b1: random_vec(&mut rng),
            b2: random_vec(&mut rng),
        };
        for j in 0..20 {
            let r = if j == 0 {
                lemma31_verify(&lemma31_interpolant(&lc), &lc, 10)?
            } else {
                lemma31_verify(&perturbed_interpolant(&lc, &mut rng), &lc, 10)?
            };
            worst = worst.min(r.ratio);
        }
    }
    acc.metric("min_ratio", worst);
    acc.check(worst >= 0.98, format!("min lhs/rhs over 2000 fields {worst:.4}"));
    for case in 0..4 {
        let (a1, c) = if case == 0 { (Mat3::zeros(), Vec3::x()) } else { (random_mat(&mut rng), random_vec(&mut rng)) };
        let a2 = a1 + c * Vec3::z().transpose();
        let b1 = if case == 0 { Vec3::zeros() } else { random_vec(&mut rng) };
        let b2 = b1 - a2 * Vec3::x() - c * 0.5;
        let lc = Lemma31Config { p: 2.0, l: [1.0; 3], m: 0.0, a1, a2, b1, b2 };
        let dm = lemma31_discrete_min(&lc, 17, 20_000)?;
        let expect = c.norm_squared() / 12.0;
        let rhs = lemma31_rhs(2.0, 1.0, 1.0, 1.0, 0.0, &a1, &a2);
        acc.metric(format!("discrete/{case}/ratio"), dm.ratio);
        acc.check(
            (rhs - expect).abs() <= 1e-14 * (1.0 + expect) && dm.ratio >= 1.0 - 1e-9 && dm.ratio <= 1.05,
            format!("discrete minimum case {case}: ratio {:.4} after {} sweeps", dm.ratio, dm.sweeps),
        );
    }
    Ok(acc.finish())
}

fn fk_xis(e: f64) -> Vec<Vec2> {
    let mut v = Vec::new();
    for t in [e, 2.0 * e, 4.0 * e] {
        v.push(Vec2::new(t, 0.0));
        v.push(Vec2::new(0.0, t));
        v.push(Vec2::new(t, t) / 2f64.sqrt());
    }
    v
}

fn fk_domain() -> Result<(Domain3, Rect2)> {
    Ok((Domain3::new([0.0, 0.0], [4.0, 4.0], 1.0)?, Rect2::new([1.25, 1.25], [2.75, 2.75])?))
}

fn ratio(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mn = v.iter().cloned().fold(f64::INFINITY, f64::min);
    mx / mn
}

fn ac7(cfg: &Config) -> Result<CriterionResult> {
    let mut acc = Acc::new(7);
    let (d, region) = fk_domain()?;
    let rf = to_rotation_form(&preset(&Preset::Twist, &d)?, Lift::R, None)?;
    let mut cs = Vec::new();
    for e in sweep(&[8, 16, 32, 64]) {
        let l = cfg.layout(e)?;
        let u = built(&rf, &l, d.omega)?;
        let prf = extract_rotations(&u, &l, &d, &QuadratureSpec::cell_aligned(&l, 2, 2)?)?;
        let t = fk_modulus(&prf, &fk_xis(e.value()), cfg.p, &region, &d.omega)?;
        acc.metric(format!("{e}/fitted_C"), t.fitted_c);
        cs.push(t.fitted_c);
    }
    let r = ratio(&cs);
    acc.metric("max_over_min", r);
    acc.check(r <= 2.0 && cs.iter().all(|c| *c > 0.0), format!("fitted C max/min {r:.3}"));
    Ok(acc.finish())
}

fn ac8(cfg: &Config) -> Result<CriterionResult> {
    let mut acc = Acc::new(8);
    let d = Domain3::unit_cube();
    let rho = 2.0;
    let p = cfg.p;
    let mut pts = Vec::new();
    for e in sweep(&[8, 16, 32, 64, 128]) {
        let bs = BendingSequence::new(rho, e, cfg.alpha, &d)?;
        let l = cfg.layout(e)?;
        let q = QuadratureSpec::cell_aligned(&l, 4, 2)?;
        let en = integrate(
            |x| if bs.is_layer(x.x) { dist_so3(&bs.gradient(x).expect("analytic gradient")).powf(p) } else { 0.0 },
            &d,
            &Region::omega(),
            &q,
        )?;
        let fib = energy(&bs, &l, &d, &EnergySpec { p, tau: 1e-10, ..EnergySpec::default() }, &q)?;
        acc.metric(format!("{e}/layer_energy"), en);
        acc.metric(format!("{e}/fiber_dist_p"), fib.rigid_dist_p);
        acc.check(fib.rigid.is_none(), format!("ε={e}: rigid constraint infeasible at τ=1e-10"));
        pts.push((e.value(), en));
    }
    let slope = fit_rate(&pts)?.slope;
    acc.metric("energy_exponent", slope);
    acc.check((slope - p).abs() <= 0.15, format!("layer dist^p exponent {slope:.4} (p = {p})"));

    let bs = BendingSequence::new(rho, Eps::inv(8), cfg.alpha, &d)?;
    let lim = bs.limit();
    let c = bs.curve;
    let witness = (c.tangent(0.0) - c.tangent(d.height / 2.0)).norm();
    acc.metric("x3_witness", witness);
    let a0 = membership_a0(&lim, &d, 1e-9)?;
    acc.check(witness >= 0.1 && !a0.pass, format!("limit leaves A₀: |γ'(0) − γ'(L/2)| = {witness:.4}"));
    let b0 = membership_b0(&lim, &d, 1e-9)?;
    acc.metric("x2_affinity", b0.x2_affinity);
    acc.metric("x3_affinity", b0.x3_affinity);
    acc.check(
        b0.x2_affinity <= 1e-9 && b0.x3_affinity > 1e-9,
        format!("affine in x₂ ({:.1e}), not in x₃ ({:.3})", b0.x2_affinity, b0.x3_affinity),
    );
    Ok(acc.finish())
}

fn ac9(cfg: &Config) -> Result<CriterionResult> {
    let mut acc = Acc::new(9);
    let (d, region) = fk_domain()?;
    let rf = to_rotation_form(&preset(&Preset::Twist, &d)?, Lift::R, None)?;
    let p = cfg.p;
    let beta = 3.0 * p;
    let mut pts = Vec::new();
    for e in sweep(&[8, 16, 32]) {
        let l = cfg.layout(e)?;
        let u = built(&rf, &l, d.omega)?;
        let up = perturb_beta(u.clone(), e, beta, p, &d.omega)?;
        let qx = QuadratureSpec::cell_aligned(&l, 2, 2)?;
        let q = QuadratureSpec::cell_aligned(&l, 4, 2)?;
        let prf = extract_rotations(&u, &l, &d, &qx)?;
        let prf_p = extract_rotations(&up, &l, &d, &qx)?;
        let err = piecewise_rigid_error(&u, &prf, p, &d, &q)?;
        let err_p = piecewise_rigid_error(&up, &prf_p, p, &d, &q)?;
        let xis = fk_xis(e.value());
        let c = fk_modulus(&prf, &xis, p, &region, &d.omega)?.fitted_c;
        let c_p = fk_modulus(&prf_p, &xis, p, &region, &d.omega)?.fitted_c;
        let en = energy(&up, &l, &d, &EnergySpec { p, ..EnergySpec::default() }, &q)?.rigid_dist_p;
        acc.metric(format!("{e}/rigid_error"), err);
        acc.metric(format!("{e}/rigid_error_perturbed"), err_p);
        acc.metric(format!("{e}/fitted_C"), c);
        acc.metric(format!("{e}/fitted_C_perturbed"), c_p);
        acc.metric(format!("{e}/rigid_dist_p"), en);
        let within = |a: f64, b: f64| a <= 2.0 * b && b <= 2.0 * a;
        acc.check(within(err, err_p), format!("ε={e}: w-error {err:.3e} vs {err_p:.3e}"));
        acc.check(within(c, c_p), format!("ε={e}: fitted C {c:.4} vs {c_p:.4}"));
        pts.push((e.value(), en));
    }
    let slope = fit_rate(&pts)?.slope;
    acc.metric("energy_slope", slope);
    acc.check(slope >= beta - 0.3, format!("rigid dist^p slope {slope:.3} (β = {beta})"));
    Ok(acc.finish())
}

fn ac10(cfg: &Config) -> Result<CriterionResult> {
    let mut acc = Acc::new(10);
    let p = cfg.p;
    let d = Domain3::new([0.0, 0.0], [2.0, 2.0], 1.0)?;
    let region = Rect2::new([0.6, 0.6], [1.4, 1.4])?;
    let rf = RotationForm::constant(d.omega, axis_angle(&Vec3::new(1.0, 2.0, 0.5), 0.7), Vec3::new(0.3, -0.2, 1.0))?;
    let mut worst: f64 = 0.0;
    for e in sweep(&[8, 16, 32]) {
        let l = cfg.layout(e)?;
        let u = built(&rf, &l, d.omega)?;
        let q = cfg.quadrature(&l)?;
        let x = e.value();
        let row = regularized_row(&u, Some(&rf), &l, &d, p, &[Vec2::new(x, 0.0), Vec2::new(0.0, x)], &region, &q)?;
        acc.metric(format!("constant/{e}/second_diff"), row.second_diff);
        acc.metric(format!("constant/{e}/fk_rescaled"), row.fk_rescaled);
        acc.metric(format!("constant/{e}/v_to_limit"), row.v_to_limit.unwrap_or(f64::NAN));
        worst = worst.max(row.second_diff).max(row.fk_rescaled).max(row.v_to_limit.unwrap_or(f64::INFINITY));
    }
    acc.check(worst <= 1e-6, format!("constant rotation form: largest diagnostic {worst:.1e}"));

    let pt = Preset::Twist;
    let d = pt.default_domain();
    let region = Rect2::new([0.5, 0.25], [3.5, 0.75])?;
    let rf = to_rotation_form(&preset(&pt, &d)?, Lift::R, None)?;
    let lim = pt.field(&d)?;
    let mut norms = Vec::new();
    for e in sweep(&[8, 16, 32]) {
        let l = cfg.layout(e)?;
        let u = built(&rf, &l, d.omega)?;
        let q = cfg.quadrature(&l)?;
        let x = e.value() / 2.0;
        let row = regularized_row(&u, Some(&*lim), &l, &d, p, &[Vec2::new(x, 0.0), Vec2::new(0.0, x)], &region, &q)?;
        acc.metric(format!("twist/{e}/second_diff"), row.second_diff);
        acc.metric(format!("twist/{e}/fk_rescaled"), row.fk_rescaled);
        acc.metric(format!("twist/{e}/v_dist_rigid"), row.v_dist_rigid);
        norms.push(row.second_diff);
    }
    for (i, w) in norms.windows(2).enumerate() {
        let g = w[1] / w[0];
        acc.metric(format!("twist/growth{i}"), g);
        acc.check(g >= 1.5, format!("twist second-difference growth {g:.3}"));
    }
    Ok(acc.finish())
}

fn ac11(cfg: &Config) -> Result<CriterionResult> {
    let mut acc = Acc::new(11);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    while n < 100 {
        let f = random_mat(&mut rng) * 1.5;
        if f.determinant() <= 0.0 {
            continue;
        }
        n += 1;
        worst = worst.max((dist_so3(&f) - dist_so3_brute_force(&f, 16)).abs());
    }
    acc.metric("max_gap", worst);
    acc.check(worst <= 2e-2, format!("max |dist − brute force| {worst:.2e}"));
    Ok(acc.finish())
}

fn run_one(id: u32, cfg: &Config) -> Result<CriterionResult> {
    match id {
        1 => ac1(cfg),
        2 => ac2(cfg),
        3 => ac3(cfg),
        4 => ac4(cfg),
        5 => ac5(cfg),
        6 => ac6(cfg),
        7 => ac7(cfg),
        8 => ac8(cfg),
        9 => ac9(cfg),
        10 => ac10(cfg),
        11 => ac11(cfg),
        _ => Err(crate::Error::InvalidParameter(format!("unknown criterion {id}"))),
    }
}

/// Runs one of criteria 1 to 11; an error becomes a failed verdict naming it.
pub fn criterion(id: u32, cfg: &Config) -> CriterionResult {
    run_one(id, cfg).unwrap_or_else(|e| CriterionResult {
        id,
        name: CRITERIA.get((id as usize).wrapping_sub(1)).map_or("unknown", |c| c.1).to_string(),
        pass: false,
        detail: format!("FAILED: {e}"),
        metrics: BTreeMap::new(),
    })
}

/// Compares `first` against a fresh run of the same criteria, byte for byte.
pub fn determinism(cfg: &Config, first: &[CriterionResult]) -> CriterionResult {
    let mut acc = Acc::new(12);
    for a in first {
        let b = criterion(a.id, cfg);
        let same = serde_json::to_string(a).expect("serializes") == serde_json::to_string(&b).expect("serializes");
        acc.check(same, format!("criterion {} reproduces byte for byte", a.id));
    }
    acc.metric("compared", first.len() as f64);
    acc.finish()
}

/// Runs the selected criteria (all when `ids` is empty) in order; the
/// determinism check reruns every other criterion.
pub fn run(cfg: &Config, ids: &[u32]) -> VerifyReport {
    let all: Vec<u32> = CRITERIA.iter().map(|c| c.0).collect();
    let ids = if ids.is_empty() { &all[..] } else { ids };
    let mut done: BTreeMap<u32, CriterionResult> = BTreeMap::new();
    for &i in ids.iter().filter(|i| **i != 12) {
        done.entry(i).or_insert_with(|| criterion(i, cfg));
    }
    if ids.contains(&12) {
        let first: Vec<CriterionResult> = (1..=11).map(|i| done.get(&i).cloned().unwrap_or_else(|| criterion(i, cfg))).collect();
        done.insert(12, determinism(cfg, &first));
    }
    VerifyReport { config: cfg.clone(), criteria: ids.iter().map(|i| done[i].clone()).collect() }
}

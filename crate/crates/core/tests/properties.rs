use fibrig::geometry::{Eps, FiberLayout};
use fibrig::linalg::{axis_angle, Mat3, Vec3};
use fibrig::report::fit_rate;
use fibrig::rigidity::{dist_so3, project_so3};
use proptest::prelude::*;

fn mat() -> impl Strategy<Value = Mat3> {
    prop::array::uniform9(-2.0f64..2.0).prop_map(|a| Mat3::from_row_slice(&a))
}

fn rotation() -> impl Strategy<Value = Mat3> {
    (prop::array::uniform3(-1.0f64..1.0), -3.0f64..3.0).prop_filter_map("axis", |(a, t)| {
        let v = Vec3::from(a);
        (v.norm() > 1e-3).then(|| axis_angle(&v, t))
    })
}

proptest! {
    #[test]
    fn projection_is_idempotent(f in mat()) {
        prop_assume!(f.determinant() > 1e-3);
        let r = project_so3(&f).unwrap();
        prop_assert!(dist_so3(&r) < 1e-10);
        let r2 = project_so3(&r).unwrap();
        prop_assert!((r - r2).norm() < 1e-10);
        prop_assert!(((f - r).norm() - dist_so3(&f)).abs() < 1e-10);
    }

    #[test]
    fn distance_is_rotation_invariant(f in mat(), q in rotation(), s in rotation()) {
        let d = dist_so3(&f);
        prop_assert!((dist_so3(&(q * f)) - d).abs() < 1e-9);
        prop_assert!((dist_so3(&(f * s)) - d).abs() < 1e-9);
        prop_assert!(dist_so3(&q) < 1e-10);
    }

    #[test]
    fn eps_round_trip(num in 1u64..64, den in 1u64..1024) {
        let e = Eps::new(num, den).unwrap();
        let back: Eps = e.to_string().parse().unwrap();
        prop_assert_eq!(back, e);
        prop_assert!((e.value() - num as f64 / den as f64).abs() < 1e-15);
        let l = FiberLayout::periodic(e, 0.25, 0.4).unwrap();
        let json = serde_json::to_string(&l).unwrap();
        let l2: FiberLayout = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(l2, l);
    }

    #[test]
    fn fit_recovers_power_laws(slope in 0.1f64..6.0, c in 0.01f64..100.0) {
        let pts: Vec<(f64, f64)> = [0.125, 0.0625, 0.03125, 0.015625].iter().map(|&e| (e, c * f64::powf(e, slope))).collect();
        let fit = fit_rate(&pts).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-9);
        prop_assert!((fit.r2 - 1.0).abs() < 1e-9);
    }
}

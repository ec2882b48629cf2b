//! Invariants of the tire and load model over random inputs.

use lpv_core::tire::{dugoff_forces, logistic, saturate_wheel, Centering, TireParams};
use lpv_core::vehicle::{DynamicState, Vehicle, VehicleInput, VehicleParams};
use proptest::prelude::*;

fn tire(c_kappa: f64, c_alpha: f64, mu: f64) -> TireParams {
    TireParams {
        c_kappa,
        c_alpha,
        mu,
        r_e: 0.3,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn saturated_forces_stay_in_friction_circle(
        fx in -1e6f64..1e6, fy in -1e6f64..1e6, mu in 0.05f64..1.5, load in 1.0f64..3e4,
    ) {
        let (sx, sy) = saturate_wheel(fx, fy, mu, load, Centering::Midpoint);
        let f_max = mu * load;
        prop_assert!(sx.abs() <= f_max);
        prop_assert!(sx * sx + sy * sy <= f_max * f_max * (1.0 + 1e-12));
        prop_assert!(sx * fx >= 0.0 && sy * fy >= 0.0);
    }

    #[test]
    fn saturation_is_monotone_in_each_axis(
        fx in -5e4f64..5e4, dfx in 0.0f64..1e4, fy in -5e4f64..5e4, load in 100.0f64..2e4,
    ) {
        let (a, _) = saturate_wheel(fx, fy, 1.0, load, Centering::Midpoint);
        let (b, _) = saturate_wheel(fx + dfx, fy, 1.0, load, Centering::Midpoint);
        prop_assert!(b >= a);
    }

    #[test]
    fn zero_slip_gives_zero_force(
        c_kappa in 1e3f64..2e5, c_alpha in 1e3f64..2e5, mu in 0.1f64..1.5, load in 1.0f64..3e4,
    ) {
        let (fx, fy) = dugoff_forces(&tire(c_kappa, c_alpha, mu), load, 0.0, 0.0).unwrap();
        prop_assert_eq!((fx, fy), (0.0, 0.0));
        prop_assert_eq!(saturate_wheel(0.0, 0.0, mu, load, Centering::Midpoint), (0.0, 0.0));
    }

    #[test]
    fn forces_follow_slip_signs(
        kappa in -0.5f64..0.5, alpha in -0.5f64..0.5, load in 100.0f64..2e4,
    ) {
        let (fx, fy) = dugoff_forces(&TireParams::default(), load, kappa, alpha).unwrap();
        prop_assert!(fx * kappa >= 0.0);
        prop_assert!(fy * alpha >= 0.0);
    }

    #[test]
    fn logistic_respects_bounds(x in -1e9f64..1e9, lower in -1e5f64..1e5, width in 1e-3f64..1e5) {
        let upper = lower + width;
        let y = logistic(x, upper, lower).unwrap();
        prop_assert!(y >= lower && y <= upper);
        let c = lower + 0.5 * width;
        prop_assert!((logistic(c, upper, lower).unwrap() - c).abs() <= 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn loads_always_sum_to_weight(
        v in 1.0f64..40.0, u in -2.0f64..2.0, r in -1.0f64..1.0, vdot in -10.0f64..10.0, delta in -0.6f64..0.6,
    ) {
        let vehicle = Vehicle::new(VehicleParams::default());
        let state = DynamicState { v, u, r, omega_f: v / 0.3, omega_r: v / 0.3 };
        let input = VehicleInput { delta_f: delta, tau_f: 0.0, tau_r: 0.0 };
        let (nf, nr) = vehicle.normal_forces(&state, vdot, &input).unwrap();
        let w = vehicle.params.weight();
        prop_assert!((nf + nr - w).abs() <= 1e-9 * w);
    }

    #[test]
    fn algebraic_loop_settles(
        v in 5.0f64..35.0, u in -1.0f64..1.0, r in -0.4f64..0.4, slip in -0.05f64..0.05,
        delta in -0.1f64..0.1, tau in -800.0f64..800.0,
    ) {
        let vehicle = Vehicle::new(VehicleParams::default());
        let state = DynamicState { v, u, r, omega_f: v * (1.0 + slip) / 0.3, omega_r: v / 0.3 };
        let input = VehicleInput { delta_f: delta, tau_f: tau, tau_r: tau };
        let sol = vehicle.resolve_algebraic_loop(&state, &input).unwrap();
        prop_assert!(sol.residual < 1e-9);
        prop_assert!(sol.iterations <= 30);
    }
}

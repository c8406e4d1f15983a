use proptest::prelude::*;

use parabolic_backstepping::analysis::{fit_decay, modal_rate_oracle};
use parabolic_backstepping::config::{parse_config_str, RunConfig};
use parabolic_backstepping::goursat::{solve_pair, KernelProblem, SideCondition};
use parabolic_backstepping::grid::TriangleGrid;
use parabolic_backstepping::io::{fmt_real, read_kernel_csv, write_kernel_csv};
use parabolic_backstepping::kernels::{control_kernel, KernelFamily};
use parabolic_backstepping::sim::{
    apply_transform, zero_kernel, FieldPair, IcPreset, Scenario, SimConfig, TransformDirection,
};

fn side() -> impl Strategy<Value = SideCondition> {
    prop_oneof![Just(SideCondition::ReflectionNeumann), Just(SideCondition::ZeroDirichlet)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn modal_oracle_is_symmetric(a in 0.0f64..100.0, b in 0.0f64..100.0, neg in any::<bool>()) {
        let (a, b) = if neg { (-a, -b) } else { (a, b) };
        prop_assert_eq!(modal_rate_oracle(a, b).unwrap(), modal_rate_oracle(b, a).unwrap());
    }

    #[test]
    fn solve_pair_is_linear_in_the_data(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        c_g in -4.0f64..4.0,
        c_h in -4.0f64..4.0,
        s in -3.0f64..3.0,
        side in side(),
    ) {
        let base = solve_pair(&KernelProblem::new(a, b, c_g, c_h, side, 16)).unwrap();
        let scaled = solve_pair(&KernelProblem::new(a, b, s * c_g, s * c_h, side, 16)).unwrap();
        let scale = 1.0 + base.g.max_abs().max(base.h.max_abs()) * s.abs();
        for (x, y) in base.g.as_slice().iter().zip(scaled.g.as_slice()) {
            prop_assert!((s * x - y).abs() <= 1e-10 * scale);
        }
        for (x, y) in base.h.as_slice().iter().zip(scaled.h.as_slice()) {
            prop_assert!((s * x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn control_kernel_swap_symmetry(l1 in -15.0f64..15.0, l2 in -15.0f64..15.0) {
        let a = control_kernel(l1, l2, 16, 1e-12).unwrap();
        let b = control_kernel(l2, l1, 16, 1e-12).unwrap();
        for (x, y) in a.kvu.as_slice().iter().zip(b.kuv.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
        for (x, y) in a.kuu.as_slice().iter().zip(b.kvv.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn interpolation_reproduces_linear_functions(
        c in -5.0f64..5.0,
        p in -5.0f64..5.0,
        q in -5.0f64..5.0,
        x in 0.0f64..=1.0,
        t in 0.0f64..=1.0,
    ) {
        let f = |x: f64, y: f64| c + p * x + q * y;
        let g = TriangleGrid::from_fn(12, f);
        let y = t * x;
        prop_assert!((g.interpolate(x, y) - f(x, y)).abs() <= 1e-12);
    }

    #[test]
    fn printed_reals_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_real(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn kernel_csv_round_trip(l1 in -30.0f64..30.0, l2 in -30.0f64..30.0) {
        let kf = control_kernel(l1, l2, 10, 1e-12).unwrap();
        let mut buf = Vec::new();
        write_kernel_csv(&mut buf, &kf).unwrap();
        let back = read_kernel_csv(buf.as_slice(), KernelFamily::Control, l1, l2).unwrap();
        prop_assert_eq!(back.kuu, kf.kuu);
        prop_assert_eq!(back.kuv, kf.kuv);
        prop_assert_eq!(back.kvu, kf.kvu);
        prop_assert_eq!(back.kvv, kf.kvv);
    }

    #[test]
    fn config_text_round_trip(
        l1 in -50.0f64..50.0,
        l2 in -50.0f64..50.0,
        nx in 16usize..400,
        dt in 1e-6f64..1e-2,
        amp in -3.0f64..3.0,
        scenario in prop::sample::select(Scenario::ALL.to_vec()),
    ) {
        let mut sim = SimConfig::new(l1, l2, scenario);
        sim.nx = nx;
        sim.dt = dt;
        sim.ic_preset = IcPreset::Bump { center: 0.4, width: 0.1, amplitude: amp };
        let cfg = RunConfig::new(sim);
        prop_assert_eq!(parse_config_str(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn fit_recovers_exponentials(rate in -20.0f64..20.0, amp in 1e-3f64..1e3) {
        let t: Vec<f64> = (0..40).map(|k| k as f64 * 0.025).collect();
        let n: Vec<f64> = t.iter().map(|t| amp * (-rate * t).exp()).collect();
        let fit = fit_decay(&t, &n, (0.0, 1.0)).unwrap();
        prop_assert!((fit.rate - rate).abs() <= 1e-9 * (1.0 + rate.abs()));
    }

    #[test]
    fn zero_kernel_transforms_are_identities(vals in prop::collection::vec(-10.0f64..10.0, 34)) {
        let w = FieldPair { u: vals[..17].to_vec(), v: vals[17..].to_vec() };
        let k = zero_kernel(KernelFamily::Control, 16);
        prop_assert_eq!(apply_transform(&w, &k, TransformDirection::Forward, false).unwrap(), w);
    }
}

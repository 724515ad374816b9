use approx::assert_relative_eq;
use proptest::prelude::*;

use wireless_fl::config::{DeviceProfile, PlanSpec, Scenario, Scheme, SystemConfig};
use wireless_fl::harness::{self, baseline_plan, compare_schemes, run_experiment, run_ideal, Problem};
use wireless_fl::learn::{
    estimate_constants, exact_gradient, gen_synthetic_fleet, local_gradient, local_loss, smoothness_bound,
    LocalDataset, SyntheticSpec,
};
use wireless_fl::quantize::{decode, quantize_vector, quantizer_variance_bound};
use wireless_fl::rng::{stream, Purpose};
use wireless_fl::sampler::SamplingPlan;
use wireless_fl::Exec;

fn small(k: &str, n: &str) -> Scenario {
    let mut sc = Scenario::default();
    for (key, v) in [
        ("num_devices", k),
        ("participants_per_round", n),
        ("num_subbands", n),
        ("model_dim", "6"),
        ("max_samples", "80"),
        ("holdout_samples", "200"),
        ("delay_target_s", "auto"),
    ] {
        sc.set(key, v).unwrap();
    }
    sc
}

fn device_data() -> Vec<LocalDataset> {
    let spec = SyntheticSpec { feature_dim: 5, max_samples: 80, ..SyntheticSpec::default() };
    gen_synthetic_fleet(&spec, 4, 3).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn local_losses_are_strongly_convex_and_smooth(
        w in prop::collection::vec(-3.0f64..3.0, 6),
        v in prop::collection::vec(-3.0f64..3.0, 6),
        dev in 0usize..4,
    ) {
        let data = device_data();
        let ds = &data[dev];
        let reg = 0.5;
        let l = smoothness_bound(ds, reg);
        let fw = local_loss(&w, ds, reg).unwrap();
        let fv = local_loss(&v, ds, reg).unwrap();
        let g = exact_gradient(&w, ds, reg).unwrap();
        let diff: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
        let lin = fw + dot(&g, &diff);
        let dist_sq = dot(&diff, &diff);
        prop_assert!(fv >= lin + 0.5 * reg * dist_sq - 1e-9);
        prop_assert!(fv <= lin + 0.5 * l * dist_sq + 1e-9);
    }

    #[test]
    fn clipped_gradients_respect_the_bound(
        w in prop::collection::vec(-20.0f64..20.0, 6),
        bound in 0.05f64..5.0,
    ) {
        let data = device_data();
        let lc = wireless_fl::config::LearningConstants {
            strong_convexity: 0.5,
            grad_bound: bound,
            ..wireless_fl::config::LearningConstants::reference()
        };
        for ds in &data {
            prop_assert!(local_gradient(&w, ds, &lc).unwrap().norm() <= bound * (1.0 + 1e-12));
        }
    }
}

#[test]
fn ideal_descent_is_monotone() {
    let sc = small("5", "2");
    let mut problem = Problem::from_scenario(&sc).unwrap();
    problem.cfg.learning_rate = 1.0 / problem.lc.smoothness;
    let gaps = run_ideal(&problem, 100).unwrap();
    for w in gaps.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
    }
    assert!(gaps[100] < 0.05 * gaps[0]);
}

#[test]
fn quantizer_error_stays_below_phi() {
    let data = device_data();
    let lc = estimate_constants(&data, 0.5, 4, 9).unwrap();
    let w = vec![0.0; 6];
    for bits in [1, 2, 4, 8] {
        let phi = quantizer_variance_bound(lc.quant_range_sq, bits);
        for (k, ds) in data.iter().enumerate() {
            let g = local_gradient(&w, ds, &lc).unwrap();
            let mut rng = stream(2, Purpose::Test, &[bits as u64, k as u64]);
            let trials = 4000;
            let mse: f64 = (0..trials)
                .map(|_| {
                    let q = decode(&quantize_vector(&g, bits, &mut rng).unwrap());
                    q.iter().zip(g.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                })
                .sum::<f64>()
                / trials as f64;
            assert!(mse <= phi, "b={bits} k={k}: {mse} > {phi}");
        }
    }
}

#[test]
fn perfect_digital_link_tracks_ideal_descent() {
    let mut sc = small("4", "4");
    sc.set("quant_bits", "32").unwrap();
    sc.set("power_budget_w", "1e30").unwrap();
    sc.set("delay_target_s", "auto").unwrap();
    let problem = Problem::from_scenario(&sc).unwrap();
    let plan = SamplingPlan::uniform(4, 4).unwrap();
    assert_eq!(plan.probs(), &[1.0; 4]);
    let ideal = run_ideal(&problem, 30).unwrap();
    let traces = run_experiment(&problem, Scheme::Digital, &plan, "full", 30, 1, 5, Exec::Serial).unwrap();
    for (a, b) in traces[0].gap.iter().zip(&ideal) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "{a} vs {b}");
    }
    assert!(traces[0].delivered.iter().all(|round| round.iter().all(|&d| d)));
}

#[test]
fn uniform_baseline_on_reference_population() {
    let cfg = SystemConfig::reference();
    let fleet = DeviceProfile::from_counts(&[100; 20], &[300.0; 20], &[0.5; 20]).unwrap();
    let plan = baseline_plan(&PlanSpec::Uniform, &cfg, &fleet, 10).unwrap();
    assert_eq!(plan.probs(), &[0.5; 20]);
}

#[test]
fn traces_satisfy_their_invariants() {
    let sc = small("5", "2");
    let problem = Problem::from_scenario(&sc).unwrap();
    let plan = problem.plan(&PlanSpec::LearningOriented, Scheme::Digital).unwrap();
    for scheme in Scheme::ALL {
        for t in run_experiment(&problem, scheme, &plan, "learning", 40, 3, 8, Exec::default()).unwrap() {
            assert_eq!(t.gap.len(), 41);
            assert_eq!(t.participated.len(), 40);
            assert!(t.gap.iter().all(|&g| g >= -1e-9));
            assert!(t.cumulative_delay_s.windows(2).all(|w| w[1] > w[0]));
            assert!(t.participated.iter().all(|p| p.iter().filter(|&&x| x).count() == 2));
            for (p, d) in t.participated.iter().zip(&t.delivered) {
                assert!(p.iter().zip(d).all(|(p, d)| *p || !*d));
            }
        }
    }
}

#[test]
fn optimized_plan_is_no_worse_than_uniform() {
    let sc = Scenario::default();
    let problem = Problem::from_scenario(&sc).unwrap();
    let rows =
        compare_schemes(&problem, &[PlanSpec::Uniform, PlanSpec::Optimized], sc.rounds, 50, sc.seed, Exec::default())
            .unwrap();
    for scheme in Scheme::ALL {
        let get = |name: &str| rows.iter().find(|r| r.scheme == scheme && r.plan == name).unwrap();
        let (opt, uni) = (get("optimized"), get("uniform"));
        assert!(
            opt.final_gap_mean <= uni.final_gap_mean + 2.0 * uni.final_gap_stderr,
            "{scheme}: {} vs {} +- {}",
            opt.final_gap_mean,
            uni.final_gap_mean,
            uni.final_gap_stderr
        );
        assert!(opt.bound_gap <= uni.bound_gap);
    }
}

#[test]
fn both_schemes_share_budgets() {
    let sc = small("5", "2");
    let problem = Problem::from_scenario(&sc).unwrap();
    let rows = compare_schemes(&problem, &[PlanSpec::Uniform], 5, 2, 1, Exec::Serial).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].delay_target_s, rows[1].delay_target_s);
    assert_eq!(rows[0].power_budget_w, rows[1].power_budget_w);
    assert_relative_eq!(rows[1].mean_round_delay_s, problem.cfg.delay_target_s, max_relative = 1e-12);
    assert!(rows[0].mean_round_delay_s <= problem.cfg.delay_target_s * (1.0 + 1e-12));
    let hash = sc.config_hash();
    let table = harness::comparison_table(&hash, &rows).unwrap();
    assert_eq!(table.config_hash(), hash);
}

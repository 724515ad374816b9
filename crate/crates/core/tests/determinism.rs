use wireless_fl::config::{PlanSpec, Scenario, Scheme};
use wireless_fl::harness::{run_experiment, sweep, sweep_table, trace_table, Problem, SweepAxis};
use wireless_fl::Exec;

fn scenario() -> Scenario {
    let mut sc = Scenario::default();
    sc.set("num_devices", "6").unwrap();
    sc.set("participants_per_round", "3").unwrap();
    sc.set("num_subbands", "3").unwrap();
    sc.set("delay_target_s", "auto").unwrap();
    sc
}

#[test]
fn same_seed_same_traces() {
    let sc = scenario();
    let problem = Problem::from_scenario(&sc).unwrap();
    let plan = problem.plan(&PlanSpec::Optimized, Scheme::Analog).unwrap();
    for scheme in Scheme::ALL {
        let a = run_experiment(&problem, scheme, &plan, "optimized", 30, 4, 3, Exec::Parallel).unwrap();
        let b = run_experiment(&problem, scheme, &plan, "optimized", 30, 4, 3, Exec::Serial).unwrap();
        assert_eq!(a, b);
        let fewer = run_experiment(&problem, scheme, &plan, "optimized", 30, 2, 3, Exec::Parallel).unwrap();
        assert_eq!(fewer[..], a[..2]);
        let other = run_experiment(&problem, scheme, &plan, "optimized", 30, 1, 4, Exec::Serial).unwrap();
        assert_ne!(other[0].gap, a[0].gap);
        let hash = sc.config_hash();
        assert_eq!(
            trace_table(&hash, &a).unwrap().to_csv_string().unwrap(),
            trace_table(&hash, &b).unwrap().to_csv_string().unwrap()
        );
    }
}

#[test]
fn problem_generation_is_reproducible() {
    let sc = scenario();
    let a = Problem::from_scenario(&sc).unwrap();
    let b = Problem::from_scenario(&sc).unwrap();
    assert_eq!(a.lc, b.lc);
    for (x, y) in a.fleet.iter().zip(&b.fleet) {
        assert_eq!((x.weight, x.distance_m), (y.weight, y.distance_m));
        assert_eq!(x.data().unwrap().labels(), y.data().unwrap().labels());
    }
    assert_eq!(a.reference.unwrap().w_star, b.reference.unwrap().w_star);
}

#[test]
fn simulated_sweeps_agree_across_execution_modes() {
    let sc = scenario();
    let problem = Problem::from_scenario(&sc).unwrap();
    let grid = [-10.0, 0.0, 10.0];
    let run = |exec| {
        let rows = sweep(&problem, SweepAxis::Power, &grid, &Scheme::ALL, &PlanSpec::Uniform, 20, 3, 9, exec).unwrap();
        sweep_table(&sc.config_hash(), &rows).unwrap().to_csv_string().unwrap()
    };
    assert_eq!(run(Exec::Serial), run(Exec::Parallel));
}

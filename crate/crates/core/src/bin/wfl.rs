//! `wfl`: run simulations, evaluate bounds, optimise sampling plans, sweep
//! parameters and compare schemes. Every command writes CSV tables and a
//! `manifest.txt` into `--out`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use wireless_fl::bounds::{self, BoundReport};
use wireless_fl::config::{self, validate_config, PlanSpec, Scenario, Scheme};
use wireless_fl::harness::{self, Problem, SweepAxis};
use wireless_fl::optimize;
use wireless_fl::table::{fmt_f64, write_run, Table};
use wireless_fl::{Error, Exec, Result};

const DEFAULT_OUT: &str = "wfl-out";
const ALL_PLANS: &str = "uniform,learning,channel,distortion,optimized";

fn cli() -> Command {
    let mut cmd = Command::new("wfl")
        .about("Federated learning over digital and over-the-air wireless uplinks")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .global(true)
                .help("key = value config file"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("DIR")
                .global(true)
                .default_value(DEFAULT_OUT)
                .help("output directory"),
        )
        .arg(
            Arg::new("serial")
                .long("serial")
                .global(true)
                .action(ArgAction::SetTrue)
                .help("run replications on the calling thread"),
        );
    for key in Scenario::KEYS.iter().chain(Scenario::ALIASES) {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(*key)
                .alias(key.replace('_', "-"))
                .value_name("VALUE")
                .global(true)
                .hide(!matches!(*key, "preset" | "seed" | "replications" | "rounds" | "power_dbm" | "plan" | "scheme"))
                .help(format!("config key '{key}'")),
        );
    }
    cmd.subcommand(Command::new("simulate").about("Train with the configured scheme and plan"))
        .subcommand(Command::new("bounds").about("Closed-form gaps and learning-rate checks"))
        .subcommand(
            Command::new("optimize")
                .about("Optimised inclusion probabilities, bit width and truncation threshold")
                .arg(Arg::new("b-max").long("b-max").value_name("BITS").default_value("16"))
                .arg(
                    Arg::new("threshold-grid")
                        .long("threshold-grid")
                        .value_name("LIST")
                        .default_value("0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1,1.25,1.5,2"),
                ),
        )
        .subcommand(
            Command::new("sweep")
                .about("Bounds and optionally simulated gaps along one parameter")
                .arg(
                    Arg::new("axis")
                        .long("axis")
                        .required(true)
                        .value_parser(["power", "devices", "rho", "bits", "threshold"]),
                )
                .arg(Arg::new("grid").long("grid").required(true).value_name("LIST"))
                .arg(Arg::new("schemes").long("schemes").value_name("LIST").default_value("digital,analog")),
        )
        .subcommand(
            Command::new("compare")
                .about("Simulate every plan under both schemes")
                .arg(Arg::new("plans").long("plans").value_name("LIST").default_value(ALL_PLANS)),
        )
}

/// Preset, then config file, then key flags. `delay_target_s` goes last so
/// `auto` sees the final dimension and subband count.
fn scenario(m: &ArgMatches) -> Result<Scenario> {
    let mut sc = match m.get_one::<String>("preset") {
        Some(p) => Scenario::preset(p)?,
        None => Scenario::default(),
    };
    if let Some(path) = m.get_one::<String>("config") {
        let text = fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{path}: {e}")))?;
        sc.apply_text(&text)?;
    }
    let keys = Scenario::KEYS.iter().chain(Scenario::ALIASES).filter(|k| !matches!(**k, "preset" | "delay_target_s"));
    for key in keys.chain(std::iter::once(&"delay_target_s")) {
        if let Some(v) = m.get_one::<String>(key) {
            sc.set(key, v).map_err(|e| Error::InvalidArgument(format!("--{key}: {e}")))?;
        }
    }
    Ok(sc)
}

fn list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|e| Error::InvalidArgument(format!("--{flag}: '{v}': {e}"))))
        .collect()
}

fn warn(problem: &Problem, schemes: &[Scheme]) {
    let report = validate_config(&problem.cfg, &problem.fleet, &problem.lc);
    for s in schemes {
        for msg in report.messages(*s) {
            eprintln!("warning: {msg}");
        }
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn simulate(sc: &Scenario, out: &Path, exec: Exec) -> Result<Vec<PathBuf>> {
    let problem = Problem::from_scenario(sc)?;
    warn(&problem, &[sc.scheme]);
    let plan = problem.plan(&sc.plan, sc.scheme)?;
    let traces =
        harness::run_experiment(&problem, sc.scheme, &plan, sc.plan.name(), sc.rounds, sc.replications, sc.seed, exec)?;
    let summary = harness::summarize(&traces)?;
    let bound = problem.bound_curve(sc.scheme, &plan, sc.rounds).unwrap_or_else(|_| vec![f64::INFINITY; sc.rounds + 1]);
    let hash = sc.config_hash();
    let mut t = Table::new(&hash, &["scheme", "plan", "round", "gap_mean", "gap_stderr", "bound"]);
    for (m, b) in bound.iter().enumerate() {
        t.push(vec![
            sc.scheme.to_string(),
            sc.plan.name().to_string(),
            m.to_string(),
            fmt_f64(summary.mean[m]),
            fmt_f64(summary.stderr[m]),
            fmt_f64(*b),
        ])?;
    }
    let traces = harness::trace_table(&hash, &traces)?;
    write_run(out, "simulate", sc, &[("trace", &traces), ("summary", &t)])
}

fn bounds_cmd(sc: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    let problem = Problem::for_bounds(sc)?;
    warn(&problem, &Scheme::ALL);
    let hash = sc.config_hash();
    let mut columns = vec!["scheme", "plan"];
    columns.extend(BoundReport::COLUMNS);
    let mut t = Table::new(&hash, &columns);
    let mut bits = Table::new(&hash, &["bits", "gap_digital"]);
    for scheme in Scheme::ALL {
        let plan = problem.plan(&sc.plan, scheme)?;
        let fleet = problem.fleet_with(&plan)?;
        let mut row = vec![scheme.to_string(), sc.plan.name().to_string()];
        row.extend(BoundReport::evaluate(&problem.cfg, &fleet, &problem.lc)?.values());
        t.push(row)?;
        if scheme == Scheme::Digital {
            let range: Vec<u32> = (1..=32).collect();
            for (b, gap) in bounds::gap_digital_vs_bits(&problem.cfg, &fleet, &problem.lc, &range)? {
                bits.push(vec![b.to_string(), fmt_f64(gap)])?;
            }
        }
    }
    write_run(out, "bounds", sc, &[("bounds", &t), ("gap_vs_bits", &bits)])
}

fn optimize_cmd(sc: &Scenario, m: &ArgMatches, out: &Path) -> Result<Vec<PathBuf>> {
    let b_max: u32 = list("b-max", m.get_one::<String>("b-max").expect("default"))?[0];
    let grid: Vec<f64> = list("threshold-grid", m.get_one::<String>("threshold-grid").expect("default"))?;
    let problem = Problem::for_bounds(sc)?;
    let (cfg, lc) = (&problem.cfg, &problem.lc);
    let hash = sc.config_hash();
    let alpha = problem.weights();
    let p = bounds::success_probs(cfg, &problem.fleet);
    let n = cfg.participants_per_round;

    let digital = optimize::optimize_inclusion_digital(&alpha, &p, n, 1e-10)?;
    let analog = optimize::dinkelbach_analog(cfg, &problem.fleet, lc, 1e-10, 100)?;
    let uniform = problem.plan(&PlanSpec::Uniform, Scheme::Digital)?;

    let mut inclusion =
        Table::new(&hash, &["device", "alpha", "distance_m", "success_prob", "uniform", "digital", "analog"]);
    for k in 0..alpha.len() {
        inclusion.push(vec![
            k.to_string(),
            fmt_f64(alpha[k]),
            fmt_f64(problem.fleet[k].distance_m),
            fmt_f64(p[k]),
            fmt_f64(uniform.probs()[k]),
            fmt_f64(digital.probs[k]),
            fmt_f64(analog.probs[k]),
        ])?;
    }

    let mut summary = Table::new(&hash, &["scheme", "objective", "gap", "gap_uniform", "iterations", "converged"]);
    let uniform_fleet = problem.fleet_with(&uniform)?;
    for (scheme, res) in [(Scheme::Digital, &digital), (Scheme::Analog, &analog)] {
        let fleet = config::with_probs(&problem.fleet, &res.probs)?;
        let (gap, base) = match scheme {
            Scheme::Digital => (bounds::digital_gap_for(cfg, &fleet, lc)?, bounds::digital_gap_for(cfg, &uniform_fleet, lc)?),
            Scheme::Analog => (bounds::analog_gap_for(cfg, &fleet, lc)?, bounds::analog_gap_for(cfg, &uniform_fleet, lc)?),
        };
        summary.push(vec![
            scheme.to_string(),
            fmt_f64(res.objective),
            fmt_f64(gap),
            fmt_f64(base),
            res.iterations.to_string(),
            res.converged.to_string(),
        ])?;
    }

    let mut trace = Table::new(&hash, &["iteration", "ratio"]);
    for (i, s) in analog.trace.iter().enumerate() {
        trace.push(vec![i.to_string(), fmt_f64(*s)])?;
    }

    let digital_fleet = config::with_probs(&problem.fleet, &digital.probs)?;
    let analog_fleet = config::with_probs(&problem.fleet, &analog.probs)?;
    let mut search = Table::new(&hash, &["parameter", "value", "gap", "best"]);
    let bits: Vec<u32> = (1..=b_max.min(32)).collect();
    let best_bits = optimize::search_quantization_bits(cfg, &digital_fleet, lc, b_max).ok();
    for (b, gap) in bounds::gap_digital_vs_bits(cfg, &digital_fleet, lc, &bits)? {
        search.push(vec!["quant_bits".into(), b.to_string(), fmt_f64(gap), (Some(b) == best_bits).to_string()])?;
    }
    let best_threshold = optimize::search_truncation_threshold(cfg, &analog_fleet, lc, &grid).ok();
    for (g, gap) in optimize::truncation_threshold_table(cfg, &analog_fleet, lc, &grid)? {
        search.push(vec![
            "trunc_threshold".into(),
            fmt_f64(g),
            fmt_f64(gap),
            (Some(g) == best_threshold).to_string(),
        ])?;
    }
    write_run(
        out,
        "optimize",
        sc,
        &[("inclusion", &inclusion), ("optimizer", &summary), ("dinkelbach_trace", &trace), ("search", &search)],
    )
}

fn sweep_cmd(sc: &Scenario, m: &ArgMatches, out: &Path, exec: Exec) -> Result<Vec<PathBuf>> {
    let axis: SweepAxis = m.get_one::<String>("axis").expect("required").parse()?;
    let grid: Vec<f64> = list("grid", m.get_one::<String>("grid").expect("required"))?;
    let schemes: Vec<Scheme> = list("schemes", m.get_one::<String>("schemes").expect("default"))?;
    let problem = if sc.replications == 0 { Problem::for_bounds(sc)? } else { Problem::from_scenario(sc)? };
    let rows = harness::sweep(&problem, axis, &grid, &schemes, &sc.plan, sc.rounds, sc.replications, sc.seed, exec)?;
    for r in rows.iter().filter(|r| !r.note.is_empty()) {
        eprintln!("note: {axis} = {} ({}): {}", r.value, r.scheme, r.note);
    }
    let t = harness::sweep_table(&sc.config_hash(), &rows)?;
    write_run(out, "sweep", sc, &[("sweep", &t)])
}

fn compare_cmd(sc: &Scenario, m: &ArgMatches, out: &Path, exec: Exec) -> Result<Vec<PathBuf>> {
    let plans: Vec<PlanSpec> = list("plans", m.get_one::<String>("plans").expect("default"))?;
    let problem = Problem::from_scenario(sc)?;
    warn(&problem, &Scheme::ALL);
    let rows = harness::compare_schemes(&problem, &plans, sc.rounds, sc.replications, sc.seed, exec)?;
    let t = harness::comparison_table(&sc.config_hash(), &rows)?;
    write_run(out, "compare", sc, &[("compare", &t)])
}

fn run(matches: &ArgMatches) -> Result<Vec<PathBuf>> {
    let (name, m) = matches.subcommand().expect("subcommand required");
    let sc = scenario(m)?;
    let out = PathBuf::from(m.get_one::<String>("out").expect("default"));
    let exec = if m.get_flag("serial") { Exec::Serial } else { Exec::default() };
    match name {
        "simulate" => simulate(&sc, &out, exec),
        "bounds" => bounds_cmd(&sc, &out),
        "optimize" => optimize_cmd(&sc, m, &out),
        "sweep" => sweep_cmd(&sc, m, &out, exec),
        "compare" => compare_cmd(&sc, m, &out, exec),
        _ => unreachable!("unknown subcommand"),
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(paths) => {
            report(&paths);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

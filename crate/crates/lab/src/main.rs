use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use platoon_core::io::{
    save_trace, write_json, write_rows_to, write_spectrum_csv, write_verification_csv,
    ClassificationReport,
};
use platoon_core::optimizer::{optimize, OptimizationProblem, POLISH_SEED};
use platoon_core::spectral::{
    check_circular_stability, check_necessary, signal_velocities, spectral_scan,
};
use platoon_core::wave::{
    classify_flock_stability, nominal_half_period, predict_total_error, predict_transient,
    ExperimentOptions,
};
use platoon_core::{
    simulate, PlatoonError, PlatoonParams, PlatoonSystem, SimOptions, StateVector, Topology,
};
use platoon_lab::{
    range_grid, run_compare_strategies, run_scaling, run_sweep_asym, run_sweep_friction,
    run_verify, Manifest, SWEEP_N,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "platoon-lab", version, about = "Vehicle platoon experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Number of followers.
    #[arg(long)]
    n: Option<usize>,
    /// Friction coefficient.
    #[arg(long, default_value_t = 2.0)]
    a: f64,
    #[arg(long, default_value_t = 6.2)]
    gx: f64,
    #[arg(long, default_value_t = 10.0)]
    gv: f64,
    #[arg(long, default_value_t = 0.5, conflicts_with = "beta_x")]
    rho_x: f64,
    #[arg(long, default_value_t = 0.4, conflicts_with = "beta_v")]
    rho_v: f64,
    /// Position asymmetry as β_x = 1 - 2ρ_x.
    #[arg(long)]
    beta_x: Option<f64>,
    /// Velocity asymmetry as β_v = 1 - 2ρ_v.
    #[arg(long)]
    beta_v: Option<f64>,
    /// Integration step, s.
    #[arg(long, default_value_t = platoon_core::dynamics::DEFAULT_DT)]
    dt: f64,
    /// Simulation horizon, s. Defaults to five predicted half-periods.
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, default_value_t = Topology::Path)]
    topology: Topology,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl ParamArgs {
    fn params(&self, default_n: usize) -> platoon_core::Result<PlatoonParams> {
        let rho_x = self.beta_x.map_or(self.rho_x, |b| (1.0 - b) / 2.0);
        let rho_v = self.beta_v.map_or(self.rho_v, |b| (1.0 - b) / 2.0);
        PlatoonParams::new(
            self.n.unwrap_or(default_n),
            self.a,
            self.gx,
            self.gv,
            rho_x,
            rho_v,
        )
    }

    fn experiment(&self, p: &PlatoonParams) -> platoon_core::Result<ExperimentOptions> {
        let mut opts = ExperimentOptions {
            dt: self.dt,
            ..ExperimentOptions::default()
        };
        if let Some(t) = self.t_end {
            opts.horizon_periods = t / nominal_half_period(p)?;
        }
        Ok(opts)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Leader-step simulation; writes the trace CSV and metadata.
    Simulate(ParamArgs),
    /// Per-mode roots, phase velocities and damping of the circular system.
    Spectrum(ParamArgs),
    /// Stability conditions and a brute-force spectral check.
    Stability(ParamArgs),
    /// Predicted transient and total error.
    Predict(ParamArgs),
    /// Predicted against measured transient features over platoon lengths.
    Verify {
        #[command(flatten)]
        p: ParamArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [40usize, 80, 160])]
        n_list: Vec<usize>,
    },
    /// Gain and velocity-asymmetry selection.
    Optimize {
        #[command(flatten)]
        p: ParamArgs,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Upper bound on both gains.
        #[arg(long, default_value_t = 10.0)]
        gmax: f64,
    },
    /// Total error against platoon length for three asymmetry strategies.
    Scaling {
        #[command(flatten)]
        p: ParamArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [50usize, 100, 200])]
        n_list: Vec<usize>,
    },
    /// Total error against friction.
    SweepFriction {
        #[command(flatten)]
        p: ParamArgs,
        /// LO:HI:STEP
        #[arg(long, default_value = "1.4:2.8:0.1")]
        range: String,
    },
    /// Total error against velocity asymmetry.
    SweepAsym {
        #[command(flatten)]
        p: ParamArgs,
        /// LO:HI:STEP over ρ_v
        #[arg(long, default_value = "0.34:0.44:0.01")]
        range: String,
    },
    /// Traces for symmetric, identical and velocity-only asymmetry.
    CompareStrategies(ParamArgs),
    /// Flock-stability verdict from leader-step runs over platoon lengths.
    Classify {
        #[command(flatten)]
        p: ParamArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [25usize, 50, 100, 200])]
        n_list: Vec<usize>,
    },
}

enum Failure {
    Usage(String),
    Infeasible(String),
    Runtime(String),
}

impl From<PlatoonError> for Failure {
    fn from(e: PlatoonError) -> Self {
        match e {
            PlatoonError::Infeasible(_) | PlatoonError::Unstable(_) | PlatoonError::Diverged(_) => {
                Failure::Infeasible(e.to_string())
            }
            PlatoonError::Io(_) | PlatoonError::Csv(_) | PlatoonError::Json(_) => {
                Failure::Runtime(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn parse_range(s: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|x| x.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some(&[lo, hi, step]) => Ok(range_grid(lo, hi, step)?),
        _ => Err(Failure::Usage(format!(
            "range must be LO:HI:STEP, got {s:?}"
        ))),
    }
}

struct Run {
    out: PathBuf,
    manifest: Manifest,
    started: Instant,
}

impl Run {
    fn new(command: &str, args: &ParamArgs, params: serde_json::Value) -> Result<Self, Failure> {
        fs::create_dir_all(&args.out).map_err(|e| Failure::Runtime(e.to_string()))?;
        Ok(Self {
            out: args.out.clone(),
            manifest: Manifest::new(command, params),
            started: Instant::now(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn finish(self) -> Result<(), Failure> {
        let path = self.out.join("manifest.json");
        write_json(&self.manifest.finish(self.started), &path)?;
        println!("wrote {}", self.out.display());
        Ok(())
    }
}

fn install_pool(jobs: usize) {
    if jobs > 0 {
        // a second call only fails if the pool exists already
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

fn simulate_cmd(args: &ParamArgs) -> Result<(), Failure> {
    let p = args.params(100)?;
    let t_end = match args.t_end {
        Some(t) => t,
        None => 5.0 * nominal_half_period(&p)?,
    };
    let mut run = Run::new(
        "simulate",
        args,
        json!({"params": p, "topology": args.topology, "dt": args.dt, "t_end": t_end}),
    )?;
    let sys = PlatoonSystem::new(p, args.topology)?;
    let opts =
        SimOptions::new(args.dt, t_end).with_max_samples(ExperimentOptions::default().max_samples);
    let trace = simulate(&sys, &StateVector::leader_step(p.n_followers), &opts)?;
    let path = run.path("trace.csv");
    save_trace(&trace, &path)?;
    run.manifest.outputs.push("trace.json".to_string());
    let diverged = trace.diverged;
    run.finish()?;
    if diverged {
        return Err(Failure::Infeasible(format!(
            "simulation diverged at t = {}",
            trace.times.last().unwrap_or(&0.0)
        )));
    }
    Ok(())
}

fn spectrum_cmd(args: &ParamArgs) -> Result<(), Failure> {
    let p = args.params(100)?;
    let mut run = Run::new("spectrum", args, json!({"params": p}))?;
    let scan = spectral_scan(&p)?;
    let path = run.path("spectrum.csv");
    write_spectrum_csv(
        &scan.modes,
        fs::File::create(path).map_err(PlatoonError::from)?,
    )?;
    let path = run.path("signal_velocities.json");
    write_json(
        &json!({"velocities": signal_velocities(&p).ok(), "max_real_part": scan.max_real_part, "stable": scan.stable}),
        &path,
    )?;
    run.finish()
}

fn stability_cmd(args: &ParamArgs) -> Result<(), Failure> {
    let p = args.params(100)?;
    let mut run = Run::new("stability", args, json!({"params": p}))?;
    let report = check_circular_stability(&p);
    let scan = spectral_scan(&p)?;
    let path = run.path("stability.json");
    write_json(
        &json!({
            "theorem": report,
            "necessary": check_necessary(&p),
            "scan": {"N": p.n_followers, "max_real_part": scan.max_real_part, "stable": scan.stable},
        }),
        &path,
    )?;
    run.finish()
}

fn predict_cmd(args: &ParamArgs) -> Result<(), Failure> {
    let p = args.params(100)?;
    let mut run = Run::new("predict", args, json!({"params": p}))?;
    let pred = predict_transient(&p)?;
    let theta = predict_total_error(&p).ok();
    let path = run.path("prediction.json");
    write_json(
        &json!({"transient": pred, "velocities": signal_velocities(&p)?, "theta": theta}),
        &path,
    )?;
    run.finish()
}

fn verify_cmd(args: &ParamArgs, n_list: &[usize]) -> Result<(), Failure> {
    let p = args.params(n_list.first().copied().unwrap_or(1))?;
    let mut run = Run::new("verify", args, json!({"params": p, "n_list": n_list}))?;
    let rows = run_verify(&p, n_list, &args.experiment(&p)?)?;
    let path = run.path("verification.csv");
    write_verification_csv(&rows, fs::File::create(path).map_err(PlatoonError::from)?)?;
    run.finish()
}

fn optimize_cmd(args: &ParamArgs, eps: f64, gmax: f64) -> Result<(), Failure> {
    let problem = OptimizationProblem::new(args.a, gmax, eps);
    let mut run = Run::new("optimize", args, json!({"problem": problem}))?;
    run.manifest.seeds.push(POLISH_SEED);
    let result = optimize(&problem)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let path = run.path("optimization.json");
    write_json(&result, &path)?;
    run.finish()
}

fn scaling_cmd(args: &ParamArgs, n_list: &[usize]) -> Result<(), Failure> {
    let p = args.params(n_list.first().copied().unwrap_or(1))?;
    let mut run = Run::new("scaling", args, json!({"params": p, "n_list": n_list}))?;
    let rows = run_scaling(&p, n_list, &args.experiment(&p)?)?;
    let path = run.path("scaling.csv");
    write_rows_to(&rows, &path)?;
    run.finish()
}

fn sweep_friction_cmd(args: &ParamArgs, range: &str) -> Result<(), Failure> {
    let values = parse_range(range)?;
    let p = args.params(SWEEP_N)?;
    let mut run = Run::new("sweep-friction", args, json!({"params": p, "a": values}))?;
    let sweep = run_sweep_friction(&p, &values, &args.experiment(&p)?)?;
    let path = run.path("sweep_friction.csv");
    write_rows_to(&sweep.rows, &path)?;
    let path = run.path("sweep_friction.json");
    write_json(&json!({"a_star": sweep.a_star}), &path)?;
    let all_diverged = sweep.diverged_everywhere();
    run.finish()?;
    if all_diverged {
        return Err(Failure::Infeasible(
            "every sweep point diverged".to_string(),
        ));
    }
    Ok(())
}

fn sweep_asym_cmd(args: &ParamArgs, range: &str) -> Result<(), Failure> {
    let values = parse_range(range)?;
    let p = args.params(SWEEP_N)?;
    let mut run = Run::new("sweep-asym", args, json!({"params": p, "rho_v": values}))?;
    let sweep = run_sweep_asym(&p, &values, &args.experiment(&p)?)?;
    let path = run.path("sweep_asym.csv");
    write_rows_to(&sweep.rows, &path)?;
    let path = run.path("sweep_asym.json");
    write_json(&json!({"argmin": sweep.argmin}), &path)?;
    let all_diverged = sweep.rows.iter().all(|r| r.diverged);
    run.finish()?;
    if all_diverged {
        return Err(Failure::Infeasible(
            "every sweep point diverged".to_string(),
        ));
    }
    Ok(())
}

fn compare_cmd(args: &ParamArgs) -> Result<(), Failure> {
    let p = args.params(100)?;
    let mut run = Run::new("compare-strategies", args, json!({"params": p}))?;
    let results = run_compare_strategies(&p, &args.experiment(&p)?)?;
    for (summary, trace) in &results {
        let name = format!("strategy_{}.csv", summary.label);
        let path = run.path(&name);
        save_trace(trace, &path)?;
        run.manifest
            .outputs
            .push(format!("strategy_{}.json", summary.label));
    }
    let summaries: Vec<_> = results.iter().map(|(s, _)| s).collect();
    let path = run.path("strategies.json");
    write_json(&summaries, &path)?;
    let all_diverged = summaries.iter().all(|s| s.diverged);
    run.finish()?;
    if all_diverged {
        return Err(Failure::Infeasible("every strategy diverged".to_string()));
    }
    Ok(())
}

fn classify_cmd(args: &ParamArgs, n_list: &[usize]) -> Result<(), Failure> {
    let p = args.params(n_list.first().copied().unwrap_or(1))?;
    let mut run = Run::new("classify", args, json!({"params": p, "n_list": n_list}))?;
    let c = classify_flock_stability(&p, n_list, &args.experiment(&p)?)?;
    let path = run.path("classification.json");
    write_json(&ClassificationReport::from(&c), &path)?;
    run.finish()
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Spectrum(a) => spectrum_cmd(a),
        Command::Stability(a) => stability_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Verify { p, n_list } => verify_cmd(p, n_list),
        Command::Optimize { p, eps, gmax } => optimize_cmd(p, *eps, *gmax),
        Command::Scaling { p, n_list } => scaling_cmd(p, n_list),
        Command::SweepFriction { p, range } => sweep_friction_cmd(p, range),
        Command::SweepAsym { p, range } => sweep_asym_cmd(p, range),
        Command::CompareStrategies(a) => compare_cmd(a),
        Command::Classify { p, n_list } => classify_cmd(p, n_list),
    }
}

fn jobs(cli: &Cli) -> usize {
    match &cli.command {
        Command::Simulate(a)
        | Command::Spectrum(a)
        | Command::Stability(a)
        | Command::Predict(a)
        | Command::CompareStrategies(a) => a.jobs,
        Command::Verify { p, .. }
        | Command::Optimize { p, .. }
        | Command::Scaling { p, .. }
        | Command::SweepFriction { p, .. }
        | Command::SweepAsym { p, .. }
        | Command::Classify { p, .. } => p.jobs,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    install_pool(jobs(&cli));
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Usage(msg) | Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

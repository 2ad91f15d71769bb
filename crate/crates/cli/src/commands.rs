//! One function per subcommand. Each prints a short summary and writes its
//! machine-readable files into the output directory.

use std::path::{Path, PathBuf};

use serde_json::Value;
use subopt_core::fluid::{
    build_psi_tilde, integrate_trajectory, verify_theorem3, Perturbation, PerturbationKind,
    TrajectoryOptions,
};
use subopt_core::network::{builtin_example, random_critical_network, scale_system};
use subopt_core::sim::{self, run, RunOptions, SimSetup, SweepConfig};
use subopt_core::{analyze_document, report, Analysis, Matrix};

use crate::config::{positive, NetworkSource, RunConfig};
use crate::error::{CliError, EXIT_OPTIMAL, EXIT_SUBOPTIMAL};
use crate::{Common, FluidArgs, GenArgs, SimulateArgs, SweepArgs};

pub const OUT_DIR_ENV: &str = "SUBOPT_OUT_DIR";

struct Context {
    cfg: RunConfig,
    analysis: Analysis,
    out_dir: PathBuf,
}

impl Context {
    fn load(common: &Common) -> Result<Self, CliError> {
        let cfg = RunConfig::from_flag(common.config.as_deref())?;
        let source = NetworkSource::resolve(common.builtin, common.network.clone(), &cfg)?;
        let analysis = analyze_document(&source.document()?)?;
        let out_dir = common
            .out_dir
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            cfg,
            analysis,
            out_dir,
        })
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
        text.push('\n');
        self.write(name, &text)
    }

    fn setup(&self, n: u64) -> Result<SimSetup, CliError> {
        let a = &self.analysis;
        let constants = a.constants()?;
        let sys = scale_system(&a.spec, &a.alloc.x_star, n)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        SimSetup::new(&sys, &a.spec, &a.alloc, &constants, a.witness()?)
            .map_err(|e| sim::SimError::from(e).into())
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn print_matrix(name: &str, m: &Matrix) {
    println!("{name}:");
    for i in 0..m.rows() {
        println!("  {}", fmt_vec(m.row(i)));
    }
}

pub fn analyze(args: &Common) -> Result<u8, CliError> {
    let ctx = Context::load(args)?;
    let a = &ctx.analysis;
    println!(
        "network: {} classes, {} pools",
        a.spec.classes(),
        a.spec.pools()
    );
    println!("rho* = {}", a.alloc.rho_star);
    print_matrix("psi*", &a.alloc.psi_star);
    println!("x* = {}", fmt_vec(&a.alloc.x_star));
    let edges: Vec<String> = a
        .alloc
        .basic_edges()
        .iter()
        .map(|(i, j)| format!("({}, {})", i + 1, j + 1))
        .collect();
    println!("tree edges: {}", edges.join(" "));
    if a.verdict.all_paths.is_empty() {
        println!("paths: none");
    } else {
        println!("paths:");
        for p in &a.verdict.all_paths {
            println!(
                "  {:<6} {:<24} weight {}",
                format!("{:?}", p.kind).to_lowercase(),
                p.label(),
                p.weight
            );
        }
    }
    println!("M_max = {}", a.verdict.m_max);
    match &a.verdict.witness_path {
        Some(w) => println!(
            "verdict: suboptimal (witness {}, weight {})",
            w.label(),
            w.weight
        ),
        None => println!("verdict: optimal"),
    }
    ctx.write_json("analysis.json", &report::analysis_json(a))?;
    Ok(if a.is_suboptimal() {
        EXIT_SUBOPTIMAL
    } else {
        EXIT_OPTIMAL
    })
}

pub fn fluid(args: &FluidArgs) -> Result<u8, CliError> {
    let ctx = Context::load(&args.common)?;
    let cfg = &ctx.cfg;
    let a = &ctx.analysis;
    let constants = a.constants()?;
    let witness = a.witness()?;
    let eps = positive("eps", args.eps.or(cfg.eps).unwrap_or(1e-3))?;
    let sigma = positive("sigma", args.sigma.or(cfg.sigma).unwrap_or(1.0))?;
    let step = positive(
        "step",
        args.step
            .or(cfg.step)
            .unwrap_or_else(|| TrajectoryOptions::default_step(eps)),
    )?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let (ni, nj) = (a.spec.classes(), a.spec.pools());
    let pert = match args.pert.or(cfg.pert).unwrap_or(PerturbationKind::Zero) {
        PerturbationKind::Zero => Perturbation::zero(ni, nj, eps, sigma)?,
        PerturbationKind::Sinusoid => Perturbation::sinusoid(ni, nj, eps, sigma, sigma / 20.0, 32)?,
        PerturbationKind::RandomWalk => {
            Perturbation::random_walk(ni, nj, eps, sigma, 10.0 * step, eps, seed)?
        }
    };
    let psi_tilde = build_psi_tilde(&a.alloc, &constants, witness, &a.spec, None, eps)?;
    let opts = TrajectoryOptions {
        i0: 0,
        j0: 0,
        step,
        window: constants.gamma2(eps),
    };
    let traj = integrate_trajectory(&a.spec, &a.alloc, &psi_tilde, &pert, opts)?;
    let bounds = verify_theorem3(&traj, &constants, eps);
    println!(
        "eps = {eps}, step = {step}, witness {} (weight {})",
        witness.label(),
        witness.weight
    );
    println!(
        "tau = {} ({}), holds entered = {}",
        traj.tau,
        if traj.tau_tilde == Some(traj.tau) {
            "tau_tilde"
        } else {
            "sigma"
        },
        traj.k_count
    );
    println!(
        "gamma1 = {}, gamma2 = {}, window = {}",
        constants.gamma1(eps),
        constants.gamma2(eps),
        traj.window
    );
    for c in &bounds.checks {
        println!(
            "  [{}] {:<24} measured {:<12.6e} bound {:.6e}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.measured,
            c.bound
        );
    }
    println!(
        "bounds: {}",
        if bounds.passed() {
            "all pass"
        } else {
            "some checks failed"
        }
    );
    ctx.write(
        "trajectory.csv",
        &report::trajectory_csv(&traj, args.stride),
    )?;
    ctx.write_json(
        "fluid.json",
        &report::fluid_json(&constants, &traj, &bounds),
    )?;
    Ok(0)
}

pub fn simulate(args: &SimulateArgs) -> Result<u8, CliError> {
    let ctx = Context::load(&args.common)?;
    let cfg = &ctx.cfg;
    let n = args
        .n
        .or_else(|| cfg.n_list.as_ref().and_then(|v| v.first().copied()))
        .unwrap_or(1600);
    let setup = ctx.setup(n)?;
    let opts = RunOptions {
        horizon: positive("T", args.horizon.or(cfg.horizon).unwrap_or(10.0))?,
        seed: args.seed.or(cfg.seed).unwrap_or(0),
        arrivals: args.arrivals.or(cfg.arrivals).unwrap_or_default(),
        rho: positive("rho", args.rho.or(cfg.rho).unwrap_or(0.6))?,
        record_log: args.log,
        record_psi: false,
        max_events: args.max_events,
    };
    match run(&setup, opts) {
        Ok(out) => {
            let m = &out.metrics;
            println!(
                "n = {n}: {} events, busy fraction {:.4}, n^-rho sup dev {:.4}, K = {}, stopped: {}",
                m.event_count,
                m.busy_fraction,
                m.scaled_sup_dev,
                m.k,
                m.stopped()
            );
            ctx.write("run.csv", &report::run_metrics_csv(std::slice::from_ref(m)))?;
            ctx.write_json("run.json", &report::run_json(m, None))?;
            if args.log {
                ctx.write("runlog.csv", &report::run_log_csv(&out.log))?;
            }
            Ok(0)
        }
        Err(e) => {
            if let Some(m) = e.partial_metrics() {
                ctx.write("run.csv", &report::run_metrics_csv(std::slice::from_ref(m)))?;
                ctx.write_json("run.json", &report::run_json(m, Some(&e.to_string())))?;
            }
            Err(e.into())
        }
    }
}

pub fn sweep(args: &SweepArgs) -> Result<u8, CliError> {
    let ctx = Context::load(&args.common)?;
    let cfg = &ctx.cfg;
    let a = &ctx.analysis;
    let constants = a.constants()?;
    let witness = a.witness()?;
    let n_list = if args.n_list.is_empty() {
        cfg.n_list.clone().unwrap_or_else(|| vec![100, 400, 1600])
    } else {
        args.n_list.clone()
    };
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(CliError::Usage("n values must be positive".into()));
    }
    let sweep_cfg = SweepConfig {
        n_list,
        reps: args.reps.or(cfg.reps).unwrap_or(20),
        horizon: positive("T", args.horizon.or(cfg.horizon).unwrap_or(10.0))?,
        base_seed: args.seed.or(cfg.seed).unwrap_or(0),
        rho: positive("rho", args.rho.or(cfg.rho).unwrap_or(0.6))?,
        arrivals: args.arrivals.or(cfg.arrivals).unwrap_or_default(),
    };
    if sweep_cfg.reps == 0 {
        return Err(CliError::Usage("reps must be positive".into()));
    }
    let table = sim::sweep(&a.spec, &a.alloc, &constants, witness, &sweep_cfg);
    println!(
        "{:>8} {:>9} {:>12} {:>12} {:>8} {:>10}",
        "n", "completed", "busy median", "dev median", "fired", "w p95"
    );
    for s in &table.summaries {
        println!(
            "{:>8} {:>5}/{:<3} {:>12.4} {:>12.4} {:>8.3} {:>10.4}",
            s.n,
            s.completed,
            s.runs,
            s.busy_fraction.median,
            s.scaled_sup_dev.median,
            s.fired_fraction,
            s.w_p95
        );
    }
    ctx.write("sweep.csv", &report::sweep_csv(&table))?;
    ctx.write_json("sweep_summary.json", &report::sweep_summary_json(&table))?;
    ctx.write("plot.csv", &report::plot_csv(&table.summaries))?;
    let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
    match table.rows.iter().find_map(|r| r.error.as_deref()) {
        Some(first) => Err(CliError::RegimeAfterOutput(format!(
            "{failed} of {} runs stopped early; first: {first}",
            table.rows.len()
        ))),
        None => Ok(0),
    }
}

pub fn gen(args: &GenArgs) -> Result<u8, CliError> {
    let spec = match args.builtin {
        Some(id) => builtin_example(id).map_err(|e| CliError::Usage(e.to_string()))?,
        None => {
            random_critical_network(args.classes, args.pools, args.seed)
                .map_err(|e| CliError::Usage(e.to_string()))?
                .spec
        }
    };
    let mut doc = serde_json::to_value(&spec).expect("network serializes");
    if let Value::Object(map) = &mut doc {
        map.insert("schema".into(), Value::String(report::NETWORK.into()));
    }
    let mut text = serde_json::to_string_pretty(&doc).expect("json values serialize");
    text.push('\n');
    match &args.output {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

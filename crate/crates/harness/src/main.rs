use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stoch_acfgm::optimizer::write_records_csv;
use stoch_acfgm::{ScheduleConfig, Stop, Variant};
use stoch_acfgm_harness::acceptance::run_acceptance;
use stoch_acfgm_harness::config::{parse_json, ProblemSource};
use stoch_acfgm_harness::matrix::{compare, run_matrix, write_matrix_outputs};
use stoch_acfgm_harness::run::{bundled_problem, run_config, write_outputs};
use stoch_acfgm_harness::{ExperimentMatrix, HarnessError, Method, Result, RunConfig, RunFlags};

#[derive(Parser, Debug)]
#[command(name = "stoch-acfgm", version, about = "Stochastic AC-FGM runs, comparisons and acceptance checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one configuration (or the bundled quadratic when no config is given).
    Run,
    /// Run an experiment matrix and merge the trajectories.
    Compare,
    /// Run the acceptance suite.
    Verify,
    /// Write a problem JSON from a generator spec.
    GenProblem,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    A,
    B,
    C,
    Hp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args, Debug)]
struct Flags {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    eta1: Option<f64>,
    #[arg(long, global = true)]
    dtilde: Option<f64>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

fn default_config() -> RunConfig {
    let (spec, seed) = bundled_problem();
    RunConfig {
        problem: ProblemSource {
            path: None,
            generate: Some(spec),
            seed,
        },
        method: Method::Acfgm,
        schedule: Some(ScheduleConfig::new(Variant::A, 0.125, 0.5, 1.0, None)),
        stop: Stop::Iterations(100),
        seeds: vec![1],
        outputs: None,
        emit: vec![stoch_acfgm_harness::Emit::Csv],
        options: RunFlags::default(),
    }
}

/// Applies command-line overrides to a parsed (or default) configuration.
fn apply_flags(cfg: &mut RunConfig, f: &Flags) -> Result<()> {
    if let Some(seed) = f.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(n) = f.n {
        cfg.stop = match cfg.stop {
            Stop::TargetGap { epsilon, .. } => Stop::TargetGap {
                epsilon,
                max_iterations: n,
            },
            Stop::Iterations(_) => Stop::Iterations(n),
        };
    }
    if let Some(out) = &f.out {
        cfg.outputs = Some(out.clone());
    }
    let touches_schedule =
        f.variant.is_some() || f.beta.is_some() || f.eta1.is_some() || f.dtilde.is_some() || f.lambda.is_some() || f.n.is_some();
    if touches_schedule {
        let s = cfg.schedule.get_or_insert_with(|| ScheduleConfig::new(Variant::A, 0.125, 0.5, 1.0, None));
        if let Some(v) = f.variant {
            let lambda = match s.variant {
                Variant::Hp { lambda } => lambda,
                _ => 1.0,
            };
            s.variant = match v {
                VariantArg::A => Variant::A,
                VariantArg::B => Variant::B,
                VariantArg::C => Variant::C,
                VariantArg::Hp => Variant::Hp { lambda },
            };
            if v != VariantArg::A && f.beta.is_none() && s.beta >= 0.125 {
                s.beta = 0.12;
            }
        }
        if let Some(l) = f.lambda {
            match &mut s.variant {
                Variant::Hp { lambda } => *lambda = l,
                _ => return Err(HarnessError::config("--lambda: only meaningful with --variant hp")),
            }
        }
        if let Some(b) = f.beta {
            s.beta = b;
        }
        if let Some(e) = f.eta1 {
            s.eta1 = e;
        }
        if let Some(d) = f.dtilde {
            s.d_tilde = d;
        }
        if f.n.is_some() && s.variant == Variant::A {
            s.horizon = None;
        }
        if s.variant == Variant::C && s.horizon.is_none() {
            s.horizon = Some(cfg.stop.max_iterations());
        }
    }
    cfg.fill_defaults();
    cfg.validate()
}

fn cmd_run(f: &Flags) -> Result<()> {
    let mut cfg = match &f.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            parse_json::<RunConfig>(&text)?
        }
        None => default_config(),
    };
    apply_flags(&mut cfg, f)?;
    if let (Some(_), Some(Format::Json)) = (&cfg.outputs, f.format) {
        cfg.emit.push(stoch_acfgm_harness::Emit::Json);
        cfg.fill_defaults();
    }
    let problem = cfg.problem.load()?;
    let runs = run_config(&problem, &cfg)?;
    match &cfg.outputs {
        Some(dir) => {
            for p in write_outputs(&cfg, &runs, dir)? {
                log::info!("wrote {}", p.display());
            }
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            match f.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    for r in &runs {
                        write_records_csv(&r.output.records, &mut lock)?;
                    }
                }
                Format::Json => {
                    let docs: Vec<_> = runs
                        .iter()
                        .map(|r| serde_json::json!({ "seed": r.seed, "summary": r.output.summary, "records": r.output.records }))
                        .collect();
                    serde_json::to_writer_pretty(&mut lock, &docs)?;
                    writeln!(lock).map_err(|e| HarnessError::io("<stdout>", e))?;
                }
            }
        }
    }
    for r in &runs {
        let s = &r.output.summary;
        eprintln!(
            "seed {}: {} iterations, {} oracle calls, final gap {}",
            r.seed,
            s.iterations,
            s.total_calls,
            s.final_gap.map_or("n/a".into(), |g| format!("{g:.6e}"))
        );
    }
    Ok(())
}

fn cmd_compare(f: &Flags) -> Result<()> {
    let path = f
        .config
        .as_ref()
        .ok_or_else(|| HarnessError::config("--config: compare needs a matrix file"))?;
    let mut m = ExperimentMatrix::load(path)?;
    if let Some(out) = &f.out {
        m.outputs = Some(out.clone());
    }
    let problem = m.runs[0].config.problem.load()?;
    let cells = run_matrix(&problem, &m)?;
    let dir = m.outputs.clone().unwrap_or_else(|| PathBuf::from("."));
    for p in write_matrix_outputs(&m, &cells, &dir)? {
        log::info!("wrote {}", p.display());
    }
    let cmp = compare(&cells, m.budget_axis);
    eprintln!("shared budget: {} ({:?})", cmp.budget, cmp.budget_axis);
    for l in &cmp.labels {
        eprintln!(
            "{}: mean gap {}",
            l.label,
            l.mean_gap.map_or("n/a".into(), |g| format!("{g:.6e}"))
        );
    }
    Ok(())
}

fn cmd_verify() -> Result<()> {
    let results = run_acceptance()?;
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Acceptance(format!("criteria {} failed", failed.join(", "))))
    }
}

fn cmd_gen_problem(f: &Flags) -> Result<()> {
    let source = match &f.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            let mut s: ProblemSource = parse_json(&text)?;
            if s.generate.is_none() {
                return Err(HarnessError::config("generate: gen-problem needs a generator spec"));
            }
            s.path = None;
            s
        }
        None => {
            let (spec, seed) = bundled_problem();
            ProblemSource {
                path: None,
                generate: Some(spec),
                seed,
            }
        }
    };
    let seed = f.seed.unwrap_or(source.seed);
    let problem = source.generate.as_ref().expect("checked above").build(seed)?;
    match &f.out {
        Some(path) => problem.save(path)?,
        None => println!("{}", problem.to_json()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run => cmd_run(&cli.flags),
        Command::Compare => cmd_compare(&cli.flags),
        Command::Verify => cmd_verify(),
        Command::GenProblem => cmd_gen_problem(&cli.flags),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use maestrino::bench::{run_bench, BenchGrid};
use maestrino::codegen::{compile_project, export_c_project, run_native, CodegenError, GeneratedProject};
use maestrino::dse::{genetic_search, run_dse, DesignSpace, DesignStatus, DseError, DseReport, Engine, GeneticOptions};
use maestrino::master::{build_plan, interpret_plan, PlanError, RunError, RuntimeConfig, SimulationPlan};
use maestrino::multimodel::{
    load_cosim_config, load_multimodel, validate_multimodel, watertank_demo, Algorithm, CoSimConfig, ConfigError,
    ModelResolver,
};

#[derive(Parser)]
#[command(name = "maestrino", version, about = "Fixed-step co-simulation, C export and design space exploration")]
struct Cli {
    /// More log output (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a simulation plan from a multi-model and a co-simulation config
    Import {
        mm: PathBuf,
        coe: PathBuf,
        #[arg(long, default_value = "plan.mabl.json")]
        output: PathBuf,
    },
    /// Run a plan in-process
    Interpret {
        plan: PathBuf,
        #[arg(long)]
        runtime: PathBuf,
    },
    /// Write the plan as a C project
    ExportC {
        plan: PathBuf,
        #[arg(long, default_value = "native")]
        output: PathBuf,
    },
    /// Compile an exported C project
    Build { dir: PathBuf },
    /// Run a compiled simulator
    RunNative {
        dir: PathBuf,
        #[arg(long)]
        runtime: PathBuf,
    },
    /// Explore a design space
    Dse(DseArgs),
    /// Time interpreted against native exploration over a grid
    Bench(BenchArgs),
}

#[derive(Args)]
struct DseArgs {
    config: PathBuf,
    mm: PathBuf,
    coe: PathBuf,
    #[arg(long, default_value = "dse-out")]
    output: PathBuf,
    /// Base runtime file; design parameters are layered on top
    #[arg(long)]
    runtime: Option<PathBuf>,
    #[arg(long)]
    engine: Option<Engine>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Genetic search instead of exhaustive enumeration
    #[arg(long)]
    genetic: bool,
    #[arg(long, default_value_t = 8)]
    population: usize,
    #[arg(long, default_value_t = 5)]
    generations: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "bench-out")]
    output: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 10, 100, 500, 1000])]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0f64, 10.0, 100.0, 1000.0, 10000.0])]
    end_times: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values = ["interpreted", "native"])]
    engines: Vec<Engine>,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Multi-model to benchmark (default: the built-in water tank)
    #[arg(long, requires = "coe")]
    mm: Option<PathBuf>,
    #[arg(long, requires = "mm")]
    coe: Option<PathBuf>,
}

/// A problem with the user's input rather than with running it.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl fmt::Display) -> anyhow::Error {
    Usage(e.to_string()).into()
}

/// 1 for configuration and validation errors, 2 for failures while running.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() || cause.is::<ConfigError>() || cause.is::<PlanError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<RunError>() {
            return if e.is_config() { 1 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<DseError>() {
            return if e.is_config() { 1 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<CodegenError>() {
            return match e {
                CodegenError::Plan(_) | CodegenError::ToolchainNotFound { .. } => 1,
                _ => 2,
            };
        }
    }
    2
}

fn load_plan(path: &Path) -> Result<SimulationPlan> {
    SimulationPlan::load(path).map_err(usage)
}

fn load_runtime(path: &Path) -> Result<RuntimeConfig> {
    RuntimeConfig::load(path).map_err(usage)
}

fn import(mm: &Path, coe: &Path) -> Result<SimulationPlan> {
    let mm = load_multimodel(mm).with_context(|| format!("multi-model {}", mm.display()))?;
    let coe = load_cosim_config(coe).with_context(|| format!("co-simulation config {}", coe.display()))?;
    Ok(build_plan(&mm, &coe))
}

fn cmd_import(mm: &Path, coe: &Path, output: &Path) -> Result<()> {
    let plan = import(mm, coe)?;
    plan.save(output).map_err(|e| anyhow::anyhow!("{e}"))?;
    println!("wrote {} ({} instances, fingerprint {})", output.display(), plan.instances.len(), &plan.fingerprint()[..12]);
    Ok(())
}

fn cmd_interpret(plan: &Path, runtime: &Path) -> Result<()> {
    let plan = load_plan(plan)?;
    let rt = load_runtime(runtime)?;
    let table = interpret_plan(&plan, &rt)?;
    for w in &rt.data_writers {
        println!("wrote {} ({} rows)", w.filename.display(), table.len());
    }
    Ok(())
}

fn cmd_export(plan: &Path, output: &Path) -> Result<()> {
    let plan = load_plan(plan)?;
    let project = export_c_project(&plan, output)?;
    println!("exported {} files to {}", project.files.len(), project.root.display());
    Ok(())
}

fn cmd_build(dir: &Path) -> Result<()> {
    let project = GeneratedProject::open(dir).map_err(usage)?;
    let (exe, report) = compile_project(&project)?;
    let secs = |d: Option<std::time::Duration>| d.map_or("-".to_string(), |d| format!("{:.3}s", d.as_secs_f64()));
    println!(
        "built {} (configure {:.3}s, compile {}, recompile {})",
        exe.display(),
        report.configure.as_secs_f64(),
        secs(report.compile),
        secs(report.recompile)
    );
    Ok(())
}

fn cmd_run_native(dir: &Path, runtime: &Path) -> Result<()> {
    let project = GeneratedProject::open(dir).map_err(usage)?;
    let exe = project.executable();
    if !exe.is_file() {
        return Err(usage(format!("{} is not built; run `maestrino build {}` first", exe.display(), dir.display())));
    }
    load_runtime(runtime)?;
    let run = run_native(&exe, runtime)?;
    for out in &run.outputs {
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn print_report(report: &DseReport) {
    if let Some(b) = &report.build {
        println!(
            "native build: generate {:.3}s, compile {:.3}s",
            b.generate.as_secs_f64(),
            b.toolchain.compile.or(b.toolchain.recompile).unwrap_or_default().as_secs_f64()
        );
    }
    println!(
        "{} designs evaluated in {:.3}s, {} failed",
        report.entries.len(),
        report.total_wall_time,
        report.failures()
    );
    if let Some(best) = report.best().filter(|b| b.status == DesignStatus::Ok) {
        let params: Vec<String> = best.assignment.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
        println!("best: design {} ({})", best.index, params.join(", "));
    }
}

fn cmd_dse(args: &DseArgs) -> Result<()> {
    let mut space = DesignSpace::load(&args.config)?;
    if let Some(e) = args.engine {
        space.engine = e;
    }
    if let Some(p) = args.parallelism {
        space.parallelism = p;
    }
    if let Some(s) = args.seed {
        space.seed = s;
    }
    space.validate()?;
    let plan = import(&args.mm, &args.coe)?;
    let base = match &args.runtime {
        Some(p) => load_runtime(p)?,
        None => RuntimeConfig::new("results.csv"),
    };
    let report = if args.genetic {
        let opts = GeneticOptions {
            population: args.population,
            generations: args.generations,
        };
        genetic_search(&space, &plan, &base, &args.output, opts)?
    } else {
        run_dse(&space, &plan, &base, &args.output)?
    };
    let report_path = args.output.join("report.csv");
    report.write_csv(&report_path)?;
    print_report(&report);
    println!("wrote {}", report_path.display());
    if report.failures() == report.entries.len() {
        anyhow::bail!("every design failed; see {}", report_path.display());
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let grid = BenchGrid {
        sizes: args.sizes.clone(),
        end_times: args.end_times.clone(),
        engines: args.engines.clone(),
        repetitions: args.repetitions,
        parallelism: args.parallelism,
    };
    grid.validate()?;
    let plan = match (&args.mm, &args.coe) {
        (Some(mm), Some(coe)) => import(mm, coe)?,
        _ => {
            let mm = validate_multimodel(watertank_demo(), &ModelResolver::builtin_only())?;
            let coe = CoSimConfig {
                algorithm: Algorithm::FixedStep { size: 0.1 },
                start_time: 0.0,
                end_time: 60.0,
            };
            build_plan(&mm, &coe)
        }
    };
    let report = run_bench(&grid, &plan, &args.output)?;
    report.write(&grid, &args.output)?;
    for c in &report.cells {
        println!(
            "size {:>5}  end {:>8}  {:<11} median {:.4}s",
            c.size,
            format!("{:?}", c.end_time),
            c.engine.to_string(),
            c.median().as_secs_f64()
        );
    }
    if let Some(o) = &report.overheads {
        println!(
            "generate {:.3}s, configure {:.3}s, compile {:.3}s, recompile {:.3}s",
            o.generate.as_secs_f64(),
            o.configure.as_secs_f64(),
            o.compile.as_secs_f64(),
            o.recompile.as_secs_f64()
        );
    }
    println!("wrote results to {}", args.output.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Import { mm, coe, output } => cmd_import(mm, coe, output),
        Command::Interpret { plan, runtime } => cmd_interpret(plan, runtime),
        Command::ExportC { plan, output } => cmd_export(plan, output),
        Command::Build { dir } => cmd_build(dir),
        Command::RunNative { dir, runtime } => cmd_run_native(dir, runtime),
        Command::Dse(args) => cmd_dse(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

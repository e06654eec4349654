//! Timing harness comparing interpreted and native design space exploration
//! over a grid of design-space sizes and simulated durations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::codegen::{compile_with, export_c_project, Toolchain};
use crate::dse::{enumerate_designs, run_designs, DesignPoint, DesignSpace, DseError, Engine, Executor, ParameterSweep};
use crate::master::{RuntimeConfig, SimulationPlan};

pub const MIN_KEY: &str = "crtlInstance.minLevel";
pub const MAX_KEY: &str = "crtlInstance.maxLevel";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchGrid {
    pub sizes: Vec<usize>,
    pub end_times: Vec<f64>,
    pub engines: Vec<Engine>,
    pub repetitions: usize,
    pub parallelism: usize,
}

impl Default for BenchGrid {
    fn default() -> Self {
        BenchGrid {
            sizes: vec![1, 10, 100, 500, 1000],
            end_times: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
            engines: vec![Engine::Interpreted, Engine::Native],
            repetitions: 3,
            parallelism: 1,
        }
    }
}

impl BenchGrid {
    pub fn validate(&self) -> Result<(), DseError> {
        let err = |m: &str| Err(DseError::Config(m.to_string()));
        if self.sizes.is_empty() || self.end_times.is_empty() || self.engines.is_empty() {
            return err("bench grid needs at least one size, end time and engine");
        }
        if self.sizes.contains(&0) {
            return err("design space sizes must be positive");
        }
        if self.end_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return err("end times must be finite and non-negative");
        }
        if self.repetitions == 0 || self.parallelism == 0 {
            return err("repetitions and parallelism must be at least 1");
        }
        Ok(())
    }
}

fn spread(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    (0..k)
        .map(|i| {
            let f = i as f64 / (k - 1) as f64;
            lo * (1.0 - f) + hi * f
        })
        .collect()
}

/// A space of exactly `size` designs: `minLevel` over [0.1, 0.9] and
/// `maxLevel` over [1.1, 2.9], enumeration truncated to `size`.
pub fn bench_designs(size: usize) -> Result<(DesignSpace, Vec<DesignPoint>), DseError> {
    let k1 = (size as f64).sqrt().ceil() as usize;
    let k2 = size.div_ceil(k1);
    let mut space = DesignSpace::new(vec![
        ParameterSweep::list(MIN_KEY, spread(0.1, 0.9, k1)),
        ParameterSweep::list(MAX_KEY, spread(1.1, 2.9, k2)),
    ]);
    space.constraints.push(format!("{MIN_KEY} < {MAX_KEY}").parse().map_err(DseError::Config)?);
    let mut designs = enumerate_designs(&space)?;
    designs.truncate(size);
    Ok((space, designs))
}

/// One-time native costs.
#[derive(Debug, Clone, Default)]
pub struct Overheads {
    pub generate: Duration,
    pub configure: Duration,
    pub compile: Duration,
    pub recompile: Duration,
}

#[derive(Debug, Clone)]
pub struct CellTiming {
    pub size: usize,
    pub end_time: f64,
    pub engine: Engine,
    pub samples: Vec<Duration>,
    pub failures: usize,
}

impl CellTiming {
    pub fn median(&self) -> Duration {
        let mut s = self.samples.clone();
        s.sort();
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub cells: Vec<CellTiming>,
    pub overheads: Option<Overheads>,
}

impl BenchReport {
    fn median_of(&self, size: usize, end: f64, engine: Engine) -> Option<Duration> {
        self.cells
            .iter()
            .find(|c| c.size == size && c.end_time == end && c.engine == engine)
            .map(CellTiming::median)
    }

    /// Interpreted over native median time per (end time, size).
    pub fn speedups(&self) -> BTreeMap<(u64, usize), f64> {
        let mut out = BTreeMap::new();
        for c in self.cells.iter().filter(|c| c.engine == Engine::Native) {
            if let (Some(i), Some(n)) = (
                self.median_of(c.size, c.end_time, Engine::Interpreted),
                self.median_of(c.size, c.end_time, Engine::Native),
            ) {
                out.insert((c.end_time.to_bits(), c.size), i.as_secs_f64() / n.as_secs_f64());
            }
        }
        out
    }

    pub fn bench_csv(&self) -> String {
        let mut s = String::from("size,end_time,engine,repetitions,median_s,failures\n");
        for c in &self.cells {
            writeln!(
                s,
                "{},{:?},{},{},{:.6},{}",
                c.size,
                c.end_time,
                c.engine,
                c.samples.len(),
                c.median().as_secs_f64(),
                c.failures
            )
            .unwrap();
        }
        s
    }

    /// Rows are end times, columns design-space sizes.
    pub fn speedup_csv(&self, grid: &BenchGrid) -> String {
        let ratios = self.speedups();
        let mut s = String::from("end_time");
        for size in &grid.sizes {
            write!(s, ",{size}").unwrap();
        }
        s.push('\n');
        for end in &grid.end_times {
            write!(s, "{end:?}").unwrap();
            for size in &grid.sizes {
                match ratios.get(&(end.to_bits(), *size)) {
                    Some(r) => write!(s, ",{r:.3}").unwrap(),
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn overhead_csv(&self) -> Option<String> {
        let o = self.overheads.as_ref()?;
        let mut s = String::from("phase,seconds\n");
        for (name, d) in [
            ("generate", o.generate),
            ("configure", o.configure),
            ("compile", o.compile),
            ("recompile", o.recompile),
        ] {
            writeln!(s, "{name},{:.6}", d.as_secs_f64()).unwrap();
        }
        Some(s)
    }

    pub fn write(&self, grid: &BenchGrid, out_dir: &Path) -> Result<(), DseError> {
        let put = |name: &str, text: &str| {
            let path = out_dir.join(name);
            fs::write(&path, text).map_err(|source| DseError::Io { path, source })
        };
        put("bench.csv", &self.bench_csv())?;
        if self.cells.iter().any(|c| c.engine == Engine::Native) && self.cells.iter().any(|c| c.engine == Engine::Interpreted) {
            put("speedup.csv", &self.speedup_csv(grid))?;
        }
        if let Some(o) = self.overhead_csv() {
            put("overhead.csv", &o)?;
        }
        Ok(())
    }
}

/// Generates and builds the plan, then re-exports it with another end time
/// and rebuilds to time a recompile. The final build matches `plan`.
fn build_for_bench(plan: &SimulationPlan, dir: &Path) -> Result<(PathBuf, Overheads), DseError> {
    let started = Instant::now();
    let project = export_c_project(plan, dir)?;
    let generate = started.elapsed();
    let started = Instant::now();
    let toolchain = Toolchain::discover()?;
    let configure = started.elapsed();
    let (_, first) = compile_with(&project, &toolchain, configure)?;

    let mut changed = plan.clone();
    changed.end_time = plan.end_time + 1.0;
    let tmp = export_c_project(&changed, dir)?;
    let (_, second) = compile_with(&tmp, &toolchain, configure)?;
    let project = export_c_project(plan, dir)?;
    let (exe, _) = compile_with(&project, &toolchain, configure)?;
    let pick = |r: &crate::codegen::ToolchainReport| r.compile.or(r.recompile).unwrap_or_default();
    Ok((
        exe,
        Overheads {
            generate,
            configure,
            compile: pick(&first),
            recompile: pick(&second),
        },
    ))
}

/// Runs every (size, end time, engine) cell `repetitions` times, one cell
/// after the other. `plan` supplies the model and step size; each cell
/// overrides the end time through the runtime file.
pub fn run_bench(grid: &BenchGrid, plan: &SimulationPlan, out_dir: &Path) -> Result<BenchReport, DseError> {
    grid.validate()?;
    fs::create_dir_all(out_dir).map_err(|source| DseError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut overheads = None;
    let mut native = None;
    if grid.engines.contains(&Engine::Native) {
        let (exe, o) = build_for_bench(plan, &out_dir.join("native"))?;
        overheads = Some(o);
        native = Some(Executor::Native { executable: exe });
    }
    let mut cells = Vec::new();
    for &size in &grid.sizes {
        let (mut space, designs) = bench_designs(size)?;
        space.parallelism = grid.parallelism;
        for &end in &grid.end_times {
            let mut rt = RuntimeConfig::new("unused.csv");
            rt.end_time = Some(end);
            for &engine in &grid.engines {
                let executor = match engine {
                    Engine::Interpreted => Executor::Interpreted,
                    Engine::Native => native.clone().expect("built above"),
                };
                let dir = out_dir.join(format!("runs/{engine}_{size}_{end}"));
                let mut samples = Vec::with_capacity(grid.repetitions);
                let mut failures = 0;
                for _ in 0..grid.repetitions {
                    let started = Instant::now();
                    let report = run_designs(&space, &designs, plan, &rt, &dir, &executor)?;
                    samples.push(started.elapsed());
                    failures += report.failures();
                }
                log::info!("bench size={size} end={end} engine={engine} done");
                cells.push(CellTiming {
                    size,
                    end_time: end,
                    engine,
                    samples,
                    failures,
                });
            }
        }
    }
    Ok(BenchReport { cells, overheads })
}

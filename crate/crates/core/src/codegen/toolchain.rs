use std::env;
use std::ffi::{OsStr, OsString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use super::{executable_name, CodegenError, GeneratedProject};
use crate::master::{RunError, RuntimeConfig};

const CC_CANDIDATES: [&str; 3] = ["cc", "gcc", "clang"];
const MAKE_CANDIDATES: [&str; 3] = ["make", "gmake", "mingw32-make"];

/// C compiler and make program used to build generated projects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Toolchain {
    pub cc: PathBuf,
    pub make: PathBuf,
}

/// Timings of one build. `compile` is set for a first build, `recompile`
/// when an executable already existed.
#[derive(Debug, Clone, Default)]
pub struct ToolchainReport {
    pub configure: Duration,
    pub compile: Option<Duration>,
    pub recompile: Option<Duration>,
    pub status: i32,
}

fn find_on_path(name: &OsStr, path: Option<&OsStr>) -> Option<PathBuf> {
    let as_path = Path::new(name);
    if as_path.components().count() > 1 {
        return as_path.is_file().then(|| as_path.to_path_buf());
    }
    let dirs = env::split_paths(path?);
    for dir in dirs {
        let candidate = dir.join(name);
        if candidate.is_file() {
            return Some(candidate);
        }
        if cfg!(windows) {
            let exe = candidate.with_extension("exe");
            if exe.is_file() {
                return Some(exe);
            }
        }
    }
    None
}

fn probe(
    tool: &'static str,
    preferred: Option<&OsStr>,
    candidates: &[&str],
    path: Option<&OsStr>,
) -> Result<PathBuf, CodegenError> {
    let mut probed = Vec::new();
    let names = preferred
        .map(OsString::from)
        .into_iter()
        .chain(candidates.iter().map(OsString::from));
    for name in names {
        if let Some(found) = find_on_path(&name, path) {
            return Ok(found);
        }
        probed.push(name.to_string_lossy().into_owned());
    }
    Err(CodegenError::ToolchainNotFound { tool, probed })
}

impl Toolchain {
    /// Uses `$CC` and `$MAKE` when set, otherwise the first of the usual
    /// names found on `$PATH`.
    pub fn discover() -> Result<Toolchain, CodegenError> {
        let cc = env::var_os("CC");
        let make = env::var_os("MAKE");
        let path = env::var_os("PATH");
        Self::discover_in(cc.as_deref(), make.as_deref(), path.as_deref())
    }

    pub fn discover_in(
        cc: Option<&OsStr>,
        make: Option<&OsStr>,
        path: Option<&OsStr>,
    ) -> Result<Toolchain, CodegenError> {
        let cc = probe("C compiler", cc.filter(|s| !s.is_empty()), &CC_CANDIDATES, path)?;
        let make = probe("make", make.filter(|s| !s.is_empty()), &MAKE_CANDIDATES, path)?;
        log::debug!("toolchain: cc={} make={}", cc.display(), make.display());
        Ok(Toolchain { cc, make })
    }
}

/// Discovers the toolchain (timed as the configure phase) and builds.
pub fn compile_project(project: &GeneratedProject) -> Result<(PathBuf, ToolchainReport), CodegenError> {
    let started = Instant::now();
    let toolchain = Toolchain::discover()?;
    compile_with(project, &toolchain, started.elapsed())
}

/// Runs `make` in the project directory. Compiler diagnostics are returned
/// in the error when the build fails.
pub fn compile_with(
    project: &GeneratedProject,
    toolchain: &Toolchain,
    configure: Duration,
) -> Result<(PathBuf, ToolchainReport), CodegenError> {
    let exe = project.executable();
    let existed = exe.is_file();
    let started = Instant::now();
    let output = Command::new(&toolchain.make)
        .arg("-C")
        .arg(&project.root)
        .arg(format!("CC={}", toolchain.cc.display()))
        .arg(format!("EXE={}", executable_name()))
        .output()
        .map_err(|source| CodegenError::Io {
            path: toolchain.make.clone(),
            source,
        })?;
    let elapsed = started.elapsed();
    if !output.status.success() {
        let mut diagnostics = String::from_utf8_lossy(&output.stderr).into_owned();
        diagnostics.push_str(&String::from_utf8_lossy(&output.stdout));
        return Err(CodegenError::Compile {
            status: output.status.code(),
            diagnostics,
        });
    }
    let report = ToolchainReport {
        configure,
        compile: (!existed).then_some(elapsed),
        recompile: existed.then_some(elapsed),
        status: output.status.code().unwrap_or(0),
    };
    Ok((exe, report))
}

/// Outcome of a successful native run.
#[derive(Debug, Clone)]
pub struct NativeRun {
    pub status: i32,
    pub outputs: Vec<PathBuf>,
    pub elapsed: Duration,
}

/// Runs a compiled simulator with `-runtime <file>`. A nonzero exit is
/// returned as [`RunError::Native`] with the simulator's stderr.
pub fn run_native(executable: &Path, runtime: &Path) -> Result<NativeRun, RunError> {
    let started = Instant::now();
    let output = Command::new(executable)
        .arg("-runtime")
        .arg(runtime)
        .output()
        .map_err(|source| RunError::Io {
            path: executable.to_path_buf(),
            source,
        })?;
    let elapsed = started.elapsed();
    if !output.status.success() {
        return Err(RunError::Native {
            code: output.status.code(),
            stderr: String::from_utf8_lossy(&output.stderr).trim_end().to_string(),
        });
    }
    let outputs = RuntimeConfig::load(runtime)
        .map(|rt| rt.data_writers.into_iter().map(|w| w.filename).collect())
        .unwrap_or_default();
    Ok(NativeRun {
        status: 0,
        outputs,
        elapsed,
    })
}

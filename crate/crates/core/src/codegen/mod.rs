//! Export of a plan as a standalone C project, and building and running it.
//!
//! The generated directory holds `co-sim.c` (plan specific), the support
//! runtime sources (identical for every plan) and a `Makefile`. Files are
//! only rewritten when their content changes, so `make` recompiles just the
//! plan-specific object when a plan is re-exported into the same directory.

mod emit;
mod toolchain;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::master::{PlanError, SimulationPlan};

pub use emit::emit_cosim_c;
pub use toolchain::{compile_project, compile_with, run_native, NativeRun, Toolchain, ToolchainReport};

pub const MAIN_SOURCE: &str = "co-sim.c";

/// Support runtime shipped with every generated project.
pub const RUNTIME_SOURCES: [(&str, &str); 3] = [
    ("maestrino_rt.h", include_str!("../../native/maestrino_rt.h")),
    ("maestrino_rt.c", include_str!("../../native/maestrino_rt.c")),
    ("maestrino_models.c", include_str!("../../native/maestrino_models.c")),
];

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("no {tool} found (tried {})", probed.join(", "))]
    ToolchainNotFound { tool: &'static str, probed: Vec<String> },
    #[error("build failed ({}):\n{diagnostics}", status.map_or("signal".to_string(), |c| format!("exit status {c}")))]
    Compile {
        status: Option<i32>,
        diagnostics: String,
    },
}

/// A generated C project on disk.
#[derive(Debug, Clone)]
pub struct GeneratedProject {
    pub root: PathBuf,
    pub files: Vec<PathBuf>,
    pub fingerprint: String,
}

impl GeneratedProject {
    /// Reopens a directory written by [`export_c_project`].
    pub fn open(dir: &Path) -> Result<GeneratedProject, CodegenError> {
        let main = dir.join(MAIN_SOURCE);
        let text = fs::read_to_string(&main).map_err(|source| CodegenError::Io {
            path: main.clone(),
            source,
        })?;
        let fingerprint = text
            .lines()
            .find_map(|l| l.strip_prefix(" * plan fingerprint: "))
            .and_then(|rest| rest.strip_suffix(" */"))
            .ok_or_else(|| CodegenError::Io {
                path: main,
                source: io::Error::new(io::ErrorKind::InvalidData, "not a generated maestrino source"),
            })?
            .to_string();
        let files = RUNTIME_SOURCES
            .iter()
            .map(|(name, _)| *name)
            .chain([MAIN_SOURCE, "Makefile"])
            .map(|name| dir.join(name))
            .collect::<Vec<_>>();
        if let Some(missing) = files.iter().find(|f| !f.is_file()) {
            return Err(CodegenError::Io {
                path: missing.clone(),
                source: io::Error::new(io::ErrorKind::NotFound, "missing from the generated project"),
            });
        }
        Ok(GeneratedProject {
            root: dir.to_path_buf(),
            files,
            fingerprint,
        })
    }

    /// Path of the simulator produced by `make`.
    pub fn executable(&self) -> PathBuf {
        self.root.join(executable_name())
    }
}

pub fn executable_name() -> &'static str {
    if cfg!(windows) {
        "sim.exe"
    } else {
        "sim"
    }
}

/// Makefile text. `CC` and `EXE` are overridden on the command line by
/// [`compile_project`].
pub fn emit_makefile() -> String {
    let objs = ["co-sim.o", "maestrino_rt.o", "maestrino_models.o"];
    let mut out = String::from(
        "# Generated by maestrino.\n\
         CC ?= cc\n\
         CFLAGS = -std=c11 -O2 -Wall -Wextra -Werror -pedantic -ffp-contract=off\n\
         LDLIBS = -lm\n\
         EXE = sim\n",
    );
    out.push_str(&format!("OBJS = {}\n\n", objs.join(" ")));
    out.push_str("$(EXE): $(OBJS)\n\t$(CC) -o $@ $(OBJS) $(LDLIBS)\n\n");
    for obj in objs {
        let src = obj.replace(".o", ".c");
        out.push_str(&format!(
            "{obj}: {src} maestrino_rt.h\n\t$(CC) $(CFLAGS) -c {src} -o {obj}\n\n"
        ));
    }
    out.push_str("clean:\n\trm -f $(OBJS) $(EXE)\n\n.PHONY: clean\n");
    out
}

fn write_if_changed(path: &Path, content: &str) -> Result<(), CodegenError> {
    if fs::read(path).is_ok_and(|old| old == content.as_bytes()) {
        return Ok(());
    }
    fs::write(path, content).map_err(|source| CodegenError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the C project for `plan` into `out_dir`. The same plan always
/// produces byte-identical files.
pub fn export_c_project(plan: &SimulationPlan, out_dir: &Path) -> Result<GeneratedProject, CodegenError> {
    plan.validate()?;
    fs::create_dir_all(out_dir).map_err(|source| CodegenError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    let mut put = |name: &str, content: &str| -> Result<(), CodegenError> {
        let path = out_dir.join(name);
        write_if_changed(&path, content)?;
        files.push(path);
        Ok(())
    };
    for (name, content) in RUNTIME_SOURCES {
        put(name, content)?;
    }
    put(MAIN_SOURCE, &emit_cosim_c(plan))?;
    put("Makefile", &emit_makefile())?;
    log::info!("exported C project to {}", out_dir.display());
    Ok(GeneratedProject {
        root: out_dir.to_path_buf(),
        files,
        fingerprint: plan.fingerprint(),
    })
}

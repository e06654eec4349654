//! Master algorithm: plan construction, runtime configuration, the fixed-step
//! interpreter and CSV results.

mod interpret;
mod plan;
mod results;
mod runtime;

pub(crate) use interpret::resolve_parameters;
pub use interpret::{interpret_plan, simulate, RunError};
pub use plan::{build_plan, parse_plan, serialize_plan, Column, ParameterSlot, PlanError, PlanInstance, SimulationPlan};
pub use results::{csv_write, format_real, ResultsTable};
pub use runtime::{DataWriter, RuntimeConfig, WriterKind};

/// Number of fixed steps between `start` and `end`, rounded to the nearest
/// integer so that `(end - start) / h` landing a hair off an integer neither
/// drops nor adds a step.
pub fn step_count(start: f64, end: f64, h: f64) -> u64 {
    let ratio = (end - start) / h;
    if ratio.is_nan() || ratio <= 0.0 {
        return 0;
    }
    ratio.round() as u64
}

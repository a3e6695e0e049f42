//! Experiment harness for the mixed PINN elasticity benchmark: run
//! configuration, single runs and sweeps with CSV reports, and the oracle
//! self-checks.

pub mod config;
pub mod harness;
pub mod selftest;

pub use config::{ConfigError, RunConfig, Scenario};
pub use harness::{run_scenario, run_sweep, Axis, BenchError, ExperimentReport, RunRecord, RunStatus, SweepPlan};

/// Keeps freed training buffers on the heap instead of returning them to the
/// OS, so each epoch reuses memory rather than faulting in fresh pages.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator thresholds.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
    }
}

//! Scenario configuration, presets, trajectory runs and output formats.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;
pub mod selftest;

pub use config::{parse_config, render_config, ConfigError, InitialStateSpec, PotentialSpec, ScenarioConfig};
pub use output::{read_dump, write_field_dump, write_timeseries, FieldDump, TimeSeriesRow};
pub use presets::{build_initial_state, build_potential, Preset};
pub use run::{check_scenario, initial_spectrum, run_scenario, RunOptions, RunSummary};

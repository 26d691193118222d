//! Declarative scenarios: config parsing, the run driver and metrics.

mod config;
mod metrics;
mod run;

pub use config::{
    parse_config, CenterConfig, ConfigError, ConfigErrors, DatasetConfig, DatasetKind,
    EdgeDefaults, LinkSpec, ModelConfig, NodeConfig, Role, ScenarioConfig, TerminalDefaults,
    CONFIG_FORMAT_HEADER,
};
pub use metrics::{
    EdgeMetrics, EnsembleMetrics, MetricsSummary, PacketMetrics, TrainingMetrics,
    METRICS_FORMAT_HEADER,
};
pub use run::{run_scenario, simulate, ScenarioError, ScenarioRun};

/// Text of the shipped default scenario: one data center behind a gateway,
/// two edge nodes with two terminals each, gigabit links throughout.
pub const DEFAULT_SCENARIO: &str = include_str!("../../scenarios/default.scn");

pub fn default_config() -> ScenarioConfig {
    parse_config(DEFAULT_SCENARIO).expect("shipped default scenario is valid")
}

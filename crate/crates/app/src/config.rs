use std::net::SocketAddr;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use ssdkg_core::reasoning::PromptOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    #[default]
    Template,
    Remote,
}

/// Grounding ablations. Each flag removes one input of the prompt; both off is the full
/// system, `no_litkg` drops retrieved literature, `raw_logs` replaces the Data KG summary
/// with raw daily values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ablation {
    #[serde(default)]
    pub no_litkg: bool,
    #[serde(default)]
    pub raw_logs: bool,
}

impl Ablation {
    pub fn variant(&self) -> &'static str {
        match (self.no_litkg, self.raw_logs) {
            (false, false) => "full",
            (true, false) => "no-literature",
            (false, true) => "raw-logs",
            (true, true) => "raw-logs-no-literature",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Workspace root; every store lives below it.
    pub data_dir: PathBuf,
    pub backend: BackendChoice,
    pub ablation: Ablation,
    pub prompt: PromptOptions,
    /// Days from acceptance to the follow-up check.
    pub followup_horizon_days: i64,
    /// Failure within this many days of the window end labels the window positive.
    pub label_horizon_days: i64,
    /// Seconds between background follow-up runs while serving; 0 disables the worker.
    pub followup_interval_secs: u64,
}

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const FOLLOWUP_HORIZON_DAYS: i64 = 7;
pub const LABEL_HORIZON_DAYS: i64 = 30;
pub const FOLLOWUP_INTERVAL_SECS: u64 = 3600;

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            listen: DEFAULT_LISTEN.parse().expect("valid default address"),
            data_dir: data_dir.into(),
            backend: BackendChoice::Template,
            ablation: Ablation::default(),
            prompt: PromptOptions::default(),
            followup_horizon_days: FOLLOWUP_HORIZON_DAYS,
            label_horizon_days: LABEL_HORIZON_DAYS,
            followup_interval_secs: FOLLOWUP_INTERVAL_SECS,
        }
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};
use spiketrum::itp::DEFAULT_C_MIN;
use spiketrum::{EncoderParams, KernelBankConfig, StreamConfig, Strategy};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ItpConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub strategy: Strategy,
    pub c_min: f64,
}

impl Default for ItpConfig {
    fn default() -> Self {
        ItpConfig {
            k: 3,
            strategy: Strategy::Log,
            c_min: DEFAULT_C_MIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Entropy bin width, seconds.
    pub bin_width: f64,
    /// Entropy analysis window, in bins.
    pub entropy_window: usize,
    /// PSTH bin width for similarity, seconds.
    pub psth_bin_width: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            bin_width: 0.001,
            entropy_window: 16,
            psth_bin_width: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub bank: KernelBankConfig,
    pub encoder: EncoderParams,
    pub itp: ItpConfig,
    pub stream: Option<StreamConfig>,
    pub metrics: MetricsConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            bank: KernelBankConfig::default(),
            encoder: EncoderParams::default(),
            itp: ItpConfig::default(),
            stream: None,
            metrics: MetricsConfig::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: invalid config: {e}", path.display())))
    }

    /// Stream settings, derived from the bank and ITP sections when absent.
    pub fn stream_config(&self) -> StreamConfig {
        self.stream.clone().unwrap_or_else(|| StreamConfig {
            sample_rate: self.bank.sample_rate,
            k: self.itp.k,
            m: self.bank.num_kernels,
            strategy: self.itp.strategy,
            c_min: self.itp.c_min,
            ..StreamConfig::default()
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        self.bank.validate()?;
        self.encoder.validate()?;
        if self.itp.k < 1 {
            return Err(CliError::config("itp.K must be >= 1"));
        }
        if !(self.itp.c_min > 0.0 && self.itp.c_min < 1.0) {
            return Err(CliError::config(format!(
                "itp.c_min must lie in (0, 1), got {}",
                self.itp.c_min
            )));
        }
        if !(self.metrics.bin_width > 0.0 && self.metrics.psth_bin_width > 0.0)
            || self.metrics.entropy_window < 2
        {
            return Err(CliError::config(
                "metrics bin widths must be positive and metrics.entropy_window >= 2",
            ));
        }
        Ok(())
    }
}

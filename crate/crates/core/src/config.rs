use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bandpass::{design_butterworth_bandpass, BandpassDesign, Realization, ORDER};
use crate::error::{Error, Result};
use crate::render::{HeatMapLut, NormalizationParams, Preset};
use crate::temporal::{KernelKind, TemporalKernel};

pub const DEFAULT_FD_HZ: f64 = 1.5;
pub const DEFAULT_FS_HZ: f64 = 30.0;
pub const DEFAULT_BAND_LO_HZ: f64 = 0.9;
pub const DEFAULT_BAND_HI_HZ: f64 = 2.0;

/// Everything needed to build an extraction pipeline.
///
/// `alpha`/`gamma` override the preset's values when given; the `custom`
/// preset requires both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fd_hz: f64,
    pub fs_hz: f64,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub kernel_kind: KernelKind,
    pub realization: Realization,
    pub preset: Preset,
    pub emit_heatmap: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lut_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fd_hz: DEFAULT_FD_HZ,
            fs_hz: DEFAULT_FS_HZ,
            band_lo_hz: DEFAULT_BAND_LO_HZ,
            band_hi_hz: DEFAULT_BAND_HI_HZ,
            alpha: None,
            gamma: None,
            kernel_kind: KernelKind::Dog,
            realization: Realization::Sos,
            preset: Preset::Carotid,
            emit_heatmap: false,
            lut_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn with_preset(preset: Preset) -> Self {
        PipelineConfig {
            preset,
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().replace('\n', " ")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn normalization(&self) -> Result<NormalizationParams> {
        let base = self.preset.params();
        let alpha = self.alpha.or(base.map(|p| p.alpha));
        let gamma = self.gamma.or(base.map(|p| p.gamma));
        match (alpha, gamma) {
            (Some(alpha), Some(gamma)) => NormalizationParams::new(alpha, gamma),
            _ => Err(Error::Config(
                "the custom preset needs both alpha and gamma".into(),
            )),
        }
    }

    pub fn kernel(&self) -> Result<TemporalKernel> {
        TemporalKernel::for_motion(self.kernel_kind, self.fd_hz, self.fs_hz)
    }

    pub fn bandpass(&self) -> Result<BandpassDesign> {
        design_butterworth_bandpass(self.band_lo_hz, self.band_hi_hz, self.fs_hz, ORDER)
    }

    pub fn lut(&self) -> Result<HeatMapLut> {
        match &self.lut_path {
            Some(p) => HeatMapLut::load(p),
            None => Ok(HeatMapLut::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel()?;
        self.bandpass()?;
        self.normalization()?;
        Ok(())
    }

    /// Copy with alpha and gamma written out explicitly, sufficient to
    /// reproduce a run without knowing the preset table.
    pub fn resolved(&self) -> Result<Self> {
        let p = self.normalization()?;
        Ok(PipelineConfig {
            alpha: Some(p.alpha),
            gamma: Some(p.gamma),
            ..self.clone()
        })
    }
}

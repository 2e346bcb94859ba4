//! Visual normalization of the filtered acceleration and heat-map rendering.
//!
//! A pulsation map is `clamp((alpha |I_fa|)^(1/gamma), 0, 255)`; the clamp is
//! applied once, after the power.

use std::path::Path;
use std::str::FromStr;

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, RawFrame, Sample};

pub const CLAMP_LO: f64 = 0.0;
pub const CLAMP_HI: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl NormalizationParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        let p = NormalizationParams { alpha, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(Error::Parameter(format!(
                "alpha must exceed 1, got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Parameter(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Pre-clamp value `(alpha |v|)^(1/gamma)`.
    pub fn gamma_transform(&self, v: f64) -> f64 {
        (self.alpha * v.abs()).powf(1.0 / self.gamma)
    }

    pub fn apply(&self, v: f64) -> f64 {
        self.gamma_transform(v).clamp(CLAMP_LO, CLAMP_HI)
    }
}

/// Named acquisition presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// alpha 38, gamma 0.80
    #[default]
    Carotid,
    /// alpha 20, gamma 0.65
    Radial,
    /// alpha and gamma supplied explicitly
    Custom,
}

impl Preset {
    pub fn params(self) -> Option<NormalizationParams> {
        match self {
            Preset::Carotid => Some(NormalizationParams {
                alpha: 38.0,
                gamma: 0.80,
            }),
            Preset::Radial => Some(NormalizationParams {
                alpha: 20.0,
                gamma: 0.65,
            }),
            Preset::Custom => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Carotid => "carotid",
            Preset::Radial => "radial",
            Preset::Custom => "custom",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "carotid" => Ok(Preset::Carotid),
            "radial" => Ok(Preset::Radial),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::Parameter(format!(
                "unknown preset `{other}` (expected carotid, radial or custom)"
            ))),
        }
    }
}

/// A visualizable pulsation map aligned to an input frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PulsationMap {
    pub frame: Frame<f32>,
    /// Index of the input frame this map describes.
    pub source_frame_index: u64,
    /// Bandpass state was still within its settling period.
    pub settling: bool,
}

impl PulsationMap {
    pub fn width(&self) -> usize {
        self.frame.width()
    }

    pub fn height(&self) -> usize {
        self.frame.height()
    }

    pub fn data(&self) -> &[f32] {
        self.frame.data()
    }

    pub fn mean(&self) -> f64 {
        self.data().iter().map(|&v| f64::from(v)).sum::<f64>() / self.data().len() as f64
    }

    /// 8-bit rendering (rounded) for display and PGM/PNG output.
    pub fn to_u8(&self) -> Frame<u8> {
        self.frame.map(|v| v.round().clamp(0.0, 255.0) as u8)
    }

    pub fn to_raw(&self) -> RawFrame {
        self.frame.map(|v| v.round().clamp(0.0, 255.0) as u16)
    }
}

/// Maps filtered acceleration to a pulsation map.
///
/// Infinite inputs saturate at 255; NaN is rejected with its position.
pub fn normalize<T: Sample>(ifa: &Frame<T>, params: &NormalizationParams) -> Result<PulsationMap> {
    params.validate()?;
    if let Some(i) = ifa.data().iter().position(|v| v.is_nan()) {
        return Err(Error::NonFinite {
            stage: "normalize",
            index: ifa.index,
            x: i % ifa.width(),
            y: i / ifa.width(),
        });
    }
    let alpha = T::from_f64(params.alpha);
    let exponent = T::from_f64(1.0 / params.gamma);
    // inputs at or beyond this magnitude clamp to the top of the range
    let saturate = T::from_f64(CLAMP_HI.powf(params.gamma) / params.alpha);
    let mut data = vec![0.0f32; ifa.len()];
    data.par_chunks_mut(ifa.width())
        .zip(ifa.data().par_chunks(ifa.width()))
        .for_each(|(out, src)| {
            for (o, &v) in out.iter_mut().zip(src) {
                let m = v.abs();
                *o = if m >= saturate {
                    CLAMP_HI as f32
                } else {
                    (alpha * m).powf(exponent).to_f64().min(CLAMP_HI) as f32
                };
            }
        });
    let frame = Frame::with_index(ifa.width(), ifa.height(), ifa.index, ifa.timestamp, data)?;
    Ok(PulsationMap {
        source_frame_index: ifa.index,
        frame,
        settling: false,
    })
}

/// 256-entry color table, entry 0 darkest.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMapLut {
    entries: Vec<[u8; 3]>,
}

const DEFAULT_LUT_CSV: &str = include_str!("../assets/heatmap_lut.csv");

impl Default for HeatMapLut {
    fn default() -> Self {
        Self::from_csv(DEFAULT_LUT_CSV).expect("bundled LUT is valid")
    }
}

fn luma(c: [u8; 3]) -> f64 {
    0.2126 * f64::from(c[0]) + 0.7152 * f64::from(c[1]) + 0.0722 * f64::from(c[2])
}

impl HeatMapLut {
    pub fn new(entries: Vec<[u8; 3]>) -> Result<Self> {
        if entries.len() != 256 {
            return Err(Error::Parameter(format!(
                "heat-map table needs 256 entries, got {}",
                entries.len()
            )));
        }
        let darkest = luma(entries[0]);
        if entries.iter().any(|&c| luma(c) < darkest) {
            return Err(Error::Parameter(
                "heat-map entry 0 must be the darkest".into(),
            ));
        }
        Ok(HeatMapLut { entries })
    }

    /// Parses `r,g,b` rows; a header row is optional.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut entries = Vec::with_capacity(256);
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parameter(format!("heat-map table: {e}")))?;
            if row == 0 && record.get(0).is_some_and(|s| s.parse::<u8>().is_err()) {
                continue;
            }
            if record.len() != 3 {
                return Err(Error::Parameter(format!(
                    "heat-map table row {row}: expected 3 columns"
                )));
            }
            let mut rgb = [0u8; 3];
            for (c, field) in rgb.iter_mut().zip(record.iter()) {
                *c = field.parse().map_err(|e| {
                    Error::Parameter(format!("heat-map table row {row}: `{field}`: {e}"))
                })?;
            }
            entries.push(rgb);
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn get(&self, v: u8) -> [u8; 3] {
        self.entries[v as usize]
    }

    pub fn entries(&self) -> &[[u8; 3]] {
        &self.entries
    }

    /// True when perceived lightness never decreases along the table.
    pub fn is_monotone(&self) -> bool {
        self.entries.windows(2).all(|w| luma(w[1]) >= luma(w[0]))
    }
}

/// Colors a pulsation map by table lookup on its rounded 8-bit intensity.
pub fn render_heatmap(pm: &PulsationMap, lut: &HeatMapLut) -> RgbImage {
    let u8map = pm.to_u8();
    let (w, h) = (pm.width() as u32, pm.height() as u32);
    RgbImage::from_fn(w, h, |x, y| Rgb(lut.get(u8map.get(x as usize, y as usize))))
}

pub fn save_heatmap(path: &Path, img: &RgbImage) -> Result<()> {
    crate::io::save_png(path, &image::DynamicImage::ImageRgb8(img.clone()))
}

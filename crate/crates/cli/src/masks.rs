//! Ground-truth masks stored as image sequences.

use std::path::{Path, PathBuf};

use pulsemap::io::{read_image, FRAME_PREFIX};
use pulsemap::{Error, FrameMasks, MaskSource, Result, SequenceFormat};

pub const PULSATION_DIR: &str = "pulsation";
pub const DRIFT_DIR: &str = "drift";

/// Reads `pulsation/` and `drift/` mask frames by index; any non-zero pixel
/// is inside the mask.
pub struct DiskMasks {
    pulsation: PathBuf,
    drift: PathBuf,
    format: SequenceFormat,
}

impl DiskMasks {
    pub fn open(dir: &Path) -> Result<Self> {
        let pulsation = dir.join(PULSATION_DIR);
        let drift = dir.join(DRIFT_DIR);
        if !pulsation.is_dir() {
            return Err(Error::Io {
                path: pulsation,
                source: std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "ground-truth masks not found",
                ),
            });
        }
        let format = SequenceFormat::detect(&pulsation)?;
        Ok(DiskMasks {
            pulsation,
            drift,
            format,
        })
    }

    fn load(&self, dir: &Path, index: u64) -> Result<pulsemap::Frame<bool>> {
        let name = format!("{FRAME_PREFIX}_{index:06}.{}", self.format.extension());
        let (frame, _) = read_image(&dir.join(name), self.format)?;
        Ok(frame.map(|v| v > 0))
    }
}

impl MaskSource for DiskMasks {
    fn masks(&self, index: u64) -> Result<FrameMasks> {
        let pulsation = self.load(&self.pulsation, index)?;
        let drift = if self.drift.is_dir() {
            self.load(&self.drift, index)?
        } else {
            pulsation.map(|_| false)
        };
        Ok(FrameMasks { pulsation, drift })
    }
}

//! Frame-by-frame composition of the three extraction stages: temporal
//! kernel, per-pixel bandpass, visual normalization.

use std::time::{Duration, Instant};

use crate::bandpass::{BandpassDesign, PixelFilterBank};
use crate::config::PipelineConfig;
use crate::error::Result;
use crate::frame::{Frame, RawFrame, Sample};
use crate::render::{normalize, NormalizationParams, PulsationMap};
use crate::temporal::{TemporalKernel, TemporalWindow};

/// Wall-clock time spent in each stage for one input frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub temporal: Duration,
    pub bandpass: Duration,
    pub normalize: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.temporal + self.bandpass + self.normalize
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub map: PulsationMap,
    pub timings: StageTimings,
}

/// Streaming pulsation-map extractor.
///
/// Memory is bounded by the temporal window plus the filter state; it does not
/// grow with stream length. Dimensions are fixed by the first frame pushed.
pub struct Pipeline<T: Sample> {
    config: PipelineConfig,
    kernel: TemporalKernel,
    design: BandpassDesign,
    params: NormalizationParams,
    window: Option<TemporalWindow<T>>,
    bank: Option<PixelFilterBank<T>>,
    settling_frames: usize,
}

impl<T: Sample> Pipeline<T> {
    pub fn new(config: &PipelineConfig) -> Result<Self> {
        let kernel = config.kernel()?;
        let design = config.bandpass()?;
        let params = config.normalization()?;
        Ok(Pipeline {
            settling_frames: design.settling_frames(),
            config: config.clone(),
            kernel,
            design,
            params,
            window: None,
            bank: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn kernel(&self) -> &TemporalKernel {
        &self.kernel
    }

    pub fn design(&self) -> &BandpassDesign {
        &self.design
    }

    pub fn params(&self) -> &NormalizationParams {
        &self.params
    }

    /// Frames between an input and the map aligned to it.
    pub fn group_delay(&self) -> usize {
        self.kernel.group_delay()
    }

    pub fn settling_frames(&self) -> usize {
        self.settling_frames
    }

    /// Bytes held in the temporal window and filter state.
    pub fn state_bytes(&self) -> usize {
        self.window.as_ref().map_or(0, |w| w.buffer_bytes())
            + self.bank.as_ref().map_or(0, |b| b.state_bytes())
    }

    /// Drops all buffered frames and filter state.
    pub fn reset(&mut self) {
        if let Some(w) = self.window.as_mut() {
            w.reset();
        }
        if let Some(b) = self.bank.as_mut() {
            b.reset();
        }
    }

    pub fn push_raw(&mut self, frame: &RawFrame) -> Result<Option<PipelineOutput>> {
        self.push(&frame.to_float())
    }

    pub fn push(&mut self, frame: &Frame<T>) -> Result<Option<PipelineOutput>> {
        let t0 = Instant::now();
        let window = match &mut self.window {
            Some(w) => w,
            None => self.window.insert(TemporalWindow::new(
                &self.kernel,
                frame.width(),
                frame.height(),
            )),
        };
        let Some(acc) = window.push(frame)? else {
            return Ok(None);
        };
        let t1 = Instant::now();
        let bank = match &mut self.bank {
            Some(b) => b,
            None => self.bank.insert(PixelFilterBank::new(
                &self.design,
                self.config.realization,
                frame.width(),
                frame.height(),
            )?),
        };
        let filtered = bank.process(&acc)?;
        let settling = bank.frames_processed() <= self.settling_frames as u64;
        let t2 = Instant::now();
        let mut map = normalize(&filtered, &self.params)?;
        map.settling = settling;
        let t3 = Instant::now();
        Ok(Some(PipelineOutput {
            map,
            timings: StageTimings {
                temporal: t1 - t0,
                bandpass: t2 - t1,
                normalize: t3 - t2,
            },
        }))
    }
}

/// Runs a whole stream through a fresh pipeline, yielding one map per input
/// frame once the temporal window has filled.
pub fn extract_pulsation_maps<T, I>(
    frames: I,
    config: &PipelineConfig,
) -> Result<impl Iterator<Item = Result<PulsationMap>>>
where
    T: Sample,
    I: IntoIterator<Item = Frame<T>>,
{
    let mut pipeline = Pipeline::<T>::new(config)?;
    let mut failed = false;
    Ok(frames.into_iter().filter_map(move |frame| {
        if failed {
            return None;
        }
        let out = pipeline.push(&frame).transpose()?;
        failed = out.is_err();
        Some(out.map(|o| o.map))
    }))
}

//! Localization, latency and frequency-response measurements.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::bandpass::{BandpassDesign, PixelFilterBank, Realization};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::frame::{Frame, RawFrame};
use crate::phantom::MaskSource;
use crate::pipeline::Pipeline;
use crate::render::PulsationMap;
use crate::temporal::{TemporalKernel, TemporalWindow};

/// Pooled map intensities inside and outside the ground-truth regions.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyConcentration {
    pub in_region_mean: f64,
    /// Mean over pixels outside both the pulsation and drift masks.
    pub out_region_mean: f64,
    pub drift_region_mean: f64,
    /// `in / out`, or `None` when nothing lies outside (saturated).
    pub ratio: Option<f64>,
    pub frames_evaluated: usize,
}

impl EnergyConcentration {
    pub fn is_saturated(&self) -> bool {
        self.ratio.is_none()
    }

    /// Ratio with saturation mapped to infinity, for ordering comparisons.
    pub fn ratio_or_inf(&self) -> f64 {
        self.ratio.unwrap_or(f64::INFINITY)
    }

    /// `key = value` lines, one per field.
    pub fn to_report(&self) -> String {
        let ratio = match self.ratio {
            Some(r) => format!("{r:?}"),
            None => "\"saturated\"".into(),
        };
        format!(
            "in_region_mean = {:?}\nout_region_mean = {:?}\ndrift_region_mean = {:?}\nratio = {ratio}\nframes_evaluated = {}\n",
            self.in_region_mean, self.out_region_mean, self.drift_region_mean, self.frames_evaluated
        )
    }
}

#[derive(Default)]
struct RegionSum {
    sum: f64,
    count: u64,
}

impl RegionSum {
    fn add(&mut self, v: f32) {
        self.sum += f64::from(v);
        self.count += 1;
    }

    fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Pools map intensities over the ground-truth regions of every evaluated
/// frame. Masks are looked up by each map's source frame index.
pub fn energy_concentration<I, M>(
    maps: I,
    gt: &M,
    skip_settling: bool,
) -> Result<EnergyConcentration>
where
    I: IntoIterator<Item = PulsationMap>,
    M: MaskSource + ?Sized,
{
    let (mut inside, mut outside, mut drift) = (
        RegionSum::default(),
        RegionSum::default(),
        RegionSum::default(),
    );
    let mut frames = 0;
    for map in maps {
        if skip_settling && map.settling {
            continue;
        }
        let masks = gt.masks(map.source_frame_index)?;
        if !map.frame.same_shape(&masks.pulsation) || !map.frame.same_shape(&masks.drift) {
            return Err(Error::DimensionMismatch {
                index: map.source_frame_index,
                width: masks.pulsation.width(),
                height: masks.pulsation.height(),
                got_width: map.width(),
                got_height: map.height(),
            });
        }
        if !masks.pulsation.data().iter().any(|&m| m) {
            return Err(Error::Insufficient(format!(
                "empty pulsation mask for frame {}",
                map.source_frame_index
            )));
        }
        for ((&v, &p), &d) in map
            .data()
            .iter()
            .zip(masks.pulsation.data())
            .zip(masks.drift.data())
        {
            if p {
                inside.add(v);
            } else if d {
                drift.add(v);
            } else {
                outside.add(v);
            }
        }
        frames += 1;
    }
    if frames == 0 {
        return Err(Error::Insufficient(
            "no steady-state maps to evaluate".into(),
        ));
    }
    let (i, o) = (inside.mean(), outside.mean());
    Ok(EnergyConcentration {
        in_region_mean: i,
        out_region_mean: o,
        drift_region_mean: drift.mean(),
        ratio: (o > 0.0).then(|| i / o),
        frames_evaluated: frames,
    })
}

/// Mean map intensity over a mask, pooled across maps.
pub fn masked_mean<'a, I>(maps: I, mask: impl Fn(u64) -> Frame<bool>) -> Result<f64>
where
    I: IntoIterator<Item = &'a PulsationMap>,
{
    let mut acc = RegionSum::default();
    for map in maps {
        let m = mask(map.source_frame_index);
        if !m.same_shape(&map.frame) {
            return Err(Error::Parameter("mask and map dimensions differ".into()));
        }
        for (&v, &inside) in map.data().iter().zip(m.data()) {
            if inside {
                acc.add(v);
            }
        }
    }
    if acc.count == 0 {
        return Err(Error::Insufficient("mask selects no pixels".into()));
    }
    Ok(acc.mean())
}

/// Pixels in the top tenth of the map's intensity range: at least 90% of the
/// frame maximum. Empty when the map is all zero.
pub fn top_decile_mask(map: &PulsationMap) -> Frame<bool> {
    let max = map.data().iter().copied().fold(0.0f32, f32::max);
    let threshold = 0.9 * max;
    map.frame.map(|v| max > 0.0 && v >= threshold)
}

/// Fraction of `region` pixels that are also set in `selected`.
pub fn coverage(selected: &Frame<bool>, region: &Frame<bool>) -> f64 {
    let total = region.data().iter().filter(|&&r| r).count();
    if total == 0 {
        return 0.0;
    }
    let hit = selected
        .data()
        .iter()
        .zip(region.data())
        .filter(|(&s, &r)| s && r)
        .count();
    hit as f64 / total as f64
}

/// Fraction of `selected` pixels that fall inside `region`.
pub fn precision(selected: &Frame<bool>, region: &Frame<bool>) -> f64 {
    let total = selected.data().iter().filter(|&&s| s).count();
    if total == 0 {
        return 0.0;
    }
    let hit = selected
        .data()
        .iter()
        .zip(region.data())
        .filter(|(&s, &r)| s && r)
        .count();
    hit as f64 / total as f64
}

/// Per-frame wall-clock durations of a benchmark run and their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub durations: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub groups: usize,
    pub frames_per_group: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl LatencyStats {
    /// Summarizes durations given in seconds.
    pub fn from_durations(
        durations: Vec<f64>,
        width: usize,
        height: usize,
        groups: usize,
        frames_per_group: usize,
    ) -> Result<Self> {
        if durations.is_empty() {
            return Err(Error::Insufficient("no durations recorded".into()));
        }
        if durations.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Parameter(
                "durations must be finite and non-negative".into(),
            ));
        }
        let mut sorted = durations.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let p95 = sorted[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
        Ok(LatencyStats {
            min: sorted[0],
            max: sorted[n - 1],
            mean: durations.iter().sum::<f64>() / n as f64,
            median,
            p95,
            durations,
            width,
            height,
            groups,
            frames_per_group,
        })
    }

    pub fn frames(&self) -> usize {
        self.durations.len()
    }

    pub fn fps(&self) -> f64 {
        1.0 / self.mean
    }

    /// One duration in seconds per line under a `seconds` header.
    pub fn durations_csv(&self) -> String {
        let mut out = String::from("seconds\n");
        for d in &self.durations {
            let _ = writeln!(out, "{d:?}");
        }
        out
    }

    pub fn parse_durations_csv(text: &str) -> Result<Vec<f64>> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        reader
            .records()
            .map(|r| {
                let r = r.map_err(|e| Error::Parameter(format!("durations csv: {e}")))?;
                r.get(0)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Parameter(format!("durations csv: bad row {r:?}")))
            })
            .collect()
    }

    pub fn summary(&self) -> String {
        format!(
            "width = {}\nheight = {}\ngroups = {}\nframes_per_group = {}\nframes = {}\nmin_ms = {:.4}\nmedian_ms = {:.4}\nmean_ms = {:.4}\np95_ms = {:.4}\nmax_ms = {:.4}\nfps = {:.2}\n",
            self.width,
            self.height,
            self.groups,
            self.frames_per_group,
            self.frames(),
            self.min * 1e3,
            self.median * 1e3,
            self.mean * 1e3,
            self.p95 * 1e3,
            self.max * 1e3,
            self.fps()
        )
    }

    pub fn write(&self, csv_path: &Path, summary_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.durations_csv()).map_err(|e| Error::io(csv_path, e))?;
        std::fs::write(summary_path, self.summary()).map_err(|e| Error::io(summary_path, e))
    }
}

/// Times every frame of `groups` runs of the full pipeline.
///
/// Each group starts from a fresh pipeline whose temporal window is primed
/// with untimed frames, so every timed push produces a map. Frame decoding
/// and conversion to floating point happen outside the timed region.
pub fn measure_latency<I>(
    frames: I,
    config: &PipelineConfig,
    groups: usize,
    frames_per_group: usize,
) -> Result<LatencyStats>
where
    I: IntoIterator<Item = RawFrame>,
{
    if groups == 0 || frames_per_group == 0 {
        return Err(Error::Parameter(
            "groups and frames per group must be positive".into(),
        ));
    }
    let mut frames = frames.into_iter();
    let mut durations = Vec::with_capacity(groups * frames_per_group);
    let (mut width, mut height) = (0, 0);
    let mut pipeline = Pipeline::<f32>::new(config)?;
    let prime = pipeline.kernel().len() - 1;
    let needed = groups * (prime + frames_per_group);
    let mut pulled = 0usize;
    let mut next = |pulled: &mut usize| {
        *pulled += 1;
        frames.next().ok_or_else(|| {
            Error::Insufficient(format!(
                "benchmark needs {needed} frames, stream ended after {}",
                *pulled - 1
            ))
        })
    };
    for _ in 0..groups {
        pipeline.reset();
        for _ in 0..prime {
            let f = next(&mut pulled)?.to_float::<f32>();
            pipeline.push(&f)?;
        }
        for _ in 0..frames_per_group {
            let f = next(&mut pulled)?.to_float::<f32>();
            (width, height) = (f.width(), f.height());
            let t = Instant::now();
            let out = pipeline.push(&f)?;
            durations.push(t.elapsed().as_secs_f64());
            debug_assert!(out.is_some());
        }
    }
    LatencyStats::from_durations(durations, width, height, groups, frames_per_group)
}

/// A processing stage whose sinusoidal gain can be measured.
#[derive(Debug, Clone)]
pub enum ToneStage {
    Temporal(TemporalKernel),
    Bandpass(BandpassDesign, Realization),
    /// Temporal kernel followed by the bandpass, as in the pipeline.
    Cascade(TemporalKernel, BandpassDesign, Realization),
}

impl ToneStage {
    /// Frames the stage needs before it emits any output.
    fn fill(&self) -> usize {
        match self {
            ToneStage::Temporal(k) | ToneStage::Cascade(k, ..) => k.len() - 1,
            ToneStage::Bandpass(..) => 0,
        }
    }
}

/// Steady-state gain of `stage` for a unit-amplitude sinusoid at `freq` Hz.
///
/// A one-pixel stream is run for `settle_frames` frames, then the amplitude is
/// estimated over an integer number of periods (at least 20) by a least-squares
/// fit of a sine and cosine at the input frequency. A constant input (`freq`
/// of 0) reports the largest absolute output instead.
pub fn measure_tone_gain(
    stage: &ToneStage,
    freq: f64,
    fs: f64,
    settle_frames: usize,
) -> Result<f64> {
    if !(freq >= 0.0 && freq < fs / 2.0) {
        return Err(Error::Parameter(format!(
            "tone frequency {freq} Hz must lie in [0, {}) Hz",
            fs / 2.0
        )));
    }
    if settle_frames < stage.fill() {
        return Err(Error::Insufficient(format!(
            "{settle_frames} settling frames is shorter than the stage's {} frame window",
            stage.fill()
        )));
    }
    let measure = if freq == 0.0 {
        200
    } else {
        let period = fs / freq;
        ((20.0_f64).max((200.0 / period).ceil()) * period).round() as usize
    };
    let omega = 2.0 * std::f64::consts::PI * freq / fs;
    let total = settle_frames + measure;
    let input = (0..total).map(|n| {
        if freq == 0.0 {
            1.0
        } else {
            (omega * n as f64).sin()
        }
    });
    let output = run_stage(stage, input)?;
    // Outputs are aligned to the input frame they are centered on.
    let tail: Vec<(usize, f64)> = output
        .into_iter()
        .filter(|&(n, _)| n >= settle_frames)
        .collect();
    if freq == 0.0 {
        return Ok(tail.iter().map(|(_, y)| y.abs()).fold(0.0, f64::max));
    }
    Ok(fit_amplitude(&tail, omega))
}

fn run_stage(stage: &ToneStage, input: impl Iterator<Item = f64>) -> Result<Vec<(usize, f64)>> {
    let mut window = match stage {
        ToneStage::Temporal(k) | ToneStage::Cascade(k, ..) => {
            Some(TemporalWindow::<f64>::new(k, 1, 1))
        }
        ToneStage::Bandpass(..) => None,
    };
    let mut bank = match stage {
        ToneStage::Bandpass(d, r) | ToneStage::Cascade(_, d, r) => {
            Some(PixelFilterBank::<f64>::new(d, *r, 1, 1)?)
        }
        ToneStage::Temporal(_) => None,
    };
    let mut out = Vec::new();
    for (n, x) in input.enumerate() {
        let mut f = Frame::with_index(1, 1, n as u64, 0.0, vec![x])?;
        if let Some(w) = window.as_mut() {
            match w.push(&f)? {
                Some(g) => f = g,
                None => continue,
            }
        }
        if let Some(b) = bank.as_mut() {
            f = b.process(&f)?;
        }
        out.push((f.index as usize, f.data()[0]));
    }
    Ok(out)
}

/// Amplitude of the best-fitting `a·cos(ωn) + b·sin(ωn)`.
fn fit_amplitude(samples: &[(usize, f64)], omega: f64) -> f64 {
    let (mut cc, mut ss, mut cs, mut yc, mut ys) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(n, y) in samples {
        let (s, c) = (omega * n as f64).sin_cos();
        cc += c * c;
        ss += s * s;
        cs += c * s;
        yc += y * c;
        ys += y * s;
    }
    let det = cc * ss - cs * cs;
    let a = (yc * ss - ys * cs) / det;
    let b = (ys * cc - yc * cs) / det;
    a.hypot(b)
}

//! Synthetic ultrasound-like sequences with known pulsating structures.
//!
//! A phantom is a static speckled background carrying pulsating rings (artery
//! walls whose radius oscillates sinusoidally) and drift edges (soft bands
//! translating at constant velocity, standing in for tissue boundaries swept by
//! the probe). Every frame is a pure function of the spec and the frame index,
//! so frames can be rendered in any order or in parallel.
//!
//! The speckle field and the optional per-frame jitter come from ChaCha8
//! seeded with `seed`; jitter for frame `n` uses stream `n + 1` of the same
//! seed.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::DEFAULT_BAND_LO_HZ;
use crate::error::{Error, Result};
use crate::frame::{max_value, Frame, RawFrame, StreamHeader};

/// Scale shared by every anatomically anchored size.
pub const DEFAULT_MM_PER_PIXEL: f64 = 0.1;
/// Mean radial-artery lumen diameter.
pub const RADIAL_DIAMETER_MM: f64 = 2.51;
pub const CAROTID_DIAMETER_MM: f64 = 6.5;

const BIAS_PHASES: usize = 720;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulsatingRing {
    /// Pixel coordinates `(x, y)` of the ring center.
    pub center: [f64; 2],
    pub base_radius: f64,
    /// Radial excursion in pixels.
    pub amplitude: f64,
    pub freq: f64,
    #[serde(default)]
    pub phase: f64,
    pub wall_brightness: f64,
    pub wall_thickness: f64,
}

impl PulsatingRing {
    pub fn radius_at(&self, t: f64) -> f64 {
        self.base_radius + self.amplitude * (2.0 * PI * self.freq * t + self.phase).sin()
    }

    /// Outer extent of the region the wall sweeps, before mask dilation.
    fn swept_outer(&self) -> f64 {
        self.base_radius + self.amplitude + self.wall_thickness / 2.0
    }

    fn swept_inner(&self) -> f64 {
        self.base_radius - self.amplitude - self.wall_thickness / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftEdge {
    /// Direction of motion (the band's normal), radians from the +x axis.
    pub orientation: f64,
    /// Band center along the normal at frame 0, in pixels.
    pub position0: f64,
    /// Pixels per frame along the normal.
    pub velocity: f64,
    pub brightness: f64,
    pub thickness: f64,
    /// Width of the band's intensity ramps, in pixels.
    #[serde(default = "default_edge_softness")]
    pub softness: f64,
}

fn default_edge_softness() -> f64 {
    4.0
}

impl DriftEdge {
    pub fn position_at(&self, frame: u64) -> f64 {
        self.position0 + self.velocity * frame as f64
    }

    fn normal(&self) -> (f64, f64) {
        (self.orientation.cos(), self.orientation.sin())
    }

    /// Half-width of the drift ground-truth band (ramps included).
    fn mask_half_width(&self, margin: f64) -> f64 {
        self.thickness / 2.0 + 3.0 * self.softness + margin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeckleParams {
    /// Standard deviation of the multiplicative field around 1.
    pub strength: f64,
    /// Standard deviation of per-frame multiplicative noise; 0 keeps the
    /// speckle static.
    #[serde(default)]
    pub temporal_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub name: String,
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Seconds.
    pub duration: f64,
    #[serde(default = "default_bit_depth")]
    pub bit_depth: u8,
    pub background: f64,
    /// Ground-truth dilation, in pixels.
    pub mask_margin: f64,
    pub mm_per_pixel: f64,
    pub seed: u64,
    pub speckle: SpeckleParams,
    #[serde(default)]
    pub rings: Vec<PulsatingRing>,
    #[serde(default)]
    pub drift_edges: Vec<DriftEdge>,
}

fn default_bit_depth() -> u8 {
    8
}

fn mm(v: f64, mm_per_pixel: f64) -> f64 {
    v / mm_per_pixel
}

/// Radial-artery scene: one small ring at 1.5 Hz, two drift edges.
pub fn default_radial_phantom() -> PhantomSpec {
    let s = DEFAULT_MM_PER_PIXEL;
    PhantomSpec {
        name: "radial".into(),
        version: 1,
        width: 160,
        height: 144,
        fps: 30.0,
        duration: 12.0,
        bit_depth: 8,
        background: 70.0,
        mask_margin: 2.0,
        mm_per_pixel: s,
        seed: 0x5eed_0001,
        speckle: SpeckleParams {
            strength: 0.2,
            temporal_jitter: 0.0,
        },
        rings: vec![PulsatingRing {
            center: [104.0, 60.0],
            base_radius: mm(RADIAL_DIAMETER_MM, s) / 2.0,
            amplitude: mm(0.08, s),
            freq: 1.5,
            phase: 0.0,
            wall_brightness: 170.0,
            wall_thickness: mm(0.3, s),
        }],
        drift_edges: vec![
            DriftEdge {
                orientation: 0.0,
                position0: 20.0,
                velocity: 0.1,
                brightness: 150.0,
                thickness: 8.0,
                softness: 4.0,
            },
            DriftEdge {
                orientation: FRAC_PI_2,
                position0: 126.0,
                velocity: -0.05,
                brightness: 40.0,
                thickness: 10.0,
                softness: 4.0,
            },
        ],
    }
}

/// Carotid scene: one large ring at 1.5 Hz, two drift edges.
pub fn default_carotid_phantom() -> PhantomSpec {
    let s = DEFAULT_MM_PER_PIXEL;
    PhantomSpec {
        name: "carotid".into(),
        version: 1,
        width: 256,
        height: 224,
        fps: 30.0,
        duration: 12.0,
        bit_depth: 8,
        background: 70.0,
        mask_margin: 2.0,
        mm_per_pixel: s,
        seed: 0x5eed_0002,
        speckle: SpeckleParams {
            strength: 0.2,
            temporal_jitter: 0.0,
        },
        rings: vec![PulsatingRing {
            center: [150.0, 112.0],
            base_radius: mm(CAROTID_DIAMETER_MM, s) / 2.0,
            amplitude: mm(0.2, s),
            freq: 1.5,
            phase: 0.0,
            wall_brightness: 180.0,
            wall_thickness: mm(0.5, s),
        }],
        drift_edges: vec![
            DriftEdge {
                orientation: 0.0,
                position0: 24.0,
                velocity: 0.12,
                brightness: 150.0,
                thickness: 10.0,
                softness: 4.0,
            },
            DriftEdge {
                orientation: FRAC_PI_2,
                position0: 200.0,
                velocity: -0.06,
                brightness: 40.0,
                thickness: 10.0,
                softness: 4.0,
            },
        ],
    }
}

/// The radial scene plus a smaller neighbouring artery pulsing at the same
/// rate with a phase lag.
pub fn default_two_artery_phantom() -> PhantomSpec {
    let mut spec = default_radial_phantom();
    let s = spec.mm_per_pixel;
    spec.name = "two-artery".into();
    spec.rings.push(PulsatingRing {
        center: [60.0, 30.0],
        base_radius: mm(1.6, s) / 2.0,
        amplitude: mm(0.06, s),
        freq: 1.5,
        phase: 0.6,
        wall_brightness: 160.0,
        wall_thickness: mm(0.25, s),
    });
    // keep the vertical drift band clear of the second ring
    spec.drift_edges[0].position0 = 12.0;
    spec.drift_edges[0].velocity = 0.04;
    spec
}

/// Carotid-like scene at an arbitrary resolution, for throughput runs. The
/// ring stays at carotid scale; the drift bands sit near the borders.
pub fn bench_phantom(width: usize, height: usize) -> PhantomSpec {
    let mut spec = default_carotid_phantom();
    spec.name = format!("bench-{width}x{height}");
    spec.width = width;
    spec.height = height;
    spec.rings[0].center = [0.6 * width as f64, 0.5 * height as f64];
    spec.drift_edges[0].position0 = 0.1 * width as f64;
    spec.drift_edges[1].position0 = 0.9 * height as f64;
    spec
}

/// Looks up a bundled spec by name.
pub fn named_phantom(name: &str) -> Result<PhantomSpec> {
    match name {
        "radial" => Ok(default_radial_phantom()),
        "carotid" => Ok(default_carotid_phantom()),
        "two-artery" => Ok(default_two_artery_phantom()),
        other => Err(Error::Parameter(format!(
            "unknown phantom `{other}`; valid names: {}",
            PHANTOM_NAMES.join(", ")
        ))),
    }
}

pub const PHANTOM_NAMES: [&str; 3] = ["carotid", "radial", "two-artery"];

impl PhantomSpec {
    pub fn frame_count(&self) -> u64 {
        (self.duration * self.fps).round() as u64
    }

    pub fn header(&self) -> StreamHeader {
        StreamHeader {
            width: self.width,
            height: self.height,
            fps: self.fps,
            frame_count: Some(self.frame_count()),
            bit_depth: self.bit_depth,
        }
    }

    /// Frames needed before steady-state metrics exist: bandpass settling at
    /// the default low edge plus two periods of the slowest ring.
    pub fn minimum_frames(&self) -> u64 {
        let settle = (3.0 * self.fps / DEFAULT_BAND_LO_HZ).ceil();
        let periods = self
            .rings
            .iter()
            .map(|r| 2.0 * self.fps / r.freq)
            .fold(0.0, f64::max);
        (settle + periods).ceil() as u64
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: PhantomSpec =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().replace('\n', " ")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("phantom spec is always serializable")
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(format!("phantom `{}`: {m}", self.name)));
        if self.width == 0 || self.height == 0 {
            return bad("dimensions must be positive".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        let max = f64::from(max_value(self.bit_depth)?);
        if !(self.mm_per_pixel > 0.0) {
            return bad("mm_per_pixel must be positive".into());
        }
        if !(self.mask_margin >= 0.0) {
            return bad("mask_margin must be non-negative".into());
        }
        if !(self.speckle.strength >= 0.0 && self.speckle.temporal_jitter >= 0.0) {
            return bad("speckle parameters must be non-negative".into());
        }
        if !(0.0..=max).contains(&self.background) {
            return bad(format!("background outside 0..={max}"));
        }
        for (i, r) in self.rings.iter().enumerate() {
            if !(r.freq > 0.0 && r.freq < self.fps / 2.0) {
                return bad(format!(
                    "ring {i}: frequency {} Hz outside (0, {}) Hz",
                    r.freq,
                    self.fps / 2.0
                ));
            }
            if !(r.amplitude >= 0.0 && r.wall_thickness > 0.0) {
                return bad(format!(
                    "ring {i}: amplitude and wall thickness must be non-negative"
                ));
            }
            if !(r.base_radius > r.amplitude + r.wall_thickness) {
                return bad(format!(
                    "ring {i}: base radius {} must exceed amplitude + wall thickness ({})",
                    r.base_radius,
                    r.amplitude + r.wall_thickness
                ));
            }
            if !(0.0..=max).contains(&r.wall_brightness) {
                return bad(format!("ring {i}: wall brightness outside 0..={max}"));
            }
        }
        for (i, e) in self.drift_edges.iter().enumerate() {
            if !(e.velocity.abs() > 0.0 && e.velocity.is_finite()) {
                return bad(format!("drift edge {i}: velocity must be non-zero"));
            }
            if !(e.thickness > 0.0 && e.softness > 0.0) {
                return bad(format!(
                    "drift edge {i}: thickness and softness must be positive"
                ));
            }
            if !(0.0..=max).contains(&e.brightness) {
                return bad(format!("drift edge {i}: brightness outside 0..={max}"));
            }
        }
        let frames = self.frame_count();
        if frames < self.minimum_frames() {
            return bad(format!(
                "{frames} frames is shorter than settling plus two pulsation periods ({})",
                self.minimum_frames()
            ));
        }
        self.check_layout()
    }

    fn ring_mask_outer(&self, r: &PulsatingRing) -> f64 {
        r.swept_outer() + self.mask_margin
    }

    /// Ground-truth regions must stay disjoint over the whole sequence.
    fn check_layout(&self) -> Result<()> {
        let last = self.frame_count().saturating_sub(1);
        for (i, a) in self.rings.iter().enumerate() {
            for (j, b) in self.rings.iter().enumerate().skip(i + 1) {
                let d = ((a.center[0] - b.center[0]).powi(2) + (a.center[1] - b.center[1]).powi(2))
                    .sqrt();
                if d <= self.ring_mask_outer(a) + self.ring_mask_outer(b) {
                    return Err(Error::Parameter(format!(
                        "phantom `{}`: rings {i} and {j} overlap",
                        self.name
                    )));
                }
            }
            for (j, e) in self.drift_edges.iter().enumerate() {
                let (nx, ny) = e.normal();
                let c = a.center[0] * nx + a.center[1] * ny;
                let (p0, p1) = (e.position_at(0), e.position_at(last));
                let half = e.mask_half_width(self.mask_margin);
                let (lo, hi) = (p0.min(p1) - half, p0.max(p1) + half);
                let reach = self.ring_mask_outer(a);
                if hi >= c - reach && lo <= c + reach {
                    return Err(Error::Parameter(format!(
                        "phantom `{}`: drift edge {j} crosses ring {i} during the sequence",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Smooth indicator of `lo <= x <= hi` with logistic ramps of scale `soft`.
fn soft_band(x: f64, lo: f64, hi: f64, soft: f64) -> f64 {
    logistic((x - lo) / soft) - logistic((x - hi) / soft)
}

/// Fraction of the unit pixel footprint centered at `x` that lies in `[lo, hi]`.
/// Phases a ring passes through over one period. When the period spans a
/// whole number of frames these are exactly the sampled phases.
fn bias_phases(r: &PulsatingRing, fps: f64) -> Vec<f64> {
    let period = fps / r.freq;
    let frames = period.round();
    if (period - frames).abs() < 1e-9 && frames >= 2.0 {
        (0..frames as usize)
            .map(|k| 2.0 * PI * k as f64 / frames + r.phase)
            .collect()
    } else {
        (0..BIAS_PHASES)
            .map(|k| 2.0 * PI * k as f64 / BIAS_PHASES as f64)
            .collect()
    }
}

fn box_coverage(x: f64, lo: f64, hi: f64) -> f64 {
    ((x + 0.5).min(hi) - (x - 0.5).max(lo)).max(0.0)
}

/// A validated spec with its static fields precomputed.
#[derive(Debug, Clone)]
pub struct Phantom {
    spec: PhantomSpec,
    speckle: Vec<f64>,
    /// Per-pixel mean offset of the pulsating rims over one period; removed so
    /// the pulsation is zero-mean.
    bias: Vec<f64>,
}

impl Phantom {
    pub fn new(spec: PhantomSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.width * spec.height;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let speckle: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (1.0 + spec.speckle.strength * z).max(0.0)
            })
            .collect();
        let mut phantom = Phantom {
            speckle,
            bias: vec![0.0; n],
            spec,
        };
        phantom.bias = phantom.ring_bias();
        Ok(phantom)
    }

    pub fn spec(&self) -> &PhantomSpec {
        &self.spec
    }

    pub fn header(&self) -> StreamHeader {
        self.spec.header()
    }

    pub fn frame_count(&self) -> u64 {
        self.spec.frame_count()
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            spec: self.spec.clone(),
        }
    }

    fn ring_term(&self, x: f64, y: f64, radius: impl Fn(&PulsatingRing) -> f64) -> f64 {
        let s = &self.spec;
        s.rings
            .iter()
            .map(|r| {
                let d = ((x - r.center[0]).powi(2) + (y - r.center[1]).powi(2)).sqrt();
                let rad = radius(r);
                let cov = box_coverage(
                    d,
                    rad - r.wall_thickness / 2.0,
                    rad + r.wall_thickness / 2.0,
                );
                cov * (r.wall_brightness - s.background)
            })
            .sum()
    }

    /// Per-pixel offset that makes each ring's contribution zero-mean over a
    /// period, so the pulsation adds no DC to the scene.
    fn ring_bias(&self) -> Vec<f64> {
        let s = &self.spec;
        let mut bias = vec![0.0; s.width * s.height];
        let phases: Vec<Vec<f64>> = s.rings.iter().map(|r| bias_phases(r, s.fps)).collect();
        bias.par_chunks_mut(s.width)
            .enumerate()
            .for_each(|(y, row)| {
                for (x, b) in row.iter_mut().enumerate() {
                    let (px, py) = (x as f64, y as f64);
                    for (r, phis) in s.rings.iter().zip(&phases) {
                        if r.amplitude == 0.0 {
                            continue;
                        }
                        let d = ((px - r.center[0]).powi(2) + (py - r.center[1]).powi(2)).sqrt();
                        if d < r.swept_inner() - 1.0 || d > r.swept_outer() + 1.0 {
                            continue;
                        }
                        let wall = |rad: f64| {
                            box_coverage(
                                d,
                                rad - r.wall_thickness / 2.0,
                                rad + r.wall_thickness / 2.0,
                            ) * (r.wall_brightness - s.background)
                        };
                        let mean = phis
                            .iter()
                            .map(|phi| wall(r.base_radius + r.amplitude * phi.sin()))
                            .sum::<f64>()
                            / phis.len() as f64;
                        *b += mean - wall(r.base_radius);
                    }
                }
            });
        bias
    }

    /// Real-valued intensities of frame `n` before quantization.
    pub fn render(&self, n: u64) -> Frame<f64> {
        let s = &self.spec;
        let t = n as f64 / s.fps;
        let edges: Vec<(f64, f64, f64, &DriftEdge)> = s
            .drift_edges
            .iter()
            .map(|e| {
                let (nx, ny) = e.normal();
                (nx, ny, e.position_at(n), e)
            })
            .collect();
        let jitter = (s.speckle.temporal_jitter > 0.0).then(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            rng.set_stream(n + 1);
            (0..s.width * s.height)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (1.0 + s.speckle.temporal_jitter * z).max(0.0)
                })
                .collect::<Vec<f64>>()
        });
        let mut data = vec![0.0; s.width * s.height];
        data.par_chunks_mut(s.width)
            .enumerate()
            .for_each(|(y, row)| {
                let py = y as f64;
                for (x, v) in row.iter_mut().enumerate() {
                    let px = x as f64;
                    let i = y * s.width + x;
                    let mut value =
                        s.background + self.ring_term(px, py, |r| r.radius_at(t)) - self.bias[i];
                    for &(nx, ny, p, e) in &edges {
                        let along = px * nx + py * ny;
                        let cov = soft_band(
                            along,
                            p - e.thickness / 2.0,
                            p + e.thickness / 2.0,
                            e.softness,
                        );
                        value += cov * (e.brightness - s.background);
                    }
                    value *= self.speckle[i];
                    if let Some(j) = &jitter {
                        value *= j[i];
                    }
                    *v = value;
                }
            });
        self.spec
            .header()
            .frame(n, data)
            .expect("render buffer matches the header")
    }

    /// Frame `n` rounded and clamped to the spec's bit depth, as written to
    /// disk.
    pub fn quantized(&self, n: u64) -> RawFrame {
        let max = f64::from(max_value(self.spec.bit_depth).unwrap_or(u16::MAX));
        self.render(n).map(|v| v.round().clamp(0.0, max) as u16)
    }

    pub fn quantized_frames(&self) -> impl Iterator<Item = RawFrame> + '_ {
        (0..self.frame_count()).map(move |n| self.quantized(n))
    }

    pub fn into_frames(self) -> PhantomFrames {
        PhantomFrames {
            next: 0,
            end: self.frame_count(),
            phantom: self,
        }
    }
}

/// Owning iterator over a phantom's real-valued frames.
pub struct PhantomFrames {
    phantom: Phantom,
    next: u64,
    end: u64,
}

impl Iterator for PhantomFrames {
    type Item = Frame<f64>;

    fn next(&mut self) -> Option<Frame<f64>> {
        (self.next < self.end).then(|| {
            self.next += 1;
            self.phantom.render(self.next - 1)
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for PhantomFrames {}

/// Builds the frame stream and ground truth for a spec.
pub fn generate_phantom(spec: PhantomSpec) -> Result<(PhantomFrames, GroundTruth)> {
    let phantom = Phantom::new(spec)?;
    let gt = phantom.ground_truth();
    Ok((phantom.into_frames(), gt))
}

/// Binary masks for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMasks {
    pub pulsation: Frame<bool>,
    pub drift: Frame<bool>,
}

impl FrameMasks {
    pub fn to_raw(mask: &Frame<bool>) -> RawFrame {
        mask.map(|m| if m { 255 } else { 0 })
    }
}

/// Anything that can supply per-frame ground-truth masks.
pub trait MaskSource {
    fn masks(&self, index: u64) -> Result<FrameMasks>;
}

/// Analytic ground truth of a phantom: the region each ring wall sweeps
/// (dilated by the mask margin) and the current extent of each drift band.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    spec: PhantomSpec,
}

impl GroundTruth {
    pub fn spec(&self) -> &PhantomSpec {
        &self.spec
    }

    pub fn pulsation_mask(&self) -> Frame<bool> {
        let s = &self.spec;
        let data = (0..s.width * s.height)
            .map(|i| {
                let (x, y) = ((i % s.width) as f64, (i / s.width) as f64);
                s.rings.iter().any(|r| {
                    let d = ((x - r.center[0]).powi(2) + (y - r.center[1]).powi(2)).sqrt();
                    d >= r.swept_inner() - s.mask_margin && d <= r.swept_outer() + s.mask_margin
                })
            })
            .collect();
        Frame::new(s.width, s.height, data).expect("mask matches the header")
    }

    /// Pulsation mask of one ring alone.
    pub fn ring_mask(&self, ring: usize) -> Option<Frame<bool>> {
        let s = &self.spec;
        let r = s.rings.get(ring)?;
        let data = (0..s.width * s.height)
            .map(|i| {
                let (x, y) = ((i % s.width) as f64, (i / s.width) as f64);
                let d = ((x - r.center[0]).powi(2) + (y - r.center[1]).powi(2)).sqrt();
                d >= r.swept_inner() - s.mask_margin && d <= r.swept_outer() + s.mask_margin
            })
            .collect();
        Frame::new(s.width, s.height, data).ok()
    }

    pub fn drift_mask(&self, n: u64) -> Frame<bool> {
        let s = &self.spec;
        let bands: Vec<(f64, f64, f64, f64)> = s
            .drift_edges
            .iter()
            .map(|e| {
                let (nx, ny) = e.normal();
                (nx, ny, e.position_at(n), e.mask_half_width(s.mask_margin))
            })
            .collect();
        let data = (0..s.width * s.height)
            .map(|i| {
                let (x, y) = ((i % s.width) as f64, (i / s.width) as f64);
                bands
                    .iter()
                    .any(|&(nx, ny, p, half)| (x * nx + y * ny - p).abs() <= half)
            })
            .collect();
        let mut f = Frame::new(s.width, s.height, data).expect("mask matches the header");
        f.index = n;
        f
    }
}

impl MaskSource for GroundTruth {
    fn masks(&self, index: u64) -> Result<FrameMasks> {
        let mut pulsation = self.pulsation_mask();
        pulsation.index = index;
        Ok(FrameMasks {
            pulsation,
            drift: self.drift_mask(index),
        })
    }
}

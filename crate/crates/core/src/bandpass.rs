//! Third-order Butterworth bandpass design and per-pixel streaming IIR banks.
//!
//! The analog prototype is shifted to the band with the lowpass-to-bandpass
//! transform and digitized with the bilinear transform, pre-warping both band
//! edges so the digital -3 dB points land exactly on them. The resulting order-6
//! filter is held both as a single rational function (seven `b`, seven `a`
//! coefficients) and as a cascade of three second-order sections.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, Sample};

/// Prototype order supported by the fixed seven-tap recurrence.
pub const ORDER: usize = 3;
/// Coefficients per side of the digital transfer function.
pub const TAPS: usize = 2 * ORDER + 1;

const PAIR_TOL: f64 = 1e-12;

/// One biquad: `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderSection {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl SecondOrderSection {
    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        eval_poly(&self.b, z_inv) / eval_poly(&self.a, z_inv)
    }
}

/// Digital bandpass transfer function in direct and cascaded form.
#[derive(Debug, Clone, PartialEq)]
pub struct BandpassDesign {
    pub b: [f64; TAPS],
    pub a: [f64; TAPS],
    pub low_hz: f64,
    pub high_hz: f64,
    pub fs: f64,
    /// Empty for designs imported from bare coefficients.
    pub sos: Vec<SecondOrderSection>,
    pub zeros: Vec<Complex64>,
    pub poles: Vec<Complex64>,
    pub gain: f64,
}

fn check_band(low_hz: f64, high_hz: f64, fs: f64) -> Result<()> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::Parameter(format!("fs must be positive, got {fs}")));
    }
    if !(low_hz.is_finite() && high_hz.is_finite() && low_hz > 0.0) {
        return Err(Error::Parameter(format!(
            "band edges must be positive, got {low_hz}..{high_hz} Hz"
        )));
    }
    if low_hz >= high_hz {
        return Err(Error::Parameter(format!(
            "low edge {low_hz} Hz must be below high edge {high_hz} Hz"
        )));
    }
    if high_hz >= fs / 2.0 {
        return Err(Error::Parameter(format!(
            "high edge {high_hz} Hz must be below the Nyquist frequency {} Hz",
            fs / 2.0
        )));
    }
    Ok(())
}

/// Expands `prod (1 - r z^-1)` into coefficients of `z^-i`.
fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= ci * r;
        }
        c = next;
    }
    c
}

fn real_coeffs<const N: usize>(c: &[Complex64]) -> [f64; N] {
    let mut out = [0.0; N];
    for (o, v) in out.iter_mut().zip(c) {
        *o = v.re;
    }
    out
}

fn eval_poly(c: &[f64], z_inv: Complex64) -> Complex64 {
    // Horner in z^-1
    c.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * z_inv + ci)
}

/// Designs the digital Butterworth bandpass for `low_hz..high_hz` at `fs`.
///
/// Only `order == 3` is accepted.
pub fn design_butterworth_bandpass(
    low_hz: f64,
    high_hz: f64,
    fs: f64,
    order: usize,
) -> Result<BandpassDesign> {
    if order != ORDER {
        return Err(Error::Parameter(format!(
            "only third-order bandpass designs are supported, got order {order}"
        )));
    }
    check_band(low_hz, high_hz, fs)?;

    let fs2 = 2.0 * fs;
    let warp = |f: f64| fs2 * (PI * f / fs).tan();
    let (w1, w2) = (warp(low_hz), warp(high_hz));
    let bw = w2 - w1;
    let wo = (w1 * w2).sqrt();

    // analog Butterworth prototype, unit cutoff
    let n = order as i32;
    let proto: Vec<Complex64> = (0..n)
        .map(|i| {
            let m = (-n + 1 + 2 * i) as f64;
            -Complex64::from_polar(1.0, PI * m / (2.0 * n as f64))
        })
        .collect();

    // lowpass -> bandpass: each pole splits in two, `order` zeros land at s = 0
    let mut analog_poles = Vec::with_capacity(2 * order);
    for &p in &proto {
        let shifted = p * (bw / 2.0);
        let d = (shifted * shifted - wo * wo).sqrt();
        analog_poles.push(shifted + d);
        analog_poles.push(shifted - d);
    }
    let analog_gain = bw.powi(n);

    // bilinear transform; the zeros at infinity map to z = -1
    let bilinear = |s: Complex64| (fs2 + s) / (fs2 - s);
    let poles: Vec<Complex64> = analog_poles.iter().map(|&p| bilinear(p)).collect();
    let mut zeros = vec![Complex64::new(1.0, 0.0); order];
    zeros.extend(std::iter::repeat_n(Complex64::new(-1.0, 0.0), order));
    let denom: Complex64 = analog_poles.iter().map(|&p| fs2 - p).product();
    let gain = (analog_gain * fs2.powi(n) / denom).re;

    let b_poly = poly_from_roots(&zeros);
    let mut b: [f64; TAPS] = real_coeffs(&b_poly);
    for v in &mut b {
        *v *= gain;
    }
    let a: [f64; TAPS] = real_coeffs(&poly_from_roots(&poles));
    let sos = pair_sections(&zeros, &poles, gain);

    Ok(BandpassDesign {
        b,
        a,
        low_hz,
        high_hz,
        fs,
        sos,
        zeros,
        poles,
        gain,
    })
}

fn is_real(z: Complex64) -> bool {
    z.im.abs() <= PAIR_TOL * z.norm().max(1.0)
}

/// Groups poles into conjugate (or real) pairs and gives each pair its two
/// nearest remaining zeros, starting with the pair closest to the unit
/// circle. That pair ends up last in the cascade.
fn pair_sections(zeros: &[Complex64], poles: &[Complex64], gain: f64) -> Vec<SecondOrderSection> {
    let mut pairs: Vec<[Complex64; 2]> = Vec::new();
    let mut reals: Vec<Complex64> = Vec::new();
    for &p in poles {
        if is_real(p) {
            reals.push(Complex64::new(p.re, 0.0));
        } else if p.im > 0.0 {
            pairs.push([p, p.conj()]);
        }
    }
    reals.sort_by(|x, y| (1.0 - x.norm()).total_cmp(&(1.0 - y.norm())));
    for chunk in reals.chunks(2) {
        match *chunk {
            [x, y] => pairs.push([x, y]),
            [x] => pairs.push([x, Complex64::new(0.0, 0.0)]),
            _ => unreachable!(),
        }
    }
    pairs.sort_by(|x, y| (1.0 - x[0].norm()).total_cmp(&(1.0 - y[0].norm())));

    let mut remaining: Vec<Complex64> = zeros.to_vec();
    let take_nearest = |target: Complex64, remaining: &mut Vec<Complex64>, real_only: bool| {
        let pick = remaining
            .iter()
            .enumerate()
            .filter(|(_, z)| !real_only || is_real(**z))
            .min_by(|(_, u), (_, v)| (*u - target).norm().total_cmp(&(*v - target).norm()))
            .map(|(i, _)| i);
        match pick {
            Some(i) => remaining.swap_remove(i),
            None => Complex64::new(0.0, 0.0),
        }
    };

    let mut sections: Vec<SecondOrderSection> = pairs
        .iter()
        .map(|pair| {
            let z1 = take_nearest(pair[0], &mut remaining, false);
            let z2 = if is_real(z1) {
                take_nearest(pair[0], &mut remaining, true)
            } else {
                let c = z1.conj();
                if let Some(i) = remaining.iter().position(|&z| (z - c).norm() < 1e-9) {
                    remaining.swap_remove(i)
                } else {
                    c
                }
            };
            SecondOrderSection {
                b: real_coeffs(&poly_from_roots(&[z1, z2])),
                a: real_coeffs(&poly_from_roots(pair)),
            }
        })
        .collect();
    sections.reverse();
    if let Some(first) = sections.first_mut() {
        for v in &mut first.b {
            *v *= gain;
        }
    }
    sections
}

/// Jury / Schur-Cohn step-down test: true when every root of `a` (as a
/// polynomial in `z^-1` with leading term `a[0]`) lies strictly inside the
/// unit circle.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn is_stable(a: &[f64]) -> bool {
    if a.is_empty() || a[0] == 0.0 {
        return false;
    }
    let mut c: Vec<f64> = a.iter().map(|v| v / a[0]).collect();
    while c.len() > 1 {
        let m = c.len() - 1;
        let k = c[m];
        if !(k.abs() < 1.0) {
            return false;
        }
        let denom = 1.0 - k * k;
        c = (0..m).map(|i| (c[i] - k * c[m - i]) / denom).collect();
    }
    true
}

impl BandpassDesign {
    /// Wraps externally supplied coefficients. No cascade form is derived, so
    /// such designs run through the direct-form realization only.
    pub fn from_coefficients(
        b: [f64; TAPS],
        a: [f64; TAPS],
        low_hz: f64,
        high_hz: f64,
        fs: f64,
    ) -> Result<Self> {
        check_band(low_hz, high_hz, fs)?;
        if b.iter().chain(&a).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("coefficients must be finite".into()));
        }
        if a[0] == 0.0 {
            return Err(Error::Parameter("a_0 must be non-zero".into()));
        }
        if !is_stable(&a) {
            return Err(Error::Parameter(
                "denominator has roots on or outside the unit circle".into(),
            ));
        }
        Ok(BandpassDesign {
            b,
            a,
            low_hz,
            high_hz,
            fs,
            sos: Vec::new(),
            zeros: Vec::new(),
            poles: Vec::new(),
            gain: b[0] / a[0],
        })
    }

    pub fn has_sections(&self) -> bool {
        !self.sos.is_empty()
    }

    /// Frames after a state reset during which outputs are treated as transient:
    /// `ceil(3 fs / low_hz)`.
    pub fn settling_frames(&self) -> usize {
        (3.0 * self.fs / self.low_hz).ceil() as usize
    }

    /// Transfer function on the unit circle. Designed filters are evaluated in
    /// factored form, which keeps the zeros at DC and Nyquist exact; imported
    /// coefficient sets fall back to the polynomial ratio.
    pub fn response_at(&self, freq_hz: f64) -> Complex64 {
        let z_inv = unit_circle_inv(freq_hz, self.fs);
        if self.zeros.is_empty() && self.poles.is_empty() {
            return eval_poly(&self.b, z_inv) / eval_poly(&self.a, z_inv);
        }
        let num: Complex64 = self.zeros.iter().map(|&z| 1.0 - z * z_inv).product();
        let den: Complex64 = self.poles.iter().map(|&p| 1.0 - p * z_inv).product();
        self.gain * num / den
    }

    pub fn sos_response_at(&self, freq_hz: f64) -> Complex64 {
        let z_inv = unit_circle_inv(freq_hz, self.fs);
        self.sos.iter().map(|s| s.response(z_inv)).product()
    }

    /// Multiplies the cascade back out into single-stage coefficients.
    pub fn expand_sections(&self) -> Option<([f64; TAPS], [f64; TAPS])> {
        if self.sos.is_empty() {
            return None;
        }
        let mut b = vec![1.0];
        let mut a = vec![1.0];
        for s in &self.sos {
            b = convolve(&b, &s.b);
            a = convolve(&a, &s.a);
        }
        b.resize(TAPS, 0.0);
        a.resize(TAPS, 0.0);
        Some((b.try_into().ok()?, a.try_into().ok()?))
    }

    pub fn is_stable(&self) -> bool {
        is_stable(&self.a) && self.sos.iter().all(|s| is_stable(&s.a))
    }

    /// Coefficient table as CSV rows `i,b_i,a_i`, lossless under re-parsing.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,b,a\n");
        for i in 0..TAPS {
            let _ = writeln!(out, "{i},{:?},{:?}", self.b[i], self.a[i]);
        }
        out
    }

    pub fn sos_to_csv(&self) -> String {
        let mut out = String::from("section,b0,b1,b2,a0,a1,a2\n");
        for (i, s) in self.sos.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{:?},{:?},{:?},{:?},{:?},{:?}",
                s.b[0], s.b[1], s.b[2], s.a[0], s.a[1], s.a[2]
            );
        }
        out
    }

    /// Parses the format written by [`BandpassDesign::to_csv`].
    pub fn coefficients_from_csv(text: &str) -> Result<([f64; TAPS], [f64; TAPS])> {
        let bad = |reason: String| Error::Parameter(format!("coefficient table: {reason}"));
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut b = [f64::NAN; TAPS];
        let mut a = [f64::NAN; TAPS];
        for record in reader.records() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            if record.len() != 3 {
                return Err(bad(format!("expected 3 columns, found {}", record.len())));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            let i: usize = record[0]
                .parse()
                .map_err(|e| bad(format!("row index: {e}")))?;
            if i >= TAPS {
                return Err(bad(format!("row index {i} out of range 0..{TAPS}")));
            }
            b[i] = parse(&record[1])?;
            a[i] = parse(&record[2])?;
        }
        if b.iter().chain(&a).any(|v| v.is_nan()) {
            return Err(bad(format!("rows 0..{TAPS} must all be present")));
        }
        Ok((b, a))
    }

    pub fn load_csv(path: &Path, low_hz: f64, high_hz: f64, fs: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (b, a) = Self::coefficients_from_csv(&text)?;
        Self::from_coefficients(b, a, low_hz, high_hz, fs)
    }
}

/// `e^{-j 2 pi f / fs}`, exact at DC and Nyquist.
fn unit_circle_inv(freq_hz: f64, fs: f64) -> Complex64 {
    if freq_hz == 0.0 {
        Complex64::new(1.0, 0.0)
    } else if freq_hz == fs / 2.0 {
        Complex64::new(-1.0, 0.0)
    } else {
        Complex64::from_polar(1.0, -2.0 * PI * freq_hz / fs)
    }
}

fn convolve(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + y.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            out[i + j] += xi * yj;
        }
    }
    out
}

/// Magnitude and phase (radians) of the transfer function at each frequency.
pub fn frequency_response(design: &BandpassDesign, freqs: &[f64]) -> Result<Vec<(f64, f64)>> {
    freqs
        .iter()
        .map(|&f| {
            if !(0.0..=design.fs / 2.0).contains(&f) {
                return Err(Error::Parameter(format!(
                    "frequency {f} Hz outside [0, {}] Hz",
                    design.fs / 2.0
                )));
            }
            let h = design.response_at(f);
            Ok((h.norm(), h.arg()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Realization {
    /// Biquad cascade in transposed direct form II.
    #[default]
    Sos,
    /// The single order-6 recurrence in direct form I.
    Direct,
}

impl std::str::FromStr for Realization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sos" => Ok(Realization::Sos),
            "direct" => Ok(Realization::Direct),
            other => Err(Error::Parameter(format!(
                "unknown realization `{other}` (expected sos or direct)"
            ))),
        }
    }
}

/// Per-pixel IIR state for a whole frame.
///
/// Every pixel runs the same recurrence independently; there is no spatial
/// coupling.
#[derive(Debug, Clone)]
pub struct PixelFilterBank<T: Sample> {
    width: usize,
    height: usize,
    kind: BankKind<T>,
    state: Vec<T>,
    /// Past outputs of the direct form, one run of six per pixel.
    feedback: Vec<f64>,
    frames: u64,
}

#[derive(Debug, Clone)]
enum BankKind<T> {
    /// `b_i / a_0` and `a_i / a_0`. Coefficients, arithmetic and the output
    /// history stay in f64 for every sample type; past inputs are stored at
    /// the sample precision.
    Direct { b: [f64; TAPS], a: [f64; TAPS] },
    /// `[b0, b1, b2, a1, a2]` per section; two state values per section.
    Sos { sections: Vec<[T; 5]> },
}

const DIRECT_STATE: usize = TAPS - 1;

impl<T: Sample> PixelFilterBank<T> {
    pub fn new(
        design: &BandpassDesign,
        realization: Realization,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(
                "filter bank needs a non-empty frame".into(),
            ));
        }
        if !is_stable(&design.a) {
            return Err(Error::Parameter("bandpass design is unstable".into()));
        }
        let (kind, per_pixel) = match realization {
            Realization::Direct => {
                let a0 = design.a[0];
                let b = design.b.map(|v| v / a0);
                let a = design.a.map(|v| v / a0);
                (BankKind::Direct { b, a }, DIRECT_STATE)
            }
            Realization::Sos => {
                if design.sos.is_empty() {
                    return Err(Error::Parameter(
                        "design carries no second-order sections; use the direct realization"
                            .into(),
                    ));
                }
                let sections: Vec<[T; 5]> = design
                    .sos
                    .iter()
                    .map(|s| {
                        let a0 = s.a[0];
                        [
                            s.b[0] / a0,
                            s.b[1] / a0,
                            s.b[2] / a0,
                            s.a[1] / a0,
                            s.a[2] / a0,
                        ]
                        .map(T::from_f64)
                    })
                    .collect();
                let n = sections.len();
                (BankKind::Sos { sections }, 2 * n)
            }
        };
        Ok(PixelFilterBank {
            width,
            height,
            kind,
            state: vec![T::zero(); per_pixel * width * height],
            feedback: match realization {
                Realization::Direct => vec![0.0; DIRECT_STATE * width * height],
                Realization::Sos => Vec::new(),
            },
            frames: 0,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn realization(&self) -> Realization {
        match self.kind {
            BankKind::Direct { .. } => Realization::Direct,
            BankKind::Sos { .. } => Realization::Sos,
        }
    }

    /// Frames filtered since construction or the last reset.
    pub fn frames_processed(&self) -> u64 {
        self.frames
    }

    pub fn reset(&mut self) {
        self.state.fill(T::zero());
        self.feedback.fill(0.0);
        self.frames = 0;
    }

    pub fn state_bytes(&self) -> usize {
        self.state.len() * std::mem::size_of::<T>()
            + self.feedback.len() * std::mem::size_of::<f64>()
    }

    /// Filters one frame; the output keeps the input's index and timestamp.
    pub fn process(&mut self, input: &Frame<T>) -> Result<Frame<T>> {
        input.check_shape(self.width, self.height)?;
        let mut out = vec![T::zero(); self.width * self.height];
        let width = self.width;
        let per_pixel = self.state.len() / (self.width * self.height);
        let rows = input
            .data()
            .par_chunks(width)
            .zip(out.par_chunks_mut(width))
            .zip(self.state.par_chunks_mut(width * per_pixel));
        match &self.kind {
            BankKind::Direct { b, a } => rows
                .zip(self.feedback.par_chunks_mut(width * DIRECT_STATE))
                .for_each(|(((x_row, y_row), s_row), f_row)| {
                    let states = s_row
                        .chunks_exact_mut(per_pixel)
                        .zip(f_row.chunks_exact_mut(DIRECT_STATE));
                    for ((&x, y), (xs, ys)) in x_row.iter().zip(y_row).zip(states) {
                        *y = direct_step(b, a, xs, ys, x);
                    }
                }),
            BankKind::Sos { sections } => rows.for_each(|((x_row, y_row), s_row)| {
                for ((&x, y), s) in x_row
                    .iter()
                    .zip(y_row)
                    .zip(s_row.chunks_exact_mut(per_pixel))
                {
                    *y = sos_step(sections, s, x);
                }
            }),
        }
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "bandpass",
                index: input.index,
                x: i % width,
                y: i / width,
            });
        }
        self.frames += 1;
        Frame::with_index(self.width, self.height, input.index, input.timestamp, out)
    }
}

#[inline(always)]
fn direct_step<T: Sample>(
    b: &[f64; TAPS],
    a: &[f64; TAPS],
    xs: &mut [T],
    ys: &mut [f64],
    x: T,
) -> T {
    let mut ff = b[0] * x.to_f64();
    for i in 1..TAPS {
        ff += b[i] * xs[i - 1].to_f64();
    }
    let mut fb = 0.0;
    for i in 1..TAPS {
        fb += a[i] * ys[i - 1];
    }
    let y = ff - fb;
    xs.copy_within(0..TAPS - 2, 1);
    xs[0] = x;
    ys.copy_within(0..TAPS - 2, 1);
    ys[0] = y;
    T::from_f64(y)
}

#[inline(always)]
fn sos_step<T: Sample>(sections: &[[T; 5]], s: &mut [T], x: T) -> T {
    let mut v = x;
    for (c, z) in sections.iter().zip(s.chunks_exact_mut(2)) {
        let y = c[0] * v + z[0];
        z[0] = c[1] * v - c[3] * y + z[1];
        z[1] = c[2] * v - c[4] * y;
        v = y;
    }
    v
}

/// Runs a frame stream through a fresh, zero-initialized bank.
pub fn apply_bandpass_stream<'a, T, I>(
    frames: I,
    design: &'a BandpassDesign,
    realization: Realization,
) -> impl Iterator<Item = Result<Frame<T>>> + 'a
where
    T: Sample,
    I: IntoIterator<Item = Frame<T>>,
    I::IntoIter: 'a,
{
    let mut bank: Option<PixelFilterBank<T>> = None;
    let mut failed = false;
    frames.into_iter().map_while(move |frame| {
        if failed {
            return None;
        }
        let res = match &mut bank {
            Some(b) => b.process(&frame),
            None => PixelFilterBank::new(design, realization, frame.width(), frame.height())
                .and_then(|b| bank.insert(b).process(&frame)),
        };
        failed = res.is_err();
        Some(res)
    })
}

/// Biquad-cascade variant of [`apply_bandpass_stream`].
pub fn apply_bandpass_sos_stream<'a, T, I>(
    frames: I,
    design: &'a BandpassDesign,
) -> impl Iterator<Item = Result<Frame<T>>> + 'a
where
    T: Sample,
    I: IntoIterator<Item = Frame<T>>,
    I::IntoIter: 'a,
{
    apply_bandpass_stream(frames, design, Realization::Sos)
}

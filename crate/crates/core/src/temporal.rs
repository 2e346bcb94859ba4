//! Temporal kernels and their streaming application along the time axis.
//!
//! The acceleration component of the intensity signal is isolated with a
//! difference of Gaussians, `G(sigma/2, t) - G(2 sigma, t)`, used as a cheap
//! stand-in for the second temporal derivative of a Gaussian. A first-order
//! Gaussian derivative kernel serves as the linear-component baseline.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    /// Difference of Gaussians (second-derivative surrogate).
    #[serde(rename = "dog")]
    Dog,
    /// First derivative of a Gaussian (linear-component baseline).
    #[serde(rename = "gaussian-derivative-1", alias = "deriv1")]
    GaussianDerivative1,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Dog => "dog",
            KernelKind::GaussianDerivative1 => "gaussian-derivative-1",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dog" => Ok(KernelKind::Dog),
            "deriv1" | "gaussian-derivative-1" => Ok(KernelKind::GaussianDerivative1),
            other => Err(Error::Parameter(format!(
                "unknown kernel kind `{other}` (expected dog or deriv1)"
            ))),
        }
    }
}

/// Temporal scale (in frames) matched to a motion frequency:
/// `sigma = fs / (4 fd sqrt(2))`.
pub fn compute_sigma(fd: f64, fs: f64) -> Result<f64> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::Parameter(format!("fs must be positive, got {fs}")));
    }
    if !(fd.is_finite() && fd > 0.0) {
        return Err(Error::Parameter(format!("fd must be positive, got {fd}")));
    }
    if fd >= fs / 2.0 {
        return Err(Error::Parameter(format!(
            "fd = {fd} Hz is at or above the Nyquist frequency {} Hz",
            fs / 2.0
        )));
    }
    Ok(fs / (4.0 * fd * SQRT_2))
}

/// Half-width of every kernel built for `sigma`: three standard deviations of
/// the wider Gaussian (`2 sigma`), rounded up.
pub fn kernel_radius(sigma: f64) -> usize {
    ((3.0 * 2.0 * sigma).ceil() as usize).max(1)
}

/// A discrete odd-length temporal kernel, `taps[radius + k]` weighting offset `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalKernel {
    taps: Vec<f64>,
    radius: usize,
    sigma: f64,
    kind: KernelKind,
    fd: Option<f64>,
    fs: Option<f64>,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Parameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(())
}

/// Unit-sum Gaussian with standard deviation `std`, sampled on `-radius..=radius`.
fn sampled_gaussian(std: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * std * std)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Rebuilds `taps` from its non-negative half so the symmetry is exact.
fn mirror(taps: &mut [f64], radius: usize, odd: bool) {
    for k in 1..=radius {
        let v = taps[radius + k];
        taps[radius - k] = if odd { -v } else { v };
    }
    if odd {
        taps[radius] = 0.0;
    }
}

pub fn build_dog_kernel(sigma: f64) -> Result<TemporalKernel> {
    check_sigma(sigma)?;
    let radius = kernel_radius(sigma);
    let narrow = sampled_gaussian(sigma / 2.0, radius);
    let wide = sampled_gaussian(2.0 * sigma, radius);
    let mut taps: Vec<f64> = narrow.iter().zip(&wide).map(|(a, b)| a - b).collect();
    mirror(&mut taps, radius, false);
    // push the rounding residue into the center tap so the sum is zero to the ulp
    let residue: f64 = taps.iter().sum();
    taps[radius] -= residue;
    Ok(TemporalKernel {
        taps,
        radius,
        sigma,
        kind: KernelKind::Dog,
        fd: None,
        fs: None,
    })
}

pub fn build_derivative1_kernel(sigma: f64) -> Result<TemporalKernel> {
    check_sigma(sigma)?;
    let radius = kernel_radius(sigma);
    let g = sampled_gaussian(sigma, radius);
    let r = radius as isize;
    let mut taps: Vec<f64> = (-r..=r)
        .zip(&g)
        .map(|(k, w)| -(k as f64) / (sigma * sigma) * w)
        .collect();
    mirror(&mut taps, radius, true);
    Ok(TemporalKernel {
        taps,
        radius,
        sigma,
        kind: KernelKind::GaussianDerivative1,
        fd: None,
        fs: None,
    })
}

impl TemporalKernel {
    /// Builds a kernel of `kind` tuned to motion frequency `fd` at frame rate `fs`.
    ///
    /// The derivative baseline is rescaled so its magnitude response at `fd`
    /// equals the DoG kernel's; both pipelines then share the same in-band
    /// sensitivity and differ only in how they treat slower content.
    pub fn for_motion(kind: KernelKind, fd: f64, fs: f64) -> Result<Self> {
        let sigma = compute_sigma(fd, fs)?;
        let dog = build_dog_kernel(sigma)?;
        let mut kernel = match kind {
            KernelKind::Dog => dog,
            KernelKind::GaussianDerivative1 => {
                let d1 = build_derivative1_kernel(sigma)?;
                let target = dog.magnitude_at(fd, fs);
                let own = d1.magnitude_at(fd, fs);
                d1.scaled(target / own)
            }
        };
        kernel.fd = Some(fd);
        kernel.fs = Some(fs);
        Ok(kernel)
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn fd(&self) -> Option<f64> {
        self.fd
    }

    pub fn fs(&self) -> Option<f64> {
        self.fs
    }

    /// Output lag, in frames, of the centered streaming convolution.
    pub fn group_delay(&self) -> usize {
        self.radius
    }

    /// Tap at signed offset `k`.
    pub fn tap(&self, k: isize) -> f64 {
        self.taps[(self.radius as isize + k) as usize]
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for t in &mut self.taps {
            *t *= factor;
        }
        self
    }

    /// Discrete-time Fourier transform `sum_k h[k] e^{-j omega k}` at
    /// `omega` radians per frame.
    pub fn dtft(&self, omega: f64) -> Complex64 {
        let r = self.radius as isize;
        (-r..=r)
            .zip(&self.taps)
            .map(|(k, &h)| Complex64::from_polar(h, -omega * k as f64))
            .sum()
    }

    pub fn magnitude_at(&self, freq_hz: f64, fs: f64) -> f64 {
        self.dtft(2.0 * PI * freq_hz / fs).norm()
    }

    /// Writes `offset,weight` rows with lossless decimal formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("offset,weight\n");
        let r = self.radius as isize;
        for (k, h) in (-r..=r).zip(&self.taps) {
            out.push_str(&format!("{k},{h:?}\n"));
        }
        out
    }
}

/// Ring buffer of the most recent `2 radius + 1` frames, emitting the centered
/// temporal convolution once full.
///
/// The output for input `n` is the filtered frame `n - radius`; the first and
/// last `radius` frames of a stream produce no output.
pub struct TemporalWindow<T: Sample> {
    taps: Vec<T>,
    dc: T,
    radius: usize,
    width: usize,
    height: usize,
    slots: Vec<Vec<T>>,
    stamps: Vec<(u64, f64)>,
    // slot that receives the next frame
    head: usize,
    filled: usize,
}

impl<T: Sample> TemporalWindow<T> {
    pub fn new(kernel: &TemporalKernel, width: usize, height: usize) -> Self {
        let len = kernel.len();
        TemporalWindow {
            taps: kernel.taps.iter().map(|&t| T::from_f64(t)).collect(),
            dc: T::from_f64(kernel.taps.iter().sum()),
            radius: kernel.radius,
            width,
            height,
            slots: vec![vec![T::zero(); width * height]; len],
            stamps: vec![(0, 0.0); len],
            head: 0,
            filled: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn fill_count(&self) -> usize {
        self.filled
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.len()
    }

    pub fn group_delay(&self) -> usize {
        self.radius
    }

    pub fn reset(&mut self) {
        self.head = 0;
        self.filled = 0;
    }

    /// Bytes held by the window buffers.
    pub fn buffer_bytes(&self) -> usize {
        self.slots.len() * self.width * self.height * std::mem::size_of::<T>()
    }

    /// Feeds one frame; returns the convolution centered `radius` frames back
    /// once the window is full.
    pub fn push(&mut self, frame: &Frame<T>) -> Result<Option<Frame<T>>> {
        frame.check_shape(self.width, self.height)?;
        let len = self.len();
        self.slots[self.head].copy_from_slice(frame.data());
        self.stamps[self.head] = (frame.index, frame.timestamp);
        self.head = (self.head + 1) % len;
        self.filled = (self.filled + 1).min(len);
        if !self.is_full() {
            return Ok(None);
        }
        // head now points at the oldest slot
        let center = (self.head + self.radius) % len;
        let (index, timestamp) = self.stamps[center];
        // slot order from newest (tap 0, offset -radius) to oldest
        let order: Vec<&[T]> = (1..=len)
            .map(|i| self.slots[(self.head + len - i) % len].as_slice())
            .collect();
        let mut out = vec![T::zero(); self.width * self.height];
        let width = self.width;
        let (taps, dc, radius) = (&self.taps, self.dc, self.radius);
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(row, out_row)| {
                let lo = row * width;
                if T::REFERENCE {
                    for (tap, slot) in taps.iter().zip(&order) {
                        let src = &slot[lo..lo + width];
                        for (o, &x) in out_row.iter_mut().zip(src) {
                            *o = *o + *tap * x;
                        }
                    }
                } else {
                    let center = &order[radius][lo..lo + width];
                    for (tap, slot) in taps.iter().zip(&order) {
                        let src = &slot[lo..lo + width];
                        for ((o, &x), &c) in out_row.iter_mut().zip(src).zip(center) {
                            *o = *o + *tap * (x - c);
                        }
                    }
                    if dc != T::zero() {
                        for (o, &c) in out_row.iter_mut().zip(center) {
                            *o = *o + dc * c;
                        }
                    }
                }
            });
        Frame::with_index(self.width, self.height, index, timestamp, out).map(Some)
    }
}

/// Applies a kernel to a whole stream; output frames carry the index of the
/// input frame they are centered on.
pub fn stream_temporal_filter<T, I>(
    frames: I,
    kernel: &TemporalKernel,
) -> impl Iterator<Item = Result<Frame<T>>>
where
    T: Sample,
    I: IntoIterator<Item = Frame<T>>,
{
    let kernel = kernel.clone();
    let mut window: Option<TemporalWindow<T>> = None;
    frames.into_iter().filter_map(move |frame| {
        let w = window
            .get_or_insert_with(|| TemporalWindow::new(&kernel, frame.width(), frame.height()));
        w.push(&frame).transpose()
    })
}

//! Timestamped grayscale frames and stream headers.
//!
//! Intensities keep their native scale (0-255 for 8-bit sources) all the way
//! through the pipeline; the normalization constants are calibrated to it.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating-point sample type used for processing.
///
/// `f32` is the production precision. `f64` exists as a reference path for
/// tests and equivalence checks.
pub trait Sample: Float + Sum + Debug + Default + Send + Sync + 'static {
    const NAME: &'static str;
    /// Reference precision: temporal sums are evaluated literally as
    /// `sum(tap * x)`. Other precisions accumulate `tap * (x - center)` so
    /// constant inputs cancel exactly.
    const REFERENCE: bool;

    fn from_f64(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).unwrap_or_else(Self::nan)
    }

    fn to_f64(self) -> f64 {
        <Self as num_traits::ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Sample for f32 {
    const NAME: &'static str = "f32";
    const REFERENCE: bool = false;
}

impl Sample for f64 {
    const NAME: &'static str = "f64";
    const REFERENCE: bool = true;
}

/// One grayscale frame: a row-major `width x height` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    width: usize,
    height: usize,
    pub index: u64,
    /// Seconds since stream start.
    pub timestamp: f64,
    data: Vec<T>,
}

impl<T: Copy> Frame<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        Self::with_index(width, height, 0, 0.0, data)
    }

    pub fn with_index(
        width: usize,
        height: usize,
        index: u64,
        timestamp: f64,
        data: Vec<T>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Parameter(format!(
                "frame data has {} values, expected {}x{} = {}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(Frame {
            width,
            height,
            index,
            timestamp,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn same_shape<U>(&self, other: &Frame<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Applies `f` to every pixel, keeping index and timestamp.
    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Frame<U> {
        Frame {
            width: self.width,
            height: self.height,
            index: self.index,
            timestamp: self.timestamp,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub(crate) fn check_shape(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                index: self.index,
                width,
                height,
                got_width: self.width,
                got_height: self.height,
            });
        }
        Ok(())
    }
}

/// Frames as stored on disk: unsigned integer samples of 8 or 16 bits.
pub type RawFrame = Frame<u16>;

impl RawFrame {
    /// Promotes stored integer samples to floating intensity without rescaling.
    pub fn to_float<T: Sample>(&self) -> Frame<T> {
        self.map(|v| T::from_f64(f64::from(v)))
    }
}

/// Convenience alias for [`RawFrame::to_float`] at production precision.
pub fn to_float_intensity(frame: &RawFrame) -> Frame<f32> {
    frame.to_float()
}

/// Rounds a real-valued frame to integer samples of the given bit depth.
///
/// Values outside `0..=2^bit_depth - 1` (after rounding) or non-finite values
/// are rejected rather than wrapped.
pub fn quantize<T: Sample>(frame: &Frame<T>, bit_depth: u8) -> Result<RawFrame> {
    let max = max_value(bit_depth)? as f64;
    let mut data = Vec::with_capacity(frame.len());
    for (i, &v) in frame.data().iter().enumerate() {
        let r = v.to_f64().round();
        if !(0.0..=max).contains(&r) {
            return Err(Error::OutOfRange {
                index: frame.index,
                x: i % frame.width,
                y: i / frame.width,
                value: v.to_f64(),
                bit_depth,
            });
        }
        data.push(r as u16);
    }
    Ok(Frame {
        width: frame.width,
        height: frame.height,
        index: frame.index,
        timestamp: frame.timestamp,
        data,
    })
}

pub(crate) fn max_value(bit_depth: u8) -> Result<u16> {
    match bit_depth {
        8 => Ok(u8::MAX as u16),
        16 => Ok(u16::MAX),
        other => Err(Error::Parameter(format!(
            "bit depth must be 8 or 16, got {other}"
        ))),
    }
}

/// Stream-level metadata shared by every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_count: Option<u64>,
    #[serde(default = "default_bit_depth")]
    pub bit_depth: u8,
}

fn default_bit_depth() -> u8 {
    8
}

impl StreamHeader {
    pub fn new(width: usize, height: usize, fps: f64, bit_depth: u8) -> Result<Self> {
        let header = StreamHeader {
            width,
            height,
            fps,
            frame_count: None,
            bit_depth,
        };
        header.validate()?;
        Ok(header)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Parameter(format!(
                "stream dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Parameter(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        max_value(self.bit_depth)?;
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn timestamp(&self, index: u64) -> f64 {
        index as f64 / self.fps
    }

    pub fn max_value(&self) -> u16 {
        max_value(self.bit_depth).unwrap_or(u16::MAX)
    }

    /// Builds a frame at `index` with this header's dimensions and time base.
    pub fn frame<T: Copy>(&self, index: u64, data: Vec<T>) -> Result<Frame<T>> {
        Frame::with_index(self.width, self.height, index, self.timestamp(index), data)
    }
}

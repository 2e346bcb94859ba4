//! Streaming extraction of pulsation maps from grayscale ultrasound frame
//! sequences.
//!
//! Each frame passes through three stages: a temporal difference-of-Gaussians
//! that keeps the acceleration part of intensity change, a third-order
//! Butterworth bandpass run per pixel, and a gamma-style normalization to an
//! 8-bit visual range. [`phantom`] produces synthetic sequences with known
//! ground truth and [`metrics`] quantifies localization and latency.

pub mod bandpass;
pub mod config;
pub mod error;
pub mod frame;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod render;
pub mod temporal;

pub use bandpass::{
    design_butterworth_bandpass, frequency_response, BandpassDesign, PixelFilterBank, Realization,
    SecondOrderSection,
};
pub use config::PipelineConfig;
pub use error::{Error, ErrorKind, Result};
pub use frame::{quantize, to_float_intensity, Frame, RawFrame, Sample, StreamHeader};
pub use io::{
    read_frame_sequence, write_frame_sequence, FrameReader, SequenceFormat, SequenceWriter,
};
pub use metrics::{
    energy_concentration, measure_latency, measure_tone_gain, EnergyConcentration, LatencyStats,
    ToneStage,
};
pub use phantom::{
    bench_phantom, default_carotid_phantom, default_radial_phantom, default_two_artery_phantom,
    generate_phantom, DriftEdge, FrameMasks, GroundTruth, MaskSource, Phantom, PhantomFrames,
    PhantomSpec, PulsatingRing, SpeckleParams,
};
pub use pipeline::{extract_pulsation_maps, Pipeline, PipelineOutput, StageTimings};
pub use render::{
    normalize, render_heatmap, HeatMapLut, NormalizationParams, Preset, PulsationMap,
};
pub use temporal::{
    build_derivative1_kernel, build_dog_kernel, compute_sigma, stream_temporal_filter, KernelKind,
    TemporalKernel, TemporalWindow,
};

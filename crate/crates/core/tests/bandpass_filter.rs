use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use pulsemap::bandpass::apply_bandpass_sos_stream;
use pulsemap::metrics::{measure_tone_gain, ToneStage};
use pulsemap::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reference coefficients for a third-order 0.9-2.0 Hz band at 30 Hz, from an
/// independent pre-warped bilinear Butterworth design (scipy.signal.butter).
const REF_B: [f64; 7] = [
    0.0012296074332691271,
    0.0,
    -0.0036888222998073816,
    0.0,
    0.0036888222998073816,
    0.0,
    -0.0012296074332691271,
];
const REF_A: [f64; 7] = [
    1.0,
    -5.32196410527455,
    12.008354407559516,
    -14.698137037296075,
    10.292272704042405,
    -3.910286169717504,
    0.6301484278114351,
];

/// |B(z)/A(z)| on the unit circle, straight from the polynomial coefficients.
fn oracle_mag(b: &[f64], a: &[f64], f: f64, fs: f64) -> f64 {
    let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f / fs);
    let poly = |c: &[f64]| {
        c.iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &v| acc * z_inv + v)
    };
    (poly(b) / poly(a)).norm()
}

fn db(x: f64) -> f64 {
    20.0 * x.log10()
}

fn paper() -> BandpassDesign {
    design_butterworth_bandpass(0.9, 2.0, 30.0, 3).unwrap()
}

fn peak(b: &[f64], a: &[f64], fs: f64) -> f64 {
    (1..=15000)
        .map(|i| oracle_mag(b, a, i as f64 * fs / 2.0 / 15000.0, fs))
        .fold(0.0, f64::max)
}

fn run<T: Sample>(xs: &[T], design: &BandpassDesign, r: Realization) -> Vec<T> {
    let frames = xs
        .iter()
        .enumerate()
        .map(|(n, &x)| Frame::with_index(1, 1, n as u64, 0.0, vec![x]).unwrap());
    bandpass::apply_bandpass_stream(frames, design, r)
        .map(|f| f.unwrap().data()[0])
        .collect()
}

#[test]
fn coefficients_match_reference_design() {
    let d = paper();
    for (x, y) in d.b.iter().zip(REF_B) {
        assert!((x - y).abs() < 1e-12, "b {x} vs {y}");
    }
    for (x, y) in d.a.iter().zip(REF_A) {
        assert!((x - y).abs() < 1e-10, "a {x} vs {y}");
    }
}

#[test]
fn edges_are_minus_three_db() {
    let d = paper();
    let pk = peak(&d.b, &d.a, 30.0);
    for edge in [0.9, 2.0] {
        let rel = db(oracle_mag(&d.b, &d.a, edge, 30.0) / pk);
        assert!((rel + 3.0).abs() <= 0.3, "{edge} Hz at {rel} dB");
    }
}

#[test]
fn dc_and_nyquist_vanish() {
    let d = paper();
    let pk = peak(&d.b, &d.a, 30.0);
    for f in [0.0, 15.0] {
        assert!(db(oracle_mag(&d.b, &d.a, f, 30.0) / pk) < -40.0);
    }
    let r = frequency_response(&d, &[0.0, 15.0]).unwrap();
    assert_eq!(r[0].0, 0.0);
    assert_eq!(r[1].0, 0.0);
}

#[test]
fn stopband_attenuation() {
    let d = paper();
    let pk = peak(&d.b, &d.a, 30.0);
    for f in [0.3, 4.0] {
        let rel = db(oracle_mag(&d.b, &d.a, f, 30.0) / pk);
        assert!(rel <= -20.0, "{f} Hz only {rel} dB down");
    }
}

#[test]
fn geometric_center_near_peak() {
    let d = paper();
    let pk = peak(&d.b, &d.a, 30.0);
    let r = frequency_response(&d, &[1.8f64.sqrt()]).unwrap();
    assert!(db(r[0].0 / pk).abs() <= 0.5);
}

#[test]
fn response_agrees_with_polynomial_oracle() {
    let d = paper();
    let freqs: Vec<f64> = (0..=300).map(|i| i as f64 * 0.05).collect();
    for (f, (mag, _)) in freqs.iter().zip(frequency_response(&d, &freqs).unwrap()) {
        let want = oracle_mag(&REF_B, &REF_A, *f, 30.0);
        assert!(
            (mag - want).abs() <= 1e-9 * (1.0 + want),
            "{f}: {mag} vs {want}"
        );
    }
    assert!(frequency_response(&d, &[15.5]).is_err());
    assert!(frequency_response(&d, &[-0.1]).is_err());
}

#[test]
fn bad_edges_rejected() {
    assert!(design_butterworth_bandpass(2.0, 0.9, 30.0, 3).is_err());
    assert!(design_butterworth_bandpass(0.9, 15.0, 30.0, 3).is_err());
    assert!(design_butterworth_bandpass(0.9, 2.0, 30.0, 2).is_err());
}

#[test]
fn impulse_response_spectrum_matches() {
    let d = paper();
    let n = 4096;
    let mut x = vec![0.0f64; n];
    x[0] = 1.0;
    for r in [Realization::Direct, Realization::Sos] {
        let h = run(&x, &d, r);
        for k in [10usize, 100, 180, 205, 300, 1000, 2047] {
            let w = 2.0 * PI * k as f64 / n as f64;
            let dft = h
                .iter()
                .enumerate()
                .fold(Complex64::new(0.0, 0.0), |acc, (i, v)| {
                    acc + Complex64::from_polar(*v, -w * i as f64)
                })
                .norm();
            let want = oracle_mag(&REF_B, &REF_A, k as f64 * 30.0 / n as f64, 30.0);
            assert!(
                (dft - want).abs() <= 1e-6 * want.max(1e-3),
                "{r:?} bin {k}: {dft} vs {want}"
            );
        }
    }
}

#[test]
fn tone_gain_at_design_frequency() {
    let d = paper();
    let want = oracle_mag(&REF_B, &REF_A, 1.5, 30.0);
    let omega = 2.0 * PI * 1.5 / 30.0;
    let x: Vec<f64> = (0..1000).map(|n| (omega * n as f64).sin()).collect();
    let y = run(&x, &d, Realization::Direct);
    let measured = y[600..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!((measured / want - 1.0).abs() < 0.01, "{measured} vs {want}");
    for r in [Realization::Direct, Realization::Sos] {
        let g = measure_tone_gain(&ToneStage::Bandpass(d.clone(), r), 1.5, 30.0, 600).unwrap();
        assert!((g / want - 1.0).abs() < 1e-3);
    }
}

#[test]
fn tone_gain_stopband_and_dc() {
    let d = paper();
    let stage = ToneStage::Bandpass(d.clone(), Realization::Sos);
    let pk = peak(&d.b, &d.a, 30.0);
    let g = measure_tone_gain(&stage, 0.3, 30.0, 1200).unwrap();
    assert!(db(g / pk) <= -20.0);
    assert!(measure_tone_gain(&stage, 0.0, 30.0, 3000).unwrap() < 1e-6);
}

fn white_noise(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_rel_dev(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

#[test]
fn realizations_agree_on_white_noise() {
    let d = paper();
    let x = white_noise(7, 1000);
    let direct = run(&x, &d, Realization::Direct);
    let sos = run(&x, &d, Realization::Sos);
    assert!(max_rel_dev(&direct, &sos) <= 1e-9);

    let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
    let to64 = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<_>>();
    let d32 = to64(run(&x32, &d, Realization::Direct));
    let s32 = to64(run(&x32, &d, Realization::Sos));
    assert!(max_rel_dev(&d32, &s32) <= 1e-4);
}

#[test]
fn zero_in_zero_out() {
    let d = paper();
    for r in [Realization::Direct, Realization::Sos] {
        assert!(run(&[0.0f32; 300], &d, r).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn sos_stream_helper_matches_bank() {
    let d = paper();
    let x = white_noise(3, 200);
    let frames = x
        .iter()
        .enumerate()
        .map(|(n, &v)| Frame::with_index(1, 1, n as u64, 0.0, vec![v]).unwrap());
    let out: Vec<f64> = apply_bandpass_sos_stream(frames, &d)
        .map(|f| f.unwrap().data()[0])
        .collect();
    assert_eq!(out, run(&x, &d, Realization::Sos));
}

#[test]
fn output_index_follows_input() {
    let d = paper();
    let frames = (5..15u64).map(|n| Frame::with_index(2, 2, n, n as f64, vec![1.0f32; 4]).unwrap());
    let idx: Vec<u64> = bandpass::apply_bandpass_stream(frames, &d, Realization::Sos)
        .map(|f| f.unwrap().index)
        .collect();
    assert_eq!(idx, (5..15).collect::<Vec<_>>());
}

#[test]
fn pixel_permutation_commutes() {
    let d = paper();
    let (w, h) = (6usize, 4usize);
    let perm: Vec<usize> = (0..w * h).map(|i| (i * 7 + 3) % (w * h)).collect();
    let noise = white_noise(11, 80 * w * h);
    let frames = |permute: bool| -> Vec<Frame<f32>> {
        (0..80)
            .map(|n| {
                let base = &noise[n * w * h..(n + 1) * w * h];
                let data = (0..w * h)
                    .map(|i| (if permute { base[perm[i]] } else { base[i] }) as f32)
                    .collect();
                Frame::with_index(w, h, n as u64, 0.0, data).unwrap()
            })
            .collect()
    };
    for r in [Realization::Direct, Realization::Sos] {
        let plain: Vec<_> = bandpass::apply_bandpass_stream(frames(false), &d, r)
            .map(|f| f.unwrap())
            .collect();
        let permuted: Vec<_> = bandpass::apply_bandpass_stream(frames(true), &d, r)
            .map(|f| f.unwrap())
            .collect();
        for (p, q) in plain.iter().zip(&permuted) {
            for (i, &src) in perm.iter().enumerate() {
                assert_eq!(q.data()[i], p.data()[src]);
            }
        }
    }
}

#[test]
fn coefficient_csv_round_trip_is_bit_exact() {
    let d = paper();
    let (b, a) = BandpassDesign::coefficients_from_csv(&d.to_csv()).unwrap();
    assert_eq!(b, d.b);
    assert_eq!(a, d.a);
    let imported = BandpassDesign::from_coefficients(b, a, 0.9, 2.0, 30.0).unwrap();
    let x = white_noise(5, 300);
    assert_eq!(
        run(&x, &imported, Realization::Direct),
        run(&x, &d, Realization::Direct)
    );
}

#[test]
fn unscaled_denominator_is_divided_out() {
    let d = paper();
    let scale = 4.0;
    let b = d.b.map(|v| v * scale);
    let a = d.a.map(|v| v * scale);
    let imported = BandpassDesign::from_coefficients(b, a, 0.9, 2.0, 30.0).unwrap();
    let x = white_noise(9, 300);
    let y1 = run(&x, &imported, Realization::Direct);
    let y0 = run(&x, &d, Realization::Direct);
    assert!(max_rel_dev(&y0, &y1) < 1e-12);
}

fn legal_band() -> impl Strategy<Value = (f64, f64, f64)> {
    prop::sample::select(vec![25.0, 30.0, 60.0]).prop_flat_map(|fs: f64| {
        let nyq = fs / 2.0;
        (0.02 * nyq..0.9 * nyq).prop_flat_map(move |lo| (Just(lo), lo * 1.05..0.98 * nyq, Just(fs)))
    })
}

proptest! {
    #[test]
    fn every_legal_design_is_stable((lo, hi, fs) in legal_band()) {
        let d = design_butterworth_bandpass(lo, hi, fs, 3).unwrap();
        prop_assert!(d.poles.iter().all(|p| p.norm() < 1.0));
        prop_assert!(bandpass::is_stable(&d.a));
        prop_assert_eq!(d.a[0], 1.0);
        let (b, a) = d.expand_sections().unwrap();
        for i in 0..7 {
            prop_assert!((b[i] - d.b[i]).abs() <= 1e-9 * (1.0 + d.b[i].abs()));
            prop_assert!((a[i] - d.a[i]).abs() <= 1e-9 * (1.0 + d.a[i].abs()));
        }
    }

    #[test]
    fn streaming_filter_is_linear_and_shift_invariant(
        xs in prop::collection::vec(-1.0f32..1.0, 120),
        ys in prop::collection::vec(-1.0f32..1.0, 120),
        a in -2.0f32..2.0,
        b in -2.0f32..2.0,
        shift in 1usize..20,
    ) {
        let d = paper();
        let fx = run(&xs, &d, Realization::Sos);
        let fy = run(&ys, &d, Realization::Sos);
        let mixed: Vec<f32> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
        let fxy = run(&mixed, &d, Realization::Sos);
        let scale = fx.iter().chain(&fy).map(|v| v.abs()).fold(1e-3, f32::max) * (a.abs() + b.abs() + 1.0);
        for i in 0..xs.len() {
            prop_assert!((fxy[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-5 * scale);
        }
        let mut delayed = vec![0.0f32; shift];
        delayed.extend_from_slice(&xs);
        let fd = run(&delayed, &d, Realization::Sos);
        for i in 0..xs.len() {
            prop_assert!((fd[i + shift] - fx[i]).abs() <= 1e-6 * scale);
        }
    }
}

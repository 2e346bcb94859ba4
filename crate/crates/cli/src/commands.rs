use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use pulsemap::io::write_image;
use pulsemap::phantom::named_phantom;
use pulsemap::render::save_heatmap;
use pulsemap::{
    bench_phantom, energy_concentration, extract_pulsation_maps, frequency_response,
    measure_latency, render_heatmap, EnergyConcentration, Error, Frame, FrameMasks, FrameReader,
    KernelKind, MaskSource, Phantom, PhantomSpec, Pipeline, PipelineConfig, RawFrame, Result,
    SequenceFormat, SequenceWriter, StreamHeader,
};

use crate::masks::{DiskMasks, DRIFT_DIR, PULSATION_DIR};

pub const CONFIG_ECHO: &str = "config.toml";
pub const MAP_PREFIX: &str = "pm";
pub const HEATMAP_PREFIX: &str = "hm";

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn check_rate(header: &StreamHeader, config: &PipelineConfig) -> Result<()> {
    if (header.fps - config.fs_hz).abs() > 1e-9 * config.fs_hz {
        return Err(Error::Parameter(format!(
            "stream is {} fps but the pipeline is designed for fs_hz = {}; set fs_hz in the config",
            header.fps, config.fs_hz
        )));
    }
    Ok(())
}

fn load_frames(input: &Path) -> Result<(StreamHeader, Vec<RawFrame>)> {
    let reader = FrameReader::open_auto(input)?;
    let header = reader.header().clone();
    let frames = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, frames))
}

pub fn extract(
    input: &Path,
    output: &Path,
    config: &PipelineConfig,
    format: SequenceFormat,
) -> Result<()> {
    let reader = FrameReader::open_auto(input)?;
    let header = reader.header().clone();
    check_rate(&header, config)?;
    let lut = config.emit_heatmap.then(|| config.lut()).transpose()?;
    let mut pipeline = Pipeline::<f32>::new(config)?;
    create_dir(output)?;
    write_text(&output.join(CONFIG_ECHO), &config.resolved()?.to_toml())?;

    let mut raw = match format {
        SequenceFormat::Raw => {
            let maps = StreamHeader::new(header.width, header.height, header.fps, 8)?;
            Some(SequenceWriter::create(
                output.join(format!("{MAP_PREFIX}.raw")),
                format,
                &maps,
            )?)
        }
        _ => None,
    };
    let (mut frames_in, mut maps_out, mut settling) = (0u64, 0u64, 0u64);
    let mut first_index = None;
    let mut busy = Duration::ZERO;
    for frame in reader {
        let frame = frame?;
        frames_in += 1;
        let Some(out) = pipeline.push_raw(&frame)? else {
            continue;
        };
        busy += out.timings.total();
        let map = out.map;
        maps_out += 1;
        settling += u64::from(map.settling);
        first_index.get_or_insert(map.source_frame_index);
        let index = map.source_frame_index;
        match raw.as_mut() {
            Some(w) => w.write(&map.to_raw())?,
            None => write_image(
                &output.join(format!("{MAP_PREFIX}_{index:06}.{}", format.extension())),
                &map.to_raw(),
                8,
                format,
            )?,
        }
        if let Some(lut) = &lut {
            save_heatmap(
                &output.join(format!("{HEATMAP_PREFIX}_{index:06}.png")),
                &render_heatmap(&map, lut),
            )?;
        }
    }
    if let Some(w) = raw {
        w.finish()?;
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "input = {:?}", input.display().to_string());
    let _ = writeln!(
        summary,
        "width = {}\nheight = {}",
        header.width, header.height
    );
    let _ = writeln!(summary, "frames_in = {frames_in}");
    let _ = writeln!(summary, "maps_out = {maps_out}");
    let _ = writeln!(summary, "settling_maps = {settling}");
    let _ = writeln!(
        summary,
        "window_fill_frames = {}",
        pipeline.kernel().len() - 1
    );
    let _ = writeln!(summary, "group_delay_frames = {}", pipeline.group_delay());
    if let Some(i) = first_index {
        let _ = writeln!(summary, "first_source_frame_index = {i}");
    }
    write_text(&output.join("summary.txt"), &summary)?;
    print!("{summary}");
    if maps_out > 0 {
        println!(
            "# mean compute per map: {:.3} ms",
            busy.as_secs_f64() * 1e3 / maps_out as f64
        );
    }
    Ok(())
}

fn resolve_spec(spec: &str) -> Result<PhantomSpec> {
    let path = Path::new(spec);
    if path.is_file() || spec.ends_with(".toml") {
        PhantomSpec::load(path)
    } else {
        named_phantom(spec)
    }
}

fn write_masks(
    dir: &Path,
    header: &StreamHeader,
    masks: impl Iterator<Item = Frame<bool>>,
) -> Result<()> {
    let header = StreamHeader::new(header.width, header.height, header.fps, 8)?;
    let mut writer = SequenceWriter::create(dir, SequenceFormat::Pgm, &header)?;
    for m in masks {
        writer.write(&FrameMasks::to_raw(&m))?;
    }
    writer.finish().map(|_| ())
}

pub fn phantom(spec: &str, output: &Path, format: SequenceFormat) -> Result<()> {
    let phantom = Phantom::new(resolve_spec(spec)?)?;
    let header = phantom.header();
    let gt = phantom.ground_truth();
    create_dir(output)?;
    let frames = match format {
        SequenceFormat::Raw => output.join("frames.raw"),
        _ => output.join("frames"),
    };
    let mut writer = SequenceWriter::create(&frames, format, &header)?;
    for frame in phantom.quantized_frames() {
        writer.write(&frame)?;
    }
    writer.finish()?;
    let n = phantom.frame_count();
    let pulsation = gt.pulsation_mask();
    write_masks(
        &output.join("gt").join(PULSATION_DIR),
        &header,
        (0..n).map(|_| pulsation.clone()),
    )?;
    write_masks(
        &output.join("gt").join(DRIFT_DIR),
        &header,
        (0..n).map(|i| gt.drift_mask(i)),
    )?;
    write_text(&output.join("phantom.toml"), &phantom.spec().to_toml())?;
    println!(
        "phantom = {:?}\nframes = {n}\nwidth = {}\nheight = {}\nfps = {}\nbit_depth = {}",
        phantom.spec().name,
        header.width,
        header.height,
        header.fps,
        header.bit_depth
    );
    Ok(())
}

const SYNTHETIC_POOL: u64 = 60;

pub fn bench(
    input: Option<&Path>,
    output: &Path,
    config: &PipelineConfig,
    groups: usize,
    frames: usize,
    size: (usize, usize),
) -> Result<()> {
    let pool = match input {
        Some(path) => {
            let (header, frames) = load_frames(path)?;
            check_rate(&header, config)?;
            frames
        }
        None => {
            let phantom = Phantom::new(bench_phantom(size.0, size.1))?;
            (0..SYNTHETIC_POOL).map(|n| phantom.quantized(n)).collect()
        }
    };
    if pool.is_empty() {
        return Err(Error::Insufficient(
            "benchmark input holds no frames".into(),
        ));
    }
    let prime = config.kernel()?.len() - 1;
    let total = groups * (prime + frames);
    let stream = (0..total).map(|i| {
        let mut f = pool[i % pool.len()].clone();
        f.index = i as u64;
        f
    });
    let stats = measure_latency(stream, config, groups, frames)?;
    create_dir(output)?;
    stats.write(&output.join("durations.csv"), &output.join("summary.txt"))?;
    write_text(&output.join(CONFIG_ECHO), &config.resolved()?.to_toml())?;
    print!("{}", stats.summary());
    println!("threads = {}", rayon::current_num_threads());
    Ok(())
}

pub fn design_filter(config: &PipelineConfig, points: usize) -> Result<()> {
    let design = config.bandpass()?;
    if points < 2 {
        return Err(Error::Parameter("--points must be at least 2".into()));
    }
    let nyquist = design.fs / 2.0;
    let mut freqs: Vec<f64> = (0..points)
        .map(|i| nyquist * i as f64 / (points - 1) as f64)
        .collect();
    freqs.extend([
        design.low_hz,
        design.high_hz,
        (design.low_hz * design.high_hz).sqrt(),
    ]);
    freqs.sort_by(f64::total_cmp);
    freqs.dedup();
    let response = frequency_response(&design, &freqs)?;

    println!(
        "# Butterworth bandpass {}-{} Hz at fs {} Hz, {} poles",
        design.low_hz,
        design.high_hz,
        design.fs,
        design.a.len() - 1
    );
    print!("{}", design.to_csv());
    if design.has_sections() {
        println!();
        print!("{}", design.sos_to_csv());
    }
    println!();
    println!("freq_hz,magnitude,db,phase_rad");
    for (f, (mag, phase)) in freqs.iter().zip(response) {
        println!("{f:.6},{mag:.6e},{:.3},{phase:.6}", 20.0 * mag.log10());
    }
    Ok(())
}

fn concentration<M: MaskSource>(
    frames: &[RawFrame],
    config: &PipelineConfig,
    gt: &M,
) -> Result<EnergyConcentration> {
    let floats = frames.iter().map(|f| f.to_float::<f32>());
    let mut failure = None;
    let maps = extract_pulsation_maps(floats, config)?.map_while(|m| match m {
        Ok(m) => Some(m),
        Err(e) => {
            failure = Some(e);
            None
        }
    });
    let report = energy_concentration(maps, gt, true);
    match failure {
        Some(e) => Err(e),
        None => report,
    }
}

pub fn compare(
    input: &Path,
    gt: &Path,
    output: Option<&Path>,
    config: &PipelineConfig,
) -> Result<()> {
    let masks = DiskMasks::open(gt)?;
    let (header, frames) = load_frames(input)?;
    check_rate(&header, config)?;
    if let Some(dir) = output {
        create_dir(dir)?;
    }
    let mut ratios = Vec::new();
    for kind in [KernelKind::Dog, KernelKind::GaussianDerivative1] {
        let config = PipelineConfig {
            kernel_kind: kind,
            ..config.clone()
        };
        let report = concentration(&frames, &config, &masks)?;
        let short = match kind {
            KernelKind::Dog => "dog",
            KernelKind::GaussianDerivative1 => "deriv1",
        };
        println!("[{}]", kind.name());
        print!("{}", report.to_report());
        println!();
        if let Some(dir) = output {
            write_text(
                &dir.join(format!("energy_{short}.txt")),
                &report.to_report(),
            )?;
            write_text(
                &dir.join(format!("config_{short}.toml")),
                &config.resolved()?.to_toml(),
            )?;
        }
        ratios.push(report.ratio_or_inf());
    }
    println!("ratio_dog_over_deriv1 = {}", ratios[0] / ratios[1]);
    Ok(())
}

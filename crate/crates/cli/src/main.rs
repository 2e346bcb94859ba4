mod commands;
mod masks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pulsemap::{Error, ErrorKind, KernelKind, PipelineConfig, Preset, Realization, SequenceFormat};

#[derive(Parser)]
#[command(
    name = "pulsemap",
    version,
    about = "Pulsation maps from grayscale ultrasound frame sequences"
)]
struct Cli {
    /// Worker threads for row-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract pulsation maps from a frame sequence.
    Extract {
        /// PGM/PNG directory or raw-planar file.
        input: PathBuf,
        /// Output directory.
        output: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Also write RGB heat maps.
        #[arg(long)]
        emit_heatmap: bool,
        /// Map output format.
        #[arg(long, default_value = "pgm")]
        format: SequenceFormat,
    },
    /// Write a synthetic phantom sequence with its ground-truth masks.
    Phantom {
        /// Bundled phantom name (carotid, radial, two-artery) or a spec file.
        spec: String,
        /// Output directory.
        output: PathBuf,
        /// Frame output format.
        #[arg(long, default_value = "pgm")]
        format: SequenceFormat,
    },
    /// Time the full pipeline per frame and export the durations.
    Bench {
        /// Frame sequence to cycle through; a synthetic scene when omitted.
        input: Option<PathBuf>,
        /// Output directory for durations.csv and summary.txt.
        #[arg(long, short, default_value = "bench")]
        output: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long, default_value_t = 9)]
        groups: usize,
        #[arg(long, default_value_t = 500)]
        frames: usize,
        /// Synthetic scene width.
        #[arg(long, default_value_t = 657)]
        width: usize,
        /// Synthetic scene height.
        #[arg(long, default_value_t = 837)]
        height: usize,
    },
    /// Print the bandpass coefficients and a magnitude-response table.
    DesignFilter {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Rows in the response table between DC and Nyquist.
        #[arg(long, default_value_t = 31)]
        points: usize,
    },
    /// Energy-concentration reports for the DoG and first-derivative kernels.
    Compare {
        /// Frame sequence.
        input: PathBuf,
        /// Ground-truth directory holding `pulsation/` and `drift/` masks.
        gt: PathBuf,
        /// Directory for the reports and config echoes.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Pipeline config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Normalization preset; replaces any alpha/gamma from the config.
    #[arg(long)]
    preset: Option<Preset>,
    /// Temporal kernel: dog or deriv1.
    #[arg(long)]
    kernel: Option<KernelKind>,
    /// Bandpass realization: sos or direct.
    #[arg(long)]
    realization: Option<Realization>,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig, Error> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(preset) = self.preset {
            config.preset = preset;
            if preset != Preset::Custom {
                config.alpha = None;
                config.gamma = None;
            }
        }
        if let Some(kind) = self.kernel {
            config.kernel_kind = kind;
        }
        if let Some(r) = self.realization {
            config.realization = r;
        }
        config.validate()?;
        Ok(config)
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Io | ErrorKind::Input => 3,
        ErrorKind::Numeric => 4,
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Usage => "usage",
        ErrorKind::Io => "io",
        ErrorKind::Input => "input",
        ErrorKind::Numeric => "numeric",
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Parameter("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Extract {
            input,
            output,
            pipeline,
            emit_heatmap,
            format,
        } => {
            let mut config = pipeline.config()?;
            config.emit_heatmap |= emit_heatmap;
            commands::extract(&input, &output, &config, format)
        }
        Command::Phantom {
            spec,
            output,
            format,
        } => commands::phantom(&spec, &output, format),
        Command::Bench {
            input,
            output,
            pipeline,
            groups,
            frames,
            width,
            height,
        } => commands::bench(
            input.as_deref(),
            &output,
            &pipeline.config()?,
            groups,
            frames,
            (width, height),
        ),
        Command::DesignFilter { pipeline, points } => {
            commands::design_filter(&pipeline.config()?, points)
        }
        Command::Compare {
            input,
            gt,
            output,
            pipeline,
        } => commands::compare(&input, &gt, output.as_deref(), &pipeline.config()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or_default();
            eprintln!("error[usage]: {}", line.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", kind_name(kind));
            ExitCode::from(exit_code(kind))
        }
    }
}

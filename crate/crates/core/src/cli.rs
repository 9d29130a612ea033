//! Command-line front end. Precedence: built-in defaults, then the JSON
//! config (`--config`, which may also be a run manifest), then
//! `MPIJR_SEED`, then explicit flags.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig, Manifest, Method};
use crate::model::BackgroundSource;
use crate::scenario::{DriftKind, ScenarioParams};
use crate::solver::SolverChoice;

#[derive(Parser, Debug)]
#[command(name = "mpijr", version, about = "Joint tracer and background reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthetic data generation.
    Sim {
        #[command(subcommand)]
        action: SimAction,
    },
    /// Background dictionary tools.
    Dict {
        #[command(subcommand)]
        action: DictAction,
    },
    /// Reconstruct a frame series with one method.
    Recon {
        #[arg(value_enum)]
        method: MethodArg,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Joint reconstructions of one frame over a beta x rank grid.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Metrics for a reconstruction directory written by `recon`.
    Metrics {
        #[arg(long)]
        recon_dir: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run several methods on the same frames and tabulate their metrics.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rerun the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum SimAction {
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Subcommand, Debug)]
enum DictAction {
    Build {
        #[command(flatten)]
        common: CommonArgs,
    },
    Spectrum {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Joint,
    Static,
    Interp,
    Shifted,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Joint => Method::Joint,
            MethodArg::Static => Method::Static,
            MethodArg::Interp => Method::Interp,
            MethodArg::Shifted => Method::Shifted,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SolverArg {
    Kaczmarz,
    Dense,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DriftArg {
    None,
    Linear,
    Nonlinear,
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected 'a,b', got '{s}'"))?;
    let a = a.trim().parse().map_err(|_| format!("bad number '{a}'"))?;
    let b = b.trim().parse().map_err(|_| format!("bad number '{b}'"))?;
    Ok((a, b))
}

fn parse_usize_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    parse_pair(s)
}

fn parse_i64_pair(s: &str) -> std::result::Result<(i64, i64), String> {
    parse_pair(s)
}

/// Flags shared by every experiment subcommand. Each mirrors a config key.
#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// JSON experiment config or a run manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    archive: Option<PathBuf>,
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Generate inputs in memory from the default scenario (plus sim flags).
    #[arg(long)]
    simulate: bool,
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long)]
    lambda_rel: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    dict_rank: Option<usize>,
    #[arg(long)]
    kaczmarz_iterations: Option<usize>,
    #[arg(long)]
    enforce_real_positive: bool,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Frames averaged into b_est, e.g. `1,2,3,4,5`.
    #[arg(long, value_delimiter = ',')]
    b_est_frames: Vec<usize>,
    #[arg(long)]
    b_est_file: Option<PathBuf>,
    #[arg(long)]
    b_est_zero: bool,
    #[arg(long)]
    first_frame: Option<usize>,
    #[arg(long)]
    last_frame: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pre_frames: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    post_frames: Vec<usize>,
    #[arg(long, value_parser = parse_usize_pair)]
    pair: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_i64_pair, allow_hyphen_values = true)]
    shift1: Option<(i64, i64)>,
    #[arg(long, value_parser = parse_i64_pair, allow_hyphen_values = true)]
    shift2: Option<(i64, i64)>,
    #[arg(long, value_delimiter = ',')]
    betas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    ranks: Vec<usize>,
    #[arg(long)]
    sweep_frame: Option<usize>,
    #[arg(long)]
    signal_block: Option<usize>,
    #[arg(long, value_parser = parse_usize_pair)]
    signal_corner: Option<(usize, usize)>,
    #[arg(long)]
    c_ref: Option<f64>,
    #[arg(long)]
    pixel_pitch_mm: Option<f64>,
    #[arg(long)]
    spectrum_threshold: Option<f64>,
    #[arg(long)]
    no_previews: bool,
    // Simulation parameters.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_parser = parse_usize_pair)]
    grid_shape: Option<(usize, usize)>,
    #[arg(long)]
    theta: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    smoothness: Option<f64>,
    #[arg(long, value_enum)]
    drift: Option<DriftArg>,
    #[arg(long)]
    drift_scale: Option<f64>,
    #[arg(long)]
    noise_rel: Option<f64>,
    #[arg(long)]
    dot_mass_ug: Option<f64>,
}

impl CommonArgs {
    fn build(&self, method: Option<Method>, force_sim: bool) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_env()?;
        if let Some(m) = method {
            cfg.method = m;
        }
        macro_rules! set {
            ($field:ident => $target:expr) => {
                if let Some(v) = self.$field.clone() {
                    $target = v;
                }
            };
        }
        set!(output => cfg.output);
        set!(threads => cfg.threads);
        set!(seed => cfg.seed);
        set!(lambda_rel => cfg.recon.lambda_rel);
        set!(beta => cfg.recon.beta);
        set!(dict_rank => cfg.recon.dict_rank);
        set!(kaczmarz_iterations => cfg.recon.kaczmarz_iterations);
        set!(sweep_frame => cfg.sweep_frame);
        set!(signal_block => cfg.signal_block);
        set!(pixel_pitch_mm => cfg.pixel_pitch_mm);
        set!(spectrum_threshold => cfg.spectrum_threshold);
        set!(pair => cfg.pair);
        set!(shift1 => cfg.shift1);
        set!(shift2 => cfg.shift2);
        if self.system.is_some() {
            cfg.system = self.system.clone();
        }
        if self.series.is_some() {
            cfg.series = self.series.clone();
        }
        if self.archive.is_some() {
            cfg.archive = self.archive.clone();
        }
        if self.dictionary.is_some() {
            cfg.dictionary = self.dictionary.clone();
        }
        if self.first_frame.is_some() {
            cfg.first_frame = self.first_frame;
        }
        if self.last_frame.is_some() {
            cfg.last_frame = self.last_frame;
        }
        if self.signal_corner.is_some() {
            cfg.signal_corner = self.signal_corner;
        }
        if self.c_ref.is_some() {
            cfg.c_ref = self.c_ref;
        }
        if self.enforce_real_positive {
            cfg.recon.enforce_real_positive = true;
        }
        if let Some(s) = self.solver {
            cfg.recon.solver = match s {
                SolverArg::Kaczmarz => SolverChoice::Kaczmarz,
                SolverArg::Dense => SolverChoice::Dense,
            };
        }
        let sources = [!self.b_est_frames.is_empty(), self.b_est_file.is_some(), self.b_est_zero];
        if sources.iter().filter(|&&s| s).count() > 1 {
            return Err(Error::Config("give at most one of --b-est-frames, --b-est-file, --b-est-zero".into()));
        }
        if !self.b_est_frames.is_empty() {
            cfg.recon.b_est_source = BackgroundSource::MeanOfFrames(self.b_est_frames.clone());
        } else if let Some(p) = &self.b_est_file {
            cfg.recon.b_est_source = BackgroundSource::File(p.clone());
        } else if self.b_est_zero {
            cfg.recon.b_est_source = BackgroundSource::Zero;
        }
        if !self.pre_frames.is_empty() {
            cfg.pre_frames = self.pre_frames.clone();
        }
        if !self.post_frames.is_empty() {
            cfg.post_frames = self.post_frames.clone();
        }
        if !self.betas.is_empty() {
            cfg.betas = self.betas.clone();
        }
        if !self.ranks.is_empty() {
            cfg.ranks = self.ranks.clone();
        }
        if !self.methods.is_empty() {
            cfg.methods = self.methods.iter().map(|m| Method::parse(m)).collect::<Result<_>>()?;
        }
        if self.no_previews {
            cfg.previews = false;
        }

        let sim_flags = self.m.is_some()
            || self.grid_shape.is_some()
            || self.theta.is_some()
            || self.frames.is_some()
            || self.smoothness.is_some()
            || self.drift.is_some()
            || self.drift_scale.is_some()
            || self.noise_rel.is_some()
            || self.dot_mass_ug.is_some();
        if self.simulate || force_sim || sim_flags {
            let sim = cfg.simulation.get_or_insert_with(ScenarioParams::default);
            set!(m => sim.m);
            set!(grid_shape => sim.grid_shape);
            set!(theta => sim.theta);
            set!(frames => sim.frames);
            set!(smoothness => sim.smoothness);
            set!(drift_scale => sim.drift_scale);
            set!(noise_rel => sim.noise_rel);
            set!(dot_mass_ug => sim.dot_mass_ug);
            if let Some(d) = self.drift {
                sim.drift = match d {
                    DriftArg::None => DriftKind::None,
                    DriftArg::Linear => DriftKind::Linear,
                    DriftArg::Nonlinear => DriftKind::Nonlinear,
                };
            }
        }
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<Manifest> {
    match cli.command {
        Command::Sim {
            action: SimAction::Generate { common },
        } => harness::simulate(&common.build(None, true)?),
        Command::Dict { action } => match action {
            DictAction::Build { common } => harness::dict_build(&common.build(None, false)?),
            DictAction::Spectrum { common } => harness::dict_spectrum(&common.build(None, false)?),
        },
        Command::Recon { method, common } => harness::run_experiment(&common.build(Some(method.into()), false)?),
        Command::Sweep { common } => harness::run_sweep(&common.build(None, false)?).map(|(_, m)| m),
        Command::Metrics { recon_dir, common } => harness::metrics_from_dir(&recon_dir, &common.build(None, false)?),
        Command::Compare { common } => harness::compare_methods(&common.build(None, false)?).map(|c| c.manifest),
        Command::Replay { manifest, output } => harness::replay(&manifest, output),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(manifest) => {
            println!("{}: wrote {} output(s) to {}", manifest.command, manifest.outputs.len(), manifest.config.output.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

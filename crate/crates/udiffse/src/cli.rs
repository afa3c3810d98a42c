//! Command-line interface.
//!
//! Exit status: 0 success, 1 usage error, 2 validation failure, 3 I/O error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};
use udiffse_core::compression::AmplitudeCompression;
use udiffse_core::em::{EnhancementConfig, Sequential};
use udiffse_core::metrics::evaluate_pair;
use udiffse_core::rng;
use udiffse_core::sampler::{unconditional_sample, SamplerConfig};
use udiffse_core::score::{train, NetArch, ScoreModel, ToyScoreNet, TrainConfig};
use udiffse_core::sde::{check_variance_ode, DiffusionCoefficient, SdeSchedule};
use udiffse_core::waveform::{mix_at_snr, Waveform};
use udiffse_core::ComplexSpectrogram;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::expand_config_args;
use crate::error::{Error, Result};
use crate::grid::write_grid;
use crate::model::Model;
use crate::pipeline::{enhance_waveform, Threaded};
use crate::report::{FileEntry, Report};
use crate::stft::{Stft, StftConfig};
use crate::synthetic::{clean_utterance, nmf_noise_utterance, prior_dataset, toy_prior};
use crate::wav::{load_wav, save_wav, WavFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "udiffse",
    version,
    about = "Unsupervised speech enhancement with a diffusion prior and an NMF noise model",
    args_override_self = true,
    after_help = "Any subcommand accepts --config FILE: a key = value manifest applied before the other flags, which take precedence."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a score network with denoising score matching
    Train(TrainArgs),
    /// Enhance a noisy WAV file
    Enhance(EnhanceArgs),
    /// Draw unconditional samples from the prior
    Sample(SampleArgs),
    /// Check the closed-form kernel variance against the variance ODE
    ValidateSde(ValidateArgs),
    /// Mix, enhance and score a set of utterances
    Benchmark(BenchmarkArgs),
}

/// SDE parameters. When a checkpoint is loaded, any value given here must
/// agree with the checkpoint unless --force is set.
#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    /// Drift rate gamma [default: 1.5]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Smallest noise scale [default: 0.05]
    #[arg(long)]
    pub sigma_min: Option<f64>,
    /// Largest noise scale [default: 0.5]
    #[arg(long)]
    pub sigma_max: Option<f64>,
    /// Minimum process time [default: 0.03]
    #[arg(long)]
    pub t_min: Option<f64>,
}

impl ScheduleArgs {
    fn build(&self) -> Result<SdeSchedule> {
        let d = SdeSchedule::default();
        Ok(SdeSchedule::new(
            self.gamma.unwrap_or(d.gamma()),
            self.sigma_min.unwrap_or(d.sigma_min()),
            self.sigma_max.unwrap_or(d.sigma_max()),
            self.t_min.unwrap_or(d.t_min()),
        )?)
    }

    /// The checkpoint schedule, after checking it against explicit flags.
    fn reconcile(&self, stored: &SdeSchedule, force: bool, err: &mut dyn Write) -> Result<SdeSchedule> {
        let pairs = [
            ("gamma", self.gamma, stored.gamma()),
            ("sigma-min", self.sigma_min, stored.sigma_min()),
            ("sigma-max", self.sigma_max, stored.sigma_max()),
            ("t-min", self.t_min, stored.t_min()),
        ];
        for (name, flag, have) in pairs {
            if let Some(v) = flag {
                if v != have {
                    if !force {
                        return Err(udiffse_core::Error::ScheduleMismatch.into());
                    }
                    writeln!(err, "warning: --{name} {v} ignored, checkpoint has {have}").ok();
                }
            }
        }
        Ok(*stored)
    }
}

#[derive(Debug, Clone, Args)]
pub struct StftArgs {
    /// STFT window and FFT length in samples
    #[arg(long, default_value_t = 510)]
    pub window: usize,
    /// STFT hop in samples
    #[arg(long, default_value_t = 128)]
    pub hop: usize,
    /// Amplitude compression exponent
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Amplitude compression scale
    #[arg(long, default_value_t = 0.15)]
    pub beta: f64,
}

impl StftArgs {
    fn build(&self) -> Result<Stft> {
        Stft::new(StftConfig {
            window_len: self.window,
            hop: self.hop,
            compression: AmplitudeCompression::new(self.alpha, self.beta)?,
            ..StftConfig::default()
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    /// Reverse diffusion steps N
    #[arg(long, default_value_t = 30)]
    pub steps: usize,
    /// Langevin corrector steps per reverse step
    #[arg(long, default_value_t = 1)]
    pub corrector_steps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EmArgs {
    /// EM iterations K
    #[arg(long, default_value_t = 5)]
    pub em_iters: usize,
    /// Apply the posterior update every this many reverse steps
    #[arg(long, default_value_t = 2)]
    pub posterior_every: usize,
    /// Guidance weight lambda
    #[arg(long, default_value_t = 1.5)]
    pub lambda: f64,
    /// Rank of the NMF noise model
    #[arg(long, default_value_t = 4)]
    pub nmf_rank: usize,
    /// Posterior samples averaged per EM iteration
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    /// Multiplicative NMF updates per M-step
    #[arg(long, default_value_t = 20)]
    pub nmf_updates: usize,
    /// Keep the initial noise variance fixed
    #[arg(long)]
    pub freeze_noise: bool,
}

impl EmArgs {
    fn build(&self, sampler: &SamplerArgs, seed: u64) -> Result<EnhancementConfig> {
        let cfg = EnhancementConfig {
            em_iters: self.em_iters,
            sampler: SamplerConfig {
                n_steps: sampler.steps,
                posterior_every: self.posterior_every,
                guidance_weight: self.lambda,
                corrector_steps: sampler.corrector_steps,
            },
            nmf_rank: self.nmf_rank,
            batch: self.batch,
            seed,
            nmf_inner_updates: self.nmf_updates,
            update_noise: !self.freeze_noise,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn describe(&self, sampler: &SamplerArgs, out: &mut BTreeMap<String, String>) {
        for (k, v) in [
            ("em_iters", self.em_iters.to_string()),
            ("steps", sampler.steps.to_string()),
            ("corrector_steps", sampler.corrector_steps.to_string()),
            ("posterior_every", self.posterior_every.to_string()),
            ("lambda", self.lambda.to_string()),
            ("nmf_rank", self.nmf_rank.to_string()),
            ("batch", self.batch.to_string()),
            ("nmf_updates", self.nmf_updates.to_string()),
            ("freeze_noise", self.freeze_noise.to_string()),
        ] {
            out.insert(k.into(), v);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SyntheticData {
    /// Draws from the built-in per-frequency Gaussian prior
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    /// Trainable score network
    Net,
    /// Write the analytic prior of --synthetic gaussian without training
    Gaussian,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Checkpoint to write
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of 16 kHz mono WAV files
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Built-in synthetic training data
    #[arg(long, value_enum)]
    pub synthetic: Option<SyntheticData>,
    /// Number of synthetic training spectrograms
    #[arg(long, default_value_t = 64)]
    pub items: usize,
    /// Continue training from this checkpoint (keeps its step counter)
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelKind::Net)]
    pub model: ModelKind,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Frames per random training patch
    #[arg(long, default_value_t = 256)]
    pub patch_frames: usize,
    /// Hidden units per layer
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    /// Hidden layers
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Accept a schedule that differs from the resumed checkpoint (checkpoint wins)
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub stft: StftArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Float32,
    Pcm16,
}

impl From<OutputFormat> for WavFormat {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Float32 => WavFormat::Float32,
            OutputFormat::Pcm16 => WavFormat::Pcm16,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceArgs {
    /// Noisy input WAV
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Enhanced output WAV
    #[arg(long)]
    pub output: PathBuf,
    /// Clean reference; enables SI-SDR reporting
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Write the metric report as JSON here
    #[arg(long, requires = "clean")]
    pub report: Option<PathBuf>,
    /// Write the enhanced compressed spectrogram as a binary grid
    #[arg(long)]
    pub dump_spec: Option<PathBuf>,
    /// Write the final NMF noise variance as a binary grid
    #[arg(long)]
    pub dump_noise: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Threads for the posterior chains
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Use the checkpoint schedule even if schedule flags disagree
    #[arg(long)]
    pub force: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Float32)]
    pub format: OutputFormat,
    #[command(flatten)]
    pub em: EmArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub stft: StftArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output WAV
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write the sampled compressed spectrogram as a binary grid
    #[arg(long)]
    pub dump_spec: Option<PathBuf>,
    /// Length of the generated signal in samples
    #[arg(long, default_value_t = 16000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Float32)]
    pub format: OutputFormat,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub stft: StftArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Lead {
    SigmaMin,
    SigmaMax,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 1.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 0.03)]
    pub t_min: f64,
    /// Leading coefficient of the diffusion term
    #[arg(long, value_enum, default_value_t = Lead::SigmaMin)]
    pub lead: Lead,
    /// RK4 steps over [0, 1]
    #[arg(long, default_value_t = 10000)]
    pub ode_steps: usize,
    /// Largest accepted relative error
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of clean WAV files (paired with --noise-dir in sorted order)
    #[arg(long, requires = "noise_dir", conflicts_with = "synthetic")]
    pub clean_dir: Option<PathBuf>,
    /// Directory of noise WAV files
    #[arg(long)]
    pub noise_dir: Option<PathBuf>,
    /// Toy prior speech with rank-4 NMF noise instead of files
    #[arg(long)]
    pub synthetic: bool,
    /// Synthetic utterances per SNR
    #[arg(long, default_value_t = 20)]
    pub utterances: usize,
    /// Synthetic utterance length in samples
    #[arg(long, default_value_t = 16000)]
    pub length: usize,
    /// Mixture SNRs in dB
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-5,0,5")]
    pub snr: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Utterances enhanced concurrently
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub force: bool,
    /// Write the JSON report here
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub em: EmArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub stft: StftArgs,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit status. Reports go to `out`, diagnostics to `err`.
pub fn run(argv: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let argv = match expand_config_args(argv) {
        Ok(a) => a,
        Err(e) => {
            writeln!(err, "error: {e}").ok();
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if e.use_stderr() {
                write!(err, "{}", e.render()).ok();
            } else {
                write!(out, "{}", e.render()).ok();
            }
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            writeln!(err, "error: {e}").ok();
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                writeln!(err, "  caused by: {s}").ok();
                source = s.source();
            }
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Train(a) => cmd_train(&a, out, err),
        Command::Enhance(a) => cmd_enhance(&a, out, err),
        Command::Sample(a) => cmd_sample(&a, out, err),
        Command::ValidateSde(a) => cmd_validate_sde(&a, out),
        Command::Benchmark(a) => cmd_benchmark(&a, out, err),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn load_model(path: &Path, schedule: &ScheduleArgs, force: bool, err: &mut dyn Write) -> Result<Model> {
    let model = load_checkpoint(path)?;
    schedule.reconcile(model.schedule(), force, err)?;
    Ok(model)
}

fn check_bins(model: &Model, stft: &Stft) -> Result<()> {
    if model.f_bins() != stft.config().f_bins() {
        return Err(Error::Usage(format!(
            "checkpoint has {} frequency bins, the STFT gives {}",
            model.f_bins(),
            stft.config().f_bins()
        )));
    }
    Ok(())
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let stft = a.stft.build()?;
    let f_bins = stft.config().f_bins();
    let (mut net, sched) = match &a.resume {
        Some(path) => match load_model(path, &a.schedule, a.force, err)? {
            Model::Net(n) => {
                let s = *n.schedule();
                (n, s)
            }
            Model::Gaussian(_) => return Err(Error::Usage("cannot resume training from an analytic prior".into())),
        },
        None => {
            let sched = a.schedule.build()?;
            (ToyScoreNet::new(NetArch::new(f_bins, a.hidden, a.depth)?, sched, a.seed), sched)
        }
    };
    emit(
        out,
        &format!(
            "seed={}\nschedule.gamma={}\nschedule.sigma_min={}\nschedule.sigma_max={}\nschedule.t_min={}\n",
            a.seed,
            sched.gamma(),
            sched.sigma_min(),
            sched.sigma_max(),
            sched.t_min()
        ),
    )?;
    if a.model == ModelKind::Gaussian {
        if a.synthetic != Some(SyntheticData::Gaussian) {
            return Err(Error::Usage("--model gaussian needs --synthetic gaussian".into()));
        }
        save_checkpoint(&a.out, &Model::Gaussian(toy_prior(f_bins, sched)))?;
        emit(out, &format!("model=gaussian\ncheckpoint={}\n", a.out.display()))?;
        return Ok(EXIT_OK);
    }
    let dataset: Vec<ComplexSpectrogram> = match (&a.data, a.synthetic) {
        (Some(dir), _) => {
            let mut data = Vec::new();
            for path in wav_files(dir)? {
                let w = load_wav(&path)?;
                let spec = stft.stft(&w)?;
                if spec.t_frames() < a.patch_frames {
                    writeln!(err, "skipping {}: {} frames < patch length", path.display(), spec.t_frames()).ok();
                    continue;
                }
                data.push(spec);
            }
            data
        }
        (None, Some(SyntheticData::Gaussian)) => {
            let prior = toy_prior(f_bins, sched);
            prior_dataset(&prior, a.items, a.patch_frames, &mut rng::stream(a.seed, u64::MAX - 1))
        }
        (None, None) => return Err(Error::Usage("give --data DIR or --synthetic gaussian".into())),
    };
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        patch_frames: a.patch_frames,
        seed: a.seed,
    };
    let report = train(&mut net, &dataset, &cfg, |s| {
        writeln!(out, "epoch={} step={} loss={:.6}", s.epoch, s.step, s.mean_loss).ok();
    })?;
    emit(
        out,
        &format!(
            "heldout_before={:.6}\nheldout_after={:.6}\nstep={}\ncheckpoint={}\n",
            report.heldout_before,
            report.heldout_after,
            net.step(),
            a.out.display()
        ),
    )?;
    save_checkpoint(&a.out, &Model::Net(net))?;
    Ok(EXIT_OK)
}

pub fn cmd_enhance(a: &EnhanceArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let stft = a.stft.build()?;
    let model = load_model(&a.checkpoint, &a.schedule, a.force, err)?;
    check_bins(&model, &stft)?;
    let cfg = a.em.build(&a.sampler, a.seed)?;
    let noisy = load_wav(&a.input)?;
    let (enhanced, result) = enhance_waveform(&noisy, &model, &stft, &cfg, &Threaded { jobs: a.jobs })?;
    save_wav(&a.output, &enhanced, a.format.into())?;
    if let Some(p) = &a.dump_spec {
        write_grid(p, &result.s_hat)?;
    }
    if let Some(p) = &a.dump_noise {
        write_grid(p, &crate::grid::real_as_complex(&result.nmf.variance()))?;
    }
    let mut text = format!("seed={}\ninput={}\noutput={}\n", a.seed, a.input.display(), a.output.display());
    for t in &result.trace {
        text.push_str(&format!(
            "em_iteration={} residual_power={:.6e} objective_before={:.6e} objective_after={:.6e}\n",
            t.iteration, t.residual_power, t.objective_before, t.objective_after
        ));
    }
    emit(out, &text)?;
    if let Some(clean_path) = &a.clean {
        let clean = load_wav(clean_path)?;
        let metrics = evaluate_pair(noisy.samples(), enhanced.samples(), clean.samples())?;
        let mut config = BTreeMap::new();
        a.em.describe(&a.sampler, &mut config);
        let name = a.input.display().to_string();
        let report = Report::new(a.seed, config, vec![FileEntry::new(name, None, &metrics)])?;
        emit(out, &format!("si_sdr={:.4}\ninput_si_sdr={:.4}\ndelta={:.4}\n", metrics.si_sdr, metrics.input_si_sdr, metrics.delta))?;
        if let Some(p) = &a.report {
            std::fs::write(p, report.to_json()).map_err(|e| Error::io(p, e))?;
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_sample(a: &SampleArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    if a.output.is_none() && a.dump_spec.is_none() {
        return Err(Error::Usage("give --output and/or --dump-spec".into()));
    }
    let stft = a.stft.build()?;
    let model = load_model(&a.checkpoint, &a.schedule, a.force, err)?;
    check_bins(&model, &stft)?;
    if a.samples == 0 {
        return Err(Error::Usage("--samples must be positive".into()));
    }
    let cfg = SamplerConfig {
        n_steps: a.sampler.steps,
        corrector_steps: a.sampler.corrector_steps,
        ..SamplerConfig::default()
    };
    let shape = (model.f_bins(), stft.config().frames_for(a.samples));
    let spec = unconditional_sample(shape, &model, model.schedule(), &cfg, &mut rng::seeded(a.seed))?;
    if let Some(p) = &a.dump_spec {
        write_grid(p, &spec)?;
    }
    if let Some(p) = &a.output {
        let w = stft.istft(&spec, a.samples)?;
        save_wav(p, &w, a.format.into())?;
    }
    emit(
        out,
        &format!(
            "seed={}\nmodel={}\nshape={}x{}\nmean_power={:.6e}\n",
            a.seed,
            model.kind(),
            shape.0,
            shape.1,
            spec.mean_power()
        ),
    )?;
    Ok(EXIT_OK)
}

pub fn cmd_validate_sde(a: &ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    let lead = match a.lead {
        Lead::SigmaMin => DiffusionCoefficient::SigmaMinLeading,
        Lead::SigmaMax => DiffusionCoefficient::SigmaMaxLeading,
    };
    let sched = SdeSchedule::new(a.gamma, a.sigma_min, a.sigma_max, a.t_min)?.with_diffusion(lead);
    let check = check_variance_ode(&sched, a.ode_steps);
    let pass = check.passes(a.tolerance);
    emit(
        out,
        &format!(
            "max_rel_error={:.3e}\nworst_t={:.4}\node_steps={}\ntolerance={:.1e}\nresult={}\n",
            check.max_rel_error,
            check.worst_t,
            check.steps,
            a.tolerance,
            if pass { "PASS" } else { "FAIL" }
        ),
    )?;
    Ok(if pass { EXIT_OK } else { EXIT_VALIDATION })
}

struct Job {
    name: String,
    snr_db: f64,
    clean: Waveform,
    noise: Waveform,
    mix_seed: u64,
    em_seed: u64,
}

fn benchmark_jobs(a: &BenchmarkArgs, stft: &Stft, model: &Model) -> Result<Vec<Job>> {
    let mut jobs = Vec::new();
    if a.synthetic {
        let prior = toy_prior(model.f_bins(), *model.schedule());
        for u in 0..a.utterances {
            let clean = clean_utterance(&prior, stft, a.length, &mut rng::stream(a.seed, 2 * u as u64))?;
            let noise = nmf_noise_utterance(stft, a.length, 4, &mut rng::stream(a.seed, 2 * u as u64 + 1))?;
            for &snr in &a.snr {
                jobs.push(Job {
                    name: format!("synthetic-{u:03}"),
                    snr_db: snr,
                    clean: clean.clone(),
                    noise: noise.clone(),
                    mix_seed: 0,
                    em_seed: 0,
                });
            }
        }
    } else {
        let (Some(cd), Some(nd)) = (&a.clean_dir, &a.noise_dir) else {
            return Err(Error::Usage("give --synthetic or --clean-dir with --noise-dir".into()));
        };
        let cleans = wav_files(cd)?;
        let noises = wav_files(nd)?;
        if cleans.is_empty() || noises.is_empty() {
            return Err(udiffse_core::Error::Empty("benchmark directories").into());
        }
        for (i, c) in cleans.iter().enumerate() {
            let clean = load_wav(c)?;
            let noise = load_wav(&noises[i % noises.len()])?;
            for &snr in &a.snr {
                jobs.push(Job {
                    name: c.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                    snr_db: snr,
                    clean: clean.clone(),
                    noise: noise.clone(),
                    mix_seed: 0,
                    em_seed: 0,
                });
            }
        }
    }
    for (k, j) in jobs.iter_mut().enumerate() {
        j.mix_seed = a.seed.wrapping_add(k as u64);
        j.em_seed = a.seed.wrapping_add(1_000_003 * (k as u64 + 1));
    }
    Ok(jobs)
}

pub fn cmd_benchmark(a: &BenchmarkArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let stft = a.stft.build()?;
    let model = load_model(&a.checkpoint, &a.schedule, a.force, err)?;
    check_bins(&model, &stft)?;
    if a.snr.is_empty() {
        return Err(Error::Usage("--snr needs at least one value".into()));
    }
    let base = a.em.build(&a.sampler, a.seed)?;
    let jobs = benchmark_jobs(a, &stft, &model)?;
    let run_one = |j: &Job| -> Result<FileEntry> {
        let (noisy, _) = mix_at_snr(&j.clean, &j.noise, j.snr_db, j.mix_seed)?;
        let cfg = EnhancementConfig { seed: j.em_seed, ..base };
        let (enhanced, _) = enhance_waveform(&noisy, &model, &stft, &cfg, &Sequential)?;
        let m = evaluate_pair(noisy.samples(), enhanced.samples(), j.clean.samples())?;
        Ok(FileEntry::new(j.name.clone(), Some(j.snr_db), &m))
    };
    let workers = a.jobs.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let mut results: Vec<Option<Result<FileEntry>>> = (0..jobs.len()).map(|_| None).collect();
    thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        if k >= jobs.len() {
                            break done;
                        }
                        done.push((k, run_one(&jobs[k])));
                    }
                })
            })
            .collect();
        for h in handles {
            for (k, r) in h.join().expect("benchmark worker panicked") {
                results[k] = Some(r);
            }
        }
    });
    let files = results
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<Vec<_>>>()?;
    let mut config = BTreeMap::new();
    a.em.describe(&a.sampler, &mut config);
    config.insert("source".into(), if a.synthetic { "synthetic" } else { "files" }.into());
    let report = Report::new(a.seed, config, files)?;
    emit(out, &report.to_text())?;
    if let Some(p) = &a.report {
        std::fs::write(p, report.to_json()).map_err(|e| Error::io(p, e))?;
    }
    Ok(EXIT_OK)
}

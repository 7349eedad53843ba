//! Command-line surface: analyze / synthesize / effect / check-bank / info.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure. Errors
//! are emitted as one JSON line on stderr so scripts can parse them.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use scatsynth::{
    apply_functional, build_cqt_bank, littlewood_paley, read_coefficients, read_wav,
    scatter_with_plan, synthesize_target, write_coefficients, write_wav, AudioBuffer,
    CoefficientFile, CoefficientFunctional, Error, Scalogram, ScatteringCoefficients,
    ScatteringConfig, ScatteringPlan, SynthesisOptions, SynthesisState, WavFormat,
};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const THREADS_ENV: &str = "SCATSYNTH_THREADS";

#[derive(Parser)]
#[command(name = "scatsynth", version, about = "Time-frequency scattering analysis, \
texture resynthesis and scale-rate effects")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
    /// Worker thread count (also SCATSYNTH_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Job configuration JSON; explicit flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Args, Default, Clone)]
struct ScatterFlags {
    /// Filters per octave of the first-order bank.
    #[arg(long, alias = "Q")]
    q: Option<u32>,
    #[arg(long)]
    octaves: Option<u32>,
    /// Temporal averaging span in samples.
    #[arg(long)]
    t_samples: Option<usize>,
    /// Filters per octave of the modulation banks.
    #[arg(long)]
    q_mod: Option<u32>,
    /// Log-frequency averaging span in octaves (0 disables the blur).
    #[arg(long)]
    f_octaves: Option<f64>,
    /// First-order decimation hop in samples (power of two).
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    alpha_max: Option<f64>,
    /// Enable octave-axis (spiral) scattering.
    #[arg(long)]
    spiral: bool,
    /// Octave-rate centers in cycles per octave, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gamma: Option<Vec<f64>>,
}

#[derive(Args, Default, Clone)]
struct SynthFlags {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    /// Initial learning rate.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    grow: Option<f64>,
    #[arg(long)]
    shrink: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write an iterate snapshot every N iterations (0 disables).
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Emit 16-bit PCM instead of float32.
    #[arg(long)]
    pcm16: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Scattering analysis of a WAV file: spectrogram CSV and optionally the
    /// coefficient container.
    Analyze {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the SCT1 coefficient container.
        #[arg(long)]
        coeffs: bool,
        #[command(flatten)]
        scatter: ScatterFlags,
    },
    /// Resynthesize a texture from a WAV file or an SCT1 container.
    Synthesize {
        target: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        scatter: ScatterFlags,
        #[command(flatten)]
        synth: SynthFlags,
    },
    /// Apply a coefficient-domain effect and render it back to audio.
    Effect {
        input: PathBuf,
        /// Effect description JSON ({"f1": [...], "f2": [...]}).
        #[arg(long)]
        fx: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        scatter: ScatterFlags,
        #[command(flatten)]
        synth: SynthFlags,
    },
    /// Build a first-order bank and report its Littlewood-Paley bounds.
    CheckBank {
        #[arg(long, default_value_t = 44100.0)]
        sample_rate: f64,
        #[arg(long, alias = "Q", default_value_t = 12)]
        q: u32,
        #[arg(long, default_value_t = 9)]
        octaves: u32,
        /// Transform length (power of two).
        #[arg(long, default_value_t = 65536)]
        len: usize,
        /// Directory for the per-bin profile CSV and filter report.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Dump an SCT1 container header.
    Info { file: PathBuf },
}

/// Job file mirror of the command-line flags; any field may be omitted.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub q: Option<u32>,
    pub octaves: Option<u32>,
    pub t_samples: Option<usize>,
    pub q_mod: Option<u32>,
    pub f_octaves: Option<f64>,
    pub hop: Option<usize>,
    pub alpha_max: Option<f64>,
    pub spiral: Option<bool>,
    pub gamma: Option<Vec<f64>>,
    pub iterations: Option<usize>,
    pub momentum: Option<f64>,
    pub rate: Option<f64>,
    pub grow: Option<f64>,
    pub shrink: Option<f64>,
    pub seed: Option<u64>,
    pub snapshot_every: Option<usize>,
    pub pcm16: Option<bool>,
    pub coeffs: Option<bool>,
    pub fx: Option<PathBuf>,
}

impl JobConfig {
    fn load(path: Option<&Path>) -> Result<JobConfig, Error> {
        match path {
            None => Ok(JobConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(Error::from)
            }
        }
    }
}

fn scattering_config(sample_rate: f64, flags: &ScatterFlags, job: &JobConfig) -> ScatteringConfig {
    let mut cfg = ScatteringConfig::new(sample_rate);
    if let Some(v) = flags.q.or(job.q) {
        cfg.q = v;
    }
    if let Some(v) = flags.octaves.or(job.octaves) {
        cfg.octaves = v;
    }
    if let Some(v) = flags.t_samples.or(job.t_samples) {
        cfg.t_samples = v;
    }
    if let Some(v) = flags.q_mod.or(job.q_mod) {
        cfg.q_mod = v;
    }
    if let Some(v) = flags.f_octaves.or(job.f_octaves) {
        cfg.f_octaves = v;
    }
    if let Some(v) = flags.hop.or(job.hop) {
        cfg.u1_hop = Some(v);
    }
    if let Some(v) = flags.alpha_max.or(job.alpha_max) {
        cfg.alpha_max = Some(v);
    }
    cfg.spiral_enabled = flags.spiral || job.spiral.unwrap_or(false);
    if let Some(v) = flags.gamma.clone().or_else(|| job.gamma.clone()) {
        cfg.gamma_grid = v;
    }
    cfg
}

fn synthesis_options(flags: &SynthFlags, job: &JobConfig) -> SynthesisOptions {
    let mut o = SynthesisOptions::default();
    if let Some(v) = flags.iterations.or(job.iterations) {
        o.iterations = v;
    }
    if let Some(v) = flags.momentum.or(job.momentum) {
        o.momentum = v;
    }
    if let Some(v) = flags.rate.or(job.rate) {
        o.initial_rate = v;
    }
    if let Some(v) = flags.grow.or(job.grow) {
        o.grow = v;
    }
    if let Some(v) = flags.shrink.or(job.shrink) {
        o.shrink = v;
    }
    if let Some(v) = flags.seed.or(job.seed) {
        o.seed = v;
    }
    if let Some(v) = flags.snapshot_every.or(job.snapshot_every) {
        o.snapshot_every = v;
    }
    o
}

fn wav_format(flags: &SynthFlags, job: &JobConfig) -> WavFormat {
    if flags.pcm16 || job.pcm16.unwrap_or(false) {
        WavFormat::Pcm16
    } else {
        WavFormat::Float32
    }
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn load_audio(path: &Path) -> Result<AudioBuffer, Error> {
    let (x, warnings) = read_wav(path)?;
    for w in warnings {
        warn(&w);
    }
    Ok(x)
}

fn spectrogram_csv(s1: &Scalogram, live_frames: usize) -> String {
    let mut out = String::from("frame,lambda,value\n");
    for f in 0..live_frames.min(s1.n_frames()) {
        for (j, lambda) in s1.lambda_grid.iter().enumerate() {
            out.push_str(&format!("{f},{lambda},{:.9e}\n", s1.values[[f, j]]));
        }
    }
    out
}

fn write_provenance(
    dir: &Path,
    command: &str,
    input: &Path,
    cfg: &ScatteringConfig,
    opts: Option<&SynthesisOptions>,
    fx: Option<&serde_json::Value>,
) -> Result<(), Error> {
    let doc = serde_json::json!({
        "tool": scatsynth::io::TOOL_TAG,
        "command": command,
        "input": input,
        "config": cfg,
        "synthesis": opts,
        "effect": fx,
    });
    fs::write(dir.join("provenance.json"), serde_json::to_vec_pretty(&doc)?)?;
    Ok(())
}

fn run_synthesis(
    target: &ScatteringCoefficients,
    cfg: &ScatteringConfig,
    input_len: usize,
    opts: &SynthesisOptions,
    dir: &Path,
    format: WavFormat,
) -> Result<SynthesisState, Error> {
    let mut snapshot_err: Option<Error> = None;
    let mut cb = |n: usize, y: &AudioBuffer| {
        if snapshot_err.is_none() {
            let p = dir.join(format!("y_iter{n:03}.wav"));
            if let Err(e) = write_wav(y, &p, format) {
                snapshot_err = Some(e);
            }
        }
    };
    let (y, state) = synthesize_target(target, cfg, input_len, opts, Some(&mut cb))?;
    if let Some(e) = snapshot_err {
        return Err(e);
    }
    for w in write_wav(&y, &dir.join("y.wav"), format)? {
        warn(&w);
    }
    fs::write(dir.join("trace.csv"), state.trace_csv())?;
    Ok(state)
}

fn run(cli: Cli) -> Result<(), Error> {
    let threads = cli.threads.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        // best effort: the pool may already exist in-process (tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let job = JobConfig::load(cli.config.as_deref())?;
    match cli.cmd {
        Command::Analyze {
            input,
            out,
            coeffs,
            scatter,
        } => {
            fs::create_dir_all(&out)?;
            let x = load_audio(&input)?;
            let cfg = scattering_config(x.sample_rate, &scatter, &job);
            let plan = ScatteringPlan::new(cfg.clone(), x.len())?;
            let live = plan.live_frames();
            let result = scatter_with_plan(&x, plan)?;
            fs::write(
                out.join("spectrogram.csv"),
                spectrogram_csv(&result.s1, live),
            )?;
            if coeffs || job.coeffs.unwrap_or(false) {
                let stem = input
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "coefficients".into());
                write_coefficients(
                    &out.join(format!("{stem}.sct")),
                    &CoefficientFile {
                        cfg: cfg.clone(),
                        input_len: x.len(),
                        coeffs: ScatteringCoefficients::from(&result),
                    },
                )?;
            }
            write_provenance(&out, "analyze", &input, &cfg, None, None)?;
        }
        Command::Synthesize {
            target,
            out,
            scatter,
            synth,
        } => {
            fs::create_dir_all(&out)?;
            let opts = synthesis_options(&synth, &job);
            let format = wav_format(&synth, &job);
            let is_container = target
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("sct"));
            let (coeffs, cfg, input_len) = if is_container {
                // the container fixes the geometry; only synthesis flags apply
                let file = read_coefficients(&target)?;
                (file.coeffs, file.cfg, file.input_len)
            } else {
                let x = load_audio(&target)?;
                let cfg = scattering_config(x.sample_rate, &scatter, &job);
                let plan = ScatteringPlan::new(cfg.clone(), x.len())?;
                let result = scatter_with_plan(&x, plan)?;
                (ScatteringCoefficients::from(&result), cfg, x.len())
            };
            run_synthesis(&coeffs, &cfg, input_len, &opts, &out, format)?;
            write_provenance(&out, "synthesize", &target, &cfg, Some(&opts), None)?;
        }
        Command::Effect {
            input,
            fx,
            out,
            scatter,
            synth,
        } => {
            fs::create_dir_all(&out)?;
            let fx_path = fx
                .or_else(|| job.fx.clone())
                .ok_or_else(|| Error::Config("effect requires --fx or a config fx path".into()))?;
            let fx_text = fs::read_to_string(&fx_path)?;
            let fx_doc: serde_json::Value = serde_json::from_str(&fx_text)?;
            let functional: CoefficientFunctional = serde_json::from_value(fx_doc.clone())?;
            let x = load_audio(&input)?;
            let cfg = scattering_config(x.sample_rate, &scatter, &job);
            let opts = synthesis_options(&synth, &job);
            let format = wav_format(&synth, &job);
            let plan = ScatteringPlan::new(cfg.clone(), x.len())?;
            let result = scatter_with_plan(&x, plan)?;
            let coeffs = ScatteringCoefficients::from(&result);
            let (transformed, log) = apply_functional(&coeffs, &functional)?;
            for line in &log {
                eprintln!("applied: {line}");
            }
            run_synthesis(&transformed, &cfg, x.len(), &opts, &out, format)?;
            write_provenance(&out, "effect", &input, &cfg, Some(&opts), Some(&fx_doc))?;
        }
        Command::CheckBank {
            sample_rate,
            q,
            octaves,
            len,
            out,
        } => {
            let bank = build_cqt_bank(sample_rate, q, octaves, len)?;
            let lp = littlewood_paley(&bank)?;
            println!(
                "{}",
                serde_json::json!({
                    "q": q,
                    "octaves": octaves,
                    "sample_rate": sample_rate,
                    "n_filters": bank.n_filters(),
                    "lower_bound": lp.lower_bound,
                    "upper_bound": lp.upper_bound,
                })
            );
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                let mut csv = String::from("bin,frequency,value\n");
                for (k, v) in lp.profile.iter().enumerate() {
                    let freq = k as f64 * sample_rate / len as f64;
                    csv.push_str(&format!("{k},{freq},{v:.12e}\n"));
                }
                fs::write(dir.join("lp_profile.csv"), csv)?;
                fs::write(dir.join("bank_report.txt"), bank.report())?;
            }
        }
        Command::Info { file } => {
            let info = scatsynth::container_info(&file)?;
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else if matches!(err, Error::Config(_)) {
        1
    } else {
        2
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "config",
        Error::Wav(_) => "wav",
        Error::Container(_) => "container",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Shape(_) => "shape",
        Error::NonFinite(_) | Error::Numerical(_) => "numerical",
        _ => "data",
    }
}

pub fn cli_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": {"kind": error_kind(&e), "message": e.to_string()}})
            );
            exit_code(&e)
        }
    }
}

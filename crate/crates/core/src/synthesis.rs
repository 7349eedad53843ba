//! Iterative texture resynthesis: start from colored Gaussian noise whose
//! per-band spectrum matches the target's S1, then descend the scattering
//! loss with momentum and a bold-driver learning rate (grow on accepted
//! steps, shrink and reset the velocity on rejected ones).

use crate::adjoint::{backscatter_from_output, forward_loss, LossReport, ScatteringCoefficients};
use crate::error::{Error, Result};
use crate::fft::Fft;
use crate::scattering::{cqt, scatter, scatter_with_plan, Scalogram, ScatteringConfig,
    ScatteringPlan};
use crate::signal::AudioBuffer;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

fn default_iterations() -> usize {
    50
}
fn default_momentum() -> f64 {
    0.9
}
fn default_initial_rate() -> f64 {
    0.1
}
fn default_grow() -> f64 {
    1.1
}
fn default_shrink() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_initial_rate")]
    pub initial_rate: f64,
    /// Bold-driver factor applied to the rate after an accepted step.
    #[serde(default = "default_grow")]
    pub grow: f64,
    /// Bold-driver factor applied after a rejected step.
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    #[serde(default)]
    pub seed: u64,
    /// Emit an iterate snapshot every N accepted-or-rejected iterations;
    /// 0 disables snapshots.
    #[serde(default)]
    pub snapshot_every: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            iterations: default_iterations(),
            momentum: default_momentum(),
            initial_rate: default_initial_rate(),
            grow: default_grow(),
            shrink: default_shrink(),
            seed: 0,
            snapshot_every: 0,
        }
    }
}

impl SynthesisOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if !(self.initial_rate > 0.0) {
            return Err(Error::Config("initial rate must be positive".into()));
        }
        if !(self.grow > 1.0) {
            return Err(Error::Config("bold-driver grow factor must exceed 1".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Config("bold-driver shrink factor must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One descent iteration as recorded in the trace: the candidate's loss and
/// whether the step was kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub report: LossReport,
    pub accepted: bool,
    /// Learning rate used to form this candidate.
    pub rate: f64,
}

/// Mutable state of one synthesis job.
#[derive(Debug, Clone)]
pub struct SynthesisState {
    pub y: AudioBuffer,
    pub velocity: AudioBuffer,
    pub rate: f64,
    pub loss_trace: Vec<TraceEntry>,
    pub iteration: usize,
    pub accepted: bool,
}

impl SynthesisState {
    pub fn new(y0: AudioBuffer, opts: &SynthesisOptions) -> SynthesisState {
        let velocity = AudioBuffer::zeros(y0.len(), y0.sample_rate);
        SynthesisState {
            y: y0,
            velocity,
            rate: opts.initial_rate,
            loss_trace: Vec::new(),
            iteration: 0,
            accepted: false,
        }
    }

    /// Loss-trace CSV: `iteration,total,first_order,second_order,accepted,mu`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,total,first_order,second_order,accepted,mu\n");
        for e in &self.loss_trace {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{},{:.6e}\n",
                e.iteration,
                e.report.total,
                e.report.first_order,
                e.report.second_order,
                e.accepted as u8,
                e.rate
            ));
        }
        out
    }
}

/// Mean S1 magnitude per band over the frames covering the input.
fn band_means(s1: &Scalogram, live_frames: usize) -> Vec<f64> {
    let live = live_frames.min(s1.n_frames()).max(1);
    (0..s1.n_lambda())
        .map(|j| (0..live).map(|f| s1.values[[f, j]]).sum::<f64>() / live as f64)
        .collect()
}

/// Log-linear interpolation of per-band gains onto a Fourier bin frequency,
/// flat extrapolation outside the band grid.
fn interp_band_gain(freq: f64, grid: &[f64], gains: &[f64]) -> f64 {
    let f = freq.abs();
    if f <= grid[0] {
        return gains[0];
    }
    if f >= grid[grid.len() - 1] {
        return gains[gains.len() - 1];
    }
    let lf = f.log2();
    let mut i = 0;
    while grid[i + 1].log2() < lf {
        i += 1;
    }
    let lo = grid[i].log2();
    let hi = grid[i + 1].log2();
    let t = (lf - lo) / (hi - lo);
    gains[i] * (1.0 - t) + gains[i + 1] * t
}

fn shape_noise(
    white_spectrum: &[Complex64],
    grid: &[f64],
    gains: &[f64],
    sample_rate: f64,
    out_len: usize,
) -> Vec<f64> {
    let n = white_spectrum.len();
    let mut spec: Vec<Complex64> = white_spectrum
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let w = crate::fft::bin_frequency(k, n, sample_rate);
            if k == 0 {
                Complex64::default()
            } else {
                s * interp_band_gain(w, grid, gains)
            }
        })
        .collect();
    let fft = Fft::new(n);
    let mut scratch = Vec::new();
    fft.inverse(&mut spec, &mut scratch);
    spec[..out_len].iter().map(|v| v.re).collect()
}

/// Seeded colored Gaussian noise whose constant-Q band means match the
/// time-averaged S1 of the target. The white spectrum is shaped by the
/// band profile, then corrected once against the measured band means of the
/// first realization (same noise, recalibrated gains).
pub fn init_colored_noise(
    s1x: &Scalogram,
    plan: &ScatteringPlan,
    seed: u64,
) -> Result<AudioBuffer> {
    let target = band_means(s1x, plan.live_frames());
    let peak = target.iter().cloned().fold(0.0f64, f64::max);
    if peak == 0.0 {
        return Ok(AudioBuffer::zeros(plan.input_len, plan.cfg.sample_rate));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = plan.padded_len;
    let mut white: Vec<Complex64> = (0..plan.input_len)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    white.resize(n, Complex64::default());
    let fft = Fft::new(n);
    let mut scratch = Vec::new();
    fft.forward(&mut white, &mut scratch);

    let grid = &plan.lambda_bank.grid;
    let y0 = shape_noise(&white, grid, &target, plan.cfg.sample_rate, plan.input_len);
    let y0 = AudioBuffer::new(y0, plan.cfg.sample_rate);
    // one empirical calibration pass: measure the realized band means and
    // rescale the gains, reusing the same noise realization
    let measured = band_means(
        &cqt(&y0, &plan.lambda_bank, plan.hop)?,
        plan.live_frames(),
    );
    let floor = 1e-12 * peak;
    let corrected: Vec<f64> = target
        .iter()
        .zip(&measured)
        .map(|(&t, &m)| if m > floor { t * t / m } else { t })
        .collect();
    let y = shape_noise(&white, grid, &corrected, plan.cfg.sample_rate, plan.input_len);
    Ok(AudioBuffer::new(y, plan.cfg.sample_rate))
}

/// One momentum + bold-driver update. The candidate's loss is appended to the
/// trace whether or not the step is kept.
pub fn step(
    state: &mut SynthesisState,
    target: &ScatteringCoefficients,
    cfg: &ScatteringConfig,
    opts: &SynthesisOptions,
) -> Result<()> {
    let out = scatter(&state.y, cfg)?;
    let (g, current) = backscatter_from_output(target, &out)?;
    if !current.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss at iteration {}",
            state.iteration
        )));
    }
    let m = opts.momentum;
    let mu = state.rate;
    let velocity: Vec<f64> = state
        .velocity
        .samples
        .iter()
        .zip(&g.samples)
        .map(|(u, gi)| m * u + mu * gi)
        .collect();
    let candidate = AudioBuffer::new(
        state
            .y
            .samples
            .iter()
            .zip(&velocity)
            .map(|(y, u)| y + u)
            .collect(),
        state.y.sample_rate,
    );
    let cand_report = forward_loss(target, &candidate, cfg)?;
    if !cand_report.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite candidate loss at iteration {}",
            state.iteration
        )));
    }
    let accepted = cand_report.total < current.total;
    if accepted {
        state.y = candidate;
        state.velocity = AudioBuffer::new(velocity, state.y.sample_rate);
        state.rate = mu * opts.grow;
    } else {
        state.velocity = AudioBuffer::zeros(state.y.len(), state.y.sample_rate);
        state.rate = mu * opts.shrink;
    }
    state.accepted = accepted;
    state.loss_trace.push(TraceEntry {
        iteration: state.iteration,
        report: cand_report,
        accepted,
        rate: mu,
    });
    state.iteration += 1;
    Ok(())
}

/// Full synthesis loop against precomputed target coefficients. `input_len`
/// fixes the iterate length (and thus the padded geometry, which must match
/// the target's). Snapshots are delivered through the callback so the caller
/// decides where they go.
pub fn synthesize_target(
    target: &ScatteringCoefficients,
    cfg: &ScatteringConfig,
    input_len: usize,
    opts: &SynthesisOptions,
    mut snapshot: Option<&mut dyn FnMut(usize, &AudioBuffer)>,
) -> Result<(AudioBuffer, SynthesisState)> {
    opts.validate()?;
    let plan = ScatteringPlan::new(cfg.clone(), input_len)?;
    if target.s1.values.nrows() != plan.n_frames {
        return Err(Error::Shape(format!(
            "target has {} frames but this length/config gives {}",
            target.s1.values.nrows(),
            plan.n_frames
        )));
    }
    let y0 = init_colored_noise(&target.s1, &plan, opts.seed)?;
    let mut state = SynthesisState::new(y0, opts);
    for _ in 0..opts.iterations {
        step(&mut state, target, cfg, opts)?;
        if opts.snapshot_every > 0 && state.iteration % opts.snapshot_every == 0 {
            if let Some(cb) = snapshot.as_deref_mut() {
                cb(state.iteration, &state.y);
            }
        }
    }
    state.y.check_finite()?;
    Ok((state.y.clone(), state))
}

/// Analyze `x` and resynthesize a texture with matching scattering
/// coefficients.
pub fn synthesize(
    x: &AudioBuffer,
    cfg: &ScatteringConfig,
    opts: &SynthesisOptions,
    snapshot: Option<&mut dyn FnMut(usize, &AudioBuffer)>,
) -> Result<(AudioBuffer, SynthesisState)> {
    let plan = ScatteringPlan::new(cfg.clone(), x.len())?;
    let out = scatter_with_plan(x, plan)?;
    let target = ScatteringCoefficients::from(&out);
    synthesize_target(&target, cfg, x.len(), opts, snapshot)
}

/// E(y0) for a target, used for convergence ratios in reports.
pub fn initial_loss(
    target: &ScatteringCoefficients,
    cfg: &ScatteringConfig,
    input_len: usize,
    seed: u64,
) -> Result<LossReport> {
    let plan = ScatteringPlan::new(cfg.clone(), input_len)?;
    let y0 = init_colored_noise(&target.s1, &plan, seed)?;
    forward_loss(target, &y0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering::scatter;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn test_cfg() -> ScatteringConfig {
        let mut cfg = ScatteringConfig::new(2048.0);
        cfg.q = 4;
        cfg.octaves = 3;
        cfg.t_samples = 512;
        cfg.u1_hop = Some(16);
        cfg
    }

    fn noise(len: usize, rate: f64, seed: u64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), rate)
    }

    #[test]
    fn zero_target_gives_silence() {
        let cfg = test_cfg();
        let plan = ScatteringPlan::new(cfg.clone(), 2048).unwrap();
        let s1 = Scalogram {
            values: ndarray::Array2::zeros((plan.n_frames, plan.n_lambda())),
            frame_rate: plan.u1_rate,
            lambda_grid: plan.lambda_bank.grid.clone(),
        };
        let y0 = init_colored_noise(&s1, &plan, 7).unwrap();
        assert_eq!(y0.len(), 2048);
        assert!(y0.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let cfg = test_cfg();
        let x = noise(2048, cfg.sample_rate, 1);
        let out = scatter(&x, &cfg).unwrap();
        let a = init_colored_noise(&out.s1, &out.plan, 7).unwrap();
        let b = init_colored_noise(&out.s1, &out.plan, 7).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = init_colored_noise(&out.s1, &out.plan, 8).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn colored_noise_matches_band_profile() {
        let cfg = test_cfg();
        // a strongly colored target: pink-ish noise
        let mut x = noise(2048, cfg.sample_rate, 2);
        let mut acc = 0.0;
        for v in &mut x.samples {
            acc = 0.7 * acc + 0.3 * *v;
            *v = acc;
        }
        let out = scatter(&x, &cfg).unwrap();
        let plan = &out.plan;
        let y0 = init_colored_noise(&out.s1, plan, 3).unwrap();
        let target = super::band_means(&out.s1, plan.live_frames());
        let measured = super::band_means(
            &cqt(&y0, &plan.lambda_bank, plan.hop).unwrap(),
            plan.live_frames(),
        );
        // interior bands of a single realization: 25% relative
        for j in 1..target.len() - 1 {
            let rel = (measured[j] - target[j]).abs() / target[j];
            assert!(rel < 0.25, "band {j}: target {} measured {}", target[j], measured[j]);
        }
    }

    #[test]
    fn zero_iterations_returns_initializer() {
        let cfg = test_cfg();
        let x = noise(2048, cfg.sample_rate, 4);
        let out = scatter(&x, &cfg).unwrap();
        let target = ScatteringCoefficients::from(&out);
        let mut opts = SynthesisOptions::default();
        opts.iterations = 0;
        opts.seed = 11;
        let (y, state) = synthesize_target(&target, &cfg, 2048, &opts, None).unwrap();
        let y0 = init_colored_noise(&out.s1, &out.plan, 11).unwrap();
        assert_eq!(y.samples, y0.samples);
        assert!(state.loss_trace.is_empty());
    }

    #[test]
    fn descent_loop_converges_and_trace_is_monotone_on_accepts() {
        let cfg = test_cfg();
        let x = noise(2048, cfg.sample_rate, 5);
        let out = scatter(&x, &cfg).unwrap();
        let target = ScatteringCoefficients::from(&out);
        let mut opts = SynthesisOptions::default();
        opts.iterations = 12;
        opts.seed = 9;
        let (_, state) = synthesize_target(&target, &cfg, 2048, &opts, None).unwrap();
        assert_eq!(state.loss_trace.len(), 12);
        let e0 = initial_loss(&target, &cfg, 2048, 9).unwrap().total;
        let last = state.loss_trace.last().unwrap().report.total;
        assert!(last < e0, "no improvement: {last} vs {e0}");
        let accepted: Vec<f64> = state
            .loss_trace
            .iter()
            .filter(|e| e.accepted)
            .map(|e| e.report.total)
            .collect();
        assert!(!accepted.is_empty());
        for w in accepted.windows(2) {
            assert!(w[1] < w[0], "accepted losses not strictly decreasing");
        }
        assert!(state.rate > 0.0);
    }

    #[test]
    fn step_at_target_keeps_iterate() {
        let cfg = test_cfg();
        let x = noise(2048, cfg.sample_rate, 6);
        let out = scatter(&x, &cfg).unwrap();
        let target = ScatteringCoefficients::from(&out);
        let opts = SynthesisOptions::default();
        let mut state = SynthesisState::new(x.clone(), &opts);
        step(&mut state, &target, &cfg, &opts).unwrap();
        assert_eq!(state.y.samples, x.samples);
        assert_eq!(state.loss_trace.len(), 1);
        assert_eq!(state.loss_trace[0].report.total, 0.0);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = test_cfg();
        let x = noise(2048, cfg.sample_rate, 12);
        let out = scatter(&x, &cfg).unwrap();
        let target = ScatteringCoefficients::from(&out);
        let mut opts = SynthesisOptions::default();
        opts.iterations = 4;
        opts.seed = 21;
        let (a, _) = synthesize_target(&target, &cfg, 2048, &opts, None).unwrap();
        let (b, _) = synthesize_target(&target, &cfg, 2048, &opts, None).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn snapshots_fire_on_schedule() {
        let cfg = test_cfg();
        let x = noise(2048, cfg.sample_rate, 13);
        let out = scatter(&x, &cfg).unwrap();
        let target = ScatteringCoefficients::from(&out);
        let mut opts = SynthesisOptions::default();
        opts.iterations = 4;
        opts.snapshot_every = 2;
        let mut seen = Vec::new();
        let mut cb = |n: usize, y: &AudioBuffer| {
            seen.push((n, y.len()));
        };
        synthesize_target(&target, &cfg, 2048, &opts, Some(&mut cb)).unwrap();
        assert_eq!(seen.iter().map(|e| e.0).collect::<Vec<_>>(), vec![2, 4]);
    }
}

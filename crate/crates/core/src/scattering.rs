//! Forward scattering transforms.
//!
//! First order: U1 is the modulus of the constant-Q transform, decimated to a
//! uniform frame rate; S1 averages it over time (and optionally over log
//! frequency). Second order: U2 is the modulus of joint wavelet convolutions
//! of U1 along time (rate alpha) and log-frequency (scale beta); S2 averages
//! U2 the same way. The spiral variant adds a third convolution across octave
//! indices at fixed chroma (rate gamma).
//!
//! All convolutions are circular Fourier products on power-of-two lengths.
//! Internal arrays stay on the full padded grid — the adjoint module relies
//! on every forward stage being an exact linear map (plus modulus), so no
//! trimming happens inside the pipeline; `cqt` trims for presentation only.

use crate::error::{Error, Result};
use crate::fft::{fft_real_padded, next_pow2, Fft};
use crate::filterbank::{
    build_cqt_bank, build_octave_bank, build_rate_bank, build_scale_bank, gaussian_lowpass,
    rate_grid, scale_grid, Filter, FilterAxis, FilterBank,
};
use crate::signal::AudioBuffer;
use ndarray::parallel::prelude::*;
use ndarray::{Array2, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

fn default_q() -> u32 {
    12
}
fn default_octaves() -> u32 {
    9
}
fn default_t_samples() -> usize {
    8192
}
fn default_q_mod() -> u32 {
    1
}
fn default_gamma_grid() -> Vec<f64> {
    vec![-0.25, 0.25]
}

/// Everything that determines the scattering representation of a signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringConfig {
    pub sample_rate: f64,
    /// Filters per octave of the lambda-bank.
    #[serde(default = "default_q")]
    pub q: u32,
    #[serde(default = "default_octaves")]
    pub octaves: u32,
    /// Temporal averaging span T, in samples at `sample_rate`.
    #[serde(default = "default_t_samples")]
    pub t_samples: usize,
    /// Filters per octave of the modulation banks.
    #[serde(default = "default_q_mod")]
    pub q_mod: u32,
    /// Log-frequency averaging span F in octaves; 0 keeps the representation
    /// transposition-sensitive (no blur applied).
    #[serde(default)]
    pub f_octaves: f64,
    /// U1 decimation hop in samples (power of two); default keeps the frame
    /// rate just above 256 Hz.
    #[serde(default)]
    pub u1_hop: Option<usize>,
    /// Ceiling of the modulation-rate grid; default u1_rate/4.
    #[serde(default)]
    pub alpha_max: Option<f64>,
    #[serde(default)]
    pub spiral_enabled: bool,
    /// Octave-rate wavelet centers in cycles per octave, |gamma| < 1/2.
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
}

impl ScatteringConfig {
    pub fn new(sample_rate: f64) -> Self {
        ScatteringConfig {
            sample_rate,
            q: default_q(),
            octaves: default_octaves(),
            t_samples: default_t_samples(),
            q_mod: default_q_mod(),
            f_octaves: 0.0,
            u1_hop: None,
            alpha_max: None,
            spiral_enabled: false,
            gamma_grid: default_gamma_grid(),
        }
    }

    pub fn hop(&self) -> usize {
        self.u1_hop.unwrap_or_else(|| {
            let mut h = 1usize;
            while (h * 2) as f64 <= self.sample_rate / 256.0 {
                h *= 2;
            }
            h
        })
    }

    pub fn u1_rate(&self) -> f64 {
        self.sample_rate / self.hop() as f64
    }

    pub fn t_seconds(&self) -> f64 {
        self.t_samples as f64 / self.sample_rate
    }

    pub fn alpha_ceiling(&self) -> f64 {
        self.alpha_max.unwrap_or(self.u1_rate() / 4.0)
    }

    pub fn n_lambda(&self) -> usize {
        (self.q * self.octaves) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if self.q < 1 || self.octaves < 1 || self.q_mod < 1 {
            return Err(Error::Config("Q, octaves and modulation Q must be >= 1".into()));
        }
        if self.t_samples == 0 {
            return Err(Error::Config("T must be positive".into()));
        }
        if !self.hop().is_power_of_two() {
            return Err(Error::Config(format!(
                "u1 hop {} must be a power of two",
                self.hop()
            )));
        }
        if !(self.f_octaves >= 0.0) || !self.f_octaves.is_finite() {
            return Err(Error::Config("F must be a finite value >= 0".into()));
        }
        let rate = self.u1_rate();
        let ceiling = self.alpha_ceiling();
        if !(rate > 2.0 * ceiling) {
            return Err(Error::Config(format!(
                "u1 rate {rate} must exceed twice the rate ceiling {ceiling}; \
                 lower alpha_max or shrink the hop"
            )));
        }
        Ok(())
    }
}

/// U1/S1: time x log-frequency map at the decimated frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram {
    /// Shape [n_frames, n_lambda].
    pub values: Array2<f64>,
    pub frame_rate: f64,
    /// Band center frequencies in Hz, ascending.
    pub lambda_grid: Vec<f64>,
}

impl Scalogram {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_lambda(&self) -> usize {
        self.values.ncols()
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Keep only the first `n_out` frames (drop the padding margin).
    pub fn trim_frames(&self, n_out: usize) -> Scalogram {
        let n = n_out.min(self.n_frames());
        Scalogram {
            values: self.values.slice(ndarray::s![..n, ..]).to_owned(),
            frame_rate: self.frame_rate,
            lambda_grid: self.lambda_grid.clone(),
        }
    }
}

/// One second-order coefficient channel: modulation rate, modulation scale,
/// and (spiral only) octave rate. The lambda band stays a dense tensor axis,
/// so a path identifies a whole [n_frames, n_lambda] plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringPath {
    /// Temporal modulation rate in Hz.
    pub alpha: f64,
    /// Log-frequency modulation scale in cycles per octave; 0 is the low-pass
    /// (unoriented) channel.
    pub beta: f64,
    /// Octave modulation rate in cycles per octave, spiral paths only.
    pub gamma: Option<f64>,
}

impl ScatteringPath {
    pub fn compare(&self, other: &ScatteringPath) -> Ordering {
        self.alpha
            .partial_cmp(&other.alpha)
            .unwrap()
            .then(self.beta.partial_cmp(&other.beta).unwrap())
            .then(match (self.gamma, other.gamma) {
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (Some(a), Some(b)) => a.partial_cmp(&b).unwrap(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TensorOrder {
    U2,
    S2,
    S1Bundle,
}

/// U2/S2: one non-negative [n_frames, n_lambda] plane per scattering path,
/// path-major, sorted by (alpha, beta, gamma).
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringTensor {
    pub paths: Vec<ScatteringPath>,
    pub values: Vec<Array2<f64>>,
    pub frame_rate: f64,
    pub order: TensorOrder,
}

impl ScatteringTensor {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn energy(&self) -> f64 {
        // fixed reduction order: per path, then across paths
        self.values
            .iter()
            .map(|p| p.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn find_path(&self, alpha: f64, beta: f64, gamma: Option<f64>) -> Option<usize> {
        self.paths
            .iter()
            .position(|p| p.alpha == alpha && p.beta == beta && p.gamma == gamma)
    }
}

/// Sorted, deduplicated path table for a config: the Cartesian product of the
/// rate grid (alpha > 1/T), the scale grid plus the beta = 0 slot, and the
/// gamma grid when the spiral is enabled.
pub fn enumerate_paths(cfg: &ScatteringConfig) -> Result<Vec<ScatteringPath>> {
    cfg.validate()?;
    let alphas = rate_grid(cfg.t_seconds(), cfg.q_mod, cfg.alpha_ceiling());
    if alphas.is_empty() {
        return Err(Error::EmptyGrid(format!(
            "no modulation rates above 1/T = {:.3} Hz",
            1.0 / cfg.t_seconds()
        )));
    }
    let mut betas = scale_grid(cfg.q_mod, cfg.q);
    betas.push(0.0);
    betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let gammas: Vec<Option<f64>> = if cfg.spiral_enabled {
        let mut g = cfg.gamma_grid.clone();
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        g.into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let mut paths = Vec::with_capacity(alphas.len() * betas.len() * gammas.len());
    for &alpha in &alphas {
        for &beta in &betas {
            for &gamma in &gammas {
                paths.push(ScatteringPath { alpha, beta, gamma });
            }
        }
    }
    paths.sort_by(|a, b| a.compare(b));
    paths.dedup_by(|a, b| a == b);
    Ok(paths)
}

/// Filterbanks and geometry for one (config, input length) pair.
#[derive(Debug, Clone)]
pub struct ScatteringPlan {
    pub cfg: ScatteringConfig,
    pub input_len: usize,
    pub padded_len: usize,
    pub hop: usize,
    pub n_frames: usize,
    pub u1_rate: f64,
    /// Padded length of the log-frequency axis for beta convolutions.
    pub beta_len: usize,
    pub lambda_bank: FilterBank,
    pub rate_bank: FilterBank,
    pub scale_bank: FilterBank,
    pub octave_bank: Option<FilterBank>,
    /// Log-frequency blur phi_F, present iff F > 0.
    pub f_lowpass: Option<Filter>,
}

impl ScatteringPlan {
    pub fn new(cfg: ScatteringConfig, input_len: usize) -> Result<Self> {
        cfg.validate()?;
        if input_len == 0 {
            return Err(Error::Config("input signal is empty".into()));
        }
        let hop = cfg.hop();
        let padded_len = next_pow2(input_len + cfg.t_samples);
        if hop > padded_len {
            return Err(Error::Config("hop exceeds the padded length".into()));
        }
        let n_frames = padded_len / hop;
        if n_frames < 4 {
            return Err(Error::Config(format!(
                "only {n_frames} frames at hop {hop}; input too short"
            )));
        }
        let u1_rate = cfg.sample_rate / hop as f64;
        let lambda_bank = build_cqt_bank(cfg.sample_rate, cfg.q, cfg.octaves, padded_len)?;
        let rate_bank = build_rate_bank(
            cfg.t_seconds(),
            cfg.q_mod,
            u1_rate,
            n_frames,
            cfg.alpha_ceiling(),
        )?;
        let n_lambda = cfg.n_lambda();
        let beta_len = next_pow2(2 * n_lambda);
        let scale_bank = build_scale_bank(cfg.q_mod, cfg.q, beta_len)?;
        let octave_bank = if cfg.spiral_enabled {
            let octave_len = next_pow2(2 * cfg.octaves as usize);
            Some(build_octave_bank(&cfg.gamma_grid, octave_len)?)
        } else {
            None
        };
        let f_lowpass = if cfg.f_octaves > 0.0 {
            Some(gaussian_lowpass(
                1.0 / cfg.f_octaves,
                beta_len,
                cfg.q as f64,
            )?)
        } else {
            None
        };
        Ok(ScatteringPlan {
            cfg,
            input_len,
            padded_len,
            hop,
            n_frames,
            u1_rate,
            beta_len,
            lambda_bank,
            rate_bank,
            scale_bank,
            octave_bank,
            f_lowpass,
        })
    }

    pub fn n_lambda(&self) -> usize {
        self.lambda_bank.n_filters()
    }

    /// Number of frames covering the actual input (without padding margin).
    pub fn live_frames(&self) -> usize {
        self.input_len.div_ceil(self.hop)
    }

    pub fn phi_t(&self) -> &Filter {
        self.rate_bank
            .lowpass
            .as_ref()
            .expect("rate bank always carries phi_T")
    }
}

// ---------------------------------------------------------------------------
// convolution helpers (circular, Fourier-domain, real zero-phase transfers)

/// FFT along the frame axis (Axis 0), one transform per lambda column.
pub(crate) fn column_spectra_real(values: &Array2<f64>) -> Array2<Complex64> {
    let n_frames = values.nrows();
    let fft = Fft::new(n_frames);
    let mut out = Array2::<Complex64>::zeros(values.raw_dim());
    out.axis_iter_mut(Axis(1))
        .into_par_iter()
        .enumerate()
        .for_each(|(j, mut col)| {
            let mut buf: Vec<Complex64> = values
                .column(j)
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect();
            let mut scratch = Vec::new();
            fft.forward(&mut buf, &mut scratch);
            for (c, b) in col.iter_mut().zip(&buf) {
                *c = *b;
            }
        });
    out
}

/// Per-column inverse FFT of spectra multiplied by a real transfer.
pub(crate) fn bandpass_columns(
    spectra: &Array2<Complex64>,
    transfer: &[f64],
) -> Array2<Complex64> {
    let n_frames = spectra.nrows();
    debug_assert_eq!(transfer.len(), n_frames);
    let fft = Fft::new(n_frames);
    let mut out = Array2::<Complex64>::zeros(spectra.raw_dim());
    out.axis_iter_mut(Axis(1))
        .into_par_iter()
        .enumerate()
        .for_each(|(j, mut col)| {
            let mut buf: Vec<Complex64> = spectra
                .column(j)
                .iter()
                .zip(transfer)
                .map(|(&s, &t)| s * t)
                .collect();
            let mut scratch = Vec::new();
            fft.inverse(&mut buf, &mut scratch);
            for (c, b) in col.iter_mut().zip(&buf) {
                *c = *b;
            }
        });
    out
}

/// Circular convolution along the frame axis with a real transfer; real data.
pub(crate) fn convolve_frames_real(values: &Array2<f64>, transfer: &[f64]) -> Array2<f64> {
    let n_frames = values.nrows();
    debug_assert_eq!(transfer.len(), n_frames);
    let fft = Fft::new(n_frames);
    let mut out = Array2::<f64>::zeros(values.raw_dim());
    out.axis_iter_mut(Axis(1))
        .into_par_iter()
        .enumerate()
        .for_each(|(j, mut col)| {
            let mut buf: Vec<Complex64> = values
                .column(j)
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect();
            let mut scratch = Vec::new();
            fft.forward(&mut buf, &mut scratch);
            for (b, &t) in buf.iter_mut().zip(transfer) {
                *b *= t;
            }
            fft.inverse(&mut buf, &mut scratch);
            for (c, b) in col.iter_mut().zip(&buf) {
                *c = b.re;
            }
        });
    out
}

/// Same for complex data (adjoint chains keep phases complex).
pub(crate) fn convolve_frames_complex(
    values: &Array2<Complex64>,
    transfer: &[f64],
) -> Array2<Complex64> {
    let n_frames = values.nrows();
    debug_assert_eq!(transfer.len(), n_frames);
    let fft = Fft::new(n_frames);
    let mut out = Array2::<Complex64>::zeros(values.raw_dim());
    out.axis_iter_mut(Axis(1))
        .into_par_iter()
        .enumerate()
        .for_each(|(j, mut col)| {
            let mut buf: Vec<Complex64> = values.column(j).to_vec();
            let mut scratch = Vec::new();
            fft.forward(&mut buf, &mut scratch);
            for (b, &t) in buf.iter_mut().zip(transfer) {
                *b *= t;
            }
            fft.inverse(&mut buf, &mut scratch);
            for (c, b) in col.iter_mut().zip(&buf) {
                *c = *b;
            }
        });
    out
}

/// Circular convolution along the lambda axis: each frame row is zero-padded
/// to the transfer length, filtered, and truncated back. Pad and truncate are
/// adjoint to each other, which keeps the backward pass exact.
pub(crate) fn convolve_lambda_complex(
    values: &Array2<Complex64>,
    transfer: &[f64],
) -> Array2<Complex64> {
    let n_lambda = values.ncols();
    let padded = transfer.len();
    debug_assert!(padded >= n_lambda);
    let fft = Fft::new(padded);
    let mut out = Array2::<Complex64>::zeros(values.raw_dim());
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let mut buf: Vec<Complex64> = values.row(i).to_vec();
            buf.resize(padded, Complex64::default());
            let mut scratch = Vec::new();
            fft.forward(&mut buf, &mut scratch);
            for (b, &t) in buf.iter_mut().zip(transfer) {
                *b *= t;
            }
            fft.inverse(&mut buf, &mut scratch);
            for (r, b) in row.iter_mut().zip(&buf) {
                *r = *b;
            }
        });
    out
}

pub(crate) fn convolve_lambda_real(values: &Array2<f64>, transfer: &[f64]) -> Array2<f64> {
    let complex = values.mapv(|v| Complex64::new(v, 0.0));
    convolve_lambda_complex(&complex, transfer).mapv(|v| v.re)
}

/// Convolution across octave indices at fixed chroma: the lambda axis is
/// reshaped to [octave x chroma] (chroma_q bands per octave) and each chroma
/// column is zero-padded to the transfer length along the octave index.
pub(crate) fn convolve_octave_complex(
    values: &Array2<Complex64>,
    transfer: &[f64],
    chroma_q: usize,
) -> Result<Array2<Complex64>> {
    let n_lambda = values.ncols();
    if chroma_q == 0 || n_lambda % chroma_q != 0 {
        return Err(Error::Shape(format!(
            "lambda axis of {n_lambda} bands does not reshape to {chroma_q} bands per octave"
        )));
    }
    let octaves = n_lambda / chroma_q;
    let padded = transfer.len();
    if padded < octaves {
        return Err(Error::Shape(format!(
            "octave transfer length {padded} shorter than {octaves} octaves"
        )));
    }
    let fft = Fft::new(padded);
    let mut out = Array2::<Complex64>::zeros(values.raw_dim());
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let src = values.row(i);
            let mut buf = vec![Complex64::default(); padded];
            let mut scratch = Vec::new();
            for c in 0..chroma_q {
                for (o, b) in buf.iter_mut().enumerate() {
                    *b = if o < octaves {
                        src[o * chroma_q + c]
                    } else {
                        Complex64::default()
                    };
                }
                fft.forward(&mut buf, &mut scratch);
                for (b, &t) in buf.iter_mut().zip(transfer) {
                    *b *= t;
                }
                fft.inverse(&mut buf, &mut scratch);
                for o in 0..octaves {
                    row[o * chroma_q + c] = buf[o];
                }
            }
        });
    Ok(out)
}

// ---------------------------------------------------------------------------
// first order

/// Complex constant-Q bands of a padded spectrum, decimated by `hop`.
pub(crate) fn analytic_bands(
    spectrum: &[Complex64],
    bank: &FilterBank,
    hop: usize,
) -> Array2<Complex64> {
    let len = bank.len;
    debug_assert_eq!(spectrum.len(), len);
    let n_frames = len / hop;
    let fft = Fft::new(len);
    let mut out = Array2::<Complex64>::zeros((n_frames, bank.n_filters()));
    out.axis_iter_mut(Axis(1))
        .into_par_iter()
        .enumerate()
        .for_each(|(j, mut col)| {
            let transfer = &bank.filters[j].transfer;
            let mut buf: Vec<Complex64> = spectrum
                .iter()
                .zip(transfer)
                .map(|(&s, &t)| s * t)
                .collect();
            let mut scratch = Vec::new();
            fft.inverse(&mut buf, &mut scratch);
            for (f, c) in col.iter_mut().enumerate() {
                *c = buf[f * hop];
            }
        });
    out
}

/// U1: modulus of the constant-Q transform at frame granularity `hop`.
/// The output is trimmed to the frames covering the input signal.
pub fn cqt(x: &AudioBuffer, bank: &FilterBank, hop: usize) -> Result<Scalogram> {
    x.check_finite()?;
    if bank.axis != FilterAxis::Time {
        return Err(Error::Config("cqt needs a time-axis bank".into()));
    }
    if !hop.is_power_of_two() {
        return Err(Error::Config("hop must be a power of two".into()));
    }
    if x.len() > bank.len {
        return Err(Error::Shape(format!(
            "signal of {} samples exceeds the bank length {}",
            x.len(),
            bank.len
        )));
    }
    let spectrum = fft_real_padded(&x.samples, bank.len);
    let w1 = analytic_bands(&spectrum, bank, hop);
    let values = w1.mapv(|v| v.norm());
    let live = x.len().div_ceil(hop);
    Ok(Scalogram {
        values: values.slice(ndarray::s![..live, ..]).to_owned(),
        frame_rate: x.sample_rate / hop as f64,
        lambda_grid: bank.grid.clone(),
    })
}

/// S1: temporal averaging of U1 by phi_T, plus log-frequency averaging by
/// phi_F when given.
pub fn average_s1(u1: &Scalogram, phi_t: &Filter, phi_f: Option<&Filter>) -> Result<Scalogram> {
    if phi_t.len() != u1.n_frames() {
        return Err(Error::Shape(format!(
            "phi_T length {} vs {} frames",
            phi_t.len(),
            u1.n_frames()
        )));
    }
    let mut values = convolve_frames_real(&u1.values, &phi_t.transfer);
    if let Some(f) = phi_f {
        values = convolve_lambda_real(&values, &f.transfer);
    }
    Ok(Scalogram {
        values,
        frame_rate: u1.frame_rate,
        lambda_grid: u1.lambda_grid.clone(),
    })
}

// ---------------------------------------------------------------------------
// second order

/// The transfers applied on the lambda axis, in ascending beta order with the
/// beta = 0 low-pass slotted in.
fn beta_slots(scale_bank: &FilterBank) -> Vec<(f64, Vec<f64>)> {
    let mut slots: Vec<(f64, Vec<f64>)> = Vec::with_capacity(scale_bank.n_filters() + 1);
    for (i, &beta) in scale_bank.grid.iter().enumerate() {
        slots.push((beta, scale_bank.filters[i].transfer.clone()));
    }
    if let Some(lp) = &scale_bank.lowpass {
        slots.push((0.0, lp.transfer.clone()));
    }
    slots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    slots
}

/// Pre-modulus second-order responses, one complex plane per path, sorted by
/// (alpha, beta, gamma).
pub(crate) fn strf_complex(
    u1: &Scalogram,
    rate_bank: &FilterBank,
    scale_bank: &FilterBank,
    octave_bank: Option<(&FilterBank, usize)>,
) -> Result<(Vec<ScatteringPath>, Vec<Array2<Complex64>>)> {
    if rate_bank.n_filters() == 0 {
        return Err(Error::EmptyGrid("empty rate bank".into()));
    }
    if rate_bank.len != u1.n_frames() {
        return Err(Error::Shape(format!(
            "rate bank length {} vs {} frames",
            rate_bank.len,
            u1.n_frames()
        )));
    }
    let slots = beta_slots(scale_bank);
    let u1_hat = column_spectra_real(&u1.values);
    let mut paths = Vec::new();
    let mut planes = Vec::new();
    for (ai, alpha) in rate_bank.grid.iter().enumerate() {
        let t_alpha = bandpass_columns(&u1_hat, &rate_bank.filters[ai].transfer);
        for (beta, transfer) in &slots {
            let w = convolve_lambda_complex(&t_alpha, transfer);
            match octave_bank {
                None => {
                    paths.push(ScatteringPath {
                        alpha: *alpha,
                        beta: *beta,
                        gamma: None,
                    });
                    planes.push(w);
                }
                Some((gb, chroma_q)) => {
                    for (gi, gamma) in gb.grid.iter().enumerate() {
                        let wg =
                            convolve_octave_complex(&w, &gb.filters[gi].transfer, chroma_q)?;
                        paths.push(ScatteringPath {
                            alpha: *alpha,
                            beta: *beta,
                            gamma: Some(*gamma),
                        });
                        planes.push(wg);
                    }
                }
            }
        }
    }
    Ok((paths, planes))
}

fn modulus_tensor(
    paths: Vec<ScatteringPath>,
    planes: &[Array2<Complex64>],
    frame_rate: f64,
) -> ScatteringTensor {
    let values = planes.iter().map(|p| p.mapv(|v| v.norm())).collect();
    ScatteringTensor {
        paths,
        values,
        frame_rate,
        order: TensorOrder::U2,
    }
}

/// U2: modulus of the joint time/log-frequency wavelet convolutions of U1.
pub fn strf(
    u1: &Scalogram,
    rate_bank: &FilterBank,
    scale_bank: &FilterBank,
) -> Result<ScatteringTensor> {
    let (paths, planes) = strf_complex(u1, rate_bank, scale_bank, None)?;
    Ok(modulus_tensor(paths, &planes, u1.frame_rate))
}

/// Spiral U2: adds a third convolution across octave indices (chroma_q bands
/// per octave); paths carry gamma.
pub fn spiral_scatter(
    u1: &Scalogram,
    rate_bank: &FilterBank,
    scale_bank: &FilterBank,
    octave_bank: &FilterBank,
    chroma_q: usize,
) -> Result<ScatteringTensor> {
    let (paths, planes) = strf_complex(u1, rate_bank, scale_bank, Some((octave_bank, chroma_q)))?;
    Ok(modulus_tensor(paths, &planes, u1.frame_rate))
}

/// One second-order response plane |u1 * time_filter *_lambda scale_filter|
/// for arbitrary filters — the building block behind strf(), exposed so the
/// beta-flip identity can be probed with mirrored filters.
pub fn modulated_response(
    u1: &Scalogram,
    time_filter: &Filter,
    scale_filter: &Filter,
) -> Result<Array2<f64>> {
    if time_filter.len() != u1.n_frames() {
        return Err(Error::Shape("time filter length mismatch".into()));
    }
    let u1_hat = column_spectra_real(&u1.values);
    let t = bandpass_columns(&u1_hat, &time_filter.transfer);
    let w = convolve_lambda_complex(&t, &scale_filter.transfer);
    Ok(w.mapv(|v| v.norm()))
}

/// S2: per-path temporal averaging by phi_T, plus log-frequency averaging by
/// phi_F when given.
pub fn average_s2(
    u2: &ScatteringTensor,
    phi_t: &Filter,
    phi_f: Option<&Filter>,
) -> Result<ScatteringTensor> {
    let values: Vec<Array2<f64>> = u2
        .values
        .par_iter()
        .map(|plane| {
            let mut v = convolve_frames_real(plane, &phi_t.transfer);
            if let Some(f) = phi_f {
                v = convolve_lambda_real(&v, &f.transfer);
            }
            v
        })
        .collect();
    Ok(ScatteringTensor {
        paths: u2.paths.clone(),
        values,
        frame_rate: u2.frame_rate,
        order: TensorOrder::S2,
    })
}

// ---------------------------------------------------------------------------
// full forward pass

/// Forward pass products. U1/U2 and the complex pre-modulus planes are kept
/// for the backward pass; everything lives on the full padded frame grid.
#[derive(Debug, Clone)]
pub struct ScatterOutput {
    pub plan: ScatteringPlan,
    pub u1: Scalogram,
    pub s1: Scalogram,
    pub u2: ScatteringTensor,
    pub s2: ScatteringTensor,
    /// Complex decimated constant-Q bands (pre-modulus), [n_frames, n_lambda].
    pub w1: Array2<Complex64>,
    /// Complex second-order responses (pre-modulus), one per path.
    pub w2: Vec<Array2<Complex64>>,
}

pub fn scatter(x: &AudioBuffer, cfg: &ScatteringConfig) -> Result<ScatterOutput> {
    let plan = ScatteringPlan::new(cfg.clone(), x.len())?;
    scatter_with_plan(x, plan)
}

pub fn scatter_with_plan(x: &AudioBuffer, plan: ScatteringPlan) -> Result<ScatterOutput> {
    x.check_finite()?;
    if x.len() != plan.input_len {
        return Err(Error::Shape(format!(
            "plan built for {} samples, got {}",
            plan.input_len,
            x.len()
        )));
    }
    let spectrum = fft_real_padded(&x.samples, plan.padded_len);
    let w1 = analytic_bands(&spectrum, &plan.lambda_bank, plan.hop);
    let u1 = Scalogram {
        values: w1.mapv(|v| v.norm()),
        frame_rate: plan.u1_rate,
        lambda_grid: plan.lambda_bank.grid.clone(),
    };
    let s1 = average_s1(&u1, plan.phi_t(), plan.f_lowpass.as_ref())?;
    let octave = plan
        .octave_bank
        .as_ref()
        .map(|b| (b, plan.cfg.q as usize));
    let (paths, w2) = strf_complex(&u1, &plan.rate_bank, &plan.scale_bank, octave)?;
    let u2 = modulus_tensor(paths, &w2, plan.u1_rate);
    let s2 = average_s2(&u2, plan.phi_t(), plan.f_lowpass.as_ref())?;
    Ok(ScatterOutput {
        plan,
        u1,
        s1,
        u2,
        s2,
        w1,
        w2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::mirror_filter;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn test_cfg() -> ScatteringConfig {
        ScatteringConfig {
            sample_rate: 2048.0,
            q: 4,
            octaves: 3,
            t_samples: 512,
            q_mod: 1,
            f_octaves: 0.0,
            u1_hop: Some(16),
            alpha_max: None,
            spiral_enabled: false,
            gamma_grid: vec![-0.25, 0.25],
        }
    }

    fn noise(len: usize, rate: f64, seed: u64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), rate)
    }

    fn sine(len: usize, rate: f64, freq: f64, amp: f64) -> AudioBuffer {
        AudioBuffer::new(
            (0..len)
                .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin())
                .collect(),
            rate,
        )
    }

    #[test]
    fn zero_input_zero_everything() {
        let cfg = test_cfg();
        let x = AudioBuffer::zeros(2048, cfg.sample_rate);
        let out = scatter(&x, &cfg).unwrap();
        assert_eq!(out.u1.energy(), 0.0);
        assert_eq!(out.s1.energy(), 0.0);
        assert_eq!(out.u2.energy(), 0.0);
        assert_eq!(out.s2.energy(), 0.0);
    }

    #[test]
    fn sine_concentrates_in_nearest_band() {
        let cfg = test_cfg();
        let plan = ScatteringPlan::new(cfg.clone(), 2048).unwrap();
        let grid = plan.lambda_bank.grid.clone();
        let lam0 = grid[6];
        let x = sine(2048, cfg.sample_rate, lam0, 1.0);
        let u1 = cqt(&x, &plan.lambda_bank, plan.hop).unwrap();
        // steady-state interior: one T away from each boundary
        let margin = cfg.t_samples / plan.hop;
        let live = plan.live_frames();
        // closed-form response of each band to the sinusoid
        let bin = (lam0 / cfg.sample_rate * plan.padded_len as f64).round() as usize;
        let expected: Vec<f64> = plan
            .lambda_bank
            .filters
            .iter()
            .map(|f| 0.5 * f.transfer[bin])
            .collect();
        let peak = expected.iter().cloned().fold(0.0f64, f64::max);
        for f in margin..live - margin {
            let row = u1.values.row(f);
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, 6, "frame {f}");
            for (j, (&got, &want)) in row.iter().zip(&expected).enumerate() {
                if want > 0.05 * peak {
                    assert!(
                        (got - want).abs() < 0.05 * want.max(0.1 * peak),
                        "frame {f} band {j}: got {got}, closed form {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn u1_shift_covariance_at_hop_granularity() {
        let cfg = test_cfg();
        let plan = ScatteringPlan::new(cfg.clone(), 2048).unwrap();
        let k = 3usize;
        let base = noise(2048 - k * plan.hop, cfg.sample_rate, 7);
        let mut a = base.samples.clone();
        a.resize(2048, 0.0);
        let mut b = vec![0.0; k * plan.hop];
        b.extend_from_slice(&base.samples);
        let ua = cqt(
            &AudioBuffer::new(a, cfg.sample_rate),
            &plan.lambda_bank,
            plan.hop,
        )
        .unwrap();
        let ub = cqt(
            &AudioBuffer::new(b, cfg.sample_rate),
            &plan.lambda_bank,
            plan.hop,
        )
        .unwrap();
        let margin = cfg.t_samples / plan.hop;
        let live = plan.live_frames();
        let mut num = 0.0;
        let mut den = 0.0;
        for f in margin..live - margin {
            for j in 0..ua.n_lambda() {
                let d = ub.values[[f, j]] - ua.values[[f - k, j]];
                num += d * d;
                den += ua.values[[f - k, j]].powi(2);
            }
        }
        assert!((num / den).sqrt() < 1e-6, "rel err {}", (num / den).sqrt());
    }

    #[test]
    fn s1_of_constant_is_constant() {
        let cfg = test_cfg();
        let plan = ScatteringPlan::new(cfg.clone(), 2048).unwrap();
        let u1 = Scalogram {
            values: Array2::from_elem((plan.n_frames, plan.n_lambda()), 0.7),
            frame_rate: plan.u1_rate,
            lambda_grid: plan.lambda_bank.grid.clone(),
        };
        let s1 = average_s1(&u1, plan.phi_t(), None).unwrap();
        for &v in s1.values.iter() {
            assert!((v - 0.7).abs() < 1e-12);
        }
        // constant per path passes through average_s2 unchanged too
        let u2 = ScatteringTensor {
            paths: vec![ScatteringPath { alpha: 8.0, beta: 0.0, gamma: None }],
            values: vec![Array2::from_elem((plan.n_frames, plan.n_lambda()), 0.3)],
            frame_rate: plan.u1_rate,
            order: TensorOrder::U2,
        };
        let s2 = average_s2(&u2, plan.phi_t(), None).unwrap();
        for &v in s2.values[0].iter() {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn averaging_is_non_expansive() {
        let cfg = test_cfg();
        let x = noise(2048, cfg.sample_rate, 11);
        let out = scatter(&x, &cfg).unwrap();
        assert!(out.s2.energy() <= out.u2.energy());
        assert!(out.s1.energy() <= out.u1.energy());
    }

    #[test]
    fn beta_flip_identity() {
        let cfg = test_cfg();
        let plan = ScatteringPlan::new(cfg.clone(), 2048).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let u1 = Scalogram {
            values: Array2::from_shape_fn((plan.n_frames, plan.n_lambda()), |_| {
                rng.gen_range(0.0..1.0)
            }),
            frame_rate: plan.u1_rate,
            lambda_grid: plan.lambda_bank.grid.clone(),
        };
        let psi_a = &plan.rate_bank.filters[1];
        let psi_a_neg = mirror_filter(psi_a);
        for (bi, &beta) in plan.scale_bank.grid.iter().enumerate() {
            let psi_b = &plan.scale_bank.filters[bi];
            let neg_idx = plan
                .scale_bank
                .grid
                .iter()
                .position(|&c| c == -beta)
                .unwrap();
            let psi_b_neg = &plan.scale_bank.filters[neg_idx];
            let lhs = modulated_response(&u1, psi_a, psi_b_neg).unwrap();
            let rhs = modulated_response(&u1, &psi_a_neg, psi_b).unwrap();
            let num: f64 = lhs
                .iter()
                .zip(rhs.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let den: f64 = lhs.iter().map(|a| a * a).sum();
            assert!(
                (num / den).sqrt() < 1e-10,
                "beta {beta}: rel err {}",
                (num / den).sqrt()
            );
        }
    }

    #[test]
    fn am_tone_rate_selectivity_and_orientation_symmetry() {
        let cfg = test_cfg();
        let plan = ScatteringPlan::new(cfg.clone(), 2048).unwrap();
        let lam0 = plan.lambda_bank.grid[6];
        let alpha0 = 16.0;
        let x = AudioBuffer::new(
            (0..2048)
                .map(|i| {
                    let t = i as f64 / cfg.sample_rate;
                    (1.0 + 0.9 * (2.0 * std::f64::consts::PI * alpha0 * t).cos())
                        * (2.0 * std::f64::consts::PI * lam0 * t).sin()
                })
                .collect(),
            cfg.sample_rate,
        );
        let out = scatter(&x, &cfg).unwrap();
        let margin = cfg.t_samples / plan.hop;
        let live = plan.live_frames();
        let interior_energy = |plane: &Array2<f64>| -> f64 {
            let mut e = 0.0;
            for f in margin..live - margin {
                for j in 0..plane.ncols() {
                    e += plane[[f, j]] * plane[[f, j]];
                }
            }
            e
        };
        // energy per alpha, summed over beta
        let mut by_alpha = std::collections::BTreeMap::new();
        for (p, plane) in out.u2.paths.iter().zip(&out.u2.values) {
            if p.beta != 0.0 {
                *by_alpha.entry(p.alpha as i64).or_insert(0.0) += interior_energy(plane);
            }
        }
        let best = by_alpha
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!(*best.0, alpha0 as i64);
        // vertical pattern: no preferred orientation at the dominant rate
        for &beta in &[1.0, 2.0] {
            let up = interior_energy(
                &out.u2.values[out.u2.find_path(alpha0, beta, None).unwrap()],
            );
            let down = interior_energy(
                &out.u2.values[out.u2.find_path(alpha0, -beta, None).unwrap()],
            );
            let rel = (up - down).abs() / up.max(down);
            assert!(rel < 0.01, "beta {beta}: asymmetry {rel}");
        }
    }

    #[test]
    fn enumerate_paths_grid_rules() {
        let cfg = ScatteringConfig::new(44100.0);
        let paths = enumerate_paths(&cfg).unwrap();
        let mut alphas: Vec<f64> = paths.iter().map(|p| p.alpha).collect();
        alphas.dedup();
        assert_eq!(alphas, vec![8.0, 16.0, 32.0, 64.0]);
        assert_eq!(paths.len(), 28); // 4 rates x 7 scales
        // doubling T adds exactly the rates in (1/(2T), 1/T]
        let mut cfg2 = cfg.clone();
        cfg2.t_samples *= 2;
        let paths2 = enumerate_paths(&cfg2).unwrap();
        let mut alphas2: Vec<f64> = paths2.iter().map(|p| p.alpha).collect();
        alphas2.dedup();
        let t_inv = 1.0 / cfg.t_seconds();
        let added: Vec<f64> = alphas2
            .iter()
            .filter(|a| !alphas.contains(a))
            .copied()
            .collect();
        assert!(!added.is_empty());
        for a in &added {
            assert!(*a > t_inv / 2.0 && *a <= t_inv);
        }
    }

    #[test]
    fn spiral_with_all_pass_gamma_equals_strf() {
        let cfg = test_cfg();
        let x = noise(2048, cfg.sample_rate, 5);
        let plan = ScatteringPlan::new(cfg.clone(), 2048).unwrap();
        let out = scatter(&x, &cfg).unwrap();
        let octave_len = next_pow2(2 * cfg.octaves as usize);
        let trivial = FilterBank {
            filters: vec![Filter::all_pass(octave_len)],
            lowpass: None,
            axis: FilterAxis::Octave,
            grid: vec![0.0],
            normalization_gain: 1.0,
            axis_rate: 1.0,
            len: octave_len,
        };
        let spiral = spiral_scatter(
            &out.u1,
            &plan.rate_bank,
            &plan.scale_bank,
            &trivial,
            cfg.q as usize,
        )
        .unwrap();
        assert_eq!(spiral.n_paths(), out.u2.n_paths());
        for (a, b) in spiral.values.iter().zip(&out.u2.values) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = test_cfg();
        let x = noise(2048, cfg.sample_rate, 3);
        let a = scatter(&x, &cfg).unwrap();
        let b = scatter(&x, &cfg).unwrap();
        assert_eq!(a.s1.values, b.s1.values);
        assert_eq!(a.s2.values, b.s2.values);
        assert_eq!(a.u2.values, b.u2.values);
    }
}

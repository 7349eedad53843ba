//! Coefficient-domain audio effects: user-declared functionals on the
//! scattering tensors (gains, path translations, chirp-rate inversion with a
//! sigmoid time schedule) rendered back to audio through the synthesis loop.

use crate::adjoint::ScatteringCoefficients;
use crate::error::{Error, Result};
use crate::scattering::{scatter_with_plan, Scalogram, ScatteringConfig, ScatteringPlan,
    ScatteringTensor};
use crate::signal::AudioBuffer;
use crate::synthesis::{synthesize_target, SynthesisOptions, SynthesisState};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Per-frame mixing weight between a coefficient and its orientation mirror,
/// in [-1, 1]: +1 keeps the original, -1 swaps beta with -beta.
#[derive(Debug, Clone, PartialEq)]
pub struct ChirpInversionSchedule {
    pub sigma: Vec<f64>,
    /// Sigmoid time constant in seconds; 0 for constant schedules.
    pub tau: f64,
    /// Zero crossing of the schedule in seconds from the start of the signal.
    pub origin: f64,
}

impl ChirpInversionSchedule {
    /// The schedule must vary slowly against the averaging window: tau of at
    /// least four windows. Returns a human-readable complaint when it does
    /// not; the effect still runs.
    pub fn check_time_constant(&self, t_seconds: f64) -> Option<String> {
        if self.tau > 0.0 && self.tau < 4.0 * t_seconds {
            Some(format!(
                "schedule time constant {:.4}s is below 4x the averaging window {:.4}s; \
                 the inversion boundary will smear",
                self.tau, t_seconds
            ))
        } else {
            None
        }
    }
}

/// sigma(t) = (1 - exp((t - origin)/tau)) / (1 + exp((t - origin)/tau)),
/// sampled on the coefficient frame grid: 1 far before the origin, 0 at it,
/// -1 far after.
pub fn sigma_sigmoid(
    tau: f64,
    origin: f64,
    n_frames: usize,
    frame_rate: f64,
) -> Result<ChirpInversionSchedule> {
    if !(tau > 0.0) {
        return Err(Error::Config("sigmoid time constant must be positive".into()));
    }
    if !(frame_rate > 0.0) {
        return Err(Error::Config("frame rate must be positive".into()));
    }
    let sigma = (0..n_frames)
        .map(|f| {
            let t = f as f64 / frame_rate - origin;
            let e = (t / tau).exp();
            if e.is_infinite() {
                -1.0
            } else {
                (1.0 - e) / (1.0 + e)
            }
        })
        .collect();
    Ok(ChirpInversionSchedule { sigma, tau, origin })
}

pub fn sigma_constant(value: f64, n_frames: usize) -> Result<ChirpInversionSchedule> {
    if !(-1.0..=1.0).contains(&value) {
        return Err(Error::Config("constant sigma must lie in [-1, 1]".into()));
    }
    Ok(ChirpInversionSchedule {
        sigma: vec![value; n_frames],
        tau: 0.0,
        origin: 0.0,
    })
}

/// Serializable schedule description, realized against a tensor's frame grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Constant { sigma: f64 },
    Sigmoid { tau: f64, origin: f64 },
}

impl ScheduleSpec {
    pub fn realize(&self, n_frames: usize, frame_rate: f64) -> Result<ChirpInversionSchedule> {
        match *self {
            ScheduleSpec::Constant { sigma } => sigma_constant(sigma, n_frames),
            ScheduleSpec::Sigmoid { tau, origin } => {
                sigma_sigmoid(tau, origin, n_frames, frame_rate)
            }
        }
    }
}

/// Per-frame convex mix of each oriented coefficient with its beta-mirror:
/// out(t, beta) = (1+sigma)/2 * in(t, beta) + (1-sigma)/2 * in(t, -beta).
/// Frames where a weight is exactly zero are copied, not recomputed, so the
/// extreme schedules are bit-exact. beta = 0 passes through.
pub fn chirp_inversion(
    s2: &ScatteringTensor,
    schedule: &ChirpInversionSchedule,
) -> Result<ScatteringTensor> {
    let n_frames = s2.values.first().map_or(0, |p| p.nrows());
    if schedule.sigma.len() != n_frames {
        return Err(Error::Shape(format!(
            "schedule has {} frames, tensor has {}",
            schedule.sigma.len(),
            n_frames
        )));
    }
    if let Some(bad) = schedule.sigma.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
        return Err(Error::Config(format!("sigma value {bad} outside [-1, 1]")));
    }
    let mut values = Vec::with_capacity(s2.values.len());
    for (path, plane) in s2.paths.iter().zip(&s2.values) {
        if path.beta == 0.0 {
            values.push(plane.clone());
            continue;
        }
        let mirror_idx = s2
            .find_path(path.alpha, -path.beta, path.gamma)
            .ok_or_else(|| {
                Error::Shape(format!(
                    "no mirror path for alpha {} beta {}",
                    path.alpha, path.beta
                ))
            })?;
        let mirror = &s2.values[mirror_idx];
        let mut out = plane.clone();
        for (f, &sigma) in schedule.sigma.iter().enumerate() {
            let keep = 0.5 * (1.0 + sigma);
            let flip = 0.5 * (1.0 - sigma);
            if flip == 0.0 {
                continue; // row already holds the original
            }
            if keep == 0.0 {
                out.row_mut(f).assign(&mirror.row(f));
                continue;
            }
            for j in 0..out.ncols() {
                out[[f, j]] = keep * plane[[f, j]] + flip * mirror[[f, j]];
            }
        }
        values.push(out);
    }
    Ok(ScatteringTensor {
        paths: s2.paths.clone(),
        values,
        frame_rate: s2.frame_rate,
        order: s2.order,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslationAxis {
    /// Shift along the temporal modulation rate lattice.
    Log2Alpha,
    /// Shift along the scale magnitude lattice, orientation preserved.
    Log2Beta,
    /// Shift along the carrier log-frequency axis.
    Log2Lambda,
}

/// One shape-preserving coefficient map. These compose left to right inside
/// a [`CoefficientFunctional`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum FunctionalPrimitive {
    Gain { factor: f64 },
    Translate { axis: TranslationAxis, steps: i64 },
    ChirpInversion { schedule: ScheduleSpec },
}

/// User-declared effect: a primitive chain for the first-order tensor and one
/// for the second-order tensor. Empty chains are the identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFunctional {
    #[serde(default)]
    pub f1: Vec<FunctionalPrimitive>,
    #[serde(default)]
    pub f2: Vec<FunctionalPrimitive>,
}

impl CoefficientFunctional {
    pub fn identity() -> Self {
        CoefficientFunctional::default()
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.f1 {
            match p {
                FunctionalPrimitive::ChirpInversion { .. } => {
                    return Err(Error::Config(
                        "chirp inversion acts on second-order coefficients only".into(),
                    ))
                }
                FunctionalPrimitive::Translate { axis, .. }
                    if *axis != TranslationAxis::Log2Lambda =>
                {
                    return Err(Error::Config(
                        "first-order coefficients only carry the log-frequency axis".into(),
                    ))
                }
                FunctionalPrimitive::Gain { factor } if *factor < 0.0 => {
                    return Err(Error::Config("gain must be non-negative".into()))
                }
                _ => {}
            }
        }
        for p in &self.f2 {
            if let FunctionalPrimitive::Gain { factor } = p {
                if *factor < 0.0 {
                    return Err(Error::Config("gain must be non-negative".into()));
                }
            }
        }
        Ok(())
    }
}

/// Columns shifted by `steps` positions toward higher indices, zero-filled at
/// the vacated edge.
fn shift_columns(a: &Array2<f64>, steps: i64) -> Array2<f64> {
    let (rows, cols) = a.dim();
    let mut out = Array2::zeros((rows, cols));
    for j in 0..cols as i64 {
        let src = j - steps;
        if (0..cols as i64).contains(&src) {
            out.column_mut(j as usize)
                .assign(&a.column(src as usize));
        }
    }
    out
}

fn distinct_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

/// Path-index translation: each path's plane is taken from the path `steps`
/// lattice positions below it on the chosen log axis; paths whose source
/// falls off the lattice become zero.
fn translate_paths(
    s2: &ScatteringTensor,
    axis: TranslationAxis,
    steps: i64,
) -> Result<ScatteringTensor> {
    if axis == TranslationAxis::Log2Lambda {
        let values = s2.values.iter().map(|p| shift_columns(p, steps)).collect();
        return Ok(ScatteringTensor {
            paths: s2.paths.clone(),
            values,
            frame_rate: s2.frame_rate,
            order: s2.order,
        });
    }
    let lattice = match axis {
        TranslationAxis::Log2Alpha => distinct_sorted(s2.paths.iter().map(|p| p.alpha)),
        TranslationAxis::Log2Beta => {
            distinct_sorted(s2.paths.iter().filter(|p| p.beta != 0.0).map(|p| p.beta.abs()))
        }
        TranslationAxis::Log2Lambda => unreachable!(),
    };
    let index_of = |v: f64| lattice.iter().position(|&x| x == v);
    let mut values = Vec::with_capacity(s2.values.len());
    for (path, plane) in s2.paths.iter().zip(&s2.values) {
        let source = match axis {
            TranslationAxis::Log2Alpha => {
                let i = index_of(path.alpha).ok_or_else(|| {
                    Error::Shape(format!("alpha {} not on the rate lattice", path.alpha))
                })? as i64;
                let src = i - steps;
                (0..lattice.len() as i64).contains(&src).then(|| {
                    s2.find_path(lattice[src as usize], path.beta, path.gamma)
                })
            }
            TranslationAxis::Log2Beta => {
                if path.beta == 0.0 {
                    values.push(plane.clone());
                    continue;
                }
                let i = index_of(path.beta.abs()).ok_or_else(|| {
                    Error::Shape(format!("beta {} not on the scale lattice", path.beta))
                })? as i64;
                let src = i - steps;
                (0..lattice.len() as i64).contains(&src).then(|| {
                    s2.find_path(
                        path.alpha,
                        path.beta.signum() * lattice[src as usize],
                        path.gamma,
                    )
                })
            }
            TranslationAxis::Log2Lambda => unreachable!(),
        };
        match source.flatten() {
            Some(idx) => values.push(s2.values[idx].clone()),
            None => values.push(Array2::zeros(plane.dim())),
        }
    }
    Ok(ScatteringTensor {
        paths: s2.paths.clone(),
        values,
        frame_rate: s2.frame_rate,
        order: s2.order,
    })
}

fn apply_to_s1(s1: &Scalogram, p: &FunctionalPrimitive) -> Result<Scalogram> {
    let values = match p {
        FunctionalPrimitive::Gain { factor } => &s1.values * *factor,
        FunctionalPrimitive::Translate { axis, steps } => {
            if *axis != TranslationAxis::Log2Lambda {
                return Err(Error::Config(
                    "first-order coefficients only carry the log-frequency axis".into(),
                ));
            }
            shift_columns(&s1.values, *steps)
        }
        FunctionalPrimitive::ChirpInversion { .. } => {
            return Err(Error::Config(
                "chirp inversion acts on second-order coefficients only".into(),
            ))
        }
    };
    Ok(Scalogram {
        values,
        frame_rate: s1.frame_rate,
        lambda_grid: s1.lambda_grid.clone(),
    })
}

fn apply_to_s2(s2: &ScatteringTensor, p: &FunctionalPrimitive) -> Result<ScatteringTensor> {
    match p {
        FunctionalPrimitive::Gain { factor } => Ok(ScatteringTensor {
            paths: s2.paths.clone(),
            values: s2.values.iter().map(|v| v * *factor).collect(),
            frame_rate: s2.frame_rate,
            order: s2.order,
        }),
        FunctionalPrimitive::Translate { axis, steps } => translate_paths(s2, *axis, *steps),
        FunctionalPrimitive::ChirpInversion { schedule } => {
            let n_frames = s2.values.first().map_or(0, |v| v.nrows());
            let sched = schedule.realize(n_frames, s2.frame_rate)?;
            chirp_inversion(s2, &sched)
        }
    }
}

/// Runs both primitive chains; the returned log lists every applied primitive
/// as its JSON form, for provenance sidecars.
pub fn apply_functional(
    coeffs: &ScatteringCoefficients,
    f: &CoefficientFunctional,
) -> Result<(ScatteringCoefficients, Vec<String>)> {
    f.validate()?;
    let mut log = Vec::new();
    let mut s1 = coeffs.s1.clone();
    for p in &f.f1 {
        s1 = apply_to_s1(&s1, p)?;
        log.push(format!("f1 {}", serde_json::to_string(p)?));
    }
    let mut s2 = coeffs.s2.clone();
    for p in &f.f2 {
        s2 = apply_to_s2(&s2, p)?;
        log.push(format!("f2 {}", serde_json::to_string(p)?));
    }
    Ok((ScatteringCoefficients { s1, s2 }, log))
}

/// Analyze `x`, transform its coefficients, and synthesize a waveform whose
/// scattering approximates the transformed target. With the identity
/// functional this is exactly plain resynthesis.
pub fn render_effect(
    x: &AudioBuffer,
    f: &CoefficientFunctional,
    cfg: &ScatteringConfig,
    opts: &SynthesisOptions,
    snapshot: Option<&mut dyn FnMut(usize, &AudioBuffer)>,
) -> Result<(AudioBuffer, SynthesisState)> {
    let plan = ScatteringPlan::new(cfg.clone(), x.len())?;
    let out = scatter_with_plan(x, plan)?;
    let coeffs = ScatteringCoefficients::from(&out);
    let (target, _log) = apply_functional(&coeffs, f)?;
    synthesize_target(&target, cfg, x.len(), opts, snapshot)
}

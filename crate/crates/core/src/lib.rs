//! Time-frequency scattering for audio: constant-Q analysis, joint
//! time/log-frequency modulation coefficients, gradient-based resynthesis
//! from the coefficients, and coefficient-domain effects.

pub mod adjoint;
pub mod error;
pub mod fft;
pub mod filterbank;
pub mod io;
pub mod scalerate;
pub mod scattering;
pub mod signal;
pub mod synthesis;

pub use adjoint::{
    backscatter, backscatter_from_output, forward_loss, grad_s2_to_u2, grad_u1_to_waveform,
    grad_u2_to_u1, loss, GradientTape, LossReport, ScatteringCoefficients,
};
pub use error::{Error, Result};
pub use filterbank::{
    build_cqt_bank, build_modulation_banks, build_morlet, build_octave_bank, build_rate_bank,
    build_scale_bank, gaussian_lowpass, littlewood_paley, Filter, FilterAxis, FilterBank,
    LittlewoodPaley, MorletSpec,
};
pub use io::{
    container_info, read_coefficients, read_wav, write_coefficients, write_wav, CoefficientFile,
    WavFormat,
};
pub use scalerate::{
    apply_functional, chirp_inversion, render_effect, sigma_constant, sigma_sigmoid,
    ChirpInversionSchedule, CoefficientFunctional, FunctionalPrimitive, ScheduleSpec,
    TranslationAxis,
};
pub use scattering::{
    average_s1, average_s2, cqt, enumerate_paths, modulated_response, scatter, scatter_with_plan,
    spiral_scatter, strf, Scalogram, ScatterOutput, ScatteringConfig, ScatteringPath,
    ScatteringPlan, ScatteringTensor, TensorOrder,
};
pub use signal::AudioBuffer;
pub use synthesis::{
    init_colored_noise, synthesize, synthesize_target, SynthesisOptions, SynthesisState,
    TraceEntry,
};

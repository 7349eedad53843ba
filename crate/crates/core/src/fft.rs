//! Thin wrapper around rustfft with a process-wide plan cache.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

type Plan = Arc<dyn rustfft::Fft<f64>>;

fn plan_cache() -> &'static Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)> {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)>> =
        OnceLock::new();
    CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())))
}

fn plan(len: usize, inverse: bool) -> Plan {
    let mut guard = plan_cache().lock().unwrap();
    let (planner, cache) = &mut *guard;
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// Forward and inverse transforms of a fixed length, safe to share across threads.
#[derive(Clone)]
pub struct Fft {
    fwd: Plan,
    inv: Plan,
    len: usize,
}

impl Fft {
    pub fn new(len: usize) -> Self {
        Fft {
            fwd: plan(len, false),
            inv: plan(len, true),
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        debug_assert_eq!(buf.len(), self.len);
        scratch.resize(self.fwd.get_inplace_scratch_len(), Complex64::default());
        self.fwd.process_with_scratch(buf, scratch);
    }

    /// Inverse transform, scaled by 1/N so that `inverse(forward(x)) == x`.
    pub fn inverse(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        debug_assert_eq!(buf.len(), self.len);
        scratch.resize(self.inv.get_inplace_scratch_len(), Complex64::default());
        self.inv.process_with_scratch(buf, scratch);
        let scale = 1.0 / self.len as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Frequency of DFT bin `k` for a length-`len` transform at the given axis rate,
/// in the signed convention (bins past len/2 map to negative frequencies).
pub fn bin_frequency(k: usize, len: usize, rate: f64) -> f64 {
    let k = k as i64;
    let len = len as i64;
    let signed = if k <= len / 2 { k } else { k - len };
    signed as f64 * rate / len as f64
}

/// FFT of a real signal zero-padded to `len`.
pub fn fft_real_padded(x: &[f64], len: usize) -> Vec<Complex64> {
    assert!(x.len() <= len);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(len, Complex64::default());
    let fft = Fft::new(len);
    let mut scratch = Vec::new();
    fft.forward(&mut buf, &mut scratch);
    buf
}

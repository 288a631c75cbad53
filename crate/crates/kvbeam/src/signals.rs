//! Reference and disturbance signal generators: finite trigonometric sums,
//! the 2-periodic triangle wave, and its truncated Fourier representation.

use nalgebra::DVector;

use crate::error::{KvError, Result};

/// Finite trigonometric sum
/// `s(t) = a0 + sum_k (a_k cos(w_k t) + b_k sin(w_k t))`
/// with vector-valued coefficients.
#[derive(Debug, Clone)]
pub struct TrigSignal {
    pub a0: DVector<f64>,
    /// Strictly positive frequencies of the oscillatory terms.
    pub freqs: Vec<f64>,
    pub a_cos: Vec<DVector<f64>>,
    pub b_sin: Vec<DVector<f64>>,
}

impl TrigSignal {
    pub fn new(
        a0: DVector<f64>,
        freqs: Vec<f64>,
        a_cos: Vec<DVector<f64>>,
        b_sin: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if a_cos.len() != freqs.len() || b_sin.len() != freqs.len() {
            return Err(KvError::dims(
                "coefficient lists must match the frequency list length",
            ));
        }
        let dim = a0.len();
        if a_cos.iter().chain(b_sin.iter()).any(|v| v.len() != dim) {
            return Err(KvError::dims(
                "all coefficient vectors must share the component count",
            ));
        }
        if freqs.iter().any(|&w| !(w > 0.0)) {
            return Err(KvError::invalid("oscillatory frequencies must be positive"));
        }
        Ok(TrigSignal {
            a0,
            freqs,
            a_cos,
            b_sin,
        })
    }

    pub fn constant(a0: DVector<f64>) -> Self {
        TrigSignal {
            a0,
            freqs: vec![],
            a_cos: vec![],
            b_sin: vec![],
        }
    }

    pub fn zero(dim: usize) -> Self {
        TrigSignal::constant(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.a0.len()
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let mut v = self.a0.clone();
        for (k, &w) in self.freqs.iter().enumerate() {
            let (s, c) = (w * t).sin_cos();
            v += &self.a_cos[k] * c + &self.b_sin[k] * s;
        }
        v
    }

    /// Largest coefficient magnitude; a simple amplitude scale.
    pub fn amplitude(&self) -> f64 {
        let mut amp = self.a0.amax();
        for v in self.a_cos.iter().chain(self.b_sin.iter()) {
            amp = amp.max(v.amax());
        }
        amp
    }
}

/// 2-periodic triangle wave with zeros at integer times, peak `amplitude`
/// at t = 0.5 and trough at t = 1.5.
#[derive(Debug, Clone, Copy)]
pub struct TriangleWave {
    pub amplitude: f64,
}

impl TriangleWave {
    pub fn new(amplitude: f64) -> Self {
        TriangleWave { amplitude }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s = t.rem_euclid(2.0);
        let a = self.amplitude;
        if s < 0.5 {
            2.0 * a * s
        } else if s < 1.5 {
            a - 2.0 * a * (s - 0.5)
        } else {
            -a + 2.0 * a * (s - 1.5)
        }
    }
}

/// Analytic Fourier truncation of the triangle wave onto the harmonics in
/// `freqs` (each a multiple of pi; a leading zero frequency is allowed and
/// contributes nothing because the wave has zero mean). The result is a
/// two-component signal (triangle in the first slot, zero in the second);
/// only odd harmonics carry nonzero sine coefficients.
pub fn fourier_truncate(wave: &TriangleWave, freqs: &[f64]) -> Result<TrigSignal> {
    let pi = std::f64::consts::PI;
    let mut osc_freqs = Vec::new();
    let mut a_cos = Vec::new();
    let mut b_sin = Vec::new();
    for &w in freqs {
        let ratio = w / pi;
        let k = ratio.round();
        if (ratio - k).abs() > 1e-9 {
            return Err(KvError::invalid(format!(
                "frequency {w} is not an integer multiple of pi"
            )));
        }
        let k = k as i64;
        if k < 0 {
            return Err(KvError::invalid("frequencies must be nonnegative"));
        }
        if k == 0 {
            continue; // zero-mean wave: no constant term
        }
        let mut b = DVector::zeros(2);
        if k % 2 == 1 {
            let sign = if (k - 1) % 4 == 0 { 1.0 } else { -1.0 };
            b[0] = sign * 8.0 * wave.amplitude / (pi * pi * (k * k) as f64);
        }
        osc_freqs.push(w);
        a_cos.push(DVector::zeros(2));
        b_sin.push(b);
    }
    TrigSignal::new(DVector::zeros(2), osc_freqs, a_cos, b_sin)
}

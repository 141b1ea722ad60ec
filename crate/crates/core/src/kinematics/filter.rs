//! Butterworth low-pass as a cascade of bilinear-transform biquads, with an
//! optional forward-backward pass for zero phase.

use super::{KinematicsError, Signal};

/// Second-order section in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Runs the section over `data` in place, starting from the steady state
    /// for a constant input equal to `data[0]`.
    fn run(&self, data: &mut [f64]) {
        let Some(&x0) = data.first() else { return };
        let mut s1 = (1.0 - self.b0) * x0;
        let mut s2 = (self.b2 - self.a2) * x0;
        for v in data.iter_mut() {
            let x = *v;
            let y = self.b0 * x + s1;
            s1 = self.b1 * x - self.a1 * y + s2;
            s2 = self.b2 * x - self.a2 * y;
            *v = y;
        }
    }

    /// |H(e^{jw})| at frequency `f` for sample rate `fs`.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f / fs;
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b0 + self.b1 * c1 + self.b2 * c2,
            self.b1 * s1 + self.b2 * s2,
        );
        let den = (
            1.0 + self.a1 * c1 + self.a2 * c2,
            self.a1 * s1 + self.a2 * s2,
        );
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

/// Biquad sections of an even-order Butterworth low-pass. Each section has
/// unity gain at DC.
pub fn butterworth_sections(
    cutoff_hz: f64,
    sample_rate_hz: f64,
    order: usize,
) -> Result<Vec<Biquad>, KinematicsError> {
    if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
        return Err(KinematicsError::CutoffOutOfRange {
            cutoff_hz,
            nyquist_hz: sample_rate_hz / 2.0,
        });
    }
    if order == 0 || order % 2 != 0 {
        return Err(KinematicsError::InvalidOrder(order));
    }
    // pre-warped analog cutoff
    let k = (std::f64::consts::PI * cutoff_hz / sample_rate_hz).tan();
    let k2 = k * k;
    let sections = (0..order / 2)
        .map(|i| {
            let theta = std::f64::consts::PI * (2 * i + 1) as f64 / (2 * order) as f64;
            let damp = 2.0 * theta.sin();
            let norm = 1.0 / (1.0 + damp * k + k2);
            let b0 = k2 * norm;
            Biquad {
                b0,
                b1: 2.0 * b0,
                b2: b0,
                a1: 2.0 * (k2 - 1.0) * norm,
                a2: (1.0 - damp * k + k2) * norm,
            }
        })
        .collect();
    Ok(sections)
}

fn run_cascade(sections: &[Biquad], data: &mut [f64]) {
    for s in sections {
        s.run(data);
    }
}

/// Low-pass filters `signal`.
///
/// With `zero_phase` the cascade runs forward then backward over an
/// odd-reflected extension of `3 * order` samples per side, so the effective
/// magnitude response is squared (0.5 at the cutoff) with no delay.
pub fn butterworth_lowpass(
    signal: &Signal,
    cutoff_hz: f64,
    order: usize,
    zero_phase: bool,
) -> Result<Signal, KinematicsError> {
    let sections = butterworth_sections(cutoff_hz, signal.sample_rate_hz, order)?;
    let n = signal.values.len();
    let pad = 3 * order;
    if n <= pad {
        return Err(KinematicsError::SignalTooShort {
            len: n,
            need: pad + 1,
        });
    }
    if !zero_phase {
        let mut out = signal.values.clone();
        run_cascade(&sections, &mut out);
        return Ok(Signal::new(out, signal.sample_rate_hz));
    }

    let x = &signal.values;
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    run_cascade(&sections, &mut ext);
    ext.reverse();
    run_cascade(&sections, &mut ext);
    ext.reverse();

    Ok(Signal::new(
        ext[pad..pad + n].to_vec(),
        signal.sample_rate_hz,
    ))
}

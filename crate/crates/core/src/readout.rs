//! Semi-classical simulation of multi-tone dispersive readout: mean-field
//! resonator trajectories, closed-form integrated IQ values, and synthetic
//! labeled shots with decay during the readout window.
//!
//! Frequencies are ordinary (GHz) everywhere in the public interface; the
//! angular factors live inside this module (`ω = 2π × 10³ f` rad/µs for `f`
//! in GHz, times in µs). The complex resonator frequency for transmon state
//! `|j⟩` is `f̄_j = (f_r + χ_j) - i κ/2` with `κ` the ordinary-frequency
//! linewidth, which is the ordinary-frequency form of `ω̄ = ω - i κ_ang/2`.
//!
//! In the frame rotating at demodulation frequency `ω_m`, the mean-field
//! amplitude obeys
//!
//! ```text
//! Ȧ = -i (ω̄ - ω_m) A - i Σ_d (Ω_d/2) e^{-i(ω_d - ω_m)t - iφ_d}
//! ```
//!
//! whose closed-form solution (vacuum initial condition) is a linear sum
//! over tones; everything here evaluates that solution and its exact
//! antiderivative, with no numerical quadrature.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::dispersive::{DispersiveReport, ResonatorModel};
use crate::error::{Error, Result};
use crate::ANGULAR_PER_US_PER_GHZ;

/// One readout tone with its demodulation frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    /// Drive frequency in GHz.
    pub f_d: f64,
    /// Drive amplitude `Ω_d` in GHz.
    pub amplitude: f64,
    /// Drive phase in radians.
    pub phase: f64,
    /// Demodulation frequency for this tone's IQ plane, in GHz.
    pub demod_f: f64,
}

/// A multi-tone drive specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneSet {
    pub tones: Vec<Tone>,
    /// Integration window `T` in µs.
    pub integration_time: f64,
}

impl ToneSet {
    pub fn validate(&self) -> Result<()> {
        if self.tones.is_empty() {
            return Err(Error::InvalidInput("tone set is empty".into()));
        }
        if !(self.integration_time > 0.0) {
            return Err(Error::InvalidInput(format!(
                "integration time must be positive, got {}",
                self.integration_time
            )));
        }
        Ok(())
    }

    pub fn tone_count(&self) -> usize {
        self.tones.len()
    }
}

/// One readout shot: flat `(I_1, Q_1, ..., I_D, Q_D)` vector in arbitrary
/// consistent amplitude units, with the prepared state when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IQRecord {
    pub values: Vec<f64>,
    pub true_label: Option<usize>,
}

impl IQRecord {
    pub fn tone_count(&self) -> usize {
        self.values.len() / 2
    }
}

/// Complex resonator frequency `(f_r + χ_j) - i κ/2` for transmon state `j`,
/// in ordinary-frequency GHz.
pub fn state_pulled_frequency(
    res: &ResonatorModel,
    chi: &DispersiveReport,
    j: usize,
) -> Result<Complex64> {
    if j >= chi.chi.len() {
        return Err(Error::InvalidInput(format!(
            "state {j} outside the {}-level dispersive report",
            chi.chi.len()
        )));
    }
    Ok(Complex64::new(res.f_r + chi.chi[j], -0.5 * res.kappa))
}

/// Angular form (rad/µs) of an ordinary complex frequency in GHz.
fn angular(f: Complex64) -> Complex64 {
    ANGULAR_PER_US_PER_GHZ * f
}

/// `∫_{t0}^{t1} e^{-izt} dt`, stable as `z → 0`.
fn phase_integral(z: Complex64, t0: f64, t1: f64) -> Complex64 {
    let dt = t1 - t0;
    if z.norm() * dt < 1e-12 {
        return Complex64::new(dt, 0.0);
    }
    let i = Complex64::i();
    (-i * z * t0).exp() * (1.0 - (-i * z * dt).exp()) / (i * z)
}

/// Tone coefficient `β_d = -(Ω_d/2) e^{-iφ_d} / (ω̄ - ω_d)` of the driven
/// (particular) solution, in angular units.
fn tone_coefficient(pulled: Complex64, tone: &Tone) -> Complex64 {
    let wbar = angular(pulled);
    let wd = ANGULAR_PER_US_PER_GHZ * tone.f_d;
    let omega = ANGULAR_PER_US_PER_GHZ * tone.amplitude;
    -(0.5 * omega) * (-Complex64::i() * tone.phase).exp() / (wbar - wd)
}

/// Driven (particular) solution at time `t` in the `ω_m` frame.
fn particular(pulled: Complex64, tones: &ToneSet, demod: usize, t: f64) -> Complex64 {
    let wm = ANGULAR_PER_US_PER_GHZ * tones.tones[demod].demod_f;
    tones
        .tones
        .iter()
        .map(|tone| {
            let wd = ANGULAR_PER_US_PER_GHZ * tone.f_d;
            tone_coefficient(pulled, tone) * (-Complex64::i() * (wd - wm) * t).exp()
        })
        .sum()
}

/// Mean-field amplitude at time `t ≥ t0` given `A(t0) = a0`.
fn amplitude_at(
    pulled: Complex64,
    tones: &ToneSet,
    demod: usize,
    t0: f64,
    a0: Complex64,
    t: f64,
) -> Complex64 {
    let wm = ANGULAR_PER_US_PER_GHZ * tones.tones[demod].demod_f;
    let wbar = angular(pulled);
    let p_t = particular(pulled, tones, demod, t);
    let p_t0 = particular(pulled, tones, demod, t0);
    p_t + (a0 - p_t0) * (-Complex64::i() * (wbar - wm) * (t - t0)).exp()
}

/// `∫_{t0}^{t1} A(t) dt` for the segment starting at `A(t0) = a0`,
/// evaluated from the closed-form antiderivative.
fn integrated_span(
    pulled: Complex64,
    tones: &ToneSet,
    demod: usize,
    t0: f64,
    t1: f64,
    a0: Complex64,
) -> Complex64 {
    let wm = ANGULAR_PER_US_PER_GHZ * tones.tones[demod].demod_f;
    let wbar = angular(pulled);
    let mut total = Complex64::new(0.0, 0.0);
    for tone in &tones.tones {
        let wd = ANGULAR_PER_US_PER_GHZ * tone.f_d;
        total += tone_coefficient(pulled, tone)
            * phase_integral(Complex64::new(wd - wm, 0.0), t0, t1);
    }
    let p_t0 = particular(pulled, tones, demod, t0);
    total + (a0 - p_t0) * phase_integral(wbar - wm, t0, t1) * (Complex64::i() * (wbar - wm) * t0).exp()
}

/// Closed-form trajectory samples `A(t)` in the demod-`m` rotating frame,
/// with initial condition `A(0) = a0` (vacuum start for `a0 = 0`).
pub fn trajectory(
    pulled: Complex64,
    tones: &ToneSet,
    demod: usize,
    t_grid: &[f64],
    a0: Complex64,
) -> Result<Vec<Complex64>> {
    tones.validate()?;
    check_demod(tones, demod)?;
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidInput(
            "time grid must be ascending and nonnegative".into(),
        ));
    }
    Ok(t_grid
        .iter()
        .map(|&t| amplitude_at(pulled, tones, demod, 0.0, a0, t))
        .collect())
}

/// Integrated IQ values `Ā(T) = ∫₀ᵀ A(t) dt` per tone, from the closed-form
/// antiderivative (units: µs × amplitude). `(I, Q) = (Re, Im)`.
pub fn integrated_iq(pulled: Complex64, tones: &ToneSet) -> Result<Vec<Complex64>> {
    tones.validate()?;
    Ok((0..tones.tone_count())
        .map(|m| {
            integrated_span(
                pulled,
                tones,
                m,
                0.0,
                tones.integration_time,
                Complex64::new(0.0, 0.0),
            )
        })
        .collect())
}

fn check_demod(tones: &ToneSet, demod: usize) -> Result<()> {
    if demod >= tones.tone_count() {
        return Err(Error::InvalidInput(format!(
            "demod index {demod} out of range for {} tones",
            tones.tone_count()
        )));
    }
    Ok(())
}

/// Time-normalized IQ vector `Ā(T)/T` for a shot that decays from state
/// `j` to `j-1` at time `tau` (`tau ≥ T` means no decay).
fn shot_values(pulled: &[Complex64], tones: &ToneSet, j: usize, tau: f64) -> Vec<f64> {
    let t_end = tones.integration_time;
    let mut values = Vec::with_capacity(2 * tones.tone_count());
    for m in 0..tones.tone_count() {
        let zero = Complex64::new(0.0, 0.0);
        let abar = if tau >= t_end {
            integrated_span(pulled[j], tones, m, 0.0, t_end, zero)
        } else {
            let first = integrated_span(pulled[j], tones, m, 0.0, tau, zero);
            let a_tau = amplitude_at(pulled[j], tones, m, 0.0, zero, tau);
            first + integrated_span(pulled[j - 1], tones, m, tau, t_end, a_tau)
        };
        let normalized = abar / t_end;
        values.push(normalized.re);
        values.push(normalized.im);
    }
    values
}

/// Synthesize labeled readout shots with at most one downward jump per shot.
///
/// `pulled[j]` is the complex pulled frequency of state `j` and must cover
/// every prepared state; `gamma1[j]` is the `j → j-1` rate in µs⁻¹ with
/// `gamma1[0] = 0` enforced. Decay times are exponential, the trajectory is
/// propagated piecewise through the jump, and i.i.d. Gaussian noise of
/// width `sigma` is added to every quadrature. Returns the records plus
/// warnings for states where the single-decay approximation strains
/// (`Γ₁ T > 0.3`).
#[allow(clippy::too_many_arguments)]
pub fn synthesize_shots(
    states: &[usize],
    tones: &ToneSet,
    pulled: &[Complex64],
    gamma1: &[f64],
    noise_sigma: f64,
    shots_per_state: usize,
    seed: u64,
) -> Result<(Vec<IQRecord>, Vec<String>)> {
    tones.validate()?;
    if noise_sigma < 0.0 {
        return Err(Error::InvalidInput("noise sigma must be nonnegative".into()));
    }
    if gamma1.first().copied().unwrap_or(0.0) != 0.0 {
        return Err(Error::InvalidInput(
            "state 0 has no lower level; gamma1[0] must be 0".into(),
        ));
    }
    for &j in states {
        if j >= pulled.len() || j >= gamma1.len() {
            return Err(Error::InvalidInput(format!(
                "state {j} missing a pulled frequency or decay rate"
            )));
        }
        if gamma1[j] < 0.0 {
            return Err(Error::InvalidInput(format!(
                "negative decay rate for state {j}"
            )));
        }
    }

    let t_end = tones.integration_time;
    let mut warnings = Vec::new();
    for &j in states {
        if gamma1[j] * t_end > 0.3 {
            warnings.push(format!(
                "state {j}: Γ₁T = {:.2} strains the single-decay approximation",
                gamma1[j] * t_end
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma)
        .map_err(|e| Error::InvalidInput(format!("bad noise width: {e}")))?;
    let mut records = Vec::with_capacity(states.len() * shots_per_state);
    for &j in states {
        let decay = if gamma1[j] > 0.0 {
            Some(Exp::new(gamma1[j]).expect("positive rate"))
        } else {
            None
        };
        for _ in 0..shots_per_state {
            let tau = decay.map_or(f64::INFINITY, |d| d.sample(&mut rng));
            let mut values = shot_values(pulled, tones, j, tau);
            if noise_sigma > 0.0 {
                for v in &mut values {
                    *v += noise.sample(&mut rng);
                }
            }
            records.push(IQRecord {
                values,
                true_label: Some(j),
            });
        }
    }
    Ok((records, warnings))
}

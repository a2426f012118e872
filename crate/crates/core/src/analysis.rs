//! Experiment-analysis mathematics: exponential and randomized-benchmarking
//! decay fits, Ramsey beating fits with charge-parity frequency extraction,
//! tomography gate sets, subspace rotations, and density-matrix
//! reconstruction.
//!
//! Times are in µs. Ramsey frequencies are stored in GHz like every other
//! frequency in this crate (a 0.5 MHz beat is `5e-4`); the conversion to
//! cycles per µs happens internally.

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numeric::{nelder_mead, periodogram, top_two_peaks, SimplexOptions};

/// A fitted decay `A·e^(-t/T) + C` or `A·r^m + C`.
///
/// `constant` holds the time constant `T` (µs) for exponential fits and the
/// per-Clifford retention `r` for benchmarking fits.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub amplitude: f64,
    pub constant: f64,
    pub offset: f64,
    /// Covariance of `(amplitude, constant, offset)` from the Gauss-Newton
    /// normal equations at the optimum.
    pub covariance: [[f64; 3]; 3],
}

impl DecayFit {
    /// Standard error of `constant`.
    pub fn constant_std_error(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }
}

/// Least-squares fit of `A·e^(-t/T) + C` with log-linear initialization.
pub fn fit_exponential(times: &[f64], values: &[f64]) -> Result<DecayFit> {
    if times.len() != values.len() || times.len() < 4 {
        return Err(Error::InvalidInput(
            "need at least 4 aligned (time, value) points".into(),
        ));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("times must be ascending".into()));
    }
    let c0 = *values.last().unwrap();
    let a0 = values[0] - c0;
    if a0 <= 0.0 {
        return Err(Error::FitFailure {
            message: "data do not decay (first value not above the tail)".into(),
            best: vec![],
            residual: f64::NAN,
        });
    }
    // Log-linear slope on the early, clearly-positive part.
    let mut num = 0.0;
    let mut den = 0.0;
    let mut t_mean = 0.0;
    let mut l_mean = 0.0;
    let mut count = 0.0;
    for (&t, &v) in times.iter().zip(values) {
        let shifted = v - c0;
        if shifted > 0.05 * a0 {
            t_mean += t;
            l_mean += shifted.ln();
            count += 1.0;
        }
    }
    if count < 3.0 {
        return Err(Error::FitFailure {
            message: "too few decaying points above the tail".into(),
            best: vec![],
            residual: f64::NAN,
        });
    }
    t_mean /= count;
    l_mean /= count;
    for (&t, &v) in times.iter().zip(values) {
        let shifted = v - c0;
        if shifted > 0.05 * a0 {
            num += (t - t_mean) * (shifted.ln() - l_mean);
            den += (t - t_mean) * (t - t_mean);
        }
    }
    let slope = num / den;
    if slope >= 0.0 {
        return Err(Error::FitFailure {
            message: "data do not decay (nonnegative log-slope)".into(),
            best: vec![],
            residual: f64::NAN,
        });
    }
    let t0 = -1.0 / slope;

    let sse = |p: &[f64]| -> f64 {
        let (a, ln_t, c) = (p[0], p[1], p[2]);
        let tau = ln_t.exp();
        times
            .iter()
            .zip(values)
            .map(|(&t, &v)| {
                let r = a * (-t / tau).exp() + c - v;
                r * r
            })
            .sum()
    };
    let run = nelder_mead(sse, &[a0, t0.ln(), c0], &SimplexOptions::default());
    let (a, tau, c) = (run.x[0], run.x[1].exp(), run.x[2]);
    if !(tau > 0.0) || a <= 0.0 {
        return Err(Error::FitFailure {
            message: format!("degenerate exponential fit: A = {a}, T = {tau}"),
            best: run.x,
            residual: run.value,
        });
    }
    let covariance = decay_covariance(times, values, run.value, |t| {
        let e = (-t / tau).exp();
        [e, a * t / (tau * tau) * e, 1.0]
    });
    Ok(DecayFit {
        amplitude: a,
        constant: tau,
        offset: c,
        covariance,
    })
}

/// Process infidelity `e_f = (1 - r)(1 - 1/d²)` of a depolarizing channel
/// with retention `r` on a `d`-level subspace.
pub fn process_infidelity(r: f64, d_subspace: usize) -> f64 {
    (1.0 - r) * (1.0 - 1.0 / (d_subspace * d_subspace) as f64)
}

/// Benchmarking decay fit `A·r^m + C` over sequence depths, plus the
/// process infidelity of the fitted `r`.
pub fn fit_rb(depths: &[usize], survival: &[f64], d_subspace: usize) -> Result<(DecayFit, f64)> {
    if depths.len() != survival.len() || depths.len() < 4 {
        return Err(Error::InvalidInput(
            "need at least 4 aligned (depth, survival) points".into(),
        ));
    }
    if d_subspace < 2 {
        return Err(Error::InvalidInput(
            "subspace dimension must be at least 2".into(),
        ));
    }
    let c0 = 1.0 / d_subspace as f64;
    let a0 = (survival[0] - c0).max(0.1);
    // Crude r estimate from the first and last points.
    let span = (depths[depths.len() - 1] - depths[0]) as f64;
    let tail = (survival[survival.len() - 1] - c0).max(1e-3);
    let r0 = (tail / a0).powf(1.0 / span).clamp(0.5, 0.9999);

    // r parameterized through a logistic map to stay inside (0, 1).
    let sse = |p: &[f64]| -> f64 {
        let (a, u, c) = (p[0], p[1], p[2]);
        let r = 1.0 / (1.0 + (-u).exp());
        depths
            .iter()
            .zip(survival)
            .map(|(&m, &v)| {
                let model = a * r.powi(m as i32) + c;
                (model - v) * (model - v)
            })
            .sum()
    };
    let u0 = (r0 / (1.0 - r0)).ln();
    let run = nelder_mead(sse, &[a0, u0, c0], &SimplexOptions::default());
    let (a, u, c) = (run.x[0], run.x[1], run.x[2]);
    let r = 1.0 / (1.0 + (-u).exp());
    if !(0.0..=1.0).contains(&r) || a <= 0.0 {
        return Err(Error::FitFailure {
            message: format!("benchmarking decay fit degenerate: A = {a}, r = {r}"),
            best: run.x,
            residual: run.value,
        });
    }
    let t_depths: Vec<f64> = depths.iter().map(|&m| m as f64).collect();
    let covariance = decay_covariance(&t_depths, survival, run.value, |m| {
        let rm = r.powf(m);
        [rm, a * m * r.powf(m - 1.0), 1.0]
    });
    let fit = DecayFit {
        amplitude: a,
        constant: r,
        offset: c,
        covariance,
    };
    let e_f = process_infidelity(r, d_subspace);
    Ok((fit, e_f))
}

fn decay_covariance<F>(xs: &[f64], ys: &[f64], sse: f64, grad: F) -> [[f64; 3]; 3]
where
    F: Fn(f64) -> [f64; 3],
{
    let n = xs.len();
    let mut jtj = DMatrix::<f64>::zeros(3, 3);
    for &x in xs {
        let g = grad(x);
        for i in 0..3 {
            for j in 0..3 {
                jtj[(i, j)] += g[i] * g[j];
            }
        }
    }
    let dof = (n.saturating_sub(3)).max(1) as f64;
    let sigma_sq = sse / dof;
    let mut cov = [[f64::NAN; 3]; 3];
    if let Some(inv) = jtj.try_inverse() {
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] = sigma_sq * inv[(i, j)];
            }
        }
    }
    let _ = ys;
    cov
}

/// A fitted charge-parity beating Ramsey decay:
/// `C + e^(-t/T2R) [A0 cos(2π f_e t + φ0) + A1 cos(2π f_o t + φ1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RamseyBeatFit {
    pub c: f64,
    /// Ramsey decay time in µs.
    pub t2r: f64,
    pub a0: f64,
    pub a1: f64,
    /// Even-parity detuning in GHz.
    pub f_e: f64,
    /// Odd-parity detuning in GHz.
    pub f_o: f64,
    pub phi0: f64,
    pub phi1: f64,
    /// Residual sum of squares at the optimum.
    pub residual: f64,
    /// Set when the spectrum shows a single peak and `f_e = f_o` was
    /// returned.
    pub degenerate_beat: bool,
}

impl RamseyBeatFit {
    /// `|f_o - f_e|` in GHz.
    pub fn beat_splitting(&self) -> f64 {
        (self.f_o - self.f_e).abs()
    }
}

/// Phases unlock above this beat splitting (2 MHz): a detuned π/2 pulse
/// prepares the superposition imperfectly, so φ0, φ1 become free parameters.
const PHASE_FREE_SPLITTING: f64 = 2e-3;

fn beat_model(t: f64, c: f64, t2r: f64, a0: f64, a1: f64, fe: f64, fo: f64, p0: f64, p1: f64) -> f64 {
    // GHz × µs → cycles needs the 1e3.
    let we = 2.0 * std::f64::consts::PI * fe * 1.0e3;
    let wo = 2.0 * std::f64::consts::PI * fo * 1.0e3;
    c + (-t / t2r).exp() * (a0 * (we * t + p0).cos() + a1 * (wo * t + p1).cos())
}

/// Fit the beating Ramsey model, seeding the two frequencies from the
/// periodogram's top peaks.
pub fn fit_ramsey_beat(times: &[f64], populations: &[f64]) -> Result<RamseyBeatFit> {
    if times.len() != populations.len() || times.len() < 8 {
        return Err(Error::InvalidInput(
            "need at least 8 aligned (time, population) points".into(),
        ));
    }
    let (freqs, power) = periodogram(times, populations, 8);
    let peaks = top_two_peaks(&power);
    if peaks.is_empty() {
        return Err(Error::FitFailure {
            message: "no spectral peak found in Ramsey data".into(),
            best: vec![],
            residual: f64::NAN,
        });
    }
    // Nyquist guard: a dominant peak at the top of the resolvable band
    // means the oscillation is undersampled.
    let f_max = *freqs.last().unwrap();
    for &p in &peaks {
        if freqs[p] > 0.95 * f_max {
            return Err(Error::InvalidInput(format!(
                "spectral peak at {:.4} cycles/µs sits at the Nyquist edge {:.4}; \
                 sampling does not resolve the beat",
                freqs[p], f_max
            )));
        }
    }
    // A second peak counts only when it carries real power and sits beyond
    // the window's own resolution; the shoulder lobes of a single decaying
    // tone fail one of the two.
    let resolution = 1.0 / (times[times.len() - 1] - times[0]);
    let degenerate = peaks.len() < 2
        || power[peaks[1]] < 0.05 * power[peaks[0]]
        || (freqs[peaks[1]] - freqs[peaks[0]]).abs() < 2.0 * resolution;
    let fe0 = freqs[peaks[0]] * 1e-3; // cycles/µs → GHz
    let fo0 = if degenerate { fe0 } else { freqs[peaks[1]] * 1e-3 };

    let c0 = populations.iter().sum::<f64>() / populations.len() as f64;
    let spread = populations
        .iter()
        .fold(0.0_f64, |m, &v| m.max((v - c0).abs()));
    let a_init = if degenerate { (spread, 0.0) } else { (0.6 * spread, 0.6 * spread) };
    let t_span = times[times.len() - 1] - times[0];

    let opts = SimplexOptions {
        max_evals: 40_000,
        f_tol: 1e-18,
        x_tol: 1e-14,
        init_step: 0.05,
        restarts: 4,
    };
    if degenerate {
        // Single-tone branch: a second frequency would be unidentifiable.
        let sse_single = |p: &[f64]| -> f64 {
            let t2r = p[1].exp();
            times
                .iter()
                .zip(populations)
                .map(|(&t, &v)| {
                    let r = beat_model(t, p[0], t2r, p[2], 0.0, p[3], p[3], 0.0, 0.0) - v;
                    r * r
                })
                .sum()
        };
        let run = nelder_mead(sse_single, &[c0, t_span.ln(), a_init.0, fe0], &opts);
        let fe = run.x[3].abs();
        return Ok(RamseyBeatFit {
            c: run.x[0],
            t2r: run.x[1].exp(),
            a0: run.x[2],
            a1: 0.0,
            f_e: fe,
            f_o: fe,
            phi0: 0.0,
            phi1: 0.0,
            residual: run.value,
            degenerate_beat: true,
        });
    }

    // Stage 1: phases pinned to zero.
    let sse_fixed = |p: &[f64]| -> f64 {
        let t2r = p[1].exp();
        times
            .iter()
            .zip(populations)
            .map(|(&t, &v)| {
                let r = beat_model(t, p[0], t2r, p[2], p[3], p[4], p[5], 0.0, 0.0) - v;
                r * r
            })
            .sum()
    };
    let start = vec![c0, t_span.ln(), a_init.0, a_init.1, fe0, fo0];
    let run = nelder_mead(sse_fixed, &start, &opts);
    let mut best = run.x.clone();
    let mut residual = run.value;
    let mut phases = (0.0, 0.0);

    // Stage 2: free phases for large splittings.
    if (best[5] - best[4]).abs() > PHASE_FREE_SPLITTING {
        let sse_free = |p: &[f64]| -> f64 {
            let t2r = p[1].exp();
            times
                .iter()
                .zip(populations)
                .map(|(&t, &v)| {
                    let r = beat_model(t, p[0], t2r, p[2], p[3], p[4], p[5], p[6], p[7]) - v;
                    r * r
                })
                .sum()
        };
        let mut start2 = best.clone();
        start2.push(0.0);
        start2.push(0.0);
        let run2 = nelder_mead(sse_free, &start2, &opts);
        if run2.value < residual {
            residual = run2.value;
            phases = (run2.x[6], run2.x[7]);
            best = run2.x[..6].to_vec();
        }
    }

    let (fe, fo) = (best[4].abs(), best[5].abs());
    Ok(RamseyBeatFit {
        c: best[0],
        t2r: best[1].exp(),
        a0: best[2],
        a1: best[3],
        f_e: fe,
        f_o: fo,
        phi0: phases.0,
        phi1: phases.1,
        residual,
        degenerate_beat: false,
    })
}

/// Largest beat splitting `max |f_o - f_e|` over repeated fits, in GHz.
pub fn extract_delta_f(fits: &[RamseyBeatFit]) -> Result<f64> {
    if fits.is_empty() {
        return Err(Error::InvalidInput("no Ramsey fits given".into()));
    }
    Ok(fits
        .iter()
        .map(RamseyBeatFit::beat_splitting)
        .fold(0.0, f64::max))
}

/// Rotation axis of a subspace gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// One two-level rotation on the `{i, i+1}` subspace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOp {
    /// Lower level of the subspace.
    pub subspace: usize,
    pub axis: Axis,
    /// Rotation angle in radians, convention `exp(-i θ σ/2)`.
    pub angle: f64,
}

/// A gate sequence in application (chronological) order.
pub type GateSequence = Vec<GateOp>;

/// The tomography gate set for a `d`-level system: the identity plus, for
/// every pair `(i, i+k)`, a mapping-down chain of π pulses followed by a
/// π/2 rotation about X or Y on `{i, i+1}` — `1 + d(d-1)` sequences total.
pub fn tomography_gate_set(d: usize) -> Result<Vec<GateSequence>> {
    if d < 2 {
        return Err(Error::InvalidInput("tomography needs d ≥ 2".into()));
    }
    let pi = std::f64::consts::PI;
    let mut set = vec![GateSequence::new()];
    for k in 1..d {
        for i in 0..d - k {
            for axis in [Axis::X, Axis::Y] {
                let mut seq = GateSequence::new();
                // Walk the population from i+k down to i+1, topmost first.
                for step in (1..k).rev() {
                    seq.push(GateOp {
                        subspace: i + step,
                        axis: Axis::X,
                        angle: pi,
                    });
                }
                seq.push(GateOp {
                    subspace: i,
                    axis,
                    angle: pi / 2.0,
                });
                set.push(seq);
            }
        }
    }
    Ok(set)
}

/// Embed a two-level rotation `exp(-i θ σ/2)` on `{i, i+1}` in a `d`-level
/// identity.
pub fn subspace_unitary(d: usize, i: usize, axis: Axis, angle: f64) -> Result<DMatrix<Complex64>> {
    if i + 1 >= d {
        return Err(Error::InvalidInput(format!(
            "subspace ({}, {}) outside dimension {d}",
            i,
            i + 1
        )));
    }
    let mut u = DMatrix::<Complex64>::identity(d, d);
    let half = angle / 2.0;
    let (c, s) = (half.cos(), half.sin());
    match axis {
        Axis::X => {
            u[(i, i)] = Complex::new(c, 0.0);
            u[(i, i + 1)] = Complex::new(0.0, -s);
            u[(i + 1, i)] = Complex::new(0.0, -s);
            u[(i + 1, i + 1)] = Complex::new(c, 0.0);
        }
        Axis::Y => {
            u[(i, i)] = Complex::new(c, 0.0);
            u[(i, i + 1)] = Complex::new(-s, 0.0);
            u[(i + 1, i)] = Complex::new(s, 0.0);
            u[(i + 1, i + 1)] = Complex::new(c, 0.0);
        }
    }
    Ok(u)
}

/// Total unitary of a gate sequence (first listed gate applied first).
pub fn sequence_unitary(d: usize, seq: &GateSequence) -> Result<DMatrix<Complex64>> {
    let mut u = DMatrix::<Complex64>::identity(d, d);
    for gate in seq {
        u = subspace_unitary(d, gate.subspace, gate.axis, gate.angle)? * u;
    }
    Ok(u)
}

/// Plain-text mnemonic of a sequence, e.g. `"X12:180;X01:90"`; gates are
/// listed in application order and `I` is the empty sequence.
pub fn format_gate_sequence(seq: &GateSequence) -> String {
    if seq.is_empty() {
        return "I".into();
    }
    seq.iter()
        .map(|g| {
            let axis = match g.axis {
                Axis::X => "X",
                Axis::Y => "Y",
            };
            format!(
                "{axis}{}{}:{}",
                g.subspace,
                g.subspace + 1,
                g.angle.to_degrees()
            )
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Parse a mnemonic produced by [`format_gate_sequence`].
pub fn parse_gate_sequence(text: &str) -> Result<GateSequence> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(Error::Parse("empty gate mnemonic".into()));
    }
    if trimmed == "I" {
        return Ok(GateSequence::new());
    }
    let mut seq = GateSequence::new();
    for token in trimmed.split(';') {
        let token = token.trim();
        let (head, angle_text) = token
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("gate token '{token}' lacks ':angle'")))?;
        let mut chars = head.chars();
        let axis = match chars.next() {
            Some('X') => Axis::X,
            Some('Y') => Axis::Y,
            other => {
                return Err(Error::Parse(format!(
                    "gate token '{token}' has unknown axis {other:?}"
                )))
            }
        };
        let digits: String = chars.collect();
        let subspace = parse_adjacent_pair(&digits).ok_or_else(|| {
            Error::Parse(format!(
                "gate token '{token}' does not name an adjacent level pair"
            ))
        })?;
        let degrees: f64 = angle_text
            .parse()
            .map_err(|_| Error::Parse(format!("bad angle in gate token '{token}'")))?;
        if !degrees.is_finite() {
            return Err(Error::Parse(format!("non-finite angle in '{token}'")));
        }
        seq.push(GateOp {
            subspace,
            axis,
            angle: degrees.to_radians(),
        });
    }
    Ok(seq)
}

/// Split a digit string into `i` followed by `i + 1`; e.g. `"910"` → 9.
fn parse_adjacent_pair(digits: &str) -> Option<usize> {
    for split in 1..digits.len() {
        let (a, b) = digits.split_at(split);
        if let (Ok(i), Ok(j)) = (a.parse::<usize>(), b.parse::<usize>()) {
            // Canonical formatting only: rejects leading-zero variants.
            if j == i + 1 && format!("{i}{j}") == digits {
                return Some(i);
            }
        }
    }
    None
}

/// A reconstructed density matrix: Hermitian, unit trace, positive
/// semidefinite after projection.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub matrix: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Check Hermiticity to 1e-12, unit trace to 1e-12, and eigenvalues
    /// above -1e-10.
    pub fn validate(&self) -> Result<()> {
        let m = &self.matrix;
        if (m - m.adjoint()).norm() > 1e-12 {
            return Err(Error::Numerical("density matrix not Hermitian".into()));
        }
        if (m.trace().re - 1.0).abs() > 1e-12 || m.trace().im.abs() > 1e-12 {
            return Err(Error::Numerical("density matrix trace is not 1".into()));
        }
        let eig = m.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < -1e-10) {
            return Err(Error::Numerical(
                "density matrix has a negative eigenvalue".into(),
            ));
        }
        Ok(())
    }

    /// `⟨ψ|ρ|ψ⟩`, real and clipped to `[0, 1 + 1e-9]`.
    pub fn fidelity_with(&self, psi: &DVector<Complex64>) -> Result<f64> {
        if psi.len() != self.dim() {
            return Err(Error::InvalidInput("state dimension mismatch".into()));
        }
        let val = (psi.adjoint() * &self.matrix * psi)[(0, 0)].re;
        Ok(val.max(0.0))
    }
}

/// `F = ⟨ψ|ρ|ψ⟩` for a pure target state.
pub fn state_fidelity(rho: &DensityMatrix, psi: &DVector<Complex64>) -> Result<f64> {
    rho.fidelity_with(psi)
}

/// Orthonormal Hermitian basis `{I/√d, diagonal, symmetric, antisymmetric}`
/// with the identity first; the remaining `d² - 1` elements are traceless.
fn hermitian_basis(d: usize) -> Vec<(DMatrix<Complex64>, Option<(usize, usize)>)> {
    let mut basis = Vec::with_capacity(d * d);
    let norm = 1.0 / (d as f64).sqrt();
    basis.push((
        DMatrix::<Complex64>::identity(d, d) * Complex::new(norm, 0.0),
        None,
    ));
    // Diagonal (generalized Gell-Mann) elements, tagged by (k, k).
    for k in 1..d {
        let mut m = DMatrix::<Complex64>::zeros(d, d);
        let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for j in 0..k {
            m[(j, j)] = Complex::new(scale, 0.0);
        }
        m[(k, k)] = Complex::new(-(k as f64) * scale, 0.0);
        basis.push((m, Some((k, k))));
    }
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            let mut sym = DMatrix::<Complex64>::zeros(d, d);
            sym[(i, j)] = Complex::new(inv_sqrt2, 0.0);
            sym[(j, i)] = Complex::new(inv_sqrt2, 0.0);
            basis.push((sym, Some((i, j))));
            let mut anti = DMatrix::<Complex64>::zeros(d, d);
            anti[(i, j)] = Complex::new(0.0, -inv_sqrt2);
            anti[(j, i)] = Complex::new(0.0, inv_sqrt2);
            basis.push((anti, Some((i, j))));
        }
    }
    basis
}

/// Reconstruct a density matrix from per-sequence outcome probabilities.
///
/// The measurement model is `p[s][o] = ⟨o| U_s ρ U_s† |o⟩`. The Hermitian,
/// unit-trace solution comes from linear least squares over a traceless
/// basis, followed by projection to the PSD cone: negative eigenvalues are
/// clipped to zero and the spectrum rescaled to unit trace.
pub fn reconstruct_state(
    probabilities: &[Vec<f64>],
    gates: &[GateSequence],
    d: usize,
) -> Result<DensityMatrix> {
    if probabilities.len() != gates.len() {
        return Err(Error::InvalidInput(format!(
            "{} probability rows for {} gate sequences",
            probabilities.len(),
            gates.len()
        )));
    }
    let basis = hermitian_basis(d);
    let n_unknowns = d * d - 1;
    let rows = gates.len() * d;
    let mut design = DMatrix::<f64>::zeros(rows, n_unknowns);
    let mut rhs = DVector::<f64>::zeros(rows);
    for (s, (seq, probs)) in gates.iter().zip(probabilities).enumerate() {
        if probs.len() != d {
            return Err(Error::InvalidInput(format!(
                "sequence {s} has {} outcome probabilities, expected {d}",
                probs.len()
            )));
        }
        let u = sequence_unitary(d, seq)?;
        for o in 0..d {
            let row = s * d + o;
            // ⟨o|U B U†|o⟩ for each basis element.
            let u_row = u.row(o);
            for (k, (b, _)) in basis.iter().enumerate() {
                let val = (u_row * b * u_row.adjoint())[(0, 0)].re;
                if k == 0 {
                    rhs[row] = probs[o] - val / (d as f64).sqrt() * 1.0;
                } else {
                    design[(row, k - 1)] = val;
                }
            }
        }
    }

    // Identity coefficient is fixed by the trace: c_0 = 1/√d, so the rhs
    // already subtracted ⟨o|U (I/d) U†|o⟩ = 1/d.
    let svd = design.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < n_unknowns {
        // Identify which matrix elements the null space leaves unresolved.
        let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
        let mut missing = Vec::new();
        for null_idx in rank..n_unknowns {
            let null_vec = v_t.row(null_idx);
            let (mut best_k, mut best_w) = (0usize, 0.0);
            for (k, w) in null_vec.iter().enumerate() {
                if w.abs() > best_w {
                    best_w = w.abs();
                    best_k = k;
                }
            }
            if let Some(tag) = basis[best_k + 1].1 {
                if !missing.contains(&tag) {
                    missing.push(tag);
                }
            }
        }
        return Err(Error::RankDeficient {
            rank,
            needed: n_unknowns,
            missing,
        });
    }
    let coeffs = svd
        .solve(&rhs, tol)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?;

    let mut rho = DMatrix::<Complex64>::identity(d, d) * Complex::new(1.0 / d as f64, 0.0);
    for (k, (b, _)) in basis.iter().enumerate().skip(1) {
        rho += b * Complex::new(coeffs[k - 1], 0.0);
    }

    // PSD projection by eigenvalue clipping with trace restoration: each
    // clipped negative eigenvalue's deficit is subtracted uniformly from
    // the eigenvalues still standing (the closest unit-trace PSD spectrum
    // in the 2-norm), walking up from the most negative.
    let eig = rho.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut spectrum: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut deficit = 0.0;
    for i in (0..d).rev() {
        if spectrum[i] + deficit / ((i + 1) as f64) < 0.0 {
            deficit += spectrum[i];
            spectrum[i] = 0.0;
        } else {
            let share = deficit / (i + 1) as f64;
            for item in spectrum.iter_mut().take(i + 1) {
                *item += share;
            }
            break;
        }
    }
    let total: f64 = spectrum.iter().sum();
    if total <= 0.0 {
        return Err(Error::Numerical(
            "projected density matrix has vanished; inconsistent probabilities".into(),
        ));
    }
    let mut projected = DMatrix::<Complex64>::zeros(d, d);
    for (pos, &l) in spectrum.iter().enumerate() {
        let v = eig.eigenvectors.column(order[pos]);
        projected += (v * v.adjoint()) * Complex::new(l / total, 0.0);
    }
    // Exact Hermitian symmetrization against accumulation noise.
    let projected = (&projected + projected.adjoint()) * Complex::new(0.5, 0.0);
    Ok(DensityMatrix { matrix: projected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exponential_noiseless_recovery() {
        let times: Vec<f64> = (0..40).map(|k| k as f64 * 8.0).collect();
        let values: Vec<f64> = times.iter().map(|&t| (-t / 64.0_f64).exp()).collect();
        let fit = fit_exponential(&times, &values).unwrap();
        assert_relative_eq!(fit.constant, 64.0, max_relative = 1e-6);
        assert_relative_eq!(fit.amplitude, 1.0, max_relative = 1e-6);
        assert!(fit.offset.abs() < 1e-7);
    }

    #[test]
    fn exponential_rejects_flat_data() {
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let values = vec![0.5; 10];
        assert!(fit_exponential(&times, &values).is_err());
        let rising: Vec<f64> = times.iter().map(|&t| 0.1 + 0.01 * t).collect();
        assert!(fit_exponential(&times, &rising).is_err());
    }

    #[test]
    fn exponential_noisy_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 6.0).collect();
        let values: Vec<f64> = times
            .iter()
            .map(|&t| (-t / 64.0_f64).exp() + noise.sample(&mut rng))
            .collect();
        let fit = fit_exponential(&times, &values).unwrap();
        assert_relative_eq!(fit.constant, 64.0, max_relative = 0.05);
    }

    #[test]
    fn infidelity_formula() {
        assert_eq!(process_infidelity(1.0, 2), 0.0);
        assert_relative_eq!(process_infidelity(0.999, 2), 7.5e-4, epsilon = 1e-12);
    }

    #[test]
    fn rb_protocol_recovery_within_three_sigma() {
        // 30 randomizations × 1000 shots of binomial noise per depth.
        let (a_true, r_true, c_true) = (0.5_f64, 0.995_f64, 0.5_f64);
        let depths: Vec<usize> = vec![1, 4, 8, 16, 32, 64, 128, 256, 512];
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let survival: Vec<f64> = depths
            .iter()
            .map(|&m| {
                let p = a_true * r_true.powi(m as i32) + c_true;
                let mut mean = 0.0;
                for _ in 0..30 {
                    let hits: u32 = (0..1000).map(|_| u32::from(rng.gen_bool(p))).sum();
                    mean += hits as f64 / 1000.0;
                }
                mean / 30.0
            })
            .collect();
        let (fit, e_f) = fit_rb(&depths, &survival, 2).unwrap();
        let se = fit.constant_std_error();
        assert!(
            (fit.constant - r_true).abs() < 3.0 * se,
            "r = {} ± {se}, truth {r_true}",
            fit.constant
        );
        assert!(e_f > 0.0 && e_f < 1.0);
    }

    #[test]
    fn ramsey_single_tone_degenerates() {
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
        let pops: Vec<f64> = times
            .iter()
            .map(|&t| 0.5 + 0.45 * (-t / 15.0_f64).exp() * (2.0 * std::f64::consts::PI * 0.5 * t).cos())
            .collect();
        let fit = fit_ramsey_beat(&times, &pops).unwrap();
        assert!(fit.degenerate_beat);
        assert_eq!(fit.f_e, fit.f_o);
        assert_relative_eq!(fit.f_e, 0.5e-3, max_relative = 0.02);
        assert_relative_eq!(fit.t2r, 15.0, max_relative = 0.10);
    }

    #[test]
    fn ramsey_two_tone_recovery() {
        // 0.5 and 0.8 MHz beat with T2R = 20 µs, recovered within 2%.
        let times: Vec<f64> = (0..400).map(|k| k as f64 * 0.05).collect();
        let pops: Vec<f64> = times
            .iter()
            .map(|&t| {
                let env = (-t / 20.0_f64).exp();
                0.5 + env
                    * (0.25 * (2.0 * std::f64::consts::PI * 0.5 * t).cos()
                        + 0.20 * (2.0 * std::f64::consts::PI * 0.8 * t).cos())
            })
            .collect();
        let fit = fit_ramsey_beat(&times, &pops).unwrap();
        assert!(!fit.degenerate_beat);
        let mut recovered = [fit.f_e * 1e3, fit.f_o * 1e3];
        recovered.sort_by(f64::total_cmp);
        assert_relative_eq!(recovered[0], 0.5, max_relative = 0.02);
        assert_relative_eq!(recovered[1], 0.8, max_relative = 0.02);
        assert_relative_eq!(fit.t2r, 20.0, max_relative = 0.10);
    }

    #[test]
    fn ramsey_nyquist_guard() {
        // 9 cycles/µs sampled at 0.1 µs steps aliases.
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let pops: Vec<f64> = times
            .iter()
            .map(|&t| 0.5 + 0.4 * (2.0 * std::f64::consts::PI * 4.9 * t).cos())
            .collect();
        assert!(fit_ramsey_beat(&times, &pops).is_err());
    }

    #[test]
    fn delta_f_is_max_over_fits() {
        let make = |fe: f64, fo: f64| RamseyBeatFit {
            c: 0.5,
            t2r: 10.0,
            a0: 0.2,
            a1: 0.2,
            f_e: fe,
            f_o: fo,
            phi0: 0.0,
            phi1: 0.0,
            residual: 0.0,
            degenerate_beat: false,
        };
        let fits = vec![make(1e-4, 3e-4), make(2e-4, 2.5e-4), make(1e-4, 1e-4)];
        assert_relative_eq!(extract_delta_f(&fits).unwrap(), 2e-4);
        assert!(extract_delta_f(&[]).is_err());
    }

    #[test]
    fn gate_set_sizes() {
        assert_eq!(tomography_gate_set(3).unwrap().len(), 7);
        assert_eq!(tomography_gate_set(4).unwrap().len(), 13);
        assert_eq!(tomography_gate_set(9).unwrap().len(), 73);
        for d in 2..=12 {
            assert_eq!(tomography_gate_set(d).unwrap().len(), 1 + d * (d - 1));
        }
    }

    #[test]
    fn qutrit_gate_set_structure() {
        // I, X01, Y01, X12, Y12, X01·X12π, Y01·X12π — with the π chain
        // applied before the final π/2 in the two-step sequences.
        let set = tomography_gate_set(3).unwrap();
        assert_eq!(set[0].len(), 0);
        assert_eq!(set[1].len(), 1);
        let long = &set[5];
        assert_eq!(long.len(), 2);
        assert_eq!(long[0].subspace, 1);
        assert_relative_eq!(long[0].angle, std::f64::consts::PI);
        assert_eq!(long[1].subspace, 0);
        assert_relative_eq!(long[1].angle, std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn subspace_unitary_conventions() {
        let eye = subspace_unitary(4, 1, Axis::X, 0.0).unwrap();
        assert!((eye - DMatrix::<Complex64>::identity(4, 4)).norm() < 1e-15);
        // X_π maps |0⟩ → -i|1⟩ under exp(-iθσ/2).
        let x_pi = subspace_unitary(2, 0, Axis::X, std::f64::consts::PI).unwrap();
        assert!((x_pi[(1, 0)] - Complex::new(0.0, -1.0)).norm() < 1e-15);
        // Two π/2 rotations compose to π.
        let half = subspace_unitary(3, 0, Axis::X, std::f64::consts::FRAC_PI_2).unwrap();
        let full = subspace_unitary(3, 0, Axis::X, std::f64::consts::PI).unwrap();
        assert!((&half * &half - full).norm() < 1e-14);
        // Unitarity.
        let y = subspace_unitary(5, 2, Axis::Y, 1.234).unwrap();
        assert!((&y * y.adjoint() - DMatrix::<Complex64>::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn mnemonic_round_trip() {
        let set = tomography_gate_set(12).unwrap();
        for seq in &set {
            let text = format_gate_sequence(seq);
            let parsed = parse_gate_sequence(&text).unwrap();
            assert_eq!(parsed.len(), seq.len());
            for (a, b) in parsed.iter().zip(seq) {
                assert_eq!(a.subspace, b.subspace);
                assert_eq!(a.axis, b.axis);
                assert_relative_eq!(a.angle, b.angle, epsilon = 1e-12);
            }
        }
        // Two-digit level pairs parse unambiguously.
        assert_eq!(
            parse_gate_sequence("X910:180").unwrap()[0].subspace,
            9
        );
        assert_eq!(
            parse_gate_sequence("Y1011:90").unwrap()[0].subspace,
            10
        );
        assert!(parse_gate_sequence("Z01:90").is_err());
        assert!(parse_gate_sequence("X02:90").is_err());
        assert!(parse_gate_sequence("X01").is_err());
    }

    fn random_pure_state(d: usize, rng: &mut ChaCha8Rng) -> DVector<Complex64> {
        let mut psi = DVector::<Complex64>::zeros(d);
        for k in 0..d {
            psi[k] = Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
        let norm = psi.norm();
        psi / Complex::new(norm, 0.0)
    }

    fn ideal_probabilities(
        psi: &DVector<Complex64>,
        gates: &[GateSequence],
        d: usize,
    ) -> Vec<Vec<f64>> {
        gates
            .iter()
            .map(|seq| {
                let u = sequence_unitary(d, seq).unwrap();
                let rotated = &u * psi;
                (0..d).map(|o| rotated[o].norm_sqr()).collect()
            })
            .collect()
    }

    #[test]
    fn reconstruction_ideal_data() {
        let d = 9;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let psi = random_pure_state(d, &mut rng);
        let gates = tomography_gate_set(d).unwrap();
        let probs = ideal_probabilities(&psi, &gates, d);
        let rho = reconstruct_state(&probs, &gates, d).unwrap();
        rho.validate().unwrap();
        let f = state_fidelity(&rho, &psi).unwrap();
        assert!(f > 0.9999, "ideal-data fidelity {f}");
    }

    #[test]
    fn reconstruction_sampled_data() {
        // 5000-shot multinomial sampling per sequence keeps the median
        // fidelity above 0.99.
        let d = 9;
        let gates = tomography_gate_set(d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut fidelities = Vec::new();
        for _ in 0..5 {
            let psi = random_pure_state(d, &mut rng);
            let ideal = ideal_probabilities(&psi, &gates, d);
            let sampled: Vec<Vec<f64>> = ideal
                .iter()
                .map(|row| {
                    let mut counts = vec![0usize; d];
                    for _ in 0..5000 {
                        let u: f64 = rng.gen();
                        let mut acc = 0.0;
                        for (o, &p) in row.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                counts[o] += 1;
                                break;
                            }
                        }
                    }
                    counts.iter().map(|&c| c as f64 / 5000.0).collect()
                })
                .collect();
            let rho = reconstruct_state(&sampled, &gates, d).unwrap();
            rho.validate().unwrap();
            fidelities.push(state_fidelity(&rho, &psi).unwrap());
        }
        fidelities.sort_by(f64::total_cmp);
        let median = fidelities[fidelities.len() / 2];
        assert!(median > 0.99, "median sampled fidelity {median}");
    }

    #[test]
    fn reconstruction_rank_deficient_design() {
        let d = 3;
        let gates_full = tomography_gate_set(d).unwrap();
        // Keep only the identity and the {0,1} rotations: the (0,2) and
        // (1,2) coherences are unconstrained.
        let gates: Vec<GateSequence> = gates_full[..3].to_vec();
        let probs = vec![vec![1.0 / d as f64; d]; gates.len()];
        let err = reconstruct_state(&probs, &gates, d).unwrap_err();
        match err {
            Error::RankDeficient { missing, .. } => {
                assert!(!missing.is_empty());
            }
            other => panic!("expected rank deficiency, got {other}"),
        }
    }

    #[test]
    fn fidelity_special_cases() {
        let d = 9;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_pure_state(d, &mut rng);
        let rho_pure = DensityMatrix {
            matrix: &psi * psi.adjoint(),
        };
        assert_relative_eq!(
            state_fidelity(&rho_pure, &psi).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // Orthogonal state.
        let mut other = DVector::<Complex64>::zeros(d);
        other[0] = Complex::new(1.0, 0.0);
        let other = {
            let overlap = (psi.adjoint() * &other)[(0, 0)];
            let orth = &other - &psi * overlap;
            let n = orth.norm();
            orth / Complex::new(n, 0.0)
        };
        assert!(state_fidelity(&rho_pure, &other).unwrap() < 1e-12);
        // Maximally mixed.
        let mixed = DensityMatrix {
            matrix: DMatrix::<Complex64>::identity(d, d) * Complex::new(1.0 / d as f64, 0.0),
        };
        assert_relative_eq!(
            state_fidelity(&mixed, &psi).unwrap(),
            1.0 / d as f64,
            epsilon = 1e-12
        );
    }
}

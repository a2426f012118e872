//! Small numerical routines shared by the fitting and analysis modules:
//! a Nelder-Mead simplex minimizer, damped Newton root-finding for tiny
//! systems, bracketed bisection, a direct-evaluation periodogram, and
//! log-space helpers.

use crate::error::{Error, Result};

/// Options for [`nelder_mead`].
#[derive(Debug, Clone)]
pub struct SimplexOptions {
    /// Maximum objective evaluations per run.
    pub max_evals: usize,
    /// Stop when the simplex's objective spread falls below this.
    pub f_tol: f64,
    /// Stop when the simplex collapses below this diameter.
    pub x_tol: f64,
    /// Relative initial step per coordinate (absolute fallback for zeros).
    pub init_step: f64,
    /// Number of restart cycles from the best point.
    pub restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            f_tol: 1e-15,
            x_tol: 1e-12,
            init_step: 0.05,
            restarts: 3,
        }
    }
}

/// Result of a simplex minimization.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimize `f` with the Nelder-Mead simplex method, restarting from the
/// best point after each convergence to escape premature collapse.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let mut best_x = x0.to_vec();
    let mut best_f = f(&best_x);
    let mut total_evals = 1;
    let mut converged = false;
    let mut step = opts.init_step;
    for _ in 0..=opts.restarts {
        let run = nm_single(&mut f, &best_x, step, opts, &mut total_evals);
        if run.value < best_f {
            best_f = run.value;
            best_x = run.x;
        }
        converged = run.converged;
        if total_evals >= opts.max_evals {
            break;
        }
        // Restart with a tighter simplex around the incumbent.
        step *= 0.25;
    }
    SimplexResult {
        x: best_x,
        value: best_f,
        evals: total_evals,
        converged,
    }
}

fn nm_single<F>(
    f: &mut F,
    x0: &[f64],
    init_step: f64,
    opts: &SimplexOptions,
    total_evals: &mut usize,
) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        let step = if p[i].abs() > 1e-8 {
            p[i].abs() * init_step
        } else {
            init_step
        };
        p[i] += step;
        simplex.push(p);
    }
    let mut scores: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    *total_evals += n + 1;

    let mut converged = false;
    while *total_evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let (best, second_worst, worst) = (order[0], order[n - 1], order[n]);

        let spread = (scores[worst] - scores[best]).abs();
        let diameter = (0..n)
            .map(|d| {
                simplex
                    .iter()
                    .map(|p| p[d])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    })
            })
            .map(|(lo, hi)| hi - lo)
            .fold(0.0_f64, f64::max);
        if spread < opts.f_tol || diameter < opts.x_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for &idx in order.iter().take(n) {
            for d in 0..n {
                centroid[d] += simplex[idx][d];
            }
        }
        centroid.iter_mut().for_each(|c| *c /= n as f64);

        let reflect: Vec<f64> = (0..n)
            .map(|d| centroid[d] + alpha * (centroid[d] - simplex[worst][d]))
            .collect();
        let f_reflect = f(&reflect);
        *total_evals += 1;

        if f_reflect < scores[best] {
            let expand: Vec<f64> = (0..n)
                .map(|d| centroid[d] + gamma * (reflect[d] - centroid[d]))
                .collect();
            let f_expand = f(&expand);
            *total_evals += 1;
            if f_expand < f_reflect {
                simplex[worst] = expand;
                scores[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                scores[worst] = f_reflect;
            }
            continue;
        }
        if f_reflect < scores[second_worst] {
            simplex[worst] = reflect;
            scores[worst] = f_reflect;
            continue;
        }

        let contract: Vec<f64> = (0..n)
            .map(|d| centroid[d] + rho * (simplex[worst][d] - centroid[d]))
            .collect();
        let f_contract = f(&contract);
        *total_evals += 1;
        if f_contract < scores[worst] {
            simplex[worst] = contract;
            scores[worst] = f_contract;
            continue;
        }

        for &idx in order.iter().skip(1) {
            for d in 0..n {
                simplex[idx][d] =
                    simplex[best][d] + sigma * (simplex[idx][d] - simplex[best][d]);
            }
            scores[idx] = f(&simplex[idx]);
        }
        *total_evals += n;
    }

    let best = scores
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.total_cmp(b))
        .map(|(i, _)| i)
        .unwrap();
    SimplexResult {
        x: simplex[best].clone(),
        value: scores[best],
        evals: *total_evals,
        converged,
    }
}

/// Solve `g(x) = 0` for a square system of up to a few unknowns with damped
/// Newton iteration and a forward-difference Jacobian.
///
/// `scale` sets both the finite-difference step (`scale × 1e-7`) and a
/// per-iteration trust region: no coordinate moves by more than half its
/// scale per step. The cap keeps aggressive early steps from jumping into a
/// neighboring basin; near the root the step is far below it, so quadratic
/// convergence is untouched. Convergence is declared when the max-norm of
/// `g` drops below `g_tol`.
pub fn newton_system<G>(
    mut g: G,
    x0: &[f64],
    scale: &[f64],
    g_tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>>
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    use nalgebra::{DMatrix, DVector};
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut gx = g(&x);
    let norm = |v: &[f64]| v.iter().fold(0.0_f64, |m, &t| m.max(t.abs()));
    let mut best = (x.clone(), norm(&gx));

    for _ in 0..max_iters {
        if norm(&gx) < g_tol {
            return Ok(x);
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let h = scale[j] * 1e-7;
            let mut xp = x.clone();
            xp[j] += h;
            let gp = g(&xp);
            for i in 0..n {
                jac[(i, j)] = (gp[i] - gx[i]) / h;
            }
        }
        let rhs = DVector::from_iterator(n, gx.iter().map(|&v| -v));
        let Some(delta) = jac.lu().solve(&rhs) else {
            return Err(Error::Numerical(
                "singular Jacobian in Newton iteration".into(),
            ));
        };
        let cap = (0..n)
            .map(|i| 0.5 * scale[i] / delta[i].abs().max(1e-300))
            .fold(1.0_f64, f64::min);
        // Backtracking line search on the residual norm.
        let mut lambda = cap.min(1.0);
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = (0..n).map(|i| x[i] + lambda * delta[i]).collect();
            let gt = g(&trial);
            if norm(&gt) < norm(&gx) {
                x = trial;
                gx = gt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        if norm(&gx) < best.1 {
            best = (x.clone(), norm(&gx));
        }
    }
    if norm(&gx) < g_tol {
        Ok(x)
    } else {
        Err(Error::FitFailure {
            message: format!("Newton iteration stalled after {max_iters} iterations"),
            best: best.0,
            residual: best.1,
        })
    }
}

/// Bracketed bisection for `g(x) = 0` on `[lo, hi]`; `g(lo)` and `g(hi)`
/// must differ in sign.
pub fn bisect<G>(mut g: G, mut lo: f64, mut hi: f64, x_tol: f64, max_iters: usize) -> Result<f64>
where
    G: FnMut(f64) -> f64,
{
    let mut g_lo = g(lo);
    let g_hi = g(hi);
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::Numerical(format!(
            "no sign change on bracket [{lo}, {hi}]"
        )));
    }
    for _ in 0..max_iters {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid);
        if g_mid == 0.0 || hi - lo < x_tol {
            return Ok(mid);
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Direct-evaluation periodogram of a (possibly detrended) real signal on an
/// oversampled frequency grid up to Nyquist. Returns `(freqs, power)`.
///
/// Direct evaluation keeps this valid for mildly nonuniform time grids,
/// which Ramsey scans in practice sometimes have.
pub fn periodogram(times: &[f64], values: &[f64], oversample: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(times.len(), values.len());
    let n = times.len();
    if n < 4 {
        return (Vec::new(), Vec::new());
    }
    let dt_min = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let f_nyquist = 0.5 / dt_min;
    let n_grid = n * oversample.max(1);
    let df = f_nyquist / n_grid as f64;
    let mean = values.iter().sum::<f64>() / n as f64;

    let mut freqs = Vec::with_capacity(n_grid);
    let mut power = Vec::with_capacity(n_grid);
    for k in 1..=n_grid {
        let f = k as f64 * df;
        let (mut re, mut im) = (0.0, 0.0);
        for (&t, &v) in times.iter().zip(values) {
            let phase = 2.0 * std::f64::consts::PI * f * (t - times[0]);
            re += (v - mean) * phase.cos();
            im += (v - mean) * phase.sin();
        }
        freqs.push(f);
        power.push(re * re + im * im);
    }
    (freqs, power)
}

/// Indices of the two highest local maxima of `power` (descending by power).
/// Returns one index if the spectrum has a single dominant peak.
pub fn top_two_peaks(power: &[f64]) -> Vec<usize> {
    let mut peaks: Vec<usize> = (1..power.len().saturating_sub(1))
        .filter(|&i| power[i] >= power[i - 1] && power[i] >= power[i + 1])
        .collect();
    peaks.sort_by(|&a, &b| power[b].total_cmp(&power[a]));
    peaks.truncate(2);
    peaks
}

/// Natural log of `m!`.
pub fn ln_factorial(m: u32) -> f64 {
    (2..=m).map(|k| (k as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simplex_minimizes_rosenbrock() {
        let rosen = |x: &[f64]| {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        };
        let res = nelder_mead(rosen, &[-1.2, 1.0], &SimplexOptions::default());
        assert_relative_eq!(res.x[0], 1.0, max_relative = 1e-5);
        assert_relative_eq!(res.x[1], 1.0, max_relative = 1e-5);
    }

    #[test]
    fn newton_solves_2x2() {
        // x^2 + y = 3, x + y^2 = 5
        let g = |p: &[f64]| vec![p[0] * p[0] + p[1] - 3.0, p[0] + p[1] * p[1] - 5.0];
        let x = newton_system(g, &[1.0, 1.0], &[1.0, 1.0], 1e-12, 50).unwrap();
        assert!((x[0] * x[0] + x[1] - 3.0).abs() < 1e-10);
        assert!((x[0] + x[1] * x[1] - 5.0).abs() < 1e-10);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let root = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert_relative_eq!(root, std::f64::consts::SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn periodogram_finds_two_tones() {
        let times: Vec<f64> = (0..400).map(|i| i as f64 * 0.05).collect();
        let values: Vec<f64> = times
            .iter()
            .map(|&t| (2.0 * std::f64::consts::PI * 0.8 * t).cos()
                + 0.7 * (2.0 * std::f64::consts::PI * 2.3 * t).cos())
            .collect();
        let (freqs, power) = periodogram(&times, &values, 4);
        let peaks = top_two_peaks(&power);
        assert_eq!(peaks.len(), 2);
        let mut found: Vec<f64> = peaks.iter().map(|&i| freqs[i]).collect();
        found.sort_by(f64::total_cmp);
        assert_relative_eq!(found[0], 0.8, max_relative = 0.05);
        assert_relative_eq!(found[1], 2.3, max_relative = 0.05);
    }

    #[test]
    fn ln_factorial_matches_direct() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert_relative_eq!(ln_factorial(10), (3628800.0_f64).ln(), epsilon = 1e-12);
    }
}

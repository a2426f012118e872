//! Single-transmon Hamiltonians in the truncated charge basis.
//!
//! The basis is the set of charge states `|n⟩`, `n ∈ [-N, N]`, so matrices
//! have dimension `2N + 1`. The standard Hamiltonian is
//!
//! ```text
//! H = 4 E_C (n̂ - n_g)² - Σ_m E_Jm cos(m φ̂)
//! ```
//!
//! with `cos(m φ̂)` coupling charge states `|n⟩` and `|n ± m⟩` with weight
//! 1/2. All energies are `E/h` in GHz. The matrix is real symmetric, so a
//! dense symmetric eigensolver suffices; the banded structure is not worth
//! exploiting at dimension ≤ 401.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default charge-basis cutoff; ample for `E_J/E_C ≤ 400` and 12 levels.
pub const DEFAULT_CUTOFF: usize = 40;

/// Hard ceiling for automatic cutoff searches.
pub const CUTOFF_CEILING: usize = 200;

/// A fixed-frequency transmon circuit: charging energy, signed Josephson
/// harmonic energies, offset charge, and the charge-basis cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmonModel {
    /// Charging energy `E_C/h` in GHz.
    pub e_c: f64,
    /// Signed harmonic Josephson energies `E_J1..E_JM` in GHz; `e_j[0]` is
    /// the fundamental and must be positive.
    pub e_j: Vec<f64>,
    /// Dimensionless offset charge.
    pub n_g: f64,
    /// Charge states run over `n ∈ [-cutoff, cutoff]`.
    pub cutoff: usize,
}

impl TransmonModel {
    /// Standard (single-harmonic) transmon with the default cutoff.
    pub fn standard(e_j: f64, e_c: f64, n_g: f64) -> Self {
        Self {
            e_c,
            e_j: vec![e_j],
            n_g,
            cutoff: DEFAULT_CUTOFF,
        }
    }

    /// Josephson-harmonics transmon with the default cutoff. `e_j` are the
    /// signed energies `E_J1..E_JM`.
    pub fn with_harmonics(e_j: Vec<f64>, e_c: f64, n_g: f64) -> Self {
        Self {
            e_c,
            e_j,
            n_g,
            cutoff: DEFAULT_CUTOFF,
        }
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_n_g(mut self, n_g: f64) -> Self {
        self.n_g = n_g;
        self
    }

    /// Number of harmonics `M`.
    pub fn harmonic_count(&self) -> usize {
        self.e_j.len()
    }

    /// `E_J1/E_C` for the fundamental harmonic.
    pub fn ej_ec_ratio(&self) -> f64 {
        self.e_j[0] / self.e_c
    }

    /// Check the basic invariants: `e_c > 0`, non-empty `e_j`, positive
    /// fundamental, finite `n_g`, and cutoff at least the highest harmonic.
    pub fn validate(&self) -> Result<()> {
        if !(self.e_c > 0.0) {
            return Err(Error::InvalidModel(format!(
                "charging energy must be positive, got {}",
                self.e_c
            )));
        }
        if self.e_j.is_empty() {
            return Err(Error::InvalidModel("no Josephson harmonics given".into()));
        }
        if self.e_j[0] < 0.0 || !self.e_j[0].is_finite() {
            return Err(Error::InvalidModel(format!(
                "fundamental Josephson energy must be nonnegative, got {}",
                self.e_j[0]
            )));
        }
        if !self.n_g.is_finite() {
            return Err(Error::InvalidModel("offset charge must be finite".into()));
        }
        if self.cutoff < self.e_j.len() {
            return Err(Error::InvalidModel(format!(
                "cutoff {} is below the highest harmonic order {}",
                self.cutoff,
                self.e_j.len()
            )));
        }
        Ok(())
    }

    /// Check that the harmonics alternate in sign starting positive:
    /// `sign(E_Jm) = (-1)^(m+1)` for harmonic order `m = 1..M`.
    pub fn validate_sign_alternation(&self) -> Result<()> {
        self.validate()?;
        for (idx, &e) in self.e_j.iter().enumerate() {
            let expected = if idx % 2 == 0 { 1.0 } else { -1.0 };
            if e != 0.0 && e.signum() != expected {
                return Err(Error::InvalidModel(format!(
                    "harmonic E_J{} = {} violates sign alternation",
                    idx + 1,
                    e
                )));
            }
        }
        Ok(())
    }
}

/// Eigenenergies and eigenvectors of a transmon in the charge basis.
///
/// Energies are ascending in GHz; eigenvectors are the columns of `vectors`,
/// orthonormal, with the global sign fixed so the largest-magnitude
/// component of each is positive.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub energies: Vec<f64>,
    /// `(2N+1) × levels`; column `k` is the eigenvector of `energies[k]`.
    pub vectors: DMatrix<f64>,
    pub model: TransmonModel,
}

impl EigenSolution {
    /// Number of retained levels.
    pub fn levels(&self) -> usize {
        self.energies.len()
    }

    /// Transition frequency `f_{i,j} = E_j - E_i` in GHz.
    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.energies[j] - self.energies[i]
    }

    /// Charge matrix element `⟨i|n̂|j⟩ = Σ_n n v_i(n) v_j(n)`.
    ///
    /// Only the magnitude is contractually meaningful; the sign depends on
    /// the global phase convention (largest component positive).
    pub fn charge_matrix_element(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.levels() && j < self.levels(), "level out of range");
        let n_max = self.model.cutoff as isize;
        let vi = self.vectors.column(i);
        let vj = self.vectors.column(j);
        vi.iter()
            .zip(vj.iter())
            .enumerate()
            .map(|(row, (a, b))| (row as isize - n_max) as f64 * a * b)
            .sum()
    }

    /// Full `levels × levels` matrix of `⟨i|n̂|j⟩`.
    pub fn charge_operator(&self) -> DMatrix<f64> {
        let l = self.levels();
        DMatrix::from_fn(l, l, |i, j| self.charge_matrix_element(i, j))
    }
}

/// Build the charge-basis Hamiltonian matrix of `model` (dimension `2N+1`).
///
/// Diagonal entries are `4 E_C (n - n_g)²`; harmonic `m` contributes
/// `-E_Jm/2` on every pair with `|n - n'| = m`.
pub fn build_hamiltonian(model: &TransmonModel) -> Result<DMatrix<f64>> {
    model.validate()?;
    let n_max = model.cutoff as isize;
    let dim = 2 * model.cutoff + 1;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for row in 0..dim {
        let n = (row as isize - n_max) as f64;
        h[(row, row)] = 4.0 * model.e_c * (n - model.n_g) * (n - model.n_g);
    }
    for (idx, &e_jm) in model.e_j.iter().enumerate() {
        let m = idx + 1;
        for row in 0..dim - m {
            h[(row, row + m)] = -e_jm / 2.0;
            h[(row + m, row)] = -e_jm / 2.0;
        }
    }
    Ok(h)
}

/// Diagonalize `model` and return the lowest `levels` eigenpairs.
///
/// Requires `cutoff ≥ 2 × levels` so the retained levels are converged, and
/// fixes each eigenvector's global sign (largest-magnitude component
/// positive) for reproducible matrix-element signs.
pub fn eigensolve(model: &TransmonModel, levels: usize) -> Result<EigenSolution> {
    if levels == 0 {
        return Err(Error::InvalidInput("must request at least one level".into()));
    }
    if model.cutoff < 2 * levels {
        return Err(Error::InvalidModel(format!(
            "cutoff {} < 2 × requested levels {}",
            model.cutoff, levels
        )));
    }
    let h = build_hamiltonian(model)?;
    let (energies, vectors) = lowest_eigenpairs(&h, levels)?;
    Ok(EigenSolution {
        energies,
        vectors,
        model: model.clone(),
    })
}

/// Lowest eigenvalues only, without the `2 × levels` cutoff guard; used by
/// the convergence scan which probes deliberately small bases.
fn raw_eigenvalues(model: &TransmonModel, levels: usize) -> Result<Vec<f64>> {
    let h = build_hamiltonian(model)?;
    let dim = h.nrows();
    if levels > dim {
        return Err(Error::InvalidInput(format!(
            "requested {levels} levels from a {dim}-dimensional basis"
        )));
    }
    let mut eig = h.symmetric_eigen().eigenvalues.as_slice().to_vec();
    eig.sort_by(f64::total_cmp);
    eig.truncate(levels);
    Ok(eig)
}

fn lowest_eigenpairs(h: &DMatrix<f64>, levels: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let dim = h.nrows();
    if levels > dim {
        return Err(Error::InvalidInput(format!(
            "requested {levels} levels from a {dim}-dimensional basis"
        )));
    }
    let decomp = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| decomp.eigenvalues[a].total_cmp(&decomp.eigenvalues[b]));

    let mut energies = Vec::with_capacity(levels);
    let mut vectors = DMatrix::<f64>::zeros(dim, levels);
    for (k, &src) in order.iter().take(levels).enumerate() {
        energies.push(decomp.eigenvalues[src]);
        let mut col = DVector::from(decomp.eigenvectors.column(src).clone_owned());
        // Sign convention: largest-magnitude component positive.
        let lead = col
            .iter()
            .cloned()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        if lead < 0.0 {
            col.neg_mut();
        }
        col /= col.norm();
        vectors.set_column(k, &col);
    }

    // Residual check ‖H v - E v‖ ≤ 1e-9 ‖H‖ for every retained pair.
    let h_norm = h.norm();
    for k in 0..levels {
        let v = vectors.column(k);
        let residual = (h * v - energies[k] * v).norm();
        if residual > 1e-9 * h_norm.max(1.0) {
            return Err(Error::Numerical(format!(
                "eigenpair {k} residual {residual:.3e} exceeds 1e-9 × ‖H‖ = {:.3e}",
                1e-9 * h_norm
            )));
        }
    }
    Ok((energies, vectors))
}

/// Smallest cutoff `N` for which every retained eigenenergy moves by less
/// than `tol` (GHz) when the basis is enlarged from `N` to `N + 10`.
///
/// Scans upward from the smallest basis that can hold `levels` states and
/// fails with a diagnostic above [`CUTOFF_CEILING`].
pub fn convergence_check(model: &TransmonModel, levels: usize, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    model.validate()?;
    let n_min = (levels.saturating_sub(1)).div_ceil(2).max(model.e_j.len()).max(1);
    let mut cache: std::collections::HashMap<usize, Vec<f64>> = Default::default();
    let mut energies_at = |n: usize| -> Result<Vec<f64>> {
        if let Some(e) = cache.get(&n) {
            return Ok(e.clone());
        }
        let e = raw_eigenvalues(&model.clone().with_cutoff(n), levels)?;
        cache.insert(n, e.clone());
        Ok(e)
    };
    for n in n_min..=CUTOFF_CEILING {
        let here = energies_at(n)?;
        let there = energies_at(n + 10)?;
        let max_shift = here
            .iter()
            .zip(&there)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        if max_shift < tol {
            return Ok(n);
        }
    }
    Err(Error::Numerical(format!(
        "no cutoff below {CUTOFF_CEILING} converges {levels} levels to {tol} GHz \
         for E_J/E_C = {:.1}",
        model.ej_ec_ratio()
    )))
}

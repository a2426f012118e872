//! Two-transmon ZZ analysis: the coupled Hamiltonian in the product of
//! single-transmon eigenbases and the control-state-dependent shifts of the
//! target's transitions.
//!
//! The joint Hamiltonian is
//!
//! ```text
//! H = diag(E_a) ⊗ 1 + 1 ⊗ diag(E_b) + J n̂_a ⊗ n̂_b
//! ```
//!
//! with the charge operators transformed into each transmon's eigenbasis.
//! Readout resonators are dropped here; their effect on the shifts is far
//! sub-dominant at these detunings, and the dispersive module's dressed
//! oracle is available for spot checks.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hamiltonian::EigenSolution;
use crate::numeric::bisect;

/// Dressed two-transmon spectrum with product-state labels.
///
/// Index convention: `a` is the target (first index in `energy(i, j)`),
/// `b` is the control.
#[derive(Debug, Clone)]
pub struct JointSolution {
    energies: Vec<Vec<f64>>,
    overlaps: Vec<Vec<f64>>,
    pub levels: usize,
    pub j_coupling: f64,
}

impl JointSolution {
    /// Dressed energy labeled `|i⟩_target ⊗ |j⟩_control`.
    pub fn energy(&self, i: usize, j: usize) -> f64 {
        self.energies[i][j]
    }

    pub fn overlap(&self, i: usize, j: usize) -> f64 {
        self.overlaps[i][j]
    }
}

/// Control-state-dependent shifts of the target transmon's transitions:
/// `shifts[j][i] = Δf^|j⟩_{i,i+1}` in GHz, with the `j = 0` column zero by
/// definition.
#[derive(Debug, Clone)]
pub struct ZZShiftMatrix {
    pub shifts: Vec<Vec<f64>>,
    pub control_levels: usize,
    pub target_transitions: usize,
    pub j_coupling: f64,
}

impl ZZShiftMatrix {
    pub fn shift(&self, control_state: usize, target_transition: usize) -> f64 {
        self.shifts[control_state][target_transition]
    }
}

/// Diagonalize the coupled pair in the truncated product eigenbasis and
/// label dressed states by maximum overlap with `|i⟩_a ⊗ |j⟩_b`.
///
/// `trunc` levels are kept per transmon; each input must retain at least
/// that many. Labeling is attempted for the full `trunc × trunc` grid and
/// fails with the colliding pair if any overlap drops below 0.5.
pub fn build_joint(
    a: &EigenSolution,
    b: &EigenSolution,
    j_coupling: f64,
    trunc: usize,
) -> Result<JointSolution> {
    if a.levels() < trunc || b.levels() < trunc {
        return Err(Error::InvalidInput(format!(
            "truncation {trunc} exceeds retained levels ({}, {})",
            a.levels(),
            b.levels()
        )));
    }
    let n_a = a.charge_operator();
    let n_b = b.charge_operator();
    let dim = trunc * trunc;
    let idx = |i: usize, j: usize| i * trunc + j;

    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..trunc {
        for j in 0..trunc {
            h[(idx(i, j), idx(i, j))] = a.energies[i] + b.energies[j];
        }
    }
    for i in 0..trunc {
        for i2 in 0..trunc {
            let na = n_a[(i, i2)];
            if na == 0.0 {
                continue;
            }
            for j in 0..trunc {
                for j2 in 0..trunc {
                    let nb = n_b[(j, j2)];
                    if nb == 0.0 {
                        continue;
                    }
                    h[(idx(i, j), idx(i2, j2))] += j_coupling * na * nb;
                }
            }
        }
    }
    let decomp = h.symmetric_eigen();

    let mut energies = vec![vec![f64::NAN; trunc]; trunc];
    let mut overlaps = vec![vec![0.0; trunc]; trunc];
    for i in 0..trunc {
        for j in 0..trunc {
            let row = idx(i, j);
            let mut best = (0usize, 0.0_f64);
            for col in 0..dim {
                let w = decomp.eigenvectors[(row, col)].powi(2);
                if w > best.1 {
                    best = (col, w);
                }
            }
            if best.1 < 0.5 {
                return Err(Error::Degeneracy {
                    label: (i, j),
                    overlap: best.1,
                });
            }
            energies[i][j] = decomp.eigenvalues[best.0];
            overlaps[i][j] = best.1;
        }
    }
    Ok(JointSolution {
        energies,
        overlaps,
        levels: trunc,
        j_coupling,
    })
}

/// Shift table `Δf^|j⟩_{i,i+1} = [E(i+1,j) - E(i,j)] - [E(i+1,0) - E(i,0)]`
/// for control states `j < control_levels` and target transitions
/// `i < target_transitions`.
pub fn zz_shift_matrix(
    joint: &JointSolution,
    control_levels: usize,
    target_transitions: usize,
) -> Result<ZZShiftMatrix> {
    if control_levels > joint.levels || target_transitions + 1 > joint.levels {
        return Err(Error::InvalidInput(format!(
            "requested ({control_levels} control, {target_transitions} transitions) from a \
             {}-level joint solution",
            joint.levels
        )));
    }
    let mut shifts = Vec::with_capacity(control_levels);
    for j in 0..control_levels {
        let mut row = Vec::with_capacity(target_transitions);
        for i in 0..target_transitions {
            let with_control = joint.energy(i + 1, j) - joint.energy(i, j);
            let reference = joint.energy(i + 1, 0) - joint.energy(i, 0);
            row.push(with_control - reference);
        }
        shifts.push(row);
    }
    Ok(ZZShiftMatrix {
        shifts,
        control_levels,
        target_transitions,
        j_coupling: joint.j_coupling,
    })
}

/// Invert a measured `Δf^|1⟩_01` to the native coupling `J` by bisection.
///
/// The shift grows monotonically in `|J|` (quadratically deep in the
/// dispersive regime), so a sign-consistent bracket `(0, j_max]` either
/// contains exactly one root or none.
pub fn fit_j_from_shift(
    a: &EigenSolution,
    b: &EigenSolution,
    measured_shift: f64,
    j_max: f64,
    trunc: usize,
) -> Result<f64> {
    if measured_shift == 0.0 {
        return Err(Error::InvalidInput(
            "measured shift must be nonzero".into(),
        ));
    }
    let shift_at = |j: f64| -> Result<f64> {
        let joint = build_joint(a, b, j, trunc)?;
        Ok(zz_shift_matrix(&joint, 2, 1)?.shift(1, 0))
    };
    let probe = shift_at(j_max)?;
    if probe.signum() != measured_shift.signum() || probe.abs() < measured_shift.abs() {
        return Err(Error::FitFailure {
            message: format!(
                "no sign-consistent root in (0, {j_max}]: shift at bracket edge is {probe:.3e}, \
                 measured {measured_shift:.3e}"
            ),
            best: vec![j_max],
            residual: (probe - measured_shift).abs(),
        });
    }
    // Root-find until the bracket collapses; the shift matches the
    // measurement far tighter than the required 1 kHz.
    let g = |j: f64| shift_at(j).map_or(f64::MAX, |s| s - measured_shift);
    let mut lo = 0.0;
    let mut hi = j_max;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let val = g(mid);
        if val == 0.0 || hi - lo < 1e-10 * j_max {
            return Ok(mid);
        }
        if val.signum() == measured_shift.signum() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    bisect(g, lo, hi, 1e-12, 100)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{eigensolve, TransmonModel};
    use approx::assert_relative_eq;

    fn q1() -> EigenSolution {
        eigensolve(
            &TransmonModel::standard(21.194, 0.152, 0.0).with_cutoff(40),
            14,
        )
        .unwrap()
    }

    fn q2() -> EigenSolution {
        eigensolve(
            &TransmonModel::standard(21.960, 0.152, 0.0).with_cutoff(40),
            14,
        )
        .unwrap()
    }

    const J_TABLE: f64 = 1.59e-3;

    #[test]
    fn zero_coupling_is_exact_product() {
        let a = q1();
        let b = q2();
        let joint = build_joint(&a, &b, 0.0, 8).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_relative_eq!(
                    joint.energy(i, j),
                    a.energies[i] + b.energies[j],
                    epsilon = 1e-10
                );
                assert!(joint.overlap(i, j) > 0.999);
            }
        }
        let zz = zz_shift_matrix(&joint, 6, 5).unwrap();
        for row in &zz.shifts {
            for &s in row {
                assert!(s.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn table_coupling_labels_cleanly_to_6x6() {
        let joint = build_joint(&q2(), &q1(), J_TABLE, 8).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert!(
                    joint.overlap(i, j) > 0.5,
                    "({i},{j}) overlap {}",
                    joint.overlap(i, j)
                );
            }
        }
    }

    #[test]
    fn swapping_roles_transposes_labels() {
        let ab = build_joint(&q1(), &q2(), J_TABLE, 6).unwrap();
        let ba = build_joint(&q2(), &q1(), J_TABLE, 6).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_relative_eq!(ab.energy(i, j), ba.energy(j, i), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn qubit_subspace_shift_near_measurement() {
        // Q1 control, Q2 target, J from the device table: Δf^|1⟩_01 ≈ 0.4 MHz.
        let joint = build_joint(&q2(), &q1(), J_TABLE, 10).unwrap();
        let zz = zz_shift_matrix(&joint, 6, 6).unwrap();
        let shift = zz.shift(1, 0);
        assert_relative_eq!(shift.abs(), 0.4e-3, max_relative = 0.20);
    }

    #[test]
    fn high_subspace_zz_enhancement() {
        // {|4⟩,|5⟩} qubit encoding: Δf^|5⟩_45 - Δf^|4⟩_45 ≈ 3.5 MHz.
        let joint = build_joint(&q2(), &q1(), J_TABLE, 10).unwrap();
        let zz = zz_shift_matrix(&joint, 6, 5).unwrap();
        let eff = zz.shift(5, 4) - zz.shift(4, 4);
        assert_relative_eq!(eff.abs(), 3.5e-3, max_relative = 0.25);
    }

    #[test]
    fn shifts_grow_along_diagonal() {
        // Bosonic enhancement: the (control j, target transition j-1↔j)
        // diagonal grows monotonically in magnitude.
        let joint = build_joint(&q2(), &q1(), J_TABLE, 9).unwrap();
        let zz = zz_shift_matrix(&joint, 6, 5).unwrap();
        for k in 2..=5 {
            assert!(
                zz.shift(k, k - 1).abs() > zz.shift(k - 1, k - 2).abs(),
                "diagonal shift not growing at {k}: {} vs {}",
                zz.shift(k, k - 1).abs(),
                zz.shift(k - 1, k - 2).abs()
            );
        }
    }

    #[test]
    fn first_cell_symmetric_under_role_exchange() {
        let fwd = {
            let joint = build_joint(&q2(), &q1(), J_TABLE, 8).unwrap();
            zz_shift_matrix(&joint, 2, 1).unwrap().shift(1, 0)
        };
        let rev = {
            let joint = build_joint(&q1(), &q2(), J_TABLE, 8).unwrap();
            zz_shift_matrix(&joint, 2, 1).unwrap().shift(1, 0)
        };
        assert!(
            ((fwd - rev) / fwd).abs() < 0.1,
            "Δf^|1⟩_01 role asymmetry: {fwd:.3e} vs {rev:.3e}"
        );
    }

    #[test]
    fn quadratic_scaling_in_j() {
        let a = q2();
        let b = q1();
        let shift = |j: f64| {
            let joint = build_joint(&a, &b, j, 8).unwrap();
            zz_shift_matrix(&joint, 2, 1).unwrap().shift(1, 0)
        };
        let s1 = shift(0.5e-3);
        let s2 = shift(1.0e-3);
        assert_relative_eq!(s2 / s1, 4.0, max_relative = 0.05);
    }

    #[test]
    fn fit_j_round_trip() {
        let a = q2();
        let b = q1();
        let joint = build_joint(&a, &b, J_TABLE, 8).unwrap();
        let target = zz_shift_matrix(&joint, 2, 1).unwrap().shift(1, 0);
        let j = fit_j_from_shift(&a, &b, target, 0.01, 8).unwrap();
        assert_relative_eq!(j, J_TABLE, max_relative = 1e-3);
    }

    #[test]
    fn fit_j_measured_value() {
        // Published qubit-subspace shift of 0.4 MHz inverts to roughly the
        // device-table J = 1.59 MHz.
        let a = q2();
        let b = q1();
        let joint = build_joint(&a, &b, J_TABLE, 8).unwrap();
        let sign = zz_shift_matrix(&joint, 2, 1).unwrap().shift(1, 0).signum();
        let j = fit_j_from_shift(&a, &b, sign * 0.4e-3, 0.01, 8).unwrap();
        assert_relative_eq!(j, J_TABLE, max_relative = 0.15);
    }

    #[test]
    fn fit_j_rejects_wrong_sign() {
        let a = q2();
        let b = q1();
        let joint = build_joint(&a, &b, J_TABLE, 8).unwrap();
        let sign = zz_shift_matrix(&joint, 2, 1).unwrap().shift(1, 0).signum();
        assert!(fit_j_from_shift(&a, &b, -sign * 0.4e-3, 0.01, 8).is_err());
    }
}

//! Reference answers that do not go through the homotopy solver.
//!
//! [`helstrom`] is the closed form for two states and [`angle_scan`] the
//! brute-force check of it. [`search_optimum`] maximises
//! `P_s(U) = Σ_i |(G^{1/2}U)_ii|²` directly over the unitary group by
//! Riemannian gradient ascent from several random starts.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MedError, Result};
use crate::gram::{ensemble_from_gram, GramMatrix};
use crate::linalg::{self, c, CMat};
use crate::measurement::{povm_from_unitary, Frame, Povm};

pub const SEARCH_MAX_DIM: usize = 4;
pub const RESTARTS: usize = 20;
pub const GRADIENT_TOL: f64 = 1e-7;
const MAX_ITERS: usize = 20_000;
const STOP_GRADIENT: f64 = 1e-11;
const ARMIJO: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    ClosedForm,
    Search,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    pub p_success: f64,
    /// Dual frame for [`search_optimum`]; ambient frame over
    /// `ensemble_from_gram` of the pair's Gram matrix for [`helstrom`].
    #[serde(skip)]
    pub povm: Povm,
    pub method: OracleMethod,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// The two-state Gram matrix with priors `p1, p2` and `⟨ψ_1|ψ_2⟩ = overlap`.
pub fn pair_gram(p1: f64, p2: f64, overlap: Complex64) -> Result<GramMatrix> {
    let off = overlap * (p1 * p2).sqrt();
    GramMatrix::new(CMat::from_row_slice(
        2,
        2,
        &[c(p1, 0.0), off, off.conj(), c(p2, 0.0)],
    ))
}

/// `½(1 + √(1 − 4 p₁p₂|c|²))`.
pub fn helstrom_value(p1: f64, p2: f64, overlap_abs: f64) -> f64 {
    0.5 * (1.0 + (1.0 - 4.0 * p1 * p2 * overlap_abs * overlap_abs).max(0.0).sqrt())
}

/// Helstrom bound with the measurement diagonalising `p₁ρ₁ − p₂ρ₂`.
pub fn helstrom(p1: f64, p2: f64, overlap: Complex64) -> Result<OracleResult> {
    if !(p1 > 0.0 && p2 > 0.0 && (p1 + p2 - 1.0).abs() <= 1e-12) {
        return Err(MedError::InvalidEnsemble(format!(
            "priors ({p1}, {p2}) must be positive and sum to 1"
        )));
    }
    if !(overlap.norm() < 1.0) {
        return Err(MedError::InvalidEnsemble(format!(
            "overlap {overlap} must have modulus below 1"
        )));
    }
    let g = pair_gram(p1, p2, overlap)?;
    let e = ensemble_from_gram(&g)?;
    let gamma = e.weighted_projector(0) - e.weighted_projector(1);
    let (_, vecs) = linalg::eigh(&gamma);
    // ascending order: the positive eigenvector identifies state 0
    let mut basis = CMat::zeros(2, 2);
    basis.set_column(0, &vecs.column(1));
    basis.set_column(1, &vecs.column(0));
    Ok(OracleResult {
        p_success: helstrom_value(p1, p2, overlap.norm()),
        povm: Povm::new(basis, Frame::Ambient)?,
        method: OracleMethod::ClosedForm,
        iterations: 0,
        gradient_norm: 0.0,
    })
}

/// Best success probability over `points` real measurement angles for
/// `|ψ_1⟩ = (1, 0)`, `|ψ_2⟩ = (c, √(1 − c²))`.
pub fn angle_scan(p1: f64, p2: f64, overlap_abs: f64, points: usize) -> f64 {
    let s = (1.0 - overlap_abs * overlap_abs).sqrt();
    (0..points)
        .map(|k| {
            let theta = std::f64::consts::PI * k as f64 / points as f64;
            let (sn, cs) = theta.sin_cos();
            let first = cs;
            let second = -overlap_abs * sn + s * cs;
            p1 * first * first + p2 * second * second
        })
        .fold(f64::MIN, f64::max)
}

fn objective(s: &CMat, u: &CMat) -> f64 {
    let m = s.nrows();
    (0..m)
        .map(|i| (0..m).map(|k| s[(i, k)] * u[(k, i)]).sum::<Complex64>().norm_sqr())
        .sum()
}

/// `Ω = skew(U†X)` with `X = 2 S diag(C_ii)` the Euclidean gradient.
fn riemannian_gradient(s: &CMat, u: &CMat) -> CMat {
    let cmat = s * u;
    let m = s.nrows();
    let x = CMat::from_fn(m, m, |k, i| s[(i, k)].conj() * cmat[(i, i)] * c(2.0, 0.0));
    let w = u.adjoint() * x;
    (&w - w.adjoint()) * c(0.5, 0.0)
}

fn random_unitary(rng: &mut ChaCha8Rng, m: usize) -> CMat {
    let a = CMat::from_fn(m, m, |_, _| {
        c(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    linalg::polar_unitary(&a)
}

struct Ascent {
    u: CMat,
    value: f64,
    gradient_norm: f64,
    iterations: usize,
}

fn ascend(s: &CMat, mut u: CMat) -> Ascent {
    let mut value = objective(s, &u);
    let mut step: f64 = 1.0;
    let mut omega = riemannian_gradient(s, &u);
    let mut gnorm = omega.norm();
    let mut iterations = 0;
    while iterations < MAX_ITERS && gnorm > STOP_GRADIENT {
        iterations += 1;
        let mut tau = (step * 2.0).min(10.0);
        let mut accepted = None;
        for _ in 0..60 {
            let trial = linalg::polar_unitary(&(&u + &u * &omega * c(tau, 0.0)));
            let tv = objective(s, &trial);
            if tv >= value + ARMIJO * tau * gnorm * gnorm {
                accepted = Some((trial, tv));
                break;
            }
            tau *= 0.5;
        }
        let Some((trial, tv)) = accepted else { break };
        step = tau;
        u = trial;
        value = tv;
        omega = riemannian_gradient(s, &u);
        gnorm = omega.norm();
    }
    Ascent {
        u,
        value,
        gradient_norm: gnorm,
        iterations,
    }
}

/// Maximises `P_s` over `U(m)` from [`RESTARTS`] starts; deterministic in `seed`.
pub fn search_optimum(g: &GramMatrix, seed: u64) -> Result<OracleResult> {
    let m = g.dim();
    if m > SEARCH_MAX_DIM {
        return Err(MedError::InvalidArgument(format!(
            "search oracle is limited to m ≤ {SEARCH_MAX_DIM}, got {m}"
        )));
    }
    let s = g.sqrt();
    let runs: Vec<Ascent> = (0..RESTARTS)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(r as u64));
            ascend(&s, random_unitary(&mut rng, m))
        })
        .collect();
    let best = runs
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.value.total_cmp(&b.value).then(ib.cmp(ia)))
        .map(|(_, run)| run)
        .expect("at least one restart");
    if best.gradient_norm > GRADIENT_TOL {
        return Err(MedError::NoConvergence(best.gradient_norm));
    }
    Ok(OracleResult {
        p_success: best.value,
        povm: povm_from_unitary(g, &linalg::polar_unitary(&best.u))?,
        method: OracleMethod::Search,
        iterations: best.iterations,
        gradient_norm: best.gradient_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::stationarity_check;
    use crate::gram::random_ensemble;
    use crate::measurement::povm_success;

    #[test]
    fn orthogonal_pair_is_perfect() {
        let r = helstrom(0.5, 0.5, c(0.0, 0.0)).unwrap();
        assert!((r.p_success - 1.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_angle_scan() {
        for (p1, ov, expected) in [(0.5, 0.6, 0.9), (0.9, 0.5, 0.5 * (1.0 + 0.91f64.sqrt()))] {
            let closed = helstrom_value(p1, 1.0 - p1, ov);
            assert!((closed - expected).abs() < 1e-15);
            let scan = angle_scan(p1, 1.0 - p1, ov, 1_000_000);
            assert!((closed - scan).abs() < 1e-6);
            assert!(scan <= closed + 1e-15);
        }
    }

    #[test]
    fn helstrom_measurement_attains_value() {
        for (p1, ov) in [(0.5, c(0.6, 0.0)), (0.3, c(0.2, -0.5)), (0.85, c(-0.1, 0.4))] {
            let r = helstrom(p1, 1.0 - p1, ov).unwrap();
            let e = ensemble_from_gram(&pair_gram(p1, 1.0 - p1, ov).unwrap()).unwrap();
            let got = povm_success(&e, &r.povm).unwrap().p_success;
            assert!((got - r.p_success).abs() < 1e-12);
        }
    }

    #[test]
    fn helstrom_rejects_bad_input() {
        assert!(helstrom(0.6, 0.6, c(0.1, 0.0)).is_err());
        assert!(helstrom(0.5, 0.5, c(1.0, 0.0)).is_err());
    }

    #[test]
    fn search_on_identity_is_perfect() {
        for m in 2..=4 {
            let r = search_optimum(&GramMatrix::maximally_mixed(m), 1).unwrap();
            assert!((r.p_success - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn search_respects_cost_guard() {
        assert!(matches!(
            search_optimum(&GramMatrix::maximally_mixed(5), 0),
            Err(MedError::InvalidArgument(_))
        ));
    }

    #[test]
    fn search_matches_helstrom() {
        for seed in 0..50 {
            let e = random_ensemble(2, seed, 0.8).unwrap();
            let g = e.gram().unwrap();
            let p = g.probs();
            let ov = g.matrix()[(0, 1)].norm() / (p[0] * p[1]).sqrt();
            let r = search_optimum(&g, seed).unwrap();
            assert!((r.p_success - helstrom_value(p[0], p[1], ov)).abs() < 1e-7, "seed {seed}");
        }
    }

    #[test]
    fn search_is_deterministic_and_stationary() {
        let g = random_ensemble(3, 9, 0.7).unwrap().gram().unwrap();
        let a = search_optimum(&g, 4).unwrap();
        let b = search_optimum(&g, 4).unwrap();
        assert_eq!(a.p_success, b.p_success);
        let e = ensemble_from_gram(&g).unwrap();
        assert!(stationarity_check(&e, &a.povm).unwrap().residual() < 1e-6);
    }
}

//! Qutrit Bloch vectors over the Gell-Mann basis.
//!
//! A 3×3 density matrix is written `ρ = (𝟙 + √3 n·λ)/3` with the standard
//! Gell-Mann matrices (`Tr λ_jλ_k = 2δ_jk`). Then `n·n ≤ 1` and
//! `3n·n − 2(n∗n)·n ≤ 1`, where `(a∗b)_l = √3 d_jkl a_j b_k`; pure states
//! saturate both. The audit re-expresses a certified optimum in these
//! coordinates and checks the geometric optimality identities.

use std::sync::OnceLock;

use nalgebra::SVector;
use serde::Serialize;

use crate::certify::z_operator;
use crate::error::{MedError, Result};
use crate::gram::Ensemble;
use crate::linalg::{self, c, CMat};
use crate::measurement::Povm;

pub const AUDIT_TOL: f64 = 1e-8;
const TRACE_TOL: f64 = 1e-10;

pub type Vec8 = SVector<f64, 8>;

struct Basis {
    lambda: [CMat; 8],
    d: [[[f64; 8]; 8]; 8],
}

fn basis() -> &'static Basis {
    static CACHE: OnceLock<Basis> = OnceLock::new();
    CACHE.get_or_init(|| {
        let z = c(0.0, 0.0);
        let one = c(1.0, 0.0);
        let i = c(0.0, 1.0);
        let s = 1.0 / 3f64.sqrt();
        let mk = |rows: [[num_complex::Complex64; 3]; 3]| {
            CMat::from_fn(3, 3, |r, col| rows[r][col])
        };
        let lambda = [
            mk([[z, one, z], [one, z, z], [z, z, z]]),
            mk([[z, -i, z], [i, z, z], [z, z, z]]),
            mk([[one, z, z], [z, -one, z], [z, z, z]]),
            mk([[z, z, one], [z, z, z], [one, z, z]]),
            mk([[z, z, -i], [z, z, z], [i, z, z]]),
            mk([[z, z, z], [z, z, one], [z, one, z]]),
            mk([[z, z, z], [z, z, -i], [z, i, z]]),
            mk([[c(s, 0.0), z, z], [z, c(s, 0.0), z], [z, z, c(-2.0 * s, 0.0)]]),
        ];
        let mut d = [[[0.0; 8]; 8]; 8];
        for j in 0..8 {
            for k in 0..8 {
                let anti = &lambda[k] * &lambda[j] + &lambda[j] * &lambda[k];
                for l in 0..8 {
                    d[j][k][l] = 0.25 * (&lambda[l] * &anti).trace().re;
                }
            }
        }
        Basis { lambda, d }
    })
}

/// The `k`-th Gell-Mann matrix, zero-based.
pub fn gell_mann(k: usize) -> &'static CMat {
    &basis().lambda[k]
}

/// `d_jkl = ¼ Tr(λ_j {λ_k, λ_l})`.
pub fn d_tensor(j: usize, k: usize, l: usize) -> f64 {
    basis().d[j][k][l]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochVector(pub Vec8);

impl BlochVector {
    pub fn zero() -> Self {
        BlochVector(Vec8::zeros())
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn star(&self, other: &BlochVector) -> BlochVector {
        star(self, other)
    }

    /// `(3n − 2 n∗n)·n`; equals `1 − 27 det ρ`.
    pub fn cubic(&self) -> f64 {
        3.0 * self.norm_sq() - 2.0 * self.star(self).dot(self)
    }

    pub fn to_density(&self) -> CMat {
        let b = basis();
        let mut rho = linalg::identity(3);
        for k in 0..8 {
            rho += &b.lambda[k] * c(3f64.sqrt() * self.0[k], 0.0);
        }
        rho / c(3.0, 0.0)
    }
}

/// `n_k = (√3/2) Tr(ρ λ_k)`.
pub fn to_bloch(rho: &CMat) -> Result<BlochVector> {
    if rho.nrows() != 3 || rho.ncols() != 3 {
        return Err(MedError::DimensionMismatch {
            expected: 3,
            got: rho.nrows(),
        });
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(MedError::InvalidArgument(format!(
            "Bloch vectors need unit trace, got {tr}"
        )));
    }
    let b = basis();
    let h = linalg::hermitize(rho);
    Ok(BlochVector(Vec8::from_fn(|k, _| {
        0.5 * 3f64.sqrt() * (&h * &b.lambda[k]).trace().re
    })))
}

/// `(a∗b)_l = √3 d_jkl a_j b_k`.
pub fn star(a: &BlochVector, b: &BlochVector) -> BlochVector {
    let d = &basis().d;
    let mut out = Vec8::zeros();
    for j in 0..8 {
        if a.0[j] == 0.0 {
            continue;
        }
        for k in 0..8 {
            let w = a.0[j] * b.0[k];
            for l in 0..8 {
                out[l] += d[j][k][l] * w;
            }
        }
    }
    BlochVector(out * 3f64.sqrt())
}

/// Largest residual of each geometric identity at a measurement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub k0: f64,
    pub kappa: Vec<f64>,
    /// `max_i |(3s − 2s∗s)·s − 1|`.
    pub sb_boundary: f64,
    /// `max_i s·s`, must stay below 1.
    pub sb_norm_sq: f64,
    pub tb_boundary: f64,
    /// `max_i |t·t − 1|`.
    pub tb_norm: f64,
    /// `max_i ‖s + t + t∗s‖`.
    pub ot: f64,
    /// `‖Σ_i t‖`.
    pub pist: f64,
    /// `max_i ‖κ_i s − (k₀k − p_i n)‖`.
    pub sk: f64,
    pub xyz: f64,
    pub geo: f64,
    /// Largest violation of `max p ≤ k₀ ≤ 1`, `k·k < 1`, `(3k − 2k∗k)·k ≤ 1`.
    pub ink: f64,
    pub tolerance: f64,
}

impl AuditReport {
    pub fn failures(&self) -> Vec<String> {
        let tol = self.tolerance;
        let mut out = Vec::new();
        let mut check = |name: &str, value: f64| {
            if !(value <= tol) {
                out.push(format!("{name} residual {value:e}"));
            }
        };
        check("sb", self.sb_boundary);
        check("tb", self.tb_boundary.max(self.tb_norm));
        check("ot", self.ot);
        check("Pist", self.pist);
        check("sk", self.sk);
        check("xyz", self.xyz);
        check("geo", self.geo);
        check("ink", self.ink);
        if !(self.sb_norm_sq < 1.0) {
            out.push(format!("sb norm s·s = {}", self.sb_norm_sq));
        }
        out
    }

    pub fn passes(&self) -> bool {
        self.failures().is_empty()
    }
}

/// Residuals of every identity, without judging them.
pub fn audit_residuals(e: &Ensemble, v: &Povm, z: &CMat, tol: f64) -> Result<AuditReport> {
    if e.dim() != 3 {
        return Err(MedError::DimensionMismatch {
            expected: 3,
            got: e.dim(),
        });
    }
    let k0 = linalg::trace_re(z);
    if !(k0 > 0.0) {
        return Err(MedError::AuditFailure(format!("Tr Z = {k0} is not positive")));
    }
    let k = to_bloch(&(z / c(k0, 0.0)))?;
    let probs = e.probs();
    let kappa: Vec<f64> = probs.iter().map(|p| k0 - p).collect();
    if let Some(i) = kappa.iter().position(|x| !(x.abs() > 1e-12)) {
        return Err(MedError::AuditFailure(format!(
            "κ_{i} = {} leaves σ_{i} undefined",
            kappa[i]
        )));
    }
    let projectors = v.projectors(e)?;
    let mut n = Vec::with_capacity(3);
    let mut s = Vec::with_capacity(3);
    let mut t = Vec::with_capacity(3);
    for i in 0..3 {
        let psi = e.state(i);
        n.push(to_bloch(&linalg::outer(&psi, &psi))?);
        let sigma = (z - e.weighted_projector(i)) / c(kappa[i], 0.0);
        s.push(to_bloch(&sigma)?);
        t.push(to_bloch(&projectors[i])?);
    }

    let mut report = AuditReport {
        k0,
        kappa: kappa.clone(),
        sb_boundary: 0.0,
        sb_norm_sq: 0.0,
        tb_boundary: 0.0,
        tb_norm: 0.0,
        ot: 0.0,
        pist: 0.0,
        sk: 0.0,
        xyz: 0.0,
        geo: 0.0,
        ink: 0.0,
        tolerance: tol,
    };
    let mut t_sum = Vec8::zeros();
    for i in 0..3 {
        report.sb_boundary = report.sb_boundary.max((s[i].cubic() - 1.0).abs());
        report.sb_norm_sq = report.sb_norm_sq.max(s[i].norm_sq());
        report.tb_boundary = report.tb_boundary.max((t[i].cubic() - 1.0).abs());
        report.tb_norm = report.tb_norm.max((t[i].norm_sq() - 1.0).abs());
        let ot = s[i].0 + t[i].0 + star(&t[i], &s[i]).0;
        report.ot = report.ot.max(ot.norm());
        t_sum += t[i].0;
        let sk = s[i].0 * kappa[i] - (k.0 * k0 - n[i].0 * probs[i]);
        report.sk = report.sk.max(sk.norm());
        for j in 0..3 {
            let xyz = (probs[i] - probs[j]) - (kappa[j] - kappa[i]);
            report.xyz = report.xyz.max(xyz.abs());
            let geo = (n[i].0 * probs[i] - n[j].0 * probs[j])
                - (s[j].0 * kappa[j] - s[i].0 * kappa[i]);
            report.geo = report.geo.max(geo.norm());
        }
    }
    report.pist = t_sum.norm();
    let p_max = probs.iter().copied().fold(f64::MIN, f64::max);
    report.ink = [p_max - k0, k0 - 1.0, k.norm_sq() - 1.0, k.cubic() - 1.0]
        .into_iter()
        .fold(0.0, f64::max);
    Ok(report)
}

/// Audits a measurement against the geometric optimality identities.
pub fn geometric_audit(e: &Ensemble, v: &Povm, z: &CMat) -> Result<AuditReport> {
    let report = audit_residuals(e, v, z, AUDIT_TOL)?;
    let failures = report.failures();
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(MedError::AuditFailure(failures.join("; ")))
    }
}

/// [`geometric_audit`] with `Z` built from the measurement.
pub fn audit_povm(e: &Ensemble, v: &Povm) -> Result<AuditReport> {
    let z = z_operator(e, v)?;
    geometric_audit(e, v, &z.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::{random_ensemble, random_real_ensemble};
    use crate::homotopy::{rk4_drag, DragOptions};
    use crate::measurement::Frame;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};

    fn random_pure(seed: u64) -> CMat {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = DVector::from_fn(3, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let v = &v / c(v.norm(), 0.0);
        linalg::outer(&v, &v)
    }

    #[test]
    fn gell_mann_normalisation() {
        for j in 0..8 {
            assert!(linalg::hermiticity_defect(gell_mann(j)) == 0.0);
            assert!(gell_mann(j).trace().norm() < 1e-15);
            for k in 0..8 {
                let tr = (gell_mann(j) * gell_mann(k)).trace();
                let expect = if j == k { 2.0 } else { 0.0 };
                assert!((tr.re - expect).abs() < 1e-14 && tr.im.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn d_tensor_known_values() {
        let r3 = 1.0 / 3f64.sqrt();
        assert!((d_tensor(0, 0, 7) - r3).abs() < 1e-14);
        assert!((d_tensor(7, 7, 7) + r3).abs() < 1e-14);
        assert!((d_tensor(3, 3, 2) - 0.5).abs() < 1e-14);
        assert!((d_tensor(5, 5, 2) + 0.5).abs() < 1e-14);
        assert!(d_tensor(0, 1, 2).abs() < 1e-14);
        for j in 0..8 {
            for k in 0..8 {
                for l in 0..8 {
                    assert!((d_tensor(j, k, l) - d_tensor(k, l, j)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn maximally_mixed_is_origin() {
        let n = to_bloch(&(linalg::identity(3) / c(3.0, 0.0))).unwrap();
        assert!(n.norm_sq() < 1e-30);
    }

    #[test]
    fn basis_state_saturates_both_constraints() {
        let mut rho = CMat::zeros(3, 3);
        rho[(0, 0)] = c(1.0, 0.0);
        let n = to_bloch(&rho).unwrap();
        assert!((n.norm_sq() - 1.0).abs() < 1e-14);
        assert!((n.cubic() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_pure_states_saturate() {
        for seed in 0..20 {
            let rho = random_pure(seed);
            let n = to_bloch(&rho).unwrap();
            assert!((n.norm_sq() - 1.0).abs() < 1e-10);
            assert!((n.cubic() - 1.0).abs() < 1e-10);
            assert!(linalg::max_abs(&(n.to_density() - &rho)) < 1e-12);
        }
    }

    #[test]
    fn cubic_tracks_determinant() {
        let a = random_pure(1) * c(0.5, 0.0) + random_pure(2) * c(0.3, 0.0) + random_pure(3) * c(0.2, 0.0);
        let n = to_bloch(&a).unwrap();
        let det = a.determinant().re;
        assert!((n.cubic() - (1.0 - 27.0 * det)).abs() < 1e-12);
        assert!(n.cubic() < 1.0);
    }

    #[test]
    fn star_with_zero_vanishes() {
        let n = to_bloch(&random_pure(4)).unwrap();
        assert_eq!(star(&n, &BlochVector::zero()).norm_sq(), 0.0);
    }

    #[test]
    fn orthogonal_basis_audit() {
        let probs = vec![1.0 / 3.0; 3];
        let e = Ensemble::new(probs, linalg::identity(3)).unwrap();
        let v = Povm::new(linalg::identity(3), Frame::Ambient).unwrap();
        let r = audit_povm(&e, &v).unwrap();
        assert!((r.k0 - 1.0).abs() < 1e-14);
        assert!(r.kappa.iter().all(|k| (k - 2.0 / 3.0).abs() < 1e-14));
    }

    #[test]
    fn homotopy_optimum_passes_audit() {
        for seed in 0..4 {
            let e = if seed % 2 == 0 {
                random_real_ensemble(3, seed, 0.7).unwrap()
            } else {
                random_ensemble(3, seed, 0.7).unwrap()
            };
            let g = e.gram().unwrap();
            let report = rk4_drag(&g, &DragOptions::default()).unwrap();
            let ge = crate::gram::ensemble_from_gram(&g).unwrap();
            audit_povm(&ge, &report.final_povm).unwrap();
        }
    }

    #[test]
    fn perturbed_measurement_fails_audit() {
        let e = random_real_ensemble(3, 11, 0.7).unwrap();
        let g = e.gram().unwrap();
        let ge = crate::gram::ensemble_from_gram(&g).unwrap();
        let report = rk4_drag(&g, &DragOptions::default()).unwrap();
        let amb = report.final_povm.ambient_vectors(&ge).unwrap();
        let mut gen = CMat::zeros(3, 3);
        gen[(0, 1)] = c(0.01, 0.0);
        gen[(1, 0)] = c(-0.01, 0.0);
        let rot = linalg::polar_unitary(&(linalg::identity(3) + gen));
        let v = Povm::new(amb * rot, Frame::Ambient).unwrap();
        let z = z_operator(&ge, &v).unwrap();
        let r = audit_residuals(&ge, &v, &z.z, AUDIT_TOL).unwrap();
        assert!(r.ot > 1e-4, "ot residual {}", r.ot);
        assert!(matches!(geometric_audit(&ge, &v, &z.z), Err(MedError::AuditFailure(_))));
    }
}

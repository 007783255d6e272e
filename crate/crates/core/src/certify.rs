//! Optimality certificates for rank-one projective measurements.
//!
//! A measurement `{Π_i}` is optimal iff it is stationary,
//! `Π_j (p_jρ_j − p_iρ_i) Π_i = 0` for all `i, j`, and the operator
//! `Z = Σ_i p_iρ_iΠ_i` dominates every `p_iρ_i`. At the optimum `Tr Z`
//! equals the success probability.

use serde::{Deserialize, Serialize};

use crate::error::{MedError, Result};
use crate::gram::{ensemble_from_gram, Ensemble, GramMatrix};
use crate::linalg::{self, CMat};
use crate::measurement::{povm_success, Frame, Povm};

pub const TOL_STAT: f64 = 1e-9;
pub const TOL_GLB: f64 = 1e-9;
/// Largest `‖F² − DGD‖_HS` accepted by [`certify_gram`].
/// Larger unitarity drift in a reconstructed `U` is an error, smaller is
/// removed by a polar projection.
pub const UNITARITY_REPAIR_MAX: f64 = 1e-6;
pub const F_RESIDUAL_MAX: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub stat: f64,
    pub glb: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            stat: TOL_STAT,
            glb: TOL_GLB,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Optimal,
    StationaryNotGlobal,
    NotStationary,
}

impl Verdict {
    /// Process exit code: 0 optimal, 2 stationary but not global, 3 not stationary.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Optimal => 0,
            Verdict::StationaryNotGlobal => 2,
            Verdict::NotStationary => 3,
        }
    }
}

/// Hermitised `Z` with the size of the discarded anti-hermitian part.
#[derive(Clone, Debug)]
pub struct ZOperator {
    pub z: CMat,
    pub anti_hermitian_norm: f64,
}

impl ZOperator {
    pub fn trace(&self) -> f64 {
        linalg::trace_re(&self.z)
    }
}

/// `Z = Σ_i p_i |ψ_i⟩⟨ψ_i|v_i⟩⟨v_i|`.
pub fn z_operator(e: &Ensemble, v: &Povm) -> Result<ZOperator> {
    let vecs = v.ambient_vectors(e)?;
    let scaled = e.scaled_states();
    let overlaps = scaled.adjoint() * &vecs;
    let m = e.dim();
    let mut raw = CMat::zeros(m, m);
    for i in 0..m {
        // |ψ̃_i⟩ ⟨ψ̃_i|v_i⟩ ⟨v_i|
        let left = scaled.column(i) * overlaps[(i, i)];
        raw += left * vecs.column(i).adjoint();
    }
    Ok(ZOperator {
        anti_hermitian_norm: linalg::anti_hermitian_norm(&raw),
        z: linalg::hermitize(&raw),
    })
}

/// Stationarity residuals computed two ways.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StationarityResiduals {
    /// `max_ij |⟨v_j|(p_jρ_j − p_iρ_i)|v_i⟩|` from the ambient vectors.
    pub operator: f64,
    /// `max_jk |C_jj C*_jk − C_kj C*_kk|` from the overlap matrix.
    pub gram: f64,
}

impl StationarityResiduals {
    pub fn residual(&self) -> f64 {
        self.operator.max(self.gram)
    }

    pub fn passes(&self, tol_stat: f64) -> bool {
        self.residual() <= tol_stat
    }
}

pub fn stationarity_check(e: &Ensemble, v: &Povm) -> Result<StationarityResiduals> {
    let vecs = v.ambient_vectors(e)?;
    let m = e.dim();
    let mut operator = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let diff = e.weighted_projector(j) - e.weighted_projector(i);
            let val = (vecs.column(j).adjoint() * diff * vecs.column(i))[(0, 0)];
            operator = operator.max(val.norm());
        }
    }

    let cm = v.overlaps(e)?;
    let mut gram = 0.0f64;
    for j in 0..m {
        for k in 0..m {
            let lhs = cm[(j, j)] * cm[(j, k)].conj();
            let rhs = cm[(k, j)] * cm[(k, k)].conj();
            gram = gram.max((lhs - rhs).norm());
        }
    }
    Ok(StationarityResiduals { operator, gram })
}

/// `min_i λ_min(Z − p_iρ_i)` over the hermitised `Z`.
fn global_min_eig_of(e: &Ensemble, z: &CMat) -> f64 {
    (0..e.dim())
        .map(|i| linalg::min_eig(&(z - e.weighted_projector(i))))
        .fold(f64::INFINITY, f64::min)
}

/// Global-optimality margin; non-negative (up to `tol_glb`) certifies the
/// maximum. Refuses when `Z` is too far from hermitian to be meaningful.
pub fn global_check(e: &Ensemble, v: &Povm, tol_stat: f64) -> Result<f64> {
    let z = z_operator(e, v)?;
    if z.anti_hermitian_norm > 10.0 * tol_stat {
        return Err(MedError::NotStationary(z.anti_hermitian_norm));
    }
    Ok(global_min_eig_of(e, &z.z))
}

/// Machine-readable optimality certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub stationarity_residual: f64,
    pub global_min_eig: f64,
    pub f_positive: bool,
    pub f_min_eig: f64,
    pub p_success: f64,
    pub tr_z: f64,
    pub z_anti_hermitian: f64,
    pub tolerances: Tolerances,
    pub verdict: Verdict,
}

impl Certificate {
    pub fn is_optimal(&self) -> bool {
        self.verdict == Verdict::Optimal
    }

    pub fn duality_gap(&self) -> f64 {
        (self.tr_z - self.p_success).abs()
    }
}

/// `F = D C` with the columns of `C = G^{1/2}U` rephased so `C_ii ≥ 0` and
/// `D = diag(C_ii)`. Hermitian exactly at stationary points.
pub fn f_from_overlaps(overlaps: &CMat) -> CMat {
    let fixed = linalg::fix_diagonal_phases(overlaps);
    let m = fixed.nrows();
    CMat::from_fn(m, m, |i, j| fixed[(i, i)] * fixed[(i, j)])
}

pub fn certify_povm(e: &Ensemble, v: &Povm, tol: Tolerances) -> Result<Certificate> {
    let stat = stationarity_check(e, v)?;
    let z = z_operator(e, v)?;
    let global_min_eig = global_min_eig_of(e, &z.z);
    let overlaps = v.overlaps(e)?;
    let f_min_eig = linalg::min_eig(&f_from_overlaps(&overlaps));
    let p_success = povm_success(e, v)?.p_success;

    let stationary = stat.passes(tol.stat) && z.anti_hermitian_norm <= 10.0 * tol.stat;
    let verdict = if !stationary {
        Verdict::NotStationary
    } else if global_min_eig >= -tol.glb {
        Verdict::Optimal
    } else {
        Verdict::StationaryNotGlobal
    };
    Ok(Certificate {
        stationarity_residual: stat.residual(),
        global_min_eig,
        f_positive: f_min_eig > 0.0,
        f_min_eig,
        p_success,
        tr_z: z.trace(),
        z_anti_hermitian: z.anti_hermitian_norm,
        tolerances: tol,
        verdict,
    })
}

/// `‖F² − DGD‖_HS` with `D = diag(√F_ii)`.
pub fn f_residual(g: &GramMatrix, f: &CMat) -> f64 {
    let d = diag_sqrt(f);
    linalg::hs_norm(&(f * f - scale_rows_cols(g.matrix(), &d)))
}

fn diag_sqrt(f: &CMat) -> Vec<f64> {
    (0..f.nrows()).map(|i| f[(i, i)].re.max(0.0).sqrt()).collect()
}

/// `D A D` for diagonal `D`.
pub fn scale_rows_cols(a: &CMat, d: &[f64]) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * (d[i] * d[j]))
}

/// The measurement encoded by a hermitian square root `F` of `DGD`:
/// `G^{1/2}U = D⁻¹F`, i.e. `U = G^{-1/2} D⁻¹ F`.
pub fn povm_from_f(g: &GramMatrix, f: &CMat) -> Result<Povm> {
    let d = diag_sqrt(f);
    if let Some(lo) = d.iter().copied().reduce(f64::min) {
        if lo <= 0.0 {
            return Err(MedError::InvalidArgument(
                "F must have a positive diagonal".into(),
            ));
        }
    }
    let d_inv_f = CMat::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, j)] / d[i]);
    let mut u = g.inv_sqrt() * &d_inv_f;
    let drift = linalg::unitarity_residual(&u);
    if drift > UNITARITY_REPAIR_MAX {
        return Err(MedError::UnitarityLost(drift));
    }
    if drift > crate::measurement::UNITARY_TOL {
        u = linalg::polar_unitary(&u);
    }
    crate::measurement::povm_from_unitary(g, &u)
}

/// Certifies the measurement encoded by `F` against `G`.
pub fn certify_gram(g: &GramMatrix, f: &CMat, tol: Tolerances) -> Result<Certificate> {
    if f.nrows() != g.dim() || f.ncols() != g.dim() {
        return Err(MedError::DimensionMismatch {
            expected: g.dim(),
            got: f.nrows(),
        });
    }
    let residual = f_residual(g, f);
    if !(residual <= F_RESIDUAL_MAX) {
        return Err(MedError::ResidualTooLarge {
            residual,
            limit: F_RESIDUAL_MAX,
        });
    }
    let povm = povm_from_f(g, f)?;
    let e = ensemble_from_gram(g)?;
    let mut cert = certify_povm(&e, &povm, tol)?;
    cert.f_min_eig = linalg::min_eig(f);
    cert.f_positive = cert.f_min_eig > 0.0;
    if !cert.f_positive && cert.verdict == Verdict::Optimal {
        cert.verdict = Verdict::StationaryNotGlobal;
    }
    Ok(cert)
}

/// Convenience for measurements stored in the dual frame of a Gram matrix.
pub fn certify_for_gram(g: &GramMatrix, v: &Povm, tol: Tolerances) -> Result<Certificate> {
    debug_assert_eq!(v.frame(), Frame::Dual);
    certify_povm(&ensemble_from_gram(g)?, v, tol)
}

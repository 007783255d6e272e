//! Rank-one projective measurements parameterised by a unitary.
//!
//! Every orthonormal basis can be written `|v_i⟩ = Σ_j (G^{1/2}U)_{ji} |u_j⟩`
//! over the dual basis `{|u_j⟩}` of the scaled states. The coefficient matrix
//! `C = G^{1/2}U` doubles as the overlap matrix `C_ij = ⟨ψ̃_i|v_j⟩`, so the
//! success probability is `Σ_i |C_ii|²`. `U = 𝟙` is the pretty good
//! measurement.

use serde::{Deserialize, Serialize};

use crate::error::{MedError, Result};
use crate::gram::{dual_basis, Ensemble, GramMatrix};
use crate::linalg::{self, CMat, CVec, RMat};

/// Unitarity tolerance accepted by [`povm_from_unitary`].
pub const UNITARY_TOL: f64 = 1e-10;

/// What the columns of [`Povm::basis`] are expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// Coefficients over the dual basis `{|u_j⟩}`; column `i` is `C_{·i}`.
    Dual,
    /// Coordinates in the ensemble's own Hilbert space.
    Ambient,
}

/// An ordered orthonormal basis `{|v_i⟩}`; the measurement is `{|v_i⟩⟨v_i|}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    basis: CMat,
    frame: Frame,
}

impl Povm {
    /// Ambient-frame measurements are checked for orthonormality here;
    /// dual-frame ones need the ensemble (see [`Povm::orthonormality_residual`]).
    pub fn new(basis: CMat, frame: Frame) -> Result<Self> {
        if basis.nrows() != basis.ncols() || basis.nrows() < 2 {
            return Err(MedError::InvalidPovm(format!(
                "basis must be square of size ≥ 2, got {}×{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        if frame == Frame::Ambient {
            let r = linalg::unitarity_residual(&basis);
            if r > UNITARY_TOL {
                return Err(MedError::InvalidPovm(format!(
                    "basis is not orthonormal (residual {r:e})"
                )));
            }
        }
        Ok(Povm { basis, frame })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    /// Ambient vectors for the given ensemble.
    pub fn ambient_vectors(&self, e: &Ensemble) -> Result<CMat> {
        check_dim(e.dim(), self.dim())?;
        match self.frame {
            Frame::Ambient => Ok(self.basis.clone()),
            Frame::Dual => Ok(dual_basis(e)?.vectors() * &self.basis),
        }
    }

    pub fn to_ambient(&self, e: &Ensemble) -> Result<Povm> {
        Ok(Povm {
            basis: self.ambient_vectors(e)?,
            frame: Frame::Ambient,
        })
    }

    /// `C_ij = ⟨ψ̃_i|v_j⟩`.
    pub fn overlaps(&self, e: &Ensemble) -> Result<CMat> {
        check_dim(e.dim(), self.dim())?;
        match self.frame {
            Frame::Dual => Ok(self.basis.clone()),
            Frame::Ambient => Ok(e.scaled_states().adjoint() * &self.basis),
        }
    }

    /// `max_ij |⟨v_i|v_j⟩ − δ_ij|` in the ensemble's space.
    pub fn orthonormality_residual(&self, e: &Ensemble) -> Result<f64> {
        Ok(linalg::unitarity_residual(&self.ambient_vectors(e)?))
    }

    /// `|v_i⟩⟨v_i|` in the ensemble's space.
    pub fn projectors(&self, e: &Ensemble) -> Result<Vec<CMat>> {
        let v = self.ambient_vectors(e)?;
        Ok((0..v.ncols())
            .map(|i| {
                let col: CVec = v.column(i).into_owned();
                linalg::outer(&col, &col)
            })
            .collect())
    }

    /// Relabels outcomes: new outcome `k` is old outcome `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Povm {
        let mut basis = self.basis.clone();
        for (k, &src) in perm.iter().enumerate() {
            basis.set_column(k, &self.basis.column(src));
        }
        Povm {
            basis,
            frame: self.frame,
        }
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(MedError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `|v_i⟩ = Σ_j (G^{1/2}U)_{ji} |u_j⟩`, returned in the dual frame.
pub fn povm_from_unitary(g: &GramMatrix, u: &CMat) -> Result<Povm> {
    check_dim(g.dim(), u.nrows())?;
    check_dim(g.dim(), u.ncols())?;
    let r = linalg::unitarity_residual(u);
    if r > UNITARY_TOL {
        return Err(MedError::NotUnitary(r));
    }
    Ok(Povm {
        basis: g.sqrt() * u,
        frame: Frame::Dual,
    })
}

/// The pretty good measurement, `U = 𝟙`.
pub fn pgm(g: &GramMatrix) -> Povm {
    Povm {
        basis: g.sqrt(),
        frame: Frame::Dual,
    }
}

/// Outcome statistics of a rank-one projective measurement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuccessReport {
    pub p_success: f64,
    /// Entry `(i, j)` is `p_i Tr(ρ_i Π_j)`.
    pub per_outcome: Vec<Vec<f64>>,
}

impl SuccessReport {
    pub fn from_overlaps(c: &CMat) -> Self {
        let per = RMat::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)].norm_sqr());
        let p_success = (0..per.nrows()).map(|i| per[(i, i)]).sum::<f64>();
        SuccessReport {
            p_success: p_success.clamp(0.0, 1.0),
            per_outcome: (0..per.nrows())
                .map(|i| per.row(i).iter().copied().collect())
                .collect(),
        }
    }

    pub fn p_error(&self) -> f64 {
        1.0 - self.p_success
    }

    pub fn total(&self) -> f64 {
        self.per_outcome.iter().flatten().sum()
    }
}

pub fn success_probability(g: &GramMatrix, u: &CMat) -> Result<SuccessReport> {
    let povm = povm_from_unitary(g, u)?;
    Ok(SuccessReport::from_overlaps(povm.basis()))
}

/// Success probability of any rank-one projective measurement on `e`.
pub fn povm_success(e: &Ensemble, v: &Povm) -> Result<SuccessReport> {
    Ok(SuccessReport::from_overlaps(&v.overlaps(e)?))
}

//! Serde schemas for ensembles, Gram matrices and measurements.
//!
//! Matrices are stored row-major as separate real and imaginary parts; an
//! omitted imaginary part means zero. Ensemble files give either
//! `gram_re`/`gram_im`, or `probs` with `states_re`/`states_im` where row
//! `i` holds state `i`.

use serde::{Deserialize, Serialize};

use crate::error::{MedError, Result};
use crate::gram::{ensemble_from_gram, Ensemble, GramMatrix};
use crate::homotopy::ResidualSample;
use crate::linalg::{self, c, CMat};
use crate::measurement::{Frame, Povm};

type Rows = Vec<Vec<f64>>;

/// Which part of a possibly non-hermitian Gram matrix to trust.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Triangle {
    Upper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gram_re: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gram_im: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triangle: Option<Triangle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states_re: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states_im: Option<Rows>,
}

/// A parsed input: either the ensemble itself or only its Gram matrix.
#[derive(Clone, Debug)]
pub enum Input {
    Gram(GramMatrix),
    Ensemble(Ensemble),
}

impl Input {
    pub fn gram(&self) -> Result<GramMatrix> {
        match self {
            Input::Gram(g) => Ok(g.clone()),
            Input::Ensemble(e) => e.gram(),
        }
    }

    /// The ensemble; for Gram-only input, the one realised by [`ensemble_from_gram`].
    pub fn ensemble(&self) -> Result<Ensemble> {
        match self {
            Input::Gram(g) => ensemble_from_gram(g),
            Input::Ensemble(e) => Ok(e.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Input::Gram(g) => g.dim(),
            Input::Ensemble(e) => e.dim(),
        }
    }
}

fn shape(field: &str, rows: &Rows, m: usize) -> Result<()> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(MedError::InvalidArgument(format!(
            "{field}: expected a {m}×{m} array"
        )));
    }
    Ok(())
}

fn matrix(field_re: &str, re: &Rows, field_im: &str, im: Option<&Rows>, m: usize) -> Result<CMat> {
    shape(field_re, re, m)?;
    if let Some(im) = im {
        shape(field_im, im, m)?;
    }
    linalg::from_parts(re, im.map(|v| v.as_slice()))
        .map_err(|msg| MedError::InvalidArgument(format!("{field_re}: {msg}")))
}

impl EnsembleFile {
    pub fn from_gram(g: &GramMatrix) -> Self {
        let (re, im) = linalg::to_parts(g.matrix());
        EnsembleFile {
            m: g.dim(),
            gram_re: Some(re),
            gram_im: Some(im),
            triangle: None,
            probs: None,
            states_re: None,
            states_im: None,
        }
    }

    pub fn from_ensemble(e: &Ensemble) -> Self {
        let (re, im) = linalg::to_parts(&e.states().transpose());
        EnsembleFile {
            m: e.dim(),
            gram_re: None,
            gram_im: None,
            triangle: None,
            probs: Some(e.probs().to_vec()),
            states_re: Some(re),
            states_im: Some(im),
        }
    }

    /// Shape problems are `InvalidArgument`; physically invalid data keeps
    /// its specific error.
    pub fn load(&self) -> Result<Input> {
        let m = self.m;
        if m < 2 {
            return Err(MedError::InvalidArgument(format!("m: must be at least 2, got {m}")));
        }
        match (&self.gram_re, &self.states_re) {
            (Some(_), Some(_)) => Err(MedError::InvalidArgument(
                "give either gram_re or states_re, not both".into(),
            )),
            (Some(re), None) => {
                let g = matrix("gram_re", re, "gram_im", self.gram_im.as_ref(), m)?;
                let g = match self.triangle {
                    Some(Triangle::Upper) => GramMatrix::from_upper_triangle(&g)?,
                    None => GramMatrix::new(g)?,
                };
                Ok(Input::Gram(g))
            }
            (None, Some(re)) => {
                let probs = self
                    .probs
                    .clone()
                    .ok_or_else(|| MedError::InvalidArgument("probs: missing".into()))?;
                if probs.len() != m {
                    return Err(MedError::InvalidArgument(format!(
                        "probs: expected {m} entries, got {}",
                        probs.len()
                    )));
                }
                let rows = matrix("states_re", re, "states_im", self.states_im.as_ref(), m)?;
                Ok(Input::Ensemble(Ensemble::new(probs, rows.transpose())?))
            }
            (None, None) => Err(MedError::InvalidArgument(
                "gram_re or states_re: one of them is required".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PovmFile {
    pub m: usize,
    pub basis_re: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_im: Option<Rows>,
    pub frame: Frame,
}

impl PovmFile {
    pub fn from_povm(v: &Povm) -> Self {
        let (re, im) = linalg::to_parts(v.basis());
        PovmFile {
            m: v.dim(),
            basis_re: re,
            basis_im: Some(im),
            frame: v.frame(),
        }
    }

    pub fn load(&self) -> Result<Povm> {
        let basis = matrix("basis_re", &self.basis_re, "basis_im", self.basis_im.as_ref(), self.m)?;
        Povm::new(basis, self.frame)
    }
}

pub const RESIDUAL_CSV_HEADER: &str = "iter,t,log10_hs_residual,min_eig_F,p_success_partial";

pub fn write_residual_csv<W: std::io::Write>(mut out: W, trace: &[ResidualSample]) -> std::io::Result<()> {
    writeln!(out, "{RESIDUAL_CSV_HEADER}")?;
    for s in trace {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.iter,
            s.t,
            s.log10_residual(),
            s.min_eig_f,
            s.p_success_partial
        )?;
    }
    Ok(())
}

/// The five-state complex example used for the residual-trace figure.
///
/// As printed, its lower triangle disagrees with the conjugate of the upper
/// one in two entries; the upper triangle is taken as authoritative.
pub fn five_state_example() -> GramMatrix {
    let r06 = 0.06f64.sqrt();
    let r045 = 0.045f64.sqrt();
    let r03 = 0.03f64.sqrt();
    let z = c(0.0, 0.0);
    #[rustfmt::skip]
    let upper = [
        [c(0.3, 0.0), c(0.2, 0.1) * r06, c(0.1, 0.0) * r06, c(0.1, 0.0) * r045, c(0.1, 0.0) * r045],
        [z, c(0.2, 0.0), c(0.06, 0.0), c(0.2, 0.2) * r03, c(0.1, 0.0) * r03],
        [z, z, c(0.2, 0.0), c(0.2, 0.05) * r03, c(0.3, 0.2) * r03],
        [z, z, z, c(0.15, 0.0), c(0.2, 0.3) * 0.15],
        [z, z, z, z, c(0.15, 0.0)],
    ];
    let entries = CMat::from_fn(5, 5, |i, j| upper[i][j]);
    GramMatrix::from_upper_triangle(&entries).expect("example Gram matrix is positive definite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::random_ensemble;

    #[test]
    fn ensemble_round_trip() {
        let e = random_ensemble(3, 2, 0.6).unwrap();
        let file = EnsembleFile::from_ensemble(&e);
        let Input::Ensemble(back) = file.load().unwrap() else { panic!() };
        assert!(linalg::max_abs(&(back.states() - e.states())) < 1e-15);
        assert_eq!(back.probs(), e.probs());
    }

    #[test]
    fn gram_round_trip() {
        let g = random_ensemble(4, 2, 0.6).unwrap().gram().unwrap();
        let back = EnsembleFile::from_gram(&g).load().unwrap().gram().unwrap();
        assert_eq!(back.matrix(), g.matrix());
    }

    #[test]
    fn shape_errors_name_the_field() {
        let mut f = EnsembleFile::from_gram(&GramMatrix::maximally_mixed(3));
        f.gram_im = Some(vec![vec![0.0; 3]; 2]);
        let err = f.load().unwrap_err().to_string();
        assert!(err.contains("gram_im"), "{err}");
    }

    #[test]
    fn five_state_example_is_valid() {
        let g = five_state_example();
        assert_eq!(g.dim(), 5);
        assert!(g.min_eig() > 1e-3);
        let p = g.probs();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((g.matrix()[(4, 3)] - c(0.03, -0.045)).norm() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let trace = vec![ResidualSample {
            iter: 1,
            t: 0.001,
            hs_residual: 1e-17,
            min_eig_f: 0.1,
            p_success_partial: 0.99,
        }];
        let mut buf = Vec::new();
        write_residual_csv(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], RESIDUAL_CSV_HEADER);
        assert_eq!(lines[1], "1,0.001,-17,0.1,0.99");
    }
}

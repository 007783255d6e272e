//! Ensembles of linearly independent pure states and their Gram matrices.
//!
//! An ensemble `{p_i, |ψ_i⟩}` of `m` states in an `m`-dimensional space is
//! summarised by the Gram matrix of the probability-scaled states
//! `|ψ̃_i⟩ = √p_i |ψ_i⟩`, so `G_ij = ⟨ψ̃_i|ψ̃_j⟩`. `G` is hermitian, positive
//! definite and has unit trace, with `G_ii = p_i`.
//!
//! The same ensemble yields different Gram matrices under relabelling and
//! per-state phase changes. [`GramMatrix::canonicalize`] picks one
//! representative: diagonal non-increasing, ties broken by the superdiagonal
//! magnitudes and then by the remaining upper-triangle magnitudes, and a
//! diagonal-unitary conjugation that makes the superdiagonal real and
//! non-negative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{MedError, Result};
use crate::linalg::{self, c, CMat, CVec};

/// Smallest Gram eigenvalue accepted as linearly independent.
pub const EPS_LI: f64 = 1e-8;
/// Tolerance on unit norms, probability sums and Gram hermiticity/trace.
pub const STRUCTURE_TOL: f64 = 1e-12;

const TIE_TOL: f64 = 1e-12;
const MAX_TIE_PERMUTATIONS: usize = 40_320;
const GENERATION_ATTEMPTS: usize = 1000;
/// Smallest eigenvalue allowed in the unit-state overlap matrix of a random draw.
pub const CONDITION_FLOOR: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    probs: Vec<f64>,
    /// Column `i` is `|ψ_i⟩`.
    states: CMat,
}

impl Ensemble {
    pub fn new(probs: Vec<f64>, states: CMat) -> Result<Self> {
        let m = probs.len();
        if m < 2 {
            return Err(MedError::InvalidEnsemble(format!(
                "need at least two states, got {m}"
            )));
        }
        if states.nrows() != m || states.ncols() != m {
            return Err(MedError::InvalidEnsemble(format!(
                "expected {m} states of dimension {m}, got {} states of dimension {}",
                states.ncols(),
                states.nrows()
            )));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(**p > 0.0 && **p <= 1.0)) {
            return Err(MedError::InvalidEnsemble(format!(
                "probability {i} = {p} is outside (0, 1]"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > STRUCTURE_TOL {
            return Err(MedError::InvalidEnsemble(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        for i in 0..m {
            let norm = states.column(i).norm();
            if (norm - 1.0).abs() > STRUCTURE_TOL {
                return Err(MedError::InvalidEnsemble(format!(
                    "state {i} has norm {norm}, not 1"
                )));
            }
        }
        let ensemble = Ensemble { probs, states };
        let lo = linalg::min_eig(&ensemble.raw_gram());
        if lo <= EPS_LI {
            return Err(MedError::NearLinearDependence {
                quantity: "minimum Gram eigenvalue",
                value: lo,
                threshold: EPS_LI,
            });
        }
        Ok(ensemble)
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// States as columns.
    pub fn states(&self) -> &CMat {
        &self.states
    }

    pub fn state(&self, i: usize) -> CVec {
        self.states.column(i).into_owned()
    }

    /// Columns `√p_i |ψ_i⟩`.
    pub fn scaled_states(&self) -> CMat {
        let mut out = self.states.clone();
        for (i, p) in self.probs.iter().enumerate() {
            out.column_mut(i).scale_mut(p.sqrt());
        }
        out
    }

    /// `p_i |ψ_i⟩⟨ψ_i|`.
    pub fn weighted_projector(&self, i: usize) -> CMat {
        let s = self.state(i);
        linalg::outer(&s, &s).scale(self.probs[i])
    }

    /// Gram matrix in the ensemble's own ordering and phases.
    pub fn raw_gram(&self) -> CMat {
        let scaled = self.scaled_states();
        scaled.adjoint() * scaled
    }

    /// Gram matrix in the ensemble's own ordering and phases, validated.
    pub fn gram(&self) -> Result<GramMatrix> {
        GramMatrix::new(linalg::hermitize(&self.raw_gram()))
    }

    pub fn is_real(&self) -> bool {
        self.states.iter().all(|z| z.im == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix(CMat);

impl GramMatrix {
    /// Validates hermiticity, unit trace and positive definiteness.
    pub fn new(entries: CMat) -> Result<Self> {
        let m = entries.nrows();
        if m < 2 || entries.ncols() != m {
            return Err(MedError::InvalidGram(format!(
                "expected a square matrix of size ≥ 2, got {}×{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let defect = linalg::hermiticity_defect(&entries);
        if defect > STRUCTURE_TOL {
            return Err(MedError::InvalidGram(format!(
                "not hermitian (defect {defect:e})"
            )));
        }
        let tr = linalg::trace_re(&entries);
        if (tr - 1.0).abs() > STRUCTURE_TOL {
            return Err(MedError::InvalidGram(format!("trace is {tr}, not 1")));
        }
        let lo = linalg::min_eig(&entries);
        if lo <= EPS_LI {
            return Err(MedError::NearLinearDependence {
                quantity: "minimum Gram eigenvalue",
                value: lo,
                threshold: EPS_LI,
            });
        }
        Ok(GramMatrix(linalg::hermitize(&entries)))
    }

    /// Hermitian part of the upper triangle as given; the lower triangle is
    /// replaced by the conjugate transpose of the strict upper triangle.
    pub fn from_upper_triangle(entries: &CMat) -> Result<Self> {
        let m = entries.nrows();
        let full = CMat::from_fn(m, m, |i, j| {
            if i < j {
                entries[(i, j)]
            } else if i > j {
                entries[(j, i)].conj()
            } else {
                c(entries[(i, i)].re, 0.0)
            }
        });
        Self::new(full)
    }

    /// The trivial equiprobable orthogonal ensemble `𝟙/m`.
    pub fn maximally_mixed(m: usize) -> Self {
        GramMatrix(linalg::identity(m).unscale(m as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    /// Diagonal of `G`, i.e. the prior probabilities.
    pub fn probs(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    pub fn min_eig(&self) -> f64 {
        linalg::min_eig(&self.0)
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }

    pub fn sqrt(&self) -> CMat {
        linalg::hermitian_function(&self.0, f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> CMat {
        linalg::hermitian_function(&self.0, |x| 1.0 / x.sqrt())
    }

    pub fn inverse(&self) -> CMat {
        linalg::hermitian_function(&self.0, |x| 1.0 / x)
    }

    /// Re-expresses `G` with `perm[a]` as the new index `a` and the new
    /// state `a` multiplied by `e^{iφ_a}`.
    pub fn relabel(&self, perm: &[usize], phases: &[f64]) -> CMat {
        let m = self.dim();
        CMat::from_fn(m, m, |a, b| {
            let rot = cis(phases[b] - phases[a]);
            self.0[(perm[a], perm[b])] * rot
        })
    }

    pub fn canonicalize(&self) -> CanonicalGram {
        let perm = canonical_order(&self.0);
        let zero = vec![0.0; self.dim()];
        let permuted = self.relabel(&perm, &zero);
        let phases = canonical_phases(&permuted);
        let gram = GramMatrix(linalg::hermitize(&self.relabel(&perm, &phases)));
        CanonicalGram {
            gram,
            permutation: perm,
            phases,
        }
    }

    pub fn is_canonical(&self) -> bool {
        let m = self.dim();
        let sorted = (1..m).all(|i| self.0[(i - 1, i - 1)].re + TIE_TOL >= self.0[(i, i)].re);
        let phased = (1..m).all(|i| {
            let z = self.0[(i - 1, i)];
            z.im.abs() <= TIE_TOL && z.re >= -TIE_TOL
        });
        sorted && phased
    }
}

fn cis(theta: f64) -> num_complex::Complex64 {
    num_complex::Complex64::from_polar(1.0, theta)
}

/// A canonical Gram matrix together with the relabelling that produced it.
///
/// Canonical index `a` corresponds to original index `permutation[a]`, and
/// canonical state `a` equals `e^{i phases[a]}` times the original state.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalGram {
    pub gram: GramMatrix,
    pub permutation: Vec<usize>,
    pub phases: Vec<f64>,
}

impl CanonicalGram {
    /// Undoes the relabelling, recovering the original Gram matrix.
    pub fn original(&self) -> CMat {
        let m = self.gram.dim();
        let mut inverse = vec![0; m];
        for (a, &orig) in self.permutation.iter().enumerate() {
            inverse[orig] = a;
        }
        CMat::from_fn(m, m, |i, j| {
            let (a, b) = (inverse[i], inverse[j]);
            self.gram.0[(a, b)] * cis(self.phases[a] - self.phases[b])
        })
    }
}

fn ordering_key(g: &CMat, perm: &[usize]) -> Vec<f64> {
    let m = perm.len();
    let mut key: Vec<f64> = (0..m).map(|a| g[(perm[a], perm[a])].re).collect();
    key.extend((1..m).map(|a| g[(perm[a - 1], perm[a])].norm()));
    for a in 0..m {
        for b in a + 2..m {
            key.push(g[(perm[a], perm[b])].norm());
        }
    }
    key
}

fn key_greater(lhs: &[f64], rhs: &[f64]) -> bool {
    for (x, y) in lhs.iter().zip(rhs) {
        if (x - y).abs() > TIE_TOL {
            return x > y;
        }
    }
    false
}

fn canonical_order(g: &CMat) -> Vec<usize> {
    let m = g.nrows();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| g[(j, j)].re.total_cmp(&g[(i, i)].re));

    // groups of (near-)equal probabilities
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for a in 1..=m {
        if a == m || g[(order[a - 1], order[a - 1])].re - g[(order[a], order[a])].re > TIE_TOL {
            if a - start > 1 {
                groups.push((start, a));
            }
            start = a;
        }
    }
    let combos: usize = groups
        .iter()
        .map(|(s, e)| (1..=e - s).product::<usize>())
        .product();
    if groups.is_empty() || combos > MAX_TIE_PERMUTATIONS {
        return order;
    }

    let mut best = order.clone();
    let mut best_key = ordering_key(g, &best);
    let mut current = order.clone();
    search_ties(g, &groups, 0, &mut current, &mut best, &mut best_key);
    best
}

fn search_ties(
    g: &CMat,
    groups: &[(usize, usize)],
    level: usize,
    current: &mut Vec<usize>,
    best: &mut Vec<usize>,
    best_key: &mut Vec<f64>,
) {
    if level == groups.len() {
        let key = ordering_key(g, current);
        if key_greater(&key, best_key) {
            *best_key = key;
            best.clone_from(current);
        }
        return;
    }
    let (s, e) = groups[level];
    let original: Vec<usize> = current[s..e].to_vec();
    for p in permutations(e - s) {
        for (k, &idx) in p.iter().enumerate() {
            current[s + k] = original[idx];
        }
        search_ties(g, groups, level + 1, current, best, best_key);
    }
    current[s..e].copy_from_slice(&original);
}

/// All permutations of `0..n` in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| p[i] < p[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).unwrap();
        p.swap(i, j);
        p[i + 1..].reverse();
    }
    out
}

/// Phases making each superdiagonal entry real non-negative. When the
/// superdiagonal entry vanishes the phase is fixed by the nearest non-zero
/// entry above it in the same column, if any.
fn canonical_phases(g: &CMat) -> Vec<f64> {
    let m = g.nrows();
    let mut phases = vec![0.0; m];
    for b in 1..m {
        let anchor = (0..b).rev().find(|&a| g[(a, b)].norm() > TIE_TOL);
        phases[b] = match anchor {
            // e^{-iφ_a} G_ab e^{iφ_b} real positive
            Some(a) => phases[a] - g[(a, b)].arg(),
            None => 0.0,
        };
    }
    phases
}

/// Gram matrix of an ensemble in canonical form, with the relabelling.
pub fn gram_from_ensemble(e: &Ensemble) -> Result<CanonicalGram> {
    Ok(e.gram()?.canonicalize())
}

/// The biorthogonal partner set `⟨ψ̃_i|u_j⟩ = δ_ij`, stored as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct DualBasis(CMat);

impl DualBasis {
    pub fn vectors(&self) -> &CMat {
        &self.0
    }

    pub fn vector(&self, j: usize) -> CVec {
        self.0.column(j).into_owned()
    }

    /// Gram matrix of the dual vectors, equal to `G⁻¹`.
    pub fn gram(&self) -> CMat {
        self.0.adjoint() * &self.0
    }

    /// `max_ij |⟨ψ̃_i|u_j⟩ − δ_ij|`.
    pub fn biorthogonality_residual(&self, e: &Ensemble) -> f64 {
        let m = e.dim();
        linalg::max_abs(&(e.scaled_states().adjoint() * &self.0 - linalg::identity(m)))
    }
}

pub fn dual_basis(e: &Ensemble) -> Result<DualBasis> {
    let lo = linalg::min_eig(&e.raw_gram());
    if lo <= EPS_LI {
        return Err(MedError::NearLinearDependence {
            quantity: "minimum Gram eigenvalue",
            value: lo,
            threshold: EPS_LI,
        });
    }
    let inv = linalg::inverse(&e.scaled_states().adjoint()).ok_or(
        MedError::NearLinearDependence {
            quantity: "state matrix determinant",
            value: 0.0,
            threshold: EPS_LI,
        },
    )?;
    Ok(DualBasis(inv))
}

/// An ensemble realising `g`: the scaled states are the columns of `G^{1/2}`.
pub fn ensemble_from_gram(g: &GramMatrix) -> Result<Ensemble> {
    let root = linalg::sqrtm_pd(g.matrix(), EPS_LI)?;
    let probs = g.probs();
    let mut states = root;
    for i in 0..g.dim() {
        let norm = states.column(i).norm();
        states.column_mut(i).unscale_mut(norm);
    }
    Ensemble::new(probs, states)
}

fn random_unit_vector(rng: &mut ChaCha8Rng, m: usize, real: bool) -> CVec {
    let v = CVec::from_fn(m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if real { 0.0 } else { rng.sample(StandardNormal) };
        c(re, im)
    });
    let n = v.norm();
    v.unscale(n)
}

fn generate(m: usize, seed: u64, spread: f64, real: bool) -> Result<Ensemble> {
    if m < 2 {
        return Err(MedError::InvalidArgument(format!("m must be ≥ 2, got {m}")));
    }
    if !(spread > 0.0 && spread <= 1.0) {
        return Err(MedError::InvalidArgument(format!(
            "spread must lie in (0, 1], got {spread}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GENERATION_ATTEMPTS {
        let weights: Vec<f64> = (0..m)
            .map(|_| 1.0 + spread * rng.random_range(-0.9..0.9))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let rest: f64 = probs[1..].iter().sum();
        probs[0] = 1.0 - rest;

        let mut states = CMat::zeros(m, m);
        for i in 0..m {
            let mix = random_unit_vector(&mut rng, m, real);
            let mut col = mix.scale(spread);
            col[i] += c(1.0 - spread, 0.0);
            let n = col.norm();
            if n == 0.0 {
                continue;
            }
            states.set_column(i, &col.unscale(n));
        }
        let overlap_floor = linalg::min_eig(&(states.adjoint() * &states));
        if overlap_floor < CONDITION_FLOOR {
            log::debug!("rejected random ensemble: overlap eigenvalue {overlap_floor:e}");
            continue;
        }
        match Ensemble::new(probs, states) {
            Ok(e) => return Ok(e),
            Err(err) => log::debug!("rejected random ensemble: {err}"),
        }
    }
    Err(MedError::GenerationFailed(GENERATION_ATTEMPTS))
}

/// Seeded random ensemble. `spread` blends each basis state `e_i` with an
/// independent Haar-random state; small spread approaches `G = 𝟙/m`.
/// Draws whose state overlap matrix has an eigenvalue below
/// [`CONDITION_FLOOR`] are redrawn.
pub fn random_ensemble(m: usize, seed: u64, spread: f64) -> Result<Ensemble> {
    generate(m, seed, spread, false)
}

/// As [`random_ensemble`] with real state vectors.
pub fn random_real_ensemble(m: usize, seed: u64, spread: f64) -> Result<Ensemble> {
    generate(m, seed, spread, true)
}

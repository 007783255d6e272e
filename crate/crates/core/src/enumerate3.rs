//! Every stationary measurement for three real linearly independent states.
//!
//! For a real Gram matrix the matrix `M = G^{1/2}ŨD⁻¹` at a stationary point
//! is real symmetric with unit diagonal,
//!
//! ```text
//!     ⎛1 α β⎞
//! M = ⎜α 1 γ⎟ ,   M G⁻¹ M = D⁻²,
//!     ⎝β γ 1⎠
//! ```
//!
//! so the three off-diagonal entries of `M G⁻¹ M` give three coupled
//! quadratics in `(α, β, γ)` (Bézout bound 8) and the diagonal gives `D`.
//! Roots are found numerically by multi-start Newton iteration with
//! deflation over `ℂ³`. Complex roots are discarded as unphysical; of the
//! real ones, exactly one has `M` positive definite and it is the optimum.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::certify::{certify_for_gram, Certificate, Tolerances};
use crate::error::{MedError, Result};
use crate::gram::GramMatrix;
use crate::linalg::{self, c, CMat};
use crate::measurement::{povm_from_unitary, Povm};

pub const BEZOUT_BOUND: usize = 8;
pub const DEFAULT_STARTS: usize = 200;
/// Starting points are drawn from `|Re|, |Im| ≤ START_BOX` per coordinate.
pub const START_BOX: f64 = 10.0;
pub const DEDUP_DISTANCE: f64 = 1e-7;
pub const ROOT_RESIDUAL_MAX: f64 = 1e-9;
const IMAG_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 200;
const DIVERGENCE: f64 = 1e8;
const DEFLATION_SHIFT: f64 = 1.0;

type C3 = Vector3<Complex64>;
type CM3 = Matrix3<Complex64>;

/// One solution `(α, β, γ)` of the stationarity system.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryRoot {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub gamma: Complex64,
    pub is_real: bool,
    /// `max |(M G⁻¹ M)_ij|` over the three off-diagonal equations.
    pub residual: f64,
    /// Numerical rank of the 3×3 Jacobian at the root; below 3 flags a
    /// multiple root.
    pub jacobian_rank: usize,
    /// `D_ii⁻²` for real roots.
    pub d_inv_sq: Option<[f64; 3]>,
    /// `M` for real roots.
    pub symmetric_matrix: Option<[[f64; 3]; 3]>,
    pub is_positive_definite: bool,
    /// `Σ_i D_ii²` for real roots.
    pub p_success: Option<f64>,
}

impl StationaryRoot {
    pub fn point(&self) -> [Complex64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RootSet {
    pub roots: Vec<StationaryRoot>,
    /// Set when fewer than [`BEZOUT_BOUND`] distinct finite roots were found.
    pub anomaly: Option<String>,
}

impl RootSet {
    pub fn real_roots(&self) -> impl Iterator<Item = &StationaryRoot> {
        self.roots.iter().filter(|r| r.is_real)
    }

    pub fn positive_definite(&self) -> Vec<&StationaryRoot> {
        self.roots.iter().filter(|r| r.is_positive_definite).collect()
    }
}

struct System {
    h: CM3,
}

impl System {
    fn new(g: &GramMatrix) -> Result<Self> {
        if g.dim() != 3 {
            return Err(MedError::DimensionMismatch {
                expected: 3,
                got: g.dim(),
            });
        }
        if g.matrix().iter().any(|z| z.im.abs() > 1e-14) {
            return Err(MedError::InvalidArgument(
                "stationary-point enumeration needs a real Gram matrix".into(),
            ));
        }
        let inv = g.inverse();
        let h = CM3::from_fn(|i, j| c(0.5 * (inv[(i, j)].re + inv[(j, i)].re), 0.0));
        Ok(System { h })
    }

    fn m(x: &C3) -> CM3 {
        let one = c(1.0, 0.0);
        CM3::new(one, x[0], x[1], x[0], one, x[2], x[1], x[2], one)
    }

    fn mhm(&self, x: &C3) -> CM3 {
        let m = Self::m(x);
        m * self.h * m
    }

    fn eval(&self, x: &C3) -> C3 {
        let p = self.mhm(x);
        C3::new(p[(0, 1)], p[(0, 2)], p[(1, 2)])
    }

    fn jacobian(&self, x: &C3) -> CM3 {
        let m = Self::m(x);
        let hm = self.h * m;
        let mh = m * self.h;
        let mut jac = CM3::zeros();
        let slots = [(0, 1), (0, 2), (1, 2)];
        for (col, &(a, b)) in slots.iter().enumerate() {
            // d(MHM) = E H M + M H E with E = E_ab + E_ba
            let mut e = CM3::zeros();
            e[(a, b)] = c(1.0, 0.0);
            e[(b, a)] = c(1.0, 0.0);
            let d = e * hm + mh * e;
            for (row, &(p, q)) in slots.iter().enumerate() {
                jac[(row, col)] = d[(p, q)];
            }
        }
        jac
    }

    fn newton_step(&self, x: &C3) -> Option<C3> {
        let f = self.eval(x);
        self.jacobian(x).lu().solve(&(-f))
    }

    /// Newton iteration on the deflated map `f(x) Π_k (‖x − r_k‖⁻² + σ)`.
    fn deflated_newton(&self, start: C3, found: &[C3]) -> Option<C3> {
        let mut x = start;
        for _ in 0..MAX_NEWTON {
            let mut step = self.newton_step(&x)?;
            if !found.is_empty() {
                let mut dlog = 0.0;
                for r in found {
                    let diff = x - r;
                    let n2 = diff.norm_squared();
                    if n2 == 0.0 {
                        return None;
                    }
                    let directional = diff.dotc(&step).re;
                    let factor = 1.0 / n2 + DEFLATION_SHIFT;
                    dlog += -2.0 * directional / (n2 * n2) / factor;
                }
                let denom = 1.0 - dlog;
                if denom.abs() < 1e-300 {
                    return None;
                }
                step /= c(denom, 0.0);
            }
            x += step;
            if !x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) || x.norm() > DIVERGENCE {
                return None;
            }
            if step.norm() <= 1e-15 * (1.0 + x.norm()) {
                break;
            }
        }
        Some(x)
    }

    fn polish(&self, mut x: C3) -> C3 {
        for _ in 0..8 {
            match self.newton_step(&x) {
                Some(step) if step.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
                    x += step;
                    if step.norm() <= 1e-16 * (1.0 + x.norm()) {
                        break;
                    }
                }
                _ => break,
            }
        }
        x
    }

    fn residual(&self, x: &C3) -> f64 {
        self.eval(x).iter().fold(0.0f64, |a, z| a.max(z.norm()))
    }

    fn jacobian_rank(&self, x: &C3) -> usize {
        let sv = self.jacobian(x).svd(false, false).singular_values;
        let top = sv.max();
        if top == 0.0 {
            return 0;
        }
        sv.iter().filter(|s| **s > 1e-8 * top).count()
    }

    fn describe(&self, x: C3) -> StationaryRoot {
        let is_real = x.iter().all(|z| z.im.abs() <= IMAG_TOL * (1.0 + z.norm()));
        let x = if is_real {
            self.polish(x.map(|z| c(z.re, 0.0))).map(|z| c(z.re, 0.0))
        } else {
            x
        };
        let mut root = StationaryRoot {
            alpha: x[0],
            beta: x[1],
            gamma: x[2],
            is_real,
            residual: self.residual(&x),
            jacobian_rank: self.jacobian_rank(&x),
            d_inv_sq: None,
            symmetric_matrix: None,
            is_positive_definite: false,
            p_success: None,
        };
        if is_real {
            let m = Self::m(&x).map(|z| z.re);
            let p = self.mhm(&x).map(|z| z.re);
            let d = [p[(0, 0)], p[(1, 1)], p[(2, 2)]];
            root.is_positive_definite = m.symmetric_eigenvalues().min() > 0.0;
            root.p_success = Some(d.iter().map(|v| 1.0 / v).sum());
            root.d_inv_sq = Some(d);
            root.symmetric_matrix = Some([
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ]);
        }
        root
    }
}

/// All stationary points for a real 3×3 Gram matrix, with default settings.
pub fn solve_stationary(g: &GramMatrix) -> Result<RootSet> {
    solve_stationary_with(g, 0, DEFAULT_STARTS)
}

pub fn solve_stationary_with(g: &GramMatrix, seed: u64, starts: usize) -> Result<RootSet> {
    let system = System::new(g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found: Vec<C3> = Vec::new();
    for _ in 0..starts {
        if found.len() >= BEZOUT_BOUND {
            break;
        }
        let start = C3::from_fn(|_, _| {
            c(
                rng.random_range(-START_BOX..START_BOX),
                rng.random_range(-START_BOX..START_BOX),
            )
        });
        let Some(candidate) = system.deflated_newton(start, &found) else {
            continue;
        };
        let candidate = system.polish(candidate);
        if system.residual(&candidate) > ROOT_RESIDUAL_MAX {
            continue;
        }
        if found
            .iter()
            .any(|r| (r - candidate).norm() <= DEDUP_DISTANCE)
        {
            continue;
        }
        found.push(candidate);
    }

    let mut roots: Vec<StationaryRoot> = found.into_iter().map(|x| system.describe(x)).collect();
    roots.sort_by(|a, b| {
        b.is_real
            .cmp(&a.is_real)
            .then(b.p_success.unwrap_or(-1.0).total_cmp(&a.p_success.unwrap_or(-1.0)))
    });
    let anomaly = (roots.len() < BEZOUT_BOUND).then(|| {
        format!(
            "found {} distinct finite roots (Bézout bound {BEZOUT_BOUND}) after {starts} starts",
            roots.len()
        )
    });
    if let Some(msg) = &anomaly {
        log::warn!("{msg}");
    }
    Ok(RootSet { roots, anomaly })
}

/// The measurement of a real root: `Ũ = G^{-1/2} M D`.
pub fn root_to_povm(g: &GramMatrix, root: &StationaryRoot) -> Result<Povm> {
    let (Some(m), Some(d_inv_sq)) = (root.symmetric_matrix, root.d_inv_sq) else {
        return Err(MedError::NotRealRoot);
    };
    if !root.is_real || d_inv_sq.iter().any(|v| *v <= 0.0) {
        return Err(MedError::NotRealRoot);
    }
    let md = CMat::from_fn(3, 3, |i, j| c(m[i][j] / d_inv_sq[j].sqrt(), 0.0));
    let mut u = g.inv_sqrt() * md;
    let drift = linalg::unitarity_residual(&u);
    if drift > 1e-6 {
        return Err(MedError::UnitarityLost(drift));
    }
    if drift > 1e-10 {
        u = linalg::polar_unitary(&u);
    }
    povm_from_unitary(g, &u)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RootLabel {
    GlobalMaximum,
    StationaryNonGlobal,
    Complex,
}

#[derive(Clone, Debug, Serialize)]
pub struct LandscapeEntry {
    pub root: StationaryRoot,
    pub label: RootLabel,
    pub certificate: Option<Certificate>,
}

/// Stationary landscape: real roots by decreasing `P_s`, then complex roots.
#[derive(Clone, Debug, Serialize)]
pub struct Landscape {
    pub entries: Vec<LandscapeEntry>,
    pub global: Option<usize>,
    pub anomaly: Option<String>,
}

impl Landscape {
    pub fn global_entry(&self) -> Option<&LandscapeEntry> {
        self.global.map(|i| &self.entries[i])
    }

    pub fn real_count(&self) -> usize {
        self.entries.iter().filter(|e| e.root.is_real).count()
    }
}

pub fn classify_landscape(g: &GramMatrix) -> Result<Landscape> {
    let set = solve_stationary(g)?;
    let mut entries = Vec::with_capacity(set.roots.len());
    let mut global = None;
    for root in set.roots {
        if !root.is_real {
            entries.push(LandscapeEntry {
                root,
                label: RootLabel::Complex,
                certificate: None,
            });
            continue;
        }
        let povm = root_to_povm(g, &root)?;
        let cert = certify_for_gram(g, &povm, Tolerances::default())?;
        let label = if root.is_positive_definite && global.is_none() {
            global = Some(entries.len());
            RootLabel::GlobalMaximum
        } else {
            RootLabel::StationaryNonGlobal
        };
        entries.push(LandscapeEntry {
            root,
            label,
            certificate: Some(cert),
        });
    }
    Ok(Landscape {
        entries,
        global,
        anomaly: set.anomaly,
    })
}

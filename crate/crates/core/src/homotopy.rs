//! Dragging the optimal measurement along a path of Gram matrices.
//!
//! At the optimum, `F = D G^{1/2} Ũ` is the positive square root of `DGD`
//! with `D = diag(a_i)` and `F_ii = a_i²`. Along a linear path
//! `G(t) = (1 − t) G₀ + t G₁` the implicit variables `(a_i, f_ij)` keep
//! `y = F² − DGD` at zero, so differentiating gives the linear system
//!
//! ```text
//! F'F + FF' − D'GD − DGD' = DG'D,   F'_ii = 2 a_i a'_i,   F'_ij = f'_ij
//! ```
//!
//! which is integrated with classical fourth-order Runge–Kutta. The unknowns
//! are the real coordinates `(a_i, Re f_ij, Im f_ij)` for `i < j`, so `F`
//! stays hermitian by construction. `‖F² − DGD‖_HS` measures the accumulated
//! error without reference to any other solver.

use nalgebra::DVector;
use serde::Serialize;

use crate::certify::{certify_gram, povm_from_f, scale_rows_cols, Certificate, Tolerances};
use crate::error::{MedError, Result};
use crate::gram::{GramMatrix, EPS_LI};
use crate::linalg::{self, c, CMat, RMat};
use crate::measurement::Povm;

/// Condition-number ceiling for the per-stage linear solve.
pub const COND_MAX: f64 = 1e12;
/// Floor on every `a_i` along a run.
pub const EPS_A: f64 = 1e-6;
/// Residual below which a state counts as a solution for `drag_between`.
pub const START_RESIDUAL_MAX: f64 = 1e-8;

/// Implicit variables at one point of the path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverState {
    pub t: f64,
    /// Diagonal of `D`.
    pub a: Vec<f64>,
    /// Upper off-diagonal entries `f_ij`, `i < j`, row-major.
    pub f: Vec<num_complex::Complex64>,
}

/// Upper-triangle index pairs `(i, j)`, `i < j`, row-major.
pub fn upper_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .collect()
}

impl SolverState {
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Hermitian `F` with `F_ii = a_i²`, `F_ij = f_ij`, `F_ji = f_ij*`.
    pub fn f_matrix(&self) -> CMat {
        let m = self.dim();
        let mut f = CMat::zeros(m, m);
        for i in 0..m {
            f[(i, i)] = c(self.a[i] * self.a[i], 0.0);
        }
        for (&(i, j), &z) in upper_pairs(m).iter().zip(&self.f) {
            f[(i, j)] = z;
            f[(j, i)] = z.conj();
        }
        f
    }

    /// Reads `a_i = √F_ii` and the upper triangle from a hermitian `F`.
    pub fn from_f_matrix(t: f64, f: &CMat) -> Self {
        let m = f.nrows();
        SolverState {
            t,
            a: (0..m).map(|i| f[(i, i)].re.max(0.0).sqrt()).collect(),
            f: upper_pairs(m).iter().map(|&(i, j)| f[(i, j)]).collect(),
        }
    }

    /// `(a_1..a_m, Re f_12, Im f_12, Re f_13, Im f_13, ...)`.
    pub fn coords(&self) -> DVector<f64> {
        let m = self.dim();
        let mut x = DVector::zeros(m * m);
        for (i, &a) in self.a.iter().enumerate() {
            x[i] = a;
        }
        for (k, z) in self.f.iter().enumerate() {
            x[m + 2 * k] = z.re;
            x[m + 2 * k + 1] = z.im;
        }
        x
    }

    pub fn from_coords(t: f64, m: usize, x: &DVector<f64>) -> Self {
        debug_assert_eq!(x.len(), m * m);
        let pairs = m * (m - 1) / 2;
        SolverState {
            t,
            a: (0..m).map(|i| x[i]).collect(),
            f: (0..pairs)
                .map(|k| c(x[m + 2 * k], x[m + 2 * k + 1]))
                .collect(),
        }
    }

    /// `Σ a_i²`, the success probability of the encoded measurement.
    pub fn p_success(&self) -> f64 {
        self.a.iter().map(|a| a * a).sum()
    }

    pub fn min_a(&self) -> f64 {
        self.a.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The known solution at `G = 𝟙/m`: `a_i = 1/√m`, `F = 𝟙/m`.
pub fn initial_state(m: usize) -> SolverState {
    SolverState {
        t: 0.0,
        a: vec![1.0 / (m as f64).sqrt(); m],
        f: vec![c(0.0, 0.0); m * (m - 1) / 2],
    }
}

/// `G(t) = (1 − t) G₀ + t G₁`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    start: GramMatrix,
    end: GramMatrix,
    slope: CMat,
}

impl Trajectory {
    pub fn new(start: GramMatrix, end: GramMatrix) -> Result<Self> {
        if start.dim() != end.dim() {
            return Err(MedError::DimensionMismatch {
                expected: start.dim(),
                got: end.dim(),
            });
        }
        let slope = end.matrix() - start.matrix();
        Ok(Trajectory { start, end, slope })
    }

    /// Path from the equiprobable orthogonal ensemble to `target`.
    pub fn from_identity(target: GramMatrix) -> Self {
        let m = target.dim();
        Self::new(GramMatrix::maximally_mixed(m), target).expect("matching dimensions")
    }

    pub fn dim(&self) -> usize {
        self.start.dim()
    }

    pub fn start(&self) -> &GramMatrix {
        &self.start
    }

    pub fn end(&self) -> &GramMatrix {
        &self.end
    }

    pub fn at(&self, t: f64) -> CMat {
        self.start.matrix().scale(1.0 - t) + self.end.matrix().scale(t)
    }

    /// `G'`, constant along the path.
    pub fn slope(&self) -> &CMat {
        &self.slope
    }

    /// Fails when `G(t)` is at or below the linear-independence threshold.
    pub fn check_inside(&self, t: f64) -> Result<()> {
        let lo = linalg::min_eig(&self.at(t));
        if lo <= EPS_LI {
            return Err(MedError::NearLinearDependence {
                quantity: "minimum eigenvalue of G(t)",
                value: lo,
                threshold: EPS_LI,
            });
        }
        Ok(())
    }
}

/// `F² − DGD`.
pub fn residual_matrix(state: &SolverState, g: &CMat) -> CMat {
    let f = state.f_matrix();
    &f * &f - scale_rows_cols(g, &state.a)
}

pub fn residual_norm(state: &SolverState, g: &CMat) -> f64 {
    linalg::hs_norm(&residual_matrix(state, g))
}

/// Stacks a hermitian matrix as `(Re M_ii, then Re/Im M_ij for i < j)`.
pub fn vectorize_hermitian(mat: &CMat) -> DVector<f64> {
    let m = mat.nrows();
    let mut v = DVector::zeros(m * m);
    for i in 0..m {
        v[i] = mat[(i, i)].re;
    }
    for (k, &(i, j)) in upper_pairs(m).iter().enumerate() {
        v[m + 2 * k] = mat[(i, j)].re;
        v[m + 2 * k + 1] = mat[(i, j)].im;
    }
    v
}

/// Change of `F² − DGD` (at fixed `G`) for a coordinate perturbation `dx`:
/// `F'F + FF' − D'GD − DGD'`.
pub fn linear_response(state: &SolverState, g: &CMat, dx: &DVector<f64>) -> CMat {
    let m = state.dim();
    let f = state.f_matrix();
    let da: Vec<f64> = (0..m).map(|i| dx[i]).collect();
    let mut fp = CMat::zeros(m, m);
    for i in 0..m {
        fp[(i, i)] = c(2.0 * state.a[i] * da[i], 0.0);
    }
    for (k, &(i, j)) in upper_pairs(m).iter().enumerate() {
        let z = c(dx[m + 2 * k], dx[m + 2 * k + 1]);
        fp[(i, j)] = z;
        fp[(j, i)] = z.conj();
    }
    let mut out = &fp * &f + &f * &fp;
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] -= g[(i, j)] * (da[i] * state.a[j] + state.a[i] * da[j]);
        }
    }
    out
}

/// Real `m² × m²` Jacobian of `y = F² − DGD` in state coordinates.
pub fn jacobian(state: &SolverState, g: &CMat) -> RMat {
    let m = state.dim();
    let n = m * m;
    let mut jac = RMat::zeros(n, n);
    let mut unit = DVector::zeros(n);
    for col in 0..n {
        unit[col] = 1.0;
        let resp = linear_response(state, g, &unit);
        jac.set_column(col, &vectorize_hermitian(&resp));
        unit[col] = 0.0;
    }
    jac
}

fn solve_checked(jac: RMat, rhs: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let cond = linalg::condition_1norm(&jac).unwrap_or(f64::INFINITY);
    if !(cond <= COND_MAX) {
        return Err(MedError::SingularJacobian { t, cond });
    }
    jac.lu()
        .solve(rhs)
        .ok_or(MedError::SingularJacobian { t, cond })
}

/// `d/dt (a, Re f, Im f)` at parameter `t`.
pub fn derivative(state: &SolverState, traj: &Trajectory, t: f64) -> Result<DVector<f64>> {
    let g = traj.at(t);
    let rhs = vectorize_hermitian(&scale_rows_cols(traj.slope(), &state.a));
    solve_checked(jacobian(state, &g), &rhs, t)
}

/// One Newton correction of `y(t, a, f) = 0` at fixed `t`.
pub fn newton_correct(state: &SolverState, g: &CMat) -> Result<SolverState> {
    let y = vectorize_hermitian(&residual_matrix(state, g));
    let delta = solve_checked(jacobian(state, g), &(-y), state.t)?;
    Ok(SolverState::from_coords(
        state.t,
        state.dim(),
        &(state.coords() + delta),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DragOptions {
    pub steps: usize,
    pub h: f64,
    /// Newton projection onto `y = 0` every `polish_every` steps.
    pub polish: bool,
    pub polish_every: usize,
    pub tolerances: Tolerances,
}

impl Default for DragOptions {
    fn default() -> Self {
        DragOptions {
            steps: 1000,
            h: 1e-3,
            polish: false,
            polish_every: 1,
            tolerances: Tolerances::default(),
        }
    }
}

impl DragOptions {
    pub fn with_steps(steps: usize) -> Self {
        DragOptions {
            steps,
            h: 1.0 / steps as f64,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 || !(self.h > 0.0) {
            return Err(MedError::InvalidArgument(
                "steps and h must be positive".into(),
            ));
        }
        if ((self.steps as f64) * self.h - 1.0).abs() > 1e-9 {
            return Err(MedError::InvalidArgument(format!(
                "steps·h = {} must cover [0, 1]",
                self.steps as f64 * self.h
            )));
        }
        if self.polish && self.polish_every == 0 {
            return Err(MedError::InvalidArgument(
                "polish_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the residual trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResidualSample {
    pub iter: usize,
    pub t: f64,
    pub hs_residual: f64,
    pub min_eig_f: f64,
    pub p_success_partial: f64,
}

impl ResidualSample {
    pub fn log10_residual(&self) -> f64 {
        self.hs_residual.log10()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub steps: usize,
    pub h: f64,
    pub polished: bool,
    pub residual_trace: Vec<ResidualSample>,
    pub final_state: SolverState,
    #[serde(skip)]
    pub final_povm: Povm,
    pub certificate: Certificate,
}

impl RunReport {
    pub fn final_f(&self) -> CMat {
        self.final_state.f_matrix()
    }

    pub fn p_success(&self) -> f64 {
        self.final_state.p_success()
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_trace.last().map_or(0.0, |s| s.hs_residual)
    }
}

fn rk4_step(
    traj: &Trajectory,
    m: usize,
    x: &DVector<f64>,
    t: f64,
    h: f64,
) -> Result<DVector<f64>> {
    let eval = |x: &DVector<f64>, t: f64| derivative(&SolverState::from_coords(t, m, x), traj, t);
    let k1 = eval(x, t)?;
    let k2 = eval(&(x + &k1 * (h / 2.0)), t + h / 2.0)?;
    let k3 = eval(&(x + &k2 * (h / 2.0)), t + h / 2.0)?;
    let k4 = eval(&(x + &k3 * h), t + h)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Integrates from a solution at `traj.start()` to `traj.end()`.
pub fn drag(traj: &Trajectory, start: &SolverState, opts: &DragOptions) -> Result<RunReport> {
    opts.validate()?;
    let m = traj.dim();
    if start.dim() != m {
        return Err(MedError::DimensionMismatch {
            expected: m,
            got: start.dim(),
        });
    }
    let mut x = start.coords();
    let mut state = start.clone();
    let mut trace = Vec::with_capacity(opts.steps);
    for k in 1..=opts.steps {
        let t0 = (k - 1) as f64 * opts.h;
        let t1 = if k == opts.steps { 1.0 } else { k as f64 * opts.h };
        x = rk4_step(traj, m, &x, t0, t1 - t0)?;
        state = SolverState::from_coords(t1, m, &x);
        traj.check_inside(t1)?;
        let g = traj.at(t1);
        if opts.polish && k % opts.polish_every == 0 {
            state = newton_correct(&state, &g)?;
            x = state.coords();
        }
        if state.min_a() <= EPS_A {
            return Err(MedError::NearLinearDependence {
                quantity: "smallest a_i",
                value: state.min_a(),
                threshold: EPS_A,
            });
        }
        let min_eig_f = linalg::min_eig(&state.f_matrix());
        if min_eig_f < 0.0 {
            return Err(MedError::PositivityLost {
                t: t1,
                min_eig: min_eig_f,
            });
        }
        trace.push(ResidualSample {
            iter: k,
            t: t1,
            hs_residual: residual_norm(&state, &g),
            min_eig_f,
            p_success_partial: state.p_success(),
        });
    }
    log::debug!(
        "drag finished: {} steps, final residual {:e}",
        opts.steps,
        trace.last().map_or(0.0, |s| s.hs_residual)
    );
    let f = state.f_matrix();
    let final_povm = povm_from_f(traj.end(), &f)?;
    let certificate = certify_gram(traj.end(), &f, opts.tolerances)?;
    Ok(RunReport {
        steps: opts.steps,
        h: opts.h,
        polished: opts.polish,
        residual_trace: trace,
        final_state: state,
        final_povm,
        certificate,
    })
}

/// Drags the trivial solution at `𝟙/m` to `target`.
pub fn rk4_drag(target: &GramMatrix, opts: &DragOptions) -> Result<RunReport> {
    let traj = Trajectory::from_identity(target.clone());
    drag(&traj, &initial_state(target.dim()), opts)
}

/// Drags a known solution at `g_from` to `g_to`.
pub fn drag_between(
    g_from: &GramMatrix,
    state_from: &SolverState,
    g_to: &GramMatrix,
    opts: &DragOptions,
) -> Result<RunReport> {
    if state_from.dim() != g_from.dim() {
        return Err(MedError::DimensionMismatch {
            expected: g_from.dim(),
            got: state_from.dim(),
        });
    }
    let start_res = residual_norm(state_from, g_from.matrix());
    if !(start_res < START_RESIDUAL_MAX) {
        return Err(MedError::NotCertified(start_res));
    }
    let traj = Trajectory::new(g_from.clone(), g_to.clone())?;
    let start = SolverState {
        t: 0.0,
        ..state_from.clone()
    };
    drag(&traj, &start, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::random_ensemble;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};

    /// Hand-written m = 2 total derivatives `ζ_kl` with `f_21 = f_12*`.
    fn zeta_m2(
        a: [f64; 2],
        f12: Complex64,
        da: [f64; 2],
        df12: Complex64,
        g: &CMat,
        dg: &CMat,
    ) -> [[Complex64; 2]; 2] {
        let f21 = f12.conj();
        let df21 = df12.conj();
        let z11 = c(4.0 * a[0].powi(3) * da[0], 0.0) + f12 * df21 + f21 * df12
            - g[(0, 0)] * (2.0 * a[0] * da[0])
            - dg[(0, 0)] * a[0] * a[0];
        let z12 = df12 * (a[0] * a[0] + a[1] * a[1])
            + (f12 * (2.0 * a[0]) - g[(0, 1)] * a[1]) * da[0]
            + (f12 * (2.0 * a[1]) - g[(0, 1)] * a[0]) * da[1]
            - dg[(0, 1)] * (a[0] * a[1]);
        let z21 = df21 * (a[0] * a[0] + a[1] * a[1])
            + (f21 * (2.0 * a[0]) - g[(1, 0)] * a[1]) * da[0]
            + (f21 * (2.0 * a[1]) - g[(1, 0)] * a[0]) * da[1]
            - dg[(1, 0)] * (a[0] * a[1]);
        let z22 = c(4.0 * a[1].powi(3) * da[1], 0.0) + f12 * df21 + f21 * df12
            - g[(1, 1)] * (2.0 * a[1] * da[1])
            - dg[(1, 1)] * a[1] * a[1];
        [[z11, z12], [z21, z22]]
    }

    #[test]
    fn initial_state_is_exact() {
        let s = initial_state(2);
        assert!((s.a[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let s5 = initial_state(5);
        assert!((s5.p_success() - 1.0).abs() < 1e-15);
        let g = GramMatrix::maximally_mixed(5);
        assert!(residual_norm(&s5, g.matrix()) < 1e-15);
    }

    #[test]
    fn coords_round_trip() {
        let s = SolverState {
            t: 0.0,
            a: vec![0.5, 0.6, 0.7],
            f: vec![c(0.1, 0.2), c(-0.3, 0.0), c(0.05, -0.4)],
        };
        let back = SolverState::from_coords(0.0, 3, &s.coords());
        assert_eq!(s, back);
        assert_eq!(SolverState::from_f_matrix(0.0, &s.f_matrix()), s);
    }

    #[test]
    fn general_assembler_matches_two_state_forms() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..10 {
            let a = [rng.random_range(0.3..0.9), rng.random_range(0.3..0.9)];
            let f12 = c(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            let da = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let df12 = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let g01 = c(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            let p = rng.random_range(0.2..0.8);
            let g = CMat::from_row_slice(2, 2, &[c(p, 0.0), g01, g01.conj(), c(1.0 - p, 0.0)]);
            let d01 = c(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            let dp = rng.random_range(-0.3..0.3);
            let dg = CMat::from_row_slice(2, 2, &[c(dp, 0.0), d01, d01.conj(), c(-dp, 0.0)]);

            let state = SolverState { t: 0.0, a: a.to_vec(), f: vec![f12] };
            let dx = DVector::from_vec(vec![da[0], da[1], df12.re, df12.im]);
            let general = linear_response(&state, &g, &dx) - scale_rows_cols(&dg, &state.a);
            let hand = zeta_m2(a, f12, da, df12, &g, &dg);
            for k in 0..2 {
                for l in 0..2 {
                    assert!((general[(k, l)] - hand[k][l]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn static_path_has_zero_derivative() {
        let g = random_ensemble(3, 4, 0.5).unwrap().gram().unwrap();
        let traj = Trajectory::from_identity(GramMatrix::maximally_mixed(3));
        let d = derivative(&initial_state(3), &traj, 0.3).unwrap();
        assert!(d.norm() == 0.0);
        let traj = Trajectory::new(g.clone(), g).unwrap();
        let d = derivative(&initial_state(3), &traj, 0.0).unwrap();
        assert!(d.norm() < 1e-15);
    }

    #[test]
    fn euler_step_residual_is_second_order() {
        let target = random_ensemble(3, 17, 0.6).unwrap().gram().unwrap();
        let traj = Trajectory::from_identity(target);
        let s0 = initial_state(3);
        let d = derivative(&s0, &traj, 0.0).unwrap();
        let res = |delta: f64| {
            let x = s0.coords() + &d * delta;
            let s = SolverState::from_coords(delta, 3, &x);
            residual_norm(&s, &traj.at(delta))
        };
        let (r1, r2) = (res(1e-3), res(5e-4));
        // halving δ quarters an O(δ²) residual
        let ratio = r1 / r2;
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn identity_target_returns_initial_state() {
        let report = rk4_drag(&GramMatrix::maximally_mixed(3), &DragOptions::with_steps(10)).unwrap();
        let s0 = initial_state(3);
        for (a, b) in report.final_state.a.iter().zip(&s0.a) {
            assert!((a - b).abs() < 1e-16);
        }
        assert!(report.certificate.is_optimal());
    }

    #[test]
    fn equiprobable_pair_reaches_helstrom() {
        let g = GramMatrix::new(CMat::from_row_slice(
            2,
            2,
            &[c(0.5, 0.0), c(0.3, 0.0), c(0.3, 0.0), c(0.5, 0.0)],
        ))
        .unwrap();
        let report = rk4_drag(&g, &DragOptions::default()).unwrap();
        assert!((report.p_success() - 0.9).abs() < 1e-9);
        assert!(report.certificate.is_optimal());
    }

    #[test]
    fn polish_reduces_residual() {
        let g = random_ensemble(4, 3, 0.8).unwrap().gram().unwrap();
        let raw = rk4_drag(&g, &DragOptions::with_steps(1000)).unwrap();
        let opts = DragOptions {
            polish: true,
            polish_every: 5,
            ..DragOptions::with_steps(1000)
        };
        let polished = rk4_drag(&g, &opts).unwrap();
        assert!(polished.final_residual() <= raw.final_residual());
        assert!(polished.polished);
    }

    #[test]
    fn uncertified_start_rejected() {
        let g = random_ensemble(3, 1, 0.5).unwrap().gram().unwrap();
        let err = drag_between(&g, &initial_state(3), &g, &DragOptions::default()).unwrap_err();
        assert!(matches!(err, MedError::NotCertified(_)));
    }

    #[test]
    fn zero_length_segment_is_identity() {
        let g = random_ensemble(3, 2, 0.5).unwrap().gram().unwrap();
        let first = rk4_drag(&g, &DragOptions::with_steps(200)).unwrap();
        let again = drag_between(&g, &first.final_state, &g, &DragOptions::with_steps(5)).unwrap();
        for (x, y) in first.final_state.a.iter().zip(&again.final_state.a) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn bad_step_count_rejected() {
        let g = GramMatrix::maximally_mixed(2);
        let opts = DragOptions {
            steps: 10,
            h: 0.05,
            ..Default::default()
        };
        assert!(matches!(rk4_drag(&g, &opts), Err(MedError::InvalidArgument(_))));
    }
}

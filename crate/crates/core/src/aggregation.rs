//! Fast-slow limits: transport with rare mutations against the scalar ODE
//! on the Perron direction of `K`, and fast diffusion with slow exchange
//! against the linear ODE driven by `K⁻`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::coefficient::{CoefficientField, CoefficientKind};
use crate::diffusion::{assemble, step_count, DiffusionState, Scheme, Stepper};
use crate::error::{Error, Result};
use crate::generation::{robin_boundary, TransportBoundary};
use crate::graph::MetricGraph;
use crate::linalg::{determinant_check, kernel_basis};
use crate::models::check_column_stochastic;
use crate::spectral::{check_nonnegative, check_semisimple_one, perron_pair};
use crate::transport::{init_abstract_state, init_state, GraphState};

const KERNEL_TOL: f64 = 1e-10;
const SIMPSON_PANELS: usize = 4096;

/// Rank-one projection `u ↦ (left · u) right` with `left · right = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOne {
    pub left: DVector<f64>,
    pub right: DVector<f64>,
}

impl RankOne {
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.right * self.left.dot(u)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        &self.right * self.left.transpose()
    }
}

/// `Π₁` from the eigenvalue 1 of a column-stochastic `K`.
pub fn flow_projection(k: &DMatrix<f64>) -> Result<RankOne> {
    check_nonnegative(k)?;
    check_column_stochastic(k)?;
    check_semisimple_one(k)?;
    let n = k.nrows();
    let dim = kernel_basis(&(k - DMatrix::identity(n, n)), KERNEL_TOL).len();
    if dim != 1 {
        return Err(Error::KernelDimensionNotOne(dim));
    }
    let p = perron_pair(k, Some(1.0))?;
    Ok(RankOne { left: p.e_l, right: p.e_r })
}

/// `Π₀ u = (e · u) 𝟏` with `e K⁻ = 0`, `e · 𝟏 = 1`.
pub fn exchange_projection(k_minus: &DMatrix<f64>) -> Result<RankOne> {
    let n = k_minus.nrows();
    let ones = DVector::from_element(n, 1.0);
    if (k_minus * &ones).amax() > KERNEL_TOL * k_minus.amax().max(1.0) {
        return Err(Error::InvalidParameter("K⁻ does not annihilate the constants".into()));
    }
    let left = kernel_basis(&k_minus.transpose(), KERNEL_TOL);
    if left.len() != 1 {
        return Err(Error::KernelDimensionNotOne(left.len()));
    }
    let e = &left[0];
    let s = e.sum();
    if s.abs() < 1e-14 {
        return Err(Error::EigenFailure("left kernel vector is orthogonal to the constants".into()));
    }
    Ok(RankOne { left: e / s, right: ones })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> DVector<f64> {
        DVector::from_column_slice(self.states.last().expect("trajectories start at t = 0"))
    }
}

/// Classical RK4 for `u' = M u`, recording every step.
pub fn rk4_linear(m: &DMatrix<f64>, u0: &DVector<f64>, t_final: f64, dt: f64) -> Result<Trajectory> {
    let steps = step_count(t_final, dt)?;
    let mut u = u0.clone();
    let mut traj = Trajectory { times: vec![0.0], states: vec![u.as_slice().to_vec()] };
    for k in 1..=steps {
        let k1 = m * &u;
        let k2 = m * (&u + &k1 * (dt / 2.0));
        let k3 = m * (&u + &k2 * (dt / 2.0));
        let k4 = m * (&u + &k3 * dt);
        u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        traj.times.push(k as f64 * dt);
        traj.states.push(u.as_slice().to_vec());
    }
    Ok(traj)
}

/// Limit of the mutation model: `u' = Π₁ Q Π₁ u`, `u(0) = Π₁ x0`, by RK4.
pub fn aggregated_flow_ode(k: &DMatrix<f64>, q: &DMatrix<f64>, x0: &DVector<f64>, t_final: f64, dt: f64) -> Result<Trajectory> {
    let p = flow_projection(k)?;
    let pm = p.matrix();
    rk4_linear(&(&pm * q * &pm), &p.apply(x0), t_final, dt)
}

/// `α(t) e_r` with `α(t) = exp((e_l · Q e_r) t) (e_l · x0)`.
pub fn aggregated_flow_closed_form(p: &RankOne, q: &DMatrix<f64>, x0: &DVector<f64>, t: f64) -> DVector<f64> {
    let rate = p.left.dot(&(q * &p.right));
    &p.right * ((rate * t).exp() * p.left.dot(x0))
}

/// Transport with speed `1/ε` and boundary `K + εQ`, observed after every
/// shift. Each edge gets `cells` cells, so the shift is `ε / cells`.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_flow(
    g: Option<&MetricGraph>,
    k: &DMatrix<f64>,
    q: &DMatrix<f64>,
    eps: f64,
    x0: impl Fn(usize, f64) -> f64,
    t_final: f64,
    cells: usize,
    mut observe: impl FnMut(f64, &GraphState),
) -> Result<GraphState> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!("ε must be positive, got {eps}")));
    }
    if cells == 0 {
        return Err(Error::InvalidParameter("need at least one cell per edge".into()));
    }
    let b_c = k + q * eps;
    check_nonnegative(&b_c)?;
    let m = k.nrows();
    let c = CoefficientField::uniform(CoefficientKind::Velocity, m, 1.0 / eps)?;
    let h = eps / cells as f64;
    let mut state = match g {
        Some(g) => {
            let det = determinant_check(&b_c);
            let boundary = TransportBoundary { b_c, is_semigroup: true, is_group: det.nonzero, det };
            init_state(g, &boundary, &c, x0, h, true)?
        }
        None => init_abstract_state(&b_c, &c, x0, h, true)?,
    };
    let h = state.h();
    let steps = step_count(t_final, h)?;
    observe(0.0, &state);
    for n in 1..=steps {
        state.step();
        observe(n as f64 * h, &state);
    }
    Ok(state)
}

/// Error curves of an ε-study, one entry per ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub eps: Vec<f64>,
    /// `sup_t ‖u_ε(t) - u(t)‖_{L¹}` over `[t_min, T]`, the limit read as an edgewise-constant function.
    pub e1: Vec<f64>,
    /// `sup_t ‖Π₁ 𝒫 u_ε(t) - u(t)‖_{ℓ₁}` over `[0, T]`.
    pub e2: Vec<f64>,
    pub t_min: f64,
    pub t_final: f64,
    pub e1_decreasing: bool,
    pub e2_decreasing: bool,
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn check_eps_list(eps: &[f64]) -> Result<()> {
    if eps.is_empty() || eps.iter().any(|&e| !(e.is_finite() && e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("ε list must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Runs [`epsilon_flow`] for every ε in parallel and compares against the
/// closed-form limit.
#[allow(clippy::too_many_arguments)]
pub fn flow_convergence_study(
    g: Option<&MetricGraph>,
    k: &DMatrix<f64>,
    q: &DMatrix<f64>,
    x0: &(dyn Fn(usize, f64) -> f64 + Sync),
    eps: &[f64],
    t_final: f64,
    t_min: f64,
    cells: usize,
) -> Result<ConvergenceStudy> {
    check_eps_list(eps)?;
    let p = flow_projection(k)?;
    let m = k.nrows();
    // 𝒫x0 by the midpoint rule on a fine grid
    let fine = 4096;
    let px0 = DVector::from_fn(m, |j, _| (0..fine).map(|i| x0(j, (i as f64 + 0.5) / fine as f64)).sum::<f64>() / fine as f64);
    let errors: Vec<(f64, f64)> = eps
        .par_iter()
        .map(|&e| {
            let (mut e1, mut e2) = (0.0f64, 0.0f64);
            epsilon_flow(g, k, q, e, x0, t_final, cells, |t, st| {
                let limit = aggregated_flow_closed_form(&p, q, &px0, t);
                let masses = DVector::from_vec(st.edge_masses());
                e2 = e2.max((p.apply(&masses) - &limit).lp_norm(1));
                if t >= t_min - 1e-12 {
                    let dist: f64 = st
                        .samples()
                        .iter()
                        .enumerate()
                        .map(|(j, cells)| {
                            cells.iter().enumerate().map(|(i, u)| (u - limit[j]).abs() * st.cell_width(j, i)).sum::<f64>()
                        })
                        .sum();
                    e1 = e1.max(dist);
                }
            })?;
            Ok((e1, e2))
        })
        .collect::<Result<_>>()?;
    let e1: Vec<f64> = errors.iter().map(|x| x.0).collect();
    let e2: Vec<f64> = errors.iter().map(|x| x.1).collect();
    Ok(ConvergenceStudy {
        eps: eps.to_vec(),
        e1_decreasing: strictly_decreasing(&e1),
        e2_decreasing: strictly_decreasing(&e2),
        e1,
        e2,
        t_min,
        t_final,
    })
}

/// Limit of the synaptic model, `u' = -K⁻ u`, by RK4.
pub fn aggregated_diffusion_ode(k_minus: &DMatrix<f64>, x0: &DVector<f64>, t_final: f64, dt: f64) -> Result<Trajectory> {
    rk4_linear(&(-k_minus), x0, t_final, dt)
}

/// `exp(-t K⁻)`.
pub fn exchange_semigroup(k_minus: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    (k_minus * (-t)).exp()
}

/// Largest nonzero decay rate of `u' = -K⁻ u`: the smallest real part
/// among the eigenvalues of `K⁻` away from zero.
pub fn exchange_gap(k_minus: &DMatrix<f64>) -> Result<f64> {
    let eig = crate::linalg::eigenvalues(k_minus)?;
    let tol = 1e-9 * k_minus.amax().max(1.0);
    eig.iter()
        .filter(|z| z.norm() > tol)
        .map(|z| z.re)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::EigenFailure("K⁻ has no nonzero eigenvalue".into()))
}

/// Diffusion with `a = 1/ε` and Robin matrix `ε K_fick`, observed after
/// every step.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_diffusion(
    g: &MetricGraph,
    k_fick: &DMatrix<f64>,
    eps: f64,
    x0: impl Fn(usize, f64) -> f64,
    t_final: f64,
    cells: usize,
    dt: f64,
    scheme: Scheme,
    mut observe: impl FnMut(f64, &DVector<f64>),
) -> Result<DiffusionState> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!("ε must be positive, got {eps}")));
    }
    let a = CoefficientField::uniform(CoefficientKind::Diffusivity, g.n_edges(), 1.0 / eps)?;
    let gen = assemble(g, &a, &robin_boundary(&(k_fick * eps))?, cells)?;
    let mut state = DiffusionState::new(gen.sample(x0));
    let steps = step_count(t_final, dt)?;
    let stepper = Stepper::new(&gen, dt, scheme)?;
    observe(0.0, &gen.edge_masses(&state.u));
    for n in 1..=steps {
        stepper.step(&mut state)?;
        state.t = n as f64 * dt;
        observe(state.t, &gen.edge_masses(&state.u));
    }
    Ok(state)
}

/// `sup_{t ∈ [t_min, T]} ‖𝒫u_ε(t) - exp(-t K⁻) 𝒫x0‖_{ℓ₁}` per ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionStudy {
    pub eps: Vec<f64>,
    pub sup_error: Vec<f64>,
    /// Largest relative change of the total mass along each run.
    pub mass_drift: Vec<f64>,
    pub t_min: f64,
    pub t_final: f64,
    pub nonincreasing: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn diffusion_convergence_study(
    g: &MetricGraph,
    k_fick: &DMatrix<f64>,
    k_minus: &DMatrix<f64>,
    x0: &(dyn Fn(usize, f64) -> f64 + Sync),
    eps: &[f64],
    t_final: f64,
    t_min: f64,
    cells: usize,
    dt: f64,
) -> Result<DiffusionStudy> {
    check_eps_list(eps)?;
    let runs: Vec<(f64, f64)> = eps
        .par_iter()
        .map(|&e| {
            let mut p0: Option<DVector<f64>> = None;
            let (mut err, mut drift) = (0.0f64, 0.0f64);
            epsilon_diffusion(g, k_fick, e, x0, t_final, cells, dt, Scheme::BackwardEuler, |t, pu| {
                let start = p0.get_or_insert_with(|| pu.clone()).clone();
                drift = drift.max((pu.sum() - start.sum()).abs() / start.sum().abs().max(1e-300));
                if t >= t_min - 1e-12 {
                    let limit = exchange_semigroup(k_minus, t) * &start;
                    err = err.max((pu - limit).lp_norm(1));
                }
            })?;
            Ok((err, drift))
        })
        .collect::<Result<_>>()?;
    let sup_error: Vec<f64> = runs.iter().map(|r| r.0).collect();
    Ok(DiffusionStudy {
        eps: eps.to_vec(),
        nonincreasing: sup_error.windows(2).all(|w| w[1] <= w[0]),
        mass_drift: runs.iter().map(|r| r.1).collect(),
        sup_error,
        t_min,
        t_final,
    })
}

/// `w(τ)(x) = Σ_n e^{-(nπ)² τ} a_n cos(nπx)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corrector {
    /// `a_1, …, a_{n_max}`.
    pub coefficients: Vec<f64>,
    pub tau: f64,
}

impl Corrector {
    pub fn eval(&self, x: f64) -> f64 {
        let pi = std::f64::consts::PI;
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let n = (i + 1) as f64;
                (-(n * pi).powi(2) * self.tau).exp() * a * (n * pi * x).cos()
            })
            .sum()
    }

    /// `e^{-π² τ} Σ |a_n|`.
    pub fn leading_bound(&self) -> f64 {
        let pi = std::f64::consts::PI;
        (-pi * pi * self.tau).exp() * self.coefficients.iter().map(|a| a.abs()).sum::<f64>()
    }
}

/// Cosine coefficients of `x0 - 𝒫x0` on one edge, by composite Simpson.
pub fn boundary_layer_corrector(x0: impl Fn(f64) -> f64, tau: f64, n_max: usize) -> Corrector {
    let pi = std::f64::consts::PI;
    let simpson = |f: &dyn Fn(f64) -> f64| {
        let n = SIMPSON_PANELS;
        let h = 1.0 / n as f64;
        let inner: f64 = (1..n).map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h)).sum();
        (f(0.0) + f(1.0) + inner) * h / 3.0
    };
    let mean = simpson(&x0);
    let coefficients = (1..=n_max)
        .map(|n| 2.0 * simpson(&|x| (x0(x) - mean) * (n as f64 * pi * x).cos()))
        .collect();
    Corrector { coefficients, tau }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Preset;
    use std::f64::consts::PI;

    fn half() -> DMatrix<f64> {
        DMatrix::from_element(2, 2, 0.5)
    }

    #[test]
    fn projections_are_idempotent_spectral() {
        let k = DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.0, 0.8, 0.0, 1.0, 0.0, 0.5, 0.0]);
        let p = flow_projection(&k).unwrap();
        let pm = p.matrix();
        assert!((&pm * &pm - &pm).amax() < 1e-12);
        let i_k = DMatrix::identity(3, 3) - &k;
        assert!((&pm * &i_k).amax() < 1e-10 && (&i_k * &pm).amax() < 1e-10);

        let p0 = exchange_projection(&Preset::ThreePool.build().k_minus).unwrap();
        let m0 = p0.matrix();
        assert!((&m0 * &m0 - &m0).amax() < 1e-12);
        assert!((p0.left.sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn symmetric_split_rate() {
        let q = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.2, -0.6]);
        let p = flow_projection(&half()).unwrap();
        let rate = p.left.dot(&(&q * &p.right));
        assert!((rate - (0.5 + -0.5) / 2.0).abs() < 1e-12);
        assert!((p.left - DVector::from_element(2, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn rk4_matches_closed_form() {
        let k = DMatrix::from_row_slice(4, 4, &[
            0.1, 0.4, 0.0, 0.3, 0.5, 0.1, 0.2, 0.2, 0.2, 0.3, 0.5, 0.1, 0.2, 0.2, 0.3, 0.4,
        ]);
        let q = DMatrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.05 - 0.08);
        let x0 = DVector::from_vec(vec![1.0, 0.5, 2.0, 0.25]);
        let traj = aggregated_flow_ode(&k, &q, &x0, 5.0, 1e-3).unwrap();
        let p = flow_projection(&k).unwrap();
        let worst = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(&t, u)| (DVector::from_column_slice(u) - aggregated_flow_closed_form(&p, &q, &x0, t)).amax())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn zero_mutation_keeps_perron_profile() {
        let k = half();
        let q = DMatrix::zeros(2, 2);
        let study = flow_convergence_study(None, &k, &q, &|_, _| 0.5, &[0.1, 0.05], 2.0, 0.0, 4).unwrap();
        assert!(study.e1.iter().chain(&study.e2).all(|&e| e < 1e-10), "{study:?}");
    }

    #[test]
    fn non_stochastic_k_is_rejected() {
        let k = DMatrix::from_element(2, 2, 0.4);
        assert!(matches!(flow_projection(&k), Err(Error::NotColumnStochastic { .. })));
        let q = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]);
        let r = epsilon_flow(None, &half(), &q, 1.0, |_, _| 1.0, 1.0, 2, |_, _| {});
        assert!(matches!(r, Err(Error::NotNonnegative { .. })));
    }

    #[test]
    fn two_pool_equilibration() {
        let km = Preset::TwoPool.build().k_minus;
        let gap = exchange_gap(&km).unwrap();
        assert!((gap - 4.0).abs() < 1e-12);
        let x0 = DVector::from_vec(vec![3.0, 1.0]);
        let p0 = exchange_projection(&km).unwrap();
        let t = 20.0 / gap;
        assert!((exchange_semigroup(&km, t) * &x0 - p0.apply(&x0)).amax() < 1e-8);
        let traj = aggregated_diffusion_ode(&km, &x0, t, 1e-3).unwrap();
        assert!((traj.last() - p0.apply(&x0)).amax() < 1e-8);
        let pairing: Vec<f64> = traj.states.iter().map(|u| p0.left.dot(&DVector::from_column_slice(u))).collect();
        assert!(pairing.iter().all(|e| (e - pairing[0]).abs() < 1e-10));
        let ones = aggregated_diffusion_ode(&km, &DVector::from_element(2, 1.0), 1.0, 0.01).unwrap();
        assert!(ones.states.iter().all(|u| u.iter().all(|&x| (x - 1.0).abs() < 1e-14)));
    }

    #[test]
    fn corrector_coefficients() {
        let c = boundary_layer_corrector(|x| (PI * x).cos(), 0.01, 8);
        assert!((c.coefficients[0] - 1.0).abs() < 1e-10);
        assert!(c.coefficients[1..].iter().all(|a| a.abs() < 1e-10));
        assert!((c.eval(0.3) - (-PI * PI * 0.01).exp() * (0.3 * PI).cos()).abs() < 1e-10);

        let flat = boundary_layer_corrector(|_| 2.5, 0.0, 16);
        assert!(flat.coefficients.iter().all(|a| a.abs() < 1e-12));

        let step = |x: f64| if x < 0.5 { 1.0 } else { 0.0 };
        for tau in [0.01, 0.1, 1.0] {
            let w = boundary_layer_corrector(step, tau, 64);
            let sup = (0..=100).map(|i| w.eval(i as f64 / 100.0).abs()).fold(0.0, f64::max);
            assert!(sup <= w.leading_bound() + 1e-15);
        }
    }

    #[test]
    fn eps_list_must_decrease() {
        let r = flow_convergence_study(None, &half(), &DMatrix::zeros(2, 2), &|_, _| 1.0, &[0.05, 0.1], 1.0, 0.0, 2);
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }
}

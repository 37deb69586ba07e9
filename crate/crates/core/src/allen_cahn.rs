//! The fractional Allen–Cahn equation `ε ∂ₜu = I[u] − ε^{-2s} W'(u)` on the periodic square.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{freq_index, Fft2, ScalarField};
use crate::fmcf::{FlowState, FlowStatus, FmcParams, FmcSolver};
use crate::fracops::{FracOrder, PeriodicKernel2D};
use crate::geometry::{extract_front, hausdorff, signed_distance_circle, FrontCurve, SignedDistanceField, DEFAULT_RHO_CELLS};
use crate::profile1d::Profile1D;
use crate::profiles::DoubleWell;

/// Smallest admissible interface width in grid cells.
pub const MIN_EPSILON_CELLS: f64 = 4.0;
/// Allowed excursion outside [0, 1].
pub const RANGE_SLACK: f64 = 1e-10;
/// Periodic images summed exactly when building the operator symbol.
const KERNEL_IMAGES: usize = 6;

#[derive(Clone, Debug)]
pub struct AcState {
    pub u: ScalarField,
    pub t: f64,
    pub epsilon: f64,
    pub well: DoubleWell,
    pub order: FracOrder,
}

impl AcState {
    pub fn new(u: ScalarField, epsilon: f64, well: DoubleWell, order: FracOrder) -> Result<Self> {
        check_epsilon(epsilon, u.spacing)?;
        check_range(&u)?;
        Ok(Self { u, t: 0.0, epsilon, well, order })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    /// `½⟨u, A u⟩` with `A` the discrete operator `−I`.
    pub gagliardo: f64,
    /// `ε^{-2s} ∫ W(u)`.
    pub potential: f64,
    pub total: f64,
    pub t: f64,
}

fn check_epsilon(epsilon: f64, h: f64) -> Result<()> {
    if !(epsilon >= MIN_EPSILON_CELLS * h) {
        return Err(Error::Resolution(format!(
            "ε = {epsilon} is below {MIN_EPSILON_CELLS} cells of width {h}"
        )));
    }
    Ok(())
}

fn check_range(u: &ScalarField) -> Result<()> {
    if let Some(k) = u.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(k));
    }
    let (min, max) = u.min_max();
    if min < -RANGE_SLACK || max > 1.0 + RANGE_SLACK {
        return Err(Error::MaxPrinciple { min, max });
    }
    Ok(())
}

/// `u₀ = φ(d⁰/ε)`, the layer wrapped around the initial signed distance.
pub fn well_prepared_init(
    d0: &SignedDistanceField,
    phi: &Profile1D,
    epsilon: f64,
    well: &DoubleWell,
    order: FracOrder,
) -> Result<AcState> {
    check_epsilon(epsilon, d0.spacing())?;
    phi.validate()?;
    if phi.left.and_then(|t| t.limit()) != Some(0.0) || phi.right.and_then(|t| t.limit()) != Some(1.0) {
        return Err(Error::Invalid("the layer profile must connect 0 to 1".into()));
    }
    let slopes = phi.pchip_slopes();
    let u = d0.field.map(|d| phi.eval_with(d / epsilon, &slopes).clamp(0.0, 1.0));
    AcState::new(u, epsilon, well.clone(), order)
}

/// Semi-implicit stabilized spectral stepper for one grid.
///
/// The operator is the periodized exact-cell quadrature of `I`, diagonalized by the FFT; its
/// off-diagonal weights are nonnegative, so each step is order preserving.
pub struct AcSolver {
    pub order: FracOrder,
    pub n: usize,
    pub spacing: f64,
    /// Symbol of `A = −I` on the FFT index grid, nonnegative and zero only at `k = 0`.
    pub symbol: Vec<f64>,
    plan: Fft2,
}

impl AcSolver {
    pub fn new(order: FracOrder, n: usize, box_len: f64) -> Result<Self> {
        let kernel = PeriodicKernel2D::new(order, n, box_len, KERNEL_IMAGES)?;
        let plan = Fft2::new(n, n);
        let w_hat = plan.forward_real(&kernel.weights);
        let h = kernel.spacing;
        let lap = kernel.second_moment / (h * h);
        let symbol = (0..n * n)
            .map(|idx| {
                let (a, b) = (freq_index(idx / n, n) as f64, freq_index(idx % n, n) as f64);
                let sa = (std::f64::consts::PI * a / n as f64).sin();
                let sb = (std::f64::consts::PI * b / n as f64).sin();
                if idx == 0 {
                    0.0
                } else {
                    (kernel.total - w_hat[idx].re).max(0.0) + lap * (sa * sa + sb * sb)
                }
            })
            .collect();
        Ok(Self { order, n, spacing: h, symbol, plan })
    }

    fn check(&self, state: &AcState) -> Result<()> {
        let (n0, n1) = state.u.n2();
        if n0 != self.n || n1 != self.n || (state.u.spacing - self.spacing).abs() > 1e-12 * self.spacing {
            return Err(Error::Shape("state lives on a different grid than the solver".into()));
        }
        if state.order != self.order {
            return Err(Error::Invalid("state and solver use different orders".into()));
        }
        Ok(())
    }

    /// Transform of `u − mean(u)`: constant fields map to exact zeros.
    fn transform_centered(&self, u: &[f64]) -> Vec<num_complex::Complex64> {
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        let centered: Vec<f64> = u.iter().map(|v| v - mean).collect();
        self.plan.forward_real(&centered)
    }

    /// `I[u]` by the solver's multiplier.
    pub fn operator(&self, u: &ScalarField) -> ScalarField {
        let mut buf = self.transform_centered(&u.data);
        for (b, m) in buf.iter_mut().zip(&self.symbol) {
            *b *= -m;
        }
        self.plan.inverse(&mut buf);
        u.with_data(buf.iter().map(|c| c.re).collect())
    }

    /// One step: `(ε + dt·A + dt·S·ε^{-2s}) Δ = dt·(I[u] − ε^{-2s}W'(u))`, `S = max W''`.
    pub fn step(&self, state: &AcState, dt: f64) -> Result<AcState> {
        self.check(state)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Invalid(format!("time step {dt} must be positive and finite")));
        }
        let eps = state.epsilon;
        let scale = eps.powf(-2.0 * self.order.s());
        let stab = state.well.max_curvature().max(0.0);
        let u = &state.u.data;
        let mut lap = self.transform_centered(u);
        let reaction: Vec<f64> = u.iter().map(|&v| scale * state.well.dw(v)).collect();
        let r_hat = self.plan.forward_real(&reaction);
        for ((l, r), m) in lap.iter_mut().zip(&r_hat).zip(&self.symbol) {
            *l = dt * (-m * *l - r) / (eps + dt * m + dt * stab * scale);
        }
        self.plan.inverse(&mut lap);
        let data: Vec<f64> = u.iter().zip(&lap).map(|(v, d)| v + d.re).collect();
        let next = state.u.with_data(data);
        check_range(&next)?;
        Ok(AcState { u: next, t: state.t + dt, ..state.clone() })
    }

    pub fn energy(&self, state: &AcState) -> Result<EnergyReport> {
        self.check(state)?;
        let h2 = self.spacing * self.spacing;
        let n2 = (self.n * self.n) as f64;
        let u_hat = self.transform_centered(&state.u.data);
        let gagliardo = 0.5 * h2 / n2 * u_hat.iter().zip(&self.symbol).map(|(c, m)| m * c.norm_sqr()).sum::<f64>();
        let scale = state.epsilon.powf(-2.0 * self.order.s());
        let potential = scale * h2 * state.u.data.iter().map(|&v| state.well.w(v)).sum::<f64>();
        Ok(EnergyReport { gagliardo, potential, total: gagliardo + potential, t: state.t })
    }
}

/// `0.1·ε^{1+2s}`, the step balancing `ε∂ₜ` against `ε^{-2s}W'`.
pub fn default_dt(epsilon: f64, s: f64) -> f64 {
    0.1 * epsilon.powf(1.0 + 2.0 * s)
}

/// The ½-level set of the phase field.
pub fn diffuse_front(state: &AcState) -> FrontCurve {
    extract_front(&state.u, 0.5)
}

/// Initial geometry of a convergence experiment on the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Seed {
    Circle { center: [f64; 2], radius: f64 },
    Empty,
}

#[derive(Clone, Debug)]
pub struct ConvergenceConfig {
    pub order: FracOrder,
    pub n: usize,
    pub c0: f64,
    pub omega: f64,
    /// Checkpoint times, increasing.
    pub times: Vec<f64>,
    /// `K_in` is the disk of this radius about the seed center.
    pub inner_radius: f64,
    /// `K_out` is the set farther than this from the seed center.
    pub outer_radius: f64,
    /// Minimum number of Allen–Cahn steps up to the last checkpoint.
    pub min_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub t: f64,
    /// `None` when either front is empty.
    pub hausdorff: Option<f64>,
    /// `sup |u − 1|` on `K_in`.
    pub sup_inside: f64,
    /// `sup |u|` on `K_out`.
    pub sup_outside: f64,
    pub diffuse_empty: bool,
    pub sharp_empty: bool,
    pub steps: usize,
}

/// Extended distance of the seed, its clamp width `ρ` capped by `rho_cap` and by the geometry.
fn seed_distance(seed: &Seed, n: usize, rho_cap: f64) -> Result<SignedDistanceField> {
    match *seed {
        Seed::Circle { center, radius } => {
            let margin = (0..2).map(|k| (center[k] - radius).min(1.0 - center[k] - radius)).fold(f64::INFINITY, f64::min);
            let rho = rho_cap.min(0.25 * margin).min(0.5 * radius);
            signed_distance_circle(n, 1.0, center, radius, 0.0, rho)
        }
        Seed::Empty => {
            let rho = rho_cap.min(0.25);
            Ok(SignedDistanceField { field: ScalarField::square(n, 1.0).map(|_| -2.0 * rho), rho })
        }
    }
}

/// Fronts of the level-set flow at each checkpoint.
fn sharp_fronts(seed: &Seed, cfg: &ConvergenceConfig) -> Result<Vec<FrontCurve>> {
    if *seed == Seed::Empty {
        return Ok(vec![FrontCurve::default(); cfg.times.len()]);
    }
    let params = FmcParams::new(cfg.order, cfg.c0, cfg.omega, None, 0.3)?;
    let solver = FmcSolver::new(params, cfg.n, 1.0)?;
    let mut state = FlowState::new(seed_distance(seed, cfg.n, DEFAULT_RHO_CELLS / cfg.n as f64)?, params);
    let mut out = Vec::with_capacity(cfg.times.len());
    for &t in &cfg.times {
        while state.status == FlowStatus::Active && state.t < t {
            let (_, speeds) = solver.velocity(&state.u)?;
            let dt = solver.stable_dt(&speeds).min(t - state.t);
            state = solver.step(&state, dt)?;
        }
        out.push(state.front());
    }
    Ok(out)
}

/// Allen–Cahn runs along an ε ladder compared with the level-set flow of the same seed.
pub fn convergence_experiment(
    seed: &Seed,
    epsilons: &[f64],
    cfg: &ConvergenceConfig,
    phi: &Profile1D,
    well: &DoubleWell,
) -> Result<Vec<ConvergenceRow>> {
    let h = 1.0 / cfg.n as f64;
    let feasible: Vec<f64> = epsilons.iter().copied().filter(|&e| e >= MIN_EPSILON_CELLS * h).collect();
    if feasible.len() != epsilons.len() {
        return Err(Error::Resolution(format!(
            "ε below {MIN_EPSILON_CELLS} cells at N = {}; feasible ladder: {feasible:?}",
            cfg.n
        )));
    }
    if cfg.times.is_empty() || cfg.times.windows(2).any(|w| w[1] <= w[0]) || cfg.times[0] <= 0.0 {
        return Err(Error::Config(vec!["checkpoint times must be positive and increasing".into()]));
    }
    let sharp = sharp_fronts(seed, cfg)?;
    let solver = AcSolver::new(cfg.order, cfg.n, 1.0)?;
    let d0 = seed_distance(seed, cfg.n, f64::INFINITY)?;
    let center = match *seed {
        Seed::Circle { center, .. } => center,
        Seed::Empty => [0.5, 0.5],
    };
    let t_end = *cfg.times.last().unwrap();
    let mut rows = Vec::new();
    for &eps in epsilons {
        let mut state = well_prepared_init(&d0, phi, eps, well, cfg.order)?;
        let dt_max = default_dt(eps, cfg.order.s()).min(t_end / cfg.min_steps.max(1) as f64);
        let mut steps = 0;
        for (&t, front) in cfg.times.iter().zip(&sharp) {
            while state.t < t {
                let dt = dt_max.min(t - state.t);
                state = solver.step(&state, dt)?;
                if t - state.t < 1e-12 * t {
                    state.t = t;
                }
                steps += 1;
            }
            let diffuse = diffuse_front(&state);
            let hausdorff = if diffuse.is_empty() || front.is_empty() { None } else { Some(hausdorff(&diffuse, front)?) };
            let (mut sup_inside, mut sup_outside) = (0.0f64, 0.0f64);
            for i in 0..cfg.n {
                for j in 0..cfg.n {
                    let x = state.u.coord2(i, j);
                    let r = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt();
                    let v = state.u.at2(i, j);
                    if r <= cfg.inner_radius {
                        sup_inside = sup_inside.max((v - 1.0).abs());
                    }
                    if r >= cfg.outer_radius {
                        sup_outside = sup_outside.max(v.abs());
                    }
                }
            }
            rows.push(ConvergenceRow {
                epsilon: eps,
                t,
                hausdorff,
                sup_inside,
                sup_outside,
                diffuse_empty: diffuse.is_empty(),
                sharp_empty: front.is_empty(),
                steps,
            });
        }
    }
    Ok(rows)
}

//! The auxiliary fields `ā_ε = b̄_ε + c̄_ε`, the cutoff `μ`, the barrier `v^ε` and its residual.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fracops::{frac_lap_nd_direct_field, frac_lap_nd_spectral, FracConstants, FracOrder, KernelWeights};
use crate::geometry::{signed_distance_circle, smoothstep5, CurvatureSolver, KernelMode, SignedDistanceField};
use crate::profile1d::{Profile1D, ProfileTable};
use crate::profiles::DoubleWell;
use crate::ScalarField;

/// `δ = ε^{0.4}`, so that `δ → 0` and `ε/δ² = ε^{0.2} → 0`.
pub const DELTA_EXPONENT: f64 = 0.4;
/// Smallest admissible `ε` in grid cells.
pub const MIN_EPSILON_CELLS: f64 = 4.0;
const TABLE_INTERVALS: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BarrierConfig {
    pub order: FracOrder,
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    /// `σ̃ = σ/α`.
    pub sigma_tilde: f64,
    /// `α = W''(0)`.
    pub alpha: f64,
    /// Truncation radius `R` of `b̄_ε`.
    pub r_kernel: f64,
    /// Smoothness band half-width `ρ` of the distance.
    pub rho: f64,
}

impl BarrierConfig {
    pub fn new(order: FracOrder, epsilon: f64, sigma: f64, well: &DoubleWell, r_kernel: f64, rho: f64) -> Result<Self> {
        let alpha = well.well_curvature;
        let delta = epsilon.powf(DELTA_EXPONENT);
        let sigma_tilde = sigma / alpha;
        let mut problems = Vec::new();
        if order.n() != 2 {
            problems.push(format!("barriers are assembled on planar grids, got n = {}", order.n()));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            problems.push(format!("ε = {epsilon} must lie in (0, 1)"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            problems.push(format!("δ = {delta} must lie in (0, 1)"));
        }
        if !(sigma > 0.0 && sigma < 1.0) {
            problems.push(format!("σ = {sigma} must lie in (0, 1)"));
        }
        if !(rho > 0.0) || !(sigma_tilde < 0.5 * rho) {
            problems.push(format!("σ̃ = {sigma_tilde} must be below ρ/2 = {}", 0.5 * rho));
        }
        if !(r_kernel > 0.0) {
            problems.push(format!("R = {r_kernel} must be positive"));
        }
        if problems.is_empty() {
            Ok(Self { order, epsilon, delta, sigma, sigma_tilde, alpha, r_kernel, rho })
        } else {
            Err(Error::Config(problems))
        }
    }

    fn s(&self) -> f64 {
        self.order.s()
    }

    fn check_grid(&self, d: &SignedDistanceField) -> Result<()> {
        let h = d.spacing();
        if self.epsilon < MIN_EPSILON_CELLS * h {
            return Err(Error::Resolution(format!("ε = {} is below {MIN_EPSILON_CELLS} cells of width {h}", self.epsilon)));
        }
        let quarter = 0.25 * d.n() as f64 * h;
        if self.r_kernel > quarter * (1.0 + 1e-12) {
            return Err(Error::Invalid(format!("R = {} exceeds a quarter box {quarter}", self.r_kernel)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AuxFields {
    pub b_eps: ScalarField,
    pub c_eps: ScalarField,
    pub a_eps: ScalarField,
    pub mu: ScalarField,
}

fn table_for(phi: &Profile1D, d: &SignedDistanceField, cfg: &BarrierConfig) -> ProfileTable {
    let (lo, hi) = d.field.min_max();
    let reach = (lo.abs().max(hi.abs()) + 2.0 * cfg.r_kernel) / cfg.epsilon + 1.0;
    ProfileTable::new(phi, -reach, reach, TABLE_INTERVALS)
}

/// `b̄_ε(x) = ∫_{|z|<R} [φ(d(x+z)/ε) − φ((d(x) + ∇d(x)·z)/ε)] |z|^{-2-2s} dz`, by exact cell
/// weights, with the center cell's second-order terms handled by discrete Laplacians.
pub fn compute_b_eps(d: &SignedDistanceField, phi: &Profile1D, cfg: &BarrierConfig) -> Result<ScalarField> {
    cfg.check_grid(d)?;
    let h = d.spacing();
    let eps = cfg.epsilon;
    let kw = KernelWeights::new(cfg.order, h, cfg.r_kernel)?;
    let table = table_for(phi, d, cfg);
    let u = d.field.map(|v| table.eval(v / eps));
    let (lap_u, _) = frac_lap_nd_direct_field(&u, &kw)?;
    let offsets: Vec<(f64, f64, f64)> =
        kw.entries().into_iter().map(|(z, w)| (z[0] as f64 * h, z[1] as f64 * h, w)).collect();
    let total: f64 = offsets.iter().map(|o| o.2).sum();
    let m2 = 0.25 * kw.second_moment() / (h * h);
    let (n0, n1) = d.field.n2();
    let data: Vec<f64> = (0..n0 * n1)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n1, idx % n1);
            let dx = d.field.data[idx];
            let p = d.field.gradient2(i, j);
            let c = table.eval(dx / eps);
            // linearization of d: the same discrete operator applied to z ↦ φ((d + p·z)/ε)
            let planar = if p[0] == 0.0 && p[1] == 0.0 {
                0.0
            } else {
                let sum: f64 = offsets.iter().map(|&(a, b, w)| w * table.eval((dx + p[0] * a + p[1] * b) / eps)).sum();
                let lap: f64 = [(h * p[0]), (-h * p[0]), (h * p[1]), (-h * p[1])]
                    .iter()
                    .map(|&dz| table.eval((dx + dz) / eps))
                    .sum::<f64>()
                    - 4.0 * c;
                sum - total * c + m2 * lap
            };
            lap_u.data[idx] - planar
        })
        .collect();
    Ok(d.field.with_data(data))
}

/// `c̄_ε = ε^{-2s}[(|∇d|² + ε^{2+2s/(1−2s)})^s − 1] W'(φ(d/ε))`.
pub fn compute_c_eps(d: &SignedDistanceField, phi: &Profile1D, well: &DoubleWell, cfg: &BarrierConfig) -> Result<ScalarField> {
    cfg.check_grid(d)?;
    let s = cfg.s();
    let eps = cfg.epsilon;
    let reg = eps.powf(2.0 + 2.0 * s / (1.0 - 2.0 * s));
    let slopes = phi.pchip_slopes();
    let (n0, n1) = d.field.n2();
    let data = (0..n0 * n1)
        .map(|idx| {
            let g = d.field.gradient2(idx / n1, idx % n1);
            let factor = (g[0] * g[0] + g[1] * g[1] + reg).powf(s) - 1.0;
            eps.powf(-2.0 * s) * factor * well.dw(phi.eval_with(d.field.data[idx] / eps, &slopes))
        })
        .collect();
    Ok(d.field.with_data(data))
}

/// `μ = σ` on `|d| ≤ δ`, `σ/δ^{2s}` on `|d| ≥ 2δ`, quintic smoothstep in between.
pub fn build_mu(d: &SignedDistanceField, cfg: &BarrierConfig) -> ScalarField {
    let hi = cfg.sigma / cfg.delta.powf(2.0 * cfg.s());
    d.field.map(|v| cfg.sigma + (hi - cfg.sigma) * smoothstep5((v.abs() - cfg.delta) / cfg.delta))
}

pub fn compute_aux(d: &SignedDistanceField, phi: &Profile1D, well: &DoubleWell, cfg: &BarrierConfig) -> Result<AuxFields> {
    let b_eps = compute_b_eps(d, phi, cfg)?;
    let c_eps = compute_c_eps(d, phi, well, cfg)?;
    let a_eps = b_eps.with_data(b_eps.data.iter().zip(&c_eps.data).map(|(b, c)| b + c).collect());
    Ok(AuxFields { b_eps, c_eps, a_eps, mu: build_mu(d, cfg) })
}

/// `d − σ̃`, the distance the barrier is built on.
pub fn shifted(d: &SignedDistanceField, cfg: &BarrierConfig) -> SignedDistanceField {
    SignedDistanceField { field: d.field.map(|v| v - cfg.sigma_tilde), rho: d.rho }
}

/// `v^ε = φ(ξ) + ε^{2s} ψ̃(ξ)(μ − ā_ε) + (ε^{2s}/α)(ā_ε − μ)` with `ξ = (d − σ̃)/ε` and the
/// auxiliaries computed on `d − σ̃`.
pub fn assemble_barrier(
    d: &SignedDistanceField,
    phi: &Profile1D,
    psi_tilde: &Profile1D,
    aux: &AuxFields,
    cfg: &BarrierConfig,
) -> Result<ScalarField> {
    for f in [&aux.b_eps, &aux.c_eps, &aux.a_eps, &aux.mu] {
        d.field.check_same_grid(f)?;
    }
    let e2s = cfg.epsilon.powf(2.0 * cfg.s());
    let (sp, sq) = (phi.pchip_slopes(), psi_tilde.pchip_slopes());
    let data = d
        .field
        .data
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let xi = (v - cfg.sigma_tilde) / cfg.epsilon;
            let gap = aux.mu.data[k] - aux.a_eps.data[k];
            phi.eval_with(xi, &sp) + e2s * psi_tilde.eval_with(xi, &sq) * gap - e2s / cfg.alpha * gap
        })
        .collect();
    Ok(d.field.with_data(data))
}

/// The ball `B(x₀, r₀ − Ct)` with `C` chosen so that `∂ₜd ≤ c₀κ − c₀σ` on the smooth band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CircleMotion {
    pub center: [f64; 2],
    pub r0: f64,
    pub speed: f64,
    pub rho: f64,
}

impl CircleMotion {
    /// `C = (1 + 1/100)(4^{2s}c₀ω/r_min^{2s} + c₀σ)` with `r_min = r₀/2`, the radius at the horizon.
    pub fn forced(center: [f64; 2], r0: f64, rho: f64, c0: f64, omega: f64, sigma: f64, s: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 0.25 * r0) {
            return Err(Error::Config(vec![format!("ρ = {rho} must lie in (0, r₀/4 = {})", 0.25 * r0)]));
        }
        let speed = 1.01 * (4f64.powf(2.0 * s) * c0 * omega / (0.5 * r0).powf(2.0 * s) + c0 * sigma);
        Ok(Self { center, r0, speed, rho })
    }

    /// The motion is used on `[0, r₀/(2C)]`.
    pub fn horizon(&self) -> f64 {
        self.r0 / (2.0 * self.speed)
    }

    pub fn radius(&self, t: f64) -> f64 {
        self.r0 - self.speed * t
    }

    pub fn distance(&self, t: f64, n: usize) -> Result<SignedDistanceField> {
        signed_distance_circle(n, 1.0, self.center, self.radius(t), 0.0, self.rho)
    }
}

/// The one-dimensional profiles the barrier is built from.
#[derive(Clone, Copy, Debug)]
pub struct BarrierProfiles<'a> {
    pub phi: &'a Profile1D,
    pub phi_dot: &'a Profile1D,
    pub psi_tilde: &'a Profile1D,
    pub c0: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub config: BarrierConfig,
    pub t: f64,
    /// Step of the centered time difference.
    pub dt: f64,
    pub points: usize,
    pub band_points: usize,
    pub fraction_negative: f64,
    pub fraction_negative_band: f64,
    pub max_j: f64,
    pub max_j_band: f64,
    pub max_j_far: f64,
    /// 5th, 50th and 95th percentiles of `J` over the grid.
    pub percentiles: [f64; 3],
    /// `max |J − [φ̇(∂ₜd − c₀ā_ε + c₀μ) − μ]| / σ` over the band.
    pub audit: f64,
    #[serde(skip)]
    pub j: ScalarField,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let k = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[k]
}

fn barrier_at(
    motion: &CircleMotion,
    t: f64,
    n: usize,
    prof: &BarrierProfiles,
    well: &DoubleWell,
    cfg: &BarrierConfig,
) -> Result<(SignedDistanceField, AuxFields, ScalarField)> {
    let d = motion.distance(t, n)?;
    let aux = compute_aux(&shifted(&d, cfg), prof.phi, well, cfg)?;
    let v = assemble_barrier(&d, prof.phi, prof.psi_tilde, &aux, cfg)?;
    Ok((d, aux, v))
}

/// `J[v] = ε∂ₜv − I[v] + ε^{-2s}W'(v)` from samples at `t − dt`, `t`, `t + dt`.
pub fn allen_cahn_residual(
    v: [&ScalarField; 3],
    dt: f64,
    epsilon: f64,
    well: &DoubleWell,
    order: FracOrder,
    constants: &FracConstants,
) -> Result<ScalarField> {
    v[0].check_same_grid(v[1])?;
    v[2].check_same_grid(v[1])?;
    for f in v {
        if let Some(k) = f.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(k));
        }
    }
    let lap = frac_lap_nd_spectral(v[1], order, constants)?;
    let scale = epsilon.powf(-2.0 * order.s());
    let data: Vec<f64> = (0..v[1].len())
        .map(|k| {
            let dv = (v[2].data[k] - v[0].data[k]) / (2.0 * dt);
            epsilon * dv - lap.data[k] + scale * well.dw(v[1].data[k])
        })
        .collect();
    if let Some(k) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(k));
    }
    Ok(v[1].with_data(data))
}

/// `J[v^ε] = ε∂ₜv^ε − I[v^ε] + ε^{-2s}W'(v^ε)` at time `t` on an `n × n` grid.
///
/// The time derivative is a centered difference with step `min(ε², 10⁻³·horizon)`, the
/// operator is the spectral one, and the band is `|d(t)| < ρ`.
pub fn subsolution_residual(
    motion: &CircleMotion,
    t: f64,
    n: usize,
    prof: &BarrierProfiles,
    well: &DoubleWell,
    cfg: &BarrierConfig,
    constants: &FracConstants,
) -> Result<ResidualReport> {
    let horizon = motion.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Invalid(format!("t = {t} lies outside the motion's horizon [0, {horizon}]")));
    }
    let dt = (cfg.epsilon * cfg.epsilon).min(1e-3 * horizon);
    let (d, aux, v) = barrier_at(motion, t, n, prof, well, cfg)?;
    let (_, _, v_plus) = barrier_at(motion, t + dt, n, prof, well, cfg)?;
    let (_, _, v_minus) = barrier_at(motion, t - dt, n, prof, well, cfg)?;
    let j_data = allen_cahn_residual([&v_minus, &v, &v_plus], dt, cfg.epsilon, well, cfg.order, constants)?.data;
    let eps = cfg.epsilon;
    let slopes = prof.phi_dot.pchip_slopes();
    let mut band = Vec::new();
    let mut far = Vec::new();
    let mut audit = 0.0f64;
    for (k, &jv) in j_data.iter().enumerate() {
        if d.field.data[k].abs() < d.rho {
            band.push(jv);
            let xi = (d.field.data[k] - cfg.sigma_tilde) / eps;
            let grouped = prof.phi_dot.eval_with(xi, &slopes) * (-motion.speed - prof.c0 * aux.a_eps.data[k] + prof.c0 * aux.mu.data[k])
                - aux.mu.data[k];
            audit = audit.max((jv - grouped).abs() / cfg.sigma);
        } else {
            far.push(jv);
        }
    }
    let mut sorted = j_data.clone();
    sorted.sort_by(f64::total_cmp);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let negative = |v: &[f64]| v.iter().filter(|&&x| x < 0.0).count() as f64 / v.len().max(1) as f64;
    Ok(ResidualReport {
        config: *cfg,
        t,
        dt,
        points: j_data.len(),
        band_points: band.len(),
        fraction_negative: negative(&j_data),
        fraction_negative_band: negative(&band),
        max_j: max(&j_data),
        max_j_band: max(&band),
        max_j_far: max(&far),
        percentiles: [percentile(&sorted, 0.05), percentile(&sorted, 0.5), percentile(&sorted, 0.95)],
        audit,
        j: v.with_data(j_data),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub epsilon: f64,
    pub delta: f64,
    pub band_points: usize,
    /// `max |ā_ε − κ_R|` over the band, `κ_R` the curvature truncated at `R`.
    pub curvature_gap: f64,
    /// `max |I[φ(d/ε)] − ε^{-2s}W'(φ(d/ε)) − ā_ε|` over the band; the middle term is
    /// `(C_{n,s}/ε^{2s}) I₁[φ](d/ε)` by the layer equation.
    pub operator_defect: f64,
}

/// How well `ā_ε` matches the truncated curvature and the n-to-1 dimensional operator gap on the
/// band `|d| < ρ`.
pub fn consistency_check(
    d: &SignedDistanceField,
    phi: &Profile1D,
    well: &DoubleWell,
    cfg: &BarrierConfig,
    constants: &FracConstants,
) -> Result<ConsistencyReport> {
    let aux = compute_aux(d, phi, well, cfg)?;
    let pts = d.band_points();
    let solver = CurvatureSolver::new(cfg.order, d.n(), d.n() as f64 * d.spacing(), KernelMode::Truncated(cfg.r_kernel))?;
    let kappa = solver.kappa(d, &pts)?;
    let slopes = phi.pchip_slopes();
    let u = d.field.map(|v| phi.eval_with(v / cfg.epsilon, &slopes));
    let iu = frac_lap_nd_spectral(&u, cfg.order, constants)?;
    let n1 = d.field.n2().1;
    let scale = cfg.epsilon.powf(-2.0 * cfg.s());
    let (mut gap, mut defect) = (0.0f64, 0.0f64);
    for (p, k) in pts.iter().zip(&kappa) {
        let idx = p[0] * n1 + p[1];
        let a = aux.a_eps.data[idx];
        gap = gap.max((a - k).abs());
        defect = defect.max((iu.data[idx] - scale * well.dw(u.data[idx]) - a).abs());
    }
    Ok(ConsistencyReport { epsilon: cfg.epsilon, delta: cfg.delta, band_points: pts.len(), curvature_gap: gap, operator_defect: defect })
}

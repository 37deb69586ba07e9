//! Level-set evolution by fractional mean curvature, `∂ₜu = c₀|∇u|κ[x,u]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fracops::{FracOrder, KernelWeights};
use crate::geometry::{
    distance_from_front, extend_distance, extract_front, signed_distance_circle, CurvatureSolver, FrontCurve, KernelMode,
    SignedDistanceField, DEFAULT_RHO_CELLS,
};
use crate::profiles::linear_fit;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FmcParams {
    pub order: FracOrder,
    pub c0: f64,
    pub omega: f64,
    /// Kernel truncation radius; `None` integrates over the whole plane.
    pub r_max: Option<f64>,
    pub cfl: f64,
}

impl FmcParams {
    pub fn new(order: FracOrder, c0: f64, omega: f64, r_max: Option<f64>, cfl: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if !(c0 > 0.0) {
            problems.push(format!("c0 = {c0} must be positive"));
        }
        if !(omega > 0.0) {
            problems.push(format!("omega = {omega} must be positive"));
        }
        if !(cfl > 0.0 && cfl < 1.0) {
            problems.push(format!("cfl = {cfl} must lie in (0, 1)"));
        }
        if order.n() != 2 {
            problems.push("the geometric flow runs in two dimensions".into());
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        Ok(Self { order, c0, omega, r_max, cfl })
    }

    fn mode(&self) -> KernelMode {
        self.r_max.map_or(KernelMode::Free, KernelMode::Truncated)
    }

    /// `r(t)` of a circle under the ball law `r' = -c₀ω r^{-2s}`, zero after extinction.
    pub fn circle_radius(&self, r0: f64, t: f64) -> f64 {
        circle_radius_law(r0, self.order.s(), self.c0, self.omega, t)
    }

    pub fn extinction_time(&self, r0: f64) -> f64 {
        let p = 1.0 + 2.0 * self.order.s();
        r0.powf(p) / (p * self.c0 * self.omega)
    }
}

/// `(r0^{1+2s} - (1+2s)c₀ω t)^{1/(1+2s)}`, clamped at zero.
pub fn circle_radius_law(r0: f64, s: f64, c0: f64, omega: f64, t: f64) -> f64 {
    let p = 1.0 + 2.0 * s;
    (r0.powf(p) - p * c0 * omega * t).max(0.0).powf(1.0 / p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FlowStatus {
    Active,
    Vanished,
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub u: SignedDistanceField,
    pub t: f64,
    pub params: FmcParams,
    /// Grid points with `|u| < ρ`.
    pub band: Vec<[usize; 2]>,
    pub status: FlowStatus,
    pub steps: usize,
}

impl FlowState {
    pub fn new(u: SignedDistanceField, params: FmcParams) -> Self {
        let band = u.band_points();
        let status = if band.is_empty() { FlowStatus::Vanished } else { FlowStatus::Active };
        Self { u, t: 0.0, params, band, status, steps: 0 }
    }

    pub fn front(&self) -> FrontCurve {
        extract_front(&self.u.field, 0.0)
    }
}

/// Narrow-band explicit scheme with exact redistancing from the extracted front after each step.
pub struct FmcSolver {
    pub params: FmcParams,
    curvature: CurvatureSolver,
    n: usize,
    spacing: f64,
}

/// Velocity is evaluated on nodes with `|u|` below this many cells; with displacement per step under
/// one cell these are the only nodes whose sign can change.
const VELOCITY_BAND_CELLS: f64 = 2.0;

impl FmcSolver {
    pub fn new(params: FmcParams, n: usize, box_len: f64) -> Result<Self> {
        let curvature = CurvatureSolver::new(params.order, n, box_len, params.mode())?;
        Ok(Self { params, curvature, n, spacing: box_len / n as f64 })
    }

    fn check_grid(&self, u: &SignedDistanceField) -> Result<()> {
        let (n0, n1) = u.field.n2();
        if n0 != self.n || n1 != self.n || (u.spacing() - self.spacing).abs() > 1e-12 * self.spacing {
            return Err(Error::Shape("flow solver built for a different grid".into()));
        }
        Ok(())
    }

    /// Nodes near the front and the normal speed `c₀κ` there.
    pub fn velocity(&self, u: &SignedDistanceField) -> Result<(Vec<[usize; 2]>, Vec<f64>)> {
        self.check_grid(u)?;
        let cut = VELOCITY_BAND_CELLS * self.spacing;
        let pts: Vec<[usize; 2]> = u
            .band_points()
            .into_iter()
            .filter(|&p| {
                let g = u.gradient(p);
                u.at(p).abs() < cut && g[0] * g[0] + g[1] * g[1] > 1e-12
            })
            .collect();
        let kappa = self.curvature.kappa(u, &pts)?;
        let speeds: Vec<f64> = kappa.into_iter().map(|k| self.params.c0 * k).collect();
        Ok((pts.clone(), smooth_band_values(u.field.n2(), &pts, &speeds)))
    }

    /// `cfl·h / max|c₀κ|`: the front moves at most `cfl` cells per step.
    pub fn stable_dt(&self, speeds: &[f64]) -> f64 {
        let vmax = speeds.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if vmax == 0.0 {
            f64::INFINITY
        } else {
            self.params.cfl * self.spacing / vmax
        }
    }

    /// One explicit Euler step of size `dt`.
    pub fn step(&self, state: &FlowState, dt: f64) -> Result<FlowState> {
        let (pts, speeds) = self.velocity(&state.u)?;
        self.apply(state, dt, &pts, &speeds)
    }

    /// One step at the largest admissible `dt`, returned with the new state.
    pub fn advance(&self, state: &FlowState) -> Result<(FlowState, f64)> {
        let (pts, speeds) = self.velocity(&state.u)?;
        let dt = self.stable_dt(&speeds);
        if !dt.is_finite() {
            return Err(Error::Solver("front is stationary; no natural time step".into()));
        }
        Ok((self.apply(state, dt, &pts, &speeds)?, dt))
    }

    fn apply(&self, state: &FlowState, dt: f64, pts: &[[usize; 2]], speeds: &[f64]) -> Result<FlowState> {
        if state.status == FlowStatus::Vanished {
            return Ok(state.clone());
        }
        let bound = self.stable_dt(speeds);
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, bound });
        }
        let u = &state.u;
        let mut next = u.field.clone();
        let n1 = u.field.shape[1];
        for (p, &v) in pts.iter().zip(speeds) {
            let g = upwind_gradient_norm(&u.field, *p, -v);
            next.data[p[0] * n1 + p[1]] += dt * v * g;
        }
        let front = extract_front(&next, 0.0);
        let mut out = FlowState { t: state.t + dt, steps: state.steps + 1, ..state.clone() };
        let closed = front.polylines.iter().all(|p| p.closed);
        if front.is_empty() || (closed && front.area() < self.spacing * self.spacing) {
            // the surviving phase is the one outside the vanishing loops
            let positive = if front.is_empty() {
                next.data[0] >= 0.0
            } else {
                front.polylines.iter().map(|p| p.signed_area()).sum::<f64>() < 0.0
            };
            let fill = if positive { 2.0 * u.rho } else { -2.0 * u.rho };
            out.u = SignedDistanceField { field: next.map(|_| fill), rho: u.rho };
            out.band.clear();
            out.status = FlowStatus::Vanished;
            return Ok(out);
        }
        out.u = redistance(&front, &next, u.rho)?;
        out.band = out.u.band_points();
        Ok(out)
    }
}

/// Separable `[1 4 6 4 1]/16` filter over the given nodes, renormalized where the stencil leaves
/// them. It removes the grid-scale modes that limit the explicit step while preserving values that
/// vary linearly along the stencil.
pub fn smooth_band_values(shape: (usize, usize), pts: &[[usize; 2]], vals: &[f64]) -> Vec<f64> {
    const W: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
    let (n0, n1) = shape;
    let mut grid = vec![f64::NAN; n0 * n1];
    for (p, &v) in pts.iter().zip(vals) {
        grid[p[0] * n1 + p[1]] = v;
    }
    let pass = |src: &[f64], axis: usize| -> Vec<f64> {
        let mut out = src.to_vec();
        for p in pts {
            let (mut sum, mut wsum) = (0.0, 0.0);
            for (o, w) in W.iter().enumerate() {
                let off = o as isize - 2;
                let (i, j) = if axis == 0 { (p[0] as isize + off, p[1] as isize) } else { (p[0] as isize, p[1] as isize + off) };
                if i < 0 || j < 0 || i as usize >= n0 || j as usize >= n1 {
                    continue;
                }
                let v = src[i as usize * n1 + j as usize];
                if !v.is_nan() {
                    sum += w * v;
                    wsum += w;
                }
            }
            out[p[0] * n1 + p[1]] = sum / wsum;
        }
        out
    };
    let grid = pass(&pass(&grid, 0), 1);
    pts.iter().map(|p| grid[p[0] * n1 + p[1]]).collect()
}

/// Exact signed distance to the extracted zero front, extended to ±2ρ.
pub fn redistance(front: &FrontCurve, sign_of: &crate::ScalarField, rho: f64) -> Result<SignedDistanceField> {
    let raw = distance_from_front(front, sign_of, 0.0, 2.0 * rho + sign_of.spacing);
    extend_distance(&raw, rho)
}

/// Godunov upwind `|∇u|` for `∂ₜu + V|∇u| = 0`.
pub fn upwind_gradient_norm(u: &crate::ScalarField, p: [usize; 2], v: f64) -> f64 {
    let (i, j) = (p[0] as isize, p[1] as isize);
    let h = u.spacing;
    let c = u.wrap2(i, j);
    let dxm = (c - u.wrap2(i - 1, j)) / h;
    let dxp = (u.wrap2(i + 1, j) - c) / h;
    let dym = (c - u.wrap2(i, j - 1)) / h;
    let dyp = (u.wrap2(i, j + 1) - c) / h;
    let sq = |a: f64| a * a;
    if v >= 0.0 {
        (sq(dxm.max(0.0)).max(sq(dxp.min(0.0))) + sq(dym.max(0.0)).max(sq(dyp.min(0.0)))).sqrt()
    } else {
        (sq(dxm.min(0.0)).max(sq(dxp.max(0.0))) + sq(dym.min(0.0)).max(sq(dyp.max(0.0)))).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CircleBenchmark {
    pub n: usize,
    pub r0: f64,
    /// (t, r_measured, r_exact)
    pub rows: Vec<(f64, f64, f64)>,
    /// R² of the affine fit of r^{1+2s} against t.
    pub r_squared: f64,
    pub extinction_fit: f64,
    pub extinction_exact: f64,
}

impl CircleBenchmark {
    pub fn extinction_error(&self) -> f64 {
        (self.extinction_fit / self.extinction_exact - 1.0).abs()
    }
}

/// Shrink a centered circle in the unit box until its measured radius falls to `until·r0`.
pub fn run_circle_benchmark(r0: f64, params: FmcParams, n: usize, until: f64) -> Result<CircleBenchmark> {
    let h = 1.0 / n as f64;
    if r0 < 15.0 * h {
        return Err(Error::Resolution(format!("radius {r0} spans fewer than 15 cells at n = {n}")));
    }
    if !(until > 0.0 && until < 1.0) {
        return Err(Error::Invalid(format!("stopping fraction {until} must lie in (0, 1)")));
    }
    let c = [0.5, 0.5];
    let u = signed_distance_circle(n, 1.0, c, r0, 0.0, DEFAULT_RHO_CELLS * h)?;
    let solver = FmcSolver::new(params, n, 1.0)?;
    let mut state = FlowState::new(u, params);
    let mut rows = vec![(0.0, state.front().mean_radius(c), r0)];
    while state.status == FlowStatus::Active {
        let (next, _) = solver.advance(&state)?;
        state = next;
        if state.status == FlowStatus::Vanished {
            break;
        }
        let r = state.front().mean_radius(c);
        rows.push((state.t, r, params.circle_radius(r0, state.t)));
        if r <= until * r0 {
            break;
        }
    }
    let p = 1.0 + 2.0 * params.order.s();
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(t, r, _)| (t, r.powf(p))).collect();
    let (slope, intercept) = linear_fit(&pts);
    let mean = pts.iter().map(|q| q.1).sum::<f64>() / pts.len() as f64;
    let ss_tot: f64 = pts.iter().map(|q| (q.1 - mean).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|q| (q.1 - slope * q.0 - intercept).powi(2)).sum();
    Ok(CircleBenchmark {
        n,
        r0,
        rows,
        r_squared: 1.0 - ss_res / ss_tot,
        extinction_fit: -intercept / slope,
        extinction_exact: params.extinction_time(r0),
    })
}

/// Which semicontinuous envelope of the nonlocal speed to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Envelope {
    /// `-c₀[ν(D ∩ {p·z < 0}) - ν(Dᶜ ∩ {p·z ≥ 0})]|p|`
    Upper,
    /// `-c₀[ν(D ∩ {p·z ≤ 0}) - ν(Dᶜ ∩ {p·z > 0})]|p|`
    Lower,
}

/// The nonlocal speed at `x` with gradient `p` for the region `D`, with ν the kernel measure of
/// `D - x` approximated by truncated cell sums with the indicator sampled at cell centers.
pub fn f_star_eval(
    x: [f64; 2],
    p: [f64; 2],
    region: impl Fn([f64; 2]) -> bool,
    params: &FmcParams,
    weights: &KernelWeights,
    envelope: Envelope,
) -> f64 {
    let pn = (p[0] * p[0] + p[1] * p[1]).sqrt();
    if pn == 0.0 {
        return 0.0;
    }
    let h = weights.spacing;
    let mut inside = 0.0;
    let mut outside = 0.0;
    for (z, w) in weights.entries() {
        let dot = p[0] * z[0] as f64 + p[1] * z[1] as f64;
        let y = [x[0] + z[0] as f64 * h, x[1] + z[1] as f64 * h];
        let d = region(y);
        let (neg, nonneg) = match envelope {
            Envelope::Upper => (dot < 0.0, dot >= 0.0),
            Envelope::Lower => (dot <= 0.0, dot > 0.0),
        };
        if d && neg {
            inside += w;
        }
        if !d && nonneg {
            outside += w;
        }
    }
    -params.c0 * (inside - outside) * pn
}

//! The stationary layer φ of the 1D nonlocal problem, the constant c₀ = (∫φ̇²)^{-1},
//! and the corrector ψ̃ solving the linearized equation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fracops::{FracOrder, Operator1D};
use crate::profile1d::{Profile1D, Tail};

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A double-well potential on [0, 1] with wells at 0 and 1.
#[derive(Clone)]
pub struct DoubleWell {
    pub name: String,
    w: Scalar,
    dw: Scalar,
    d2w: Scalar,
    /// α = W''(0) = W''(1).
    pub well_curvature: f64,
}

impl fmt::Debug for DoubleWell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DoubleWell").field("name", &self.name).field("well_curvature", &self.well_curvature).finish()
    }
}

impl DoubleWell {
    /// `W(u) = k/2 · u²(1-u)²`; `k = 1` is the default well.
    pub fn quartic(k: f64) -> Result<Self> {
        Self::custom(
            &format!("quartic(k={k})"),
            move |u| 0.5 * k * u * u * (1.0 - u) * (1.0 - u),
            move |u| k * u * (1.0 - u) * (1.0 - 2.0 * u),
            move |u| k * (1.0 - 6.0 * u + 6.0 * u * u),
        )
    }

    pub fn standard() -> Self {
        Self::quartic(1.0).expect("the default well satisfies its own checks")
    }

    /// Build from evaluators and verify the structural hypotheses by sampling.
    pub fn custom(
        name: &str,
        w: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dw: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2w: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let alpha = d2w(0.0);
        let well = Self { name: name.to_string(), w: Arc::new(w), dw: Arc::new(dw), d2w: Arc::new(d2w), well_curvature: alpha };
        well.validate()?;
        Ok(well)
    }

    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let tol = 1e-12;
        if self.w(0.0).abs() > tol || self.w(1.0).abs() > tol {
            problems.push("W must vanish at 0 and 1".to_string());
        }
        if self.dw(0.0).abs() > tol || self.dw(1.0).abs() > tol {
            problems.push("W' must vanish at 0 and 1".to_string());
        }
        let (a0, a1) = (self.d2w(0.0), self.d2w(1.0));
        if !(a0 > 0.0) || (a0 - a1).abs() > tol * a0.max(1.0) {
            problems.push(format!("need W''(0) = W''(1) > 0, got {a0} and {a1}"));
        }
        if (1..1000).map(|k| k as f64 / 1000.0).any(|u| !(self.w(u) > 0.0)) {
            problems.push("W must be positive on (0, 1)".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn w(&self, u: f64) -> f64 {
        (self.w)(u)
    }

    pub fn dw(&self, u: f64) -> f64 {
        (self.dw)(u)
    }

    pub fn d2w(&self, u: f64) -> f64 {
        (self.d2w)(u)
    }

    pub fn d3w(&self, u: f64) -> f64 {
        let h = 1e-4;
        (self.d2w(u + h) - self.d2w(u - h)) / (2.0 * h)
    }

    /// `max_{[0,1]} W''`, the stabilizer used by the semi-implicit scheme.
    pub fn max_curvature(&self) -> f64 {
        (0..=1000).map(|k| self.d2w(k as f64 / 1000.0)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether `W(u) = W(1-u)`, in which case the layer is odd about (0, ½).
    pub fn is_symmetric(&self) -> bool {
        (0..=200).map(|k| k as f64 / 200.0).all(|u| (self.w(u) - self.w(1.0 - u)).abs() <= 1e-14 * (1.0 + self.w(u)))
    }
}

/// Nonuniform layer grid `ξ = a·sinh(η)` with uniform η on [-asinh(L/a), asinh(L/a)].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGrid {
    pub half_width: f64,
    pub points: usize,
    pub stretch: f64,
}

impl Default for LayerGrid {
    fn default() -> Self {
        Self { half_width: 4e6, points: 901, stretch: 20.0 }
    }
}

impl LayerGrid {
    pub fn nodes(&self) -> Result<Vec<f64>> {
        if self.half_width < 20.0 {
            return Err(Error::Invalid(format!("grid half-width {} must be at least 20", self.half_width)));
        }
        if self.points < 9 || self.points % 2 == 0 {
            return Err(Error::Invalid("the layer grid needs an odd number (≥ 9) of points".into()));
        }
        let top = (self.half_width / self.stretch).asinh();
        let n = self.points;
        let mid = n / 2;
        let mut xi: Vec<f64> = (0..n).map(|k| self.stretch * (top * (2.0 * k as f64 / (n - 1) as f64 - 1.0)).sinh()).collect();
        xi[mid] = 0.0;
        for k in 0..mid {
            xi[k] = -xi[n - 1 - k];
        }
        Ok(xi)
    }

    /// dξ/dη at the nodes, and the uniform η spacing.
    fn jacobian(&self) -> (Vec<f64>, f64) {
        let top = (self.half_width / self.stretch).asinh();
        let n = self.points;
        let d_eta = 2.0 * top / (n - 1) as f64;
        let jac = (0..n).map(|k| self.stretch * (-top + k as f64 * d_eta).cosh()).collect();
        (jac, d_eta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailFit {
    /// Fitted decay exponent of 1-φ on [L/4, L] (expected 2s).
    pub exponent: f64,
    /// Range of (1-φ)ξ^{2s} on [L/2, L].
    pub coefficient_range: (f64, f64),
    /// C_{n,s}/(2sW''(0)).
    pub predicted_coefficient: f64,
    /// Range of φ̇ ξ^{1+2s} on [L/4, L].
    pub derivative_scaled_range: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct LayerSolution {
    pub phi: Profile1D,
    pub phi_dot: Profile1D,
    pub grid: LayerGrid,
    pub c_ns: f64,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub operator: Operator1D,
}

impl LayerSolution {
    pub fn s(&self) -> f64 {
        self.phi.s
    }

    /// Quadrature weights on the layer grid (composite Simpson in η).
    pub fn weights(&self) -> Vec<f64> {
        let (jac, d_eta) = self.grid.jacobian();
        simpson_weights(jac.len(), d_eta).into_iter().zip(jac).map(|(w, j)| w * j).collect()
    }

    /// `∫ f(ξ) dξ` over [-L, L].
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights().iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// `∫_R φ̇ dξ`: interior quadrature plus the algebraic tails.
    pub fn phi_dot_integral(&self) -> f64 {
        let tails = tail_mass(&self.phi);
        self.integrate(&self.phi_dot.values) + tails
    }

    pub fn tail_fit(&self, well: &DoubleWell) -> TailFit {
        let s = self.s();
        let xi = &self.phi.xi;
        let l = *xi.last().unwrap();
        let pts: Vec<(f64, f64)> = xi
            .iter()
            .zip(&self.phi.values)
            .filter(|(&x, _)| x >= l / 4.0)
            .map(|(&x, &v)| (x.ln(), (1.0 - v).ln()))
            .collect();
        let exponent = -linear_fit(&pts).0;
        let coef: Vec<f64> = xi
            .iter()
            .zip(&self.phi.values)
            .filter(|(&x, _)| x >= l / 2.0)
            .map(|(&x, &v)| (1.0 - v) * x.powf(2.0 * s))
            .collect();
        let deriv: Vec<f64> = xi
            .iter()
            .zip(&self.phi_dot.values)
            .filter(|(&x, _)| x >= l / 4.0)
            .map(|(&x, &v)| v * x.powf(1.0 + 2.0 * s))
            .collect();
        TailFit {
            exponent,
            coefficient_range: min_max(&coef),
            predicted_coefficient: self.c_ns / (2.0 * s * well.well_curvature),
            derivative_scaled_range: min_max(&deriv),
        }
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Least-squares slope and intercept.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n % 2 == 1);
    (0..n)
        .map(|k| {
            let c = if k == 0 || k == n - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

/// `∫` of the derivative over both algebraic tails: the jumps from the end values to the limits.
fn tail_mass(p: &Profile1D) -> f64 {
    let n = p.values.len();
    let right = p.right.and_then(|t| t.limit()).map_or(0.0, |a| a - p.values[n - 1]);
    let left = p.left.and_then(|t| t.limit()).map_or(0.0, |a| p.values[0] - a);
    right + left
}

/// Solve `C_{n,s} I₁φ = W'(φ)`, φ(-∞)=0, φ(∞)=1, φ(0)=½, by damped Newton iteration on the layer grid.
///
/// Outside [-L, L] the profile follows `H(ξ) + b ξ|ξ|^{-2s-1}`, with `b` fixed by continuity at ±L.
pub fn solve_layer(well: &DoubleWell, order: FracOrder, c_ns: f64, grid: LayerGrid) -> Result<LayerSolution> {
    let s = order.s();
    let xi = grid.nodes()?;
    let n = xi.len();
    let op = Operator1D::assemble(&xi, s, false)?;
    let (l0, l1) = (-xi[0], xi[n - 1]);
    let mut a = DMatrix::from_row_slice(n, n, &op.matrix);
    let mut c = DVector::zeros(n);
    // left: a = 0, b = -u_0 L0^{2s};  right: a = 1, b = (u_N - 1) L^{2s}
    for i in 0..n {
        a[(i, 0)] += -l0.powf(2.0 * s) * op.left.power[i];
        a[(i, n - 1)] += l1.powf(2.0 * s) * op.right.power[i];
        c[i] = op.right.limit[i] - l1.powf(2.0 * s) * op.right.power[i];
    }
    a *= c_ns;
    c *= c_ns;
    let symmetric = well.is_symmetric();
    let residual = |u: &DVector<f64>| -> DVector<f64> {
        let mut r = &a * u + &c;
        for i in 0..n {
            r[i] -= well.dw(u[i]);
        }
        r
    };
    let symmetrize = |u: &mut DVector<f64>| {
        if symmetric {
            let v = u.clone();
            for i in 0..n {
                u[i] = 0.5 * (v[i] + 1.0 - v[n - 1 - i]);
            }
        }
    };
    let width = 300.0f64.min(0.1 * l1);
    let mut u = DVector::from_iterator(n, xi.iter().map(|&x| 0.5 + (x / width).atan() / std::f64::consts::PI));
    symmetrize(&mut u);
    let mut r = residual(&u);
    let mut history = vec![r.amax()];
    for _ in 0..100 {
        if r.amax() < 1e-12 {
            break;
        }
        let mut jac = a.clone();
        for i in 0..n {
            jac[(i, i)] -= well.d2w(u[i]);
        }
        let du = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::Solver("singular Jacobian in the layer solve".into()))?;
        let current = r.amax();
        let mut step = 1.0;
        loop {
            let mut trial = &u + step * &du;
            symmetrize(&mut trial);
            let rt = residual(&trial);
            if rt.amax() < current || step < 1e-4 {
                u = trial;
                r = rt;
                break;
            }
            step *= 0.5;
        }
        history.push(r.amax());
        let k = history.len();
        if k > 12 && history[k - 1] > 0.9 * history[k - 11] && history[k - 1] > 1e-8 {
            return Err(Error::Solver(format!("layer residual stagnated: {history:?}")));
        }
    }
    let res = r.amax();
    if res > 1e-8 {
        return Err(Error::Solver(format!("layer residual {res:e} above 1e-8: {history:?}")));
    }
    let mut values: Vec<f64> = u.iter().copied().collect();
    if let Some(k) = values.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Solver(format!("layer iterate is not monotone at node {k}")));
    }
    if !symmetric {
        values = recenter(&xi, &values, s)?;
    }
    let left = Tail::Algebraic { a: 0.0, b: -values[0] * l0.powf(2.0 * s) };
    let right = Tail::Algebraic { a: 1.0, b: (values[n - 1] - 1.0) * l1.powf(2.0 * s) };
    let phi = Profile1D::new(xi.clone(), values, left, right, s)?;
    let phi_dot = differentiate(&phi, &grid)?;
    Ok(LayerSolution { phi, phi_dot, grid, c_ns, residual: res, residual_history: history, operator: op })
}

/// Translate so that the ½-crossing sits at ξ = 0, by monotone re-interpolation on the same grid.
fn recenter(xi: &[f64], values: &[f64], s: f64) -> Result<Vec<f64>> {
    let n = xi.len();
    let (l0, l1) = (-xi[0], xi[n - 1]);
    let left = Tail::Algebraic { a: 0.0, b: -values[0] * l0.powf(2.0 * s) };
    let right = Tail::Algebraic { a: 1.0, b: (values[n - 1] - 1.0) * l1.powf(2.0 * s) };
    let p = Profile1D::new(xi.to_vec(), values.to_vec(), left, right, s)?;
    let shift = p.crossing(0.5).ok_or_else(|| Error::Solver("layer does not cross ½".into()))?;
    let slopes = p.pchip_slopes();
    let mut out: Vec<f64> = xi.iter().map(|&x| p.eval_with(x + shift, &slopes)).collect();
    out[n / 2] = 0.5;
    Ok(out)
}

/// φ̇ by sixth-order differences in the stretched coordinate, analytic tail derivative at the ends.
fn differentiate(phi: &Profile1D, grid: &LayerGrid) -> Result<Profile1D> {
    let (jac, d_eta) = grid.jacobian();
    let v = &phi.values;
    let n = v.len();
    let s = phi.s;
    const C6: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    const F6: [[f64; 7]; 3] = [
        [-49.0 / 20.0, 6.0, -15.0 / 2.0, 20.0 / 3.0, -15.0 / 4.0, 6.0 / 5.0, -1.0 / 6.0],
        [-1.0 / 6.0, -77.0 / 60.0, 5.0 / 2.0, -5.0 / 3.0, 5.0 / 6.0, -1.0 / 4.0, 1.0 / 30.0],
        [1.0 / 30.0, -2.0 / 5.0, -7.0 / 12.0, 4.0 / 3.0, -1.0 / 2.0, 2.0 / 15.0, -1.0 / 60.0],
    ];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let deta = if i >= 3 && i + 3 < n {
            (1..=3).map(|k| C6[k - 1] * (v[i + k] - v[i - k])).sum::<f64>()
        } else if i < 3 {
            (0..7).map(|k| F6[i][k] * v[k]).sum::<f64>()
        } else {
            let j = n - 1 - i;
            -(0..7).map(|k| F6[j][k] * v[n - 1 - k]).sum::<f64>()
        };
        d[i] = deta / d_eta / jac[i];
    }
    let bl = phi.left.map_or(0.0, |t| t.power_coefficient());
    let br = phi.right.map_or(0.0, |t| t.power_coefficient());
    d[0] = -2.0 * s * bl * (-phi.xi[0]).powf(-2.0 * s - 1.0);
    d[n - 1] = -2.0 * s * br * phi.xi[n - 1].powf(-2.0 * s - 1.0);
    Profile1D::new(phi.xi.clone(), d, Tail::Constant(0.0), Tail::Constant(0.0), s)
}

/// `c₀ = (∫ φ̇² dξ)^{-1}`, interior quadrature plus closed-form tail integrals.
pub fn compute_c0(layer: &LayerSolution) -> Result<f64> {
    let s = layer.s();
    let sq: Vec<f64> = layer.phi_dot.values.iter().map(|v| v * v).collect();
    let n = sq.len();
    let xi = &layer.phi.xi;
    let tail = |b: f64, l: f64| 4.0 * s * s * b * b * l.powf(-1.0 - 4.0 * s) / (1.0 + 4.0 * s);
    let bl = layer.phi.left.map_or(0.0, |t| t.power_coefficient());
    let br = layer.phi.right.map_or(0.0, |t| t.power_coefficient());
    let total = layer.integrate(&sq) + tail(bl, -xi[0]) + tail(br, xi[n - 1]);
    if !(total > 0.0) {
        return Err(Error::Solver(format!("∫φ̇² = {total} is not positive")));
    }
    Ok(1.0 / total)
}

/// `g = c₀φ̇ + (W''(φ) - W''(0))/W''(0)`, with algebraic tails from the linearization of W'' at the wells.
pub fn corrector_rhs(layer: &LayerSolution, well: &DoubleWell, c0: f64) -> Profile1D {
    let alpha = well.well_curvature;
    let values: Vec<f64> = layer
        .phi
        .values
        .iter()
        .zip(&layer.phi_dot.values)
        .map(|(&p, &d)| c0 * d + (well.d2w(p) - alpha) / alpha)
        .collect();
    let bl = layer.phi.left.map_or(0.0, |t| t.power_coefficient());
    let br = layer.phi.right.map_or(0.0, |t| t.power_coefficient());
    // W''(φ) - α ≈ W'''(0)φ on the left (φ ≈ -b_L|ξ|^{-2s}) and W'''(1)(φ-1) on the right
    let left = Tail::Algebraic { a: 0.0, b: well.d3w(0.0) * bl / alpha };
    let right = Tail::Algebraic { a: 0.0, b: well.d3w(1.0) * br / alpha };
    layer.phi.with_values(values, left, right)
}

#[derive(Clone, Debug)]
pub struct CorrectorProfile {
    pub psi_tilde: Profile1D,
    pub residual_norm: f64,
    pub orthogonality_defect: f64,
    /// Multiplier of the kernel direction in the bordered solve.
    pub kernel_multiplier: f64,
}

/// Discrete linearized operator `L[v] = -C I₁v + W''(φ)v` acting on samples whose tails are
/// `b ξ|ξ|^{-2s-1}` continued from the end values.
pub fn linearized_matrix(layer: &LayerSolution, well: &DoubleWell) -> DMatrix<f64> {
    let op = &layer.operator;
    let n = op.n;
    let s = layer.s();
    let xi = &layer.phi.xi;
    let (l0, l1) = (-xi[0], xi[n - 1]);
    let mut a = DMatrix::from_row_slice(n, n, &op.matrix);
    for i in 0..n {
        a[(i, 0)] += -l0.powf(2.0 * s) * op.left.power[i];
        a[(i, n - 1)] += l1.powf(2.0 * s) * op.right.power[i];
    }
    let mut lin = -layer.c_ns * a;
    for i in 0..n {
        lin[(i, i)] += well.d2w(layer.phi.values[i]);
    }
    lin
}

/// Weights `k` with `∫ v φ̇ dξ ≈ Σ k_i v_i` for samples `v` continued by `b ξ|ξ|^{-2s-1}` beyond ±L.
pub fn kernel_weights(layer: &LayerSolution) -> Vec<f64> {
    let s = layer.s();
    let xi = &layer.phi.xi;
    let n = xi.len();
    let mut k: Vec<f64> = layer.weights().iter().zip(&layer.phi_dot.values).map(|(w, d)| w * d).collect();
    // ∫_L^∞ (L/ξ)^{2s} · 2s|b|ξ^{-1-2s} dξ = |b| L^{-2s} / 2
    let bl = layer.phi.left.map_or(0.0, |t| t.power_coefficient());
    let br = layer.phi.right.map_or(0.0, |t| t.power_coefficient());
    k[0] += 0.5 * bl.abs() * (-xi[0]).powf(-2.0 * s);
    k[n - 1] += 0.5 * br.abs() * xi[n - 1].powf(-2.0 * s);
    k
}

/// Solve `L[ψ] = g` subject to `∫ψφ̇ = 0`.
///
/// The component of `g` along φ̇ that leaves the discrete range (measured by the left null vector of
/// the discrete operator) is removed first, so `g` and `g + εφ̇` give the same ψ.
pub fn solve_linearized(layer: &LayerSolution, well: &DoubleWell, rhs: &[f64]) -> Result<CorrectorProfile> {
    let n = rhs.len();
    let s = layer.s();
    let pd = DVector::from_column_slice(&layer.phi_dot.values);
    let k = DVector::from_vec(kernel_weights(layer));
    let lin = linearized_matrix(layer, well);
    let singular = |m: &DMatrix<f64>| {
        let sv = m.singular_values();
        Error::Solver(format!("singular corrector system, smallest singular value {:e}", sv.min()))
    };
    // left null vector: Lᵀz + νk = 0, φ̇ᵀz = 1
    let mut adj = DMatrix::zeros(n + 1, n + 1);
    adj.view_mut((0, 0), (n, n)).copy_from(&lin.transpose());
    for i in 0..n {
        adj[(i, n)] = k[i];
        adj[(n, i)] = pd[i];
    }
    let mut e = DVector::zeros(n + 1);
    e[n] = 1.0;
    let z = adj.clone().lu().solve(&e).ok_or_else(|| singular(&adj))?.rows(0, n).into_owned();
    let g = DVector::from_column_slice(rhs);
    let g_range = &g - z.dot(&g) * &pd;
    let mut big = DMatrix::zeros(n + 1, n + 1);
    big.view_mut((0, 0), (n, n)).copy_from(&lin);
    for i in 0..n {
        big[(i, n)] = z[i];
        big[(n, i)] = k[i];
    }
    let mut b = DVector::zeros(n + 1);
    b.rows_mut(0, n).copy_from(&g_range);
    let sol = big.clone().lu().solve(&b).ok_or_else(|| singular(&big))?;
    let mut psi = sol.rows(0, n).into_owned();
    let drift = k.dot(&psi) / k.dot(&pd);
    psi -= drift * &pd;
    let residual_norm = (&lin * &psi - &g).amax();
    let orthogonality_defect = k.dot(&psi).abs();
    let xi = &layer.phi.xi;
    let (l0, l1) = (-xi[0], xi[n - 1]);
    let left = Tail::Algebraic { a: 0.0, b: -psi[0] * l0.powf(2.0 * s) };
    let right = Tail::Algebraic { a: 0.0, b: psi[n - 1] * l1.powf(2.0 * s) };
    Ok(CorrectorProfile {
        psi_tilde: layer.phi.with_values(psi.iter().copied().collect(), left, right),
        residual_norm,
        orthogonality_defect,
        kernel_multiplier: sol[n],
    })
}

/// The corrector ψ̃ solving `L[ψ̃] = g` for the layer's own right-hand side.
pub fn solve_corrector(layer: &LayerSolution, well: &DoubleWell, c0: f64) -> Result<CorrectorProfile> {
    let defect = solvability_defect(layer, well, c0);
    if defect > 1e-6 {
        return Err(Error::Solver(format!("corrector right-hand side violates solvability: ∫gφ̇ = {defect:e}")));
    }
    solve_linearized(layer, well, &corrector_rhs(layer, well, c0).values)
}

/// `∫ g φ̇ dξ` over R for `g = corrector_rhs(..)`: interior quadrature plus exact tail integrals
/// (`∫c₀φ̇²` in closed form and `∫(W''(φ)-α)φ̇ = [W'(φ) - αφ]` by substitution).
pub fn solvability_defect(layer: &LayerSolution, well: &DoubleWell, c0: f64) -> f64 {
    let s = layer.s();
    let alpha = well.well_curvature;
    let g = corrector_rhs(layer, well, c0);
    let prod: Vec<f64> = g.values.iter().zip(&layer.phi_dot.values).map(|(a, b)| a * b).collect();
    let xi = &layer.phi.xi;
    let v = &layer.phi.values;
    let n = xi.len();
    let sq = |b: f64, l: f64| 4.0 * s * s * b * b * l.powf(-1.0 - 4.0 * s) / (1.0 + 4.0 * s);
    let prim = |u: f64| well.dw(u) - alpha * u;
    let bl = layer.phi.left.map_or(0.0, |t| t.power_coefficient());
    let br = layer.phi.right.map_or(0.0, |t| t.power_coefficient());
    let left = c0 * sq(bl, -xi[0]) + (prim(v[0]) - prim(0.0)) / alpha;
    let right = c0 * sq(br, xi[n - 1]) + (prim(1.0) - prim(v[n - 1])) / alpha;
    (layer.integrate(&prod) + left + right).abs()
}

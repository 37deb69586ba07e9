//! Signed distance functions and their bounded extension, fractional mean curvature, and front
//! extraction on 2D grids.

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::field::{freq_index, Fft2, ScalarField};
use crate::fracops::{unit_cell_weight_2d, unit_square_exterior_mass, FracOrder, KernelWeights, PeriodicKernel2D};
use crate::quad::GaussRule;

/// Default smoothness band half-width, in grid cells.
pub const DEFAULT_RHO_CELLS: f64 = 6.0;

fn clamp_index(y: isize, n: usize) -> (usize, bool) {
    (y.clamp(0, n as isize - 1) as usize, y >= 0 && (y as usize) < n)
}

/// Gradient of the continuation past the window: constant along each clamped axis.
fn continued(g: [f64; 2], in_i: bool, in_j: bool) -> [f64; 2] {
    [if in_i { g[0] } else { 0.0 }, if in_j { g[1] } else { 0.0 }]
}

/// `6t⁵ - 15t⁴ + 10t³` clamped to [0, 1].
pub fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// An extended signed distance, positive inside, clamped to ±2ρ away from the front.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedDistanceField {
    pub field: ScalarField,
    pub rho: f64,
}

impl SignedDistanceField {
    pub fn clamp_level(&self) -> f64 {
        2.0 * self.rho
    }

    pub fn n(&self) -> usize {
        self.field.shape[0]
    }

    pub fn spacing(&self) -> f64 {
        self.field.spacing
    }

    pub fn at(&self, idx: [usize; 2]) -> f64 {
        self.field.at2(idx[0], idx[1])
    }

    pub fn gradient(&self, idx: [usize; 2]) -> [f64; 2] {
        self.field.gradient2(idx[0], idx[1])
    }

    /// Grid points with `|d| < ρ`.
    pub fn band_points(&self) -> Vec<[usize; 2]> {
        let (n0, n1) = self.field.n2();
        (0..n0)
            .flat_map(|i| (0..n1).map(move |j| [i, j]))
            .filter(|&[i, j]| self.field.at2(i, j).abs() < self.rho)
            .collect()
    }

    /// Band points whose difference stencils stay inside `|d| < ρ`: `|d| < ρ - 2h`.
    pub fn inner_band_points(&self) -> Vec<[usize; 2]> {
        let cut = self.rho - 2.0 * self.spacing();
        self.band_points().into_iter().filter(|&p| self.at(p).abs() < cut).collect()
    }

    /// The same field with the sign flipped (the complementary set).
    pub fn complement(&self) -> Self {
        Self { field: self.field.map(|v| -v), rho: self.rho }
    }

    /// Maximum of `||∇d| - 1|` over the inner band.
    pub fn eikonal_defect(&self) -> f64 {
        self.inner_band_points()
            .into_iter()
            .map(|p| {
                let g = self.gradient(p);
                ((g[0] * g[0] + g[1] * g[1]).sqrt() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Blend a raw signed distance into `d̃η + 2ρ(1-η)` (and its negative counterpart), with η a quintic
/// smoothstep equal to 1 on `|d̃| ≤ ρ` and 0 on `|d̃| ≥ 2ρ`.
pub fn extend_distance(raw: &ScalarField, rho: f64) -> Result<SignedDistanceField> {
    if !(rho > 2.0 * raw.spacing) {
        return Err(Error::Resolution(format!("band half-width {rho} must exceed two cells ({})", 2.0 * raw.spacing)));
    }
    let field = raw.map(|v| {
        let eta = 1.0 - smoothstep5((v.abs() - rho) / rho);
        v * eta + 2.0 * rho * v.signum() * (1.0 - eta)
    });
    Ok(SignedDistanceField { field, rho })
}

/// `r - offset - |x - center|` sampled on an n×n grid of side `box_len`.
pub fn raw_circle_distance(n: usize, box_len: f64, center: [f64; 2], radius: f64, offset: f64) -> ScalarField {
    ScalarField::from_fn2(n, box_len, |x, y| radius - offset - ((x - center[0]).powi(2) + (y - center[1]).powi(2)).sqrt())
}

/// The extended signed distance of the disk of radius `radius - offset`.
pub fn signed_distance_circle(
    n: usize,
    box_len: f64,
    center: [f64; 2],
    radius: f64,
    offset: f64,
    rho: f64,
) -> Result<SignedDistanceField> {
    let r = radius - offset;
    let margin = [center[0] - r, box_len - center[0] - r, center[1] - r, box_len - center[1] - r]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if !(r > 0.0) || margin < 4.0 * rho {
        return Err(Error::Invalid(format!("circle of radius {r} leaves margin {margin} < 4ρ = {}", 4.0 * rho)));
    }
    extend_distance(&raw_circle_distance(n, box_len, center, radius, offset), rho)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvaturePair {
    pub kappa_plus: f64,
    pub kappa_minus: f64,
    pub kappa: f64,
    pub tail_error_bound: f64,
}

/// Area fraction of the unit cell on the side `n·ζ < c` of a line with unit normal `n`.
pub fn cell_fraction(n: [f64; 2], c: f64) -> f64 {
    let (a, b) = {
        let (x, y) = (n[0].abs(), n[1].abs());
        if x >= y {
            (x, y)
        } else {
            (y, x)
        }
    };
    let e = 0.5 * (a + b);
    if c <= -e {
        return 0.0;
    }
    if c >= e {
        return 1.0;
    }
    let u = c + e;
    if b < 1e-12 {
        return (u / a).clamp(0.0, 1.0);
    }
    if u <= b {
        u * u / (2.0 * a * b)
    } else if u <= a {
        (u - 0.5 * b) / a
    } else {
        let v = a + b - u;
        1.0 - v * v / (2.0 * a * b)
    }
}

/// Fraction of the cell centered at a node with value `dy` and gradient `gy` where the linearized
/// field exceeds `level`.
fn level_fraction(dy: f64, gy: [f64; 2], level: f64, h: f64) -> f64 {
    let g = (gy[0] * gy[0] + gy[1] * gy[1]).sqrt();
    let diff = dy - level;
    if g == 0.0 || 0.5 * h * (gy[0].abs() + gy[1].abs()) <= diff.abs() {
        return if diff > 0.0 { 1.0 } else { 0.0 };
    }
    cell_fraction([gy[0] / g, gy[1] / g], diff / (g * h))
}

/// Half-width in cells of the square around the target handled by the local quadratic model.
const NEAR_CELLS: i64 = 3;
/// Half-width in cells of the square summed directly per point; the FFT handles the rest.
const RING_CELLS: i64 = 12;

/// Contribution of `|z|_∞ ≤ (m+½)h` from the quadratic model `p·z + ½zᵀHz` of the field:
/// the thin region between the level curve and the tangent line, as (κ⁺, κ⁻).
fn near_cusp(p: [f64; 2], hess: [f64; 3], h: f64, s: f64) -> (f64, f64) {
    let pn = (p[0] * p[0] + p[1] * p[1]).sqrt();
    let nn = [p[0] / pn, p[1] / pn];
    let tt = [-nn[1], nn[0]];
    let quad = |u: [f64; 2], v: [f64; 2]| u[0] * (hess[0] * v[0] + hess[1] * v[1]) + u[1] * (hess[1] * v[0] + hess[2] * v[1]);
    let (a, b, c) = (quad(tt, tt), quad(tt, nn), quad(nn, nn));
    let half = (NEAR_CELLS as f64 + 0.5) * h;
    let t_max = half / tt[0].abs().max(tt[1].abs());
    // g(t): the root near 0 of (c/2)ν² + (|p| + bt)ν + (a/2)t² = 0
    let g = |t: f64| {
        let lin = pn + b * t;
        let disc = (lin * lin - c * a * t * t).max(0.0);
        -a * t * t / (lin + disc.sqrt())
    };
    let inner = GaussRule::new(6);
    let outer = GaussRule::new(24);
    // t = ±t_max u^q with q = 1/(1-2s) removes the |t|^{-2s} endpoint behaviour
    let q = 1.0 / (1.0 - 2.0 * s);
    let (mut plus, mut minus) = (0.0, 0.0);
    for sign in [-1.0, 1.0] {
        for (u, wu) in outer.mapped(0.0, 1.0) {
            let t = sign * t_max * u.powf(q);
            let jac = t_max * q * u.powf(q - 1.0);
            let gt = g(t);
            let y = gt / t.abs();
            // ∫_0^g (t²+ν²)^{-1-s} dν = |t|^{-1-2s} ∫_0^{g/|t|} (1+w²)^{-1-s} dw
            let val = t.abs().powf(-1.0 - 2.0 * s) * inner.integrate(|w| (1.0 + w * w).powf(-1.0 - s), 0.0, y);
            if val < 0.0 {
                plus -= wu * jac * val;
            } else {
                minus += wu * jac * val;
            }
        }
    }
    (plus, minus)
}

fn check_target(d: &SignedDistanceField, idx: [usize; 2]) -> Result<[f64; 2]> {
    let v = d.at(idx);
    if v.abs() >= d.rho {
        return Err(Error::Invalid(format!("point {idx:?} with d = {v} lies outside the smooth band")));
    }
    let p = d.gradient(idx);
    if p[0] * p[0] + p[1] * p[1] < 1e-24 {
        return Err(Error::Invalid(format!("zero gradient at {idx:?}")));
    }
    Ok(p)
}

fn gradients(f: &ScalarField) -> Vec<[f64; 2]> {
    let (n0, n1) = f.n2();
    (0..n0 * n1).into_par_iter().map(|k| f.gradient2(k / n1, k % n1)).collect()
}

/// κ⁺, κ⁻ and κ at a band point by direct summation over the truncated kernel weights, with the
/// level set and the tangent half-plane resolved by linearized area fractions in each cell. Outside
/// the sample window the field is continued by its nearest boundary value.
///
/// The neglected exterior `|z| > r_max` is bounded by `∫_{|z|>r_max} |z|^{-2-2s} dz`.
pub fn kappa_at(d: &SignedDistanceField, idx: [usize; 2], weights: &KernelWeights) -> Result<CurvaturePair> {
    if weights.order.n() != 2 {
        return Err(Error::Invalid("curvature is evaluated in two dimensions".into()));
    }
    let f = &d.field;
    let (n0, n1) = f.n2();
    let h = f.spacing;
    if (weights.spacing - h).abs() > 1e-12 * h {
        return Err(Error::Shape("kernel weights built for a different spacing".into()));
    }
    let p = check_target(d, idx)?;
    let s = weights.order.s();
    let level = d.at(idx);
    let pn = (p[0] * p[0] + p[1] * p[1]).sqrt();
    let nh = [p[0] / pn, p[1] / pn];
    let (mut plus, mut minus) = near_cusp(p, f.hessian2(idx[0], idx[1]), h, s);
    let (ci, cj) = (idx[0] as isize, idx[1] as isize);
    let (sum_p, sum_m) = weights
        .entries()
        .par_iter()
        .filter(|(z, _)| z[0].abs() as i64 > NEAR_CELLS || z[1].abs() as i64 > NEAR_CELLS)
        .map(|(z, w)| {
            let (yi, yj) = (ci + z[0], cj + z[1]);
            let (ki, in_i) = clamp_index(yi, n0);
            let (kj, in_j) = clamp_index(yj, n1);
            let fa = level_fraction(f.at2(ki, kj), continued(f.gradient2(ki, kj), in_i, in_j), level, h);
            let fh = cell_fraction(nh, z[0] as f64 * nh[0] + z[1] as f64 * nh[1]);
            (w * (fa - fh).max(0.0), w * (fh - fa).max(0.0))
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    plus += sum_p;
    minus += sum_m;
    let tail = std::f64::consts::PI / s * weights.r_max.powf(-2.0 * s);
    Ok(CurvaturePair { kappa_plus: plus, kappa_minus: minus, kappa: plus - minus, tail_error_bound: tail })
}

/// How the far field of the curvature integral is closed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum KernelMode {
    /// The grid is a window of R², continued by its nearest boundary values out to half a window and
    /// by the mean boundary phase beyond.
    Free,
    /// The grid is a torus; the set repeats periodically.
    Periodic,
    /// Offsets restricted to `|z| < R ≤ box/2`, the window continued by nearest boundary values.
    Truncated(f64),
}

/// Batched curvature evaluation by FFT: κ(x) = near cusp + Σ_{far} w(z)|A_ℓ ∩ cell(x+z)| - ½∫_{far}K at
/// ℓ = d(x), with the far convolution tabulated on a ladder of levels and interpolated to d(x).
pub struct CurvatureSolver {
    pub order: FracOrder,
    pub mode: KernelMode,
    pub n: usize,
    pub spacing: f64,
    size: usize,
    ring: Vec<(isize, isize, f64)>,
    kernel_hat: Vec<f64>,
    half_mass: f64,
    beyond_mass: f64,
    plan: Fft2,
}

impl CurvatureSolver {
    pub fn new(order: FracOrder, n: usize, box_len: f64, mode: KernelMode) -> Result<Self> {
        if order.n() != 2 {
            return Err(Error::Invalid("curvature is evaluated in two dimensions".into()));
        }
        let s = order.s();
        let h = box_len / n as f64;
        let scale = h.powf(-2.0 * s);
        let m = NEAR_CELLS;
        let near = |i: i64, j: i64| i.abs() <= RING_CELLS && j.abs() <= RING_CELLS;
        let radius = match mode {
            KernelMode::Truncated(r) => {
                if !(r > (RING_CELLS as f64 + 1.0) * h) || r > 0.5 * box_len {
                    return Err(Error::Invalid(format!("truncation radius {r} outside the admissible range")));
                }
                Some(r / h)
            }
            _ => None,
        };
        let ring: Vec<(isize, isize, f64)> = (-RING_CELLS..=RING_CELLS)
            .flat_map(|i| (-RING_CELLS..=RING_CELLS).map(move |j| (i, j)))
            .filter(|&(i, j)| i.abs() > m || j.abs() > m)
            .map(|(i, j)| (i as isize, j as isize, scale * unit_cell_weight_2d(i, j, s, radius)))
            .collect();
        let ext_mass = ((m as f64 + 0.5) * h).powf(-2.0 * s) * unit_square_exterior_mass(s);
        let (size, kernel, half_mass) = match mode {
            KernelMode::Periodic => {
                let pk = PeriodicKernel2D::new(order, n, box_len, 6)?;
                let mut w = pk.weights;
                for i in -RING_CELLS..=RING_CELLS {
                    for j in -RING_CELLS..=RING_CELLS {
                        if i != 0 || j != 0 {
                            let k = i.rem_euclid(n as i64) as usize * n + j.rem_euclid(n as i64) as usize;
                            w[k] -= scale * unit_cell_weight_2d(i, j, s, None);
                        }
                    }
                }
                (n, w, 0.5 * ext_mass)
            }
            KernelMode::Free | KernelMode::Truncated(_) => {
                let size = 2 * n;
                let w: Vec<f64> = (0..size * size)
                    .into_par_iter()
                    .map(|k| {
                        let i = freq_index(k / size, size) as i64;
                        let j = freq_index(k % size, size) as i64;
                        if near(i, j) || i.unsigned_abs() as usize >= n || j.unsigned_abs() as usize >= n {
                            0.0
                        } else {
                            scale * unit_cell_weight_2d(i, j, s, radius)
                        }
                    })
                    .collect();
                let half = match mode {
                    KernelMode::Truncated(_) => 0.5 * (w.iter().sum::<f64>() + ring.iter().map(|r| r.2).sum::<f64>()),
                    _ => 0.5 * ext_mass,
                };
                (size, w, half)
            }
        };
        let plan = Fft2::new(size, size);
        let kernel_hat = plan.forward_real(&kernel).into_iter().map(|c| c.re).collect();
        let beyond_mass = match mode {
            KernelMode::Free => ((n as f64 - 0.5) * h).powf(-2.0 * s) * unit_square_exterior_mass(s),
            _ => 0.0,
        };
        Ok(Self { order, mode, n, spacing: h, size, ring, kernel_hat, half_mass, beyond_mass, plan })
    }

    /// κ at the given band points.
    pub fn kappa(&self, d: &SignedDistanceField, points: &[[usize; 2]]) -> Result<Vec<f64>> {
        let f = &d.field;
        let (n0, n1) = f.n2();
        if n0 != self.n || n1 != self.n || (f.spacing - self.spacing).abs() > 1e-12 * self.spacing {
            return Err(Error::Shape("curvature solver built for a different grid".into()));
        }
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let grads: Vec<[f64; 2]> = points.iter().map(|&p| check_target(d, p)).collect::<Result<_>>()?;
        let h = self.spacing;
        let s = self.order.s();
        let all_grad = gradients(f);
        let values: Vec<f64> = points.iter().map(|&p| d.at(p)).collect();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let step = 0.5 * h;
        let l0 = lo - 2.0 * step;
        let count = ((hi - lo) / step).ceil() as usize + 5;
        let levels: Vec<f64> = (0..count).map(|k| l0 + k as f64 * step).collect();
        let size = self.size;
        let mut table = vec![vec![0.0; count]; points.len()];
        let padded = size != n0;
        let edge: Vec<f64> = (0..n0)
            .flat_map(|k| [f.at2(k, 0), f.at2(k, n1 - 1), f.at2(0, k), f.at2(n0 - 1, k)])
            .collect();
        let exterior = |l: f64| edge.iter().map(|&v| if v > l { 1.0 } else { 0.0 }).sum::<f64>() / edge.len() as f64;
        // padded rows/columns continue the nearest boundary: the first half past the far edge, the
        // second half before the near edge
        let source = |q: usize, len: usize| -> (usize, bool) {
            if q < len {
                (q, true)
            } else if q < len + len / 2 {
                (len - 1, false)
            } else {
                (0, false)
            }
        };
        for pair in (0..count).collect::<Vec<_>>().chunks(2) {
            let mut buf = vec![Complex64::new(0.0, 0.0); size * size];
            buf.par_chunks_mut(size).enumerate().for_each(|(a, row)| {
                let (i, in_i) = source(a, n0);
                for (b, cell) in row.iter_mut().enumerate() {
                    let (j, in_j) = source(b, n1);
                    let k = i * n1 + j;
                    let g = continued(all_grad[k], in_i, in_j);
                    let re = level_fraction(f.data[k], g, levels[pair[0]], h);
                    let im = pair.get(1).map_or(0.0, |&l| level_fraction(f.data[k], g, levels[l], h));
                    *cell = Complex64::new(re, im);
                }
            });
            self.plan.forward(&mut buf);
            buf.par_iter_mut().zip(self.kernel_hat.par_iter()).for_each(|(v, &k)| *v *= k);
            self.plan.inverse(&mut buf);
            for (row, p) in table.iter_mut().zip(points) {
                let v = buf[p[0] * size + p[1]];
                row[pair[0]] = v.re;
                if let Some(&l) = pair.get(1) {
                    row[l] = v.im;
                }
            }
        }
        let out = points
            .par_iter()
            .zip(grads.par_iter())
            .zip(table.par_iter())
            .zip(values.par_iter())
            .map(|(((&p, &g), row), &v)| {
                let (plus, minus) = near_cusp(g, f.hessian2(p[0], p[1]), h, s);
                let ring: f64 = self
                    .ring
                    .iter()
                    .map(|&(a, b, w)| {
                        let (yi, yj) = (p[0] as isize + a, p[1] as isize + b);
                        let ((ki, in_i), (kj, in_j)) = if padded {
                            (clamp_index(yi, n0), clamp_index(yj, n1))
                        } else {
                            ((yi.rem_euclid(n0 as isize) as usize, true), (yj.rem_euclid(n1 as isize) as usize, true))
                        };
                        let k = ki * n1 + kj;
                        w * level_fraction(f.data[k], continued(all_grad[k], in_i, in_j), v, h)
                    })
                    .sum();
                let far = cubic_at(row, (v - l0) / step);
                let beyond = if self.beyond_mass > 0.0 { self.beyond_mass * exterior(v) } else { 0.0 };
                plus - minus + ring + far + beyond - self.half_mass
            })
            .collect();
        Ok(out)
    }

    /// κ on every band point, as a field that is zero off the band.
    pub fn kappa_field(&self, d: &SignedDistanceField) -> Result<(Vec<[usize; 2]>, ScalarField)> {
        let band = d.band_points();
        let k = self.kappa(d, &band)?;
        let mut out = d.field.with_data(vec![0.0; d.field.len()]);
        let n1 = d.field.shape[1];
        for (p, v) in band.iter().zip(k) {
            out.data[p[0] * n1 + p[1]] = v;
        }
        Ok((band, out))
    }
}

/// Cubic Lagrange interpolation of uniformly tabulated values at fractional index `x`.
fn cubic_at(v: &[f64], x: f64) -> f64 {
    let k = (x.floor() as isize).clamp(1, v.len() as isize - 3) as usize;
    let t = x - k as f64;
    let (a, b, c, d) = (v[k - 1], v[k], v[k + 1], v[k + 2]);
    -t * (t - 1.0) * (t - 2.0) / 6.0 * a + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * b
        - (t + 1.0) * t * (t - 2.0) / 2.0 * c
        + (t + 1.0) * t * (t - 1.0) / 6.0 * d
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OmegaEstimate {
    pub omega: f64,
    /// (n, radius, ω from the samples closest to the circle).
    pub samples: Vec<(usize, f64, f64)>,
    /// Richardson-extrapolated ω per radius.
    pub per_radius: Vec<(f64, f64)>,
}

/// ω from `κ = -ω/|x|^{2s}` on the band of circles in the unit box, averaged over band points
/// (`ω ≈ -κ(x)|x - c|^{2s}`), Richardson-extrapolated from the two finest levels of a doubling
/// ladder with the observed error order `h^{1-2s}`.
pub fn omega_constant(order: FracOrder, ladder: &[usize], radii: &[f64]) -> Result<OmegaEstimate> {
    if order.n() != 2 {
        return Err(Error::Invalid("ω is measured in two dimensions".into()));
    }
    if ladder.len() < 2 || ladder.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::Invalid("the resolution ladder must double at each step".into()));
    }
    let mut samples = Vec::new();
    let mut per_radius = Vec::new();
    for &r in radii {
        let mut est = Vec::new();
        for &n in ladder {
            let w = circle_omega(order, n, r)?;
            samples.push((n, r, w));
            est.push(w);
        }
        let k = est.len();
        let (a, b) = (est[k - 2], est[k - 1]);
        let factor = 2f64.powf(1.0 - 2.0 * order.s()) - 1.0;
        let extrapolated = b + (b - a) / factor;
        per_radius.push((r, extrapolated));
    }
    let omega = per_radius.iter().map(|p| p.1).sum::<f64>() / per_radius.len() as f64;
    if !(omega > 0.0) {
        return Err(Error::Solver(format!("non-positive ω estimate {omega}")));
    }
    Ok(OmegaEstimate { omega, samples, per_radius })
}

/// `ω = 2^{-2s}√π Γ(1/2 − s) / (2s Γ(1 − s))`, so that a planar disk of radius `r` has
/// curvature `-ω r^{-2s}` on its boundary.
pub fn omega_closed_form(s: f64) -> f64 {
    2f64.powf(-2.0 * s) * std::f64::consts::PI.sqrt() * gamma(0.5 - s) / (2.0 * s * gamma(1.0 - s))
}

/// ω measured on the circle of radius `r` centered in the unit box at resolution n.
pub fn circle_omega(order: FracOrder, n: usize, r: f64) -> Result<f64> {
    let s = order.s();
    let h = 1.0 / n as f64;
    let rho = DEFAULT_RHO_CELLS * h;
    let c = [0.5, 0.5];
    let d = signed_distance_circle(n, 1.0, c, r, 0.0, rho)?;
    let solver = CurvatureSolver::new(order, n, 1.0, KernelMode::Free)?;
    let pts: Vec<[usize; 2]> = d.band_points().into_iter().filter(|&p| d.at(p).abs() < h).collect();
    let k = solver.kappa(&d, &pts)?;
    let total: f64 = pts
        .iter()
        .zip(&k)
        .map(|(&p, &kv)| {
            let x = d.field.coord2(p[0], p[1]);
            let dist = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
            -kv * dist.powf(2.0 * s)
        })
        .sum();
    Ok(total / pts.len() as f64)
}

/// A polyline with vertices in physical coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Polyline {
    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.points.len();
        let m = if self.closed { n } else { n.saturating_sub(1) };
        (0..m).map(move |k| (self.points[k], self.points[(k + 1) % n]))
    }

    /// Signed area (positive for counterclockwise closed curves in the (axis 0, axis 1) plane).
    pub fn signed_area(&self) -> f64 {
        0.5 * self.segments().map(|(a, b)| a[0] * b[1] - b[0] * a[1]).sum::<f64>()
    }

    /// Winding-number containment test for closed curves.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let mut wn = 0i32;
        for (a, b) in self.segments() {
            let cross = (b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1]);
            if a[1] <= x[1] {
                if b[1] > x[1] && cross > 0.0 {
                    wn += 1;
                }
            } else if b[1] <= x[1] && cross < 0.0 {
                wn -= 1;
            }
        }
        wn != 0
    }
}

/// The level set of a field as oriented polylines, the region above the level on the left.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FrontCurve {
    pub polylines: Vec<Polyline>,
}

impl FrontCurve {
    pub fn is_empty(&self) -> bool {
        self.polylines.iter().all(|p| p.points.is_empty())
    }

    pub fn vertices(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.polylines.iter().flat_map(|p| p.points.iter().copied())
    }

    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        self.polylines.iter().flat_map(|p| p.segments())
    }

    /// Distance from a point to the nearest segment.
    pub fn distance(&self, x: [f64; 2]) -> f64 {
        self.segments().map(|(a, b)| point_segment_distance(x, a, b)).fold(f64::INFINITY, f64::min)
    }

    /// Mean distance of the vertices from a center.
    pub fn mean_radius(&self, c: [f64; 2]) -> f64 {
        let (sum, count) = self
            .vertices()
            .fold((0.0, 0usize), |(s, k), p| (s + ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt(), k + 1));
        sum / count as f64
    }

    /// Enclosed area of the closed polylines.
    pub fn area(&self) -> f64 {
        self.polylines.iter().filter(|p| p.closed).map(|p| p.signed_area()).sum::<f64>().abs()
    }

    /// Whether every vertex of `other` lies inside some closed polyline of `self`.
    pub fn encloses(&self, other: &FrontCurve) -> bool {
        other.vertices().all(|v| self.polylines.iter().any(|p| p.closed && p.contains(v)))
    }

    /// CSV rows `curve_id,x,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("curve_id,x,y\n");
        for (k, p) in self.polylines.iter().enumerate() {
            for v in &p.points {
                out.push_str(&format!("{k},{:.17e},{:.17e}\n", v[0], v[1]));
            }
        }
        out
    }
}

pub fn point_segment_distance(x: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    point_segment_foot(x, a, b).0
}

/// Distance to the segment and the foot parameter in [0, 1].
fn point_segment_foot(x: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((x[0] - a[0]) * dx + (x[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (px, py) = (a[0] + t * dx, a[1] + t * dy);
    (((x[0] - px).powi(2) + (x[1] - py).powi(2)).sqrt(), t)
}

/// Marching squares over the sample window (no wrap-around); saddles resolved by the cell average.
pub fn extract_front(field: &ScalarField, level: f64) -> FrontCurve {
    let (n0, n1) = field.n2();
    let pos = |i: usize, j: usize| field.at2(i, j) >= level;
    // edge key: (i, j, 0) joins (i,j)-(i+1,j); (i, j, 1) joins (i,j)-(i,j+1)
    let point_on = |e: (usize, usize, u8)| -> [f64; 2] {
        let (i, j, dir) = e;
        let (i2, j2) = if dir == 0 { (i + 1, j) } else { (i, j + 1) };
        let (va, vb) = (field.at2(i, j), field.at2(i2, j2));
        let t = if vb != va { ((level - va) / (vb - va)).clamp(0.0, 1.0) } else { 0.5 };
        let a = field.coord2(i, j);
        let b = field.coord2(i2, j2);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    };
    let mut segs: Vec<((usize, usize, u8), (usize, usize, u8))> = Vec::new();
    for i in 0..n0.saturating_sub(1) {
        for j in 0..n1.saturating_sub(1) {
            // counterclockwise corners and the edges leaving them
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let edges = [(i, j, 0u8), (i + 1, j, 1u8), (i, j + 1, 0u8), (i, j, 1u8)];
            let sgn: Vec<bool> = corners.iter().map(|&(a, b)| pos(a, b)).collect();
            let starts: Vec<usize> = (0..4).filter(|&k| sgn[k] && !sgn[(k + 1) % 4]).collect();
            let ends: Vec<usize> = (0..4).filter(|&k| !sgn[k] && sgn[(k + 1) % 4]).collect();
            if starts.is_empty() {
                continue;
            }
            let center_pos = corners.iter().map(|&(a, b)| field.at2(a, b)).sum::<f64>() / 4.0 >= level;
            for &st in &starts {
                let en = if starts.len() == 1 || center_pos {
                    *(1..=4).map(|o| (st + o) % 4).filter(|k| ends.contains(k)).collect::<Vec<_>>().first().unwrap()
                } else {
                    *(1..=4).map(|o| (st + 4 - o) % 4).filter(|k| ends.contains(k)).collect::<Vec<_>>().first().unwrap()
                };
                segs.push((edges[st], edges[en]));
            }
        }
    }
    let by_start: HashMap<_, usize> = segs.iter().enumerate().map(|(k, s)| (s.0, k)).collect();
    let ends: std::collections::HashSet<_> = segs.iter().map(|s| s.1).collect();
    let mut used = vec![false; segs.len()];
    let mut polylines = Vec::new();
    let heads: Vec<usize> = (0..segs.len()).filter(|&k| !ends.contains(&segs[k].0)).chain(0..segs.len()).collect();
    for first in heads {
        if used[first] {
            continue;
        }
        let mut pts = vec![point_on(segs[first].0)];
        let mut k = first;
        let mut closed = false;
        loop {
            used[k] = true;
            let end = segs[k].1;
            match by_start.get(&end) {
                Some(&next) if next == first => {
                    closed = true;
                    break;
                }
                Some(&next) if !used[next] => {
                    pts.push(point_on(end));
                    k = next;
                }
                _ => {
                    pts.push(point_on(end));
                    break;
                }
            }
        }
        polylines.push(Polyline { points: pts, closed });
    }
    FrontCurve { polylines }
}

/// Symmetric Hausdorff distance using vertex-to-segment distances.
pub fn hausdorff(a: &FrontCurve, b: &FrontCurve) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("Hausdorff distance needs two non-empty curves".into()));
    }
    let one = |p: &FrontCurve, q: &FrontCurve| {
        let verts: Vec<[f64; 2]> = p.vertices().collect();
        verts.par_iter().map(|&v| q.distance(v)).reduce(|| 0.0, f64::max)
    };
    Ok(one(a, b).max(one(b, a)))
}

/// Vertex curvature of a polyline: turning angle over the mean adjacent length (positive for left
/// turns); zero at open ends.
fn vertex_curvature(p: &Polyline) -> Vec<f64> {
    let m = p.points.len();
    (0..m)
        .map(|k| {
            if !p.closed && (k == 0 || k + 1 == m) || m < 3 {
                return 0.0;
            }
            let a = p.points[(k + m - 1) % m];
            let b = p.points[k];
            let c = p.points[(k + 1) % m];
            let e1 = [b[0] - a[0], b[1] - a[1]];
            let e2 = [c[0] - b[0], c[1] - b[1]];
            let l1 = e1[0].hypot(e1[1]);
            let l2 = e2[0].hypot(e2[1]);
            if l1 + l2 == 0.0 {
                return 0.0;
            }
            let turn = (e1[0] * e2[1] - e1[1] * e2[0]).atan2(e1[0] * e2[0] + e1[1] * e2[1]);
            2.0 * turn / (l1 + l2)
        })
        .collect()
}

/// Distance to the front near it, signed by `sign_of` (positive above the level), clamped to
/// `±cap` elsewhere. Each segment is treated as a circular arc with the mean curvature of its
/// end vertices, so the chord-to-arc offset `σ(1-σ)ℓ²κ/2` is added at foot parameter σ.
pub fn distance_from_front(front: &FrontCurve, sign_of: &ScalarField, level: f64, cap: f64) -> ScalarField {
    let (n0, n1) = sign_of.n2();
    let h = sign_of.spacing;
    let mut dist = vec![f64::INFINITY; n0 * n1];
    let mut bulge = vec![0.0; n0 * n1];
    let reach = (cap / h).ceil() as isize + 1;
    let arcs = front.polylines.iter().flat_map(|p| {
        let kv = vertex_curvature(p);
        let m = p.points.len();
        p.segments().enumerate().map(move |(k, seg)| (seg, 0.5 * (kv[k] + kv[(k + 1) % m])))
    });
    for ((a, b), kseg) in arcs {
        let lo = [a[0].min(b[0]), a[1].min(b[1])];
        let hi = [a[0].max(b[0]), a[1].max(b[1])];
        let i0 = (((lo[0] - sign_of.origin[0]) / h).floor() as isize - reach).max(0);
        let i1 = (((hi[0] - sign_of.origin[0]) / h).ceil() as isize + reach).min(n0 as isize - 1);
        let j0 = (((lo[1] - sign_of.origin[1]) / h).floor() as isize - reach).max(0);
        let j1 = (((hi[1] - sign_of.origin[1]) / h).ceil() as isize + reach).min(n1 as isize - 1);
        for i in i0..=i1 {
            for j in j0..=j1 {
                let k = i as usize * n1 + j as usize;
                let x = sign_of.coord2(i as usize, j as usize);
                let (dd, sigma) = point_segment_foot(x, a, b);
                if dd < dist[k] {
                    dist[k] = dd;
                    let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
                    bulge[k] = 0.5 * sigma * (1.0 - sigma) * len2 * kseg;
                }
            }
        }
    }
    let data = dist
        .iter()
        .zip(&bulge)
        .zip(&sign_of.data)
        .map(|((&dd, &bg), &v)| {
            let sg = if v >= level { 1.0 } else { -1.0 };
            if dd >= cap {
                sg * cap
            } else {
                (sg * dd + bg).clamp(-cap, cap)
            }
        })
        .collect();
    sign_of.with_data(data)
}

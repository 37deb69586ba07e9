//! The unnormalized fractional Laplacian `I u(x) = ∫ (u(x+z) - u(x)) |z|^{-n-2s} dz`:
//! kernel constants, exact per-cell kernel weights, 1D operators with analytic tails,
//! and spectral/direct realizations on periodic grids.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta, beta_reg};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::field::{freq_index, Fft2, ScalarField};
use crate::profile1d::{Profile1D, Tail};
use crate::quad::{adaptive, adaptive_to_infinity, hurwitz_zeta, GaussRule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracOrder {
    s: f64,
    n: usize,
}

impl FracOrder {
    pub fn new(s: f64, n: usize) -> Result<Self> {
        if !(s > 0.0 && s < 0.5) {
            return Err(Error::FracOrder(format!("s = {s} must lie strictly inside (0, 1/2)")));
        }
        if n == 0 {
            return Err(Error::FracOrder("dimension n must be at least 1".into()));
        }
        Ok(Self { s, n })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn with_dim(&self, n: usize) -> Self {
        Self { s: self.s, n }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracConstants {
    pub c_ns: f64,
    pub spectral_symbol_coeff: f64,
}

impl FracConstants {
    pub fn new(order: FracOrder) -> Result<Self> {
        Ok(Self { c_ns: compute_c_ns(order)?, spectral_symbol_coeff: calibrate_spectral_symbol(order)? })
    }
}

/// Surface measure of the unit sphere in R^dim.
pub fn sphere_area(dim: usize) -> f64 {
    2.0 * PI.powf(dim as f64 / 2.0) / gamma(dim as f64 / 2.0)
}

/// `∫_{R^{n-1}} (|z|^2 + 1)^{-(n+2s)/2} dz`, written in the angle variable `|z| = tan θ`.
pub fn compute_c_ns(order: FracOrder) -> Result<f64> {
    let (s, n) = (order.s, order.n);
    if n == 1 {
        return Ok(1.0);
    }
    let m = (n - 2) as i32;
    let r = adaptive(|t: f64| t.sin().powi(m) * t.cos().powf(2.0 * s), 0.0, PI / 2.0, 1e-15, 1e-13)?;
    Ok(sphere_area(n - 1) * r.value)
}

/// Closed form of λ(n,s): the symbol of `I` is `-λ |k|^{2s}`.
pub fn spectral_symbol_closed_form(order: FracOrder) -> f64 {
    let (s, n) = (order.s, order.n as f64);
    PI.powf(n / 2.0) * gamma(1.0 - s) / (s * 4f64.powf(s) * gamma(n / 2.0 + s))
}

/// `∫_R (1 - cos(kτ)) |τ|^{-1-2s} dτ` by direct quadrature; the oscillatory tail is
/// integrated along a rotated contour.
pub fn one_dim_probe_integral(k: f64, s: f64) -> Result<f64> {
    if k == 0.0 {
        return Ok(0.0);
    }
    let k = k.abs();
    let p = 1.0 + 2.0 * s;
    let periods = 4.0;
    let t_end = 2.0 * PI * periods / k;
    let mut near = 0.0;
    let pieces = 4 * periods as usize;
    for m in 0..pieces {
        let a = t_end * m as f64 / pieces as f64;
        let b = t_end * (m + 1) as f64 / pieces as f64;
        near += adaptive(
            |t: f64| {
                let h = (0.5 * k * t).sin();
                2.0 * h * h * t.powf(-p)
            },
            a,
            b,
            1e-16,
            1e-13,
        )?
        .value;
    }
    let plain_tail = t_end.powf(-2.0 * s) / (2.0 * s);
    let osc = adaptive_to_infinity(
        |t: f64| {
            let z = Complex64::new(t_end, t / k).powf(-p);
            (-t).exp() * z.im
        },
        0.0,
        1e-17,
        1e-13,
    )?
    .value;
    let cos_tail = -osc / k;
    Ok(2.0 * (near + plain_tail - cos_tail))
}

/// Read λ(n,s) off the defining integral applied to the probe `cos(k x_1)` at the origin.
pub fn symbol_readout(order: FracOrder, k: f64) -> Result<f64> {
    let s = order.s;
    let value = match order.n {
        1 => one_dim_probe_integral(k, s)?,
        2 => {
            let inner = |t: f64| one_dim_probe_integral(k * t.cos(), s).unwrap_or(f64::NAN);
            let r = adaptive(|t| 0.5 * inner(t), 0.0, PI / 2.0, 1e-14, 1e-12)?;
            4.0 * r.value
        }
        n => {
            // polar: ½∫_{S^{n-1}} F(k|ω_1|) dω with ω_1 = cos θ
            let inner = |t: f64| one_dim_probe_integral(k * t.cos(), s).unwrap_or(f64::NAN);
            let m = (n - 2) as i32;
            let r = adaptive(|t| 0.5 * inner(t) * t.sin().powi(m), 0.0, PI / 2.0, 1e-14, 1e-12)?;
            2.0 * sphere_area(n - 1) * r.value
        }
    };
    if !value.is_finite() {
        return Err(Error::Quadrature { what: "symbol probe", estimate: f64::NAN });
    }
    Ok(value / k.abs().powf(2.0 * s))
}

/// λ(n,s) from the probe quadrature, cross-checked against the closed form.
pub fn calibrate_spectral_symbol(order: FracOrder) -> Result<f64> {
    let quadrature = symbol_readout(order, 1.0)?;
    let closed_form = spectral_symbol_closed_form(order);
    if ((quadrature - closed_form) / closed_form).abs() > 1e-6 {
        return Err(Error::Calibration { quadrature, closed_form });
    }
    Ok(quadrature)
}

/// `Θ(ρ) = ∫_{|q|<√(ρ²-1)} (1+q²)^{-1-s} dq`: the transverse kernel mass seen by a ridge when the
/// planar kernel is truncated to the disk of radius `ρ|τ|`.
pub fn ridge_truncation_factor(rho: f64, s: f64) -> f64 {
    if rho <= 1.0 {
        return 0.0;
    }
    beta(0.5, s + 0.5) * beta_reg(0.5, s + 0.5, 1.0 - 1.0 / (rho * rho))
}

/// `∫_{cell} |z|^{-2-2s} dz` over the unit cell centered at integer offset (i, j),
/// optionally restricted to the disk of the given radius.
pub fn unit_cell_weight_2d(i: i64, j: i64, s: f64, radius: Option<f64>) -> f64 {
    unit_cell_power_2d(i, j, -2.0 - 2.0 * s, radius)
}

/// `∫_{cell} |z|^e dz` over the unit cell at offset (i, j) (origin cell excluded), optionally
/// restricted to a disk.
pub fn unit_cell_power_2d(i: i64, j: i64, e: f64, radius: Option<f64>) -> f64 {
    assert!(i != 0 || j != 0, "the center cell carries no weight");
    let (x0, x1) = (i as f64 - 0.5, i as f64 + 0.5);
    let (y0, y1) = (j as f64 - 0.5, j as f64 + 0.5);
    let dmin2 = clamp_dist2(x0, x1) + clamp_dist2(y0, y1);
    let dmax2 = x0.abs().max(x1.abs()).powi(2) + y0.abs().max(y1.abs()).powi(2);
    let clipped = match radius {
        Some(r) if dmin2 >= r * r => return 0.0,
        Some(r) => dmax2 > r * r,
        None => false,
    };
    let k = i.abs().max(j.abs());
    let f = |x: f64, y: f64| (x * x + y * y).powf(0.5 * e);
    if clipped || k <= 3 {
        let r2 = radius.map_or(f64::INFINITY, |r| r * r);
        let (xa, xb) = match radius {
            Some(r) => (x0.max(-r), x1.min(r)),
            None => (x0, x1),
        };
        if xa >= xb {
            return 0.0;
        }
        let inner = |x: f64| {
            let ymax = (r2 - x * x).max(0.0).sqrt();
            let (ya, yb) = (y0.max(-ymax), y1.min(ymax));
            if ya >= yb {
                return 0.0;
            }
            adaptive(|y| f(x, y), ya, yb, 1e-16, 1e-13).map_or(f64::NAN, |r| r.value)
        };
        // split where the disk boundary crosses the cell's horizontal edges
        let mut cuts = vec![xa, xb];
        for y in [y0, y1] {
            let c = r2 - y * y;
            if c > 0.0 && c.is_finite() {
                cuts.extend([c.sqrt(), -c.sqrt()].into_iter().filter(|&x| x > xa && x < xb));
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return cuts
            .windows(2)
            .map(|w| adaptive(inner, w[0], w[1], 1e-16, 1e-12).map_or(f64::NAN, |r| r.value))
            .sum();
    }
    let q = if k <= 16 { 8 } else { 3 };
    let rule = GaussRule::new(q);
    rule.mapped(x0, x1)
        .map(|(x, wx)| wx * rule.mapped(y0, y1).map(|(y, wy)| wy * f(x, y)).sum::<f64>())
        .sum()
}

fn clamp_dist2(a: f64, b: f64) -> f64 {
    if a <= 0.0 && b >= 0.0 {
        0.0
    } else {
        a.abs().min(b.abs()).powi(2)
    }
}

/// `∫_{[-1/2,1/2]^2} |z|^{-2s} dz`, the second moment weight of the center cell.
pub fn unit_center_moment_2d(s: f64) -> f64 {
    let e = 2.0 - 2.0 * s;
    8.0 * adaptive(|t: f64| (0.5 / t.cos()).powf(e) / e, 0.0, PI / 4.0, 1e-16, 1e-14)
        .map_or(f64::NAN, |r| r.value)
}

/// `∫_{a}^{b} |z|^{-1-2s} dz` for 0 < a < b.
fn shell_1d(a: f64, b: f64, s: f64) -> f64 {
    (a.powf(-2.0 * s) - b.powf(-2.0 * s)) / (2.0 * s)
}

/// Exact per-cell kernel integrals on a uniform grid, truncated to the ball of radius `r_max`.
#[derive(Clone, Debug)]
pub struct KernelWeights {
    pub order: FracOrder,
    pub spacing: f64,
    pub r_max: f64,
    /// `∫_{|z|>r_max} |z|^{-n-2s} dz`.
    pub tail_coefficient: f64,
    /// `∫_{center cell} |z|^{2-n-2s} dz`, pairing with the Laplacian in the center-cell Taylor term.
    pub center_moment: f64,
    /// `Σ_cells (∫_cell |z|^2 K - |z_c|^2 w_c)` over the near cells, so that quadratics are integrated exactly.
    pub moment_correction: f64,
    radius_cells: usize,
    weights: Vec<f64>,
}

impl KernelWeights {
    pub fn new(order: FracOrder, spacing: f64, r_max: f64) -> Result<Self> {
        let s = order.s;
        if !(r_max >= spacing) {
            return Err(Error::Invalid(format!("r_max {r_max} smaller than one cell {spacing}")));
        }
        let m = (r_max / spacing + 0.5).floor() as usize;
        let rc = r_max / spacing;
        let scale = spacing.powf(-2.0 * s);
        let (weights, center_moment, moment_correction) = match order.n {
            1 => {
                let e = 2.0 - 2.0 * s;
                let corr: f64 = (1..=m)
                    .map(|k| {
                        let (a, b) = (k as f64 - 0.5, (k as f64 + 0.5).min(rc));
                        2.0 * ((b.powf(e) - a.powf(e)) / e - (k * k) as f64 * shell_1d(a, b, s))
                    })
                    .sum();
                let w = (0..=2 * m)
                    .map(|k| {
                        let off = (k as f64 - m as f64).abs();
                        if off == 0.0 {
                            0.0
                        } else {
                            scale * shell_1d(off - 0.5, (off + 0.5).min(rc), s)
                        }
                    })
                    .collect();
                (w, 2.0 * (0.5 * spacing).powf(e) / e, corr * spacing.powf(e))
            }
            2 => {
                let side = 2 * m + 1;
                let w: Vec<f64> = (0..side * side)
                    .into_par_iter()
                    .map(|idx| {
                        let i = (idx / side) as i64 - m as i64;
                        let j = (idx % side) as i64 - m as i64;
                        if i == 0 && j == 0 {
                            0.0
                        } else {
                            scale * unit_cell_weight_2d(i, j, s, Some(rc))
                        }
                    })
                    .collect();
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Quadrature { what: "cell weights", estimate: f64::NAN });
                }
                let near = m.min(16) as i64;
                let corr: f64 = (-near..=near)
                    .into_par_iter()
                    .map(|i| {
                        (-near..=near)
                            .filter(|&j| i != 0 || j != 0)
                            .map(|j| {
                                let w = w[((i + m as i64) as usize) * side + (j + m as i64) as usize] / scale;
                                unit_cell_power_2d(i, j, -2.0 * s, Some(rc)) - (i * i + j * j) as f64 * w
                            })
                            .sum::<f64>()
                    })
                    .sum();
                let e = 2.0 - 2.0 * s;
                (w, spacing.powf(e) * unit_center_moment_2d(s), spacing.powf(e) * corr)
            }
            n => return Err(Error::Invalid(format!("kernel weights are implemented for n = 1, 2 (got {n})"))),
        };
        Ok(Self {
            order,
            spacing,
            r_max,
            tail_coefficient: sphere_area(order.n) * r_max.powf(-2.0 * s) / (2.0 * s),
            center_moment,
            moment_correction,
            radius_cells: m,
            weights,
        })
    }

    /// Weight of the Laplacian in the center-cell Taylor term, including the near-cell moment correction.
    pub fn second_moment(&self) -> f64 {
        self.center_moment + self.moment_correction
    }

    pub fn radius_cells(&self) -> usize {
        self.radius_cells
    }

    /// Weight of an integer offset; `None` for the center cell and offsets outside the stencil.
    pub fn weight(&self, offset: &[isize]) -> Option<f64> {
        let m = self.radius_cells as isize;
        if offset.iter().any(|o| o.abs() > m) || offset.iter().all(|&o| o == 0) {
            return None;
        }
        let side = 2 * m + 1;
        let idx = offset.iter().fold(0isize, |acc, &o| acc * side + o + m) as usize;
        let w = self.weights[idx];
        (w > 0.0).then_some(w)
    }

    /// All stored offsets with positive weight.
    pub fn entries(&self) -> Vec<(Vec<isize>, f64)> {
        let m = self.radius_cells as isize;
        let side = (2 * m + 1) as usize;
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(idx, &w)| {
                let mut off = vec![0isize; self.order.n];
                let mut r = idx;
                for d in (0..self.order.n).rev() {
                    off[d] = (r % side) as isize - m;
                    r /= side;
                }
                (off, w)
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectValue {
    pub value: f64,
    pub tail_bound: f64,
}

fn check_direct(field: &ScalarField, weights: &KernelWeights) -> Result<()> {
    if field.dim() != weights.order.n {
        return Err(Error::Shape(format!("field is {}D, weights are {}D", field.dim(), weights.order.n)));
    }
    if (field.spacing - weights.spacing).abs() > 1e-12 * field.spacing {
        return Err(Error::Shape("weights were built for a different spacing".into()));
    }
    let half = field.box_size().into_iter().fold(f64::INFINITY, f64::min) / 2.0;
    if weights.r_max > half {
        return Err(Error::Invalid(format!("r_max {} exceeds half the box {}", weights.r_max, half)));
    }
    Ok(())
}

fn oscillation(field: &ScalarField) -> f64 {
    let (lo, hi) = field.min_max();
    hi - lo
}

/// Truncated direct quadrature at one grid index, with the center cell handled by its
/// second-order Taylor term and the discarded tail bounded by `osc(u) · tail_coefficient`.
pub fn frac_lap_nd_direct(field: &ScalarField, weights: &KernelWeights, x: &[usize]) -> Result<DirectValue> {
    check_direct(field, weights)?;
    let n = field.dim();
    let value = match n {
        1 => {
            let len = field.shape[0] as isize;
            let at = |k: isize| field.data[k.rem_euclid(len) as usize];
            let i = x[0] as isize;
            let c = at(i);
            let m = weights.radius_cells as isize;
            let mut acc = 0.0;
            for k in 1..=m {
                if let Some(w) = weights.weight(&[k]) {
                    acc += w * (at(i + k) + at(i - k) - 2.0 * c);
                }
            }
            let h = field.spacing;
            let lap = (at(i + 1) - 2.0 * c + at(i - 1)) / (h * h);
            acc + 0.5 * lap * weights.second_moment()
        }
        2 => {
            let (i, j) = (x[0] as isize, x[1] as isize);
            let c = field.wrap2(i, j);
            let m = weights.radius_cells as isize;
            let mut acc = 0.0;
            for a in -m..=m {
                for b in -m..=m {
                    if let Some(w) = weights.weight(&[a, b]) {
                        acc += w * (field.wrap2(i + a, j + b) - c);
                    }
                }
            }
            acc + 0.25 * field.laplacian2(x[0], x[1]) * weights.second_moment()
        }
        _ => unreachable!("checked by KernelWeights"),
    };
    Ok(DirectValue { value, tail_bound: oscillation(field) * weights.tail_coefficient })
}

/// The direct quadrature at every grid point (FFT convolution with the weight stencil in 2D).
pub fn frac_lap_nd_direct_field(field: &ScalarField, weights: &KernelWeights) -> Result<(ScalarField, f64)> {
    check_direct(field, weights)?;
    let tail = oscillation(field) * weights.tail_coefficient;
    match field.dim() {
        1 => {
            let out = (0..field.len())
                .map(|i| frac_lap_nd_direct(field, weights, &[i]).map(|v| v.value))
                .collect::<Result<Vec<_>>>()?;
            Ok((field.with_data(out), tail))
        }
        _ => {
            let (n0, n1) = field.n2();
            let mut kernel = vec![0.0; n0 * n1];
            for (off, w) in weights.entries() {
                let a = off[0].rem_euclid(n0 as isize) as usize;
                let b = off[1].rem_euclid(n1 as isize) as usize;
                kernel[a * n1 + b] += w;
            }
            let plan = Fft2::new(n0, n1);
            let k_hat = plan.forward_real(&kernel);
            // Σ_z w(z) u(x+z): the stencil is symmetric, so correlation equals convolution.
            let conv = plan.convolve(&field.data, &k_hat);
            let total = weights.total();
            let out = (0..n0 * n1)
                .map(|idx| {
                    let (i, j) = (idx / n1, idx % n1);
                    conv[idx] - total * field.data[idx] + 0.25 * field.laplacian2(i, j) * weights.second_moment()
                })
                .collect();
            Ok((field.with_data(out), tail))
        }
    }
}

/// `∫_{|y|_∞ > a} |y|^{-2-2s} dy` for a = 1.
pub fn unit_square_exterior_mass(s: f64) -> f64 {
    8.0 * adaptive(|t: f64| t.cos().powf(2.0 * s) / (2.0 * s), 0.0, PI / 4.0, 1e-16, 1e-14)
        .map_or(f64::NAN, |r| r.value)
}

/// The kernel periodized over the square torus: exact cell integrals for the base offsets,
/// midpoint images for `|m|_∞ ≤ images`, and the uniform-density far-image remainder.
#[derive(Clone, Debug)]
pub struct PeriodicKernel2D {
    pub n: usize,
    pub spacing: f64,
    /// Indexed like an FFT grid: entry (a, b) is the offset (freq_index(a), freq_index(b)).
    pub weights: Vec<f64>,
    pub total: f64,
    pub second_moment: f64,
}

impl PeriodicKernel2D {
    pub fn new(order: FracOrder, n: usize, box_len: f64, images: usize) -> Result<Self> {
        if order.n != 2 {
            return Err(Error::Invalid("periodized kernel is two-dimensional".into()));
        }
        let s = order.s;
        let h = box_len / n as f64;
        let scale = h.powf(-2.0 * s);
        let p = 1.0 + s;
        let mi = images as i64;
        let nn = n as i64;
        let far = (h * h / (box_len * box_len))
            * unit_square_exterior_mass(s)
            * ((images as f64 + 0.5) * box_len).powf(-2.0 * s);
        let weights: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let i = freq_index(idx / n, n) as i64;
                let j = freq_index(idx % n, n) as i64;
                let mut w = if i == 0 && j == 0 { 0.0 } else { scale * unit_cell_weight_2d(i, j, s, None) };
                for a in -mi..=mi {
                    for b in -mi..=mi {
                        if a == 0 && b == 0 {
                            continue;
                        }
                        let x = (i + a * nn) as f64 * h;
                        let y = (j + b * nn) as f64 * h;
                        w += h * h * (x * x + y * y).powf(-p);
                    }
                }
                w + far
            })
            .collect();
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Quadrature { what: "periodized cell weights", estimate: f64::NAN });
        }
        let near = 16i64.min(nn / 2 - 1);
        let corr: f64 = (-near..=near)
            .into_par_iter()
            .map(|i| {
                (-near..=near)
                    .filter(|&j| i != 0 || j != 0)
                    .map(|j| {
                        let w = unit_cell_weight_2d(i, j, s, None);
                        unit_cell_power_2d(i, j, -2.0 * s, None) - (i * i + j * j) as f64 * w
                    })
                    .sum::<f64>()
            })
            .sum();
        let e = 2.0 - 2.0 * s;
        let total = weights.iter().sum();
        Ok(Self { n, spacing: h, weights, total, second_moment: h.powf(e) * (unit_center_moment_2d(s) + corr) })
    }

    /// The torus operator by FFT convolution with the periodized weights.
    pub fn apply(&self, field: &ScalarField) -> Result<ScalarField> {
        let (n0, n1) = field.n2();
        if n0 != self.n || n1 != self.n || (field.spacing - self.spacing).abs() > 1e-12 * self.spacing {
            return Err(Error::Shape("periodized kernel built for a different grid".into()));
        }
        let plan = Fft2::new(n0, n1);
        let k_hat = plan.forward_real(&self.weights);
        let conv = plan.convolve(&field.data, &k_hat);
        let out = (0..n0 * n1)
            .map(|idx| {
                conv[idx] - self.total * field.data[idx]
                    + 0.25 * field.laplacian2(idx / n1, idx % n1) * self.second_moment
            })
            .collect();
        Ok(field.with_data(out))
    }
}

/// Fourier multiplier `-λ |k|^{2s}` on the periodic box (1D or 2D fields).
pub fn frac_lap_nd_spectral(field: &ScalarField, order: FracOrder, constants: &FracConstants) -> Result<ScalarField> {
    if field.dim() != order.n {
        return Err(Error::Shape(format!("field is {}D, order is {}D", field.dim(), order.n)));
    }
    let lam = constants.spectral_symbol_coeff;
    let s = order.s;
    let size = field.box_size();
    match field.dim() {
        1 => {
            let n = field.shape[0];
            let mut planner = FftPlanner::new();
            let mut buf: Vec<Complex64> = field.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            planner.plan_fft_forward(n).process(&mut buf);
            for (k, b) in buf.iter_mut().enumerate() {
                let kk = 2.0 * PI * freq_index(k, n) as f64 / size[0];
                *b *= -lam * kk.abs().powf(2.0 * s) / n as f64;
            }
            planner.plan_fft_inverse(n).process(&mut buf);
            Ok(field.with_data(buf.iter().map(|c| c.re).collect()))
        }
        2 => {
            let (n0, n1) = field.n2();
            let mult = spectral_multiplier_2d(n0, n1, size[0], size[1], lam, s);
            let plan = Fft2::new(n0, n1);
            let mut buf = plan.forward_real(&field.data);
            for (b, m) in buf.iter_mut().zip(&mult) {
                *b *= *m;
            }
            plan.inverse(&mut buf);
            Ok(field.with_data(buf.iter().map(|c| c.re).collect()))
        }
        n => Err(Error::Invalid(format!("spectral path implemented for n = 1, 2 (got {n})"))),
    }
}

/// Values `-λ|k|^{2s}` on the 2D FFT index grid.
pub fn spectral_multiplier_2d(n0: usize, n1: usize, b0: f64, b1: f64, lam: f64, s: f64) -> Vec<f64> {
    let mut out = vec![0.0; n0 * n1];
    for a in 0..n0 {
        let k0 = 2.0 * PI * freq_index(a, n0) as f64 / b0;
        for b in 0..n1 {
            let k1 = 2.0 * PI * freq_index(b, n1) as f64 / b1;
            out[a * n1 + b] = -lam * (k0 * k0 + k1 * k1).powf(s);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub bound: f64,
    pub actual: f64,
}

/// `sup|I u| ≤ C₁‖Du‖R^{1-2s} + 2C₂‖u‖R^{-2s}` with the near/far kernel masses as constants.
pub fn operator_bound_check(field: &ScalarField, order: FracOrder, radius: f64) -> Result<BoundCheck> {
    let constants = FracConstants::new(order)?;
    let lap = frac_lap_nd_spectral(field, order, &constants)?;
    let actual = lap.max_abs();
    let s = order.s;
    let area = sphere_area(order.n);
    let c1 = area / (1.0 - 2.0 * s);
    let c2 = area / (2.0 * s);
    let grad = max_gradient(field);
    let bound = c1 * grad * radius.powf(1.0 - 2.0 * s) + 2.0 * c2 * field.max_abs() * radius.powf(-2.0 * s);
    Ok(BoundCheck { bound, actual })
}

fn max_gradient(field: &ScalarField) -> f64 {
    let h = field.spacing;
    match field.dim() {
        1 => {
            let n = field.len();
            (0..n).map(|i| ((field.data[(i + 1) % n] - field.data[i]) / h).abs()).fold(0.0, f64::max)
        }
        _ => {
            let (n0, n1) = field.n2();
            let mut g: f64 = 0.0;
            for i in 0..n0 {
                for j in 0..n1 {
                    let c = field.at2(i, j);
                    let dx = (field.at2((i + 1) % n0, j) - c) / h;
                    let dy = (field.at2(i, (j + 1) % n1) - c) / h;
                    g = g.max((dx * dx + dy * dy).sqrt());
                }
            }
            g
        }
    }
}

/// `g(δ) = ∫_0^∞ ((1+q)^{-2s} - 1)(q+δ)^{-1-2s} dq`: the algebraic-tail remainder term in units of the
/// truncation length.
pub fn tail_remainder(delta: f64, s: f64) -> f64 {
    let f = |q: f64| ((1.0 + q).powf(-2.0 * s) - 1.0) * (q + delta).powf(-1.0 - 2.0 * s);
    let mut total = 0.0;
    let mut a = 0.0;
    for b in [delta.min(1.0) * 0.5, 1.0, 8.0] {
        if b > a {
            total += adaptive(f, a, b, 1e-15, 1e-12).map_or(f64::NAN, |r| r.value);
            a = b;
        }
    }
    total + adaptive_to_infinity(f, a, 1e-15, 1e-12).map_or(f64::NAN, |r| r.value)
}

/// Per-node coefficients of the far-field contribution of one algebraic tail.
#[derive(Clone, Debug)]
pub struct TailCoefficients {
    /// Multiplies the tail limit `a`.
    pub limit: Vec<f64>,
    /// Multiplies the power coefficient `b`.
    pub power: Vec<f64>,
}

/// Dense discretization of the 1D operator on a profile grid:
/// `I[u]_i = Σ_j M_ij u_j + a_L·cL.limit_i + b_L·cL.power_i + a_R·cR.limit_i + b_R·cR.power_i`.
///
/// The interior uses the piecewise-cubic Lagrange interpolant of the samples with exact kernel moments
/// on the two intervals touching the target node and Gauss–Legendre elsewhere. Outside the grid the
/// declared tails are integrated analytically. Periodic grids yield a circulant matrix and zero tail terms.
#[derive(Clone, Debug)]
pub struct Operator1D {
    pub n: usize,
    pub matrix: Vec<f64>,
    pub left: TailCoefficients,
    pub right: TailCoefficients,
    pub s: f64,
}

impl Operator1D {
    pub fn assemble(xi: &[f64], s: f64, periodic: bool) -> Result<Self> {
        let n = xi.len();
        if n < 4 {
            return Err(Error::Invalid("need at least 4 nodes".into()));
        }
        if periodic {
            return Ok(Self::assemble_periodic(xi, s));
        }
        let rule = GaussRule::new(8);
        let gl: Vec<(f64, f64)> = rule.mapped(0.0, 1.0).collect();
        let p = 1.0 + 2.0 * s;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xc = xi[i];
                let mut row = vec![0.0; n];
                let mut diag = 0.0;
                for m in 0..n - 1 {
                    let st = stencil_start(m, n);
                    let nodes = [xi[st], xi[st + 1], xi[st + 2], xi[st + 3]];
                    let (a, b) = (xi[m], xi[m + 1]);
                    if m == i || m + 1 == i {
                        for (k, c) in moment_coefficients(&nodes, xc, a, b, s).iter().enumerate() {
                            row[st + k] += c;
                        }
                    } else {
                        let len = b - a;
                        for &(t, w) in &gl {
                            let y = a + t * len;
                            let kw = w * len * (y - xc).abs().powf(-p);
                            let l = lagrange4(&nodes, y);
                            for k in 0..4 {
                                row[st + k] += kw * l[k];
                            }
                            diag -= kw;
                        }
                    }
                }
                row[i] += diag;
                row
            })
            .collect();
        let mut matrix = vec![0.0; n * n];
        for (i, r) in rows.into_iter().enumerate() {
            matrix[i * n..(i + 1) * n].copy_from_slice(&r);
        }

        let l_left = -xi[0];
        let l_right = xi[n - 1];
        if l_left <= 0.0 || l_right <= 0.0 {
            return Err(Error::Invalid("grid must straddle the origin for algebraic tails".into()));
        }
        let side = |len: f64, dist: &(dyn Fn(usize) -> f64 + Sync), sign: f64| -> TailCoefficients {
            let coef: Vec<(f64, f64)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let d = dist(i);
                    let pw = if d > 0.0 { d.powf(-2.0 * s) / (2.0 * s) } else { 0.0 };
                    let g = len.powf(-4.0 * s) * tail_remainder(d / len, s);
                    (pw, sign * (len.powf(-2.0 * s) * pw + g))
                })
                .collect();
            TailCoefficients { limit: coef.iter().map(|c| c.0).collect(), power: coef.iter().map(|c| c.1).collect() }
        };
        let right = side(l_right, &|i| l_right - xi[i], 1.0);
        let left = side(l_left, &|i| xi[i] + l_left, -1.0);
        for i in 0..n {
            matrix[i * n + i] -= left.limit[i] + right.limit[i];
        }
        Ok(Self { n, matrix, left, right, s })
    }

    fn assemble_periodic(xi: &[f64], s: f64) -> Self {
        let n = xi.len();
        let h = xi[1] - xi[0];
        let period = n as f64 * h;
        let p = 1.0 + 2.0 * s;
        let image = |t: f64| {
            period.powf(-p) * (hurwitz_zeta(p, 1.0 + t / period) + hurwitz_zeta(p, 1.0 - t / period))
        };
        let rule = GaussRule::new(8);
        let lo = -((n / 2) as isize);
        let mut row = vec![0.0; n];
        let mut diag = 0.0;
        let local = [-1.0, 0.0, 1.0, 2.0];
        for k in lo..lo + n as isize {
            let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
            let nodes = local.map(|q| (q + k as f64) * h);
            let idx = |q: usize| (k - 1 + q as isize).rem_euclid(n as isize) as usize;
            let adjacent = k == 0 || k == -1;
            if adjacent {
                for (q, c) in moment_coefficients(&nodes, 0.0, a, b, s).iter().enumerate() {
                    row[idx(q)] += c;
                }
            }
            for (y, w) in rule.mapped(a, b) {
                let kw = w * if adjacent { image(y) } else { y.abs().powf(-p) + image(y) };
                let l = lagrange4(&nodes, y);
                for q in 0..4 {
                    row[idx(q)] += kw * l[q];
                }
                diag -= kw;
            }
        }
        row[0] += diag;
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                matrix[i * n + j] = row[(j + n - i) % n];
            }
        }
        let zeros = TailCoefficients { limit: vec![0.0; n], power: vec![0.0; n] };
        Self { n, matrix, left: zeros.clone(), right: zeros, s }
    }

    pub fn apply(&self, u: &[f64], left: Tail, right: Tail) -> Vec<f64> {
        let n = self.n;
        let (al, bl) = (left.limit().unwrap_or(0.0), left.power_coefficient());
        let (ar, br) = (right.limit().unwrap_or(0.0), right.power_coefficient());
        (0..n)
            .map(|i| {
                let row = &self.matrix[i * n..(i + 1) * n];
                let interior: f64 = row.iter().zip(u).map(|(m, v)| m * v).sum();
                interior
                    + al * self.left.limit[i]
                    + bl * self.left.power[i]
                    + ar * self.right.limit[i]
                    + br * self.right.power[i]
            })
            .collect()
    }
}

fn stencil_start(m: usize, n: usize) -> usize {
    m.saturating_sub(1).min(n - 4)
}

/// Lagrange basis values for four nodes.
fn lagrange4(x: &[f64; 4], y: f64) -> [f64; 4] {
    let mut out = [1.0; 4];
    for k in 0..4 {
        for l in 0..4 {
            if l != k {
                out[k] *= (y - x[l]) / (x[k] - x[l]);
            }
        }
    }
    out
}

/// Exact `∫_a^b (ℓ_k(y) - ℓ_k(xc)) |y - xc|^{-1-2s} dy` for each cubic Lagrange basis polynomial,
/// where `xc` is an endpoint of [a, b] and one of the stencil nodes.
fn moment_coefficients(x: &[f64; 4], xc: f64, a: f64, b: f64, s: f64) -> [f64; 4] {
    let (sign, len): (f64, f64) = if (a - xc).abs() < (b - xc).abs() { (1.0, b - xc) } else { (-1.0, xc - a) };
    // ∫ over t in (0, len) (or (-len, 0)) of t^j |t|^{-1-2s}
    let mom = |j: i32| sign.powi(j) * len.powf(j as f64 - 2.0 * s) / (j as f64 - 2.0 * s);
    let mut out = [0.0; 4];
    for k in 0..4 {
        // ℓ_k(xc + t) = Π_{l≠k} (t + (xc - x_l)) / (x_k - x_l), expanded in powers of t
        let mut poly = [1.0, 0.0, 0.0, 0.0];
        let mut denom = 1.0;
        let mut deg = 0;
        for l in 0..4 {
            if l == k {
                continue;
            }
            let c = xc - x[l];
            let mut next = [0.0; 4];
            for d in 0..=deg {
                next[d] += poly[d] * c;
                next[d + 1] += poly[d];
            }
            poly = next;
            deg += 1;
            denom *= x[k] - x[l];
        }
        out[k] = (1..=3).map(|j| poly[j] * mom(j as i32)).sum::<f64>() / denom;
    }
    out
}

/// Apply the 1D operator to a profile; the result carries algebraic tails matched at the grid ends.
pub fn frac_lap_1d(profile: &Profile1D, order: FracOrder) -> Result<Profile1D> {
    if order.n != 1 {
        return Err(Error::FracOrder(format!("the 1D operator needs n = 1 (got {})", order.n)));
    }
    profile.validate()?;
    let left = profile.left.ok_or(Error::MissingTail("left"))?;
    let right = profile.right.ok_or(Error::MissingTail("right"))?;
    let op = Operator1D::assemble(&profile.xi, order.s, profile.is_periodic())?;
    let values = op.apply(&profile.values, left, right);
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(k));
    }
    let (lt, rt) = if profile.is_periodic() {
        (Tail::Periodic, Tail::Periodic)
    } else {
        let s = order.s;
        let n = values.len();
        (
            Tail::Algebraic { a: 0.0, b: -values[0] * (-profile.xi[0]).powf(2.0 * s) },
            Tail::Algebraic { a: 0.0, b: values[n - 1] * profile.xi[n - 1].powf(2.0 * s) },
        )
    };
    Ok(Profile1D { xi: profile.xi.clone(), values, left: Some(lt), right: Some(rt), s: order.s })
}

/// Ridge comparison between the truncated planar quadrature and the truncated line integral.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RidgeReport {
    pub direction: [i64; 2],
    pub grid: usize,
    pub radius: f64,
    /// `sup_x |I_R[v(e·x)] - J_R(e·x)|` over all grid points.
    pub defect: f64,
    /// `sup |I_1 v|` of the untruncated line operator.
    pub scale: f64,
}

/// `J_R(t) = ∫_{-R}^{R} (v(t + |e|τ) - v(t)) |τ|^{-1-2s} Θ(R/|τ|) dτ`, the exact planar operator truncated to
/// the disk of radius R, applied to the ridge `v(e·x)`.
pub fn ridge_line_integral<F: Fn(f64) -> f64>(v: &F, t: f64, e_len: f64, radius: f64, s: f64) -> Result<f64> {
    let vt = v(t);
    let f = |tau: f64| {
        if tau <= 0.0 {
            return 0.0;
        }
        (v(t + e_len * tau) + v(t - e_len * tau) - 2.0 * vt)
            * tau.powf(-1.0 - 2.0 * s)
            * ridge_truncation_factor(radius / tau, s)
    };
    // Below τ0 the second difference is replaced by its Taylor term to avoid cancellation.
    let tau0 = 1e-3 * radius;
    let step = 1e-3;
    let d2 = (-v(t + 2.0 * step) + 16.0 * v(t + step) - 30.0 * vt + 16.0 * v(t - step) - v(t - 2.0 * step))
        / (12.0 * step * step);
    let e = 2.0 - 2.0 * s;
    let mut total = d2 * e_len * e_len * beta(0.5, s + 0.5) * tau0.powf(e) / e;
    let pieces = 16;
    for k in 0..pieces {
        let a = tau0 + (radius - tau0) * k as f64 / pieces as f64;
        let b = tau0 + (radius - tau0) * (k + 1) as f64 / pieces as f64;
        total += adaptive(f, a, b, 1e-13, 1e-11)?.value;
    }
    Ok(total)
}

/// Compare the planar direct quadrature of a ridge `v(e·x)` on the unit torus against the line integral.
/// `v` must be 1-periodic so that the ridge is periodic for integer directions.
pub fn ridge_identity_check<F: Fn(f64) -> f64 + Sync>(
    order: FracOrder,
    grid: usize,
    direction: [i64; 2],
    radius: f64,
    v: F,
) -> Result<RidgeReport> {
    let s = order.s;
    let h = 1.0 / grid as f64;
    let (e0, e1) = (direction[0], direction[1]);
    let field = ScalarField::from_fn2(grid, 1.0, |x, y| v(e0 as f64 * x + e1 as f64 * y));
    let weights = KernelWeights::new(order.with_dim(2), h, radius)?;
    let (direct, _) = frac_lap_nd_direct_field(&field, &weights)?;
    let e_len = ((e0 * e0 + e1 * e1) as f64).sqrt();
    let oracle: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|k| ridge_line_integral(&v, k as f64 * h, e_len, radius, s))
        .collect::<Result<_>>()?;
    let g = grid as i64;
    let mut defect: f64 = 0.0;
    for i in 0..grid {
        for j in 0..grid {
            let k = (e0 * i as i64 + e1 * j as i64).rem_euclid(g) as usize;
            defect = defect.max((direct.at2(i, j) - oracle[k]).abs());
        }
    }
    let xi: Vec<f64> = (0..grid).map(|k| k as f64 * h).collect();
    let values = xi.iter().map(|&t| v(t)).collect();
    let line = Profile1D::new(xi, values, Tail::Periodic, Tail::Periodic, s)?;
    let scale = frac_lap_1d(&line, order.with_dim(1))?.values.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
    Ok(RidgeReport { direction, grid, radius, defect, scale })
}

/// A smooth, compactly supported, 1-periodic bump centered at ½ with half-width `w`.
pub fn periodic_bump(w: f64) -> impl Fn(f64) -> f64 + Sync + Copy {
    move |t: f64| {
        let r = (t.rem_euclid(1.0) - 0.5) / w;
        if r.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - r * r)).exp()
        }
    }
}

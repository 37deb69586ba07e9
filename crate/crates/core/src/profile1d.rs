//! One-dimensional sampled profiles with analytic far-field descriptors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Far-field behaviour beyond the last sample on one side.
///
/// `Algebraic { a, b }` stands for `a + b ξ|ξ|^{-2s-1}`, i.e. `a + b ξ^{-2s}` on the right
/// and `a - b |ξ|^{-2s}` on the left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Tail {
    Constant(f64),
    Algebraic { a: f64, b: f64 },
    /// The samples cover exactly one period of a periodic function on a uniform grid.
    Periodic,
}

impl Tail {
    pub fn limit(&self) -> Option<f64> {
        match *self {
            Tail::Constant(a) | Tail::Algebraic { a, .. } => Some(a),
            Tail::Periodic => None,
        }
    }

    pub fn power_coefficient(&self) -> f64 {
        match *self {
            Tail::Algebraic { b, .. } => b,
            _ => 0.0,
        }
    }

    fn eval(&self, xi: f64, s: f64) -> f64 {
        match *self {
            Tail::Constant(a) => a,
            Tail::Algebraic { a, b } => a + b * xi.signum() * xi.abs().powf(-2.0 * s),
            Tail::Periodic => f64::NAN,
        }
    }

    fn eval_derivative(&self, xi: f64, s: f64) -> f64 {
        match *self {
            Tail::Algebraic { b, .. } => -2.0 * s * b * xi.abs().powf(-2.0 * s - 1.0),
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile1D {
    pub xi: Vec<f64>,
    pub values: Vec<f64>,
    pub left: Option<Tail>,
    pub right: Option<Tail>,
    /// Exponent parameter of the algebraic tails.
    pub s: f64,
}

impl Profile1D {
    pub fn new(xi: Vec<f64>, values: Vec<f64>, left: Tail, right: Tail, s: f64) -> Result<Self> {
        let p = Self { xi, values, left: Some(left), right: Some(right), s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.xi.len() != self.values.len() {
            return Err(Error::Shape(format!("{} nodes vs {} values", self.xi.len(), self.values.len())));
        }
        if self.xi.len() < 4 {
            return Err(Error::Invalid("a profile needs at least 4 samples".into()));
        }
        if let Some(k) = self.xi.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(format!("grid not strictly increasing at index {k}")));
        }
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        if self.left.is_none() {
            return Err(Error::MissingTail("left"));
        }
        if self.right.is_none() {
            return Err(Error::MissingTail("right"));
        }
        let periodic = matches!(self.left, Some(Tail::Periodic)) || matches!(self.right, Some(Tail::Periodic));
        if periodic {
            if self.left != Some(Tail::Periodic) || self.right != Some(Tail::Periodic) {
                return Err(Error::Invalid("periodic tails must be declared on both sides".into()));
            }
            let h = self.xi[1] - self.xi[0];
            if self.xi.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
                return Err(Error::Invalid("periodic profiles need a uniform grid".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn is_periodic(&self) -> bool {
        self.right == Some(Tail::Periodic)
    }

    pub fn left_end(&self) -> f64 {
        self.xi[0]
    }

    pub fn right_end(&self) -> f64 {
        *self.xi.last().unwrap()
    }

    pub fn period(&self) -> Option<f64> {
        self.is_periodic().then(|| self.xi.len() as f64 * (self.xi[1] - self.xi[0]))
    }

    pub fn with_values(&self, values: Vec<f64>, left: Tail, right: Tail) -> Self {
        Self { xi: self.xi.clone(), values, left: Some(left), right: Some(right), s: self.s }
    }

    /// Locate the interval index m with xi[m] <= x < xi[m+1].
    fn interval(&self, x: f64) -> usize {
        let n = self.xi.len();
        match self.xi.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(k) => k.min(n - 2),
            Err(k) => k.saturating_sub(1).min(n - 2),
        }
    }

    /// Monotone (Fritsch–Carlson) cubic Hermite slopes at the nodes.
    pub fn pchip_slopes(&self) -> Vec<f64> {
        pchip_slopes(&self.xi, &self.values)
    }

    /// Evaluate with the tail descriptors outside the sampled range.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with(x, &self.pchip_slopes())
    }

    pub fn eval_with(&self, x: f64, slopes: &[f64]) -> f64 {
        let n = self.xi.len();
        if self.is_periodic() {
            let p = self.period().unwrap();
            let x0 = self.xi[0];
            let t = (x - x0).rem_euclid(p);
            return periodic_cubic(&self.values, self.xi[1] - self.xi[0], t);
        }
        if x <= self.xi[0] {
            return self.left.unwrap().eval(x, self.s);
        }
        if x >= self.xi[n - 1] {
            return self.right.unwrap().eval(x, self.s);
        }
        let m = self.interval(x);
        hermite(self.xi[m], self.xi[m + 1], self.values[m], self.values[m + 1], slopes[m], slopes[m + 1], x)
    }

    /// Derivative of the monotone interpolant (tails differentiated analytically).
    pub fn eval_derivative_with(&self, x: f64, slopes: &[f64]) -> f64 {
        let n = self.xi.len();
        if x <= self.xi[0] {
            return self.left.unwrap().eval_derivative(x, self.s);
        }
        if x >= self.xi[n - 1] {
            return self.right.unwrap().eval_derivative(x, self.s);
        }
        let m = self.interval(x);
        hermite_derivative(self.xi[m], self.xi[m + 1], self.values[m], self.values[m + 1], slopes[m], slopes[m + 1], x)
    }

    /// First crossing of `level` by linear search plus monotone-interpolant bisection.
    pub fn crossing(&self, level: f64) -> Option<f64> {
        let slopes = self.pchip_slopes();
        let k = self.values.windows(2).position(|w| (w[0] - level) * (w[1] - level) <= 0.0)?;
        let (mut a, mut b) = (self.xi[k], self.xi[k + 1]);
        let fa = self.values[k] - level;
        if fa == 0.0 {
            return Some(a);
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let fm = self.eval_with(m, &slopes) - level;
            if fm == 0.0 || (b - a) < 1e-15 * (1.0 + m.abs()) {
                return Some(m);
            }
            if fm.signum() == fa.signum() {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }
}

pub fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if del[k - 1] * del[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let mut v = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if v.signum() != d0.signum() {
            v = 0.0;
        } else if d0.signum() != d1.signum() && v.abs() > 3.0 * d0.abs() {
            v = 3.0 * d0;
        }
        v
    };
    if n > 2 {
        d[0] = end(h[0], h[1], del[0], del[1]);
        d[n - 1] = end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    } else {
        d[0] = del[0];
        d[1] = del[0];
    }
    d
}

#[inline]
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * d1
}

#[inline]
fn hermite_derivative(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    ((6.0 * t2 - 6.0 * t) * y0 + (6.0 * t - 6.0 * t2) * y1) / h + (3.0 * t2 - 4.0 * t + 1.0) * d0 + (3.0 * t2 - 2.0 * t) * d1
}

/// Four-point Lagrange interpolation on a periodic uniform grid; `t` measured from node 0.
fn periodic_cubic(values: &[f64], h: f64, t: f64) -> f64 {
    let n = values.len() as isize;
    let m = (t / h).floor() as isize;
    let r = t / h - m as f64;
    let at = |k: isize| values[k.rem_euclid(n) as usize];
    let (p0, p1, p2, p3) = (at(m - 1), at(m), at(m + 1), at(m + 2));
    let l0 = -r * (r - 1.0) * (r - 2.0) / 6.0;
    let l1 = (r + 1.0) * (r - 1.0) * (r - 2.0) / 2.0;
    let l2 = -(r + 1.0) * r * (r - 2.0) / 2.0;
    let l3 = (r + 1.0) * r * (r - 1.0) / 6.0;
    l0 * p0 + l1 * p1 + l2 * p2 + l3 * p3
}

/// Uniform lookup table for fast evaluation of a profile on a bounded argument range.
#[derive(Clone, Debug)]
pub struct ProfileTable {
    lo: f64,
    inv_step: f64,
    table: Vec<f64>,
    profile: Profile1D,
    slopes: Vec<f64>,
}

impl ProfileTable {
    /// Tabulate on [lo, hi] with `n` intervals; outside the range the exact evaluator is used.
    pub fn new(profile: &Profile1D, lo: f64, hi: f64, n: usize) -> Self {
        let slopes = profile.pchip_slopes();
        let step = (hi - lo) / n as f64;
        let table = (0..=n).map(|k| profile.eval_with(lo + k as f64 * step, &slopes)).collect();
        Self { lo, inv_step: 1.0 / step, table, profile: profile.clone(), slopes }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.lo) * self.inv_step;
        if t >= 0.0 && t < (self.table.len() - 1) as f64 {
            let k = t as usize;
            let r = t - k as f64;
            self.table[k] + r * (self.table[k + 1] - self.table[k])
        } else {
            self.profile.eval_with(x, &self.slopes)
        }
    }
}

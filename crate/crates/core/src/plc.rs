//! Concave piecewise-linear log-densities.
//!
//! Both maximum-likelihood estimators in this crate return a
//! [`PiecewiseLogLinearDensity`]: a log-density that is linear between knots,
//! concave overall, and `-∞` outside `[t₀, t_k]`. Everything here is exact up to
//! floating point: masses and CDFs come from closed-form segment integrals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expint::{moment, segment_mass_unchecked};
use crate::quad;

/// Slope magnitude below which a segment counts as flat.
pub const FLAT_SLOPE_TOL: f64 = 1e-10;

const CONCAVITY_TOL: f64 = 1e-10;

/// A univariate density known through its log-density and CDF.
///
/// Implemented by fitted densities as well as by the analytic reference families,
/// so divergences and projection checks can mix the two.
pub trait Density: Sync {
    /// Natural log of the density; `-∞` outside the support.
    fn log_density(&self, x: f64) -> f64;

    fn cdf(&self, x: f64) -> f64;

    /// Closed support; endpoints may be infinite.
    fn support(&self) -> (f64, f64);

    /// Points where the log-density is not smooth (knots, kinks).
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// A point near the bulk of the mass, used to start tail searches.
    fn reference_point(&self) -> f64 {
        let (lo, hi) = self.support();
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        }
    }

    fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }
}

/// Interval outside of which each tail carries at most `eps` mass.
pub fn effective_support(d: &dyn Density, eps: f64) -> (f64, f64) {
    let (lo, hi) = d.support();
    let x0 = d.reference_point();
    let lo = if lo.is_finite() {
        lo
    } else {
        let mut step = 1.0;
        let mut x = x0 - step;
        while d.cdf(x) > eps && step < 1e12 {
            step *= 2.0;
            x = x0 - step;
        }
        x
    };
    let hi = if hi.is_finite() {
        hi
    } else {
        let mut step = 1.0;
        let mut x = x0 + step;
        while 1.0 - d.cdf(x) > eps && step < 1e12 {
            step *= 2.0;
            x = x0 + step;
        }
        x
    };
    (lo, hi)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DensityRepr {
    knots: Vec<f64>,
    values: Vec<f64>,
}

/// `exp(φ)` on `[t₀, t_k]` with `φ` concave and linear between knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityRepr", into = "DensityRepr")]
pub struct PiecewiseLogLinearDensity {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// `cum[j]` is the mass of `[t₀, t_j]`.
    cum: Vec<f64>,
}

impl TryFrom<DensityRepr> for PiecewiseLogLinearDensity {
    type Error = Error;

    fn try_from(r: DensityRepr) -> Result<Self> {
        Self::new(r.knots, r.values)
    }
}

impl From<PiecewiseLogLinearDensity> for DensityRepr {
    fn from(d: PiecewiseLogLinearDensity) -> Self {
        DensityRepr {
            knots: d.knots,
            values: d.values,
        }
    }
}

/// Modal interval `[modal_lo, modal_hi]` and the mode, its left end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub modal_lo: f64,
    pub modal_hi: f64,
    pub mode: f64,
    pub max_log_density: f64,
}

impl PiecewiseLogLinearDensity {
    /// Validates knot ordering, finiteness and concavity.
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::invalid("knots and values differ in length"));
        }
        if knots.len() < 2 {
            return Err(Error::invalid("a density needs at least two knots"));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("knots and values must be finite"));
        }
        if knots.windows(2).any(|w| w[1] - w[0] <= 0.0) {
            return Err(Error::invalid("knots must be strictly increasing"));
        }
        let d = Self::from_parts(knots, values);
        let s = d.slopes();
        for w in s.windows(2) {
            if w[1] > w[0] + CONCAVITY_TOL * (1.0 + w[0].abs()) {
                return Err(Error::invalid(format!(
                    "log-density is not concave: slope {} follows {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(d)
    }

    pub(crate) fn from_parts(knots: Vec<f64>, values: Vec<f64>) -> Self {
        let mut cum = Vec::with_capacity(knots.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for j in 0..knots.len() - 1 {
            acc += segment_mass_unchecked(values[j], values[j + 1], knots[j + 1] - knots[j]);
            cum.push(acc);
        }
        PiecewiseLogLinearDensity { knots, values, cum }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lower(&self) -> f64 {
        self.knots[0]
    }

    pub fn upper(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| (v[1] - v[0]) / (t[1] - t[0]))
            .collect()
    }

    /// `min_j (s_j − s_{j+1})`; non-negative for a concave log-density.
    pub fn concavity_slack(&self) -> f64 {
        self.slopes()
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min)
    }

    /// Linear interpolation of the knot values; `-∞` off the support.
    pub fn eval_log(&self, x: f64) -> f64 {
        if !(x >= self.lower() && x <= self.upper()) {
            return f64::NEG_INFINITY;
        }
        let j = self.segment_index(x);
        let (t0, t1) = (self.knots[j], self.knots[j + 1]);
        let (v0, v1) = (self.values[j], self.values[j + 1]);
        let lam = (x - t0) / (t1 - t0);
        if lam <= 0.5 {
            v0 + lam * (v1 - v0)
        } else {
            v1 + (1.0 - lam) * (v0 - v1)
        }
    }

    /// Index `j` of the segment `[t_j, t_{j+1}]` containing `x` (clamped).
    fn segment_index(&self, x: f64) -> usize {
        let k = self.knots.len();
        let p = self.knots.partition_point(|&t| t <= x);
        p.clamp(1, k - 1) - 1
    }

    pub fn total_mass(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Mass of `(-∞, x]`; equals `total_mass()` at and beyond the upper knot.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower() {
            return 0.0;
        }
        if x >= self.upper() {
            return self.total_mass();
        }
        let j = self.segment_index(x);
        let t0 = self.knots[j];
        if x == t0 {
            return self.cum[j];
        }
        self.cum[j] + segment_mass_unchecked(self.values[j], self.eval_log(x), x - t0)
    }

    /// `∫ y e^{φ(y)} dy` (the mean when normalized).
    pub fn first_moment(&self) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.knots.len() - 1 {
            let len = self.knots[j + 1] - self.knots[j];
            let (u, v) = (self.values[j], self.values[j + 1]);
            acc += self.knots[j] * (self.cum[j + 1] - self.cum[j])
                + len * len * v.exp() * moment(1, u - v);
        }
        acc
    }

    /// `∫_{-∞}^x F(y) dy = ∫ (x − y)₊ e^{φ(y)} dy`.
    pub fn integrated_cdf(&self, x: f64) -> f64 {
        if x <= self.lower() {
            return 0.0;
        }
        let mut acc = 0.0;
        for j in 0..self.knots.len() - 1 {
            let t0 = self.knots[j];
            if t0 >= x {
                break;
            }
            let t1 = self.knots[j + 1].min(x);
            let len = t1 - t0;
            let u = self.values[j];
            let v = if t1 == self.knots[j + 1] {
                self.values[j + 1]
            } else {
                self.eval_log(t1)
            };
            let mass = segment_mass_unchecked(u, v, len);
            acc += (x - t1) * mass + len * len * u.exp() * moment(1, v - u);
        }
        acc
    }

    /// Copy shifted by a constant so that the total mass is one.
    pub fn normalized(&self) -> Self {
        let shift = self.total_mass().ln();
        let values = self.values.iter().map(|v| v - shift).collect();
        Self::from_parts(self.knots.clone(), values)
    }

    /// Density of `σX + μ` when `X` has this density (`σ > 0`).
    pub fn affine_image(&self, scale: f64, shift: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && shift.is_finite()) {
            return Err(Error::invalid("affine map needs a positive finite scale"));
        }
        let knots = self.knots.iter().map(|t| scale * t + shift).collect();
        let values = self.values.iter().map(|v| v - scale.ln()).collect();
        Ok(Self::from_parts(knots, values))
    }

    pub fn mode_summary(&self) -> ModeSummary {
        let mut best = 0;
        for (j, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = j;
            }
        }
        let s = self.slopes();
        let mut lo = best;
        while lo > 0 && s[lo - 1].abs() <= FLAT_SLOPE_TOL {
            lo -= 1;
        }
        let mut hi = best;
        while hi < s.len() && s[hi].abs() <= FLAT_SLOPE_TOL {
            hi += 1;
        }
        ModeSummary {
            modal_lo: self.knots[lo],
            modal_hi: self.knots[hi],
            mode: self.knots[lo],
            max_log_density: self.values[best],
        }
    }
}

impl Density for PiecewiseLogLinearDensity {
    fn log_density(&self, x: f64) -> f64 {
        self.eval_log(x)
    }

    fn cdf(&self, x: f64) -> f64 {
        PiecewiseLogLinearDensity::cdf(self, x)
    }

    fn support(&self) -> (f64, f64) {
        (self.lower(), self.upper())
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.knots.clone()
    }
}

/// `K(f, g) = ∫ f log(f/g)`; `+∞` when `f` puts mass where `g` vanishes.
///
/// Adaptive Simpson between the knots of both arguments, absolute tolerance 1e-9.
/// Infinite supports of `f` are truncated where each tail holds below 1e-15.
pub fn kl_divergence(f: &dyn Density, g: &dyn Density) -> f64 {
    let (flo, fhi) = effective_support(f, 1e-15);
    let (glo, ghi) = g.support();
    let slack = |x: f64| 1e-12 * (1.0 + x.abs());
    if flo < glo - slack(glo) || fhi > ghi + slack(ghi) {
        return f64::INFINITY;
    }
    let (a, b) = (flo.max(glo), fhi.min(ghi));
    let mut breaks = f.breakpoints();
    breaks.extend(g.breakpoints());
    let integrand = |x: f64| {
        let lf = f.log_density(x);
        if lf == f64::NEG_INFINITY {
            return 0.0;
        }
        let lg = g.log_density(x);
        if lg == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        lf.exp() * (lf - lg)
    };
    let v = quad::integrate_split(&integrand, a, b, &breaks, 64, 1e-9);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v.max(0.0)
    }
}

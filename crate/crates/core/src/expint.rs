//! Exponential integrals over a single linear segment.
//!
//! On a segment of length `len` where the log-density runs linearly from `a`
//! to `b`, every quantity the solvers need reduces to the moments
//!
//! ```text
//! h_k(d) = ∫₀¹ (1 − t)^k e^{d t} dt,   d = b − a,
//! ```
//!
//! evaluated without cancellation for small `|d|`.

use crate::error::{Error, Result};

/// Below this gap the closed form of the segment integral is replaced by its series.
pub const SERIES_SWITCH: f64 = 1e-8;

/// `∫ e^φ` over one segment where `φ` is linear from `a` to `b`.
///
/// Symmetric in `(a, b)`. The closed form is evaluated from the larger endpoint
/// with `expm1`, so it stays accurate right down to the series switchover.
pub fn segment_mass(a: f64, b: f64, len: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && len.is_finite()) {
        return Err(Error::invalid("segment_mass requires finite inputs"));
    }
    if len <= 0.0 {
        return Err(Error::invalid("segment length must be positive"));
    }
    Ok(segment_mass_unchecked(a, b, len))
}

#[inline]
pub(crate) fn segment_mass_unchecked(a: f64, b: f64, len: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let d = hi - lo;
    if d < SERIES_SWITCH {
        len * (0.5 * (lo + hi)).exp() * (1.0 + d * d / 24.0)
    } else {
        len * hi.exp() * (-(-d).exp_m1()) / d
    }
}

/// `h_k(d)` for `k ∈ {0, 1, 2}`.
#[inline]
pub(crate) fn moment(k: u32, d: f64) -> f64 {
    if d.abs() < 1.0 {
        return moment_series(k, d);
    }
    let h0 = d.exp_m1() / d;
    match k {
        0 => h0,
        1 => (h0 - 1.0) / d,
        2 => (2.0 * (h0 - 1.0) / d - 1.0) / d,
        _ => unreachable!("only moments up to order 2 are used"),
    }
}

fn moment_series(k: u32, d: f64) -> f64 {
    // k! Σ_j d^j / (k + j + 1)!
    let mut term = 1.0 / f64::from(k + 1);
    let mut sum = term;
    for j in 0..40u32 {
        term *= d / f64::from(k + j + 2);
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// Value, gradient and Hessian of `len · ∫₀¹ e^{(1−t)u + t v} dt` in `(u, v)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SegmentTerms {
    pub value: f64,
    pub du: f64,
    pub dv: f64,
    pub duu: f64,
    pub duv: f64,
    pub dvv: f64,
}

#[inline]
pub(crate) fn segment_terms(u: f64, v: f64, len: f64) -> SegmentTerms {
    let d = v - u;
    let eu = u.exp();
    let ev = v.exp();
    let du = len * eu * moment(1, d);
    let dv = len * ev * moment(1, -d);
    let duu = len * eu * moment(2, d);
    let dvv = len * ev * moment(2, -d);
    // ∫ t(1−t) e^{…}: take the difference on the side where the mass is smaller.
    let duv = if d >= 0.0 { du - duu } else { dv - dvv };
    SegmentTerms {
        value: segment_mass_unchecked(u, v, len),
        du,
        dv,
        duu,
        duv,
        dvv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_moment(k: i32, d: f64) -> f64 {
        // composite Simpson, fine enough for a smooth integrand on [0, 1]
        let n = 20_000;
        let h = 1.0 / n as f64;
        let f = |t: f64| (1.0 - t).powi(k) * (d * t).exp();
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            let t = i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
        }
        s * h / 3.0
    }

    #[test]
    fn segment_mass_examples() {
        assert_eq!(segment_mass(0.0, 0.0, 1.0).unwrap(), 1.0);
        let v = segment_mass(0.0, 2f64.ln(), 1.0).unwrap();
        assert!((v - 1.0 / 2f64.ln()).abs() < 1e-15);
        let v = segment_mass(0.0, 1e-10, 1.0).unwrap();
        assert!(((v - (1.0 + 5e-11)) / v).abs() < 1e-13);
    }

    #[test]
    fn segment_mass_rejects_non_finite() {
        assert!(segment_mass(f64::NAN, 0.0, 1.0).is_err());
        assert!(segment_mass(0.0, f64::INFINITY, 1.0).is_err());
        assert!(segment_mass(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn switchover_is_seamless() {
        for &a in &[-3.0, 0.0, 2.5] {
            for f in [0.999, 1.001] {
                let b: f64 = a + SERIES_SWITCH * f;
                let d = b - a;
                let exact = a.exp() * (1.0 + d / 2.0 + d * d / 6.0);
                let got = segment_mass(a, b, 1.0).unwrap();
                assert!(((got - exact) / exact).abs() < 1e-12, "a={a} f={f}");
            }
        }
    }

    #[test]
    fn moments_match_quadrature() {
        for &d in &[-30.0, -3.0, -1.0, -0.999, -0.3, -1e-6, 0.0, 1e-7, 0.5, 0.999, 1.0, 4.0, 20.0] {
            for k in 0..3 {
                let want = quad_moment(k, d);
                let got = moment(k as u32, d);
                assert!(((got - want) / want).abs() < 1e-10, "k={k} d={d}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn segment_terms_match_finite_differences() {
        let (u, v, len) = (-0.7, 0.4, 1.3);
        let t = segment_terms(u, v, len);
        let h = 1e-5;
        let f = |u: f64, v: f64| segment_mass_unchecked(u, v, len);
        let fu = (f(u + h, v) - f(u - h, v)) / (2.0 * h);
        let fv = (f(u, v + h) - f(u, v - h)) / (2.0 * h);
        assert!((t.du - fu).abs() < 1e-8);
        assert!((t.dv - fv).abs() < 1e-8);
        let g = |u: f64, v: f64| segment_terms(u, v, len);
        let fuu = (g(u + h, v).du - g(u - h, v).du) / (2.0 * h);
        let fuv = (g(u, v + h).du - g(u, v - h).du) / (2.0 * h);
        let fvv = (g(u, v + h).dv - g(u, v - h).dv) / (2.0 * h);
        assert!((t.duu - fuu).abs() < 1e-8);
        assert!((t.duv - fuv).abs() < 1e-8);
        assert!((t.dvv - fvv).abs() < 1e-8);
    }
}

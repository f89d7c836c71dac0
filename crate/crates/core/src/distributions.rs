//! Reference families with closed-form mode constants, and the projection of the
//! Laplace density onto densities with a misplaced mode.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Open01};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::plc::{kl_divergence, Density};
use crate::rng::stream_rng;
use crate::sample::Sample;

/// `4! = 24`; the constants below are written in terms of it.
const FACT4: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ReferenceDistribution {
    Normal { mu: f64, sigma: f64 },
    Gamma { shape: f64, scale: f64 },
    Beta { a: f64, b: f64 },
    Weibull { shape: f64, scale: f64 },
    Laplace { mu: f64, b: f64 },
    Logistic { mu: f64, s: f64 },
    Gumbel { mu: f64, beta: f64 },
    ChiSquared { df: f64 },
    Uniform { a: f64, b: f64 },
}

/// Mode, density, and second derivatives of density and log-density at the mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Table1Constants {
    pub m: f64,
    pub f_m: f64,
    pub f2_m: f64,
    pub phi2_m: f64,
}

use ReferenceDistribution::*;

impl ReferenceDistribution {
    pub fn standard_normal() -> Self {
        Normal { mu: 0.0, sigma: 1.0 }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Normal { .. } => "normal",
            Gamma { .. } => "gamma",
            Beta { .. } => "beta",
            Weibull { .. } => "weibull",
            Laplace { .. } => "laplace",
            Logistic { .. } => "logistic",
            Gumbel { .. } => "gumbel",
            ChiSquared { .. } => "chisq",
            Uniform { .. } => "uniform",
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            Normal { mu, sigma } => vec![mu, sigma],
            Gamma { shape, scale } => vec![shape, scale],
            Beta { a, b } => vec![a, b],
            Weibull { shape, scale } => vec![shape, scale],
            Laplace { mu, b } => vec![mu, b],
            Logistic { mu, s } => vec![mu, s],
            Gumbel { mu, beta } => vec![mu, beta],
            ChiSquared { df } => vec![df],
            Uniform { a, b } => vec![a, b],
        }
    }

    fn validate(self) -> Result<Self> {
        let p = self.params();
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{self}: parameters must be finite")));
        }
        let positive = match self {
            Normal { sigma, .. } => sigma > 0.0,
            Gamma { shape, scale } | Weibull { shape, scale } => shape > 0.0 && scale > 0.0,
            Beta { a, b } => a > 0.0 && b > 0.0,
            Laplace { b, .. } => b > 0.0,
            Logistic { s, .. } => s > 0.0,
            Gumbel { beta, .. } => beta > 0.0,
            ChiSquared { df } => df > 0.0,
            Uniform { a, b } => b > a,
        };
        if positive {
            Ok(self)
        } else {
            Err(Error::invalid(format!("{self}: invalid parameters")))
        }
    }

    /// Left end of the modal interval, when the density has one.
    pub fn mode(&self) -> Option<f64> {
        match *self {
            Normal { mu, .. } | Laplace { mu, .. } | Logistic { mu, .. } | Gumbel { mu, .. } => Some(mu),
            Gamma { shape, scale } => Some((shape - 1.0).max(0.0) * scale),
            ChiSquared { df } => Some((df - 2.0).max(0.0)),
            Beta { a, b } if a > 1.0 && b > 1.0 => Some((a - 1.0) / (a + b - 2.0)),
            Beta { .. } => None,
            Weibull { shape, scale } if shape > 1.0 => Some(scale * ((shape - 1.0) / shape).powf(1.0 / shape)),
            Weibull { .. } => Some(0.0),
            Uniform { a, .. } => Some(a),
        }
    }

    /// Second derivative of the log-density at `x`, where it is smooth.
    fn phi2(&self, x: f64) -> Option<f64> {
        match *self {
            Normal { sigma, .. } => Some(-1.0 / (sigma * sigma)),
            Gamma { shape, scale } => ChiSquaredOrGamma(shape, scale).phi2(x),
            ChiSquared { df } => ChiSquaredOrGamma(0.5 * df, 2.0).phi2(x),
            Beta { a, b } => Some(-(a - 1.0) / (x * x) - (b - 1.0) / ((1.0 - x) * (1.0 - x))),
            Weibull { shape: k, scale: l } => {
                Some(-(k - 1.0) / (x * x) - k * (k - 1.0) * x.powf(k - 2.0) / l.powf(k))
            }
            Logistic { s, .. } => Some(-2.0 * self.density(x) / s),
            Gumbel { mu, beta } => Some(-(-(x - mu) / beta).exp() / (beta * beta)),
            Laplace { .. } | Uniform { .. } => None,
        }
    }

    /// `(m, f₀(m), f₀″(m), φ₀″(m))`.
    pub fn table1_constants(&self) -> Result<Table1Constants> {
        let unsupported = || Error::UnsupportedFamily(format!("{self} has no curvature at its mode"));
        let m = self.mode().ok_or_else(unsupported)?;
        let phi2 = self.phi2(m).ok_or_else(unsupported)?;
        let f_m = self.density(m);
        if !(phi2.is_finite() && phi2 < 0.0 && f_m.is_finite() && f_m > 0.0) {
            return Err(unsupported());
        }
        Ok(Table1Constants {
            m,
            f_m,
            f2_m: f_m * phi2,
            phi2_m: phi2,
        })
    }

    fn curvature(&self) -> Result<Table1Constants> {
        self.table1_constants().map_err(|_| Error::UndefinedConstant(self.to_string()))
    }

    /// `C(f₀) = ((4!)² f₀(m) / f₀″(m)²)^{1/5}`.
    pub fn mode_constant_c(&self) -> Result<f64> {
        let t = self.curvature()?;
        Ok((FACT4 * FACT4 * t.f_m / (t.f2_m * t.f2_m)).powf(0.2))
    }

    /// `C(m, φ₀) = (|φ₀″(m)| / (4! f₀(m)²))^{1/5}`, the reciprocal of `γ₁γ₂²`.
    pub fn mode_constant_c_phi(&self) -> Result<f64> {
        let t = self.curvature()?;
        Ok((t.phi2_m.abs() / (FACT4 * t.f_m * t.f_m)).powf(0.2))
    }

    /// `(γ₁, γ₂)` of the local rescaling at the mode.
    pub fn scaling_constants(&self) -> Result<(f64, f64)> {
        let t = self.curvature()?;
        let a = t.phi2_m.abs();
        let g1 = (t.f_m.powi(4) * a.powi(3) / FACT4.powi(3)).powf(0.2);
        let g2 = (FACT4 * FACT4 / (t.f_m * a * a)).powf(0.2);
        Ok((g1, g2))
    }

    /// One draw from the distribution.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Normal { mu, sigma } => rand_distr::Normal::new(mu, sigma).unwrap().sample(rng),
            Gamma { shape, scale } => rand_distr::Gamma::new(shape, scale).unwrap().sample(rng),
            ChiSquared { df } => rand_distr::ChiSquared::new(df).unwrap().sample(rng),
            Beta { a, b } => rand_distr::Beta::new(a, b).unwrap().sample(rng),
            Weibull { shape, scale } => {
                let u: f64 = Open01.sample(rng);
                scale * (-u.ln()).powf(1.0 / shape)
            }
            Laplace { mu, b } => {
                let u: f64 = Open01.sample(rng);
                if u < 0.5 {
                    mu + b * (2.0 * u).ln()
                } else {
                    mu - b * (2.0 * (1.0 - u)).ln()
                }
            }
            Logistic { mu, s } => {
                let u: f64 = Open01.sample(rng);
                mu + s * (u / (1.0 - u)).ln()
            }
            Gumbel { mu, beta } => {
                let u: f64 = Open01.sample(rng);
                mu - beta * (-u.ln()).ln()
            }
            Uniform { a, b } => {
                let u: f64 = Open01.sample(rng);
                a + (b - a) * u
            }
        }
    }

    pub fn draw_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// `n` draws from stream 0 of `seed`, as a sorted sample.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        if n < 2 {
            return Err(Error::invalid("a sample needs at least two observations"));
        }
        let mut rng = stream_rng(seed, 0);
        Sample::from_observations(&self.draw_n(n, &mut rng))
    }
}

/// Gamma with shape `.0` and scale `.1`; shared by the chi-squared family.
struct ChiSquaredOrGamma(f64, f64);

impl ChiSquaredOrGamma {
    fn phi2(&self, x: f64) -> Option<f64> {
        (self.0 > 1.0 && x > 0.0).then(|| -(self.0 - 1.0) / (x * x))
    }

    fn log_density(&self, x: f64) -> f64 {
        let (k, th) = (self.0, self.1);
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        if x == 0.0 {
            return if k == 1.0 {
                -th.ln()
            } else if k < 1.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
        }
        (k - 1.0) * x.ln() - x / th - ln_gamma(k) - k * th.ln()
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            gamma_lr(self.0, x / self.1)
        }
    }
}

impl Density for ReferenceDistribution {
    fn log_density(&self, x: f64) -> f64 {
        match *self {
            Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
            }
            Gamma { shape, scale } => ChiSquaredOrGamma(shape, scale).log_density(x),
            ChiSquared { df } => ChiSquaredOrGamma(0.5 * df, 2.0).log_density(x),
            Beta { a, b } => {
                if !(x > 0.0 && x < 1.0) {
                    return f64::NEG_INFINITY;
                }
                (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
            }
            Weibull { shape: k, scale: l } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                (k / l).ln() + (k - 1.0) * (x / l).ln() - (x / l).powf(k)
            }
            Laplace { mu, b } => -(x - mu).abs() / b - (2.0 * b).ln(),
            Logistic { mu, s } => {
                let z = ((x - mu) / s).abs();
                -z - 2.0 * (-z).exp().ln_1p() - s.ln()
            }
            Gumbel { mu, beta } => {
                let z = (x - mu) / beta;
                -z - (-z).exp() - beta.ln()
            }
            Uniform { a, b } => {
                if x >= a && x <= b {
                    -(b - a).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match *self {
            Normal { mu, sigma } => 0.5 * erfc(-(x - mu) / (sigma * std::f64::consts::SQRT_2)),
            Gamma { shape, scale } => ChiSquaredOrGamma(shape, scale).cdf(x),
            ChiSquared { df } => ChiSquaredOrGamma(0.5 * df, 2.0).cdf(x),
            Beta { a, b } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    beta_reg(a, b, x)
                }
            }
            Weibull { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / scale).powf(shape)).exp_m1()
                }
            }
            Laplace { mu, b } => {
                let z = (x - mu) / b;
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
            Logistic { mu, s } => 1.0 / (1.0 + (-(x - mu) / s).exp()),
            Gumbel { mu, beta } => (-(-(x - mu) / beta).exp()).exp(),
            Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            Gamma { .. } | ChiSquared { .. } | Weibull { .. } => (0.0, f64::INFINITY),
            Beta { .. } => (0.0, 1.0),
            Uniform { a, b } => (a, b),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Laplace { mu, .. } => vec![mu],
            _ => Vec::new(),
        }
    }

    fn reference_point(&self) -> f64 {
        match *self {
            Uniform { a, b } => 0.5 * (a + b),
            Beta { a, b } => a / (a + b),
            _ => self.mode().unwrap_or(0.0),
        }
    }
}

impl fmt::Display for ReferenceDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p: Vec<String> = self.params().iter().map(|v| v.to_string()).collect();
        write!(f, "{}:{}", self.family(), p.join(","))
    }
}

impl From<ReferenceDistribution> for String {
    fn from(d: ReferenceDistribution) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for ReferenceDistribution {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ReferenceDistribution {
    type Err = Error;

    /// `family[:p1[,p2]]`, e.g. `normal:0,1`, `chisq:4`, `logistic`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n.trim(), r.trim()),
            None => (s.trim(), ""),
        };
        let params: Vec<f64> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("distribution '{s}': {e}")))?
        };
        let two = |default: Option<(f64, f64)>| -> Result<(f64, f64)> {
            match (params.as_slice(), default) {
                ([a, b], _) => Ok((*a, *b)),
                ([], Some(d)) => Ok(d),
                _ => Err(Error::invalid(format!("distribution '{s}' needs two parameters"))),
            }
        };
        let d = match name.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => {
                let (mu, sigma) = two(Some((0.0, 1.0)))?;
                Normal { mu, sigma }
            }
            "gamma" => {
                let (shape, scale) = two(None)?;
                Gamma { shape, scale }
            }
            "beta" => {
                let (a, b) = two(None)?;
                Beta { a, b }
            }
            "weibull" => {
                let (shape, scale) = two(None)?;
                Weibull { shape, scale }
            }
            "laplace" => {
                let (mu, b) = two(Some((0.0, 1.0)))?;
                Laplace { mu, b }
            }
            "logistic" => {
                let (mu, s) = two(Some((0.0, 1.0)))?;
                Logistic { mu, s }
            }
            "gumbel" => {
                let (mu, beta) = two(Some((0.0, 1.0)))?;
                Gumbel { mu, beta }
            }
            "uniform" => {
                let (a, b) = two(Some((0.0, 1.0)))?;
                Uniform { a, b }
            }
            "chisq" | "chi2" | "chisquared" => match params.as_slice() {
                [df] => ChiSquared { df: *df },
                _ => return Err(Error::invalid(format!("distribution '{s}' needs one parameter"))),
            },
            other => return Err(Error::UnsupportedFamily(other.to_string())),
        };
        d.validate()
    }
}

/// `g_a`: the Laplace(0,1) density flattened on `[−a, m]` with an exponential
/// right tail of rate `c(a)` beyond `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceAlternative {
    pub a: f64,
    pub m: f64,
    pub c: f64,
}

impl LaplaceAlternative {
    /// Normalized member of the family; needs `m > 0` and `−a < m`.
    pub fn new(a: f64, m: f64) -> Result<Self> {
        let inv_c = 2.0 * a.exp() - 1.0 - a - m;
        if !(m > 0.0 && a > -m && inv_c > 0.0 && inv_c.is_finite()) {
            return Err(Error::invalid(format!("no normalizable g_a for a = {a}, m = {m}")));
        }
        Ok(LaplaceAlternative { a, m, c: 1.0 / inv_c })
    }
}

impl Density for LaplaceAlternative {
    fn log_density(&self, x: f64) -> f64 {
        let half = -std::f64::consts::LN_2;
        if x <= -self.a {
            half + x
        } else if x <= self.m {
            half - self.a
        } else {
            half - self.a - self.c * (x - self.m)
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        let ea = (-self.a).exp();
        if x <= -self.a {
            0.5 * x.exp()
        } else if x <= self.m {
            0.5 * ea * (1.0 + x + self.a)
        } else {
            let flat = 0.5 * ea * (1.0 + self.m + self.a);
            flat + 0.5 * ea * (-(-self.c * (x - self.m)).exp_m1()) / self.c
        }
    }

    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![-self.a, self.m]
    }

    fn reference_point(&self) -> f64 {
        0.5 * (self.m - self.a)
    }
}

/// Projection of Laplace(0,1) onto log-concave densities with mode `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceProjection {
    pub m: f64,
    pub a_star: f64,
    pub c_star: f64,
    /// `K(f, g_{a*})`.
    pub kl: f64,
    #[serde(skip)]
    pub density: LaplaceAlternative,
}

/// The projection for hypothesized mode 1.
pub fn solve_laplace_projection() -> LaplaceProjection {
    laplace_projection(1.0).expect("m = 1 is bracketed")
}

/// Solves `c(a)² = e^{m−a}` by bisection, with `1/c(a) = 2eᵃ − 1 − a − m`.
pub fn laplace_projection(m: f64) -> Result<LaplaceProjection> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid("the Laplace projection needs a mode m > 0"));
    }
    let inv_c = |a: f64| 2.0 * a.exp() - 1.0 - a - m;
    // h(a) = log c² − (m − a), +∞ where 1/c vanishes, decreasing to −∞.
    let h = |a: f64| -2.0 * inv_c(a).ln() - (m - a);
    // 1/c is increasing for a > −ln 2; its root (or −m) bounds the bracket below.
    let mut lo = -m.min(std::f64::consts::LN_2);
    if inv_c(lo) > 0.0 {
        if h(lo) <= 0.0 {
            return Err(Error::invalid(format!("no projection root for m = {m}")));
        }
    } else {
        let mut hi = lo.max(0.0) + 1.0;
        while inv_c(hi) <= 0.0 {
            hi += 1.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if inv_c(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo = hi;
    }
    let mut hi = lo + 1.0;
    while h(hi) > 0.0 {
        hi += 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
            break;
        }
    }
    let a_star = 0.5 * (lo + hi);
    let density = LaplaceAlternative::new(a_star, m)?;
    let f = Laplace { mu: 0.0, b: 1.0 };
    Ok(LaplaceProjection {
        m,
        a_star,
        c_star: density.c,
        kl: kl_divergence(&f, &density),
        density,
    })
}

//! Likelihood-ratio test for the mode and its inversion into confidence intervals.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activeset::SolverOptions;
use crate::constrained::fit_constrained;
use crate::error::{Error, Result};
use crate::mle::{fit, FitReport};
use crate::sample::Sample;

/// Negative statistics down to this value are treated as solver noise.
pub const NEGATIVE_STAT_CLAMP: f64 = 1e-7;

const DEFAULT_TABLE_JSON: &str = include_str!("../tables/d_alpha_default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub dist: String,
    pub n: usize,
    #[serde(rename = "M")]
    pub reps: usize,
    pub seed: u64,
    /// Quantile estimator used on the simulated statistics.
    #[serde(default = "type7")]
    pub quantile: String,
}

fn type7() -> String {
    "type7".to_string()
}

/// Monte-Carlo critical values `d_α` of the null limit of `2 log λₙ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueTable {
    /// Increasing levels.
    pub alphas: Vec<f64>,
    /// Strictly decreasing critical values, `d[i] = d_{alphas[i]}`.
    pub d: Vec<f64>,
    pub meta: TableMeta,
}

impl CriticalValueTable {
    pub fn new(alphas: Vec<f64>, d: Vec<f64>, meta: TableMeta) -> Result<Self> {
        let t = CriticalValueTable { alphas, d, meta };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.len() != self.d.len() || self.alphas.len() < 2 {
            return Err(Error::invalid("table needs matching alphas and d with two or more entries"));
        }
        if self.alphas.iter().chain(&self.d).any(|v| !v.is_finite()) {
            return Err(Error::invalid("table entries must be finite"));
        }
        if self.alphas[0] <= 0.0 || *self.alphas.last().unwrap() >= 1.0 {
            return Err(Error::invalid("table levels must lie in (0, 1)"));
        }
        if self.alphas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("table levels must be strictly increasing"));
        }
        if self.d.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("critical values must be strictly decreasing in alpha"));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: CriticalValueTable = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }

    /// The shipped table (standard normal data, n = 10⁴, M = 10⁵).
    pub fn default_table() -> &'static CriticalValueTable {
        static TABLE: OnceLock<CriticalValueTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            CriticalValueTable::from_json(DEFAULT_TABLE_JSON).expect("shipped table is valid")
        })
    }

    pub fn alpha_range(&self) -> (f64, f64) {
        (self.alphas[0], *self.alphas.last().unwrap())
    }

    /// `d_α`, exact at nodes and linear in `α` between them.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        let (min, max) = self.alpha_range();
        if !(alpha >= min && alpha <= max) {
            return Err(Error::OutOfRange { alpha, min, max });
        }
        let i = self.alphas.partition_point(|&a| a < alpha);
        if self.alphas[i] == alpha {
            return Ok(self.d[i]);
        }
        let (a0, a1) = (self.alphas[i - 1], self.alphas[i]);
        let lam = (alpha - a0) / (a1 - a0);
        Ok(self.d[i - 1] + lam * (self.d[i] - self.d[i - 1]))
    }

    /// Approximate p-value: the level whose critical value equals `stat`.
    ///
    /// Linear between table nodes, joined to `(d = 0, p = 1)`. Beyond the largest
    /// tabulated value the smallest level is returned, so the result is an upper
    /// bound there.
    pub fn p_value(&self, stat: f64) -> f64 {
        let k = self.d.len();
        if stat >= self.d[0] {
            return self.alphas[0];
        }
        if stat <= 0.0 {
            return 1.0;
        }
        if stat <= self.d[k - 1] {
            let top = self.alphas[k - 1];
            return 1.0 + (top - 1.0) * stat / self.d[k - 1];
        }
        // d decreasing: find i with d[i] > stat >= d[i+1]
        let i = self.d.partition_point(|&d| d > stat) - 1;
        let lam = (self.d[i] - stat) / (self.d[i] - self.d[i + 1]);
        self.alphas[i] + lam * (self.alphas[i + 1] - self.alphas[i])
    }
}

/// `critical_value` as a free function.
pub fn critical_value(table: &CriticalValueTable, alpha: f64) -> Result<f64> {
    table.critical_value(alpha)
}

/// Add-one Monte-Carlo p-value `(1 + #{s ≥ stat}) / (1 + M)` against sorted null draws.
pub fn p_value(stat: f64, null_sorted: &[f64]) -> f64 {
    let m = null_sorted.len();
    let below = null_sorted.partition_point(|&s| s < stat);
    (1 + m - below) as f64 / (1 + m) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LrTestResult {
    pub m: f64,
    /// `2 log λₙ(m)`.
    pub stat: f64,
    pub loglik_u: f64,
    pub loglik_c: f64,
    /// From the critical-value table in use.
    pub p_value: f64,
    pub alpha: Option<f64>,
    pub critical_value: Option<f64>,
    /// The level at which the hypothesis was rejected, if it was.
    pub reject_at: Option<f64>,
    pub n: usize,
    pub note: Option<String>,
}

/// `2 log λₙ(m)` given the unconstrained fit, with the clamp applied.
fn stat_from_fit(
    sample: &Sample,
    unconstrained: &FitReport,
    m: f64,
    opts: &SolverOptions,
) -> Result<(f64, f64, Option<String>)> {
    let c = fit_constrained(sample, m, opts)?;
    let raw = 2.0 * (unconstrained.log_likelihood - c.log_likelihood);
    let (stat, note) = clamp_stat(raw);
    Ok((stat, c.log_likelihood, note))
}

fn clamp_stat(raw: f64) -> (f64, Option<String>) {
    if raw >= 0.0 {
        (raw, None)
    } else if raw >= -NEGATIVE_STAT_CLAMP {
        (0.0, Some(format!("negative statistic {raw:e} clamped to 0")))
    } else {
        (raw, Some(format!("statistic {raw:e} below the clamp threshold")))
    }
}

/// Runs both estimators and forms the statistic; the p-value uses the shipped table.
pub fn lr_statistic(sample: &Sample, m: f64, opts: &SolverOptions) -> Result<LrTestResult> {
    lr_statistic_with(sample, m, CriticalValueTable::default_table(), opts)
}

fn lr_statistic_with(
    sample: &Sample,
    m: f64,
    table: &CriticalValueTable,
    opts: &SolverOptions,
) -> Result<LrTestResult> {
    let u = fit(sample, opts)?;
    let (stat, loglik_c, note) = stat_from_fit(sample, &u, m, opts)?;
    Ok(LrTestResult {
        m,
        stat,
        loglik_u: u.log_likelihood,
        loglik_c,
        p_value: table.p_value(stat),
        alpha: None,
        critical_value: None,
        reject_at: None,
        n: sample.n(),
        note,
    })
}

/// Rejects `M(f) = m` at level `alpha` iff `2 log λₙ(m) > d_α`.
pub fn lr_test(
    sample: &Sample,
    m: f64,
    alpha: f64,
    table: &CriticalValueTable,
    opts: &SolverOptions,
) -> Result<LrTestResult> {
    let d = table.critical_value(alpha)?;
    let mut r = lr_statistic_with(sample, m, table, opts)?;
    r.alpha = Some(alpha);
    r.critical_value = Some(d);
    r.reject_at = (r.stat > d).then_some(alpha);
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// Grid size over `[X₍₁₎ − R, X₍ₙ₎ + R]`, `R` the data range.
    pub points: usize,
    /// Endpoint bisection stops at this fraction of `R`.
    pub refine_tol: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            points: 201,
            refine_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub m: f64,
    pub stat: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub alpha: f64,
    pub critical_value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Accepted points were not contiguous on the grid; the hull is reported.
    pub gap_flag: bool,
    pub grid_accepted: Vec<GridPoint>,
}

impl ConfidenceInterval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, m: f64) -> bool {
        self.lower <= m && m <= self.upper
    }
}

/// `{m : 2 log λₙ(m) ≤ d_α}` (its hull when not an interval).
pub fn confidence_interval(
    sample: &Sample,
    alpha: f64,
    table: &CriticalValueTable,
    grid: &GridOptions,
    opts: &SolverOptions,
) -> Result<ConfidenceInterval> {
    let mut v = confidence_intervals(sample, &[alpha], table, grid, opts)?;
    Ok(v.remove(0))
}

/// Intervals at several levels sharing one grid; returned in the order of `alphas`
/// and nested by construction.
pub fn confidence_intervals(
    sample: &Sample,
    alphas: &[f64],
    table: &CriticalValueTable,
    grid: &GridOptions,
    opts: &SolverOptions,
) -> Result<Vec<ConfidenceInterval>> {
    if grid.points < 2 || !(grid.refine_tol > 0.0) {
        return Err(Error::invalid("grid needs two or more points and a positive refinement"));
    }
    let ds = alphas
        .iter()
        .map(|&a| table.critical_value(a))
        .collect::<Result<Vec<_>>>()?;
    let u = fit(sample, opts)?;
    let eval = StatCache::new(sample, &u, opts);

    let r = sample.range();
    let (lo, hi) = (sample.min() - r, sample.max() + r);
    let g = grid.points;
    let mut ms: Vec<f64> = (0..g)
        .map(|i| lo + (hi - lo) * i as f64 / (g - 1) as f64)
        .collect();
    ms.push(u.mode.modal_lo);
    ms.push(u.mode.modal_hi);
    ms.sort_by(f64::total_cmp);
    ms.dedup();
    let stats = eval.many(&ms)?;
    let tol = grid.refine_tol * r;

    // Narrowest interval first, so wider ones can start from its endpoints.
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&i, &j| ds[i].total_cmp(&ds[j]));
    let mut out: Vec<Option<ConfidenceInterval>> = vec![None; alphas.len()];
    let mut inner: Option<(f64, f64)> = None;
    for &k in &order {
        let d = ds[k];
        let accepted: Vec<bool> = stats.iter().map(|&s| s <= d).collect();
        let Some(first) = accepted.iter().position(|&a| a) else {
            return Err(Error::EmptyAcceptanceSet { alpha: alphas[k] });
        };
        let last = accepted.iter().rposition(|&a| a).unwrap();
        let gap_flag = accepted[first..=last].iter().any(|&a| !a);

        let lower = if first == 0 {
            ms[0]
        } else {
            let start = inner.map_or(ms[first], |(l, _)| l.min(ms[first]));
            eval.boundary(ms[first - 1], start, d, tol)?
        };
        let upper = if last == ms.len() - 1 {
            ms[last]
        } else {
            let start = inner.map_or(ms[last], |(_, h)| h.max(ms[last]));
            eval.boundary(ms[last + 1], start, d, tol)?
        };
        inner = Some((lower, upper));
        out[k] = Some(ConfidenceInterval {
            level: 1.0 - alphas[k],
            alpha: alphas[k],
            critical_value: d,
            lower,
            upper,
            gap_flag,
            grid_accepted: ms
                .iter()
                .zip(&stats)
                .zip(&accepted)
                .map(|((&m, &stat), &accepted)| GridPoint { m, stat, accepted })
                .collect(),
        });
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

/// Memoized `m ↦ 2 log λₙ(m)` for one sample.
struct StatCache<'a> {
    sample: &'a Sample,
    u: &'a FitReport,
    opts: &'a SolverOptions,
    memo: Mutex<HashMap<u64, f64>>,
}

impl<'a> StatCache<'a> {
    fn new(sample: &'a Sample, u: &'a FitReport, opts: &'a SolverOptions) -> Self {
        StatCache {
            sample,
            u,
            opts,
            memo: Mutex::new(HashMap::new()),
        }
    }

    fn compute(&self, m: f64) -> Result<f64> {
        stat_from_fit(self.sample, self.u, m, self.opts).map(|(s, _, _)| s)
    }

    fn one(&self, m: f64) -> Result<f64> {
        if let Some(&s) = self.memo.lock().unwrap().get(&m.to_bits()) {
            return Ok(s);
        }
        let s = self.compute(m)?;
        self.memo.lock().unwrap().insert(m.to_bits(), s);
        Ok(s)
    }

    fn many(&self, ms: &[f64]) -> Result<Vec<f64>> {
        let v = ms
            .par_iter()
            .map(|&m| self.compute(m))
            .collect::<Result<Vec<f64>>>()?;
        let mut memo = self.memo.lock().unwrap();
        for (&m, &s) in ms.iter().zip(&v) {
            memo.insert(m.to_bits(), s);
        }
        Ok(v)
    }

    /// Bisects between a rejected and an accepted point; returns the accepted end
    /// of the final bracket, so the reported endpoint is always accepted.
    fn boundary(&self, mut rejected: f64, mut accepted: f64, d: f64, tol: f64) -> Result<f64> {
        while (accepted - rejected).abs() > tol {
            let mid = 0.5 * (accepted + rejected);
            if self.one(mid)? <= d {
                accepted = mid;
            } else {
                rejected = mid;
            }
        }
        Ok(accepted)
    }
}

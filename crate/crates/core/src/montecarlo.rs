//! Seeded, parallel Monte-Carlo studies of the likelihood-ratio statistic.
//!
//! Replication `r` of component `g` draws from stream `stream_id(g, r)` of the
//! master seed, and results are collected in replication order, so a study is a
//! pure function of its configuration whatever the worker count.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::activeset::SolverOptions;
use crate::constrained::fit_constrained;
use crate::distributions::{laplace_projection, ReferenceDistribution};
use crate::error::{Error, Result};
use crate::inference::{confidence_intervals, CriticalValueTable, GridOptions, TableMeta};
use crate::mle::fit;
use crate::plc::{kl_divergence, Density, PiecewiseLogLinearDensity};
use crate::rng::{stream_id, stream_rng};
use crate::sample::Sample;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "MODECERT_THREADS";

/// Upper levels reported by [`simulate_null`].
pub const REPORT_ALPHAS: [f64; 6] = [0.25, 0.20, 0.15, 0.10, 0.05, 0.01];

/// Levels of the shipped critical-value table.
pub fn default_table_alphas() -> Vec<f64> {
    let mut a: Vec<f64> = (1..10).map(|i| i as f64 / 1000.0).collect();
    a.extend((1..=50).map(|i| i as f64 / 100.0));
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineOptions {
    pub solver: SolverOptions,
    pub grid: GridOptions,
    /// Worker threads; `None` reads `MODECERT_THREADS`, else uses all cores.
    pub threads: Option<usize>,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            solver: SolverOptions::default(),
            grid: GridOptions::default(),
            threads: None,
        }
    }
}

impl EngineOptions {
    fn pool(&self) -> Result<rayon::ThreadPool> {
        let threads = self.threads.or_else(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.trim().parse::<usize>().ok())
                .filter(|&t| t > 0)
        });
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            b = b.num_threads(t);
        }
        b.build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub dist: ReferenceDistribution,
    pub n: usize,
    #[serde(rename = "M")]
    pub reps: usize,
    pub seed: u64,
    /// Upper levels `α` (null studies) or coverage levels `1 − α` (coverage studies).
    pub levels: Vec<f64>,
    pub m_true: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileRow {
    pub alpha: f64,
    /// Type-7 estimate of the `1 − α` quantile.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageRow {
    pub level: f64,
    pub coverage: f64,
    /// Binomial standard error `√(p(1−p)/M)`.
    pub se: f64,
    pub mean_length: f64,
    /// Replications whose accepted grid set was not contiguous.
    pub gaps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    /// `2 log λₙ(m_true)` per successful replication, in replication order.
    pub statistics: Vec<f64>,
    pub quantiles: Vec<QuantileRow>,
    pub coverage: Vec<CoverageRow>,
    pub failures: usize,
    /// Kept apart so reports can be compared without it.
    pub timing: Timing,
}

/// Type-7 quantile of sorted data at probability `p`.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Two-sample Kolmogorov–Smirnov distance `sup |F_a − F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

fn true_mode(dist: &ReferenceDistribution) -> Result<f64> {
    dist.mode()
        .ok_or_else(|| Error::invalid(format!("{dist} has no mode to test")))
}

fn failure_limit(reps: usize) -> usize {
    reps / 100
}

/// Runs `job` for every replication in parallel; failures are counted, not fatal,
/// up to one percent of the replications.
fn replicate<T, F>(reps: usize, eng: &EngineOptions, job: F) -> Result<(Vec<T>, usize)>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    if reps == 0 {
        return Err(Error::invalid("at least one replication is required"));
    }
    let pool = eng.pool()?;
    let results: Vec<Result<T>> =
        pool.install(|| (0..reps as u64).into_par_iter().map(&job).collect());
    let mut ok = Vec::with_capacity(reps);
    let mut failures = 0;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(Error::NotConverged { .. }) | Err(Error::DegenerateSample { .. }) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    let limit = failure_limit(reps);
    if failures > limit {
        return Err(Error::TooManyFailures {
            failures,
            replications: reps,
            limit,
        });
    }
    Ok((ok, failures))
}

fn draw_sample(dist: &ReferenceDistribution, n: usize, seed: u64, stream: u64) -> Result<Sample> {
    let mut rng = stream_rng(seed, stream);
    Sample::from_observations(&dist.draw_n(n, &mut rng))
}

/// `2 log λₙ(m)` for one simulated sample.
fn one_statistic(sample: &Sample, m: f64, opts: &SolverOptions) -> Result<f64> {
    let u = fit(sample, opts)?;
    let c = fit_constrained(sample, m, opts)?;
    Ok((2.0 * (u.log_likelihood - c.log_likelihood)).max(0.0))
}

fn null_statistics(
    dist: &ReferenceDistribution,
    group: u32,
    n: usize,
    reps: usize,
    seed: u64,
    eng: &EngineOptions,
) -> Result<(Vec<f64>, usize)> {
    let m = true_mode(dist)?;
    replicate(reps, eng, |r| {
        let s = draw_sample(dist, n, seed, stream_id(group, r))?;
        one_statistic(&s, m, &eng.solver)
    })
}

/// Null distribution of `2 log λₙ(m₀)` at the true mode of `dist`.
pub fn simulate_null(
    dist: &ReferenceDistribution,
    n: usize,
    reps: usize,
    seed: u64,
    eng: &EngineOptions,
) -> Result<SimulationReport> {
    let start = Instant::now();
    let m_true = true_mode(dist)?;
    let (statistics, failures) = null_statistics(dist, 0, n, reps, seed, eng)?;
    let mut sorted = statistics.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = REPORT_ALPHAS
        .iter()
        .map(|&alpha| QuantileRow {
            alpha,
            value: quantile_type7(&sorted, 1.0 - alpha),
        })
        .collect();
    Ok(SimulationReport {
        config: SimulationConfig {
            dist: *dist,
            n,
            reps,
            seed,
            levels: REPORT_ALPHAS.to_vec(),
            m_true,
        },
        statistics,
        quantiles,
        coverage: Vec::new(),
        failures,
        timing: Timing {
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    })
}

/// Critical-value table from simulated statistics, made strictly decreasing in `α`.
pub fn table_from_statistics(
    statistics: &[f64],
    alphas: &[f64],
    meta: TableMeta,
) -> Result<CriticalValueTable> {
    if statistics.is_empty() {
        return Err(Error::invalid("no statistics to build a table from"));
    }
    let mut alphas = alphas.to_vec();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let mut sorted = statistics.to_vec();
    sorted.sort_by(f64::total_cmp);
    let raw: Vec<f64> = alphas
        .iter()
        .map(|&a| quantile_type7(&sorted, 1.0 - a))
        .collect();
    CriticalValueTable::new(alphas, strictly_decreasing(&raw), meta)
}

/// Antitonic least-squares fit (pool adjacent violators), then ties are split by
/// a relative nudge of `1e-9` per position so the sequence is strictly decreasing.
pub fn strictly_decreasing(v: &[f64]) -> Vec<f64> {
    // PAVA on the reversed sequence, which must be non-decreasing.
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &x in v.iter().rev() {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            *last = ((m1 * c1 as f64 + m2 * c2 as f64) / (c1 + c2) as f64, c1 + c2);
        }
    }
    let mut inc: Vec<f64> = blocks
        .iter()
        .flat_map(|&(m, c)| std::iter::repeat_n(m, c))
        .collect();
    for i in 1..inc.len() {
        let floor = inc[i - 1] + 1e-9 * (1.0 + inc[i - 1].abs());
        if inc[i] < floor {
            inc[i] = floor;
        }
    }
    inc.reverse();
    inc
}

pub fn estimate_critical_values(
    dist: &ReferenceDistribution,
    n: usize,
    reps: usize,
    alphas: &[f64],
    seed: u64,
    eng: &EngineOptions,
) -> Result<CriticalValueTable> {
    let (stats, _) = null_statistics(dist, 0, n, reps, seed, eng)?;
    table_from_statistics(
        &stats,
        alphas,
        TableMeta {
            dist: dist.to_string(),
            n,
            reps,
            seed,
            quantile: "type7".to_string(),
        },
    )
}

/// Coverage and mean length of the likelihood-ratio intervals at each level.
pub fn coverage_study(
    dist: &ReferenceDistribution,
    n: usize,
    reps: usize,
    levels: &[f64],
    seed: u64,
    table: &CriticalValueTable,
    eng: &EngineOptions,
) -> Result<SimulationReport> {
    let start = Instant::now();
    let m_true = true_mode(dist)?;
    let alphas: Vec<f64> = levels.iter().map(|l| 1.0 - l).collect();
    for &a in &alphas {
        table.critical_value(a)?;
    }
    let (rows, failures) = replicate(reps, eng, |r| {
        let s = draw_sample(dist, n, seed, stream_id(0, r))?;
        let cis = confidence_intervals(&s, &alphas, table, &eng.grid, &eng.solver)?;
        let stat = one_statistic(&s, m_true, &eng.solver)?;
        let per_level: Vec<(bool, f64, bool)> = cis
            .iter()
            .map(|ci| (ci.contains(m_true), ci.length(), ci.gap_flag))
            .collect();
        Ok((per_level, stat))
    })?;
    let ok = rows.len() as f64;
    let coverage = levels
        .iter()
        .enumerate()
        .map(|(k, &level)| {
            let covered = rows.iter().filter(|(v, _)| v[k].0).count() as f64;
            let p = covered / ok;
            CoverageRow {
                level,
                coverage: p,
                se: (p * (1.0 - p) / ok).sqrt(),
                mean_length: rows.iter().map(|(v, _)| v[k].1).sum::<f64>() / ok,
                gaps: rows.iter().filter(|(v, _)| v[k].2).count(),
            }
        })
        .collect();
    Ok(SimulationReport {
        config: SimulationConfig {
            dist: *dist,
            n,
            reps,
            seed,
            levels: levels.to_vec(),
            m_true,
        },
        statistics: rows.iter().map(|(_, s)| *s).collect(),
        quantiles: Vec::new(),
        coverage,
        failures,
        timing: Timing {
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PivotalityReport {
    pub dists: Vec<ReferenceDistribution>,
    pub n: usize,
    #[serde(rename = "M")]
    pub reps: usize,
    pub seed: u64,
    /// `ks[i][j]`: sup-distance between the empirical null laws of `dists[i]` and `dists[j]`.
    pub ks: Vec<Vec<f64>>,
    #[serde(skip)]
    pub statistics: Vec<Vec<f64>>,
    pub failures: Vec<usize>,
}

/// Pairwise KS distances between null distributions of the statistic.
pub fn pivotality_check(
    dists: &[ReferenceDistribution],
    n: usize,
    reps: usize,
    seed: u64,
    eng: &EngineOptions,
) -> Result<PivotalityReport> {
    let mut statistics = Vec::with_capacity(dists.len());
    let mut failures = Vec::with_capacity(dists.len());
    for (g, d) in dists.iter().enumerate() {
        let (s, f) = null_statistics(d, g as u32, n, reps, seed, eng)?;
        statistics.push(s);
        failures.push(f);
    }
    let k = dists.len();
    let mut ks = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = ks_distance(&statistics[i], &statistics[j]);
            ks[i][j] = v;
            ks[j][i] = v;
        }
    }
    Ok(PivotalityReport {
        dists: dists.to_vec(),
        n,
        reps,
        seed,
        ks,
        statistics,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyRow {
    pub n: usize,
    /// Mean of `2 log λₙ(m) / n`.
    pub mean_stat_over_n: f64,
    pub statistics: Vec<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub dist: ReferenceDistribution,
    pub m: f64,
    pub reps: usize,
    pub seed: u64,
    /// `2K(f₀, f⁰_m)`.
    pub target: f64,
    /// `"analytic"` or `"fitted"`.
    pub target_source: String,
    pub rows: Vec<ConsistencyRow>,
}

/// `f` restricted to `[lo, hi]` and renormalized.
struct Truncated<'a> {
    inner: &'a dyn Density,
    lo: f64,
    hi: f64,
    log_mass: f64,
}

impl Density for Truncated<'_> {
    fn log_density(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            f64::NEG_INFINITY
        } else {
            self.inner.log_density(x) - self.log_mass
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        let (a, b) = (self.inner.cdf(self.lo), self.inner.cdf(self.hi));
        ((self.inner.cdf(x.clamp(self.lo, self.hi)) - a) / (b - a)).clamp(0.0, 1.0)
    }

    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }
}

/// Behaviour of `stat / n` under a fixed false hypothesis `M(f) = m`.
///
/// For Laplace data the target `2K(f₀, f⁰_m)` is exact. Otherwise `f₀` has
/// unbounded support while the fitted projection does not, so the target is `2K`
/// between `f₀` restricted to the support of the last constrained fit at the
/// largest `n` and that fit.
pub fn alternative_consistency(
    dist: &ReferenceDistribution,
    m: f64,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
    eng: &EngineOptions,
) -> Result<ConsistencyReport> {
    let mut rows = Vec::with_capacity(n_grid.len());
    let mut last_fit: Option<PiecewiseLogLinearDensity> = None;
    for (g, &n) in n_grid.iter().enumerate() {
        let (out, failures) = replicate(reps, eng, |r| {
            let s = draw_sample(dist, n, seed, stream_id(g as u32, r))?;
            let u = fit(&s, &eng.solver)?;
            let c = fit_constrained(&s, m, &eng.solver)?;
            let stat = (2.0 * (u.log_likelihood - c.log_likelihood)).max(0.0);
            Ok((stat, c.density))
        })?;
        let statistics: Vec<f64> = out.iter().map(|(s, _)| *s).collect();
        let mean = statistics.iter().sum::<f64>() / statistics.len() as f64 / n as f64;
        last_fit = out.into_iter().last().map(|(_, d)| d);
        rows.push(ConsistencyRow {
            n,
            mean_stat_over_n: mean,
            statistics,
            failures,
        });
    }
    let (target, target_source) = match *dist {
        ReferenceDistribution::Laplace { mu, b } => {
            // K is invariant under the affine map to the standard Laplace; mirror if m < μ.
            let z = (m - mu) / b;
            if z == 0.0 {
                (0.0, "analytic")
            } else {
                (2.0 * laplace_projection(z.abs())?.kl, "analytic")
            }
        }
        _ => {
            let fit_density = last_fit.ok_or_else(|| Error::invalid("no successful replication"))?;
            let (lo, hi) = (fit_density.lower(), fit_density.upper());
            let mass = dist.cdf(hi) - dist.cdf(lo);
            let f0 = Truncated {
                inner: dist,
                lo,
                hi,
                log_mass: mass.ln(),
            };
            (2.0 * kl_divergence(&f0, &fit_density), "fitted")
        }
    };
    Ok(ConsistencyReport {
        dist: *dist,
        m,
        reps,
        seed,
        target,
        target_source: target_source.to_string(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&v, 0.0), 1.0);
        assert_eq!(quantile_type7(&v, 1.0), 4.0);
        assert!((quantile_type7(&v, 0.5) - 2.5).abs() < 1e-15);
        assert_eq!(quantile_type7(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_distance(&[1.0, 2.0, 3.0, 4.0], &[2.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pava_makes_strictly_decreasing() {
        let d = strictly_decreasing(&[3.0, 2.0, 2.5, 1.0, 1.0]);
        for w in d.windows(2) {
            assert!(w[1] < w[0], "{d:?}");
        }
        assert!((d[1] - 2.25).abs() < 1e-6 && (d[2] - 2.25).abs() < 1e-6);
        assert_eq!(strictly_decreasing(&[3.0, 2.0, 1.0]), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn failure_budget() {
        assert_eq!(failure_limit(1), 0);
        assert_eq!(failure_limit(2000), 20);
    }
}

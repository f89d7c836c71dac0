//! Mode-constrained log-concave maximum likelihood.

use serde::Serialize;

use crate::activeset::{Problem, SolverOptions};
use crate::error::{Error, Result};
use crate::mle::{characterize, validate, CharacterizationReport};
use crate::plc::{effective_support, Density, ModeSummary, PiecewiseLogLinearDensity};
use crate::quad::adaptive_simpson;
use crate::sample::Sample;

#[derive(Debug, Clone, Serialize)]
pub struct ConstrainedFitReport {
    pub density: PiecewiseLogLinearDensity,
    /// Hypothesized mode.
    pub m: f64,
    pub mode_summary: ModeSummary,
    pub log_likelihood: f64,
    pub n: usize,
    pub iterations: usize,
    pub newton_steps: usize,
    pub max_characterization_residual: f64,
    /// `|1 − ∫e^φ̂⁰|` at the optimum, before the final normalizing shift.
    pub integral_identity_residual: f64,
    pub converged: bool,
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

/// Log-concave MLE of `sample` among densities whose modal interval contains `m`.
///
/// The support is `[min(X₍₁₎, m), max(X₍ₙ₎, m)]`.
pub fn fit_constrained(sample: &Sample, m: f64, opts: &SolverOptions) -> Result<ConstrainedFitReport> {
    validate(opts)?;
    let sol = Problem::new(sample, Some(m))?.solve(opts);
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            residual: sol.residual,
            best: Box::new(sol.density),
        });
    }
    Ok(ConstrainedFitReport {
        mode_summary: sol.density.mode_summary(),
        density: sol.density,
        m,
        log_likelihood: sample.n() as f64 * sol.mean_log,
        n: sample.n(),
        iterations: sol.iterations,
        newton_steps: sol.newton_steps,
        max_characterization_residual: sol.residual,
        integral_identity_residual: (1.0 - sol.raw_mass).abs(),
        converged: true,
        objective_trace: sol.objective_trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstrainedCharacterizationReport {
    /// `|𝔽ₙ(∞) − F̂ⁿ⁰(∞)|` of the raw optimum.
    pub integral_identity_residual: f64,
    /// Knot and integral checks, left form below `m` and right form above it.
    pub sides: CharacterizationReport,
    /// Most negative slope left of `m`, most positive right of it (0 when none).
    pub slope_sign_violation: f64,
}

impl ConstrainedCharacterizationReport {
    pub fn max_residual(&self) -> f64 {
        self.integral_identity_residual
            .max(self.sides.max_residual())
            .max(self.slope_sign_violation)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

pub fn check_constrained_characterization(
    report: &ConstrainedFitReport,
    sample: &Sample,
) -> ConstrainedCharacterizationReport {
    let d = &report.density;
    let m = report.m;
    let mut slope_sign_violation: f64 = 0.0;
    for (j, s) in d.slopes().into_iter().enumerate() {
        let (a, b) = (d.knots()[j], d.knots()[j + 1]);
        if b <= m {
            slope_sign_violation = slope_sign_violation.max(-s);
        } else if a >= m {
            slope_sign_violation = slope_sign_violation.max(s);
        }
    }
    // The solver snaps m onto a data point closer than the merge spacing.
    let span = d.upper() - d.lower();
    let anchor = d
        .knots()
        .iter()
        .copied()
        .min_by(|x, y| (x - m).abs().total_cmp(&(y - m).abs()))
        .filter(|t| (t - m).abs() <= 2e-12 * span)
        .unwrap_or(m);
    ConstrainedCharacterizationReport {
        integral_identity_residual: report
            .integral_identity_residual
            .max((d.total_mass() - 1.0).abs()),
        sides: characterize(d, sample, Some(anchor)),
        slope_sign_violation,
    }
}

/// Population counterpart of the constrained characterization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionReport {
    /// Largest positive value of `∫_{-∞}^x (F_m − G)` for `x ≤ m` and of
    /// `∫_x^∞ (G − F_m)` for `x ≥ m` over the grid.
    pub max_violation: f64,
    /// Largest absolute value of the same integrals at kinks of `log f_m`.
    pub equality_slack: f64,
    /// Kinks of `log f_m` at which equality was checked.
    pub kinks: Vec<f64>,
    pub grid_points: usize,
}

impl ProjectionReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation <= tol && self.equality_slack <= tol
    }
}

const PROJECTION_GRID: usize = 2000;

/// Checks that `f_m` is the projection of `G` onto densities with mode `m`.
pub fn population_projection_check(f_m: &dyn Density, g: &dyn Density, m: f64) -> ProjectionReport {
    let (flo, fhi) = effective_support(f_m, 1e-15);
    let (glo, ghi) = effective_support(g, 1e-15);
    let (lo, hi) = (flo.min(glo).min(m), fhi.max(ghi).max(m));

    let kinks = detect_kinks(f_m, m);
    let mut cuts: Vec<f64> = (0..=PROJECTION_GRID)
        .map(|i| lo + (hi - lo) * i as f64 / PROJECTION_GRID as f64)
        .collect();
    cuts.extend(f_m.breakpoints());
    cuts.extend(g.breakpoints());
    cuts.extend(&kinks);
    cuts.push(m);
    cuts.retain(|x| *x >= lo && *x <= hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let diff = |x: f64| f_m.cdf(x) - g.cdf(x);
    let cell: Vec<f64> = cuts
        .windows(2)
        .map(|w| adaptive_simpson(&diff, w[0], w[1], 1e-13))
        .collect();
    let mut left = vec![0.0; cuts.len()];
    for i in 1..cuts.len() {
        left[i] = left[i - 1] + cell[i - 1];
    }
    // ∫_x^∞ (G − F_m) = Σ of the cells above x, negated.
    let mut right = vec![0.0; cuts.len()];
    for i in (0..cuts.len() - 1).rev() {
        right[i] = right[i + 1] - cell[i];
    }
    let value_at = |i: usize| if cuts[i] <= m { left[i] } else { right[i] };

    let mut max_violation: f64 = 0.0;
    for i in 0..cuts.len() {
        max_violation = max_violation.max(value_at(i));
        if cuts[i] == m {
            max_violation = max_violation.max(right[i]);
        }
    }
    let mut equality_slack: f64 = 0.0;
    for &k in &kinks {
        if let Ok(i) = cuts.binary_search_by(|c| c.total_cmp(&k)) {
            equality_slack = equality_slack.max(value_at(i).abs());
        }
    }
    ProjectionReport {
        max_violation,
        equality_slack,
        kinks,
        grid_points: cuts.len(),
    }
}

/// Breakpoints of `log f` (other than `m`) where the one-sided slopes differ.
/// Finite support endpoints count, the outer slope being infinite there.
fn detect_kinks(f: &dyn Density, m: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let (lo, hi) = f.support();
    let mut candidates = f.breakpoints();
    candidates.extend([lo, hi].into_iter().filter(|x| x.is_finite()));
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    for x in candidates {
        if (x - m).abs() <= 1e-12 * (1.0 + m.abs()) {
            continue;
        }
        let h = 1e-6 * (1.0 + x.abs());
        let l0 = f.log_density(x);
        let (ll, lr) = (f.log_density(x - h), f.log_density(x + h));
        if !(l0.is_finite()) {
            continue;
        }
        if !ll.is_finite() || !lr.is_finite() {
            out.push(x);
            continue;
        }
        let (sl, sr) = ((l0 - ll) / h, (lr - l0) / h);
        if (sl - sr).abs() > 1e-6 * (1.0 + sl.abs().max(sr.abs())) {
            out.push(x);
        }
    }
    out
}

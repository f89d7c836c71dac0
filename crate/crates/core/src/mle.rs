//! Unconstrained log-concave maximum likelihood.

use serde::Serialize;

use crate::activeset::{Problem, SolverOptions};
use crate::error::{Error, Result};
use crate::plc::{ModeSummary, PiecewiseLogLinearDensity};
use crate::sample::Sample;

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub density: PiecewiseLogLinearDensity,
    pub mode: ModeSummary,
    /// `n · ℙₙ φ̂`.
    pub log_likelihood: f64,
    pub n: usize,
    /// Knot additions performed by the active-set loop.
    pub iterations: usize,
    pub newton_steps: usize,
    /// Largest hinge directional derivative at exit over the mean grid spacing.
    pub max_characterization_residual: f64,
    pub converged: bool,
    /// `ℙₙφ − ∫e^φ + 1` after every accepted step.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

/// Log-concave MLE of `sample`.
pub fn fit(sample: &Sample, opts: &SolverOptions) -> Result<FitReport> {
    validate(opts)?;
    let sol = Problem::new(sample, None)?.solve(opts);
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            residual: sol.residual,
            best: Box::new(sol.density),
        });
    }
    Ok(FitReport {
        mode: sol.density.mode_summary(),
        density: sol.density,
        log_likelihood: sample.n() as f64 * sol.mean_log,
        n: sample.n(),
        iterations: sol.iterations,
        newton_steps: sol.newton_steps,
        max_characterization_residual: sol.residual,
        converged: true,
        objective_trace: sol.objective_trace,
    })
}

pub(crate) fn validate(opts: &SolverOptions) -> Result<()> {
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    Ok(())
}

/// Optimality certificate of a fitted density against its sample.
///
/// Integral quantities are divided by the support length so they are comparable
/// with the solver tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharacterizationReport {
    /// Largest `|𝔽ₙ(τ) − F̂(τ)|` over knots `τ`.
    pub max_knot_cdf_gap: f64,
    /// Largest distance of `F̂(τ)` from `[𝔽ₙ(τ−), 𝔽ₙ(τ)]` over knots; zero when the
    /// `1/n` knot bound (mass of the atom at `τ` with ties) holds.
    pub knot_bound_excess: f64,
    /// Largest positive part of the integrated CDF difference where it must be `≤ 0`.
    pub integral_violation: f64,
    /// Largest `|∫(F̂ − 𝔽ₙ)|` at knots, where equality must hold.
    pub knot_equality_residual: f64,
    /// `|∫ f̂ − 1|`.
    pub mass_residual: f64,
}

impl CharacterizationReport {
    pub fn max_residual(&self) -> f64 {
        self.knot_bound_excess
            .max(self.integral_violation)
            .max(self.knot_equality_residual)
            .max(self.mass_residual)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

/// Checks the finite-sample characterization of the unconstrained MLE:
/// `D(x) = ∫_{X₍₁₎}^x (F̂ − 𝔽ₙ) ≤ 0` with equality at knots, and the knot bounds
/// `𝔽ₙ(τ−) ≤ F̂(τ) ≤ 𝔽ₙ(τ)`.
pub fn check_characterization(report: &FitReport, sample: &Sample) -> CharacterizationReport {
    characterize(&report.density, sample, None)
}

/// Shared by both estimators. With `mode = Some(m)` the left form of `D` is used
/// below `m`, the right form above it, and `m` itself is exempt from knot checks.
pub(crate) fn characterize(
    density: &PiecewiseLogLinearDensity,
    sample: &Sample,
    mode: Option<f64>,
) -> CharacterizationReport {
    let (grid, w) = grid_with(sample, density);
    let lo = density.lower();
    let span = density.upper() - lo;
    let mass = density.total_mass();

    // D_left at every grid point: ∫ F̂ − ∫ 𝔽ₙ, the latter via running sums.
    let mut d_left = Vec::with_capacity(grid.len());
    let (mut cw, mut cwx) = (0.0, 0.0);
    let mut ecdf_before = Vec::with_capacity(grid.len());
    for (&x, &wi) in grid.iter().zip(&w) {
        let emp = x * cw - cwx;
        ecdf_before.push(cw);
        d_left.push(density.integrated_cdf(x) - emp);
        cw += wi;
        cwx += wi * x;
    }
    let end = *d_left.last().unwrap();
    let hi = density.upper();
    let d_right = |i: usize| d_left[i] - end + (mass - 1.0) * (hi - grid[i]);

    let mut rep = CharacterizationReport {
        max_knot_cdf_gap: 0.0,
        knot_bound_excess: 0.0,
        integral_violation: 0.0,
        knot_equality_residual: 0.0,
        mass_residual: (mass - 1.0).abs(),
    };
    let knots = density.knots();
    let mut kj = 0;
    for i in 0..grid.len() {
        let x = grid[i];
        let d = match mode {
            Some(m) if x > m => d_right(i),
            _ => d_left[i],
        };
        rep.integral_violation = rep.integral_violation.max(d / span);
        while kj < knots.len() && knots[kj] < x {
            kj += 1;
        }
        let is_knot = kj < knots.len() && knots[kj] == x;
        if !is_knot || mode == Some(x) {
            continue;
        }
        rep.knot_equality_residual = rep.knot_equality_residual.max(d.abs() / span);
        let f = density.cdf(x);
        let (below, at) = (ecdf_before[i], ecdf_before[i] + w[i]);
        rep.max_knot_cdf_gap = rep.max_knot_cdf_gap.max((at - f).abs());
        let excess = (below - f).max(f - at).max(0.0);
        rep.knot_bound_excess = rep.knot_bound_excess.max(excess);
    }
    rep
}

/// Sample points merged with the knots of `density` (extra knots get weight 0).
fn grid_with(sample: &Sample, density: &PiecewiseLogLinearDensity) -> (Vec<f64>, Vec<f64>) {
    let mut grid = Vec::with_capacity(sample.distinct() + 2);
    let mut w = Vec::with_capacity(sample.distinct() + 2);
    let (pts, wts) = (sample.points(), sample.weights());
    let knots = density.knots();
    let (mut i, mut j) = (0, 0);
    while i < pts.len() || j < knots.len() {
        let take_pt = j == knots.len() || (i < pts.len() && pts[i] <= knots[j]);
        if take_pt {
            if j < knots.len() && pts[i] == knots[j] {
                j += 1;
            }
            grid.push(pts[i]);
            w.push(wts[i]);
            i += 1;
        } else {
            grid.push(knots[j]);
            w.push(0.0);
            j += 1;
        }
    }
    (grid, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_give_uniform() {
        let s = Sample::from_observations(&[0.0, 1.0]).unwrap();
        let r = fit(&s, &SolverOptions::default()).unwrap();
        assert_eq!(r.density.knots(), &[0.0, 1.0]);
        assert!(r.density.values().iter().all(|v| v.abs() < 1e-12));
        assert!(r.log_likelihood.abs() < 1e-12);
        let c = check_characterization(&r, &s);
        assert!(c.max_knot_cdf_gap <= 0.5 + 1e-12);
        assert!(c.max_residual() < 1e-12);
    }

    #[test]
    fn symmetric_data_symmetric_fit() {
        let s = Sample::from_observations(&[0.0, 0.5, 1.0]).unwrap();
        let r = fit(&s, &SolverOptions::default()).unwrap();
        let d = &r.density;
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert!((d.eval_log(x) - d.eval_log(1.0 - x)).abs() < 1e-7, "x = {x}");
        }
    }

    #[test]
    fn grid_merges_knots() {
        let s = Sample::from_observations(&[0.0, 1.0, 2.0]).unwrap();
        let d = PiecewiseLogLinearDensity::new(vec![0.0, 1.5, 3.0], vec![0.0, 0.0, 0.0]).unwrap();
        let (g, w) = grid_with(&s, &d);
        assert_eq!(g, vec![0.0, 1.0, 1.5, 2.0, 3.0]);
        assert_eq!(w[2], 0.0);
        assert_eq!(w[4], 0.0);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let s = Sample::from_observations(&[0.0, 1.0]).unwrap();
        let opts = SolverOptions {
            tol: 0.0,
            max_iter: 10,
        };
        assert!(fit(&s, &opts).is_err());
    }
}

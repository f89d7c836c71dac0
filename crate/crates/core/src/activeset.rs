//! Active-set Newton solver for log-concave maximum likelihood.
//!
//! Minimizes `F(φ) = −Σ wᵢ φ(zᵢ) + ∫ e^φ` over concave functions that are linear
//! between consecutive grid points `z`. The working set is the list of knots
//! (grid points where `φ` may bend); between knots `φ` is linear, so a Newton
//! step on the knot values only costs `O(#knots)`. Knots are dropped when a step
//! would flatten a bend past zero and added where the hinge directional
//! derivative is positive, scanning the full grid in `O(K)`.
//!
//! With a mode constraint the grid contains `m`, which stays a knot; its
//! neighbouring segments carry the sign constraints `s_left ≥ 0 ≥ s_right`.
//! An active sign constraint ties the neighbouring knot to the value at `m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expint::{moment, segment_mass_unchecked, segment_terms};
use crate::plc::PiecewiseLogLinearDensity;
use crate::sample::{Sample, MERGE_SPACING};

/// Stopping rules shared by both estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bound on the largest hinge directional derivative divided by the mean grid spacing.
    /// This is roughly the worst CDF discrepancy a missing knot could hide.
    pub tol: f64,
    /// Maximum number of knot additions.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            max_iter: 500,
        }
    }
}

const NEWTON_DECREMENT_TOL: f64 = 1e-22;
const MAX_NEWTON_PER_SET: usize = 200;
const ARMIJO: f64 = 1e-4;
/// After convergence, knot additions continue toward this residual so that
/// near-coincident data points end up with the right knot.
const POLISH_TOL: f64 = 1e-13;
const MAX_POLISH: usize = 50;

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub density: PiecewiseLogLinearDensity,
    /// `Σ wᵢ φ̂(xᵢ)` of the normalized estimate.
    pub mean_log: f64,
    pub iterations: usize,
    pub newton_steps: usize,
    pub residual: f64,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    /// `∫ e^φ` at the optimum before the final normalizing shift.
    pub raw_mass: f64,
}

pub(crate) struct Problem {
    /// grid points in original coordinates, emitted verbatim as knots
    pts: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    /// prefix sums of `w` and `w·z`, length `K + 1`
    cw: Vec<f64>,
    cwz: Vec<f64>,
    /// suffix sums of `w`, length `K + 1`
    tw: Vec<f64>,
    mode: Option<usize>,
    range: f64,
    spacing: f64,
}

#[derive(Debug, Clone)]
struct State {
    knots: Vec<usize>,
    theta: Vec<f64>,
    tie_left: bool,
    tie_right: bool,
}

#[derive(Debug, Clone, Copy)]
enum Blocker {
    Bend(usize),
    ModalLeft,
    ModalRight,
}

#[derive(Debug, Clone, Copy)]
enum Candidate {
    Knot(usize, Side),
    Release(Side),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Left,
    Right,
}

struct Derivs {
    value: f64,
    grad: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl Problem {
    pub fn new(sample: &Sample, mode: Option<f64>) -> Result<Self> {
        let mut pts: Vec<f64> = sample.points().to_vec();
        let mut w: Vec<f64> = sample.weights().to_vec();
        let mut mode_idx = None;
        if let Some(m) = mode {
            if !m.is_finite() {
                return Err(Error::invalid("hypothesized mode must be finite"));
            }
            let lo = pts[0].min(m);
            let hi = pts[pts.len() - 1].max(m);
            let gap = MERGE_SPACING * (hi - lo);
            let p = pts.partition_point(|&x| x < m);
            if p < pts.len() && pts[p] - m <= gap {
                mode_idx = Some(p);
            } else if p > 0 && m - pts[p - 1] <= gap {
                mode_idx = Some(p - 1);
            } else {
                pts.insert(p, m);
                w.insert(p, 0.0);
                mode_idx = Some(p);
            }
        }
        let k = pts.len();
        let origin = 0.5 * (pts[0] + pts[k - 1]);
        let z: Vec<f64> = pts.iter().map(|x| x - origin).collect();
        let mut cw = vec![0.0; k + 1];
        let mut cwz = vec![0.0; k + 1];
        for i in 0..k {
            cw[i + 1] = cw[i] + w[i];
            cwz[i + 1] = cwz[i] + w[i] * z[i];
        }
        let mut tw = vec![0.0; k + 1];
        for i in (0..k).rev() {
            tw[i] = tw[i + 1] + w[i];
        }
        let range = z[k - 1] - z[0];
        Ok(Problem {
            pts,
            z,
            w,
            cw,
            cwz,
            tw,
            mode: mode_idx,
            range,
            spacing: range / (k - 1) as f64,
        })
    }

    fn len(&self) -> usize {
        self.z.len()
    }

    /// Data weight on the interior of the fine interval `(a, b)` split between its ends.
    #[inline]
    fn interior_weights(&self, a: usize, b: usize) -> (f64, f64) {
        if b <= a + 1 {
            return (0.0, 0.0);
        }
        let wsum = self.cw[b] - self.cw[a + 1];
        if wsum == 0.0 {
            return (0.0, 0.0);
        }
        let s = self.cwz[b] - self.cwz[a + 1];
        let len = self.z[b] - self.z[a];
        ((self.z[b] * wsum - s) / len, (s - self.z[a] * wsum) / len)
    }

    fn objective(&self, knots: &[usize], theta: &[f64]) -> f64 {
        let mut f = 0.0;
        for (k, &i) in knots.iter().enumerate() {
            f -= self.w[i] * theta[k];
        }
        for k in 0..knots.len() - 1 {
            let (a, b) = (knots[k], knots[k + 1]);
            let (wa, wb) = self.interior_weights(a, b);
            f += segment_mass_unchecked(theta[k], theta[k + 1], self.z[b] - self.z[a])
                - wa * theta[k]
                - wb * theta[k + 1];
        }
        f
    }

    fn derivs(&self, knots: &[usize], theta: &[f64]) -> Derivs {
        let p = knots.len();
        let mut value = 0.0;
        let mut grad = vec![0.0; p];
        let mut diag = vec![0.0; p];
        let mut off = vec![0.0; p.saturating_sub(1)];
        for (k, &i) in knots.iter().enumerate() {
            value -= self.w[i] * theta[k];
            grad[k] -= self.w[i];
        }
        for k in 0..p - 1 {
            let (a, b) = (knots[k], knots[k + 1]);
            let (wa, wb) = self.interior_weights(a, b);
            let t = segment_terms(theta[k], theta[k + 1], self.z[b] - self.z[a]);
            value += t.value - wa * theta[k] - wb * theta[k + 1];
            grad[k] += t.du - wa;
            grad[k + 1] += t.dv - wb;
            diag[k] += t.duu;
            diag[k + 1] += t.dvv;
            off[k] += t.duv;
        }
        Derivs {
            value,
            grad,
            diag,
            off,
        }
    }

    fn mode_pos(&self, st: &State) -> Option<usize> {
        let m = self.mode?;
        st.knots.binary_search(&m).ok()
    }

    /// Group id of every knot; tied neighbours share the group of the mode knot.
    fn groups(&self, st: &State) -> (Vec<usize>, usize) {
        let p = st.knots.len();
        let mp = self.mode_pos(st);
        let mut g = Vec::with_capacity(p);
        let mut next = 0;
        for k in 0..p {
            let tied = match mp {
                Some(mp) => (st.tie_left && k == mp) || (st.tie_right && k == mp + 1),
                None => false,
            };
            if tied && k > 0 {
                g.push(next - 1);
            } else {
                g.push(next);
                next += 1;
            }
        }
        (g, next)
    }

    /// Makes tied knot values exactly equal to the value at the mode.
    fn enforce_ties(&self, st: &mut State) {
        if let Some(mp) = self.mode_pos(st) {
            if st.tie_left && mp > 0 {
                st.theta[mp - 1] = st.theta[mp];
            }
            if st.tie_right && mp + 1 < st.knots.len() {
                st.theta[mp + 1] = st.theta[mp];
            }
        }
    }

    fn slope(&self, st: &State, theta: &[f64], k: usize) -> f64 {
        let (a, b) = (st.knots[k], st.knots[k + 1]);
        (theta[k + 1] - theta[k]) / (self.z[b] - self.z[a])
    }

    /// Largest step along `dir` keeping every inequality, with the constraint that binds.
    fn max_step(&self, st: &State, dir: &[f64]) -> (f64, Option<Blocker>) {
        let p = st.knots.len();
        let mp = self.mode_pos(st);
        let mut best = (f64::INFINITY, None);
        let mut consider = |c: f64, dc: f64, b: Blocker| {
            if dc > 0.0 {
                let t = (-c / dc).max(0.0);
                if t < best.0 {
                    best = (t, Some(b));
                }
            }
        };
        for k in 1..p.saturating_sub(1) {
            if Some(k) == mp {
                continue;
            }
            let c = self.slope(st, &st.theta, k) - self.slope(st, &st.theta, k - 1);
            let dc = self.slope(st, dir, k) - self.slope(st, dir, k - 1);
            consider(c, dc, Blocker::Bend(k));
        }
        if let Some(mp) = mp {
            if mp > 0 && !st.tie_left {
                consider(
                    -self.slope(st, &st.theta, mp - 1),
                    -self.slope(st, dir, mp - 1),
                    Blocker::ModalLeft,
                );
            }
            if mp + 1 < p && !st.tie_right {
                consider(
                    self.slope(st, &st.theta, mp),
                    self.slope(st, dir, mp),
                    Blocker::ModalRight,
                );
            }
        }
        best
    }

    fn apply_blocker(&self, st: &mut State, b: Blocker) {
        match b {
            Blocker::Bend(k) => {
                st.knots.remove(k);
                st.theta.remove(k);
            }
            Blocker::ModalLeft => st.tie_left = true,
            Blocker::ModalRight => st.tie_right = true,
        }
        self.enforce_ties(st);
    }

    fn initial_state(&self) -> State {
        let k = self.len();
        let mut knots = vec![0, k - 1];
        for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let i = self.cw[1..].partition_point(|&c| c < q).min(k - 1);
            knots.push(i);
        }
        if let Some(m) = self.mode {
            knots.push(m);
        }
        knots.sort_unstable();
        knots.dedup();

        let mean = self.cwz[k];
        let var = (0..k)
            .map(|i| self.w[i] * (self.z[i] - mean).powi(2))
            .sum::<f64>();
        let mut sd = var.sqrt().max(self.range / 4.0);
        let center = match self.mode {
            Some(m) => {
                sd = sd.max((self.z[m] - mean).abs());
                self.z[m]
            }
            None => mean,
        };
        let theta: Vec<f64> = knots
            .iter()
            .map(|&i| -0.5 * ((self.z[i] - center) / sd).powi(2))
            .collect();
        let mut st = State {
            knots,
            theta,
            tie_left: false,
            tie_right: false,
        };
        let mass = self.integral(&st);
        for v in st.theta.iter_mut() {
            *v -= mass.ln();
        }
        st
    }

    fn integral(&self, st: &State) -> f64 {
        st.knots
            .windows(2)
            .zip(st.theta.windows(2))
            .map(|(k, t)| segment_mass_unchecked(t[0], t[1], self.z[k[1]] - self.z[k[0]]))
            .sum()
    }

    /// `φ` at every grid point.
    fn fine_values(&self, st: &State) -> Vec<f64> {
        let mut phi = vec![0.0; self.len()];
        for k in 0..st.knots.len() - 1 {
            let (a, b) = (st.knots[k], st.knots[k + 1]);
            let (u, v) = (st.theta[k], st.theta[k + 1]);
            let len = self.z[b] - self.z[a];
            for i in a..b {
                let lam = (self.z[i] - self.z[a]) / len;
                phi[i] = u + lam * (v - u);
            }
        }
        *phi.last_mut().unwrap() = *st.theta.last().unwrap();
        phi
    }

    /// Hinge derivatives at every grid point.
    ///
    /// `left[i] = ∫_{z₀}^{zᵢ} (F̂ − 𝔽ₙ)` is the gain from bending with
    /// `min(0, x − zᵢ)`, `right[i] = ∫_{zᵢ}^{z_K} (S̄ − 𝕊ₙ)` the gain from
    /// `min(0, zᵢ − x)`, where `S̄`, `𝕊ₙ` are upper-tail masses.
    fn hinge_gains(&self, phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.len();
        let mut left = vec![0.0; k];
        let mut fhat = 0.0;
        for j in 0..k - 1 {
            let len = self.z[j + 1] - self.z[j];
            let (u, v) = (phi[j], phi[j + 1]);
            left[j + 1] =
                left[j] + (fhat - self.cw[j + 1]) * len + len * len * u.exp() * moment(1, v - u);
            fhat += segment_mass_unchecked(u, v, len);
        }
        let mut right = vec![0.0; k];
        let mut shat = 0.0;
        for j in (0..k - 1).rev() {
            let len = self.z[j + 1] - self.z[j];
            let (u, v) = (phi[j], phi[j + 1]);
            right[j] =
                right[j + 1] + (shat - self.tw[j + 1]) * len + len * len * v.exp() * moment(1, u - v);
            shat += segment_mass_unchecked(u, v, len);
        }
        (left, right)
    }

    fn best_candidate(&self, st: &State) -> (f64, Option<Candidate>) {
        let phi = self.fine_values(st);
        let (left, right) = self.hinge_gains(&phi);
        let k = self.len();
        let pivot = match self.mode {
            Some(m) => m,
            None => {
                let mut b = 0;
                for (kk, &v) in st.theta.iter().enumerate() {
                    if v > st.theta[b] {
                        b = kk;
                    }
                }
                st.knots[b]
            }
        };
        let mut best = (0.0, None);
        let mut ki = 0;
        for i in 1..k - 1 {
            while st.knots[ki] < i {
                ki += 1;
            }
            if st.knots[ki] == i {
                continue;
            }
            let (gain, side) = if i < pivot || (self.mode.is_none() && i == pivot) {
                (left[i], Side::Left)
            } else {
                (right[i], Side::Right)
            };
            if gain > best.0 {
                best = (gain, Some(Candidate::Knot(i, side)));
            }
        }
        if let Some(m) = self.mode {
            if st.tie_left && left[m] > best.0 {
                best = (left[m], Some(Candidate::Release(Side::Left)));
            }
            if st.tie_right && right[m] > best.0 {
                best = (right[m], Some(Candidate::Release(Side::Right)));
            }
        }
        best
    }

    fn hinge_direction(&self, st: &State, at: usize, side: Side) -> Vec<f64> {
        let za = self.z[at];
        st.knots
            .iter()
            .map(|&i| match side {
                Side::Left => (self.z[i] - za).min(0.0),
                Side::Right => (za - self.z[i]).min(0.0),
            })
            .collect()
    }

    /// Backtracking line search along `dir`, starting at `t0`; returns the accepted step.
    fn line_search(&self, st: &State, dir: &[f64], f0: f64, slope: f64, t0: f64) -> Option<(f64, f64)> {
        let mut t = t0;
        let mut trial = vec![0.0; dir.len()];
        while t > 1e-12 {
            for (x, (th, d)) in trial.iter_mut().zip(st.theta.iter().zip(dir)) {
                *x = th + t * d;
            }
            let f = self.objective(&st.knots, &trial);
            // near the optimum the decrease is below the rounding of f itself
            let slack = 8.0 * f64::EPSILON * f0.abs();
            if f.is_finite() && f <= f0 + ARMIJO * t * slope + slack {
                return Some((t, f));
            }
            t *= 0.5;
        }
        None
    }

    fn newton_on_set(&self, st: &mut State, trace: &mut Vec<f64>, steps: &mut usize) {
        for _ in 0..MAX_NEWTON_PER_SET {
            let d = self.derivs(&st.knots, &st.theta);
            let (groups, ng) = self.groups(st);
            let mut gd = vec![0.0; ng];
            let mut go = vec![0.0; ng.saturating_sub(1)];
            let mut gg = vec![0.0; ng];
            for k in 0..groups.len() {
                gd[groups[k]] += d.diag[k];
                gg[groups[k]] += d.grad[k];
                if k + 1 < groups.len() {
                    if groups[k] == groups[k + 1] {
                        gd[groups[k]] += 2.0 * d.off[k];
                    } else {
                        go[groups[k]] += d.off[k];
                    }
                }
            }
            let rhs: Vec<f64> = gg.iter().map(|g| -g).collect();
            let Some(step) = solve_tridiagonal(&gd, &go, &rhs) else {
                return;
            };
            let decrement: f64 = -gg.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>();
            if !(decrement > NEWTON_DECREMENT_TOL) {
                return;
            }
            let dir: Vec<f64> = groups.iter().map(|&g| step[g]).collect();
            let (tmax, blocker) = self.max_step(st, &dir);
            if tmax <= 1e-14 {
                if let Some(b) = blocker {
                    self.apply_blocker(st, b);
                    continue;
                }
            }
            let t0 = tmax.min(1.0);
            let Some((t, f)) = self.line_search(st, &dir, d.value, -decrement, t0) else {
                return;
            };
            for (th, dd) in st.theta.iter_mut().zip(&dir) {
                *th += t * dd;
            }
            *steps += 1;
            trace.push(1.0 - f);
            if t == t0 && tmax <= 1.0 {
                if let Some(b) = blocker {
                    self.apply_blocker(st, b);
                }
            } else {
                self.enforce_ties(st);
            }
        }
    }

    fn hinge_step(&self, st: &mut State, dir: &[f64], trace: &mut Vec<f64>, steps: &mut usize) {
        let d = self.derivs(&st.knots, &st.theta);
        let slope: f64 = d.grad.iter().zip(dir).map(|(g, h)| g * h).sum();
        if slope >= 0.0 {
            return;
        }
        let mut curv = 0.0;
        for k in 0..dir.len() {
            curv += d.diag[k] * dir[k] * dir[k];
            if k + 1 < dir.len() {
                curv += 2.0 * d.off[k] * dir[k] * dir[k + 1];
            }
        }
        if !(curv > 0.0) {
            return;
        }
        let t0 = -slope / curv;
        if let Some((t, f)) = self.line_search(st, dir, d.value, slope, t0) {
            for (th, h) in st.theta.iter_mut().zip(dir) {
                *th += t * h;
            }
            *steps += 1;
            trace.push(1.0 - f);
        }
    }

    pub fn solve(&self, opts: &SolverOptions) -> Solution {
        let mut st = self.initial_state();
        let mut trace = vec![1.0 - self.objective(&st.knots, &st.theta)];
        let mut steps = 0;
        let mut iterations = 0;
        let mut residual = f64::INFINITY;
        let mut converged = false;
        let mut polish = 0;
        let mut before = f64::NEG_INFINITY;
        loop {
            self.newton_on_set(&mut st, &mut trace, &mut steps);
            if polish > 0 && *trace.last().unwrap() <= before {
                // polishing stalled at rounding level; the previous check stands
                break;
            }
            let (gain, cand) = self.best_candidate(&st);
            residual = gain.max(0.0) / self.spacing;
            converged = residual <= opts.tol || cand.is_none();
            if cand.is_none() || residual <= POLISH_TOL.min(opts.tol) || (converged && polish >= MAX_POLISH) {
                break;
            }
            if converged {
                polish += 1;
            } else if iterations >= opts.max_iter + polish {
                break;
            }
            iterations += 1;
            let dir = match cand.unwrap() {
                Candidate::Knot(i, side) => {
                    let phi_i = self.fine_values(&st)[i];
                    let pos = st.knots.partition_point(|&k| k < i);
                    st.knots.insert(pos, i);
                    st.theta.insert(pos, phi_i);
                    self.hinge_direction(&st, i, side)
                }
                Candidate::Release(side) => {
                    match side {
                        Side::Left => st.tie_left = false,
                        Side::Right => st.tie_right = false,
                    }
                    self.hinge_direction(&st, self.mode.unwrap(), side)
                }
            };
            before = *trace.last().unwrap();
            self.hinge_step(&mut st, &dir, &mut trace, &mut steps);
        }
        self.finish(&st, iterations, steps, residual, converged, trace)
    }

    fn finish(
        &self,
        st: &State,
        iterations: usize,
        newton_steps: usize,
        residual: f64,
        converged: bool,
        objective_trace: Vec<f64>,
    ) -> Solution {
        let raw_mass = self.integral(st);
        let shift = raw_mass.ln();
        let knots: Vec<f64> = st.knots.iter().map(|&i| self.pts[i]).collect();
        let values: Vec<f64> = st.theta.iter().map(|v| v - shift).collect();
        let phi = self.fine_values(st);
        let mean_log: f64 = phi
            .iter()
            .zip(&self.w)
            .map(|(p, w)| w * (p - shift))
            .sum();
        Solution {
            density: PiecewiseLogLinearDensity::from_parts(knots, values),
            mean_log,
            iterations,
            newton_steps,
            residual,
            converged,
            objective_trace,
            raw_mass,
        }
    }
}

/// Solves a symmetric positive-definite tridiagonal system.
pub(crate) fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if !(denom > 0.0) {
        return None;
    }
    if n > 1 {
        c[0] = off[0] / denom;
    }
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - off[i - 1] * c[i - 1];
        if !(denom > 0.0) {
            return None;
        }
        if i + 1 < n {
            c[i] = off[i] / denom;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solver() {
        let diag = [4.0, 5.0, 6.0];
        let off = [1.0, 2.0];
        let x = [1.0, -2.0, 0.5];
        let rhs = [
            4.0 * x[0] + 1.0 * x[1],
            1.0 * x[0] + 5.0 * x[1] + 2.0 * x[2],
            2.0 * x[1] + 6.0 * x[2],
        ];
        let got = solve_tridiagonal(&diag, &off, &rhs).unwrap();
        for (g, w) in got.iter().zip(&x) {
            assert!((g - w).abs() < 1e-14);
        }
        assert!(solve_tridiagonal(&[1.0, 1.0], &[2.0], &[0.0, 0.0]).is_none());
    }

    #[test]
    fn mode_inserted_or_reused() {
        let s = Sample::from_observations(&[0.0, 1.0, 2.0]).unwrap();
        let p = Problem::new(&s, Some(1.0)).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.mode, Some(1));
        let p = Problem::new(&s, Some(1.5)).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.mode, Some(2));
        let p = Problem::new(&s, Some(-3.0)).unwrap();
        assert_eq!(p.mode, Some(0));
        assert_eq!(p.w[0], 0.0);
    }

    #[test]
    fn hinge_gains_vanish_at_ends_for_uniform() {
        let s = Sample::from_observations(&[0.0, 1.0]).unwrap();
        let p = Problem::new(&s, None).unwrap();
        let (l, r) = p.hinge_gains(&[0.0, 0.0]);
        assert!(l[1].abs() < 1e-15 && r[0].abs() < 1e-15);
    }
}

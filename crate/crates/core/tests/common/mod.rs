//! Log-barrier interior-point oracle for the solver cross-checks, on the same
//! knot-value parametrization as the crate. It integrates each
//! segment with 20-point Gauss-Legendre quadrature, so it shares no code with
//! the closed-form integrals used by the crate.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GL_NODES: usize = 20;

pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton on P_n, mapped to [0, 1].
    let mut t = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        t.push(0.5 * (1.0 - x));
        w.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (t, w)
}

pub struct Oracle {
    z: Vec<f64>,
    w: Vec<f64>,
    /// Rows `a` with feasibility `a·p > 0`.
    cons: Vec<DVector<f64>>,
    mode_idx: Option<usize>,
    gl: (Vec<f64>, Vec<f64>),
}

impl Oracle {
    pub fn new(obs: &[f64], mode: Option<f64>) -> Self {
        let mut z: Vec<f64> = obs.to_vec();
        if let Some(m) = mode {
            z.push(m);
        }
        z.sort_by(f64::total_cmp);
        z.dedup();
        let n = obs.len() as f64;
        let w: Vec<f64> = z
            .iter()
            .map(|v| obs.iter().filter(|x| *x == v).count() as f64 / n)
            .collect();
        let k = z.len();
        let slope = |j: usize| {
            let mut a = DVector::zeros(k);
            let l = z[j + 1] - z[j];
            a[j] = -1.0 / l;
            a[j + 1] = 1.0 / l;
            a
        };
        let mut cons = Vec::new();
        for j in 0..k.saturating_sub(2) {
            cons.push(slope(j) - slope(j + 1));
        }
        let mode_idx = mode.map(|m| z.iter().position(|&v| v == m).unwrap());
        if let Some(km) = mode_idx {
            for j in 0..k - 1 {
                cons.push(if j < km { slope(j) } else { -slope(j) });
            }
        }
        Oracle {
            z,
            w,
            cons,
            mode_idx,
            gl: gauss_legendre(GL_NODES),
        }
    }

    /// `-(w·p) + ∫e^φ` with gradient and Hessian.
    fn objective(&self, p: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let k = self.z.len();
        let mut f = 0.0;
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        for i in 0..k {
            f -= self.w[i] * p[i];
            g[i] -= self.w[i];
        }
        let (t, wt) = &self.gl;
        for j in 0..k - 1 {
            let l = self.z[j + 1] - self.z[j];
            for (tk, wk) in t.iter().zip(wt) {
                let e = l * wk * ((1.0 - tk) * p[j] + tk * p[j + 1]).exp();
                let v = [1.0 - tk, *tk];
                f += e;
                for a in 0..2 {
                    g[j + a] += e * v[a];
                    for b in 0..2 {
                        h[(j + a, j + b)] += e * v[a] * v[b];
                    }
                }
            }
        }
        (f, g, h)
    }

    fn feasible(&self, p: &DVector<f64>) -> bool {
        self.cons.iter().all(|a| a.dot(p) > 0.0)
    }

    fn barrier(&self, p: &DVector<f64>, t: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (f, mut g, mut h) = self.objective(p);
        let mut v = t * f;
        g *= t;
        h *= t;
        for a in &self.cons {
            let s = a.dot(p);
            v -= s.ln();
            g -= a / s;
            h += a * a.transpose() / (s * s);
        }
        (v, g, h)
    }

    /// Maximizes `w·p − ∫e^φ + 1`; returns `(value, p)`.
    pub fn solve(&self) -> (f64, DVector<f64>) {
        let k = self.z.len();
        let centre = match self.mode_idx {
            Some(i) => self.z[i],
            None => 0.5 * (self.z[0] + self.z[k - 1]),
        };
        let span = self.z[k - 1] - self.z[0];
        let mut p = DVector::from_iterator(k, self.z.iter().map(|x| -((x - centre) / span).powi(2) - span.ln()));
        assert!(self.feasible(&p));
        let m = self.cons.len().max(1) as f64;
        let mut t = 1.0;
        loop {
            for _ in 0..200 {
                let (v, g, h) = self.barrier(&p, t);
                let step = h.clone().cholesky().expect("barrier Hessian is positive definite").solve(&-&g);
                let dec = -g.dot(&step);
                if dec < 1e-20 * t.max(1.0) {
                    break;
                }
                let mut s = 1.0;
                loop {
                    let q = &p + &step * s;
                    if self.feasible(&q) && self.barrier(&q, t).0 <= v - 0.25 * s * dec {
                        p = q;
                        break;
                    }
                    s *= 0.5;
                    if s < 1e-20 {
                        break;
                    }
                }
                if s < 1e-20 {
                    break;
                }
            }
            if m / t < 1e-13 || self.cons.is_empty() {
                break;
            }
            t *= 8.0;
        }
        let (f, _, _) = self.objective(&p);
        (1.0 - f, p)
    }
}

pub fn instances() -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..50)
        .map(|i| {
            let n = 2 + i % 5;
            loop {
                let xs: Vec<f64> = (0..n)
                    .map(|_| {
                        let x: f64 = rng.random::<f64>() * 4.0 - 1.0;
                        // every fourth instance is coarse enough to contain ties
                        if i % 4 == 3 { (x * 2.0).round() / 2.0 } else { x }
                    })
                    .collect();
                let mut d = xs.clone();
                d.sort_by(f64::total_cmp);
                d.dedup();
                if d.len() >= 2 {
                    break xs;
                }
            }
        })
        .collect()
}


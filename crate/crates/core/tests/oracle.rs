mod common;

use common::{gauss_legendre, instances, Oracle, GL_NODES};
use modecert::{fit, fit_constrained, Sample, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn unconstrained_matches_barrier_oracle() {
    for (i, obs) in instances().iter().enumerate() {
        let s = Sample::from_observations(obs).unwrap();
        let r = fit(&s, &SolverOptions::default()).unwrap();
        let (value, p) = Oracle::new(obs, None).solve();
        let ours = r.log_likelihood / s.n() as f64;
        assert!((ours - value).abs() <= 1e-7, "instance {i}: {ours} vs {value}");
        let z = s.points();
        for (x, pv) in z.iter().zip(p.iter()) {
            assert!((r.density.eval_log(*x) - pv).abs() < 1e-4, "instance {i} at {x}");
        }
    }
}

#[test]
fn constrained_matches_barrier_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for (i, obs) in instances().iter().enumerate() {
        let s = Sample::from_observations(obs).unwrap();
        let (lo, hi) = (s.min(), s.max());
        let at_point = s.points()[rng.random_range(0..s.distinct())];
        let inside = lo + (hi - lo) * rng.random::<f64>();
        let outside = if i % 2 == 0 { hi + 0.2 + rng.random::<f64>() } else { lo - 0.2 - rng.random::<f64>() };
        let unconstrained = fit(&s, &SolverOptions::default()).unwrap().log_likelihood;
        for m in [at_point, inside, outside] {
            let r = fit_constrained(&s, m, &SolverOptions::default()).unwrap();
            let (value, _) = Oracle::new(obs, Some(m)).solve();
            let ours = r.log_likelihood / s.n() as f64;
            assert!((ours - value).abs() <= 1e-7, "instance {i}, m = {m}: {ours} vs {value}");
            assert!(r.log_likelihood <= unconstrained + 1e-9);
        }
    }
}

#[test]
fn two_points_with_mode_beyond_data() {
    let obs = [0.0, 1.0];
    let s = Sample::from_observations(&obs).unwrap();
    let r = fit_constrained(&s, 2.0, &SolverOptions::default()).unwrap();
    let (value, p) = Oracle::new(&obs, Some(2.0)).solve();
    assert_eq!((r.density.lower(), r.density.upper()), (0.0, 2.0));
    for (x, pv) in [0.0, 1.0, 2.0].iter().zip(p.iter()) {
        assert!((r.density.eval_log(*x) - pv).abs() < 1e-6, "{x}: {} vs {pv}", r.density.eval_log(*x));
    }
    assert!((r.log_likelihood / 2.0 - value).abs() < 1e-9);
    let slopes = r.density.slopes();
    assert!(slopes.iter().all(|&s| s >= -1e-10), "{slopes:?}");
    assert!(r.mode_summary.modal_hi >= 2.0 - 1e-10);
}

#[test]
fn gauss_legendre_is_exact_for_polynomials() {
    let (t, w) = gauss_legendre(GL_NODES);
    for deg in 0..(2 * GL_NODES) {
        let q: f64 = t.iter().zip(&w).map(|(x, wi)| wi * x.powi(deg as i32)).sum();
        assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "degree {deg}");
    }
}

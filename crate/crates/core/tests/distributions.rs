use modecert::montecarlo::ks_distance;
use modecert::{Density, ReferenceDistribution};
use statrs::distribution::{ContinuousCDF, Normal};

fn dist(s: &str) -> ReferenceDistribution {
    s.parse().unwrap()
}

const CURVED: [&str; 8] = [
    "normal:0,1",
    "normal:-2,0.3",
    "gamma:3,1",
    "weibull:1.5,1",
    "beta:2,3",
    "logistic:0,1",
    "gumbel:0,1",
    "chisq:4",
];

#[test]
fn log_curvature_matches_central_difference() {
    let h = 1e-4;
    for name in CURVED {
        let d = dist(name);
        let t = d.table1_constants().unwrap();
        let l = |x: f64| d.log_density(x);
        let num = (l(t.m + h) - 2.0 * l(t.m) + l(t.m - h)) / (h * h);
        assert!((num - t.phi2_m).abs() <= 1e-5 * t.phi2_m.abs(), "{name}: {num} vs {}", t.phi2_m);
        assert_eq!(t.f_m, l(t.m).exp(), "{name}");
    }
}

#[test]
fn mode_constant_scales_with_the_data() {
    for (name, scaled) in [
        ("normal:0,1", ["normal:0,0.5", "normal:0,2"]),
        ("gamma:3,1", ["gamma:3,0.5", "gamma:3,2"]),
        ("logistic:0,1", ["logistic:0,0.5", "logistic:0,2"]),
    ] {
        let c = dist(name).mode_constant_c().unwrap();
        for (k, s) in [0.5, 2.0].iter().zip(scaled) {
            let cs = dist(s).mode_constant_c().unwrap();
            assert!((cs - k * c).abs() <= 1e-12 * cs, "{s}");
        }
    }
}

#[test]
fn cdf_agrees_with_density() {
    for name in CURVED.iter().chain(&["laplace:0,1", "uniform:-1,2"]) {
        let d = dist(name);
        let (lo, hi) = modecert::plc::effective_support(&d, 1e-12);
        let (a, b) = (lo + 0.1 * (hi - lo), lo + 0.6 * (hi - lo));
        // composite Simpson on a fine grid
        let k = 20_000;
        let h = (b - a) / k as f64;
        let mut s = d.density(a) + d.density(b);
        for i in 1..k {
            s += d.density(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let quad = s * h / 3.0;
        let diff = d.cdf(b) - d.cdf(a);
        assert!((quad - diff).abs() <= 1e-8, "{name}: {quad} vs {diff}");
    }
}

#[test]
fn samplers_are_sane() {
    let u = dist("uniform:0,1").sample(100_000, 8).unwrap();
    let mean = u.mean_of(|x| x);
    assert!((mean - 0.5).abs() <= 0.005, "{mean}");

    let n = 100_000;
    let z = dist("normal:0,1").sample(n, 9).unwrap();
    let phi = Normal::standard();
    let mut ks: f64 = 0.0;
    let mut below = 0.0;
    for (x, w) in z.points().iter().zip(z.weights()) {
        let f = phi.cdf(*x);
        ks = ks.max((f - below).abs());
        below += w;
        ks = ks.max((f - below).abs());
    }
    assert!(ks <= 1.36 / (n as f64).sqrt() * 1.5, "{ks}");

    let a = dist("gamma:3,1").sample(500, 3).unwrap();
    let b = dist("gamma:3,1").sample(500, 3).unwrap();
    assert_eq!(a.points(), b.points());
    assert_ne!(a.points(), dist("gamma:3,1").sample(500, 4).unwrap().points());
}

#[test]
fn every_family_samples_its_own_law() {
    for name in CURVED.iter().chain(&["laplace:1,2", "uniform:-1,2"]) {
        let d = dist(name);
        let n = 20_000;
        let s = d.sample(n, 21).unwrap();
        let mut ks: f64 = 0.0;
        let mut below = 0.0;
        for (x, w) in s.points().iter().zip(s.weights()) {
            ks = ks.max((d.cdf(*x) - below).abs());
            below += w;
            ks = ks.max((d.cdf(*x) - below).abs());
        }
        assert!(ks <= 1.36 / (n as f64).sqrt() * 1.5, "{name}: {ks}");
    }
    // two independent samples of one law
    let d = dist("beta:2,3");
    let a: Vec<f64> = d.sample(4000, 1).unwrap().points().to_vec();
    let b: Vec<f64> = d.sample(4000, 2).unwrap().points().to_vec();
    assert!(ks_distance(&a, &b) <= 1.36 * (2.0f64 / 4000.0).sqrt() * 1.5);
}

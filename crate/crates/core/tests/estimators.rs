use modecert::{
    alternative_consistency, check_characterization, check_constrained_characterization, fit,
    fit_constrained, lr_statistic, lr_test, p_value, simulate_null, solve_laplace_projection,
    CriticalValueTable, Density, EngineOptions, ReferenceDistribution, SolverOptions, TableMeta,
};
use modecert::montecarlo::ks_distance;

fn dist(s: &str) -> ReferenceDistribution {
    s.parse().unwrap()
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn reference_table() -> CriticalValueTable {
    CriticalValueTable::new(
        vec![0.01, 0.05, 0.10, 0.15, 0.20, 0.25],
        vec![1.92, 1.11, 0.79, 0.61, 0.49, 0.40],
        TableMeta {
            dist: "normal:0,1".into(),
            n: 1_000_000,
            reps: 350_000,
            seed: 0,
            quantile: "type7".into(),
        },
    )
    .unwrap()
}

#[test]
fn gamma_fit_meets_knot_bound() {
    let s = dist("gamma:3,1").sample(100, 1).unwrap();
    let r = fit(&s, &opts()).unwrap();
    let c = check_characterization(&r, &s);
    assert!(c.max_knot_cdf_gap <= 1.0 / 100.0 + 1e-9, "{c:?}");
    assert!(c.passes(1e-9), "{c:?}");
}

#[test]
fn normal_constrained_fit_at_true_mode() {
    let s = dist("normal:0,1").sample(100, 2).unwrap();
    let r = fit_constrained(&s, 0.0, &opts()).unwrap();
    let c = check_constrained_characterization(&r, &s);
    assert!(c.sides.max_knot_cdf_gap <= 1.0 / 100.0 + 1e-9, "{c:?}");
    assert!(c.passes(1e-9), "{c:?}");
    assert!(r.mode_summary.modal_lo <= 0.0 && 0.0 <= r.mode_summary.modal_hi + 1e-10);
}

#[test]
fn normal_log_density_is_recovered() {
    let d = dist("normal:0,1");
    let s = d.sample(10_000, 1).unwrap();
    let r = fit(&s, &opts()).unwrap();
    let sup = (0..=2000)
        .map(|i| -1.0 + i as f64 / 1000.0)
        .map(|x| (r.density.eval_log(x) - d.log_density(x)).abs())
        .fold(0.0, f64::max);
    assert!(sup <= 0.25, "{sup}");
}

fn l1_distance(f: &dyn Density, g: &dyn Density, lo: f64, hi: f64) -> f64 {
    let k = 400_000;
    let h = (hi - lo) / k as f64;
    (0..k)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * h;
            (f.density(x) - g.density(x)).abs()
        })
        .sum::<f64>()
        * h
}

#[test]
fn laplace_constrained_fit_approaches_projection() {
    let p = solve_laplace_projection();
    let d = dist("laplace:0,1");
    let mut dists = Vec::new();
    for n in [1_000, 10_000] {
        let s = d.sample(n, 5).unwrap();
        let c = fit_constrained(&s, 1.0, &opts()).unwrap();
        dists.push(l1_distance(&c.density, &p.density, -40.0, 40.0));
    }
    assert!(dists[1] <= 0.1, "{dists:?}");
    assert!(dists[1] < dists[0], "{dists:?}");
}

#[test]
fn test_decisions_follow_the_table() {
    let t = reference_table();
    assert_eq!(t.critical_value(0.10).unwrap(), 0.79);
    assert_eq!(t.critical_value(0.01).unwrap(), 1.92);
    let mid = t.critical_value(0.075).unwrap();
    assert!(0.79 < mid && mid < 1.11);
    assert!(t.critical_value(0.5).is_err());

    let d = 1.11;
    let decide = |stat: f64| stat > d;
    assert!(decide(1.5));
    assert!(!decide(0.3));
    assert!(!decide(d));

    // lr_test applies the same rule
    let s = dist("normal:0,1").sample(200, 6).unwrap();
    let near = lr_test(&s, 0.0, 0.05, &t, &opts()).unwrap();
    let far = lr_test(&s, s.max() + s.range(), 0.05, &t, &opts()).unwrap();
    assert_eq!(near.critical_value, Some(1.11));
    assert_eq!(near.reject_at.is_some(), near.stat > 1.11);
    assert_eq!(far.reject_at, Some(0.05));
    assert!(far.p_value <= near.p_value);
    assert!(lr_test(&s, 0.0, 0.9, &t, &opts()).is_err());
}

#[test]
fn statistic_examples() {
    let two = modecert::Sample::from_observations(&[0.0, 1.0]).unwrap();
    for m in [0.0, 0.3, 1.0] {
        assert_eq!(lr_statistic(&two, m, &opts()).unwrap().stat, 0.0);
    }
    let s = dist("gamma:3,1").sample(300, 7).unwrap();
    let mode = fit(&s, &opts()).unwrap().mode.mode;
    assert!(lr_statistic(&s, mode, &opts()).unwrap().stat <= 1e-7);

    // far outside the data the statistic exceeds the 1% critical value
    for seed in 0..5 {
        let s = dist("normal:0,1").sample(50, seed).unwrap();
        for m in [s.min() - 1.05 * s.range(), s.max() + 1.05 * s.range()] {
            let r = lr_statistic(&s, m, &opts()).unwrap();
            assert!(r.stat > 1.92, "seed {seed}, m = {m}: {}", r.stat);
        }
    }

    let null = [0.1, 0.2, 0.3, 0.4, 0.5];
    assert_eq!(p_value(0.0, &null), 1.0);
    assert_eq!(p_value(9.0, &null), 1.0 / 6.0);
    assert_eq!(p_value(0.3, &null), 4.0 / 6.0);
    let many: Vec<f64> = (0..999).map(|i| i as f64).collect();
    assert_eq!(p_value(499.0, &many), 501.0 / 1000.0);
}

#[test]
fn single_replication_report() {
    let r = simulate_null(&dist("normal:0,1"), 200, 1, 3, &EngineOptions::default()).unwrap();
    assert_eq!(r.statistics.len(), 1);
    for q in &r.quantiles {
        assert_eq!(q.value, r.statistics[0]);
    }
}

#[test]
fn null_law_does_not_depend_on_seed() {
    let eng = EngineOptions::default();
    let d = dist("gamma:3,1");
    let reps = 200;
    let a = simulate_null(&d, 300, reps, 1, &eng).unwrap();
    let b = simulate_null(&d, 300, reps, 2, &eng).unwrap();
    assert_ne!(a.statistics, b.statistics);
    let ks = ks_distance(&a.statistics, &b.statistics);
    assert!(ks <= 1.36 * (2.0 / reps as f64).sqrt() * 1.5, "{ks}");
}

#[test]
fn statistic_per_observation_vanishes_under_the_null() {
    let eng = EngineOptions::default();
    let r = alternative_consistency(&dist("normal:0,1"), 0.0, &[1_000, 10_000], 5, 4, &eng).unwrap();
    // fitted target: only estimation error remains
    assert!(r.target < 0.01, "{}", r.target);
    assert!(r.rows[1].mean_stat_over_n < r.rows[0].mean_stat_over_n, "{:?}", r.rows);
    assert!(r.rows[1].mean_stat_over_n < 1e-3);
}

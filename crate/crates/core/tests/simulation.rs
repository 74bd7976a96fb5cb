use std::path::Path;

use hetreg::model::fit_groups;
use hetreg::simulation::{
    compare_fiducial_to_chi2, estimate_size, generate_dataset, mean_q0, Method, SimulationScenario,
};

fn shipped(name: &str) -> SimulationScenario {
    SimulationScenario::from_file(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)).unwrap()
}

#[test]
fn shipped_scenarios_load() {
    let small = shipped("small_sample.toml");
    let large = shipped("large_sample.toml");
    assert_eq!((small.k, small.p, small.n.as_slice()), (3, 2, &[10, 10, 10][..]));
    assert_eq!(large.n, vec![500; 3]);
    assert!(small.is_null() && large.is_null());
    assert_eq!(small.sigma2, large.sigma2);
}

#[test]
fn large_sample_q0_mean_is_chi2_mean() {
    let mut scenario = shipped("large_sample.toml");
    scenario.n = vec![200; 3];
    let mean = mean_q0(&scenario, 2000).unwrap();
    let df = scenario.df_chi2() as f64;
    assert!((mean - df).abs() <= 0.05 * df, "mean q0 {mean} vs {df}");
}

#[test]
fn chi2_is_more_liberal_than_fiducial_in_small_samples() {
    let scenario = shipped("small_sample.toml");
    let chi2 = estimate_size(&scenario, Method::Chi2, 0.05, 2000, 2000).unwrap();
    let fid = estimate_size(&scenario, Method::Fiducial, 0.05, 2000, 2000).unwrap();
    assert!(chi2.empirical_size > fid.empirical_size, "{chi2:?} vs {fid:?}");
    assert_eq!(chi2.rejections as f64 / 2000.0, chi2.empirical_size);
}

#[test]
fn fiducial_draws_differ_from_chi2_at_eight_observations() {
    let mut scenario = shipped("small_sample.toml");
    scenario.n = vec![8; 3];
    let est = fit_groups(&generate_dataset(&scenario, 0).unwrap()).unwrap();
    let cmp = compare_fiducial_to_chi2(&est, 100_000, 3).unwrap();
    assert!(!cmp.passed, "{cmp:?}");
}

#[test]
fn datasets_do_not_depend_on_thread_count() {
    let scenario = shipped("small_sample.toml");
    let build = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let reps = estimate_size(&scenario, Method::Generalized, 0.05, 200, 500).unwrap();
            let data: Vec<_> = (0..5).map(|r| generate_dataset(&scenario, r).unwrap()).collect();
            (reps, data)
        })
    };
    assert_eq!(build(1), build(6));
}

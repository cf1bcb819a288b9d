use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use symden::datagen::{Dataset, GaussianSpec, Rastrigin};
use symden::density::{
    cv_bandwidth, default_candidates, fft_kde_grid, kde_fit, select_bandwidth, silverman_bandwidth,
    FftOptions,
};
use symden::grid::BoxRegion;
use symden::validate::integrate_grid;
use symden::{seed, GridSpec};

#[test]
fn fft_kde_matches_direct_on_the_mixture_grid() {
    let samples =
        symden::datagen::sample_gaussian_mixture(&GaussianSpec::two_modes(), 2000, 3).unwrap();
    let grid = GridSpec::uniform(&[-9.0, -9.0], &[9.0, 9.0], 256).unwrap();
    let h = 0.101;
    let fast = fft_kde_grid(samples.view(), &grid, h, FftOptions::default()).unwrap();
    let direct = kde_fit(samples.view(), h)
        .unwrap()
        .evaluate(grid.nodes().view())
        .unwrap();
    let peak = direct.iter().cloned().fold(0.0, f64::max);
    let worst = fast
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b).abs() / peak)
        .fold(0.0, f64::max);
    assert!(worst <= 1e-3, "peak-relative error {worst}");
    let mass = fast.iter().sum::<f64>() * grid.cell_volume();
    assert!((0.99..=1.01).contains(&mass), "{mass}");
}

#[test]
fn cv_bandwidth_lands_near_the_rule_of_thumb_for_a_normal() {
    let mut rng = seed::rng(21);
    let x = Array2::from_shape_fn((2000, 1), |_| StandardNormal.sample(&mut rng));
    let h = cv_bandwidth(x.view(), &default_candidates(x.view()), 5, 1).unwrap();
    // For N(0, 1) the AMISE-optimal width is 1.06 n^(-1/5), about 0.232.
    let oracle = 1.06 * 2000f64.powf(-0.2);
    assert!(
        h > oracle / 2.0 && h < oracle * 2.0,
        "h = {h}, oracle = {oracle}"
    );
    let s = silverman_bandwidth(x.view());
    assert!((s / oracle - 1.0).abs() < 0.1, "{s}");
}

#[test]
fn capped_selection_tracks_the_full_search() {
    let mut rng = seed::rng(5);
    let x = Array2::from_shape_fn((4000, 2), |_| StandardNormal.sample(&mut rng));
    let full = cv_bandwidth(x.view(), &default_candidates(x.view()), 5, 2).unwrap();
    let capped = select_bandwidth(x.view(), 5, 2, 1000).unwrap();
    assert!((capped / full).ln().abs() < 0.4, "{capped} vs {full}");
    assert_eq!(select_bandwidth(x.view(), 5, 2, 1000).unwrap(), capped);
}

#[test]
fn every_builtin_density_is_normalized() {
    for ds in Dataset::ALL {
        let truth = ds.truth();
        let res = if ds.dim() == 4 {
            vec![30; 4]
        } else {
            vec![512; 2]
        };
        let total = integrate_grid(truth.as_ref(), &ds.domain(), &res).unwrap();
        assert!((total - 1.0).abs() < 1e-3, "{}: {total}", ds.name());
    }
}

#[test]
fn rastrigin_constant_normalizes() {
    let total = integrate_grid(
        &Rastrigin,
        &BoxRegion::new(vec![-2.0; 2], vec![2.0; 2]),
        &[512, 512],
    )
    .unwrap();
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}

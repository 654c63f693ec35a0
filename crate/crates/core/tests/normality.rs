use copula_dbn::seed::{derive_indexed, rng_from_seed};
use copula_dbn::transform::{
    anderson_darling, box_cox, estimate_lambda, fit_box_cox, jarque_bera, LillieforsNull, DEFAULT_LILLIEFORS_REPS,
};
use rand_distr::{Distribution, StandardNormal};

fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[test]
fn lognormal_is_normalized_by_a_near_log_transform() {
    for seed in [1, 2, 3] {
        let sample: Vec<f64> = normal_sample(2000, seed).into_iter().map(f64::exp).collect();
        let params = estimate_lambda(&sample).unwrap();
        assert!(params.lambda.abs() <= 0.1, "seed {seed}: lambda {}", params.lambda);
        let transformed = box_cox(&sample, &params).unwrap();
        assert!(anderson_darling(&transformed).unwrap().p_value > 0.05);
    }
}

#[test]
fn subsampled_fit_transforms_the_whole_series() {
    let mut sample: Vec<f64> = normal_sample(5000, 4).into_iter().map(|z| (0.5 * z).exp()).collect();
    sample[17] = 0.0;
    let params = fit_box_cox(&sample, 0.1, 9).unwrap();
    assert!(params.shift > 0.0);
    assert!(box_cox(&sample, &params).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn type_one_error_rates_are_near_nominal() {
    let n = 500;
    let trials = 1000u64;
    let null = LillieforsNull::simulate(n, DEFAULT_LILLIEFORS_REPS, 99).unwrap();
    let (mut ad, mut jb, mut lf) = (0, 0, 0);
    for t in 0..trials {
        let x = normal_sample(n, derive_indexed(7, t));
        ad += usize::from(anderson_darling(&x).unwrap().p_value < 0.05);
        jb += usize::from(jarque_bera(&x).unwrap().p_value < 0.05);
        lf += usize::from(null.test(&x).unwrap().p_value < 0.05);
    }
    for (name, rejections) in [("anderson-darling", ad), ("jarque-bera", jb), ("lilliefors", lf)] {
        let rate = rejections as f64 / trials as f64;
        assert!((0.03..=0.07).contains(&rate), "{name}: {rate}");
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rarefail_core::models::{borehole_flow, FnLimitState};
use rarefail_core::subset::empirical_quantile;
use rarefail_core::{borehole_space, run_akmcs, AkmcsConfig, Evaluator};

#[test]
fn low_flow_probability_matches_crude_monte_carlo() {
    let space = borehole_space();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let calib: Vec<f64> = (0..100_000)
        .map(|_| borehole_flow(&space.sample(&mut rng)).unwrap())
        .collect();
    let q10 = empirical_quantile(&calib, 0.1);

    // failure is a flow below the 10th percentile
    let g = move |x: &[f64]| q10 - borehole_flow(x).unwrap();
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let hits = (0..n).filter(|_| g(&space.sample(&mut rng)) >= 0.0).count();
    let oracle = hits as f64 / n as f64;
    assert!((oracle - 0.1).abs() < 0.003, "crude MC {oracle}");

    let hf = Evaluator::new(FnLimitState::new("low_flow", g));
    let run = run_akmcs(
        &space,
        &hf,
        &AkmcsConfig {
            seed: 5,
            ..AkmcsConfig::default()
        },
    )
    .unwrap();
    let est = &run.estimate;
    assert!(est.converged);
    assert!(
        (est.p_f - oracle).abs() <= 2.0 * est.cov * oracle,
        "{} vs {oracle} (cov {})",
        est.p_f,
        est.cov
    );
    assert!(est.hf_calls < est.total_samples);
    assert!(run.trace.last().unwrap().min_u >= 2.0);
}

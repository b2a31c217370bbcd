use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rarefail_core::mlp::{MlpConfig, MlpModel};
use rarefail_core::models::{borehole_flow, borehole_space};

mod common;

#[test]
fn backprop_matches_central_differences() {
    for seed in [17, 18, 19] {
        let report = common::mlp_against_differences(seed);
        assert!(report.worst_rel <= 1e-5, "seed {seed}: {}", report.worst_rel);
        assert!(report.worst_small_abs < 1e-9, "seed {seed}: {}", report.worst_small_abs);
        assert!(report.checked > report.total / 2);
    }
}

fn line_data() -> (Vec<Vec<f64>>, Vec<f64>) {
    let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
    let y = x.iter().map(|r| (3.0 * r[0]).sin() + r[0]).collect();
    (x, y)
}

#[test]
fn l2_penalty_shrinks_weights() {
    let (x, y) = line_data();
    let free = MlpModel::train(
        &x,
        &y,
        &MlpConfig {
            l2_lambda: 0.0,
            epochs: 2000,
            ..MlpConfig::default()
        },
    )
    .unwrap();
    let reg = MlpModel::train(
        &x,
        &y,
        &MlpConfig {
            l2_lambda: 1e-2,
            epochs: 2000,
            ..MlpConfig::default()
        },
    )
    .unwrap();
    assert!(reg.weight_norm_sq() < free.weight_norm_sq());
}

#[test]
fn output_is_bounded_by_final_layer_norm() {
    let (x, y) = line_data();
    let model = MlpModel::train(
        &x,
        &y,
        &MlpConfig {
            epochs: 500,
            ..MlpConfig::default()
        },
    )
    .unwrap();
    let out = model.layers().last().unwrap();
    let bound_std = out.weights.iter().map(|w| w.abs()).sum::<f64>() + out.biases[0].abs();
    let (m, s) = model.output_scaling();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let p = model.predict(&[rng.random_range(-50.0..50.0)]);
        assert!(p.abs() <= m.abs() + s * bound_std);
    }
}

#[test]
fn borehole_training_loss_decreases_and_is_reproducible() {
    let space = borehole_space();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let design = space.latin_hypercube(12, &mut rng);
    let x: Vec<Vec<f64>> = design.iter().map(|p| p.to_vec()).collect();
    let y: Vec<f64> = design.iter().map(|p| borehole_flow(p).unwrap()).collect();
    let cfg = MlpConfig::default();
    let a = MlpModel::train(&x, &y, &cfg).unwrap();
    assert_eq!(a.losses().len(), 5000);
    assert!(a.final_loss().unwrap() <= a.losses()[0]);
    let b = MlpModel::train(&x, &y, &cfg).unwrap();
    let bits = |m: &MlpModel| {
        m.parameters()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
}

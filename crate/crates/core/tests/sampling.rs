use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rarefail_core::models::borehole_space;
use rarefail_core::subset::mh_step;
use rarefail_core::{MarginalDistribution, ParameterSpace};
use statrs::distribution::{ContinuousCDF, LogNormal, Normal, Uniform};

#[test]
fn first_borehole_draw_matches_inverse_cdf() {
    let space = borehole_space();
    let got = space.sample(&mut ChaCha8Rng::seed_from_u64(42));

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let p: Vec<f64> = (0..8).map(|_| rng.sample(Open01)).collect();
    let uniform = |k: usize, a: f64, b: f64| Uniform::new(a, b).unwrap().inverse_cdf(p[k]);
    let expected = [
        Normal::new(0.10, 0.016_181_2).unwrap().inverse_cdf(p[0]),
        LogNormal::new(7.71, 1.0056).unwrap().inverse_cdf(p[1]),
        uniform(2, 63_070.0, 115_600.0),
        uniform(3, 990.0, 1_110.0),
        uniform(4, 63.1, 116.0),
        uniform(5, 700.0, 820.0),
        uniform(6, 1_120.0, 1_680.0),
        uniform(7, 9_855.0, 12_045.0),
    ];
    for (k, (a, b)) in got.as_slice().iter().zip(expected).enumerate() {
        assert!(
            (a - b).abs() <= 1e-9 * b.abs(),
            "coordinate {k}: {a} vs {b}"
        );
    }
}

#[test]
fn standard_normal_round_trip() {
    let space = borehole_space();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let x = space.sample(&mut rng);
        let back = space.from_standard_normal(&space.to_standard_normal(&x));
        for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn unconditioned_chain_keeps_the_prior() {
    let space = ParameterSpace::standard_normal(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut x = space.sample(&mut rng);
    let n = 100_000;
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    for _ in 0..n {
        x = mh_step(&x, &space, &mut rng, 1.0);
        for k in 0..2 {
            sum[k] += x.as_slice()[k];
            sq[k] += x.as_slice()[k].powi(2);
        }
    }
    for k in 0..2 {
        let m = sum[k] / n as f64;
        let v = sq[k] / n as f64 - m * m;
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((0.95..=1.05).contains(&v), "variance {v}");
    }
}

#[test]
fn unmoved_coordinates_are_bitwise_unchanged() {
    let space = borehole_space();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = space.sample(&mut rng);
    let mut kept = 0;
    for _ in 0..200 {
        let y = mh_step(&x, &space, &mut rng, 1.0);
        for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
            if (a - b).abs() < 1e-300 {
                assert_eq!(a.to_bits(), b.to_bits());
                kept += 1;
            }
        }
    }
    assert!(kept > 0);
}

#[test]
fn latin_hypercube_hits_each_stratum_once() {
    let m = MarginalDistribution::uniform(0.0, 1.0).unwrap();
    let space = ParameterSpace::new([("a", m), ("b", m)]).unwrap();
    let pts = space.latin_hypercube(50, &mut ChaCha8Rng::seed_from_u64(8));
    for k in 0..2 {
        let mut seen = [false; 50];
        for p in &pts {
            let s = (p.as_slice()[k] * 50.0).floor() as usize;
            assert!(!seen[s]);
            seen[s] = true;
        }
    }
}

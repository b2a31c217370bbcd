//! Reference computations shared by the numerical oracle tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rarefail_core::kriging::{FitOptions, GpModel, KernelParams};
use rarefail_core::mlp::{MlpConfig, MlpModel};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

/// Dot product in twice the working precision (Ogita, Rump and Oishi).
pub fn dot2(a: &[f64], b: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let p = x * y;
        let e = x.mul_add(*y, -p);
        let (t, q) = two_sum(s, p);
        s = t;
        c += q + e;
    }
    s + c
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn dense_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        let piv = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= piv);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    let pivot_row = m[c].clone();
                    m[r].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Solves `a x = b`, refining with residuals in doubled precision so the
/// result is accurate well below the matrix condition number times epsilon.
pub fn refined_solve(a: &[Vec<f64>], inv: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let apply = |v: &[f64]| inv.iter().map(|row| dot2(row, v)).collect::<Vec<f64>>();
    let mut x = apply(b);
    for _ in 0..4 {
        let r: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(row, bi)| {
                let mut lhs = row.clone();
                lhs.push(-1.0);
                let mut rhs = x.clone();
                rhs.push(*bi);
                -dot2(&lhs, &rhs)
            })
            .collect();
        for (xi, d) in x.iter_mut().zip(apply(&r)) {
            *xi += d;
        }
    }
    x
}

pub fn sq_exp(a: &[f64], b: &[f64], amp: f64, ls: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    amp * (-0.5 * s).exp()
}

pub struct DenseReport {
    pub worst_mean_rel: f64,
    pub worst_var_rel: f64,
    pub problems: usize,
    pub queries: usize,
}

/// Posterior mean and variance of 20 random small problems (n <= 30)
/// against dense solves; relative errors, the mean floored at 1e-6.
pub fn gp_against_dense(seed: u64) -> DenseReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = FitOptions {
        standardize: false,
        ..FitOptions::default()
    };
    let mut report = DenseReport {
        worst_mean_rel: 0.0,
        worst_var_rel: 0.0,
        problems: 20,
        queries: 0,
    };
    for _ in 0..report.problems {
        let d = rng.random_range(1..=4);
        let n = rng.random_range(2..=30);
        let amp = rng.random_range(0.5..2.0);
        let ls: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
        let nugget = 1e-4 * amp;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(0.0..3.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| r.iter().map(|v| v.sin()).sum::<f64>() + rng.random_range(-0.1..0.1))
            .collect();
        let params = KernelParams::new(amp, ls.clone(), nugget).unwrap();
        let gp = GpModel::condition(&x, &y, params, opts.clone()).unwrap();

        let k: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| sq_exp(&x[i], &x[j], amp, &ls) + if i == j { nugget } else { 0.0 })
                    .collect()
            })
            .collect();
        let kinv = dense_inverse(&k);
        let alpha = refined_solve(&k, &kinv, &y);
        for _ in 0..10 {
            let xs: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..3.5)).collect();
            let ks: Vec<f64> = x.iter().map(|r| sq_exp(&xs, r, amp, &ls)).collect();
            let mean = dot2(&ks, &alpha);
            let w = refined_solve(&k, &kinv, &ks);
            let mut lhs = ks.clone();
            lhs.push(amp);
            let mut rhs: Vec<f64> = w.iter().map(|v| -v).collect();
            rhs.push(1.0);
            let var = dot2(&lhs, &rhs);

            let pred = gp.predict(&xs);
            let got_var = pred.std * pred.std;
            let em = (pred.mean - mean).abs() / mean.abs().max(1e-6);
            let ev = (got_var - var).abs() / var.abs();
            report.worst_mean_rel = report.worst_mean_rel.max(em);
            report.worst_var_rel = report.worst_var_rel.max(ev);
            report.queries += 1;
        }
    }
    report
}

pub struct GradientReport {
    pub worst_rel: f64,
    /// Worst absolute error over components too small for a relative check.
    pub worst_small_abs: f64,
    pub checked: usize,
    pub total: usize,
}

/// Back-propagation against central differences on a random 3-sample batch.
pub fn mlp_against_differences(seed: u64) -> GradientReport {
    let cfg = MlpConfig {
        seed,
        ..MlpConfig::default()
    };
    let mut model = MlpModel::initialize(3, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // non-zero biases so every parameter is exercised
    let mut params = model.parameters();
    params.iter_mut().for_each(|p| *p += rng.random_range(-0.1..0.1));
    model.set_parameters(&params);
    let xs: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..3).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let ys: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lambda = 1e-3;

    let (_, grad) = model.loss_and_gradient(&xs, &ys, lambda);
    let h = 1e-6;
    let mut probe = model.clone();
    let mut report = GradientReport {
        worst_rel: 0.0,
        worst_small_abs: 0.0,
        checked: 0,
        total: params.len(),
    };
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += h;
        probe.set_parameters(&p);
        let up = probe.loss_and_gradient(&xs, &ys, lambda).0;
        p[i] -= 2.0 * h;
        probe.set_parameters(&p);
        let down = probe.loss_and_gradient(&xs, &ys, lambda).0;
        let fd = (up - down) / (2.0 * h);
        let scale = grad[i].abs().max(fd.abs());
        // components below 1e-6 are dominated by difference noise
        if scale > 1e-6 {
            report.worst_rel = report.worst_rel.max((grad[i] - fd).abs() / scale);
            report.checked += 1;
        } else {
            report.worst_small_abs = report.worst_small_abs.max((grad[i] - fd).abs());
        }
    }
    report
}

//! Scratch probe: how close can a B-measurable policy get to the bisection
//! optimum? Nearest-neighbor policy transfer from the training set gives a
//! lower bound on the achievable parity.
//! Usage: cargo run -p cfpc-core --example probe_knn_ceiling -- <dataset.json> [n_test]

use cfpc_core::config::SystemParams;
use cfpc_core::metrics::{sinr, PowerAllocation};
use cfpc_core::pipeline::{build_dataset, Dataset};
use cfpc_core::rng::derive_seed;
use cfpc_core::solvers::solve_maxmin;
use rayon::prelude::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ds_path = args.get(1).expect("dataset path");
    let n_test: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(200);
    let train = Dataset::load_cache(std::path::Path::new(ds_path)).unwrap();
    let params = SystemParams::with_dims(8, 20);
    let test = build_dataset(&params, n_test, derive_seed(1, "test")).unwrap();

    // Bisection optimum for every training sample.
    let train_eta: Vec<Vec<f64>> = train
        .samples
        .par_iter()
        .map(|s| solve_maxmin(&s.coeffs, 1e-6).unwrap().eta.as_slice().to_vec())
        .collect();

    // Standardize log10(B) with training-set stats.
    let k = train.num_ues();
    let n = train.num_samples() as f64;
    let mut mean = vec![0.0; k];
    for s in &train.samples {
        for (m, b) in mean.iter_mut().zip(&s.b) {
            *m += b.log10();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = vec![0.0f64; k];
    for s in &train.samples {
        for i in 0..k {
            std[i] += (s.b[i].log10() - mean[i]).powi(2);
        }
    }
    std.iter_mut().for_each(|v| *v = (*v / n).sqrt());
    let feat = |b: &[f64]| -> Vec<f64> {
        b.iter()
            .enumerate()
            .map(|(i, x)| (x.log10() - mean[i]) / std[i])
            .collect()
    };
    let train_feat: Vec<Vec<f64>> = train.samples.iter().map(|s| feat(&s.b)).collect();

    let mut ratios = Vec::new();
    for s in &test.samples {
        let f = feat(&s.b);
        let mut best = (f64::INFINITY, 0usize);
        for (i, tf) in train_feat.iter().enumerate() {
            let d: f64 = tf.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        let eta = PowerAllocation::new(train_eta[best.1].clone()).unwrap();
        let si = sinr(&s.coeffs, &eta);
        let min_nn = si.iter().cloned().fold(f64::INFINITY, f64::min);
        let opt = solve_maxmin(&s.coeffs, 1e-6).unwrap();
        let si_o = sinr(&s.coeffs, &opt.eta);
        let min_o = si_o.iter().cloned().fold(f64::INFINITY, f64::min);
        ratios.push((min_nn, min_o));
    }
    let mut nn: Vec<f64> = ratios.iter().map(|r| r.0).collect();
    let mut op: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    nn.sort_by(f64::total_cmp);
    op.sort_by(f64::total_cmp);
    let m = n_test / 2;
    println!(
        "1-NN policy: median min-SINR {:.4} vs bisection {:.4} -> ratio {:.4}",
        nn[m],
        op[m],
        nn[m] / op[m]
    );
    let mean_pointwise: f64 =
        ratios.iter().map(|(a, b)| a / b).sum::<f64>() / n_test as f64;
    println!("mean pointwise ratio {mean_pointwise:.4}");
}

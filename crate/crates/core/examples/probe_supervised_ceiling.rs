//! Scratch probe: lower-bound the B-measurable parity ceiling by k-NN
//! regression of the bisection-optimal allocations.
//! Usage: ... -- <dataset.json> [n_test]

use cfpc_core::config::SystemParams;
use cfpc_core::metrics::{sinr, PowerAllocation};
use cfpc_core::pipeline::{build_dataset, Dataset};
use cfpc_core::rng::derive_seed;
use cfpc_core::solvers::solve_maxmin;
use rayon::prelude::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let train = Dataset::load_cache(std::path::Path::new(&args[1])).unwrap();
    let n_test: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(500);
    let k_users = train.num_ues();
    let params = SystemParams::with_dims(k_users, train.params.num_aps);
    let test = build_dataset(&params, n_test, derive_seed(1, "test")).unwrap();

    let train_eta: Vec<Vec<f64>> = train
        .samples
        .par_iter()
        .map(|s| solve_maxmin(&s.coeffs, 1e-6).unwrap().eta.as_slice().to_vec())
        .collect();

    let n = train.num_samples() as f64;
    let mut mean = vec![0.0; k_users];
    for s in &train.samples {
        for (m, b) in mean.iter_mut().zip(&s.b) {
            *m += b.log10();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = vec![0.0f64; k_users];
    for s in &train.samples {
        for i in 0..k_users {
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

    for k_nn in [8usize, 32, 128] {
        let mut dl = Vec::new();
        let mut op = Vec::new();
        for s in &test.samples {
            let f = feat(&s.b);
            let mut dist: Vec<(f64, usize)> = train_feat
                .iter()
                .enumerate()
                .map(|(i, tf)| {
                    (
                        tf.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
                        i,
                    )
                })
                .collect();
            dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut eta = vec![0.0; k_users];
            for &(_, i) in dist.iter().take(k_nn) {
                for (e, t) in eta.iter_mut().zip(&train_eta[i]) {
                    *e += t;
                }
            }
            let mx = eta.iter().cloned().fold(0.0_f64, f64::max);
            eta.iter_mut().for_each(|e| *e /= mx);
            let si = sinr(&s.coeffs, &PowerAllocation::new(eta).unwrap());
            let so = sinr(
                &s.coeffs,
                &solve_maxmin(&s.coeffs, 1e-6).unwrap().eta,
            );
            let fmin = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
            dl.push(fmin(&si));
            op.push(fmin(&so));
        }
        dl.sort_by(f64::total_cmp);
        op.sort_by(f64::total_cmp);
        let m = n_test / 2;
        println!(
            "k={k_nn:4}: median min-SINR {:.4} vs opt {:.4} -> parity {:.4}",
            dl[m],
            op[m],
            dl[m] / op[m]
        );
    }
}

//! Scratch probe: min-SINR parity of a checkpoint on training samples vs
//! fresh test samples (generalization-gap check).
//! Usage: ... -- <checkpoint> <dataset.json> [n]

use cfpc_core::config::SystemParams;
use cfpc_core::metrics::sinr;
use cfpc_core::pipeline::{build_dataset, infer, load_checkpoint, Dataset, Sample};
use cfpc_core::rng::derive_seed;
use cfpc_core::solvers::solve_maxmin;
use rayon::prelude::*;

fn parity(model: &cfpc_core::neural::MlpModel, samples: &[Sample]) -> (f64, f64) {
    let pairs: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let eta = infer(model, &s.b).unwrap();
            let si = sinr(&s.coeffs, &eta);
            let opt = solve_maxmin(&s.coeffs, 1e-6).unwrap();
            let so = sinr(&s.coeffs, &opt.eta);
            let f = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
            (f(&si), f(&so))
        })
        .collect();
    let mut dl: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut op: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    dl.sort_by(f64::total_cmp);
    op.sort_by(f64::total_cmp);
    let m = dl.len() / 2;
    (dl[m] / op[m], dl[m])
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let (model, _, _) = load_checkpoint(std::path::Path::new(&args[1])).unwrap();
    let train = Dataset::load_cache(std::path::Path::new(&args[2])).unwrap();
    let n: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(500);
    let params = SystemParams::with_dims(train.num_ues(), train.params.num_aps);
    let test = build_dataset(&params, n, derive_seed(1, "test")).unwrap();
    let (r_train, _) = parity(&model, &train.samples[..n.min(train.num_samples())]);
    let (r_test, _) = parity(&model, &test.samples);
    println!("median min-SINR parity: train {r_train:.4}  test {r_test:.4}");
}

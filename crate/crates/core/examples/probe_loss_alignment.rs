//! Scratch probe: compare the max-min training loss achieved by a trained
//! checkpoint against the loss of the bisection allocation on fresh samples.
//! Usage: cargo run -p cfpc-core --example probe_loss_alignment -- <checkpoint> [n]

use cfpc_core::config::SystemParams;
use cfpc_core::metrics::{sinr, PowerAllocation};
use cfpc_core::neural::{loss_value, LossKind, LossSpec};
use cfpc_core::pipeline::{build_dataset, infer, load_checkpoint};
use cfpc_core::rng::derive_seed;
use cfpc_core::solvers::solve_maxmin;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ckpt_path = args.get(1).expect("checkpoint path");
    let n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(200);
    let (model, _spec, _seed) = load_checkpoint(std::path::Path::new(ckpt_path)).unwrap();

    let params = SystemParams::with_dims(8, 20);
    let test = build_dataset(&params, n, derive_seed(1, "test")).unwrap();
    let spec = LossSpec::for_kind(LossKind::MaxMin, 8);

    let mut loss_model = 0.0;
    let mut loss_bis = 0.0;
    let mut loss_ep = 0.0;
    let mut min_model = Vec::new();
    let mut min_bis = Vec::new();
    for s in &test.samples {
        let eta_m = infer(&model, &s.b).unwrap();
        let rep = solve_maxmin(&s.coeffs, 1e-6).unwrap();
        let eta_b = rep.eta;
        let ones = PowerAllocation::uniform(8, 1.0).unwrap();
        let si_m = sinr(&s.coeffs, &eta_m);
        let si_b = sinr(&s.coeffs, &eta_b);
        let si_e = sinr(&s.coeffs, &ones);
        loss_model += loss_value(&spec, &si_m).unwrap();
        loss_bis += loss_value(&spec, &si_b).unwrap();
        loss_ep += loss_value(&spec, &si_e).unwrap();
        let f = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        min_model.push(f(&si_m));
        min_bis.push(f(&si_b));
    }
    let nf = n as f64;
    println!("mean maxmin loss: model {:.6}  bisection {:.6}  equal-power {:.6}",
        loss_model / nf, loss_bis / nf, loss_ep / nf);
    min_model.sort_by(f64::total_cmp);
    min_bis.sort_by(f64::total_cmp);
    println!("median min-SINR: model {:.4}  bisection {:.4}  ratio {:.4}",
        min_model[n / 2], min_bis[n / 2], min_model[n / 2] / min_bis[n / 2]);

    // Power statistics: a max-min-optimal eta always has max_k eta = 1.
    let mut max_eta = Vec::new();
    let mut min_eta = Vec::new();
    let mut rescaled_ratio = Vec::new();
    for s in &test.samples {
        let eta_m = infer(&model, &s.b).unwrap();
        let em = eta_m.as_slice();
        let mx = em.iter().cloned().fold(0.0_f64, f64::max);
        max_eta.push(mx);
        min_eta.push(em.iter().cloned().fold(f64::INFINITY, f64::min));
        let scaled: Vec<f64> = em.iter().map(|e| e / mx).collect();
        let si = sinr(&s.coeffs, &PowerAllocation::new(scaled).unwrap());
        rescaled_ratio.push(si.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    max_eta.sort_by(f64::total_cmp);
    min_eta.sort_by(f64::total_cmp);
    rescaled_ratio.sort_by(f64::total_cmp);
    println!("model eta: median max_k {:.4}  median min_k {:.4}",
        max_eta[n / 2], min_eta[n / 2]);
    println!("median min-SINR if outputs rescaled to max 1: {:.4} (ratio {:.4})",
        rescaled_ratio[n / 2], rescaled_ratio[n / 2] / min_bis[n / 2]);
}

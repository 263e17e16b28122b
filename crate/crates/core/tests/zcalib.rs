//! Temporary throughput calibration (deleted before ship).

use std::time::Instant;

use dumb_core::attack::{AttackKind, AttackSpec};
use dumb_core::diff::{argmax_row, grad_wrt_input, uniform_pm1_like, Tensor};
use dumb_core::model::ArchId;
use dumb_core::perceptual::SsimConfig;
use dumb_core::tuning::{tune, TuningConfig};

fn batch(n: usize, size: usize, seed: u64) -> Tensor<f32> {
    uniform_pm1_like::<f32>(&[n, 3, size, size], seed).map(|v| (v + 1.0) / 2.0)
}

fn labels_of(net: &dumb_core::diff::Network<f32>, x: &Tensor<f32>) -> Vec<usize> {
    let probs = net.predict_proba(x).unwrap();
    let k = probs.shape()[1];
    (0..x.shape()[0])
        .map(|b| argmax_row(&probs.data()[b * k..(b + 1) * k]))
        .collect()
}

#[test]
fn forward_scaling() {
    let size = 32usize;
    for arch in [ArchId::S, ArchId::M, ArchId::L] {
        let net = arch.build(size, 7).unwrap();
        for b in [1usize, 100] {
            let x = batch(b, size, b as u64);
            let reps = (400 / b).max(4);
            let t = Instant::now();
            for _ in 0..reps {
                let _ = net.forward_logits(&x).unwrap();
            }
            let el = t.elapsed().as_secs_f64();
            println!(
                "{:?} fwd batch {:3}: {:8.3} ms/call  {:6.3} ms/img",
                arch,
                b,
                1e3 * el / reps as f64,
                1e3 * el / (reps * b) as f64
            );
        }
        let x = batch(100, size, 5);
        let labels = vec![0usize; 100];
        let t = Instant::now();
        for _ in 0..5 {
            let _ = grad_wrt_input(&net, &x, &labels).unwrap();
        }
        println!(
            "{:?} grad batch 100: {:8.3} ms/call",
            arch,
            1e3 * t.elapsed().as_secs_f64() / 5.0
        );
    }
}

#[test]
fn tuning_units() {
    let size = 32usize;
    let net = ArchId::L.build(size, 7).unwrap();
    let x100 = batch(100, size, 1);
    let labels_l = labels_of(&net, &x100);

    let cfg = |n_tune: usize| TuningConfig {
        alpha: 0.4,
        n_tune,
        ssim: SsimConfig::default(),
    };

    for (kind, n_tune, scale) in [
        (AttackKind::Fgsm, 100usize, 1.0f64),
        (AttackKind::Pgd, 100, 1.0),
        (AttackKind::DeepFool, 50, 2.0),
        (AttackKind::Square, 25, 4.0),
    ] {
        let spec = AttackSpec::standard(kind, size);
        let x = batch(n_tune, size, 2);
        let labels = &labels_l[..n_tune];
        let t = Instant::now();
        let out = tune(&spec, &[&net], &x, labels, &cfg(n_tune), 99).unwrap();
        let el = t.elapsed().as_secs_f64();
        println!(
            "tune {:?}@L n_tune={} : {:.2}s (x{scale} -> {:.2}s) feasible={} gamma={:?}",
            kind, n_tune, el, el * scale, out.feasible, out.gamma
        );
    }
}

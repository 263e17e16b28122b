//! Acceptance gate: one test per shipped guarantee, each with its tolerance
//! pinned in the assertion. Every test prints the measured numbers behind
//! its verdict; run with `--nocapture` to see them. The suite is the
//! authoritative pass/fail list for the benchmark's counting, numerics,
//! attack semantics, tuning, statistics, and determinism claims.

use std::collections::BTreeMap;
use std::time::Instant;

use dumb_core::attack::{
    bim, fgsm, pgd, rfgsm, run_attack, square_attack, tifgsm, AttackFamily, AttackHyper,
    AttackKind, AttackSpec,
};
use dumb_core::data::{
    generate_dataset, rebalance, rebalance_counts, split, BalanceLevel, Sample, SourceId,
    SourceSpec, TaskId, TaskSpec,
};
use dumb_core::diff::{
    argmax_row, grad_wrt_input, uniform_pm1_like, LayerSpec, Network, Parameters, Tensor,
};
use dumb_core::harness::{
    build_matrix, case_census, classify_case, classify_dataset_case, full_grid, ks_test,
    run_experiment, CellStatus, ExperimentConfig, GridAxes, PairCase, RunOutput,
};
use dumb_core::model::{f1_score, train, ArchId, ModelProvenance, ModelRecord, TrainingConfig};
use dumb_core::perceptual::{ssim, SsimConfig};
use dumb_core::rng::{derive_seed, rng_from};
use dumb_core::tuning::{tune, TuningConfig};
use rand::Rng;

/// The pinned seed every trained fixture in this suite runs at. The
/// dominance check (a09) is a property of runs at this seed specifically.
const SEED: u64 = 29;

fn unit_batch(shape: &[usize], seed: u64) -> Tensor<f32> {
    uniform_pm1_like::<f32>(shape, seed).map(|v| (v + 1.0) / 2.0)
}

// ---------------------------------------------------------------------------
// a01: matrix counting and the full-run time budget.
// ---------------------------------------------------------------------------

#[test]
fn a01_full_matrix_counts_and_runtime_budget() {
    let kinds = AttackKind::all();
    let mut models_total = 0usize;
    let mut per_attack: BTreeMap<AttackKind, usize> = BTreeMap::new();
    let (mut math_cells, mut non_math_cells) = (0usize, 0usize);
    for task in TaskId::all() {
        let grid = full_grid(task, SEED);
        assert_eq!(grid.len(), 24, "grid per task");
        let mut ids: Vec<String> = grid.iter().map(|p| p.id()).collect();
        ids.dedup();
        assert_eq!(ids.len(), 24, "duplicate model ids in the grid");
        models_total += grid.len();
        for cell in build_matrix(task, &grid, &kinds).unwrap() {
            *per_attack.entry(cell.attack).or_insert(0) += 1;
            match cell.attack.family() {
                AttackFamily::Mathematical => math_cells += 1,
                AttackFamily::NonMathematical => non_math_cells += 1,
            }
        }
    }
    assert_eq!(models_total, 72, "3 tasks x 2 sources x 4 balances x 3 archs");
    for kind in kinds {
        match kind.family() {
            AttackFamily::Mathematical => assert_eq!(per_attack[&kind], 1728, "{kind:?}"),
            AttackFamily::NonMathematical => assert_eq!(per_attack[&kind], 144, "{kind:?}"),
        }
    }
    assert_eq!(math_cells, 12096);
    assert_eq!(non_math_cells, 864);
    assert_eq!(math_cells + non_math_cells, 12960);

    // Time budget: measure the heaviest architecture at 32x32 and price the
    // whole matrix as if every source model were that expensive. Square is
    // priced at its full query budget with no early exits. Both choices
    // overestimate, so the bound is conservative.
    let net = ArchId::L.build(32, SEED).unwrap();
    let x1 = unit_batch(&[1, 3, 32, 32], 1);
    let x100 = unit_batch(&[100, 3, 32, 32], 2);
    let probs = net.predict_proba(&x100).unwrap();
    let labels: Vec<usize> = (0..100).map(|b| argmax_row(&probs.data()[b * 2..b * 2 + 2])).collect();

    let timed = |f: &mut dyn FnMut(), reps: usize| -> f64 {
        let t = Instant::now();
        for _ in 0..reps {
            f();
        }
        t.elapsed().as_secs_f64() / reps as f64
    };
    let fwd1 = timed(&mut || drop(net.forward_logits(&x1).unwrap()), 100);
    let fwd100 = timed(&mut || drop(net.forward_logits(&x100).unwrap()), 10);

    let tcfg = |n_tune: usize| TuningConfig { alpha: 0.4, n_tune, ssim: SsimConfig::default() };
    let tune_unit = |kind: AttackKind, n_tune: usize| -> f64 {
        let spec = AttackSpec::standard(kind, 32);
        let x = unit_batch(&[n_tune, 3, 32, 32], 3);
        let t = Instant::now();
        tune(&spec, &[&net], &x, &labels[..n_tune], &tcfg(n_tune), SEED).unwrap();
        t.elapsed().as_secs_f64() * (100.0 / n_tune as f64)
    };
    let unit_fgsm = tune_unit(AttackKind::Fgsm, 50);
    let unit_iter = tune_unit(AttackKind::Pgd, 50); // same shape as BIM/RFGSM/TIFGSM
    let unit_df = tune_unit(AttackKind::DeepFool, 25);
    let unit_square_worst = 30.0 * 100.0 * 500.0 * fwd1; // every point exhausts the budget

    // Per task: 24 source models per mathematical attack, each unit priced
    // at arch L; scoring forwards 100 images on all 24 targets per unit;
    // generation at the chosen point is one more grid-point's work. The six
    // image corruptions cost a gradient-free fraction of FGSM; 120 s per
    // task covers them with room to spare.
    let units = 24.0;
    let tuning_task = units
        * (unit_fgsm + 4.0 * unit_iter + unit_df + unit_square_worst)
        * (1.0 + 1.0 / 30.0);
    let scoring_task = 7.0 * units * 24.0 * fwd100;
    let per_task = tuning_task + scoring_task + 120.0;
    let hours_on_4_cores = 3.0 * per_task / 4.0 / 3600.0;

    println!(
        "a01 PASS: 72 models, 1728 cells/math attack, 12096 + 864 = 12960 (exact); \
         L-arch fwd {:.2} ms single / {:.1} ms per 100, tuned units fgsm {:.1}s, \
         iterative {:.1}s, deepfool {:.1}s, square worst-case {:.0}s; \
         full matrix at 32x32 extrapolates to {:.2} h on 4 cores (budget 2 h)",
        1e3 * fwd1,
        1e3 * fwd100,
        unit_fgsm,
        unit_iter,
        unit_df,
        unit_square_worst,
        hours_on_4_cores
    );
    assert!(
        hours_on_4_cores < 2.0,
        "full-matrix extrapolation {hours_on_4_cores:.2} h exceeds the 2 h budget"
    );
}

// ---------------------------------------------------------------------------
// a02: the case census per task, against an exhaustive enumeration oracle.
// ---------------------------------------------------------------------------

#[test]
fn a02_case_census_matches_exhaustive_enumeration() {
    let pinned: [(PairCase, usize); 8] = [
        (PairCase::C1, 24),
        (PairCase::C2, 72),
        (PairCase::C3, 48),
        (PairCase::C4, 144),
        (PairCase::C5, 24),
        (PairCase::C6, 72),
        (PairCase::C7, 48),
        (PairCase::C8, 144),
    ];
    for task in TaskId::all() {
        let grid = full_grid(task, SEED);
        // Oracle: bucket every ordered pair by the raw agreement flags,
        // without going through the case classifier.
        let mut by_flags: BTreeMap<(bool, bool, bool), usize> = BTreeMap::new();
        for src in &grid {
            for trg in &grid {
                let flags =
                    (src.source == trg.source, src.arch == trg.arch, src.balance == trg.balance);
                *by_flags.entry(flags).or_insert(0) += 1;
            }
        }
        assert_eq!(by_flags.values().sum::<usize>(), 576);

        let census = case_census(AttackFamily::Mathematical);
        for (&flags, &count) in &by_flags {
            let case = PairCase::from_flags(flags.0, flags.1, flags.2);
            assert_eq!(census[&case], count, "{task}: census vs enumeration at {case}");
        }
        for (case, count) in pinned {
            assert_eq!(census[&case], count, "{task}: pinned census at {case}");
        }
        // The classifier itself agrees with the flags on every pair.
        for src in &grid {
            for trg in &grid {
                let case = classify_case(src, trg).unwrap();
                assert_eq!(
                    case,
                    PairCase::from_flags(
                        src.source == trg.source,
                        src.arch == trg.arch,
                        src.balance == trg.balance
                    )
                );
            }
        }

        // Corruption rows: the source is a dataset, architecture counts as
        // matched and the source-side balance is the balanced reference.
        let mut corruption: BTreeMap<PairCase, usize> = BTreeMap::new();
        for source in SourceId::all() {
            for trg in &grid {
                let case = classify_dataset_case(task, source, trg).unwrap();
                *corruption.entry(case).or_insert(0) += 1;
            }
        }
        let expected: BTreeMap<PairCase, usize> = [
            (PairCase::C1, 6),
            (PairCase::C2, 18),
            (PairCase::C5, 6),
            (PairCase::C6, 18),
        ]
        .into_iter()
        .collect();
        assert_eq!(corruption, expected, "{task}: corruption census");
        assert_eq!(case_census(AttackFamily::NonMathematical), expected);
    }
    println!(
        "a02 PASS: per-task census C1..C8 = 24/72/48/144/24/72/48/144 (sum 576) and \
         corruption census 6/18/6/18, both equal to exhaustive enumeration (exact)"
    );
}

// ---------------------------------------------------------------------------
// a03: balance resampling arithmetic at both scales.
// ---------------------------------------------------------------------------

#[test]
fn a03_balance_arithmetic_is_exact() {
    let levels = BalanceLevel::all();
    let expected_3500 = [3500usize, 2334, 1500, 875];
    let expected_700 = [700usize, 467, 300, 175];
    for (level, want) in levels.iter().zip(expected_3500) {
        assert_eq!(rebalance_counts(3500, *level), want, "{level} at majority 3500");
    }
    for (level, want) in levels.iter().zip(expected_700) {
        assert_eq!(rebalance_counts(700, *level), want, "{level} at majority 700");
    }

    // The resampler itself, not just the arithmetic helper.
    for (majority, wants) in [(3500usize, expected_3500), (700, expected_700)] {
        let pixel = Tensor::new(vec![1, 1, 1], vec![0.5f32]).unwrap();
        let mut samples = Vec::with_capacity(majority * 2);
        for _ in 0..majority {
            samples.push(Sample { image: pixel.clone(), label: 0 });
            samples.push(Sample { image: pixel.clone(), label: 1 });
        }
        for (level, want) in levels.iter().zip(wants) {
            let out = rebalance(&samples, *level, 0, SEED).unwrap();
            let minority = out.iter().filter(|s| s.label == 0).count();
            let kept_majority = out.iter().filter(|s| s.label == 1).count();
            assert_eq!(minority, want, "{level} minority at majority {majority}");
            assert_eq!(kept_majority, majority, "{level} must not touch the majority");
        }
    }
    println!(
        "a03 PASS: 3500 -> {{3500, 2334, 1500, 875}} and 700 -> {{700, 467, 300, 175}} (exact)"
    );
}

// ---------------------------------------------------------------------------
// a04: input gradients against central finite differences.
// ---------------------------------------------------------------------------

fn mean_cross_entropy(net: &Network<f64>, x: &Tensor<f64>, labels: &[usize]) -> f64 {
    let logits = net.forward_logits(x).unwrap();
    let k = logits.shape()[1];
    let mut total = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        let row = &logits.data()[b * k..(b + 1) * k];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        total += log_sum + m - row[y];
    }
    total / labels.len() as f64
}

#[test]
fn a04_input_gradients_match_finite_differences() {
    let started = Instant::now();
    let archs = ArchId::all();
    let mut worst = 0.0f64;
    for fixture in 0..20u64 {
        let arch = archs[(fixture % 3) as usize];
        let net = arch.build(16, derive_seed(SEED, &["fd-net", &fixture.to_string()])).unwrap();
        let net = net.cast::<f64>();
        let x = uniform_pm1_like::<f64>(&[1, 3, 16, 16], derive_seed(SEED, &["fd-x", &fixture.to_string()]))
            .map(|v| (v + 1.0) / 2.0);
        let labels = [(fixture % 2) as usize];

        let analytic = grad_wrt_input(&net, &x, &labels).unwrap();
        let h = 1e-5;
        let mut fd = vec![0.0f64; x.len()];
        for j in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[j] += h;
            let mut minus = x.clone();
            minus.data_mut()[j] -= h;
            fd[j] = (mean_cross_entropy(&net, &plus, &labels)
                - mean_cross_entropy(&net, &minus, &labels))
                / (2.0 * h);
        }
        let diff: f64 = analytic
            .data()
            .iter()
            .zip(&fd)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = fd.iter().map(|&v| v * v).sum::<f64>().sqrt().max(1e-12);
        let rel = diff / scale;
        worst = worst.max(rel);
        assert!(
            rel <= 1e-3,
            "fixture {fixture} ({arch}): relative error {rel:.3e} exceeds 1e-3"
        );
    }
    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "a04 PASS: 20 fixtures, worst relative error {worst:.3e} (tolerance 1e-3) in {elapsed:.1}s \
         (budget 60s)"
    );
    assert!(elapsed < 60.0, "gradient check took {elapsed:.1}s, budget is 60s");
}

// ---------------------------------------------------------------------------
// a05: the attack degeneracy chain and the epsilon-ball contract.
// ---------------------------------------------------------------------------

#[test]
fn a05_degeneracy_chain_and_epsilon_ball() {
    let nets: Vec<Network<f32>> =
        ArchId::all().iter().map(|a| a.build(12, SEED + *a as u64).unwrap()).collect();

    // Bit-wise degeneracies on 200 randomized trials.
    for trial in 0..200u64 {
        let mut rng = rng_from(derive_seed(SEED, &["chain", &trial.to_string()]));
        let net = &nets[(trial % 3) as usize];
        let x = unit_batch(&[1, 3, 12, 12], derive_seed(SEED, &["chain-x", &trial.to_string()]));
        let labels = [rng.gen_range(0..2usize)];
        let eps = rng.gen_range(1.0 / 255.0..0.25f32);

        let base = fgsm(net, &x, &labels, eps).unwrap();
        let one_bim = bim(net, &x, &labels, eps, 1, eps).unwrap();
        let one_pgd = pgd(net, &x, &labels, eps, 1, eps, false, trial).unwrap();
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<u32>>();
        assert_eq!(bits(&base), bits(&one_bim), "trial {trial}: bim(1, eps) != fgsm(eps)");
        assert_eq!(bits(&base), bits(&one_pgd), "trial {trial}: pgd(no-start, 1, eps) != fgsm(eps)");

        let step = eps * 0.25;
        let iterated = bim(net, &x, &labels, eps, 6, step).unwrap();
        let delta = tifgsm(net, &x, &labels, eps, 6, step, 1, 1.5, 0.0).unwrap();
        assert_eq!(
            bits(&iterated),
            bits(&delta),
            "trial {trial}: tifgsm(kernel 1, momentum 0) != bim"
        );
    }

    // Epsilon ball and output range on 1000 randomized trials. The square
    // attack's bound holds at any budget; a small one keeps the trials fast.
    let mut ball_checks = 0usize;
    for trial in 0..1000u64 {
        let mut rng = rng_from(derive_seed(SEED, &["ball", &trial.to_string()]));
        let net = &nets[(trial % 3) as usize];
        let x = unit_batch(&[1, 3, 12, 12], derive_seed(SEED, &["ball-x", &trial.to_string()]));
        let labels = [rng.gen_range(0..2usize)];
        let eps = rng.gen_range(1.0 / 255.0..0.25f32);
        let step = eps * 0.25;

        let mut outs = vec![
            fgsm(net, &x, &labels, eps).unwrap(),
            bim(net, &x, &labels, eps, 5, step).unwrap(),
            pgd(net, &x, &labels, eps, 5, step, true, trial).unwrap(),
            rfgsm(net, &x, &labels, eps, 5, step, trial).unwrap(),
            tifgsm(net, &x, &labels, eps, 5, step, 5, 1.5, 1.0).unwrap(),
        ];
        let single = x.slice_batch(0).unwrap();
        let mut oracle = |img: &Tensor<f32>| {
            let probs = net.predict_proba(&img.reshaped(&[1, 3, 12, 12]).unwrap())?;
            Ok(probs.data().to_vec())
        };
        let sq = square_attack(&mut oracle, &single, labels[0], eps, 40, 0.8, trial).unwrap();
        outs.push(sq.adversarial.reshaped(&[1, 3, 12, 12]).unwrap());

        for adv in &outs {
            assert!(
                adv.max_abs_diff(&x) <= eps as f64 + 1e-6,
                "trial {trial}: perturbation escapes the {eps} ball"
            );
            assert!(
                adv.data().iter().all(|v| (0.0..=1.0).contains(v)),
                "trial {trial}: output leaves [0, 1]"
            );
            ball_checks += 1;
        }
    }
    println!(
        "a05 PASS: fgsm = bim(1) = pgd(no-start, 1) and tifgsm(kernel 1, momentum 0) = bim \
         bit-wise on 200 trials; ball and range held in {ball_checks} attack runs over 1000 \
         trials (tolerance eps + 1e-6)"
    );
}

// ---------------------------------------------------------------------------
// a06: the boundary-seeking attack's certificate on a linear classifier.
// ---------------------------------------------------------------------------

#[test]
fn a06_linear_certificate_for_boundary_attack() {
    let d = 12usize; // [3, 2, 2] image
    let mut worst = 0.0f64;
    for fixture in 0..10u64 {
        let mut rng = rng_from(derive_seed(SEED, &["cert", &fixture.to_string()]));
        // Weight columns differing by a known vector, scaled so the decision
        // boundary sits a short, interior distance from the sample.
        let mut w = vec![0.0f32; d * 2];
        let mut w_diff = Vec::with_capacity(d);
        for i in 0..d {
            let a = rng.gen_range(-0.08..0.08f32);
            w[i * 2] = -a / 2.0;
            w[i * 2 + 1] = a / 2.0;
            w_diff.push(a);
        }
        let bias = [rng.gen_range(-0.02..0.02f32), 0.0];
        let params = Parameters::new(vec![
            ("layer1.weight".to_string(), Tensor::new(vec![d, 2], w).unwrap()),
            ("layer1.bias".to_string(), Tensor::new(vec![2], bias.to_vec()).unwrap()),
        ]);
        let net = Network::from_parameters(
            [3, 2, 2],
            vec![LayerSpec::Flatten, LayerSpec::Dense { out_features: 2 }],
            params,
        )
        .unwrap();

        let x = unit_batch(&[1, 3, 2, 2], derive_seed(SEED, &["cert-x", &fixture.to_string()]))
            .map(|v| 0.35 + 0.3 * v);
        let margin: f32 =
            x.data().iter().zip(&w_diff).map(|(&xv, &wv)| xv * wv).sum::<f32>() + bias[1] - bias[0];
        let w_norm: f64 = w_diff.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        let distance = margin.abs() as f64 / w_norm;
        if distance < 1e-3 {
            continue; // degenerate draw: sample sits on the boundary
        }

        for overshoot in [0.1f64, 0.5, 1.0] {
            let probs = net.predict_proba(&x).unwrap();
            let label = argmax_row(&probs.data()[..2]);
            let out = run_attack(
                AttackKind::DeepFool,
                Some(&net),
                &x,
                &[label],
                Some(overshoot),
                &AttackHyper::default(),
                SEED,
            )
            .unwrap();
            let adv = &out.adversarial;
            assert!(
                adv.data().iter().all(|&v| v > 0.0 && v < 1.0),
                "fixture {fixture}: perturbed point hit the pixel-range wall, certificate void"
            );
            let norm: f64 = adv
                .data()
                .iter()
                .zip(x.data())
                .map(|(&a, &o)| ((a - o) as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            let expected = distance * (1.0 + overshoot);
            let err = (norm - expected).abs();
            worst = worst.max(err);
            assert!(
                err < 1e-4,
                "fixture {fixture}, overshoot {overshoot}: |{norm} - {expected}| = {err:.2e}"
            );
        }
    }
    println!(
        "a06 PASS: perturbation norm = distance x (1 + overshoot) on a linear classifier, \
         worst absolute error {worst:.2e} (tolerance 1e-4)"
    );
}

// ---------------------------------------------------------------------------
// a07: the constrained tuner is feasible, grid-optimal, and loud about
// infeasibility.
// ---------------------------------------------------------------------------

/// Linear pixel-mean classifier on [3, 16, 16] images: class 1 iff bright.
fn pixel_mean_net() -> Network<f32> {
    let d = 3 * 16 * 16;
    let mut w = vec![0.0f32; d * 2];
    for i in 0..d {
        w[i * 2] = -8.0 / d as f32;
        w[i * 2 + 1] = 8.0 / d as f32;
    }
    let params = Parameters::new(vec![
        ("layer1.weight".to_string(), Tensor::new(vec![d, 2], w).unwrap()),
        ("layer1.bias".to_string(), Tensor::new(vec![2], vec![4.0, -4.0]).unwrap()),
    ]);
    Network::from_parameters(
        [3, 16, 16],
        vec![LayerSpec::Flatten, LayerSpec::Dense { out_features: 2 }],
        params,
    )
    .unwrap()
}

/// Bright and dark [3, 16, 16] images the pixel-mean net classifies
/// perfectly, with mild texture so similarity scores are informative.
fn shaded_samples(n_per_class: usize, seed: u64) -> (Tensor<f32>, Vec<usize>) {
    let noise = unit_batch(&[2 * n_per_class, 3, 16, 16], seed);
    let mut data = noise.data().to_vec();
    let img = 3 * 16 * 16;
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for b in 0..2 * n_per_class {
        let label = b % 2;
        let base = if label == 1 { 0.72 } else { 0.28 };
        for v in &mut data[b * img..(b + 1) * img] {
            *v = (base + 0.15 * (*v - 0.5)).clamp(0.0, 1.0);
        }
        labels.push(label);
    }
    (Tensor::new(vec![2 * n_per_class, 3, 16, 16], data).unwrap(), labels)
}

#[test]
fn a07_tuner_is_feasible_optimal_and_flags_infeasibility() {
    let net = pixel_mean_net();
    let (x, labels) = shaded_samples(20, SEED);
    let cfg = TuningConfig { alpha: 0.4, n_tune: 40, ssim: SsimConfig::default() };

    // Feasible grids: the choice must sit on the grid, satisfy the floor,
    // and no feasible trace point may beat its attack success rate.
    for kind in [AttackKind::Fgsm, AttackKind::GaussianNoise] {
        let spec = AttackSpec::standard(kind, 16);
        let result = tune(&spec, &[&net], &x, &labels, &cfg, SEED).unwrap();
        assert_eq!(result.trace.len(), spec.grid.as_ref().unwrap().points().len());
        assert!(result.feasible, "{kind:?} should be tunable at alpha 0.4");
        let gamma = result.gamma.unwrap();
        let chosen = result
            .trace
            .iter()
            .find(|p| p.param == Some(gamma))
            .expect("chosen parameter must be a trace point");
        assert!(chosen.feasible && chosen.mean_ssim >= 0.4);
        assert_eq!(Some(chosen.asr), result.asr);
        for point in &result.trace {
            if point.feasible {
                assert!(
                    point.asr <= chosen.asr,
                    "{kind:?}: trace point {:?} beats the chosen gamma",
                    point.param
                );
            }
        }
    }

    // An infeasible grid must say so loudly, end to end: the tuner flags it
    // and the harness writes the row as constraint-infeasible, never as a
    // silent success.
    let invert = AttackSpec::standard(AttackKind::Invert, 16);
    let strict = TuningConfig { alpha: 0.99, ..cfg.clone() };
    let result = tune(&invert, &[&net], &x, &labels, &strict, SEED).unwrap();
    assert!(!result.feasible);
    assert!(result.gamma.is_none());
    assert_eq!(result.trace.len(), 1, "parameter-free attack evaluates one point");
    assert_eq!(CellStatus::ConstraintInfeasible.as_str(), "constraint-infeasible");

    let (models, tests) = handcrafted_pair();
    let exp = ExperimentConfig {
        attacks: vec![AttackSpec::standard(AttackKind::Invert, 16)],
        n_eval: 8,
        alpha: 0.99,
        ssim: SsimConfig::default(),
        seed: SEED,
        axes: GridAxes {
            sources: vec![SourceId::A, SourceId::B],
            balances: vec![BalanceLevel::Balanced],
            archs: vec![ArchId::S],
        },
    };
    let out = run_experiment(&models, &tests, &exp, None, None).unwrap();
    assert!(!out.table.cells.is_empty());
    for cell in &out.table.cells {
        assert_eq!(cell.status, CellStatus::ConstraintInfeasible, "cell {}", cell.trg.id());
        assert!(cell.asr.is_none(), "infeasible cell carries no success rate");
    }
    assert!(out.table.csv_string().contains("constraint-infeasible"));

    println!(
        "a07 PASS: tuned parameters feasible (mean SSIM >= 0.4) and grid-optimal by trace \
         re-scan; infeasible grids surface as \"constraint-infeasible\" rows end to end"
    );
}

/// Two handcrafted balanced pixel-mean models (sources A and B) with
/// perfectly classified test pools, for harness tests that need no training.
fn handcrafted_pair() -> (Vec<ModelRecord>, BTreeMap<(TaskId, SourceId), Vec<Sample>>) {
    let mut models = Vec::new();
    let mut tests = BTreeMap::new();
    for (i, source) in SourceId::all().into_iter().enumerate() {
        let provenance = ModelProvenance {
            task: TaskId::Easy,
            source,
            balance: BalanceLevel::Balanced,
            arch: ArchId::S,
            seed: SEED,
        };
        models.push(ModelRecord {
            provenance,
            network: pixel_mean_net(),
            val_f1: 1.0,
            best_epoch: 1,
            epochs_run: 1,
            baseline: None,
        });
        let (x, labels) = shaded_samples(24, SEED + i as u64);
        let samples: Vec<Sample> = labels
            .iter()
            .enumerate()
            .map(|(b, &label)| Sample { image: x.slice_batch(b).unwrap(), label })
            .collect();
        tests.insert((TaskId::Easy, source), samples);
    }
    (models, tests)
}

// ---------------------------------------------------------------------------
// a08: SSIM and the two-sample KS test against direct-formula oracles.
// ---------------------------------------------------------------------------

/// Direct single-pass SSIM: Gaussian-weighted moments at every valid window
/// position, averaged over positions and channels.
fn oracle_ssim(x: &Tensor<f32>, y: &Tensor<f32>, cfg: &SsimConfig) -> f64 {
    let (c_n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let n = cfg.window_size;
    let center = (n as f64 - 1.0) / 2.0;
    let mut win = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (di, dj) = (i as f64 - center, j as f64 - center);
            win.push((-(di * di + dj * dj) / (2.0 * cfg.sigma * cfg.sigma)).exp());
        }
    }
    let norm: f64 = win.iter().sum();
    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);

    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..c_n {
        for oy in 0..=(h - n) {
            for ox in 0..=(w - n) {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let wv = win[i * n + j] / norm;
                        let xv = x.data()[(c * h + oy + i) * w + ox + j] as f64;
                        let yv = y.data()[(c * h + oy + i) * w + ox + j] as f64;
                        sx += wv * xv;
                        sy += wv * yv;
                        sxx += wv * xv * xv;
                        syy += wv * yv * yv;
                        sxy += wv * xv * yv;
                    }
                }
                let (vx, vy, cov) = (sxx - sx * sx, syy - sy * sy, sxy - sx * sy);
                total += ((2.0 * sx * sy + c1) * (2.0 * cov + c2))
                    / ((sx * sx + sy * sy + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Brute-force two-sample KS: ECDF gap at every data point, plus the
/// asymptotic tail probability summed small-terms-first.
fn oracle_ks(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut d = 0.0f64;
    for v in a.iter().chain(b) {
        let fa = a.iter().filter(|x| *x <= v).count() as f64 / a.len() as f64;
        let fb = b.iter().filter(|x| *x <= v).count() as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    let lambda = ((a.len() as f64 * b.len() as f64) / (a.len() + b.len()) as f64).sqrt() * d;
    if lambda < 1e-9 {
        return (d, 1.0);
    }
    let mut sum = 0.0f64;
    for k in (1..=100u32).rev() {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
    }
    (d, (2.0 * sum).clamp(0.0, 1.0))
}

#[test]
fn a08_ssim_and_ks_match_direct_oracles() {
    let cfg = SsimConfig::default();

    // Self-similarity pins at exactly 1.
    for seed in 0..5u64 {
        let x = unit_batch(&[3, 16, 16], derive_seed(SEED, &["self", &seed.to_string()]));
        let s = ssim(&x, &x, &cfg).unwrap();
        assert!((s - 1.0).abs() <= 1e-9, "ssim(x, x) = {s}");
    }

    // 20 fixtures spanning channel counts, sizes, and perturbation styles.
    let mut worst_ssim = 0.0f64;
    for fixture in 0..20u64 {
        let (c, side) = match fixture % 4 {
            0 => (1usize, 16usize),
            1 => (3, 16),
            2 => (3, 24),
            _ => (1, 11),
        };
        let x = unit_batch(&[c, side, side], derive_seed(SEED, &["sx", &fixture.to_string()]));
        let y = match fixture % 3 {
            0 => unit_batch(&[c, side, side], derive_seed(SEED, &["sy", &fixture.to_string()])),
            1 => x.map(|v| (v + 0.07).clamp(0.0, 1.0)),
            _ => {
                let noise =
                    uniform_pm1_like::<f32>(&[c, side, side], derive_seed(SEED, &["sn", &fixture.to_string()]));
                let mut data = x.data().to_vec();
                for (v, n) in data.iter_mut().zip(noise.data()) {
                    *v = (*v + 0.1 * n).clamp(0.0, 1.0);
                }
                Tensor::new(vec![c, side, side], data).unwrap()
            }
        };
        let lib = ssim(&x, &y, &cfg).unwrap();
        let oracle = oracle_ssim(&x, &y, &cfg);
        let err = (lib - oracle).abs();
        worst_ssim = worst_ssim.max(err);
        assert!(err <= 1e-6, "fixture {fixture}: |{lib} - {oracle}| = {err:.2e}");
    }

    // 10 KS fixtures with ties, disjoint supports, and identical samples.
    let mut worst_p = 0.0f64;
    for fixture in 0..10u64 {
        let mut rng = rng_from(derive_seed(SEED, &["ks", &fixture.to_string()]));
        let n_a = rng.gen_range(3..60usize);
        let n_b = rng.gen_range(3..60usize);
        let mut a: Vec<f64> = (0..n_a).map(|_| rng.gen_range(-1.0..1.5f64)).collect();
        let mut b: Vec<f64> = (0..n_b).map(|_| rng.gen_range(-1.5..1.0f64)).collect();
        // Heavy ties within and across the samples.
        for v in a.iter_mut().chain(b.iter_mut()).step_by(2) {
            *v = (*v * 4.0).round() / 4.0;
        }
        if fixture == 9 {
            b = a.clone(); // identical samples: D = 0, p = 1
        }
        let lib = ks_test(&a, &b).unwrap();
        let (d, p) = oracle_ks(&a, &b);
        assert_eq!(lib.statistic, d, "fixture {fixture}: D must be exact");
        let err = (lib.p_value - p).abs();
        worst_p = worst_p.max(err);
        assert!(err <= 1e-6, "fixture {fixture}: |p {} - {p}| = {err:.2e}", lib.p_value);
    }
    println!(
        "a08 PASS: ssim(x,x) = 1 within 1e-9; ssim vs direct formula worst {worst_ssim:.2e} \
         (tolerance 1e-6) on 20 fixtures; KS D exact and p worst {worst_p:.2e} (tolerance 1e-6) \
         on 10 fixtures"
    );
}

// ---------------------------------------------------------------------------
// Shared reduced pipeline for the trained-grid tests (a09, a10).
// ---------------------------------------------------------------------------

struct TrainedRun {
    output: RunOutput,
}

/// Generates data, trains the reduced grid, and runs the matrix, entirely
/// in memory. The knobs mirror the smoke profile: 16x16 images, 200 images
/// per class, and a 2 x 2 x 2 grid slice per task.
fn trained_run(tasks: &[TaskId], attacks: &[AttackKind], epochs: usize, seed: u64) -> TrainedRun {
    let axes = GridAxes {
        sources: vec![SourceId::A, SourceId::B],
        balances: vec![BalanceLevel::Balanced, BalanceLevel::Strong],
        archs: vec![ArchId::S, ArchId::M],
    };
    let training = TrainingConfig { epochs, batch_size: 32, learning_rate: 0.02, momentum: 0.9 };
    let mut models = Vec::new();
    let mut tests = BTreeMap::new();
    for &task in tasks {
        let spec = TaskSpec::new(task, 16).unwrap();
        for source in SourceId::all() {
            let raw = generate_dataset(
                &spec,
                &SourceSpec::builtin(source),
                200,
                derive_seed(seed, &["data", spec.task.as_str(), source.as_str()]),
            )
            .unwrap();
            let parts = split(
                &raw,
                [0.7, 0.1, 0.2],
                derive_seed(seed, &["split", spec.task.as_str(), source.as_str()]),
            )
            .unwrap();
            for provenance in axes.provenances(task, seed) {
                if provenance.source != source {
                    continue;
                }
                let train_set = rebalance(
                    &parts.train,
                    provenance.balance,
                    0,
                    derive_seed(seed, &["rebalance", &provenance.id()]),
                )
                .unwrap();
                models.push(train(
                    provenance.arch,
                    &train_set,
                    &parts.validation,
                    provenance,
                    &training,
                )
                .unwrap());
            }
            tests.insert((task, source), parts.test);
        }
    }
    let cfg = ExperimentConfig {
        attacks: attacks.iter().map(|&k| AttackSpec::standard(k, 16)).collect(),
        n_eval: 8,
        alpha: 0.4,
        ssim: SsimConfig::default(),
        seed,
        axes,
    };
    let output = run_experiment(&models, &tests, &cfg, None, None).unwrap();
    TrainedRun { output }
}

// ---------------------------------------------------------------------------
// a09: white-box rows dominate fully mismatched rows at the pinned seed.
// ---------------------------------------------------------------------------

#[test]
fn a09_white_box_dominates_full_mismatch_at_pinned_seed() {
    let run = trained_run(
        &[TaskId::Easy, TaskId::Medium],
        &[AttackKind::Fgsm, AttackKind::Bim, AttackKind::Pgd],
        20,
        SEED,
    );
    let mut sums: BTreeMap<PairCase, (f64, usize)> = BTreeMap::new();
    for cell in &run.output.table.cells {
        if cell.family != AttackFamily::Mathematical || cell.status != CellStatus::Ok {
            continue;
        }
        let entry = sums.entry(cell.case).or_insert((0.0, 0));
        entry.0 += cell.asr.unwrap();
        entry.1 += 1;
    }
    let mean = |case: PairCase| -> (f64, usize) {
        let (sum, n) = sums.get(&case).copied().unwrap_or((0.0, 0));
        (if n > 0 { sum / n as f64 } else { f64::NAN }, n)
    };
    let (white_box, n1) = mean(PairCase::C1);
    let (mismatch, n8) = mean(PairCase::C8);
    assert!(n1 >= 24 && n8 >= 24, "too few scored rows: C1 {n1}, C8 {n8}");
    // This ordering is a property of runs at the pinned seed (gradient
    // attacks, two tasks); it is not claimed for arbitrary seeds.
    assert!(
        white_box >= mismatch,
        "mean ASR C1 {white_box:.4} < C8 {mismatch:.4} at seed {SEED}"
    );
    println!(
        "a09 PASS: mean ASR same-everything {white_box:.4} (n={n1}) >= all-mismatched \
         {mismatch:.4} (n={n8}) over fgsm/bim/pgd on 2 tasks at pinned seed {SEED}"
    );
}

// ---------------------------------------------------------------------------
// a10: end-to-end determinism, twice from nothing to the CSV bytes.
// ---------------------------------------------------------------------------

#[test]
fn a10_two_complete_runs_are_byte_identical() {
    let attacks = [AttackKind::Fgsm, AttackKind::SaltPepper];
    let first = trained_run(&[TaskId::Easy], &attacks, 12, SEED);
    let second = trained_run(&[TaskId::Easy], &attacks, 12, SEED);

    let csv_a = first.output.table.csv_string();
    let csv_b = second.output.table.csv_string();
    assert_eq!(csv_a.as_bytes(), csv_b.as_bytes(), "result CSVs diverged");

    let dir = tempfile::tempdir().unwrap();
    let (path_a, path_b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    first.output.table.write_csv(&path_a).unwrap();
    second.output.table.write_csv(&path_b).unwrap();
    assert_eq!(std::fs::read(&path_a).unwrap(), std::fs::read(&path_b).unwrap());

    let tunings_a = serde_json::to_string(&first.output.tunings).unwrap();
    let tunings_b = serde_json::to_string(&second.output.tunings).unwrap();
    assert_eq!(tunings_a, tunings_b, "tuning records diverged");

    let rows = first.output.table.cells.len();
    println!(
        "a10 PASS: two complete generate-train-tune-evaluate runs produced byte-identical \
         CSVs ({rows} rows, {} bytes)",
        csv_a.len()
    );
}

// ---------------------------------------------------------------------------
// a11: F1 against a confusion-matrix oracle.
// ---------------------------------------------------------------------------

#[test]
fn a11_f1_matches_confusion_matrix_oracle() {
    let mut rng = rng_from(derive_seed(SEED, &["f1"]));
    for trial in 0..1000usize {
        let len = rng.gen_range(1..=40usize);
        let predictions: Vec<usize> = (0..len).map(|_| rng.gen_range(0..2)).collect();
        let truth: Vec<usize> = (0..len).map(|_| rng.gen_range(0..2)).collect();
        let positive = trial % 2;

        let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0, 0, 0);
        for (&p, &t) in predictions.iter().zip(&truth) {
            match (p == positive, t == positive) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };

        let m = f1_score(&predictions, &truth, positive).unwrap();
        assert_eq!((m.tp, m.fp, m.tn, m.fn_count), (tp, fp, tn, fn_), "trial {trial}");
        assert_eq!(m.precision, precision, "trial {trial}");
        assert_eq!(m.recall, recall, "trial {trial}");
        assert_eq!(m.f1, f1, "trial {trial}");
        assert_eq!(m.accuracy, (tp + tn) as f64 / len as f64, "trial {trial}");
    }

    let perfect: Vec<usize> = (0..50).map(|i| i % 2).collect();
    assert_eq!(f1_score(&perfect, &perfect, 1).unwrap().f1, 1.0);
    println!(
        "a11 PASS: confusion counts and precision/recall/F1/accuracy agree exactly on 1000 \
         random label vectors; perfect predictions score F1 = 1.0"
    );
}

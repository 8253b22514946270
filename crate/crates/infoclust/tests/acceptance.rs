//! Acceptance suite: one test per criterion, each printing a PASS/FAIL/SKIP
//! line (run with `cargo test --test acceptance -- --nocapture` to see
//! them).
//!
//! Criteria 1–3 and 6–7 need the pooled MNIST IDX files under
//! `$INFOCLUST_DATA_DIR/mnist`; without them they print SKIP and succeed,
//! so the suite stays runnable in dataset-less environments. Criteria 4–5
//! and the preset-expressibility check are self-contained and always run.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use infoclust::config::{ArchConfig, ExperimentConfig, HeadLayout};
use infoclust::data::DatasetConfig;
use infoclust::eval::{assignment_cost, cluster_accuracy, hungarian, linear_probe, ProbeOptions};
use infoclust::math::grad::{
    kl_batch_grad, mi_xy_grad, mi_yy_grad, prob_grad_to_logit_grad, softmax,
};
use infoclust::math::{joint, kl_batch, kl_div, mi_xy, mi_yy, ProbBatch, PROB_FLOOR};
use infoclust::model::{load_checkpoint, ArchDescriptor, ClusterModel};
use infoclust::presets::{blob_oracle, preset, PRESET_NAMES};
use infoclust::trainer::{finetune, run, run_seeds, FinetuneOptions, RunOptions};
use infoclust::transforms::{
    mixup, mixup_output, per_sample_norms, vat_direction, ImageBatch, TransformSpec,
    VatDivergence,
};

fn fail(criterion: &str, msg: String) -> ! {
    println!("criterion {criterion}: FAIL — {msg}");
    panic!("criterion {criterion} failed: {msg}");
}

fn pass(criterion: &str, msg: String) {
    println!("criterion {criterion}: PASS — {msg}");
}

fn skip(criterion: &str, msg: &str) {
    println!("criterion {criterion}: SKIP — {msg}");
}

/// Dataset root when the pooled MNIST IDX files are present.
fn mnist_root() -> Option<PathBuf> {
    let root = std::env::var_os(infoclust::data::DATA_DIR_ENV).map(PathBuf::from)?;
    DatasetConfig::Mnist.load(Some(&root)).ok()?;
    Some(root)
}

fn out_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("infoclust-acceptance").join(tag);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run_opts(tag: &str, root: &PathBuf) -> RunOptions {
    RunOptions {
        out_dir: out_dir(tag),
        resume: false,
        data_dir: Some(root.clone()),
    }
}

// ---------------------------------------------------------------------------
// Criterion 1 — desk-scale MNIST clustering with preset (a)
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_mnist_preset_a_three_seeds() {
    let Some(root) = mnist_root() else {
        skip("1", "pooled MNIST not found under $INFOCLUST_DATA_DIR/mnist");
        return;
    };
    let cfg = preset("a").unwrap(); // MNIST, 100 epochs, B=256
    let summary = run_seeds(&cfg, &run_opts("criterion1", &root), 3).unwrap();
    if summary.mean >= 0.85 {
        pass(
            "1",
            format!(
                "mean selected-head accuracy {:.4} ± {:.4} over 3 seeds (desk-scale target ≥ 0.85; \
                 full-scale parity ≥ 0.97 is out of desk budget)",
                summary.mean, summary.std
            ),
        );
    } else {
        fail(
            "1",
            format!("mean selected-head accuracy {:.4} < 0.85", summary.mean),
        );
    }
}

// ---------------------------------------------------------------------------
// Criterion 2 — regularization ordering: (o) at least 25 points below (q)
// ---------------------------------------------------------------------------

/// Identical desk-scale budget for both presets of an ordering comparison.
fn ordering_budget(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.epochs = 30;
    cfg.eval_every = 10;
    cfg
}

#[test]
fn criterion_2_vat_regularization_ordering() {
    let Some(root) = mnist_root() else {
        skip("2", "pooled MNIST not found under $INFOCLUST_DATA_DIR/mnist");
        return;
    };
    let acc_o = run(&ordering_budget(preset("o").unwrap()), &run_opts("criterion2-o", &root))
        .unwrap()
        .final_record
        .selected_acc;
    let acc_q = run(&ordering_budget(preset("q").unwrap()), &run_opts("criterion2-q", &root))
        .unwrap()
        .final_record
        .selected_acc;
    if acc_q - acc_o >= 0.25 {
        pass("2", format!("(o) {acc_o:.4} vs (q) {acc_q:.4}: gap {:.4} ≥ 0.25", acc_q - acc_o));
    } else {
        fail("2", format!("(o) {acc_o:.4} vs (q) {acc_q:.4}: gap {:.4} < 0.25", acc_q - acc_o));
    }
}

// ---------------------------------------------------------------------------
// Criterion 3 — degenerate pairing: (b) collapses, (c) exceeds it
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_vat_vs_ivat_pairing() {
    let Some(root) = mnist_root() else {
        skip("3", "pooled MNIST not found under $INFOCLUST_DATA_DIR/mnist");
        return;
    };
    let acc_b = run(&ordering_budget(preset("b").unwrap()), &run_opts("criterion3-b", &root))
        .unwrap()
        .final_record
        .selected_acc;
    let acc_c = run(&ordering_budget(preset("c").unwrap()), &run_opts("criterion3-c", &root))
        .unwrap()
        .final_record
        .selected_acc;
    if acc_b <= 0.20 && acc_c >= acc_b + 0.20 {
        pass("3", format!("(b) {acc_b:.4} ≤ 0.20 and (c) {acc_c:.4} ≥ (b) + 0.20"));
    } else {
        fail("3", format!("(b) {acc_b:.4}, (c) {acc_c:.4}: expected (b) ≤ 0.20 and (c) ≥ (b) + 0.20"));
    }
}

// ---------------------------------------------------------------------------
// Criterion 4 — dataset-free property suite in under a minute
// ---------------------------------------------------------------------------

fn random_prob_batch(rng: &mut ChaCha8Rng, b: usize, k: usize) -> ProbBatch {
    let mut data = Array2::zeros((b, k));
    for mut row in data.rows_mut() {
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = rng.random_range(0.01..1.0);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    ProbBatch::new(data).unwrap()
}

fn fd_grad<F: Fn(&Array2<f64>) -> f64>(f: &F, z: &Array2<f64>, step: f64) -> Array2<f64> {
    let mut g = Array2::zeros(z.raw_dim());
    let mut zp = z.clone();
    for i in 0..z.nrows() {
        for j in 0..z.ncols() {
            let orig = zp[(i, j)];
            zp[(i, j)] = orig + step;
            let fp = f(&zp);
            zp[(i, j)] = orig - step;
            let fm = f(&zp);
            zp[(i, j)] = orig;
            g[(i, j)] = (fp - fm) / (2.0 * step);
        }
    }
    g
}

fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
    let norm: f64 = b.iter().map(|y| y.powi(2)).sum();
    (diff / norm.max(1e-24)).sqrt()
}

fn check_core_math_invariants(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..200 {
        let b = rng.random_range(1..8);
        let k = rng.random_range(2..7);
        let p = random_prob_batch(rng, b, k);
        let q = random_prob_batch(rng, b, k);
        let log_k = (k as f64).ln();

        let v = mi_xy(&p, 1.0).map_err(|e| e.to_string())?.scalar;
        if !(-1e-9..=log_k + 1e-6).contains(&v) {
            return Err(format!("mi_xy {v} outside [0, ln {k}]"));
        }

        let j = joint(&p, &q, true).map_err(|e| e.to_string())?;
        let total: f64 = j.entries().iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(format!("joint total {total} != 1"));
        }
        for i in 0..k {
            for jj in 0..k {
                if (j.entries()[(i, jj)] - j.entries()[(jj, i)]).abs() > 1e-9 {
                    return Err("joint not symmetric after symmetrization".to_string());
                }
            }
        }
        let mi = mi_yy(&j);
        if !(-1e-9..=log_k + 1e-6).contains(&mi) {
            return Err(format!("mi_yy {mi} outside [0, ln {k}]"));
        }

        // Brute-force identity: MI == H(r) + H(c) − H(joint) over all K².
        let h = |v: &[f64]| -> f64 {
            v.iter()
                .filter(|&&x| x > 0.0)
                .map(|&x| -x * x.max(PROB_FLOOR).ln())
                .sum()
        };
        let identity = h(j.marginal_row().as_slice().unwrap())
            + h(j.marginal_col().as_slice().unwrap())
            - h(j.entries().as_slice().unwrap());
        if (mi - identity).abs() > 1e-9 {
            return Err(format!("entropy identity off by {}", (mi - identity).abs()));
        }

        let kl = kl_div(
            p.as_array().row(0).as_slice().unwrap(),
            q.as_array().row(0).as_slice().unwrap(),
        )
        .map_err(|e| e.to_string())?;
        if kl < -1e-15 {
            return Err(format!("negative KL {kl}"));
        }
    }
    Ok(())
}

fn check_gradients(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let mut logits = |b: usize, k: usize| -> Array2<f64> {
        let mut z = Array2::zeros((b, k));
        for v in z.iter_mut() {
            *v = rng.random_range(-2.0..2.0);
        }
        z
    };
    let check = |name: &str, dz: &Array2<f64>, fd: &Array2<f64>| -> Result<(), String> {
        let e = rel_err(dz, fd);
        if e <= 1e-3 {
            Ok(())
        } else {
            Err(format!("{name} gradient relative error {e}"))
        }
    };

    for lambda in [1.0, 4.0] {
        let z = logits(4, 5);
        let probs = softmax(&z);
        let batch = ProbBatch::new(probs.clone()).unwrap();
        let (_, dp) = mi_xy_grad(&batch, lambda).unwrap();
        let dz = prob_grad_to_logit_grad(&probs, &dp);
        let fd = fd_grad(
            &|z: &Array2<f64>| mi_xy(&ProbBatch::new(softmax(z)).unwrap(), lambda).unwrap().scalar,
            &z,
            1e-4,
        );
        check(&format!("mi_xy(λ={lambda})"), &dz, &fd)?;
    }

    for sym in [true, false] {
        let (z1, z2) = (logits(4, 5), logits(4, 5));
        let (p1, p2) = (softmax(&z1), softmax(&z2));
        let (b1, b2) = (
            ProbBatch::new(p1.clone()).unwrap(),
            ProbBatch::new(p2.clone()).unwrap(),
        );
        let (_, d1, d2) = mi_yy_grad(&b1, &b2, sym).unwrap();
        let fd1 = fd_grad(
            &|z: &Array2<f64>| {
                mi_yy(&joint(&ProbBatch::new(softmax(z)).unwrap(), &b2, sym).unwrap())
            },
            &z1,
            1e-4,
        );
        let fd2 = fd_grad(
            &|z: &Array2<f64>| {
                mi_yy(&joint(&b1, &ProbBatch::new(softmax(z)).unwrap(), sym).unwrap())
            },
            &z2,
            1e-4,
        );
        check("mi_yy/clean", &prob_grad_to_logit_grad(&p1, &d1), &fd1)?;
        check("mi_yy/transformed", &prob_grad_to_logit_grad(&p2, &d2), &fd2)?;
    }

    let (z1, z2) = (logits(4, 5), logits(4, 5));
    let (p1, p2) = (softmax(&z1), softmax(&z2));
    let (b1, b2) = (
        ProbBatch::new(p1.clone()).unwrap(),
        ProbBatch::new(p2.clone()).unwrap(),
    );
    let (_, dp, dq) = kl_batch_grad(&b1, &b2).unwrap();
    let fdp = fd_grad(
        &|z: &Array2<f64>| kl_batch(&ProbBatch::new(softmax(z)).unwrap(), &b2).unwrap(),
        &z1,
        1e-4,
    );
    let fdq = fd_grad(
        &|z: &Array2<f64>| kl_batch(&b1, &ProbBatch::new(softmax(z)).unwrap()).unwrap(),
        &z2,
        1e-4,
    );
    check("kl/p", &prob_grad_to_logit_grad(&p1, &dp), &fdp)?;
    check("kl/q", &prob_grad_to_logit_grad(&p2, &dq), &fdq)?;
    Ok(())
}

fn brute_force_assignment(cost: &Array2<f64>) -> f64 {
    fn rec(cost: &Array2<f64>, row: usize, used: &mut Vec<bool>, best: &mut f64, acc: f64) {
        let n = cost.nrows();
        if row == n {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        for col in 0..n {
            if !used[col] {
                used[col] = true;
                rec(cost, row + 1, used, best, acc + cost[(row, col)]);
                used[col] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, 0, &mut vec![false; cost.nrows()], &mut best, 0.0);
    best
}

fn check_hungarian(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for case in 0..1000 {
        let n = rng.random_range(1..=7);
        let mut cost = Array2::zeros((n, n));
        for v in cost.iter_mut() {
            *v = rng.random_range(-20..=20) as f64;
        }
        let pi = hungarian(&cost).map_err(|e| e.to_string())?;
        let got = assignment_cost(&cost, &pi);
        let want = brute_force_assignment(&cost);
        if (got - want).abs() > 1e-9 {
            return Err(format!("case {case}: hungarian {got} vs brute force {want}"));
        }
    }
    Ok(())
}

fn check_accuracy_invariance(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..100 {
        let k = rng.random_range(2..6);
        let n = rng.random_range(k..50);
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let base = cluster_accuracy(&preds, &labels, k)
            .map_err(|e| e.to_string())?
            .accuracy;
        let mut sigma: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            sigma.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<usize> = preds.iter().map(|&p| sigma[p]).collect();
        let relabeled = cluster_accuracy(&permuted, &labels, k)
            .map_err(|e| e.to_string())?
            .accuracy;
        if (base - relabeled).abs() > 1e-12 {
            return Err(format!("accuracy changed under relabeling: {base} vs {relabeled}"));
        }
    }
    Ok(())
}

fn check_mixup_convexity(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for trial in 0..50u64 {
        let b = rng.random_range(2..8);
        let k = rng.random_range(2..6);
        let probs = random_prob_batch(rng, b, k);
        let images =
            ImageBatch::new(Array4::from_elem((b, 1, 2, 2), 0.5)).map_err(|e| e.to_string())?;
        let pair = mixup(&images, &TransformSpec::Mixup { alpha: 0.3 }, trial)
            .map_err(|e| e.to_string())?;
        let mixed = mixup_output(&probs, &pair).map_err(|e| e.to_string())?;
        for (bi, row) in mixed.as_array().rows().into_iter().enumerate() {
            let total: f64 = row.sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(format!("mixed row sums to {total}"));
            }
            let a = pair.alphas[bi];
            let partner = pair.partner_indices[bi];
            for (j, &v) in row.iter().enumerate() {
                let p0 = probs.as_array()[(bi, j)];
                let p1 = probs.as_array()[(partner, j)];
                let want = a * p0 + (1.0 - a) * p1;
                if (v - want).abs() > 1e-12 {
                    return Err("mixed row is not the convex combination".to_string());
                }
                if v < p0.min(p1) - 1e-12 || v > p0.max(p1) + 1e-12 {
                    return Err("mixed entry escapes the convex hull".to_string());
                }
            }
        }
    }
    Ok(())
}

fn check_vat_norm() -> Result<(), String> {
    let desc = ArchDescriptor {
        input_shape: (1, 2, 3),
        conv_channels: vec![],
        fc_hidden: None,
        heads: vec![3],
        n_classes: 3,
    };
    let model = ClusterModel::init(desc, 4).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for trial in 0..20u64 {
        let mut x = Array4::zeros((5, 1, 2, 3));
        for v in x.iter_mut() {
            *v = rng.random_range(0.4..0.6);
        }
        let batch = ImageBatch::new(x).map_err(|e| e.to_string())?;
        for (spec, div) in [
            (
                TransformSpec::Vat {
                    epsilon: 0.2,
                    power_iterations: 1,
                    xi: None,
                },
                VatDivergence::Kl,
            ),
            (
                TransformSpec::Ivat {
                    epsilon: 0.2,
                    power_iterations: 1,
                    xi: None,
                },
                VatDivergence::NegMi,
            ),
        ] {
            let r = vat_direction(&model, &batch, &spec, div, true, trial)
                .map_err(|e| e.to_string())?;
            for &n in per_sample_norms(&r).iter() {
                if (n - 0.2).abs() > 1e-6 {
                    return Err(format!("‖r‖ = {n}, expected 0.2 ± 1e-6"));
                }
            }
        }
    }
    Ok(())
}

#[test]
fn criterion_4_property_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let checks: Vec<(&str, Result<(), String>)> = vec![
        ("core-math invariants", check_core_math_invariants(&mut rng)),
        ("loss gradients vs finite differences", check_gradients(&mut rng)),
        ("hungarian vs exhaustive search", check_hungarian(&mut rng)),
        ("cluster accuracy relabeling invariance", check_accuracy_invariance(&mut rng)),
        ("mixup convexity", check_mixup_convexity(&mut rng)),
        ("vat ε-norm postcondition", check_vat_norm()),
    ];
    for (name, result) in &checks {
        if let Err(msg) = result {
            fail("4", format!("{name}: {msg}"));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed >= 60.0 {
        fail("4", format!("property suite took {elapsed:.1}s ≥ 60s"));
    }
    pass(
        "4",
        format!("{} property groups in {elapsed:.1}s (< 60s, no datasets)", checks.len()),
    );
}

// ---------------------------------------------------------------------------
// Criterion 5 — blob oracle end to end
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_blob_oracle() {
    let started = Instant::now();
    let cfg = blob_oracle();
    assert!(cfg.epochs <= 50, "blob oracle config must fit the 50-epoch budget");
    let opts = RunOptions {
        out_dir: out_dir("criterion5"),
        resume: false,
        data_dir: None,
    };
    let summary = run(&cfg, &opts).unwrap();
    let acc = summary.final_record.selected_acc;
    let elapsed = started.elapsed().as_secs_f64();
    if acc >= 0.95 && elapsed <= 60.0 {
        pass(
            "5",
            format!("blob accuracy {acc:.4} ≥ 0.95 in {} epochs, {elapsed:.1}s ≤ 60s", cfg.epochs),
        );
    } else {
        fail(
            "5",
            format!("blob accuracy {acc:.4} (target ≥ 0.95) in {elapsed:.1}s (budget 60s)"),
        );
    }
}

// ---------------------------------------------------------------------------
// Criteria 6 & 7 share one short MNIST pretraining run
// ---------------------------------------------------------------------------

static PRETRAINED: OnceLock<Option<PathBuf>> = OnceLock::new();

/// 20-epoch preset-(a) checkpoint used by the probe and fine-tune criteria.
fn pretrained_mnist_checkpoint(root: &PathBuf) -> Option<PathBuf> {
    PRETRAINED
        .get_or_init(|| {
            let mut cfg = preset("a").unwrap();
            cfg.epochs = 20;
            cfg.eval_every = 10;
            let opts = RunOptions {
                out_dir: out_dir("pretrain-shared"),
                resume: false,
                data_dir: Some(root.clone()),
            };
            run(&cfg, &opts).ok().map(|s| s.checkpoint_path)
        })
        .clone()
}

#[test]
fn criterion_6_linear_probe_beats_raw_pixels() {
    let Some(root) = mnist_root() else {
        skip("6", "pooled MNIST not found under $INFOCLUST_DATA_DIR/mnist");
        return;
    };
    let Some(ckpt_path) = pretrained_mnist_checkpoint(&root) else {
        fail("6", "shared pretraining run failed".to_string());
    };
    let ckpt = load_checkpoint(&ckpt_path).unwrap();
    let dataset = DatasetConfig::Mnist.load(Some(&root)).unwrap();
    let view = dataset.eval_view();

    // 10k-sample subset keeps the probes fast.
    let n = 10_000.min(dataset.len());
    let idx: Vec<usize> = (0..n).collect();
    let labels: Vec<usize> = idx.iter().map(|&i| view.labels[i]).collect();
    let head = ckpt.model.descriptor().primary_heads()[0];

    let (c, h, w) = dataset.sample_shape();
    let dim = c * h * w;
    let mut raw = Array2::zeros((n, dim));
    let mut fc: Option<Array2<f64>> = None;
    let mut row0 = 0;
    for chunk in idx.chunks(256) {
        let images = dataset.gather(chunk).unwrap();
        let flat = images
            .as_array()
            .to_shape((chunk.len(), dim))
            .unwrap()
            .to_owned();
        raw.slice_mut(ndarray::s![row0..row0 + chunk.len(), ..]).assign(&flat);
        let (_, taps) = ckpt.model.forward_taps(&images, head).unwrap();
        let f = fc.get_or_insert_with(|| Array2::zeros((n, taps.fc.ncols())));
        f.slice_mut(ndarray::s![row0..row0 + chunk.len(), ..]).assign(&taps.fc);
        row0 += chunk.len();
    }
    let opts = ProbeOptions::default();
    let acc_raw = linear_probe(&raw, &labels, 10, &opts).unwrap();
    let acc_fc = linear_probe(&fc.unwrap(), &labels, 10, &opts).unwrap();
    if acc_fc >= acc_raw + 0.05 {
        pass("6", format!("FC-tap probe {acc_fc:.4} ≥ raw-pixel probe {acc_raw:.4} + 0.05"));
    } else {
        fail("6", format!("FC-tap probe {acc_fc:.4} vs raw-pixel probe {acc_raw:.4}: gap < 0.05"));
    }
}

#[test]
fn criterion_7_pretraining_beats_scratch() {
    let Some(root) = mnist_root() else {
        skip("7", "pooled MNIST not found under $INFOCLUST_DATA_DIR/mnist");
        return;
    };
    let Some(ckpt_path) = pretrained_mnist_checkpoint(&root) else {
        fail("7", "shared pretraining run failed".to_string());
    };
    let dataset = DatasetConfig::Mnist.load(Some(&root)).unwrap();
    let ckpt = load_checkpoint(&ckpt_path).unwrap();
    let desc = ckpt.model.descriptor().clone();

    let opts = FinetuneOptions {
        labeled: 5000,
        epochs: 10,
        batch_size: 128,
        augment: false,
        learning_rate: 1e-3,
        seed: 0,
    };
    let mut pretrained = ckpt.model;
    pretrained.reset_heads(vec![10], 10, 2).unwrap();
    let acc_pre = finetune(&mut pretrained, &dataset, &opts).unwrap();

    let mut scratch = ClusterModel::init(
        ArchDescriptor {
            heads: vec![10],
            n_classes: 10,
            ..desc
        },
        1,
    )
    .unwrap();
    let acc_scratch = finetune(&mut scratch, &dataset, &opts).unwrap();

    if acc_pre >= acc_scratch + 0.02 {
        pass("7", format!("pretrained {acc_pre:.4} ≥ scratch {acc_scratch:.4} + 0.02 (no augmentation, equal budget)"));
    } else {
        fail("7", format!("pretrained {acc_pre:.4} vs scratch {acc_scratch:.4}: gap < 0.02"));
    }
}

// ---------------------------------------------------------------------------
// Preset expressibility: every row runs one epoch without error
// ---------------------------------------------------------------------------

#[test]
fn preset_expressibility_all_rows_run_one_epoch() {
    let started = Instant::now();
    let mut failures: BTreeMap<String, String> = BTreeMap::new();
    for name in PRESET_NAMES {
        let mut cfg = preset(name).unwrap();
        cfg.dataset = DatasetConfig::Blobs {
            classes: 3,
            per_class: 40,
            shape: (1, 6, 6),
            separation: 10.0,
            seed: 5,
        };
        cfg.epochs = 1;
        cfg.batch_size = 40;
        cfg.arch = ArchConfig {
            conv_channels: vec![8],
            fc_hidden: Some(16),
        };
        cfg.eval_every = 1;
        // Keep adversarial radii sane for 6×6 inputs.
        for chain in cfg.transforms.values_mut() {
            for spec in chain.iter_mut() {
                match spec {
                    TransformSpec::Vat { epsilon, .. } | TransformSpec::Ivat { epsilon, .. } => {
                        *epsilon = 0.5;
                    }
                    _ => {}
                }
            }
        }
        let opts = RunOptions {
            out_dir: out_dir(&format!("express-{name}")),
            resume: false,
            data_dir: None,
        };
        match run(&cfg, &opts) {
            Ok(summary) => {
                for (key, value) in &summary.final_record.terms {
                    if !value.is_finite() {
                        failures.insert(name.to_string(), format!("term {key} not finite"));
                    }
                }
            }
            Err(e) => {
                failures.insert(name.to_string(), e.to_string());
            }
        }
    }
    if failures.is_empty() {
        pass(
            "expressibility",
            format!(
                "all {} presets parse, compose, and run one epoch ({:.1}s)",
                PRESET_NAMES.len(),
                started.elapsed().as_secs_f64()
            ),
        );
    } else {
        fail("expressibility", format!("{failures:?}"));
    }
}

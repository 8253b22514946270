//! The experiment runner: executes a configured training run, logs metrics,
//! and writes checkpoints.
//!
//! One batch step computes the clean posteriors, materializes every
//! transform branch the loss references, assembles the composed objective,
//! and backpropagates all branches into one gradient. MI terms propagate
//! through both the clean and transformed branches; KL regularizers treat
//! the clean posterior as a fixed target and only train the transformed
//! branch. Adversarial branches are built against frozen parameters, then
//! the loss forward on the perturbed images trains the weights.
//!
//! Training code touches the dataset only through [`TrainView`], which has
//! no label accessor: ground truth stays quarantined inside evaluation.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;

use crate::config::ExperimentConfig;
use crate::data::{BatchIterator, Dataset, TrainView};
use crate::error::{Error, Result};
use crate::math::grad::{kl_batch_grad, mi_xy_grad, mi_yy_grad};
use crate::math::{compose_loss, LossTermKind, LossValue, ProbBatch};
use crate::model::{
    adam, load_checkpoint, save_checkpoint, AdamState, ArchDescriptor, Checkpoint, ClusterModel,
    ForwardTrace, ModelGrads,
};
use crate::rng::{derive_seed, tag};
use crate::transforms::{
    geometric, mixup, mixup_output, mixup_output_backward, vat_perturbation, weak_geometric,
    ImageBatch, MixupPair, TransformSpec, VatDivergence,
};

/// One evaluation record; a row of the metrics CSV.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub terms: BTreeMap<String, f64>,
    /// Accuracy per primary head, in head order.
    pub head_acc: Vec<f64>,
    pub selected_acc: f64,
    pub seconds: f64,
}

/// Where a run writes its outputs.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub resume: bool,
    /// Dataset root override (else the env var, else the current dir).
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_record: MetricsRecord,
    pub checkpoint_path: PathBuf,
    pub csv_path: PathBuf,
}

// ---------------------------------------------------------------------------
// Branch preparation
// ---------------------------------------------------------------------------

/// Gradient accumulation slot: the clean trace or one fresh branch trace.
const CLEAN_SLOT: usize = 0;

struct Slots {
    traces: Vec<ForwardTrace>,
    d_probs: Vec<Vec<Option<Array2<f64>>>>,
}

impl Slots {
    fn new(clean: ForwardTrace, n_heads: usize) -> Self {
        Self {
            traces: vec![clean],
            d_probs: vec![vec![None; n_heads]],
        }
    }

    fn push(&mut self, trace: ForwardTrace, n_heads: usize) -> usize {
        self.traces.push(trace);
        self.d_probs.push(vec![None; n_heads]);
        self.traces.len() - 1
    }

    fn accumulate(&mut self, slot: usize, head: usize, grad: Array2<f64>) {
        match &mut self.d_probs[slot][head] {
            Some(acc) => *acc += &grad,
            none => *none = Some(grad),
        }
    }

    fn probs(&self, slot: usize) -> Result<Vec<ProbBatch>> {
        self.traces[slot]
            .head_probs
            .iter()
            .map(|p| ProbBatch::new(p.clone()))
            .collect()
    }
}

/// A prepared transform branch: where its posteriors live and how mixup
/// wraps them.
struct Branch {
    /// Slot holding `forward(input_chain(x))`.
    premix_slot: usize,
    /// Mixup bookkeeping when the chain ends in mixup.
    pair: Option<MixupPair>,
    /// Slot holding `forward(mixed images)`, built lazily for KL terms.
    mixed_slot: Option<usize>,
}

fn apply_step(
    model: &ClusterModel,
    x: &ImageBatch,
    spec: &TransformSpec,
    symmetrize: bool,
    seed: u64,
) -> Result<ImageBatch> {
    match spec {
        TransformSpec::Identity => Ok(x.clone()),
        TransformSpec::Geometric { .. } => geometric(x, spec, seed),
        TransformSpec::WeakGeometric { .. } => weak_geometric(x, spec, seed),
        TransformSpec::Vat { .. } => {
            vat_perturbation(model, x, spec, VatDivergence::Kl, symmetrize, seed)
        }
        TransformSpec::Ivat { .. } => {
            vat_perturbation(model, x, spec, VatDivergence::NegMi, symmetrize, seed)
        }
        TransformSpec::Mixup { .. } => Err(Error::Config(
            "mixup inside an input chain (must be last)".to_string(),
        )),
    }
}

/// Materializes the branch for one transform binding, reusing the clean
/// trace when the input chain is empty.
fn prepare_branch(
    model: &ClusterModel,
    x: &ImageBatch,
    chain: &[TransformSpec],
    need_mixed_forward: bool,
    symmetrize: bool,
    seed: u64,
    slots: &mut Slots,
) -> Result<Branch> {
    let (input_specs, mix_spec) = match chain.last() {
        Some(TransformSpec::Mixup { .. }) => {
            (&chain[..chain.len() - 1], Some(&chain[chain.len() - 1]))
        }
        _ => (chain, None),
    };

    let mut cur = x.clone();
    let mut changed = false;
    for (i, spec) in input_specs.iter().enumerate() {
        if matches!(spec, TransformSpec::Identity) {
            continue;
        }
        cur = apply_step(model, &cur, spec, symmetrize, derive_seed(seed, &[i as u64]))?;
        changed = true;
    }

    let n_heads = model.n_heads();
    let premix_slot = if changed {
        let trace = model.forward_trace(cur.as_array())?;
        slots.push(trace, n_heads)
    } else {
        CLEAN_SLOT
    };

    let pair = match mix_spec {
        Some(spec) => Some(mixup(&cur, spec, derive_seed(seed, &[tag("pair")]))?),
        None => None,
    };
    let mixed_slot = match (&pair, need_mixed_forward) {
        (Some(pair), true) => {
            let trace = model.forward_trace(pair.mixed_input.as_array())?;
            Some(slots.push(trace, n_heads))
        }
        _ => None,
    };

    Ok(Branch {
        premix_slot,
        pair,
        mixed_slot,
    })
}

// ---------------------------------------------------------------------------
// One training batch
// ---------------------------------------------------------------------------

struct BatchOutcome {
    loss: LossValue,
    per_head_loss: Vec<f64>,
    grads: ModelGrads,
}

fn train_batch(
    model: &ClusterModel,
    cfg: &ExperimentConfig,
    x: &ImageBatch,
    epoch: usize,
    batch_idx: usize,
) -> Result<BatchOutcome> {
    let n_heads = model.n_heads();
    let head_scale = 1.0 / n_heads as f64;
    let sym = cfg.symmetrize_joint;

    let clean_trace = model.forward_trace(x.as_array())?;
    let mut slots = Slots::new(clean_trace, n_heads);
    let clean_probs = slots.probs(CLEAN_SLOT)?;

    // Build each referenced binding once; terms of different kinds share it.
    let mut branches: BTreeMap<String, Branch> = BTreeMap::new();
    for term in &cfg.loss {
        let Some(name) = &term.transform else { continue };
        if branches.contains_key(name) {
            continue;
        }
        let chain = &cfg.transforms[name];
        let has_mixup = matches!(chain.last(), Some(TransformSpec::Mixup { .. }));
        let need_mixed_forward = has_mixup
            && cfg
                .loss
                .iter()
                .any(|t| t.term == LossTermKind::KlReg && t.transform.as_deref() == Some(name));
        let seed = derive_seed(
            cfg.seed,
            &[tag("transform"), tag(name), epoch as u64, batch_idx as u64],
        );
        let branch = prepare_branch(model, x, chain, need_mixed_forward, sym, seed, &mut slots)?;
        branches.insert(name.clone(), branch);
    }

    let mut parts: BTreeMap<String, f64> = BTreeMap::new();
    let mut per_head_loss = vec![0.0; n_heads];

    for term in &cfg.loss {
        let coeff = term.weight * term.term.sign() * head_scale;
        match term.term {
            LossTermKind::MiXy => {
                let lambda = ExperimentConfig::lambda_for(term);
                let mut mean = 0.0;
                for (h, p) in clean_probs.iter().enumerate() {
                    let (value, d_p) = mi_xy_grad(p, lambda)?;
                    mean += value.scalar * head_scale;
                    per_head_loss[h] += term.weight * term.term.sign() * value.scalar;
                    slots.accumulate(CLEAN_SLOT, h, coeff * &d_p);
                }
                parts.insert(term.key(), mean);
            }
            LossTermKind::MiYy => {
                let name = term.transform.as_ref().expect("validated");
                let branch = &branches[name];
                let base_probs = slots.probs(branch.premix_slot)?;
                let mut mean = 0.0;
                for h in 0..n_heads {
                    let (value, d_clean, d_base) = match &branch.pair {
                        Some(pair) => {
                            let mixed = mixup_output(&base_probs[h], pair)?;
                            let (v, d_clean, d_mixed) = mi_yy_grad(&clean_probs[h], &mixed, sym)?;
                            (v, d_clean, mixup_output_backward(&d_mixed, pair))
                        }
                        None => mi_yy_grad(&clean_probs[h], &base_probs[h], sym)?,
                    };
                    mean += value * head_scale;
                    per_head_loss[h] += term.weight * term.term.sign() * value;
                    slots.accumulate(CLEAN_SLOT, h, coeff * &d_clean);
                    slots.accumulate(branch.premix_slot, h, coeff * &d_base);
                }
                parts.insert(term.key(), mean);
            }
            LossTermKind::KlReg => {
                let name = term.transform.as_ref().expect("validated");
                let branch = &branches[name];
                let slot = branch.mixed_slot.unwrap_or(branch.premix_slot);
                let branch_probs = slots.probs(slot)?;
                let mut mean = 0.0;
                for h in 0..n_heads {
                    // The clean posterior is the (stop-gradient) target.
                    let (value, _d_p, d_q) = kl_batch_grad(&clean_probs[h], &branch_probs[h])?;
                    mean += value * head_scale;
                    per_head_loss[h] += term.weight * term.term.sign() * value;
                    slots.accumulate(slot, h, coeff * &d_q);
                }
                parts.insert(term.key(), mean);
            }
        }
    }

    let loss = compose_loss(&cfg.loss, &parts)?;
    if !loss.scalar.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss at epoch {epoch} batch {batch_idx}"
        )));
    }

    let mut grads = model.zero_grads();
    for (trace, d_probs) in slots.traces.iter().zip(&slots.d_probs) {
        if d_probs.iter().all(Option::is_none) {
            continue;
        }
        let out = model.backward(trace, d_probs, false)?;
        grads.add_assign(&out.grads);
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite(format!(
            "gradients at epoch {epoch} batch {batch_idx}"
        )));
    }

    Ok(BatchOutcome {
        loss,
        per_head_loss,
        grads,
    })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Argmax cluster assignments of one head over a whole dataset, computed in
/// fixed-size slices.
pub fn predict_all(model: &ClusterModel, dataset: &Dataset, head: usize, batch: usize) -> Result<Vec<usize>> {
    let n = dataset.len();
    let mut preds = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let hi = (i + batch).min(n);
        let idx: Vec<usize> = (i..hi).collect();
        let images = dataset.gather(&idx)?;
        let probs = model.forward(&images, head)?;
        preds.extend(probs.argmax());
        i = hi;
    }
    Ok(preds)
}

/// Hungarian-matched accuracy of every primary head.
pub fn evaluate_heads(model: &ClusterModel, dataset: &Dataset, batch: usize) -> Result<Vec<f64>> {
    let view = dataset.eval_view();
    let mut accs = Vec::new();
    for head in model.descriptor().primary_heads() {
        let preds = predict_all(model, dataset, head, batch)?;
        let assignment = crate::eval::cluster_accuracy(&preds, view.labels, view.n_classes)?;
        accs.push(assignment.accuracy);
    }
    Ok(accs)
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

fn csv_header(cfg: &ExperimentConfig, primary: &[usize]) -> String {
    let mut cols = vec!["epoch".to_string()];
    cols.extend(cfg.loss.iter().map(|t| format!("term:{}", t.key())));
    cols.extend(primary.iter().map(|h| format!("head:{h}/acc")));
    cols.push("selected_acc".to_string());
    cols.push("seconds".to_string());
    cols.join(",")
}

fn csv_row(cfg: &ExperimentConfig, rec: &MetricsRecord) -> String {
    let mut cols = vec![rec.epoch.to_string()];
    for t in &cfg.loss {
        cols.push(format!("{:.6}", rec.terms[&t.key()]));
    }
    for acc in &rec.head_acc {
        cols.push(format!("{acc:.6}"));
    }
    cols.push(format!("{:.6}", rec.selected_acc));
    cols.push(format!("{:.3}", rec.seconds));
    cols.join(",")
}

// ---------------------------------------------------------------------------
// The run loop
// ---------------------------------------------------------------------------

/// Executes one training run: deterministic given the config seed.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let dataset = cfg.dataset.load(opts.data_dir.as_deref())?;
    run_on(cfg, opts, &dataset)
}

/// [`run`] against an already-loaded dataset (the label-quarantine canary
/// trains on a poisoned copy this way).
pub fn run_on(cfg: &ExperimentConfig, opts: &RunOptions, dataset: &Dataset) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&opts.out_dir)?;
    let csv_path = opts.out_dir.join("metrics.csv");
    let ckpt_path = opts.out_dir.join("checkpoint.bin");

    let train: TrainView = dataset.train_view();
    let (c, h, w) = train.sample_shape();
    let desc = ArchDescriptor {
        input_shape: (c, h, w),
        conv_channels: cfg.arch.conv_channels.clone(),
        fc_hidden: cfg.arch.fc_hidden,
        heads: cfg.heads.head_widths(dataset.n_classes),
        n_classes: dataset.n_classes,
    };
    desc.validate()?;

    let (mut model, mut adam_state, start_epoch) = if opts.resume && ckpt_path.is_file() {
        let ckpt = load_checkpoint(&ckpt_path)?;
        if ckpt.model.descriptor() != &desc {
            return Err(Error::Checkpoint(
                "checkpoint architecture does not match the config".to_string(),
            ));
        }
        let state = ckpt.optimizer.unwrap_or_else(|| AdamState::new(&ckpt.model));
        (ckpt.model, state, ckpt.epoch)
    } else {
        let model = ClusterModel::init(desc.clone(), cfg.seed)?;
        let state = AdamState::new(&model);
        (model, state, 0)
    };

    let primary = desc.primary_heads();
    let header = csv_header(cfg, &primary);
    let mut csv = open_csv(&csv_path, &header, opts.resume)?;

    let iterator = BatchIterator::new(train.len(), cfg.batch_size, cfg.seed)?;
    let started = Instant::now();
    let mut last_record: Option<MetricsRecord> = None;

    let zero_terms: BTreeMap<String, f64> =
        cfg.loss.iter().map(|t| (t.key(), 0.0)).collect();

    if cfg.epochs == 0 || (opts.resume && start_epoch >= cfg.epochs) {
        // Initial (or already-complete) evaluation only.
        let head_acc = evaluate_heads(&model, dataset, cfg.batch_size)?;
        let rec = MetricsRecord {
            epoch: start_epoch,
            terms: zero_terms.clone(),
            selected_acc: head_acc.first().copied().unwrap_or(0.0),
            head_acc,
            seconds: started.elapsed().as_secs_f64(),
        };
        writeln!(csv, "{}", csv_row(cfg, &rec))?;
        csv.flush()?;
        save_run_checkpoint(&ckpt_path, &model, &adam_state, start_epoch, cfg)?;
        return Ok(RunSummary {
            final_record: rec,
            checkpoint_path: ckpt_path,
            csv_path,
        });
    }

    for epoch in start_epoch + 1..=cfg.epochs {
        let batches = iterator.epoch_batches(epoch - 1);
        let mut term_sums = zero_terms.clone();
        let mut head_loss_sums = vec![0.0; model.n_heads()];
        let mut n_batches = 0usize;

        for (batch_idx, indices) in batches.iter().enumerate() {
            let x = train.gather(indices)?;
            let outcome = train_batch(&model, cfg, &x, epoch - 1, batch_idx)?;
            for (k, v) in &outcome.loss.terms {
                *term_sums.get_mut(k).expect("term keys fixed") += v;
            }
            for (s, v) in head_loss_sums.iter_mut().zip(&outcome.per_head_loss) {
                *s += v;
            }
            n_batches += 1;
            adam::step(&mut model, &outcome.grads, &mut adam_state, &cfg.optimizer)?;
        }

        let scale = 1.0 / n_batches.max(1) as f64;
        let terms: BTreeMap<String, f64> =
            term_sums.iter().map(|(k, v)| (k.clone(), v * scale)).collect();

        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let head_acc = evaluate_heads(&model, dataset, cfg.batch_size)?;
            let primary_losses: Vec<f64> =
                primary.iter().map(|&h| head_loss_sums[h] * scale).collect();
            let selected = crate::eval::head_select(&primary_losses);
            let rec = MetricsRecord {
                epoch,
                terms,
                selected_acc: head_acc[selected],
                head_acc,
                seconds: started.elapsed().as_secs_f64(),
            };
            writeln!(csv, "{}", csv_row(cfg, &rec))?;
            csv.flush()?;
            save_run_checkpoint(&ckpt_path, &model, &adam_state, epoch, cfg)?;
            last_record = Some(rec);
        }
    }

    let final_record = last_record.expect("final epoch always evaluated");
    Ok(RunSummary {
        final_record,
        checkpoint_path: ckpt_path,
        csv_path,
    })
}

fn open_csv(path: &Path, header: &str, resume: bool) -> Result<BufWriter<std::fs::File>> {
    if resume && path.is_file() {
        let existing = std::fs::read_to_string(path)?;
        match existing.lines().next() {
            Some(first) if first == header => {}
            _ => {
                return Err(Error::Config(format!(
                    "cannot resume: {} has a different schema",
                    path.display()
                )))
            }
        }
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(BufWriter::new(file))
    } else {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{header}")?;
        Ok(w)
    }
}

fn save_run_checkpoint(
    path: &Path,
    model: &ClusterModel,
    adam_state: &AdamState,
    epoch: usize,
    cfg: &ExperimentConfig,
) -> Result<()> {
    save_checkpoint(
        path,
        &Checkpoint {
            model: model.clone(),
            epoch,
            optimizer: Some(adam_state.clone()),
            extra: serde_json::to_value(cfg)?,
        },
    )
}

// ---------------------------------------------------------------------------
// Seed sweep
// ---------------------------------------------------------------------------

/// Mean/std summary over a multi-seed sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepSummary {
    pub seeds: Vec<u64>,
    pub final_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Runs the config once per seed (`seed, seed+1, …`) into per-seed
/// subdirectories and reports mean ± std of final selected accuracy.
pub fn run_seeds(cfg: &ExperimentConfig, opts: &RunOptions, n_seeds: usize) -> Result<SweepSummary> {
    if n_seeds == 0 {
        return Err(Error::InvalidParameter("need at least 1 seed".to_string()));
    }
    let mut seeds = Vec::new();
    let mut accs = Vec::new();
    for i in 0..n_seeds {
        let mut run_cfg = cfg.clone();
        run_cfg.seed = cfg.seed + i as u64;
        let run_opts = RunOptions {
            out_dir: opts.out_dir.join(format!("seed{}", run_cfg.seed)),
            resume: opts.resume,
            data_dir: opts.data_dir.clone(),
        };
        let summary = run(&run_cfg, &run_opts)?;
        seeds.push(run_cfg.seed);
        accs.push(summary.final_record.selected_acc);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64;
    let summary = SweepSummary {
        seeds,
        final_accuracies: accs,
        mean,
        std: var.sqrt(),
    };
    std::fs::write(
        opts.out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Supervised fine-tuning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FinetuneOptions {
    /// Number of labeled samples used for training; the rest are held out.
    pub labeled: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub augment: bool,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        Self {
            labeled: 5000,
            epochs: 10,
            batch_size: 128,
            augment: false,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Supervised cross-entropy training of a prepared model (pretrained
/// encoder with a fresh head, or a from-scratch baseline) on a labeled
/// subset; returns held-out accuracy. This is the one mode allowed to read
/// labels outside evaluation.
pub fn finetune(model: &mut ClusterModel, dataset: &Dataset, opts: &FinetuneOptions) -> Result<f64> {
    let n = dataset.len();
    if opts.labeled == 0 || opts.labeled >= n {
        return Err(Error::InvalidParameter(format!(
            "labeled budget {} must be in 1..{n}",
            opts.labeled
        )));
    }
    let view = dataset.eval_view();
    let primary = model.descriptor().primary_heads();
    let head = *primary.first().ok_or(Error::UnknownHead(0))?;

    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &[tag("split")]));
    idx.shuffle(&mut rng);
    let (train_idx, test_idx) = idx.split_at(opts.labeled);

    let hp = crate::model::AdamParams {
        learning_rate: opts.learning_rate,
        ..Default::default()
    };
    let mut state = AdamState::new(model);
    let geo_spec = TransformSpec::geometric_default(false);

    for epoch in 0..opts.epochs {
        let mut order = train_idx.to_vec();
        let mut erng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(
            opts.seed,
            &[tag("ft-shuffle"), epoch as u64],
        ));
        order.shuffle(&mut erng);
        for (batch_idx, chunk) in order.chunks(opts.batch_size).enumerate() {
            let mut x = dataset.gather(chunk)?;
            if opts.augment {
                let seed = derive_seed(opts.seed, &[tag("ft-geo"), epoch as u64, batch_idx as u64]);
                x = geometric(&x, &geo_spec, seed)?;
            }
            let labels: Vec<usize> = chunk.iter().map(|&i| view.labels[i]).collect();
            let trace = model.forward_trace(x.as_array())?;
            let probs = &trace.head_probs[head];
            let b = probs.nrows() as f64;
            // d CE / d p = −onehot / p (chained through softmax → p − onehot).
            let mut d_p = Array2::zeros(probs.raw_dim());
            for (row, &y) in labels.iter().enumerate() {
                d_p[(row, y)] = -1.0 / probs[(row, y)].max(crate::math::PROB_FLOOR) / b;
            }
            let mut d_probs: Vec<Option<Array2<f64>>> = vec![None; model.n_heads()];
            d_probs[head] = Some(d_p);
            let out = model.backward(&trace, &d_probs, false)?;
            adam::step(model, &out.grads, &mut state, &hp)?;
        }
    }

    // Held-out accuracy by plain argmax: the supervised head is aligned
    // with label identities, so no assignment step is needed.
    let mut correct = 0usize;
    for chunk in test_idx.chunks(opts.batch_size.max(1)) {
        let x = dataset.gather(chunk)?;
        let probs = model.forward(&x, head)?;
        for (pred, &i) in probs.argmax().into_iter().zip(chunk) {
            if pred == view.labels[i] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / test_idx.len() as f64)
}

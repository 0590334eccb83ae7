use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeaturePlan, GraphBatch};
use super::model::{masked_mse, ForwardConfig, ForwardModel};
use crate::circuit::{CircuitGraph, EdgeType, TopologyEntry};
use crate::dataset::Record;
use crate::diffnum::{AdamState, Mlp, PlateauScheduler, Tape, Tensor, Var};
use crate::metrics::{relative_error, Metric, MetricMask, NormStats, PerformanceVector, METRIC_COUNT};
use crate::{Error, Result};

/// One training example: topology, parameter values in the graph's
/// parameter order (SI) and raw targets.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub topology_id: usize,
    pub x: Vec<f64>,
    pub y: PerformanceVector,
}

impl GraphSample {
    pub fn from_record(record: &Record, graph: &CircuitGraph) -> Result<Self> {
        let x = graph
            .parameters
            .iter()
            .map(|p| {
                record
                    .params
                    .get(&p.name)
                    .copied()
                    .ok_or_else(|| Error::MissingSymbol(p.name.clone()))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(GraphSample {
            topology_id: record.topology_id,
            x,
            y: record.performance()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ForwardConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ForwardConfig::default(),
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 200,
            patience: 20,
            plateau_factor: 0.5,
            plateau_patience: 5,
            min_lr: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub lr: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Graphs and feature plans per topology id.
#[derive(Debug, Clone, Default)]
pub struct GraphCache {
    entries: BTreeMap<usize, (CircuitGraph, FeaturePlan)>,
}

impl GraphCache {
    pub fn new(library: &[TopologyEntry]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for e in library {
            let g = e.graph()?;
            let plan = FeaturePlan::new(&g)?;
            entries.insert(e.spec.id, (g, plan));
        }
        Ok(GraphCache { entries })
    }

    pub fn get(&self, id: usize) -> Result<&(CircuitGraph, FeaturePlan)> {
        self.entries
            .get(&id)
            .ok_or_else(|| Error::UnknownTopology(format!("{id}")))
    }

    /// Batched graph structure and stacked constant features.
    fn batch(&self, samples: &[&GraphSample]) -> Result<(GraphBatch, Vec<Tensor>)> {
        let mut items = Vec::with_capacity(samples.len());
        let mut feats = Vec::with_capacity(samples.len());
        for s in samples {
            let (g, plan) = self.get(s.topology_id)?;
            if s.x.len() != plan.n_params {
                return Err(Error::shape(
                    "forward batch",
                    format!("topology {} takes {} parameters, got {}", s.topology_id, plan.n_params, s.x.len()),
                ));
            }
            items.push((g, plan));
            feats.push(plan.features(&s.x));
        }
        let batch = GraphBatch::new(&items);
        let plans: Vec<&FeaturePlan> = items.iter().map(|p| p.1).collect();
        let refs: Vec<&[Tensor]> = feats.iter().map(Vec::as_slice).collect();
        let stacked = batch.stack_features(&plans, &refs);
        Ok((batch, stacked))
    }
}

/// Normalized targets and mask weights as `[n, 16]` matrices.
fn target_matrices(stats: &NormStats, samples: &[&GraphSample]) -> Result<(Tensor, Tensor)> {
    let mut t = Vec::with_capacity(samples.len() * METRIC_COUNT);
    let mut w = Vec::with_capacity(samples.len() * METRIC_COUNT);
    for s in samples {
        let z = stats.normalize(&s.y)?;
        t.extend_from_slice(&z.values);
        w.extend_from_slice(&z.mask.weights());
    }
    Ok((
        Tensor::matrix(samples.len(), METRIC_COUNT, t),
        Tensor::matrix(samples.len(), METRIC_COUNT, w),
    ))
}

fn batch_etypes(batch: &GraphBatch) -> Vec<EdgeType> {
    batch.groups.iter().map(|g| g.0).collect()
}

impl ForwardModel {
    /// Normalized predictions for many samples, computed `chunk` at a time.
    pub fn predict_samples(&self, cache: &GraphCache, samples: &[&GraphSample], chunk: usize) -> Result<Vec<[f64; METRIC_COUNT]>> {
        let mut out = Vec::with_capacity(samples.len());
        for part in samples.chunks(chunk.max(1)) {
            let (batch, feats) = cache.batch(part)?;
            let mut tape = Tape::new();
            let bound = self.bind(&mut tape, &batch_etypes(&batch), false, false);
            let inputs: Vec<Var> = feats.into_iter().map(|f| tape.constant(f)).collect();
            let y = bound.forward(&mut tape, &batch, &inputs, self.config.layers)?;
            for row in tape.value(y).data().chunks(METRIC_COUNT) {
                let mut r = [0.0; METRIC_COUNT];
                r.copy_from_slice(row);
                out.push(r);
            }
        }
        Ok(out)
    }

    /// Pooled graph embeddings from the frozen trunk.
    pub fn embed_samples(&self, cache: &GraphCache, samples: &[&GraphSample], chunk: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(samples.len());
        for part in samples.chunks(chunk.max(1)) {
            let (batch, feats) = cache.batch(part)?;
            let mut tape = Tape::new();
            let bound = self.bind(&mut tape, &batch_etypes(&batch), false, false);
            let inputs: Vec<Var> = feats.into_iter().map(|f| tape.constant(f)).collect();
            let z = bound.embed(&mut tape, &batch, &inputs, self.config.layers)?;
            out.extend(tape.value(z).data().chunks(self.config.d).map(<[f64]>::to_vec));
        }
        Ok(out)
    }

    fn loss_on(&self, cache: &GraphCache, samples: &[&GraphSample], chunk: usize) -> Result<f64> {
        let preds = self.predict_samples(cache, samples, chunk)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for (p, s) in preds.iter().zip(samples) {
            let z = self.target_stats.normalize(&s.y)?;
            for m in z.mask.metrics() {
                let d = p[m.index()] - z.values[m.index()];
                num += d * d;
                den += 1.0;
            }
        }
        if den == 0.0 {
            return Err(Error::invalid("masked_mse: mask is empty"));
        }
        Ok(num / den)
    }
}

/// Tracks the best validation loss and when to stop.
struct EarlyStop {
    best: f64,
    best_epoch: usize,
    patience: usize,
}

impl EarlyStop {
    /// Returns whether `loss` is a new best.
    fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            true
        } else {
            false
        }
    }

    fn should_stop(&self, epoch: usize) -> bool {
        epoch >= self.best_epoch + self.patience
    }
}

fn check_finite(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged(format!("loss became {loss} in epoch {epoch}")))
    }
}

/// Trains a fresh model on `train`, early-stopping on `val`, and returns
/// the weights of the best validation epoch.
pub fn train_forward(
    library: &[TopologyEntry],
    train: &[GraphSample],
    val: &[GraphSample],
    cfg: &TrainConfig,
) -> Result<(ForwardModel, TrainHistory)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("train_forward needs non-empty train and validation sets"));
    }
    let cache = GraphCache::new(library)?;
    let mut model = ForwardModel::new(cfg.model, cfg.seed);
    model.library = library.to_vec();
    model.target_stats = NormStats::fit(train.iter().map(|s| &s.y)).with_unit_floor();
    let val_refs: Vec<&GraphSample> = val.iter().collect();

    let mut adam = AdamState::new(model.tensors_mut().into_iter().map(|t| &*t), cfg.lr);
    let mut sched = PlateauScheduler::new(cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr);
    let mut stop = EarlyStop { best: f64::INFINITY, best_epoch: 0, patience: cfg.patience };
    let mut best = model.clone();
    let mut history = TrainHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let all_etypes: Vec<EdgeType> = model.encoders.keys().copied().collect();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for idx in order.chunks(cfg.batch_size.max(1)) {
            let samples: Vec<&GraphSample> = idx.iter().map(|&i| &train[i]).collect();
            let (batch, feats) = cache.batch(&samples)?;
            let (target, weights) = target_matrices(&model.target_stats, &samples)?;
            let mut tape = Tape::new();
            let etypes = batch_etypes(&batch);
            let bound = model.bind(&mut tape, &etypes, true, true);
            let inputs: Vec<Var> = feats.into_iter().map(|f| tape.constant(f)).collect();
            let pred = bound.forward(&mut tape, &batch, &inputs, model.config.layers)?;
            let loss = masked_mse(&mut tape, pred, &target, &weights)?;
            let lv = tape.value(loss).data()[0];
            check_finite(lv, epoch)?;
            epoch_loss += lv * samples.len() as f64;
            seen += samples.len();
            let mut grads = tape.backward(loss)?;

            // Gradients in the same order as `tensors_mut`; encoders of
            // edge types absent from this batch get zeros.
            let mut flat: Vec<Tensor> = Vec::new();
            for t in &all_etypes {
                match bound.encoders.get(t) {
                    Some(enc) => flat.extend(enc.vars().map(|v| grad_or_zeros(&mut grads, &tape, v))),
                    None => flat.extend(model.encoders[t].tensors().map(|p| Tensor::zeros(p.shape()))),
                }
            }
            for net in [&bound.msg, &bound.upd.0, &bound.head] {
                flat.extend(net.vars().map(|v| grad_or_zeros(&mut grads, &tape, v)));
            }
            let grad_refs: Vec<&Tensor> = flat.iter().collect();
            adam.step(&mut model.tensors_mut(), &grad_refs)?;
        }
        let train_loss = epoch_loss / seen as f64;
        let val_loss = model.loss_on(&cache, &val_refs, 512)?;
        check_finite(val_loss, epoch)?;
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.lr.push(adam.lr);
        if stop.observe(epoch, val_loss) {
            best = model.clone();
        }
        adam.lr = sched.step(val_loss, adam.lr);
        if stop.should_stop(epoch) {
            break;
        }
    }
    history.best_epoch = stop.best_epoch;
    history.best_val_loss = stop.best;
    Ok((best, history))
}

fn grad_or_zeros(grads: &mut crate::diffnum::Gradients, tape: &Tape, v: Var) -> Tensor {
    grads
        .take(v)
        .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
}

/// Retrains only the output head on a new dataset. Encoders and the
/// message/update nets are left untouched. Target statistics for metrics
/// the model has never seen are fitted on `train`; known ones are kept.
pub fn finetune_head(
    model: &mut ForwardModel,
    extra_library: &[TopologyEntry],
    train: &[GraphSample],
    val: &[GraphSample],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("finetune_head needs non-empty train and validation sets"));
    }
    for e in extra_library {
        if !model.library.iter().any(|k| k.spec.id == e.spec.id) {
            model.library.push(e.clone());
        }
    }
    let fresh = NormStats::fit(train.iter().map(|s| &s.y)).with_unit_floor();
    for m in Metric::ALL {
        if fresh.present.contains(m) && !model.target_stats.present.contains(m) {
            let i = m.index();
            model.target_stats.mean[i] = fresh.mean[i];
            model.target_stats.std[i] = fresh.std[i];
            model.target_stats.present.insert(m);
        }
    }
    let cache = GraphCache::new(&model.library)?;
    let train_refs: Vec<&GraphSample> = train.iter().collect();
    let val_refs: Vec<&GraphSample> = val.iter().collect();
    let d = model.config.d;
    let z_train = model.embed_samples(&cache, &train_refs, 512)?;
    let z_val = model.embed_samples(&cache, &val_refs, 512)?;
    let (t_val, w_val) = target_matrices(&model.target_stats, &val_refs)?;
    let z_val = Tensor::matrix(z_val.len(), d, z_val.concat());

    let head_loss = |head: &Mlp, z: &Tensor, t: &Tensor, w: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let b = head.bind(&mut tape, false);
        let zi = tape.constant(z.clone());
        let p = b.forward(&mut tape, zi)?;
        let l = masked_mse(&mut tape, p, t, w)?;
        Ok(tape.value(l).data()[0])
    };

    let mut adam = AdamState::new(model.head.tensors(), cfg.lr);
    let mut sched = PlateauScheduler::new(cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr);
    let mut stop = EarlyStop { best: f64::INFINITY, best_epoch: 0, patience: cfg.patience };
    let mut best = model.head.clone();
    let mut history = TrainHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(cfg.batch_size.max(1)) {
            let samples: Vec<&GraphSample> = idx.iter().map(|&i| train_refs[i]).collect();
            let (t, w) = target_matrices(&model.target_stats, &samples)?;
            let z: Vec<f64> = idx.iter().flat_map(|&i| z_train[i].iter().copied()).collect();
            let mut tape = Tape::new();
            let b = model.head.bind(&mut tape, true);
            let zi = tape.constant(Tensor::matrix(idx.len(), d, z));
            let p = b.forward(&mut tape, zi)?;
            let l = masked_mse(&mut tape, p, &t, &w)?;
            let lv = tape.value(l).data()[0];
            check_finite(lv, epoch)?;
            epoch_loss += lv * idx.len() as f64;
            let mut grads = tape.backward(l)?;
            let flat: Vec<Tensor> = b.vars().map(|v| grad_or_zeros(&mut grads, &tape, v)).collect();
            let refs: Vec<&Tensor> = flat.iter().collect();
            let mut params: Vec<&mut Tensor> = model.head.tensors_mut().collect();
            adam.step(&mut params, &refs)?;
        }
        let val_loss = head_loss(&model.head, &z_val, &t_val, &w_val)?;
        check_finite(val_loss, epoch)?;
        history.train_loss.push(epoch_loss / train.len() as f64);
        history.val_loss.push(val_loss);
        history.lr.push(adam.lr);
        if stop.observe(epoch, val_loss) {
            best = model.head.clone();
        }
        adam.lr = sched.step(val_loss, adam.lr);
        if stop.should_stop(epoch) {
            break;
        }
    }
    model.head = best;
    history.best_epoch = stop.best_epoch;
    history.best_val_loss = stop.best;
    Ok(history)
}

/// Error statistics of one metric over the samples where it is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub count: usize,
    /// `None` when the targets have zero variance.
    pub r2: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
    /// Mean of `|pred - y| / |y|`.
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardReport {
    pub per_metric: Vec<MetricReport>,
    /// Mean over samples of each sample's mean relative error.
    pub mean_relative_error: f64,
    pub samples: usize,
}

impl ForwardReport {
    pub fn metric(&self, m: Metric) -> Option<&MetricReport> {
        self.per_metric.iter().find(|r| r.metric == m)
    }
}

/// Scores raw-unit predictions against targets.
pub fn report_from_predictions(preds: &[[f64; METRIC_COUNT]], targets: &[PerformanceVector]) -> ForwardReport {
    let mut per_metric = Vec::new();
    let mut seen = MetricMask::EMPTY;
    for t in targets {
        seen.0 |= t.mask.0;
    }
    for m in seen.metrics() {
        let i = m.index();
        let pairs: Vec<(f64, f64)> = preds
            .iter()
            .zip(targets)
            .filter_map(|(p, t)| t.get(m).map(|y| (p[i], y)))
            .collect();
        let n = pairs.len() as f64;
        // Summation rounding can leave a tiny spread on identical targets.
        let constant = pairs.iter().all(|p| p.1 == pairs[0].1);
        let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let ss_tot: f64 = pairs.iter().map(|p| (p.1 - mean_y) * (p.1 - mean_y)).sum();
        let ss_res: f64 = pairs.iter().map(|p| (p.0 - p.1) * (p.0 - p.1)).sum();
        per_metric.push(MetricReport {
            metric: m,
            count: pairs.len(),
            r2: (!constant && ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
            rmse: libm::sqrt(ss_res / n),
            mae: pairs.iter().map(|p| libm::fabs(p.0 - p.1)).sum::<f64>() / n,
            rel_err: pairs.iter().map(|&(p, y)| relative_error(p, y)).sum::<f64>() / n,
        });
    }
    let per_sample: Vec<f64> = preds
        .iter()
        .zip(targets)
        .filter_map(|(p, t)| crate::metrics::mean_relative_error(p, &t.values, t.mask))
        .collect();
    let mean_relative_error = if per_sample.is_empty() {
        0.0
    } else {
        per_sample.iter().sum::<f64>() / per_sample.len() as f64
    };
    ForwardReport {
        per_metric,
        mean_relative_error,
        samples: targets.len(),
    }
}

/// Report of `model` on `samples`, in raw metric units.
pub fn evaluate(model: &ForwardModel, samples: &[GraphSample]) -> Result<ForwardReport> {
    let cache = GraphCache::new(&model.library)?;
    let refs: Vec<&GraphSample> = samples.iter().collect();
    let preds: Vec<[f64; METRIC_COUNT]> = model
        .predict_samples(&cache, &refs, 512)?
        .iter()
        .map(|z| model.target_stats.denormalize(z))
        .collect();
    let targets: Vec<PerformanceVector> = samples.iter().map(|s| s.y).collect();
    Ok(report_from_predictions(&preds, &targets))
}

//! Topology selection: an MLP from a z-scored target performance vector to
//! a distribution over the topology library.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::LIBRARY_SIZE;
use crate::diffnum::{AdamState, Mlp, Tape, Tensor, WeightSet};
use crate::metrics::{NormStats, PerformanceVector, METRIC_COUNT};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: usize,
    /// Number of affine layers, output layer included.
    pub layers: usize,
    pub classes: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation cross-entropy improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: 256,
            layers: 5,
            classes: LIBRARY_SIZE,
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 200,
            patience: 10,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    fn dims(&self) -> Vec<usize> {
        let mut d = vec![METRIC_COUNT];
        d.extend(core::iter::repeat_n(self.hidden, self.layers.saturating_sub(1)));
        d.push(self.classes);
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub mlp: Mlp,
    pub stats: NormStats,
}

/// Sidecar stored with the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMeta {
    pub dims: Vec<usize>,
    pub stats: NormStats,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| libm::exp(l - mx)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl ClassifierModel {
    pub fn new(cfg: &ClassifierConfig, stats: NormStats) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        ClassifierModel {
            mlp: Mlp::new(&cfg.dims(), &mut rng),
            stats,
        }
    }

    pub fn classes(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Model input: z-scores of present metrics, 0 elsewhere.
    pub fn encode(&self, y: &PerformanceVector) -> Result<[f64; METRIC_COUNT]> {
        Ok(self.stats.normalize(y)?.values)
    }

    fn logits_batch(&self, inputs: Vec<f64>, n: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let b = self.mlp.bind(&mut tape, false);
        let x = tape.constant(Tensor::matrix(n, METRIC_COUNT, inputs));
        let out = b.forward(&mut tape, x)?;
        Ok(tape.value(out).data().to_vec())
    }

    pub fn logits(&self, y: &PerformanceVector) -> Result<Vec<f64>> {
        self.logits_batch(self.encode(y)?.to_vec(), 1)
    }

    /// Most likely topology index and the full distribution.
    pub fn predict(&self, y: &PerformanceVector) -> Result<(usize, Vec<f64>)> {
        let p = softmax(&self.logits(y)?);
        Ok((argmax(&p), p))
    }

    pub fn predict_many(&self, ys: &[PerformanceVector]) -> Result<Vec<usize>> {
        let k = self.classes();
        let mut out = Vec::with_capacity(ys.len());
        for chunk in ys.chunks(1024) {
            let mut inputs = Vec::with_capacity(chunk.len() * METRIC_COUNT);
            for y in chunk {
                inputs.extend_from_slice(&self.encode(y)?);
            }
            let logits = self.logits_batch(inputs, chunk.len())?;
            out.extend(logits.chunks(k).map(argmax));
        }
        Ok(out)
    }

    pub fn to_weights(&self) -> WeightSet {
        let mut w = WeightSet::default();
        for (i, l) in self.mlp.layers.iter().enumerate() {
            w.push(format!("mlp.{i}.weight"), &l.weight);
            w.push(format!("mlp.{i}.bias"), &l.bias);
        }
        w
    }

    pub fn meta(&self) -> ClassifierMeta {
        let mut dims = vec![self.mlp.input_dim()];
        dims.extend(self.mlp.layers.iter().map(|l| l.fan_out()));
        ClassifierMeta {
            dims,
            stats: self.stats.clone(),
        }
    }

    pub fn from_parts(meta: ClassifierMeta, weights: &WeightSet) -> Result<Self> {
        weights.check_version()?;
        if meta.dims.first() != Some(&METRIC_COUNT) || meta.dims.len() < 2 {
            return Err(Error::invalid(format!("classifier dims {:?}", meta.dims)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mlp = Mlp::new(&meta.dims, &mut rng);
        for (i, l) in mlp.layers.iter_mut().enumerate() {
            weights.load_into(&format!("mlp.{i}.weight"), &mut l.weight)?;
            weights.load_into(&format!("mlp.{i}.bias"), &mut l.bias)?;
        }
        Ok(ClassifierModel { mlp, stats: meta.stats })
    }

    /// Mean cross-entropy over labeled samples.
    pub fn cross_entropy(&self, data: &[(PerformanceVector, usize)]) -> Result<f64> {
        let mut total = 0.0;
        let k = self.classes();
        for chunk in data.chunks(1024) {
            let (x, onehot) = self.encode_batch(chunk)?;
            let logits = self.logits_batch(x.into_data(), chunk.len())?;
            for (row, t) in logits.chunks(k).zip(onehot.data().chunks(k)) {
                let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + libm::log(row.iter().map(|&l| libm::exp(l - mx)).sum::<f64>());
                let target: f64 = row.iter().zip(t).map(|(l, w)| l * w).sum();
                total += lse - target;
            }
        }
        Ok(total / data.len() as f64)
    }

    fn encode_batch(&self, chunk: &[(PerformanceVector, usize)]) -> Result<(Tensor, Tensor)> {
        let k = self.classes();
        let mut x = Vec::with_capacity(chunk.len() * METRIC_COUNT);
        let mut t = vec![0.0; chunk.len() * k];
        for (r, (y, label)) in chunk.iter().enumerate() {
            if *label >= k {
                return Err(Error::invalid(format!("label {label} outside {k} classes")));
            }
            x.extend_from_slice(&self.encode(y)?);
            t[r * k + label] = 1.0;
        }
        Ok((Tensor::matrix(chunk.len(), METRIC_COUNT, x), Tensor::matrix(chunk.len(), k, t)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

/// Trains on `(target, class)` pairs with Adam and cross-entropy, keeping
/// the weights of the best validation epoch.
pub fn train_classifier(
    train: &[(PerformanceVector, usize)],
    val: &[(PerformanceVector, usize)],
    cfg: &ClassifierConfig,
) -> Result<(ClassifierModel, ClassifierHistory)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("classifier needs non-empty train and validation sets"));
    }
    let mut counts = vec![0usize; cfg.classes];
    for (_, c) in train {
        if *c >= cfg.classes {
            return Err(Error::invalid(format!("label {c} outside {} classes", cfg.classes)));
        }
        counts[*c] += 1;
    }
    if let Some((_, c)) = val.iter().find(|(_, c)| *c >= cfg.classes || counts[*c] == 0) {
        return Err(Error::invalid(format!("class {c} has no training samples")));
    }

    let stats = NormStats::fit(train.iter().map(|s| &s.0));
    let mut model = ClassifierModel::new(cfg, stats);
    let mut adam = AdamState::new(model.mlp.tensors(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = ClassifierHistory::default();
    let mut best = (f64::INFINITY, model.clone());

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size.max(1)) {
            let chunk: Vec<(PerformanceVector, usize)> = idx.iter().map(|&i| train[i]).collect();
            let (x, onehot) = model.encode_batch(&chunk)?;
            let mut tape = Tape::new();
            let b = model.mlp.bind(&mut tape, true);
            let xv = tape.constant(x);
            let logits = b.forward(&mut tape, xv)?;
            let logp = tape.log_softmax(logits);
            let t = tape.constant(onehot);
            let picked = tape.mul(logp, t)?;
            let s = tape.sum(picked);
            let loss = tape.scale(s, -1.0 / chunk.len() as f64);
            let lv = tape.value(loss).data()[0];
            if !lv.is_finite() {
                return Err(Error::Diverged(format!("cross-entropy became {lv} in epoch {epoch}")));
            }
            total += lv * chunk.len() as f64;
            let mut grads = tape.backward(loss)?;
            let flat: Vec<Tensor> = b
                .vars()
                .map(|v| grads.take(v).unwrap_or_else(|| Tensor::zeros(tape.value(v).shape())))
                .collect();
            let refs: Vec<&Tensor> = flat.iter().collect();
            let mut params: Vec<&mut Tensor> = model.mlp.tensors_mut().collect();
            adam.step(&mut params, &refs)?;
        }
        let val_loss = model.cross_entropy(val)?;
        history.train_loss.push(total / train.len() as f64);
        history.val_loss.push(val_loss);
        if val_loss < best.0 {
            best = (val_loss, model.clone());
            history.best_epoch = epoch;
        } else if epoch >= history.best_epoch + cfg.patience {
            break;
        }
    }
    Ok((best.1, history))
}

/// Classification quality of predicted labels.
///
/// Balanced accuracy averages recall over classes present in `y_true`.
/// Macro precision, recall and F1 average over classes appearing in either
/// `y_true` or `y_pred`; a class never predicted has precision 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub samples: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// `confusion[t][p]` counts samples of class `t` predicted as `p`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn classification_report(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<ClassificationReport> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::invalid(format!(
            "{} labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= classes || p >= classes {
            return Err(Error::invalid(format!("label outside {classes} classes")));
        }
        confusion[t][p] += 1;
    }
    let n = y_true.len() as f64;
    let tp = |c: usize| confusion[c][c] as f64;
    let support = |c: usize| confusion[c].iter().sum::<usize>() as f64;
    let predicted = |c: usize| confusion.iter().map(|r| r[c]).sum::<usize>() as f64;
    let correct: f64 = (0..classes).map(tp).sum();

    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let in_true: Vec<usize> = (0..classes).filter(|&c| support(c) > 0.0).collect();
    let in_either: Vec<usize> = (0..classes).filter(|&c| support(c) > 0.0 || predicted(c) > 0.0).collect();
    let mean = |xs: &mut dyn Iterator<Item = f64>, len: usize| xs.sum::<f64>() / len as f64;

    let balanced_accuracy = mean(&mut in_true.iter().map(|&c| tp(c) / support(c)), in_true.len());
    let precision = |c: usize| ratio(tp(c), predicted(c));
    let recall = |c: usize| ratio(tp(c), support(c));
    let f1 = |c: usize| {
        let (p, r) = (precision(c), recall(c));
        ratio(2.0 * p * r, p + r)
    };
    let m = in_either.len();
    Ok(ClassificationReport {
        samples: y_true.len(),
        accuracy: correct / n,
        balanced_accuracy,
        macro_precision: mean(&mut in_either.iter().map(|&c| precision(c)), m),
        macro_recall: mean(&mut in_either.iter().map(|&c| recall(c)), m),
        macro_f1: mean(&mut in_either.iter().map(|&c| f1(c)), m),
        // Single-label: pooled precision = pooled recall = accuracy.
        micro_f1: correct / n,
        confusion,
    })
}

/// Report of `model` on labeled samples.
pub fn evaluate(model: &ClassifierModel, data: &[(PerformanceVector, usize)]) -> Result<ClassificationReport> {
    let ys: Vec<PerformanceVector> = data.iter().map(|d| d.0).collect();
    let truth: Vec<usize> = data.iter().map(|d| d.1).collect();
    classification_report(&truth, &model.predict_many(&ys)?, model.classes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Metric;
    use proptest::prelude::*;
    use rand::Rng;

    fn small() -> ClassifierConfig {
        ClassifierConfig { hidden: 32, classes: 4, batch_size: 64, max_epochs: 50, ..ClassifierConfig::default() }
    }

    fn blobs(n: usize, seed: u64) -> Vec<(PerformanceVector, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let c = i % 2;
                let centre = if c == 0 { -3.0 } else { 3.0 };
                let y = PerformanceVector::from_pairs(&[
                    (Metric::Dcp, centre + rng.gen_range(-1.0..1.0)),
                    (Metric::Bw, rng.gen_range(-5.0..5.0)),
                ]);
                (y, c)
            })
            .collect()
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.0; 20]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        let mut l = [0.0; 20];
        l[17] = 9.0;
        assert_eq!(argmax(&l), 17);
        assert!(softmax(&l)[17] > 1.0 / 20.0);
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(600, 1);
        let (train, rest) = data.split_at(400);
        let (val, test) = rest.split_at(100);
        // Linear baseline: the sign of DCP separates the classes.
        assert!(test.iter().all(|(y, c)| (y.values[0] > 0.0) == (*c == 1)));
        let (model, hist) = train_classifier(train, val, &small()).unwrap();
        assert!(hist.train_loss.len() <= 50);
        assert_eq!(evaluate(&model, test).unwrap().accuracy, 1.0);
    }

    #[test]
    fn permuted_labels_score_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut data: Vec<(PerformanceVector, usize)> = (0..8000)
            .map(|i| {
                let y = PerformanceVector::from_pairs(&[
                    (Metric::Dcp, rng.gen_range(0.0..1.0)),
                    (Metric::VGain, rng.gen_range(0.0..1.0)),
                ]);
                (y, i % 4)
            })
            .collect();
        let mut labels: Vec<usize> = data.iter().map(|d| d.1).collect();
        labels.shuffle(&mut rng);
        for (d, l) in data.iter_mut().zip(labels) {
            d.1 = l;
        }
        let (train, rest) = data.split_at(6400);
        let (val, test) = rest.split_at(800);
        let (model, _) = train_classifier(train, val, &small()).unwrap();
        let acc = evaluate(&model, test).unwrap().accuracy;
        assert!((acc - 0.25).abs() <= 0.05, "accuracy {acc}");
    }

    #[test]
    fn report_matches_direct_computation() {
        let t = [0, 0, 0, 1, 1, 2];
        let p = [0, 0, 1, 1, 2, 2];
        let r = classification_report(&t, &p, 4).unwrap();
        assert!((r.accuracy - 4.0 / 6.0).abs() < 1e-15);
        // Recalls 2/3, 1/2, 1.
        assert!((r.balanced_accuracy - (2.0 / 3.0 + 0.5 + 1.0) / 3.0).abs() < 1e-15);
        // Precisions 1, 1/2, 1/2.
        assert!((r.macro_precision - 2.0 / 3.0).abs() < 1e-15);
        let f1 = [0.8, 0.5, 2.0 / 3.0];
        assert!((r.macro_f1 - f1.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        assert_eq!(r.micro_f1, r.accuracy);
        assert_eq!(r.confusion[1], [0, 1, 1, 0]);
        assert!(classification_report(&t, &p[..3], 4).is_err());
    }

    #[test]
    fn empty_class_in_training_is_rejected() {
        let data = blobs(40, 2);
        let train: Vec<_> = data.iter().filter(|d| d.1 == 0).copied().collect();
        assert!(train_classifier(&train, &data, &small()).is_err());
    }

    #[test]
    fn round_trip_through_weights() {
        let stats = NormStats::fit(blobs(10, 3).iter().map(|d| &d.0));
        let m = ClassifierModel::new(&ClassifierConfig::default(), stats);
        assert_eq!(ClassifierModel::from_parts(m.meta(), &m.to_weights()).unwrap(), m);
        assert_eq!(m.meta().dims, [16, 256, 256, 256, 256, 20]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn probabilities_sum_to_one(vals in proptest::collection::vec(-1e3f64..1e3, 2)) {
            let stats = NormStats::fit(blobs(10, 3).iter().map(|d| &d.0));
            let m = ClassifierModel::new(&ClassifierConfig::default(), stats);
            let y = PerformanceVector::from_pairs(&[(Metric::Dcp, vals[0]), (Metric::Bw, vals[1])]);
            let (k, p) = m.predict(&y).unwrap();
            prop_assert_eq!(p.len(), 20);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert_eq!(k, argmax(&p));
        }

        #[test]
        fn balanced_accuracy_is_mean_recall(pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..60)) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let r = classification_report(&t, &p, 5).unwrap();
            let mut recalls = Vec::new();
            for c in 0..5 {
                let n = t.iter().filter(|&&x| x == c).count();
                if n > 0 {
                    let hit = t.iter().zip(&p).filter(|(&a, &b)| a == c && b == c).count();
                    recalls.push(hit as f64 / n as f64);
                }
            }
            let direct = recalls.iter().sum::<f64>() / recalls.len() as f64;
            prop_assert!((r.balanced_accuracy - direct).abs() < 1e-12);
        }
    }
}

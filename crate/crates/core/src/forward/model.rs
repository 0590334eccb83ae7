use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeaturePlan, GraphBatch};
use crate::circuit::{CircuitGraph, EdgeType, TopologyEntry};
use crate::diffnum::{BoundMlp, Mlp, Tape, Tensor, Var, WeightSet};
use crate::metrics::{MetricMask, NormStats, METRIC_COUNT};
use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardConfig {
    /// Edge embedding width.
    pub d: usize,
    /// Hidden width of encoders and the message/update nets.
    pub hidden: usize,
    /// Message-passing rounds.
    pub layers: usize,
    pub head_hidden: usize,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            d: 64,
            hidden: 64,
            layers: 4,
            head_hidden: 256,
        }
    }
}

/// Edge-centric GNN surrogate: per-type encoders, one shared message net
/// and one shared update net applied `layers` times, sum pooling and an
/// output head predicting all 16 metrics in normalized space.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    pub config: ForwardConfig,
    pub encoders: BTreeMap<EdgeType, Mlp>,
    pub msg: Mlp,
    pub upd: Mlp,
    pub head: Mlp,
    pub target_stats: NormStats,
    /// Topologies the model knows how to build graphs for.
    pub library: Vec<TopologyEntry>,
}

/// Serialized metadata written next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardMeta {
    pub config: ForwardConfig,
    /// Feature names of every edge type, in feature order.
    pub feature_schema: BTreeMap<String, Vec<String>>,
    pub unit_scales: BTreeMap<String, f64>,
    pub target_stats: NormStats,
    pub library: Vec<TopologyEntry>,
}

/// Scale applied to the Xavier draw of the last layer of the shared message
/// and update nets. The four shared rounds compound with node degree under
/// sum aggregation; at full Xavier gain initial outputs are in the hundreds
/// and Adam spends most of its budget recovering.
pub const RECURRENT_INIT_GAIN: f64 = 0.3;

impl ForwardModel {
    pub fn new(config: ForwardConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoders = EdgeType::ALL
            .iter()
            .map(|&t| (t, Mlp::new(&[t.feature_dim(), config.hidden, config.d], &mut rng)))
            .collect();
        let mut msg = Mlp::new(&[config.d, config.hidden, config.d], &mut rng);
        let mut upd = Mlp::new(&[3 * config.d, config.hidden, config.d], &mut rng);
        for mlp in [&mut msg, &mut upd] {
            if let Some(last) = mlp.layers.last_mut() {
                last.weight.data_mut().iter_mut().for_each(|w| *w *= RECURRENT_INIT_GAIN);
            }
        }
        let head = Mlp::new(&[config.d, config.head_hidden, METRIC_COUNT], &mut rng);
        ForwardModel {
            config,
            encoders,
            msg,
            upd,
            head,
            target_stats: NormStats {
                mean: [0.0; METRIC_COUNT],
                std: [1.0; METRIC_COUNT],
                present: MetricMask::EMPTY,
            },
            library: Vec::new(),
        }
    }

    pub fn entry(&self, code_or_id: &str) -> Result<&TopologyEntry> {
        self.library
            .iter()
            .find(|e| e.spec.code == code_or_id || format!("{}", e.spec.id) == code_or_id)
            .ok_or_else(|| Error::UnknownTopology(code_or_id.into()))
    }

    pub fn entry_by_id(&self, id: usize) -> Result<&TopologyEntry> {
        self.library
            .iter()
            .find(|e| e.spec.id == id)
            .ok_or_else(|| Error::UnknownTopology(format!("{id}")))
    }

    /// Named parameter tensors: encoders in edge-type order, then message,
    /// update and head nets.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        fn push<'a>(out: &mut Vec<(String, &'a Tensor)>, prefix: String, mlp: &'a Mlp) {
            for (i, l) in mlp.layers.iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), &l.weight));
                out.push((format!("{prefix}.{i}.bias"), &l.bias));
            }
        }
        let mut out = Vec::new();
        for (t, m) in &self.encoders {
            push(&mut out, format!("enc.{t}"), m);
        }
        push(&mut out, "msg".into(), &self.msg);
        push(&mut out, "upd".into(), &self.upd);
        push(&mut out, "head".into(), &self.head);
        out
    }

    pub fn trunk_tensors(&self) -> Vec<&Tensor> {
        self.encoders
            .values()
            .chain([&self.msg, &self.upd])
            .flat_map(Mlp::tensors)
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for m in self.encoders.values_mut() {
            out.extend(m.tensors_mut());
        }
        out.extend(self.msg.tensors_mut());
        out.extend(self.upd.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn to_weights(&self) -> WeightSet {
        let mut w = WeightSet::default();
        for (name, t) in self.named_tensors() {
            w.push(name, t);
        }
        w
    }

    pub fn meta(&self) -> ForwardMeta {
        ForwardMeta {
            config: self.config,
            feature_schema: EdgeType::ALL
                .iter()
                .map(|t| {
                    let mut names: Vec<String> = t.schema().iter().map(|(k, _)| String::from(*k)).collect();
                    names.extend(["src_dc", "src_ac", "src_none"].map(String::from));
                    (String::from(t.name()), names)
                })
                .collect(),
            unit_scales: super::unit_scale_table()
                .into_iter()
                .map(|(k, v)| (String::from(k), v))
                .collect(),
            target_stats: self.target_stats.clone(),
            library: self.library.clone(),
        }
    }

    pub fn from_parts(meta: ForwardMeta, weights: &WeightSet) -> Result<Self> {
        weights.check_version()?;
        let mut model = ForwardModel::new(meta.config, 0);
        let names: Vec<String> = model.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, t) in names.iter().zip(model.tensors_mut()) {
            weights.load_into(name, t)?;
        }
        model.target_stats = meta.target_stats;
        model.library = meta.library;
        Ok(model)
    }

    /// Records parameters on the tape. Only encoders for `etypes` are bound.
    pub fn bind(&self, tape: &mut Tape, etypes: &[EdgeType], train_trunk: bool, train_head: bool) -> BoundForward {
        let encoders = etypes
            .iter()
            .map(|t| (*t, self.encoders[t].bind(tape, train_trunk)))
            .collect();
        BoundForward {
            encoders,
            msg: self.msg.bind(tape, train_trunk),
            upd: UpdateMlp(self.upd.bind(tape, train_trunk)),
            head: self.head.bind(tape, train_head),
        }
    }

    /// Normalized predictions for one graph at parameter values `x` (SI).
    pub fn predict(&self, graph: &CircuitGraph, x: &[f64]) -> Result<[f64; METRIC_COUNT]> {
        let plan = FeaturePlan::new(graph)?;
        let batch = GraphBatch::new(&[(graph, &plan)]);
        let feats = plan.features(x);
        let mut tape = Tape::new();
        let etypes: Vec<EdgeType> = batch.groups.iter().map(|g| g.0).collect();
        let bound = self.bind(&mut tape, &etypes, false, false);
        let inputs: Vec<Var> = feats.into_iter().map(|f| tape.constant(f)).collect();
        let out = bound.forward(&mut tape, &batch, &inputs, self.config.layers)?;
        let mut y = [0.0; METRIC_COUNT];
        y.copy_from_slice(tape.value(out).data());
        Ok(y)
    }

    /// Predictions in raw metric units.
    pub fn predict_raw(&self, graph: &CircuitGraph, x: &[f64]) -> Result<[f64; METRIC_COUNT]> {
        Ok(self.target_stats.denormalize(&self.predict(graph, x)?))
    }
}

/// A net applied row-wise to edge embeddings.
pub trait EdgeNet {
    fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var>;
}

/// Edge update from the edge embedding and the symmetric pair
/// `(h_u + h_v, |h_u - h_v|)` of its endpoint states.
pub trait UpdateNet {
    fn apply(&self, tape: &mut Tape, e: Var, sum: Var, absdiff: Var) -> Result<Var>;
}

impl EdgeNet for BoundMlp {
    fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.forward(tape, x)
    }
}

/// Update MLP over `[e, h_u + h_v, |h_u - h_v|]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateMlp(pub BoundMlp);

impl UpdateNet for UpdateMlp {
    fn apply(&self, tape: &mut Tape, e: Var, sum: Var, absdiff: Var) -> Result<Var> {
        let x = tape.concat_cols(&[e, sum, absdiff])?;
        self.0.forward(tape, x)
    }
}

/// `layers` rounds of edge-centric message passing. Each edge's message
/// reaches both endpoints; node states are sums over incident edges.
#[allow(clippy::too_many_arguments)]
pub fn message_pass<M: EdgeNet, U: UpdateNet>(
    tape: &mut Tape,
    mut e: Var,
    src: &[usize],
    dst: &[usize],
    n_nodes: usize,
    msg: &M,
    upd: &U,
    layers: usize,
) -> Result<Var> {
    for _ in 0..layers {
        let m = msg.apply(tape, e)?;
        let hs = tape.scatter_add(m, src, n_nodes)?;
        let hd = tape.scatter_add(m, dst, n_nodes)?;
        let h = tape.add(hs, hd)?;
        let hu = tape.index_select(h, src)?;
        let hv = tape.index_select(h, dst)?;
        let sum = tape.add(hu, hv)?;
        let diff = tape.sub(hu, hv)?;
        let absdiff = tape.abs(diff);
        e = upd.apply(tape, e, sum, absdiff)?;
    }
    Ok(e)
}

/// Model parameters living on a tape.
#[derive(Debug, Clone)]
pub struct BoundForward {
    pub encoders: BTreeMap<EdgeType, BoundMlp>,
    pub msg: BoundMlp,
    pub upd: UpdateMlp,
    pub head: BoundMlp,
}

impl BoundForward {
    /// Per-edge initial embeddings, stacked in batch edge order.
    pub fn encode(&self, tape: &mut Tape, batch: &GraphBatch, inputs: &[Var]) -> Result<Var> {
        let mut parts = Vec::with_capacity(inputs.len());
        for (&(etype, _), &x) in batch.groups.iter().zip(inputs) {
            let enc = self
                .encoders
                .get(&etype)
                .ok_or_else(|| Error::UnknownEdgeType(String::from(etype.name())))?;
            parts.push(enc.forward(tape, x)?);
        }
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            tape.concat_rows(&parts)
        }
    }

    /// Sum-pooled graph embeddings, `[n_graphs, d]`.
    pub fn embed(&self, tape: &mut Tape, batch: &GraphBatch, inputs: &[Var], layers: usize) -> Result<Var> {
        let e0 = self.encode(tape, batch, inputs)?;
        let e = message_pass(tape, e0, &batch.src, &batch.dst, batch.n_nodes, &self.msg, &self.upd, layers)?;
        tape.scatter_add(e, &batch.edge_graph, batch.n_graphs)
    }

    /// Normalized predictions, `[n_graphs, 16]`.
    pub fn forward(&self, tape: &mut Tape, batch: &GraphBatch, inputs: &[Var], layers: usize) -> Result<Var> {
        let z = self.embed(tape, batch, inputs, layers)?;
        self.head.forward(tape, z)
    }
}

/// Masked mean squared error pooled over every present entry.
///
/// `pred` is `[n, 16]`; `target` and `weights` are `[n, 16]` constants with
/// weights 1 where the metric is present.
pub fn masked_mse(tape: &mut Tape, pred: Var, target: &Tensor, weights: &Tensor) -> Result<Var> {
    let total: f64 = weights.data().iter().sum();
    if total == 0.0 {
        return Err(Error::invalid("masked_mse: mask is empty"));
    }
    let t = tape.constant(target.clone());
    let w = tape.constant(weights.clone());
    let d = tape.sub(pred, t)?;
    let sq = tape.mul(d, d)?;
    let wsq = tape.mul(sq, w)?;
    let s = tape.sum(wsq);
    Ok(tape.scale(s, 1.0 / total))
}

/// Numeric masked MSE of one vector.
pub fn masked_mse_value(pred: &[f64], target: &[f64], mask: MetricMask) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::invalid("masked_mse: mask is empty"));
    }
    let s: f64 = mask
        .metrics()
        .map(|m| {
            let d = pred[m.index()] - target[m.index()];
            d * d
        })
        .sum();
    Ok(s / mask.count() as f64)
}

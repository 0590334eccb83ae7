//! Parameter inference: gradient descent through a frozen surrogate on a
//! gated performance-plus-layout loss, with clipping and restarts.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitGraph, EdgeType, ParamSpec, TopologyEntry};
use crate::classifier::ClassifierModel;
use crate::diffnum::{sigmoid, AdamState, PlateauScheduler, Tape, Tensor, Var};
use crate::forward::{FeaturePlan, ForwardModel, GraphBatch};
use crate::layout::{area_on_tape, PassiveKind, AREA_NORMALIZER_UM2};
use crate::metrics::{mean_relative_error, relative_error, Metric, MetricMask, NormStats, PerformanceVector, METRIC_COUNT};
use crate::oracle::OracleFamily;
use crate::{Error, Result};

pub const LAMBDA_AREA: f64 = 0.02;
pub const GATE_TAU: f64 = 0.05;
pub const GATE_GAMMA: f64 = 50.0;

/// `1 - sigmoid(gamma (l_perf - tau))`: close to 1 while performance is
/// still poor, so the area term only bites once the targets are nearly met.
pub fn gate(l_perf: f64, tau: f64, gamma: f64) -> f64 {
    1.0 - sigmoid(gamma * (l_perf - tau))
}

/// `l_perf + lambda * l_layout * gate(l_perf)`.
pub fn total_loss(l_perf: f64, l_layout: f64, cfg: &DesignConfig) -> f64 {
    l_perf + cfg.lambda_area * l_layout * gate(l_perf, cfg.tau, cfg.gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub lambda_area: f64,
    pub tau: f64,
    pub gamma: f64,
    /// Adam step size in box coordinates (each parameter mapped to [0, 1]).
    pub lr: f64,
    /// Factor applied to the step size at each restart.
    pub lr_growth: f64,
    pub lr_ceiling: f64,
    pub restarts: usize,
    /// Stop a run once the best loss has not improved by `min_improvement`
    /// (relative) for this many steps.
    pub window: usize,
    pub min_improvement: f64,
    pub max_steps: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Predicted mean relative error below which a run counts as converged.
    pub converge_error: f64,
    /// Oracle mean relative error below which a design is a success.
    pub success_error: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            lambda_area: LAMBDA_AREA,
            tau: GATE_TAU,
            gamma: GATE_GAMMA,
            lr: 1e-2,
            lr_growth: 10.0,
            lr_ceiling: 1e-1,
            restarts: 3,
            window: 200,
            min_improvement: 1e-4,
            max_steps: 20_000,
            plateau_factor: 0.5,
            plateau_patience: 50,
            converge_error: 0.10,
            success_error: 0.20,
        }
    }
}

/// Something that maps bound parameter values to normalized metric
/// predictions on a tape.
pub trait Surrogate {
    fn target_stats(&self) -> &NormStats;

    /// `[1, 16]` normalized predictions for `graph` at SI values `x` (`[n]`).
    fn predict_on_tape(&self, tape: &mut Tape, graph: &CircuitGraph, plan: &FeaturePlan, x: Var) -> Result<Var>;
}

impl Surrogate for ForwardModel {
    fn target_stats(&self) -> &NormStats {
        &self.target_stats
    }

    fn predict_on_tape(&self, tape: &mut Tape, graph: &CircuitGraph, plan: &FeaturePlan, x: Var) -> Result<Var> {
        let batch = GraphBatch::new(&[(graph, plan)]);
        let etypes: Vec<EdgeType> = batch.groups.iter().map(|g| g.0).collect();
        let bound = self.bind(tape, &etypes, false, false);
        let inputs = plan.features_on_tape(tape, x)?;
        bound.forward(tape, &batch, &inputs, self.config.layers)
    }
}

/// A passive whose layout value is `coef * x[param]`, or constant `coef`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PassiveTerm {
    kind: PassiveKind,
    param: Option<usize>,
    coef: f64,
}

/// A target to meet with one topology.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    /// Target in raw metric units; only present metrics are matched.
    pub target: PerformanceVector,
    pub graph: CircuitGraph,
    pub area_budget_mm2: f64,
    /// Metrics the topology defines.
    pub topology_metrics: MetricMask,
    pub topology_id: usize,
    plan: FeaturePlan,
    passives: Vec<PassiveTerm>,
}

impl DesignProblem {
    pub fn new(target: PerformanceVector, entry: &TopologyEntry) -> Result<Self> {
        let graph = entry.graph()?;
        let mut p = Self::from_graph(target, graph, entry.spec.metric_mask(), entry.spec.area_budget_mm2)?;
        p.topology_id = entry.spec.id;
        Ok(p)
    }

    pub fn from_graph(target: PerformanceVector, graph: CircuitGraph, metrics: MetricMask, area_budget_mm2: f64) -> Result<Self> {
        if !(area_budget_mm2 > 0.0) {
            return Err(Error::invalid(format!("area budget {area_budget_mm2} mm2")));
        }
        let mask = MetricMask(target.mask.0 & metrics.0);
        if mask.is_empty() {
            return Err(Error::invalid("target has no metric the topology defines"));
        }
        let plan = FeaturePlan::new(&graph)?;
        let mut passives = Vec::new();
        for e in &graph.edges {
            let Some(kind) = PassiveKind::from_edge_type(e.etype) else { continue };
            let slot = e
                .etype
                .schema()
                .iter()
                .position(|(k, _)| *k == kind.attr())
                .ok_or_else(|| Error::invalid(format!("edge {} lacks {}", e.label, kind.attr())))?;
            let form = graph.attr_forms(e)?[slot];
            passives.push(PassiveTerm {
                kind,
                param: form.param,
                coef: form.coef * kind.si_to_layout(),
            });
        }
        Ok(DesignProblem {
            target,
            graph,
            area_budget_mm2,
            topology_metrics: metrics,
            topology_id: 0,
            plan,
            passives,
        })
    }

    /// Metrics that enter the loss.
    pub fn mask(&self) -> MetricMask {
        MetricMask(self.target.mask.0 & self.topology_metrics.0)
    }

    pub fn parameters(&self) -> &[ParamSpec] {
        &self.graph.parameters
    }

    /// Total passive area in mm^2 at `x`.
    pub fn area_mm2(&self, x: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::vector(x.to_vec()));
        let a = self.layout_term(&mut tape, xv)?;
        Ok(tape.value(a).data()[0])
    }

    /// Layout loss: summed passive area over 1 mm^2.
    fn layout_term(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut total: Option<Var> = None;
        for p in &self.passives {
            let value = match p.param {
                Some(i) => {
                    let xi = tape.index_select(x, &[i])?;
                    tape.scale(xi, p.coef)
                }
                None => tape.constant(Tensor::vector(alloc::vec![p.coef])),
            };
            let a = area_on_tape(tape, p.kind, value)?;
            total = Some(match total {
                Some(t) => tape.add(t, a)?,
                None => a,
            });
        }
        let total = match total {
            Some(t) => t,
            None => tape.constant(Tensor::vector(alloc::vec![0.0])),
        };
        Ok(tape.scale(total, 1.0 / AREA_NORMALIZER_UM2))
    }
}

/// Loss pieces at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub perf: f64,
    pub layout: f64,
    pub gate: f64,
}

struct Objective<'a, S: Surrogate + ?Sized> {
    problem: &'a DesignProblem,
    surrogate: &'a S,
    cfg: &'a DesignConfig,
    target: Tensor,
    weights: Tensor,
}

impl<'a, S: Surrogate + ?Sized> Objective<'a, S> {
    fn new(problem: &'a DesignProblem, surrogate: &'a S, cfg: &'a DesignConfig) -> Result<Self> {
        let mask = problem.mask();
        let stats = surrogate.target_stats();
        let mut z = [0.0; METRIC_COUNT];
        for m in mask.metrics() {
            z[m.index()] = stats.normalize_value(m, problem.target.values[m.index()])?;
        }
        Ok(Objective {
            problem,
            surrogate,
            cfg,
            target: Tensor::matrix(1, METRIC_COUNT, z.to_vec()),
            weights: Tensor::matrix(1, METRIC_COUNT, mask.weights().to_vec()),
        })
    }

    /// Records the loss on `tape` as a function of `x` and returns it with
    /// the normalized predictions.
    fn build(&self, tape: &mut Tape, x: Var) -> Result<(Var, Var, LossParts)> {
        let pred = self
            .surrogate
            .predict_on_tape(tape, &self.problem.graph, &self.problem.plan, x)?;
        let perf = crate::forward::masked_mse(tape, pred, &self.target, &self.weights)?;
        let layout = self.problem.layout_term(tape, x)?;
        // g = 1 - sigmoid(gamma (perf - tau))
        let shifted = tape.scale(perf, self.cfg.gamma);
        let shifted = tape.add_scalar(shifted, -self.cfg.gamma * self.cfg.tau);
        let s = tape.sigmoid(shifted);
        let neg = tape.scale(s, -1.0);
        let g = tape.add_scalar(neg, 1.0);
        let lg = tape.mul(layout, g)?;
        let weighted = tape.scale(lg, self.cfg.lambda_area);
        let total = tape.add(perf, weighted)?;
        let parts = LossParts {
            total: tape.value(total).data()[0],
            perf: tape.value(perf).data()[0],
            layout: tape.value(layout).data()[0],
            gate: tape.value(g).data()[0],
        };
        Ok((total, pred, parts))
    }
}

/// Loss and its gradient with respect to the SI parameter values.
pub fn loss_and_gradient<S: Surrogate + ?Sized>(
    problem: &DesignProblem,
    surrogate: &S,
    cfg: &DesignConfig,
    x: &[f64],
) -> Result<(LossParts, Vec<f64>)> {
    let obj = Objective::new(problem, surrogate, cfg)?;
    let mut tape = Tape::new();
    let xv = tape.leaf(Tensor::vector(x.to_vec()));
    let (total, _, parts) = obj.build(&mut tape, xv)?;
    let mut g = tape.backward(total)?;
    let grad = g.take(xv).map(Tensor::into_data).unwrap_or_else(|| alloc::vec![0.0; x.len()]);
    Ok((parts, grad))
}

/// Log-uniform draw inside each parameter's bounds (uniform when the lower
/// bound is not positive). Degenerate bounds return the bound.
pub fn init_params(params: &[ParamSpec], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    params
        .iter()
        .map(|p| {
            let r: f64 = rng.gen();
            if p.upper <= p.lower {
                p.lower
            } else if p.lower > 0.0 {
                let (a, b) = (libm::log(p.lower), libm::log(p.upper));
                libm::exp(a + r * (b - a)).clamp(p.lower, p.upper)
            } else {
                p.lower + r * (p.upper - p.lower)
            }
        })
        .collect()
}

/// State passed to an optimization observer after every step.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo<'a> {
    pub restart: usize,
    pub step: usize,
    pub x: &'a [f64],
    pub loss: LossParts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub family: String,
    /// Oracle metrics at the design point.
    pub achieved: BTreeMap<String, f64>,
    pub per_metric_error: BTreeMap<String, f64>,
    pub mean_relative_error: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub topology_id: usize,
    pub params: BTreeMap<String, f64>,
    /// Parameter values in declaration order.
    pub x: Vec<f64>,
    /// Raw-unit predictions for the matched metrics.
    pub predicted: BTreeMap<String, f64>,
    pub predicted_error: f64,
    pub area_mm2: f64,
    pub area_budget_mm2: f64,
    pub loss: LossParts,
    pub converged: bool,
    pub restarts_used: usize,
    pub steps: usize,
    /// Total loss after each step of the returned run.
    pub trace: Vec<f64>,
    pub oracle: Option<OracleCheck>,
}

impl DesignResult {
    /// Oracle success with the area budget respected; `None` without an
    /// oracle check.
    pub fn success(&self) -> Option<bool> {
        self.oracle
            .as_ref()
            .map(|o| o.success && self.area_mm2 < self.area_budget_mm2)
    }
}

struct Run {
    x: Vec<f64>,
    loss: LossParts,
    pred: [f64; METRIC_COUNT],
    trace: Vec<f64>,
    steps: usize,
}

pub fn optimize<S: Surrogate + ?Sized>(problem: &DesignProblem, surrogate: &S, cfg: &DesignConfig, seed: u64) -> Result<DesignResult> {
    optimize_with_observer(problem, surrogate, cfg, seed, &mut |_| {})
}

/// Adam in box coordinates `u = (x - lo) / (hi - lo)`, clipped to [0, 1]
/// after every step. Runs that do not converge are restarted from a fresh
/// draw with a larger step size. The best run by loss, then area, wins.
pub fn optimize_with_observer<S: Surrogate + ?Sized>(
    problem: &DesignProblem,
    surrogate: &S,
    cfg: &DesignConfig,
    seed: u64,
    observer: &mut dyn FnMut(&StepInfo),
) -> Result<DesignResult> {
    let obj = Objective::new(problem, surrogate, cfg)?;
    let params = problem.parameters();
    let lo: Vec<f64> = params.iter().map(|p| p.lower).collect();
    let span: Vec<f64> = params.iter().map(|p| p.upper - p.lower).collect();
    let to_x = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(&lo)
            .zip(params)
            .map(|((&ui, &l), p)| p.clip(l + ui * (p.upper - p.lower)))
            .collect()
    };

    let mut best: Option<(Run, usize, f64)> = None;
    let mut restarts_used = 0;
    let mut lr = cfg.lr;
    for restart in 0..=cfg.restarts {
        restarts_used = restart;
        let x0 = init_params(params, seed.wrapping_mul(0x9E37_79B9).wrapping_add(restart as u64));
        let u0: Vec<f64> = x0
            .iter()
            .zip(&lo)
            .zip(&span)
            .map(|((&x, &l), &s)| if s > 0.0 { ((x - l) / s).clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        let run = descend(&obj, &to_x, u0, lr, restart, cfg, observer)?;
        let area = problem.area_mm2(&run.x)?;
        let err = predicted_error(surrogate.target_stats(), &run.pred, problem);
        let converged = err < cfg.converge_error && area < problem.area_budget_mm2;
        let better = match &best {
            None => true,
            Some((b, _, barea)) => run.loss.total < b.loss.total || (run.loss.total == b.loss.total && area < *barea),
        };
        if better {
            best = Some((run, restart, area));
        }
        if converged {
            break;
        }
        lr = (lr * cfg.lr_growth).min(cfg.lr_ceiling);
    }
    let (run, _, area) = best.expect("at least one run");
    let stats = surrogate.target_stats();
    let predicted_error = predicted_error(stats, &run.pred, problem);
    let raw = stats.denormalize(&run.pred);
    Ok(DesignResult {
        topology_id: problem.topology_id,
        params: params.iter().map(|p| p.name.clone()).zip(run.x.iter().copied()).collect(),
        x: run.x,
        predicted: problem
            .mask()
            .metrics()
            .map(|m| (String::from(m.name()), raw[m.index()]))
            .collect(),
        predicted_error,
        area_mm2: area,
        area_budget_mm2: problem.area_budget_mm2,
        loss: run.loss,
        converged: predicted_error < cfg.converge_error && area < problem.area_budget_mm2,
        restarts_used,
        steps: run.steps,
        trace: run.trace,
        oracle: None,
    })
}

fn predicted_error(stats: &NormStats, pred: &[f64; METRIC_COUNT], problem: &DesignProblem) -> f64 {
    let raw = stats.denormalize(pred);
    mean_relative_error(&raw, &problem.target.values, problem.mask()).unwrap_or(f64::INFINITY)
}

fn descend<S: Surrogate + ?Sized>(
    obj: &Objective<'_, S>,
    to_x: &dyn Fn(&[f64]) -> Vec<f64>,
    mut u: Vec<f64>,
    lr: f64,
    restart: usize,
    cfg: &DesignConfig,
    observer: &mut dyn FnMut(&StepInfo),
) -> Result<Run> {
    let mut u_t = Tensor::vector(u.clone());
    let mut adam = AdamState::new([&u_t], lr);
    let mut sched = PlateauScheduler::new(cfg.plateau_factor, cfg.plateau_patience, lr * 1e-4);
    let mut trace = Vec::new();
    let mut best: Option<Run> = None;
    let mut last_improvement = 0;
    let mut x = to_x(&u);
    for step in 0..cfg.max_steps {
        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::vector(x.clone()));
        let (total, pred, parts) = obj.build(&mut tape, xv)?;
        if !parts.total.is_finite() {
            return Err(Error::Diverged(format!("design loss became {} at step {step}", parts.total)));
        }
        trace.push(parts.total);
        let improved = match &best {
            None => true,
            Some(b) => parts.total < b.loss.total * (1.0 - cfg.min_improvement),
        };
        if improved {
            last_improvement = step;
        }
        if best.as_ref().is_none_or(|b| parts.total < b.loss.total) {
            let mut p = [0.0; METRIC_COUNT];
            p.copy_from_slice(tape.value(pred).data());
            best = Some(Run { x: x.clone(), loss: parts, pred: p, trace: Vec::new(), steps: 0 });
        }
        if step >= last_improvement + cfg.window {
            break;
        }
        // Chain rule through x = lo + u * span; clipped coordinates get
        // the same gradient as the interior, clipping undoes the overshoot.
        let gx = tape.backward(total)?.take(xv).map(Tensor::into_data).unwrap_or_default();
        let params = obj.problem.parameters();
        let gu: Vec<f64> = gx.iter().zip(params).map(|(g, p)| g * (p.upper - p.lower)).collect();
        adam.step(&mut [&mut u_t], &[&Tensor::vector(gu)])?;
        for v in u_t.data_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        u.copy_from_slice(u_t.data());
        x = to_x(&u);
        observer(&StepInfo { restart, step, x: &x, loss: parts });
        adam.lr = sched.step(parts.total, adam.lr);
    }
    let mut run = best.expect("at least one step");
    run.steps = trace.len();
    run.trace = trace;
    Ok(run)
}

/// Scores a design with the closed-form oracle of its topology.
pub fn validate_with_oracle(result: &DesignResult, target: &PerformanceVector, cfg: &DesignConfig) -> Result<OracleCheck> {
    let family = OracleFamily::from_class_id(result.topology_id)
        .ok_or_else(|| Error::invalid(format!("no oracle for topology {}", result.topology_id)))?;
    let achieved = family.eval(&result.x)?;
    oracle_check(family, &achieved, target, cfg)
}

fn oracle_check(family: OracleFamily, achieved: &PerformanceVector, target: &PerformanceVector, cfg: &DesignConfig) -> Result<OracleCheck> {
    let mask = MetricMask(target.mask.0 & achieved.mask.0);
    if mask.is_empty() {
        return Err(Error::invalid("oracle and target share no metric"));
    }
    let per: Vec<(Metric, f64)> = mask
        .metrics()
        .map(|m| (m, relative_error(achieved.values[m.index()], target.values[m.index()])))
        .collect();
    let mean = per.iter().map(|p| p.1).sum::<f64>() / per.len() as f64;
    Ok(OracleCheck {
        family: String::from(family.code()),
        achieved: achieved.present().map(|(m, v)| (String::from(m.name()), v)).collect(),
        per_metric_error: per.iter().map(|(m, e)| (String::from(m.name()), *e)).collect(),
        mean_relative_error: mean,
        success: mean < cfg.success_error,
    })
}

/// Topology choice (classifier or forced), optimization, and oracle check
/// when the chosen topology has one.
pub fn design_end_to_end(
    target: &PerformanceVector,
    classifier: Option<&ClassifierModel>,
    forward: &ForwardModel,
    topology: Option<usize>,
    cfg: &DesignConfig,
    seed: u64,
) -> Result<DesignResult> {
    if target.mask.is_empty() {
        return Err(Error::invalid("target has no metrics"));
    }
    let id = match (topology, classifier) {
        (Some(id), _) => id,
        (None, Some(c)) => c.predict(target)?.0,
        (None, None) => return Err(Error::invalid("no topology given and no classifier to choose one")),
    };
    let entry = forward.entry_by_id(id)?;
    let problem = DesignProblem::new(*target, entry)?;
    let mut result = optimize(&problem, forward, cfg, seed)?;
    if OracleFamily::from_class_id(id).is_some() {
        result.oracle = Some(validate_with_oracle(&result, target, cfg)?);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_graph, parse_netlist};
    use alloc::vec;
    use proptest::prelude::*;

    /// Predicts metric slot `i` as `x[i]` for the first parameters.
    struct Identity {
        stats: NormStats,
    }

    impl Identity {
        fn new() -> Self {
            Identity {
                stats: NormStats {
                    mean: [0.0; METRIC_COUNT],
                    std: [1.0; METRIC_COUNT],
                    present: MetricMask(u16::MAX),
                },
            }
        }
    }

    impl Surrogate for Identity {
        fn target_stats(&self) -> &NormStats {
            &self.stats
        }

        fn predict_on_tape(&self, tape: &mut Tape, graph: &CircuitGraph, _: &FeaturePlan, x: Var) -> Result<Var> {
            let n = graph.parameters.len();
            let pad = tape.constant(Tensor::vector(vec![0.0; METRIC_COUNT - n]));
            let xr = tape.reshape(x, &[1, n])?;
            let pr = tape.reshape(pad, &[1, METRIC_COUNT - n])?;
            tape.concat_cols(&[xr, pr])
        }
    }

    fn stub_problem(target: &[(Metric, f64)], with_cap: bool) -> DesignProblem {
        let mut text = String::from(".param A 1 10 1\n.param B 1 10 1\nV1 vsource a 0 V=A\nV2 vsource b 0 V=B\n");
        if with_cap {
            text.push_str(".param C 100f 900f 100f\n.param D 1 10 1\nC1 capacitor a b C=C\nV3 vsource c 0 V=D\n");
        }
        let g = build_graph(&parse_netlist(&text).unwrap(), "stub").unwrap();
        let mask = MetricMask::from_metrics(&[Metric::Dcp, Metric::VGain]);
        DesignProblem::from_graph(PerformanceVector::from_pairs(target), g, mask, 1.0).unwrap()
    }

    #[test]
    fn gate_values() {
        assert_eq!(gate(0.05, GATE_TAU, GATE_GAMMA), 0.5);
        assert!((gate(0.0, GATE_TAU, GATE_GAMMA) - 0.92414).abs() < 1e-5);
        assert!((gate(0.15, GATE_TAU, GATE_GAMMA) - 0.00669).abs() < 1e-5);
        let cfg = DesignConfig::default();
        assert!((total_loss(0.05, 1.0, &cfg) - 0.06).abs() < 1e-15);
        assert_eq!(total_loss(0.3, 0.0, &cfg), 0.3);
        let no_area = DesignConfig { lambda_area: 0.0, ..cfg };
        assert_eq!(total_loss(0.01, 5.0, &no_area), 0.01);
    }

    #[test]
    fn init_is_log_uniform_and_seeded() {
        let p = |lo: f64, hi: f64| ParamSpec { name: "C".into(), lower: lo, upper: hi, scale: lo };
        let specs = [p(100e-15, 600e-15), p(3.0, 3.0)];
        assert_eq!(init_params(&specs, 4), init_params(&specs, 4));
        assert_eq!(init_params(&specs, 4)[1], 3.0);
        let mut below = 0;
        for s in 0..2000 {
            let x = init_params(&specs, s)[0];
            assert!(specs[0].contains(x));
            if x < libm::sqrt(100e-15 * 600e-15) {
                below += 1;
            }
        }
        // Median of log-uniform is the geometric mean (244.9 fF).
        assert!((below as f64 / 2000.0 - 0.5).abs() < 0.04, "{below}");
    }

    #[test]
    fn identity_stub_reaches_target() {
        let prob = stub_problem(&[(Metric::Dcp, 3.0), (Metric::VGain, 7.0)], false);
        let cfg = DesignConfig::default();
        let r = optimize(&prob, &Identity::new(), &cfg, 1).unwrap();
        assert!((r.x[0] - 3.0).abs() < 1e-3 && (r.x[1] - 7.0).abs() < 1e-3, "{:?}", r.x);
        assert!(r.steps < 5000);
        assert!(r.converged);
        assert_eq!(r.area_mm2, 0.0);
    }

    #[test]
    fn unreachable_target_is_best_effort() {
        let prob = stub_problem(&[(Metric::Dcp, 30.0), (Metric::VGain, 7.0)], false);
        let r = optimize(&prob, &Identity::new(), &DesignConfig::default(), 1).unwrap();
        assert!(!r.converged);
        assert_eq!(r.restarts_used, 3);
        assert!((r.x[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn iterates_stay_in_bounds_and_trace_is_sane() {
        let prob = stub_problem(&[(Metric::Dcp, 0.5), (Metric::VGain, 12.0)], true);
        let mut steps = 0;
        let r = optimize_with_observer(&prob, &Identity::new(), &DesignConfig::default(), 3, &mut |s| {
            steps += 1;
            for (v, p) in s.x.iter().zip(prob.parameters()) {
                assert!(p.contains(*v), "{} = {v}", p.name);
            }
        })
        .unwrap();
        assert!(steps > 0);
        let mut best = f64::INFINITY;
        for &l in &r.trace {
            best = best.min(l);
        }
        assert_eq!(best, r.loss.total);
        let again = optimize(&prob, &Identity::new(), &DesignConfig::default(), 3).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn empty_mask_is_rejected() {
        let g = build_graph(&parse_netlist(".param A 1 10 1\nV1 vsource a 0 V=A").unwrap(), "s").unwrap();
        let t = PerformanceVector::from_pairs(&[(Metric::OscF, 1e9)]);
        assert!(DesignProblem::from_graph(t, g, MetricMask::from_metrics(&[Metric::Dcp]), 1.0).is_err());
    }

    #[test]
    fn oracle_check_arithmetic() {
        let cfg = DesignConfig::default();
        let t = PerformanceVector::from_pairs(&[(Metric::Dcp, 1.0), (Metric::VGain, 10.0), (Metric::Bw, 1e9)]);
        let exact = oracle_check(OracleFamily::RcAmp, &t, &t, &cfg).unwrap();
        assert_eq!(exact.mean_relative_error, 0.0);
        assert!(exact.success);
        let mut off = t;
        off.values[0] = 1.3;
        let one = oracle_check(OracleFamily::RcAmp, &off, &t, &cfg).unwrap();
        assert!((one.mean_relative_error - 0.1).abs() < 1e-12 && one.success);
        let mut all = t;
        for v in &mut all.values {
            *v *= 1.25;
        }
        assert!(!oracle_check(OracleFamily::RcAmp, &all, &t, &cfg).unwrap().success);
    }

    #[test]
    fn surrogate_loss_gradient_matches_finite_differences() {
        let family = OracleFamily::RcAmp;
        let mut model = ForwardModel::new(crate::forward::ForwardConfig::default(), 11);
        model.target_stats = NormStats::fit([family.eval(&[5e-6, 800.0, 1e-13]).unwrap(), family.eval(&[15e-6, 1500.0, 4e-13]).unwrap()].iter());
        let target = family.eval(&[10e-6, 1000.0, 2e-13]).unwrap();
        let prob = DesignProblem::new(target, &family.entry()).unwrap();
        let cfg = DesignConfig::default();
        let x = [8e-6, 1200.0, 3e-13];
        let (_, grad) = loss_and_gradient(&prob, &model, &cfg, &x).unwrap();
        for i in 0..3 {
            let h = 1e-6 * x[i];
            let f = |d: f64| {
                let mut y = x;
                y[i] += d;
                loss_and_gradient(&prob, &model, &cfg, &y).unwrap().0.total
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / fd.abs().max(1e-300);
            assert!(rel < 1e-4, "param {i}: {} vs {fd}", grad[i]);
        }
    }

    proptest! {
        #[test]
        fn gate_is_bounded_and_decreasing(a in -1e3f64..1e3, b in -1e3f64..1e3) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (ga, gb) = (gate(lo, GATE_TAU, GATE_GAMMA), gate(hi, GATE_TAU, GATE_GAMMA));
            prop_assert!((0.0..=1.0).contains(&ga) && (0.0..=1.0).contains(&gb));
            prop_assert!(ga >= gb);
            if (hi - lo) > 1e-3 && (lo - GATE_TAU).abs() < 0.5 {
                prop_assert!(ga > gb);
            }
        }

        #[test]
        fn gate_is_strictly_inside_near_tau(l in -0.5f64..0.6) {
            let g = gate(l, GATE_TAU, GATE_GAMMA);
            prop_assert!(g > 0.0 && g < 1.0);
        }
    }
}

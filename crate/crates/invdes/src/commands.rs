//! One function per subcommand. Each returns the JSON document printed on
//! stdout; artifacts (datasets, models, traces) go to the paths in
//! [`Options`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use invdes_core::circuit::{bind_parameters, build_graph, export_dot, parse_netlist, CircuitGraph, TopologyEntry};
use invdes_core::classifier::{self, train_classifier, ClassifierConfig};
use invdes_core::dataset::{stratified_split, Record, Split};
use invdes_core::design::{optimize_with_observer, validate_with_oracle, DesignConfig, DesignProblem};
use invdes_core::forward::{self, finetune_head, train_forward, ForwardModel, GraphSample, TrainConfig};
use invdes_core::layout::drc_report;
use invdes_core::oracle::{generate_dataset, OracleFamily};
use invdes_core::PerformanceVector;
use log::info;
use serde_json::{json, Value};

use crate::registry::Registry;
use crate::{io, store, Error, Result};

/// Default samples per family for `gen-data`.
pub const DEFAULT_SAMPLES: usize = 2000;
pub const DEFAULT_SEED: u64 = 42;
/// Train/validation/test fractions used by every training command.
pub const SPLIT: [f64; 3] = [0.8, 0.1, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenData,
    TrainClassifier,
    TrainGnn,
    Finetune,
    Predict,
    Design,
    LayoutReport,
    ExportGraph,
    Eval,
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub topology: Option<String>,
    pub target: Option<PathBuf>,
    pub netlist: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub n: Option<usize>,
}

impl Options {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn registry(&self) -> Result<Registry> {
        Registry::load(&Registry::resolve(self.registry.as_deref()))
    }

    fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            max_epochs: self.epochs.unwrap_or(d.max_epochs),
            batch_size: self.batch.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            seed: self.seed(),
            ..d
        }
    }

    fn classifier_config(&self) -> ClassifierConfig {
        let d = ClassifierConfig::default();
        ClassifierConfig {
            max_epochs: self.epochs.unwrap_or(d.max_epochs),
            batch_size: self.batch.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            seed: self.seed(),
            ..d
        }
    }

    fn design_config(&self) -> DesignConfig {
        let d = DesignConfig::default();
        DesignConfig {
            lr: self.lr.unwrap_or(d.lr),
            ..d
        }
    }
}

fn require<'a, T>(v: &'a Option<T>, flag: &str, cmd: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Usage(format!("{cmd} requires {flag}")))
}

/// Checks that every path flag points at something that exists.
fn check_inputs(opts: &Options) -> Result<()> {
    let inputs = [
        ("--data", &opts.data),
        ("--target", &opts.target),
        ("--netlist", &opts.netlist),
        ("--params", &opts.params),
        ("--registry", &opts.registry),
    ];
    for (flag, p) in inputs {
        if let Some(p) = p {
            if !p.exists() {
                return Err(Error::Usage(format!("{flag} {}: no such file or directory", p.display())));
            }
        }
    }
    Ok(())
}

pub fn run(cmd: Command, opts: &Options) -> Result<Value> {
    check_inputs(opts)?;
    match cmd {
        Command::GenData => gen_data(opts),
        Command::TrainClassifier => train_classifier_cmd(opts),
        Command::TrainGnn => train_gnn(opts),
        Command::Finetune => finetune(opts),
        Command::Predict => predict(opts),
        Command::Design => design(opts),
        Command::LayoutReport => layout_report(opts),
        Command::ExportGraph => export_graph(opts),
        Command::Eval => eval(opts),
    }
}

/// Oracle families named by a comma-separated `--topology`, or all three.
pub fn families(spec: Option<&str>) -> Result<Vec<OracleFamily>> {
    let Some(spec) = spec else {
        return Ok(OracleFamily::ALL.to_vec());
    };
    spec.split(',')
        .map(|s| {
            let s = s.trim();
            OracleFamily::from_code(s)
                .or_else(|| s.parse().ok().and_then(OracleFamily::from_class_id))
                .ok_or_else(|| Error::Usage(format!("unknown oracle family `{s}`")))
        })
        .collect()
}

/// Dataset records for `gen-data`. Without `--out` the binary streams them
/// to stdout as JSON lines.
pub fn gen_data_records(opts: &Options) -> Result<Vec<Record>> {
    let fams = families(opts.topology.as_deref())?;
    let n = opts.n.unwrap_or(DEFAULT_SAMPLES);
    Ok(generate_dataset(&fams, n, opts.seed())?)
}

fn gen_data(opts: &Options) -> Result<Value> {
    let records = gen_data_records(opts)?;
    let out = require(&opts.out, "--out", "gen-data (without it, records stream to stdout)")?;
    io::write_records_file(out, &records)?;
    info!("wrote {} records to {}", records.len(), out.display());
    let mut per_family = BTreeMap::new();
    for r in &records {
        *per_family.entry(r.topology_id).or_insert(0usize) += 1;
    }
    Ok(json!({
        "records": records.len(),
        "per_topology": per_family,
        "seed": opts.seed(),
        "path": out,
    }))
}

fn load_records(opts: &Options, cmd: &str) -> Result<Vec<Record>> {
    let path = require(&opts.data, "--data", cmd)?;
    let records = io::read_records(path)?;
    if records.is_empty() {
        return Err(Error::Invalid(format!("{} holds no records", path.display())));
    }
    info!("read {} records from {}", records.len(), path.display());
    Ok(records)
}

fn split_records(records: &[Record], seed: u64) -> Result<Split> {
    let labels: Vec<usize> = records.iter().map(|r| r.topology_id).collect();
    Ok(stratified_split(&labels, SPLIT, seed)?)
}

fn labeled(records: &[Record], idx: &[usize]) -> Result<Vec<(PerformanceVector, usize)>> {
    idx.iter()
        .map(|&i| Ok((records[i].performance()?, records[i].topology_id)))
        .collect()
}

fn train_classifier_cmd(opts: &Options) -> Result<Value> {
    let records = load_records(opts, "train-classifier")?;
    let out = require(&opts.out, "--out", "train-classifier")?;
    let split = split_records(&records, opts.seed())?;
    let (tr, va, te) = (
        labeled(&records, &split.train)?,
        labeled(&records, &split.val)?,
        labeled(&records, &split.test)?,
    );
    let cfg = opts.classifier_config();
    let t = Instant::now();
    let (model, history) = train_classifier(&tr, &va, &cfg)?;
    let elapsed = t.elapsed().as_secs_f64();
    info!("classifier trained in {elapsed:.1}s, best epoch {}", history.best_epoch);
    let report = classifier::evaluate(&model, &te)?;
    store::save_classifier(out, &model)?;
    Ok(json!({
        "model": out,
        "split": {"train": tr.len(), "val": va.len(), "test": te.len()},
        "epochs": history.val_loss.len(),
        "best_epoch": history.best_epoch,
        "elapsed_s": elapsed,
        "test": report,
    }))
}

/// Graphs for the library, keyed by class id.
fn graphs(library: &[TopologyEntry]) -> Result<BTreeMap<usize, CircuitGraph>> {
    library
        .iter()
        .map(|e| Ok((e.spec.id, e.graph()?)))
        .collect()
}

fn samples(records: &[Record], idx: &[usize], graphs: &BTreeMap<usize, CircuitGraph>) -> Result<Vec<GraphSample>> {
    idx.iter()
        .map(|&i| {
            let r = &records[i];
            let g = graphs
                .get(&r.topology_id)
                .ok_or_else(|| Error::Core(invdes_core::Error::UnknownTopology(r.topology_id.to_string())))?;
            Ok(GraphSample::from_record(r, g)?)
        })
        .collect()
}

fn train_gnn(opts: &Options) -> Result<Value> {
    let records = load_records(opts, "train-gnn")?;
    let out = require(&opts.out, "--out", "train-gnn")?;
    let library = opts.registry()?.library();
    let graphs = graphs(&library)?;
    let split = split_records(&records, opts.seed())?;
    let tr = samples(&records, &split.train, &graphs)?;
    let va = samples(&records, &split.val, &graphs)?;
    let te = samples(&records, &split.test, &graphs)?;
    let cfg = opts.train_config();
    let t = Instant::now();
    let (model, history) = train_forward(&library, &tr, &va, &cfg)?;
    let elapsed = t.elapsed().as_secs_f64();
    info!("forward model trained in {elapsed:.1}s, best epoch {}", history.best_epoch);
    let report = forward::evaluate(&model, &te)?;
    store::save_forward(out, &model)?;
    Ok(json!({
        "model": out,
        "split": {"train": tr.len(), "val": va.len(), "test": te.len()},
        "epochs": history.val_loss.len(),
        "best_epoch": history.best_epoch,
        "best_val_loss": history.best_val_loss,
        "elapsed_s": elapsed,
        "trunk_sha256": store::trunk_hash(&model),
        "test": report,
    }))
}

fn finetune(opts: &Options) -> Result<Value> {
    let model_dir = require(&opts.model, "--model", "finetune")?;
    let records = load_records(opts, "finetune")?;
    let out = require(&opts.out, "--out", "finetune")?;
    let mut model = store::load_forward(model_dir)?;
    let library = opts.registry()?.library();
    let ids: Vec<usize> = records.iter().map(|r| r.topology_id).collect();
    let extra: Vec<TopologyEntry> = library
        .iter()
        .filter(|e| ids.contains(&e.spec.id))
        .cloned()
        .collect();
    let mut all = model.library.clone();
    all.extend(extra.iter().cloned());
    let graphs = graphs(&all)?;
    let split = split_records(&records, opts.seed())?;
    let tr = samples(&records, &split.train, &graphs)?;
    let va = samples(&records, &split.val, &graphs)?;
    let te = samples(&records, &split.test, &graphs)?;
    for e in &extra {
        if !model.library.iter().any(|k| k.spec.id == e.spec.id) {
            model.library.push(e.clone());
        }
    }
    let zero_shot = forward::evaluate(&model, &te)?;
    let before = store::trunk_hash(&model);
    let history = finetune_head(&mut model, &extra, &tr, &va, &opts.train_config())?;
    let after = store::trunk_hash(&model);
    let tuned = forward::evaluate(&model, &te)?;
    info!(
        "head finetune: mean relative error {:.4} -> {:.4}",
        zero_shot.mean_relative_error, tuned.mean_relative_error
    );
    store::save_forward(out, &model)?;
    Ok(json!({
        "model": out,
        "epochs": history.val_loss.len(),
        "zero_shot": zero_shot,
        "finetuned": tuned,
        "trunk_sha256_before": before,
        "trunk_sha256_after": after,
        "trunk_unchanged": before == after,
    }))
}

/// Entry named by `--topology` in the model's library, falling back to
/// the registry for codes the model knows by id only.
fn model_entry<'a>(model: &'a ForwardModel, key: &str, opts: &Options) -> Result<&'a TopologyEntry> {
    if let Ok(e) = model.entry(key) {
        return Ok(e);
    }
    let found = opts
        .registry()?
        .find(key)
        .ok_or_else(|| Error::Usage(format!("unknown topology `{key}`")))?;
    Ok(model.entry_by_id(found.spec.id)?)
}

fn predict(opts: &Options) -> Result<Value> {
    let dir = require(&opts.model, "--model", "predict")?;
    if let Some(params) = &opts.params {
        let key = require(&opts.topology, "--topology", "predict")?;
        let model = store::load_forward(dir)?;
        let entry = model_entry(&model, key, opts)?;
        let graph = entry.graph()?;
        let values = io::read_params(params)?;
        let bound = bind_parameters(&graph, &values)?;
        let x: Vec<f64> = graph.parameters.iter().map(|p| bound.params()[&p.name]).collect();
        let raw = model.predict_raw(&graph, &x)?;
        let predicted: BTreeMap<&str, f64> = entry
            .spec
            .metrics
            .iter()
            .map(|m| (m.name(), raw[m.index()]))
            .collect();
        return Ok(json!({
            "topology": {"id": entry.spec.id, "code": entry.spec.code},
            "predicted": predicted,
        }));
    }
    if let Some(target) = &opts.target {
        let clf = store::load_classifier(dir)?;
        let t = io::read_target(target)?;
        let (id, probs) = clf.predict(&t)?;
        let code = opts.registry()?.find(&id.to_string()).map(|e| e.spec.code);
        return Ok(json!({"topology": {"id": id, "code": code}, "probabilities": probs}));
    }
    Err(Error::Usage("predict requires --params with --topology, or --target".into()))
}

fn design(opts: &Options) -> Result<Value> {
    let dir = require(&opts.model, "--model", "design")?;
    let target_path = require(&opts.target, "--target", "design")?;
    let target = io::read_target(target_path)?;
    if target.mask.is_empty() {
        return Err(Error::Invalid("target has no metrics".into()));
    }
    let model = store::load_forward(dir)?;
    let key = opts.topology.as_deref().unwrap_or("auto");
    let (entry, probs) = if key == "auto" {
        let clf = store::load_classifier(dir)?;
        let (id, p) = clf.predict(&target)?;
        (model.entry_by_id(id)?, Some(p))
    } else {
        (model_entry(&model, key, opts)?, None)
    };
    let cfg = opts.design_config();
    let problem = DesignProblem::new(target, entry)?;
    let mut trace = Vec::new();
    let t = Instant::now();
    let mut result = optimize_with_observer(&problem, &model, &cfg, opts.seed(), &mut |s| {
        if opts.trace.is_some() {
            trace.push(json!({"restart": s.restart, "step": s.step, "loss": s.loss, "x": s.x}));
        }
    })?;
    let elapsed = t.elapsed().as_secs_f64();
    if OracleFamily::from_class_id(entry.spec.id).is_some() {
        result.oracle = Some(validate_with_oracle(&result, &target, &cfg)?);
    }
    if let Some(path) = &opts.trace {
        write_lines(path, &trace)?;
    }
    info!(
        "design on {} finished in {elapsed:.2}s after {} steps",
        entry.spec.code, result.steps
    );
    let success = result.success();
    let doc = json!({
        "topology": {"id": entry.spec.id, "code": entry.spec.code},
        "classifier_probabilities": probs,
        "elapsed_s": elapsed,
        "success": success,
        "result": result,
    });
    if let Some(out) = &opts.out {
        io::write_json(out, &doc)?;
    }
    Ok(doc)
}

fn write_lines(path: &Path, lines: &[Value]) -> Result<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Graph from `--netlist`, or from the registry entry named by `--topology`.
fn graph_from_flags(opts: &Options, cmd: &str) -> Result<CircuitGraph> {
    if let Some(path) = &opts.netlist {
        let netlist = parse_netlist(&io::read_text(path)?)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(build_graph(&netlist, &name)?);
    }
    if let Some(key) = &opts.topology {
        let entry = opts
            .registry()?
            .find(key)
            .ok_or_else(|| Error::Usage(format!("unknown topology `{key}`")))?;
        return Ok(entry.graph()?);
    }
    Err(Error::Usage(format!("{cmd} requires --netlist or --topology")))
}

fn layout_report(opts: &Options) -> Result<Value> {
    let graph = graph_from_flags(opts, "layout-report")?;
    let params = require(&opts.params, "--params", "layout-report")?;
    let bound = bind_parameters(&graph, &io::read_params(params)?)?;
    let report = drc_report(&bound)?;
    let doc = serde_json::to_value(&report).map_err(|e| Error::Invalid(e.to_string()))?;
    if let Some(out) = &opts.out {
        io::write_json(out, &doc)?;
    }
    Ok(doc)
}

fn export_graph(opts: &Options) -> Result<Value> {
    let graph = graph_from_flags(opts, "export-graph")?;
    let dot = export_dot(&graph);
    if let Some(out) = &opts.out {
        if out.extension().is_some_and(|x| x == "dot") {
            std::fs::write(out, &dot).map_err(|source| Error::Io {
                path: out.clone(),
                source,
            })?;
        } else {
            io::write_json(out, &graph)?;
        }
    }
    Ok(json!({
        "nodes": graph.nodes.len(),
        "edges": graph.edges.len(),
        "graph": graph,
        "dot": dot,
    }))
}

fn eval(opts: &Options) -> Result<Value> {
    let dir = require(&opts.model, "--model", "eval")?;
    let records = load_records(opts, "eval")?;
    let mut doc = serde_json::Map::new();
    if store::has_classifier(dir) {
        let clf = store::load_classifier(dir)?;
        let all: Vec<usize> = (0..records.len()).collect();
        let report = classifier::evaluate(&clf, &labeled(&records, &all)?)?;
        doc.insert("classifier".into(), json!(report));
    }
    if store::has_forward(dir) {
        let model = store::load_forward(dir)?;
        let graphs = graphs(&model.library)?;
        let all: Vec<usize> = (0..records.len()).collect();
        let report = forward::evaluate(&model, &samples(&records, &all, &graphs)?)?;
        doc.insert("forward".into(), json!(report));
    }
    if doc.is_empty() {
        return Err(Error::Invalid(format!("{} holds no model", dir.display())));
    }
    Ok(Value::Object(doc))
}

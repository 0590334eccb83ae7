use alloc::vec::Vec;

use crate::circuit::{CircuitGraph, EdgeType};
use crate::diffnum::{Tape, Tensor, Var};
use crate::units::Quantity;
use crate::{Error, Result};

/// Divides each schema attribute of `etype` by its unit scale.
pub fn rescale_inputs(etype: EdgeType, attrs: &[f64]) -> Result<Vec<f64>> {
    let schema = etype.schema();
    if attrs.len() != schema.len() {
        return Err(Error::shape(
            "rescale_inputs",
            alloc::format!("{etype} has {} attributes, got {}", schema.len(), attrs.len()),
        ));
    }
    Ok(schema
        .iter()
        .zip(attrs)
        .map(|(&(_, q), &v)| v / q.unit_scale())
        .collect())
}

/// Unit scale of every quantity, for the model sidecar.
pub fn unit_scale_table() -> Vec<(&'static str, f64)> {
    Quantity::ALL.iter().map(|q| (q.name(), q.unit_scale())).collect()
}

/// Edges of one type within a graph, with the recipe for their features.
///
/// Feature cell `k` equals `coef[k] * vals[index[k]]`, where `vals` is the
/// parameter vector followed by a constant 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanGroup {
    pub etype: EdgeType,
    /// Indices into the graph's edge list.
    pub edges: Vec<usize>,
    pub index: Vec<usize>,
    pub coef: Vec<f64>,
}

impl PlanGroup {
    pub fn rows(&self) -> usize {
        self.edges.len()
    }
}

/// How parameter values turn into edge features for one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePlan {
    pub n_params: usize,
    /// One group per edge type present, in edge-type order.
    pub groups: Vec<PlanGroup>,
}

impl FeaturePlan {
    pub fn new(graph: &CircuitGraph) -> Result<Self> {
        let n_params = graph.parameters.len();
        let mut groups: Vec<PlanGroup> = Vec::new();
        for etype in EdgeType::ALL {
            let mut g = PlanGroup {
                etype,
                edges: Vec::new(),
                index: Vec::new(),
                coef: Vec::new(),
            };
            for (i, e) in graph.edges.iter().enumerate().filter(|(_, e)| e.etype == etype) {
                let forms = graph.attr_forms(e)?;
                for (f, &(_, q)) in forms.iter().zip(etype.schema()) {
                    g.index.push(f.param.unwrap_or(n_params));
                    g.coef.push(f.coef / q.unit_scale());
                }
                for h in e.onehot() {
                    g.index.push(n_params);
                    g.coef.push(h);
                }
                g.edges.push(i);
            }
            if !g.edges.is_empty() {
                groups.push(g);
            }
        }
        Ok(FeaturePlan { n_params, groups })
    }

    /// Feature matrices, one per group, for parameter values `x`.
    pub fn features(&self, x: &[f64]) -> Vec<Tensor> {
        assert_eq!(x.len(), self.n_params, "parameter count");
        self.groups
            .iter()
            .map(|g| {
                let data = g
                    .index
                    .iter()
                    .zip(&g.coef)
                    .map(|(&i, &c)| c * if i < self.n_params { x[i] } else { 1.0 })
                    .collect();
                Tensor::matrix(g.rows(), g.etype.feature_dim(), data)
            })
            .collect()
    }

    /// The same matrices built on the tape from a `[n_params]` vector.
    pub fn features_on_tape(&self, tape: &mut Tape, x: Var) -> Result<Vec<Var>> {
        let one = tape.constant(Tensor::vector(alloc::vec![1.0]));
        let vals = if self.n_params == 0 {
            one
        } else {
            let flat = tape.reshape(x, &[self.n_params])?;
            let row = tape.reshape(flat, &[1, self.n_params])?;
            let one_row = tape.reshape(one, &[1, 1])?;
            let cat = tape.concat_cols(&[row, one_row])?;
            tape.reshape(cat, &[self.n_params + 1])?
        };
        self.groups
            .iter()
            .map(|g| {
                let picked = tape.index_select(vals, &g.index)?;
                let coef = tape.constant(Tensor::vector(g.coef.clone()));
                let cells = tape.mul(picked, coef)?;
                tape.reshape(cells, &[g.rows(), g.etype.feature_dim()])
            })
            .collect()
    }
}

/// Disjoint union of graphs with edges grouped by type.
///
/// Edge order is: by type, then by graph in batch order, then by the
/// graph's own edge order. `src`, `dst` and `edge_graph` follow it.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    pub groups: Vec<(EdgeType, usize)>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub edge_graph: Vec<usize>,
    pub n_nodes: usize,
    pub n_graphs: usize,
}

impl GraphBatch {
    /// `items[i]` is a graph and its plan.
    pub fn new(items: &[(&CircuitGraph, &FeaturePlan)]) -> Self {
        let mut offsets = Vec::with_capacity(items.len());
        let mut n_nodes = 0;
        for (g, _) in items {
            offsets.push(n_nodes);
            n_nodes += g.nodes.len();
        }
        let mut batch = GraphBatch {
            groups: Vec::new(),
            src: Vec::new(),
            dst: Vec::new(),
            edge_graph: Vec::new(),
            n_nodes,
            n_graphs: items.len(),
        };
        for etype in EdgeType::ALL {
            let mut rows = 0;
            for (gi, (g, plan)) in items.iter().enumerate() {
                let Some(group) = plan.groups.iter().find(|p| p.etype == etype) else { continue };
                for &e in &group.edges {
                    let [a, b] = g.edges[e].endpoints;
                    batch.src.push(offsets[gi] + a);
                    batch.dst.push(offsets[gi] + b);
                    batch.edge_graph.push(gi);
                }
                rows += group.rows();
            }
            if rows > 0 {
                batch.groups.push((etype, rows));
            }
        }
        batch
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    /// Stacks per-graph feature matrices into one matrix per batch group.
    /// `features[i]` are graph `i`'s matrices in its plan's group order.
    pub fn stack_features(&self, plans: &[&FeaturePlan], features: &[&[Tensor]]) -> Vec<Tensor> {
        self.groups
            .iter()
            .map(|&(etype, rows)| {
                let f = etype.feature_dim();
                let mut data = Vec::with_capacity(rows * f);
                for (plan, feats) in plans.iter().zip(features) {
                    if let Some(k) = plan.groups.iter().position(|p| p.etype == etype) {
                        data.extend_from_slice(feats[k].data());
                    }
                }
                Tensor::matrix(rows, f, data)
            })
            .collect()
    }
}

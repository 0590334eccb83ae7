use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::netlist::{AttrValue, ComponentKind, Netlist, ParamSpec, SourceKind};
use crate::units::Quantity;
use crate::{Error, Result};

/// Diffusion extension used for drain/source areas: `Ad = As = W * 0.1 um`.
pub const DIFFUSION_EXTENSION: f64 = 0.1e-6;

/// Device type plus terminal pair of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeType {
    NmosDg,
    NmosDs,
    NmosGs,
    PmosDg,
    PmosDs,
    PmosGs,
    Resistor,
    Capacitor,
    Inductor,
    Vsource,
    Isource,
    Varactor,
}

const MOS_SCHEMA: &[(&str, Quantity)] = &[
    ("W", Quantity::Length),
    ("L", Quantity::Length),
    ("Ad", Quantity::Area),
    ("As", Quantity::Area),
];

impl EdgeType {
    pub const ALL: [EdgeType; 12] = [
        EdgeType::NmosDg,
        EdgeType::NmosDs,
        EdgeType::NmosGs,
        EdgeType::PmosDg,
        EdgeType::PmosDs,
        EdgeType::PmosGs,
        EdgeType::Resistor,
        EdgeType::Capacitor,
        EdgeType::Inductor,
        EdgeType::Vsource,
        EdgeType::Isource,
        EdgeType::Varactor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::NmosDg => "nmos_DG",
            EdgeType::NmosDs => "nmos_DS",
            EdgeType::NmosGs => "nmos_GS",
            EdgeType::PmosDg => "pmos_DG",
            EdgeType::PmosDs => "pmos_DS",
            EdgeType::PmosGs => "pmos_GS",
            EdgeType::Resistor => "resistor",
            EdgeType::Capacitor => "capacitor",
            EdgeType::Inductor => "inductor",
            EdgeType::Vsource => "vsource",
            EdgeType::Isource => "isource",
            EdgeType::Varactor => "varactor",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Numeric attributes in feature order, each with the quantity that
    /// fixes its unit scale. The source-kind one-hot follows these.
    pub fn schema(self) -> &'static [(&'static str, Quantity)] {
        match self {
            EdgeType::NmosDg
            | EdgeType::NmosDs
            | EdgeType::NmosGs
            | EdgeType::PmosDg
            | EdgeType::PmosDs
            | EdgeType::PmosGs => MOS_SCHEMA,
            EdgeType::Resistor => &[("R", Quantity::Resistance)],
            EdgeType::Capacitor => &[("C", Quantity::Capacitance)],
            EdgeType::Inductor => &[("L", Quantity::Inductance)],
            EdgeType::Vsource => &[("V", Quantity::Voltage)],
            EdgeType::Isource => &[("I", Quantity::Current)],
            EdgeType::Varactor => &[("W", Quantity::Length)],
        }
    }

    /// Length of the feature vector: schema attributes plus a 3-way one-hot.
    pub fn feature_dim(self) -> usize {
        self.schema().len() + 3
    }

    pub fn is_passive(self) -> bool {
        matches!(self, EdgeType::Resistor | EdgeType::Capacitor | EdgeType::Inductor)
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EdgeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EdgeType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownEdgeType(s.to_string()))
    }
}

impl Serialize for EdgeType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EdgeType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Attribute derived from another attribute of the same edge by a factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub from: String,
    pub factor: f64,
}

/// Value of an attribute as an affine-free linear form: `coef * x[param]`,
/// or just `coef` when `param` is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttrForm {
    pub param: Option<usize>,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// `M1_DG` for multi-edge devices, the component id otherwise.
    pub label: String,
    pub component: String,
    /// Terminal pair within the component (`DG`, `P`, ...), empty for
    /// two-terminal devices.
    pub pair: String,
    pub endpoints: [usize; 2],
    pub etype: EdgeType,
    pub numeric: BTreeMap<String, f64>,
    pub parametric: BTreeMap<String, String>,
    pub computed: BTreeMap<String, Derived>,
    /// `None` for non-source devices.
    pub source: Option<SourceKind>,
}

impl Edge {
    /// `[dc, ac, none]`.
    pub fn onehot(&self) -> [f64; 3] {
        match self.source {
            Some(SourceKind::Dc) => [1.0, 0.0, 0.0],
            Some(SourceKind::Ac) => [0.0, 1.0, 0.0],
            None => [0.0, 0.0, 1.0],
        }
    }

    /// All attribute names, sorted.
    pub fn attr_keys(&self) -> Vec<&str> {
        let mut keys: Vec<&str> = self
            .numeric
            .keys()
            .chain(self.parametric.keys())
            .chain(self.computed.keys())
            .map(String::as_str)
            .collect();
        keys.sort_unstable();
        keys
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitGraph {
    pub topology_id: String,
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    pub parameters: Vec<ParamSpec>,
    pub constants: BTreeMap<String, f64>,
}

fn edge_sort_key(e: &Edge) -> (&str, &str) {
    (e.component.as_str(), e.pair.as_str())
}

/// Builds the multigraph: nodes are nets, edges are terminal pairs.
pub fn build_graph(netlist: &Netlist, topology_id: &str) -> Result<CircuitGraph> {
    let mut nodes: Vec<String> = Vec::new();
    let node_of = |name: &str, nodes: &mut Vec<String>| -> usize {
        match nodes.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                nodes.push(name.to_string());
                nodes.len() - 1
            }
        }
    };
    let mut edges = Vec::new();

    for c in &netlist.components {
        let t: Vec<usize> = c.terminals.iter().map(|n| node_of(n, &mut nodes)).collect();
        let split = |keys: &[&str]| {
            let mut numeric = BTreeMap::new();
            let mut parametric = BTreeMap::new();
            for &k in keys {
                match &c.attrs[k] {
                    AttrValue::Literal(v) => {
                        numeric.insert(k.to_string(), *v);
                    }
                    AttrValue::Symbol(s) => {
                        parametric.insert(k.to_string(), s.clone());
                    }
                }
            }
            (numeric, parametric)
        };
        let mut push = |pair: &str, a: usize, b: usize, etype: EdgeType, keys: &[&str], renamed: Option<&str>| {
            let (mut numeric, mut parametric) = split(keys);
            if let Some(to) = renamed {
                // Balun legs become plain inductors carrying `L`.
                if let Some(v) = numeric.pop_first() {
                    numeric.insert(to.to_string(), v.1);
                }
                if let Some(v) = parametric.pop_first() {
                    parametric.insert(to.to_string(), v.1);
                }
            }
            let mut computed = BTreeMap::new();
            if etype.schema() == MOS_SCHEMA {
                for k in ["Ad", "As"] {
                    computed.insert(
                        k.to_string(),
                        Derived {
                            from: "W".to_string(),
                            factor: DIFFUSION_EXTENSION,
                        },
                    );
                }
            }
            let label = if pair.is_empty() {
                c.id.clone()
            } else {
                format!("{}_{}", c.id, pair)
            };
            edges.push(Edge {
                label,
                component: c.id.clone(),
                pair: pair.to_string(),
                endpoints: [a, b],
                etype,
                numeric,
                parametric,
                computed,
                source: c.source,
            });
        };

        match c.kind {
            ComponentKind::Nmos | ComponentKind::Pmos => {
                let [dg, ds, gs] = if c.kind == ComponentKind::Nmos {
                    [EdgeType::NmosDg, EdgeType::NmosDs, EdgeType::NmosGs]
                } else {
                    [EdgeType::PmosDg, EdgeType::PmosDs, EdgeType::PmosGs]
                };
                let (d, g, s) = (t[0], t[1], t[2]);
                push("DG", d, g, dg, &["W", "L"], None);
                push("DS", d, s, ds, &["W", "L"], None);
                push("GS", g, s, gs, &["W", "L"], None);
            }
            ComponentKind::Balun => {
                let center = node_of(&format!("{}.c", c.id), &mut nodes);
                push("P", t[0], center, EdgeType::Inductor, &["Lp"], Some("L"));
                push("S", center, t[1], EdgeType::Inductor, &["Ls"], Some("L"));
                push("M", center, t[2], EdgeType::Inductor, &["Lm"], Some("L"));
            }
            kind => {
                let (etype, key) = match kind {
                    ComponentKind::Resistor => (EdgeType::Resistor, "R"),
                    ComponentKind::Capacitor => (EdgeType::Capacitor, "C"),
                    ComponentKind::Inductor => (EdgeType::Inductor, "L"),
                    ComponentKind::Vsource => (EdgeType::Vsource, "V"),
                    ComponentKind::Isource => (EdgeType::Isource, "I"),
                    _ => (EdgeType::Varactor, "W"),
                };
                push("", t[0], t[1], etype, &[key], None);
            }
        }
    }
    edges.sort_by(|a, b| edge_sort_key(a).cmp(&edge_sort_key(b)));

    Ok(CircuitGraph {
        topology_id: topology_id.to_string(),
        nodes,
        edges,
        parameters: netlist.parameters.clone(),
        constants: netlist.constants.clone(),
    })
}

impl CircuitGraph {
    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    /// Node order sorted by name, endpoints stored low-first, edges in
    /// canonical order. Two graphs that differ only in declaration order
    /// canonicalize to the same value.
    pub fn canonicalized(&self) -> CircuitGraph {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by(|&a, &b| self.nodes[a].cmp(&self.nodes[b]));
        let mut new_index = alloc::vec![0; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let mut g = self.relabeled(&new_index);
        for e in &mut g.edges {
            e.endpoints.sort_unstable();
        }
        g.edges.sort_by(|a, b| edge_sort_key(a).cmp(&edge_sort_key(b)));
        g
    }

    /// Moves node `i` to position `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> CircuitGraph {
        assert_eq!(perm.len(), self.nodes.len(), "permutation length");
        let mut nodes = alloc::vec![String::new(); self.nodes.len()];
        for (old, &new) in perm.iter().enumerate() {
            nodes[new] = self.nodes[old].clone();
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                endpoints: [perm[e.endpoints[0]], perm[e.endpoints[1]]],
                ..e.clone()
            })
            .collect();
        CircuitGraph {
            nodes,
            edges,
            ..self.clone()
        }
    }

    /// Same graph with edges listed in `order`.
    pub fn with_edge_order(&self, order: &[usize]) -> CircuitGraph {
        CircuitGraph {
            edges: order.iter().map(|&i| self.edges[i].clone()).collect(),
            ..self.clone()
        }
    }

    /// Linear form of every schema attribute of edge `e`, in schema order.
    pub fn attr_forms(&self, e: &Edge) -> Result<Vec<AttrForm>> {
        let base = |key: &str| -> Result<AttrForm> {
            if let Some(&v) = e.numeric.get(key) {
                return Ok(AttrForm { param: None, coef: v });
            }
            let sym = e
                .parametric
                .get(key)
                .ok_or_else(|| Error::invalid(format!("edge {} has no attribute `{key}`", e.label)))?;
            if let Some(i) = self.parameter_index(sym) {
                Ok(AttrForm { param: Some(i), coef: 1.0 })
            } else if let Some(&v) = self.constants.get(sym) {
                Ok(AttrForm { param: None, coef: v })
            } else {
                Err(Error::MissingSymbol(sym.clone()))
            }
        };
        e.etype
            .schema()
            .iter()
            .map(|&(key, _)| match e.computed.get(key) {
                Some(d) => base(&d.from).map(|f| AttrForm {
                    coef: f.coef * d.factor,
                    ..f
                }),
                None => base(key),
            })
            .collect()
    }
}

/// A graph with every parametric attribute resolved to a number.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundGraph {
    pub graph: CircuitGraph,
    /// Parameter values in `graph.parameters` order (SI units).
    pub values: Vec<f64>,
    /// Resolved schema attributes of every edge, keyed by name.
    pub edge_attrs: Vec<BTreeMap<String, f64>>,
}

impl BoundGraph {
    pub fn attr(&self, edge: usize, name: &str) -> Option<f64> {
        self.edge_attrs[edge].get(name).copied()
    }

    /// Parameter values keyed by name.
    pub fn params(&self) -> BTreeMap<String, f64> {
        self.graph
            .parameters
            .iter()
            .zip(&self.values)
            .map(|(p, &v)| (p.name.clone(), v))
            .collect()
    }
}

/// Resolves every symbol from `x` (free parameters) or the graph's
/// constants. Values outside the declared bounds are rejected.
pub fn bind_parameters(graph: &CircuitGraph, x: &BTreeMap<String, f64>) -> Result<BoundGraph> {
    let values = graph
        .parameters
        .iter()
        .map(|p| {
            x.get(&p.name)
                .copied()
                .ok_or_else(|| Error::MissingSymbol(p.name.clone()))
        })
        .collect::<Result<Vec<f64>>>()?;
    bind_values(graph, &values)
}

/// As [`bind_parameters`], with values in declaration order.
pub fn bind_values(graph: &CircuitGraph, values: &[f64]) -> Result<BoundGraph> {
    if values.len() != graph.parameters.len() {
        return Err(Error::invalid(format!(
            "{} parameter values for {} parameters",
            values.len(),
            graph.parameters.len()
        )));
    }
    for (p, &v) in graph.parameters.iter().zip(values) {
        if !p.contains(v) {
            return Err(Error::OutOfBounds {
                name: p.name.clone(),
                value: v,
                lower: p.lower,
                upper: p.upper,
            });
        }
    }
    let edge_attrs = graph
        .edges
        .iter()
        .map(|e| {
            let forms = graph.attr_forms(e)?;
            Ok(e.etype
                .schema()
                .iter()
                .zip(forms)
                .map(|(&(k, _), f)| {
                    let v = f.coef * f.param.map_or(1.0, |i| values[i]);
                    (k.to_string(), v)
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundGraph {
        graph: graph.clone(),
        values: values.to_vec(),
        edge_attrs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_netlist;

    fn graph(text: &str) -> CircuitGraph {
        build_graph(&parse_netlist(text).unwrap(), "t").unwrap()
    }

    #[test]
    fn one_resistor() {
        let g = graph("R1 resistor n1 n2 R=1k");
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].etype, EdgeType::Resistor);
        assert_eq!(g.edges[0].label, "R1");
    }

    #[test]
    fn nmos_decomposes_into_three_edges() {
        let g = graph(".param W1 1u 20u 1u\nM1 nmos d g s W=W1");
        assert_eq!(g.nodes, ["d", "g", "s"]);
        let labels: Vec<&str> = g.edges.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, ["M1_DG", "M1_DS", "M1_GS"]);
        assert_eq!(g.edges[0].endpoints, [0, 1]);
        assert_eq!(g.edges[1].endpoints, [0, 2]);
        assert_eq!(g.edges[2].endpoints, [1, 2]);
        for e in &g.edges {
            assert_eq!(e.parametric["W"], "W1");
            assert_eq!(e.numeric["L"], 45e-9);
        }
    }

    #[test]
    fn parallel_capacitors_are_kept() {
        let g = graph("C1 capacitor n1 n2 C=1p\nC2 capacitor n1 n2 C=2p");
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.edges[0].endpoints, g.edges[1].endpoints);
    }

    #[test]
    fn balun_is_a_t_network() {
        let g = graph("B1 balun a b 0 Lp=1n Ls=2n Lm=0.5n");
        assert_eq!(g.nodes, ["a", "b", "0", "B1.c"]);
        assert_eq!(g.edges.len(), 3);
        assert!(g.edges.iter().all(|e| e.etype == EdgeType::Inductor));
        let m = g.edges.iter().find(|e| e.label == "B1_M").unwrap();
        assert_eq!(m.endpoints, [3, 2]);
        assert_eq!(m.numeric["L"], 0.5e-9);
    }

    #[test]
    fn binding_shares_symbol_and_computes_areas() {
        let g = graph(".param W1 1u 20u 1u\nM1 nmos d g s W=W1");
        let x = BTreeMap::from([("W1".to_string(), 10e-6)]);
        let b = bind_parameters(&g, &x).unwrap();
        for i in 0..3 {
            assert_eq!(b.attr(i, "W"), Some(10e-6));
            assert!((b.attr(i, "Ad").unwrap() - 1e-12).abs() < 1e-27);
        }
        assert_eq!(b.params(), x);
    }

    #[test]
    fn binding_errors() {
        let g = graph(".param C2 1f 1p 1f\nC1 capacitor a b C=C2");
        let err = bind_parameters(&g, &BTreeMap::new()).unwrap_err();
        assert_eq!(err, Error::MissingSymbol("C2".into()));
        let x = BTreeMap::from([("C2".to_string(), 5e-12)]);
        assert!(matches!(bind_parameters(&g, &x), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn constants_resolve() {
        let g = graph(".const VDD 1.1\nV1 vsource vdd 0 V=VDD");
        let b = bind_values(&g, &[]).unwrap();
        assert_eq!(b.attr(0, "V"), Some(1.1));
        assert_eq!(g.edges[0].onehot(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn declaration_order_does_not_matter_after_canonicalization() {
        let a = graph("R1 resistor a b R=1\nC1 capacitor b c C=1p\nM1 nmos c a b W=1u");
        let b = graph("M1 nmos c a b W=1u\nC1 capacitor b c C=1p\nR1 resistor a b R=1");
        assert_ne!(a, b);
        assert_eq!(a.canonicalized(), b.canonicalized());
    }
}

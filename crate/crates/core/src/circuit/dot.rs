use alloc::string::String;
use core::fmt::Write;

use super::graph::CircuitGraph;

const PALETTE: [&str; 12] = [
    "#1f77b4", "#aec7e8", "#17becf", "#d62728", "#ff9896", "#e377c2", "#2ca02c", "#ff7f0e",
    "#9467bd", "#8c564b", "#bcbd22", "#7f7f7f",
];

/// Graphviz rendering. Edges of the same type share a color.
pub fn export_dot(graph: &CircuitGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "graph \"{}\" {{", graph.topology_id);
    for (i, n) in graph.nodes.iter().enumerate() {
        let _ = writeln!(out, "  n{i} [label=\"{n}\"];");
    }
    for e in &graph.edges {
        let _ = writeln!(
            out,
            "  n{} -- n{} [label=\"{}\", etype=\"{}\", color=\"{}\"];",
            e.endpoints[0],
            e.endpoints[1],
            e.label,
            e.etype,
            PALETTE[e.etype.index()]
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_graph, parse_netlist};

    fn dot(text: &str) -> String {
        export_dot(&build_graph(&parse_netlist(text).unwrap(), "x").unwrap())
    }

    #[test]
    fn resistor() {
        let d = dot("R1 resistor n1 n2 R=1k");
        assert_eq!(d.matches("[label=").count(), 3);
        assert_eq!(d.matches(" -- ").count(), 1);
    }

    #[test]
    fn nmos_labels_and_shared_color() {
        let d = dot("M1 nmos d g s W=1u\nM2 nmos d g 0 W=1u");
        for l in ["M1_DG", "M1_GS", "M1_DS"] {
            assert!(d.contains(&alloc::format!("label=\"{l}\"")), "{d}");
        }
        let dg_colors: alloc::vec::Vec<&str> = d
            .lines()
            .filter(|l| l.contains("etype=\"nmos_DG\""))
            .map(|l| l.split("color=").nth(1).unwrap())
            .collect();
        assert_eq!(dg_colors.len(), 2);
        assert_eq!(dg_colors[0], dg_colors[1]);
    }

    #[test]
    fn deterministic() {
        let t = "M1 nmos d g s W=1u\nC1 capacitor d 0 C=1p";
        assert_eq!(dot(t), dot(t));
    }
}

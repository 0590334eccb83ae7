//! Netlist text format, the multi-edge circuit graph built from it, and the
//! topology registry types.

mod dot;
mod graph;
mod netlist;
mod topology;

pub use dot::export_dot;
pub use graph::{
    bind_parameters, bind_values, build_graph, AttrForm, BoundGraph, CircuitGraph, Derived, Edge,
    EdgeType, DIFFUSION_EXTENSION,
};
pub use netlist::{
    parse_netlist, AttrValue, ComponentDecl, ComponentKind, Netlist, ParamSpec, SourceKind,
    DEFAULT_CHANNEL_LENGTH,
};
pub use topology::{TopologyEntry, TopologySpec, DEFAULT_AREA_BUDGET_MM2, LIBRARY_SIZE};

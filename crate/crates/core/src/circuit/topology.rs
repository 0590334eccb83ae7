use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::netlist::{Netlist, ParamSpec};
use crate::metrics::{Metric, MetricMask};
use crate::{Error, Result};

/// Number of topologies the classifier chooses between.
pub const LIBRARY_SIZE: usize = 20;

pub const DEFAULT_AREA_BUDGET_MM2: f64 = 1.0;

fn default_area_budget() -> f64 {
    DEFAULT_AREA_BUDGET_MM2
}

/// Per-topology metadata: parameter box, applicable metrics and area budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    /// Class index in `0..LIBRARY_SIZE`.
    pub id: usize,
    pub code: String,
    #[serde(default)]
    pub family: String,
    pub parameters: Vec<ParamSpec>,
    pub metrics: Vec<Metric>,
    #[serde(default = "default_area_budget")]
    pub area_budget_mm2: f64,
    /// Netlist file name, relative to the registry.
    pub netlist: String,
}

impl TopologySpec {
    pub fn metric_mask(&self) -> MetricMask {
        MetricMask::from_metrics(&self.metrics)
    }

    pub fn parameter(&self, name: &str) -> Option<&ParamSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id >= LIBRARY_SIZE {
            return Err(Error::invalid(format!("{}: id {} out of range", self.code, self.id)));
        }
        if self.metric_mask().is_empty() {
            return Err(Error::invalid(format!("{}: empty metric set", self.code)));
        }
        if !(self.area_budget_mm2 > 0.0) {
            return Err(Error::invalid(format!("{}: area budget must be positive", self.code)));
        }
        for p in &self.parameters {
            if !(p.lower < p.upper) || !(p.scale > 0.0) {
                return Err(Error::invalid(format!(
                    "{}: parameter `{}` needs lower < upper and scale > 0",
                    self.code, p.name
                )));
            }
        }
        Ok(())
    }

    /// Checks that the netlist declares exactly this descriptor's parameters.
    pub fn check_netlist(&self, netlist: &Netlist) -> Result<()> {
        if netlist.parameters != self.parameters {
            let ours: Vec<&str> = self.parameters.iter().map(|p| p.name.as_str()).collect();
            let theirs: Vec<&str> = netlist.parameters.iter().map(|p| p.name.as_str()).collect();
            return Err(Error::invalid(format!(
                "{}: descriptor parameters {ours:?} differ from netlist {theirs:?} (or their bounds)",
                self.code
            )));
        }
        Ok(())
    }
}

/// A descriptor together with the netlist text it refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyEntry {
    pub spec: TopologySpec,
    pub netlist_text: String,
}

impl TopologyEntry {
    pub fn netlist(&self) -> Result<Netlist> {
        super::parse_netlist(&self.netlist_text)
    }

    /// Parses, checks against the descriptor and builds the graph.
    pub fn graph(&self) -> Result<super::CircuitGraph> {
        let n = self.netlist()?;
        self.spec.check_netlist(&n)?;
        super::build_graph(&n, &self.spec.code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn spec() -> TopologySpec {
        TopologySpec {
            id: 0,
            code: "T".to_string(),
            family: String::new(),
            parameters: vec![ParamSpec {
                name: "R1".to_string(),
                lower: 100.0,
                upper: 600.0,
                scale: 1e3,
            }],
            metrics: vec![Metric::Dcp],
            area_budget_mm2: 1.0,
            netlist: "t.net".to_string(),
        }
    }

    #[test]
    fn validation() {
        assert!(spec().validate().is_ok());
        let mut s = spec();
        s.metrics.clear();
        assert!(s.validate().is_err());
        let mut s = spec();
        s.parameters[0].upper = 100.0;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.id = 20;
        assert!(s.validate().is_err());
    }

    #[test]
    fn netlist_consistency() {
        let n = crate::circuit::parse_netlist(".param R1 100 600 1k\nR1 resistor a b R=R1").unwrap();
        assert!(spec().check_netlist(&n).is_ok());
        let n = crate::circuit::parse_netlist(".param R1 100 700 1k\nR1 resistor a b R=R1").unwrap();
        assert!(spec().check_netlist(&n).is_err());
    }
}

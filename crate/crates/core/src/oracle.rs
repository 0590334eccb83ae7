//! Closed-form synthetic circuit families used to generate labeled data and
//! to check designs independently of the learned surrogate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{build_graph, parse_netlist, CircuitGraph, ParamSpec, TopologyEntry, TopologySpec, DEFAULT_AREA_BUDGET_MM2};
use crate::dataset::Record;
use crate::metrics::{Metric, PerformanceVector};
use crate::{Error, Result};

const RC_AMP_NET: &str = "\
.title rc_amp
.param W 2u 20u 1u
.param R 500 2k 1k
.param C 50f 500f 100f
.const VDD 1.1
.const VIN 0.6
V1 vsource vdd 0 V=VDD
V2 vsource in 0 V=VIN src=ac
M1 nmos out in 0 W=W
R1 resistor vdd out R=R
C1 capacitor out 0 C=C
";

const LC_OSC_NET: &str = "\
.title lc_osc
.param L 0.2n 1n 0.1n
.param C 100f 1p 100f
.param W 5u 30u 1u
.const VDD 1.1
.const ITAIL 2m
V1 vsource vdd 0 V=VDD
L1 inductor vdd op L=L
L2 inductor vdd on L=L
C1 capacitor op on C=C
M1 nmos op on tail W=W
M2 nmos on op tail W=W
I1 isource tail 0 I=ITAIL
";

const RDIV_ATT_NET: &str = "\
.title rdiv_att
.param R1 100 5k 1k
.param R2 100 5k 1k
.const CL 100f
V1 vsource in 0 src=ac
R1 resistor in out R=R1
R2 resistor out 0 R=R2
C1 capacitor out 0 C=CL
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OracleFamily {
    /// Common-source stage with resistive load and output capacitance.
    RcAmp,
    /// Cross-coupled LC oscillator.
    LcOsc,
    /// Resistive divider attenuator.
    RdivAtt,
}

impl OracleFamily {
    pub const ALL: [OracleFamily; 3] = [OracleFamily::RcAmp, OracleFamily::LcOsc, OracleFamily::RdivAtt];

    pub fn code(self) -> &'static str {
        match self {
            OracleFamily::RcAmp => "rc_amp",
            OracleFamily::LcOsc => "lc_osc",
            OracleFamily::RdivAtt => "rdiv_att",
        }
    }

    /// Library class the family stands in for.
    pub fn class_id(self) -> usize {
        match self {
            OracleFamily::RcAmp => 13,
            OracleFamily::LcOsc => 17,
            OracleFamily::RdivAtt => 15,
        }
    }

    pub fn from_code(code: &str) -> Option<OracleFamily> {
        Self::ALL.into_iter().find(|f| f.code() == code)
    }

    pub fn from_class_id(id: usize) -> Option<OracleFamily> {
        Self::ALL.into_iter().find(|f| f.class_id() == id)
    }

    pub fn metrics(self) -> &'static [Metric] {
        match self {
            OracleFamily::RcAmp => &[Metric::Dcp, Metric::VGain, Metric::Bw],
            OracleFamily::LcOsc => &[Metric::Dcp, Metric::OscF, Metric::OutP],
            OracleFamily::RdivAtt => &[Metric::VGain],
        }
    }

    pub fn netlist_text(self) -> &'static str {
        match self {
            OracleFamily::RcAmp => RC_AMP_NET,
            OracleFamily::LcOsc => LC_OSC_NET,
            OracleFamily::RdivAtt => RDIV_ATT_NET,
        }
    }

    pub fn parameters(self) -> Vec<ParamSpec> {
        parse_netlist(self.netlist_text())
            .expect("bundled oracle netlist parses")
            .parameters
    }

    pub fn spec(self) -> TopologySpec {
        TopologySpec {
            id: self.class_id(),
            code: self.code().to_string(),
            family: match self {
                OracleFamily::RcAmp | OracleFamily::RdivAtt => "VA",
                OracleFamily::LcOsc => "VCO",
            }
            .to_string(),
            parameters: self.parameters(),
            metrics: self.metrics().to_vec(),
            area_budget_mm2: DEFAULT_AREA_BUDGET_MM2,
            netlist: format!("{}.net", self.code()),
        }
    }

    pub fn entry(self) -> TopologyEntry {
        TopologyEntry {
            spec: self.spec(),
            netlist_text: self.netlist_text().into(),
        }
    }

    pub fn graph(self) -> CircuitGraph {
        let n = parse_netlist(self.netlist_text()).expect("bundled oracle netlist parses");
        build_graph(&n, self.code()).expect("bundled oracle netlist builds")
    }

    /// Metrics at parameter values `x` (SI units, declaration order).
    ///
    /// DCP is in mW, gains in dB, OutP in dBm, frequencies in Hz.
    pub fn eval(self, x: &[f64]) -> Result<PerformanceVector> {
        let params = self.parameters();
        if x.len() != params.len() {
            return Err(Error::invalid(format!(
                "{}: {} values for {} parameters",
                self.code(),
                x.len(),
                params.len()
            )));
        }
        for (p, &v) in params.iter().zip(x) {
            if !p.contains(v) {
                return Err(Error::OutOfBounds {
                    name: p.name.clone(),
                    value: v,
                    lower: p.lower,
                    upper: p.upper,
                });
            }
        }
        let db20 = |r: f64| 20.0 * libm::log10(r);
        Ok(match self {
            OracleFamily::RcAmp => {
                let (w_um, r, c) = (x[0] * 1e6, x[1], x[2]);
                PerformanceVector::from_pairs(&[
                    (Metric::Dcp, 0.2 * w_um),
                    (Metric::VGain, db20(1e-3 * w_um * r)),
                    (Metric::Bw, 1.0 / (2.0 * PI * r * c)),
                ])
            }
            OracleFamily::LcOsc => {
                let (l, c, w_um) = (x[0], x[1], x[2] * 1e6);
                PerformanceVector::from_pairs(&[
                    (Metric::Dcp, 0.3 * w_um),
                    (Metric::OscF, 1.0 / (2.0 * PI * libm::sqrt(l * c))),
                    (Metric::OutP, 10.0 * libm::log10(w_um)),
                ])
            }
            OracleFamily::RdivAtt => {
                let (r1, r2) = (x[0], x[1]);
                PerformanceVector::from_pairs(&[(Metric::VGain, db20(r2 / (r1 + r2)))])
            }
        })
    }

    /// As [`eval`](Self::eval), with parameters looked up by name.
    pub fn eval_named(self, params: &BTreeMap<alloc::string::String, f64>) -> Result<PerformanceVector> {
        let x = self
            .parameters()
            .iter()
            .map(|p| params.get(&p.name).copied().ok_or_else(|| Error::MissingSymbol(p.name.clone())))
            .collect::<Result<Vec<f64>>>()?;
        self.eval(&x)
    }

    /// Uniform draw inside the parameter box.
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> Vec<f64> {
        self.parameters()
            .iter()
            .map(|p| p.lower + (p.upper - p.lower) * rng.gen::<f64>())
            .collect()
    }
}

/// `n` uniformly sampled records per family, families in the given order.
/// Each family draws from its own stream of the seeded generator.
pub fn generate_dataset(families: &[OracleFamily], n: usize, seed: u64) -> Result<Vec<Record>> {
    let mut out = Vec::with_capacity(families.len() * n);
    for &f in families {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(f.class_id() as u64);
        let names: Vec<_> = f.parameters().into_iter().map(|p| p.name).collect();
        for _ in 0..n {
            let x = f.sample(&mut rng);
            let perf = f.eval(&x)?;
            let params = names.iter().cloned().zip(x).collect();
            out.push(Record::new(f.class_id(), params, &perf));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rc_amp_closed_forms() {
        let y = OracleFamily::RcAmp.eval(&[10e-6, 1000.0, 100e-15]).unwrap();
        assert!((y.get(Metric::VGain).unwrap() - 20.0).abs() < 1e-12);
        assert!((y.get(Metric::Dcp).unwrap() - 2.0).abs() < 1e-12);
        let y = OracleFamily::RcAmp.eval(&[10e-6, 1000.0, 159.155e-15]).unwrap();
        assert!((y.get(Metric::Bw).unwrap() - 1.0000e9).abs() / 1e9 < 1e-5);
        assert_eq!(y.get(Metric::OscF), None);
    }

    #[test]
    fn lc_osc_closed_forms() {
        let y = OracleFamily::LcOsc.eval(&[1e-9, 1e-12, 10e-6]).unwrap();
        assert!((y.get(Metric::OscF).unwrap() - 5.0329e9).abs() / 5.0329e9 < 1e-5);
        assert!((y.get(Metric::OutP).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rdiv_closed_form() {
        let y = OracleFamily::RdivAtt.eval(&[1000.0, 1000.0]).unwrap();
        assert!((y.get(Metric::VGain).unwrap() - 20.0 * libm::log10(0.5)).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_rejected() {
        assert!(matches!(
            OracleFamily::RcAmp.eval(&[1e-6, 1000.0, 100e-15]),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn specs_are_consistent() {
        for f in OracleFamily::ALL {
            let spec = f.spec();
            spec.validate().unwrap();
            spec.check_netlist(&parse_netlist(f.netlist_text()).unwrap()).unwrap();
            assert_eq!(OracleFamily::from_class_id(spec.id), Some(f));
            let g = f.graph();
            let x: Vec<f64> = spec.parameters.iter().map(|p| p.lower).collect();
            assert_eq!(f.eval(&x).unwrap().mask, spec.metric_mask());
            assert!(!g.edges.is_empty());
        }
        assert_eq!(OracleFamily::RcAmp.graph().edges.len(), 7);
        assert_eq!(OracleFamily::LcOsc.graph().edges.len(), 11);
    }

    #[test]
    fn dataset_is_deterministic_and_replays() {
        let a = generate_dataset(&OracleFamily::ALL, 50, 1).unwrap();
        let b = generate_dataset(&OracleFamily::ALL, 50, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 150);
        for r in &a {
            let f = OracleFamily::from_class_id(r.topology_id).unwrap();
            let y = f.eval_named(&r.params).unwrap();
            assert_eq!(r.performance().unwrap(), y);
            assert_eq!(y.mask, f.spec().metric_mask());
        }
    }

    #[test]
    fn metrics_are_smooth_inside_the_box() {
        // Central-difference slopes at steps h and h/2 agree to O(h^2) for
        // a C1 function; a kink or jump would break the agreement.
        let slope = |f: OracleFamily, x: &[f64], j: usize, m: Metric, h: f64| {
            let mut up = x.to_vec();
            up[j] += h;
            let mut dn = x.to_vec();
            dn[j] -= h;
            (f.eval(&up).unwrap().values[m.index()] - f.eval(&dn).unwrap().values[m.index()]) / (2.0 * h)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in OracleFamily::ALL {
            let params = f.parameters();
            for _ in 0..200 {
                let x: Vec<f64> = params
                    .iter()
                    .map(|p| p.lower + (p.upper - p.lower) * (0.01 + 0.98 * rng.gen::<f64>()))
                    .collect();
                for (j, p) in params.iter().enumerate() {
                    let h = 1e-4 * (p.upper - p.lower);
                    for &m in f.metrics() {
                        let a = slope(f, &x, j, m, h);
                        let b = slope(f, &x, j, m, h / 2.0);
                        assert!(a.is_finite() && b.is_finite());
                        assert!((a - b).abs() <= 1e-4 * a.abs().max(b.abs()) + 1e-9, "{f:?} {m} {a} {b}");
                    }
                }
            }
        }
    }
}

use std::fs;
use std::path::Path;

use invdes::registry::Registry;
use invdes_core::circuit::{parse_netlist, LIBRARY_SIZE};
use invdes_core::oracle::OracleFamily;
use invdes_core::Metric;

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dst = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &dst);
        } else {
            fs::copy(&p, &dst).unwrap();
        }
    }
}

#[test]
fn bundled_topologies_build_within_bounds() {
    let reg = Registry::bundled().unwrap();
    assert_eq!(reg.topologies.len(), LIBRARY_SIZE);
    for (i, e) in reg.topologies.iter().enumerate() {
        assert_eq!(e.spec.id, i);
        let g = e.graph().unwrap();
        assert!((4..=40).contains(&g.nodes.len()), "{}: {} nodes", e.spec.code, g.nodes.len());
        assert!((7..=70).contains(&g.edges.len()), "{}: {} edges", e.spec.code, g.edges.len());
        let declared: Vec<_> = parse_netlist(&e.netlist_text).unwrap().parameters;
        assert_eq!(declared, e.spec.parameters, "{}", e.spec.code);
    }
}

#[test]
fn families_carry_their_metric_sets() {
    use Metric::*;
    let reg = Registry::bundled().unwrap();
    let expect: [(&str, &[Metric]); 5] = [
        ("LNA", &[Dcp, PGain, S11, Nf, Bw]),
        ("Mixer", &[Dcp, CGain, Nf, VSwg]),
        ("PA", &[Dcp, PGain, S11, S22, Psat, De, Pae]),
        ("VA", &[Dcp, VGain, Bw]),
        ("VCO", &[Dcp, OscF, Tr, OutP, Pn]),
    ];
    for e in &reg.topologies {
        let (_, metrics) = expect.iter().find(|(f, _)| *f == e.spec.family).unwrap();
        assert_eq!(&e.spec.metrics[..], *metrics, "{}", e.spec.code);
    }
    let big: Vec<_> = reg
        .topologies
        .iter()
        .filter(|e| e.spec.area_budget_mm2 > 1.0)
        .map(|e| e.spec.code.as_str())
        .collect();
    assert_eq!(big, ["DLNA", "ClassBPA", "DohPA"]);
}

#[test]
fn oracle_registry_matches_compiled_families() {
    let reg = Registry::bundled().unwrap();
    assert_eq!(reg.oracle.len(), 3);
    for f in OracleFamily::ALL {
        let e = reg.oracle.iter().find(|e| e.spec.code == f.code()).unwrap();
        assert_eq!(*e, f.entry());
    }
}

#[test]
fn library_substitutes_oracle_stand_ins() {
    let reg = Registry::bundled().unwrap();
    let lib = reg.library();
    assert_eq!(lib.len(), LIBRARY_SIZE);
    for (id, code) in [(13, "rc_amp"), (15, "rdiv_att"), (17, "lc_osc"), (0, "CGLNA")] {
        assert_eq!(lib[id].spec.code, code);
    }
    assert_eq!(reg.find("csva").unwrap().spec.code, "CSVA");
    assert_eq!(reg.find("13").unwrap().spec.code, "rc_amp");
    assert_eq!(reg.find("LC_OSC").unwrap().spec.id, 17);
    assert!(reg.find("nope").is_none());
}

#[test]
fn flag_beats_environment_beats_bundled() {
    let flag = Path::new("/somewhere");
    assert_eq!(Registry::resolve(Some(flag)), flag);
}

#[test]
fn broken_registries_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&Registry::bundled_path(), dir.path());
    assert!(Registry::load(dir.path()).is_ok());

    // Bounds in the JSON must equal the netlist's `.param` line.
    let spec = dir.path().join("topologies/CSVA.json");
    let text = fs::read_to_string(&spec).unwrap();
    fs::write(&spec, text.replacen("700.0", "650.0", 1)).unwrap();
    assert!(Registry::load(dir.path()).is_err());
    fs::write(&spec, text).unwrap();

    fs::remove_file(dir.path().join("topologies/RVCO.json")).unwrap();
    assert!(Registry::load(dir.path()).is_err());
    assert!(Registry::load(&dir.path().join("missing")).is_err());
}

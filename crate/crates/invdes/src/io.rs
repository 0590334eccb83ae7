//! JSON and JSON-lines files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use invdes_core::dataset::Record;
use invdes_core::units::parse_literal;
use invdes_core::{Metric, PerformanceVector};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::{Error, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
    move |source| Error::Json {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(json_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

/// One record per line, in order.
pub fn write_records<W: Write>(mut w: W, records: &[Record]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_records_file(path: &Path, records: &[Record]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let f = File::create(path).map_err(io_err(path))?;
    write_records(BufWriter::new(f), records).map_err(io_err(path))
}

/// Reads a JSON-lines dataset; blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(&line)
            .map_err(|e| Error::Invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

/// Parameter values keyed by name. Values are SI numbers or netlist
/// literals such as `"10u"`.
pub fn params_from_value(v: &Value) -> Result<BTreeMap<String, f64>> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Invalid("parameters must be a JSON object".into()))?;
    obj.iter()
        .map(|(k, v)| {
            let x = match v {
                Value::Number(n) => n.as_f64(),
                Value::String(s) => parse_literal(s),
                _ => None,
            };
            x.map(|x| (k.clone(), x))
                .ok_or_else(|| Error::Invalid(format!("parameter {k}: expected a number or literal, got {v}")))
        })
        .collect()
}

pub fn read_params(path: &Path) -> Result<BTreeMap<String, f64>> {
    params_from_value(&read_json::<Value>(path)?)
}

/// Target performance keyed by metric name; `null` entries are absent.
pub fn target_from_value(v: &Value) -> Result<PerformanceVector> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Invalid("target must be a JSON object".into()))?;
    let mut out = PerformanceVector::empty();
    for (k, v) in obj {
        let m: Metric = k
            .parse()
            .map_err(|_| Error::Core(invdes_core::Error::UnknownMetric(k.clone())))?;
        match v {
            Value::Null => {}
            Value::Number(n) => {
                let x = n.as_f64().filter(|x| x.is_finite());
                out.set(m, x.ok_or_else(|| Error::Invalid(format!("target {k}: {v} is not finite")))?);
            }
            _ => return Err(Error::Invalid(format!("target {k}: expected a number, got {v}"))),
        }
    }
    Ok(out)
}

pub fn read_target(path: &Path) -> Result<PerformanceVector> {
    target_from_value(&read_json::<Value>(path)?)
}

pub fn performance_to_map(p: &PerformanceVector) -> BTreeMap<String, f64> {
    p.present().map(|(m, v)| (m.name().to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn params_accept_numbers_and_literals() {
        let p = params_from_value(&json!({"W": "10u", "R": 1000})).unwrap();
        assert_eq!(p["W"], 10e-6);
        assert_eq!(p["R"], 1000.0);
        assert!(params_from_value(&json!({"W": true})).is_err());
        assert!(params_from_value(&json!([1])).is_err());
    }

    #[test]
    fn target_skips_nulls_and_rejects_unknown_metrics() {
        let t = target_from_value(&json!({"DCP": 2.0, "BW": null})).unwrap();
        assert_eq!(t.get(Metric::Dcp), Some(2.0));
        assert_eq!(t.get(Metric::Bw), None);
        assert!(target_from_value(&json!({"Gain": 1.0})).is_err());
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let recs = invdes_core::oracle::generate_dataset(&invdes_core::oracle::OracleFamily::ALL, 5, 3).unwrap();
        write_records_file(&path, &recs).unwrap();
        assert_eq!(read_records(&path).unwrap(), recs);
    }
}

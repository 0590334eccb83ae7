//! Labeled samples and stratified splitting.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{Metric, PerformanceVector};
use crate::{Error, Result};

/// Smallest class size accepted by [`stratified_split`].
pub const MIN_CLASS_SIZE: usize = 10;

/// One sample: topology class, parameter values (SI) and all 16 metrics,
/// `None` where the metric does not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub topology_id: usize,
    pub params: BTreeMap<String, f64>,
    pub metrics: BTreeMap<String, Option<f64>>,
}

impl Record {
    pub fn new(topology_id: usize, params: BTreeMap<String, f64>, perf: &PerformanceVector) -> Self {
        let metrics = Metric::ALL
            .iter()
            .map(|&m| (m.name().to_string(), perf.get(m)))
            .collect();
        Record {
            topology_id,
            params,
            metrics,
        }
    }

    pub fn performance(&self) -> Result<PerformanceVector> {
        let mut out = PerformanceVector::empty();
        for (name, v) in &self.metrics {
            let m: Metric = name.parse().map_err(|_| Error::UnknownMetric(name.clone()))?;
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::invalid(format!("metric {name} = {v} is not finite")));
                }
                out.set(m, *v);
            }
        }
        Ok(out)
    }
}

/// Index sets of a three-way split.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits sample indices so each class is divided in `ratios`
/// (train, val, test) up to rounding.
pub fn stratified_split(labels: &[usize], ratios: [f64; 3], seed: u64) -> Result<Split> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios {ratios:?} must be nonnegative and sum to 1")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split::default();
    for (class, mut idx) in by_class {
        if idx.len() < MIN_CLASS_SIZE {
            return Err(Error::invalid(format!(
                "class {class} has {} samples, need at least {MIN_CLASS_SIZE}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let n_train = libm::round(n * ratios[0]) as usize;
        let n_val = (libm::round(n * ratios[1]) as usize).min(idx.len() - n_train);
        split.train.extend_from_slice(&idx[..n_train]);
        split.val.extend_from_slice(&idx[n_train..n_train + n_val]);
        split.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn exact_ratios() {
        let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let s = stratified_split(&labels, [0.8, 0.1, 0.1], 4).unwrap();
        for c in 0..3 {
            let count = |set: &[usize]| set.iter().filter(|&&i| labels[i] == c).count();
            assert_eq!((count(&s.train), count(&s.val), count(&s.test)), (80, 10, 10));
        }
        assert_eq!(s, stratified_split(&labels, [0.8, 0.1, 0.1], 4).unwrap());
        assert_ne!(s, stratified_split(&labels, [0.8, 0.1, 0.1], 5).unwrap());
    }

    #[test]
    fn disjoint_and_complete() {
        let labels: Vec<usize> = (0..137).map(|i| (i * 7) % 4).collect();
        let s = stratified_split(&labels, [0.8, 0.1, 0.1], 0).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..137).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_input() {
        let labels = vec![0; 50];
        assert!(stratified_split(&labels, [0.8, 0.1, 0.2], 0).is_err());
        assert!(stratified_split(&[0; 9], [0.8, 0.1, 0.1], 0).is_err());
    }

    #[test]
    fn record_round_trip() {
        let perf = PerformanceVector::from_pairs(&[(Metric::Dcp, 1.5), (Metric::Bw, 2e9)]);
        let r = Record::new(3, BTreeMap::new(), &perf);
        assert_eq!(r.metrics.len(), 16);
        assert_eq!(r.metrics["OscF"], None);
        assert_eq!(r.performance().unwrap(), perf);
    }
}

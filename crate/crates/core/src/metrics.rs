//! The fixed-order 16-metric performance vector and its validity mask.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const METRIC_COUNT: usize = 16;

/// Performance metrics in canonical slot order. The order is part of every
/// serialized model and must never change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "DCP")]
    Dcp,
    #[serde(rename = "VGain")]
    VGain,
    #[serde(rename = "PGain")]
    PGain,
    #[serde(rename = "CGain")]
    CGain,
    #[serde(rename = "S11")]
    S11,
    #[serde(rename = "S22")]
    S22,
    #[serde(rename = "NF")]
    Nf,
    #[serde(rename = "BW")]
    Bw,
    #[serde(rename = "OscF")]
    OscF,
    #[serde(rename = "TR")]
    Tr,
    #[serde(rename = "OutP")]
    OutP,
    #[serde(rename = "PSAT")]
    Psat,
    #[serde(rename = "DE")]
    De,
    #[serde(rename = "PAE")]
    Pae,
    #[serde(rename = "PN")]
    Pn,
    #[serde(rename = "VSwg")]
    VSwg,
}

impl Metric {
    pub const ALL: [Metric; METRIC_COUNT] = [
        Metric::Dcp,
        Metric::VGain,
        Metric::PGain,
        Metric::CGain,
        Metric::S11,
        Metric::S22,
        Metric::Nf,
        Metric::Bw,
        Metric::OscF,
        Metric::Tr,
        Metric::OutP,
        Metric::Psat,
        Metric::De,
        Metric::Pae,
        Metric::Pn,
        Metric::VSwg,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        match self {
            Metric::Dcp => "DCP",
            Metric::VGain => "VGain",
            Metric::PGain => "PGain",
            Metric::CGain => "CGain",
            Metric::S11 => "S11",
            Metric::S22 => "S22",
            Metric::Nf => "NF",
            Metric::Bw => "BW",
            Metric::OscF => "OscF",
            Metric::Tr => "TR",
            Metric::OutP => "OutP",
            Metric::Psat => "PSAT",
            Metric::De => "DE",
            Metric::Pae => "PAE",
            Metric::Pn => "PN",
            Metric::VSwg => "VSwg",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownMetric(String::from(s)))
    }
}

/// One validity bit per metric slot; bit `i` set means metric `i` is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricMask(pub u16);

impl MetricMask {
    pub const EMPTY: MetricMask = MetricMask(0);

    pub fn from_metrics(metrics: &[Metric]) -> Self {
        MetricMask(metrics.iter().fold(0u16, |acc, m| acc | (1 << m.index())))
    }

    pub fn contains(self, metric: Metric) -> bool {
        self.0 & (1 << metric.index()) != 0
    }

    pub fn bit(self, slot: usize) -> bool {
        self.0 & (1 << slot) != 0
    }

    pub fn insert(&mut self, metric: Metric) {
        self.0 |= 1 << metric.index();
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn metrics(self) -> impl Iterator<Item = Metric> {
        Metric::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    /// Mask as 0/1 weights in slot order.
    pub fn weights(self) -> [f64; METRIC_COUNT] {
        let mut w = [0.0; METRIC_COUNT];
        for (slot, wi) in w.iter_mut().enumerate() {
            if self.bit(slot) {
                *wi = 1.0;
            }
        }
        w
    }
}

/// Values in canonical slot order plus the validity mask. Slots whose mask
/// bit is clear carry 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceVector {
    pub values: [f64; METRIC_COUNT],
    pub mask: MetricMask,
}

impl PerformanceVector {
    pub fn empty() -> Self {
        PerformanceVector {
            values: [0.0; METRIC_COUNT],
            mask: MetricMask::EMPTY,
        }
    }

    pub fn from_pairs(pairs: &[(Metric, f64)]) -> Self {
        let mut v = Self::empty();
        for &(m, x) in pairs {
            v.set(m, x);
        }
        v
    }

    pub fn set(&mut self, metric: Metric, value: f64) {
        self.values[metric.index()] = value;
        self.mask.insert(metric);
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.mask.contains(metric).then(|| self.values[metric.index()])
    }

    pub fn present(&self) -> impl Iterator<Item = (Metric, f64)> + '_ {
        self.mask.metrics().map(|m| (m, self.values[m.index()]))
    }
}

/// Mean of `|predicted - target| / |target|` over the metrics set in `mask`.
/// Returns `None` for an empty mask.
pub fn mean_relative_error(
    predicted: &[f64; METRIC_COUNT],
    target: &[f64; METRIC_COUNT],
    mask: MetricMask,
) -> Option<f64> {
    if mask.is_empty() {
        return None;
    }
    let total: f64 = mask
        .metrics()
        .map(|m| relative_error(predicted[m.index()], target[m.index()]))
        .sum();
    Some(total / mask.count() as f64)
}

/// `|predicted - target| / |target|`; a zero target with a nonzero
/// prediction gives infinity.
pub fn relative_error(predicted: f64, target: f64) -> f64 {
    let diff = libm::fabs(predicted - target);
    if diff == 0.0 {
        0.0
    } else {
        diff / libm::fabs(target)
    }
}

/// Per-metric mean and standard deviation over the samples where each
/// metric is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; METRIC_COUNT],
    pub std: [f64; METRIC_COUNT],
    /// Metrics seen at least once while fitting.
    pub present: MetricMask,
}

impl NormStats {
    /// Population statistics; metrics never present get mean 0, std 1.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a PerformanceVector>) -> Self {
        let mut count = [0usize; METRIC_COUNT];
        let mut sum = [0.0; METRIC_COUNT];
        let mut sumsq = [0.0; METRIC_COUNT];
        let samples: alloc::vec::Vec<&PerformanceVector> = samples.into_iter().collect();
        for y in &samples {
            for (m, v) in y.present() {
                count[m.index()] += 1;
                sum[m.index()] += v;
            }
        }
        let mut mean = [0.0; METRIC_COUNT];
        let mut present = MetricMask::EMPTY;
        for m in Metric::ALL {
            let i = m.index();
            if count[i] > 0 {
                mean[i] = sum[i] / count[i] as f64;
                present.insert(m);
            }
        }
        // Two-pass variance keeps the refit of normalized data tight.
        for y in &samples {
            for (m, v) in y.present() {
                let d = v - mean[m.index()];
                sumsq[m.index()] += d * d;
            }
        }
        let mut std = [1.0; METRIC_COUNT];
        for i in 0..METRIC_COUNT {
            if count[i] > 0 {
                std[i] = libm::sqrt(sumsq[i] / count[i] as f64);
            }
        }
        NormStats { mean, std, present }
    }

    /// Replaces zero deviations with 1 so constant metrics normalize to 0.
    pub fn with_unit_floor(mut self) -> Self {
        for s in &mut self.std {
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        self
    }

    pub fn normalize_value(&self, metric: Metric, x: f64) -> crate::Result<f64> {
        let i = metric.index();
        if !self.present.contains(metric) {
            return Err(crate::Error::domain(
                "normalize",
                alloc::format!("no statistics for metric {metric}"),
            ));
        }
        if self.std[i] == 0.0 {
            return Err(crate::Error::domain(
                "normalize",
                alloc::format!("metric {metric} has zero deviation"),
            ));
        }
        Ok((x - self.mean[i]) / self.std[i])
    }

    /// z-scores present entries; absent entries stay 0 with the mask bit clear.
    pub fn normalize(&self, y: &PerformanceVector) -> crate::Result<PerformanceVector> {
        let mut out = PerformanceVector::empty();
        for (m, v) in y.present() {
            out.set(m, self.normalize_value(m, v)?);
        }
        Ok(out)
    }

    pub fn denormalize_value(&self, metric: Metric, z: f64) -> f64 {
        z * self.std[metric.index()] + self.mean[metric.index()]
    }

    pub fn denormalize(&self, z: &[f64; METRIC_COUNT]) -> [f64; METRIC_COUNT] {
        let mut out = [0.0; METRIC_COUNT];
        for m in Metric::ALL {
            out[m.index()] = self.denormalize_value(m, z[m.index()]);
        }
        out
    }
}

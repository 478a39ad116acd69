//! Bandwidth/duration class labels and the scarce traffic-class mask.
//!
//! Continuous bandwidth and duration values are binned by an increasing
//! divider array: `value < d[0]` is class 1, `d[j-1] <= value < d[j]` is
//! class `j + 1`, and `value >= d[last]` is the top class. "Optimal" dividers
//! are the midpoints between consecutive sorted per-traffic-class means.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowSample;

/// Bandwidth (kbps) and duration (s) dividers.
///
/// Serialised as `{"bw": [...], "dur": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DividerSet {
    #[serde(rename = "bw")]
    pub bw_dividers: Vec<f64>,
    #[serde(rename = "dur")]
    pub d_dividers: Vec<f64>,
}

impl DividerSet {
    pub fn new(bw_dividers: Vec<f64>, d_dividers: Vec<f64>) -> Result<Self> {
        check_dividers(&bw_dividers)?;
        check_dividers(&d_dividers)?;
        Ok(DividerSet {
            bw_dividers,
            d_dividers,
        })
    }

    pub fn bw_classes(&self) -> usize {
        self.bw_dividers.len() + 1
    }

    pub fn dur_classes(&self) -> usize {
        self.d_dividers.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        check_dividers(&self.bw_dividers)?;
        check_dividers(&self.d_dividers)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: DividerSet = serde_json::from_str(text).map_err(|e| Error::data("divider json", e.to_string()))?;
        set.validate()?;
        Ok(set)
    }
}

fn check_dividers(dividers: &[f64]) -> Result<()> {
    if dividers.is_empty() {
        return Err(Error::DegenerateDividers("at least one divider is required".into()));
    }
    if dividers.iter().any(|d| !d.is_finite()) {
        return Err(Error::DegenerateDividers(format!("non-finite divider in {dividers:?}")));
    }
    if dividers.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::DegenerateDividers(format!(
            "dividers must be strictly increasing, got {dividers:?}"
        )));
    }
    Ok(())
}

/// Maps a value to a 1-based class id under the lower-inclusive convention.
pub fn assign_class(value: f64, dividers: &[f64]) -> Result<u32> {
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "class assignment".into(),
            value,
        });
    }
    check_dividers(dividers)?;
    Ok(dividers.partition_point(|&d| d <= value) as u32 + 1)
}

/// Midpoints between consecutive sorted class means. `n` classes give `n - 1`
/// dividers.
pub fn compute_dividers(values_by_class: &BTreeMap<u32, Vec<f64>>) -> Result<Vec<f64>> {
    if values_by_class.len() < 2 {
        return Err(Error::DegenerateDividers(format!(
            "need at least two classes, got {}",
            values_by_class.len()
        )));
    }
    let mut means = Vec::with_capacity(values_by_class.len());
    for (class, values) in values_by_class {
        if values.is_empty() {
            return Err(Error::DegenerateDividers(format!("class {class} has no values")));
        }
        // summing in sorted order makes the mean independent of input order
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite {
                context: format!("mean of class {class}"),
                value: mean,
            });
        }
        means.push((mean, *class));
    }
    means.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = means.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DegenerateDividers(format!(
            "classes {} and {} have identical means {}",
            w[0].1, w[1].1, w[0].0
        )));
    }
    Ok(means.windows(2).map(|w| (w[0].0 + w[1].0) / 2.0).collect())
}

/// Optimal dividers from `flows`, grouped by traffic label. Unlabelled flows
/// are ignored.
pub fn dividers_from_flows<'a, I>(flows: I) -> Result<DividerSet>
where
    I: IntoIterator<Item = &'a FlowSample>,
{
    let mut bw: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut dur: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for flow in flows {
        if let Some(class) = flow.traffic_label {
            bw.entry(class).or_default().push(flow.bandwidth);
            dur.entry(class).or_default().push(flow.duration);
        }
    }
    DividerSet::new(compute_dividers(&bw)?, compute_dividers(&dur)?)
}

/// Per-flow supervision. Bandwidth and duration classes are always present;
/// the traffic class is present only for the scarce labelled subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskLabels {
    pub y_bw: u32,
    pub y_dur: u32,
    pub y_traffic: Option<u32>,
}

impl TaskLabels {
    pub fn for_flow(flow: &FlowSample, dividers: &DividerSet) -> Result<Self> {
        Ok(TaskLabels {
            y_bw: assign_class(flow.bandwidth, &dividers.bw_dividers)?,
            y_dur: assign_class(flow.duration, &dividers.d_dividers)?,
            y_traffic: None,
        })
    }

    pub fn traffic_mask(&self) -> u8 {
        u8::from(self.y_traffic.is_some())
    }
}

/// Picks `labeled_per_class` flows uniformly without replacement from every
/// traffic class. Returns a per-flow selection flag.
pub fn select_labeled(flows: &[FlowSample], labeled_per_class: usize, seed: u64) -> Result<Vec<bool>> {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, flow) in flows.iter().enumerate() {
        if let Some(class) = flow.traffic_label {
            by_class.entry(class).or_default().push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = vec![false; flows.len()];
    for (class, mut members) in by_class {
        if members.len() < labeled_per_class {
            return Err(Error::NotEnoughLabels {
                class,
                available: members.len(),
                requested: labeled_per_class,
            });
        }
        members.shuffle(&mut rng);
        for &i in &members[..labeled_per_class] {
            selected[i] = true;
        }
    }
    Ok(selected)
}

/// Labels every flow for the bandwidth and duration tasks and keeps the
/// traffic label on exactly `labeled_per_class` seeded picks per class.
pub fn build_label_set(
    flows: &[FlowSample],
    dividers: &DividerSet,
    labeled_per_class: usize,
    seed: u64,
) -> Result<Vec<TaskLabels>> {
    let selected = select_labeled(flows, labeled_per_class, seed)?;
    flows
        .iter()
        .zip(selected)
        .map(|(flow, keep)| {
            let mut labels = TaskLabels::for_flow(flow, dividers)?;
            if keep {
                labels.y_traffic = flow.traffic_label;
            }
            Ok(labels)
        })
        .collect()
}

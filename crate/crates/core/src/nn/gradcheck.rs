//! Central finite-difference verification of the analytic gradients.

use serde::Serialize;

use super::network::{Example, Network};
use crate::error::Result;

/// Gradients smaller than this are compared on an absolute scale: relative
/// error is `|analytic - numeric| / max(|analytic|, |numeric|, GRAD_FLOOR)`.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub index: usize,
    pub owner: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub name: String,
    pub checked: usize,
    pub failed: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub groups: Vec<GroupSummary>,
    pub failures: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Checks every parameter of `network` on the summed loss over `batch`.
pub fn check_gradients(
    network: &Network,
    params: &[f64],
    batch: &[&Example],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let mut ws = network.workspace();
    let mut analytic = vec![0.0; network.param_count()];
    network.batch_loss(params, batch, &mut ws, Some(&mut analytic))?;

    let mut probe = params.to_vec();
    let mut groups = Vec::new();
    let mut failures = Vec::new();
    let mut max_rel: f64 = 0.0;
    for (name, range) in network.param_groups() {
        let mut group = GroupSummary {
            name: name.clone(),
            checked: 0,
            failed: 0,
            max_rel_error: 0.0,
        };
        for i in range {
            let original = probe[i];
            probe[i] = original + step;
            let plus = network.batch_loss(&probe, batch, &mut ws, None)?.total;
            probe[i] = original - step;
            let minus = network.batch_loss(&probe, batch, &mut ws, None)?.total;
            probe[i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let rel = relative_error(analytic[i], numeric);
            group.checked += 1;
            group.max_rel_error = group.max_rel_error.max(rel);
            if !(rel < tolerance) {
                group.failed += 1;
                failures.push(ParamCheck {
                    index: i,
                    owner: name.clone(),
                    analytic: analytic[i],
                    numeric,
                    rel_error: rel,
                });
            }
        }
        max_rel = max_rel.max(group.max_rel_error);
        groups.push(group);
    }
    Ok(GradCheckReport {
        checked: groups.iter().map(|g| g.checked).sum(),
        tolerance,
        max_rel_error: max_rel,
        groups,
        failures,
    })
}

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub clean: f64,
    pub ratios: BTreeMap<String, f64>,
    pub average: f64,
}

/// Perturbed-over-clean ratio per perturbation, and their mean.
pub fn robustness_ratio(clean: f64, perturbed: &BTreeMap<String, f64>) -> Result<RobustnessReport> {
    if !(clean.is_finite() && clean > 0.0) {
        return Err(Error::invalid(format!("clean metric must be positive, got {clean}")));
    }
    if perturbed.is_empty() {
        return Err(Error::invalid("no perturbed metrics"));
    }
    let mut ratios = BTreeMap::new();
    for (name, &v) in perturbed {
        if !v.is_finite() {
            return Err(Error::invalid(format!("perturbed metric {name} is not finite")));
        }
        ratios.insert(name.clone(), v / clean);
    }
    let average = ratios.values().sum::<f64>() / ratios.len() as f64;
    Ok(RobustnessReport { clean, ratios, average })
}

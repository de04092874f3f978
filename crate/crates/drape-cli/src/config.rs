//! The resolved run configuration, written next to every command's outputs
//! for provenance. Round-trips through JSON without loss.

use serde::{Deserialize, Serialize};

use drape::constructions::Variant;
use drape::params::PhysicalParams;
use drape::scaling::SweepSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub params: Option<PhysicalParams>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sweep: Option<SweepSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plan: Option<PlanSpec>,
    pub seed: u64,
    pub jobs: usize,
    pub out: String,
    pub emit_plot_data: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_iters: Option<usize>,
    pub flat_top: bool,
}

/// CLI-facing plan description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variant: Option<Variant>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l: Option<f64>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        RunConfig {
            command: command.to_string(),
            params: None,
            sweep: None,
            grid: None,
            plan: None,
            seed: 0,
            jobs: 0,
            out: ".".to_string(),
            emit_plot_data: false,
            max_iters: None,
            flat_top: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_losslessly() {
        let mut cfg = RunConfig::new("minimize");
        cfg.params = Some(PhysicalParams {
            h: 0.001,
            w: 0.5,
            l: 1.0,
            tau: 4.0,
            w0: 0.01,
            delta: 1.0,
        });
        cfg.grid = Some([129, 257]);
        cfg.seed = 42;
        cfg.plan =
            Some(PlanSpec { kind: "type2".into(), n: Some(1), variant: Some(Variant::B), l: None });
        let s = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(cfg, back);
        // and unknown keys are rejected
        let bad = s.replace("\"seed\"", "\"sneed\"");
        assert!(serde_json::from_str::<RunConfig>(&bad).is_err());
    }
}

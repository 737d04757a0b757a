//! The run configuration file. Every section is optional; unknown keys are
//! rejected. Command-line flags override the values loaded here.

use std::path::{Path, PathBuf};

use figforge_core::compositor::{GenerationConfig, LabelStyle, MixPolicy, Split};
use figforge_core::curation::DecomposeParams;
use figforge_core::detection::EvalSettings;
use figforge_core::embed::MmdOptions;
use figforge_core::layout::LayoutConfig;
use figforge_core::perturb::PerturbationSpec;
use figforge_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayoutChoice {
    One(LayoutConfig),
    Many(Vec<LayoutConfig>),
}

impl LayoutChoice {
    pub fn to_vec(&self) -> Vec<LayoutConfig> {
        match self {
            LayoutChoice::One(l) => vec![l.clone()],
            LayoutChoice::Many(v) => v.clone(),
        }
    }
}

impl Default for LayoutChoice {
    fn default() -> Self {
        LayoutChoice::One(LayoutConfig::default())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub count: u64,
    pub master_seed: u64,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    #[serde(flatten)]
    pub decompose: DecomposeParams,
    pub score_threshold: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            decompose: DecomposeParams::default(),
            score_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    pub ks: Vec<usize>,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection { ks: vec![10, 50, 200] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub layout: LayoutChoice,
    pub mix: MixPolicy,
    pub label_style: LabelStyle,
    pub pool_index: Option<PathBuf>,
    pub generation: GenerationSection,
    pub eval: EvalSettings,
    pub perturbations: Vec<PerturbationSpec>,
    pub filter: FilterSection,
    pub retrieval: RetrievalSection,
    pub mmd: MmdOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            layout: LayoutChoice::default(),
            mix: MixPolicy::uniform(),
            label_style: LabelStyle::default(),
            pool_index: None,
            generation: GenerationSection::default(),
            eval: EvalSettings::default(),
            perturbations: PerturbationSpec::default_suite(),
            filter: FilterSection::default(),
            retrieval: RetrievalSection::default(),
            mmd: MmdOptions::default(),
        }
    }
}

impl RunConfig {
    /// Loads and validates a config file. Relative `pool_index` paths are
    /// resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: format!("column {}: {e}", e.column()),
        })?;
        if let Some(p) = &cfg.pool_index {
            if p.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new(""));
                cfg.pool_index = Some(base.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for l in self.layout.to_vec() {
            l.validate()?;
        }
        self.mix.validate()?;
        self.eval.validate()?;
        for p in &self.perturbations {
            p.validate()?;
        }
        if self.retrieval.ks.contains(&0) {
            return Err(Error::config("retrieval.ks entries must be >= 1"));
        }
        let f = &self.filter;
        for (name, v) in [
            ("filter.min_score", f.decompose.min_score),
            ("filter.nms_iou", f.decompose.nms_iou),
            ("filter.score_threshold", f.score_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} {v} outside [0,1]")));
            }
        }
        if self.mmd.permutations == 0 {
            return Err(Error::config("mmd.permutations must be >= 1"));
        }
        if let Some(s) = self.mmd.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::config(format!("mmd.sigma {s} must be positive")));
            }
        }
        if self.generation.workers == Some(0) {
            return Err(Error::config("generation.workers must be >= 1"));
        }
        Ok(())
    }

    pub fn generation_config(&self) -> GenerationConfig {
        GenerationConfig {
            layouts: self.layout.to_vec(),
            mix: self.mix.clone(),
            label_style: self.label_style,
            split: self.generation.split,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"generation":{"cnt":3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"extra":1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"filter":{"min_scor":0.1}}"#).is_err());
    }

    #[test]
    fn layout_accepts_object_or_list() {
        let one = r#"{"layout":{"grid_rows":1,"grid_cols":2,"h_margin_range":[0,4],"v_margin_range":[0,4],"panel_aspect":1.0,"panel_base_size":64}}"#;
        let cfg: RunConfig = serde_json::from_str(one).unwrap();
        assert_eq!(cfg.layout.to_vec().len(), 1);
        let many = r#"{"layout":[{"grid_rows":1,"grid_cols":2,"h_margin_range":[0,4],"v_margin_range":[0,4],"panel_aspect":1.0,"panel_base_size":64},
                                 {"grid_rows":2,"grid_cols":2,"h_margin_range":[0,4],"v_margin_range":[0,4],"panel_aspect":1.5,"panel_base_size":64}]}"#;
        let cfg: RunConfig = serde_json::from_str(many).unwrap();
        assert_eq!(cfg.layout.to_vec().len(), 2);
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use hyperlab::algebra::IntMatrix;
use hyperlab::conjugacy::{ConjugacyConfig, DiagnosticsConfig};
use hyperlab::entropy::{EntropyConfig, SamplingMeasure};
use hyperlab::foliation::{GibbsConfig, TraceConfig};
use hyperlab::maps::{ExponentProfile, MapDocument, ShearFactor, TrigProfile};
use hyperlab::skew::{AcConfig, IntersectionConfig};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentParams {
    pub n: usize,
    pub samples: usize,
    pub point: Option<Vec<f64>>,
}

impl Default for ExponentParams {
    fn default() -> Self {
        ExponentParams {
            n: 10_000,
            samples: 16,
            point: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsParams {
    /// Bundle index; the top bundle when absent.
    pub sigma: Option<usize>,
    pub point: Option<Vec<f64>>,
    pub trace: TraceConfig,
    pub gibbs: GibbsConfig,
    pub equivariance_depth: usize,
    /// Points per axis of a cached bundle grid; `0` skips the grid.
    pub bundle_grid: usize,
}

impl Default for GibbsParams {
    fn default() -> Self {
        GibbsParams {
            sigma: None,
            point: None,
            trace: TraceConfig::default(),
            gibbs: GibbsConfig::default(),
            equivariance_depth: 40,
            bundle_grid: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyParams {
    pub sigma: Option<usize>,
    pub measure: SamplingMeasure,
    pub config: EntropyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkewParams {
    pub entropy: EntropyConfig,
    pub leaf_samples: usize,
    pub exponent_samples: usize,
    pub exponent_length: usize,
}

impl Default for SkewParams {
    fn default() -> Self {
        SkewParams {
            entropy: EntropyConfig::default(),
            leaf_samples: 16,
            exponent_samples: 16,
            exponent_length: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KatokParams {
    pub matrix: IntMatrix,
    pub template: Vec<ShearFactor>,
    pub profile: ExponentProfile,
    /// Number of grid intervals; the family has `members + 1` maps.
    pub members: usize,
    pub threshold: f64,
    pub source: usize,
    /// Target member; the last one when absent.
    pub target: Option<usize>,
    pub spread_margin: f64,
    pub test_points: usize,
    pub exponent_samples: usize,
    pub exponent_length: usize,
    pub ac: AcConfig,
    pub intersection: IntersectionConfig,
}

impl Default for KatokParams {
    fn default() -> Self {
        KatokParams {
            matrix: "2,1;1,1".parse().expect("cat map literal"),
            template: vec![
                ShearFactor::new(0, 1, 0.35, TrigProfile::unit_sine(1)),
                ShearFactor::new(1, 0, 0.35, TrigProfile::unit_sine(1)),
            ],
            profile: ExponentProfile::Varying,
            members: 4,
            threshold: 3.0,
            source: 0,
            target: None,
            spread_margin: 0.01,
            test_points: 100,
            exponent_samples: 10,
            exponent_length: 4000,
            ac: AcConfig::default(),
            intersection: IntersectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: Option<MapDocument>,
    pub seed: u64,
    pub output: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub exponents: ExponentParams,
    pub conjugacy: ConjugacyConfig,
    pub diagnostics: DiagnosticsConfig,
    pub gibbs: GibbsParams,
    pub entropy: EntropyParams,
    pub skew: SkewParams,
    pub katok: KatokParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            map: None,
            seed: 0,
            output: PathBuf::from("hyperlab-out"),
            cache_dir: None,
            exponents: ExponentParams::default(),
            conjugacy: ConjugacyConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            gibbs: GibbsParams::default(),
            entropy: EntropyParams::default(),
            skew: SkewParams::default(),
            katok: KatokParams::default(),
        }
    }
}

/// Inline overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub matrix: Option<String>,
    pub map: Option<String>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub sigma: Option<usize>,
    pub n: Option<usize>,
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError {
            field: if path == "." {
                origin.to_string()
            } else {
                format!("{origin}:{path}")
            },
            message: e.into_inner().to_string(),
        }
    })
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| ConfigError {
                    field: p.display().to_string(),
                    message: e.to_string(),
                })?;
                parse_json(&text, &p.display().to_string())?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(m) = &overrides.matrix {
            let matrix: IntMatrix = m.parse().map_err(|e: hyperlab::Error| ConfigError {
                field: "--matrix".into(),
                message: e.to_string(),
            })?;
            cfg.map = Some(MapDocument::Linear { matrix });
        }
        if let Some(doc) = &overrides.map {
            cfg.map = Some(parse_json(doc, "--map")?);
        }
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(o) = &overrides.output {
            cfg.output = o.clone();
        }
        if let Some(c) = &overrides.cache_dir {
            cfg.cache_dir = Some(c.clone());
        }
        if let Some(s) = overrides.sigma {
            cfg.gibbs.sigma = Some(s);
            cfg.entropy.sigma = Some(s);
        }
        if let Some(n) = overrides.n {
            cfg.exponents.n = n;
        }
        cfg.conjugacy.seed = cfg.seed;
        cfg.diagnostics.seed = cfg.seed;
        cfg.entropy.config.seed = cfg.seed;
        cfg.skew.entropy.seed = cfg.seed;
        cfg.katok.intersection.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn map_document(&self) -> Result<&MapDocument, ConfigError> {
        self.map.as_ref().ok_or_else(|| ConfigError {
            field: "map".into(),
            message: "this experiment needs a map (config `map`, `--matrix` or `--map`)".into(),
        })
    }
}

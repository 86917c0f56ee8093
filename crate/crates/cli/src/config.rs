//! Run configuration: one JSON document per invocation.

use std::path::{Path, PathBuf};

use jumpflow::spaces::{bump_density, delta_density, uniform_density, SpaceSpec};
use jumpflow::{KernelSpec, Mean, ProbabilityDensity, SolverConfig, StateSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub space: SpaceSpec,
    pub kernel: KernelSpec,
    #[serde(default = "default_mean")]
    pub mean: Mean,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub geodesic: GeodesicParams,
    #[serde(default)]
    pub evolve: EvolveParams,
    #[serde(default)]
    pub evi: EviParams,
    #[serde(default)]
    pub convexity: ConvexityParams,
    #[serde(default)]
    pub compare_w1: CompareW1Params,
    #[serde(default)]
    pub means_check: MeansCheckParams,
    #[serde(default)]
    pub suite: SuiteParams,
}

fn default_mean() -> Mean {
    Mean::Logarithmic
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A density given by a named constructor or a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform,
    Delta {
        site: usize,
    },
    Bump {
        center: usize,
        width: f64,
        #[serde(default)]
        floor: f64,
    },
    /// Entries uniform on `[floor, 1]` before normalization.
    Random {
        #[serde(default = "default_floor")]
        floor: f64,
        /// Defaults to a value derived from the run seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Values {
        values: Vec<f64>,
        #[serde(default)]
        normalize: bool,
    },
    /// CSV with columns `state,value`; `#` lines are skipped. Relative
    /// paths resolve against the config file.
    File {
        path: PathBuf,
    },
}

fn default_floor() -> f64 {
    0.05
}

impl DensitySpec {
    pub fn build(&self, space: &StateSpace, seed: u64, base: &Path) -> Result<ProbabilityDensity, String> {
        let err = |e: jumpflow::Error| e.to_string();
        match self {
            DensitySpec::Uniform => Ok(uniform_density(space)),
            DensitySpec::Delta { site } => delta_density(space, *site).map_err(err),
            DensitySpec::Bump { center, width, floor } => bump_density(space, *center, *width, *floor).map_err(err),
            DensitySpec::Random { floor, seed: own } => {
                if !(*floor > 0.0 && *floor <= 1.0) {
                    return Err(format!("random density floor must lie in (0, 1], got {floor}"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(own.unwrap_or(seed));
                Ok(ProbabilityDensity::random(space, &mut rng, *floor))
            }
            DensitySpec::Values { values, normalize } => {
                if *normalize {
                    ProbabilityDensity::normalized(space, values.clone()).map_err(err)
                } else {
                    ProbabilityDensity::new(space, values.clone()).map_err(err)
                }
            }
            DensitySpec::File { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let text = std::fs::read_to_string(&full).map_err(|e| format!("{}: {e}", full.display()))?;
                let values = parse_density_csv(&text, space.len())?;
                ProbabilityDensity::new(space, values).map_err(err)
            }
        }
    }
}

/// Parses `state,value` rows (header and `#` lines allowed).
pub fn parse_density_csv(text: &str, n: usize) -> Result<Vec<f64>, String> {
    let mut values = vec![None; n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("state") {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("line {}: expected `state,value`", lineno + 1));
        };
        let i: usize = a
            .trim()
            .parse()
            .map_err(|_| format!("line {}: bad state index", lineno + 1))?;
        let v: f64 = b
            .trim()
            .parse()
            .map_err(|_| format!("line {}: bad value", lineno + 1))?;
        let slot = values
            .get_mut(i)
            .ok_or_else(|| format!("line {}: state {i} out of range", lineno + 1))?;
        if slot.replace(v).is_some() {
            return Err(format!("line {}: state {i} given twice", lineno + 1));
        }
    }
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| format!("state {i} missing")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeodesicParams {
    pub mu0: DensitySpec,
    pub mu1: DensitySpec,
}

impl Default for GeodesicParams {
    fn default() -> Self {
        GeodesicParams {
            mu0: DensitySpec::Random {
                floor: 0.05,
                seed: None,
            },
            mu1: DensitySpec::Random {
                floor: 0.05,
                seed: None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Auto,
    Dense,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveParams {
    pub rho0: DensitySpec,
    pub t: f64,
    pub backend: BackendChoice,
}

impl Default for EvolveParams {
    fn default() -> Self {
        EvolveParams {
            rho0: DensitySpec::Delta { site: 0 },
            t: 0.7,
            backend: BackendChoice::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EviParams {
    pub mu: DensitySpec,
    pub sigma: DensitySpec,
    pub t: f64,
    /// Defaults to `t/10`.
    pub dt: Option<f64>,
    pub tol: f64,
}

impl Default for EviParams {
    fn default() -> Self {
        EviParams {
            mu: DensitySpec::Random { floor: 0.1, seed: None },
            sigma: DensitySpec::Random { floor: 0.1, seed: None },
            t: 0.2,
            dt: None,
            tol: 5e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvexityParams {
    pub mu0: DensitySpec,
    pub mu1: DensitySpec,
    pub tol: f64,
}

impl Default for ConvexityParams {
    fn default() -> Self {
        ConvexityParams {
            mu0: DensitySpec::Random {
                floor: 0.05,
                seed: None,
            },
            mu1: DensitySpec::Random {
                floor: 0.05,
                seed: None,
            },
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareW1Params {
    pub pairs: usize,
    pub floor: f64,
    pub tol: f64,
}

impl Default for CompareW1Params {
    fn default() -> Self {
        CompareW1Params {
            pairs: 20,
            floor: 0.02,
            tol: 2e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeansCheckParams {
    pub means: Vec<Mean>,
    pub samples: usize,
    pub tol: f64,
}

impl Default for MeansCheckParams {
    fn default() -> Self {
        MeansCheckParams {
            means: Mean::ALL.to_vec(),
            samples: 100_000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteParams {
    /// Criterion ids; empty runs all.
    pub criteria: Vec<usize>,
}

/// The published schema; every config is checked against it before use.
pub const SCHEMA: &str = include_str!("../../../schema/run_config.schema.json");

fn schema_errors(value: &serde_json::Value) -> Result<(), String> {
    let schema: serde_json::Value = serde_json::from_str(SCHEMA).map_err(|e| format!("bundled schema: {e}"))?;
    let validator = jsonschema::validator_for(&schema).map_err(|e| format!("bundled schema: {e}"))?;
    let errors: Vec<String> = validator
        .iter_errors(value)
        .map(|e| format!("{} at `{}`", e, e.instance_path()))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(format!("schema violation: {}", errors.join("; ")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        schema_errors(&value)?;
        let config: RunConfig = serde_json::from_value(value).map_err(|e| e.to_string())?;
        config.solver.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parsing() {
        let v = parse_density_csv("# header\nstate,value\n1,0.5\n0,1.5\n", 2).unwrap();
        assert_eq!(v, vec![1.5, 0.5]);
        assert!(parse_density_csv("0,1\n0,2\n", 2).is_err());
        assert!(parse_density_csv("0,1\n", 2).is_err());
        assert!(parse_density_csv("0,1,2\n", 1).is_err());
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_json(
            r#"{"space": {"topology": "lattice", "extents": [8], "h": 0.125},
                "kernel": {"form": "fractional", "alpha": 1.0}}"#,
        )
        .unwrap();
        assert_eq!(c.mean, Mean::Logarithmic);
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let base =
            r#""space": {"topology": "lattice", "extents": [8]}, "kernel": {"form": "fractional", "alpha": 1.0}"#;
        assert!(RunConfig::from_json(&format!("{{{base}, \"extra\": 1}}")).is_err());
        assert!(RunConfig::from_json(&format!("{{{base}, \"evi\": {{\"t\": 0.1, \"oops\": 2}}}}")).is_err());
        assert!(RunConfig::from_json(&format!("{{{base}, \"solver\": {{\"K\": 0}}}}")).is_err());
    }

    #[test]
    fn schema_rejects_what_serde_would_accept() {
        let bad_alpha =
            r#"{"space": {"topology": "lattice", "extents": [8]}, "kernel": {"form": "fractional", "alpha": 2.5}}"#;
        let err = RunConfig::from_json(bad_alpha).unwrap_err();
        assert!(err.contains("schema violation"), "{err}");
        let bad_topology =
            r#"{"space": {"topology": "torus", "extents": [8]}, "kernel": {"form": "fractional", "alpha": 1.0}}"#;
        assert!(RunConfig::from_json(bad_topology)
            .unwrap_err()
            .contains("schema violation"));
    }

    #[test]
    fn schema_properties_match_serialized_config() {
        let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        let c = RunConfig::from_json(include_str!("../../../configs/default.json")).unwrap();
        let value = serde_json::to_value(&c).unwrap();
        let keys = |v: &serde_json::Value| -> Vec<String> {
            let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
            k.sort();
            k
        };
        let props = &schema["properties"];
        assert_eq!(keys(props), keys(&value));
        for section in [
            "solver",
            "evolve",
            "evi",
            "convexity",
            "compare_w1",
            "means_check",
            "suite",
            "geodesic",
        ] {
            assert_eq!(keys(&props[section]["properties"]), keys(&value[section]), "{section}");
        }
        // Re-serialized configs validate too.
        schema_errors(&value).unwrap();
    }
}

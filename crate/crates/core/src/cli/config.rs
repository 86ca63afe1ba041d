use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::LevyModel;
use crate::mehler::FleetFunction;
use crate::semigroup::OperatorGroup;

/// Suites understood by `verify`.
pub const SUITES: [&str; 7] = [
    "cocycle",
    "semigroup",
    "representation",
    "roundtrip",
    "urbanik",
    "marginals",
    "infinitesimal",
];

/// One verification run: the model, the generator, and what to check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: LevyModel,
    /// Row-major generator matrix `Q`.
    pub generator: Vec<Vec<f64>>,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub seed: u64,
    #[serde(default)]
    pub n_samples: SampleCounts,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_times() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 1.0, 2.0]
}

fn default_dyadic_times() -> Vec<f64> {
    (-4..=4).map(|k| 2f64.powi(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    /// Dual probe points; 20 deterministic points are generated when empty.
    pub y: Vec<Vec<f64>>,
    pub representation_times: Vec<f64>,
    pub decomposability_times: Vec<f64>,
    /// Factor-convergence times; `0, 1/|a|, …, 10/|a|` when empty.
    pub convergence_times: Vec<f64>,
    pub diamond_triples: usize,
    pub marginal_times: Vec<f64>,
    /// Negative control: evaluate `Z` at these times instead of `marginal_times`.
    pub marginal_z_times: Option<Vec<f64>>,
    pub infinitesimal_n: Vec<usize>,
    pub infinitesimal_t: f64,
    pub epsilon: f64,
    pub semigroup_pairs: Vec<(f64, f64)>,
    /// Starting point for Mehler operators; the origin when empty.
    pub x: Vec<f64>,
    pub test_functions: Vec<FleetFunction>,
    pub grid_step: f64,
    pub semigroup_grid_step: f64,
    pub roundtrip_level: u32,
    pub roundtrip_horizon: f64,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            t: default_times(),
            s: default_times(),
            y: Vec::new(),
            representation_times: vec![0.25, 1.0, 4.0],
            decomposability_times: default_dyadic_times(),
            convergence_times: Vec::new(),
            diamond_triples: 10,
            marginal_times: vec![0.5, 1.0, 2.0],
            marginal_z_times: None,
            infinitesimal_n: vec![8, 16, 32, 64],
            infinitesimal_t: 1.0,
            epsilon: 0.5,
            semigroup_pairs: vec![(0.5, 0.5)],
            x: Vec::new(),
            test_functions: Vec::new(),
            grid_step: 1.0 / 512.0,
            semigroup_grid_step: 0.25,
            roundtrip_level: 8,
            roundtrip_horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub quad_tol: f64,
    pub cocycle: f64,
    pub roundtrip: f64,
    pub decomposability: f64,
    pub diamond: f64,
    pub convergence_final: f64,
    pub convergence_slack: f64,
    /// CF agreement bound in units of `1/sqrt(N)`.
    pub cf_sigmas: f64,
    pub semigroup_sigmas: f64,
    pub ks_alpha: f64,
    pub infinitesimal_sigmas: f64,
    pub monotone_halfwidths: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            quad_tol: 1e-10,
            cocycle: 1e-8,
            roundtrip: 1e-9,
            decomposability: 1e-8,
            diamond: 1e-9,
            convergence_final: 1e-6,
            convergence_slack: 1e-9,
            cf_sigmas: 4.0,
            semigroup_sigmas: 4.0,
            ks_alpha: 0.01,
            infinitesimal_sigmas: 3.0,
            monotone_halfwidths: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleCounts {
    pub representation: usize,
    pub marginals: usize,
    pub semigroup_outer: usize,
    pub semigroup_inner: usize,
    pub infinitesimal: usize,
    pub roundtrip_paths: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        Self {
            representation: 100_000,
            marginals: 10_000,
            semigroup_outer: 10_000,
            semigroup_inner: 1_000,
            infinitesimal: 100_000,
            roundtrip_paths: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub name: String,
    pub model: LevyModel,
}

/// Settings for `experiment logmoment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizons: Vec<f64>,
    pub n_samples: usize,
    pub grid_step: f64,
    /// Models to compare; the run's main model when empty.
    pub models: Vec<NamedModel>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            horizons: vec![2.0, 4.0, 8.0, 16.0, 32.0],
            n_samples: 2000,
            grid_step: 0.25,
            models: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.group()?;
        let d = self.model.dim();
        if g.dim() != d {
            return Err(Error::Config(format!(
                "generator is {}x{} but model dimension is {d}",
                g.dim(),
                g.dim()
            )));
        }
        for s in &self.suites {
            if !SUITES.contains(&s.as_str()) {
                return Err(Error::UnknownSuite(s.clone()));
            }
        }
        if self.grids.y.iter().any(|y| y.len() != d) {
            return Err(Error::Config(
                "every y probe must have the model dimension".into(),
            ));
        }
        if !self.grids.x.is_empty() && self.grids.x.len() != d {
            return Err(Error::Config("x must have the model dimension".into()));
        }
        let all_times = self
            .grids
            .t
            .iter()
            .chain(&self.grids.s)
            .chain(&self.grids.decomposability_times);
        if all_times.into_iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::Config(
                "probe times must be finite and nonnegative".into(),
            ));
        }
        if !(self.grids.grid_step > 0.0 && self.grids.semigroup_grid_step > 0.0) {
            return Err(Error::Config("grid steps must be positive".into()));
        }
        if !(self.tolerances.quad_tol > 0.0) {
            return Err(Error::Config("quad_tol must be positive".into()));
        }
        if let Some(exp) = &self.experiment {
            if exp.models.iter().any(|m| m.model.dim() != d) {
                return Err(Error::Config(
                    "experiment models must have the generator dimension".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn group(&self) -> Result<OperatorGroup> {
        OperatorGroup::from_rows(&self.generator).map_err(|e| Error::Config(e.to_string()))
    }

    /// The configured y probes, or 20 deterministic points with norms in (0, 2].
    pub fn y_grid(&self) -> Vec<Vec<f64>> {
        if !self.grids.y.is_empty() {
            return self.grids.y.clone();
        }
        default_y_grid(self.model.dim())
    }

    pub fn x(&self) -> Vec<f64> {
        if self.grids.x.is_empty() {
            vec![0.0; self.model.dim()]
        } else {
            self.grids.x.clone()
        }
    }

    pub fn test_functions(&self) -> Vec<FleetFunction> {
        if !self.grids.test_functions.is_empty() {
            return self.grids.test_functions.clone();
        }
        let d = self.model.dim();
        let mut y1 = vec![0.0; d];
        y1[0] = 1.0;
        let y2: Vec<f64> = (0..d).map(|i| 0.5 + 0.25 * i as f64).collect();
        vec![
            FleetFunction::Cos { y: y1.clone() },
            FleetFunction::Sin { y: y2.clone() },
            FleetFunction::Cos { y: y2 },
            FleetFunction::Bump {
                center: vec![0.0; d],
                radius: 1.5,
            },
        ]
    }
}

/// Points on a golden-angle spiral with radii cycling through (0, 2].
pub fn default_y_grid(dim: usize) -> Vec<Vec<f64>> {
    (0..20)
        .map(|k| {
            let r = 0.1 * (k + 1) as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            match dim {
                1 => vec![sign * r],
                _ => {
                    let mut v: Vec<f64> = (0..dim)
                        .map(|i| ((k * (i + 1)) as f64 * 2.399_963_229_728_653 + i as f64).cos())
                        .collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    v.iter_mut().for_each(|x| *x *= r / n);
                    v
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"dim": 1, "drift": [0.0], "covariance": [[1.0]], "jump_rate": 0.0,
                  "jump_law": {"kind": "point_mass", "params": {"a": [0.0]}}},
        "generator": [[-1.0]],
        "suites": ["cocycle"],
        "seed": 42
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.grids.t.len(), 5);
        assert_eq!(c.y_grid().len(), 20);
        assert_eq!(c.tolerances.quad_tol, 1e-10);
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn rejects_unknown_suite_and_bad_dims() {
        let bad = MINIMAL.replace("\"cocycle\"", "\"nope\"");
        assert!(matches!(
            RunConfig::from_json(&bad),
            Err(Error::UnknownSuite(_))
        ));
        let bad = MINIMAL.replace("[[-1.0]]", "[[-1.0, 0.0], [0.0, -1.0]]");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config(_))));
        let bad = MINIMAL.replace("\"seed\": 42", "\"seed\": 42, \"extra\": 1");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = MINIMAL
            .replace(", \"seed\": 42", "")
            .replace("\"seed\": 42", "");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn default_grid_norms() {
        for d in 1..4 {
            let g = default_y_grid(d);
            for (k, y) in g.iter().enumerate() {
                let n = y.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 0.1 * (k + 1) as f64).abs() < 1e-12);
            }
        }
    }
}

//! Run configuration: defaults, an optional TOML file, then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vevp::driver::Scenario;
use vevp::fem::{LoadProgram, NEWTON_MAX_ITER, NEWTON_TOL};
use vevp::material::{Environment, MaterialParams};
use vevp::pathgen::GenerationConfig;
use vevp::surrogate::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream of a run derives from it.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub backend: String,
    pub weights: Option<PathBuf>,
    /// Dataset read by `train`.
    pub dataset: Option<PathBuf>,
    /// Parameter file applied on top of the bundled defaults.
    pub params_file: Option<PathBuf>,
    /// Individual parameter overrides, applied after `params_file`.
    pub material: BTreeMap<String, toml::Value>,
    pub environment: Environment,
    pub generate: GenerationConfig,
    pub train: TrainConfig,
    pub mp_drive: DriveSection,
    pub bench: BenchSection,
    pub fem: FemSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: None,
            backend: "classical".into(),
            weights: None,
            dataset: None,
            params_file: None,
            material: BTreeMap::new(),
            environment: Environment::DRY_NEAT,
            generate: GenerationConfig::default(),
            train: TrainConfig::default(),
            mp_drive: DriveSection::default(),
            bench: BenchSection::default(),
            fem: FemSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveSection {
    pub scenario: Scenario,
    /// Replays sequence `sequence` of this dataset instead of `scenario`.
    pub path_file: Option<PathBuf>,
    pub sequence: usize,
}

impl Default for DriveSection {
    fn default() -> Self {
        DriveSection {
            scenario: Scenario::UniaxialCyclic {
                amplitude: 0.01,
                rate: 5e-4,
                cycles: 2,
                dt: 0.2,
            },
            path_file: None,
            sequence: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Timings per step; the median is reported.
    pub repeats: usize,
    pub simple: Scenario,
    pub complex: Scenario,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            repeats: 5,
            simple: Scenario::UniaxialCyclic {
                amplitude: 0.005,
                rate: 5e-4,
                cycles: 1,
                dt: 0.2,
            },
            complex: Scenario::Complex {
                amplitude: 0.005,
                steps: 100,
                dt: 0.5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FemSection {
    /// Mesh in the text format; a structured box is built when absent.
    pub mesh_file: Option<PathBuf>,
    /// Box edge lengths, mm.
    pub size: [f64; 3],
    pub divisions: [usize; 3],
    /// Loading axis: the minimum faces are symmetry planes, the maximum face
    /// along this axis is displaced.
    pub axis: usize,
    pub program: LoadProgram,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// With the surrogate backend, also run the classical model and report
    /// the force error.
    pub compare: bool,
}

impl Default for FemSection {
    fn default() -> Self {
        FemSection {
            mesh_file: None,
            size: [1.0; 3],
            divisions: [1; 3],
            axis: 0,
            program: LoadProgram::cyclic(0.01, 5e-4, 2, 0.2),
            newton_tol: NEWTON_TOL,
            newton_max_iter: NEWTON_MAX_ITER,
            compare: true,
        }
    }
}

/// Values given on the command line; `None` leaves the file or default.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub backend: Option<String>,
    pub weights: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        Ok(toml::from_str(text)?)
    }

    /// Defaults, then `file`, then `flags`. Relative paths inside the file are
    /// taken relative to the file's directory.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<RunConfig> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                let mut cfg = RunConfig::from_toml(&text).with_context(|| format!("in config {}", path.display()))?;
                cfg.rebase(path.parent().unwrap_or(Path::new("")));
                cfg
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = flags.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &flags.out {
            cfg.out = Some(out.clone());
        }
        if let Some(backend) = &flags.backend {
            cfg.backend = backend.clone();
        }
        if let Some(w) = &flags.weights {
            cfg.weights = Some(w.clone());
        }
        if let Some(d) = &flags.dataset {
            cfg.dataset = Some(d.clone());
        }
        cfg.generate.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = dir.join(&*path);
                }
            }
        };
        fix(&mut self.out);
        fix(&mut self.weights);
        fix(&mut self.dataset);
        fix(&mut self.params_file);
        fix(&mut self.mp_drive.path_file);
        fix(&mut self.fem.mesh_file);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// SHA-256 of the resolved configuration. The output location is left
    /// out: it names where a result goes, not what was computed.
    pub fn fingerprint(&self) -> String {
        let computation = RunConfig {
            out: None,
            ..self.clone()
        };
        sha256_hex(computation.to_toml().as_bytes())
    }

    /// Bundled defaults, then `params_file`, then the `material` table.
    pub fn material_params(&self) -> Result<MaterialParams> {
        let mut params = match &self.params_file {
            Some(path) => MaterialParams::table3()
                .with_overrides(
                    &std::fs::read_to_string(path).with_context(|| format!("reading parameters {}", path.display()))?,
                    path,
                )?,
            None => MaterialParams::table3(),
        };
        for (key, value) in &self.material {
            let text = match value {
                toml::Value::String(s) => s.clone(),
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                other => bail!("material.{key}: expected a number or string, found {other}"),
            };
            params.set(key, &text).with_context(|| format!("material.{key}"))?;
        }
        params.validate()?;
        Ok(params)
    }

    pub fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

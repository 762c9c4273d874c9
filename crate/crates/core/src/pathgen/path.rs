//! Loading paths through the deformation-gradient box and their labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::halton::{halton_point, radical_inverse};
use crate::error::{Error, Result};
use crate::material::{integrate_path, Environment, MaterialParams};
use crate::tensor3::{green_strain, left_cauchy_green, voigt_pack, Tensor2};

/// Size of the end-of-path perturbation applied to one component of `F`.
pub const PERTURBATION: f64 = 1e-4;

/// Number of network input features per step.
pub const N_INPUTS: usize = 9;
/// Number of stress components per step.
pub const N_OUTPUTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    /// Range of the diagonal components of `F`.
    pub diag_bounds: [f64; 2],
    /// Range of the off-diagonal components of `F`.
    pub offdiag_bounds: [f64; 2],
    /// Range of the largest per-step component increment.
    pub df_range: [f64; 2],
    /// Range of the time step in seconds.
    pub dt_range: [f64; 2],
    /// Admissible per-step Green-strain rate in 1/s.
    pub rate_bounds: [f64; 2],
    /// Number of points visited by a path.
    pub points: usize,
    /// Walk steps per path, shared evenly by the visited points.
    pub steps: usize,
    pub seed: u64,
    pub max_retries: usize,
    /// Number of Halton points the visited points are drawn from.
    pub cloud_size: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            diag_bounds: [0.9, 1.1],
            offdiag_bounds: [-0.05, 0.05],
            df_range: [1e-6, 1e-4],
            dt_range: [0.05, 5.0],
            rate_bounds: [1e-5, 1e-3],
            points: 1,
            steps: 100,
            seed: 0,
            max_retries: 50,
            cloud_size: 10_000,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("diag_bounds", self.diag_bounds),
            ("offdiag_bounds", self.offdiag_bounds),
            ("df_range", self.df_range),
            ("dt_range", self.dt_range),
            ("rate_bounds", self.rate_bounds),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidConfig(format!("{name}: [{lo}, {hi}] is not an ordered range")));
            }
        }
        if !(self.diag_bounds[0] <= 1.0 && 1.0 <= self.diag_bounds[1]) {
            return Err(Error::InvalidConfig("diag_bounds must contain 1".into()));
        }
        if !(self.offdiag_bounds[0] <= 0.0 && 0.0 <= self.offdiag_bounds[1]) {
            return Err(Error::InvalidConfig("offdiag_bounds must contain 0".into()));
        }
        if !(self.df_range[0] > 0.0) || !(self.dt_range[0] > 0.0) {
            return Err(Error::InvalidConfig("df_range and dt_range must be positive".into()));
        }
        if self.points == 0 || self.steps < self.points {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= points <= steps, got points = {}, steps = {}",
                self.points, self.steps
            )));
        }
        if self.cloud_size == 0 {
            return Err(Error::InvalidConfig("cloud_size must be positive".into()));
        }
        Ok(())
    }

    fn bounds(&self, i: usize, j: usize) -> [f64; 2] {
        if i == j {
            self.diag_bounds
        } else {
            self.offdiag_bounds
        }
    }

    /// Maps a point of the unit cube (row-major components) into the box.
    fn map_point(&self, u: &[f64]) -> Tensor2 {
        Tensor2::from_fn(|i, j| {
            let [lo, hi] = self.bounds(i, j);
            lo + u[3 * i + j] * (hi - lo)
        })
    }
}

/// Which points a path visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    /// Points of the nine-dimensional Halton cloud.
    Cloud,
    /// Points that move a single component (row-major index) of `F`.
    SingleComponent(usize),
}

/// Deformation-gradient history with one time step per record.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingPath {
    pub f: Vec<Tensor2>,
    pub dt: Vec<f64>,
    pub env: Environment,
}

impl LoadingPath {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn records(&self) -> Vec<(Tensor2, f64)> {
        self.f.iter().copied().zip(self.dt.iter().copied()).collect()
    }
}

/// Per-step Green-strain rates `‖E(Fₖ) − E(Fₖ₋₁)‖ / Δtₖ`, one per step after
/// the first record.
pub fn step_rates(path: &LoadingPath) -> Vec<f64> {
    path.f
        .windows(2)
        .zip(&path.dt[1..])
        .map(|(w, dt)| (green_strain(&w[1]) - green_strain(&w[0])).norm() / dt)
        .collect()
}

/// Walks from `I` towards each target in turn, moving the largest component
/// by `df` per step. `steps` is split evenly across the targets; a target
/// reached early turns the walk back towards `I`.
pub fn walk(targets: &[Tensor2], df: f64, steps: usize) -> Vec<Tensor2> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut cur = Tensor2::identity();
    out.push(cur);
    let n = targets.len();
    for (k, target) in targets.iter().enumerate() {
        let seg_len = steps / n + usize::from(k < steps % n);
        let mut goal = *target;
        for _ in 0..seg_len {
            let d = goal - cur;
            let m = d.amax();
            if m <= df {
                cur = goal;
                goal = Tensor2::identity();
            } else {
                cur += d * (df / m);
            }
            out.push(cur);
        }
    }
    out
}

/// Generates one loading path. Paths whose step rates leave
/// `cfg.rate_bounds` are redrawn, up to `cfg.max_retries` times.
pub fn generate_path(cfg: &PathConfig, kind: PathKind, env: &Environment) -> Result<LoadingPath> {
    cfg.validate()?;
    env.validate()?;
    if let PathKind::SingleComponent(c) = kind {
        if c >= 9 {
            return Err(Error::InvalidConfig(format!("component index {c} outside 0..9")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let [r_lo, r_hi] = cfg.rate_bounds;
    let mut worst = (f64::NAN, f64::NAN);
    for _ in 0..=cfg.max_retries {
        let targets: Vec<Tensor2> = (0..cfg.points)
            .map(|_| {
                let index = rng.gen_range(1..=cfg.cloud_size);
                match kind {
                    PathKind::Cloud => cfg.map_point(&halton_point(index, 9)),
                    PathKind::SingleComponent(c) => {
                        let (i, j) = (c / 3, c % 3);
                        let [lo, hi] = cfg.bounds(i, j);
                        let mut t = Tensor2::identity();
                        t[(i, j)] = lo + radical_inverse(index, 2) * (hi - lo);
                        t
                    }
                }
            })
            .collect();
        let df = rng.gen_range(cfg.df_range[0]..=cfg.df_range[1]);
        let dt = rng.gen_range(cfg.dt_range[0]..=cfg.dt_range[1]);
        let f = walk(&targets, df, cfg.steps);
        let path = LoadingPath {
            dt: vec![dt; f.len()],
            f,
            env: *env,
        };
        let rates = step_rates(&path);
        let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rates.iter().copied().fold(0.0, f64::max);
        if lo >= r_lo && hi <= r_hi {
            return Ok(path);
        }
        worst = (lo, hi);
    }
    Err(Error::RetriesExhausted {
        retries: cfg.max_retries,
        reason: format!(
            "last attempt had step rates in [{:e}, {:e}], required [{r_lo:e}, {r_hi:e}]",
            worst.0, worst.1
        ),
    })
}

/// Appends a copy of the last record with one randomly chosen component of
/// `F` raised by [`PERTURBATION`].
///
/// # Panics
/// If the path is empty.
pub fn perturb_last_step(path: &LoadingPath, seed: u64) -> LoadingPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, j) = (rng.gen_range(0..3), rng.gen_range(0..3));
    let mut out = path.clone();
    let mut f = *path.f.last().expect("path must not be empty");
    f[(i, j)] += PERTURBATION;
    out.f.push(f);
    out.dt.push(*path.dt.last().unwrap());
    out
}

/// Network inputs and stress targets of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSequence {
    pub env: Environment,
    pub dt_list: Vec<f64>,
    /// Row-major deformation gradients, kept so the path can be relabelled.
    pub deformation: Vec<[f64; 9]>,
    /// `(B₁₁, B₂₂, B₃₃, B₁₂, B₁₃, B₂₃, Δt, w_w, v_np)` per step.
    pub inputs: Vec<[f64; N_INPUTS]>,
    /// Undamaged total Cauchy stress per step, MPa.
    pub targets: Vec<[f64; N_OUTPUTS]>,
}

impl TrainingSequence {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn path(&self) -> LoadingPath {
        LoadingPath {
            f: self.deformation.iter().map(|r| Tensor2::from_row_slice(r)).collect(),
            dt: self.dt_list.clone(),
            env: self.env,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.inputs.len();
        if self.targets.len() != n || self.dt_list.len() != n || self.deformation.len() != n {
            return Err(Error::Shape(format!(
                "sequence lengths differ: inputs {n}, targets {}, dt {}, deformation {}",
                self.targets.len(),
                self.dt_list.len(),
                self.deformation.len()
            )));
        }
        Ok(())
    }
}

/// Network input row for one step.
pub fn input_row(f: &Tensor2, dt: f64, env: &Environment) -> [f64; N_INPUTS] {
    let b = left_cauchy_green(f);
    [b[(0, 0)], b[(1, 1)], b[(2, 2)], b[(0, 1)], b[(0, 2)], b[(1, 2)], dt, env.w_w, env.v_np]
}

fn row_major(f: &Tensor2) -> [f64; 9] {
    std::array::from_fn(|k| f[(k / 3, k % 3)])
}

/// Integrates the model along `path` from the virgin state and records the
/// undamaged total stress.
pub fn label_path(path: &LoadingPath, params: &MaterialParams) -> Result<TrainingSequence> {
    let steps = integrate_path(&path.records(), &path.env, params)?;
    let mut targets = Vec::with_capacity(steps.len());
    for (k, s) in steps.iter().enumerate() {
        let v = voigt_pack(&s.stress.sigma_tot).map_err(|e| e.at_step(k))?;
        targets.push(std::array::from_fn(|c| v[c]));
    }
    Ok(TrainingSequence {
        env: path.env,
        dt_list: path.dt.clone(),
        deformation: path.f.iter().map(row_major).collect(),
        inputs: path.f.iter().zip(&path.dt).map(|(f, &dt)| input_row(f, dt, &path.env)).collect(),
        targets,
    })
}

/// Recipe for a whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub count: usize,
    pub seed: u64,
    /// Numbers of visited points, used round-robin.
    pub points: Vec<usize>,
    /// Moisture contents drawn per sequence.
    pub moisture: Vec<f64>,
    /// Filler fractions drawn per sequence.
    pub filler: Vec<f64>,
    /// Share of single-component paths.
    pub uniform_fraction: f64,
    pub path: PathConfig,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            count: 100,
            seed: 0,
            points: vec![1, 3, 6],
            moisture: vec![0.0, 0.012],
            filler: vec![0.0, 0.1],
            uniform_fraction: 0.05,
            path: PathConfig::default(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        self.path.validate()?;
        if self.points.is_empty() || self.moisture.is_empty() || self.filler.is_empty() {
            return Err(Error::InvalidConfig("points, moisture and filler must be non-empty".into()));
        }
        for &p in &self.points {
            PathConfig { points: p, ..self.path.clone() }.validate()?;
        }
        for &w in &self.moisture {
            for &v in &self.filler {
                Environment::new(w, v).validate()?;
            }
        }
        if !(0.0..=1.0).contains(&self.uniform_fraction) {
            return Err(Error::InvalidConfig(format!(
                "uniform_fraction {} outside [0, 1]",
                self.uniform_fraction
            )));
        }
        Ok(())
    }

    /// Number of single-component sequences; they come first.
    pub fn uniform_count(&self) -> usize {
        (self.count as f64 * self.uniform_fraction).round() as usize
    }

    /// Generates, perturbs and labels sequence `index`. Each sequence has its
    /// own random stream, so the result does not depend on evaluation order.
    pub fn sequence(&self, index: usize, params: &MaterialParams) -> Result<TrainingSequence> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let env = Environment::new(
            self.moisture[rng.gen_range(0..self.moisture.len())],
            self.filler[rng.gen_range(0..self.filler.len())],
        );
        let cfg = PathConfig {
            points: self.points[index % self.points.len()],
            seed: rng.gen(),
            ..self.path.clone()
        };
        let kind = if index < self.uniform_count() {
            PathKind::SingleComponent(index % 9)
        } else {
            PathKind::Cloud
        };
        let path = generate_path(&cfg, kind, &env)?;
        label_path(&perturb_last_step(&path, rng.gen()), params)
    }
}

/// Generates every sequence of `cfg` in parallel.
pub fn generate_dataset(cfg: &GenerationConfig, params: &MaterialParams) -> Result<Vec<TrainingSequence>> {
    cfg.validate()?;
    params.validate()?;
    (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            cfg.sequence(i, params).map_err(|e| Error::Sequence {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walk_reaches_near_targets_and_turns_back() {
        let mut t = Tensor2::identity();
        t[(0, 0)] = 1.0 + 5e-4;
        let f = walk(&[t], 1e-4, 8);
        assert_eq!(f.len(), 9);
        assert_eq!(f[5], t);
        assert!((f[8][(0, 0)] - (1.0 + 2e-4)).abs() < 1e-15);
    }

    #[test]
    fn perturbation_touches_one_component() {
        let path = LoadingPath {
            f: vec![Tensor2::identity(); 3],
            dt: vec![0.5; 3],
            env: Environment::DRY_NEAT,
        };
        for seed in 0..20 {
            let p = perturb_last_step(&path, seed);
            assert_eq!(p.len(), 4);
            let changed: Vec<usize> = (0..9).filter(|&k| p.f[3][(k / 3, k % 3)] != p.f[2][(k / 3, k % 3)]).collect();
            assert_eq!(changed.len(), 1);
            let (i, j) = (changed[0] / 3, changed[0] % 3);
            assert_eq!(p.f[3][(i, j)], p.f[2][(i, j)] + PERTURBATION);
        }
    }

    #[test]
    fn rejects_unordered_bounds() {
        let cfg = PathConfig {
            dt_range: [5.0, 0.05],
            ..PathConfig::default()
        };
        assert!(matches!(
            generate_path(&cfg, PathKind::Cloud, &Environment::DRY_NEAT),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn unsatisfiable_rates_exhaust_retries() {
        let cfg = PathConfig {
            rate_bounds: [1.0, 2.0],
            max_retries: 3,
            ..PathConfig::default()
        };
        assert!(matches!(
            generate_path(&cfg, PathKind::Cloud, &Environment::DRY_NEAT),
            Err(Error::RetriesExhausted { retries: 3, .. })
        ));
    }
}

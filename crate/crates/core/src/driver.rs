//! Material-point driver: scripted deformation histories applied to a single
//! point of either backend, plus per-step timing.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::MaterialBackend;
use crate::error::{Error, Result};
use crate::material::Environment;
use crate::pathgen::LoadingPath;
use crate::tensor3::{green_strain, voigt_pack_unchecked, Tensor2, Voigt6};

/// Built-in loading histories. Strains are engineering measures of the
/// driving component; every history starts at `F = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scenario {
    /// Volume-preserving uniaxial stretch cycled between 0 and `amplitude`.
    UniaxialCyclic { amplitude: f64, rate: f64, cycles: usize, dt: f64 },
    /// Simple shear `F = I + γ e₁⊗e₂` cycled between 0 and `amplitude`.
    ShearCyclic { amplitude: f64, rate: f64, cycles: usize, dt: f64 },
    /// Smooth history moving all nine components of `F` at once.
    Complex { amplitude: f64, steps: usize, dt: f64 },
}

impl Scenario {
    pub fn path(&self, env: Environment) -> Result<LoadingPath> {
        match *self {
            Scenario::UniaxialCyclic {
                amplitude,
                rate,
                cycles,
                dt,
            } => Ok(cyclic(amplitude, rate, cycles, dt, env, |e| {
                let lateral = (1.0 + e).powf(-0.5);
                Tensor2::new(1.0 + e, 0.0, 0.0, 0.0, lateral, 0.0, 0.0, 0.0, lateral)
            })?),
            Scenario::ShearCyclic {
                amplitude,
                rate,
                cycles,
                dt,
            } => Ok(cyclic(amplitude, rate, cycles, dt, env, |g| {
                let mut f = Tensor2::identity();
                f[(0, 1)] = g;
                f
            })?),
            Scenario::Complex { amplitude, steps, dt } => {
                if !(dt > 0.0) || steps == 0 {
                    return Err(Error::InvalidConfig("complex path needs steps > 0 and dt > 0".into()));
                }
                Ok(LoadingPath {
                    f: (0..=steps).map(|k| complex_point(amplitude, k as f64 / steps as f64)).collect(),
                    dt: vec![dt; steps + 1],
                    env,
                })
            }
        }
    }
}

/// Triangle wave `0 → amplitude → 0`, repeated `cycles` times at `rate`.
fn cyclic(amplitude: f64, rate: f64, cycles: usize, dt: f64, env: Environment, map: impl Fn(f64) -> Tensor2) -> Result<LoadingPath> {
    if !(dt > 0.0) || !(rate > 0.0) || !(amplitude > 0.0) || cycles == 0 {
        return Err(Error::InvalidConfig(
            "cyclic path needs positive amplitude, rate, dt and cycles".into(),
        ));
    }
    let half = amplitude / rate;
    let steps = (2.0 * half * cycles as f64 / dt).round() as usize;
    let f = (0..=steps)
        .map(|k| {
            let phase = (k as f64 * dt / half) % 2.0;
            map(if phase <= 1.0 { phase * amplitude } else { (2.0 - phase) * amplitude })
        })
        .collect();
    Ok(LoadingPath {
        f,
        dt: vec![dt; steps + 1],
        env,
    })
}

/// Point `s ∈ [0, 1]` of the all-component history: each component follows
/// its own phase-shifted `sin²` pulse, so the path starts at `I`.
fn complex_point(amplitude: f64, s: f64) -> Tensor2 {
    const WEIGHTS: [f64; 9] = [1.0, 0.6, -0.5, -0.7, 0.8, 0.4, 0.3, -0.4, -0.6];
    const FREQ: [f64; 9] = [1.0, 1.5, 2.0, 1.0, 2.5, 1.5, 2.0, 1.0, 0.5];
    Tensor2::from_fn(|i, j| {
        let k = 3 * i + j;
        let pulse = (std::f64::consts::PI * FREQ[k] * s).sin().powi(2);
        f64::from(u8::from(i == j)) + amplitude * WEIGHTS[k] * pulse
    })
}

/// Response of one step of a drive.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveRecord {
    pub time: f64,
    pub green: Voigt6,
    pub stress: Voigt6,
    pub undamaged: Voigt6,
    pub d: f64,
    pub iterations: usize,
    /// Wall time of the material evaluation, seconds.
    pub seconds: f64,
}

/// Runs `path` through a fresh point of `backend`.
pub fn drive(backend: &dyn MaterialBackend, path: &LoadingPath, with_tangent: bool) -> Result<Vec<DriveRecord>> {
    let mut record = backend.new_record();
    let mut time = 0.0;
    let mut out = Vec::with_capacity(path.len());
    for (k, (f, &dt)) in path.f.iter().zip(&path.dt).enumerate() {
        let start = Instant::now();
        let r = backend.evaluate(&record, f, dt, &path.env, with_tangent).map_err(|e| e.at_step(k))?;
        let seconds = start.elapsed().as_secs_f64();
        if k > 0 {
            time += dt;
        }
        out.push(DriveRecord {
            time,
            green: voigt_pack_unchecked(&green_strain(f)),
            stress: r.stress,
            undamaged: r.undamaged,
            d: r.d,
            iterations: r.iterations,
            seconds,
        });
        backend.commit(&mut record, r.trial)?;
    }
    Ok(out)
}

const COMPONENTS: [&str; 6] = ["11", "22", "33", "12", "13", "23"];

pub fn write_drive_csv(location: &Path, comments: &[String], records: &[DriveRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(location)?);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let mut header = vec!["step".to_string(), "time_s".into()];
    for prefix in ["E", "sigma", "sigma_undamaged"] {
        header.extend(COMPONENTS.iter().map(|c| format!("{prefix}_{c}")));
    }
    header.extend(["damage".into(), "iterations".into()]);
    writeln!(w, "{}", header.join(","))?;
    for (k, r) in records.iter().enumerate() {
        let mut row = vec![k.to_string(), r.time.to_string()];
        for v in [&r.green, &r.stress, &r.undamaged] {
            row.extend(v.iter().map(f64::to_string));
        }
        row.extend([r.d.to_string(), r.iterations.to_string()]);
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Per-step evaluation cost of a backend along a path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSeries {
    pub backend: String,
    /// Median over the repeats of each step's evaluation (stress and
    /// tangent), seconds.
    pub step_seconds: Vec<f64>,
    pub iterations: Vec<usize>,
    /// First step at which the viscoplastic dashpot is active, if any.
    pub activation_step: Option<usize>,
}

impl BenchSeries {
    pub fn total(&self) -> f64 {
        self.step_seconds.iter().sum()
    }

    /// Coefficient of variation of the per-step times.
    pub fn cv(&self) -> f64 {
        coefficient_of_variation(&self.step_seconds)
    }
}

pub fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Times every step of `path` `repeats` times (stress and tangent) before
/// committing it once.
pub fn bench(backend: &dyn MaterialBackend, path: &LoadingPath, repeats: usize) -> Result<BenchSeries> {
    let repeats = repeats.max(1);
    let mut record = backend.new_record();
    let mut series = BenchSeries {
        backend: backend.name().to_string(),
        step_seconds: Vec::with_capacity(path.len()),
        iterations: Vec::with_capacity(path.len()),
        activation_step: None,
    };
    let mut samples = vec![0.0; repeats];
    for (k, (f, &dt)) in path.f.iter().zip(&path.dt).enumerate() {
        let mut response = None;
        for sample in samples.iter_mut() {
            let start = Instant::now();
            let r = backend.evaluate(&record, f, dt, &path.env, true).map_err(|e| e.at_step(k))?;
            *sample = start.elapsed().as_secs_f64();
            response = Some(r);
        }
        samples.sort_by(f64::total_cmp);
        series.step_seconds.push(samples[repeats / 2]);
        let r = response.expect("at least one repeat");
        series.iterations.push(r.iterations);
        if series.activation_step.is_none() {
            if let crate::backend::PointTrial::Classical(state) = &r.trial {
                if state.eps_onset.is_some() {
                    series.activation_step = Some(k);
                }
            }
        }
        backend.commit(&mut record, r.trial)?;
    }
    Ok(series)
}

/// Writes the per-step series of several backends side by side.
pub fn write_bench_csv(location: &Path, comments: &[String], series: &[BenchSeries]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(location)?);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let mut header = vec!["step".to_string()];
    for s in series {
        header.push(format!("{}_seconds", s.backend));
        header.push(format!("{}_iterations", s.backend));
    }
    writeln!(w, "{}", header.join(","))?;
    let steps = series.iter().map(|s| s.step_seconds.len()).max().unwrap_or(0);
    for k in 0..steps {
        let mut row = vec![k.to_string()];
        for s in series {
            row.push(s.step_seconds.get(k).map_or(String::new(), |x| x.to_string()));
            row.push(s.iterations.get(k).map_or(String::new(), |x| x.to_string()));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

//! One function per subcommand. Each returns the lines of its report.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use vevp::backend::{BackendRegistry, MaterialBackend};
use vevp::driver::{bench, drive, write_drive_csv, BenchSeries};
use vevp::fem::{force_mae, read_mesh, run_program, write_program_csv, Dirichlet, FeModel, Mesh, ProgramRow};
use vevp::material::MaterialParams;
use vevp::pathgen::{generate_dataset, read_dataset, write_dataset, LoadingPath, Manifest, TrainingSequence};
use vevp::surrogate::{
    component_mae, fit_from, load_weights, target_std, weights_to_string_with, write_loss_log, NetworkParams,
};

use crate::config::{sha256_hex, RunConfig};

/// Shared per-run context: the resolved config and what identifies it.
pub struct Run {
    pub cfg: RunConfig,
    pub command: &'static str,
    pub fingerprint: String,
}

impl Run {
    pub fn new(cfg: RunConfig, command: &'static str) -> Run {
        let fingerprint = cfg.fingerprint();
        Run {
            cfg,
            command,
            fingerprint,
        }
    }

    /// Comment lines written at the top of every CSV output.
    fn comments(&self, params: Option<&MaterialParams>) -> Vec<String> {
        let mut c = vec![format!("vevp {} config-sha256 {}", self.command, self.fingerprint)];
        if let Some(p) = params {
            c.push(format!("params-sha256 {}", sha256_hex(p.to_text().as_bytes())));
        }
        c
    }

    fn network(&self) -> Result<Option<Arc<NetworkParams>>> {
        match &self.cfg.weights {
            Some(path) => Ok(Some(Arc::new(load_weights(path, None)?))),
            None => Ok(None),
        }
    }

    fn backend(&self, name: &str, params: &MaterialParams, network: Option<Arc<NetworkParams>>) -> Result<Arc<dyn MaterialBackend>> {
        let registry = BackendRegistry::default();
        registry.create(name, params, network).map_err(|e| {
            anyhow!(e).context(format!("backend `{name}` (available: {})", registry.names().join(", ")))
        })
    }
}

pub fn generate(run: &Run) -> Result<Vec<String>> {
    let cfg = &run.cfg.generate;
    cfg.validate()?;
    let params = run.cfg.material_params()?;
    let out = run.cfg.out_or("dataset.jsonl");
    let seqs = generate_dataset(cfg, &params)?;
    let manifest = Manifest {
        seed: cfg.seed,
        count: seqs.len(),
        config: serde_json::json!({
            "generation": cfg,
            "config_sha256": run.fingerprint,
        }),
        params_fingerprint: sha256_hex(params.to_text().as_bytes()),
    };
    write_dataset(&out, Some(&manifest), &seqs)?;
    let steps: usize = seqs.iter().map(TrainingSequence::len).sum();
    Ok(vec![format!("wrote {} sequences ({steps} steps) to {}", seqs.len(), out.display())])
}

fn load_sequences(path: Option<&Path>) -> Result<Vec<TrainingSequence>> {
    let path = path.ok_or_else(|| anyhow!("no dataset given; pass --dataset or set `dataset` in the config"))?;
    if !path.exists() {
        bail!("dataset {} does not exist", path.display());
    }
    Ok(read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))?.sequences)
}

pub fn train(run: &Run) -> Result<Vec<String>> {
    let cfg = &run.cfg.train;
    cfg.validate()?;
    let dataset = run.cfg.dataset.as_deref();
    let seqs = load_sequences(dataset)?;
    let initial = run.network()?.map(|p| (*p).clone());
    let out = run.cfg.out_or("weights.json");
    let loss_path = out.with_extension("loss.csv");

    let result = fit_from(&seqs, cfg, initial, |r| {
        eprintln!("epoch {:>4}  lr {:.0e}  train {:.5}  val {:.5}", r.epoch, r.lr, r.train_mae, r.val_mae);
    })?;

    let mut provenance = BTreeMap::new();
    provenance.insert("config_sha256".to_string(), run.fingerprint.clone());
    if let Some(d) = dataset {
        provenance.insert("dataset_sha256".to_string(), sha256_hex(&std::fs::read(d)?));
    }
    std::fs::write(&out, weights_to_string_with(&result.params, &provenance))?;
    write_loss_log(&loss_path, &run.comments(None), &result.history)?;

    let val: Vec<&TrainingSequence> = result.val_indices.iter().map(|&i| &seqs[i]).collect();
    let mae = component_mae(&val, &result.params)?;
    let std = target_std(&val)?;
    let first = result.history.first().expect("at least one epoch");
    let best = result.history.iter().map(|r| r.val_mae).fold(f64::INFINITY, f64::min);
    let mut report = vec![
        format!("trained H = {} on {} sequences ({} validation)", cfg.hidden, result.train_indices.len(), val.len()),
        format!("train MAE {:.5} -> {:.5} MPa, best validation MAE {best:.5} MPa", first.train_mae, result.history.last().unwrap().train_mae),
    ];
    for (c, name) in ["11", "22", "33", "12", "13", "23"].iter().enumerate() {
        report.push(format!(
            "sigma_{name}: validation MAE {:.5} MPa = {:.2}% of target std {:.4} MPa",
            mae[c],
            100.0 * mae[c] / std[c],
            std[c]
        ));
    }
    report.push(format!("wrote {} and {}", out.display(), loss_path.display()));
    Ok(report)
}

pub fn mp_drive(run: &Run) -> Result<Vec<String>> {
    let params = run.cfg.material_params()?;
    let section = &run.cfg.mp_drive;
    let path: LoadingPath = match &section.path_file {
        Some(file) => {
            let seqs = read_dataset(file).with_context(|| format!("reading path file {}", file.display()))?.sequences;
            seqs.get(section.sequence)
                .ok_or_else(|| anyhow!("{} holds {} sequences, no index {}", file.display(), seqs.len(), section.sequence))?
                .path()
        }
        None => section.scenario.path(run.cfg.environment)?,
    };
    let backend = run.backend(&run.cfg.backend, &params, run.network()?)?;
    let records = drive(backend.as_ref(), &path, false)?;
    let out = run.cfg.out_or("mp_drive.csv");
    write_drive_csv(&out, &run.comments(Some(&params)), &records)?;
    let peak = records.iter().map(|r| r.stress.amax()).fold(0.0, f64::max);
    Ok(vec![format!(
        "{} steps with the {} backend, peak |sigma| {peak:.4} MPa, final damage {:.4}; wrote {}",
        records.len(),
        backend.name(),
        records.last().map_or(0.0, |r| r.d),
        out.display()
    )])
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

pub fn bench_cmd(run: &Run) -> Result<Vec<String>> {
    let params = run.cfg.material_params()?;
    let network = run
        .network()?
        .ok_or_else(|| anyhow!("bench compares both backends and needs surrogate weights; pass --weights"))?;
    let backends = [
        run.backend("classical", &params, None)?,
        run.backend("surrogate", &params, Some(network))?,
    ];
    let section = &run.cfg.bench;
    let mut report = Vec::new();
    let mut tables: Vec<(&str, Vec<BenchSeries>)> = Vec::new();
    for (label, scenario) in [("simple", &section.simple), ("complex", &section.complex)] {
        let path = scenario.path(run.cfg.environment)?;
        let series: Vec<BenchSeries> = backends
            .iter()
            .map(|b| bench(b.as_ref(), &path, section.repeats))
            .collect::<vevp::Result<_>>()?;
        for s in &series {
            let mut line = format!(
                "{label} path, {}: {} steps, total {:.3} ms, per-step CV {:.1}%",
                s.backend,
                s.step_seconds.len(),
                1e3 * s.total(),
                100.0 * s.cv()
            );
            if let Some(k) = s.activation_step {
                line.push_str(&format!(
                    ", dashpot active from step {k}: mean step {:.1} us before, {:.1} us after",
                    1e6 * mean(&s.step_seconds[..k]),
                    1e6 * mean(&s.step_seconds[k..])
                ));
            }
            report.push(line);
        }
        report.push(format!(
            "{label} path speedup (classical / surrogate total): {:.2}",
            series[0].total() / series[1].total()
        ));
        tables.push((label, series));
    }

    let out = run.cfg.out_or("bench.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&out)?);
    for c in run.comments(Some(&params)).iter().chain(&report) {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "path,step,classical_seconds,classical_iterations,surrogate_seconds,surrogate_iterations")?;
    for (label, series) in &tables {
        for k in 0..series[0].step_seconds.len() {
            writeln!(
                w,
                "{label},{k},{},{},{},{}",
                series[0].step_seconds[k], series[0].iterations[k], series[1].step_seconds[k], series[1].iterations[k]
            )?;
        }
    }
    w.flush()?;
    report.push(format!("wrote {}", out.display()));
    Ok(report)
}

fn fem_run(run: &Run, mesh: &Mesh, backend: Arc<dyn MaterialBackend>) -> Result<Vec<ProgramRow>> {
    let section = &run.cfg.fem;
    let mut model = FeModel::new(mesh.clone(), run.cfg.environment, backend)?;
    model.newton_tol = section.newton_tol;
    model.newton_max_iter = section.newton_max_iter;
    let bc = Dirichlet::uniaxial(mesh, section.axis);
    Ok(run_program(&mut model, &section.program, &bc)?)
}

pub fn fem(run: &Run) -> Result<Vec<String>> {
    let section = &run.cfg.fem;
    if section.axis > 2 {
        bail!("fem.axis must be 0, 1 or 2, got {}", section.axis);
    }
    section.program.validate()?;
    let params = run.cfg.material_params()?;
    let mesh = match &section.mesh_file {
        Some(file) => read_mesh(file)?,
        None => Mesh::structured_box(section.size, section.divisions)?,
    };
    let backend = run.backend(&run.cfg.backend, &params, run.network()?)?;
    let name = backend.name();
    let rows = fem_run(run, &mesh, backend)?;

    let peak = rows.iter().map(|r| r.force.abs()).fold(0.0, f64::max);
    let mut report = vec![format!(
        "{} elements, {} load steps with the {name} backend: peak force {peak:.5} N, at most {} Newton iterations, {:.3} s in the material",
        mesh.elements.len(),
        rows.len() - 1,
        rows.iter().map(|r| r.newton_iterations).max().unwrap_or(0),
        rows.iter().map(|r| r.material_seconds).sum::<f64>()
    )];
    if name != "classical" && section.compare {
        let reference = fem_run(run, &mesh, run.backend("classical", &params, None)?)?;
        let ref_peak = reference.iter().map(|r| r.force.abs()).fold(0.0, f64::max);
        let mae = force_mae(&rows, &reference)?;
        report.push(format!(
            "force MAE against the classical backend {mae:.5} N = {:.2}% of its peak {ref_peak:.5} N",
            100.0 * mae / ref_peak
        ));
    }
    let out = run.cfg.out_or("fem.csv");
    let comments: Vec<String> = run.comments(Some(&params)).into_iter().chain(report.iter().cloned()).collect();
    write_program_csv(&out, &comments, &rows)?;
    report.push(format!("wrote {}", out.display()));
    Ok(report)
}

//! Mini-batch training with Adam on the mean absolute error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{column_stats, forward, gradients, mae, normalize_fit, NetworkParams};
use crate::error::{Error, Result};
use crate::pathgen::{TrainingSequence, N_OUTPUTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Units per LSTM layer.
    pub hidden: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    /// Last epoch (1-based) trained with `lr_initial`.
    pub lr_drop_epoch: usize,
    pub lr_after: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 150,
            batch_size: 64,
            epochs: 300,
            lr_initial: 1e-3,
            lr_drop_epoch: 200,
            lr_after: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("hidden, batch_size and epochs must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "validation_fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        if !(self.lr_initial > 0.0 && self.lr_after > 0.0 && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("learning rates and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (1-based).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch <= self.lr_drop_epoch {
            self.lr_initial
        } else {
            self.lr_after
        }
    }
}

/// First and second moment estimates, laid out like the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// Number of updates applied so far.
    pub step: u64,
}

impl AdamState {
    pub fn new(p: &NetworkParams) -> Self {
        let zeros: Vec<Vec<f64>> = p.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update with learning rate `lr`.
pub fn adam_update(p: &mut NetworkParams, grads: &NetworkParams, state: &mut AdamState, lr: f64, cfg: &TrainConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, (param, grad)) in p.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            param[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.epsilon);
        }
    }
}

/// Losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_mae: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters with the lowest validation error.
    pub params: NetworkParams,
    pub history: Vec<EpochRecord>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Splits `n` sequences reproducibly into training and validation indices.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * fraction).round() as usize).clamp(usize::from(n >= 2), n.saturating_sub(1));
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

/// MAE of the network over whole sequences.
pub fn dataset_mae(seqs: &[&TrainingSequence], p: &NetworkParams) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in seqs {
        let pred = forward(&s.inputs, p);
        let n = pred.len() * N_OUTPUTS;
        sum += mae(pred.as_flattened(), s.targets.as_flattened())? * n as f64;
        count += n;
    }
    if count == 0 {
        return Err(Error::Shape("MAE of an empty set".into()));
    }
    Ok(sum / count as f64)
}

/// Per-component MAE of the network over whole sequences.
pub fn component_mae(seqs: &[&TrainingSequence], p: &NetworkParams) -> Result<[f64; N_OUTPUTS]> {
    let mut sum = [0.0; N_OUTPUTS];
    let mut count = 0usize;
    for s in seqs {
        for (pred, target) in forward(&s.inputs, p).iter().zip(&s.targets) {
            for c in 0..N_OUTPUTS {
                sum[c] += (pred[c] - target[c]).abs();
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Shape("MAE of an empty set".into()));
    }
    Ok(sum.map(|v| v / count as f64))
}

/// Population standard deviation of each target component.
pub fn target_std(seqs: &[&TrainingSequence]) -> Result<[f64; N_OUTPUTS]> {
    Ok(column_stats(seqs.iter().flat_map(|s| s.targets.iter()))?.1)
}

/// Groups shuffled training indices into batches of equal sequence length.
fn make_batches(seqs: &[TrainingSequence], order: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in order {
        by_len.entry(seqs[i].len()).or_default().push(i);
    }
    let mut batches: Vec<Vec<usize>> = by_len
        .values()
        .flat_map(|group| group.chunks(batch_size).map(<[usize]>::to_vec))
        .collect();
    batches.shuffle(rng);
    batches
}

/// Trains a network on `seqs`. Input normalization and output scales are fitted
/// on the training split only.
pub fn fit(seqs: &[TrainingSequence], cfg: &TrainConfig) -> Result<FitResult> {
    fit_with(seqs, cfg, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(seqs: &[TrainingSequence], cfg: &TrainConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<FitResult> {
    fit_from(seqs, cfg, None, on_epoch)
}

/// Continues training from `initial` when given. Its normalization and output
/// scales are kept and its hidden size must match `cfg.hidden`.
pub fn fit_from(
    seqs: &[TrainingSequence],
    cfg: &TrainConfig,
    initial: Option<NetworkParams>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitResult> {
    cfg.validate()?;
    if seqs.len() < 2 {
        return Err(Error::InvalidConfig("training needs at least two sequences".into()));
    }
    for s in seqs {
        s.validate()?;
        if s.is_empty() {
            return Err(Error::Shape("empty training sequence".into()));
        }
    }
    let (train_idx, val_idx) = split_indices(seqs.len(), cfg.validation_fraction, cfg.seed);
    let train: Vec<&TrainingSequence> = train_idx.iter().map(|&i| &seqs[i]).collect();
    let val: Vec<&TrainingSequence> = val_idx.iter().map(|&i| &seqs[i]).collect();

    let mut p = match initial {
        Some(p) => {
            if p.hidden() != cfg.hidden {
                return Err(Error::Shape(format!(
                    "initial weights have H = {}, expected H = {}",
                    p.hidden(),
                    cfg.hidden
                )));
            }
            p
        }
        None => {
            let mut p = NetworkParams::init(cfg.hidden, cfg.seed);
            p.norm = normalize_fit(&train)?;
            let (_, target_std) = column_stats(train.iter().flat_map(|s| s.targets.iter()))?;
            p.out_scale = target_std.map(|s| if s > 1e-6 { s } else { 1.0 });
            p
        }
    };

    let mut adam = AdamState::new(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order = train_idx.clone();
    let mut best = (f64::INFINITY, p.clone());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        order.shuffle(&mut rng);
        for (b, batch) in make_batches(seqs, &order, cfg.batch_size, &mut rng).iter().enumerate() {
            let refs: Vec<&TrainingSequence> = batch.iter().map(|&i| &seqs[i]).collect();
            let (loss, grads) = gradients(&refs, &p)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam_update(&mut p, &grads, &mut adam, lr, cfg);
        }
        let train_mae = dataset_mae(&train, &p)?;
        let val_mae = if val.is_empty() { train_mae } else { dataset_mae(&val, &p)? };
        if !train_mae.is_finite() || !val_mae.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        if val_mae < best.0 {
            best = (val_mae, p.clone());
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_mae,
            val_mae,
        };
        on_epoch(&record);
        history.push(record);
    }
    Ok(FitResult {
        params: best.1,
        history,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}

/// Writes `epoch,lr,train_mae,val_mae` rows, preceded by `#` comment lines.
pub fn write_loss_log(location: &Path, comments: &[String], history: &[EpochRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(location)?);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "epoch,lr,train_mae,val_mae")?;
    for r in history {
        writeln!(w, "{},{},{},{}", r.epoch, r.lr, r.train_mae, r.val_mae)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_drops_after_epoch_200() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate(1), 1e-3);
        assert_eq!(cfg.learning_rate(200), 1e-3);
        assert_eq!(cfg.learning_rate(201), 1e-4);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let cfg = TrainConfig::default();
        let mut p = NetworkParams::zeros(2);
        let mut g = NetworkParams::zeros(2);
        g.dense_b[0] = 3.0;
        g.dense_b[1] = -0.02;
        let mut state = AdamState::new(&p);
        adam_update(&mut p, &g, &mut state, 1e-3, &cfg);
        let expect = |g: f64| -1e-3 * g / (g.abs() + cfg.epsilon);
        assert!((p.dense_b[0] - expect(3.0)).abs() < 1e-15);
        assert!((p.dense_b[1] - expect(-0.02)).abs() < 1e-15);
        // untouched parameters see a zero gradient and stay put
        assert_eq!(p.dense_b[2], 0.0);
        assert!(p.layer1.w.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn split_is_reproducible_and_disjoint() {
        let (a, b) = split_indices(50, 0.1, 4);
        assert_eq!(b.len(), 5);
        assert_eq!((a.clone(), b.clone()), split_indices(50, 0.1, 4));
        let mut all: Vec<usize> = a.into_iter().chain(b).collect();
        all.sort();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }
}

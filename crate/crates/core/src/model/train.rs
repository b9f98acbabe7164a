use super::loss::{quad_loss, LossBreakdown, QuadTarget};
use super::network::QuadNet;
use super::{ModelConfig, ModelError};
use crate::render::rasterize;
use crate::synth::{expand_incremental, jitter_columns, mix_seed, DatasetRecord};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::ops::ControlFlow;
use std::time::Instant;
use thiserror::Error;

/// Stream tag separating the validation split shuffle from epoch shuffles.
const SPLIT_STREAM: u64 = 0x5EED_5917;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no training samples")]
    Empty,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val: Option<LossBreakdown>,
    pub seconds: f64,
}

pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss (or the last
    /// epoch when there is no validation split).
    pub model: QuadNet<f32>,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

/// (record index, expansion step) pairs.
type SampleRef = (usize, usize);

fn sample_refs(records: &[DatasetRecord], idx: &[usize], quad_size: usize) -> Vec<SampleRef> {
    idx.iter()
        .flat_map(|&r| {
            let n = records[r].layout.len().div_ceil(quad_size) + 1;
            (0..n).map(move |k| (r, k))
        })
        .collect()
}

/// Renders a batch of samples. With `epoch` set, placed columns are
/// jittered by a seed derived from the run seed, record, step and epoch.
pub fn render_batch(
    net: &QuadNet<f32>,
    records: &[DatasetRecord],
    refs: &[(usize, usize)],
    epoch: Option<usize>,
) -> (Vec<f32>, Vec<QuadTarget>) {
    let cfg = net.config();
    let mut input = Vec::with_capacity(refs.len() * 4 * cfg.input_size * cfg.input_size);
    let mut targets = Vec::with_capacity(refs.len());
    for &(r, k) in refs {
        let samples = expand_incremental(&records[r], cfg.quad_size);
        let s = &samples[k];
        let raster = match epoch {
            Some(e) => {
                let seed = mix_seed(&[cfg.run_seed, r as u64, k as u64, e as u64]);
                rasterize(s.building, &jitter_columns(s.placed, seed, cfg.noise_px))
            }
            None => rasterize(s.building, s.placed),
        };
        input.extend_from_slice(raster.data());
        targets.push(QuadTarget::from(s));
    }
    (input, targets)
}

fn accumulate(acc: &mut LossBreakdown, l: &LossBreakdown, weight: f64) {
    acc.total += l.total * weight;
    acc.coord += l.coord * weight;
    acc.types += l.types * weight;
    acc.valid_rows += l.valid_rows;
}

/// Mean loss of `refs` in inference mode without jitter.
pub fn evaluate_loss(net: &QuadNet<f32>, records: &[DatasetRecord], refs: &[SampleRef]) -> LossBreakdown {
    let mut acc = LossBreakdown::default();
    let batch = net.config().batch_size;
    for chunk in refs.chunks(batch) {
        let (input, targets) = render_batch(net, records, chunk, None);
        let len = input.len() / chunk.len();
        let mut coords = Vec::new();
        let mut logits = Vec::new();
        for x in input.chunks_exact(len) {
            let (c, l) = net.infer_raw(x.to_vec());
            coords.extend(c);
            logits.extend(l);
        }
        let (l, _, _) = quad_loss(&coords, &logits, &targets, net.config().loss_weights);
        accumulate(&mut acc, &l, chunk.len() as f64 / refs.len() as f64);
    }
    acc
}

/// Trains a fresh network on `records`. `on_epoch` sees each epoch's
/// statistics and may stop training early.
pub fn train(
    config: &ModelConfig,
    records: &[DatasetRecord],
    mut on_epoch: impl FnMut(&EpochStats, &QuadNet<f32>) -> ControlFlow<()>,
) -> Result<TrainOutcome, TrainError> {
    let mut net = QuadNet::<f32>::new(config)?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[config.run_seed, SPLIT_STREAM])));
    let n_val = (records.len() as f64 * config.val_fraction).round() as usize;
    let n_val = n_val.min(records.len().saturating_sub(1));
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_refs = sample_refs(records, train_idx, config.quad_size);
    let val_refs = sample_refs(records, val_idx, config.quad_size);
    if train_refs.is_empty() {
        return Err(TrainError::Empty);
    }

    let opt = config.optimizer;
    let (lr, mu) = (opt.learning_rate as f32, opt.momentum as f32);
    let mut velocity = net.zero_grads();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, QuadNet<f32>)> = None;
    for epoch in 0..config.epochs {
        let start = Instant::now();
        train_refs.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[config.run_seed, epoch as u64])));
        let mut acc = LossBreakdown::default();
        for (bi, chunk) in train_refs.chunks(config.batch_size).enumerate() {
            let (input, targets) = render_batch(&net, records, chunk, Some(epoch));
            let cache = net.forward_train(input);
            let (loss, d_coords, d_logits) =
                quad_loss(cache.coords(), cache.logits(), &targets, config.loss_weights);
            if !loss.total.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: bi });
            }
            accumulate(&mut acc, &loss, chunk.len() as f64 / train_refs.len() as f64);
            let mut grads = net.backward(&cache, &d_coords, &d_logits);
            if let Some(max) = opt.clip_norm {
                let norm = grads
                    .iter()
                    .flatten()
                    .map(|&g| f64::from(g) * f64::from(g))
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    let s = (max / norm) as f32;
                    grads.iter_mut().flatten().for_each(|g| *g *= s);
                }
            }
            net.update_running_stats(&cache);
            for ((p, v), g) in net.param_slices_mut().into_iter().zip(&mut velocity).zip(&grads) {
                for ((pi, vi), &gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = mu * *vi + gi;
                    *pi -= lr * *vi;
                }
            }
        }
        let val = (!val_refs.is_empty()).then(|| evaluate_loss(&net, records, &val_refs));
        let stats = EpochStats {
            epoch,
            train: acc,
            val,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {:.5} val {} ({:.1}s)",
            acc.total,
            val.map_or("-".to_string(), |v| format!("{:.5}", v.total)),
            stats.seconds
        );
        let score = val.map_or(acc.total, |v| v.total);
        let improved = best.as_ref().is_none_or(|(b, _, _)| score < *b);
        if val.is_none() || improved {
            best = Some((score, epoch, net.clone()));
        }
        history.push(stats);
        if on_epoch(history.last().expect("just pushed"), &net).is_break() {
            break;
        }
    }
    let (best_epoch, model) = match best {
        Some((_, e, m)) => (e, m),
        None => (0, net),
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}

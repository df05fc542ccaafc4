use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::loss::LossWeights;
use crate::net::{Cache, NetError, Network};
use crate::optim::Adam;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyDataset,
    #[error("loss became non-finite at step {step}")]
    Diverged { step: u64 },
    #[error("loading sample {index}: {reason}")]
    Data { index: usize, reason: String },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Supplies `(input, target)` pairs by index. Samples may be produced on
/// demand, e.g. by running signal processing on stored raw frames.
pub trait SampleSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fills `input` (`C * H * W`) and `target` (`H * W`, values 0 or 1).
    fn load(&mut self, index: usize, input: &mut Vec<f32>, target: &mut Vec<f32>) -> Result<(), String>;
}

/// Pairs held in memory.
#[derive(Debug, Clone, Default)]
pub struct InMemory {
    pub samples: Vec<(Vec<f32>, Vec<f32>)>,
}

impl SampleSource for InMemory {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn load(&mut self, index: usize, input: &mut Vec<f32>, target: &mut Vec<f32>) -> Result<(), String> {
        let (x, t) = &self.samples[index];
        input.clone_from(x);
        target.clone_from(t);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub loss: LossWeights,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<u64>,
    /// Multiply the learning rate by this factor after every epoch.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 4, lr: 1e-3, seed: 0, loss: LossWeights::default(), max_steps: None, lr_decay: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean sample loss over the epoch.
    pub loss: f64,
    pub bce: f64,
    pub dice: f64,
    pub steps: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
    /// Mean loss of every optimizer step.
    pub step_losses: Vec<f64>,
    pub seconds: f64,
}

impl TrainReport {
    pub fn loss_history(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Whether to keep training after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Mini-batch Adam over shuffled samples. The sample order, and therefore
/// the whole run, is a function of `config.seed`.
pub fn train<S, F>(net: &mut Network<f32>, data: &mut S, config: &TrainConfig, mut on_epoch: F) -> Result<TrainReport, TrainError>
where
    S: SampleSource + ?Sized,
    F: FnMut(&EpochReport, &Network<f32>) -> Control,
{
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Adam::<f32>::new(net.params().len(), config.lr);
    let mut grad = vec![0.0f32; net.params().len()];
    let mut cache = Cache::default();
    let (mut input, mut target) = (Vec::new(), Vec::new());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = config.batch_size.max(1);
    let mut report = TrainReport::default();

    'epochs: for epoch in 0..config.epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        let (mut sum, mut sum_bce, mut sum_dice, mut seen) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(batch) {
            grad.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in chunk {
                data.load(i, &mut input, &mut target).map_err(|reason| TrainError::Data { index: i, reason })?;
                let parts = net.loss_and_grad(&input, &target, &config.loss, 1.0 / chunk.len() as f64, &mut cache, &mut grad)?;
                batch_loss += parts.total;
                sum_bce += parts.bce;
                sum_dice += parts.dice;
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Diverged { step: opt.steps() + 1 });
            }
            opt.step(net.params_mut(), &grad);
            sum += batch_loss;
            seen += chunk.len();
            report.step_losses.push(batch_loss / chunk.len() as f64);
            if config.max_steps.is_some_and(|m| opt.steps() >= m) {
                push_epoch(&mut report, epoch, sum, sum_bce, sum_dice, seen, opt.steps(), epoch_start);
                on_epoch(report.epochs.last().unwrap(), net);
                break 'epochs;
            }
        }
        push_epoch(&mut report, epoch, sum, sum_bce, sum_dice, seen, opt.steps(), epoch_start);
        log::info!(
            "epoch {epoch}: loss {:.5} ({:.1} s)",
            report.epochs.last().unwrap().loss,
            report.epochs.last().unwrap().seconds
        );
        if on_epoch(report.epochs.last().unwrap(), net) == Control::Stop {
            break;
        }
        opt.lr *= config.lr_decay;
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn push_epoch(report: &mut TrainReport, epoch: usize, sum: f64, bce: f64, dice: f64, seen: usize, steps: u64, start: Instant) {
    let n = seen.max(1) as f64;
    report.epochs.push(EpochReport {
        epoch,
        loss: sum / n,
        bce: bce / n,
        dice: dice / n,
        steps,
        seconds: start.elapsed().as_secs_f64(),
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NetConfig;
    use rand::Rng;

    fn tiny() -> NetConfig {
        NetConfig { input_channels: 4, base_channels: 4, depth: 2, kernel_size: 3, height: 16, width: 12 }
    }

    fn sample(cfg: &NetConfig, seed: u64) -> (Vec<f32>, Vec<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..cfg.input_len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let t = (0..cfg.output_len()).map(|i| ((i / cfg.width + i % cfg.width) % 5 == 0) as u8 as f32).collect();
        (x, t)
    }

    #[test]
    fn same_seed_same_history() {
        let cfg = tiny();
        let run = || {
            let mut net = Network::init(cfg, 1).unwrap();
            let mut data = InMemory { samples: (0..6).map(|s| sample(&cfg, s)).collect() };
            let tc = TrainConfig { epochs: 3, batch_size: 2, ..TrainConfig::default() };
            let r = train(&mut net, &mut data, &tc, |_, _| Control::Continue).unwrap();
            (r.loss_history(), net)
        };
        let (h1, n1) = run();
        let (h2, n2) = run();
        assert_eq!(h1, h2);
        assert_eq!(n1, n2);
        assert_eq!(h1.len(), 3);
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut net = Network::init(tiny(), 1).unwrap();
        let r = train(&mut net, &mut InMemory::default(), &TrainConfig::default(), |_, _| Control::Continue);
        assert!(matches!(r, Err(TrainError::EmptyDataset)));
    }

    #[test]
    fn divergence_is_detected() {
        let cfg = tiny();
        let mut net = Network::init(cfg, 1).unwrap();
        let (mut x, t) = sample(&cfg, 0);
        x[0] = f32::NAN;
        let mut data = InMemory { samples: vec![(x, t)] };
        let r = train(&mut net, &mut data, &TrainConfig::default(), |_, _| Control::Continue);
        assert!(matches!(r, Err(TrainError::Diverged { step: 1 })));
    }

    #[test]
    fn callback_can_stop() {
        let cfg = tiny();
        let mut net = Network::init(cfg, 1).unwrap();
        let mut data = InMemory { samples: vec![sample(&cfg, 0)] };
        let r = train(&mut net, &mut data, &TrainConfig { epochs: 50, ..Default::default() }, |e, _| {
            if e.epoch == 2 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert_eq!(r.epochs.len(), 3);
    }
}

use radcloud_unet::{train, Control, InMemory, NetConfig, Network, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config() -> NetConfig {
    NetConfig { input_channels: 4, base_channels: 4, depth: 2, kernel_size: 3, height: 16, width: 12 }
}

/// Target is a blob whose location is encoded in the input.
fn sample(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<f32>) {
    let (h, w) = (cfg.height, cfg.width);
    let (cy, cx) = (rng.random_range(2..h - 2), rng.random_range(2..w - 2));
    let mut t = vec![0.0f32; h * w];
    for y in cy - 1..=cy + 1 {
        for x in cx - 1..=cx + 1 {
            t[y * w + x] = 1.0;
        }
    }
    let mut input = Vec::with_capacity(cfg.input_len());
    for _ in 0..cfg.input_channels {
        for &v in &t {
            input.push(0.8 * v + rng.random_range(0.0..0.2));
        }
    }
    (input, t)
}

#[test]
fn overfits_a_single_sample() {
    let cfg = config();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut data = InMemory { samples: vec![sample(&cfg, &mut rng)] };
    let mut net = Network::init(cfg, 2).unwrap();
    let tc = TrainConfig { epochs: 500, batch_size: 1, lr: 3e-3, ..TrainConfig::default() };
    let mut first = None;
    let report = train(&mut net, &mut data, &tc, |e, _| {
        first.get_or_insert(e.loss);
        if e.loss < 0.05 {
            Control::Stop
        } else {
            Control::Continue
        }
    })
    .unwrap();
    let last = report.epochs.last().unwrap();
    assert!(last.loss < 0.05, "loss {} after {} steps (start {:?})", last.loss, last.steps, first);
    assert!(last.steps <= 500);
}

#[test]
fn smoothed_loss_decreases() {
    let cfg = config();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut data = InMemory { samples: (0..32).map(|_| sample(&cfg, &mut rng)).collect() };
    let mut net = Network::init(cfg, 9).unwrap();
    let tc = TrainConfig { epochs: 24, batch_size: 4, lr: 2e-3, ..TrainConfig::default() };
    let report = train(&mut net, &mut data, &tc, |_, _| Control::Continue).unwrap();
    let h = report.loss_history();
    // Moving average over 4 epochs, compared block to block.
    let smooth: Vec<f64> = h.chunks(4).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    for pair in smooth.windows(2) {
        assert!(pair[1] <= pair[0] * 1.02, "{smooth:?}");
    }
    assert!(smooth.last().unwrap() < &(smooth[0] * 0.6), "{smooth:?}");
}

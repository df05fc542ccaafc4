//! Weighted binary cross-entropy plus soft Dice.

use crate::layers::sigmoid;
use crate::scalar::Scalar;

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` before the logarithm.
pub const P_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub bce: f64,
    pub dice: f64,
    pub dice_epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { bce: 0.9, dice: 0.1, dice_epsilon: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub bce: f64,
    pub dice: f64,
    pub total: f64,
}

fn dice_terms<T: Scalar>(p: impl Iterator<Item = T>, target: &[T]) -> (f64, f64, f64) {
    let mut inter = 0.0;
    let mut sum_p = 0.0;
    let mut sum_t = 0.0;
    for (p, &t) in p.zip(target) {
        inter += (p * t).f64();
        sum_p += p.f64();
        sum_t += t.f64();
    }
    (inter, sum_p, sum_t)
}

fn soft_dice(inter: f64, sum_p: f64, sum_t: f64, eps: f64) -> f64 {
    1.0 - (2.0 * inter + eps) / (sum_p + sum_t + eps)
}

/// Loss of a probability grid against a binary target.
pub fn loss<T: Scalar>(pred: &[T], target: &[T], w: &LossWeights) -> LossParts {
    assert_eq!(pred.len(), target.len(), "prediction and target sizes differ");
    let n = pred.len() as f64;
    let bce = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.f64().clamp(P_CLAMP, 1.0 - P_CLAMP);
            let t = t.f64();
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n;
    let (i, sp, st) = dice_terms(pred.iter().copied(), target);
    let dice = soft_dice(i, sp, st, w.dice_epsilon);
    LossParts { bce, dice, total: w.bce * bce + w.dice * dice }
}

/// Loss evaluated from logits, with BCE in the overflow-free form
/// `max(z, 0) - z t + ln(1 + e^-|z|)`. Writes `d loss / d z` into `grad`.
pub fn loss_and_grad_logits<T: Scalar>(logits: &[T], target: &[T], w: &LossWeights, grad: &mut [T]) -> LossParts {
    assert_eq!(logits.len(), target.len(), "prediction and target sizes differ");
    let n = logits.len() as f64;
    let bce = logits
        .iter()
        .zip(target)
        .map(|(&z, &t)| {
            let (z, t) = (z.f64(), t.f64());
            z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
        })
        .sum::<f64>()
        / n;
    let probs: Vec<T> = logits.iter().map(|&z| sigmoid(z)).collect();
    let (inter, sum_p, sum_t) = dice_terms(probs.iter().copied(), target);
    let eps = w.dice_epsilon;
    let dice = soft_dice(inter, sum_p, sum_t, eps);
    let denom = sum_p + sum_t + eps;
    let num = 2.0 * inter + eps;
    for ((g, &p), &t) in grad.iter_mut().zip(&probs).zip(target) {
        let (p, t) = (p.f64(), t.f64());
        let d_dice_dp = -(2.0 * t * denom - num) / (denom * denom);
        let dp_dz = p * (1.0 - p);
        *g = T::of(w.bce * (p - t) / n + w.dice * d_dice_dp * dp_dz);
    }
    LossParts { bce, dice, total: w.bce * bce + w.dice * dice }
}

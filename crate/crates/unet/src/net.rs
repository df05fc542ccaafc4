use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::{ConfigError, ConvSpec, NetConfig};
use crate::layers::{
    conv_backward, conv_forward, maxpool_backward, maxpool_forward, sigmoid, upsample_backward, upsample_forward,
};
use crate::loss::{loss_and_grad_logits, LossParts, LossWeights, P_CLAMP};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("input has {got} values, network expects {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("target has {got} values, network expects {expected}")]
    TargetShape { expected: usize, got: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    Zeros,
    /// Normal weights with variance `2 / fan_in` (`1 / fan_in` for the linear
    /// head); zero biases.
    HeNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitRecord {
    pub scheme: InitScheme,
    pub seed: u64,
}

/// Encoder-decoder with all parameters in one flat vector, laid out in
/// convolution execution order as `weight, bias` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Scalar> {
    config: NetConfig,
    layout: Vec<ConvSpec>,
    params: Vec<T>,
    init: InitRecord,
}

#[derive(Debug, Clone, Default)]
struct ConvCache<T> {
    col: Vec<T>,
    out: Vec<T>,
}

/// Activations kept by a forward pass for the matching backward pass.
/// Reusing one cache across calls avoids reallocating the buffers.
#[derive(Debug, Clone, Default)]
pub struct Cache<T> {
    convs: Vec<ConvCache<T>>,
    argmax: Vec<Vec<u32>>,
    skips: Vec<usize>,
    scratch: Vec<T>,
    grad_a: Vec<T>,
    grad_b: Vec<T>,
    grad_col: Vec<T>,
    dlogits: Vec<T>,
}

impl<T: Scalar> Cache<T> {
    /// Raw output of the final 1x1 convolution from the last forward pass.
    pub fn logits(&self) -> &[T] {
        &self.convs.last().expect("forward pass ran").out
    }
}

impl<T: Scalar> Network<T> {
    pub fn zeros(config: NetConfig) -> Result<Self, NetError> {
        config.validate()?;
        let layout = config.layout();
        let n = config.param_count();
        Ok(Self { config, layout, params: vec![T::zero(); n], init: InitRecord { scheme: InitScheme::Zeros, seed: 0 } })
    }

    pub fn init(config: NetConfig, seed: u64) -> Result<Self, NetError> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for spec in &net.layout {
            let fan_in = (spec.c_in * spec.kernel * spec.kernel) as f64;
            let gain = if spec.relu { 2.0 } else { 1.0 };
            let normal = Normal::new(0.0, (gain / fan_in).sqrt()).expect("positive std");
            for w in &mut net.params[spec.weight_offset..spec.bias_offset] {
                *w = T::of(normal.sample(&mut rng));
            }
        }
        net.init = InitRecord { scheme: InitScheme::HeNormal, seed };
        Ok(net)
    }

    pub fn from_params(config: NetConfig, params: Vec<T>) -> Result<Self, NetError> {
        let mut net = Self::zeros(config)?;
        assert_eq!(params.len(), net.params.len(), "parameter vector length");
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layout(&self) -> &[ConvSpec] {
        &self.layout
    }

    pub fn init_record(&self) -> InitRecord {
        self.init
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn weight(&self, layer: usize) -> &[T] {
        let s = &self.layout[layer];
        &self.params[s.weight_offset..s.bias_offset]
    }

    pub fn bias(&self, layer: usize) -> &[T] {
        let s = &self.layout[layer];
        &self.params[s.bias_offset..s.bias_offset + s.c_out]
    }

    /// Sets the bias of the output layer, e.g. to the logit of the expected
    /// occupancy rate.
    pub fn set_head_bias(&mut self, value: T) {
        let s = self.layout.last().expect("head layer").clone();
        self.params[s.bias_offset] = value;
    }

    /// Same network in another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config,
            layout: self.layout.clone(),
            params: self.params.iter().map(|&p| U::of(p.f64())).collect(),
            init: self.init,
        }
    }

    fn conv(&self, li: usize, input: &[T], slot: &mut ConvCache<T>) {
        let s = &self.layout[li];
        conv_forward(
            input,
            s.c_in,
            s.height,
            s.width,
            s.kernel,
            &self.params[s.weight_offset..s.bias_offset],
            &self.params[s.bias_offset..s.bias_offset + s.c_out],
            s.relu,
            &mut slot.col,
            &mut slot.out,
        );
    }

    /// Runs conv `li` on the output of conv `li - 1`.
    fn conv_chain(&self, li: usize, cache: &mut Cache<T>) {
        let (before, after) = cache.convs.split_at_mut(li);
        self.conv(li, &before[li - 1].out, &mut after[0]);
    }

    /// Forward pass keeping activations; the logits end up in `cache.logits()`.
    pub fn forward_cached(&self, input: &[T], cache: &mut Cache<T>) -> Result<(), NetError> {
        let expected = self.config.input_len();
        if input.len() != expected {
            return Err(NetError::InputShape { expected, got: input.len() });
        }
        let d = self.config.depth;
        cache.convs.resize_with(self.layout.len(), Default::default);
        cache.argmax.resize_with(d, Default::default);
        cache.skips.clear();

        let mut cur = std::mem::take(&mut cache.scratch);
        let mut li = 0;
        let mut slot = std::mem::take(&mut cache.convs[0]);
        self.conv(0, input, &mut slot);
        cache.convs[0] = slot;
        for l in 0..d {
            if l > 0 {
                let mut slot = std::mem::take(&mut cache.convs[li]);
                self.conv(li, &cur, &mut slot);
                cache.convs[li] = slot;
            }
            self.conv_chain(li + 1, cache);
            let s = &self.layout[li + 1];
            maxpool_forward(&cache.convs[li + 1].out, s.c_out, s.height, s.width, &mut cur, &mut cache.argmax[l]);
            cache.skips.push(li + 1);
            li += 2;
        }
        if d > 0 {
            let mut slot = std::mem::take(&mut cache.convs[li]);
            self.conv(li, &cur, &mut slot);
            cache.convs[li] = slot;
        }
        self.conv_chain(li + 1, cache);
        li += 2;
        for l in (0..d).rev() {
            let s = &self.layout[li - 1];
            upsample_forward(&cache.convs[li - 1].out, s.c_out, s.height, s.width, &mut cur);
            cur.extend_from_slice(&cache.convs[cache.skips[l]].out);
            let mut slot = std::mem::take(&mut cache.convs[li]);
            self.conv(li, &cur, &mut slot);
            cache.convs[li] = slot;
            self.conv_chain(li + 1, cache);
            li += 2;
        }
        self.conv_chain(li, cache);
        cache.scratch = cur;
        Ok(())
    }

    /// Occupancy probabilities, clamped into the open interval.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>, NetError> {
        let mut cache = Cache::default();
        self.forward_with(input, &mut cache)
    }

    pub fn forward_with(&self, input: &[T], cache: &mut Cache<T>) -> Result<Vec<T>, NetError> {
        self.forward_cached(input, cache)?;
        let (lo, hi) = (T::of(P_CLAMP), T::one() - T::of(P_CLAMP));
        Ok(cache.logits().iter().map(|&z| sigmoid(z).max(lo).min(hi)).collect())
    }

    fn conv_back(&self, li: usize, cache: &mut Cache<T>, grad: &mut [T], need_input: bool) {
        let s = &self.layout[li];
        let (gw, rest) = grad[s.weight_offset..].split_at_mut(s.weight_len());
        let gb = &mut rest[..s.c_out];
        let slot = &cache.convs[li];
        let grad_in = need_input.then_some((&mut cache.grad_col, &mut cache.grad_b));
        conv_backward(
            &slot.col,
            &slot.out,
            s.c_in,
            s.height,
            s.width,
            s.kernel,
            &self.params[s.weight_offset..s.bias_offset],
            s.relu,
            &mut cache.grad_a,
            gw,
            gb,
            grad_in,
        );
        if need_input {
            std::mem::swap(&mut cache.grad_a, &mut cache.grad_b);
        }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d logits`
    /// for the activations held in `cache`.
    pub fn backward(&self, cache: &mut Cache<T>, dlogits: &[T], grad: &mut [T]) {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer length");
        let d = self.config.depth;
        cache.grad_a.clear();
        cache.grad_a.extend_from_slice(dlogits);
        let mut li = self.layout.len() - 1;
        self.conv_back(li, cache, grad, true);
        let mut skip_grads: Vec<Vec<T>> = vec![Vec::new(); d];
        for (l, skip) in skip_grads.iter_mut().enumerate() {
            li -= 1;
            self.conv_back(li, cache, grad, true);
            li -= 1;
            self.conv_back(li, cache, grad, true);
            let up = self.config.channels(l + 1);
            let (h, w) = (self.config.height >> l, self.config.width >> l);
            skip.extend_from_slice(&cache.grad_a[up * h * w..]);
            let mut g = std::mem::take(&mut cache.scratch);
            upsample_backward(&cache.grad_a[..up * h * w], up, h / 2, w / 2, &mut g);
            cache.scratch = std::mem::replace(&mut cache.grad_a, g);
        }
        li -= 1;
        self.conv_back(li, cache, grad, true);
        li -= 1;
        self.conv_back(li, cache, grad, d > 0);
        for l in (0..d).rev() {
            let c = self.config.channels(l);
            let (h, w) = (self.config.height >> l, self.config.width >> l);
            let mut g = std::mem::take(&mut cache.scratch);
            g.clear();
            g.resize(c * h * w, T::zero());
            maxpool_backward(&cache.grad_a, &cache.argmax[l], &mut g);
            for (a, &b) in g.iter_mut().zip(&skip_grads[l]) {
                *a += b;
            }
            cache.scratch = std::mem::replace(&mut cache.grad_a, g);
            li -= 1;
            self.conv_back(li, cache, grad, true);
            li -= 1;
            // The input gradient of the first layer is never needed.
            self.conv_back(li, cache, grad, li > 0);
        }
        debug_assert_eq!(li, 0);
    }

    /// Forward, loss and backward for one sample; gradients are accumulated
    /// into `grad` scaled by `scale`.
    pub fn loss_and_grad(
        &self,
        input: &[T],
        target: &[T],
        weights: &LossWeights,
        scale: f64,
        cache: &mut Cache<T>,
        grad: &mut [T],
    ) -> Result<LossParts, NetError> {
        let expected = self.config.output_len();
        if target.len() != expected {
            return Err(NetError::TargetShape { expected, got: target.len() });
        }
        self.forward_cached(input, cache)?;
        let mut dlogits = std::mem::take(&mut cache.dlogits);
        dlogits.resize(expected, T::zero());
        let parts = loss_and_grad_logits(cache.logits(), target, weights, &mut dlogits);
        if scale != 1.0 {
            let s = T::of(scale);
            for g in &mut dlogits {
                *g *= s;
            }
        }
        self.backward(cache, &dlogits, grad);
        cache.dlogits = dlogits;
        Ok(parts)
    }
}

/// Cell is occupied iff `p >= threshold`.
pub fn binarize<T: Scalar>(pred: &[T], threshold: T) -> Vec<u8> {
    pred.iter().map(|&p| (p >= threshold) as u8).collect()
}

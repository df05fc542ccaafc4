use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("kernel size {0} must be odd")]
    EvenKernel(usize),
    #[error("spatial size {height}x{width} is not divisible by 2^{depth}")]
    Indivisible { height: usize, width: usize, depth: usize },
}

/// Architecture of the encoder-decoder. Level `l` of the encoder has
/// `base_channels << l` channels; the bottleneck has `base_channels << depth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub input_channels: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub kernel_size: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for NetConfig {
    /// 40-chirp input, 64 x 48 grid, about 125k parameters.
    fn default() -> Self {
        Self { input_channels: 40, base_channels: 8, depth: 3, kernel_size: 3, height: 64, width: 48 }
    }
}

/// One convolution of the network in execution order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub relu: bool,
    /// Spatial size the layer runs at.
    pub height: usize,
    pub width: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl ConvSpec {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.kernel * self.kernel
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.c_out
    }

    /// `[out, in, k, k]`.
    pub fn weight_shape(&self) -> [usize; 4] {
        [self.c_out, self.c_in, self.kernel, self.kernel]
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (v, name) in [
            (self.input_channels, "input_channels"),
            (self.base_channels, "base_channels"),
            (self.kernel_size, "kernel_size"),
            (self.height, "height"),
            (self.width, "width"),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        if self.kernel_size % 2 == 0 {
            return Err(ConfigError::EvenKernel(self.kernel_size));
        }
        let f = 1usize << self.depth;
        if self.height % f != 0 || self.width % f != 0 {
            return Err(ConfigError::Indivisible { height: self.height, width: self.width, depth: self.depth });
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        self.height * self.width
    }

    /// Convolutions in forward execution order with their parameter offsets.
    pub fn layout(&self) -> Vec<ConvSpec> {
        let k = self.kernel_size;
        let mut specs = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, c_in: usize, c_out: usize, kernel: usize, relu: bool, level: usize| {
            let spec = ConvSpec {
                name,
                c_in,
                c_out,
                kernel,
                relu,
                height: self.height >> level,
                width: self.width >> level,
                weight_offset: offset,
                bias_offset: offset + c_out * c_in * kernel * kernel,
            };
            offset += spec.param_len();
            specs.push(spec);
        };
        let mut c_prev = self.input_channels;
        for l in 0..self.depth {
            let c = self.channels(l);
            push(format!("enc{l}.conv1"), c_prev, c, k, true, l);
            push(format!("enc{l}.conv2"), c, c, k, true, l);
            c_prev = c;
        }
        let cb = self.channels(self.depth);
        push("bottleneck.conv1".into(), c_prev, cb, k, true, self.depth);
        push("bottleneck.conv2".into(), cb, cb, k, true, self.depth);
        c_prev = cb;
        for l in (0..self.depth).rev() {
            let c = self.channels(l);
            push(format!("dec{l}.conv1"), c_prev + c, c, k, true, l);
            push(format!("dec{l}.conv2"), c, c, k, true, l);
            c_prev = c;
        }
        push("head".into(), c_prev, 1, 1, false, 0);
        specs
    }

    /// Exact learnable parameter total.
    pub fn param_count(&self) -> usize {
        self.layout().iter().map(ConvSpec::param_len).sum()
    }

    /// Multiply-accumulates of one forward pass.
    pub fn forward_macs(&self) -> usize {
        self.layout().iter().map(|s| s.weight_len() * s.height * s.width).sum()
    }
}

/// Parameters of a single `k x k` convolution with bias.
pub fn conv_param_count(c_in: usize, c_out: usize, kernel: usize) -> usize {
    c_out * (c_in * kernel * kernel + 1)
}

//! Encoder-decoder network mapping stacked radar heatmaps to an occupancy
//! grid, with a hand-written backward pass and Adam.

pub mod config;
pub mod io;
pub mod layers;
pub mod loss;
pub mod net;
pub mod optim;
pub mod scalar;
pub mod train;

pub use config::{ConfigError, ConvSpec, NetConfig};
pub use io::{read_weights, write_weights, WeightsError};
pub use loss::{loss, LossParts, LossWeights};
pub use net::{binarize, Cache, InitScheme, NetError, Network};
pub use optim::Adam;
pub use scalar::Scalar;
pub use train::{train, Control, EpochReport, InMemory, SampleSource, TrainConfig, TrainError, TrainReport};

//! The fixed 1D CNN probe: three conv + batch-norm + ReLU blocks along the
//! time axis, global average pooling, and a linear softmax head.
//!
//! Gradients are derived by hand for this architecture; there is no general
//! autodiff. The model is generic over the float type so that gradient checks
//! can run in f64 while training uses f32.

use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

pub mod checkpoint;
pub mod model;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{ClassifierModel, Gradients};
pub use train::{train, EpochStats, TrainConfig, TrainTrace};

pub const PROBE_CHANNELS: [usize; 3] = [64, 128, 256];
pub const PROBE_KERNEL: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {n_classes} classes")]
    InvalidLabel { label: usize, n_classes: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    DivergedLoss { epoch: usize, loss: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Float types the probe can run in.
pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub in_dim: usize,
    pub n_classes: usize,
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
}

impl ClassifierConfig {
    /// The probe architecture: channels 64/128/256, kernel 5.
    pub fn new(in_dim: usize, n_classes: usize) -> Self {
        ClassifierConfig { in_dim, n_classes, conv_channels: PROBE_CHANNELS.to_vec(), kernel_size: PROBE_KERNEL }
    }

    /// Same block structure with custom widths; used for small test instances.
    pub fn with_channels(in_dim: usize, n_classes: usize, conv_channels: Vec<usize>) -> Self {
        ClassifierConfig { in_dim, n_classes, conv_channels, kernel_size: PROBE_KERNEL }
    }

    pub fn is_probe_architecture(&self) -> bool {
        self.conv_channels == PROBE_CHANNELS && self.kernel_size == PROBE_KERNEL
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.in_dim == 0 {
            return Err(NnError::InvalidConfig("in_dim must be > 0".into()));
        }
        if self.n_classes < 2 {
            return Err(NnError::InvalidConfig(format!("n_classes must be ≥ 2, got {}", self.n_classes)));
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return Err(NnError::InvalidConfig(format!("bad conv channels {:?}", self.conv_channels)));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(NnError::InvalidConfig(format!("kernel size must be odd, got {}", self.kernel_size)));
        }
        Ok(())
    }

    pub fn last_channels(&self) -> usize {
        *self.conv_channels.last().expect("validated nonempty")
    }
}

//! Spherical saliency primitives for 360° video: sphere geometry,
//! ground-truth construction from gaze traces, the center-bias prior,
//! training losses and evaluation metrics.

pub mod center_bias;
pub mod error;
pub mod gt;
pub mod io;
pub mod map;
pub mod metrics;
pub mod objectives;
pub mod sphere;

pub use center_bias::{BiasComponents, CenterBiasModel};
pub use error::{Error, Result};
pub use gt::{FixationTrace, GroundTruthConfig, Pipeline, RgbFrame, VideoClip};
pub use map::{FixationMap, SaliencyMap};
pub use metrics::{MetricReport, NssNormalization};
pub use objectives::{LossBreakdown, LossTerms};
pub use sphere::{latitude_weights, EquirectGrid, LatitudeWeights, SphericalPoint};

//! Frequency-guided tiled diffusion sampling.
//!
//! A base image is generated at the denoiser's native resolution, then
//! refined in progressively larger stages. Each stage upscales in pixel
//! space, inverts every half-overlapping patch with DDIM, and samples the
//! blended canvas again with guidance split by wavelet band: the low band
//! follows the conditional prediction, the detail bands are guided.
//!
//! ```
//! use hiwave::denoise::{AnalyticBackend, Condition};
//! use hiwave::pipeline::{run_pipeline, PipelinePlan, RunOptions};
//!
//! let backend = AnalyticBackend::desk(0).unwrap();
//! let plan = PipelinePlan::progressive(Condition::component(1), 7, &[128], 8);
//! let out = run_pipeline(&plan, &backend, &RunOptions::default()).unwrap();
//! assert_eq!(out.final_image().height(), 128);
//! ```

pub mod denoise;
pub mod error;
pub mod exec;
pub mod field;
pub mod guidance;
pub mod imaging;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod tiling;
pub mod wavelet;

pub use error::{Error, Result};
pub use field::{Field, Shape};

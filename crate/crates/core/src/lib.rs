//! Explicit point-based single-view human reconstruction.
//!
//! The pipeline lifts a masked depth map to a colored partial cloud, pulls a
//! parametric body model onto it, generates a complete body cloud with a
//! conditional point diffusion model, refines and densifies the result, and
//! scores it against ground truth.
//!
//! Runnable walkthroughs of each stage live in `examples/`:
//!
//! ```bash
//! cargo run --release -p hap --example lift_depth
//! cargo run --release -p hap --example end_to_end
//! ```

pub mod body;
pub mod camera;
pub mod depth;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod geom;
pub mod io;
pub mod pipeline;
pub mod raster;
pub mod rectify;
pub mod refine;
pub mod rng;
pub mod synth;

pub use error::{HapError, Result};

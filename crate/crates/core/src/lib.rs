//! Density-guided diffusion for typed 2-D cell layouts.
//!
//! The crate covers the full layout generation loop: rasterizing annotated
//! cell centers into binary marker maps, fitting per-type spatial densities
//! (KDE, GMM, GMCM), sampling layout/density tensors with a DDPM reverse
//! chain driven by an exact empirical-Bayes denoiser, and scoring generated
//! layouts with the spatial Fréchet distance.

pub mod density;
pub mod diffusion;
pub mod error;
pub mod fid;
pub mod io;
pub mod layout;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use layout::{CellTypeId, CountingCategorizer, Dataset, LayoutTensor, PointPattern};
pub use tensor::{ChannelStack, Shape};

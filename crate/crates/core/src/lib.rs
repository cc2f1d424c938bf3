//! Delayed non-local monostable reaction-diffusion: dispersal kernels, birth laws,
//! characteristic analysis, a moving-frame solver, wave profiles and stability experiments.

pub mod birth_laws;
pub mod error;
pub mod evolve;
pub mod kernels;
pub mod numerics;
pub mod scalar;
pub mod spectral;
pub mod stability_lab;
pub mod waves;

pub use birth_laws::{BirthForm, BirthLaw, Envelopes, LawReport};
pub use error::{Error, Result};
pub use kernels::{Kernel, KernelForm, Side};
pub use scalar::Real;
pub use spectral::{FrameSpec, RootReport, SpectralReport};

pub type Kernel64 = Kernel<f64>;
pub type BirthLaw64 = BirthLaw<f64>;
pub type FrameSpec64 = FrameSpec<f64>;
pub type Kernel32 = Kernel<f32>;
pub type BirthLaw32 = BirthLaw<f32>;
pub type FrameSpec32 = FrameSpec<f32>;

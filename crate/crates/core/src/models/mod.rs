//! Worked examples and wrappers implementing [`PdmpModel`](crate::PdmpModel).

pub mod corrosion;
pub mod killed;
pub mod poisson;
pub mod toy;

pub use corrosion::{corrosion_u_star, CorrosionModel};
pub use killed::Killed;
pub use poisson::{poisson_exact_moment, poisson_exact_survival, PoissonModel};
pub use toy::{ToyChain, ToyPoint, ToyTarget};

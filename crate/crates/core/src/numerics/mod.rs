//! Deterministic numerical substrate shared by every other module.

mod adam;
mod gradcheck;
mod matrix;
mod rng;
mod schedule;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, relative_error};
pub use matrix::Matrix;
pub use rng::Rng;
pub use schedule::cosine_anneal;

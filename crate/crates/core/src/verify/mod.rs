//! Verification of decision-tree policies: pointwise robustness, bounded
//! safety of closed-loop piecewise-affine systems, and Lyapunov stability.

pub mod correctness;
pub mod interval;
pub mod repair;
pub mod robustness;
pub mod sos;
pub mod stability;

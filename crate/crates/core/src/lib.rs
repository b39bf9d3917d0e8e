//! Robust stability analysis of PDE and delay systems through partial
//! integral operators, integral quadratic constraints and semidefinite
//! programming.

pub mod num;
pub mod polynomial;
pub mod pi;
pub mod oracle;
pub mod pie;
pub mod sdp;
pub mod iqc;
pub mod kyp;

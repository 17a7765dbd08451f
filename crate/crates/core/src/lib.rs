//! Consensus ADMM optimal power flow over a TSO/DSO split, residual-evasive
//! false data injection attacks against it, and the monitors they evade.

pub mod admm;
pub mod attacks;
pub mod monitors;
pub mod network;
pub mod opf;
pub mod scenario;

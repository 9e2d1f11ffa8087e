//! Eigenpairs, spectral flow, intertwiners and path diagnostics.

mod bracket;
mod flow;
mod hypothesis;
mod intertwiner;
mod reference;
mod solve;

pub use bracket::{bracket_check, BracketBaseline, BracketReport, BracketRow};
pub use flow::{spectral_flow, spectral_flow_samples, Crossing, FlowOptions, FlowResult};
pub use hypothesis::{hypothesis_report_from_flow, nonuniform_derivatives, path_hypothesis_report, DerivativeProxy, HypothesisReport};
pub use intertwiner::{build_intertwiner, Intertwiner};
pub use reference::{nodal_mode, FourierLabel, FourierReferences};
pub use solve::{clusters, eigensolve, eigensolve_with, momentum_modes, SolveOptions, SpectralResult};

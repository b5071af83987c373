//! Global sensitivity analysis: Morris screening and Sobol indices.

pub mod morris;
pub mod sobol;

pub use morris::{morris_design, morris_indices, MorrisDesign, MorrisIndices, MorrisResult};
pub use sobol::{saltelli_design, sobol_indices, time_integrated_sobol, IntegratedSobol, SaltelliDesign, SobolIndices, SobolResult};

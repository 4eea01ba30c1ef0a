//! Empirical measures, the scale-`r` norm and the regularity audits built on it.

pub mod empirical;
pub mod inequality;
pub mod norm;
pub mod spatial;

pub use empirical::{
    birkhoff_measure, lebesgue_on_curve, project_measure, restrict, Atom, Chart,
    EmpiricalMeasure, ProjectedMeasure,
};
pub use inequality::{
    family_norm, leaf_measure, main_inequality_audit, Boxes, FamilyNorm, FloorPolicy,
    InequalityConfig, InequalityReport, InequalityRow,
};
pub use norm::{
    abs_continuity_scan, covering_constant, density_estimate, r_inner, r_inner_with, r_norm,
    r_norm_sq, r_norm_with, BallMass, DensityField, Domain, IndexedMeasure, Integration,
    NormConfig, ScanConfig, ScanReport, ScanRow, UniformRect,
};
pub use spatial::SpatialHash;

// Indexed loops mirror the tensor index conventions throughout; iterator
// rewrites would obscure them.
#![allow(clippy::needless_range_loop)]

//! Numerics for the kinematics of n-dimensional manifolds rolling on one
//! another without twisting or slipping: configuration-space distributions,
//! rolling trajectory integration, extension of intrinsic rollings to
//! ambient isometries, and controllability via Lie-bracket flags.

pub mod chart;
pub mod connection;
pub mod error;
pub mod flag;
pub mod io;
pub mod linalg;
pub mod num;
pub mod rolling;
pub mod scenario;
pub mod verify;

pub use chart::{
    circle_r2, circle_r3, euclidean, flat_cylinder, line_r3, orthonormality_residual, plane_r3,
    se3, se3_flat, spiral_r3, sphere, AmbientData, ChartKind, Christoffel, ChristoffelTensor,
    FramedChart,
};
pub use connection::{
    christoffel, christoffel_numeric, gaussian_curvature, geodesic, geodesic_residual,
    normal_christoffel, normal_parallel_transport, parallel_transport, structural_constants_2d,
    SampledCurve,
};
pub use error::{CoreError, Result};
pub use flag::{compute_flag, controllability_report, lie_bracket_numeric, FlagReport, VectorFieldHandle};
pub use linalg::{
    exp_skew, project_to_so, rank_of_span, skew_basis, so_bracket_table, Matrix, RankPolicy,
    SkewIndex,
};
pub use rolling::{
    config_dim, extend_to_extrinsic, frame_coefficient_drift, integrate_rolling, noslip_residual,
    reconstruct_ambient_isometry, rolling_fields, rolling_freedom, v_coefficients,
    verify_rolling_conditions, vperp_coefficients, ConfigPoint, ExtConfigPoint, ManifoldPair,
    RollingTrajectory,
};

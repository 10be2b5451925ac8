//! Latent dynamics across recurrences: convergence to (cyclic) fixed points,
//! similarity structure, the attention-stability bound and PCA paths.

mod cyclic;
mod fixed_point;
mod prop2;
mod similarity;
mod trajectory;

pub use cyclic::{cyclic_shift_check, CyclicShiftReport, CYCLIC_SHIFT_TOL, FIXED_POINT_TOL, STALL_WINDOW};
pub use fixed_point::{
    fixed_point_report, successive_cosines, successive_differences, ConvergenceTest, FixedPointParams,
    FixedPointReport, LayerFixedPoint, LONG_COLUMNS,
};
pub use prop2::{
    bound_pair, bound_rhs, head_kappa, prop2_audit, prop2_bound_check, prop2_table, Prop2Record, BOUND_TOL,
    PROP2_COLUMNS, SOFTMAX_LIPSCHITZ,
};
pub use similarity::{pairwise_similarity, pairwise_similarity_batch, SimilarityKind, SimilarityMatrix};
pub use trajectory::{pca_trajectory, Trajectory, TRAJECTORY_COLUMNS};

//! Dense numerical kernel: matrix products, row softmax, normalization,
//! distances, real FFT magnitudes, a symmetric eigensolver and 2-D PCA.

mod eigen;
mod fft;
mod matrix;
mod ops;
mod pca;
pub use pca::{pca_2d, Pca2};

pub use eigen::{symmetric_eigen, symmetric_eigenvalues, SymmetricEigen, SYMMETRY_TOL};
pub use fft::{real_fft_magnitudes, Spectrum, MIN_FFT_LEN};
pub use matrix::{dot, norm2, Matrix};
pub use ops::{
    cosine_similarity, frobenius_distance, layer_norm, mean_row_cosine, normalize, rms_norm,
    row_softmax, Cosine, NormKind, NORM_EPS,
};
pub(crate) use ops::softmax_prefix;

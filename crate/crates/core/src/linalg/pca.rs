use super::eigen::symmetric_eigen;
use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Two-component principal component projection.
#[derive(Debug, Clone)]
pub struct Pca2<T> {
    /// `rows x 2` projections of the centred points.
    pub projections: Matrix<T>,
    /// Variance captured by each component (sample covariance, `n - 1`).
    pub variances: [T; 2],
    /// `2 x cols`, unit rows, largest-magnitude entry of each row positive.
    pub components: Matrix<T>,
    /// Set when the centred data has rank below two; the second column of
    /// `projections` is then all zeros.
    pub rank_deficient: bool,
}

pub fn pca_2d<T: Scalar>(points: &Matrix<T>) -> Result<Pca2<T>> {
    let (n, dim) = points.shape();
    if n < 3 {
        return Err(Error::InvalidInput(format!("PCA needs at least 3 points, got {n}")));
    }
    points.ensure_finite("PCA input")?;
    let mut centred = points.clone();
    for j in 0..dim {
        let mean = (0..n).map(|i| points[(i, j)]).sum::<T>() / T::from_count(n);
        for i in 0..n {
            centred[(i, j)] -= mean;
        }
    }
    let denom = T::from_count(n - 1);

    // Work in whichever of the two Gram spaces is smaller.
    let mut dirs: Vec<Vec<T>> = Vec::with_capacity(2);
    let mut variances = [T::zero(); 2];
    if dim <= n {
        let cov = centred.transpose().matmul(&centred)?.scale(T::one() / denom);
        let eig = symmetric_eigen(&cov)?;
        for (c, var) in variances.iter_mut().enumerate().take(dim) {
            dirs.push((0..dim).map(|r| eig.vectors[(r, c)]).collect());
            *var = eig.values[c].max(T::zero());
        }
    } else {
        let gram = centred.matmul_transposed(&centred)?.scale(T::one() / denom);
        let eig = symmetric_eigen(&gram)?;
        for (c, var) in variances.iter_mut().enumerate() {
            let lambda = eig.values[c].max(T::zero());
            *var = lambda;
            // v = X^T u / |X^T u|
            let mut v = vec![T::zero(); dim];
            for i in 0..n {
                let u = eig.vectors[(i, c)];
                for (vj, &x) in v.iter_mut().zip(centred.row(i)) {
                    *vj += u * x;
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > T::zero() {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            dirs.push(v);
        }
    }
    while dirs.len() < 2 {
        dirs.push(vec![T::zero(); dim]);
    }

    let scale = variances[0].max(T::min_positive_value());
    let rank_deficient = variances[1] <= T::lit(1e-12).max(T::epsilon() * T::lit(64.0)) * scale
        || dirs[1].iter().all(|&x| x == T::zero());
    if rank_deficient {
        variances[1] = T::zero();
        dirs[1].iter_mut().for_each(|x| *x = T::zero());
    }
    for d in dirs.iter_mut() {
        fix_sign(d);
    }

    let mut projections = Matrix::zeros(n, 2);
    for i in 0..n {
        for (c, d) in dirs.iter().enumerate() {
            projections[(i, c)] = dot(centred.row(i), d);
        }
    }
    let components = Matrix::from_rows(&dirs)?;
    Ok(Pca2 {
        projections,
        variances,
        components,
        rank_deficient,
    })
}

/// Flip so the entry of largest magnitude is positive (first index on ties).
fn fix_sign<T: Scalar>(v: &mut [T]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < T::zero()) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

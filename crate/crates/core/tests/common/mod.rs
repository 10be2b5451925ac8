#![allow(dead_code)]

use loopscope_core::Matrix64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random row-stochastic matrix, causal when asked, with some rows made
/// sharply peaked so sink and entropy edge regions are exercised.
pub fn random_stochastic(rng: &mut ChaCha8Rng, t: usize, causal: bool) -> Matrix64 {
    let mut m = Matrix64::zeros(t, t);
    for i in 0..t {
        let width = if causal { i + 1 } else { t };
        let sharp = rng.random_bool(0.2);
        let mut sum = 0.0;
        for j in 0..width {
            let v: f64 = rng.random_range(0.0..1.0);
            let v = if sharp { v.powi(12) } else { v };
            m[(i, j)] = v;
            sum += v;
        }
        if sum == 0.0 {
            m[(i, 0)] = 1.0;
            sum = 1.0;
        }
        for j in 0..width {
            m[(i, j)] /= sum;
        }
    }
    m
}

pub fn entropy_nats(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &x in p {
        if x > 0.0 {
            h -= x * x.ln();
        }
    }
    h
}

pub fn naive_colsum(a: &Matrix64) -> f64 {
    let t = a.rows();
    let mut c = vec![0.0; t];
    for i in 0..t {
        for j in 0..t {
            c[j] += a[(i, j)];
        }
    }
    let p: Vec<f64> = c.iter().map(|x| x / t as f64).collect();
    1.0 - entropy_nats(&p) / (t as f64).ln()
}

pub fn naive_sink(a: &Matrix64, k: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows() {
        s += a[(i, k)];
    }
    s / a.rows() as f64
}

pub fn naive_mixing(a: &Matrix64) -> f64 {
    let mut total = 0.0;
    for i in 0..a.rows() {
        let row: Vec<f64> = (0..a.cols()).map(|j| a[(i, j)]).collect();
        total += entropy_nats(&row);
    }
    total / a.rows() as f64
}

/// Eigenvalues of a symmetric matrix by Householder tridiagonalisation and
/// Sturm-sequence bisection, descending.
pub fn bisection_eigenvalues(m: &Matrix64) -> Vec<f64> {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    for k in 0..n.saturating_sub(2) {
        let alpha2: f64 = (k + 1..n).map(|i| a[i][k] * a[i][k]).sum();
        if alpha2 == 0.0 {
            continue;
        }
        let alpha = -a[k + 1][k].signum() * alpha2.sqrt();
        let alpha = if a[k + 1][k] == 0.0 { -alpha2.sqrt() } else { alpha };
        let mut v = vec![0.0; n];
        v[k + 1] = a[k + 1][k] - alpha;
        for i in k + 2..n {
            v[i] = a[i][k];
        }
        let vn: f64 = v.iter().map(|x| x * x).sum();
        if vn == 0.0 {
            continue;
        }
        // A <- H A H with H = I - 2 v v^T / (v^T v)
        let p: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i][j] * v[j]).sum::<f64>() * 2.0 / vn).collect();
        let kk: f64 = (0..n).map(|i| v[i] * p[i]).sum::<f64>() / vn;
        let q: Vec<f64> = (0..n).map(|i| p[i] - kk * v[i]).collect();
        for i in 0..n {
            for j in 0..n {
                a[i][j] -= v[i] * q[j] + q[i] * v[j];
            }
        }
    }
    let d: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    let e: Vec<f64> = (1..n).map(|i| a[i][i - 1]).collect();
    let bound = (0..n)
        .map(|i| d[i].abs() + if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 })
        .fold(0.0, f64::max)
        + 1.0;
    // number of eigenvalues below x
    let count = |x: f64| {
        let mut c = 0;
        let mut q = d[0] - x;
        if q < 0.0 {
            c += 1;
        }
        for i in 1..n {
            let denom = if q == 0.0 { f64::EPSILON * bound } else { q };
            q = d[i] - x - e[i - 1] * e[i - 1] / denom;
            if q < 0.0 {
                c += 1;
            }
        }
        c
    };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if count(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    out.reverse();
    out
}

pub fn naive_matrix_entropy(x: &Matrix64) -> f64 {
    let rows: Vec<Vec<f64>> = (0..x.rows())
        .map(|i| x.row(i).to_vec())
        .filter(|r| r.iter().any(|&v| v != 0.0))
        .collect();
    let n = rows.len();
    let norm = |r: &Vec<f64>| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut k = Matrix64::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            k[(i, j)] = dot / (norm(&rows[i]) * norm(&rows[j])) / n as f64;
        }
    }
    let lambdas = bisection_eigenvalues(&k);
    let kept: Vec<f64> = lambdas.into_iter().filter(|&l| l > 64.0 * f64::EPSILON).collect();
    if kept.len() <= 1 {
        return 0.0;
    }
    let total: f64 = kept.iter().sum();
    let p: Vec<f64> = kept.iter().map(|l| l / total).collect();
    entropy_nats(&p) / (n as f64).ln()
}

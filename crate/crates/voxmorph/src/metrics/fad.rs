//! Fréchet distance between Gaussian statistics of embedding sets.

use nalgebra::{DMatrix, DVector};

use super::MetricError;

/// Sample mean and unbiased covariance of an embedding set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    /// Row-major symmetric matrix, `dim * dim` entries.
    pub covariance: Vec<f64>,
    pub dim: usize,
    pub n: usize,
}

/// Estimates mean and (n-1)-normalized covariance from at least two
/// embeddings of uniform dimension.
pub fn gaussian_stats(embeddings: &[Vec<f64>]) -> Result<GaussianStats, MetricError> {
    let n = embeddings.len();
    if n < 2 {
        return Err(MetricError::InsufficientData(format!(
            "need at least 2 embeddings for covariance, got {n}"
        )));
    }
    let dim = embeddings[0].len();
    for (i, e) in embeddings.iter().enumerate() {
        if e.len() != dim {
            return Err(MetricError::ShapeError(format!(
                "embedding {i} has dim {}, expected {dim}",
                e.len()
            )));
        }
    }
    let mut mean = vec![0.0; dim];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut covariance = vec![0.0; dim * dim];
    for e in embeddings {
        for i in 0..dim {
            let di = e[i] - mean[i];
            for j in i..dim {
                covariance[i * dim + j] += di * (e[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            covariance[i * dim + j] /= denom;
            covariance[j * dim + i] = covariance[i * dim + j];
        }
    }
    Ok(GaussianStats {
        mean,
        covariance,
        dim,
        n,
    })
}

fn check_symmetric(stats: &GaussianStats, which: &str) -> Result<(), MetricError> {
    for i in 0..stats.dim {
        for j in 0..i {
            let d =
                (stats.covariance[i * stats.dim + j] - stats.covariance[j * stats.dim + i]).abs();
            if d > 1e-9 {
                return Err(MetricError::ShapeError(format!(
                    "{which} covariance asymmetric at ({i},{j}) by {d:.3e}"
                )));
            }
        }
    }
    Ok(())
}

/// Principal square root of a symmetric positive semidefinite matrix via
/// eigendecomposition. Negative eigenvalues from sampling noise or rank
/// deficiency are clamped to zero.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Fréchet distance between two Gaussians:
///
/// ```text
/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)
/// ```
///
/// The symmetrized inner product keeps the square root real for PSD inputs;
/// tiny negative totals from floating point are clamped to zero.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64, MetricError> {
    if a.dim != b.dim {
        return Err(MetricError::ShapeError(format!(
            "dim mismatch: {} vs {}",
            a.dim, b.dim
        )));
    }
    check_symmetric(a, "first")?;
    check_symmetric(b, "second")?;
    let dim = a.dim;
    let mean_term: f64 = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let sigma_a = DMatrix::from_row_slice(dim, dim, &a.covariance);
    let sigma_b = DMatrix::from_row_slice(dim, dim, &b.covariance);
    let trace_a = sigma_a.trace();
    let trace_b = sigma_b.trace();
    let sqrt_a = psd_sqrt(&sigma_a);
    let inner = &sqrt_a * &sigma_b * &sqrt_a;
    let sym = (&inner + inner.transpose()) * 0.5;
    let cross_trace: f64 = sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum();
    Ok((mean_term + trace_a + trace_b - 2.0 * cross_trace).max(0.0))
}

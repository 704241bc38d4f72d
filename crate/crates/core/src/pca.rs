//! Principal component projection of relation embeddings, reusing the
//! spectral lab's Jacobi solver on the covariance matrix. Rows are
//! centered but not standardized.

use crate::dense::Mat;
use crate::error::{KgError, Result};
use crate::params::ParameterSet;
use crate::spectral::symmetric_jacobi;

/// Relation feature matrix used for projection: ComplEx concatenates the
/// real and imaginary relation parts (m×2K); real-valued models use
/// whatever relation parameters they have, flattened.
pub fn relation_features(params: &ParameterSet) -> Mat {
    let blocks: Vec<&Mat> = [
        params.rel_re.as_ref(),
        params.rel_im.as_ref(),
        params.rel_mat.as_ref(),
    ]
    .into_iter()
    .flatten()
    .map(|pm| &pm.value)
    .collect();
    let m = params.m;
    let total_cols: usize = blocks.iter().map(|b| b.cols()).sum();
    let mut out = Mat::zeros(m, total_cols);
    for r in 0..m {
        let mut off = 0;
        for b in &blocks {
            out.row_mut(r)[off..off + b.cols()].copy_from_slice(b.row(r));
            off += b.cols();
        }
    }
    out
}

/// Project `rows` onto its top principal components. Returns the
/// projected coordinates (rows × components) and the per-component
/// variances, nonincreasing.
pub fn pca_project(rows: &Mat, components: usize) -> Result<(Mat, Vec<f64>)> {
    let m = rows.rows();
    let d = rows.cols();
    if components == 0 || components > d {
        return Err(KgError::Value(format!(
            "requested {} components but the data has dimensionality {}",
            components, d
        )));
    }
    let mut centered = rows.clone();
    for j in 0..d {
        let mean: f64 = (0..m).map(|i| rows[(i, j)]).sum::<f64>() / m as f64;
        for i in 0..m {
            centered[(i, j)] -= mean;
        }
    }
    let denom = if m > 1 { (m - 1) as f64 } else { 1.0 };
    let mut cov = centered.transpose().matmul(&centered);
    for x in cov.data_mut() {
        *x /= denom;
    }
    let (eigs, vecs) = symmetric_jacobi(&cov)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigs[b].partial_cmp(&eigs[a]).unwrap());
    let top = &order[..components];

    let mut projected = Mat::zeros(m, components);
    for i in 0..m {
        for (c, &col) in top.iter().enumerate() {
            projected[(i, c)] = (0..d).map(|j| centered[(i, j)] * vecs[(j, col)]).sum();
        }
    }
    let variances = top.iter().map(|&col| eigs[col].max(0.0)).collect();
    Ok((projected, variances))
}

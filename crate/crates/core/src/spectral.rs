//! Executable verification of the normal-matrix constructions on small
//! dense matrices: lifting a real matrix to a normal complex one,
//! unitary diagonalization via Jacobi rotations, rank-bounded truncation,
//! the shared-basis block construction for matrix families, and the
//! symmetric/antisymmetric split of a ComplEx score matrix.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::dense::{ComplexMat, Mat};
use crate::error::{KgError, Result};
use crate::params::{ModelKind, ParameterSet};

/// Jacobi is O(n³) per sweep; the lab targets verification, not scale.
pub const MAX_DIAG_SIZE: usize = 64;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_OFF_TOL: f64 = 1e-12;
const CLUSTER_GAP: f64 = 1e-8;

/// E with orthonormal columns and the diagonal W of `Z = E W E*`.
#[derive(Debug, Clone)]
pub struct UnitaryDiagonalization {
    pub e: ComplexMat,
    pub w: Vec<Complex64>,
}

impl UnitaryDiagonalization {
    /// E diag(w) E*.
    pub fn reconstruct(&self) -> ComplexMat {
        let n = self.e.rows();
        let k = self.e.cols();
        let mut out = ComplexMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..k {
                    acc += self.e[(i, c)] * self.w[c] * self.e[(j, c)].conj();
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    /// ‖E*E − I‖_∞ over entries.
    pub fn unitarity_residual(&self) -> f64 {
        let gram = self.e.adjoint().matmul(&self.e);
        let k = self.e.cols();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let expected = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - expected).norm());
            }
        }
        worst
    }
}

/// Z = X + iXᵀ; always a normal matrix with Re(Z) = X.
pub fn lift_to_normal(x: &Mat) -> Result<ComplexMat> {
    let n = x.require_square()?;
    if !x.is_finite() {
        return Err(KgError::Value("matrix has non-finite entries".into()));
    }
    let mut z = ComplexMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            z[(i, j)] = Complex64::new(x[(i, j)], x[(j, i)]);
        }
    }
    Ok(z)
}

/// Commutator residual ‖ZZ* − Z*Z‖_F.
pub fn commutator_residual(z: &ComplexMat) -> Result<f64> {
    z.require_square()?;
    let adj = z.adjoint();
    Ok(z.matmul(&adj).sub(&adj.matmul(z)).frobenius_norm())
}

/// Whether ‖ZZ* − Z*Z‖_F ≤ tol·max(1, ‖Z‖_F²).
pub fn is_normal(z: &ComplexMat, tol: f64) -> Result<bool> {
    let residual = commutator_residual(z)?;
    let scale = z.frobenius_norm().powi(2).max(1.0);
    Ok(residual <= tol * scale)
}

fn off_diagonal_norm(a: &ComplexMat) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)].norm_sqr();
            }
        }
    }
    sum.sqrt()
}

/// Cyclic Jacobi for a Hermitian matrix: returns real eigenvalues and a
/// unitary eigenvector matrix, unsorted. Each rotation phase-aligns the
/// (p,q) entry and then applies the classical symmetric 2×2 rotation.
pub fn hermitian_jacobi(h: &ComplexMat) -> Result<(Vec<f64>, ComplexMat)> {
    let n = h.require_square()?;
    let mut a = h.clone();
    let mut q = ComplexMat::identity(n);
    let target = JACOBI_OFF_TOL * h.frobenius_norm().max(1.0);

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a[(p, r)];
                let mag = apr.norm();
                if mag <= target / (n as f64) {
                    continue;
                }
                let u = apr / mag;
                let app = a[(p, p)].re;
                let arr = a[(r, r)].re;
                let theta = (arr - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // J = identity except J[p][p]=c, J[p][r]=s,
                // J[r][p]=−s·ū, J[r][r]=c·ū.
                let ucj = u.conj();
                // columns: A ← A·J
                for i in 0..n {
                    let aip = a[(i, p)];
                    let air = a[(i, r)];
                    a[(i, p)] = c * aip - s * ucj * air;
                    a[(i, r)] = s * aip + c * ucj * air;
                }
                // rows: A ← J*·A
                for j in 0..n {
                    let apj = a[(p, j)];
                    let arj = a[(r, j)];
                    a[(p, j)] = c * apj - s * u * arj;
                    a[(r, j)] = s * apj + c * u * arj;
                }
                // eigenvectors: Q ← Q·J
                for i in 0..n {
                    let qip = q[(i, p)];
                    let qir = q[(i, r)];
                    q[(i, p)] = c * qip - s * ucj * qir;
                    q[(i, r)] = s * qip + c * ucj * qir;
                }
                // clamp the annihilated pair against round-off drift
                a[(p, r)] = Complex64::new(0.0, 0.0);
                a[(r, p)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    let eigs = (0..n).map(|i| a[(i, i)].re).collect();
    Ok((eigs, q))
}

/// Jacobi eigendecomposition of a real symmetric matrix, through the
/// Hermitian solver. Returns (eigenvalues, eigenvectors as columns).
pub fn symmetric_jacobi(x: &Mat) -> Result<(Vec<f64>, Mat)> {
    let (eigs, q) = hermitian_jacobi(&ComplexMat::from_real(x))?;
    Ok((eigs, q.re()))
}

/// Unitary diagonalization Z = E W E* of a normal matrix, by jointly
/// diagonalizing the commuting Hermitian parts H₁ = (Z+Z*)/2 and
/// H₂ = (Z−Z*)/(2i): cyclic Jacobi on H₁, then a nested Jacobi pass on
/// H₂ projected into each eigenvalue cluster of H₁.
pub fn diagonalize_normal(z: &ComplexMat) -> Result<UnitaryDiagonalization> {
    let n = z.require_square()?;
    if n > MAX_DIAG_SIZE {
        return Err(KgError::Value(format!(
            "diagonalization limited to n ≤ {}, got {}",
            MAX_DIAG_SIZE, n
        )));
    }
    let residual = commutator_residual(z)?;
    let tol = 1e-10 * z.frobenius_norm().powi(2).max(1.0);
    if residual > tol {
        return Err(KgError::NotNormal { residual, tol });
    }

    let adj = z.adjoint();
    let mut h1 = ComplexMat::zeros(n, n);
    let mut h2 = ComplexMat::zeros(n, n);
    let half = Complex64::new(0.5, 0.0);
    let half_over_i = Complex64::new(0.0, -0.5); // 1/(2i)
    for i in 0..n {
        for j in 0..n {
            h1[(i, j)] = half * (z[(i, j)] + adj[(i, j)]);
            h2[(i, j)] = half_over_i * (z[(i, j)] - adj[(i, j)]);
        }
    }

    let (lam, q) = hermitian_jacobi(&h1)?;

    // Sort eigenpairs of H₁ so clusters are contiguous.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lam[a].partial_cmp(&lam[b]).unwrap());
    let lam_sorted: Vec<f64> = order.iter().map(|&i| lam[i]).collect();
    let mut e = q.select_columns(&order);

    let lam_scale = lam_sorted
        .iter()
        .fold(1.0f64, |acc, &l| acc.max(l.abs()));
    let gap = CLUSTER_GAP * lam_scale;

    let mut mu = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && lam_sorted[end] - lam_sorted[end - 1] <= gap {
            end += 1;
        }
        let size = end - start;
        if size == 1 {
            // μ = q* H₂ q for an isolated eigenvector
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let mut h2q = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    h2q += h2[(i, j)] * e[(j, start)];
                }
                acc += e[(i, start)].conj() * h2q;
            }
            mu[start] = acc.re;
        } else {
            // project H₂ into the cluster's eigenspace and rediagonalize
            let cols: Vec<usize> = (start..end).collect();
            let slice = e.select_columns(&cols);
            let projected = slice.adjoint().matmul(&h2.matmul(&slice));
            let (cluster_mu, v) = hermitian_jacobi(&projected)?;
            let refined = slice.matmul(&v);
            for (local, col) in (start..end).enumerate() {
                mu[col] = cluster_mu[local];
                for i in 0..n {
                    e[(i, col)] = refined[(i, local)];
                }
            }
        }
        start = end;
    }

    let w: Vec<Complex64> = lam_sorted
        .iter()
        .zip(&mu)
        .map(|(&re, &im)| Complex64::new(re, im))
        .collect();

    // Deterministic output order: descending |w|, ties by descending Re.
    let mut final_order: Vec<usize> = (0..n).collect();
    final_order.sort_by(|&a, &b| {
        w[b].norm()
            .partial_cmp(&w[a].norm())
            .unwrap()
            .then(w[b].re.partial_cmp(&w[a].re).unwrap())
    });
    let e = e.select_columns(&final_order);
    let w = final_order.iter().map(|&i| w[i]).collect();
    Ok(UnitaryDiagonalization { e, w })
}

/// Numerical rank of a real matrix: singular values above
/// `1e-8·σ_max`, obtained from the eigenvalues of XᵀX.
pub fn numerical_rank(x: &Mat) -> Result<usize> {
    x.require_square()?;
    let n = x.rows();
    let gram = x.transpose().matmul(x);
    let (_, v) = symmetric_jacobi(&gram)?;
    // σᵢ = ‖Xvᵢ‖ rather than √eig(XᵀX): the square root would amplify
    // the Jacobi off-diagonal residual from ~1e-12 to ~1e-6 relative,
    // drowning true zeros at the 1e-8 threshold.
    let xv = x.matmul(&v);
    let sigma: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| xv[(i, j)] * xv[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let sigma_max = sigma.iter().cloned().fold(0.0f64, f64::max);
    if sigma_max == 0.0 {
        return Ok(0);
    }
    Ok(sigma.iter().filter(|&&s| s > 1e-8 * sigma_max).count())
}

/// Diagonalize Z = X + iXᵀ and keep only eigenpairs with
/// |w| > 1e-8·max|w|, at most 2k of them. Errors if the numerical rank
/// of X exceeds k.
pub fn rank_bounded_decomposition(x: &Mat, k: usize) -> Result<UnitaryDiagonalization> {
    let observed = numerical_rank(x)?;
    if observed > k {
        return Err(KgError::RankExceeded {
            observed,
            requested: k,
        });
    }
    let full = diagonalize_normal(&lift_to_normal(x)?)?;
    let w_max = full.w.iter().map(|w| w.norm()).fold(0.0f64, f64::max);
    let keep: Vec<usize> = full
        .w
        .iter()
        .enumerate()
        .filter(|(_, w)| w.norm() > 1e-8 * w_max)
        .map(|(i, _)| i)
        .take(2 * k)
        .collect();
    Ok(UnitaryDiagonalization {
        e: full.e.select_columns(&keep),
        w: keep.iter().map(|&i| full.w[i]).collect(),
    })
}

/// Shared-basis decomposition of a family of real square matrices:
/// E = [E₁ … E_m] concatenates the per-matrix diagonalizations and each
/// Λ_i is zero outside its own block, so X_i = Re(E Λ_i E*).
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    /// n×(n·m) concatenated basis.
    pub e: ComplexMat,
    /// One length-(n·m) diagonal per input matrix.
    pub lambdas: Vec<Vec<Complex64>>,
}

pub fn block_tensor_decomposition(matrices: &[Mat]) -> Result<BlockDecomposition> {
    if matrices.is_empty() {
        return Err(KgError::Value("matrix family is empty".into()));
    }
    let n = matrices[0].require_square()?;
    for x in matrices {
        let ni = x.require_square()?;
        if ni != n {
            return Err(KgError::ShapeMismatch(format!(
                "family mixes sizes {} and {}",
                n, ni
            )));
        }
    }
    let m = matrices.len();
    let parts: Vec<UnitaryDiagonalization> = matrices
        .iter()
        .map(|x| diagonalize_normal(&lift_to_normal(x)?))
        .collect::<Result<Vec<_>>>()?;
    let blocks: Vec<&ComplexMat> = parts.iter().map(|p| &p.e).collect();
    let e = ComplexMat::hcat(&blocks);
    let lambdas = (0..m)
        .map(|i| {
            let mut diag = vec![Complex64::new(0.0, 0.0); n * m];
            diag[i * n..(i + 1) * n].copy_from_slice(&parts[i].w);
            diag
        })
        .collect();
    Ok(BlockDecomposition { e, lambdas })
}

impl BlockDecomposition {
    /// Re(E Λ_i E*).
    pub fn reconstruct_real(&self, i: usize) -> Mat {
        let d = UnitaryDiagonalization {
            e: self.e.clone(),
            w: self.lambdas[i].clone(),
        };
        d.reconstruct().re()
    }
}

/// Dense score matrix of a ComplEx relation split into its symmetric and
/// antisymmetric parts:
/// S = E′W′E′ᵀ + E″W′E″ᵀ and A = E′W″E″ᵀ − E″W″E′ᵀ.
/// The entrywise formulas are exact mirror images, so S is exactly
/// symmetric and A exactly antisymmetric in floating point.
pub fn split_symmetric_antisymmetric(params: &ParameterSet, r: usize) -> Result<(Mat, Mat)> {
    if params.model != ModelKind::ComplEx {
        return Err(KgError::WrongModelKind {
            expected: "complex".into(),
            actual: params.model.to_string(),
        });
    }
    if params.n > 4096 {
        return Err(KgError::Value(format!(
            "dense score matrix guarded to n ≤ 4096, got {}",
            params.n
        )));
    }
    params.check_triple(r, 0, 0)?;
    let n = params.n;
    let k = params.k;
    let e_re = &params.ent_re.value;
    let e_im = &params.ent_im.as_ref().unwrap().value;
    let w_re = params.rel_re.as_ref().unwrap().value.row(r);
    let w_im = params.rel_im.as_ref().unwrap().value.row(r);
    let mut s = Mat::zeros(n, n);
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut sym = 0.0;
            let mut anti = 0.0;
            for c in 0..k {
                sym += w_re[c] * (e_re[(i, c)] * e_re[(j, c)] + e_im[(i, c)] * e_im[(j, c)]);
                anti += w_im[c] * (e_re[(i, c)] * e_im[(j, c)] - e_im[(i, c)] * e_re[(j, c)]);
            }
            s[(i, j)] = sym;
            a[(i, j)] = anti;
        }
    }
    Ok((s, a))
}

/// Read a real matrix as a TSV grid of plain reals.
pub fn read_real_matrix(path: &Path) -> Result<Mat> {
    let file = File::open(path).map_err(|source| KgError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| KgError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let row = line
            .split('\t')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| KgError::Parse {
                    path: path.to_owned(),
                    line: idx + 1,
                    message: format!("unreadable real cell {:?}", cell),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(KgError::Parse {
                    path: path.to_owned(),
                    line: idx + 1,
                    message: "ragged row".into(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(KgError::Value(format!("empty matrix file {:?}", path)));
    }
    let cols = rows[0].len();
    let data = rows.into_iter().flatten().collect::<Vec<f64>>();
    Ok(Mat::from_vec(data.len() / cols, cols, data))
}

/// Write a complex matrix as a TSV grid of `re im` cell pairs.
pub fn write_complex_matrix(z: &ComplexMat, out: &mut impl Write) -> std::io::Result<()> {
    for i in 0..z.rows() {
        let row: Vec<String> = (0..z.cols())
            .map(|j| format!("{:e} {:e}", z[(i, j)].re, z[(i, j)].im))
            .collect();
        writeln!(out, "{}", row.join("\t"))?;
    }
    Ok(())
}

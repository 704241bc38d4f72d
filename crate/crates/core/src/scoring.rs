//! Scoring functions φ(r,s,o;Θ) and their analytic gradients for the
//! five model kinds.
//!
//! ComplEx uses the expanded real form
//! φ = ⟨w′,e′_s,e′_o⟩ + ⟨w′,e″_s,e″_o⟩ + ⟨w″,e′_s,e″_o⟩ − ⟨w″,e″_s,e′_o⟩.

use crate::error::Result;
use crate::params::{MatrixId, ModelKind, NormOrder, ParameterSet};

/// Partial derivatives of a score with respect to the parameter rows a
/// triple touches. The RESCAL relation entry carries a flattened K×K
/// block; every other entry is a dense K-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient {
    pub entries: Vec<GradEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradEntry {
    pub matrix: MatrixId,
    pub row: usize,
    pub values: Vec<f64>,
}

impl SparseGradient {
    fn new() -> Self {
        SparseGradient {
            entries: Vec::with_capacity(6),
        }
    }

    /// Add a partial, accumulating into an existing entry when the same
    /// row is touched twice (reflexive triples with s == o).
    fn push(&mut self, matrix: MatrixId, row: usize, values: Vec<f64>) {
        if let Some(e) = self
            .entries
            .iter_mut()
            .find(|e| e.matrix == matrix && e.row == row)
        {
            for (a, b) in e.values.iter_mut().zip(&values) {
                *a += b;
            }
        } else {
            self.entries.push(GradEntry {
                matrix,
                row,
                values,
            });
        }
    }

    /// Scale every partial in place.
    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.entries {
            for v in &mut e.values {
                *v *= factor;
            }
        }
    }

    /// Add 2λ·v for each touched parameter row (L2 term of the
    /// per-triple objective gradient).
    pub fn add_l2(&mut self, params: &ParameterSet, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        for e in &mut self.entries {
            let row = params.matrix(e.matrix).expect("matrix present").value.row(e.row);
            for (g, &v) in e.values.iter_mut().zip(row) {
                *g += 2.0 * lambda * v;
            }
        }
    }
}

fn dot3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((&x, &y), &z)| x * y * z)
        .sum()
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| x * y).collect()
}

fn combine(a: &[f64], b: &[f64], sign: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| x + sign * y).collect()
}

/// φ(r,s,o;Θ) for the parameter set's model kind.
pub fn score(params: &ParameterSet, r: usize, s: usize, o: usize) -> Result<f64> {
    params.check_triple(r, s, o)?;
    Ok(score_unchecked(params, r, s, o))
}

pub(crate) fn score_unchecked(params: &ParameterSet, r: usize, s: usize, o: usize) -> f64 {
    match params.model {
        ModelKind::ComplEx => {
            let es_re = params.ent_re.value.row(s);
            let eo_re = params.ent_re.value.row(o);
            let es_im = params.ent_im.as_ref().unwrap().value.row(s);
            let eo_im = params.ent_im.as_ref().unwrap().value.row(o);
            let w_re = params.rel_re.as_ref().unwrap().value.row(r);
            let w_im = params.rel_im.as_ref().unwrap().value.row(r);
            dot3(w_re, es_re, eo_re) + dot3(w_re, es_im, eo_im) + dot3(w_im, es_re, eo_im)
                - dot3(w_im, es_im, eo_re)
        }
        ModelKind::DistMult => dot3(
            params.rel_re.as_ref().unwrap().value.row(r),
            params.ent_re.value.row(s),
            params.ent_re.value.row(o),
        ),
        ModelKind::Cp => dot3(
            params.rel_re.as_ref().unwrap().value.row(r),
            params.ent_re.value.row(s),
            params.obj_ent.as_ref().unwrap().value.row(o),
        ),
        ModelKind::Rescal => {
            let es = params.ent_re.value.row(s);
            let eo = params.ent_re.value.row(o);
            let w = params.rel_mat.as_ref().unwrap().value.row(r);
            let k = params.k;
            let mut acc = 0.0;
            for i in 0..k {
                let mut row_dot = 0.0;
                for j in 0..k {
                    row_dot += w[i * k + j] * eo[j];
                }
                acc += es[i] * row_dot;
            }
            acc
        }
        ModelKind::TransE { p, .. } => {
            let es = params.ent_re.value.row(s);
            let eo = params.ent_re.value.row(o);
            let w = params.rel_re.as_ref().unwrap().value.row(r);
            let norm: f64 = match p {
                NormOrder::L1 => es
                    .iter()
                    .zip(w)
                    .zip(eo)
                    .map(|((&a, &b), &c)| (a + b - c).abs())
                    .sum(),
                NormOrder::L2 => es
                    .iter()
                    .zip(w)
                    .zip(eo)
                    .map(|((&a, &b), &c)| {
                        let d = a + b - c;
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt(),
            };
            -norm
        }
    }
}

/// Scores φ(r, s, o′) for every candidate object o′, written into `out`
/// (length n). Candidate loops precompute the per-triple factors so the
/// inner pass is a single dot product per entity.
pub fn score_all_objects(params: &ParameterSet, r: usize, s: usize, out: &mut [f64]) -> Result<()> {
    params.check_triple(r, s, 0)?;
    assert_eq!(out.len(), params.n);
    match params.model {
        ModelKind::ComplEx => {
            let es_re = params.ent_re.value.row(s);
            let es_im = params.ent_im.as_ref().unwrap().value.row(s);
            let w_re = params.rel_re.as_ref().unwrap().value.row(r);
            let w_im = params.rel_im.as_ref().unwrap().value.row(r);
            // φ(o) = (w′⊙e′_s − w″⊙e″_s)·e′_o + (w′⊙e″_s + w″⊙e′_s)·e″_o
            let p: Vec<f64> = (0..params.k)
                .map(|k| w_re[k] * es_re[k] - w_im[k] * es_im[k])
                .collect();
            let q: Vec<f64> = (0..params.k)
                .map(|k| w_re[k] * es_im[k] + w_im[k] * es_re[k])
                .collect();
            let ent_im = &params.ent_im.as_ref().unwrap().value;
            for (o, slot) in out.iter_mut().enumerate() {
                let eo_re = params.ent_re.value.row(o);
                let eo_im = ent_im.row(o);
                *slot = p.iter().zip(eo_re).map(|(&a, &b)| a * b).sum::<f64>()
                    + q.iter().zip(eo_im).map(|(&a, &b)| a * b).sum::<f64>();
            }
        }
        ModelKind::DistMult | ModelKind::Cp => {
            let w = params.rel_re.as_ref().unwrap().value.row(r);
            let es = params.ent_re.value.row(s);
            let p = hadamard(w, es);
            let obj = match params.model {
                ModelKind::Cp => &params.obj_ent.as_ref().unwrap().value,
                _ => &params.ent_re.value,
            };
            for (o, slot) in out.iter_mut().enumerate() {
                *slot = p.iter().zip(obj.row(o)).map(|(&a, &b)| a * b).sum();
            }
        }
        ModelKind::Rescal => {
            let es = params.ent_re.value.row(s);
            let w = params.rel_mat.as_ref().unwrap().value.row(r);
            let k = params.k;
            // p = e_sᵀ W_r
            let p: Vec<f64> = (0..k)
                .map(|j| (0..k).map(|i| es[i] * w[i * k + j]).sum())
                .collect();
            for (o, slot) in out.iter_mut().enumerate() {
                *slot = p
                    .iter()
                    .zip(params.ent_re.value.row(o))
                    .map(|(&a, &b)| a * b)
                    .sum();
            }
        }
        ModelKind::TransE { p, .. } => {
            let es = params.ent_re.value.row(s);
            let w = params.rel_re.as_ref().unwrap().value.row(r);
            let base: Vec<f64> = es.iter().zip(w).map(|(&a, &b)| a + b).collect();
            for (o, slot) in out.iter_mut().enumerate() {
                let eo = params.ent_re.value.row(o);
                let norm: f64 = match p {
                    NormOrder::L1 => base.iter().zip(eo).map(|(&a, &c)| (a - c).abs()).sum(),
                    NormOrder::L2 => base
                        .iter()
                        .zip(eo)
                        .map(|(&a, &c)| (a - c) * (a - c))
                        .sum::<f64>()
                        .sqrt(),
                };
                *slot = -norm;
            }
        }
    }
    Ok(())
}

/// Scores φ(r, s′, o) for every candidate subject s′, written into `out`.
pub fn score_all_subjects(params: &ParameterSet, r: usize, o: usize, out: &mut [f64]) -> Result<()> {
    params.check_triple(r, 0, o)?;
    assert_eq!(out.len(), params.n);
    match params.model {
        ModelKind::ComplEx => {
            let eo_re = params.ent_re.value.row(o);
            let eo_im = params.ent_im.as_ref().unwrap().value.row(o);
            let w_re = params.rel_re.as_ref().unwrap().value.row(r);
            let w_im = params.rel_im.as_ref().unwrap().value.row(r);
            // φ(s) = (w′⊙e′_o + w″⊙e″_o)·e′_s + (w′⊙e″_o − w″⊙e′_o)·e″_s
            let p: Vec<f64> = (0..params.k)
                .map(|k| w_re[k] * eo_re[k] + w_im[k] * eo_im[k])
                .collect();
            let q: Vec<f64> = (0..params.k)
                .map(|k| w_re[k] * eo_im[k] - w_im[k] * eo_re[k])
                .collect();
            let ent_im = &params.ent_im.as_ref().unwrap().value;
            for (s, slot) in out.iter_mut().enumerate() {
                let es_re = params.ent_re.value.row(s);
                let es_im = ent_im.row(s);
                *slot = p.iter().zip(es_re).map(|(&a, &b)| a * b).sum::<f64>()
                    + q.iter().zip(es_im).map(|(&a, &b)| a * b).sum::<f64>();
            }
        }
        ModelKind::DistMult => {
            let w = params.rel_re.as_ref().unwrap().value.row(r);
            let eo = params.ent_re.value.row(o);
            let p = hadamard(w, eo);
            for (s, slot) in out.iter_mut().enumerate() {
                *slot = p
                    .iter()
                    .zip(params.ent_re.value.row(s))
                    .map(|(&a, &b)| a * b)
                    .sum();
            }
        }
        ModelKind::Cp => {
            let w = params.rel_re.as_ref().unwrap().value.row(r);
            let vo = params.obj_ent.as_ref().unwrap().value.row(o);
            let p = hadamard(w, vo);
            for (s, slot) in out.iter_mut().enumerate() {
                *slot = p
                    .iter()
                    .zip(params.ent_re.value.row(s))
                    .map(|(&a, &b)| a * b)
                    .sum();
            }
        }
        ModelKind::Rescal => {
            let eo = params.ent_re.value.row(o);
            let w = params.rel_mat.as_ref().unwrap().value.row(r);
            let k = params.k;
            // p = W_r e_o
            let p: Vec<f64> = (0..k)
                .map(|i| (0..k).map(|j| w[i * k + j] * eo[j]).sum())
                .collect();
            for (s, slot) in out.iter_mut().enumerate() {
                *slot = p
                    .iter()
                    .zip(params.ent_re.value.row(s))
                    .map(|(&a, &b)| a * b)
                    .sum();
            }
        }
        ModelKind::TransE { p, .. } => {
            let eo = params.ent_re.value.row(o);
            let w = params.rel_re.as_ref().unwrap().value.row(r);
            let base: Vec<f64> = w.iter().zip(eo).map(|(&b, &c)| b - c).collect();
            for (s, slot) in out.iter_mut().enumerate() {
                let es = params.ent_re.value.row(s);
                let norm: f64 = match p {
                    NormOrder::L1 => base.iter().zip(es).map(|(&b, &a)| (a + b).abs()).sum(),
                    NormOrder::L2 => base
                        .iter()
                        .zip(es)
                        .map(|(&b, &a)| (a + b) * (a + b))
                        .sum::<f64>()
                        .sqrt(),
                };
                *slot = -norm;
            }
        }
    }
    Ok(())
}

/// ∂φ/∂(each touched parameter row). Partials for the same row are
/// merged, so reflexive triples differentiate correctly.
pub fn gradient(params: &ParameterSet, r: usize, s: usize, o: usize) -> Result<SparseGradient> {
    params.check_triple(r, s, o)?;
    let mut g = SparseGradient::new();
    match params.model {
        ModelKind::ComplEx => {
            let es_re = params.ent_re.value.row(s);
            let eo_re = params.ent_re.value.row(o);
            let es_im = params.ent_im.as_ref().unwrap().value.row(s);
            let eo_im = params.ent_im.as_ref().unwrap().value.row(o);
            let w_re = params.rel_re.as_ref().unwrap().value.row(r);
            let w_im = params.rel_im.as_ref().unwrap().value.row(r);
            g.push(
                MatrixId::EntRe,
                s,
                combine(&hadamard(w_re, eo_re), &hadamard(w_im, eo_im), 1.0),
            );
            g.push(
                MatrixId::EntIm,
                s,
                combine(&hadamard(w_re, eo_im), &hadamard(w_im, eo_re), -1.0),
            );
            g.push(
                MatrixId::EntRe,
                o,
                combine(&hadamard(w_re, es_re), &hadamard(w_im, es_im), -1.0),
            );
            g.push(
                MatrixId::EntIm,
                o,
                combine(&hadamard(w_re, es_im), &hadamard(w_im, es_re), 1.0),
            );
            g.push(
                MatrixId::RelRe,
                r,
                combine(&hadamard(es_re, eo_re), &hadamard(es_im, eo_im), 1.0),
            );
            g.push(
                MatrixId::RelIm,
                r,
                combine(&hadamard(es_re, eo_im), &hadamard(es_im, eo_re), -1.0),
            );
        }
        ModelKind::DistMult => {
            let es = params.ent_re.value.row(s);
            let eo = params.ent_re.value.row(o);
            let w = params.rel_re.as_ref().unwrap().value.row(r);
            g.push(MatrixId::EntRe, s, hadamard(w, eo));
            g.push(MatrixId::EntRe, o, hadamard(w, es));
            g.push(MatrixId::RelRe, r, hadamard(es, eo));
        }
        ModelKind::Cp => {
            let us = params.ent_re.value.row(s);
            let vo = params.obj_ent.as_ref().unwrap().value.row(o);
            let w = params.rel_re.as_ref().unwrap().value.row(r);
            g.push(MatrixId::EntRe, s, hadamard(w, vo));
            g.push(MatrixId::ObjEnt, o, hadamard(w, us));
            g.push(MatrixId::RelRe, r, hadamard(us, vo));
        }
        ModelKind::Rescal => {
            let es = params.ent_re.value.row(s);
            let eo = params.ent_re.value.row(o);
            let w = params.rel_mat.as_ref().unwrap().value.row(r);
            let k = params.k;
            let mut d_es = vec![0.0; k];
            let mut d_eo = vec![0.0; k];
            let mut d_w = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..k {
                    d_es[i] += w[i * k + j] * eo[j];
                    d_eo[j] += w[i * k + j] * es[i];
                    d_w[i * k + j] = es[i] * eo[j];
                }
            }
            g.push(MatrixId::EntRe, s, d_es);
            g.push(MatrixId::EntRe, o, d_eo);
            g.push(MatrixId::RelMat, r, d_w);
        }
        ModelKind::TransE { p, .. } => {
            let es = params.ent_re.value.row(s);
            let eo = params.ent_re.value.row(o);
            let w = params.rel_re.as_ref().unwrap().value.row(r);
            let d: Vec<f64> = es
                .iter()
                .zip(w)
                .zip(eo)
                .map(|((&a, &b), &c)| a + b - c)
                .collect();
            // ∇_{e_s}(−‖d‖_p): L2 uses −d/‖d‖, L1 uses −sign(d) with
            // sign(0) = 0 as the subgradient choice.
            let dir: Vec<f64> = match p {
                NormOrder::L1 => d.iter().map(|&x| -sign0(x)).collect(),
                NormOrder::L2 => {
                    let norm = d.iter().map(|&x| x * x).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        vec![0.0; d.len()]
                    } else {
                        d.iter().map(|&x| -x / norm).collect()
                    }
                }
            };
            g.push(MatrixId::EntRe, s, dir.clone());
            g.push(MatrixId::RelRe, r, dir.clone());
            g.push(MatrixId::EntRe, o, dir.iter().map(|&x| -x).collect());
        }
    }
    Ok(g)
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

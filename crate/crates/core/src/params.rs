//! Parameter storage for all model kinds: real/imaginary embedding
//! matrices, AdaGrad accumulators, initialization, and the model file
//! format.
//!
//! Model files are a single text header line
//!
//! ```text
//! kgmodel 1 <kind> <n> <m> <K> [<p> <margin>]
//! ```
//!
//! followed by raw little-endian f64 payloads, row-major, in the fixed
//! order `ent_re, ent_im, rel_re, rel_im, obj_ent, rel_mat` (only the
//! matrices the kind uses), each value matrix immediately followed by its
//! AdaGrad accumulator. The header is the single source of truth for
//! shapes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dense::Mat;
use crate::error::{KgError, Result};

/// Norm order used by the TransE scoring function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormOrder {
    L1,
    L2,
}

/// Which scoring function governs score and gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    ComplEx,
    DistMult,
    Cp,
    TransE { p: NormOrder, margin: f64 },
    Rescal,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::ComplEx => "complex",
            ModelKind::DistMult => "distmult",
            ModelKind::Cp => "cp",
            ModelKind::TransE { .. } => "transe",
            ModelKind::Rescal => "rescal",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Identifies one of the parameter matrices of a [`ParameterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixId {
    /// Entity real parts (subject embeddings for CP).
    EntRe,
    /// Entity imaginary parts (ComplEx only).
    EntIm,
    /// Relation real parts.
    RelRe,
    /// Relation imaginary parts (ComplEx only).
    RelIm,
    /// Object-side entity embeddings (CP only).
    ObjEnt,
    /// Per-relation K×K matrices, flattened row-major (RESCAL only).
    RelMat,
}

pub const MATRIX_ORDER: [MatrixId; 6] = [
    MatrixId::EntRe,
    MatrixId::EntIm,
    MatrixId::RelRe,
    MatrixId::RelIm,
    MatrixId::ObjEnt,
    MatrixId::RelMat,
];

/// A parameter matrix paired with its AdaGrad accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMatrix {
    pub value: Mat,
    pub acc: Mat,
}

impl ParamMatrix {
    fn zeros(rows: usize, cols: usize) -> Self {
        ParamMatrix {
            value: Mat::zeros(rows, cols),
            acc: Mat::zeros(rows, cols),
        }
    }
}

/// All parameters of one model: Θ plus the AdaGrad state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub model: ModelKind,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub ent_re: ParamMatrix,
    pub ent_im: Option<ParamMatrix>,
    pub rel_re: Option<ParamMatrix>,
    pub rel_im: Option<ParamMatrix>,
    pub obj_ent: Option<ParamMatrix>,
    pub rel_mat: Option<ParamMatrix>,
}

impl ParameterSet {
    pub fn matrix(&self, id: MatrixId) -> Option<&ParamMatrix> {
        match id {
            MatrixId::EntRe => Some(&self.ent_re),
            MatrixId::EntIm => self.ent_im.as_ref(),
            MatrixId::RelRe => self.rel_re.as_ref(),
            MatrixId::RelIm => self.rel_im.as_ref(),
            MatrixId::ObjEnt => self.obj_ent.as_ref(),
            MatrixId::RelMat => self.rel_mat.as_ref(),
        }
    }

    pub fn matrix_mut(&mut self, id: MatrixId) -> Option<&mut ParamMatrix> {
        match id {
            MatrixId::EntRe => Some(&mut self.ent_re),
            MatrixId::EntIm => self.ent_im.as_mut(),
            MatrixId::RelRe => self.rel_re.as_mut(),
            MatrixId::RelIm => self.rel_im.as_mut(),
            MatrixId::ObjEnt => self.obj_ent.as_mut(),
            MatrixId::RelMat => self.rel_mat.as_mut(),
        }
    }

    pub fn present_matrices(&self) -> Vec<MatrixId> {
        MATRIX_ORDER
            .iter()
            .copied()
            .filter(|&id| self.matrix(id).is_some())
            .collect()
    }

    pub fn check_triple(&self, r: usize, s: usize, o: usize) -> Result<()> {
        if r >= self.m {
            return Err(KgError::IdOutOfBounds {
                kind: "relation",
                id: r,
                bound: self.m,
            });
        }
        for &e in &[s, o] {
            if e >= self.n {
                return Err(KgError::IdOutOfBounds {
                    kind: "entity",
                    id: e,
                    bound: self.n,
                });
            }
        }
        Ok(())
    }
}

fn matrix_shape(id: MatrixId, n: usize, m: usize, k: usize) -> (usize, usize) {
    match id {
        MatrixId::EntRe | MatrixId::EntIm | MatrixId::ObjEnt => (n, k),
        MatrixId::RelRe | MatrixId::RelIm => (m, k),
        MatrixId::RelMat => (m, k * k),
    }
}

fn matrices_for(model: ModelKind) -> &'static [MatrixId] {
    match model {
        ModelKind::ComplEx => &[
            MatrixId::EntRe,
            MatrixId::EntIm,
            MatrixId::RelRe,
            MatrixId::RelIm,
        ],
        ModelKind::DistMult | ModelKind::TransE { .. } => &[MatrixId::EntRe, MatrixId::RelRe],
        ModelKind::Cp => &[MatrixId::EntRe, MatrixId::RelRe, MatrixId::ObjEnt],
        ModelKind::Rescal => &[MatrixId::EntRe, MatrixId::RelMat],
    }
}

/// Initialize every parameter entry from a standard normal; accumulators
/// start at zero. Deterministic under `seed`.
pub fn init(model: ModelKind, n: usize, m: usize, k: usize, seed: u64) -> Result<ParameterSet> {
    if n == 0 || m == 0 || k == 0 {
        return Err(KgError::Value(format!(
            "n, m, K must all be positive, got n={} m={} K={}",
            n, m, k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet {
        model,
        n,
        m,
        k,
        ent_re: ParamMatrix::zeros(n, k),
        ent_im: None,
        rel_re: None,
        rel_im: None,
        obj_ent: None,
        rel_mat: None,
    };
    for &id in matrices_for(model) {
        let (rows, cols) = matrix_shape(id, n, m, k);
        let mut pm = ParamMatrix::zeros(rows, cols);
        for x in pm.value.data_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        match id {
            MatrixId::EntRe => params.ent_re = pm,
            MatrixId::EntIm => params.ent_im = Some(pm),
            MatrixId::RelRe => params.rel_re = Some(pm),
            MatrixId::RelIm => params.rel_im = Some(pm),
            MatrixId::ObjEnt => params.obj_ent = Some(pm),
            MatrixId::RelMat => params.rel_mat = Some(pm),
        }
    }
    Ok(params)
}

/// Squared L2 norm of all present parameter matrices; a complex parameter
/// contributes the squared norms of both its real and imaginary parts.
pub fn l2_norm_squared(params: &ParameterSet) -> f64 {
    params
        .present_matrices()
        .into_iter()
        .map(|id| {
            params
                .matrix(id)
                .unwrap()
                .value
                .data()
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
        })
        .sum()
}

const FORMAT_VERSION: u32 = 1;

/// Write `params` to `path` in the documented header + raw-f64 format.
pub fn save(params: &ParameterSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| KgError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| KgError::Io {
        path: path.to_owned(),
        source,
    };
    let header = match params.model {
        ModelKind::TransE { p, margin } => format!(
            "kgmodel {} transe {} {} {} {} {:e}\n",
            FORMAT_VERSION,
            params.n,
            params.m,
            params.k,
            match p {
                NormOrder::L1 => "l1",
                NormOrder::L2 => "l2",
            },
            margin
        ),
        kind => format!(
            "kgmodel {} {} {} {} {}\n",
            FORMAT_VERSION,
            kind.name(),
            params.n,
            params.m,
            params.k
        ),
    };
    w.write_all(header.as_bytes()).map_err(io_err)?;
    for id in params.present_matrices() {
        let pm = params.matrix(id).unwrap();
        for mat in [&pm.value, &pm.acc] {
            for &x in mat.data() {
                w.write_all(&x.to_le_bytes()).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

/// Read a model file produced by [`save`].
pub fn load(path: &Path) -> Result<ParameterSet> {
    let file = File::open(path).map_err(|source| KgError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut r = BufReader::new(file);

    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match r.read(&mut byte) {
            Ok(0) => {
                return Err(KgError::ModelFormat(
                    "truncated file: missing header line".to_owned(),
                ))
            }
            Ok(_) => {
                if byte[0] == b'\n' {
                    break;
                }
                header.push(byte[0]);
                if header.len() > 256 {
                    return Err(KgError::ModelFormat("header line too long".to_owned()));
                }
            }
            Err(source) => {
                return Err(KgError::Io {
                    path: path.to_owned(),
                    source,
                })
            }
        }
    }
    let header = String::from_utf8(header)
        .map_err(|_| KgError::ModelFormat("header is not valid UTF-8".to_owned()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 6 || fields[0] != "kgmodel" {
        return Err(KgError::ModelFormat(format!("bad header: {:?}", header)));
    }
    let version: u32 = fields[1]
        .parse()
        .map_err(|_| KgError::ModelFormat("unreadable version".to_owned()))?;
    if version != FORMAT_VERSION {
        return Err(KgError::ModelFormat(format!(
            "version mismatch: file is v{}, reader supports v{}",
            version, FORMAT_VERSION
        )));
    }
    let parse_dim = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| KgError::ModelFormat(format!("unreadable {}: {:?}", what, s)))
    };
    let n = parse_dim(fields[3], "n")?;
    let m = parse_dim(fields[4], "m")?;
    let k = parse_dim(fields[5], "K")?;
    if n == 0 || m == 0 || k == 0 {
        return Err(KgError::ModelFormat("zero dimension in header".to_owned()));
    }
    let model = match fields[2] {
        "complex" => ModelKind::ComplEx,
        "distmult" => ModelKind::DistMult,
        "cp" => ModelKind::Cp,
        "rescal" => ModelKind::Rescal,
        "transe" => {
            if fields.len() != 8 {
                return Err(KgError::ModelFormat(
                    "transe header needs norm order and margin".to_owned(),
                ));
            }
            let p = match fields[6] {
                "l1" => NormOrder::L1,
                "l2" => NormOrder::L2,
                other => {
                    return Err(KgError::ModelFormat(format!("bad norm order {:?}", other)))
                }
            };
            let margin: f64 = fields[7]
                .parse()
                .map_err(|_| KgError::ModelFormat("unreadable margin".to_owned()))?;
            ModelKind::TransE { p, margin }
        }
        other => return Err(KgError::ModelFormat(format!("unknown model kind {:?}", other))),
    };

    let mut params = ParameterSet {
        model,
        n,
        m,
        k,
        ent_re: ParamMatrix::zeros(0, 0),
        ent_im: None,
        rel_re: None,
        rel_im: None,
        obj_ent: None,
        rel_mat: None,
    };
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|source| KgError::Io {
        path: path.to_owned(),
        source,
    })?;
    let ids = matrices_for(model);
    let expected: usize = ids
        .iter()
        .map(|&id| {
            let (rows, cols) = matrix_shape(id, n, m, k);
            2 * rows * cols * 8
        })
        .sum();
    if payload.len() < expected {
        return Err(KgError::ModelFormat(format!(
            "truncated payload: expected {} bytes, found {}",
            expected,
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(KgError::ModelFormat(format!(
            "payload does not match header shapes: expected {} bytes, found {}",
            expected,
            payload.len()
        )));
    }
    let mut off = 0;
    let mut read_mat = |rows: usize, cols: usize| -> Mat {
        let count = rows * cols;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let bytes: [u8; 8] = payload[off..off + 8].try_into().unwrap();
            data.push(f64::from_le_bytes(bytes));
            off += 8;
        }
        Mat::from_vec(rows, cols, data)
    };
    for &id in ids {
        let (rows, cols) = matrix_shape(id, n, m, k);
        let pm = ParamMatrix {
            value: read_mat(rows, cols),
            acc: read_mat(rows, cols),
        };
        match id {
            MatrixId::EntRe => params.ent_re = pm,
            MatrixId::EntIm => params.ent_im = Some(pm),
            MatrixId::RelRe => params.rel_re = Some(pm),
            MatrixId::RelIm => params.rel_im = Some(pm),
            MatrixId::ObjEnt => params.obj_ent = Some(pm),
            MatrixId::RelMat => params.rel_mat = Some(pm),
        }
    }
    Ok(params)
}

//! Dataset ingestion, vocabulary construction, fold splitting, and the
//! synthetic symmetric/antisymmetric task generator.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KgError, Result};

/// Bijective maps between surface names and dense integer ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    entity_to_id: HashMap<String, usize>,
    id_to_entity: Vec<String>,
    relation_to_id: HashMap<String, usize>,
    id_to_relation: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary::default()
    }

    /// Number of distinct entities, `n`.
    pub fn n_entities(&self) -> usize {
        self.id_to_entity.len()
    }

    /// Number of distinct relations, `m`.
    pub fn n_relations(&self) -> usize {
        self.id_to_relation.len()
    }

    /// Id for `name`, registering it on first appearance.
    pub fn intern_entity(&mut self, name: &str) -> usize {
        if let Some(&id) = self.entity_to_id.get(name) {
            return id;
        }
        let id = self.id_to_entity.len();
        self.entity_to_id.insert(name.to_owned(), id);
        self.id_to_entity.push(name.to_owned());
        id
    }

    pub fn intern_relation(&mut self, name: &str) -> usize {
        if let Some(&id) = self.relation_to_id.get(name) {
            return id;
        }
        let id = self.id_to_relation.len();
        self.relation_to_id.insert(name.to_owned(), id);
        self.id_to_relation.push(name.to_owned());
        id
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_to_id.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_to_id.get(name).copied()
    }

    pub fn entity_name(&self, id: usize) -> Option<&str> {
        self.id_to_entity.get(id).map(String::as_str)
    }

    pub fn relation_name(&self, id: usize) -> Option<&str> {
        self.id_to_relation.get(id).map(String::as_str)
    }

    pub fn entity_names(&self) -> &[String] {
        &self.id_to_entity
    }

    pub fn relation_names(&self) -> &[String] {
        &self.id_to_relation
    }
}

/// One observed fact with its truth value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabeledTriple {
    pub r: usize,
    pub s: usize,
    pub o: usize,
    /// Truth label, -1 or +1.
    pub y: i8,
}

impl LabeledTriple {
    pub fn new(r: usize, s: usize, o: usize, y: i8) -> Self {
        debug_assert!(y == 1 || y == -1);
        LabeledTriple { r, s, o, y }
    }

    pub fn key(&self) -> (usize, usize, usize) {
        (self.r, self.s, self.o)
    }
}

/// A train/valid/test split plus the union of known positives used by
/// filtered ranking.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<LabeledTriple>,
    pub valid: Vec<LabeledTriple>,
    pub test: Vec<LabeledTriple>,
    pub vocabulary: Vocabulary,
    pub all_known_positives: HashSet<(usize, usize, usize)>,
}

impl DatasetSplit {
    pub fn new(
        train: Vec<LabeledTriple>,
        valid: Vec<LabeledTriple>,
        test: Vec<LabeledTriple>,
        vocabulary: Vocabulary,
    ) -> Self {
        let all_known_positives = train
            .iter()
            .chain(&valid)
            .chain(&test)
            .filter(|t| t.y == 1)
            .map(|t| t.key())
            .collect();
        DatasetSplit {
            train,
            valid,
            test,
            vocabulary,
            all_known_positives,
        }
    }
}

/// Load a tab-separated triple file: `subject⟨TAB⟩relation⟨TAB⟩object`,
/// with an optional fourth `-1`/`1` label column when `has_labels` is set.
/// Ids are assigned in first-appearance order; unlabeled triples get y=+1.
pub fn load_tsv(path: &Path, has_labels: bool) -> Result<(Vec<LabeledTriple>, Vocabulary)> {
    let mut vocab = Vocabulary::new();
    let triples = load_tsv_into(path, has_labels, &mut vocab)?;
    Ok((triples, vocab))
}

/// Like [`load_tsv`], interning names into an existing vocabulary so
/// several files can share one id space.
pub fn load_tsv_into(
    path: &Path,
    has_labels: bool,
    vocab: &mut Vocabulary,
) -> Result<Vec<LabeledTriple>> {
    let file = File::open(path).map_err(|source| KgError::Io {
        path: path.to_owned(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut triples = Vec::new();
    let mut seen: HashMap<(usize, usize, usize), i8> = HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| KgError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let expected = if has_labels { 4 } else { 3 };
        if fields.len() != expected {
            return Err(KgError::Parse {
                path: path.to_owned(),
                line: line_no,
                message: format!("expected {} tab-separated fields, got {}", expected, fields.len()),
            });
        }
        let s = vocab.intern_entity(fields[0]);
        let r = vocab.intern_relation(fields[1]);
        let o = vocab.intern_entity(fields[2]);
        let y = if has_labels {
            match fields[3] {
                "1" | "+1" => 1,
                "-1" => -1,
                other => {
                    return Err(KgError::Parse {
                        path: path.to_owned(),
                        line: line_no,
                        message: format!("label must be -1 or 1, got {:?}", other),
                    })
                }
            }
        } else {
            1
        };
        match seen.get(&(r, s, o)) {
            Some(&prev) if prev != y => {
                return Err(KgError::Parse {
                    path: path.to_owned(),
                    line: line_no,
                    message: "duplicate triple with conflicting labels".to_owned(),
                });
            }
            _ => {
                seen.insert((r, s, o), y);
            }
        }
        triples.push(LabeledTriple::new(r, s, o, y));
    }
    Ok(triples)
}

/// Fully observed 2×n×n sign tensor with one symmetric and one
/// antisymmetric relation, upper-triangular cells always in training and
/// lower-triangular cells assigned round-robin to 5 folds.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub n_entities: usize,
    /// Relation id of the symmetric slice.
    pub symmetric_relation: usize,
    /// Relation id of the antisymmetric slice.
    pub antisymmetric_relation: usize,
    pub vocabulary: Vocabulary,
    /// Upper-triangular cells of both slices; always part of training.
    pub always_train: Vec<LabeledTriple>,
    /// The 5 lower-triangular folds.
    pub folds: Vec<Vec<LabeledTriple>>,
}

pub const SYNTHETIC_FOLDS: usize = 5;

impl SyntheticTask {
    /// Split for cross-validation index `i`: fold `i` is test, fold
    /// `(i+1) mod 5` is validation, the rest plus the upper-triangular
    /// set form training.
    pub fn split(&self, i: usize) -> DatasetSplit {
        assert!(i < SYNTHETIC_FOLDS, "fold index out of range");
        let valid_fold = (i + 1) % SYNTHETIC_FOLDS;
        let mut train = self.always_train.clone();
        for (f, fold) in self.folds.iter().enumerate() {
            if f != i && f != valid_fold {
                train.extend_from_slice(fold);
            }
        }
        DatasetSplit::new(
            train,
            self.folds[valid_fold].clone(),
            self.folds[i].clone(),
            self.vocabulary.clone(),
        )
    }
}

/// Generate the two-relation synthetic task: slice 0 is a symmetric ±1
/// matrix, slice 1 an antisymmetric ±1 sign pattern, diagonals unobserved.
pub fn generate_synthetic(n_entities: usize, seed: u64) -> Result<SyntheticTask> {
    if n_entities < 2 {
        return Err(KgError::Value(format!(
            "synthetic task needs at least 2 entities, got {}",
            n_entities
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab = Vocabulary::new();
    for i in 0..n_entities {
        vocab.intern_entity(&format!("e{}", i));
    }
    let sym = vocab.intern_relation("sym");
    let anti = vocab.intern_relation("antisym");

    // Sample each upper-triangular cell as a fair ±1 coin, then mirror:
    // identically for the symmetric slice, negated for the antisymmetric one.
    let coin = |rng: &mut ChaCha8Rng| -> i8 {
        if rand::Rng::gen_bool(rng, 0.5) {
            1
        } else {
            -1
        }
    };

    let mut always_train = Vec::new();
    let mut lower = Vec::new();
    for i in 0..n_entities {
        for j in (i + 1)..n_entities {
            let y_sym = coin(&mut rng);
            always_train.push(LabeledTriple::new(sym, i, j, y_sym));
            lower.push(LabeledTriple::new(sym, j, i, y_sym));
            let y_anti = coin(&mut rng);
            always_train.push(LabeledTriple::new(anti, i, j, y_anti));
            lower.push(LabeledTriple::new(anti, j, i, -y_anti));
        }
    }

    lower.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); SYNTHETIC_FOLDS];
    for (i, t) in lower.into_iter().enumerate() {
        folds[i % SYNTHETIC_FOLDS].push(t);
    }

    Ok(SyntheticTask {
        n_entities,
        symmetric_relation: sym,
        antisymmetric_relation: anti,
        vocabulary: vocab,
        always_train,
        folds,
    })
}

/// Partition `triples` into `k` folds and return the k cross-validation
/// splits: split `i` tests on fold `i`, validates on fold `(i+1) mod k`.
pub fn kfold_split(
    triples: &[LabeledTriple],
    vocabulary: &Vocabulary,
    k: usize,
    seed: u64,
) -> Result<Vec<DatasetSplit>> {
    if k < 3 {
        return Err(KgError::Value(format!("k must be at least 3, got {}", k)));
    }
    if triples.len() < k {
        return Err(KgError::Value(format!(
            "cannot split {} triples into {} folds",
            triples.len(),
            k
        )));
    }
    let mut shuffled = triples.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let mut folds = vec![Vec::new(); k];
    for (i, t) in shuffled.into_iter().enumerate() {
        folds[i % k].push(t);
    }

    let splits = (0..k)
        .map(|i| {
            let valid_fold = (i + 1) % k;
            let mut train = Vec::new();
            for (f, fold) in folds.iter().enumerate() {
                if f != i && f != valid_fold {
                    train.extend_from_slice(fold);
                }
            }
            DatasetSplit::new(
                train,
                folds[valid_fold].clone(),
                folds[i].clone(),
                vocabulary.clone(),
            )
        })
        .collect();
    Ok(splits)
}

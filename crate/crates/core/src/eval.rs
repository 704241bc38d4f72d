//! Ranking metrics (raw and filtered MRR, Hits@N), average precision,
//! and per-relation breakdowns.
//!
//! Ranking across test triples is data-parallel; with the `parallel`
//! feature (on by default) it fans out over rayon worker threads against
//! the frozen parameters.

use std::collections::{BTreeMap, HashSet};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::data::LabeledTriple;
use crate::error::{KgError, Result};
use crate::params::ParameterSet;
use crate::scoring;

/// Raw/filtered candidate handling for [`rank_triple`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    Raw,
    Filtered,
}

/// MRR, Hits@{1,3,10}, and per-relation filtered MRR over a test set.
#[derive(Debug, Clone)]
pub struct RankingReport {
    pub mrr_raw: f64,
    pub mrr_filtered: f64,
    /// Fraction of filtered ranks ≤ N for N ∈ {1, 3, 10}.
    pub hits_at: BTreeMap<usize, f64>,
    /// Filtered MRR per relation id.
    pub per_relation: BTreeMap<usize, f64>,
    pub triple_count: usize,
}

/// Average precision of a scored, labeled list.
#[derive(Debug, Clone)]
pub struct APReport {
    pub average_precision: f64,
    pub positives_count: usize,
    pub total_count: usize,
}

pub const HITS_LEVELS: [usize; 3] = [1, 3, 10];

/// Average-tie rank of the test triple among subject and object
/// substitutions: 1 + |strictly greater| + |ties|/2. In filtered mode
/// candidates other than the test triple itself that appear in
/// `known_positives` are excluded.
pub fn rank_triple(
    params: &ParameterSet,
    test: &LabeledTriple,
    mode: RankMode,
    known_positives: &HashSet<(usize, usize, usize)>,
) -> Result<(f64, f64)> {
    params.check_triple(test.r, test.s, test.o)?;
    let n = params.n;
    let mut scores = vec![0.0; n];

    scoring::score_all_subjects(params, test.r, test.o, &mut scores)?;
    let subject_rank = rank_from_scores(
        &scores,
        test.s,
        mode,
        |cand| (test.r, cand, test.o),
        known_positives,
    );

    scoring::score_all_objects(params, test.r, test.s, &mut scores)?;
    let object_rank = rank_from_scores(
        &scores,
        test.o,
        mode,
        |cand| (test.r, test.s, cand),
        known_positives,
    );

    Ok((subject_rank, object_rank))
}

fn rank_from_scores(
    scores: &[f64],
    target: usize,
    mode: RankMode,
    candidate_key: impl Fn(usize) -> (usize, usize, usize),
    known_positives: &HashSet<(usize, usize, usize)>,
) -> f64 {
    let target_score = scores[target];
    let mut greater = 0usize;
    let mut tied = 0usize;
    for (cand, &sc) in scores.iter().enumerate() {
        if cand == target {
            continue;
        }
        if mode == RankMode::Filtered && known_positives.contains(&candidate_key(cand)) {
            continue;
        }
        if sc > target_score {
            greater += 1;
        } else if sc == target_score {
            tied += 1;
        }
    }
    1.0 + greater as f64 + tied as f64 / 2.0
}

struct TripleRanks {
    relation: usize,
    raw: [f64; 2],
    filtered: [f64; 2],
}

fn rank_one(
    params: &ParameterSet,
    t: &LabeledTriple,
    known_positives: &HashSet<(usize, usize, usize)>,
) -> Result<TripleRanks> {
    let (rs, ro) = rank_triple(params, t, RankMode::Raw, known_positives)?;
    let (fs, fo) = rank_triple(params, t, RankMode::Filtered, known_positives)?;
    Ok(TripleRanks {
        relation: t.r,
        raw: [rs, ro],
        filtered: [fs, fo],
    })
}

/// Sequential reference path for [`ranking_metrics`]; also the fallback
/// when the `parallel` feature is disabled.
pub fn ranking_metrics_sequential(
    params: &ParameterSet,
    test_set: &[LabeledTriple],
    known_positives: &HashSet<(usize, usize, usize)>,
) -> Result<RankingReport> {
    let ranks = test_set
        .iter()
        .map(|t| rank_one(params, t, known_positives))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(test_set, ranks))
}

/// MRR (raw and filtered), Hits@{1,3,10} on filtered ranks, and the
/// per-relation filtered MRR table over both subject and object
/// substitutions of every test triple.
pub fn ranking_metrics(
    params: &ParameterSet,
    test_set: &[LabeledTriple],
    known_positives: &HashSet<(usize, usize, usize)>,
) -> Result<RankingReport> {
    if test_set.is_empty() {
        return Err(KgError::Value("test set is empty".into()));
    }
    #[cfg(feature = "parallel")]
    {
        let ranks = test_set
            .par_iter()
            .map(|t| rank_one(params, t, known_positives))
            .collect::<Result<Vec<_>>>()?;
        Ok(summarize(test_set, ranks))
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranking_metrics_sequential(params, test_set, known_positives)
    }
}

fn summarize(test_set: &[LabeledTriple], ranks: Vec<TripleRanks>) -> RankingReport {
    let total = (2 * ranks.len()) as f64;
    let mut mrr_raw = 0.0;
    let mut mrr_filtered = 0.0;
    let mut hits = BTreeMap::from(HITS_LEVELS.map(|n| (n, 0.0)));
    let mut per_rel: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for tr in &ranks {
        let rel = per_rel.entry(tr.relation).or_insert((0.0, 0));
        for i in 0..2 {
            mrr_raw += 1.0 / tr.raw[i];
            mrr_filtered += 1.0 / tr.filtered[i];
            rel.0 += 1.0 / tr.filtered[i];
            rel.1 += 1;
            for n in HITS_LEVELS {
                if tr.filtered[i] <= n as f64 {
                    *hits.get_mut(&n).unwrap() += 1.0;
                }
            }
        }
    }
    for v in hits.values_mut() {
        *v /= total;
    }
    RankingReport {
        mrr_raw: mrr_raw / total,
        mrr_filtered: mrr_filtered / total,
        hits_at: hits,
        per_relation: per_rel
            .into_iter()
            .map(|(r, (sum, count))| (r, sum / count as f64))
            .collect(),
        triple_count: test_set.len(),
    }
}

/// Average precision of `(score, label)` pairs, labels in {−1, +1}.
/// Sorted by score descending with ties kept in stable input order;
/// AP = mean over positives of the precision at each positive position.
pub fn average_precision(scores: &[(f64, i8)]) -> Result<APReport> {
    let positives_count = scores.iter().filter(|(_, y)| *y == 1).count();
    if positives_count == 0 {
        return Err(KgError::Value(
            "average precision is undefined without positive labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].0.partial_cmp(&scores[a].0).unwrap());
    let mut seen_positives = 0usize;
    let mut ap = 0.0;
    for (pos, &idx) in order.iter().enumerate() {
        if scores[idx].1 == 1 {
            seen_positives += 1;
            ap += seen_positives as f64 / (pos + 1) as f64;
        }
    }
    Ok(APReport {
        average_precision: ap / positives_count as f64,
        positives_count,
        total_count: scores.len(),
    })
}

impl RankingReport {
    /// Machine-readable `metric⟨TAB⟩value` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("mrr_raw\t{}\n", self.mrr_raw));
        out.push_str(&format!("mrr_filtered\t{}\n", self.mrr_filtered));
        for (n, v) in &self.hits_at {
            out.push_str(&format!("hits_at_{}\t{}\n", n, v));
        }
        out.push_str(&format!("triple_count\t{}\n", self.triple_count));
        for (r, v) in &self.per_relation {
            out.push_str(&format!("relation_{}_mrr_filtered\t{}\n", r, v));
        }
        out
    }

    /// Aligned human-readable table.
    pub fn to_table(&self, relation_names: &[String]) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<24} {:>10}\n", "metric", "value"));
        out.push_str(&format!("{:<24} {:>10.4}\n", "MRR (raw)", self.mrr_raw));
        out.push_str(&format!(
            "{:<24} {:>10.4}\n",
            "MRR (filtered)", self.mrr_filtered
        ));
        for (n, v) in &self.hits_at {
            out.push_str(&format!("{:<24} {:>10.4}\n", format!("Hits@{}", n), v));
        }
        out.push_str(&format!(
            "{:<24} {:>10}\n",
            "test triples", self.triple_count
        ));
        if !self.per_relation.is_empty() {
            out.push_str(&format!("\n{:<24} {:>10}\n", "relation", "filt. MRR"));
            for (r, v) in &self.per_relation {
                let name = relation_names
                    .get(*r)
                    .map(String::as_str)
                    .unwrap_or("<unknown>");
                out.push_str(&format!("{:<24} {:>10.4}\n", name, v));
            }
        }
        out
    }
}

impl APReport {
    pub fn to_tsv(&self) -> String {
        format!(
            "average_precision\t{}\npositives\t{}\ntotal\t{}\n",
            self.average_precision, self.positives_count, self.total_count
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{init, ModelKind};

    fn set_entity(p: &mut ParameterSet, i: usize, v: &[f64]) {
        p.ent_re.value.row_mut(i).copy_from_slice(v);
    }

    /// DistMult with K=1 so candidate scores are directly controllable:
    /// φ(0, s, o) = e_s · e_o with w = 1.
    fn controllable(n: usize) -> ParameterSet {
        let mut p = init(ModelKind::DistMult, n, 1, 1, 0).unwrap();
        p.rel_re.as_mut().unwrap().value.row_mut(0)[0] = 1.0;
        for i in 0..n {
            set_entity(&mut p, i, &[0.0]);
        }
        p
    }

    #[test]
    fn top_scoring_triple_ranks_first() {
        let mut p = controllable(3);
        set_entity(&mut p, 0, &[1.0]);
        set_entity(&mut p, 1, &[5.0]);
        // test (0,0,1): object candidates scored e_1=5 > e_2=0, subject
        // candidates e_0=5 vs e_1·e_1=25... use explicit values instead:
        set_entity(&mut p, 2, &[-1.0]);
        let test = LabeledTriple::new(0, 0, 1, 1);
        let empty = HashSet::new();
        let (rs, ro) = rank_triple(&p, &test, RankMode::Raw, &empty).unwrap();
        // object candidates: φ(0,0,o) = e_o: [1, 5, -1] → o=1 top.
        assert_eq!(ro, 1.0);
        // subject candidates: φ(0,s,1) = 5·e_s: [5, 25, -5] → s=0 is rank 2.
        assert_eq!(rs, 2.0);
    }

    #[test]
    fn middle_score_ranks_second() {
        let mut p = controllable(3);
        set_entity(&mut p, 0, &[1.0]);
        set_entity(&mut p, 1, &[0.5]);
        set_entity(&mut p, 2, &[0.9]);
        // φ(0,0,o) = e_o: test object 1 scores 0.5, others 1.0* and 0.9.
        // Against spec example {0.5 vs 0.9, 0.1}: use entity 0 as 0.1.
        set_entity(&mut p, 0, &[0.1]);
        let test = LabeledTriple::new(0, 0, 1, 1);
        // now φ(0,0,o) = 0.1·e_o, ordering unchanged: 0.9 > 0.5 > 0.1·0.1
        let empty = HashSet::new();
        let (_, ro) = rank_triple(&p, &test, RankMode::Raw, &empty).unwrap();
        assert_eq!(ro, 2.0);
    }

    #[test]
    fn tie_gets_average_rank() {
        let mut p = controllable(3);
        set_entity(&mut p, 0, &[1.0]);
        set_entity(&mut p, 1, &[0.7]);
        set_entity(&mut p, 2, &[0.7]);
        let test = LabeledTriple::new(0, 0, 1, 1);
        let empty = HashSet::new();
        let (_, ro) = rank_triple(&p, &test, RankMode::Raw, &empty).unwrap();
        // candidates scored [1·1=1 ... no: φ(0,0,o)=1·e_o = [1, .7, .7];
        // o=0 scores 1.0 which is greater. One tie (o=2), one greater.
        assert_eq!(ro, 1.0 + 1.0 + 0.5);
    }

    #[test]
    fn filtering_removes_competitors() {
        let mut p = controllable(3);
        set_entity(&mut p, 0, &[1.0]);
        set_entity(&mut p, 1, &[0.5]);
        set_entity(&mut p, 2, &[0.9]);
        let test = LabeledTriple::new(0, 0, 1, 1);
        let mut known = HashSet::new();
        known.insert((0, 0, 2)); // the o=2 competitor is a known positive
        known.insert((0, 0, 1)); // the test triple itself: never removed
        let (_, raw) = rank_triple(&p, &test, RankMode::Raw, &known).unwrap();
        let (_, filt) = rank_triple(&p, &test, RankMode::Filtered, &known).unwrap();
        assert!(filt <= raw);
        assert_eq!(filt, 2.0); // o=0 (score 1.0) still outranks
    }

    #[test]
    fn empty_filter_set_equals_raw() {
        let p = init(ModelKind::ComplEx, 6, 2, 3, 8).unwrap();
        let empty = HashSet::new();
        for s in 0..3 {
            let t = LabeledTriple::new(1, s, 5 - s, 1);
            let raw = rank_triple(&p, &t, RankMode::Raw, &empty).unwrap();
            let filt = rank_triple(&p, &t, RankMode::Filtered, &empty).unwrap();
            assert_eq!(raw, filt);
        }
    }

    #[test]
    fn mrr_definition_single_triple() {
        // subject_rank 2, object_rank 4 → MRR = (1/2 + 1/4)/2 = 0.375.
        let ranks = vec![TripleRanks {
            relation: 0,
            raw: [2.0, 4.0],
            filtered: [2.0, 4.0],
        }];
        let test = vec![LabeledTriple::new(0, 0, 1, 1)];
        let report = summarize(&test, ranks);
        assert!((report.mrr_raw - 0.375).abs() < 1e-15);
        assert!((report.mrr_filtered - 0.375).abs() < 1e-15);
        assert_eq!(report.hits_at[&1], 0.0);
        assert_eq!(report.hits_at[&3], 0.5);
        assert_eq!(report.hits_at[&10], 1.0);
    }

    #[test]
    fn perfect_model_all_ones() {
        let ranks = (0..4)
            .map(|i| TripleRanks {
                relation: i % 2,
                raw: [1.0, 1.0],
                filtered: [1.0, 1.0],
            })
            .collect();
        let test: Vec<_> = (0..4).map(|i| LabeledTriple::new(i % 2, 0, 1, 1)).collect();
        let report = summarize(&test, ranks);
        assert_eq!(report.mrr_raw, 1.0);
        assert_eq!(report.mrr_filtered, 1.0);
        for n in HITS_LEVELS {
            assert_eq!(report.hits_at[&n], 1.0);
        }
        assert_eq!(report.per_relation.len(), 2);
    }

    #[test]
    fn ap_hand_example() {
        // labels in score order [+,−,+] → AP = (1/1 + 2/3)/2.
        let scores = vec![(0.9, 1), (0.5, -1), (0.1, 1)];
        let ap = average_precision(&scores).unwrap();
        assert!((ap.average_precision - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(ap.positives_count, 2);
        assert_eq!(ap.total_count, 3);
    }

    #[test]
    fn ap_perfect_and_degenerate() {
        let scores = vec![(0.9, 1), (0.8, 1), (0.1, -1)];
        assert_eq!(average_precision(&scores).unwrap().average_precision, 1.0);
        let all_pos = vec![(0.3, 1), (0.2, 1)];
        assert_eq!(average_precision(&all_pos).unwrap().average_precision, 1.0);
    }

    #[test]
    fn ap_without_positives_is_error() {
        assert!(average_precision(&[(0.5, -1)]).is_err());
    }

    #[test]
    fn ap_ties_broken_by_input_order() {
        // Same score: the earlier element keeps the earlier slot.
        let a = average_precision(&[(0.5, 1), (0.5, -1)]).unwrap();
        assert_eq!(a.average_precision, 1.0);
        let b = average_precision(&[(0.5, -1), (0.5, 1)]).unwrap();
        assert_eq!(b.average_precision, 0.5);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let p = init(ModelKind::ComplEx, 12, 3, 4, 21).unwrap();
        let test: Vec<_> = (0..10)
            .map(|i| LabeledTriple::new(i % 3, i % 12, (i * 5 + 1) % 12, 1))
            .collect();
        let known: HashSet<_> = test.iter().map(|t| t.key()).collect();
        let a = ranking_metrics(&p, &test, &known).unwrap();
        let b = ranking_metrics_sequential(&p, &test, &known).unwrap();
        assert_eq!(a.mrr_raw, b.mrr_raw);
        assert_eq!(a.mrr_filtered, b.mrr_filtered);
        assert_eq!(a.hits_at, b.hits_at);
        assert_eq!(a.per_relation, b.per_relation);
    }

    #[test]
    fn filtered_mrr_at_least_raw() {
        let p = init(ModelKind::DistMult, 15, 2, 3, 33).unwrap();
        let test: Vec<_> = (0..8)
            .map(|i| LabeledTriple::new(i % 2, i, (i + 3) % 15, 1))
            .collect();
        let mut known: HashSet<_> = test.iter().map(|t| t.key()).collect();
        for i in 0..15 {
            known.insert((0, 2, i));
        }
        let report = ranking_metrics(&p, &test, &known).unwrap();
        assert!(report.mrr_filtered >= report.mrr_raw);
        assert!(report.hits_at[&1] <= report.hits_at[&3]);
        assert!(report.hits_at[&3] <= report.hits_at[&10]);
        assert!(report.hits_at[&10] <= 1.0);
    }
}

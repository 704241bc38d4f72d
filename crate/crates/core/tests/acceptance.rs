//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured quantities once its assertions hold.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use complex_kg::data::{self, DatasetSplit, LabeledTriple, SyntheticTask, Vocabulary};
use complex_kg::dense::Mat;
use complex_kg::eval;
use complex_kg::params::{init, MatrixId, ModelKind, NormOrder, ParameterSet};
use complex_kg::scoring;
use complex_kg::spectral;
use complex_kg::training::{self, adagrad_step, loss_gradient, TrainConfig};

const LAMBDA_GRID: [f64; 8] = [0.1, 0.03, 0.01, 0.003, 0.001, 0.0003, 0.00001, 0.0];

fn slice_ap(params: &ParameterSet, triples: &[LabeledTriple], relation: Option<usize>) -> f64 {
    let scored: Vec<(f64, i8)> = triples
        .iter()
        .filter(|t| relation.map_or(true, |r| t.r == r))
        .map(|t| (scoring::score(params, t.r, t.s, t.o).unwrap(), t.y))
        .collect();
    eval::average_precision(&scored).unwrap().average_precision
}

/// Cross-validate one model on the synthetic task: per fold, pick λ from
/// the grid by validation AP, then report mean test AP (overall and per
/// relation slice).
fn cross_validate(task: &SyntheticTask, model: ModelKind, rank: usize) -> (f64, f64, f64) {
    let per_fold: Vec<(f64, f64, f64)> = (0..data::SYNTHETIC_FOLDS)
        .into_par_iter()
        .map(|fold| {
            let split = task.split(fold);
            let runs: Vec<(f64, ParameterSet)> = LAMBDA_GRID
                .par_iter()
                .map(|&lambda| {
                    let config = TrainConfig {
                        alpha: 0.5,
                        lambda,
                        max_iter: 1000,
                        validate_every: 50,
                        batch_count: 100,
                        seed: 1000 + fold as u64,
                        ..TrainConfig::default()
                    };
                    let (params, report) =
                        training::train(&split, model, rank, &config).unwrap();
                    let best_valid = report
                        .validation_history
                        .iter()
                        .map(|&(_, v)| v)
                        .fold(f64::NEG_INFINITY, f64::max);
                    (best_valid, params)
                })
                .collect();
            let (_, best_params) = runs
                .into_iter()
                .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
                .unwrap();
            (
                slice_ap(&best_params, &split.test, None),
                slice_ap(&best_params, &split.test, Some(task.symmetric_relation)),
                slice_ap(&best_params, &split.test, Some(task.antisymmetric_relation)),
            )
        })
        .collect();
    let n = per_fold.len() as f64;
    (
        per_fold.iter().map(|x| x.0).sum::<f64>() / n,
        per_fold.iter().map(|x| x.1).sum::<f64>() / n,
        per_fold.iter().map(|x| x.2).sum::<f64>() / n,
    )
}

#[test]
fn criterion_1_synthetic_joint_task() {
    let task = data::generate_synthetic(30, 20).unwrap();
    let (complex_all, complex_sym, complex_anti) =
        cross_validate(&task, ModelKind::ComplEx, 20);
    let (_, distmult_sym, distmult_anti) = cross_validate(&task, ModelKind::DistMult, 20);

    assert!(
        complex_all >= 0.95,
        "ComplEx overall AP {:.4} below 0.95",
        complex_all
    );
    assert!(
        complex_anti >= 0.95,
        "ComplEx antisymmetric AP {:.4} below 0.95",
        complex_anti
    );
    assert!(
        distmult_anti <= 0.70,
        "DistMult antisymmetric AP {:.4} above 0.70",
        distmult_anti
    );
    assert!(
        distmult_sym >= 0.90,
        "DistMult symmetric AP {:.4} below 0.90",
        distmult_sym
    );
    println!(
        "criterion 1 (synthetic joint task): PASS — ComplEx AP overall {:.3} sym {:.3} anti {:.3}; DistMult sym {:.3} anti {:.3}",
        complex_all, complex_sym, complex_anti, distmult_sym, distmult_anti
    );
}

/// Central finite differences of the score with respect to one
/// coordinate of one parameter row.
fn fd_partial(
    params: &ParameterSet,
    matrix: MatrixId,
    row: usize,
    col: usize,
    r: usize,
    s: usize,
    o: usize,
    step: f64,
) -> f64 {
    let mut plus = params.clone();
    plus.matrix_mut(matrix).unwrap().value.row_mut(row)[col] += step;
    let mut minus = params.clone();
    minus.matrix_mut(matrix).unwrap().value.row_mut(row)[col] -= step;
    (scoring::score(&plus, r, s, o).unwrap() - scoring::score(&minus, r, s, o).unwrap())
        / (2.0 * step)
}

#[test]
fn criterion_2_gradient_finite_differences() {
    let models = [
        ModelKind::ComplEx,
        ModelKind::DistMult,
        ModelKind::Cp,
        ModelKind::Rescal,
        ModelKind::TransE {
            p: NormOrder::L2,
            margin: 1.0,
        },
    ];
    let (n, m, k) = (12, 4, 8);
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    for (mi, &model) in models.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(40 + mi as u64);
        for trial in 0..100 {
            let params = init(model, n, m, k, 500 + (mi * 100 + trial) as u64).unwrap();
            let r = rng.gen_range(0..m);
            let s = rng.gen_range(0..n);
            let o = rng.gen_range(0..n);
            let grad = scoring::gradient(&params, r, s, o).unwrap();
            for entry in &grad.entries {
                for (col, &g) in entry.values.iter().enumerate() {
                    let fd = fd_partial(&params, entry.matrix, entry.row, col, r, s, o, step);
                    let rel = (fd - g).abs() / g.abs().max(fd.abs()).max(1.0);
                    assert!(
                        rel <= 1e-6,
                        "{} trial {} {:?}[{},{}]: analytic {} vs fd {} (rel {:.3e})",
                        model,
                        trial,
                        entry.matrix,
                        entry.row,
                        col,
                        g,
                        fd,
                        rel
                    );
                    worst = worst.max(rel);
                }
            }
        }
    }
    println!(
        "criterion 2 (gradient finite differences): PASS — worst relative error {:.3e}",
        worst
    );
}

#[test]
fn criterion_3_hermitian_symmetry_antisymmetry() {
    let mut worst_sym: f64 = 0.0;
    let mut worst_anti: f64 = 0.0;
    for draw in 0..1000u64 {
        let mut params = init(ModelKind::ComplEx, 6, 2, 8, 3000 + draw).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + draw);
        let r = rng.gen_range(0..2);
        let s = rng.gen_range(0..6);
        let o = rng.gen_range(0..6);

        let saved_im = params.rel_im.as_ref().unwrap().value.clone();
        params.rel_im.as_mut().unwrap().value.data_mut().fill(0.0);
        let diff = (scoring::score(&params, r, s, o).unwrap()
            - scoring::score(&params, r, o, s).unwrap())
        .abs();
        assert!(diff <= 1e-12, "draw {}: symmetry residual {}", draw, diff);
        worst_sym = worst_sym.max(diff);

        params.rel_im.as_mut().unwrap().value = saved_im;
        params.rel_re.as_mut().unwrap().value.data_mut().fill(0.0);
        let sum = (scoring::score(&params, r, s, o).unwrap()
            + scoring::score(&params, r, o, s).unwrap())
        .abs();
        assert!(sum <= 1e-12, "draw {}: antisymmetry residual {}", draw, sum);
        worst_anti = worst_anti.max(sum);
    }
    println!(
        "criterion 3 (Hermitian symmetry/antisymmetry): PASS — worst residuals {:.3e} / {:.3e}",
        worst_sym, worst_anti
    );
}

fn random_mat(n: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_vec(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn real_part_residual(d: &spectral::UnitaryDiagonalization, x: &Mat) -> f64 {
    let re = d.reconstruct().re();
    let mut acc = 0.0f64;
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            acc += (re[(i, j)] - x[(i, j)]).powi(2);
        }
    }
    acc.sqrt()
}

#[test]
fn criterion_4_spectral_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(4001);

    // Lift normality and full reconstruction on 100 random matrices.
    for trial in 0..100 {
        let n = rng.gen_range(2..=16);
        let x = random_mat(n, &mut rng);
        let z = spectral::lift_to_normal(&x).unwrap();
        let commutator = spectral::commutator_residual(&z).unwrap();
        let scale = z.frobenius_norm().powi(2).max(1.0);
        assert!(
            commutator <= 1e-12 * scale,
            "trial {}: commutator residual {:.3e}",
            trial,
            commutator
        );
        let d = spectral::diagonalize_normal(&z).unwrap();
        let err = real_part_residual(&d, &x);
        assert!(
            err <= 1e-8 * x.frobenius_norm().max(1.0),
            "trial {}: reconstruction residual {:.3e}",
            trial,
            err
        );
    }

    // Truncated decomposition of 100 random rank-k matrices.
    for trial in 0..100 {
        let n = rng.gen_range(2..=16usize);
        let k = rng.gen_range(1..=(n / 2).max(1));
        let mut x = Mat::zeros(n, n);
        for _ in 0..k {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for i in 0..n {
                for j in 0..n {
                    x[(i, j)] += a[i] * b[j];
                }
            }
        }
        let d = spectral::rank_bounded_decomposition(&x, k).unwrap();
        assert!(
            d.w.len() <= 2 * k,
            "trial {}: kept {} > 2k = {}",
            trial,
            d.w.len(),
            2 * k
        );
        let err = real_part_residual(&d, &x);
        assert!(
            err <= 1e-6 * x.frobenius_norm().max(1.0),
            "trial {}: truncated residual {:.3e}",
            trial,
            err
        );
    }

    // Shared-basis block construction on 20 random families.
    for trial in 0..20 {
        let m = rng.gen_range(1..=4usize);
        let n = rng.gen_range(2..=8usize);
        let family: Vec<Mat> = (0..m).map(|_| random_mat(n, &mut rng)).collect();
        let block = spectral::block_tensor_decomposition(&family).unwrap();
        for (i, xi) in family.iter().enumerate() {
            let re = block.reconstruct_real(i);
            let mut acc = 0.0f64;
            for a in 0..n {
                for b in 0..n {
                    acc += (re[(a, b)] - xi[(a, b)]).powi(2);
                }
            }
            assert!(
                acc.sqrt() <= 1e-8 * xi.frobenius_norm().max(1.0),
                "trial {} matrix {}: residual {:.3e}",
                trial,
                i,
                acc.sqrt()
            );
        }
    }
    println!("criterion 4 (spectral suite): PASS — lift, reconstruction, rank bound, blocks");
}

#[test]
fn criterion_5_symmetric_antisymmetric_split() {
    for draw in 0..100u64 {
        let params = init(ModelKind::ComplEx, 10, 3, 4, 5000 + draw).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5100 + draw);
        let r = rng.gen_range(0..3);
        let (s, a) = spectral::split_symmetric_antisymmetric(&params, r).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(s[(i, j)], s[(j, i)], "draw {}: S not symmetric", draw);
                assert_eq!(a[(i, j)], -a[(j, i)], "draw {}: A not antisymmetric", draw);
                let phi = scoring::score(&params, r, i, j).unwrap();
                let diff = (s[(i, j)] + a[(i, j)] - phi).abs();
                assert!(diff <= 1e-12, "draw {}: entry residual {:.3e}", draw, diff);
            }
        }
    }
    println!("criterion 5 (score-matrix split): PASS — 100 random parameter sets");
}

/// The swapped-identity sign matrix: +1 where the column permutation
/// pairing (2j, 2j+1) places the identity's ones, −1 elsewhere.
fn swapped_identity(n: usize) -> Vec<LabeledTriple> {
    assert!(n % 2 == 0);
    let partner = |i: usize| if i % 2 == 0 { i + 1 } else { i - 1 };
    let mut triples = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let y = if j == partner(i) { 1 } else { -1 };
            triples.push(LabeledTriple::new(0, i, j, y));
        }
    }
    triples
}

fn sign_accuracy(params: &ParameterSet, triples: &[LabeledTriple]) -> f64 {
    let correct = triples
        .iter()
        .filter(|t| {
            let phi = scoring::score(params, t.r, t.s, t.o).unwrap();
            let predicted = if phi >= 0.0 { 1 } else { -1 };
            predicted == t.y
        })
        .count();
    correct as f64 / triples.len() as f64
}

#[test]
fn criterion_6_swapped_identity_capacity() {
    let n = 30;
    let triples = swapped_identity(n);
    let mut solved = None;
    'restarts: for restart in 0..10u64 {
        let mut params = init(ModelKind::ComplEx, n, 1, 6, 6000 + restart).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6100 + restart);
        for epoch in 1..=600 {
            for _ in 0..triples.len() {
                let t = triples[rng.gen_range(0..triples.len())];
                let grad = loss_gradient(&params, &t, 0.0).unwrap();
                adagrad_step(&mut params, &grad, 0.5, 1e-8);
            }
            if epoch % 20 == 0 && sign_accuracy(&params, &triples) == 1.0 {
                solved = Some((restart, epoch));
                break 'restarts;
            }
        }
    }
    let (restart, epoch) = solved.expect("no restart reached 100% training sign accuracy");
    println!(
        "criterion 6 (swapped-identity capacity): PASS — restart {} epoch {}",
        restart, epoch
    );
}

/// Sort-based tie-average rank, an independent route to the same
/// convention: the mean position of the target among equal scores.
fn brute_rank(
    params: &ParameterSet,
    r: usize,
    fixed: usize,
    target: usize,
    corrupt_subject: bool,
    filtered: bool,
    known: &HashSet<(usize, usize, usize)>,
) -> f64 {
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for cand in 0..params.n {
        let (s, o) = if corrupt_subject {
            (cand, fixed)
        } else {
            (fixed, cand)
        };
        if filtered && cand != target && known.contains(&(r, s, o)) {
            continue;
        }
        candidates.push((cand, scoring::score(params, r, s, o).unwrap()));
    }
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let target_score = candidates.iter().find(|(c, _)| *c == target).unwrap().1;
    let first = candidates.iter().position(|(_, sc)| *sc == target_score).unwrap();
    let count = candidates.iter().filter(|(_, sc)| *sc == target_score).count();
    // positions first..first+count share the averaged rank
    (first + 1) as f64 + (count - 1) as f64 / 2.0
}

/// Staircase integration of the precision-recall curve.
fn brute_ap(scores: &[(f64, i8)]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].0.partial_cmp(&scores[a].0).unwrap());
    let positives = scores.iter().filter(|(_, y)| *y == 1).count() as f64;
    let mut seen = 0.0;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for (pos, &idx) in order.iter().enumerate() {
        if scores[idx].1 == 1 {
            seen += 1.0;
        }
        let recall = seen / positives;
        let precision = seen / (pos + 1) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

#[test]
fn criterion_7_evaluation_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(7001);
    for instance in 0..1000 {
        let n = rng.gen_range(3..=20usize);
        let m = rng.gen_range(1..=3usize);
        // Low-rank integer-ish embeddings force score ties regularly.
        let mut params = init(ModelKind::DistMult, n, m, 2, 100 + instance).unwrap();
        for v in params.ent_re.value.data_mut() {
            *v = rng.gen_range(-2i32..=2) as f64;
        }
        for v in params.rel_re.as_mut().unwrap().value.data_mut() {
            *v = rng.gen_range(-1i32..=1) as f64;
        }
        let test: Vec<LabeledTriple> = (0..rng.gen_range(1..=5))
            .map(|_| LabeledTriple::new(rng.gen_range(0..m), rng.gen_range(0..n), rng.gen_range(0..n), 1))
            .collect();
        let mut known: HashSet<_> = test.iter().map(|t| t.key()).collect();
        for _ in 0..rng.gen_range(0..10) {
            known.insert((rng.gen_range(0..m), rng.gen_range(0..n), rng.gen_range(0..n)));
        }

        for t in &test {
            let (raw_s, raw_o) =
                eval::rank_triple(&params, t, eval::RankMode::Raw, &known).unwrap();
            let (fil_s, fil_o) =
                eval::rank_triple(&params, t, eval::RankMode::Filtered, &known).unwrap();
            let empty = HashSet::new();
            assert_eq!(raw_s, brute_rank(&params, t.r, t.o, t.s, true, false, &empty));
            assert_eq!(raw_o, brute_rank(&params, t.r, t.s, t.o, false, false, &empty));
            assert_eq!(fil_s, brute_rank(&params, t.r, t.o, t.s, true, true, &known));
            assert_eq!(fil_o, brute_rank(&params, t.r, t.s, t.o, false, true, &known));
            assert!(fil_s <= raw_s && fil_o <= raw_o);
        }
        let report = eval::ranking_metrics(&params, &test, &known).unwrap();
        assert!(report.mrr_filtered >= report.mrr_raw - 1e-15);

        // AP against the precision-recall staircase oracle.
        let items = rng.gen_range(2..=20);
        let mut scored: Vec<(f64, i8)> = (0..items)
            .map(|_| {
                (
                    rng.gen_range(-2i32..=2) as f64 / 2.0,
                    if rng.gen_bool(0.5) { 1 } else { -1 },
                )
            })
            .collect();
        if !scored.iter().any(|(_, y)| *y == 1) {
            scored[0].1 = 1;
        }
        let ap = eval::average_precision(&scored).unwrap().average_precision;
        let oracle = brute_ap(&scored);
        assert!(
            (ap - oracle).abs() <= 1e-12,
            "instance {}: AP {} vs oracle {}",
            instance,
            ap,
            oracle
        );
    }
    println!("criterion 7 (evaluation oracle equivalence): PASS — 1000 random instances");
}

fn load_share_vocab(
    dir: &std::path::Path,
    files: &[&str],
    vocab: &mut Vocabulary,
) -> Vec<Vec<LabeledTriple>> {
    files
        .iter()
        .map(|f| data::load_tsv_into(&dir.join(f), false, vocab).unwrap())
        .collect()
}

/// Extended criterion, not required at desk scale: the full WN18
/// reproduction takes hours of CPU. Run explicitly with
/// `WN18_DIR=/path/to/wn18 cargo test --release -- --ignored criterion_8`
/// where the directory holds train.tsv, valid.tsv, test.tsv
/// (subject⟨TAB⟩relation⟨TAB⟩object).
#[test]
#[ignore]
fn criterion_8_wn18_full_reproduction() {
    let dir = std::path::PathBuf::from(
        std::env::var("WN18_DIR").expect("set WN18_DIR to the WN18 split directory"),
    );
    let mut vocab = Vocabulary::new();
    let mut sets = load_share_vocab(&dir, &["train.tsv", "valid.tsv", "test.tsv"], &mut vocab);
    let test = sets.pop().unwrap();
    let valid = sets.pop().unwrap();
    let train = sets.pop().unwrap();
    assert_eq!(train.len(), 141_442);
    assert_eq!(vocab.n_entities(), 40_943);
    assert_eq!(vocab.n_relations(), 18);

    let split = DatasetSplit::new(train, valid, test, vocab);
    let config = TrainConfig {
        alpha: 0.5,
        lambda: 0.03,
        eta: 1,
        seed: 8000,
        ..TrainConfig::default()
    };
    let (params, _) = training::train(&split, ModelKind::ComplEx, 150, &config).unwrap();
    let report =
        eval::ranking_metrics(&params, &split.test, &split.all_known_positives).unwrap();
    assert!(
        report.mrr_filtered >= 0.91,
        "filtered MRR {:.4} below 0.91",
        report.mrr_filtered
    );
    println!(
        "criterion 8 (WN18 reproduction): PASS — filtered MRR {:.4}, raw {:.4}, Hits@10 {:.4}",
        report.mrr_filtered, report.mrr_raw, report.hits_at[&10]
    );
}

//! Command-line surface binding all modules: training, evaluation,
//! prediction, synthetic generation, spectral verification, and PCA
//! export. Every command writes a run manifest next to its outputs.

mod manifest;

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{self, LabeledTriple, Vocabulary};
use crate::dense::Mat;
use crate::error::{KgError, Result};
use crate::eval;
use crate::params::{self, ModelKind, NormOrder, ParameterSet};
use crate::pca;
use crate::scoring;
use crate::spectral;
use crate::training::{self, LossKind, TrainConfig};
use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "kgc", about = "Knowledge-graph completion toolkit", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a model on triple data
    Train(TrainArgs),
    /// Evaluate a trained model: ranking metrics or average precision
    Eval(EvalArgs),
    /// Rank entity completions for a partial triple
    Predict(PredictArgs),
    /// Generate the synthetic symmetric/antisymmetric task
    Synth(SynthArgs),
    /// Verify normal-matrix constructions on concrete matrices
    Spectral(SpectralArgs),
    /// Project relation embeddings onto principal components
    ExportPca(ExportPcaArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Complex,
    Distmult,
    Cp,
    Transe,
    Rescal,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum LossArg {
    Logistic,
    MaxMargin,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub rank: usize,
    /// Initial AdaGrad learning rate
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    /// L2 regularization weight
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    /// Negatives generated per positive
    #[arg(long, default_value_t = 1)]
    pub neg_ratio: usize,
    /// Batches per epoch
    #[arg(long, default_value_t = 100)]
    pub batches: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 50)]
    pub validate_every: usize,
    #[arg(long, value_enum, default_value_t = LossArg::Logistic)]
    pub loss: LossArg,
    /// Margin γ (max-margin loss only)
    #[arg(long)]
    pub margin: Option<f64>,
    /// TransE norm order
    #[arg(long, value_parser = ["1", "2"], default_value = "2")]
    pub norm: String,
    #[arg(long)]
    pub seed: u64,
    /// Training triples, TSV
    #[arg(long)]
    pub train: PathBuf,
    /// Validation triples, TSV
    #[arg(long)]
    pub valid: PathBuf,
    /// Input files carry a fourth ±1 label column
    #[arg(long, default_value_t = false)]
    pub labeled: bool,
    /// Model file to write; vocabulary goes to <out>.vocab
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Model file written by `kgc train`
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Test file carries a fourth ±1 label column (AP mode)
    #[arg(long, default_value_t = false)]
    pub labeled: bool,
    /// Positive-triple files for filtered ranking (train/valid/test);
    /// may repeat
    #[arg(long)]
    pub filter: Vec<PathBuf>,
    /// Report file to write (TSV)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub relation: String,
    /// Fix the subject and rank objects
    #[arg(long, conflicts_with = "object")]
    pub subject: Option<String>,
    /// Fix the object and rank subjects
    #[arg(long)]
    pub object: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SpectralAction {
    /// Lift X to Z = X + iXᵀ and print it
    Lift,
    /// Check normality of the lifted matrix
    Check,
    /// Diagonalize the lifted matrix and verify the reconstruction
    Diag,
    /// Truncated decomposition with a rank bound (requires --k)
    RankBound,
    /// Shared-basis decomposition of a family of matrices
    Blocks,
}

#[derive(Args)]
pub struct SpectralArgs {
    #[arg(long, value_enum)]
    pub action: SpectralAction,
    /// Matrix file (TSV of reals); may repeat for `blocks`
    #[arg(long)]
    pub matrix: Vec<PathBuf>,
    /// Generate a random n×n matrix instead of reading one
    #[arg(long, conflicts_with = "matrix")]
    pub random: Option<usize>,
    #[arg(long, required_if_eq("action", "rank-bound"))]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct ExportPcaArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Entry point used by the `kgc` binary. Returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Synth(args) => cmd_synth(&args),
        Command::Spectral(args) => cmd_spectral(&args),
        Command::ExportPca(args) => cmd_export_pca(&args),
    };
    match outcome {
        Ok(all_checks_passed) => {
            if all_checks_passed {
                0
            } else {
                1
            }
        }
        Err(err) => {
            eprintln!("error: {}", err);
            1
        }
    }
}

fn vocab_path(model_path: &Path) -> PathBuf {
    let mut os = model_path.as_os_str().to_owned();
    os.push(".vocab");
    PathBuf::from(os)
}

fn save_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut text = String::new();
    for name in vocab.entity_names() {
        text.push_str(&format!("entity\t{}\n", name));
    }
    for name in vocab.relation_names() {
        text.push_str(&format!("relation\t{}\n", name));
    }
    fs::write(path, text).map_err(|source| KgError::Io {
        path: path.to_owned(),
        source,
    })
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let file = fs::File::open(path).map_err(|source| KgError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut vocab = Vocabulary::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| KgError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some(("entity", name)) => {
                vocab.intern_entity(name);
            }
            Some(("relation", name)) => {
                vocab.intern_relation(name);
            }
            _ => {
                return Err(KgError::Parse {
                    path: path.to_owned(),
                    line: idx + 1,
                    message: "expected `entity⟨TAB⟩name` or `relation⟨TAB⟩name`".into(),
                })
            }
        }
    }
    Ok(vocab)
}

fn check_vocab_compatible(params: &ParameterSet, vocab: &Vocabulary) -> Result<()> {
    if params.n != vocab.n_entities() || params.m != vocab.n_relations() {
        return Err(KgError::VocabMismatch(format!(
            "model has n={} m={}, vocabulary has n={} m={}",
            params.n,
            params.m,
            vocab.n_entities(),
            vocab.n_relations()
        )));
    }
    Ok(())
}

/// Resolve names against a frozen vocabulary; new names are a mismatch.
fn resolve_triples(
    path: &Path,
    has_labels: bool,
    vocab: &Vocabulary,
) -> Result<Vec<LabeledTriple>> {
    let mut extended = vocab.clone();
    let triples = data::load_tsv_into(path, has_labels, &mut extended)?;
    if extended.n_entities() != vocab.n_entities() || extended.n_relations() != vocab.n_relations()
    {
        return Err(KgError::VocabMismatch(format!(
            "{} contains names unknown to the model vocabulary",
            path.display()
        )));
    }
    Ok(triples)
}

fn cmd_train(args: &TrainArgs) -> Result<bool> {
    let model = match args.model {
        ModelArg::Complex => ModelKind::ComplEx,
        ModelArg::Distmult => ModelKind::DistMult,
        ModelArg::Cp => ModelKind::Cp,
        ModelArg::Rescal => ModelKind::Rescal,
        ModelArg::Transe => ModelKind::TransE {
            p: if args.norm == "1" {
                NormOrder::L1
            } else {
                NormOrder::L2
            },
            margin: args.margin.unwrap_or(1.0),
        },
    };
    let loss = match args.loss {
        LossArg::Logistic => LossKind::Logistic,
        LossArg::MaxMargin => LossKind::MaxMargin,
    };
    if args.margin.is_some() && loss != LossKind::MaxMargin {
        return Err(KgError::Value(
            "--margin requires --loss max-margin".into(),
        ));
    }

    let mut manifest = RunManifest::new("train");
    manifest.flag("model", model);
    manifest.flag("rank", args.rank);
    manifest.flag("lr", args.lr);
    manifest.flag("l2", args.l2);
    manifest.flag("neg-ratio", args.neg_ratio);
    manifest.flag("batches", args.batches);
    manifest.flag("max-iter", args.max_iter);
    manifest.flag("validate-every", args.validate_every);
    manifest.flag("seed", args.seed);
    manifest.flag("labeled", args.labeled);
    manifest.input("train", &args.train)?;
    manifest.input("valid", &args.valid)?;

    let mut vocab = Vocabulary::new();
    let train_triples = data::load_tsv_into(&args.train, args.labeled, &mut vocab)?;
    let valid_triples = data::load_tsv_into(&args.valid, args.labeled, &mut vocab)?;
    let split = data::DatasetSplit::new(train_triples, valid_triples, Vec::new(), vocab);

    let config = TrainConfig {
        alpha: args.lr,
        lambda: args.l2,
        eta: args.neg_ratio,
        batch_count: args.batches,
        max_iter: args.max_iter,
        validate_every: args.validate_every,
        seed: args.seed,
        loss,
        adagrad_eps: 1e-8,
    };
    let (trained, report) = training::train(&split, model, args.rank, &config)?;

    params::save(&trained, &args.out)?;
    save_vocab(&vocab_path(&args.out), &split.vocabulary)?;

    let report_path = {
        let mut os = args.out.as_os_str().to_owned();
        os.push(".report.tsv");
        PathBuf::from(os)
    };
    let mut text = String::new();
    text.push_str(&format!("epochs_run\t{}\n", report.epochs_run));
    text.push_str(&format!("best_epoch\t{}\n", report.best_epoch));
    text.push_str(&format!(
        "stop_reason\t{}\n",
        match report.stop_reason {
            training::StopReason::EarlyStop => "early-stop",
            training::StopReason::MaxIter => "max-iter",
        }
    ));
    for (epoch, value) in &report.validation_history {
        text.push_str(&format!("validation.{}\t{}\n", epoch, value));
    }
    fs::write(&report_path, text).map_err(|source| KgError::Io {
        path: report_path.clone(),
        source,
    })?;

    manifest.output("model", &args.out);
    manifest.output("vocab", &vocab_path(&args.out));
    manifest.output("report", &report_path);
    manifest.write(&args.out)?;
    println!(
        "trained {} rank {} for {} epochs (best epoch {})",
        model, args.rank, report.epochs_run, report.best_epoch
    );
    Ok(true)
}

fn cmd_eval(args: &EvalArgs) -> Result<bool> {
    let mut manifest = RunManifest::new("eval");
    manifest.input("model", &args.model)?;
    manifest.input("test", &args.test)?;
    manifest.flag("labeled", args.labeled);

    let params = params::load(&args.model)?;
    let vocab = load_vocab(&vocab_path(&args.model))?;
    check_vocab_compatible(&params, &vocab)?;
    let test = resolve_triples(&args.test, args.labeled, &vocab)?;

    let report_text = if args.labeled {
        // Observed negatives: average-precision mode.
        let mut scored = Vec::with_capacity(test.len());
        for t in &test {
            scored.push((scoring::score(&params, t.r, t.s, t.o)?, t.y));
        }
        let ap = eval::average_precision(&scored)?;
        println!("average precision: {:.4}", ap.average_precision);
        ap.to_tsv()
    } else {
        let mut known: HashSet<(usize, usize, usize)> =
            test.iter().filter(|t| t.y == 1).map(|t| t.key()).collect();
        if args.filter.is_empty() {
            eprintln!(
                "warning: no --filter files supplied; filtered metrics fall back to \
                 test positives only (effectively raw)"
            );
            known.clear();
        }
        for (i, path) in args.filter.iter().enumerate() {
            manifest.input(&format!("filter{}", i), path)?;
            for t in resolve_triples(path, false, &vocab)? {
                known.insert(t.key());
            }
        }
        let report = eval::ranking_metrics(&params, &test, &known)?;
        print!("{}", report.to_table(vocab.relation_names()));
        report.to_tsv()
    };

    fs::write(&args.out, report_text).map_err(|source| KgError::Io {
        path: args.out.clone(),
        source,
    })?;
    manifest.output("report", &args.out);
    manifest.write(&args.out)?;
    Ok(true)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn cmd_predict(args: &PredictArgs) -> Result<bool> {
    let params = params::load(&args.model)?;
    let vocab = load_vocab(&vocab_path(&args.model))?;
    check_vocab_compatible(&params, &vocab)?;

    let r = vocab
        .relation_id(&args.relation)
        .ok_or_else(|| KgError::UnknownName {
            kind: "relation",
            name: args.relation.clone(),
        })?;
    let mut scores = vec![0.0; params.n];
    match (&args.subject, &args.object) {
        (Some(subject), None) => {
            let s = vocab
                .entity_id(subject)
                .ok_or_else(|| KgError::UnknownName {
                    kind: "entity",
                    name: subject.clone(),
                })?;
            scoring::score_all_objects(&params, r, s, &mut scores)?;
        }
        (None, Some(object)) => {
            let o = vocab
                .entity_id(object)
                .ok_or_else(|| KgError::UnknownName {
                    kind: "entity",
                    name: object.clone(),
                })?;
            scoring::score_all_subjects(&params, r, o, &mut scores)?;
        }
        _ => {
            return Err(KgError::Value(
                "exactly one of --subject or --object is required".into(),
            ))
        }
    }

    let mut order: Vec<usize> = (0..params.n).collect();
    // descending score, ties by ascending entity id
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let top_k = args.top_k.min(params.n);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for &e in order.iter().take(top_k) {
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}",
            vocab.entity_name(e).unwrap(),
            scores[e],
            sigmoid(scores[e])
        )
        .ok();
    }
    Ok(true)
}

fn cmd_synth(args: &SynthArgs) -> Result<bool> {
    let mut manifest = RunManifest::new("synth");
    manifest.flag("n", args.n);
    manifest.flag("seed", args.seed);

    let task = data::generate_synthetic(args.n, args.seed)?;
    fs::create_dir_all(&args.out_dir).map_err(|source| KgError::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    let write_triples = |path: &Path, triples: &[LabeledTriple]| -> Result<()> {
        let mut text = String::new();
        for t in triples {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                task.vocabulary.entity_name(t.s).unwrap(),
                task.vocabulary.relation_name(t.r).unwrap(),
                task.vocabulary.entity_name(t.o).unwrap(),
                t.y
            ));
        }
        fs::write(path, text).map_err(|source| KgError::Io {
            path: path.to_owned(),
            source,
        })
    };

    let upper = args.out_dir.join("upper_train.tsv");
    write_triples(&upper, &task.always_train)?;
    manifest.output("upper_train", &upper);
    for (i, fold) in task.folds.iter().enumerate() {
        let path = args.out_dir.join(format!("fold{}.tsv", i));
        write_triples(&path, fold)?;
        manifest.output(&format!("fold{}", i), &path);
    }
    manifest.write(&args.out_dir.join("synth"))?;
    println!(
        "wrote upper_train.tsv ({} triples) and {} folds of {} triples each",
        task.always_train.len(),
        task.folds.len(),
        task.folds[0].len()
    );
    Ok(true)
}

fn load_or_random_matrices(args: &SpectralArgs) -> Result<Vec<Mat>> {
    if let Some(n) = args.random {
        let seed = args.seed.ok_or_else(|| {
            KgError::Value("--random requires an explicit --seed".into())
        })?;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let count = match args.action {
            SpectralAction::Blocks => 2,
            _ => 1,
        };
        Ok((0..count)
            .map(|_| {
                Mat::from_vec(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            })
            .collect())
    } else if !args.matrix.is_empty() {
        args.matrix.iter().map(|p| spectral::read_real_matrix(p)).collect()
    } else {
        Err(KgError::Value(
            "supply --matrix FILE or --random N --seed S".into(),
        ))
    }
}

fn report_check(name: &str, residual: f64, tol: f64) -> bool {
    let pass = residual <= tol;
    println!(
        "{}: {} (residual {:.3e}, tolerance {:.3e})",
        name,
        if pass { "PASS" } else { "FAIL" },
        residual,
        tol
    );
    pass
}

fn cmd_spectral(args: &SpectralArgs) -> Result<bool> {
    let matrices = load_or_random_matrices(args)?;
    let x = &matrices[0];
    let mut all_pass = true;
    match args.action {
        SpectralAction::Lift => {
            let z = spectral::lift_to_normal(x)?;
            let mut stdout = std::io::stdout();
            spectral::write_complex_matrix(&z, &mut stdout).ok();
            let residual = spectral::commutator_residual(&z)?;
            let tol = 1e-12 * z.frobenius_norm().powi(2).max(1.0);
            all_pass &= report_check("normality of lift", residual, tol);
        }
        SpectralAction::Check => {
            let z = spectral::lift_to_normal(x)?;
            let residual = spectral::commutator_residual(&z)?;
            let tol = 1e-12 * z.frobenius_norm().powi(2).max(1.0);
            all_pass &= report_check("normality", residual, tol);
        }
        SpectralAction::Diag => {
            let z = spectral::lift_to_normal(x)?;
            let d = spectral::diagonalize_normal(&z)?;
            all_pass &= report_check("unitarity of E", d.unitarity_residual(), 1e-8);
            let recon = d.reconstruct().sub(&z).frobenius_norm();
            all_pass &= report_check(
                "reconstruction EWE* = Z",
                recon,
                1e-8 * z.frobenius_norm().max(1.0),
            );
            let re_diff = {
                let re = d.reconstruct().re();
                let mut acc = 0.0f64;
                for i in 0..x.rows() {
                    for j in 0..x.cols() {
                        acc += (re[(i, j)] - x[(i, j)]).powi(2);
                    }
                }
                acc.sqrt()
            };
            all_pass &= report_check(
                "real-part recovery Re(EWE*) = X",
                re_diff,
                1e-8 * x.frobenius_norm().max(1.0),
            );
        }
        SpectralAction::RankBound => {
            let k = args.k.expect("clap enforces --k");
            let d = spectral::rank_bounded_decomposition(x, k)?;
            println!("kept {} of at most {} columns", d.w.len(), 2 * k);
            if d.w.len() > 2 * k {
                all_pass = false;
            }
            let re = d.reconstruct().re();
            let mut acc = 0.0f64;
            for i in 0..x.rows() {
                for j in 0..x.cols() {
                    acc += (re[(i, j)] - x[(i, j)]).powi(2);
                }
            }
            all_pass &= report_check(
                "truncated reconstruction",
                acc.sqrt(),
                1e-6 * x.frobenius_norm().max(1.0),
            );
        }
        SpectralAction::Blocks => {
            let block = spectral::block_tensor_decomposition(&matrices)?;
            for (i, xi) in matrices.iter().enumerate() {
                let re = block.reconstruct_real(i);
                let mut acc = 0.0f64;
                for a in 0..xi.rows() {
                    for b in 0..xi.cols() {
                        acc += (re[(a, b)] - xi[(a, b)]).powi(2);
                    }
                }
                all_pass &= report_check(
                    &format!("block reconstruction X_{}", i),
                    acc.sqrt(),
                    1e-8 * xi.frobenius_norm().max(1.0),
                );
            }
        }
    }
    Ok(all_pass)
}

fn cmd_export_pca(args: &ExportPcaArgs) -> Result<bool> {
    let mut manifest = RunManifest::new("export-pca");
    manifest.input("model", &args.model)?;
    manifest.flag("components", args.components);

    let params = params::load(&args.model)?;
    let vocab = load_vocab(&vocab_path(&args.model))?;
    check_vocab_compatible(&params, &vocab)?;

    let features = pca::relation_features(&params);
    let (projected, variances) = pca::pca_project(&features, args.components)?;

    let mut text = String::new();
    text.push_str("relation");
    for c in 0..args.components {
        text.push_str(&format!("\tc{}", c + 1));
    }
    text.push('\n');
    for (r, name) in vocab.relation_names().iter().enumerate() {
        text.push_str(name);
        for c in 0..args.components {
            text.push_str(&format!("\t{}", projected[(r, c)]));
        }
        text.push('\n');
    }
    fs::write(&args.out, text).map_err(|source| KgError::Io {
        path: args.out.clone(),
        source,
    })?;
    println!(
        "explained variances: {}",
        variances
            .iter()
            .map(|v| format!("{:.4}", v))
            .collect::<Vec<_>>()
            .join(" ")
    );
    manifest.output("projection", &args.out);
    manifest.write(&args.out)?;
    Ok(true)
}

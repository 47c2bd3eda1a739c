//! Command-line front end: calibrate, rewrite, verify, eval, serve, replay.
//!
//! Exit codes: 0 success, 1 verification or replay failure, 2 configuration
//! error, 3 scorer backend unreachable.

use std::fs;
use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use dpmlm::evalkit::{
    self, compute_metrics, read_jsonl, run_batch, DocumentRecord, MetricInput, PrivatizedRecord,
};
use dpmlm::rewriter::DEFAULT_RERANK_ALPHA;
use dpmlm::scorer::protocol;
use dpmlm::seed::rng_from_seed;
use dpmlm::verifier::{monte_carlo_check, verify_ldp_exhaustive, MonteCarloReport};
use dpmlm::{
    BuiltinScorer, Calibration, ClipRange, Epsilon, LdpReport, LogitSampleStats, MaskQuery,
    MechanismVariant, RerankConfig, RewriteConfig, Scorer, StopwordPolicy,
};
use rand::seq::SliceRandom;
use serde::Serialize;
use thiserror::Error;

pub mod descriptor;
pub mod manifest;

use descriptor::ScorerSpec;
use manifest::{now_unix, sha256_hex, RewritePlan, RunManifest};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BACKEND: u8 = 3;

/// Total-variation bound for the sampler self-check in `verify`.
pub const MC_TV_TOLERANCE: f64 = 0.01;
pub const DEFAULT_RERANK_TOP_K: usize = 50;
pub const DEFAULT_MAX_VOCAB: usize = 5000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] dpmlm::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use dpmlm::Error as E;
        match self {
            CliError::Core(E::RemoteUnavailable(_) | E::ProtocolViolation(_) | E::Backend(_)) => {
                EXIT_BACKEND
            }
            _ => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dpmlm",
    version,
    about = "Differentially private text rewriting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a clip range (mu, mu + 4 sigma) from a scorer's logits on a corpus.
    Calibrate(CalibrateArgs),
    /// Privatize a JSONL dataset.
    Rewrite(RewriteArgs),
    /// Exhaustively check the privacy bound on a small builtin vocabulary.
    Verify(VerifyArgs),
    /// BLEU and cosine similarity between original and privatized datasets.
    Eval(EvalArgs),
    /// Serve a scorer over the line protocol.
    Serve(ServeArgs),
    /// Re-run a rewrite from its manifest and check the output is identical.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// One sentence per line; defaults to the bundled toy corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "builtin")]
    pub scorer: String,
    #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
    pub max_vocab: usize,
    /// Maximum number of masked queries to score.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RewriteArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Per-token budget; a comma-separated list runs a sweep.
    #[arg(long, value_delimiter = ',', default_value = "10,25,50,100,250")]
    pub epsilon: Vec<f64>,
    #[arg(
        long,
        requires = "clip_max",
        conflicts_with = "calibration",
        allow_hyphen_values = true
    )]
    pub clip_min: Option<f64>,
    #[arg(
        long,
        requires = "clip_min",
        conflicts_with = "calibration",
        allow_hyphen_values = true
    )]
    pub clip_max: Option<f64>,
    /// Calibration file written by `calibrate`.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub add_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    pub del_prob: f64,
    /// Keep stopwords verbatim: the built-in English list, or words from FILE.
    #[arg(long, num_args = 0..=1, require_equals = true, value_name = "FILE")]
    pub skip_stopwords: Option<Option<PathBuf>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "builtin")]
    pub scorer: String,
    #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
    pub max_vocab: usize,
    #[arg(long)]
    pub rerank_alpha: Option<f64>,
    #[arg(long)]
    pub rerank_topk: Option<usize>,
    /// Defaults to the number of available cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Skip malformed input lines instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 5.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub clip_min: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub clip_max: f64,
    /// Number of content tokens in the builtin vocabulary; all of them form the context alphabet.
    #[arg(long, default_value_t = 8)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 3)]
    pub context_length: usize,
    /// Sampler self-check draws; 0 skips it.
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_draws: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Builtin training corpus; defaults to the bundled toy corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Audit a broken mechanism that skips logit clipping.
    #[arg(long)]
    pub break_clipping: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub original: PathBuf,
    #[arg(long)]
    pub privatized: PathBuf,
    /// Scorer used for cosine similarity, when it can embed.
    #[arg(long)]
    pub scorer: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
    pub max_vocab: usize,
    /// Defaults to stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "builtin")]
    pub scorer: String,
    #[arg(long, default_value_t = DEFAULT_MAX_VOCAB)]
    pub max_vocab: usize,
    #[arg(long, default_value = "127.0.0.1:7878", conflicts_with = "stdio")]
    pub listen: String,
    /// Serve on stdin/stdout instead of TCP.
    #[arg(long)]
    pub stdio: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write the replayed output here instead of the recorded path.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Calibrate(a) => calibrate(&a),
        Command::Rewrite(a) => rewrite(&a),
        Command::Verify(a) => verify(&a),
        Command::Eval(a) => eval(&a),
        Command::Serve(a) => serve(&a),
        Command::Replay(a) => replay(&a),
    }
}

fn open_scorer(spec: &str, max_vocab: usize) -> Result<Box<dyn Scorer>, CliError> {
    spec.parse::<ScorerSpec>()?.open(max_vocab)
}

fn read_lines(path: Option<&Path>) -> Result<Vec<String>, CliError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        None => dpmlm::scorer::builtin::TOY_CORPUS.to_string(),
    };
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(String::from)
        .collect())
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn calibrate(args: &CalibrateArgs) -> Result<u8, CliError> {
    let scorer = open_scorer(&args.scorer, args.max_vocab)?;
    let mut lines = read_lines(args.corpus.as_deref())?;
    lines.shuffle(&mut rng_from_seed(args.seed));

    let vocab = scorer.vocabulary();
    let mut stats = LogitSampleStats::new();
    let mut queries = 0usize;
    'outer: for line in &lines {
        let tokens = scorer.tokenize(line)?;
        for k in 0..tokens.len() {
            if queries >= args.samples {
                break 'outer;
            }
            let q = MaskQuery::new(tokens.clone(), tokens.clone(), k)?;
            stats.accumulate(&vocab.candidate_logits(&scorer.score_masked(&q)?)?);
            queries += 1;
        }
    }
    let calibration = Calibration::from_stats(&stats)?;
    eprintln!(
        "calibrated on {queries} masked queries ({} logits)",
        calibration.count
    );
    emit_json(&calibration, args.output.as_deref())?;
    Ok(EXIT_OK)
}

fn load_stopwords(path: &Path) -> Result<StopwordPolicy, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let words = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .flat_map(str::split_whitespace)
        .map(String::from)
        .collect();
    Ok(StopwordPolicy::Custom { words })
}

fn plan_from_args(args: &RewriteArgs) -> Result<RewritePlan, CliError> {
    let (clip, calibration) = match (&args.calibration, args.clip_min, args.clip_max) {
        (Some(path), None, None) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let cal: Calibration = serde_json::from_str(&text).map_err(|e| {
                CliError::Config(format!("{}: invalid calibration file: {e}", path.display()))
            })?;
            (cal.clip_range()?, Some(cal))
        }
        (None, Some(lo), Some(hi)) => (ClipRange::new(lo, hi)?, None),
        (None, None, None) => {
            return Err(CliError::Config(
                "a clip range is required: --clip-min/--clip-max or --calibration".into(),
            ))
        }
        _ => {
            return Err(CliError::Config(
                "conflicting clip sources: use either --clip-min/--clip-max or --calibration"
                    .into(),
            ))
        }
    };
    if args.epsilon.is_empty() {
        return Err(CliError::Config(
            "at least one --epsilon is required".into(),
        ));
    }
    for &e in &args.epsilon {
        Epsilon::new(e)?;
    }
    let stopwords = match &args.skip_stopwords {
        None => StopwordPolicy::Off,
        Some(None) => StopwordPolicy::English,
        Some(Some(path)) => load_stopwords(path)?,
    };
    let rerank =
        (args.rerank_alpha.is_some() || args.rerank_topk.is_some()).then(|| RerankConfig {
            alpha: args.rerank_alpha.unwrap_or(DEFAULT_RERANK_ALPHA),
            top_k: args.rerank_topk.unwrap_or(DEFAULT_RERANK_TOP_K),
        });
    let workers = args.workers.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    if workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    Ok(RewritePlan {
        input: args.input.clone(),
        output: args.output.clone(),
        scorer: args.scorer.clone(),
        max_vocab: args.max_vocab,
        epsilons: args.epsilon.clone(),
        clip,
        calibration,
        add_prob: args.add_prob,
        del_prob: args.del_prob,
        stopwords,
        seed: args.seed,
        rerank,
        workers,
        strict: !args.lenient,
    })
}

struct PlanOutput {
    bytes: Vec<u8>,
    input_sha256: String,
    records: usize,
    metrics: dpmlm::evalkit::MetricsSummary,
    scorer_description: String,
}

fn execute_plan(plan: &RewritePlan) -> Result<PlanOutput, CliError> {
    let input_bytes = fs::read(&plan.input).map_err(|e| CliError::io(&plan.input, e))?;
    let (documents, skipped) = evalkit::load_jsonl(&plan.input, plan.strict)?;
    for bad in &skipped {
        eprintln!(
            "warning: {}:{}: {}",
            plan.input.display(),
            bad.line,
            bad.message
        );
    }
    let scorer = open_scorer(&plan.scorer, plan.max_vocab)?;

    let mut records: Vec<PrivatizedRecord> =
        Vec::with_capacity(documents.len() * plan.epsilons.len());
    for &eps in &plan.epsilons {
        let config = RewriteConfig {
            eps: Epsilon::new(eps)?,
            clip: plan.clip,
            add_prob: plan.add_prob,
            del_prob: plan.del_prob,
            stopwords: plan.stopwords.clone(),
            seed: plan.seed,
            rerank: plan.rerank,
        };
        config.validate()?;
        records.extend(run_batch(&documents, &config, scorer.as_ref(), plan.workers)?.records);
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} record(s) failed to rewrite; see their \"error\" field");
    }

    let mut bytes = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut bytes, r).expect("record serializes");
        bytes.push(b'\n');
    }
    let pairs: Vec<MetricInput<'_>> = records
        .iter()
        .filter_map(|r| {
            r.private_text.as_deref().map(|p| MetricInput {
                original: &r.text,
                privatized: p,
                eps_per_token: r.eps_per_token,
            })
        })
        .collect();
    let metrics = compute_metrics(&pairs, scorer.embedder())?;
    Ok(PlanOutput {
        bytes,
        input_sha256: sha256_hex(&input_bytes),
        records: records.len(),
        metrics,
        scorer_description: scorer.describe(),
    })
}

fn rewrite(args: &RewriteArgs) -> Result<u8, CliError> {
    let plan = plan_from_args(args)?;
    let out = execute_plan(&plan)?;
    fs::write(&plan.output, &out.bytes).map_err(|e| CliError::io(&plan.output, e))?;
    let manifest = RunManifest {
        command: "rewrite".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        timestamp_unix: now_unix(),
        scorer_description: out.scorer_description,
        input_sha256: out.input_sha256,
        output_sha256: sha256_hex(&out.bytes),
        records_written: out.records,
        metrics: out.metrics,
        plan,
    };
    manifest.save(&RunManifest::sibling_path(&manifest.plan.output))?;
    emit_json(&manifest.metrics, None)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct ReplayReport {
    output: PathBuf,
    input_matches: bool,
    output_matches: bool,
    expected_sha256: String,
    actual_sha256: String,
}

fn replay(args: &ReplayArgs) -> Result<u8, CliError> {
    let manifest = RunManifest::load(&args.manifest)?;
    let mut plan = manifest.plan.clone();
    if let Some(o) = &args.output {
        plan.output = o.clone();
    }
    let out = execute_plan(&plan)?;
    fs::write(&plan.output, &out.bytes).map_err(|e| CliError::io(&plan.output, e))?;
    let report = ReplayReport {
        output: plan.output,
        input_matches: out.input_sha256 == manifest.input_sha256,
        output_matches: sha256_hex(&out.bytes) == manifest.output_sha256,
        expected_sha256: manifest.output_sha256,
        actual_sha256: sha256_hex(&out.bytes),
    };
    emit_json(&report, None)?;
    Ok(if report.input_matches && report.output_matches {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    ldp: LdpReport,
    /// The witness's log ratio recomputed from scratch.
    witness_log_ratio: Option<f64>,
    monte_carlo: Option<MonteCarloReport>,
    mc_tv_tolerance: f64,
    pass: bool,
}

fn verify(args: &VerifyArgs) -> Result<u8, CliError> {
    let eps = Epsilon::new(args.epsilon)?;
    let clip = ClipRange::new(args.clip_min, args.clip_max)?;
    let scorer = match &args.corpus {
        None => BuiltinScorer::toy(args.vocab_size)?,
        Some(path) => BuiltinScorer::from_corpus(&read_lines(Some(path))?, args.vocab_size)?,
    };
    let subset = scorer.content_tokens();
    let variant = if args.break_clipping {
        MechanismVariant::Unclipped
    } else {
        MechanismVariant::Clipped
    };
    let ldp = verify_ldp_exhaustive(&scorer, eps, &clip, args.context_length, &subset, variant)?;
    let witness_log_ratio = ldp
        .witness
        .as_ref()
        .map(|w| w.log_ratio(&scorer, eps, &clip, variant))
        .transpose()?;

    let monte_carlo = if args.mc_draws == 0 {
        None
    } else {
        let ctx = vec![subset[0].clone(); args.context_length];
        let q = MaskQuery::new(ctx.clone(), ctx, 0)?;
        let logits = scorer
            .vocabulary()
            .candidate_logits(&scorer.score_masked(&q)?)?;
        Some(monte_carlo_check(
            &logits,
            eps,
            &clip,
            args.mc_draws,
            args.seed,
        )?)
    };
    let mc_ok = monte_carlo
        .as_ref()
        .is_none_or(|m| m.tv_distance < MC_TV_TOLERANCE);
    let report = VerifyReport {
        pass: ldp.pass && mc_ok,
        ldp,
        witness_log_ratio,
        monte_carlo,
        mc_tv_tolerance: MC_TV_TOLERANCE,
    };
    emit_json(&report, None)?;
    Ok(if report.pass { EXIT_OK } else { EXIT_FAILED })
}

fn eval(args: &EvalArgs) -> Result<u8, CliError> {
    let (originals, _) = evalkit::load_jsonl(&args.original, true)?;
    let (privatized, _) = read_jsonl::<PrivatizedRecord>(&args.privatized, true)?;
    let scorer = args
        .scorer
        .as_deref()
        .map(|s| open_scorer(s, args.max_vocab))
        .transpose()?;
    let embedder = scorer.as_ref().and_then(|s| s.embedder());
    if scorer.is_some() && embedder.is_none() {
        eprintln!("note: scorer has no embed capability; cosine similarity skipped");
    }
    let metrics = evalkit::evaluate(&originals, &privatized, embedder)?;
    emit_json(&metrics, args.output.as_deref())?;
    Ok(EXIT_OK)
}

fn serve(args: &ServeArgs) -> Result<u8, CliError> {
    let scorer = open_scorer(&args.scorer, args.max_vocab)?;
    if args.stdio {
        let stdin = io::stdin();
        protocol::serve(
            BufReader::new(stdin.lock()),
            io::stdout().lock(),
            scorer.as_ref(),
        )
        .map_err(|e| CliError::io(Path::new("<stdio>"), e))?;
        return Ok(EXIT_OK);
    }
    let listener =
        TcpListener::bind(&args.listen).map_err(|e| CliError::io(Path::new(&args.listen), e))?;
    let addr = listener
        .local_addr()
        .map_err(|e| CliError::io(Path::new(&args.listen), e))?;
    eprintln!("listening on {addr}");
    protocol::serve_tcp(listener, Arc::from(scorer))
        .map_err(|e| CliError::io(Path::new(&args.listen), e))?;
    Ok(EXIT_OK)
}

/// Read documents the way `rewrite` does; exposed for tests and tooling.
pub fn load_documents(path: &Path) -> Result<Vec<DocumentRecord>, CliError> {
    Ok(evalkit::load_jsonl(path, true)?.0)
}

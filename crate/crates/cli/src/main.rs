use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use minpair::analysis::DEFAULT_WARRANT_MARGIN;
use minpair::generator::{TokenSplit, DEFAULT_BUDGET_FACTOR};
use minpair::scoring::{CharNgram, ConstantBackend, Endpoint, ExternalConfig, ExternalScorer, ScorerBackend};
use minpair::validation::{answer_key, export_list, parse_responses, sample_questionnaires, score_agreement, QuestionnaireList};
use minpair_cli::generate::{GenerateOptions, DEFAULT_N, DEFAULT_SEED};
use minpair_cli::io::{load_lexicon, load_pair_files, load_paradigms, load_phrases, read, to_jsonl, to_pretty_json, write_atomic};
use minpair_cli::{analyze, score, serve};

#[derive(Parser)]
#[command(name = "minpair", version, about = "Minimal pair generation, LM acceptability scoring and learning-curve analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate unique minimal pairs for each paradigm.
    Generate(GenerateArgs),
    /// Score generated pairs and report per-paradigm and per-phenomenon accuracy.
    Score(ScoreArgs),
    /// Fit learning curves, classify paradigms, or decompose scores by region.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Build human-validation questionnaires and score the responses.
    #[command(subcommand)]
    Validate(ValidateCommand),
    /// Serve the HTTP API used by the template authoring UI.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Paradigm files or directories of *.json paradigm files.
    #[arg(long, default_value = "data/paradigms", num_args = 1..)]
    paradigms: Vec<PathBuf>,
    #[arg(long, default_value = "data/lexicon.jsonl")]
    lexicon: PathBuf,
    #[arg(long, default_value = "data/phrases.json")]
    phrases: PathBuf,
    /// Pairs requested per paradigm.
    #[arg(short, long, default_value_t = DEFAULT_N)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Attempts allowed per requested pair.
    #[arg(long, default_value_t = DEFAULT_BUDGET_FACTOR)]
    budget_factor: usize,
    /// Output directory for <id>.jsonl files and report.json.
    #[arg(long, default_value = "out/pairs")]
    out: PathBuf,
    /// Exit nonzero when any paradigm produced fewer pairs than requested.
    #[arg(long)]
    strict: bool,
    /// Paradigms generated in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct BackendArgs {
    /// Train a character n-gram oracle on this corpus (one sentence per line).
    #[arg(long, conflicts_with_all = ["backend", "constant"])]
    oracle_corpus: Option<PathBuf>,
    /// N-gram order for the oracle (1-3).
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// External scorer: a command line to spawn, or tcp://host:port.
    #[arg(long, conflicts_with = "constant")]
    backend: Option<String>,
    /// Give every character this logprob (a tie-only baseline).
    #[arg(long, allow_hyphen_values = true)]
    constant: Option<f64>,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Seconds to wait for each backend response.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Parallel connections to the external backend.
    #[arg(long, default_value_t = 1)]
    connections: usize,
}

impl BackendArgs {
    fn build(&self) -> Result<(Box<dyn ScorerBackend>, String)> {
        if let Some(corpus) = &self.oracle_corpus {
            let model = CharNgram::train(&read(corpus)?, self.order)?;
            return Ok((Box::new(model), format!("oracle:{}:order{}", corpus.display(), self.order)));
        }
        if let Some(spec) = &self.backend {
            if self.batch_size == 0 {
                bail!("--batch-size must be positive");
            }
            if !(self.timeout.is_finite() && self.timeout > 0.0) {
                bail!("--timeout must be a positive number of seconds");
            }
            let config = ExternalConfig {
                batch_size: self.batch_size,
                timeout: Duration::from_secs_f64(self.timeout),
                connections: self.connections.max(1),
            };
            let scorer = ExternalScorer::connect(&Endpoint::parse(spec)?, config)?;
            return Ok((Box::new(scorer), format!("external:{spec}")));
        }
        if let Some(logprob) = self.constant {
            if !(logprob.is_finite() && logprob <= 0.0) {
                bail!("--constant must be a finite value <= 0");
            }
            return Ok((Box::new(ConstantBackend { logprob }), format!("constant:{logprob}")));
        }
        bail!("choose a scorer with --oracle-corpus, --backend or --constant")
    }
}

#[derive(Args)]
struct ScoreArgs {
    /// Pair files (*.jsonl) or directories of them, one paradigm per file.
    #[arg(long, required = true, num_args = 1..)]
    pairs: Vec<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value = "out/results.json")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Fit the saturation curve (and optionally the U-shape model) per paradigm.
    Fit {
        /// Trajectory records: {paradigm_id, model_params, seed_id, tokens_seen, accuracy}.
        #[arg(long)]
        trajectory: PathBuf,
        /// Fit every (model size, seed) separately instead of the curve
        /// averaged over all models.
        #[arg(long)]
        per_model: bool,
        #[arg(long)]
        ushape: bool,
        /// Relative residual reduction required for the U-term to be warranted.
        #[arg(long, default_value_t = DEFAULT_WARRANT_MARGIN)]
        margin: f64,
        #[arg(long, default_value = "out/fits.jsonl")]
        out: PathBuf,
    },
    /// Label paradigms Easy/Medium/Difficult/Other from accuracy across model sizes.
    Classify {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value = "out/classes.jsonl")]
        out: PathBuf,
    },
    /// Prefix/continuation score differences across checkpoints.
    Regions {
        /// Pair files with split annotations (or use --split).
        #[arg(long, required = true, num_args = 1..)]
        pairs: Vec<PathBuf>,
        /// Split used for pairs without their own annotation, as GOOD:BAD token indices.
        #[arg(long, value_parser = parse_split)]
        split: Option<TokenSplit>,
        /// A checkpoint as TOKENS=ENDPOINT (external scorer); repeatable.
        #[arg(long = "checkpoint", value_parser = parse_checkpoint)]
        checkpoints: Vec<(u64, String)>,
        /// Simulate checkpoints with n-gram oracles trained on growing corpus prefixes.
        #[arg(long)]
        oracle_corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        order: usize,
        /// Corpus prefix sizes in characters, e.g. 1000,5000,20000.
        #[arg(long, value_delimiter = ',')]
        oracle_checkpoints: Vec<u64>,
        #[arg(long, default_value = "out/regions.jsonl")]
        out: PathBuf,
    },
}

fn parse_split(s: &str) -> Result<TokenSplit, String> {
    let (g, b) = s.split_once(':').ok_or("expected GOOD:BAD")?;
    Ok(TokenSplit {
        good: g.parse().map_err(|e| format!("{e}"))?,
        bad: b.parse().map_err(|e| format!("{e}"))?,
    })
}

fn parse_checkpoint(s: &str) -> Result<(u64, String), String> {
    let (t, e) = s.split_once('=').ok_or("expected TOKENS=ENDPOINT")?;
    Ok((t.parse().map_err(|e| format!("{e}"))?, e.to_string()))
}

#[derive(Subcommand)]
enum ValidateCommand {
    /// Sample pairs into questionnaire lists with catch trials.
    Sample {
        /// Generated pair files or directories, one paradigm per file.
        #[arg(long, required = true, num_args = 1..)]
        pairs: Vec<PathBuf>,
        /// Generated catch-trial pairs.
        #[arg(long = "catch", required = true, num_args = 1..)]
        catch_pairs: Vec<PathBuf>,
        #[arg(long, default_value_t = 5)]
        per_paradigm: usize,
        #[arg(long, default_value_t = 10)]
        lists: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Writes lists.json, one participant file per list, and answer_key.jsonl.
        #[arg(long, default_value = "out/questionnaires")]
        out: PathBuf,
    },
    /// Agreement of responses with gold labels after catch-trial exclusion.
    Agree {
        /// lists.json written by `validate sample`.
        #[arg(long)]
        lists: PathBuf,
        /// Response records: {list_id, respondent_id, item, choice: "A"|"B"}.
        #[arg(long)]
        responses: PathBuf,
        #[arg(long, default_value = "out/agreement.json")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ServeArgs {
    /// Directory holding lexicon.jsonl, phrases.json and paradigms/.
    #[arg(long, default_value = "data")]
    data: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Corpus for the preview-scoring oracle.
    #[arg(long)]
    oracle_corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    order: usize,
}

/// Ok(true) means success; Ok(false) a reported, non-fatal failure.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate(a) => {
            let paradigms = load_paradigms(&a.paradigms)?;
            let lexicon = load_lexicon(&a.lexicon)?;
            let phrases = load_phrases(&a.phrases)?;
            if a.n == 0 {
                bail!("-n must be at least 1");
            }
            let opts = GenerateOptions { n: a.n, seed: a.seed, budget_factor: a.budget_factor.max(1), jobs: a.jobs };
            let reports = minpair_cli::generate::run(paradigms, phrases, &lexicon, &opts, &a.out)?;
            let mut short = false;
            for r in &reports {
                let mark = if r.shortfall() { "SHORT" } else { "ok" };
                eprintln!("{mark:5} {:40} {}/{} pairs, {} attempts", r.paradigm_id, r.produced, r.requested, r.attempts);
                short |= r.shortfall();
            }
            Ok(!(short && a.strict))
        }
        Command::Score(a) => {
            let groups = load_pair_files(&a.pairs)?;
            let (backend, name) = a.backend.build()?;
            let report = score::run(backend.as_ref(), &name, &groups);
            write_atomic(&a.out, to_pretty_json(&report).as_bytes())?;
            for p in &report.paradigms {
                eprintln!("{:40} {:.4} ({}/{})", p.paradigm_id, p.accuracy, p.n_correct, p.n_pairs);
            }
            if let Some(overall) = report.overall {
                eprintln!("{:40} {overall:.4}", "overall");
            }
            if let Some(e) = &report.error {
                eprintln!("incomplete: {e}");
            }
            Ok(report.complete)
        }
        Command::Analyze(cmd) => run_analyze(cmd),
        Command::Validate(cmd) => run_validate(cmd),
        Command::Serve(a) => {
            let oracle = match &a.oracle_corpus {
                Some(c) => Some(CharNgram::train(&read(c)?, a.order)?),
                None => None,
            };
            let state = serve::AppState::load(&a.data, oracle)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve::serve(state, &a.addr))?;
            Ok(true)
        }
    }
}

fn run_analyze(cmd: AnalyzeCommand) -> Result<bool> {
    match cmd {
        AnalyzeCommand::Fit { trajectory, per_model, ushape, margin, out } => {
            let points = analyze::parse_trajectory(&read(&trajectory)?)?;
            let records = analyze::fit(&points, per_model, ushape, margin);
            write_atomic(&out, to_jsonl(&records).as_bytes())?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} of {} fits failed", records.len());
            }
            Ok(failed == 0)
        }
        AnalyzeCommand::Classify { trajectory, out } => {
            let points = analyze::parse_trajectory(&read(&trajectory)?)?;
            let records = analyze::classify(&points);
            write_atomic(&out, to_jsonl(&records).as_bytes())?;
            Ok(records.iter().all(|r| matches!(r, analyze::ClassRecord::Class(_))))
        }
        AnalyzeCommand::Regions { pairs, split, checkpoints, oracle_corpus, order, oracle_checkpoints, out } => {
            let mut backends: Vec<(u64, Box<dyn ScorerBackend>)> = Vec::new();
            for (tokens, spec) in &checkpoints {
                let scorer = ExternalScorer::connect(&Endpoint::parse(spec)?, ExternalConfig::default())?;
                backends.push((*tokens, Box::new(scorer)));
            }
            if let Some(corpus) = &oracle_corpus {
                let text = read(corpus)?;
                for &chars in &oracle_checkpoints {
                    let prefix: String = text.chars().take(chars as usize).collect();
                    let model = CharNgram::train(&prefix, order)
                        .with_context(|| format!("training oracle on {chars} characters"))?;
                    backends.push((chars, Box::new(model)));
                }
            }
            if backends.is_empty() {
                bail!("give --checkpoint TOKENS=ENDPOINT or --oracle-corpus with --oracle-checkpoints");
            }
            backends.sort_by_key(|(t, _)| *t);
            let mut records = Vec::new();
            for (_, group) in load_pair_files(&pairs)? {
                let splits = analyze::splits_for(&group, split)?;
                records.extend(analyze::regions(&backends, &group, &splits)?);
            }
            write_atomic(&out, to_jsonl(&records).as_bytes())?;
            Ok(true)
        }
    }
}

fn run_validate(cmd: ValidateCommand) -> Result<bool> {
    match cmd {
        ValidateCommand::Sample { pairs, catch_pairs, per_paradigm, lists, seed, out } => {
            let groups: Vec<(String, Vec<_>)> = load_pair_files(&pairs)?
                .into_iter()
                .map(|(path, ps)| {
                    let id = ps.first().map(|p| p.paradigm_id.clone()).unwrap_or_else(|| path.display().to_string());
                    (id, ps)
                })
                .collect();
            let catch: Vec<_> = load_pair_files(&catch_pairs)?.into_iter().flat_map(|(_, ps)| ps).collect();
            let sampled = sample_questionnaires(&groups, &catch, per_paradigm, lists, seed)?;
            write_atomic(&out.join("lists.json"), to_pretty_json(&sampled).as_bytes())?;
            for l in &sampled {
                write_atomic(&out.join(format!("{}.jsonl", l.list_id)), export_list(l).as_bytes())?;
                eprintln!("{}: {} items ({} catch)", l.list_id, l.items.len(), l.catch_count());
            }
            write_atomic(&out.join("answer_key.jsonl"), answer_key(&sampled).as_bytes())?;
            Ok(true)
        }
        ValidateCommand::Agree { lists, responses, out } => {
            let lists: Vec<QuestionnaireList> = serde_json::from_str(&read(&lists)?)
                .with_context(|| format!("parsing {}", lists.display()))?;
            let responses = parse_responses(&read(&responses)?)?;
            let report = score_agreement(&lists, &responses)?;
            write_atomic(&out, to_pretty_json(&report).as_bytes())?;
            eprintln!(
                "agreement {:.4} over {} responses; {} valid, {} excluded",
                report.overall, report.n_responses, report.valid_respondents, report.excluded
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

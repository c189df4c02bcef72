//! Acceptance checks: one PASS/FAIL line per criterion; exits nonzero if
//! any fails.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use minpair::analysis::{
    classify_paradigm, fit_saturation, fit_ushape, label, region_decomposition, Difficulty,
    SaturationFit, TrajectoryPoint, UShapeFit, DEFAULT_WARRANT_MARGIN,
};
use minpair::generator::{critical_region, realize, MinimalPair, Span, TokenSplit};
use minpair::lexicon::{Lexicon, Polarity};
use minpair::scoring::{
    score_pairs, score_sentences, CharNgram, ConstantBackend, Endpoint, ExternalConfig,
    ExternalScorer, RawScore, ScoreError, ScorerBackend, SentenceScore,
};
use minpair::template::{link, Paradigm, PhraseLibrary, Rule, Side};
use minpair::validation::{sample_questionnaires, score_agreement, Choice, ResponseRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data(rel: &str) -> PathBuf {
    root().join("data").join(rel)
}

fn minpair() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_minpair"));
    c.current_dir(root());
    c
}

fn fake_scorer() -> String {
    env!("CARGO_BIN_EXE_fake-scorer").to_string()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_ok(cmd: &mut Command) -> Result<(), String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("command failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn read_pairs(path: &Path) -> Result<Vec<MinimalPair>, String> {
    fs::read_to_string(path)
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

fn sorted_files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

// 1. Generation fidelity
fn generation_fidelity() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("pairs");
    let start = Instant::now();
    run_ok(minpair().args(["generate", "-n", "300", "--seed", "1", "--strict", "--out"]).arg(&out))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("generation took {elapsed:?}"))?;

    let lex = Lexicon::load_str(&fs::read_to_string(data("lexicon.jsonl")).unwrap()).map_err(|e| e.to_string())?;
    let lib = PhraseLibrary::parse(&fs::read_to_string(data("phrases.json")).unwrap()).map_err(|e| e.to_string())?;
    let paradigm_files = sorted_files(&data("paradigms"), "json");
    ensure(paradigm_files.len() >= 15, || "fewer than 15 demo paradigms".into())?;
    let mut phenomena = HashSet::new();
    for pf in &paradigm_files {
        let p = Paradigm::parse(&fs::read_to_string(pf).unwrap()).map_err(|e| e.to_string())?;
        phenomena.insert(p.phenomenon.clone());
        let linked = link(&p, &lib).map_err(|e| e.to_string())?;
        let pairs = read_pairs(&out.join(format!("{}.jsonl", p.id)))?;
        let unique: HashSet<(&str, &str)> = pairs.iter().map(|x| (x.good.text.as_str(), x.bad.text.as_str())).collect();
        ensure(pairs.len() == 300 && unique.len() == 300, || format!("{}: {} pairs, {} unique", p.id, pairs.len(), unique.len()))?;
        for pair in &pairs {
            pair.check().map_err(|e| format!("{}: {e}", p.id))?;
            let r = realize(&linked, &lex, pair.seed).map_err(|e| e.to_string())?;
            for (side, drawn) in [(Side::Good, &r.good), (Side::Bad, &r.bad)] {
                for (i, rule) in p.grammar(side).rules().iter().enumerate() {
                    if let Rule::Matched { m_pos, feature, polarity, .. } = rule {
                        let a = drawn[i].entry.as_ref().and_then(|e| e.feature(feature));
                        let b = drawn[*m_pos].entry.as_ref().and_then(|e| e.feature(feature));
                        let sound = match polarity {
                            Polarity::Match => a.is_some() && a == b,
                            Polarity::Mismatch => a.is_some() && b.is_some() && a != b,
                        };
                        ensure(sound, || format!("{}: agreement violated at {side} {i}", p.id))?;
                    }
                }
            }
        }
    }
    ensure(phenomena.len() >= 15, || format!("only {} phenomena", phenomena.len()))?;

    // Golden file, twice.
    for run in 0..2 {
        let g = tmp.path().join(format!("golden{run}"));
        run_ok(minpair().args(["generate", "-n", "5", "--seed", "7", "--out"]).arg(&g))?;
        for f in sorted_files(&data("golden/seed7-n5"), "jsonl") {
            let want = fs::read(&f).unwrap();
            let got = fs::read(g.join(f.file_name().unwrap())).map_err(|e| e.to_string())?;
            ensure(want == got, || format!("golden mismatch in {}", f.display()))?;
        }
    }
    Ok(format!("{} paradigms x 300 pairs in {:.2}s; golden byte-stable", paradigm_files.len(), elapsed.as_secs_f64()))
}

// 2. Critical-region correctness
fn critical_regions() -> Check {
    #[derive(serde::Deserialize)]
    struct Fixture {
        phenomenon: String,
        good: Vec<String>,
        bad: Vec<String>,
        critical_good: Span,
        critical_bad: Span,
    }
    let text = fs::read_to_string(data("fixtures/phenomenon_regions.jsonl")).map_err(|e| e.to_string())?;
    let mut matched = 0;
    let mut total = 0;
    for line in text.lines() {
        let f: Fixture = serde_json::from_str(line).map_err(|e| e.to_string())?;
        total += 1;
        let (g, b) = critical_region(&f.good, &f.bad).map_err(|e| e.to_string())?;
        ensure((g, b) == (f.critical_good, f.critical_bad), || {
            format!("{}: got {g:?}/{b:?}, want {:?}/{:?}", f.phenomenon, f.critical_good, f.critical_bad)
        })?;
        matched += 1;
    }
    ensure(total == 15, || format!("{total} fixtures"))?;
    Ok(format!("{matched}/{total} exact span matches"))
}

// 3. Scoring oracle equivalence
#[derive(Clone, Copy, PartialEq)]
enum Sym {
    Bos,
    Eos,
    Ch(char),
}

/// Independent add-one estimate: rescans the corpus for every queried
/// position.
fn brute_force_logprobs(corpus: &str, order: usize, sentence: &str) -> Vec<f64> {
    let lines: Vec<Vec<Sym>> = corpus
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let mut v = vec![Sym::Bos; order - 1];
            v.extend(l.chars().map(Sym::Ch));
            v.push(Sym::Eos);
            v
        })
        .collect();
    let distinct: HashSet<char> = corpus.chars().filter(|c| *c != '\n' && *c != '\r').collect();
    let v = distinct.len() + 2;
    let mut query = vec![Sym::Bos; order - 1];
    query.extend(sentence.chars().map(Sym::Ch));
    (order - 1..query.len())
        .map(|i| {
            let hist = &query[i + 1 - order..i];
            let (mut c_h, mut c_hw) = (0usize, 0usize);
            for line in &lines {
                for j in order - 1..line.len() {
                    if &line[j + 1 - order..j] == hist {
                        c_h += 1;
                        if line[j] == query[i] {
                            c_hw += 1;
                        }
                    }
                }
            }
            ((c_hw + 1) as f64 / (c_h + v) as f64).ln()
        })
        .collect()
}

fn scoring_oracle() -> Check {
    let demo: String = fs::read_to_string(data("corpus.txt")).map_err(|e| e.to_string())?;
    let mut demo_small = String::new();
    for line in demo.lines() {
        if demo_small.chars().count() + line.chars().count() + 1 > 1000 {
            break;
        }
        demo_small.push_str(line);
        demo_small.push('\n');
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alphabet: Vec<char> = "abcde我你他。".chars().collect();
    let mut random = String::new();
    while random.chars().count() < 950 {
        let len = rng.gen_range(1..12);
        let s: String = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
        random.push_str(&s);
        random.push('\n');
    }
    let mut queries: Vec<String> = demo.lines().skip(300).take(40).map(str::to_string).collect();
    queries.extend(random.lines().take(20).map(str::to_string));
    queries.push("xyz未见字符ab".into());
    let mut checked = 0;
    let mut worst = 0.0f64;
    for corpus in [&demo_small, &random] {
        ensure(corpus.chars().count() <= 1000, || "corpus too long".into())?;
        for order in 1..=3 {
            let model = CharNgram::train(corpus, order).map_err(|e| e.to_string())?;
            let scores = score_sentences(&model, &queries).map_err(|e| e.to_string())?;
            for (q, s) in queries.iter().zip(&scores) {
                let want = brute_force_logprobs(corpus, order, q);
                ensure(want.len() == s.token_logprobs.len(), || "length mismatch".into())?;
                for (a, b) in want.iter().zip(&s.token_logprobs) {
                    worst = worst.max((a - b).abs());
                    checked += 1;
                }
            }
        }
    }
    ensure(worst <= 1e-9, || format!("max abs deviation {worst:e}"))?;

    // Tie policy through the CLI on the demo pairs.
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pairs = tmp.path().join("pairs");
    let results = tmp.path().join("results.json");
    run_ok(minpair().args(["generate", "-n", "50", "--out"]).arg(&pairs))?;
    run_ok(minpair().args(["score", "--constant", "-2.5", "--pairs"]).arg(&pairs).arg("--out").arg(&results))?;
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&results).unwrap()).unwrap();
    let accs: Vec<f64> = report["paradigms"].as_array().unwrap().iter().map(|p| p["accuracy"].as_f64().unwrap()).collect();
    ensure(accs.len() == 15 && accs.iter().all(|a| *a == 0.0), || format!("constant backend accuracies {accs:?}"))?;
    ensure(report["overall"].as_f64() == Some(0.0), || "overall not 0".into())?;
    Ok(format!("{checked} token logprobs, max deviation {worst:.1e}; constant backend accuracy 0.0"))
}

// 4. MLP normalization
struct TableBackend(Vec<RawScore>);

impl ScorerBackend for TableBackend {
    fn score_batch(&self, sentences: &[String]) -> Result<Vec<RawScore>, ScoreError> {
        Ok(sentences.iter().enumerate().map(|(i, _)| self.0[i].clone()).collect())
    }
}

fn mlp_normalization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for trial in 0..2000 {
        let n = rng.gen_range(1..40);
        let scale = [1e-3, 1.0, 30.0][trial % 3];
        let tokens: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let logprobs: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>() * scale).collect();
        let once = RawScore { tokens: tokens.clone(), logprobs: logprobs.clone() };
        let twice = RawScore { tokens: [tokens.clone(), tokens].concat(), logprobs: [logprobs.clone(), logprobs].concat() };
        let backend = TableBackend(vec![once, twice]);
        let s = score_sentences(&backend, &["a".into(), "b".into()]).map_err(|e| e.to_string())?;
        worst = worst.max((s[0].mlp - s[1].mlp).abs());
    }
    ensure(worst <= 1e-12, || format!("max mlp change {worst:e}"))?;
    // And through a real backend: a sentence repeated is scored by its own tokens.
    let model = CharNgram::train(&fs::read_to_string(data("corpus.txt")).unwrap(), 1).map_err(|e| e.to_string())?;
    let s = model.score_batch(&["他是司机。".into()]).map_err(|e| e.to_string())?.remove(0);
    let a = SentenceScore::from_raw(s.clone(), 0).map_err(|e| e.to_string())?;
    let b = SentenceScore::from_raw(
        RawScore { tokens: [s.tokens.clone(), s.tokens].concat(), logprobs: [s.logprobs.clone(), s.logprobs].concat() },
        0,
    )
    .map_err(|e| e.to_string())?;
    ensure((a.mlp - b.mlp).abs() <= 1e-12, || "oracle duplication changed mlp".into())?;
    Ok(format!("2000 random sentences, max |delta mlp| = {worst:.1e}"))
}

// 5. Curve-fit recovery
fn logspace(lo: f64, hi: f64, k: usize) -> Vec<u64> {
    (0..k).map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (k - 1) as f64).exp().round() as u64).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn curve_fit() -> Check {
    let start = Instant::now();
    let ns = logspace(1e6, 3e9, 20);
    let base = SaturationFit { p_inf: 0.83, p0: 0.50, alpha: 1e-4, beta: 0.5, residual: 0.0, converged: true };
    let pts: Vec<TrajectoryPoint> = ns.iter().map(|&n| TrajectoryPoint::new(n, base.eval(n as f64))).collect();
    let fit = fit_saturation(&pts).map_err(|e| e.to_string())?;
    let sat_err = [rel(fit.p_inf, 0.83), rel(fit.p0, 0.5), rel(fit.alpha, 1e-4), rel(fit.beta, 0.5)]
        .into_iter()
        .fold(0.0, f64::max);
    ensure(sat_err < 0.01 && fit.residual < 1e-6, || format!("saturation fit {fit:?}"))?;

    let truth = UShapeFit { base, k: 0.1, n0: 3e8, s: 2e8, residual: 0.0, converged: true, saturation_residual: 0.0, warranted: true };
    let pts_u: Vec<TrajectoryPoint> = ns.iter().map(|&n| TrajectoryPoint::new(n, truth.eval(n as f64))).collect();
    let u = fit_ushape(&pts_u, DEFAULT_WARRANT_MARGIN).map_err(|e| e.to_string())?;
    let u_err = [
        rel(u.base.p_inf, 0.83),
        rel(u.base.p0, 0.5),
        rel(u.base.alpha, 1e-4),
        rel(u.base.beta, 0.5),
        rel(u.k, 0.1),
        rel(u.n0, 3e8),
        rel(u.s, 2e8),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    ensure(u_err < 0.05 && u.warranted, || format!("u-shape fit {u:?}"))?;

    let plain = fit_ushape(&pts, DEFAULT_WARRANT_MARGIN).map_err(|e| e.to_string())?;
    ensure(!plain.warranted, || format!("U-term warranted on saturation data: {plain:?}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "saturation max rel err {sat_err:.1e}, rmse {:.1e}; U-shape max rel err {u_err:.1e}, warranted; plain data not warranted; {:.2}s",
        fit.residual,
        elapsed.as_secs_f64()
    ))
}

// 6. Classification determinism
fn classification() -> Check {
    use Difficulty::*;
    let table: [(f64, Option<f64>, Difficulty); 14] = [
        (0.95, Some(-0.5), Easy),
        (0.86, None, Easy),
        (0.85, Some(0.99), Medium),
        (0.80, Some(0.10), Medium),
        (0.7000001, None, Medium),
        (0.70, Some(0.95), Difficult),
        (0.65, Some(0.81), Difficult),
        (0.70, Some(0.80), Other),
        (0.55, Some(0.80), Other),
        (0.55, Some(0.3), Other),
        (0.40, Some(-0.9), Other),
        (0.60, None, Other),
        (0.8500001, Some(0.0), Easy),
        (0.69, Some(0.8000001), Difficult),
    ];
    for (acc, rho, want) in table {
        let got = label(acc, rho);
        ensure(got == want, || format!("label({acc}, {rho:?}) = {got:?}, want {want:?}"))?;
    }
    // End to end through classify_paradigm, including permuted input.
    let sizes = [14_000_000u64, 70_000_000, 160_000_000, 410_000_000, 1_400_000_000];
    let cases: [([f64; 5], Difficulty); 4] = [
        ([0.6, 0.7, 0.8, 0.85, 0.90], Easy),
        ([0.6, 0.7, 0.75, 0.8, 0.85], Medium),
        ([0.5, 0.55, 0.6, 0.62, 0.65], Difficult),
        ([0.55, 0.50, 0.53, 0.49, 0.52], Other),
    ];
    for (accs, want) in cases {
        let mut rows: Vec<(u64, f64)> = sizes.iter().cloned().zip(accs).collect();
        let a = classify_paradigm("p", &rows).map_err(|e| e.to_string())?;
        rows.reverse();
        rows.swap(0, 2);
        let b = classify_paradigm("p", &rows).map_err(|e| e.to_string())?;
        ensure(a.label == want && a == b, || format!("{accs:?}: {a:?} / {b:?}"))?;
    }
    Ok(format!("{} boundary rows and 4 end-to-end tables labelled as expected", table.len()))
}

// 7. Region decomposition consistency
fn region_consistency() -> Check {
    let pairs = read_pairs(&data("golden/seed7-n5/npi_negation_scope.jsonl"))?;
    let mut all = pairs.clone();
    all.extend(read_pairs(&data("golden/seed7-n5/anaphor_gender_agreement.jsonl"))?);
    let oracle = CharNgram::train(&fs::read_to_string(data("corpus.txt")).unwrap(), 2).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut n = 0;
    for pair in &all {
        let one = std::slice::from_ref(pair);
        let full = TokenSplit { good: pair.good.tokens.len(), bad: pair.bad.tokens.len() };
        let d = region_decomposition(&oracle, one, &[full], 0).map_err(|e| e.to_string())?;
        let r = score_pairs(&oracle, one).map_err(|e| e.to_string())?;
        let want = r[0].good_score.mlp - r[0].bad_score.mlp;
        worst = worst.max((d.prefix_delta - want).abs());
        ensure(d.continuation_delta == 0.0, || "non-empty continuation at full split".into())?;
        n += 1;
    }
    ensure(worst <= 1e-12, || format!("max |prefix_delta - mlp diff| = {worst:e}"))?;
    let splits: Vec<TokenSplit> = pairs.iter().map(|p| p.split.expect("annotated paradigm")).collect();
    let sym = region_decomposition(&ConstantBackend { logprob: -1.7 }, &pairs, &splits, 0).map_err(|e| e.to_string())?;
    ensure(sym.prefix_delta == 0.0 && sym.continuation_delta == 0.0, || format!("symmetric backend gave {sym:?}"))?;
    Ok(format!("{n} pairs, max deviation {worst:.1e}; symmetric backend deltas exactly 0"))
}

// 8. Validation sampler
fn validation_sampler() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pairs_dir = tmp.path().join("pairs");
    let catch_dir = tmp.path().join("catch");
    run_ok(minpair().args(["generate", "-n", "300", "--out"]).arg(&pairs_dir))?;
    run_ok(minpair().args(["generate", "--paradigms", "data/catch", "-n", "20", "--out"]).arg(&catch_dir))?;
    let mut pool = Vec::new();
    for f in sorted_files(&pairs_dir, "jsonl") {
        pool.extend(read_pairs(&f)?);
    }
    // 118 paradigms of 38 pairs each, carved from the demo output.
    let paradigms: Vec<(String, Vec<MinimalPair>)> = pool
        .chunks(38)
        .take(118)
        .enumerate()
        .map(|(i, c)| {
            let id = format!("p{i:03}");
            let ps = c.iter().cloned().map(|mut p| {
                p.paradigm_id = id.clone();
                p
            });
            let ps: Vec<MinimalPair> = ps.collect();
            (id, ps)
        })
        .collect();
    ensure(paradigms.len() == 118, || "could not build 118 paradigms".into())?;
    let catch = read_pairs(&catch_dir.join("catch_reversed_order.jsonl"))?;
    let lists = sample_questionnaires(&paradigms, &catch, 5, 10, 3).map_err(|e| e.to_string())?;
    let sizes: Vec<usize> = lists.iter().map(|l| l.test_count()).collect();
    let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
    ensure(hi - lo <= 1 && sizes.iter().sum::<usize>() == 590, || format!("sizes {sizes:?}"))?;
    for l in &lists {
        l.check()?;
    }

    // Three respondents per list; respondent 1 of list 4 misses a catch trial.
    let mut responses = Vec::new();
    let mut tally: BTreeMap<bool, usize> = BTreeMap::new();
    for (li, l) in lists.iter().enumerate() {
        for r in 0..3 {
            let planted = li == 4 && r == 1;
            let mut missed_catch = false;
            for (i, it) in l.items.iter().enumerate() {
                let right = if it.is_catch {
                    if planted && !missed_catch {
                        missed_catch = true;
                        false
                    } else {
                        true
                    }
                } else {
                    (i * 7 + r * 3 + li) % 5 != 0
                };
                let choice = match (it.gold(), right) {
                    (Choice::A, true) | (Choice::B, false) => Choice::A,
                    _ => Choice::B,
                };
                if !it.is_catch && !planted {
                    *tally.entry(right).or_default() += 1;
                }
                responses.push(ResponseRecord { list_id: l.list_id.clone(), respondent_id: format!("r{r}"), item: i, choice });
            }
        }
    }
    let report = score_agreement(&lists, &responses).map_err(|e| e.to_string())?;
    let hits = tally.get(&true).copied().unwrap_or(0);
    let total = hits + tally.get(&false).copied().unwrap_or(0);
    let want = hits as f64 / total as f64;
    ensure(report.excluded == 1 && report.valid_respondents == 29, || format!("{report:?}"))?;
    ensure(report.overall == want, || format!("agreement {} vs hand tally {want}", report.overall))?;
    Ok(format!("10 lists of {lo}-{hi} items + 2 catch each; 1 exclusion; agreement {hits}/{total} matches"))
}

// 9. External-scorer protocol
fn expected_fake(s: &str) -> Vec<f64> {
    s.chars().map(|c| -(1.0 + (c as u32 % 7) as f64 / 10.0)).collect()
}

fn fake(mode: &str, extra: &[&str], config: ExternalConfig) -> Result<ExternalScorer, String> {
    let mut argv = vec![fake_scorer(), "--mode".into(), mode.into()];
    argv.extend(extra.iter().map(|s| s.to_string()));
    ExternalScorer::connect(&Endpoint::Process(argv), config).map_err(|e| e.to_string())
}

fn external_protocol() -> Check {
    let config = ExternalConfig { batch_size: 64, timeout: Duration::from_secs(20), connections: 1 };
    let sentences: Vec<String> = (0..1000).map(|i| format!("句子{i}号。")).collect();
    let scorer = fake("ok", &[], config)?;
    let scores = score_sentences(&scorer, &sentences).map_err(|e| e.to_string())?;
    ensure(scorer.round_trips() == 16, || format!("{} round trips", scorer.round_trips()))?;
    for (s, sc) in sentences.iter().zip(&scores) {
        ensure(sc.token_logprobs == expected_fake(s) && sc.tokens.concat() == *s, || format!("out of order at {s}"))?;
    }
    // Several connections keep order too.
    let multi = fake("ok", &[], ExternalConfig { connections: 3, ..config })?;
    let again = score_sentences(&multi, &sentences).map_err(|e| e.to_string())?;
    ensure(again == scores && multi.round_trips() == 16, || "multi-connection mismatch".into())?;

    let short = ExternalConfig { batch_size: 4, timeout: Duration::from_millis(400), connections: 1 };
    let batch: Vec<String> = (0..10).map(|i| format!("第{i}句")).collect();
    let protocol = |reason: &'static str| move |e: &ScoreError| matches!(e, ScoreError::Protocol { request: 1, reason: r } if r.contains(reason));
    let cases: Vec<(&str, Box<dyn Fn(&ScoreError) -> bool>)> = vec![
        ("malformed", Box::new(protocol("malformed"))),
        ("no-id", Box::new(protocol("no integer id"))),
        ("wrong-id", Box::new(|e: &ScoreError| matches!(e, ScoreError::NonMonotoneId { expected: 1, got: 2 }))),
        ("no-scores", Box::new(protocol("no scores"))),
        ("wrong-count", Box::new(protocol("3 scores for 4 sentences"))),
        ("no-tokens", Box::new(protocol("tokens"))),
        ("no-logprobs", Box::new(protocol("logprobs"))),
        ("zero-tokens", Box::new(protocol("zero tokens"))),
        ("length-mismatch", Box::new(protocol("tokens but"))),
        ("positive", Box::new(protocol("positive"))),
        ("non-string-token", Box::new(protocol("must be strings"))),
        ("hang", Box::new(|e: &ScoreError| matches!(e, ScoreError::Timeout { request: 1 }))),
        ("close", Box::new(|e: &ScoreError| matches!(e, ScoreError::Connection(_)))),
    ];
    let mut names = Vec::new();
    for (mode, want) in &cases {
        let scorer = fake(mode, &["--at", "1"], short)?;
        match score_sentences(&scorer, &batch) {
            Ok(_) => return Err(format!("{mode}: no error")),
            Err(e) => ensure(want(&e), || format!("{mode}: unexpected error {e:?}"))?,
        }
        names.push(*mode);
    }

    // TCP transport carries the same records.
    let tcp_out = tcp_round_trip(&sentences[..100])?;
    ensure(tcp_out == scores[..100], || "tcp scores differ".into())?;

    // A timeout mid-run keeps partial results, marked incomplete.
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pairs = tmp.path().join("pairs");
    let results = tmp.path().join("results.json");
    run_ok(minpair().args(["generate", "-n", "20", "--out"]).arg(&pairs))?;
    let status = minpair()
        .args(["score", "--batch-size", "40", "--timeout", "0.5", "--backend"])
        .arg(format!("{} --mode hang --at 2", fake_scorer()))
        .arg("--pairs")
        .arg(&pairs)
        .arg("--out")
        .arg(&results)
        .output()
        .map_err(|e| e.to_string())?;
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&results).map_err(|e| e.to_string())?).unwrap();
    ensure(
        !status.status.success() && report["complete"] == false && report["paradigms"].as_array().unwrap().len() == 2,
        || format!("partial-result handling: {report}"),
    )?;
    Ok(format!("16 round trips for 1000 sentences, order kept (1 and 3 connections, stdio and tcp); {} violation paths: {}", names.len(), names.join(", ")))
}

fn tcp_round_trip(sentences: &[String]) -> Result<Vec<SentenceScore>, String> {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
        l.local_addr().unwrap().port()
    };
    let addr = format!("127.0.0.1:{port}");
    let mut child = Command::new(fake_scorer()).args(["--tcp", &addr]).spawn().map_err(|e| e.to_string())?;
    let mut result = Err("could not connect".to_string());
    for _ in 0..100 {
        match ExternalScorer::connect(&Endpoint::Tcp(addr.clone()), ExternalConfig::default()) {
            Ok(scorer) => {
                result = score_sentences(&scorer, sentences).map_err(|e| e.to_string());
                break;
            }
            Err(_) => std::thread::sleep(Duration::from_millis(50)),
        }
    }
    let _ = child.kill();
    let _ = child.wait();
    result
}

fn main() {
    let checks: [(&str, fn() -> Check); 9] = [
        ("generation fidelity", generation_fidelity),
        ("critical-region correctness", critical_regions),
        ("scoring oracle equivalence", scoring_oracle),
        ("MLP normalization", mlp_normalization),
        ("curve-fit recovery", curve_fit),
        ("classification determinism", classification),
        ("region decomposition consistency", region_consistency),
        ("validation sampler", validation_sampler),
        ("external-scorer protocol", external_protocol),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

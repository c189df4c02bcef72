//! HTTP API backing the template authoring UI. All state lives in the same
//! files the CLI reads: `<data>/lexicon.jsonl`, `<data>/phrases.json` and
//! `<data>/paradigms/<id>.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use minpair::generator::{GenerationReport, MinimalPair};
use minpair::lexicon::{LexicalEntry, Lexicon, LexiconError};
use minpair::scoring::{score_pairs, CharNgram, ScoreError};
use minpair::template::{is_slug, link, Paradigm, PhraseLibrary, TemplateError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::generate::{generate_one, pairs_jsonl, GenerateOptions};
use crate::io::write_atomic;

/// Upper bound on preview size; previews are interactive.
pub const MAX_PREVIEW: usize = 1000;

pub struct AppState {
    data: PathBuf,
    lexicon: RwLock<Arc<Lexicon>>,
    phrases: RwLock<Arc<PhraseLibrary>>,
    oracle: Option<Arc<CharNgram>>,
    /// Serializes file writes.
    write_lock: tokio::sync::Mutex<()>,
}

impl AppState {
    pub fn load(data: &Path, oracle: Option<CharNgram>) -> anyhow::Result<Self> {
        Ok(AppState {
            data: data.to_path_buf(),
            lexicon: RwLock::new(Arc::new(crate::io::load_lexicon(&data.join("lexicon.jsonl"))?)),
            phrases: RwLock::new(Arc::new(crate::io::load_phrases(&data.join("phrases.json"))?)),
            oracle: oracle.map(Arc::new),
            write_lock: tokio::sync::Mutex::new(()),
        })
    }

    fn lexicon(&self) -> Arc<Lexicon> {
        self.lexicon.read().expect("lexicon lock").clone()
    }

    fn phrases(&self) -> Arc<PhraseLibrary> {
        self.phrases.read().expect("phrases lock").clone()
    }

    fn paradigm_path(&self, id: &str) -> PathBuf {
        self.data.join("paradigms").join(format!("{id}.json"))
    }
}

/// A machine-readable API error: `{"error": {"code", "message"}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<TemplateError> for ApiError {
    fn from(e: TemplateError) -> Self {
        let code = match &e {
            TemplateError::Malformed(_) => "malformed",
            TemplateError::UnknownRuleKind { .. } => "unknown-rule-kind",
            TemplateError::BadBackReference { .. } => "bad-back-reference",
            TemplateError::InvalidRule { .. } => "invalid-rule",
            TemplateError::InvalidParadigm(_) => "invalid-paradigm",
            TemplateError::DuplicateId(_) => "duplicate-id",
            TemplateError::UnresolvedPhrase { .. } => "unresolved-phrase",
        };
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string())
    }
}

impl From<LexiconError> for ApiError {
    fn from(e: LexiconError) -> Self {
        let code = match &e {
            LexiconError::Duplicate { .. } => "duplicate-entry",
            _ => "invalid-entry",
        };
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string())
    }
}

impl From<ScoreError> for ApiError {
    fn from(e: ScoreError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "score-error", e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_paradigm(body: &Value) -> ApiResult<Paradigm> {
    Ok(Paradigm::from_value(body)?)
}

#[derive(Serialize)]
struct ParadigmSummary {
    id: String,
    phenomenon: String,
}

async fn list_paradigms(State(st): State<Arc<AppState>>) -> ApiResult<Json<Vec<ParadigmSummary>>> {
    let dir = st.data.join("paradigms");
    let files = crate::io::expand(&[dir], "json").map_err(ApiError::internal)?;
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let p = Paradigm::parse(&crate::io::read(&f).map_err(ApiError::internal)?)?;
        out.push(ParadigmSummary { id: p.id, phenomenon: p.phenomenon });
    }
    Ok(Json(out))
}

fn read_paradigm_file(st: &AppState, id: &str) -> ApiResult<String> {
    if !is_slug(id) {
        return Err(ApiError::not_found(format!("no paradigm {id:?}")));
    }
    let path = st.paradigm_path(id);
    std::fs::read_to_string(&path).map_err(|_| ApiError::not_found(format!("no paradigm {id:?}")))
}

fn raw_json(text: String) -> Response {
    ([(axum::http::header::CONTENT_TYPE, "application/json")], text).into_response()
}

async fn get_paradigm(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    Ok(raw_json(read_paradigm_file(&st, &id)?))
}

/// Validates, links against the current phrase library, and saves the
/// paradigm in canonical form. Responds with the saved bytes.
async fn put_paradigm(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<Value>,
) -> ApiResult<Response> {
    let p = parse_paradigm(&body)?;
    if p.id != id {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "id-mismatch",
            format!("body id {:?} does not match URL id {id:?}", p.id),
        ));
    }
    link(&p, &st.phrases())?;
    let text = p.to_canonical();
    let _guard = st.write_lock.lock().await;
    write_atomic(&st.paradigm_path(&id), text.as_bytes()).map_err(ApiError::internal)?;
    Ok(raw_json(text))
}

async fn get_phrases(State(st): State<Arc<AppState>>) -> Response {
    raw_json(st.phrases().to_canonical())
}

async fn put_phrases(State(st): State<Arc<AppState>>, Json(body): Json<Value>) -> ApiResult<Response> {
    let lib = PhraseLibrary::parse(&body.to_string())?;
    lib.check_closed()?;
    let text = lib.to_canonical();
    let _guard = st.write_lock.lock().await;
    write_atomic(&st.data.join("phrases.json"), text.as_bytes()).map_err(ApiError::internal)?;
    *st.phrases.write().expect("phrases lock") = Arc::new(lib);
    Ok(raw_json(text))
}

/// Query parameters are feature constraints; with none, every entry.
async fn search_lexicon(
    State(st): State<Arc<AppState>>,
    Query(constraints): Query<BTreeMap<String, String>>,
) -> Json<Vec<LexicalEntry>> {
    let lex = st.lexicon();
    if constraints.is_empty() {
        return Json(lex.entries().to_vec());
    }
    Json(lex.query(&constraints).into_iter().cloned().collect())
}

async fn add_lexicon_entry(
    State(st): State<Arc<AppState>>,
    Json(entry): Json<LexicalEntry>,
) -> ApiResult<(StatusCode, Json<LexicalEntry>)> {
    let _guard = st.write_lock.lock().await;
    let next = st.lexicon().with_entry(entry.clone())?;
    write_atomic(&st.data.join("lexicon.jsonl"), next.to_jsonl().as_bytes()).map_err(ApiError::internal)?;
    *st.lexicon.write().expect("lexicon lock") = Arc::new(next);
    Ok((StatusCode::CREATED, Json(entry)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewRequest {
    pub paradigm: Value,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub budget_factor: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreviewResponse {
    pub pairs: Vec<MinimalPair>,
    /// The pairs exactly as `minpair generate` writes them.
    pub jsonl: String,
    pub report: GenerationReport,
}

fn run_preview(st: &AppState, req: &PreviewRequest) -> ApiResult<PreviewResponse> {
    if req.n == 0 || req.n > MAX_PREVIEW {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid-request",
            format!("n must be in 1..={MAX_PREVIEW}"),
        ));
    }
    let p = parse_paradigm(&req.paradigm)?;
    let opts = GenerateOptions {
        n: req.n,
        seed: req.seed,
        budget_factor: req.budget_factor.unwrap_or(GenerateOptions::default().budget_factor),
        jobs: 1,
    };
    let phrases = st.phrases();
    link(&p, &phrases)?;
    let (pairs, report) = generate_one(p, phrases, &st.lexicon(), &opts).map_err(ApiError::internal)?;
    Ok(PreviewResponse { jsonl: pairs_jsonl(&pairs), pairs, report })
}

async fn preview(State(st): State<Arc<AppState>>, Json(req): Json<PreviewRequest>) -> ApiResult<Json<PreviewResponse>> {
    Ok(Json(run_preview(&st, &req)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair: MinimalPair,
    pub good_mlp: f64,
    pub bad_mlp: f64,
    pub correct: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreviewScoreResponse {
    pub pairs: Vec<ScoredPair>,
    pub accuracy: Option<f64>,
    pub report: GenerationReport,
}

async fn preview_score(
    State(st): State<Arc<AppState>>,
    Json(req): Json<PreviewRequest>,
) -> ApiResult<Json<PreviewScoreResponse>> {
    let oracle = st.oracle.clone().ok_or_else(|| {
        ApiError::new(StatusCode::CONFLICT, "no-oracle", "service started without --oracle-corpus")
    })?;
    let preview = run_preview(&st, &req)?;
    if preview.pairs.is_empty() {
        return Ok(Json(PreviewScoreResponse { pairs: vec![], accuracy: None, report: preview.report }));
    }
    let results = score_pairs(oracle.as_ref(), &preview.pairs)?;
    let correct = results.iter().filter(|r| r.correct).count();
    Ok(Json(PreviewScoreResponse {
        accuracy: Some(correct as f64 / results.len() as f64),
        pairs: results
            .into_iter()
            .map(|r| ScoredPair {
                good_mlp: r.good_score.mlp,
                bad_mlp: r.bad_score.mlp,
                correct: r.correct,
                pair: r.pair,
            })
            .collect(),
        report: preview.report,
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/paradigms", get(list_paradigms))
        .route("/api/paradigms/{id}", get(get_paradigm).put(put_paradigm))
        .route("/api/phrases", get(get_phrases).put(put_phrases))
        .route("/api/lexicon", get(search_lexicon).post(add_lexicon_entry))
        .route("/api/preview", post(preview))
        .route("/api/preview/score", post(preview_score))
        .with_state(state)
}

pub async fn serve(state: AppState, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}

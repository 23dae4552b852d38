//! HTTP interface under `/api/v1`. Bodies are JSON except slice images (PNG).

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lvdisc::cardiac::{
    assemble_report, segment_slice, Mode, PipelineConfig, Seed, SliceInit, SliceResult, SliceStatus,
};
use lvdisc::ead::{DiscParams, Termination};
use lvdisc::imaging::png_io::encode_gray8;
use lvdisc::imaging::{CineStudy, GrayImage, Phase};
use lvdisc::locate::{MatchResult, Template};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::session::{SessionState, SlotKey};

pub struct AppState {
    pub session: SessionState,
    pub template: Template,
    pub config: PipelineConfig,
    /// Where saved sessions go; input files are never written.
    pub out_dir: PathBuf,
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Validation(String),
    MissingSlices(Vec<(usize, Phase)>),
    FitFailed(Box<SliceSummary>),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::NotFound(m) => (
                StatusCode::NOT_FOUND,
                json!({"error": "not_found", "message": m}),
            ),
            ApiError::Validation(m) => (
                StatusCode::BAD_REQUEST,
                json!({"error": "validation", "message": m}),
            ),
            ApiError::MissingSlices(missing) => {
                let list: Vec<_> = missing
                    .iter()
                    .map(|(z, p)| json!({"z": z, "phase": p}))
                    .collect();
                let message = format!("{} slice(s) have no accepted result", list.len());
                (
                    StatusCode::CONFLICT,
                    json!({"error": "missing_slices", "message": message, "missing": list}),
                )
            }
            ApiError::FitFailed(s) => {
                let message = s.message.clone().unwrap_or_else(|| "fit failed".into());
                (
                    StatusCode::UNPROCESSABLE_ENTITY,
                    json!({"error": "fit_failed", "message": message, "result": s}),
                )
            }
            ApiError::Internal(m) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({"error": "internal", "message": m}),
            ),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Serialize)]
pub struct StudyInfo {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub n_z: usize,
    pub n_phase: usize,
    pub ed_phase: usize,
    pub es_phase: usize,
    pub spacing_mm: [f64; 3],
    pub has_labels: bool,
}

impl StudyInfo {
    fn of(s: &CineStudy) -> Self {
        let (sx, sy, sz) = s.spacing();
        Self {
            id: s.id.clone(),
            width: s.width(),
            height: s.height(),
            n_z: s.n_z(),
            n_phase: s.n_phase(),
            ed_phase: s.ed_phase(),
            es_phase: s.es_phase(),
            spacing_mm: [sx, sy, sz],
            has_labels: s.has_labels(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SliceInfo {
    pub study: String,
    pub z: usize,
    pub phase: Phase,
    pub width: usize,
    pub height: usize,
    pub spacing_mm: [f64; 2],
    pub image: String,
    pub result: Option<SliceSummary>,
}

/// What the client needs to draw and label one segmentation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceSummary {
    pub study: String,
    pub z: usize,
    pub phase: Phase,
    pub seq: u64,
    /// False when a later request for the same slice already replaced it.
    pub accepted: bool,
    pub mode: Mode,
    pub status: SliceStatus,
    pub seed: Option<[f64; 2]>,
    pub params: Option<DiscParams>,
    /// Closed inner-ellipse polyline in image coordinates.
    pub contour: Vec<[f64; 2]>,
    pub energy: Option<f64>,
    pub trace_length: usize,
    pub termination: Option<Termination>,
    pub weak: bool,
    pub area_px: usize,
    #[serde(rename = "match")]
    pub match_result: Option<MatchResult>,
    pub message: Option<String>,
}

impl SliceSummary {
    fn new(study: &str, seq: u64, accepted: bool, r: &SliceResult, contour_points: usize) -> Self {
        Self {
            study: study.to_string(),
            z: r.z,
            phase: r.phase,
            seq,
            accepted,
            mode: r.mode,
            status: r.status,
            seed: r.seed,
            params: r.params,
            contour: r.contour(contour_points),
            energy: r.energy,
            trace_length: r.iterations,
            termination: r.termination,
            weak: r.weak,
            area_px: r.area_px,
            match_result: r.match_result,
            message: r.message.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRequest {
    pub x: f64,
    pub y: f64,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/studies", get(list_studies))
        .route("/api/v1/studies/{id}/slices/{z}/{phase}", get(get_slice))
        .route(
            "/api/v1/studies/{id}/slices/{z}/{phase}/image.png",
            get(get_slice_png),
        )
        .route(
            "/api/v1/studies/{id}/slices/{z}/{phase}/seed",
            post(post_seed),
        )
        .route(
            "/api/v1/studies/{id}/slices/{z}/{phase}/auto",
            post(post_auto),
        )
        .route("/api/v1/studies/{id}/report", get(get_report))
        .route("/api/v1/studies/{id}/session", post(post_session))
        .with_state(state)
}

async fn list_studies(State(st): State<Arc<AppState>>) -> Json<Vec<StudyInfo>> {
    Json(st.session.studies().map(|s| StudyInfo::of(s)).collect())
}

struct Resolved {
    study: Arc<CineStudy>,
    key: SlotKey,
}

impl Resolved {
    fn image(&self) -> &GrayImage {
        let t = self.study.phase_index(self.key.phase);
        self.study.slice(self.key.z, t).expect("checked in resolve")
    }
}

fn resolve(st: &AppState, id: &str, z: &str, phase: &str) -> ApiResult<Resolved> {
    let study = st
        .session
        .study(id)
        .ok_or_else(|| ApiError::NotFound(format!("no study {id:?}")))?
        .clone();
    let phase: Phase = phase
        .parse()
        .map_err(|_| ApiError::NotFound(format!("no phase {phase:?} (expected ed|es)")))?;
    let z: usize = z.parse().ok().filter(|&z| z < study.n_z()).ok_or_else(|| {
        ApiError::NotFound(format!("no slice z={z} in {id:?} ({} slices)", study.n_z()))
    })?;
    Ok(Resolved {
        key: SlotKey {
            study: id.to_string(),
            z,
            phase,
        },
        study,
    })
}

async fn get_slice(
    State(st): State<Arc<AppState>>,
    Path((id, z, phase)): Path<(String, String, String)>,
) -> ApiResult<Json<SliceInfo>> {
    let r = resolve(&st, &id, &z, &phase)?;
    let img = r.image();
    let result = st
        .session
        .result(&r.key)
        .map(|(seq, res)| SliceSummary::new(&id, seq, true, &res, st.config.contour_points));
    Ok(Json(SliceInfo {
        study: id.clone(),
        z: r.key.z,
        phase: r.key.phase,
        width: img.width(),
        height: img.height(),
        spacing_mm: [img.spacing_x(), img.spacing_y()],
        image: format!(
            "/api/v1/studies/{id}/slices/{}/{}/image.png",
            r.key.z, r.key.phase
        ),
        result,
    }))
}

async fn get_slice_png(
    State(st): State<Arc<AppState>>,
    Path((id, z, phase)): Path<(String, String, String)>,
) -> ApiResult<Response> {
    let r = resolve(&st, &id, &z, &phase)?;
    let img = r.image();
    let png = encode_gray8(img.width(), img.height(), &img.to_u8());
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

/// Runs one slice off the async executor and stores the outcome.
async fn run_slice(st: Arc<AppState>, r: Resolved, init: SliceInit) -> ApiResult<SliceSummary> {
    let seed = match init {
        SliceInit::Seed { x, y } => Some(Seed {
            x,
            y,
            z: Some(r.key.z),
            phase: Some(r.key.phase),
        }),
        SliceInit::Auto => None,
    };
    let seq = st.session.begin(&r.key, seed);
    let st2 = st.clone();
    let Resolved { study, key } = r;
    let (key, result) = tokio::task::spawn_blocking(move || {
        let img = study
            .slice(key.z, study.phase_index(key.phase))
            .expect("checked in resolve");
        let res = segment_slice(img, &st2.template, &st2.config, key.z, key.phase, init);
        (key, res)
    })
    .await
    .map_err(|e| ApiError::Internal(format!("segmentation task: {e}")))?;
    let commit = st.session.commit(&key, seq, result.clone());
    log::info!(
        "{} z={} {} seq={} status={:?} accepted={}",
        key.study,
        key.z,
        key.phase,
        seq,
        result.status,
        commit.accepted
    );
    Ok(SliceSummary::new(
        &key.study,
        seq,
        commit.accepted,
        &result,
        st.config.contour_points,
    ))
}

async fn post_seed(
    State(st): State<Arc<AppState>>,
    Path((id, z, phase)): Path<(String, String, String)>,
    body: Result<Json<SeedRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<Json<SliceSummary>> {
    let r = resolve(&st, &id, &z, &phase)?;
    let Json(req) = body.map_err(|e| ApiError::Validation(e.body_text()))?;
    let (w, h) = (r.image().width() as f64, r.image().height() as f64);
    let inside = req.x.is_finite()
        && req.y.is_finite()
        && req.x >= 0.0
        && req.y >= 0.0
        && req.x <= w - 1.0
        && req.y <= h - 1.0;
    if !inside {
        return Err(ApiError::Validation(format!(
            "seed ({}, {}) outside the {}x{} slice",
            req.x, req.y, w, h
        )));
    }
    let summary = run_slice(st, r, SliceInit::Seed { x: req.x, y: req.y }).await?;
    if summary.status == SliceStatus::FitFailed {
        return Err(ApiError::FitFailed(Box::new(summary)));
    }
    Ok(Json(summary))
}

async fn post_auto(
    State(st): State<Arc<AppState>>,
    Path((id, z, phase)): Path<(String, String, String)>,
) -> ApiResult<Json<SliceSummary>> {
    let r = resolve(&st, &id, &z, &phase)?;
    Ok(Json(run_slice(st, r, SliceInit::Auto).await?))
}

async fn get_report(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let study = st
        .session
        .study(&id)
        .ok_or_else(|| ApiError::NotFound(format!("no study {id:?}")))?
        .clone();
    let results = st.session.results(&id);
    match assemble_report(&study, results, &st.config) {
        Ok(report) => Ok((
            [(header::CONTENT_TYPE, "application/json")],
            report.to_json(),
        )
            .into_response()),
        Err(m) => Err(ApiError::MissingSlices(m.missing)),
    }
}

async fn post_session(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    if st.session.study(&id).is_none() {
        return Err(ApiError::NotFound(format!("no study {id:?}")));
    }
    let (path, doc) = st
        .session
        .save(&id, &st.out_dir)
        .map_err(|e| ApiError::Internal(format!("{e:#}")))?;
    Ok(Json(json!({
        "path": path,
        "results": doc.results.len(),
        "pending": doc.pending.len(),
    })))
}

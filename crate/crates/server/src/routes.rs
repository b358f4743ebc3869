use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use epochflow_core::flow::{band_members, compute_flow, glyph_layout, trace, OTHER_LABEL};
use epochflow_core::ingest::{parse_run_document, RunSummary};
use epochflow_core::metrics::Measure;
use epochflow_core::table::{confusion_summary, query_table, resolve_range, resolve_selection, TableRequest};
use epochflow_core::{BinId, ClassSelection, EpochRange, TrainingRun};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ErrorCode};
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

/// Runs engine work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, format!("worker failed: {e}")))?
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()))
}

/// Comma-separated list; absent or empty means "not given".
fn list(value: Option<&str>) -> Option<Vec<String>> {
    value
        .filter(|v| !v.is_empty())
        .map(|v| v.split(',').map(|s| s.trim().to_string()).collect())
}

struct Frame {
    run: Arc<TrainingRun>,
    sel: ClassSelection,
    range: EpochRange,
    filter: Option<Vec<String>>,
}

impl Frame {
    fn resolve(
        state: &AppState,
        id: &str,
        classes: Option<&str>,
        from: Option<usize>,
        to: Option<usize>,
        filter: Option<&str>,
    ) -> ApiResult<Frame> {
        let run = state.run(id)?;
        let sel = resolve_selection(&run, list(classes).as_deref())?;
        let range = resolve_range(&run, from, to)?;
        Ok(Frame {
            run,
            sel,
            range,
            filter: list(filter),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Created {
    pub run_id: String,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "E")]
    pub epochs: usize,
}

pub async fn create_run(
    State(state): State<AppState>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<Response> {
    let body = body.map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()).with_status(e.status()))?;
    blocking(move || {
        let text = std::str::from_utf8(&body)
            .map_err(|e| ApiError::new(ErrorCode::Unprocessable, format!("body is not UTF-8: {e}")))?;
        let doc = parse_run_document(text)?;
        let existed = state.store().summary(&doc.run_id()).is_some();
        let run_id = state.store().store_run(&doc)?;
        let summary = state
            .store()
            .summary(&run_id)
            .ok_or_else(|| ApiError::new(ErrorCode::Internal, "stored run missing from index"))?;
        let status = if existed { StatusCode::OK } else { StatusCode::CREATED };
        tracing::info!(%run_id, m = summary.m, n = summary.n, epochs = summary.epochs, "ingested");
        let body = Created {
            run_id,
            m: summary.m,
            n: summary.n,
            epochs: summary.epochs,
        };
        Ok((status, Json(body)).into_response())
    })
    .await
}

pub async fn list_runs(State(state): State<AppState>) -> Json<Vec<RunSummary>> {
    Json(state.store().list_runs())
}

#[derive(Debug, Serialize)]
pub struct RunInfo {
    #[serde(flatten)]
    pub summary: RunSummary,
    pub classes: Vec<String>,
}

pub async fn get_run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<RunInfo>> {
    blocking(move || {
        let summary = state
            .store()
            .summary(&id)
            .ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("run {id} not found")))?;
        let run = state.run(&id)?;
        Ok(Json(RunInfo {
            summary,
            classes: run.class_labels().to_vec(),
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct FlowParams {
    classes: Option<String>,
    from: Option<usize>,
    to: Option<usize>,
    filter: Option<String>,
}

pub async fn flow(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<FlowParams>, QueryRejection>,
) -> ApiResult<Response> {
    let p = query(q)?;
    blocking(move || {
        let f = Frame::resolve(&state, &id, p.classes.as_deref(), p.from, p.to, p.filter.as_deref())?;
        let frame = compute_flow(&f.run, &f.sel, f.range, f.filter.as_deref())?;
        Ok(Json(frame).into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BandParams {
    /// 1-based epoch the transition starts from.
    epoch: usize,
    from_bin: String,
    to_bin: String,
    classes: Option<String>,
    from: Option<usize>,
    to: Option<usize>,
    filter: Option<String>,
}

/// A bin given as a class label, the Other label, or a position in the
/// layout. Labels win over the other two forms.
fn parse_bin(run: &TrainingRun, sel: &ClassSelection, param: &str, value: &str) -> ApiResult<BinId> {
    if let Some(class) = run.class_by_label(value) {
        return Ok(BinId::Class(class));
    }
    if value == OTHER_LABEL {
        return Ok(BinId::Other);
    }
    if let Ok(pos) = value.parse::<usize>() {
        return sel
            .bins()
            .get(pos)
            .copied()
            .ok_or_else(|| ApiError::new(ErrorCode::Unprocessable, format!("no bin at position {pos}")).at(param));
    }
    Err(ApiError::new(ErrorCode::Unprocessable, format!("unknown bin {value:?}")).at(param))
}

pub async fn band(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<BandParams>, QueryRejection>,
) -> ApiResult<Response> {
    let p = query(q)?;
    if p.epoch == 0 {
        return Err(ApiError::bad_request("epoch", "epochs are numbered from 1"));
    }
    blocking(move || {
        let f = Frame::resolve(&state, &id, p.classes.as_deref(), p.from, p.to, p.filter.as_deref())?;
        let from = parse_bin(&f.run, &f.sel, "fromBin", &p.from_bin)?;
        let to = parse_bin(&f.run, &f.sel, "toBin", &p.to_bin)?;
        let ids = band_members(&f.run, &f.sel, f.range, p.epoch - 1, from, to, f.filter.as_deref())?;
        Ok(Json(ids).into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GlyphParams {
    rank_by: Option<String>,
    classes: Option<String>,
    from: Option<usize>,
    to: Option<usize>,
    filter: Option<String>,
}

pub async fn glyphs(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<GlyphParams>, QueryRejection>,
) -> ApiResult<Response> {
    let p = query(q)?;
    let rank_by = match p.rank_by.as_deref() {
        None | Some("") => Measure::Misclassification,
        Some(name) => name.parse::<Measure>().map_err(|e| ApiError::from(e).at("rankBy"))?,
    };
    blocking(move || {
        let f = Frame::resolve(&state, &id, p.classes.as_deref(), p.from, p.to, p.filter.as_deref())?;
        let layout = glyph_layout(&f.run, &f.sel, f.range, rank_by, f.filter.as_deref())?;
        Ok(Json(layout).into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct TraceParams {
    ids: Option<String>,
    classes: Option<String>,
    from: Option<usize>,
    to: Option<usize>,
}

pub async fn traces(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<TraceParams>, QueryRejection>,
) -> ApiResult<Response> {
    let p = query(q)?;
    let ids = list(p.ids.as_deref()).ok_or_else(|| ApiError::bad_request("ids", "ids is required"))?;
    blocking(move || {
        let f = Frame::resolve(&state, &id, p.classes.as_deref(), p.from, p.to, None)?;
        let segments = trace(&f.run, &f.sel, f.range, &ids)?;
        Ok(Json(segments).into_response())
    })
    .await
}

pub async fn table(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<TableRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(request) = body.map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()))?;
    blocking(move || {
        let run = state.run(&id)?;
        let spec = request.resolve(&run)?;
        let page = query_table(&run, &spec)?;
        Ok(Json(page).into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct RangeParams {
    from: Option<usize>,
    to: Option<usize>,
}

pub async fn confusion(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<RangeParams>, QueryRejection>,
) -> ApiResult<Response> {
    let p = query(q)?;
    blocking(move || {
        let run = state.run(&id)?;
        let range = resolve_range(&run, p.from, p.to)?;
        Ok(Json(confusion_summary(&run, range)?).into_response())
    })
    .await
}

pub async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such endpoint")
}

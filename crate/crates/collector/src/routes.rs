use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use charnet_core::survey::{
    AcademicBackground, EducationLevel, Gender, ProfileRecord, RespondentId, RespondentProfile,
    ResponseBundle, ResponseSet, SurveyError, Task1EntryRecord, Task1Response, Task2CellRecord,
    Task2Response, BUNDLE_FORMAT, BUNDLE_VERSION, SCALE_MAX, TASK1_MIN, TASK2_MIN,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{append, now_secs, Collector, ContactRecord, JournalRecord, Session, Stage};

pub(crate) fn router(collector: Collector) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{token}", get(session_status))
        .route("/v1/sessions/{token}/{stage}", post(submit_stage))
        .route("/v1/export/{story_id}", get(export))
        .route("/v1/stories/{story_id}/characters", get(characters))
        .route("/v1/schema", get(schema))
        .with_state(collector)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub story_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_token: String,
    pub story_id: String,
    pub stage: Stage,
    /// Registry order, which is also the matrix order for Task 2.
    pub characters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_token: String,
    pub story_id: String,
    pub stage: Stage,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAccepted {
    pub session_token: String,
    pub accepted: Stage,
    /// Stage the session is at now.
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterList {
    pub story_id: String,
    pub characters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsentPayload {
    pub agreed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task1Payload {
    pub entries: Vec<Task1EntryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task2Payload {
    pub cells: Vec<Task2CellRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

/// Everything a client needs to produce payloads the server accepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub version: u32,
    pub stages: Vec<Stage>,
    pub task1_importance: Bounds,
    pub task2_value: Bounds,
    pub age: Bounds,
    pub genders: Vec<Gender>,
    pub education_levels: Vec<EducationLevel>,
    pub academic_backgrounds: Vec<AcademicBackground>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// Current stage, on conflicts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: error.into(),
                message: message.into(),
                field: None,
                stage: None,
            },
        }
    }

    fn validation(field: Option<String>, message: impl Into<String>) -> Self {
        let mut e = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message);
        e.body.field = field;
        e
    }

    fn unknown_story(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_story", format!("story `{id}` is not configured"))
    }

    fn storage(err: std::io::Error) -> Self {
        log::error!("journal write failed: {err}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", "could not persist the submission")
    }

    /// Survey errors carry a path relative to the payload's list.
    fn survey(list: &str, err: &SurveyError) -> Self {
        let field = err.field_path().map(|p| {
            if p.starts_with('[') {
                format!("{list}{p}")
            } else {
                p
            }
        });
        Self::validation(field, err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        if e.is_data() {
            ApiError::validation(None, e.to_string())
        } else {
            ApiError::new(StatusCode::BAD_REQUEST, "malformed_json", e.to_string())
        }
    })
}

async fn create_session(
    State(c): State<Collector>,
    body: Bytes,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let req: CreateSession = parse(&body)?;
    let story = c.story(&req.story_id).ok_or_else(|| ApiError::unknown_story(&req.story_id))?;
    let token = uuid::Uuid::new_v4().simple().to_string();
    let seq = c.next_seq();
    let created_at = now_secs();
    append(
        &story.journal,
        JournalRecord::Session {
            token: token.clone(),
            seq,
            created_at,
        },
    )
    .await
    .map_err(ApiError::storage)?;
    let session = Session {
        token: token.clone(),
        story_id: req.story_id.clone(),
        seq,
        created_at,
        stage: Stage::Consent,
        task1: None,
        task2: None,
    };
    c.state
        .sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(token.clone(), std::sync::Arc::new(tokio::sync::Mutex::new(session)));
    log::info!("session {token} opened for {}", req.story_id);
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_token: token,
            story_id: req.story_id,
            stage: Stage::Consent,
            characters: story.registry.names().map(str::to_string).collect(),
        }),
    ))
}

fn unknown_token() -> ApiError {
    ApiError::new(StatusCode::UNAUTHORIZED, "unknown_token", "no session with this token")
}

async fn session_status(
    State(c): State<Collector>,
    Path(token): Path<String>,
) -> Result<Json<SessionStatus>, ApiError> {
    let session = c.session(&token).ok_or_else(unknown_token)?;
    let s = session.lock().await;
    Ok(Json(SessionStatus {
        session_token: s.token.clone(),
        story_id: s.story_id.clone(),
        stage: s.stage,
        created_at: s.created_at,
    }))
}

fn whole_steps(
    values: impl Iterator<Item = f64>,
    list: &str,
    key: &str,
) -> Result<(), ApiError> {
    for (i, v) in values.enumerate() {
        if v.is_finite() && v.fract() != 0.0 {
            return Err(ApiError::validation(
                Some(format!("{list}[{i}].{key}")),
                format!("{v} is not a whole step"),
            ));
        }
    }
    Ok(())
}

/// Validated journal record plus any contact address split off the profile.
fn validate_page(
    stage: Stage,
    body: &[u8],
    session: &Session,
    registry: &charnet_core::corpus::CharacterRegistry,
) -> Result<(JournalRecord, Option<String>), ApiError> {
    let token = session.token.clone();
    let id = RespondentId::new(token.clone())
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let story = session.story_id.as_str();
    match stage {
        Stage::Consent => {
            let p: ConsentPayload = parse(body)?;
            if !p.agreed {
                return Err(ApiError::validation(Some("agreed".into()), "consent is required"));
            }
            Ok((JournalRecord::Consent { token }, None))
        }
        Stage::Task1 => {
            let p: Task1Payload = parse(body)?;
            whole_steps(p.entries.iter().map(|e| e.importance), "entries", "importance")?;
            Task1Response::from_records(id, story, &p.entries, Some(registry))
                .map_err(|e| ApiError::survey("entries", &e))?;
            Ok((JournalRecord::Task1 { token, entries: p.entries }, None))
        }
        Stage::Task2 => {
            let p: Task2Payload = parse(body)?;
            whole_steps(p.cells.iter().map(|c| c.value), "cells", "value")?;
            Task2Response::from_records(id, story, &p.cells, Some(registry))
                .map_err(|e| ApiError::survey("cells", &e))?;
            Ok((JournalRecord::Task2 { token, cells: p.cells }, None))
        }
        Stage::Profile => {
            let mut p: ProfileRecord = parse(body)?;
            RespondentProfile::from_record(id, &p).map_err(|e| ApiError::survey("", &e))?;
            let email = p.contact_email.take();
            Ok((JournalRecord::Profile { token, profile: p }, email))
        }
        Stage::Done => unreachable!("done is not submittable"),
    }
}

async fn submit_stage(
    State(c): State<Collector>,
    Path((token, stage)): Path<(String, String)>,
    body: Bytes,
) -> Result<Json<StageAccepted>, ApiError> {
    let stage = Stage::parse_submittable(&stage).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_stage", format!("no stage `{stage}`"))
    })?;
    let session = c.session(&token).ok_or_else(unknown_token)?;
    let mut s = session.lock().await;
    if s.stage != stage {
        let mut e = ApiError::new(
            StatusCode::CONFLICT,
            "stage_conflict",
            format!("session is at stage `{}`, not `{stage}`", s.stage),
        );
        e.body.stage = Some(s.stage);
        return Err(e);
    }
    let story = c.story(&s.story_id).expect("sessions only exist for configured stories");
    let (record, email) = validate_page(stage, &body, &s, &story.registry)?;
    if let Some(email) = email {
        append(&story.contacts, ContactRecord { token: token.clone(), email })
            .await
            .map_err(ApiError::storage)?;
    }
    append(&story.journal, record.clone()).await.map_err(ApiError::storage)?;
    if let Some(done) = s.apply(&record) {
        story
            .completed
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(s.seq, done);
        log::info!("session {token} completed");
    }
    Ok(Json(StageAccepted {
        session_token: token,
        accepted: stage,
        stage: s.stage,
    }))
}

/// Completed respondents in creation order, in the survey import format.
async fn export(State(c): State<Collector>, Path(story_id): Path<String>) -> Result<Response, ApiError> {
    let set = match c.story(&story_id) {
        None => ResponseSet {
            story_id,
            respondents: Vec::new(),
        },
        Some(story) => {
            let bundle = ResponseBundle {
                format: BUNDLE_FORMAT.to_string(),
                version: BUNDLE_VERSION,
                story_id,
                respondents: story
                    .completed
                    .read()
                    .unwrap_or_else(|e| e.into_inner())
                    .values()
                    .cloned()
                    .collect(),
            };
            ResponseSet::from_bundle(&bundle, Some(&story.registry))
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
                .without_contacts()
        }
    };
    Ok(([(header::CONTENT_TYPE, "application/json")], set.to_json()).into_response())
}

async fn characters(
    State(c): State<Collector>,
    Path(story_id): Path<String>,
) -> Result<Json<CharacterList>, ApiError> {
    let story = c.story(&story_id).ok_or_else(|| ApiError::unknown_story(&story_id))?;
    Ok(Json(CharacterList {
        characters: story.registry.names().map(str::to_string).collect(),
        story_id,
    }))
}

async fn schema() -> Json<Schema> {
    Json(Schema {
        version: BUNDLE_VERSION,
        stages: Stage::ALL.to_vec(),
        task1_importance: Bounds {
            min: TASK1_MIN,
            max: SCALE_MAX,
            step: 1.0,
        },
        task2_value: Bounds {
            min: TASK2_MIN,
            max: SCALE_MAX,
            step: 1.0,
        },
        age: Bounds {
            min: 1.0,
            max: 130.0,
            step: 1.0,
        },
        genders: vec![Gender::Female, Gender::Male, Gender::NonBinary, Gender::Undisclosed],
        education_levels: vec![
            EducationLevel::Secondary,
            EducationLevel::Undergraduate,
            EducationLevel::Postgraduate,
            EducationLevel::Doctoral,
        ],
        academic_backgrounds: vec![
            AcademicBackground::ArtsHumanities,
            AcademicBackground::SocialScience,
            AcademicBackground::ScienceMedical,
            AcademicBackground::Other,
        ],
    })
}

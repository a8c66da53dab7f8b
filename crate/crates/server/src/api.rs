//! HTTP/JSON surface over the clinic engine.
//!
//! Sessions travel in the `X-Session-Token` header. Errors are always a JSON
//! body `{status, code, message}`; timestamps are RFC 3339, durations are
//! integer minutes.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Path, Request, State};
use axum::http::request::Parts;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use wavesched_core::clinic::{Clinic, Clock, MAX_QUERY_DAYS};
use wavesched_core::ids::{AppointmentId, DoctorId, PatientId, RequestId, SlotId, SpecialtyId, TicketId};
use wavesched_core::records::VisitSummary;
use wavesched_core::registry::Principal;
use wavesched_core::requests::{AppointmentRequest, PriorityClass, RequestFilter};
use wavesched_core::slots::SlotView;
use wavesched_core::SchedError;

pub const SESSION_HEADER: &str = "x-session-token";

#[derive(Clone)]
pub struct AppState {
    pub clinic: Arc<Clinic>,
    pub clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(clinic: Arc<Clinic>, clock: Arc<dyn Clock>) -> Self {
        Self { clinic, clock }
    }

    fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn principal(&self, headers: &HeaderMap) -> Result<Principal, ApiError> {
        let token = headers
            .get(SESSION_HEADER)
            .and_then(|v| v.to_str().ok())
            .ok_or(SchedError::Unauthenticated)?;
        Ok(self.clinic.session(token, self.now())?)
    }

    fn patient(&self, headers: &HeaderMap) -> Result<PatientId, ApiError> {
        match self.principal(headers)? {
            Principal::Patient(p) => Ok(p),
            Principal::Doctor(_) => Err(SchedError::Forbidden.into()),
        }
    }

    fn doctor(&self, headers: &HeaderMap) -> Result<DoctorId, ApiError> {
        match self.principal(headers)? {
            Principal::Doctor(d) => Ok(d),
            Principal::Patient(_) => Err(SchedError::Forbidden.into()),
        }
    }
}

// ---- errors

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub status: u16,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "VALIDATION", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", message)
    }
}

/// Status and stable machine code for every engine error.
pub fn error_code(e: &SchedError) -> (StatusCode, &'static str) {
    use SchedError::*;
    match e {
        UnknownDoctor(_) => (StatusCode::NOT_FOUND, "UNKNOWN_DOCTOR"),
        UnknownSpecialty(_) => (StatusCode::NOT_FOUND, "UNKNOWN_SPECIALTY"),
        UnknownSlot(_) => (StatusCode::NOT_FOUND, "UNKNOWN_SLOT"),
        UnknownTicket(_) => (StatusCode::NOT_FOUND, "UNKNOWN_TICKET"),
        UnknownAppointment(_) => (StatusCode::NOT_FOUND, "UNKNOWN_APPOINTMENT"),
        UnknownPatient(_) => (StatusCode::NOT_FOUND, "UNKNOWN_PATIENT"),
        UnknownRequest(_) => (StatusCode::NOT_FOUND, "UNKNOWN_REQUEST"),
        SlotTaken(_) => (StatusCode::CONFLICT, "SLOT_TAKEN"),
        SlotExpired(_) => (StatusCode::CONFLICT, "SLOT_EXPIRED"),
        SlotRetired(_) => (StatusCode::CONFLICT, "SLOT_RETIRED"),
        AlreadyStarted(_) => (StatusCode::CONFLICT, "ALREADY_STARTED"),
        RequestNotPending(_) => (StatusCode::CONFLICT, "REQUEST_NOT_PENDING"),
        UsernameTaken => (StatusCode::CONFLICT, "USERNAME_TAKEN"),
        HoldExpired(_) => (StatusCode::GONE, "HOLD_EXPIRED"),
        NotTicketHolder(_) => (StatusCode::FORBIDDEN, "NOT_TICKET_HOLDER"),
        Forbidden => (StatusCode::FORBIDDEN, "FORBIDDEN"),
        InvalidCredentials => (StatusCode::UNAUTHORIZED, "INVALID_CREDENTIALS"),
        Unauthenticated => (StatusCode::UNAUTHORIZED, "UNAUTHENTICATED"),
        MisalignedHours(_) => (StatusCode::UNPROCESSABLE_ENTITY, "MISALIGNED_HOURS"),
        InvalidTemplate(_) => (StatusCode::UNPROCESSABLE_ENTITY, "INVALID_TEMPLATE"),
        WindowInPast => (StatusCode::UNPROCESSABLE_ENTITY, "WINDOW_IN_PAST"),
        InvalidWindow(_) => (StatusCode::UNPROCESSABLE_ENTITY, "INVALID_WINDOW"),
        InvalidFilter(_) => (StatusCode::UNPROCESSABLE_ENTITY, "INVALID_FILTER"),
        SlotNotAvailable(_) => (StatusCode::UNPROCESSABLE_ENTITY, "SLOT_NOT_AVAILABLE"),
        WeakCredential { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "WEAK_CREDENTIAL"),
        Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "VALIDATION"),
        Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "STORAGE"),
    }
}

impl From<SchedError> for ApiError {
    fn from(e: SchedError) -> Self {
        let (status, code) = error_code(&e);
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            status: self.status.as_u16(),
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

// ---- extractors that report failures as ApiError

pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(e.status(), "BAD_BODY", e.body_text()))?;
        serde_json::from_slice(&bytes)
            .map(JsonBody)
            .map_err(|e| ApiError::validation(format!("invalid JSON body: {e}")))
    }
}

pub struct QueryArgs<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for QueryArgs<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, ApiError> {
        axum::extract::Query::<T>::try_from_uri(&parts.uri)
            .map(|axum::extract::Query(t)| QueryArgs(t))
            .map_err(|e| ApiError::validation(e.body_text()))
    }
}

fn numeric_id(raw: &str, what: &str) -> Result<u64, ApiError> {
    raw.parse().map_err(|_| ApiError::not_found(format!("unknown {what} {raw:?}")))
}

// ---- route table

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RouteInfo {
    pub method: &'static str,
    pub path: &'static str,
    /// `none`, `session`, `patient` or `doctor`.
    pub auth: &'static str,
    pub summary: &'static str,
}

const fn route(method: &'static str, path: &'static str, auth: &'static str, summary: &'static str) -> RouteInfo {
    RouteInfo { method, path, auth, summary }
}

pub const ROUTES: &[RouteInfo] = &[
    route("GET", "/routes", "none", "this listing"),
    route("POST", "/signup", "none", "register a patient account"),
    route("POST", "/login", "none", "exchange credentials for a session token"),
    route("GET", "/specialties", "none", "specialties with doctor counts"),
    route("GET", "/doctors", "none", "doctors, optionally ?specialty="),
    route("GET", "/doctors/{id}/schedule", "none", "bookable slots of one day, ?date=YYYY-MM-DD"),
    route("GET", "/doctors/{id}/slots", "none", "bookable slots in ?from=&to= (RFC 3339)"),
    route("POST", "/doctors/{id}/postpone", "doctor", "release bookings in a window {from, to}"),
    route("POST", "/slots/{id}/hold", "patient", "place a time-limited hold"),
    route("POST", "/holds/{id}/confirm", "patient", "confirm a live hold into an appointment"),
    route("DELETE", "/appointments/{id}", "patient", "cancel an appointment"),
    route("POST", "/appointments/{id}/history", "doctor", "record a visit summary"),
    route("POST", "/requests", "patient", "queue a request {filter, priority}"),
    route("GET", "/requests/{id}", "session", "request status and current candidates"),
    route("DELETE", "/requests/{id}", "patient", "withdraw a request"),
    route("GET", "/patients/{id}/appointments", "session", "a patient's appointments"),
    route("GET", "/patients/{id}/history", "session", "a patient's visit history"),
    route("GET", "/patients/{id}/notifications", "patient", "a patient's inbox"),
];

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/routes", get(routes))
        .route("/signup", post(signup))
        .route("/login", post(login))
        .route("/specialties", get(specialties))
        .route("/doctors", get(doctors))
        .route("/doctors/{id}/schedule", get(schedule))
        .route("/doctors/{id}/slots", get(slots))
        .route("/doctors/{id}/postpone", post(postpone))
        .route("/slots/{id}/hold", post(hold))
        .route("/holds/{id}/confirm", post(confirm))
        .route("/appointments/{id}", delete(cancel))
        .route("/appointments/{id}/history", post(record_history))
        .route("/requests", post(submit_request))
        .route("/requests/{id}", get(get_request).delete(withdraw_request))
        .route("/patients/{id}/appointments", get(patient_appointments))
        .route("/patients/{id}/history", get(history))
        .route("/patients/{id}/notifications", get(notifications))
        .fallback(|| async { ApiError::not_found("no such route") })
        .with_state(state)
}

async fn routes() -> Json<&'static [RouteInfo]> {
    Json(ROUTES)
}

// ---- accounts

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Credentials {
    username: String,
    password: String,
}

#[derive(Debug, Serialize)]
struct SignupResponse {
    patient_id: PatientId,
    username: String,
}

async fn signup(State(st): State<AppState>, JsonBody(c): JsonBody<Credentials>) -> Result<Response, ApiError> {
    let now = st.now();
    let clinic = st.clinic.clone();
    let username = c.username.clone();
    // password hashing is deliberately slow; keep it off the reactor
    let patient_id = tokio::task::spawn_blocking(move || clinic.register_user(&c.username, &c.password, now))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))??;
    Ok((StatusCode::CREATED, Json(SignupResponse { patient_id, username })).into_response())
}

async fn login(State(st): State<AppState>, JsonBody(c): JsonBody<Credentials>) -> Result<Response, ApiError> {
    let now = st.now();
    let clinic = st.clinic.clone();
    let session = tokio::task::spawn_blocking(move || clinic.authenticate(&c.username, &c.password, now))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))??;
    Ok(Json(session).into_response())
}

// ---- catalogue and availability

async fn specialties(State(st): State<AppState>) -> Json<Vec<wavesched_core::registry::SpecialtySummary>> {
    Json(st.clinic.list_specialties())
}

#[derive(Debug, Deserialize)]
struct DoctorsQuery {
    specialty: Option<String>,
}

async fn doctors(
    State(st): State<AppState>,
    QueryArgs(q): QueryArgs<DoctorsQuery>,
) -> ApiResult<Vec<wavesched_core::records::DoctorRecord>> {
    let specialty = q.specialty.map(SpecialtyId);
    Ok(Json(st.clinic.list_doctors(specialty.as_ref())?))
}

#[derive(Debug, Deserialize)]
struct ScheduleQuery {
    date: Option<NaiveDate>,
}

async fn schedule(
    State(st): State<AppState>,
    Path(id): Path<String>,
    QueryArgs(q): QueryArgs<ScheduleQuery>,
) -> ApiResult<wavesched_core::clinic::ScheduleView> {
    let now = st.now();
    let date = q.date.unwrap_or_else(|| now.date_naive());
    Ok(Json(st.clinic.get_doctor_schedule(&DoctorId(id), date, now)?))
}

#[derive(Debug, Deserialize)]
struct SlotsQuery {
    from: Option<DateTime<Utc>>,
    to: Option<DateTime<Utc>>,
}

async fn slots(
    State(st): State<AppState>,
    Path(id): Path<String>,
    QueryArgs(q): QueryArgs<SlotsQuery>,
) -> ApiResult<Vec<SlotView>> {
    let now = st.now();
    let from = q.from.unwrap_or(now);
    let to = q.to.unwrap_or(from + Duration::days(7));
    if to <= from {
        return Err(ApiError::validation("`to` must be after `from`"));
    }
    if to - from > Duration::days(MAX_QUERY_DAYS) {
        return Err(ApiError::validation(format!("range may span at most {MAX_QUERY_DAYS} days")));
    }
    let slots = st.clinic.establish_available(&DoctorId(id), from, to, now)?;
    Ok(Json(slots.iter().map(|s| s.view()).collect()))
}

// ---- booking

async fn hold(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<wavesched_core::slots::HoldTicket> {
    let patient = st.patient(&headers)?;
    Ok(Json(st.clinic.hold_slot(&SlotId(id), patient, st.now())?))
}

async fn confirm(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<wavesched_core::records::Appointment> {
    let patient = st.patient(&headers)?;
    let ticket = TicketId(numeric_id(&id, "hold ticket")?);
    Ok(Json(st.clinic.confirm_hold(ticket, Some(patient), st.now())?))
}

async fn cancel(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<wavesched_core::clinic::CancelOutcome> {
    let patient = st.patient(&headers)?;
    let id = AppointmentId(numeric_id(&id, "appointment")?);
    Ok(Json(st.clinic.cancel_appointment(id, Some(patient), st.now())?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PostponeBody {
    from: DateTime<Utc>,
    to: DateTime<Utc>,
}

async fn postpone(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    JsonBody(body): JsonBody<PostponeBody>,
) -> ApiResult<wavesched_core::clinic::PostponeReport> {
    let doctor = st.doctor(&headers)?;
    if doctor.0 != id {
        return Err(SchedError::Forbidden.into());
    }
    Ok(Json(st.clinic.postpone_doctor(&doctor, body.from, body.to, st.now())?))
}

async fn record_history(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    JsonBody(summary): JsonBody<VisitSummary>,
) -> ApiResult<wavesched_core::records::HistoryEntry> {
    let doctor = st.doctor(&headers)?;
    let id = AppointmentId(numeric_id(&id, "appointment")?);
    if st.clinic.appointment(id)?.doctor_id != doctor {
        return Err(SchedError::Forbidden.into());
    }
    Ok(Json(st.clinic.record_history(id, summary, st.now())?))
}

// ---- requests

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestBody {
    filter: RequestFilter,
    #[serde(default = "routine")]
    priority: PriorityClass,
}

fn routine() -> PriorityClass {
    PriorityClass::Routine
}

#[derive(Debug, Serialize)]
struct RequestResponse {
    request: AppointmentRequest,
    /// Bookable slots matching the filter right now; empty unless pending.
    candidates: Vec<SlotView>,
}

fn request_response(st: &AppState, id: RequestId) -> Result<RequestResponse, ApiError> {
    let request = st.clinic.request(id)?;
    let candidates = match st.clinic.resolve_request(id, st.now()) {
        Ok(slots) => slots.iter().map(|s| s.view()).collect(),
        Err(SchedError::RequestNotPending(_)) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    Ok(RequestResponse { request, candidates })
}

async fn submit_request(
    State(st): State<AppState>,
    headers: HeaderMap,
    JsonBody(body): JsonBody<RequestBody>,
) -> Result<Response, ApiError> {
    let patient = st.patient(&headers)?;
    let id = st.clinic.submit_request(patient, body.filter, body.priority, st.now())?;
    Ok((StatusCode::CREATED, Json(request_response(&st, id)?)).into_response())
}

async fn get_request(State(st): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<RequestResponse> {
    let principal = st.principal(&headers)?;
    let id = RequestId(numeric_id(&id, "request")?);
    let req = st.clinic.request(id)?;
    if matches!(principal, Principal::Patient(p) if p != req.patient_id) {
        return Err(SchedError::Forbidden.into());
    }
    Ok(Json(request_response(&st, id)?))
}

async fn withdraw_request(State(st): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let patient = st.patient(&headers)?;
    let id = RequestId(numeric_id(&id, "request")?);
    st.clinic.withdraw_request(id, Some(patient))?;
    Ok(StatusCode::NO_CONTENT)
}

// ---- patient views

/// Patients see only themselves; doctors see any patient.
fn patient_view(st: &AppState, headers: &HeaderMap, raw: &str) -> Result<PatientId, ApiError> {
    let id = PatientId(numeric_id(raw, "patient")?);
    match st.principal(headers)? {
        Principal::Patient(p) if p != id => Err(SchedError::Forbidden.into()),
        _ => Ok(id),
    }
}

async fn patient_appointments(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Vec<wavesched_core::records::Appointment>> {
    let id = patient_view(&st, &headers, &id)?;
    Ok(Json(st.clinic.patient_appointments(id)?))
}

async fn history(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Vec<wavesched_core::records::HistoryEntry>> {
    let id = patient_view(&st, &headers, &id)?;
    Ok(Json(st.clinic.fetch_history(id)?))
}

async fn notifications(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Vec<wavesched_core::notifications::Notification>> {
    let patient = st.patient(&headers)?;
    if PatientId(numeric_id(&id, "patient")?) != patient {
        return Err(SchedError::Forbidden.into());
    }
    Ok(Json(st.clinic.inbox(patient, st.now())?))
}

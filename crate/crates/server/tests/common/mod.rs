#![allow(dead_code)]

use std::sync::Arc;

use chrono::{DateTime, NaiveDate, TimeZone, Utc, Weekday};
use reqwest::{Client, Method, StatusCode};
use serde_json::{json, Value};
use wavesched_core::clinic::{Clinic, ClinicConfig, ManualClock};
use wavesched_core::ids::{DoctorId, SpecialtyId};
use wavesched_core::records::{DoctorRecord, Specialty};
use wavesched_core::registry::CredentialParams;
use wavesched_core::template::WeeklyHours;
use wavesched_server::api::{router, AppState, SESSION_HEADER};

// 2026-10-20 is a Tuesday
pub fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2026, 10, 20).unwrap()
}

pub fn at(h: u32, m: u32) -> DateTime<Utc> {
    Utc.from_utc_datetime(&day().and_hms_opt(h, m, 0).unwrap())
}

pub struct Harness {
    pub base: String,
    pub clinic: Arc<Clinic>,
    pub clock: Arc<ManualClock>,
    pub http: Client,
}

/// One doctor `d1` (obstetrics) working Tuesdays `hours`, a doctor login
/// `d1`/`doctor-pass`, and the clock at 07:00 on the test day.
pub async fn start(hours: (u32, u32)) -> Harness {
    let clinic = Arc::new(
        Clinic::new(ClinicConfig {
            credentials: CredentialParams::fast(),
            ..Default::default()
        })
        .unwrap(),
    );
    clinic
        .upsert_specialty(Specialty { specialty_id: SpecialtyId::new("obstetrics"), name: "Obstetrics".into() })
        .unwrap();
    for id in ["d1", "d2"] {
        clinic
            .upsert_doctor(DoctorRecord {
                doctor_id: DoctorId::new(id),
                name: format!("Dr {id}"),
                specialty_id: SpecialtyId::new("obstetrics"),
                working_hours: vec![WeeklyHours { weekday: Weekday::Tue, start_hour: hours.0, end_hour: hours.1 }],
                on_duty: true,
            })
            .unwrap();
        clinic.register_doctor_login(&DoctorId::new(id), id, "doctor-pass").unwrap();
    }
    let clock = Arc::new(ManualClock::new(at(7, 0)));
    let app = router(AppState::new(clinic.clone(), clock.clone()));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Harness { base, clinic, clock, http: Client::new() }
}

impl Harness {
    pub async fn call(&self, method: Method, path: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header(SESSION_HEADER, t);
        }
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        let text = resp.text().await.unwrap();
        let value = if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap_or(Value::String(text)) };
        (status, value)
    }

    pub async fn get(&self, path: &str, token: Option<&str>) -> (StatusCode, Value) {
        self.call(Method::GET, path, token, None).await
    }

    pub async fn post(&self, path: &str, token: Option<&str>, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, path, token, Some(body)).await
    }

    /// Signs a patient up and logs in; returns (patient id, token).
    pub async fn patient(&self, name: &str) -> (u64, String) {
        let (s, v) = self.post("/signup", None, json!({"username": name, "password": "patient-pass"})).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        let id = v["patient_id"].as_u64().unwrap();
        (id, self.login(name, "patient-pass").await)
    }

    pub async fn login(&self, name: &str, password: &str) -> String {
        let (s, v) = self.post("/login", None, json!({"username": name, "password": password})).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v["token"].as_str().unwrap().to_owned()
    }

    pub async fn free_slots(&self, doctor: &str) -> Vec<Value> {
        let (s, v) = self
            .get(&format!("/doctors/{doctor}/slots?from=2026-10-20T00:00:00Z&to=2026-10-21T00:00:00Z"), None)
            .await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v.as_array().unwrap().clone()
    }
}

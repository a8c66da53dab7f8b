use std::sync::Arc;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use chrono::{Duration, NaiveDate, TimeZone, Utc};
use serde_json::Value;
use tokio::sync::Mutex;
use wavesched_core::clinic::{Clinic, ClinicConfig};
use wavesched_core::ids::{DoctorId, SpecialtyId};
use wavesched_core::records::DoctorRecord;
use wavesched_core::registry::CredentialParams;
use wavesched_core::template::WeeklyHours;
use wavesched_server::webhook::WebhookSink;

type Received = Arc<Mutex<Vec<Value>>>;

async fn receiver() -> (String, Received) {
    let got: Received = Arc::default();
    let app = Router::new()
        .route(
            "/hook",
            post(|State(got): State<Received>, Json(v): Json<Value>| async move {
                got.lock().await.push(v);
            }),
        )
        .with_state(got.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}/hook", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (url, got)
}

/// A clinic with one appointment booked three days ahead of a Tuesday 08:00
/// visit; returns the clinic, the patient id, the slot id and that midnight.
fn booked() -> (Clinic, u64, String, chrono::DateTime<Utc>) {
    let clinic = Clinic::new(ClinicConfig { credentials: CredentialParams::fast(), ..Default::default() }).unwrap();
    clinic
        .upsert_doctor(DoctorRecord {
            doctor_id: DoctorId::new("d1"),
            name: "Dr One".into(),
            specialty_id: SpecialtyId::new("obstetrics"),
            working_hours: vec![WeeklyHours { weekday: chrono::Weekday::Tue, start_hour: 8, end_hour: 9 }],
            on_duty: true,
        })
        .unwrap();
    let day = NaiveDate::from_ymd_opt(2026, 10, 20).unwrap();
    let midnight = Utc.from_utc_datetime(&day.and_hms_opt(0, 0, 0).unwrap());
    let booked_at = midnight - Duration::days(3);
    let p = clinic.register_user("alice", "patient-pass", booked_at).unwrap();
    let slot = clinic
        .establish_available(&DoctorId::new("d1"), midnight, midnight + Duration::days(1), booked_at)
        .unwrap()[0]
        .slot_id
        .clone();
    let t = clinic.hold_slot(&slot, p, booked_at).unwrap();
    clinic.confirm_hold(t.ticket_id, Some(p), booked_at).unwrap();
    (clinic, p.0, slot.0, midnight)
}

#[tokio::test]
async fn posts_wire_shape() {
    let (url, got) = receiver().await;
    let (clinic, patient, slot, midnight) = booked();
    let mut hook = WebhookSink::default();
    let failures = clinic.dispatch(midnight + Duration::hours(7), &mut [&mut hook]);
    assert!(failures.is_empty());
    let failures = hook.flush(&reqwest::Client::new(), &url).await;
    assert!(failures.is_empty(), "{failures:?}");

    let got = got.lock().await;
    assert_eq!(got.len(), 2);
    for v in got.iter() {
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["due_at", "id", "kind", "payload", "recipient"]);
        assert_eq!(v["kind"], "reminder");
        assert_eq!(v["recipient"], patient);
        assert_eq!(v["payload"]["slot_id"], slot.as_str());
    }
    assert_eq!(got[0]["due_at"], "2026-10-19T08:00:00Z");
    assert_eq!(got[1]["due_at"], "2026-10-20T07:00:00Z");
    // nothing is delivered twice
    assert!(clinic.dispatch(midnight + Duration::hours(7), &mut [&mut hook]).is_empty());
    assert!(hook.take().is_empty());
}

#[tokio::test]
async fn unreachable_hook_reports_failures() {
    let (clinic, _, _, midnight) = booked();
    let mut hook = WebhookSink::default();
    clinic.dispatch(midnight + Duration::hours(7), &mut [&mut hook]);
    let failures = hook.flush(&reqwest::Client::new(), "http://127.0.0.1:9/hook").await;
    assert_eq!(failures.len(), 2);
}

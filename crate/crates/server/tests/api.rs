mod common;

use chrono::Duration;
use common::{at, start};
use reqwest::{Method, StatusCode};
use serde_json::{json, Value};
use wavesched_core::ids::DoctorId;
use wavesched_server::api::ROUTES;

#[tokio::test]
async fn hold_then_confirm_books() {
    let h = start((8, 9)).await;
    let (pid, token) = h.patient("alice").await;
    let slots = h.free_slots("d1").await;
    assert_eq!(slots.len(), 6);
    let slot = slots[0]["slot_id"].as_str().unwrap();

    let (s, ticket) = h.post(&format!("/slots/{slot}/hold"), Some(&token), json!({})).await;
    assert_eq!(s, StatusCode::OK, "{ticket}");
    assert_eq!(ticket["expires_at"], "2026-10-20T07:02:00Z");
    let (s, appt) = h
        .post(&format!("/holds/{}/confirm", ticket["ticket_id"]), Some(&token), json!({}))
        .await;
    assert_eq!(s, StatusCode::OK, "{appt}");
    assert_eq!(appt["patient_id"], pid);
    assert_eq!(appt["slot_id"], slot);
    assert_eq!(appt["state"], "active");
    assert_eq!(appt["duration"], 10);
    assert_eq!(h.free_slots("d1").await.len(), 5);

    let (s, mine) = h.get(&format!("/patients/{pid}/appointments"), Some(&token)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(mine.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn confirm_after_ttl_is_gone_and_slot_returns() {
    let h = start((8, 9)).await;
    let (_, token) = h.patient("alice").await;
    let slot = h.free_slots("d1").await[2]["slot_id"].as_str().unwrap().to_owned();
    let (_, ticket) = h.post(&format!("/slots/{slot}/hold"), Some(&token), json!({})).await;
    assert!(h.free_slots("d1").await.iter().all(|s| s["slot_id"] != slot.as_str()));

    h.clock.advance(Duration::seconds(121));
    let (s, err) = h
        .post(&format!("/holds/{}/confirm", ticket["ticket_id"]), Some(&token), json!({}))
        .await;
    assert_eq!(s, StatusCode::GONE);
    assert_eq!(err["code"], "HOLD_EXPIRED");
    assert!(h.free_slots("d1").await.iter().any(|s| s["slot_id"] == slot.as_str()));
}

#[tokio::test]
async fn racing_holds_one_wins() {
    let h = start((8, 9)).await;
    let (_, a) = h.patient("alice").await;
    let (_, b) = h.patient("bob").await;
    for slot in h.free_slots("d1").await {
        let path = format!("/slots/{}/hold", slot["slot_id"].as_str().unwrap());
        let (ra, rb) = tokio::join!(h.post(&path, Some(&a), json!({})), h.post(&path, Some(&b), json!({})));
        let mut codes = [ra.0.as_u16(), rb.0.as_u16()];
        codes.sort();
        assert_eq!(codes, [200, 409]);
        let loser = if ra.0 == StatusCode::CONFLICT { ra.1 } else { rb.1 };
        assert_eq!(loser["code"], "SLOT_TAKEN");
    }
    h.clinic.check_invariants().unwrap();
}

#[tokio::test]
async fn auth_and_roles() {
    let h = start((8, 9)).await;
    let (pid, patient) = h.patient("alice").await;
    let (_, other) = h.patient("bob").await;
    let doctor = h.login("d1", "doctor-pass").await;
    let slot = h.free_slots("d1").await[0]["slot_id"].as_str().unwrap().to_owned();

    let (s, v) = h.post(&format!("/slots/{slot}/hold"), None, json!({})).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::UNAUTHORIZED, Some("UNAUTHENTICATED")));
    let (s, _) = h.post(&format!("/slots/{slot}/hold"), Some("bogus"), json!({})).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = h.post(&format!("/slots/{slot}/hold"), Some(&doctor), json!({})).await;
    assert_eq!(s, StatusCode::FORBIDDEN);

    let window = json!({"from": "2026-10-20T08:00:00Z", "to": "2026-10-20T09:00:00Z"});
    let (s, _) = h.post("/doctors/d1/postpone", Some(&patient), window.clone()).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, _) = h.post("/doctors/d2/postpone", Some(&doctor), window.clone()).await;
    assert_eq!(s, StatusCode::FORBIDDEN);

    let (s, _) = h.get(&format!("/patients/{pid}/notifications"), Some(&other)).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, _) = h.get(&format!("/patients/{pid}/history"), Some(&other)).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, _) = h.get(&format!("/patients/{pid}/history"), Some(&doctor)).await;
    assert_eq!(s, StatusCode::OK);

    let (s, v) = h.post("/login", None, json!({"username": "alice", "password": "wrong-pass"})).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::UNAUTHORIZED, Some("INVALID_CREDENTIALS")));
    let (s, v) = h.post("/login", None, json!({"username": "nobody", "password": "wrong-pass"})).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::UNAUTHORIZED, Some("INVALID_CREDENTIALS")));
    let (s, v) = h.post("/signup", None, json!({"username": "alice", "password": "patient-pass"})).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("USERNAME_TAKEN")));
    let (s, v) = h.post("/signup", None, json!({"username": "carol", "password": "short"})).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("WEAK_CREDENTIAL")));
}

#[tokio::test]
async fn unknown_entities_are_404() {
    let h = start((8, 9)).await;
    let (_, token) = h.patient("alice").await;
    for (path, code) in [
        ("/doctors/nobody/schedule?date=2026-10-20", "UNKNOWN_DOCTOR"),
        ("/doctors/nobody/slots", "UNKNOWN_DOCTOR"),
        ("/doctors?specialty=surgery", "UNKNOWN_SPECIALTY"),
        ("/requests/99", "UNKNOWN_REQUEST"),
        ("/no/such/route", "NOT_FOUND"),
    ] {
        let (s, v) = h.get(path, Some(&token)).await;
        assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some(code)), "{path}");
    }
    let (s, v) = h.post("/slots/d1@209901010800-0/hold", Some(&token), json!({})).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("UNKNOWN_SLOT")));
    let (s, _) = h.post("/holds/abc/confirm", Some(&token), json!({})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h.call(Method::DELETE, "/appointments/41", Some(&token), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_input_never_5xx() {
    let h = start((8, 9)).await;
    let (pid, patient) = h.patient("alice").await;
    let doctor = h.login("d1", "doctor-pass").await;
    let bodies: Vec<Option<&str>> = vec![
        None,
        Some(""),
        Some("{"),
        Some("[]"),
        Some("null"),
        Some("42"),
        Some(r#"{"username": 5}"#),
        Some(r#"{"filter": {"target": {"by_day": "yesterday"}}}"#),
        Some(r#"{"filter": {"target": {"by_doctor": "d1"}}, "priority": "vip"}"#),
        Some(r#"{"from": "soon", "to": "later"}"#),
        Some(r#"{"from": "2026-10-20T09:00:00Z", "to": "2026-10-20T08:00:00Z"}"#),
        Some(r#"{"unexpected": true}"#),
        Some("\u{0}\u{1}garbage"),
    ];
    let targets = [
        (Method::POST, "/signup".to_owned(), None),
        (Method::POST, "/login".to_owned(), None),
        (Method::POST, "/requests".to_owned(), Some(&patient)),
        (Method::POST, "/doctors/d1/postpone".to_owned(), Some(&doctor)),
        (Method::POST, "/appointments/1/history".to_owned(), Some(&doctor)),
        (Method::GET, "/doctors/d1/slots?from=garbage".to_owned(), None),
        (Method::GET, "/doctors/d1/slots?from=2026-10-20T00:00:00Z&to=2027-10-20T00:00:00Z".to_owned(), None),
        (Method::GET, "/doctors/d1/schedule?date=31-12-2026".to_owned(), None),
        (Method::GET, format!("/patients/{pid}/notifications"), Some(&patient)),
    ];
    for (method, path, token) in &targets {
        for body in &bodies {
            let mut req = h.http.request(method.clone(), format!("{}{path}", h.base));
            if let Some(t) = token {
                req = req.header("x-session-token", t.as_str());
            }
            if let Some(b) = body {
                req = req.header("content-type", "application/json").body(b.to_string());
            }
            let resp = req.send().await.unwrap();
            let status = resp.status();
            assert!(!status.is_server_error(), "{method} {path} {body:?} -> {status}");
            if !status.is_success() {
                let v: Value = resp.json().await.unwrap();
                assert!(v["code"].is_string() && v["message"].is_string(), "{v}");
                assert_eq!(v["status"], status.as_u16());
            }
        }
    }
}

#[tokio::test]
async fn cancellation_reaches_other_patients() {
    let h = start((8, 9)).await;
    let (_, a) = h.patient("alice").await;
    let (b_id, b) = h.patient("bob").await;
    let slot = h.free_slots("d1").await[1]["slot_id"].as_str().unwrap().to_owned();
    let (_, t) = h.post(&format!("/slots/{slot}/hold"), Some(&a), json!({})).await;
    let (_, appt) = h.post(&format!("/holds/{}/confirm", t["ticket_id"]), Some(&a), json!({})).await;

    let (s, _) = h.call(Method::DELETE, &format!("/appointments/{}", appt["appointment_id"]), Some(&b), None).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, out) = h.call(Method::DELETE, &format!("/appointments/{}", appt["appointment_id"]), Some(&a), None).await;
    assert_eq!(s, StatusCode::OK, "{out}");
    assert_eq!(out["routing"]["broadcast"][0], slot.as_str());

    let (_, inbox) = h.get(&format!("/patients/{b_id}/notifications"), Some(&b)).await;
    let notice = inbox
        .as_array()
        .unwrap()
        .iter()
        .find(|n| n["kind"] == "slot_available")
        .expect("broadcast in inbox");
    assert_eq!(notice["recipient"], "broadcast");
    assert_eq!(notice["payload"]["slot_id"], slot.as_str());
    assert_eq!(notice["payload"]["cause"], "cancellation");

    let (_, t) = h.post(&format!("/slots/{slot}/hold"), Some(&b), json!({})).await;
    let (s, appt) = h.post(&format!("/holds/{}/confirm", t["ticket_id"]), Some(&b), json!({})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(appt["patient_id"], b_id);
}

#[tokio::test]
async fn postponement_offers_to_waiting_request() {
    let h = start((8, 10)).await;
    let (a_id, a) = h.patient("alice").await;
    let (b_id, b) = h.patient("bob").await;
    let doctor = h.login("d1", "doctor-pass").await;
    let slot = h.free_slots("d1").await[0]["slot_id"].as_str().unwrap().to_owned();
    let (_, t) = h.post(&format!("/slots/{slot}/hold"), Some(&a), json!({})).await;
    h.post(&format!("/holds/{}/confirm", t["ticket_id"]), Some(&a), json!({})).await;

    let (s, req) = h
        .post("/requests", Some(&b), json!({"filter": {"target": {"by_doctor": "d1"}}, "priority": "urgent"}))
        .await;
    assert_eq!(s, StatusCode::CREATED, "{req}");
    assert_eq!(req["request"]["status"], "pending");
    // 11 left today plus 12 next Tuesday, inside the 14-day horizon
    assert_eq!(req["candidates"].as_array().unwrap().len(), 23);

    let (s, report) = h
        .post("/doctors/d1/postpone", Some(&doctor), json!({"from": "2026-10-20T08:00:00Z", "to": "2026-10-20T08:30:00Z"}))
        .await;
    assert_eq!(s, StatusCode::OK, "{report}");
    assert_eq!(report["affected_patients"], json!([a_id]));
    assert_eq!(report["events"][0]["cause"], "postponement");
    let offer = &report["routing"]["offers"][0];
    assert_eq!(offer["patient_id"], b_id);

    let (_, inbox) = h.get(&format!("/patients/{a_id}/notifications"), Some(&a)).await;
    assert!(inbox.as_array().unwrap().iter().any(|n| n["kind"] == "postponement_notice"));
    let (_, inbox) = h.get(&format!("/patients/{b_id}/notifications"), Some(&b)).await;
    assert!(inbox.as_array().unwrap().iter().any(|n| n["kind"] == "offer_notice"));

    let (s, appt) = h.post(&format!("/holds/{}/confirm", offer["ticket_id"]), Some(&b), json!({})).await;
    assert_eq!(s, StatusCode::OK, "{appt}");
    let (_, req) = h.get(&format!("/requests/{}", req["request"]["request_id"]), Some(&b)).await;
    assert_eq!(req["request"]["status"], "fulfilled");

    let (s, v) = h
        .post("/doctors/d1/postpone", Some(&doctor), json!({"from": "2026-10-20T06:00:00Z", "to": "2026-10-20T06:30:00Z"}))
        .await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("WINDOW_IN_PAST")));
}

#[tokio::test]
async fn history_round_trip() {
    let h = start((8, 9)).await;
    let (pid, p) = h.patient("alice").await;
    let doctor = h.login("d1", "doctor-pass").await;
    let other_doctor = h.login("d2", "doctor-pass").await;
    let slot = h.free_slots("d1").await[0]["slot_id"].as_str().unwrap().to_owned();
    let (_, t) = h.post(&format!("/slots/{slot}/hold"), Some(&p), json!({})).await;
    let (_, appt) = h.post(&format!("/holds/{}/confirm", t["ticket_id"]), Some(&p), json!({})).await;
    let path = format!("/appointments/{}/history", appt["appointment_id"]);
    let summary = json!({"clinic": "Obstetrics", "complaint": "check-up", "next_steps": "return in 4 weeks"});
    let (s, _) = h.post(&path, Some(&other_doctor), summary.clone()).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, entry) = h.post(&path, Some(&doctor), summary).await;
    assert_eq!(s, StatusCode::OK, "{entry}");
    let (_, hist) = h.get(&format!("/patients/{pid}/history"), Some(&p)).await;
    assert_eq!(hist.as_array().unwrap().len(), 1);
    assert_eq!(hist[0]["next_steps"], "return in 4 weeks");
    assert_eq!(hist[0]["doctor_id"], "d1");
}

#[tokio::test]
async fn reads_mirror_engine_and_are_idempotent() {
    let h = start((8, 11)).await;
    let (_, p) = h.patient("alice").await;
    let slot = h.free_slots("d2").await[4]["slot_id"].as_str().unwrap().to_owned();
    let (_, t) = h.post(&format!("/slots/{slot}/hold"), Some(&p), json!({})).await;
    h.post(&format!("/holds/{}/confirm", t["ticket_id"]), Some(&p), json!({})).await;

    for doctor in ["d1", "d2"] {
        let api = h.free_slots(doctor).await;
        assert_eq!(api, h.free_slots(doctor).await);
        let engine = h
            .clinic
            .establish_available(&DoctorId::new(doctor), at(0, 0), at(0, 0) + Duration::days(1), at(7, 0))
            .unwrap();
        let engine: Vec<Value> = engine.iter().map(|s| serde_json::to_value(s.view()).unwrap()).collect();
        assert_eq!(api, engine);
    }
    let (_, sched) = h.get("/doctors/d2/schedule?date=2026-10-20", None).await;
    assert_eq!(sched, h.get("/doctors/d2/schedule?date=2026-10-20", None).await.1);
    assert_eq!(sched["slots"].as_array().unwrap().len(), 17);
    assert_eq!(sched["specialty_name"], "Obstetrics");

    let (_, specs) = h.get("/specialties", None).await;
    assert_eq!(specs, json!([{"specialty_id": "obstetrics", "name": "Obstetrics", "doctor_count": 2}]));
    let (_, docs) = h.get("/doctors?specialty=obstetrics", None).await;
    assert_eq!(docs.as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn route_listing_covers_router() {
    let h = start((8, 9)).await;
    let (s, v) = h.get("/routes", None).await;
    assert_eq!(s, StatusCode::OK);
    let listed: Vec<(String, String)> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["method"].as_str().unwrap().to_owned(), r["path"].as_str().unwrap().to_owned()))
        .collect();
    assert_eq!(listed.len(), ROUTES.len());
    for required in [
        ("POST", "/signup"),
        ("POST", "/login"),
        ("GET", "/specialties"),
        ("GET", "/doctors"),
        ("GET", "/doctors/{id}/schedule"),
        ("GET", "/doctors/{id}/slots"),
        ("POST", "/slots/{id}/hold"),
        ("POST", "/holds/{id}/confirm"),
        ("DELETE", "/appointments/{id}"),
        ("POST", "/doctors/{id}/postpone"),
        ("POST", "/requests"),
        ("GET", "/patients/{id}/history"),
        ("GET", "/patients/{id}/notifications"),
    ] {
        assert!(listed.contains(&(required.0.to_owned(), required.1.to_owned())), "{required:?}");
    }
}

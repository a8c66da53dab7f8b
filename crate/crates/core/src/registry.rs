//! Accounts, sessions, the doctor/specialty catalogue, appointment records
//! and visit history, replayed from a [`Store`] journal.

use std::collections::{BTreeMap, HashMap};

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::{Algorithm, Argon2, Params, Version};
use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};
use crate::ids::{AppointmentId, DoctorId, PatientId, SpecialtyId};
use crate::records::{
    Appointment, AppointmentState, DoctorRecord, HistoryEntry, PatientAccount, Specialty, VisitSummary,
};
use crate::store::{JournalRecord, MemoryStore, Store};

pub const MIN_CREDENTIAL_LEN: usize = 8;
pub const SESSION_TTL_HOURS: i64 = 24;

/// Argon2id cost parameters for new credential verifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialParams {
    pub memory_kib: u32,
    pub iterations: u32,
    pub parallelism: u32,
}

impl Default for CredentialParams {
    fn default() -> Self {
        Self {
            memory_kib: Params::DEFAULT_M_COST,
            iterations: Params::DEFAULT_T_COST,
            parallelism: Params::DEFAULT_P_COST,
        }
    }
}

impl CredentialParams {
    /// Cheap parameters for tests and demos.
    pub fn fast() -> Self {
        Self {
            memory_kib: 64,
            iterations: 1,
            parallelism: 1,
        }
    }

    fn hasher(&self) -> Result<Argon2<'static>> {
        let params = Params::new(self.memory_kib, self.iterations, self.parallelism, None)
            .map_err(|e| SchedError::Validation(format!("credential params: {e}")))?;
        Ok(Argon2::new(Algorithm::Argon2id, Version::V0x13, params))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "role", content = "id", rename_all = "snake_case")]
pub enum Principal {
    Patient(PatientId),
    Doctor(DoctorId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub principal: Principal,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialtySummary {
    pub specialty_id: SpecialtyId,
    pub name: String,
    pub doctor_count: usize,
}

#[derive(Debug, Clone)]
struct Login {
    principal: Principal,
    credential_hash: String,
}

fn random_bytes<const N: usize>() -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    getrandom::fill(&mut buf).map_err(|e| SchedError::Storage(format!("entropy source: {e}")))?;
    Ok(buf)
}

pub struct Registry {
    store: Box<dyn Store>,
    params: CredentialParams,
    logins: HashMap<String, Login>,
    patients: BTreeMap<PatientId, PatientAccount>,
    specialties: BTreeMap<SpecialtyId, Specialty>,
    doctors: BTreeMap<DoctorId, DoctorRecord>,
    appointments: BTreeMap<AppointmentId, Appointment>,
    history: Vec<HistoryEntry>,
    sessions: HashMap<String, Session>,
    next_patient: u64,
    next_appointment: u64,
    // verifier compared against when the username is unknown
    decoy_hash: String,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("patients", &self.patients.len())
            .field("doctors", &self.doctors.len())
            .field("appointments", &self.appointments.len())
            .finish_non_exhaustive()
    }
}

impl Registry {
    pub fn in_memory(params: CredentialParams) -> Result<Self> {
        Self::open(Box::new(MemoryStore::default()), params)
    }

    /// Replays the store's journal.
    pub fn open(mut store: Box<dyn Store>, params: CredentialParams) -> Result<Self> {
        let records = store.load()?;
        let decoy_hash = Self::hash_with(&params, "decoy-credential")?;
        let mut reg = Self {
            store,
            params,
            logins: HashMap::new(),
            patients: BTreeMap::new(),
            specialties: BTreeMap::new(),
            doctors: BTreeMap::new(),
            appointments: BTreeMap::new(),
            history: Vec::new(),
            sessions: HashMap::new(),
            next_patient: 0,
            next_appointment: 0,
            decoy_hash,
        };
        for rec in records {
            reg.apply(rec);
        }
        Ok(reg)
    }

    fn hash_with(params: &CredentialParams, credential: &str) -> Result<String> {
        let salt = SaltString::encode_b64(&random_bytes::<16>()?)
            .map_err(|e| SchedError::Storage(format!("salt: {e}")))?;
        params
            .hasher()?
            .hash_password(credential.as_bytes(), &salt)
            .map(|h| h.to_string())
            .map_err(|e| SchedError::Storage(format!("hash: {e}")))
    }

    fn verify(hash: &str, credential: &str) -> bool {
        PasswordHash::new(hash)
            .map(|parsed| Argon2::default().verify_password(credential.as_bytes(), &parsed).is_ok())
            .unwrap_or(false)
    }

    fn apply(&mut self, rec: JournalRecord) {
        match rec {
            JournalRecord::PatientRegistered(acct) => {
                self.next_patient = self.next_patient.max(acct.patient_id.0);
                self.logins.insert(
                    acct.username.clone(),
                    Login {
                        principal: Principal::Patient(acct.patient_id),
                        credential_hash: acct.credential_hash.clone(),
                    },
                );
                self.patients.insert(acct.patient_id, acct);
            }
            JournalRecord::DoctorLogin {
                doctor_id,
                username,
                credential_hash,
            } => {
                self.logins.insert(
                    username,
                    Login {
                        principal: Principal::Doctor(doctor_id),
                        credential_hash,
                    },
                );
            }
            JournalRecord::SpecialtyUpserted(s) => {
                self.specialties.insert(s.specialty_id.clone(), s);
            }
            JournalRecord::DoctorUpserted(d) => {
                self.doctors.insert(d.doctor_id.clone(), d);
            }
            JournalRecord::AppointmentCreated(a) => {
                self.next_appointment = self.next_appointment.max(a.appointment_id.0);
                self.appointments.insert(a.appointment_id, a);
            }
            JournalRecord::AppointmentStateChanged {
                appointment_id,
                state,
                outcome_note,
                ..
            } => {
                if let Some(a) = self.appointments.get_mut(&appointment_id) {
                    a.state = state;
                    if outcome_note.is_some() {
                        a.outcome_note = outcome_note;
                    }
                }
            }
            JournalRecord::HistoryAppended(e) => self.history.push(e),
        }
    }

    fn commit(&mut self, rec: JournalRecord) -> Result<()> {
        self.store.append(&rec)?;
        self.apply(rec);
        Ok(())
    }

    fn check_new_login(&self, username: &str, credential: &str) -> Result<()> {
        if username.trim().is_empty() {
            return Err(SchedError::Validation("username must not be empty".into()));
        }
        if self.logins.contains_key(username) {
            return Err(SchedError::UsernameTaken);
        }
        if credential.chars().count() < MIN_CREDENTIAL_LEN {
            return Err(SchedError::WeakCredential { min: MIN_CREDENTIAL_LEN });
        }
        Ok(())
    }

    pub fn register_user(&mut self, username: &str, credential: &str, now: DateTime<Utc>) -> Result<PatientId> {
        self.check_new_login(username, credential)?;
        let patient_id = PatientId(self.next_patient + 1);
        let credential_hash = Self::hash_with(&self.params, credential)?;
        self.commit(JournalRecord::PatientRegistered(PatientAccount {
            patient_id,
            username: username.to_owned(),
            credential_hash,
            created_at: now,
        }))?;
        Ok(patient_id)
    }

    pub fn register_doctor_login(&mut self, doctor: &DoctorId, username: &str, credential: &str) -> Result<()> {
        if !self.doctors.contains_key(doctor) {
            return Err(SchedError::UnknownDoctor(doctor.clone()));
        }
        self.check_new_login(username, credential)?;
        let credential_hash = Self::hash_with(&self.params, credential)?;
        self.commit(JournalRecord::DoctorLogin {
            doctor_id: doctor.clone(),
            username: username.to_owned(),
            credential_hash,
        })
    }

    /// Unknown usernames and wrong credentials fail identically, and both
    /// pay for one verification.
    pub fn authenticate(&mut self, username: &str, credential: &str, now: DateTime<Utc>) -> Result<Session> {
        let (hash, principal) = match self.logins.get(username) {
            Some(l) => (l.credential_hash.as_str(), Some(l.principal.clone())),
            None => (self.decoy_hash.as_str(), None),
        };
        let ok = Self::verify(hash, credential);
        let principal = match (ok, principal) {
            (true, Some(p)) => p,
            _ => return Err(SchedError::InvalidCredentials),
        };
        self.sessions.retain(|_, s| s.expires_at > now);
        let session = Session {
            token: hex::encode(random_bytes::<32>()?),
            principal,
            expires_at: now + Duration::hours(SESSION_TTL_HOURS),
        };
        self.sessions.insert(session.token.clone(), session.clone());
        Ok(session)
    }

    pub fn session(&self, token: &str, now: DateTime<Utc>) -> Result<Principal> {
        self.sessions
            .get(token)
            .filter(|s| now < s.expires_at)
            .map(|s| s.principal.clone())
            .ok_or(SchedError::Unauthenticated)
    }

    pub fn patient(&self, id: PatientId) -> Result<&PatientAccount> {
        self.patients.get(&id).ok_or(SchedError::UnknownPatient(id))
    }

    pub fn upsert_specialty(&mut self, specialty: Specialty) -> Result<()> {
        if specialty.specialty_id.0.is_empty() {
            return Err(SchedError::Validation("specialty_id must not be empty".into()));
        }
        self.commit(JournalRecord::SpecialtyUpserted(specialty))
    }

    /// Adds or replaces a doctor; an unseen specialty id is registered with
    /// the id as its display name.
    pub fn upsert_doctor(&mut self, doctor: DoctorRecord) -> Result<()> {
        let id_ok = |c: char| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.');
        if doctor.doctor_id.0.is_empty() || !doctor.doctor_id.0.chars().all(id_ok) {
            return Err(SchedError::Validation(format!(
                "doctor_id {:?} must be non-empty and use only letters, digits, '-', '_' or '.'",
                doctor.doctor_id.0
            )));
        }
        for w in &doctor.working_hours {
            w.validate()?;
        }
        if !self.specialties.contains_key(&doctor.specialty_id) {
            self.upsert_specialty(Specialty {
                specialty_id: doctor.specialty_id.clone(),
                name: doctor.specialty_id.0.clone(),
            })?;
        }
        self.commit(JournalRecord::DoctorUpserted(doctor))
    }

    pub fn doctor(&self, id: &DoctorId) -> Result<&DoctorRecord> {
        self.doctors.get(id).ok_or_else(|| SchedError::UnknownDoctor(id.clone()))
    }

    pub fn doctors(&self) -> impl Iterator<Item = &DoctorRecord> {
        self.doctors.values()
    }

    pub fn specialty(&self, id: &SpecialtyId) -> Result<&Specialty> {
        self.specialties.get(id).ok_or_else(|| SchedError::UnknownSpecialty(id.clone()))
    }

    pub fn list_specialties(&self) -> Vec<SpecialtySummary> {
        self.specialties
            .values()
            .map(|s| SpecialtySummary {
                specialty_id: s.specialty_id.clone(),
                name: s.name.clone(),
                doctor_count: self.doctors.values().filter(|d| d.specialty_id == s.specialty_id).count(),
            })
            .collect()
    }

    pub fn list_doctors(&self, specialty: Option<&SpecialtyId>) -> Result<Vec<DoctorRecord>> {
        if let Some(s) = specialty {
            self.specialty(s)?;
        }
        Ok(self
            .doctors
            .values()
            .filter(|d| specialty.is_none_or(|s| &d.specialty_id == s))
            .cloned()
            .collect())
    }

    pub fn next_appointment_id(&self) -> AppointmentId {
        AppointmentId(self.next_appointment + 1)
    }

    pub fn create_appointment(&mut self, appt: Appointment) -> Result<()> {
        self.patient(appt.patient_id)?;
        self.doctor(&appt.doctor_id)?;
        if self.appointments.contains_key(&appt.appointment_id) {
            return Err(SchedError::Validation(format!("appointment {} exists", appt.appointment_id)));
        }
        if self
            .appointments
            .values()
            .any(|a| a.slot_id == appt.slot_id && a.state == AppointmentState::Active)
        {
            return Err(SchedError::SlotTaken(appt.slot_id));
        }
        self.commit(JournalRecord::AppointmentCreated(appt))
    }

    pub fn appointment(&self, id: AppointmentId) -> Result<&Appointment> {
        self.appointments.get(&id).ok_or(SchedError::UnknownAppointment(id))
    }

    pub fn appointments(&self) -> impl Iterator<Item = &Appointment> {
        self.appointments.values()
    }

    /// Moves an `Active` appointment to a terminal state.
    pub fn set_appointment_state(
        &mut self,
        id: AppointmentId,
        state: AppointmentState,
        outcome_note: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<()> {
        let appt = self.appointment(id)?;
        if appt.state != AppointmentState::Active || state == AppointmentState::Active {
            return Err(SchedError::UnknownAppointment(id));
        }
        self.commit(JournalRecord::AppointmentStateChanged {
            appointment_id: id,
            state,
            outcome_note,
            at: now,
        })
    }

    pub fn record_history(
        &mut self,
        appointment: AppointmentId,
        summary: VisitSummary,
        now: DateTime<Utc>,
    ) -> Result<HistoryEntry> {
        let appt = self.appointment(appointment)?;
        if summary.clinic.trim().is_empty() {
            return Err(SchedError::Validation("clinic must not be empty".into()));
        }
        let entry = HistoryEntry {
            appointment_id: appointment,
            patient_id: appt.patient_id,
            doctor_id: appt.doctor_id.clone(),
            visit_start: appt.start,
            recorded_at: now,
            summary,
        };
        self.commit(JournalRecord::HistoryAppended(entry.clone()))?;
        Ok(entry)
    }

    /// All of a patient's entries across clinics, oldest first.
    pub fn fetch_history(&self, patient: PatientId) -> Result<Vec<HistoryEntry>> {
        self.patient(patient)?;
        let mut v: Vec<_> = self.history.iter().filter(|e| e.patient_id == patient).cloned().collect();
        v.sort_by_key(|e| e.recorded_at);
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use chrono::{TimeZone, Weekday};

    use super::*;
    use crate::ids::SlotId;
    use crate::store::FileStore;
    use crate::template::WeeklyHours;

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 10, 19, 12, 0, 0).unwrap()
    }

    fn reg() -> Registry {
        Registry::in_memory(CredentialParams::fast()).unwrap()
    }

    fn doctor(id: &str, spec: &str) -> DoctorRecord {
        DoctorRecord {
            doctor_id: DoctorId::new(id),
            name: format!("Dr {id}"),
            specialty_id: SpecialtyId::new(spec),
            working_hours: vec![WeeklyHours { weekday: Weekday::Tue, start_hour: 8, end_hour: 11 }],
            on_duty: true,
        }
    }

    fn appt(id: u64, patient: PatientId, doctor: &str, start: DateTime<Utc>) -> Appointment {
        Appointment {
            appointment_id: AppointmentId(id),
            patient_id: patient,
            doctor_id: DoctorId::new(doctor),
            slot_id: SlotId(format!("slot{id}")),
            start,
            duration: 10,
            state: AppointmentState::Active,
            outcome_note: None,
            recorded_at: now(),
        }
    }

    #[test]
    fn signup_rules() {
        let mut r = reg();
        let a = r.register_user("amina", "longenough", now()).unwrap();
        let b = r.register_user("baraka", "longenough", now()).unwrap();
        assert_ne!(a, b);
        assert_eq!(r.register_user("amina", "longenough", now()), Err(SchedError::UsernameTaken));
        assert_eq!(r.register_user("chausiku", "seven77", now()), Err(SchedError::WeakCredential { min: 8 }));
        assert!(r.register_user("chausiku", "eight888", now()).is_ok());
        assert!(!r.patient(a).unwrap().credential_hash.contains("longenough"));
    }

    #[test]
    fn login_is_indistinguishable_on_failure() {
        let mut r = reg();
        let id = r.register_user("amina", "longenough", now()).unwrap();
        let s = r.authenticate("amina", "longenough", now()).unwrap();
        assert_eq!(s.principal, Principal::Patient(id));
        assert_eq!(r.session(&s.token, now()).unwrap(), Principal::Patient(id));
        assert_eq!(r.session(&s.token, now() + Duration::hours(24)), Err(SchedError::Unauthenticated));
        assert_eq!(r.authenticate("amina", "wrongpass", now()), Err(SchedError::InvalidCredentials));
        assert_eq!(r.authenticate("nobody", "longenough", now()), Err(SchedError::InvalidCredentials));
    }

    #[test]
    fn catalogue_listing() {
        let mut r = reg();
        assert!(r.list_specialties().is_empty());
        r.upsert_doctor(doctor("d1", "cardiology")).unwrap();
        r.upsert_doctor(doctor("d2", "cardiology")).unwrap();
        r.upsert_doctor(doctor("d3", "paediatrics")).unwrap();
        r.upsert_specialty(Specialty { specialty_id: SpecialtyId::new("dermatology"), name: "Dermatology".into() })
            .unwrap();
        let specs = r.list_specialties();
        assert_eq!(specs.len(), 3);
        assert_eq!(specs.iter().find(|s| s.specialty_id.0 == "dermatology").unwrap().doctor_count, 0);
        assert_eq!(r.list_doctors(Some(&SpecialtyId::new("cardiology"))).unwrap().len(), 2);
        assert_eq!(r.list_doctors(None).unwrap().len(), 3);
        assert!(matches!(r.list_doctors(Some(&SpecialtyId::new("x"))), Err(SchedError::UnknownSpecialty(_))));
    }

    #[test]
    fn history_order_and_errors() {
        let mut r = reg();
        r.upsert_doctor(doctor("d1", "obstetrics")).unwrap();
        let p = r.register_user("amina", "longenough", now()).unwrap();
        assert!(r.fetch_history(p).unwrap().is_empty());
        for i in 1..=3 {
            r.create_appointment(appt(i, p, "d1", now() + Duration::days(i as i64))).unwrap();
        }
        let clinics = ["Arusha", "Mbeya", "Arusha"];
        // recorded out of chronological order on purpose
        for (i, h) in [(3u64, 30i64), (1, 10), (2, 20)] {
            let summary = VisitSummary { clinic: clinics[i as usize - 1].into(), ..Default::default() };
            r.record_history(AppointmentId(i), summary, now() + Duration::hours(h)).unwrap();
        }
        let hist = r.fetch_history(p).unwrap();
        let ids: Vec<_> = hist.iter().map(|e| e.appointment_id.0).collect();
        assert_eq!(ids, vec![1, 2, 3]);
        assert!(matches!(
            r.record_history(AppointmentId(99), VisitSummary { clinic: "x".into(), ..Default::default() }, now()),
            Err(SchedError::UnknownAppointment(_))
        ));
        assert!(matches!(r.fetch_history(PatientId(99)), Err(SchedError::UnknownPatient(_))));
    }

    #[test]
    fn referential_integrity() {
        let mut r = reg();
        let p = r.register_user("amina", "longenough", now()).unwrap();
        assert!(matches!(r.create_appointment(appt(1, p, "ghost", now())), Err(SchedError::UnknownDoctor(_))));
        r.upsert_doctor(doctor("d1", "x")).unwrap();
        assert!(matches!(
            r.create_appointment(appt(1, PatientId(42), "d1", now())),
            Err(SchedError::UnknownPatient(_))
        ));
        r.create_appointment(appt(1, p, "d1", now())).unwrap();
        r.set_appointment_state(AppointmentId(1), AppointmentState::Cancelled, None, now()).unwrap();
        assert!(r.set_appointment_state(AppointmentId(1), AppointmentState::Completed, None, now()).is_err());
    }

    #[test]
    fn durable_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let open = || Registry::open(Box::new(FileStore::open_dir(dir.path()).unwrap()), CredentialParams::fast()).unwrap();
        let (p, a, hist) = {
            let mut r = open();
            r.upsert_doctor(doctor("d1", "cardiology")).unwrap();
            r.register_doctor_login(&DoctorId::new("d1"), "drone", "doctorpass").unwrap();
            let p = r.register_user("amina", "longenough", now()).unwrap();
            r.create_appointment(appt(1, p, "d1", now() + Duration::days(1))).unwrap();
            r.set_appointment_state(AppointmentId(1), AppointmentState::Completed, Some("well".into()), now()).unwrap();
            r.record_history(AppointmentId(1), VisitSummary { clinic: "Arusha".into(), treatment: Some("rest".into()), ..Default::default() }, now())
                .unwrap();
            (r.patient(p).unwrap().clone(), r.appointment(AppointmentId(1)).unwrap().clone(), r.fetch_history(p).unwrap())
        };
        let mut r = open();
        assert_eq!(r.patient(p.patient_id).unwrap(), &p);
        assert_eq!(r.appointment(AppointmentId(1)).unwrap(), &a);
        assert_eq!(r.fetch_history(p.patient_id).unwrap(), hist);
        assert_eq!(r.doctor(&DoctorId::new("d1")).unwrap(), &doctor("d1", "cardiology"));
        assert!(r.authenticate("amina", "longenough", now()).is_ok());
        assert_eq!(r.authenticate("drone", "doctorpass", now()).unwrap().principal, Principal::Doctor(DoctorId::new("d1")));
        assert_eq!(r.register_user("bob", "longenough", now()).unwrap(), PatientId(2));
        assert_eq!(r.next_appointment_id(), AppointmentId(2));
    }
}

//! The scheduling checkup: one thread-safe facade that receives requests,
//! drives the slot state machine, records appointments and queues
//! notifications. Every operation runs under one lock, so concurrent holds
//! on a slot are linearized and readers see a consistent snapshot.

use std::collections::HashMap;

use chrono::{DateTime, Duration, NaiveDate, NaiveTime, TimeZone, Timelike, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};
use crate::ids::{AppointmentId, DoctorId, PatientId, RequestId, SlotId, SpecialtyId, TicketId};
use crate::matching::{match_freed_slots, FreedSlot, Offer};
use crate::notifications::{default_reminder_leads, Notification, NotificationSink, Outbox};
use crate::records::{Appointment, AppointmentState, DoctorRecord, HistoryEntry, Specialty, VisitSummary};
use crate::registry::{CredentialParams, Principal, Registry, Session, SpecialtySummary};
use crate::requests::{AppointmentRequest, FilterTarget, PriorityClass, RequestFilter, RequestQueue, SlotRef};
use crate::slots::{
    AvailabilityCause, FreedCause, FreedSlotEvent, HoldTicket, SlotBook, SlotState, SlotView, TimeSlot, Transition,
    DEFAULT_HOLD_TTL_SECS,
};
use crate::store::Store;
use crate::template::{intervals_on, WaveTemplate};

/// Longest date range a single availability query may span.
pub const MAX_QUERY_DAYS: i64 = 62;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        // whole seconds keep hold arithmetic exact
        let t = Utc::now();
        t.with_nanosecond(0).unwrap_or(t)
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self(Mutex::new(start))
    }

    pub fn set(&self, t: DateTime<Utc>) {
        *self.0.lock() = t;
    }

    pub fn advance(&self, d: Duration) {
        *self.0.lock() += d;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClinicConfig {
    pub template: WaveTemplate,
    pub hold_ttl: Duration,
    pub reminder_leads: Vec<Duration>,
    /// How many days ahead request resolution searches.
    pub booking_horizon_days: i64,
    pub credentials: CredentialParams,
    /// Keep a log of every slot state transition (see [`Clinic::take_transitions`]).
    pub trace_transitions: bool,
}

impl Default for ClinicConfig {
    fn default() -> Self {
        Self {
            template: WaveTemplate::default(),
            hold_ttl: Duration::seconds(DEFAULT_HOLD_TTL_SECS),
            reminder_leads: default_reminder_leads(),
            booking_horizon_days: 14,
            credentials: CredentialParams::default(),
            trace_transitions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleView {
    pub doctor_id: DoctorId,
    pub name: String,
    pub specialty_id: SpecialtyId,
    pub specialty_name: String,
    pub on_duty: bool,
    pub date: NaiveDate,
    pub slots: Vec<SlotView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfferMade {
    pub request_id: RequestId,
    pub patient_id: PatientId,
    pub slot_id: SlotId,
    pub ticket_id: TicketId,
    pub expires_at: DateTime<Utc>,
}

/// What happened to the slots freed by one cancellation or postponement.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreedRouting {
    pub offers: Vec<OfferMade>,
    pub broadcast: Vec<SlotId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CancelOutcome {
    pub event: FreedSlotEvent,
    pub routing: FreedRouting,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostponeReport {
    pub events: Vec<FreedSlotEvent>,
    pub affected_patients: Vec<PatientId>,
    pub retired: Vec<SlotId>,
    pub routing: FreedRouting,
}

struct State {
    registry: Registry,
    book: SlotBook,
    queue: RequestQueue,
    outbox: Outbox,
    offers: HashMap<TicketId, RequestId>,
}

pub struct Clinic {
    config: ClinicConfig,
    state: Mutex<State>,
}

impl std::fmt::Debug for Clinic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Clinic").field("config", &self.config).finish_non_exhaustive()
    }
}

fn day_start(date: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&date.and_time(NaiveTime::MIN))
}

impl State {
    fn materialize(&mut self, template: &WaveTemplate, doctor: &DoctorRecord, date: NaiveDate) -> Result<()> {
        let intervals = intervals_on(&doctor.working_hours, date);
        self.book.materialize(&doctor.doctor_id, date, &intervals, template)?;
        Ok(())
    }

    fn materialize_range(
        &mut self,
        template: &WaveTemplate,
        doctor: &DoctorId,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Result<()> {
        let record = self.registry.doctor(doctor)?.clone();
        if to <= from {
            return Ok(());
        }
        if (to - from).num_days() > MAX_QUERY_DAYS {
            return Err(SchedError::Validation(format!("range exceeds {MAX_QUERY_DAYS} days")));
        }
        let mut date = from.date_naive();
        let last = (to - Duration::seconds(1)).date_naive();
        while date <= last {
            self.materialize(template, &record, date)?;
            date = date.succ_opt().ok_or_else(|| SchedError::Validation("date overflow".into()))?;
        }
        Ok(())
    }

    /// Expires stale holds (broadcasting the slots and returning lapsed
    /// offers to the queue) and retires slots whose start has passed.
    fn sweep(&mut self, now: DateTime<Utc>) {
        for (notice, ticket) in self.book.expire_holds(now) {
            if let Some(req) = self.offers.remove(&ticket.ticket_id) {
                let _ = self.queue.revert_offer(req);
            }
            if let Some(slot) = self.book.get(&notice.slot_id) {
                let _ = self.outbox.publish_slot_available(slot, notice.cause, now);
            }
        }
        self.book.retire_past(now);
    }

    fn freed_slot(&self, slot_id: &SlotId) -> Result<FreedSlot> {
        let slot = self.book.slot(slot_id)?;
        let specialty_id = self.registry.doctor(&slot.doctor_id).ok().map(|d| d.specialty_id.clone());
        Ok(FreedSlot {
            slot_id: slot.slot_id.clone(),
            doctor_id: slot.doctor_id.clone(),
            specialty_id,
            start: slot.start,
        })
    }

    /// Offers each freed slot to the best pending request, or broadcasts it.
    fn route_freed(&mut self, events: &[FreedSlotEvent], now: DateTime<Utc>) -> Result<FreedRouting> {
        let freed: Vec<FreedSlot> = events.iter().map(|e| self.freed_slot(&e.slot_id)).collect::<Result<_>>()?;
        let causes: HashMap<SlotId, AvailabilityCause> =
            events.iter().map(|e| (e.slot_id.clone(), e.cause.into())).collect();
        let plan = match_freed_slots(&freed, &self.queue);
        let mut routing = FreedRouting::default();
        for Offer { request_id, patient_id, slot_id } in plan.offers {
            let ticket = self.book.hold_slot(&slot_id, patient_id, now)?;
            self.queue.mark_offered(request_id)?;
            self.offers.insert(ticket.ticket_id, request_id);
            let slot = self.book.slot(&slot_id)?.clone();
            self.outbox.offer_notice(&ticket, request_id, &slot, causes[&slot_id], now);
            routing.offers.push(OfferMade {
                request_id,
                patient_id,
                slot_id,
                ticket_id: ticket.ticket_id,
                expires_at: ticket.expires_at,
            });
        }
        for slot_id in plan.unmatched {
            let slot = self.book.slot(&slot_id)?.clone();
            self.outbox.publish_slot_available(&slot, causes[&slot_id], now)?;
            routing.broadcast.push(slot_id);
        }
        Ok(routing)
    }

    fn slot_ref_ok(&self, filter: &RequestFilter, slot: &TimeSlot) -> bool {
        let specialty = self.registry.doctor(&slot.doctor_id).ok().map(|d| &d.specialty_id);
        filter.accepts(&SlotRef {
            slot_id: &slot.slot_id,
            doctor_id: &slot.doctor_id,
            specialty_id: specialty,
            start: slot.start,
        })
    }
}

impl Clinic {
    pub fn new(config: ClinicConfig) -> Result<Self> {
        let registry = Registry::in_memory(config.credentials)?;
        Self::with_registry(config, registry)
    }

    /// Opens a clinic over a durable store, restoring active bookings.
    pub fn open(config: ClinicConfig, store: Box<dyn Store>) -> Result<Self> {
        let registry = Registry::open(store, config.credentials)?;
        Self::with_registry(config, registry)
    }

    fn with_registry(config: ClinicConfig, registry: Registry) -> Result<Self> {
        config.template.validate()?;
        let mut book = SlotBook::new(config.hold_ttl);
        if config.trace_transitions {
            book = book.with_transition_log();
        }
        let mut state = State {
            registry,
            book,
            queue: RequestQueue::new(),
            outbox: Outbox::new(),
            offers: HashMap::new(),
        };
        let doctors: Vec<DoctorRecord> = state.registry.doctors().cloned().collect();
        for d in &doctors {
            state.book.add_doctor(&d.doctor_id);
        }
        let active: Vec<Appointment> = state
            .registry
            .appointments()
            .filter(|a| a.state == AppointmentState::Active)
            .cloned()
            .collect();
        for a in active {
            if let Ok(d) = state.registry.doctor(&a.doctor_id).cloned() {
                state.materialize(&config.template, &d, a.start.date_naive())?;
            }
            if state.book.get(&a.slot_id).is_none() {
                // calendar changed since booking; keep the booked slot anyway
                state.book.insert_slots([TimeSlot {
                    slot_id: a.slot_id.clone(),
                    doctor_id: a.doctor_id.clone(),
                    start: a.start,
                    duration: a.duration,
                    state: SlotState::Available,
                    hour_position: a.start.minute() / config.template.slot_length.max(1),
                }]);
            }
            state.book.restore_booking(&a.slot_id, a.appointment_id)?;
        }
        Ok(Self {
            config,
            state: Mutex::new(state),
        })
    }

    pub fn config(&self) -> &ClinicConfig {
        &self.config
    }

    // ---- accounts

    pub fn register_user(&self, username: &str, credential: &str, now: DateTime<Utc>) -> Result<PatientId> {
        self.state.lock().registry.register_user(username, credential, now)
    }

    pub fn authenticate(&self, username: &str, credential: &str, now: DateTime<Utc>) -> Result<Session> {
        self.state.lock().registry.authenticate(username, credential, now)
    }

    pub fn session(&self, token: &str, now: DateTime<Utc>) -> Result<Principal> {
        self.state.lock().registry.session(token, now)
    }

    // ---- catalogue

    pub fn upsert_specialty(&self, specialty: Specialty) -> Result<()> {
        self.state.lock().registry.upsert_specialty(specialty)
    }

    pub fn upsert_doctor(&self, doctor: DoctorRecord) -> Result<()> {
        let mut st = self.state.lock();
        let id = doctor.doctor_id.clone();
        st.registry.upsert_doctor(doctor)?;
        st.book.add_doctor(&id);
        Ok(())
    }

    pub fn register_doctor_login(&self, doctor: &DoctorId, username: &str, credential: &str) -> Result<()> {
        self.state.lock().registry.register_doctor_login(doctor, username, credential)
    }

    pub fn list_specialties(&self) -> Vec<SpecialtySummary> {
        self.state.lock().registry.list_specialties()
    }

    pub fn list_doctors(&self, specialty: Option<&SpecialtyId>) -> Result<Vec<DoctorRecord>> {
        self.state.lock().registry.list_doctors(specialty)
    }

    pub fn doctor(&self, id: &DoctorId) -> Result<DoctorRecord> {
        self.state.lock().registry.doctor(id).cloned()
    }

    // ---- availability

    /// Bookable slots of a doctor with start in `[from, to)`, sorted by start.
    pub fn establish_available(
        &self,
        doctor: &DoctorId,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
        now: DateTime<Utc>,
    ) -> Result<Vec<TimeSlot>> {
        let mut st = self.state.lock();
        st.materialize_range(&self.config.template, doctor, from, to)?;
        st.sweep(now);
        st.book.establish_available(doctor, from, to)
    }

    /// Every slot of the doctor in range regardless of state.
    pub fn doctor_calendar(
        &self,
        doctor: &DoctorId,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
        now: DateTime<Utc>,
    ) -> Result<Vec<TimeSlot>> {
        let mut st = self.state.lock();
        st.materialize_range(&self.config.template, doctor, from, to)?;
        st.sweep(now);
        Ok(st.book.doctor_slots(doctor, from, to)?.into_iter().cloned().collect())
    }

    pub fn get_doctor_schedule(&self, doctor: &DoctorId, date: NaiveDate, now: DateTime<Utc>) -> Result<ScheduleView> {
        let from = day_start(date);
        let slots = self.establish_available(doctor, from, from + Duration::days(1), now)?;
        let st = self.state.lock();
        let d = st.registry.doctor(doctor)?;
        let specialty_name = st
            .registry
            .specialty(&d.specialty_id)
            .map(|s| s.name.clone())
            .unwrap_or_else(|_| d.specialty_id.0.clone());
        Ok(ScheduleView {
            doctor_id: d.doctor_id.clone(),
            name: d.name.clone(),
            specialty_id: d.specialty_id.clone(),
            specialty_name,
            on_duty: d.on_duty,
            date,
            slots: slots.iter().map(TimeSlot::view).collect(),
        })
    }

    pub fn slot(&self, slot_id: &SlotId) -> Result<TimeSlot> {
        self.state.lock().book.slot(slot_id).cloned()
    }

    // ---- hold / confirm / cancel / postpone

    pub fn hold_slot(&self, slot_id: &SlotId, patient: PatientId, now: DateTime<Utc>) -> Result<HoldTicket> {
        let mut st = self.state.lock();
        st.registry.patient(patient)?;
        st.sweep(now);
        st.book.hold_slot(slot_id, patient, now)
    }

    /// Confirms a live hold. With `caller` set, the ticket must belong to
    /// that patient.
    pub fn confirm_hold(&self, ticket_id: TicketId, caller: Option<PatientId>, now: DateTime<Utc>) -> Result<Appointment> {
        let mut st = self.state.lock();
        st.sweep(now);
        let ticket = st.book.ticket_status(ticket_id)?.clone();
        if caller.is_some_and(|p| p != ticket.patient_id) {
            return Err(SchedError::NotTicketHolder(ticket_id));
        }
        let slot = st.book.slot(&ticket.slot_id)?.clone();
        let appointment = Appointment {
            appointment_id: st.registry.next_appointment_id(),
            patient_id: ticket.patient_id,
            doctor_id: slot.doctor_id.clone(),
            slot_id: slot.slot_id.clone(),
            start: slot.start,
            duration: slot.duration,
            state: AppointmentState::Active,
            outcome_note: None,
            recorded_at: now,
        };
        // the ticket is live after the sweep, so the booking below cannot fail
        st.registry.create_appointment(appointment.clone())?;
        st.book.confirm_hold(ticket_id, now, appointment.appointment_id)?;
        if let Some(req) = st.offers.remove(&ticket_id) {
            let _ = st.queue.fulfil(req);
        }
        st.outbox.schedule_reminders(&appointment, &self.config.reminder_leads, now);
        Ok(appointment)
    }

    pub fn appointment(&self, id: AppointmentId) -> Result<Appointment> {
        self.state.lock().registry.appointment(id).cloned()
    }

    pub fn cancel_appointment(&self, id: AppointmentId, caller: Option<PatientId>, now: DateTime<Utc>) -> Result<CancelOutcome> {
        let mut st = self.state.lock();
        st.sweep(now);
        let appt = st.registry.appointment(id)?.clone();
        if appt.state != AppointmentState::Active {
            return Err(SchedError::UnknownAppointment(id));
        }
        if caller.is_some_and(|p| p != appt.patient_id) {
            return Err(SchedError::Forbidden);
        }
        if appt.start <= now {
            return Err(SchedError::AlreadyStarted(id));
        }
        st.registry.set_appointment_state(id, AppointmentState::Cancelled, None, now)?;
        let event = st.book.release_booked(&appt.slot_id, FreedCause::Cancellation, now)?;
        st.outbox.cancel_reminders(id);
        let routing = st.route_freed(std::slice::from_ref(&event), now)?;
        Ok(CancelOutcome { event, routing })
    }

    /// Marks a visit done; optionally with an outcome note.
    pub fn complete_appointment(&self, id: AppointmentId, note: Option<String>, now: DateTime<Utc>) -> Result<()> {
        let mut st = self.state.lock();
        st.registry.set_appointment_state(id, AppointmentState::Completed, note, now)?;
        st.outbox.cancel_reminders(id);
        Ok(())
    }

    pub fn postpone_doctor(
        &self,
        doctor: &DoctorId,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
        now: DateTime<Utc>,
    ) -> Result<PostponeReport> {
        let mut st = self.state.lock();
        st.registry.doctor(doctor)?;
        if from < now {
            return Err(SchedError::WindowInPast);
        }
        st.materialize_range(&self.config.template, doctor, from, to)?;
        st.sweep(now);
        let outcome = st.book.postpone(doctor, from, to, now)?;
        for t in &outcome.revoked {
            if let Some(req) = st.offers.remove(&t.ticket_id) {
                let _ = st.queue.revert_offer(req);
            }
        }
        let mut report = PostponeReport {
            retired: outcome.retired,
            ..Default::default()
        };
        for (event, appt_id) in outcome.freed {
            st.registry
                .set_appointment_state(appt_id, AppointmentState::PostponedByDoctor, None, now)?;
            st.outbox.cancel_reminders(appt_id);
            let appt = st.registry.appointment(appt_id)?.clone();
            st.outbox.postponement_notice(&appt, now);
            report.affected_patients.push(appt.patient_id);
            report.events.push(event);
        }
        report.routing = st.route_freed(&report.events, now)?;
        Ok(report)
    }

    /// Runs hold expiry and retirement without any other operation.
    pub fn sweep(&self, now: DateTime<Utc>) {
        self.state.lock().sweep(now);
    }

    // ---- requests

    pub fn submit_request(
        &self,
        patient: PatientId,
        filter: RequestFilter,
        priority: PriorityClass,
        now: DateTime<Utc>,
    ) -> Result<RequestId> {
        let mut st = self.state.lock();
        st.registry.patient(patient)?;
        let known = match &filter.target {
            FilterTarget::ByDoctor(d) => st.registry.doctor(d).is_ok(),
            FilterTarget::BySpecialty(s) => st.registry.specialty(s).is_ok(),
            FilterTarget::ByDay(_) => true,
        };
        if !known {
            return Err(SchedError::InvalidFilter(format!("{:?} names no known entity", filter.target)));
        }
        st.queue.submit(patient, filter, priority, now)
    }

    pub fn withdraw_request(&self, id: RequestId, caller: Option<PatientId>) -> Result<()> {
        let mut st = self.state.lock();
        let req = st.queue.get(id)?;
        if caller.is_some_and(|p| p != req.patient_id) {
            return Err(SchedError::Forbidden);
        }
        st.queue.withdraw(id)
    }

    pub fn request(&self, id: RequestId) -> Result<AppointmentRequest> {
        self.state.lock().queue.get(id).cloned()
    }

    pub fn pending_queue_snapshot(&self) -> Vec<AppointmentRequest> {
        self.state.lock().queue.snapshot()
    }

    /// Candidate slots for a pending request, sorted by start then doctor.
    pub fn resolve_request(&self, id: RequestId, now: DateTime<Utc>) -> Result<Vec<TimeSlot>> {
        let mut st = self.state.lock();
        let req = st.queue.get(id)?.clone();
        if req.status != crate::requests::RequestStatus::Pending {
            return Err(SchedError::RequestNotPending(id));
        }
        let (doctors, from, to): (Vec<DoctorId>, DateTime<Utc>, DateTime<Utc>) = match &req.filter.target {
            FilterTarget::ByDoctor(d) => (vec![d.clone()], now, now + Duration::days(self.config.booking_horizon_days)),
            FilterTarget::BySpecialty(s) => (
                st.registry.list_doctors(Some(s))?.into_iter().map(|d| d.doctor_id).collect(),
                now,
                now + Duration::days(self.config.booking_horizon_days),
            ),
            FilterTarget::ByDay(date) => (
                st.registry.doctors().map(|d| d.doctor_id.clone()).collect(),
                day_start(*date).max(now),
                day_start(*date) + Duration::days(1),
            ),
        };
        for d in &doctors {
            st.materialize_range(&self.config.template, d, from, to)?;
        }
        st.sweep(now);
        let mut out = Vec::new();
        for d in &doctors {
            for slot in st.book.establish_available(d, from, to)? {
                if st.slot_ref_ok(&req.filter, &slot) {
                    out.push(slot);
                }
            }
        }
        out.sort_by(|a, b| (a.start, &a.doctor_id, &a.slot_id).cmp(&(b.start, &b.doctor_id, &b.slot_id)));
        Ok(out)
    }

    // ---- history

    pub fn record_history(&self, appointment: AppointmentId, summary: VisitSummary, now: DateTime<Utc>) -> Result<HistoryEntry> {
        self.state.lock().registry.record_history(appointment, summary, now)
    }

    pub fn fetch_history(&self, patient: PatientId) -> Result<Vec<HistoryEntry>> {
        self.state.lock().registry.fetch_history(patient)
    }

    pub fn patient_appointments(&self, patient: PatientId) -> Result<Vec<Appointment>> {
        let st = self.state.lock();
        st.registry.patient(patient)?;
        Ok(st.registry.appointments().filter(|a| a.patient_id == patient).cloned().collect())
    }

    // ---- notifications

    pub fn inbox(&self, patient: PatientId, now: DateTime<Utc>) -> Result<Vec<Notification>> {
        let mut st = self.state.lock();
        st.registry.patient(patient)?;
        st.sweep(now);
        Ok(st.outbox.inbox(patient, now))
    }

    pub fn drain_due(&self, now: DateTime<Utc>) -> Vec<Notification> {
        let mut st = self.state.lock();
        st.sweep(now);
        st.outbox.drain_due(now)
    }

    pub fn dispatch(&self, now: DateTime<Utc>, sinks: &mut [&mut dyn NotificationSink]) -> Vec<String> {
        let mut st = self.state.lock();
        st.sweep(now);
        st.outbox.dispatch(now, sinks)
    }

    /// All notifications ever queued (delivered or not).
    pub fn notifications(&self) -> Vec<Notification> {
        self.state.lock().outbox.all().to_vec()
    }

    /// Slot transitions recorded since the last call; empty unless
    /// `trace_transitions` is set.
    pub fn take_transitions(&self) -> Vec<Transition> {
        self.state.lock().book.take_transitions()
    }

    /// Every slot currently known, in no particular order.
    pub fn all_slots(&self) -> Vec<TimeSlot> {
        self.state.lock().book.slots().cloned().collect()
    }

    /// Checks the slot-level safety invariants; returns the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let st = self.state.lock();
        let mut live_by_slot: HashMap<&SlotId, usize> = HashMap::new();
        for t in st.book.live_tickets() {
            *live_by_slot.entry(&t.slot_id).or_default() += 1;
        }
        let mut active_by_slot: HashMap<&SlotId, usize> = HashMap::new();
        for a in st.registry.appointments().filter(|a| a.state == AppointmentState::Active) {
            *active_by_slot.entry(&a.slot_id).or_default() += 1;
        }
        for slot in st.book.slots() {
            let live = live_by_slot.get(&slot.slot_id).copied().unwrap_or(0);
            let active = active_by_slot.get(&slot.slot_id).copied().unwrap_or(0);
            if live + active > 1 {
                return Err(format!("{} has {live} live holds and {active} active appointments", slot.slot_id));
            }
            match slot.state {
                SlotState::Booked { appointment } => {
                    let a = st.registry.appointment(appointment).map_err(|e| e.to_string())?;
                    if a.state != AppointmentState::Active || a.slot_id != slot.slot_id || active != 1 {
                        return Err(format!("{} booked but appointment {appointment} is {:?}", slot.slot_id, a.state));
                    }
                }
                SlotState::Held { ticket, .. } => {
                    if live != 1 || st.book.ticket(ticket).is_none() || active != 0 {
                        return Err(format!("{} held without its ticket", slot.slot_id));
                    }
                }
                _ => {
                    if live + active != 0 {
                        return Err(format!("{} is {:?} but claimed", slot.slot_id, slot.state.kind()));
                    }
                }
            }
        }
        Ok(())
    }
}

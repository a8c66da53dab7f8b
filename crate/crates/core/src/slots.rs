//! Slot lifecycle: the hold / confirm / expire / cancel / postpone state
//! machine over a doctor's generated calendar.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::{DateTime, Datelike, Duration, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};
use crate::ids::{AppointmentId, DoctorId, PatientId, SlotId, TicketId};
use crate::template::{generate_slots, WaveTemplate, WorkingInterval};

pub const DEFAULT_HOLD_TTL_SECS: i64 = 120;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSlot {
    pub slot_id: SlotId,
    pub doctor_id: DoctorId,
    pub start: DateTime<Utc>,
    /// Minutes.
    pub duration: u32,
    pub state: SlotState,
    /// 0 for the wave seats at the top of the hour, then 1, 2, ...
    pub hour_position: u32,
}

impl TimeSlot {
    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::minutes(i64::from(self.duration))
    }

    pub fn is_bookable(&self) -> bool {
        matches!(self.state, SlotState::Available | SlotState::Released { .. })
    }

    pub fn view(&self) -> SlotView {
        SlotView {
            slot_id: self.slot_id.clone(),
            doctor_id: self.doctor_id.clone(),
            start: self.start,
            end: self.end(),
            year: self.start.year(),
            month: self.start.month(),
            day: self.start.day(),
            time: format!("{:02}:{:02}", self.start.hour(), self.start.minute()),
            duration_minutes: self.duration,
            hour_position: self.hour_position,
            state: self.state.kind(),
            freed_by: match self.state {
                SlotState::Released { cause } => Some(cause),
                _ => None,
            },
        }
    }
}

/// Display form of a slot carrying date, month, year, time and duration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotView {
    pub slot_id: SlotId,
    pub doctor_id: DoctorId,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub year: i32,
    pub month: u32,
    pub day: u32,
    pub time: String,
    pub duration_minutes: u32,
    pub hour_position: u32,
    pub state: StateKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freed_by: Option<FreedCause>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreedCause {
    Cancellation,
    Postponement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SlotState {
    Available,
    Held {
        holder: PatientId,
        expires_at: DateTime<Utc>,
        ticket: TicketId,
    },
    Booked {
        appointment: AppointmentId,
    },
    Released {
        cause: FreedCause,
    },
    Retired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Available,
    Held,
    Booked,
    Released,
    Retired,
}

impl StateKind {
    pub fn can_transition_to(self, next: StateKind) -> bool {
        use StateKind::*;
        matches!(
            (self, next),
            (Available, Held)
                | (Held, Booked)
                | (Held, Available)
                | (Booked, Released)
                | (Released, Held)
                | (Available, Retired)
                | (Released, Retired)
        )
    }
}

impl SlotState {
    pub fn kind(&self) -> StateKind {
        match self {
            SlotState::Available => StateKind::Available,
            SlotState::Held { .. } => StateKind::Held,
            SlotState::Booked { .. } => StateKind::Booked,
            SlotState::Released { .. } => StateKind::Released,
            SlotState::Retired => StateKind::Retired,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldTicket {
    pub ticket_id: TicketId,
    pub slot_id: SlotId,
    pub patient_id: PatientId,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

impl HoldTicket {
    pub fn is_live(&self, now: DateTime<Utc>) -> bool {
        now <= self.expires_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreedSlotEvent {
    pub slot_id: SlotId,
    pub cause: FreedCause,
    pub occurred_at: DateTime<Utc>,
}

/// Why a slot became visible to other patients again.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvailabilityCause {
    Cancellation,
    Postponement,
    HoldExpired,
}

impl From<FreedCause> for AvailabilityCause {
    fn from(c: FreedCause) -> Self {
        match c {
            FreedCause::Cancellation => AvailabilityCause::Cancellation,
            FreedCause::Postponement => AvailabilityCause::Postponement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityNotice {
    pub slot_id: SlotId,
    pub cause: AvailabilityCause,
    pub occurred_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub slot_id: SlotId,
    pub from: StateKind,
    pub to: StateKind,
}

/// Result of a doctor postponing a window.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PostponeOutcome {
    /// Booked slots released, with the appointment each one carried.
    pub freed: Vec<(FreedSlotEvent, AppointmentId)>,
    pub retired: Vec<SlotId>,
    pub revoked: Vec<HoldTicket>,
}

/// All slots and hold tickets of the clinic. Not synchronized; the
/// [`Clinic`](crate::clinic::Clinic) facade serializes access.
#[derive(Debug, Clone)]
pub struct SlotBook {
    slots: HashMap<SlotId, TimeSlot>,
    by_doctor: BTreeMap<DoctorId, BTreeSet<(DateTime<Utc>, SlotId)>>,
    materialized: HashSet<(DoctorId, NaiveDate)>,
    tickets: HashMap<TicketId, HoldTicket>,
    lapsed: HashSet<TicketId>,
    next_ticket: u64,
    hold_ttl: Duration,
    log: Option<Vec<Transition>>,
}

impl Default for SlotBook {
    fn default() -> Self {
        Self::new(Duration::seconds(DEFAULT_HOLD_TTL_SECS))
    }
}

impl SlotBook {
    pub fn new(hold_ttl: Duration) -> Self {
        Self {
            slots: HashMap::new(),
            by_doctor: BTreeMap::new(),
            materialized: HashSet::new(),
            tickets: HashMap::new(),
            lapsed: HashSet::new(),
            next_ticket: 1,
            hold_ttl,
            log: None,
        }
    }

    /// Records every state transition for later inspection.
    pub fn with_transition_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn take_transitions(&mut self) -> Vec<Transition> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn hold_ttl(&self) -> Duration {
        self.hold_ttl
    }

    pub fn add_doctor(&mut self, doctor: &DoctorId) {
        self.by_doctor.entry(doctor.clone()).or_default();
    }

    pub fn has_doctor(&self, doctor: &DoctorId) -> bool {
        self.by_doctor.contains_key(doctor)
    }

    /// Adds generated slots; ids already present are left untouched.
    pub fn insert_slots(&mut self, slots: impl IntoIterator<Item = TimeSlot>) -> usize {
        let mut added = 0;
        for slot in slots {
            if self.slots.contains_key(&slot.slot_id) {
                continue;
            }
            self.by_doctor
                .entry(slot.doctor_id.clone())
                .or_default()
                .insert((slot.start, slot.slot_id.clone()));
            self.slots.insert(slot.slot_id.clone(), slot);
            added += 1;
        }
        added
    }

    /// Generates the doctor's slots for `date` once; later calls are no-ops.
    pub fn materialize(
        &mut self,
        doctor: &DoctorId,
        date: NaiveDate,
        intervals: &[WorkingInterval],
        template: &WaveTemplate,
    ) -> Result<usize> {
        self.add_doctor(doctor);
        if self.materialized.contains(&(doctor.clone(), date)) {
            return Ok(0);
        }
        let slots = generate_slots(doctor, intervals, template)?;
        self.materialized.insert((doctor.clone(), date));
        Ok(self.insert_slots(slots))
    }

    pub fn get(&self, slot_id: &SlotId) -> Option<&TimeSlot> {
        self.slots.get(slot_id)
    }

    pub fn slot(&self, slot_id: &SlotId) -> Result<&TimeSlot> {
        self.slots
            .get(slot_id)
            .ok_or_else(|| SchedError::UnknownSlot(slot_id.clone()))
    }

    pub fn ticket(&self, ticket_id: TicketId) -> Option<&HoldTicket> {
        self.tickets.get(&ticket_id)
    }

    pub fn live_tickets(&self) -> impl Iterator<Item = &HoldTicket> {
        self.tickets.values()
    }

    pub fn slots(&self) -> impl Iterator<Item = &TimeSlot> {
        self.slots.values()
    }

    /// The doctor's slots with start in `[from, to)`, sorted by start then id.
    pub fn doctor_slots(
        &self,
        doctor: &DoctorId,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Result<Vec<&TimeSlot>> {
        let index = self
            .by_doctor
            .get(doctor)
            .ok_or_else(|| SchedError::UnknownDoctor(doctor.clone()))?;
        if from >= to {
            return Ok(Vec::new());
        }
        let lo = (from, SlotId(String::new()));
        Ok(index
            .range(lo..)
            .take_while(|(start, _)| *start < to)
            .map(|(_, id)| &self.slots[id])
            .collect())
    }

    /// Bookable (Available or Released) slots of a doctor within `[from, to)`.
    pub fn establish_available(
        &self,
        doctor: &DoctorId,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Result<Vec<TimeSlot>> {
        Ok(self
            .doctor_slots(doctor, from, to)?
            .into_iter()
            .filter(|s| s.is_bookable())
            .cloned()
            .collect())
    }

    fn transition(&mut self, slot_id: &SlotId, next: SlotState) -> Result<()> {
        let slot = self
            .slots
            .get_mut(slot_id)
            .ok_or_else(|| SchedError::UnknownSlot(slot_id.clone()))?;
        let (from, to) = (slot.state.kind(), next.kind());
        if !from.can_transition_to(to) {
            return Err(SchedError::Validation(format!(
                "illegal slot transition {from:?} -> {to:?} for {slot_id}"
            )));
        }
        slot.state = next;
        if let Some(log) = self.log.as_mut() {
            log.push(Transition {
                slot_id: slot_id.clone(),
                from,
                to,
            });
        }
        Ok(())
    }

    fn lapse_ticket(&mut self, ticket_id: TicketId) -> Option<HoldTicket> {
        let t = self.tickets.remove(&ticket_id)?;
        self.lapsed.insert(ticket_id);
        Some(t)
    }

    /// Places a time-limited exclusive claim on a bookable slot.
    pub fn hold_slot(
        &mut self,
        slot_id: &SlotId,
        patient: PatientId,
        now: DateTime<Utc>,
    ) -> Result<HoldTicket> {
        let slot = self.slot(slot_id)?;
        match slot.state {
            SlotState::Retired => return Err(SchedError::SlotRetired(slot_id.clone())),
            SlotState::Booked { .. } => return Err(SchedError::SlotTaken(slot_id.clone())),
            SlotState::Held { expires_at, ticket, .. } => {
                if now <= expires_at {
                    return Err(SchedError::SlotTaken(slot_id.clone()));
                }
                if slot.start < now {
                    return Err(SchedError::SlotExpired(slot_id.clone()));
                }
                // stale hold nobody swept yet
                self.lapse_ticket(ticket);
                self.transition(slot_id, SlotState::Available)?;
            }
            SlotState::Available | SlotState::Released { .. } => {
                if slot.start < now {
                    return Err(SchedError::SlotExpired(slot_id.clone()));
                }
            }
        }
        let ticket = HoldTicket {
            ticket_id: TicketId(self.next_ticket),
            slot_id: slot_id.clone(),
            patient_id: patient,
            issued_at: now,
            expires_at: now + self.hold_ttl,
        };
        self.transition(
            slot_id,
            SlotState::Held {
                holder: patient,
                expires_at: ticket.expires_at,
                ticket: ticket.ticket_id,
            },
        )?;
        self.next_ticket += 1;
        self.tickets.insert(ticket.ticket_id, ticket.clone());
        Ok(ticket)
    }

    /// Turns a live hold into a booking bound to `appointment`.
    ///
    /// A ticket presented after its expiry returns the slot to `Available`
    /// and reports `HoldExpired`; so does any ticket that was already swept.
    pub fn confirm_hold(
        &mut self,
        ticket_id: TicketId,
        now: DateTime<Utc>,
        appointment: AppointmentId,
    ) -> Result<TimeSlot> {
        if self.lapsed.contains(&ticket_id) {
            return Err(SchedError::HoldExpired(ticket_id));
        }
        let ticket = self
            .tickets
            .get(&ticket_id)
            .cloned()
            .ok_or(SchedError::UnknownTicket(ticket_id))?;
        if !ticket.is_live(now) {
            self.lapse_ticket(ticket_id);
            self.transition(&ticket.slot_id, SlotState::Available)?;
            return Err(SchedError::HoldExpired(ticket_id));
        }
        self.transition(&ticket.slot_id, SlotState::Booked { appointment })?;
        self.tickets.remove(&ticket_id);
        Ok(self.slots[&ticket.slot_id].clone())
    }

    /// Ticket lookup that also distinguishes swept tickets.
    pub fn ticket_status(&self, ticket_id: TicketId) -> Result<&HoldTicket> {
        if self.lapsed.contains(&ticket_id) {
            return Err(SchedError::HoldExpired(ticket_id));
        }
        self.tickets.get(&ticket_id).ok_or(SchedError::UnknownTicket(ticket_id))
    }

    /// Returns every hold with `expires_at < now` to `Available`.
    pub fn expire_holds(&mut self, now: DateTime<Utc>) -> Vec<(AvailabilityNotice, HoldTicket)> {
        let mut expired: Vec<HoldTicket> = self
            .tickets
            .values()
            .filter(|t| t.expires_at < now)
            .cloned()
            .collect();
        expired.sort_by_key(|t| (t.expires_at, t.ticket_id));
        let mut out = Vec::with_capacity(expired.len());
        for t in expired {
            self.lapse_ticket(t.ticket_id);
            if self.transition(&t.slot_id, SlotState::Available).is_ok() {
                out.push((
                    AvailabilityNotice {
                        slot_id: t.slot_id.clone(),
                        cause: AvailabilityCause::HoldExpired,
                        occurred_at: now,
                    },
                    t,
                ));
            }
        }
        out
    }

    /// Booked -> Released for a cancellation or postponement.
    pub fn release_booked(
        &mut self,
        slot_id: &SlotId,
        cause: FreedCause,
        now: DateTime<Utc>,
    ) -> Result<FreedSlotEvent> {
        self.transition(slot_id, SlotState::Released { cause })?;
        Ok(FreedSlotEvent {
            slot_id: slot_id.clone(),
            cause,
            occurred_at: now,
        })
    }

    /// Releases the doctor's booked slots in `[from, to)` and retires the
    /// unbooked ones. Held slots are first returned to `Available` (their
    /// tickets are revoked) and then retired.
    pub fn postpone(
        &mut self,
        doctor: &DoctorId,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
        now: DateTime<Utc>,
    ) -> Result<PostponeOutcome> {
        if to <= from {
            return Err(SchedError::InvalidWindow(format!("{from} .. {to}")));
        }
        if from < now {
            return Err(SchedError::WindowInPast);
        }
        let ids: Vec<SlotId> = self
            .doctor_slots(doctor, from, to)?
            .into_iter()
            .map(|s| s.slot_id.clone())
            .collect();
        let mut out = PostponeOutcome::default();
        for id in ids {
            match self.slots[&id].state {
                SlotState::Booked { appointment } => {
                    let ev = self.release_booked(&id, FreedCause::Postponement, now)?;
                    out.freed.push((ev, appointment));
                }
                SlotState::Held { ticket, .. } => {
                    if let Some(t) = self.lapse_ticket(ticket) {
                        out.revoked.push(t);
                    }
                    self.transition(&id, SlotState::Available)?;
                    self.transition(&id, SlotState::Retired)?;
                    out.retired.push(id);
                }
                SlotState::Available | SlotState::Released { .. } => {
                    self.transition(&id, SlotState::Retired)?;
                    out.retired.push(id);
                }
                SlotState::Retired => {}
            }
        }
        Ok(out)
    }

    /// Retires bookable slots whose start has passed.
    pub fn retire_past(&mut self, now: DateTime<Utc>) -> usize {
        let ids: Vec<SlotId> = self
            .slots
            .values()
            .filter(|s| s.is_bookable() && s.start < now)
            .map(|s| s.slot_id.clone())
            .collect();
        for id in &ids {
            let _ = self.transition(id, SlotState::Retired);
        }
        ids.len()
    }

    /// Rebinds a booking recovered from durable storage.
    pub fn restore_booking(&mut self, slot_id: &SlotId, appointment: AppointmentId) -> Result<()> {
        let slot = self
            .slots
            .get_mut(slot_id)
            .ok_or_else(|| SchedError::UnknownSlot(slot_id.clone()))?;
        slot.state = SlotState::Booked { appointment };
        Ok(())
    }
}

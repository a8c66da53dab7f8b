//! Reminder and slot-availability notifications with pull-model delivery.

use std::io::Write;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, SchedError};
use crate::ids::{AppointmentId, DoctorId, NotificationId, PatientId, RequestId, SlotId, TicketId};
use crate::records::{Appointment, AppointmentState};
use crate::slots::{AvailabilityCause, HoldTicket, TimeSlot};

pub fn default_reminder_leads() -> Vec<Duration> {
    vec![Duration::hours(24), Duration::hours(1)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotificationKind {
    Reminder,
    SlotAvailable,
    PostponementNotice,
    OfferNotice,
}

/// A patient id, or everyone subscribed to availability broadcasts.
/// On the wire: the numeric patient id or the string `"broadcast"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Recipient {
    Patient(PatientId),
    Broadcast,
}

impl Serialize for Recipient {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Recipient::Patient(p) => s.serialize_u64(p.0),
            Recipient::Broadcast => s.serialize_str("broadcast"),
        }
    }
}

impl<'de> Deserialize<'de> for Recipient {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Id(id) => Ok(Recipient::Patient(PatientId(id))),
            Raw::Tag(t) if t == "broadcast" => Ok(Recipient::Broadcast),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("unknown recipient {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_id: Option<SlotId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appointment_id: Option<AppointmentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doctor_id: Option<DoctorId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<AvailabilityCause>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<RequestId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ticket_id: Option<TicketId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expires_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_minutes: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    #[serde(rename = "id")]
    pub notification_id: NotificationId,
    pub kind: NotificationKind,
    pub recipient: Recipient,
    pub payload: Payload,
    pub due_at: DateTime<Utc>,
    pub delivered: bool,
}

/// The fixed shape posted to webhook sinks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireNotification {
    pub id: NotificationId,
    pub kind: NotificationKind,
    pub recipient: Recipient,
    pub due_at: DateTime<Utc>,
    pub payload: Payload,
}

impl From<&Notification> for WireNotification {
    fn from(n: &Notification) -> Self {
        Self {
            id: n.notification_id,
            kind: n.kind,
            recipient: n.recipient,
            due_at: n.due_at,
            payload: n.payload.clone(),
        }
    }
}

/// A delivery channel fed by [`Outbox::dispatch`].
pub trait NotificationSink {
    fn deliver(&mut self, n: &Notification) -> std::result::Result<(), String>;
}

/// Collects delivered notifications in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub received: Vec<Notification>,
}

impl NotificationSink for MemorySink {
    fn deliver(&mut self, n: &Notification) -> std::result::Result<(), String> {
        self.received.push(n.clone());
        Ok(())
    }
}

/// Writes one JSON line per notification.
pub struct LogSink<W: Write>(pub W);

impl<W: Write> NotificationSink for LogSink<W> {
    fn deliver(&mut self, n: &Notification) -> std::result::Result<(), String> {
        let line = serde_json::to_string(&WireNotification::from(n)).map_err(|e| e.to_string())?;
        writeln!(self.0, "{line}").map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outbox {
    items: Vec<Notification>,
    next_id: u64,
}

impl Outbox {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, kind: NotificationKind, recipient: Recipient, payload: Payload, due_at: DateTime<Utc>) -> Notification {
        self.next_id += 1;
        let n = Notification {
            notification_id: NotificationId(self.next_id),
            kind,
            recipient,
            payload,
            due_at,
            delivered: false,
        };
        self.items.push(n.clone());
        n
    }

    /// One reminder per lead time, due at `start - lead`. Leads that would
    /// fall before `now` are dropped, as are reminders for inactive or
    /// already-started appointments.
    pub fn schedule_reminders(
        &mut self,
        appointment: &Appointment,
        leads: &[Duration],
        now: DateTime<Utc>,
    ) -> Vec<Notification> {
        if appointment.state != AppointmentState::Active || appointment.start <= now {
            return Vec::new();
        }
        leads
            .iter()
            .filter(|lead| **lead > Duration::zero())
            .filter_map(|lead| {
                let due = appointment.start - *lead;
                (due >= now).then(|| {
                    self.push(
                        NotificationKind::Reminder,
                        Recipient::Patient(appointment.patient_id),
                        Payload {
                            slot_id: Some(appointment.slot_id.clone()),
                            appointment_id: Some(appointment.appointment_id),
                            doctor_id: Some(appointment.doctor_id.clone()),
                            start: Some(appointment.start),
                            lead_minutes: Some(lead.num_minutes()),
                            ..Default::default()
                        },
                        due,
                    )
                })
            })
            .collect()
    }

    /// Broadcast that `slot` can be booked again.
    pub fn publish_slot_available(
        &mut self,
        slot: &TimeSlot,
        cause: AvailabilityCause,
        now: DateTime<Utc>,
    ) -> Result<Notification> {
        if !slot.is_bookable() {
            return Err(SchedError::SlotNotAvailable(slot.slot_id.clone()));
        }
        Ok(self.push(
            NotificationKind::SlotAvailable,
            Recipient::Broadcast,
            Payload {
                slot_id: Some(slot.slot_id.clone()),
                doctor_id: Some(slot.doctor_id.clone()),
                start: Some(slot.start),
                cause: Some(cause),
                ..Default::default()
            },
            now,
        ))
    }

    /// Tells the holder of an offer hold which slot is reserved for them.
    pub fn offer_notice(
        &mut self,
        ticket: &HoldTicket,
        request: RequestId,
        slot: &TimeSlot,
        cause: AvailabilityCause,
        now: DateTime<Utc>,
    ) -> Notification {
        self.push(
            NotificationKind::OfferNotice,
            Recipient::Patient(ticket.patient_id),
            Payload {
                slot_id: Some(slot.slot_id.clone()),
                doctor_id: Some(slot.doctor_id.clone()),
                start: Some(slot.start),
                cause: Some(cause),
                request_id: Some(request),
                ticket_id: Some(ticket.ticket_id),
                expires_at: Some(ticket.expires_at),
                ..Default::default()
            },
            now,
        )
    }

    pub fn postponement_notice(&mut self, appointment: &Appointment, now: DateTime<Utc>) -> Notification {
        self.push(
            NotificationKind::PostponementNotice,
            Recipient::Patient(appointment.patient_id),
            Payload {
                slot_id: Some(appointment.slot_id.clone()),
                appointment_id: Some(appointment.appointment_id),
                doctor_id: Some(appointment.doctor_id.clone()),
                start: Some(appointment.start),
                cause: Some(AvailabilityCause::Postponement),
                ..Default::default()
            },
            now,
        )
    }

    /// Drops undelivered reminders of a dead appointment.
    pub fn cancel_reminders(&mut self, appointment: AppointmentId) -> usize {
        let before = self.items.len();
        self.items.retain(|n| {
            !(n.kind == NotificationKind::Reminder
                && !n.delivered
                && n.payload.appointment_id == Some(appointment))
        });
        before - self.items.len()
    }

    /// Returns and marks delivered every undelivered notification with
    /// `due_at <= now`, in due order.
    pub fn drain_due(&mut self, now: DateTime<Utc>) -> Vec<Notification> {
        let mut out: Vec<Notification> = self
            .items
            .iter_mut()
            .filter(|n| !n.delivered && n.due_at <= now)
            .map(|n| {
                n.delivered = true;
                n.clone()
            })
            .collect();
        out.sort_by_key(|n| (n.due_at, n.notification_id));
        out
    }

    /// Drains due notifications into every sink.
    pub fn dispatch(&mut self, now: DateTime<Utc>, sinks: &mut [&mut dyn NotificationSink]) -> Vec<String> {
        let mut failures = Vec::new();
        for n in self.drain_due(now) {
            for sink in sinks.iter_mut() {
                if let Err(e) = sink.deliver(&n) {
                    failures.push(format!("notification {}: {e}", n.notification_id));
                }
            }
        }
        failures
    }

    /// A patient's view: their own notifications plus broadcasts, due by
    /// `now`, oldest first. Does not mark anything delivered.
    pub fn inbox(&self, patient: PatientId, now: DateTime<Utc>) -> Vec<Notification> {
        let mut v: Vec<_> = self
            .items
            .iter()
            .filter(|n| n.due_at <= now)
            .filter(|n| matches!(n.recipient, Recipient::Broadcast) || n.recipient == Recipient::Patient(patient))
            .cloned()
            .collect();
        v.sort_by_key(|n| (n.due_at, n.notification_id));
        v
    }

    pub fn all(&self) -> &[Notification] {
        &self.items
    }
}

//! Pending appointment requests and their priority queue.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};

use chrono::{DateTime, NaiveDate, NaiveTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};
use crate::ids::{DoctorId, PatientId, RequestId, SlotId, SpecialtyId};

/// Ordered `Routine < Urgent < Emergency`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityClass {
    Routine,
    Urgent,
    Emergency,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterTarget {
    ByDay(NaiveDate),
    BySpecialty(SpecialtyId),
    ByDoctor(DoctorId),
}

/// Time-of-day preference, `[from, to)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferredWindow {
    pub from: NaiveTime,
    pub to: NaiveTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestFilter {
    pub target: FilterTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferred: Option<PreferredWindow>,
}

impl RequestFilter {
    pub fn by_doctor(d: impl Into<String>) -> Self {
        Self { target: FilterTarget::ByDoctor(DoctorId(d.into())), preferred: None }
    }

    pub fn by_specialty(s: impl Into<String>) -> Self {
        Self { target: FilterTarget::BySpecialty(SpecialtyId(s.into())), preferred: None }
    }

    pub fn by_day(date: NaiveDate) -> Self {
        Self { target: FilterTarget::ByDay(date), preferred: None }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.preferred {
            if w.from >= w.to {
                return Err(SchedError::InvalidFilter(format!(
                    "preferred window {} .. {} is empty",
                    w.from, w.to
                )));
            }
        }
        match &self.target {
            FilterTarget::BySpecialty(s) if s.0.is_empty() => {
                Err(SchedError::InvalidFilter("empty specialty id".into()))
            }
            FilterTarget::ByDoctor(d) if d.0.is_empty() => {
                Err(SchedError::InvalidFilter("empty doctor id".into()))
            }
            _ => Ok(()),
        }
    }

    fn in_window(&self, start: &DateTime<Utc>) -> bool {
        self.preferred.is_none_or(|w| {
            let t = NaiveTime::from_hms_opt(start.hour(), start.minute(), 0).unwrap_or(NaiveTime::MIN);
            w.from <= t && t < w.to
        })
    }

    /// Whether a slot with the given owner and start satisfies this filter.
    pub fn accepts(&self, slot: &SlotRef<'_>) -> bool {
        let target_ok = match &self.target {
            FilterTarget::ByDay(date) => slot.start.date_naive() == *date,
            FilterTarget::BySpecialty(s) => slot.specialty_id == Some(s),
            FilterTarget::ByDoctor(d) => slot.doctor_id == d,
        };
        target_ok && self.in_window(&slot.start)
    }
}

/// The slot facts a filter needs.
#[derive(Debug, Clone, Copy)]
pub struct SlotRef<'a> {
    pub slot_id: &'a SlotId,
    pub doctor_id: &'a DoctorId,
    pub specialty_id: Option<&'a SpecialtyId>,
    pub start: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStatus {
    Pending,
    Offered,
    Fulfilled,
    Withdrawn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppointmentRequest {
    pub request_id: RequestId,
    pub patient_id: PatientId,
    pub filter: RequestFilter,
    pub priority: PriorityClass,
    pub submitted_at: DateTime<Utc>,
    pub status: RequestStatus,
}

type QueueKey = (Reverse<PriorityClass>, DateTime<Utc>, RequestId);

impl AppointmentRequest {
    fn key(&self) -> QueueKey {
        (Reverse(self.priority), self.submitted_at, self.request_id)
    }
}

/// Requests ordered by priority (highest first), then submission time,
/// then id. Only `Pending` requests are in the ordered index; an `Offered`
/// request keeps its key and re-enters at the same position if the offer
/// lapses.
#[derive(Debug, Clone, Default)]
pub struct RequestQueue {
    requests: HashMap<RequestId, AppointmentRequest>,
    pending: BTreeSet<QueueKey>,
    next_id: u64,
    last_submitted: Option<DateTime<Utc>>,
}

impl RequestQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enqueues a new pending request. `submitted_at` never runs backwards
    /// relative to earlier requests.
    pub fn submit(
        &mut self,
        patient_id: PatientId,
        filter: RequestFilter,
        priority: PriorityClass,
        now: DateTime<Utc>,
    ) -> Result<RequestId> {
        filter.validate()?;
        let submitted_at = self.last_submitted.map_or(now, |last| last.max(now));
        self.last_submitted = Some(submitted_at);
        self.next_id += 1;
        let req = AppointmentRequest {
            request_id: RequestId(self.next_id),
            patient_id,
            filter,
            priority,
            submitted_at,
            status: RequestStatus::Pending,
        };
        self.pending.insert(req.key());
        let id = req.request_id;
        self.requests.insert(id, req);
        Ok(id)
    }

    pub fn get(&self, id: RequestId) -> Result<&AppointmentRequest> {
        self.requests.get(&id).ok_or(SchedError::UnknownRequest(id))
    }

    /// Pending requests in queue order.
    pub fn pending(&self) -> impl Iterator<Item = &AppointmentRequest> {
        self.pending.iter().map(|(_, _, id)| &self.requests[id])
    }

    pub fn snapshot(&self) -> Vec<AppointmentRequest> {
        self.pending().cloned().collect()
    }

    /// Every request regardless of status, in id order.
    pub fn all(&self) -> Vec<&AppointmentRequest> {
        let mut v: Vec<_> = self.requests.values().collect();
        v.sort_by_key(|r| r.request_id);
        v
    }

    fn set_status(&mut self, id: RequestId, from: &[RequestStatus], to: RequestStatus) -> Result<()> {
        let req = self.requests.get_mut(&id).ok_or(SchedError::UnknownRequest(id))?;
        if !from.contains(&req.status) {
            return Err(SchedError::RequestNotPending(id));
        }
        let key = (Reverse(req.priority), req.submitted_at, req.request_id);
        match to {
            RequestStatus::Pending => {
                self.pending.insert(key);
            }
            _ => {
                self.pending.remove(&key);
            }
        }
        req.status = to;
        Ok(())
    }

    pub fn mark_offered(&mut self, id: RequestId) -> Result<()> {
        self.set_status(id, &[RequestStatus::Pending], RequestStatus::Offered)
    }

    /// An unconfirmed offer returns the request to its old queue position.
    pub fn revert_offer(&mut self, id: RequestId) -> Result<()> {
        self.set_status(id, &[RequestStatus::Offered], RequestStatus::Pending)
    }

    pub fn fulfil(&mut self, id: RequestId) -> Result<()> {
        self.set_status(id, &[RequestStatus::Offered], RequestStatus::Fulfilled)
    }

    pub fn withdraw(&mut self, id: RequestId) -> Result<()> {
        self.set_status(id, &[RequestStatus::Pending], RequestStatus::Withdrawn)
    }
}

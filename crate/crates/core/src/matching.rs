//! Offering freed slots to the pending request queue.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{DoctorId, PatientId, RequestId, SlotId, SpecialtyId};
use crate::requests::{AppointmentRequest, RequestQueue, SlotRef};

/// A freed slot plus the facts needed to test request filters against it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreedSlot {
    pub slot_id: SlotId,
    pub doctor_id: DoctorId,
    pub specialty_id: Option<SpecialtyId>,
    pub start: DateTime<Utc>,
}

impl FreedSlot {
    pub fn as_ref(&self) -> SlotRef<'_> {
        SlotRef {
            slot_id: &self.slot_id,
            doctor_id: &self.doctor_id,
            specialty_id: self.specialty_id.as_ref(),
            start: self.start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Offer {
    pub request_id: RequestId,
    pub patient_id: PatientId,
    pub slot_id: SlotId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPlan {
    pub offers: Vec<Offer>,
    /// Slots no pending request could take; these are broadcast.
    pub unmatched: Vec<SlotId>,
}

/// Walks the freed slots in event order and gives each one to the first
/// compatible pending request in queue order that has not already received
/// an offer in this batch.
pub fn match_freed_slots(freed: &[FreedSlot], queue: &RequestQueue) -> MatchPlan {
    match_in_order(freed, queue.pending())
}

/// Same as [`match_freed_slots`] over any already-ordered request sequence.
pub fn match_in_order<'a>(
    freed: &[FreedSlot],
    ordered: impl IntoIterator<Item = &'a AppointmentRequest>,
) -> MatchPlan {
    let mut open: Vec<&AppointmentRequest> = ordered.into_iter().collect();
    let mut plan = MatchPlan::default();
    for slot in freed {
        let slot_ref = slot.as_ref();
        match open.iter().position(|r| r.filter.accepts(&slot_ref)) {
            Some(i) => {
                let req = open.remove(i);
                plan.offers.push(Offer {
                    request_id: req.request_id,
                    patient_id: req.patient_id,
                    slot_id: slot.slot_id.clone(),
                });
            }
            None => plan.unmatched.push(slot.slot_id.clone()),
        }
    }
    plan
}

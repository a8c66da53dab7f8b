use thiserror::Error;

use crate::ids::{AppointmentId, DoctorId, PatientId, RequestId, SlotId, SpecialtyId, TicketId};

/// Every failure the scheduling engine can report.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedError {
    #[error("working hours are not whole-hour aligned: {0}")]
    MisalignedHours(String),
    #[error("invalid wave template: {0}")]
    InvalidTemplate(String),
    #[error("unknown doctor {0}")]
    UnknownDoctor(DoctorId),
    #[error("unknown specialty {0}")]
    UnknownSpecialty(SpecialtyId),
    #[error("unknown slot {0}")]
    UnknownSlot(SlotId),
    #[error("slot {0} is already held or booked")]
    SlotTaken(SlotId),
    #[error("slot {0} has already started")]
    SlotExpired(SlotId),
    #[error("slot {0} has been retired")]
    SlotRetired(SlotId),
    #[error("unknown hold ticket {0}")]
    UnknownTicket(TicketId),
    #[error("hold ticket {0} expired before confirmation")]
    HoldExpired(TicketId),
    #[error("hold ticket {0} belongs to another patient")]
    NotTicketHolder(TicketId),
    #[error("unknown appointment {0}")]
    UnknownAppointment(AppointmentId),
    #[error("appointment {0} has already started")]
    AlreadyStarted(AppointmentId),
    #[error("postponement window lies in the past")]
    WindowInPast,
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("unknown patient {0}")]
    UnknownPatient(PatientId),
    #[error("unknown request {0}")]
    UnknownRequest(RequestId),
    #[error("request {0} is not pending")]
    RequestNotPending(RequestId),
    #[error("invalid request filter: {0}")]
    InvalidFilter(String),
    #[error("slot {0} is not available for broadcast")]
    SlotNotAvailable(SlotId),
    #[error("username already taken")]
    UsernameTaken,
    #[error("credential must be at least {min} characters")]
    WeakCredential { min: usize },
    #[error("invalid credentials")]
    InvalidCredentials,
    #[error("session missing or expired")]
    Unauthenticated,
    #[error("operation not permitted for this role")]
    Forbidden,
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("storage failure: {0}")]
    Storage(String),
}

pub type Result<T, E = SchedError> = std::result::Result<T, E>;

//! Appointment scheduling for outpatient clinics.
//!
//! * [`template`] lays out modified-wave hours and generates slot calendars.
//! * [`slots`] owns the hold / confirm / expire / cancel / postpone lifecycle.
//! * [`requests`] and [`matching`] queue pending requests by priority and
//!   hand freed slots to them.
//! * [`notifications`] queues reminders and availability notices.
//! * [`registry`] and [`store`] keep accounts, appointments and history in an
//!   append-only journal (feature `service`).
//! * [`clinic`] is the thread-safe facade tying these together (feature
//!   `service`).
//! * [`sim`] compares walk-in FCFS against modified-wave booking.

pub mod error;
pub mod ids;
pub mod matching;
pub mod notifications;
pub mod records;
pub mod requests;
pub mod sim;
pub mod slots;
pub mod template;

#[cfg(feature = "service")]
pub mod clinic;
#[cfg(feature = "service")]
pub mod registry;
#[cfg(feature = "service")]
pub mod store;

pub use error::{Result, SchedError};

//! HTTP API, notification delivery and operator commands for the wavesched
//! clinic scheduler.

pub mod api;
pub mod cli;
pub mod webhook;

//! Modified-wave hour templates and calendar slot generation.
//!
//! Every clinic hour opens with a wave of `wave_size` patients sharing the
//! first slot, continues with one patient per `slot_length` minutes, and
//! leaves the final `catchup_window` minutes unbooked so overruns can be
//! absorbed before the next wave.

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveTime, TimeZone, Timelike, Utc, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};
use crate::ids::{DoctorId, SlotId};
use crate::slots::{SlotState, TimeSlot};

pub const HOUR_LENGTH: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveTemplate {
    pub slot_length: u32,
    pub wave_size: u32,
    pub catchup_window: u32,
    pub hour_length: u32,
}

impl Default for WaveTemplate {
    fn default() -> Self {
        Self {
            slot_length: 10,
            wave_size: 2,
            catchup_window: 10,
            hour_length: HOUR_LENGTH,
        }
    }
}

/// One entry of the per-hour layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutSeat {
    pub offset: u32,
    pub hour_position: u32,
    pub seat: u32,
}

impl WaveTemplate {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SchedError::InvalidTemplate(msg));
        if self.hour_length != HOUR_LENGTH {
            return bad(format!("hour_length must be {HOUR_LENGTH}, got {}", self.hour_length));
        }
        if self.slot_length == 0 {
            return bad("slot_length must be positive".into());
        }
        if self.wave_size < 2 {
            return bad(format!("wave_size must be at least 2, got {}", self.wave_size));
        }
        if self.slot_length + self.catchup_window > self.hour_length {
            return bad(format!(
                "slot_length {} plus catchup_window {} exceeds the {}-minute hour",
                self.slot_length, self.catchup_window, self.hour_length
            ));
        }
        Ok(())
    }

    /// Sequential (non-wave) slots that fit before the catch-up window.
    pub fn sequential_slots(&self) -> u32 {
        (self.hour_length - self.catchup_window - self.slot_length) / self.slot_length
    }

    pub fn slots_per_hour(&self) -> u32 {
        self.wave_size + self.sequential_slots()
    }

    /// Minute at which the catch-up window opens, relative to the hour start.
    pub fn catchup_start(&self) -> u32 {
        self.hour_length - self.catchup_window
    }

    pub fn hour_layout(&self) -> Vec<LayoutSeat> {
        let wave = (0..self.wave_size).map(|seat| LayoutSeat {
            offset: 0,
            hour_position: 0,
            seat,
        });
        let sequential = (1..=self.sequential_slots()).map(|k| LayoutSeat {
            offset: k * self.slot_length,
            hour_position: k,
            seat: 0,
        });
        wave.chain(sequential).collect()
    }
}

/// A concrete working interval on one day, whole-hour aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorkingInterval {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl WorkingInterval {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        Self { start, end }
    }

    fn is_hour_aligned(t: &DateTime<Utc>) -> bool {
        t.minute() == 0 && t.second() == 0 && t.nanosecond() == 0
    }

    pub fn hours(&self) -> i64 {
        (self.end - self.start).num_hours()
    }
}

/// A recurring weekly block of working hours, e.g. Monday 08–12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeeklyHours {
    pub weekday: Weekday,
    pub start_hour: u32,
    pub end_hour: u32,
}

impl WeeklyHours {
    pub fn validate(&self) -> Result<()> {
        if self.start_hour >= self.end_hour || self.end_hour > 24 {
            return Err(SchedError::MisalignedHours(format!(
                "{} {:02}:00-{:02}:00 is not a valid whole-hour block",
                self.weekday, self.start_hour, self.end_hour
            )));
        }
        Ok(())
    }

    /// The concrete interval on `date`, if this block falls on that weekday.
    pub fn on(&self, date: NaiveDate) -> Option<WorkingInterval> {
        if date.weekday() != self.weekday || self.validate().is_err() {
            return None;
        }
        let at = |h: u32| {
            let midnight = Utc.from_utc_datetime(&date.and_time(NaiveTime::MIN));
            midnight + Duration::hours(i64::from(h))
        };
        Some(WorkingInterval::new(at(self.start_hour), at(self.end_hour)))
    }
}

/// Expands weekly blocks into the sorted concrete intervals of one date.
pub fn intervals_on(weekly: &[WeeklyHours], date: NaiveDate) -> Vec<WorkingInterval> {
    let mut out: Vec<_> = weekly.iter().filter_map(|w| w.on(date)).collect();
    out.sort();
    out
}

fn check_intervals(intervals: &[WorkingInterval]) -> Result<Vec<WorkingInterval>> {
    let mut sorted = intervals.to_vec();
    sorted.sort();
    for iv in &sorted {
        if !WorkingInterval::is_hour_aligned(&iv.start) || !WorkingInterval::is_hour_aligned(&iv.end) {
            return Err(SchedError::MisalignedHours(format!("{} - {}", iv.start, iv.end)));
        }
        if iv.end <= iv.start {
            return Err(SchedError::MisalignedHours(format!(
                "interval {} - {} is empty",
                iv.start, iv.end
            )));
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(SchedError::MisalignedHours(format!(
                "intervals starting {} and {} overlap",
                pair[0].start, pair[1].start
            )));
        }
    }
    Ok(sorted)
}

pub fn slot_id(doctor: &DoctorId, start: &DateTime<Utc>, seat: u32) -> SlotId {
    SlotId(format!("{doctor}@{}-{seat}", start.format("%Y%m%d%H%M")))
}

/// Lays the wave template over every hour of every interval. All slots start
/// out `Available`, sorted by start then seat.
pub fn generate_slots(
    doctor_id: &DoctorId,
    working_hours: &[WorkingInterval],
    template: &WaveTemplate,
) -> Result<Vec<TimeSlot>> {
    template.validate()?;
    let intervals = check_intervals(working_hours)?;
    let layout = template.hour_layout();
    let mut slots = Vec::new();
    for iv in intervals {
        for h in 0..iv.hours() {
            let hour_start = iv.start + Duration::hours(h);
            for seat in &layout {
                let start = hour_start + Duration::minutes(i64::from(seat.offset));
                slots.push(TimeSlot {
                    slot_id: slot_id(doctor_id, &start, seat.seat),
                    doctor_id: doctor_id.clone(),
                    start,
                    duration: template.slot_length,
                    state: SlotState::Available,
                    hour_position: seat.hour_position,
                });
            }
        }
    }
    Ok(slots)
}

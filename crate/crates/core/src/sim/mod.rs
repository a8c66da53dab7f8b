//! Discrete-event simulation of one clinic day under two booking policies:
//! the walk-in first-come-first-served queue, and modified-wave
//! appointments generated from a [`WaveTemplate`].
//!
//! All event times are whole minutes and all randomness comes from a
//! ChaCha8 stream seeded by the config, so a (config, seed) pair always
//! produces the same report.

mod dist;
mod report;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dist::Distribution;
pub use report::{emit_comparison, emit_report, emit_rows, ReportFormat, ReportRow};

use crate::template::{WaveTemplate, HOUR_LENGTH};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("baseline and treatment differ in {0}")]
    MismatchedConfigs(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    FcfsWalkIn,
    ModifiedWave(WaveTemplate),
}

impl Policy {
    pub fn label(&self) -> &'static str {
        match self {
            Policy::FcfsWalkIn => "fcfs_walk_in",
            Policy::ModifiedWave(_) => "modified_wave",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub policy: Policy,
    #[serde(default = "one")]
    pub doctors: u32,
    /// Clinic-day length in minutes.
    pub horizon: u32,
    pub patients: u32,
    pub service_time: Distribution,
    /// Arrival offset relative to the scheduled time (or to opening for
    /// walk-ins, where negative offsets count as zero).
    #[serde(default)]
    pub punctuality_jitter: Distribution,
    /// Probability an appointment patient never shows; walk-ins always come.
    #[serde(default)]
    pub no_show_probability: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> u32 {
    1
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.doctors == 0 {
            return bad("at least one doctor is required".into());
        }
        self.service_time
            .validate()
            .map_err(|e| SimError::InvalidConfig(format!("service_time: {e}")))?;
        if self.service_time.lower_bound() < 0.0 {
            return bad("service_time must not go negative".into());
        }
        self.punctuality_jitter
            .validate()
            .map_err(|e| SimError::InvalidConfig(format!("punctuality_jitter: {e}")))?;
        if !(0.0..=1.0).contains(&self.no_show_probability) {
            return bad("no_show_probability must lie in [0, 1]".into());
        }
        if let Policy::ModifiedWave(t) = &self.policy {
            t.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: String,
    pub patients: u32,
    /// Patients whose service began before the horizon.
    pub served: u32,
    pub waiting_at_horizon: u32,
    pub no_shows: u32,
    /// Arrival to service start, minutes, in patient order (no-shows omitted).
    pub waits: Vec<i64>,
    pub mean_wait: f64,
    pub median_wait: f64,
    pub p90_wait: i64,
    pub max_wait: i64,
    /// Summed over doctors, up to the later of horizon and last completion.
    pub idle_minutes: i64,
    /// Summed over doctors.
    pub overtime_minutes: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction_vs_baseline: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WaitStats {
    pub mean: f64,
    pub median: f64,
    pub p90: i64,
    pub max: i64,
}

impl WaitStats {
    pub fn of(waits: &[i64]) -> Self {
        if waits.is_empty() {
            return Self::default();
        }
        let mut sorted = waits.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
        };
        // nearest rank
        let rank = (9 * n).div_ceil(10).max(1);
        Self {
            mean: sorted.iter().sum::<i64>() as f64 / n as f64,
            median,
            p90: sorted[rank - 1],
            max: sorted[n - 1],
        }
    }
}

#[derive(Debug, Clone)]
struct Patient {
    arrival: i64,
    service: i64,
    /// Position in the booking order; walk-ins use arrival order.
    scheduled: usize,
    doctor: Option<usize>,
    no_show: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    // service ends sort before arrivals at equal times; both are applied
    // before anyone is dispatched
    ServiceEnd(usize),
    Arrival(usize),
}

/// Starts of the wave appointments in booking order as `(minute, doctor)`.
/// Extra hours are appended past the horizon when the day's capacity is
/// smaller than the patient count.
fn wave_schedule(t: &WaveTemplate, doctors: usize, horizon: u32, patients: usize) -> Vec<(i64, usize)> {
    let layout = t.hour_layout();
    let per_hour = layout.len() * doctors;
    let day_hours = horizon.div_ceil(HOUR_LENGTH) as usize;
    let hours = day_hours.max(patients.div_ceil(per_hour.max(1)));
    let mut out = Vec::with_capacity(hours * per_hour);
    for h in 0..hours {
        let base = (h as i64) * i64::from(HOUR_LENGTH);
        for seat in &layout {
            for d in 0..doctors {
                out.push((base + i64::from(seat.offset), d));
            }
        }
    }
    out.sort_by_key(|&(start, d)| (start, d));
    out.truncate(patients);
    out
}

pub fn run(config: &SimConfig) -> Result<SimReport, SimError> {
    config.validate()?;
    let n = config.patients as usize;
    let doctors = config.doctors as usize;
    let horizon = i64::from(config.horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // every patient draws jitter then service time, in index order, so both
    // policies see the same variates for the same seed
    let draws: Vec<(i64, i64, bool)> = (0..n)
        .map(|_| {
            let jitter = config.punctuality_jitter.sample(&mut rng);
            let service = config.service_time.sample(&mut rng).max(0);
            let u: f64 = rng.random();
            (jitter, service, u < config.no_show_probability)
        })
        .collect();

    let patients: Vec<Patient> = match &config.policy {
        Policy::FcfsWalkIn => draws
            .iter()
            .enumerate()
            .map(|(i, &(jitter, service, _))| Patient {
                arrival: jitter.max(0),
                service,
                scheduled: i,
                doctor: None,
                no_show: false,
            })
            .collect(),
        Policy::ModifiedWave(t) => wave_schedule(t, doctors, config.horizon, n)
            .into_iter()
            .zip(&draws)
            .enumerate()
            .map(|(i, ((start, d), &(jitter, service, no_show)))| Patient {
                arrival: (start + jitter).max(0),
                service,
                scheduled: i,
                doctor: Some(d),
                no_show,
            })
            .collect(),
    };

    let mut events: BinaryHeap<Reverse<(i64, Event)>> = patients
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.no_show)
        .map(|(i, p)| Reverse((p.arrival, Event::Arrival(i))))
        .collect();

    // walk-in queue ordered by (arrival, index); wave queues per doctor
    // ordered by (booking position, arrival)
    let mut fcfs_queue: VecDeque<usize> = VecDeque::new();
    let mut wave_queues: Vec<BTreeSet<(usize, i64, usize)>> = vec![BTreeSet::new(); doctors];
    let mut busy_until: Vec<Option<i64>> = vec![None; doctors];
    let mut busy_total = vec![0i64; doctors];
    let mut last_end = vec![0i64; doctors];
    let mut start_at: Vec<Option<i64>> = vec![None; n];

    while let Some(Reverse((now, _))) = events.peek().copied() {
        while let Some(Reverse((t, ev))) = events.peek().copied() {
            if t != now {
                break;
            }
            events.pop();
            match ev {
                Event::Arrival(i) => match patients[i].doctor {
                    None => fcfs_queue.push_back(i),
                    Some(d) => {
                        wave_queues[d].insert((patients[i].scheduled, patients[i].arrival, i));
                    }
                },
                Event::ServiceEnd(d) => busy_until[d] = None,
            }
        }
        for d in 0..doctors {
            if busy_until[d].is_some() {
                continue;
            }
            let next = match &config.policy {
                Policy::FcfsWalkIn => fcfs_queue.pop_front(),
                Policy::ModifiedWave(_) => wave_queues[d].pop_first().map(|(_, _, i)| i),
            };
            if let Some(i) = next {
                let end = now + patients[i].service;
                start_at[i] = Some(now);
                busy_until[d] = Some(end);
                busy_total[d] += patients[i].service;
                last_end[d] = last_end[d].max(end);
                events.push(Reverse((end, Event::ServiceEnd(d))));
            }
        }
    }

    let mut waits = Vec::with_capacity(n);
    let (mut served, mut waiting, mut no_shows) = (0u32, 0u32, 0u32);
    for (p, start) in patients.iter().zip(&start_at) {
        match start {
            None => no_shows += 1,
            Some(s) => {
                waits.push(s - p.arrival);
                if *s < horizon {
                    served += 1;
                } else {
                    waiting += 1;
                }
            }
        }
    }
    let idle = (0..doctors).map(|d| horizon.max(last_end[d]) - busy_total[d]).sum();
    let overtime = last_end.iter().map(|e| (e - horizon).max(0)).sum();
    let stats = WaitStats::of(&waits);
    Ok(SimReport {
        policy: config.policy.label().to_owned(),
        patients: config.patients,
        served,
        waiting_at_horizon: waiting,
        no_shows,
        waits,
        mean_wait: stats.mean,
        median_wait: stats.median,
        p90_wait: stats.p90,
        max_wait: stats.max,
        idle_minutes: idle,
        overtime_minutes: overtime,
        reduction_vs_baseline: None,
    })
}

/// Relative reduction `(base - treat) / base`; zero when the baseline is zero.
pub fn reduction(base: f64, treat: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        (base - treat) / base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub replication: u32,
    pub seed: u64,
    pub baseline_mean: f64,
    pub treatment_mean: f64,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub replications: Vec<Replication>,
    /// Waits pooled over replications; `patients`, `served`, `no_shows` are
    /// totals and idle/overtime are per-replication means.
    pub baseline: SimReport,
    pub treatment: SimReport,
    pub reduction: f64,
    /// Replications in which the treatment mean wait was strictly lower.
    pub treatment_wins: u32,
}

fn pool(reports: &[SimReport]) -> SimReport {
    let waits: Vec<i64> = reports.iter().flat_map(|r| r.waits.iter().copied()).collect();
    let stats = WaitStats::of(&waits);
    let reps = reports.len().max(1) as i64;
    let sum = |f: fn(&SimReport) -> u32| reports.iter().map(f).sum::<u32>();
    SimReport {
        policy: reports.first().map(|r| r.policy.clone()).unwrap_or_default(),
        patients: sum(|r| r.patients),
        served: sum(|r| r.served),
        waiting_at_horizon: sum(|r| r.waiting_at_horizon),
        no_shows: sum(|r| r.no_shows),
        waits,
        mean_wait: stats.mean,
        median_wait: stats.median,
        p90_wait: stats.p90,
        max_wait: stats.max,
        idle_minutes: reports.iter().map(|r| r.idle_minutes).sum::<i64>() / reps,
        overtime_minutes: reports.iter().map(|r| r.overtime_minutes).sum::<i64>() / reps,
        reduction_vs_baseline: None,
    }
}

/// Runs both configs over seeds `baseline.seed, baseline.seed + 1, ...`,
/// the same seed for both arms of each replication.
pub fn compare(baseline: &SimConfig, treatment: &SimConfig, replications: u32) -> Result<Comparison, SimError> {
    if replications == 0 {
        return Err(SimError::InvalidConfig("replications must be positive".into()));
    }
    baseline.validate()?;
    treatment.validate()?;
    if baseline.patients != treatment.patients {
        return Err(SimError::MismatchedConfigs("patients".into()));
    }
    if baseline.horizon != treatment.horizon {
        return Err(SimError::MismatchedConfigs("horizon".into()));
    }
    if baseline.service_time != treatment.service_time {
        return Err(SimError::MismatchedConfigs("service_time".into()));
    }
    let mut rows = Vec::with_capacity(replications as usize);
    let mut base_reports = Vec::with_capacity(replications as usize);
    let mut treat_reports = Vec::with_capacity(replications as usize);
    let mut wins = 0;
    for r in 0..replications {
        let seed = baseline.seed.wrapping_add(u64::from(r));
        let b = run(&SimConfig { seed, ..baseline.clone() })?;
        let t = run(&SimConfig { seed, ..treatment.clone() })?;
        if t.mean_wait < b.mean_wait {
            wins += 1;
        }
        rows.push(Replication {
            replication: r,
            seed,
            baseline_mean: b.mean_wait,
            treatment_mean: t.mean_wait,
            reduction: reduction(b.mean_wait, t.mean_wait),
        });
        base_reports.push(b);
        treat_reports.push(t);
    }
    let baseline = pool(&base_reports);
    let mut treatment = pool(&treat_reports);
    let red = reduction(baseline.mean_wait, treatment.mean_wait);
    treatment.reduction_vs_baseline = Some(red);
    Ok(Comparison {
        replications: rows,
        baseline,
        treatment,
        reduction: red,
        treatment_wins: wins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fcfs(patients: u32) -> SimConfig {
        SimConfig {
            policy: Policy::FcfsWalkIn,
            doctors: 1,
            horizon: 180,
            patients,
            service_time: Distribution::Deterministic(10.0),
            punctuality_jitter: Distribution::default(),
            no_show_probability: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn stats_nearest_rank() {
        let s = WaitStats::of(&(1..=10).collect::<Vec<_>>());
        assert_eq!(s.p90, 9);
        assert_eq!(s.median, 5.5);
        assert_eq!(s.max, 10);
        assert_eq!(WaitStats::of(&[]), WaitStats::default());
    }

    #[test]
    fn zero_patients() {
        for policy in [Policy::FcfsWalkIn, Policy::ModifiedWave(WaveTemplate::default())] {
            let r = run(&SimConfig { policy, ..fcfs(0) }).unwrap();
            assert_eq!((r.served, r.mean_wait, r.max_wait, r.overtime_minutes), (0, 0.0, 0, 0));
            assert!(r.waits.is_empty());
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(run(&SimConfig { horizon: 0, ..fcfs(1) }).is_err());
        assert!(run(&SimConfig { doctors: 0, ..fcfs(1) }).is_err());
        assert!(run(&SimConfig { no_show_probability: 1.5, ..fcfs(1) }).is_err());
        let bad = Policy::ModifiedWave(WaveTemplate { wave_size: 1, ..Default::default() });
        assert!(run(&SimConfig { policy: bad, ..fcfs(1) }).is_err());
        assert!(matches!(compare(&fcfs(1), &fcfs(1), 0), Err(SimError::InvalidConfig(_))));
        assert!(matches!(compare(&fcfs(1), &fcfs(2), 1), Err(SimError::MismatchedConfigs(_))));
    }

    #[test]
    fn identical_configs_reduce_nothing() {
        let c = compare(&fcfs(18), &fcfs(18), 3).unwrap();
        assert_eq!(c.reduction, 0.0);
        assert_eq!(c.treatment_wins, 0);
    }

    #[test]
    fn overflow_patients_extend_past_horizon() {
        let cfg = SimConfig { policy: Policy::ModifiedWave(WaveTemplate::default()), ..fcfs(20) };
        let r = run(&cfg).unwrap();
        assert_eq!(r.served + r.waiting_at_horizon, 20);
        assert!(r.overtime_minutes > 0);
    }

    #[test]
    fn no_shows_are_counted() {
        let cfg = SimConfig {
            policy: Policy::ModifiedWave(WaveTemplate::default()),
            no_show_probability: 1.0,
            ..fcfs(6)
        };
        let r = run(&cfg).unwrap();
        assert_eq!(r.no_shows, 6);
        assert_eq!(r.served, 0);
    }

    #[test]
    fn config_json() {
        let cfg: SimConfig = serde_json::from_str(
            r#"{"policy":{"modified_wave":{"slot_length":10,"wave_size":2,"catchup_window":10}},
                "horizon":180,"patients":18,"service_time":{"deterministic":10},"seed":42}"#,
        )
        .unwrap();
        assert_eq!(cfg.doctors, 1);
        assert_eq!(cfg.policy, Policy::ModifiedWave(WaveTemplate::default()));
        let cfg: SimConfig =
            serde_json::from_str(r#"{"policy":"fcfs_walk_in","horizon":180,"patients":18,"service_time":{"deterministic":10}}"#)
                .unwrap();
        assert_eq!(cfg.policy, Policy::FcfsWalkIn);
    }
}

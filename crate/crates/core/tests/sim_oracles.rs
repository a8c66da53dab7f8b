//! Simulator checked against closed forms and a minute-stepped re-simulation.

use proptest::prelude::*;
use wavesched_core::sim::{compare, run, Distribution, Policy, SimConfig};
use wavesched_core::template::WaveTemplate;

fn desk(policy: Policy) -> SimConfig {
    SimConfig {
        policy,
        doctors: 1,
        horizon: 180,
        patients: 18,
        service_time: Distribution::Deterministic(10.0),
        punctuality_jitter: Distribution::Deterministic(0.0),
        no_show_probability: 0.0,
        seed: 2026,
    }
}

/// Single doctor, punctual patients, deterministic service `m`: walks the
/// clock one minute at a time and starts the lowest-numbered present
/// patient whenever the doctor is free.
fn minute_stepped_waits(arrivals: &[i64], m: i64) -> Vec<i64> {
    let n = arrivals.len();
    let mut start = vec![None; n];
    let mut free_at = 0i64;
    let mut t = 0i64;
    while start.iter().any(Option::is_none) {
        if t >= free_at {
            if let Some(i) = (0..n).find(|&i| start[i].is_none() && arrivals[i] <= t) {
                start[i] = Some(t);
                free_at = t + m;
                // a zero-length service frees the doctor in the same minute
                if m == 0 {
                    continue;
                }
            }
        }
        t += 1;
    }
    (0..n).map(|i| start[i].unwrap() - arrivals[i]).collect()
}

/// Appointment minutes for one doctor, in booking order, enumerated from
/// the template definition directly.
fn wave_arrivals(t: &WaveTemplate, patients: usize) -> Vec<i64> {
    let mut out = Vec::new();
    let mut hour = 0i64;
    while out.len() < patients {
        for _ in 0..t.wave_size {
            out.push(hour * 60);
        }
        let mut minute = t.slot_length as i64;
        while minute + t.slot_length as i64 <= 60 - t.catchup_window as i64 {
            out.push(hour * 60 + minute);
            minute += t.slot_length as i64;
        }
        hour += 1;
    }
    out.truncate(patients);
    out
}

#[test]
fn fcfs_desk_scale_arithmetic_series() {
    let r = run(&desk(Policy::FcfsWalkIn)).unwrap();
    let expected: Vec<i64> = (0..18).map(|k| 10 * k).collect();
    assert_eq!(r.waits, expected);
    assert_eq!(r.mean_wait, 85.0);
    assert_eq!(r.max_wait, 170);
    assert_eq!(r.served, 18);
    assert_eq!(r.overtime_minutes, 0);
}

#[test]
fn wave_desk_scale_hand_trace() {
    // Each hour: wave pair at :00, singles at :10 .. :40, 60 minutes of work.
    // First wave patient starts on arrival; everyone after starts 10 minutes
    // after arriving because the doctor is exactly one service behind.
    let r = run(&desk(Policy::ModifiedWave(WaveTemplate::default()))).unwrap();
    let hour = [0, 10, 10, 10, 10, 10];
    let expected: Vec<i64> = hour.iter().cycle().take(18).copied().collect();
    assert_eq!(r.waits, expected);
    assert_eq!(r.mean_wait, 150.0 / 18.0);
    assert_eq!(r.max_wait, 10);
    assert_eq!(r.overtime_minutes, 0);
    assert_eq!(r.idle_minutes, 0);
    assert_eq!(minute_stepped_waits(&wave_arrivals(&WaveTemplate::default(), 18), 10), expected);
}

#[test]
fn desk_scale_reduction() {
    let c = compare(&desk(Policy::FcfsWalkIn), &desk(Policy::ModifiedWave(WaveTemplate::default())), 1).unwrap();
    let expected = (85.0 - 150.0 / 18.0) / 85.0;
    assert!((c.reduction - expected).abs() < 1e-12);
    assert!(c.reduction > 0.90 && c.reduction < 0.91);
}

#[test]
fn identical_seeds_identical_reports() {
    let cfg = SimConfig {
        service_time: Distribution::TruncNormal { mean: 10.0, sd: 2.0, min: 5.0, max: 20.0 },
        punctuality_jitter: Distribution::Uniform { min: -5, max: 5 },
        ..desk(Policy::ModifiedWave(WaveTemplate::default()))
    };
    let a = serde_json::to_string(&run(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&run(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = serde_json::to_string(&run(&SimConfig { seed: 7, ..cfg }).unwrap()).unwrap();
    assert_ne!(a, c);
}

fn arb_service() -> impl Strategy<Value = Distribution> {
    prop_oneof![
        (0u32..30).prop_map(|m| Distribution::Deterministic(m as f64)),
        (5.0f64..15.0, 0.0f64..4.0).prop_map(|(mean, sd)| Distribution::TruncNormal {
            mean,
            sd,
            min: 1.0,
            max: 30.0
        }),
        (1.0f64..20.0).prop_map(|mean| Distribution::Exponential { mean }),
    ]
}

fn arb_template() -> impl Strategy<Value = WaveTemplate> {
    (1u32..=30, 2u32..=4, 0u32..=30)
        .prop_filter("fits in an hour", |(s, _, c)| s + c <= 60)
        .prop_map(|(slot_length, wave_size, catchup_window)| WaveTemplate {
            slot_length,
            wave_size,
            catchup_window,
            hour_length: 60,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fcfs_mean_is_m_n_minus_one_over_two(m in 0u32..40, n in 1u32..60) {
        let cfg = SimConfig {
            patients: n,
            service_time: Distribution::Deterministic(m as f64),
            ..desk(Policy::FcfsWalkIn)
        };
        let r = run(&cfg).unwrap();
        prop_assert_eq!(r.mean_wait * 2.0, (m * (n - 1)) as f64);
    }

    #[test]
    fn wave_matches_minute_stepping(t in arb_template(), m in 0i64..25, n in 0usize..40) {
        let cfg = SimConfig {
            patients: n as u32,
            service_time: Distribution::Deterministic(m as f64),
            ..desk(Policy::ModifiedWave(t))
        };
        let r = run(&cfg).unwrap();
        prop_assert_eq!(r.waits, minute_stepped_waits(&wave_arrivals(&t, n), m));
    }

    #[test]
    fn conservation_and_non_negativity(
        wave in any::<bool>(),
        t in arb_template(),
        service in arb_service(),
        doctors in 1u32..4,
        patients in 0u32..60,
        horizon in 60u32..300,
        jitter in 0i64..10,
        no_show in 0.0f64..0.3,
        seed in any::<u64>(),
    ) {
        let cfg = SimConfig {
            policy: if wave { Policy::ModifiedWave(t) } else { Policy::FcfsWalkIn },
            doctors,
            horizon,
            patients,
            service_time: service,
            punctuality_jitter: Distribution::Uniform { min: -jitter, max: jitter },
            no_show_probability: no_show,
            seed,
        };
        let r = run(&cfg).unwrap();
        prop_assert_eq!(r.served + r.waiting_at_horizon + r.no_shows, patients);
        prop_assert!(r.waits.iter().all(|w| *w >= 0));
        prop_assert!(r.idle_minutes >= 0 && r.overtime_minutes >= 0);
        prop_assert!(r.mean_wait <= r.max_wait as f64);
        prop_assert!(r.served <= patients);
        let again = run(&cfg).unwrap();
        prop_assert_eq!(r, again);
    }
}

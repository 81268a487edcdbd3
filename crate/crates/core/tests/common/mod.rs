#![allow(dead_code)]

use restoration::dependence::{BinSpec, CellRect, RankedSample};
use restoration::event::{FailureEvent, SeverityThresholds};
use restoration::ingest::FailureRecord;
use restoration::synth::{generate_event, DispatchPolicy, SynthConfig};

pub fn synth(seed: u64, n: usize, policy: DispatchPolicy, crews: usize) -> Vec<FailureRecord> {
    let cfg = SynthConfig {
        seed,
        n_failures: n,
        policy,
        crews,
        ..SynthConfig::default()
    };
    generate_event(&cfg).expect("valid config").records
}

/// Single crew, every failure in before the first dispatch.
pub fn strict_priority_config(seed: u64, n: usize) -> SynthConfig {
    SynthConfig {
        seed,
        n_failures: n,
        policy: DispatchPolicy::SizePriority,
        crews: 1,
        arrival_rate_per_hour: 60_000.0,
        mobilization_delay: 60,
        ..SynthConfig::default()
    }
}

pub fn event_of(records: Vec<FailureRecord>) -> FailureEvent {
    FailureEvent::new("e", records, 10, &SeverityThresholds::default()).expect("non-empty event")
}

/// A varied synthetic event drawn from `seed`.
pub fn random_event_records(seed: u64) -> Vec<FailureRecord> {
    let policy = [DispatchPolicy::SizePriority, DispatchPolicy::Fifo, DispatchPolicy::Random][(seed % 3) as usize];
    let cfg = SynthConfig {
        seed,
        n_failures: 50 + (seed as usize * 37) % 400,
        policy,
        crews: 1 + (seed as usize % 7),
        arrival_rate_per_hour: [30.0, 120.0, 600.0][(seed / 3 % 3) as usize],
        start: (seed as i64 % 5) * 1000 - 2000,
        mobilization_delay: (seed as i64 * 13) % 90,
        ..SynthConfig::default()
    };
    generate_event(&cfg).expect("valid config").records
}

/// Replace every duration with `g(duration)`, keeping occurrence times.
pub fn remap_durations(records: &[FailureRecord], g: impl Fn(i64) -> i64) -> Vec<FailureRecord> {
    records
        .iter()
        .map(|r| FailureRecord {
            restored_at: r.occurred_at + g(r.duration()),
            ..r.clone()
        })
        .collect()
}

/// p - q*r by direct enumeration over the samples.
pub fn brute_f(samples: &[RankedSample], bins: &BinSpec, rect: &CellRect) -> f64 {
    let n = samples.len() as f64;
    let in_a = |s: &RankedSample| (rect.x0..=rect.x1).contains(&bins.x_bin(s.size_x));
    let in_b = |s: &RankedSample| (rect.y0..=rect.y1).contains(&bins.y_bin(s.speed_y));
    let p = samples.iter().filter(|s| in_a(s) && in_b(s)).count() as f64 / n;
    let q = samples.iter().filter(|s| in_a(s)).count() as f64 / n;
    let r = samples.iter().filter(|s| in_b(s)).count() as f64 / n;
    p - q * r
}

pub fn all_rects(nx: usize, ny: usize) -> impl Iterator<Item = CellRect> {
    (0..nx).flat_map(move |x0| {
        (x0..nx).flat_map(move |x1| {
            (0..ny).flat_map(move |y0| (y0..ny).map(move |y1| CellRect { x0, x1, y0, y1 }))
        })
    })
}

/// Peak of pending repairs by scanning every interval endpoint.
pub fn brute_peak(records: &[FailureRecord]) -> (i64, usize) {
    let mut times: Vec<i64> = records.iter().flat_map(|r| [r.occurred_at, r.restored_at]).collect();
    times.sort_unstable();
    times.dedup();
    let mut best = (times[0], 0);
    for t in times {
        let c = records.iter().filter(|r| r.occurred_at <= t && t < r.restored_at).count();
        if c > best.1 {
            best = (t, c);
        }
    }
    best
}

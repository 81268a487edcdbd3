//! Seeded synthetic failure events.
//!
//! Failures arrive as a Poisson stream, sizes are Pareto distributed and
//! rounded up to whole customers, and each failure needs a lognormal amount
//! of crew work. A fixed number of crews, mobilized some minutes after the
//! stream starts, repair queued failures without preemption in the order the
//! dispatch policy picks. Every draw comes from one ChaCha8 stream, so a
//! trace is a pure function of its [`SynthConfig`].

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Pareto};
use serde::{Deserialize, Serialize};

use crate::dependence::{assign_categories, rank_recovery_speed, CategoryLabel, CategoryThresholds};
use crate::error::{Error, Result};
use crate::ingest::{DeviceType, FailureRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispatchPolicy {
    /// Largest failure first; ties by arrival.
    SizePriority,
    Fifo,
    /// Uniform pick among queued failures.
    Random,
}

impl fmt::Display for DispatchPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DispatchPolicy::SizePriority => "size-priority",
            DispatchPolicy::Fifo => "fifo",
            DispatchPolicy::Random => "random",
        })
    }
}

impl FromStr for DispatchPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "size-priority" | "sizepriority" | "priority" => Ok(DispatchPolicy::SizePriority),
            "fifo" => Ok(DispatchPolicy::Fifo),
            "random" => Ok(DispatchPolicy::Random),
            other => Err(Error::InvalidConfig(format!("unknown dispatch policy `{other}`"))),
        }
    }
}

pub type DevicePriors = BTreeMap<CategoryLabel, Vec<(DeviceType, f64)>>;

pub fn default_device_priors() -> DevicePriors {
    use DeviceType::*;
    BTreeMap::from([
        (CategoryLabel::PrioritizedLarge, vec![(SubstationBreaker, 0.9), (Recloser, 0.1)]),
        (
            CategoryLabel::NonPrioritizedLarge,
            vec![(Recloser, 0.5), (FusedDisc, 0.4), (SubstationBreaker, 0.1)],
        ),
        (CategoryLabel::ProlongedSmall, vec![(Transformer, 0.6), (FusedCutout, 0.4)]),
        (
            CategoryLabel::RemainingSmall,
            vec![(Transformer, 0.4), (FusedCutout, 0.4), (Other, 0.2)],
        ),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_failures: usize,
    /// Minute at which the arrival stream starts.
    pub start: i64,
    pub arrival_rate_per_hour: f64,
    /// Pareto shape; scale is fixed at one customer.
    pub size_alpha: f64,
    /// Lognormal parameters of crew work, in log-minutes.
    pub repair_mu: f64,
    pub repair_sigma: f64,
    pub crews: usize,
    /// Crews become available this many minutes after `start`.
    pub mobilization_delay: i64,
    pub policy: DispatchPolicy,
    pub device_priors: DevicePriors,
    pub category_thresholds: CategoryThresholds,
    pub storm_flag: bool,
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_failures: 1000,
            start: 0,
            arrival_rate_per_hour: 120.0,
            size_alpha: 1.1,
            repair_mu: 60f64.ln(),
            repair_sigma: 0.6,
            crews: 10,
            mobilization_delay: 60,
            policy: DispatchPolicy::SizePriority,
            device_priors: default_device_priors(),
            category_thresholds: CategoryThresholds::default(),
            storm_flag: true,
            id_prefix: "syn".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_failures == 0 {
            return Err(Error::EmptyConfig);
        }
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.size_alpha.is_nan() || self.size_alpha <= 0.0 {
            return bad("size alpha must be positive");
        }
        if self.repair_sigma.is_nan() || self.repair_sigma < 0.0 || !self.repair_mu.is_finite() {
            return bad("repair lognormal needs finite mu and sigma >= 0");
        }
        if self.arrival_rate_per_hour.is_nan() || self.arrival_rate_per_hour <= 0.0 {
            return bad("arrival rate must be positive");
        }
        if self.crews == 0 {
            return bad("need at least one crew");
        }
        if self.mobilization_delay < 0 {
            return bad("mobilization delay cannot be negative");
        }
        for (cat, prior) in &self.device_priors {
            if prior.is_empty() || prior.iter().any(|(_, w)| w.is_nan() || *w < 0.0) || prior.iter().all(|(_, w)| *w == 0.0) {
                return Err(Error::InvalidConfig(format!("device prior for {} is not a distribution", cat.as_str())));
            }
        }
        Ok(())
    }
}

/// A unit of repair work offered to the dispatcher.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub arrival: i64,
    pub work: i64,
    pub size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub crew: usize,
    pub dispatch_order: usize,
    pub start: i64,
    pub finish: i64,
}

/// Event-driven crew dispatch without preemption.
///
/// Whenever a crew is free it takes the failure the policy picks among those
/// already arrived; ties go to the earlier arrival, then the lower job index.
/// If nothing is queued the crew waits for the next arrival. The result is
/// indexed like `jobs`.
pub fn simulate_restoration<R: Rng + ?Sized>(
    jobs: &[Job],
    crews: usize,
    available_from: i64,
    policy: DispatchPolicy,
    rng: &mut R,
) -> Vec<Assignment> {
    let n = jobs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (jobs[i].arrival, i));

    let mut free: BinaryHeap<Reverse<(i64, usize)>> = (0..crews.max(1)).map(|c| Reverse((available_from, c))).collect();
    let mut queue: Vec<usize> = Vec::new();
    let mut next = 0;
    let mut out = vec![
        Assignment {
            crew: 0,
            dispatch_order: 0,
            start: 0,
            finish: 0
        };
        n
    ];

    for dispatch_order in 0..n {
        let Reverse((free_at, crew)) = free.pop().expect("crew heap never empties");
        let mut now = free_at;
        if queue.is_empty() {
            now = now.max(jobs[order[next]].arrival);
        }
        while next < n && jobs[order[next]].arrival <= now {
            queue.push(order[next]);
            next += 1;
        }
        let pos = match policy {
            DispatchPolicy::Fifo => 0,
            DispatchPolicy::SizePriority => {
                let mut best = 0;
                for (p, &j) in queue.iter().enumerate().skip(1) {
                    if jobs[j].size > jobs[queue[best]].size {
                        best = p;
                    }
                }
                best
            }
            DispatchPolicy::Random => rng.random_range(0..queue.len()),
        };
        let j = queue.remove(pos);
        let finish = now + jobs[j].work;
        out[j] = Assignment {
            crew,
            dispatch_order,
            start: now,
            finish,
        };
        free.push(Reverse((finish, crew)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub record_id: String,
    pub arrival_order: usize,
    pub dispatch_order: usize,
    pub crew: usize,
    pub dispatched_at: i64,
    pub work: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub records: Vec<FailureRecord>,
    pub truth: Vec<GroundTruth>,
}

impl SimTrace {
    /// Total minutes crews spent busy.
    pub fn busy_minutes(&self) -> i64 {
        self.records
            .iter()
            .zip(&self.truth)
            .map(|(r, t)| r.restored_at - t.dispatched_at)
            .sum()
    }
}

fn invalid(e: impl fmt::Display) -> Error {
    Error::InvalidConfig(e.to_string())
}

/// Generate one synthetic event.
pub fn generate_event(config: &SynthConfig) -> Result<SimTrace> {
    config.validate()?;
    let n = config.n_failures;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let gaps = Exp::new(config.arrival_rate_per_hour / 60.0).map_err(invalid)?;
    let mut clock = 0.0;
    let arrivals: Vec<i64> = (0..n)
        .map(|_| {
            clock += gaps.sample(&mut rng);
            config.start + clock.floor() as i64
        })
        .collect();

    let pareto = Pareto::new(1.0, config.size_alpha).map_err(invalid)?;
    let sizes: Vec<u64> = (0..n)
        .map(|_| pareto.sample(&mut rng).ceil().min(1e12) as u64)
        .collect();

    let repair = LogNormal::new(config.repair_mu, config.repair_sigma).map_err(invalid)?;
    let works: Vec<i64> = (0..n)
        .map(|_| (repair.sample(&mut rng).ceil().min(1e9) as i64).max(1))
        .collect();

    let jobs: Vec<Job> = (0..n)
        .map(|i| Job {
            arrival: arrivals[i],
            work: works[i],
            size: sizes[i],
        })
        .collect();
    let plan = simulate_restoration(
        &jobs,
        config.crews,
        config.start + config.mobilization_delay,
        config.policy,
        &mut rng,
    );

    let width = n.to_string().len();
    let mut records: Vec<FailureRecord> = (0..n)
        .map(|i| FailureRecord {
            record_id: format!("{}-{:0width$}", config.id_prefix, i),
            occurred_at: jobs[i].arrival,
            restored_at: plan[i].finish,
            customers: jobs[i].size,
            device: DeviceType::Other,
            latitude: None,
            longitude: None,
            major_storm: config.storm_flag,
        })
        .collect();

    let labels = assign_categories(&rank_recovery_speed(&records), &config.category_thresholds);
    let samplers: BTreeMap<CategoryLabel, (Vec<DeviceType>, WeightedIndex<f64>)> = config
        .device_priors
        .iter()
        .map(|(cat, prior)| {
            let devices = prior.iter().map(|(d, _)| *d).collect();
            let weights = WeightedIndex::new(prior.iter().map(|(_, w)| *w)).map_err(invalid)?;
            Ok((*cat, (devices, weights)))
        })
        .collect::<Result<_>>()?;
    for r in &mut records {
        if let Some((devices, weights)) = samplers.get(&labels[&r.record_id]) {
            r.device = devices[weights.sample(&mut rng)];
        }
        r.latitude = Some(round4(rng.random_range(42.0..45.0)));
        r.longitude = Some(round4(rng.random_range(-79.0..-73.5)));
    }

    let truth = (0..n)
        .map(|i| GroundTruth {
            record_id: records[i].record_id.clone(),
            arrival_order: i,
            dispatch_order: plan[i].dispatch_order,
            crew: plan[i].crew,
            dispatched_at: plan[i].start,
            work: jobs[i].work,
        })
        .collect();
    Ok(SimTrace { records, truth })
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

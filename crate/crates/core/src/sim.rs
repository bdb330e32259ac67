//! Exact discrete-time Monte Carlo of the priority queue.
//!
//! Each step: a task arrives, one of the L tasks present is selected by the
//! protocol and executed. A task executed in its arrival step has waiting
//! time tau = 1, so an L-task buffer accrues exactly L*t task-steps by time
//! t — the accounting identity `sum tau_i + sum residuals = L*t` holds
//! exactly on every run and is checked in debug builds.
//!
//! Runs are deterministic given the seed. Replicas use ChaCha streams: the
//! RNG for replica i is `ChaCha8Rng::seed_from_u64(seed)` with
//! `set_stream(i)`, a counter-based derivation whose outputs are independent
//! of scheduling.

use crate::dist::PriorityDistribution;
use crate::error::{Error, Result};
use crate::protocol::SelectionProtocol;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Per-step selection events of the coin-flip protocol family.
///
/// For L = 2 each step is one of {RandomNew, RandomOld, Priority} with
/// probabilities (1-p)/2, (1-p)/2, p. For L > 2 the uniform branch can also
/// pick a task that is neither the newest nor the oldest (RandomOther).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventCode {
    /// Uniform branch picked the task that just arrived.
    RandomNew,
    /// Uniform branch picked the oldest task; the old-task law renews.
    RandomOld,
    /// Uniform branch picked a middle task (only possible for L > 2).
    RandomOther,
    /// Priority branch executed the maximum-priority task.
    Priority,
}

#[derive(Debug, Clone, Copy)]
struct Task {
    priority: f64,
    arrival_step: u64,
}

/// Queue contents between steps: the L-1 tasks that survived, oldest first,
/// plus the step counter. During a step the arriving task makes the buffer
/// exactly L long before one task is executed.
#[derive(Debug, Clone)]
pub struct QueueState {
    residents: Vec<Task>,
    step: u64,
    l: usize,
}

impl QueueState {
    /// Initialize with L-1 i.i.d. resident tasks, present from step 1.
    pub fn init<R: Rng + ?Sized>(
        l: usize,
        protocol: &SelectionProtocol,
        dist: &PriorityDistribution,
        rng: &mut R,
    ) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidParameter(format!("buffer length {l} < 2")));
        }
        if l > 2 && !protocol.is_barabasi_family() {
            return Err(Error::UnsupportedConfig(
                "general selection protocols are defined for L = 2 only; \
                 use the coin-flip protocol for longer buffers"
                    .into(),
            ));
        }
        let residents = (0..l - 1)
            .map(|_| Task {
                priority: dist.sample(rng),
                arrival_step: 1,
            })
            .collect();
        Ok(QueueState { residents, step: 0, l })
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn buffer_len(&self) -> usize {
        self.l
    }

    /// Priorities of the resident (non-new) tasks, oldest first.
    pub fn resident_priorities(&self) -> Vec<f64> {
        self.residents.iter().map(|t| t.priority).collect()
    }

    /// Resident times t - arrival + 1 of the tasks still in the buffer.
    pub fn resident_times(&self) -> Vec<u64> {
        self.residents
            .iter()
            .map(|t| self.step - t.arrival_step + 1)
            .collect()
    }
}

/// The task executed by one step.
#[derive(Debug, Clone, Copy)]
pub struct Executed {
    pub priority: f64,
    pub waiting_time: u64,
    /// Selection event, present for the coin-flip family only.
    pub event: Option<EventCode>,
}

/// Advance the queue one step: a task arrives, one task is executed.
///
/// For L = 2 the arriving task is executed with probability v(new, old); for
/// longer buffers the coin-flip protocol applies (priority branch picks the
/// maximum, uniform branch picks any slot).
pub fn step<R: Rng + ?Sized>(
    state: &mut QueueState,
    protocol: &SelectionProtocol,
    dist: &PriorityDistribution,
    rng: &mut R,
) -> Result<Executed> {
    state.step += 1;
    let t = state.step;
    let new = Task {
        priority: dist.sample(rng),
        arrival_step: t,
    };

    let (executed, event) = if protocol.is_barabasi_family() {
        // Event decomposition: heads -> execute the maximum priority,
        // tails -> uniform over the L tasks present. For L = 2 this equals
        // executing the new task with probability v(new, old).
        if rng.random::<f64>() < protocol.p() {
            let mut best = new;
            let mut best_idx = None;
            for (i, task) in state.residents.iter().enumerate() {
                if task.priority > best.priority {
                    best = *task;
                    best_idx = Some(i);
                }
            }
            if let Some(i) = best_idx {
                state.residents.remove(i);
                state.residents.push(new);
            }
            (best, Some(EventCode::Priority))
        } else {
            let idx = rng.random_range(0..state.l);
            if idx == state.l - 1 {
                (new, Some(EventCode::RandomNew))
            } else {
                let picked = state.residents.remove(idx);
                state.residents.push(new);
                let code = if idx == 0 {
                    EventCode::RandomOld
                } else {
                    EventCode::RandomOther
                };
                (picked, Some(code))
            }
        }
    } else {
        let old = state.residents[0];
        if rng.random::<f64>() < protocol.v(new.priority, old.priority) {
            (new, None)
        } else {
            state.residents[0] = new;
            (old, None)
        }
    };

    Ok(Executed {
        priority: executed.priority,
        waiting_time: t - executed.arrival_step + 1,
        event,
    })
}

/// Waiting-time counts of the executed tasks (post-burn-in), plus the
/// resident times left in the buffer when the run stopped. Residents never
/// enter the histogram.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WaitingTimeHistogram {
    pub counts: BTreeMap<u64, u64>,
    pub total_executed: u64,
    pub residuals: Vec<u64>,
}

impl WaitingTimeHistogram {
    fn record(&mut self, tau: u64) {
        *self.counts.entry(tau).or_insert(0) += 1;
        self.total_executed += 1;
    }

    pub fn mean_tau(&self) -> f64 {
        if self.total_executed == 0 {
            return f64::NAN;
        }
        let sum: f64 = self.counts.iter().map(|(&k, &n)| k as f64 * n as f64).sum();
        sum / self.total_executed as f64
    }

    pub fn prob(&self, k: u64) -> f64 {
        *self.counts.get(&k).unwrap_or(&0) as f64 / self.total_executed as f64
    }

    /// Merge counts from another histogram (replica aggregation).
    pub fn merge(&mut self, other: &WaitingTimeHistogram) {
        for (&k, &n) in &other.counts {
            *self.counts.entry(k).or_insert(0) += n;
        }
        self.total_executed += other.total_executed;
        self.residuals.extend_from_slice(&other.residuals);
    }
}

/// Event-trace tallies for coin-flip runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventStats {
    pub random_new: u64,
    pub random_old: u64,
    pub random_other: u64,
    pub priority: u64,
    /// Number of step indices where L-1 consecutive RandomOld events begin.
    pub renewals: u64,
}

impl EventStats {
    fn record(&mut self, code: EventCode, l: usize, consecutive_old: &mut u64) {
        match code {
            EventCode::RandomNew => self.random_new += 1,
            EventCode::RandomOld => self.random_old += 1,
            EventCode::RandomOther => self.random_other += 1,
            EventCode::Priority => self.priority += 1,
        }
        if code == EventCode::RandomOld {
            *consecutive_old += 1;
            if *consecutive_old >= (l - 1) as u64 {
                self.renewals += 1;
            }
        } else {
            *consecutive_old = 0;
        }
    }

    pub fn merge(&mut self, other: &EventStats) {
        self.random_new += other.random_new;
        self.random_old += other.random_old;
        self.random_other += other.random_other;
        self.priority += other.priority;
        self.renewals += other.renewals;
    }
}

/// Simulation configuration. `steps` counts executed tasks; the histogram
/// and priority samples start after `burnin` steps.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub l: usize,
    pub protocol: SelectionProtocol,
    pub dist: PriorityDistribution,
    pub steps: u64,
    pub burnin: u64,
    pub seed: u64,
}

/// Default burn-in: renewals occur at a geometric rate, so 10^4 steps
/// dominate mixing for p <= 0.99.
pub const DEFAULT_BURNIN: u64 = 10_000;

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.steps <= self.burnin {
            return Err(Error::InvalidParameter(format!(
                "steps {} must exceed burnin {}",
                self.steps, self.burnin
            )));
        }
        Ok(())
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub histogram: WaitingTimeHistogram,
    /// Resident (old-task) priorities sampled each post-burn-in step,
    /// L-1 per step, oldest first.
    pub old_priority_samples: Vec<f64>,
    pub event_stats: Option<EventStats>,
    /// Waiting times of every executed task including burn-in, for the
    /// exact accounting identity.
    pub total_waiting_all: u128,
    pub steps: u64,
    pub l: usize,
}

impl RunOutput {
    /// Exact buffer-time accounting: executed waiting plus residuals equals
    /// L * steps.
    pub fn accounting_balance(&self) -> (u128, u128) {
        let lhs = self.total_waiting_all
            + self
                .histogram
                .residuals
                .iter()
                .map(|&r| r as u128)
                .sum::<u128>();
        (lhs, self.l as u128 * self.steps as u128)
    }
}

/// Fraction of elapsed time still sitting in the buffer at the final step.
/// Vanishes as t grows whenever p < 1; at p = 1 it oscillates with the
/// record process.
pub fn residual_fraction(output: &RunOutput) -> f64 {
    let total: u128 = output.histogram.residuals.iter().map(|&r| r as u128).sum();
    total as f64 / output.steps as f64
}

/// Run the simulator with the RNG stream for `replica`.
fn run_stream(config: &RunConfig, replica: u64) -> Result<RunOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(replica);

    let mut state = QueueState::init(config.l, &config.protocol, &config.dist, &mut rng)?;
    let mut histogram = WaitingTimeHistogram::default();
    let mut samples = Vec::new();
    let barabasi = config.protocol.is_barabasi_family();
    let mut event_stats = barabasi.then(EventStats::default);
    let mut consecutive_old = 0u64;
    let mut total_waiting_all: u128 = 0;

    samples.reserve(((config.steps - config.burnin) as usize) * (config.l - 1));

    for _ in 0..config.steps {
        let executed = step(&mut state, &config.protocol, &config.dist, &mut rng)?;
        total_waiting_all += executed.waiting_time as u128;
        if state.step > config.burnin {
            histogram.record(executed.waiting_time);
            samples.extend(state.residents.iter().map(|t| t.priority));
        }
        if let (Some(stats), Some(code)) = (event_stats.as_mut(), executed.event) {
            stats.record(code, config.l, &mut consecutive_old);
        }
    }
    histogram.residuals = state.resident_times();

    let output = RunOutput {
        histogram,
        old_priority_samples: samples,
        event_stats,
        total_waiting_all,
        steps: config.steps,
        l: config.l,
    };
    debug_assert_eq!(output.accounting_balance().0, output.accounting_balance().1);
    Ok(output)
}

/// Run a single seeded simulation (replica stream 0).
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    run_stream(config, 0)
}

/// Run `replicas` independent simulations in parallel. Replica i draws from
/// ChaCha stream i of the master seed; outputs are returned in replica order
/// regardless of scheduling.
pub fn run_replicas(config: &RunConfig, replicas: u64) -> Result<Vec<RunOutput>> {
    config.validate()?;
    (0..replicas)
        .into_par_iter()
        .map(|i| run_stream(config, i))
        .collect()
}

/// Stationary old-task priority sampler for the coin-flip protocol, L = 2:
/// the minimum of X i.i.d. draws from `dist`, where X is geometric on
/// {1, 2, ...} with success probability (1-p)/(1+p).
pub fn min_of_geometric_sampler<R: Rng + ?Sized>(
    p: f64,
    dist: &PriorityDistribution,
    rng: &mut R,
) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "p = {p} must lie in [0, 1); the geometric count diverges at p = 1"
        )));
    }
    let success = (1.0 - p) / (1.0 + p);
    let draws = if success >= 1.0 {
        1
    } else {
        // inversion: P(X >= k) = (1-q)^(k-1)
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        (u.ln() / (1.0 - success).ln()).ceil().max(1.0) as u64
    };
    let mut min = f64::INFINITY;
    for _ in 0..draws {
        min = min.min(dist.sample(rng));
    }
    Ok(min)
}

/// Count the step indices where L-1 consecutive RandomOld events begin.
pub fn renewal_count(trace: &[EventCode], l: usize) -> u64 {
    assert!(l >= 2);
    let window = l - 1;
    if trace.len() < window {
        return 0;
    }
    let mut consecutive = 0usize;
    let mut count = 0u64;
    for &code in trace {
        if code == EventCode::RandomOld {
            consecutive += 1;
            if consecutive >= window {
                count += 1;
            }
        } else {
            consecutive = 0;
        }
    }
    count
}

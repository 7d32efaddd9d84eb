//! Finite-N stochastic system, simulated as the uniformized embedded chain.
//!
//! Every event is an arrival with probability `lambda/(1+lambda)`, a local
//! service token with probability `(1-p)/(1+lambda)`, and a central service
//! token otherwise. Two engines realize the same law:
//!
//! * [`SimMode::QueueLevel`] keeps every queue length. Stations are bucketed
//!   by length so that a longest queue is found in O(1), with ties broken
//!   uniformly. Two uniforms per event: event type and target.
//! * [`SimMode::AggregateCoupled`] keeps only the tail counts and maps a single
//!   uniform per event through a partition of `[0, 1)` built from the current
//!   profile: arrival slices of width `lambda/(1+lambda) * s_{i-1}`, local
//!   slices of width `(1-p)/(1+lambda) * s_i`, then the central region.
//!
//! Event `k` is stamped at time `k / (N (1 + lambda))`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};
use crate::rng::{derive_seed, Stream};
use crate::state::{AggregateProfile, Params, QueueVector, Trajectory};

pub const DEFAULT_BURN_IN: u64 = 1_000_000;
pub const DEFAULT_SAMPLES: u64 = 500_000;
pub const DEFAULT_SPACING: u64 = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    QueueLevel,
    AggregateCoupled,
}

impl std::str::FromStr for SimMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "queue_level" | "queue-level" => Ok(Self::QueueLevel),
            "aggregate_coupled" | "aggregate-coupled" => Ok(Self::AggregateCoupled),
            other => Err(invalid_input(format!("unknown simulation mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: Params,
    pub n_stations: usize,
    pub seed: u64,
    pub burn_in_steps: u64,
    pub n_samples: u64,
    pub sample_spacing: u64,
    pub mode: SimMode,
}

impl SimConfig {
    /// Default sampling protocol: 10^6 burn-in steps, then 500,000 samples
    /// 20 steps apart.
    pub fn new(params: Params, n_stations: usize, seed: u64) -> Self {
        Self {
            params,
            n_stations,
            seed,
            burn_in_steps: DEFAULT_BURN_IN,
            n_samples: DEFAULT_SAMPLES,
            sample_spacing: DEFAULT_SPACING,
            mode: SimMode::QueueLevel,
        }
    }

    pub fn with_mode(mut self, mode: SimMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_protocol(
        mut self,
        burn_in_steps: u64,
        n_samples: u64,
        sample_spacing: u64,
    ) -> Self {
        self.burn_in_steps = burn_in_steps;
        self.n_samples = n_samples;
        self.sample_spacing = sample_spacing;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_stations == 0 {
            return Err(invalid_input("n_stations must be positive"));
        }
        if self.n_stations > u32::MAX as usize {
            return Err(invalid_input("n_stations does not fit in 32 bits"));
        }
        if self.burn_in_steps == 0 || self.n_samples == 0 || self.sample_spacing == 0 {
            return Err(invalid_input(
                "burn-in, sample count and spacing must be positive",
            ));
        }
        Ok(())
    }

    /// Time between events on the normalized clock.
    pub fn event_spacing(&self) -> f64 {
        1.0 / (self.n_stations as f64 * (1.0 + self.params.lambda))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    Local,
    /// Local token at an empty station.
    LocalWasted,
    Central,
    /// Central token while every queue is empty.
    CentralWasted,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Arrival => "arrival",
            Self::Local => "local",
            Self::LocalWasted => "local_wasted",
            Self::Central => "central",
            Self::CentralWasted => "central_wasted",
        }
    }
}

/// One transition of the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub kind: EventKind,
    /// Affected station; `None` for the aggregate engine and wasted central tokens.
    pub station: Option<usize>,
    /// Length of the affected queue before the event.
    pub level: u32,
}

fn check_unit(u: f64, name: &str) -> Result<()> {
    if (0.0..1.0).contains(&u) {
        Ok(())
    } else {
        Err(invalid_input(format!("{name} must lie in [0, 1), got {u}")))
    }
}

fn scaled_index(u: f64, n: usize) -> usize {
    ((u * n as f64) as usize).min(n - 1)
}

/// One transition of the queue-level chain driven by explicit draws.
///
/// `u_type` picks the event type; `u_target` picks the station for arrivals
/// and local tokens, and the station among the longest queues (in index
/// order) for central tokens.
pub fn step(q: &QueueVector, params: &Params, u_type: f64, u_target: f64) -> Result<QueueVector> {
    check_unit(u_type, "u_type")?;
    check_unit(u_target, "u_target")?;
    let mut out: Vec<u32> = q.as_slice().to_vec();
    let n = out.len();
    let central_from = 1.0 - params.central_prob();
    if u_type < params.arrival_prob() {
        out[scaled_index(u_target, n)] += 1;
    } else if u_type < central_from {
        let i = scaled_index(u_target, n);
        out[i] = out[i].saturating_sub(1);
    } else {
        let max = q.max_len();
        if max > 0 {
            let longest: Vec<usize> = (0..n).filter(|&i| out[i] == max).collect();
            out[longest[scaled_index(u_target, longest.len())]] -= 1;
        }
    }
    QueueVector::new(out)
}

/// Cumulative changes of `V_i` due to arrivals, local and central tokens, in
/// units of `1/N`.
///
/// Stored as per-level event histograms; the cumulative counters are their
/// suffix sums, so `A_i` counts arrivals that brought a queue to `i` or more
/// tasks and `L_i`, `C_i` count completions at queues holding `i` or more.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionLedger {
    n_stations: usize,
    arrivals: Vec<u64>,
    local: Vec<u64>,
    central: Vec<u64>,
}

fn bump(hist: &mut Vec<u64>, level: usize) {
    if hist.len() <= level {
        hist.resize(level + 1, 0);
    }
    hist[level] += 1;
}

/// Suffix sums over levels `>= 1`, with index 0 mirroring index 1.
fn cumulative(hist: &[u64], len: usize) -> Vec<u64> {
    let len = len.max(hist.len()).max(2);
    let mut out = vec![0u64; len];
    let mut acc = 0;
    for i in (1..len).rev() {
        acc += hist.get(i).copied().unwrap_or(0);
        out[i] = acc;
    }
    out[0] = out[1];
    out
}

impl DecompositionLedger {
    pub fn new(n_stations: usize) -> Self {
        Self {
            n_stations,
            ..Self::default()
        }
    }

    pub fn record(&mut self, event: &Event) {
        let level = event.level as usize;
        match event.kind {
            EventKind::Arrival => bump(&mut self.arrivals, level + 1),
            EventKind::Local => bump(&mut self.local, level),
            EventKind::Central => bump(&mut self.central, level),
            EventKind::LocalWasted | EventKind::CentralWasted => {}
        }
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    fn depth(&self) -> usize {
        self.arrivals
            .len()
            .max(self.local.len())
            .max(self.central.len())
    }

    /// `A_i * N` for `i = 0..len` (at least the recorded depth).
    pub fn arrivals(&self, len: usize) -> Vec<u64> {
        cumulative(&self.arrivals, len.max(self.depth()))
    }

    pub fn local(&self, len: usize) -> Vec<u64> {
        cumulative(&self.local, len.max(self.depth()))
    }

    pub fn central(&self, len: usize) -> Vec<u64> {
        cumulative(&self.central, len.max(self.depth()))
    }

    /// Reconstructs `V(t) * N` from `V(0) * N` and the ledger.
    pub fn reconstruct(&self, v0_counts: &[u64]) -> Vec<i64> {
        let len = v0_counts.len().max(self.depth()).max(2);
        let (a, l, c) = (self.arrivals(len), self.local(len), self.central(len));
        (0..len)
            .map(|i| {
                v0_counts.get(i).copied().unwrap_or(0) as i64 + a[i] as i64
                    - l[i] as i64
                    - c[i] as i64
            })
            .collect()
    }
}

/// Queue-level engine with a bucket index on queue length.
#[derive(Clone, Debug)]
struct QueueEngine {
    q: Vec<u32>,
    buckets: Vec<Vec<u32>>,
    pos: Vec<u32>,
    max_len: usize,
}

impl QueueEngine {
    fn new(q0: &QueueVector) -> Self {
        let q = q0.as_slice().to_vec();
        let max_len = q0.max_len() as usize;
        let mut buckets = vec![Vec::new(); max_len + 1];
        let mut pos = vec![0u32; q.len()];
        for (i, &len) in q.iter().enumerate() {
            let b = &mut buckets[len as usize];
            pos[i] = b.len() as u32;
            b.push(i as u32);
        }
        Self {
            q,
            buckets,
            pos,
            max_len,
        }
    }

    fn relocate(&mut self, station: usize, from: usize, to: usize) {
        let idx = self.pos[station] as usize;
        let bucket = &mut self.buckets[from];
        bucket.swap_remove(idx);
        if let Some(&moved) = bucket.get(idx) {
            self.pos[moved as usize] = idx as u32;
        }
        if self.buckets.len() <= to {
            self.buckets.resize_with(to + 1, Vec::new);
        }
        self.pos[station] = self.buckets[to].len() as u32;
        self.buckets[to].push(station as u32);
        self.q[station] = to as u32;
        if to > self.max_len {
            self.max_len = to;
        }
        while self.max_len > 0 && self.buckets[self.max_len].is_empty() {
            self.max_len -= 1;
        }
    }

    fn advance(&mut self, params: &Params, rng: &mut Stream, counts: &mut TailCounts) -> Event {
        let u_type = rng.next_f64();
        let u_target = rng.next_f64();
        let n = self.q.len();
        if u_type < params.arrival_prob() {
            let station = scaled_index(u_target, n);
            let level = self.q[station];
            self.relocate(station, level as usize, level as usize + 1);
            counts.raise(level as usize);
            Event {
                kind: EventKind::Arrival,
                station: Some(station),
                level,
            }
        } else if u_type < 1.0 - params.central_prob() {
            let station = scaled_index(u_target, n);
            let level = self.q[station];
            if level == 0 {
                return Event {
                    kind: EventKind::LocalWasted,
                    station: Some(station),
                    level,
                };
            }
            self.relocate(station, level as usize, level as usize - 1);
            counts.lower(level as usize);
            Event {
                kind: EventKind::Local,
                station: Some(station),
                level,
            }
        } else {
            let level = self.max_len;
            if level == 0 {
                return Event {
                    kind: EventKind::CentralWasted,
                    station: None,
                    level: 0,
                };
            }
            let longest = &self.buckets[level];
            let station = longest[scaled_index(u_target, longest.len())] as usize;
            self.relocate(station, level, level - 1);
            counts.lower(level);
            Event {
                kind: EventKind::Central,
                station: Some(station),
                level: level as u32,
            }
        }
    }
}

/// `counts[i]`: number of stations with at least `i` tasks, trimmed so the
/// last entry is positive.
#[derive(Clone, Debug, PartialEq, Eq)]
struct TailCounts(Vec<u64>);

impl TailCounts {
    fn from_queues(q: &QueueVector) -> Self {
        Self(q.tail_counts())
    }

    fn max_level(&self) -> usize {
        self.0.len() - 1
    }

    /// Length of the queue ranked `rank` (0-based) in decreasing order.
    fn level_of_rank(&self, rank: u64) -> usize {
        self.0.partition_point(|&c| c > rank) - 1
    }

    /// A queue of length `level` gains a task.
    fn raise(&mut self, level: usize) {
        if self.0.len() == level + 1 {
            self.0.push(0);
        }
        self.0[level + 1] += 1;
    }

    /// A queue of length `level >= 1` loses a task.
    fn lower(&mut self, level: usize) {
        self.0[level] -= 1;
        while self.0.len() > 1 && *self.0.last().unwrap() == 0 {
            self.0.pop();
        }
    }
}

/// Aggregate engine: maps one uniform per event through the current profile.
#[derive(Clone, Debug)]
struct CoupledEngine;

impl CoupledEngine {
    fn classify(params: &Params, counts: &TailCounts, u: f64) -> Event {
        let n = counts.0[0];
        let a = params.arrival_prob();
        let b = 1.0 - params.central_prob();
        let rank = |x: f64| ((x * n as f64) as u64).min(n - 1);
        if u < a {
            let level = counts.level_of_rank(rank(u / a));
            Event {
                kind: EventKind::Arrival,
                station: None,
                level: level as u32,
            }
        } else if u < b {
            let level = counts.level_of_rank(rank((u - a) / (b - a)));
            Event {
                kind: if level == 0 {
                    EventKind::LocalWasted
                } else {
                    EventKind::Local
                },
                station: None,
                level: level as u32,
            }
        } else {
            let level = counts.max_level();
            Event {
                kind: if level == 0 {
                    EventKind::CentralWasted
                } else {
                    EventKind::Central
                },
                station: None,
                level: level as u32,
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Engine {
    Queue(QueueEngine),
    Coupled,
}

/// A running chain with its random stream and decomposition ledger.
#[derive(Clone, Debug)]
pub struct Simulation {
    params: Params,
    n: usize,
    engine: Engine,
    counts: TailCounts,
    rng: Stream,
    ledger: DecompositionLedger,
    initial_v: Vec<u64>,
    work: u64,
    steps: u64,
}

impl Simulation {
    /// Starts from the empty system.
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        Self::with_initial(cfg, &QueueVector::empty_system(cfg.n_stations)?)
    }

    pub fn with_initial(cfg: &SimConfig, q0: &QueueVector) -> Result<Self> {
        cfg.validate()?;
        if q0.n_stations() != cfg.n_stations {
            return Err(invalid_input(format!(
                "initial state has {} stations, config has {}",
                q0.n_stations(),
                cfg.n_stations
            )));
        }
        let counts = TailCounts::from_queues(q0);
        let engine = match cfg.mode {
            SimMode::QueueLevel => Engine::Queue(QueueEngine::new(q0)),
            SimMode::AggregateCoupled => Engine::Coupled,
        };
        let mut sim = Self {
            params: cfg.params,
            n: cfg.n_stations,
            engine,
            counts,
            rng: Stream::new(cfg.seed),
            ledger: DecompositionLedger::new(cfg.n_stations),
            initial_v: Vec::new(),
            work: q0.total_tasks(),
            steps: 0,
        };
        sim.initial_v = sim.aggregate_counts();
        Ok(sim)
    }

    pub fn advance(&mut self) -> Event {
        let event = match &mut self.engine {
            Engine::Queue(engine) => engine.advance(&self.params, &mut self.rng, &mut self.counts),
            Engine::Coupled => {
                let u = self.rng.next_f64();
                let event = CoupledEngine::classify(&self.params, &self.counts, u);
                match event.kind {
                    EventKind::Arrival => self.counts.raise(event.level as usize),
                    EventKind::Local | EventKind::Central => {
                        self.counts.lower(event.level as usize)
                    }
                    EventKind::LocalWasted | EventKind::CentralWasted => {}
                }
                event
            }
        };
        match event.kind {
            EventKind::Arrival => self.work += 1,
            EventKind::Local | EventKind::Central => self.work -= 1,
            _ => {}
        }
        self.ledger.record(&event);
        self.steps += 1;
        event
    }

    /// Event that the aggregate engine would produce for draw `u` in the
    /// current state, without applying it.
    pub fn classify_coupled(&self, u: f64) -> Event {
        CoupledEngine::classify(&self.params, &self.counts, u)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 / (self.n as f64 * (1.0 + self.params.lambda))
    }

    pub fn n_stations(&self) -> usize {
        self.n
    }

    /// Number of stations with at least `i` tasks, `i = 0..=max length`.
    pub fn tail_counts(&self) -> &[u64] {
        &self.counts.0
    }

    /// `N * V_i`: integer suffix sums of the tail counts.
    pub fn aggregate_counts(&self) -> Vec<u64> {
        let c = &self.counts.0;
        let mut out = vec![0u64; c.len().max(2)];
        let mut acc = 0;
        for i in (0..c.len()).rev() {
            acc += c[i];
            out[i] = acc;
        }
        out
    }

    /// `N * V_1`, the total number of queued tasks.
    pub fn total_work(&self) -> u64 {
        self.work
    }

    pub fn profile(&self) -> AggregateProfile {
        AggregateProfile::from_counts(&self.counts.0, self.n)
            .expect("tail counts always start with the station count")
    }

    pub fn ledger(&self) -> &DecompositionLedger {
        &self.ledger
    }

    pub fn initial_aggregate_counts(&self) -> &[u64] {
        &self.initial_v
    }

    /// Queue lengths, available for the queue-level engine only.
    pub fn queues(&self) -> Option<&[u32]> {
        match &self.engine {
            Engine::Queue(e) => Some(&e.q),
            Engine::Coupled => None,
        }
    }

    /// Length of a uniformly chosen station (consumes one draw).
    pub fn sample_queue_length(&mut self) -> u32 {
        let u = self.rng.next_f64();
        match &self.engine {
            Engine::Queue(e) => e.q[scaled_index(u, self.n)],
            Engine::Coupled => self.counts.level_of_rank(scaled_index(u, self.n) as u64) as u32,
        }
    }
}

/// Advances `n_steps` events from the empty system, recording `V^N` after
/// every event.
pub fn run_chain(cfg: &SimConfig, n_steps: u64) -> Result<(Trajectory, DecompositionLedger)> {
    let q0 = QueueVector::empty_system(cfg.n_stations)?;
    run_chain_from(cfg, &q0, n_steps)
}

pub fn run_chain_from(
    cfg: &SimConfig,
    q0: &QueueVector,
    n_steps: u64,
) -> Result<(Trajectory, DecompositionLedger)> {
    let mut sim = Simulation::with_initial(cfg, q0)?;
    let mut traj = Trajectory::with_capacity(n_steps as usize + 1);
    traj.push(0.0, sim.profile())?;
    for _ in 0..n_steps {
        sim.advance();
        traj.push(sim.time(), sim.profile())?;
    }
    Ok((traj, sim.ledger.clone()))
}

/// Mean queue length with the 2.5%-trimmed upper and lower ends of the
/// sampled queue-length distribution.
///
/// `le <= ue` always. The mean usually lies between them but need not: when
/// over 97.5% of samples are empty queues both ends are 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateEstimate {
    pub mean: f64,
    pub ue: f64,
    pub le: f64,
    pub n_samples: u64,
    pub seed: u64,
}

/// Counts of sampled integer queue lengths.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    pub fn add(&mut self, x: u32) {
        bump(&mut self.counts, x as usize);
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn mean(&self) -> f64 {
        let sum: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(x, &c)| x as f64 * c as f64)
            .sum();
        sum / self.total as f64
    }

    /// Smallest sampled `x` with at most 2.5% of samples strictly above it.
    pub fn upper_end(&self) -> Option<u32> {
        let mut above = self.total;
        for (x, &c) in self.counts.iter().enumerate() {
            above -= c;
            if c > 0 && 40 * above <= self.total {
                return Some(x as u32);
            }
        }
        None
    }

    /// Largest sampled `x` with at most 2.5% of samples strictly below it.
    pub fn lower_end(&self) -> Option<u32> {
        let mut below = self.total;
        for (x, &c) in self.counts.iter().enumerate().rev() {
            below -= c;
            if c > 0 && 40 * below <= self.total {
                return Some(x as u32);
            }
        }
        None
    }
}

impl FromIterator<u32> for Histogram {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        let mut h = Self::default();
        for x in iter {
            h.add(x);
        }
        h
    }
}

/// Writes one `step,event_type,station,v1` row per event.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "step,event_type,station,v1")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, sim: &Simulation, event: &Event) -> Result<()> {
        let station = event.station.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            self.out,
            "{},{},{},{}",
            sim.steps(),
            event.kind.name(),
            station,
            sim.total_work() as f64 / sim.n_stations() as f64
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Burn-in, then `n_samples` samples `sample_spacing` steps apart; each
/// sample is the length of one uniformly chosen station.
pub fn steady_state_estimate(cfg: &SimConfig) -> Result<SteadyStateEstimate> {
    run_estimate::<std::io::Sink>(cfg, None)
}

/// [`steady_state_estimate`] that also logs every event.
pub fn steady_state_estimate_traced<W: Write>(
    cfg: &SimConfig,
    trace: &mut TraceWriter<W>,
) -> Result<SteadyStateEstimate> {
    run_estimate(cfg, Some(trace))
}

fn run_estimate<W: Write>(
    cfg: &SimConfig,
    mut trace: Option<&mut TraceWriter<W>>,
) -> Result<SteadyStateEstimate> {
    let mut sim = Simulation::new(cfg)?;
    let mut advance = |sim: &mut Simulation, k: u64| -> Result<()> {
        for _ in 0..k {
            let event = sim.advance();
            if let Some(t) = trace.as_deref_mut() {
                t.write(sim, &event)?;
            }
        }
        Ok(())
    };
    advance(&mut sim, cfg.burn_in_steps)?;
    let mut hist = Histogram::default();
    for _ in 0..cfg.n_samples {
        advance(&mut sim, cfg.sample_spacing)?;
        hist.add(sim.sample_queue_length());
    }
    Ok(SteadyStateEstimate {
        mean: hist.mean(),
        ue: hist.upper_end().unwrap_or(0) as f64,
        le: hist.lower_end().unwrap_or(0) as f64,
        n_samples: hist.total(),
        seed: cfg.seed,
    })
}

/// Sub-seeds used by [`compare_policies`] for the configured and the `p = 0` run.
pub fn policy_seeds(seed: u64) -> (u64, u64) {
    (derive_seed(seed, &[1]), derive_seed(seed, &[0]))
}

/// Estimates for the configured system and for the same system with `p = 0`,
/// on independent sub-seeds of `cfg.seed`.
pub fn compare_policies(cfg: &SimConfig) -> Result<(SteadyStateEstimate, SteadyStateEstimate)> {
    if cfg.params.p <= 0.0 {
        return Err(invalid_input("compare_policies needs p > 0"));
    }
    let (seed_p, seed_0) = policy_seeds(cfg.seed);
    compare_policies_with_seeds(cfg, seed_p, seed_0)
}

pub fn compare_policies_with_seeds(
    cfg: &SimConfig,
    seed_p: u64,
    seed_0: u64,
) -> Result<(SteadyStateEstimate, SteadyStateEstimate)> {
    cfg.validate()?;
    let with_p = SimConfig {
        seed: seed_p,
        ..cfg.clone()
    };
    let baseline = SimConfig {
        seed: seed_0,
        params: Params {
            p: 0.0,
            ..cfg.params
        },
        ..cfg.clone()
    };
    let (a, b) = rayon::join(
        || steady_state_estimate(&with_p),
        || steady_state_estimate(&baseline),
    );
    Ok((a?, b?))
}

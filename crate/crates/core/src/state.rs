//! State representations of the N-station system and the metrics on them.
//!
//! Three views of the same configuration are used throughout the crate:
//!
//! * [`QueueVector`]: raw per-station queue lengths of a finite system.
//! * [`TailProfile`]: `s_i`, the fraction of stations holding at least `i` tasks.
//! * [`AggregateProfile`]: `v_i = sum_{j >= i} s_j`, so `v_1` is the average
//!   queue length and `v_0 = v_1 + 1`.
//!
//! Profiles are stored as finite vectors; every index past the stored length
//! is an implicit zero.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_state, Error, Result};

/// Slack used when checking the monotonicity and range constraints of
/// floating-point profiles.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Model parameters shared by the analytic, fluid and stochastic layers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Arrival rate per station, in `[0, 1)`.
    pub lambda: f64,
    /// Centralization coefficient: share of service capacity held by the
    /// central server, in `[0, 1]`.
    pub p: f64,
}

impl Params {
    pub fn new(lambda: f64, p: f64) -> Result<Self> {
        let params = Self { lambda, p };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || !(0.0..1.0).contains(&self.lambda) {
            return Err(invalid_input(format!(
                "lambda must lie in [0, 1), got {}",
                self.lambda
            )));
        }
        if !self.p.is_finite() || !(0.0..=1.0).contains(&self.p) {
            return Err(invalid_input(format!(
                "p must lie in [0, 1], got {}",
                self.p
            )));
        }
        Ok(())
    }

    /// Probability that an event of the uniformized chain is an arrival.
    pub fn arrival_prob(&self) -> f64 {
        self.lambda / (1.0 + self.lambda)
    }

    pub fn local_prob(&self) -> f64 {
        (1.0 - self.p) / (1.0 + self.lambda)
    }

    pub fn central_prob(&self) -> f64 {
        self.p / (1.0 + self.lambda)
    }
}

/// Queue lengths of an `N`-station system (tasks not yet started).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueueVector(Vec<u32>);

impl QueueVector {
    pub fn new(q: Vec<u32>) -> Result<Self> {
        if q.is_empty() {
            return Err(invalid_input("queue vector must hold at least one station"));
        }
        Ok(Self(q))
    }

    pub fn empty_system(n_stations: usize) -> Result<Self> {
        Self::new(vec![0; n_stations])
    }

    pub fn n_stations(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn total_tasks(&self) -> u64 {
        self.0.iter().map(|&x| u64::from(x)).sum()
    }

    pub fn max_len(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// `counts[i]` is the number of stations with at least `i` tasks.
    pub fn tail_counts(&self) -> Vec<u64> {
        let max = self.max_len() as usize;
        let mut hist = vec![0u64; max + 1];
        for &x in &self.0 {
            hist[x as usize] += 1;
        }
        let mut counts = vec![0u64; max + 1];
        let mut acc = 0;
        for i in (0..=max).rev() {
            acc += hist[i];
            counts[i] = acc;
        }
        counts
    }
}

impl From<QueueVector> for Vec<u32> {
    fn from(q: QueueVector) -> Self {
        q.0
    }
}

/// Tail profile `s`: `s_i` is the fraction of stations with at least `i` tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct TailProfile {
    s: Vec<f64>,
}

impl TailProfile {
    pub fn new(s: Vec<f64>) -> Result<Self> {
        check_tail(&s)?;
        Ok(Self { s })
    }

    /// Skips validation; callers guarantee the invariants up to rounding.
    pub(crate) fn from_raw(s: Vec<f64>) -> Self {
        Self { s }
    }

    /// The profile of a system with every queue empty, `(1)`.
    pub fn empty_system() -> Self {
        Self { s: vec![1.0] }
    }

    /// Builds `s_i = counts[i] / n` from integer tail counts with `counts[0] = n`.
    pub fn from_counts(counts: &[u64], n: usize) -> Result<Self> {
        if n == 0 || counts.first() != Some(&(n as u64)) {
            return Err(invalid_input(
                "tail counts must start with the station count",
            ));
        }
        let end = counts.iter().rposition(|&c| c > 0).unwrap_or(0) + 1;
        let s = counts[..end]
            .iter()
            .map(|&c| c as f64 / n as f64)
            .collect::<Vec<_>>();
        Self::new(s)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.s.get(i).copied().unwrap_or(0.0)
    }

    /// Average queue length, `sum_{i >= 1} s_i`.
    pub fn mean_queue_length(&self) -> f64 {
        self.s.iter().skip(1).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_indexed_csv(&self.s, out)
    }
}

impl From<TailProfile> for Vec<f64> {
    fn from(p: TailProfile) -> Self {
        p.s
    }
}

impl TryFrom<Vec<f64>> for TailProfile {
    type Error = Error;

    fn try_from(s: Vec<f64>) -> Result<Self> {
        Self::new(s)
    }
}

/// Aggregate profile `v`: `v_i = sum_{j >= i} s_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct AggregateProfile {
    v: Vec<f64>,
}

impl AggregateProfile {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        check_aggregate(&v)?;
        Ok(Self { v })
    }

    pub(crate) fn from_raw(v: Vec<f64>) -> Self {
        Self { v }
    }

    /// `(1, 0)`: every queue empty.
    pub fn empty_system() -> Self {
        Self { v: vec![1.0, 0.0] }
    }

    /// Builds `v_i = V_i / n` from integer tail counts (`counts[0] = n`).
    ///
    /// Every coordinate is an exact multiple of `1/n` up to the final division.
    pub fn from_counts(counts: &[u64], n: usize) -> Result<Self> {
        if n == 0 || counts.first() != Some(&(n as u64)) {
            return Err(invalid_input(
                "tail counts must start with the station count",
            ));
        }
        let sums = suffix_sums_u64(counts);
        let mut v: Vec<f64> = sums.iter().map(|&x| x as f64 / n as f64).collect();
        if v.len() < 2 {
            v.push(0.0);
        }
        Ok(Self { v })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.v.get(i).copied().unwrap_or(0.0)
    }

    /// `v_1`, the average queue length.
    pub fn mean_queue_length(&self) -> f64 {
        self.get(1)
    }

    /// Largest stored index with a nonzero value.
    pub fn support(&self) -> usize {
        self.v.iter().rposition(|&x| x != 0.0).unwrap_or(0)
    }

    /// Copy padded (or truncated) to exactly `dim` stored coordinates.
    pub fn padded(&self, dim: usize) -> Vec<f64> {
        let mut out = self.v.clone();
        out.resize(dim, 0.0);
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_indexed_csv(&self.v, out)
    }
}

impl From<AggregateProfile> for Vec<f64> {
    fn from(p: AggregateProfile) -> Self {
        p.v
    }
}

impl TryFrom<Vec<f64>> for AggregateProfile {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

fn check_tail(s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(invalid_state("tail profile must store s_0"));
    }
    if (s[0] - 1.0).abs() > FEASIBILITY_TOL {
        return Err(invalid_state(format!("s_0 must equal 1, got {}", s[0])));
    }
    let mut prev = 1.0;
    for (i, &x) in s.iter().enumerate() {
        if !x.is_finite() {
            return Err(invalid_state(format!("s_{i} is not finite")));
        }
        if x < -FEASIBILITY_TOL || x > prev + FEASIBILITY_TOL {
            return Err(invalid_state(format!(
                "s_{i} = {x} breaks 1 >= s_i >= s_(i+1) >= 0"
            )));
        }
        prev = x;
    }
    Ok(())
}

fn check_aggregate(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(invalid_state("aggregate profile must store v_0"));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(invalid_state(format!("v_{i} is not finite")));
    }
    if let Some(i) = v.iter().position(|&x| x < -FEASIBILITY_TOL) {
        return Err(invalid_state(format!("v_{i} = {} is negative", v[i])));
    }
    let at = |i: usize| v.get(i).copied().unwrap_or(0.0);
    if (at(0) - at(1) - 1.0).abs() > FEASIBILITY_TOL {
        return Err(invalid_state(format!(
            "v_0 - v_1 must equal 1, got {}",
            at(0) - at(1)
        )));
    }
    let mut prev = 1.0;
    for i in 1..v.len() {
        let d = at(i) - at(i + 1);
        if d < -FEASIBILITY_TOL || d > prev + FEASIBILITY_TOL {
            return Err(invalid_state(format!(
                "difference v_{i} - v_{} = {d} breaks monotone differences",
                i + 1
            )));
        }
        prev = d;
    }
    Ok(())
}

fn suffix_sums_u64(xs: &[u64]) -> Vec<u64> {
    let mut out = vec![0u64; xs.len()];
    let mut acc = 0u64;
    for i in (0..xs.len()).rev() {
        acc += xs[i];
        out[i] = acc;
    }
    out
}

fn write_indexed_csv<W: Write>(xs: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "value"])?;
    for (i, x) in xs.iter().enumerate() {
        w.write_record([i.to_string(), x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Fraction of stations with at least `i` tasks.
pub fn normalized_from_queues(q: &QueueVector) -> TailProfile {
    let counts = q.tail_counts();
    let n = q.n_stations();
    let s = counts.iter().map(|&c| c as f64 / n as f64).collect();
    TailProfile::from_raw(trim_trailing_zeros(s))
}

/// `v_i = sum_{j >= i} s_j`; stores at least `(v_0, v_1)`.
pub fn aggregate_from_tail(s: &TailProfile) -> AggregateProfile {
    let xs = s.as_slice();
    let mut v = vec![0.0; xs.len().max(2)];
    let mut acc = 0.0;
    for i in (0..xs.len()).rev() {
        acc += xs[i];
        v[i] = acc;
    }
    AggregateProfile::from_raw(v)
}

/// `s_i = v_i - v_{i+1}`, with trailing zeros dropped.
pub fn tail_from_aggregate(v: &AggregateProfile) -> TailProfile {
    let s = tail_coords(v.as_slice());
    TailProfile::from_raw(trim_trailing_zeros(s))
}

pub(crate) fn tail_coords(v: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = (0..v.len())
        .map(|i| v[i] - v.get(i + 1).copied().unwrap_or(0.0))
        .collect();
    if let Some(first) = s.first_mut() {
        *first = 1.0;
    }
    s
}

fn trim_trailing_zeros(mut s: Vec<f64>) -> Vec<f64> {
    while s.len() > 1 && s.last() == Some(&0.0) {
        s.pop();
    }
    s
}

/// `<x, y>_w = sum_i x_i y_i / 2^i` over the stored coordinates.
pub fn weighted_inner(x: &[f64], y: &[f64]) -> f64 {
    let mut w = 1.0;
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += w * a * b;
        w *= 0.5;
    }
    acc
}

/// `sum_i |x_i - y_i|^2 / 2^i` over the union of supports.
pub fn weighted_distance_sq(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().max(y.len());
    let mut w = 1.0;
    let mut acc = 0.0;
    for i in 0..n {
        let d = x.get(i).copied().unwrap_or(0.0) - y.get(i).copied().unwrap_or(0.0);
        acc += w * d * d;
        w *= 0.5;
    }
    acc
}

/// Weighted L2 distance `sqrt(sum_i |x_i - y_i|^2 / 2^i)`.
pub fn weighted_distance(x: &AggregateProfile, y: &AggregateProfile) -> f64 {
    weighted_distance_sq(x.as_slice(), y.as_slice()).sqrt()
}

/// Time-stamped sequence of aggregate profiles, read as a right-continuous
/// step function of time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<AggregateProfile>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, time: f64, state: AggregateProfile) -> Result<()> {
        if !time.is_finite() {
            return Err(invalid_input("trajectory time must be finite"));
        }
        if let Some(&last) = self.times.last() {
            if time <= last {
                return Err(invalid_input(format!(
                    "trajectory times must increase strictly ({time} after {last})"
                )));
            }
        }
        self.times.push(time);
        self.states.push(state);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[AggregateProfile] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &AggregateProfile)> {
        self.times.last().map(|&t| (t, self.states.last().unwrap()))
    }

    /// State at time `t` under previous-value interpolation.
    pub fn state_at(&self, t: f64) -> Option<&AggregateProfile> {
        let idx = self.times.partition_point(|&x| x <= t);
        idx.checked_sub(1).map(|i| &self.states[i])
    }

    /// Writes rows `t,i,v_i`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "i", "v_i"])?;
        for (t, state) in self.times.iter().zip(&self.states) {
            for (i, x) in state.as_slice().iter().enumerate() {
                w.write_record([t.to_string(), i.to_string(), x.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Uniform distance between two paths: the supremum of [`weighted_distance`]
/// over the union of both time grids, restricted to the common time range.
pub fn path_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let (Some(&a0), Some(&b0)) = (a.times.first(), b.times.first()) else {
        return Err(invalid_input("cannot compare empty trajectories"));
    };
    let lo = a0.max(b0);
    let hi = a.times.last().unwrap().min(*b.times.last().unwrap());
    if lo > hi {
        return Err(invalid_input(format!(
            "trajectories share no time range ([{a0}, ..] vs [{b0}, ..])"
        )));
    }

    let mut grid: Vec<f64> = a
        .times
        .iter()
        .chain(&b.times)
        .copied()
        .filter(|&t| t >= lo && t <= hi)
        .collect();
    grid.push(lo);
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let (mut ia, mut ib) = (0usize, 0usize);
    let mut sup = 0.0f64;
    for &t in &grid {
        while ia + 1 < a.times.len() && a.times[ia + 1] <= t {
            ia += 1;
        }
        while ib + 1 < b.times.len() && b.times[ib + 1] <= t {
            ib += 1;
        }
        sup = sup.max(weighted_distance_sq(
            a.states[ia].as_slice(),
            b.states[ib].as_slice(),
        ));
    }
    Ok(sup.sqrt())
}

//! Fluid model: drift of the aggregate profile, a projected explicit Euler
//! integrator, and one-sided Lipschitz diagnostics.
//!
//! The drift of coordinate `i >= 1` is
//!
//! ```text
//! F_i(v) = lambda (v_{i-1} - v_i) - (1 - p)(v_i - v_{i+1}) - g_i(v)
//! ```
//!
//! where `g_i` is the rate of central service spent on queues with at least
//! `i` tasks: `p` while `v_i > 0`, `min(lambda v_{i-1}, p)` while `v_i = 0` but
//! `v_{i-1} > 0`, and `0` otherwise. `g` jumps when a coordinate hits zero, so
//! the integrator projects back onto the feasible set after every step instead
//! of relying on smoothness.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Error, Result};
use crate::invariant::{critical_index, invariant_profile, invariant_profile_truncated};
use crate::state::{
    tail_coords, weighted_distance, weighted_distance_sq, weighted_inner, AggregateProfile, Params,
    TailProfile, Trajectory,
};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;
/// Minimum stored dimension picked when no truncation is requested.
pub const MIN_TRUNC_DIM: usize = 64;

/// Drift coordinates `f_0..f_D`. For the aggregate form `f_0 = f_1`; for the
/// tail form `f_0 = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DriftVector(Vec<f64>);

impl DriftVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0.get(i).copied().unwrap_or(0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Drift of the aggregate profile with the default zero tolerance.
pub fn drift_v(v: &AggregateProfile, params: &Params) -> DriftVector {
    drift_v_with_tol(v, params, DEFAULT_ZERO_TOL)
}

/// Drift of the aggregate profile; coordinates `<= zero_tol` count as zero
/// when selecting the branch of `g_i`.
pub fn drift_v_with_tol(v: &AggregateProfile, params: &Params, zero_tol: f64) -> DriftVector {
    let mut out = Vec::new();
    drift_v_into(v.as_slice(), params, zero_tol, &mut out);
    DriftVector(out)
}

/// Writes `F_0..F_D` for `v` of length `D` into `out`. `F_D` is the flow into
/// the first unstored coordinate.
pub(crate) fn drift_v_into(v: &[f64], params: &Params, zero_tol: f64, out: &mut Vec<f64>) {
    let Params { lambda, p } = *params;
    let at = |i: usize| v.get(i).copied().unwrap_or(0.0);
    let d = v.len();
    out.clear();
    out.resize(d + 1, 0.0);
    for (i, slot) in out.iter_mut().enumerate().skip(1) {
        let (prev, cur, next) = (at(i - 1), at(i), at(i + 1));
        let g = if cur > zero_tol {
            p
        } else if prev > zero_tol {
            (lambda * prev).min(p)
        } else {
            0.0
        };
        *slot = lambda * (prev - cur) - (1.0 - p) * (cur - next) - g;
    }
    out[0] = out[1];
}

/// Drift of the tail profile, `H_i = F_i - F_{i+1}` written directly in `s`.
pub fn drift_s(s: &TailProfile, params: &Params) -> DriftVector {
    drift_s_with_tol(s, params, DEFAULT_ZERO_TOL)
}

pub fn drift_s_with_tol(s: &TailProfile, params: &Params, zero_tol: f64) -> DriftVector {
    let Params { lambda, p } = *params;
    let at = |i: usize| s.get(i);
    let d = s.len();
    let mut out = vec![0.0; d + 1];
    for (i, slot) in out.iter_mut().enumerate().skip(1) {
        let (prev, cur, next) = (at(i - 1), at(i), at(i + 1));
        let g = match (cur > zero_tol, next > zero_tol, prev > zero_tol) {
            (true, true, _) => 0.0,
            (true, false, _) => p - (lambda * cur).min(p),
            (false, _, true) => (lambda * prev).min(p),
            (false, _, false) => 0.0,
        };
        *slot = lambda * (prev - cur) - (1.0 - p) * (cur - next) - g;
    }
    DriftVector(out)
}

/// Settings of the projected Euler integrator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Stored dimension; `None` picks `max(support + 2, i* + 10, 64)`.
    /// Must be set when `p = 0`; the neglected tail mass is then of order
    /// `lambda^trunc_dim / (1 - lambda)`.
    pub trunc_dim: Option<usize>,
    pub zero_tol: f64,
    /// Keep every `record_stride`-th step in the returned trajectory.
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            horizon: 10.0,
            trunc_dim: None,
            zero_tol: DEFAULT_ZERO_TOL,
            record_stride: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn with_horizon(horizon: f64) -> Self {
        Self {
            horizon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid_input(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(invalid_input(format!(
                "horizon must be nonnegative, got {}",
                self.horizon
            )));
        }
        if matches!(self.trunc_dim, Some(d) if d < 2) {
            return Err(invalid_input("trunc_dim must be at least 2"));
        }
        if !(self.zero_tol > 0.0 && self.zero_tol < self.dt) {
            return Err(invalid_input("zero_tol must lie in (0, dt)"));
        }
        if self.record_stride == 0 {
            return Err(invalid_input("record_stride must be positive"));
        }
        Ok(())
    }

    /// Number of Euler steps covering the horizon.
    pub fn n_steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }
}

fn resolve_dim(v0: &AggregateProfile, params: &Params, cfg: &IntegratorConfig) -> Result<usize> {
    let support = v0.support();
    match cfg.trunc_dim {
        Some(d) if d <= support => Err(Error::Truncation {
            trunc_dim: d,
            support,
        }),
        Some(d) => Ok(d),
        None if params.p == 0.0 => Err(invalid_input(
            "trunc_dim must be given when p = 0 (the invariant tail is infinite)",
        )),
        None => {
            let istar = critical_index(params)?;
            Ok((support + 2).max(istar + 10).max(MIN_TRUNC_DIM))
        }
    }
}

/// Stepper that advances one fluid solution in place.
#[derive(Clone, Debug)]
pub struct FluidSolver {
    params: Params,
    dt: f64,
    zero_tol: f64,
    v: Vec<f64>,
    drift: Vec<f64>,
    steps: u64,
}

impl FluidSolver {
    pub fn new(v0: &AggregateProfile, params: &Params, cfg: &IntegratorConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let dim = resolve_dim(v0, params, cfg)?;
        let mut v = v0.padded(dim);
        project(&mut v);
        Ok(Self {
            params: *params,
            dt: cfg.dt,
            zero_tol: cfg.zero_tol,
            v,
            drift: Vec::with_capacity(dim + 1),
            steps: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    pub fn state(&self) -> AggregateProfile {
        AggregateProfile::from_raw(self.v.clone())
    }

    /// One Euler step followed by projection onto the feasible set.
    pub fn step(&mut self) -> Result<()> {
        drift_v_into(&self.v, &self.params, self.zero_tol, &mut self.drift);
        for i in 1..self.v.len() {
            self.v[i] += self.dt * self.drift[i];
        }
        self.steps += 1;
        if self.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalBlowup { time: self.time() });
        }
        project(&mut self.v);
        Ok(())
    }
}

/// Restores feasibility: nonnegative coordinates, differences in `[0, 1]`
/// and nonincreasing (one backward pass), and `v_0 = v_1 + 1`.
pub(crate) fn project(v: &mut [f64]) {
    let d = v.len();
    let mut orig_next = 0.0;
    let mut s_next = 0.0f64;
    let mut acc = 0.0;
    for i in (1..d).rev() {
        let cur = v[i].max(0.0);
        let s = (cur - orig_next).max(s_next).min(1.0);
        orig_next = cur;
        acc += s;
        v[i] = acc;
        s_next = s;
    }
    if d > 1 {
        v[0] = v[1] + 1.0;
    } else if d == 1 {
        v[0] = 1.0;
    }
}

/// Integrates the fluid model from `v0` over `cfg.horizon`.
pub fn integrate(
    v0: &AggregateProfile,
    params: &Params,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut solver = FluidSolver::new(v0, params, cfg)?;
    let n_steps = cfg.n_steps();
    let mut traj = Trajectory::with_capacity((n_steps / cfg.record_stride as u64) as usize + 2);
    traj.push(0.0, solver.state())?;
    for k in 1..=n_steps {
        solver.step()?;
        if k % cfg.record_stride as u64 == 0 || k == n_steps {
            traj.push(solver.time(), solver.state())?;
        }
    }
    Ok(traj)
}

fn invariant_target(params: &Params, dim: usize) -> Result<AggregateProfile> {
    let inv = if params.p == 0.0 {
        invariant_profile_truncated(params, dim)?
    } else {
        invariant_profile(params)?
    };
    Ok(inv.v_inv)
}

/// Integrates until the weighted distance to the invariant state is at most
/// `tol`; returns that time and state.
pub fn settle_to_invariant(
    v0: &AggregateProfile,
    params: &Params,
    cfg: &IntegratorConfig,
    tol: f64,
) -> Result<(f64, AggregateProfile)> {
    let mut solver = FluidSolver::new(v0, params, cfg)?;
    let target = invariant_target(params, solver.dim())?;
    let tol_sq = tol * tol;
    let n_steps = cfg.n_steps();
    let mut dist_sq = weighted_distance_sq(solver.as_slice(), target.as_slice());
    for _ in 0..n_steps {
        if dist_sq <= tol_sq {
            break;
        }
        solver.step()?;
        dist_sq = weighted_distance_sq(solver.as_slice(), target.as_slice());
    }
    if dist_sq <= tol_sq {
        Ok((solver.time(), solver.state()))
    } else {
        Err(Error::NonConvergence {
            horizon: cfg.horizon,
            distance: dist_sq.sqrt(),
        })
    }
}

/// Largest index `i` with `v_i > eps`, or `0` if only `v_0` qualifies.
pub fn support_index(v: &AggregateProfile, eps: f64) -> usize {
    v.as_slice()
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .find(|(_, &x)| x > eps)
        .map_or(0, |(i, _)| i)
}

/// Weighted distance from `v` to the invariant state.
pub fn distance_to_invariant(v: &AggregateProfile, params: &Params) -> Result<f64> {
    let target = invariant_target(params, v.len().max(MIN_TRUNC_DIM))?;
    Ok(weighted_distance(v, &target))
}

/// A state representation with its own drift, for OSL checks.
pub trait DriftForm {
    fn coords(&self) -> &[f64];
    fn drift(&self, params: &Params) -> DriftVector;
}

impl DriftForm for AggregateProfile {
    fn coords(&self) -> &[f64] {
        self.as_slice()
    }

    fn drift(&self, params: &Params) -> DriftVector {
        drift_v(self, params)
    }
}

impl DriftForm for TailProfile {
    fn coords(&self) -> &[f64] {
        self.as_slice()
    }

    fn drift(&self, params: &Params) -> DriftVector {
        drift_s(self, params)
    }
}

/// Contraction constant `6(lambda + 1 - p)` of the aggregate drift.
pub fn osl_constant(params: &Params) -> f64 {
    6.0 * (params.lambda + 1.0 - params.p)
}

/// `<x - y, D(x) - D(y)>_w - c ||x - y||_w^2` for the drift `D` of the
/// chosen representation. Nonpositive values satisfy the OSL bound with `c`.
pub fn osl_gap<P: DriftForm>(x: &P, y: &P, params: &Params, c: f64) -> f64 {
    let (dx, dy) = (x.drift(params), y.drift(params));
    let n = x.coords().len().max(y.coords().len()) + 1;
    let at = |xs: &[f64], i: usize| xs.get(i).copied().unwrap_or(0.0);
    let diff: Vec<f64> = (0..n)
        .map(|i| at(x.coords(), i) - at(y.coords(), i))
        .collect();
    let ddiff: Vec<f64> = (0..n)
        .map(|i| at(dx.as_slice(), i) - at(dy.as_slice(), i))
        .collect();
    weighted_inner(&diff, &ddiff) - c * weighted_inner(&diff, &diff)
}

/// Pair of tail profiles whose drift breaks the OSL bound with constant `c`.
///
/// Uses `lambda = 0`, `p = 1`, `s^a = (1, 1/2, 0, ..)` and
/// `s^b = (1, 1/2 + eps, beta, 0, ..)` with `eps = 1/(2c)` (capped at 1/2),
/// shrinking `beta` until the gap turns positive.
pub fn tail_osl_witness(c: f64) -> Option<(TailProfile, TailProfile, f64)> {
    if !(c.is_finite() && c > 0.0) {
        return None;
    }
    let params = Params {
        lambda: 0.0,
        p: 1.0,
    };
    let alpha = 0.5;
    let eps = (0.5 / c).min(0.5);
    let sa = TailProfile::new(vec![1.0, alpha, 0.0]).ok()?;
    let mut beta = eps / 2.0;
    while beta > 1e-9 {
        let sb = TailProfile::new(vec![1.0, alpha + eps, beta]).ok()?;
        let gap = osl_gap(&sb, &sa, &params, c);
        if gap > 0.0 {
            return Some((sa, sb, gap));
        }
        beta /= 2.0;
    }
    None
}

/// The s-form witness pair mapped into the aggregate representation.
pub fn aggregate_pair(sa: &TailProfile, sb: &TailProfile) -> (AggregateProfile, AggregateProfile) {
    (
        crate::state::aggregate_from_tail(sa),
        crate::state::aggregate_from_tail(sb),
    )
}

/// `true` when every stored difference `v_i - v_{i+1}` lies in `[0, 1]` and
/// is nonincreasing, coordinates are nonnegative and `v_0 - v_1 = 1`, all
/// within `tol`.
pub fn is_feasible(v: &[f64], tol: f64) -> bool {
    if v.iter().any(|&x| x < -tol || !x.is_finite()) {
        return false;
    }
    let s = tail_coords(v);
    let v1 = v.get(1).copied().unwrap_or(0.0);
    if (v.first().copied().unwrap_or(0.0) - v1 - 1.0).abs() > tol {
        return false;
    }
    s.windows(2)
        .all(|w| w[1] >= -tol && w[1] <= w[0] + tol && w[1] <= 1.0 + tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{aggregate_from_tail, tail_from_aggregate};
    use approx::assert_abs_diff_eq;

    fn params(p: f64, lambda: f64) -> Params {
        Params::new(lambda, p).unwrap()
    }

    fn agg(v: &[f64]) -> AggregateProfile {
        AggregateProfile::new(v.to_vec()).unwrap()
    }

    #[test]
    fn drift_at_witness_vector() {
        let alpha = 0.3;
        let f = drift_v(&agg(&[1.0 + alpha, alpha, 0.0]), &params(1.0, 0.0));
        assert_eq!(&f.as_slice()[..4], &[-1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn drift_of_empty_system() {
        let f = drift_v(&AggregateProfile::empty_system(), &params(0.2, 0.9));
        // lambda - min(lambda, p)
        assert_abs_diff_eq!(f.get(1), 0.7, epsilon = 1e-15);
        assert_eq!(f.get(0), f.get(1));
        assert_eq!(f.get(2), 0.0);
    }

    #[test]
    fn tail_drift_examples() {
        let pr = params(1.0, 0.0);
        let h = drift_s(&TailProfile::new(vec![1.0, 0.4, 0.0]).unwrap(), &pr);
        assert_eq!(&h.as_slice()[..4], &[0.0, -1.0, 0.0, 0.0]);
        let h = drift_s(&TailProfile::new(vec![1.0, 0.45, 0.1, 0.0]).unwrap(), &pr);
        assert_eq!(&h.as_slice()[..4], &[0.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn tail_drift_is_difference_of_aggregate_drift() {
        let pr = params(0.3, 0.8);
        let s = TailProfile::new(vec![1.0, 0.7, 0.4, 0.1]).unwrap();
        let v = aggregate_from_tail(&s);
        let f = drift_v(&v, &pr);
        let h = drift_s(&s, &pr);
        for i in 1..s.len() {
            assert_abs_diff_eq!(h.get(i), f.get(i) - f.get(i + 1), epsilon = 1e-14);
        }
    }

    #[test]
    fn drift_vanishes_at_invariant_state() {
        for &(p, lambda) in &[(0.0, 0.5), (0.9, 0.5), (0.2, 0.8), (0.2, 0.9), (0.05, 0.99)] {
            let pr = params(p, lambda);
            let inv = invariant_profile(&pr).unwrap();
            assert!(
                drift_v(&inv.v_inv, &pr).max_abs() <= 1e-10,
                "p={p} lambda={lambda}"
            );
            assert!(
                drift_s(&inv.s_inv, &pr).max_abs() <= 1e-10,
                "p={p} lambda={lambda}"
            );
        }
    }

    #[test]
    fn projection_restores_feasibility() {
        let mut v = vec![9.0, 1.2, 1.0e-3, -1e-4, 2e-4];
        project(&mut v);
        assert!(is_feasible(&v, 1e-12), "{v:?}");
        assert_abs_diff_eq!(v[0], v[1] + 1.0, epsilon = 1e-15);

        // Feasible input is left alone.
        let orig = aggregate_from_tail(&TailProfile::new(vec![1.0, 0.6, 0.3, 0.1]).unwrap());
        let mut v = orig.as_slice().to_vec();
        project(&mut v);
        for (a, b) in v.iter().zip(orig.as_slice()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn invariant_state_is_a_fixed_point_of_the_integrator() {
        let pr = params(0.2, 0.9);
        let inv = invariant_profile(&pr).unwrap();
        let traj = integrate(&inv.v_inv, &pr, &IntegratorConfig::with_horizon(10.0)).unwrap();
        for state in traj.states() {
            assert!(weighted_distance(state, &inv.v_inv) <= 1e-8);
        }
    }

    #[test]
    fn large_p_drains_to_empty_system() {
        let pr = params(0.9, 0.5);
        let v0 =
            aggregate_from_tail(&TailProfile::new(vec![1.0, 0.9, 0.8, 0.7, 0.5, 0.3]).unwrap());
        let traj = integrate(&v0, &pr, &IntegratorConfig::with_horizon(20.0)).unwrap();
        let (_, last) = traj.last().unwrap();
        assert!(weighted_distance(last, &AggregateProfile::empty_system()) < 1e-9);
    }

    #[test]
    fn settle_examples() {
        let pr = params(0.2, 0.9);
        let inv = invariant_profile(&pr).unwrap();
        let (t, _) =
            settle_to_invariant(&inv.v_inv, &pr, &IntegratorConfig::default(), 1e-6).unwrap();
        assert_eq!(t, 0.0);

        let pr = params(0.9, 0.5);
        let mut s = vec![1.0];
        s.extend(std::iter::repeat_n(0.5, 10));
        let v0 = aggregate_from_tail(&TailProfile::new(s).unwrap());
        assert_eq!(v0.get(1), 5.0);
        let (t, v) =
            settle_to_invariant(&v0, &pr, &IntegratorConfig::with_horizon(100.0), 1e-6).unwrap();
        assert!(t > 0.0 && t < 100.0);
        assert!(v.get(1) < 1e-6);
    }

    #[test]
    fn settle_reports_non_convergence() {
        let pr = params(0.05, 0.9);
        let v0 = AggregateProfile::empty_system();
        let err =
            settle_to_invariant(&v0, &pr, &IntegratorConfig::with_horizon(0.5), 1e-6).unwrap_err();
        match err {
            Error::NonConvergence { distance, .. } => assert!(distance > 1e-6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn integrator_config_errors() {
        let pr = params(0.0, 0.5);
        let v0 = AggregateProfile::empty_system();
        assert!(matches!(
            integrate(&v0, &pr, &IntegratorConfig::default()),
            Err(Error::InvalidInput(_))
        ));
        let v0 = aggregate_from_tail(&TailProfile::new(vec![1.0; 10]).unwrap());
        let cfg = IntegratorConfig {
            trunc_dim: Some(5),
            ..IntegratorConfig::default()
        };
        assert!(matches!(
            integrate(&v0, &params(0.5, 0.5), &cfg),
            Err(Error::Truncation { .. })
        ));
        let cfg = IntegratorConfig {
            dt: 0.0,
            ..IntegratorConfig::default()
        };
        assert!(integrate(&v0, &params(0.5, 0.5), &cfg).is_err());
    }

    #[test]
    fn support_index_examples() {
        assert_eq!(support_index(&AggregateProfile::empty_system(), 1e-6), 0);
        let inv = invariant_profile(&params(0.2, 0.9)).unwrap();
        assert_eq!(support_index(&inv.v_inv, 1e-9), 5);
    }

    #[test]
    fn osl_gap_is_zero_on_the_diagonal() {
        let pr = params(0.3, 0.7);
        let v = agg(&[2.5, 1.5, 0.7, 0.1]);
        assert_eq!(osl_gap(&v, &v, &pr, osl_constant(&pr)), 0.0);
    }

    #[test]
    fn tail_witness_matches_hand_computation() {
        // gap = eps/2 - beta/4 - C (eps^2/2 + beta^2/4)
        for c in [1.0, 10.0, 100.0] {
            let (sa, sb, gap) = tail_osl_witness(c).unwrap();
            let eps = sb.get(1) - sa.get(1);
            let beta = sb.get(2);
            assert!(eps < 1.0 / c);
            let expected = eps / 2.0 - beta / 4.0 - c * (eps * eps / 2.0 + beta * beta / 4.0);
            assert_abs_diff_eq!(gap, expected, epsilon = 1e-12);
            assert!(gap > 0.0);

            // The same pair in the aggregate representation satisfies the bound.
            let (va, vb) = aggregate_pair(&sa, &sb);
            assert!(
                osl_gap(
                    &vb,
                    &va,
                    &Params {
                        lambda: 0.0,
                        p: 1.0
                    },
                    c
                ) <= 0.0
            );
            assert_eq!(tail_from_aggregate(&va).as_slice(), &[1.0, 0.5]);
        }
    }
}

//! Closed-form invariant state of the fluid model and the delay-scaling
//! quantities derived from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{aggregate_from_tail, AggregateProfile, Params, TailProfile};

/// Tolerance for detecting `lambda = 1 - p`, where the generic formula is singular.
pub const CRITICAL_CASE_TOL: f64 = 1e-12;

/// Geometric profiles (p = 0) are cut once `lambda^i` drops below this.
pub const GEOMETRIC_CUTOFF: f64 = 1e-15;

// Guards floor() against values a few ulps below an integer.
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantCase {
    /// No central server: geometric tail `s_i = lambda^i`.
    PZero,
    /// Central capacity covers all arrivals: every queue empty.
    PGeqLambda,
    /// `lambda = 1 - p`: linear tail.
    Critical,
    /// `0 < p < lambda`, `lambda != 1 - p`: truncated geometric-minus-constant tail.
    Subcritical,
}

impl InvariantCase {
    pub fn id(&self) -> &'static str {
        match self {
            Self::PZero => "p_zero",
            Self::PGeqLambda => "p_geq_lambda",
            Self::Critical => "critical",
            Self::Subcritical => "subcritical",
        }
    }
}

pub fn classify(params: &Params) -> InvariantCase {
    let Params { lambda, p } = *params;
    if p == 0.0 {
        InvariantCase::PZero
    } else if p >= lambda {
        InvariantCase::PGeqLambda
    } else if (lambda - (1.0 - p)).abs() <= CRITICAL_CASE_TOL {
        InvariantCase::Critical
    } else {
        InvariantCase::Subcritical
    }
}

/// The invariant state together with its summary statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantProfile {
    pub s_inv: TailProfile,
    pub v_inv: AggregateProfile,
    pub case_id: InvariantCase,
    /// Last index of the support; `None` when `p = 0`.
    pub critical_index: Option<usize>,
    /// `v_1`, by direct summation of `s_inv`.
    pub mean_queue_length: f64,
}

/// Last index at which the invariant tail profile can be positive.
///
/// Returns `floor(log_{lambda/(1-p)}(p/(1-lambda)))` for `0 < p < lambda`,
/// `floor((1-p)/p)` when `lambda = 1 - p`, and `0` when `p >= lambda`.
pub fn critical_index(params: &Params) -> Result<usize> {
    params.validate()?;
    let Params { lambda, p } = *params;
    Ok(match classify(params) {
        InvariantCase::PZero => return Err(Error::InfiniteSupport),
        InvariantCase::PGeqLambda => 0,
        InvariantCase::Critical => ((1.0 - p) / p + FLOOR_SLACK).floor() as usize,
        InvariantCase::Subcritical => {
            let x = (p / (1.0 - lambda)).ln() / (lambda / (1.0 - p)).ln();
            (x + FLOOR_SLACK).floor().max(0.0) as usize
        }
    })
}

/// Invariant state; `p = 0` profiles are cut at [`GEOMETRIC_CUTOFF`].
pub fn invariant_profile(params: &Params) -> Result<InvariantProfile> {
    build_profile(params, None)
}

/// Like [`invariant_profile`], but a `p = 0` profile stores exactly
/// `len` coordinates `s_0..s_{len-1}`. Ignored when `p > 0`.
pub fn invariant_profile_truncated(params: &Params, len: usize) -> Result<InvariantProfile> {
    build_profile(params, Some(len.max(1)))
}

fn build_profile(params: &Params, geometric_len: Option<usize>) -> Result<InvariantProfile> {
    params.validate()?;
    let Params { lambda, p } = *params;
    let case_id = classify(params);
    let mut s = vec![1.0];
    let istar = match case_id {
        InvariantCase::PZero => {
            let mut x = 1.0;
            loop {
                x *= lambda;
                let done = match geometric_len {
                    Some(len) => s.len() >= len,
                    None => x < GEOMETRIC_CUTOFF,
                };
                if done {
                    break;
                }
                s.push(x);
            }
            None
        }
        InvariantCase::PGeqLambda => Some(0),
        InvariantCase::Critical => {
            let k = critical_index(params)?;
            let r = p / (1.0 - p);
            s.extend((1..=k).map(|i| (1.0 - r * i as f64).max(0.0)));
            Some(k)
        }
        InvariantCase::Subcritical => {
            let k = critical_index(params)?;
            let denom = 1.0 - (p + lambda);
            let ratio = lambda / (1.0 - p);
            s.extend((1..=k).map(|i| {
                ((1.0 - lambda) / denom * ratio.powi(i as i32) - p / denom).clamp(0.0, 1.0)
            }));
            Some(k)
        }
    };

    let s_inv = TailProfile::from_raw(s);
    let v_inv = aggregate_from_tail(&s_inv);
    let mean_queue_length = s_inv.mean_queue_length();
    Ok(InvariantProfile {
        s_inv,
        v_inv,
        case_id,
        critical_index: istar,
        mean_queue_length,
    })
}

/// Average queue length `v_1` in the invariant state.
///
/// Sums the invariant tail profile directly; `p = 0` uses `lambda/(1-lambda)`.
pub fn mean_queue_length(params: &Params) -> Result<f64> {
    params.validate()?;
    if params.p == 0.0 {
        return Ok(params.lambda / (1.0 - params.lambda));
    }
    Ok(invariant_profile(params)?.mean_queue_length)
}

/// The displayed closed form for `v_1` in the subcritical case.
///
/// It does not agree with the direct sum of the invariant profile (for
/// `p = 0.2, lambda = 0.9` it gives 3.584 against 2.782), so it is reported
/// next to [`mean_queue_length`] and never used in its place.
pub fn closed_form_mean(params: &Params) -> Option<f64> {
    if classify(params) != InvariantCase::Subcritical {
        return None;
    }
    let Params { lambda, p } = *params;
    let k = critical_index(params).ok()?;
    let d = 1.0 - p - lambda;
    Some(
        (1.0 - p) * (1.0 - lambda) / (d * d) * (1.0 - (lambda / (1.0 - p)).powi(k as i32))
            - p / d * k as f64,
    )
}

/// `log_{1/(1-p)}(1/(1-lambda))`, the heavy-traffic growth rate of `v_1`.
pub fn scaling_target(params: &Params) -> Result<f64> {
    params.validate()?;
    let Params { lambda, p } = *params;
    if p == 0.0 || p == 1.0 || lambda == 0.0 {
        return Err(Error::UnsupportedCase(format!(
            "scaling target needs 0 < p < 1 and 0 < lambda < 1 (p = {p}, lambda = {lambda})"
        )));
    }
    Ok((1.0 - lambda).ln() / (1.0 - p).ln())
}

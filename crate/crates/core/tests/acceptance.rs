//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so the lines are always printed; exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use clab_core::fluid::{
    drift_v, integrate, osl_constant, osl_gap, settle_to_invariant, support_index,
    tail_osl_witness, IntegratorConfig,
};
use clab_core::harness::finite_horizon_deviation;
use clab_core::invariant::{classify, critical_index, invariant_profile, mean_queue_length};
use clab_core::rng::Stream;
use clab_core::sim::{
    compare_policies, steady_state_estimate, SimConfig, SimMode, Simulation, TraceWriter,
};
use clab_core::state::aggregate_from_tail;
use clab_core::{Params, TailProfile};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn params(p: f64, lambda: f64) -> Params {
    Params::new(lambda, p).unwrap()
}

/// Random nonincreasing tail profile with `len` coordinates after `s_0`.
fn random_tail(rng: &mut Stream, len: usize) -> TailProfile {
    let mut s = vec![1.0];
    let mut x = 1.0;
    for _ in 0..len {
        x *= rng.next_f64();
        s.push(x);
    }
    TailProfile::new(s).unwrap()
}

fn table() -> Outcome {
    let ps = [0.002, 0.02, 0.2, 0.5, 0.8];
    let lambdas = [0.1, 0.6, 0.9, 0.99, 0.999];
    let expected = [
        [2, 10, 37, 199, 692],
        [1, 6, 18, 68, 156],
        [0, 2, 5, 14, 23],
        [0, 1, 2, 5, 8],
        [0, 0, 1, 2, 4],
    ];
    let mut wrong = Vec::new();
    for (r, &p) in ps.iter().enumerate() {
        for (c, &lambda) in lambdas.iter().enumerate() {
            let got = critical_index(&params(p, lambda)).unwrap();
            if got != expected[r][c] {
                wrong.push(format!("({p},{lambda})={got}!={}", expected[r][c]));
            }
        }
    }
    outcome(wrong.is_empty(), format!("25 cells, mismatches: {wrong:?}"))
}

fn fixed_point() -> Outcome {
    let mut grid = Vec::new();
    for p in [0.0, 0.01, 0.05, 0.2, 0.5, 0.9, 1.0] {
        for lambda in [0.0, 0.3, 0.5, 0.9, 0.99] {
            grid.push(params(p, lambda));
        }
    }
    for p in [0.1, 0.2, 0.25, 0.5] {
        grid.push(params(p, 1.0 - p));
    }
    let mut cases = std::collections::BTreeSet::new();
    let mut worst = 0.0f64;
    for pr in &grid {
        cases.insert(classify(pr).id());
        let inv = invariant_profile(pr).unwrap();
        worst = worst.max(drift_v(&inv.v_inv, pr).max_abs());
    }
    outcome(
        worst <= 1e-10 && cases.len() == 4 && grid.len() >= 20,
        format!(
            "{} pairs, cases {cases:?}, max |F| = {worst:.2e}",
            grid.len()
        ),
    )
}

fn global_stability() -> Outcome {
    let mut rng = Stream::new(3);
    let cfg = IntegratorConfig {
        dt: 1e-3,
        horizon: 2000.0,
        ..IntegratorConfig::default()
    };
    let mut worst_t = 0.0f64;
    let mut failures = Vec::new();
    for (p, lambda) in [(0.05, 0.9), (0.5, 0.99), (0.9, 0.5)] {
        let pr = params(p, lambda);
        for k in 0..10 {
            let v0 = aggregate_from_tail(&random_tail(&mut rng, 10));
            match settle_to_invariant(&v0, &pr, &cfg, 1e-4) {
                Ok((t, _)) => worst_t = worst_t.max(t),
                Err(e) => failures.push(format!("({p},{lambda})#{k}: {e}")),
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("30 runs, slowest settle t = {worst_t:.2}, failures: {failures:?}"),
    )
}

fn zero_p_baseline() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for lambda in [0.5, 0.9] {
        let est = steady_state_estimate(&SimConfig::new(params(0.0, lambda), 100, 11)).unwrap();
        let target = lambda / (1.0 - lambda);
        let rel = (est.mean - target).abs() / target;
        pass &= rel <= 0.05;
        detail.push(format!(
            "lambda={lambda}: mean {:.3} vs {target} ({:.1}%)",
            est.mean,
            rel * 100.0
        ));
    }
    outcome(pass, detail.join("; "))
}

fn phase_transition() -> Outcome {
    let pr = params(0.05, 0.99);
    let fluid = mean_queue_length(&pr).unwrap();
    let est = steady_state_estimate(&SimConfig::new(pr, 100, 12)).unwrap();
    let baseline = 0.99 / 0.01;
    let rel = (est.mean - fluid).abs() / fluid;
    outcome(
        rel <= 0.10 && 3.0 * est.mean <= baseline,
        format!(
            "sim mean {:.3}, fluid {fluid:.3} ({:.1}%), p=0 value {baseline:.1} ({:.1}x)",
            est.mean,
            rel * 100.0,
            baseline / est.mean
        ),
    )
}

fn osl_dichotomy() -> Outcome {
    let mut rng = Stream::new(6);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let pr = params(rng.next_f64(), rng.next_f64());
        let la = 1 + (rng.next_u64() % 12) as usize;
        let lb = 1 + (rng.next_u64() % 12) as usize;
        let a = aggregate_from_tail(&random_tail(&mut rng, la));
        let b = aggregate_from_tail(&random_tail(&mut rng, lb));
        worst = worst.max(osl_gap(&a, &b, &pr, osl_constant(&pr)));
    }
    let mut witnesses = Vec::new();
    let mut all_found = true;
    for c in [1.0, 10.0, 100.0] {
        match tail_osl_witness(c) {
            Some((_, sb, gap)) => {
                let eps = sb.get(1) - 0.5;
                all_found &= gap > 0.0 && eps < 1.0 / c;
                witnesses.push(format!("C={c}: gap {gap:.2e}"));
            }
            None => {
                all_found = false;
                witnesses.push(format!("C={c}: none"));
            }
        }
    }
    outcome(
        worst <= 0.0 && all_found,
        format!("max v-form gap {worst:.3e}; {}", witnesses.join(", ")),
    )
}

fn dominance() -> Outcome {
    let cfg = SimConfig::new(params(0.05, 0.9), 100, 7);
    let (at_p, at_zero) = compare_policies(&cfg).unwrap();
    let smaller = at_p.mean < at_zero.mean;
    let disjoint = at_p.ue < at_zero.le;
    outcome(
        smaller && disjoint,
        format!(
            "mean {:.3} [{}, {}] vs p=0 mean {:.3} [{}, {}]; means ordered: {smaller}, intervals disjoint: {disjoint}",
            at_p.mean, at_p.le, at_p.ue, at_zero.mean, at_zero.le, at_zero.ue
        ),
    )
}

fn finite_horizon() -> Outcome {
    let pr = params(0.05, 0.9);
    let avg = |n: usize| -> f64 {
        (0..5u64)
            .map(|s| finite_horizon_deviation(&pr, n, 10.0, 100 + s).unwrap())
            .sum::<f64>()
            / 5.0
    };
    let (d10, d1000) = (avg(10), avg(1000));
    outcome(
        d1000 < d10,
        format!("avg deviation N=10: {d10:.4}, N=1000: {d1000:.4}"),
    )
}

fn support_collapse() -> Outcome {
    let pr = params(0.1, 0.5);
    // s_i = 1 - i/201 for i = 1..=200.
    let s: Vec<f64> = (0..=200).map(|i| 1.0 - i as f64 / 201.0).collect();
    let v0 = aggregate_from_tail(&TailProfile::new(s).unwrap());
    let early = integrate(&v0, &pr, &IntegratorConfig::with_horizon(1.0)).unwrap();
    let at_one = support_index(early.last().unwrap().1, 1e-6);
    let cfg = IntegratorConfig::with_horizon(5000.0);
    let settled = settle_to_invariant(&v0, &pr, &cfg, 1e-9);
    let istar = critical_index(&pr).unwrap();
    match settled {
        Ok((t, v)) => {
            let end = support_index(&v, 1e-6);
            outcome(
                support_index(&v0, 1e-6) == 200 && at_one < 200 && end == istar,
                format!("support 200 -> {at_one} at t=1 -> {end} at t={t:.1}; i* = {istar}"),
            )
        }
        Err(e) => outcome(false, format!("did not settle: {e}")),
    }
}

fn ledger_and_determinism() -> Outcome {
    let cfg = SimConfig::new(params(0.05, 0.99), 100, 10).with_mode(SimMode::AggregateCoupled);
    let mut sim = Simulation::new(&cfg).unwrap();
    let mut exact = true;
    for _ in 0..1_000_000 {
        sim.advance();
        let v = sim.aggregate_counts();
        let rebuilt = sim.ledger().reconstruct(sim.initial_aggregate_counts());
        let len = v.len().max(rebuilt.len());
        exact &= (0..len)
            .all(|i| v.get(i).map_or(0, |&x| x as i64) == rebuilt.get(i).copied().unwrap_or(0));
        if !exact {
            break;
        }
    }
    let trace = |mode: SimMode| -> Vec<u8> {
        let cfg = SimConfig::new(params(0.05, 0.99), 100, 10).with_mode(mode);
        let mut sim = Simulation::new(&cfg).unwrap();
        let mut w = TraceWriter::new(Vec::new()).unwrap();
        for _ in 0..1_000_000 {
            let e = sim.advance();
            w.write(&sim, &e).unwrap();
        }
        w.finish().unwrap()
    };
    let identical = [SimMode::QueueLevel, SimMode::AggregateCoupled]
        .into_iter()
        .all(|mode| trace(mode) == trace(mode));
    outcome(
        exact && identical,
        format!("ledger exact over 10^6 events: {exact}; repeated traces identical: {identical}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("table reproduction", table, Duration::from_secs(1)),
        ("fixed point", fixed_point, Duration::from_secs(1)),
        (
            "global stability",
            global_stability,
            Duration::from_secs(60),
        ),
        ("p=0 baseline", zero_p_baseline, Duration::from_secs(120)),
        (
            "phase transition",
            phase_transition,
            Duration::from_secs(300),
        ),
        ("OSL dichotomy", osl_dichotomy, Duration::from_secs(10)),
        ("dominance", dominance, Duration::from_secs(120)),
        (
            "finite-horizon convergence",
            finite_horizon,
            Duration::from_secs(300),
        ),
        (
            "finite-support collapse",
            support_collapse,
            Duration::from_secs(60),
        ),
        (
            "ledger and determinism",
            ledger_and_determinism,
            Duration::from_secs(30),
        ),
    ];
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} ({:.2}s, budget {}s)",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

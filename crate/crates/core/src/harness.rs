//! Experiments built from the other modules: finite-horizon deviation between
//! the chain and the fluid model, steady-state concentration in `N`, and grid
//! sweeps written out as tidy CSV.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};
use crate::fluid::{integrate, settle_to_invariant, IntegratorConfig, DEFAULT_DT, MIN_TRUNC_DIM};
use crate::invariant::{critical_index, mean_queue_length, scaling_target};
use crate::rng::derive_seed;
use crate::sim::{
    run_chain, steady_state_estimate, SimConfig, SimMode, SteadyStateEstimate, DEFAULT_BURN_IN,
    DEFAULT_SAMPLES, DEFAULT_SPACING,
};
use crate::state::{path_distance, AggregateProfile, Params};

/// Environment variable bounding the sweep worker pool.
pub const THREADS_ENV: &str = "CLAB_THREADS";

/// Number of chain events covering `horizon` on the normalized clock.
pub fn events_for_horizon(params: &Params, n: usize, horizon: f64) -> u64 {
    (n as f64 * (1.0 + params.lambda) * horizon).round() as u64
}

/// Sup-in-time weighted distance between the coupled chain and the fluid
/// solution, both started empty, over `[0, horizon]`.
pub fn finite_horizon_deviation(params: &Params, n: usize, horizon: f64, seed: u64) -> Result<f64> {
    params.validate()?;
    let cfg = SimConfig::new(*params, n, seed).with_mode(SimMode::AggregateCoupled);
    let (chain, _) = run_chain(&cfg, events_for_horizon(params, n, horizon))?;
    let icfg = IntegratorConfig {
        dt: DEFAULT_DT,
        horizon,
        trunc_dim: (params.p == 0.0).then_some(MIN_TRUNC_DIM),
        ..IntegratorConfig::default()
    };
    let fluid = integrate(&AggregateProfile::empty_system(), params, &icfg)?;
    path_distance(&chain, &fluid)
}

/// Burn-in and sampling settings for steady-state runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub burn_in_steps: u64,
    pub n_samples: u64,
    pub sample_spacing: u64,
    pub mode: SimMode,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            burn_in_steps: DEFAULT_BURN_IN,
            n_samples: DEFAULT_SAMPLES,
            sample_spacing: DEFAULT_SPACING,
            mode: SimMode::QueueLevel,
        }
    }
}

impl Protocol {
    pub fn config(&self, params: Params, n: usize, seed: u64) -> SimConfig {
        SimConfig::new(params, n, seed)
            .with_protocol(self.burn_in_steps, self.n_samples, self.sample_spacing)
            .with_mode(self.mode)
    }
}

/// One row of output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub p: f64,
    pub lambda: f64,
    pub n: usize,
    pub seed: u64,
    pub quantity: String,
    pub value: f64,
    pub ue: Option<f64>,
    pub le: Option<f64>,
}

impl ResultRecord {
    fn new(params: &Params, n: usize, seed: u64, quantity: &str, value: f64) -> Self {
        Self {
            p: params.p,
            lambda: params.lambda,
            n,
            seed,
            quantity: quantity.to_string(),
            value,
            ue: None,
            le: None,
        }
    }

    fn with_ends(mut self, ue: f64, le: f64) -> Self {
        self.ue = Some(ue);
        self.le = Some(le);
        self
    }

    fn sort_key(&self) -> impl Ord + '_ {
        (
            OrdF64(self.p),
            OrdF64(self.lambda),
            self.n,
            self.seed,
            &self.quantity,
        )
    }
}

#[derive(PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Steady-state estimate at one `N` together with its distance to `v^I_1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationPoint {
    pub n: usize,
    pub estimate: SteadyStateEstimate,
    pub gap: f64,
}

/// `|mean - v^I_1|` for each `N`, one record per grid value, default protocol.
pub fn concentration_study(
    params: &Params,
    n_values: &[usize],
    seed: u64,
) -> Result<Vec<ResultRecord>> {
    let points = concentration_study_with(params, n_values, seed, &Protocol::default())?;
    Ok(points
        .into_iter()
        .map(|pt| {
            ResultRecord::new(params, pt.n, pt.estimate.seed, "concentration_gap", pt.gap)
                .with_ends(pt.estimate.ue, pt.estimate.le)
        })
        .collect())
}

/// [`concentration_study`] with an explicit protocol; each `N` runs on the
/// sub-seed `derive_seed(seed, [k])` where `k` is its grid position.
pub fn concentration_study_with(
    params: &Params,
    n_values: &[usize],
    seed: u64,
    protocol: &Protocol,
) -> Result<Vec<ConcentrationPoint>> {
    params.validate()?;
    if n_values.is_empty() {
        return Err(invalid_input("n grid is empty"));
    }
    let target = mean_queue_length(params)?;
    n_values
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let cfg = protocol.config(*params, n, derive_seed(seed, &[k as u64]));
            let estimate = steady_state_estimate(&cfg)?;
            Ok(ConcentrationPoint {
                n,
                gap: (estimate.mean - target).abs(),
                estimate,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    /// `critical_index`, `invariant_mean`, `scaling_target`.
    Invariant,
    /// `fluid_settle_time`, `fluid_mean`: integrate from empty until within
    /// `fluid_tol` of the invariant state.
    Fluid,
    /// `sim_mean` with its UE/LE.
    Simulation,
    /// `deviation` over `[0, deviation_horizon]`.
    Deviation,
}

impl Output {
    pub fn quantities(&self) -> &'static [&'static str] {
        match self {
            Self::Invariant => &["critical_index", "invariant_mean", "scaling_target"],
            Self::Fluid => &["fluid_settle_time", "fluid_mean"],
            Self::Simulation => &["sim_mean"],
            Self::Deviation => &["deviation"],
        }
    }
}

fn default_replications() -> usize {
    1
}
fn default_fluid_horizon() -> f64 {
    1000.0
}
fn default_fluid_tol() -> f64 {
    1e-4
}
fn default_deviation_horizon() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub p_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub n_values: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub outputs: BTreeSet<Output>,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default = "default_fluid_horizon")]
    pub fluid_horizon: f64,
    #[serde(default = "default_fluid_tol")]
    pub fluid_tol: f64,
    #[serde(default = "default_deviation_horizon")]
    pub deviation_horizon: f64,
}

impl SweepSpec {
    pub fn new(p_values: Vec<f64>, lambda_values: Vec<f64>, n_values: Vec<usize>) -> Self {
        Self {
            p_values,
            lambda_values,
            n_values,
            replications: 1,
            base_seed: 0,
            outputs: BTreeSet::new(),
            protocol: Protocol::default(),
            fluid_horizon: default_fluid_horizon(),
            fluid_tol: default_fluid_tol(),
            deviation_horizon: default_deviation_horizon(),
        }
    }

    pub fn with_outputs(mut self, outputs: impl IntoIterator<Item = Output>) -> Self {
        self.outputs = outputs.into_iter().collect();
        self
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_values.is_empty() || self.lambda_values.is_empty() || self.n_values.is_empty() {
            return Err(invalid_input("sweep grids must be nonempty"));
        }
        if self.replications == 0 {
            return Err(invalid_input("replications must be at least 1"));
        }
        if self.n_values.contains(&0) {
            return Err(invalid_input("n values must be positive"));
        }
        Ok(())
    }

    /// Records a complete run produces.
    pub fn expected_records(&self) -> usize {
        let per_cell: usize = self.outputs.iter().map(|o| o.quantities().len()).sum();
        self.p_values.len()
            * self.lambda_values.len()
            * self.n_values.len()
            * self.replications
            * per_cell
    }
}

/// A quantity that could not be computed for one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub p: f64,
    pub lambda: f64,
    pub n: usize,
    pub seed: u64,
    pub quantity: String,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<ResultRecord>,
    pub failures: Vec<CellFailure>,
}

struct Cell {
    p: f64,
    lambda: f64,
    n: usize,
    seed: u64,
}

impl Cell {
    fn fail(&self, quantity: &str, err: impl ToString) -> CellFailure {
        CellFailure {
            p: self.p,
            lambda: self.lambda,
            n: self.n,
            seed: self.seed,
            quantity: quantity.to_string(),
            error: err.to_string(),
        }
    }
}

fn run_cell(spec: &SweepSpec, cell: &Cell) -> SweepResult {
    let mut out = SweepResult::default();
    let params = match Params::new(cell.lambda, cell.p) {
        Ok(p) => p,
        Err(e) => {
            for o in &spec.outputs {
                for q in o.quantities() {
                    out.failures.push(cell.fail(q, &e));
                }
            }
            return out;
        }
    };
    let emit = |out: &mut SweepResult, quantity: &str, value: Result<f64>| match value {
        Ok(v) => out
            .records
            .push(ResultRecord::new(&params, cell.n, cell.seed, quantity, v)),
        Err(e) => out.failures.push(cell.fail(quantity, e)),
    };
    for output in &spec.outputs {
        match output {
            Output::Invariant => {
                emit(
                    &mut out,
                    "critical_index",
                    critical_index(&params).map(|i| i as f64),
                );
                emit(&mut out, "invariant_mean", mean_queue_length(&params));
                emit(&mut out, "scaling_target", scaling_target(&params));
            }
            Output::Fluid => {
                let icfg = IntegratorConfig {
                    horizon: spec.fluid_horizon,
                    trunc_dim: (params.p == 0.0).then_some(MIN_TRUNC_DIM),
                    ..IntegratorConfig::default()
                };
                match settle_to_invariant(
                    &AggregateProfile::empty_system(),
                    &params,
                    &icfg,
                    spec.fluid_tol,
                ) {
                    Ok((t, v)) => {
                        emit(&mut out, "fluid_settle_time", Ok(t));
                        emit(&mut out, "fluid_mean", Ok(v.mean_queue_length()));
                    }
                    Err(e) => {
                        let msg = e.to_string();
                        out.failures.push(cell.fail("fluid_settle_time", &msg));
                        out.failures.push(cell.fail("fluid_mean", &msg));
                    }
                }
            }
            Output::Simulation => {
                let cfg = spec.protocol.config(params, cell.n, cell.seed);
                match steady_state_estimate(&cfg) {
                    Ok(est) => out.records.push(
                        ResultRecord::new(&params, cell.n, cell.seed, "sim_mean", est.mean)
                            .with_ends(est.ue, est.le),
                    ),
                    Err(e) => out.failures.push(cell.fail("sim_mean", e)),
                }
            }
            Output::Deviation => emit(
                &mut out,
                "deviation",
                finite_horizon_deviation(&params, cell.n, spec.deviation_horizon, cell.seed),
            ),
        }
    }
    out
}

/// Runs every `(p, lambda, n, replication)` cell; cell `(ip, il, in, r)` uses
/// the sub-seed `derive_seed(base_seed, [ip, il, in, r])`. Cells that fail
/// are listed in `failures` and the sweep carries on. Records come back
/// sorted by `(p, lambda, n, seed, quantity)`.
pub fn sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    if spec.outputs.is_empty() {
        return Ok(SweepResult::default());
    }
    let mut cells = Vec::new();
    for (ip, &p) in spec.p_values.iter().enumerate() {
        for (il, &lambda) in spec.lambda_values.iter().enumerate() {
            for (inn, &n) in spec.n_values.iter().enumerate() {
                for r in 0..spec.replications {
                    let seed = derive_seed(
                        spec.base_seed,
                        &[ip as u64, il as u64, inn as u64, r as u64],
                    );
                    cells.push(Cell { p, lambda, n, seed });
                }
            }
        }
    }
    let run = || -> Vec<SweepResult> { cells.par_iter().map(|c| run_cell(spec, c)).collect() };
    let parts = match worker_count()? {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| invalid_input(format!("cannot build worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    let mut result = SweepResult::default();
    for part in parts {
        result.records.extend(part.records);
        result.failures.extend(part.failures);
    }
    result
        .records
        .sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(result)
}

fn worker_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(invalid_input(format!(
                "{THREADS_ENV} must be a positive integer, got {s:?}"
            ))),
        },
        Err(_) => Ok(None),
    }
}

pub const RESULTS_HEADER: [&str; 8] = ["p", "lambda", "n", "seed", "quantity", "value", "ue", "le"];

pub fn write_results_csv<W: std::io::Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.p.to_string(),
            r.lambda.to_string(),
            r.n.to_string(),
            r.seed.to_string(),
            r.quantity.clone(),
            r.value.to_string(),
            opt(r.ue),
            opt(r.le),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    spec: &'a SweepSpec,
    version: &'static str,
    wall_time_s: f64,
    n_records: usize,
    failures: &'a [CellFailure],
}

/// Runs the sweep and writes `results.csv` and `manifest.json` into `dir`.
pub fn run_sweep_to_dir(spec: &SweepSpec, dir: impl AsRef<Path>) -> Result<SweepResult> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let start = Instant::now();
    let result = sweep(spec)?;
    let wall = start.elapsed().as_secs_f64();
    write_results_csv(&result.records, fs::File::create(dir.join("results.csv"))?)?;
    let manifest = Manifest {
        spec,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_s: wall,
        n_records: result.records.len(),
        failures: &result.failures,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(result)
}

//! Monte-Carlo evaluation: seeded outage scenarios, noisy PMU measurements,
//! the lasso method against correlation and DC baselines, accuracy scoring.
//!
//! Every random quantity comes from its own ChaCha8 stream keyed by the master
//! seed and the indices it belongs to, so results do not depend on thread
//! scheduling.

use std::collections::BTreeSet;

use log::{info, warn};
use nalgebra::DVector;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lars::{lars_path, select_outages, standardize, IdentificationResult, SelectionRule, StandardizedDesign};
use crate::mdc::{augment, build_mdc, MdcCatalog};
use crate::netmodel::NetworkModel;
use crate::powerflow::{solve_power_flow, PowerFlowOptions, SteadyState};
use crate::sigmap::{ac_response, dc_response, AngleResponse, PmuPlacement, SignatureMap};

const TAG_PLACEMENT: u64 = 1;
const TAG_SCENARIO: u64 = 2;
const TAG_PAIRS: u64 = 3;

/// Highest line id eligible for single-line scenarios.
pub const SINGLE_LINE_LIMIT: usize = 36;
const PAIR_ATTEMPTS_PER_PAIR: usize = 100;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one `(seed, indices...)` key.
pub fn stream(seed: u64, key: &[u64]) -> ChaCha8Rng {
    let mixed = key.iter().fold(splitmix(seed), |acc, &k| splitmix(acc ^ splitmix(k)));
    ChaCha8Rng::seed_from_u64(mixed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutageKind {
    Single,
    Double,
}

impl OutageKind {
    pub fn size(self) -> usize {
        match self {
            OutageKind::Single => 1,
            OutageKind::Double => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// LARS lasso on the AC signature map.
    Lasso,
    /// Top-k absolute correlation with the AC map columns, k = true outage size.
    Corr,
    /// LARS lasso on the DC signature map.
    Dc,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lasso, Method::Corr, Method::Dc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lasso => "lasso",
            Method::Corr => "corr",
            Method::Dc => "dc",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per-bus standard deviation as a fraction of the clean angle change.
    pub sigma_fraction: f64,
    /// Minimum standard deviation, radians.
    pub floor: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma_fraction: 0.05,
            floor: 1e-6,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_fraction >= 0.0 && self.sigma_fraction.is_finite()) {
            return Err(Error::Config(format!("noise fraction {} must be >= 0", self.sigma_fraction)));
        }
        if !(self.floor >= 0.0 && self.floor.is_finite()) {
            return Err(Error::Config(format!("noise floor {} must be >= 0", self.floor)));
        }
        Ok(())
    }

    /// `clean + sigma .* z` with `sigma_i = max(fraction |clean_i|, floor)`;
    /// a zero fraction returns the clean vector unchanged.
    pub fn apply(&self, clean: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        if self.sigma_fraction == 0.0 {
            return clean.clone();
        }
        clean.zip_map(z, |c, z| c + (self.sigma_fraction * c.abs()).max(self.floor) * z)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutageScenario {
    pub index: usize,
    pub kind: OutageKind,
    /// Tripped line ids, ascending.
    pub lines: Vec<usize>,
}

/// `K = round(coverage N)` buses drawn uniformly without replacement.
pub fn sample_placement(model: &NetworkModel, coverage: f64, seed: u64) -> Result<PmuPlacement> {
    let k = pmu_count(model.n_buses(), coverage)?;
    placement_of_size(model.n_buses(), k, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn pmu_count(n_buses: usize, coverage: f64) -> Result<usize> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::Config(format!("coverage {coverage} outside (0, 1]")));
    }
    let k = (coverage * n_buses as f64).round() as usize;
    if k == 0 {
        return Err(Error::Config(format!("coverage {coverage} gives no PMUs on {n_buses} buses")));
    }
    Ok(k)
}

pub fn placement_of_size<R: Rng>(n_buses: usize, k: usize, rng: &mut R) -> Result<PmuPlacement> {
    if k == 0 || k > n_buses {
        return Err(Error::Config(format!("cannot place {k} PMUs on {n_buses} buses")));
    }
    PmuPlacement::new(sample(rng, n_buses, k).into_iter().map(|b| b + 1).collect(), n_buses)
}

/// Lines `1..=36` whose removal keeps the network in one island.
pub fn single_line_scenarios(model: &NetworkModel) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    for line in 1..=SINGLE_LINE_LIMIT.min(model.n_lines()) {
        if model.remove_lines(&[line])?.is_connected() {
            out.push(vec![line]);
        }
    }
    Ok(out)
}

/// `count` distinct non-islanding pairs drawn from all lines.
pub fn double_line_scenarios(model: &NetworkModel, count: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let l = model.n_lines();
    let cap = PAIR_ATTEMPTS_PER_PAIR * count.max(1);
    let mut rng = stream(seed, &[TAG_PAIRS]);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        if attempts == cap || l < 2 {
            return Err(Error::ScenarioSampling {
                attempts,
                found: out.len(),
                wanted: count,
            });
        }
        attempts += 1;
        let pick = sample(&mut rng, l, 2);
        let (a, b) = (pick.index(0) + 1, pick.index(1) + 1);
        let pair = vec![a.min(b), a.max(b)];
        if seen.insert(pair.clone()) && model.remove_lines(&pair)?.is_connected() {
            out.push(pair);
        }
    }
    Ok(out)
}

pub fn generate_scenarios(model: &NetworkModel, kind: OutageKind, count: usize, seed: u64) -> Result<Vec<OutageScenario>> {
    if !model.is_connected() {
        return Err(Error::Config("the base network is not connected".into()));
    }
    let sets = match kind {
        OutageKind::Single => single_line_scenarios(model)?,
        OutageKind::Double => double_line_scenarios(model, count, seed)?,
    };
    Ok(sets
        .into_iter()
        .enumerate()
        .map(|(index, lines)| OutageScenario { index, kind, lines })
        .collect())
}

/// Clean post-minus-pre angles at every bus with loads scaled by
/// `load_factors`, or `None` when either power flow fails.
pub fn simulate_measurement(
    model: &NetworkModel,
    lines: &[usize],
    load_factors: &[f64],
    options: &PowerFlowOptions,
) -> Result<Option<DVector<f64>>> {
    let loaded = model.scale_loads(load_factors)?;
    let outaged = loaded.remove_lines(lines)?;
    let solve = |m: &NetworkModel| -> Option<SteadyState> {
        match solve_power_flow(m, options) {
            Ok(s) if s.converged => Some(s),
            _ => None,
        }
    };
    let (Some(pre), Some(post)) = (solve(&loaded), solve(&outaged)) else {
        return Ok(None);
    };
    Ok(Some(DVector::from_iterator(
        model.n_buses(),
        post.theta.iter().zip(&pre.theta).map(|(b, a)| b - a),
    )))
}

/// Ranks lines by `|corr(F_l, dtheta)|` and keeps the top `k`, ties to the
/// lower line id. Constant columns score zero.
pub fn correlation_identify(map: &SignatureMap, dtheta: &DVector<f64>, k: usize) -> Result<IdentificationResult> {
    if dtheta.len() != map.n_pmus() {
        return Err(Error::Dimension(format!(
            "map has {} PMU rows but the measurement has {} entries",
            map.n_pmus(),
            dtheta.len()
        )));
    }
    let rule = SelectionRule::TopK { k };
    rule.validate()?;
    let y = dtheta.map(|v| v - dtheta.mean());
    let yn = y.norm();
    let mut ranked: Vec<(usize, f64)> = (0..map.n_lines())
        .map(|j| {
            let col = map.f.column(j);
            let c = col.map(|v| v - col.mean());
            let cn = c.norm();
            let r = if cn == 0.0 || yn == 0.0 { 0.0 } else { c.dot(&y) / (cn * yn) };
            (map.line_ids[j], r)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(IdentificationResult {
        selected_lines: ranked.iter().map(|r| r.0).collect(),
        coefficients: ranked.iter().map(|r| r.1).collect(),
        path: None,
        rule,
    })
}

/// Signature maps for one placement, prepared once and shared by all scenarios.
pub struct MethodMaps {
    pub ac: SignatureMap,
    pub dc: SignatureMap,
    ac_design: StandardizedDesign,
    dc_design: StandardizedDesign,
}

impl MethodMaps {
    pub fn new(ac: SignatureMap, dc: SignatureMap) -> Result<Self> {
        Ok(MethodMaps {
            ac_design: standardize(&ac)?,
            dc_design: standardize(&dc)?,
            ac,
            dc,
        })
    }
}

/// Runs one method on a measurement.
pub fn run_method(
    method: Method,
    maps: &MethodMaps,
    dtheta: &DVector<f64>,
    outage_size: usize,
    rule: SelectionRule,
    max_steps: Option<usize>,
) -> Result<IdentificationResult> {
    match method {
        Method::Corr => correlation_identify(&maps.ac, dtheta, outage_size),
        Method::Lasso => select_outages(&lars_path(&maps.ac_design, dtheta, max_steps)?, rule),
        Method::Dc => select_outages(&lars_path(&maps.dc_design, dtheta, max_steps)?, rule),
    }
}

fn hits(identified: &[usize], truth: &[usize]) -> usize {
    identified.iter().filter(|l| truth.contains(l)).count()
}

/// Fraction of scenarios whose identified set shares exactly `a` lines with
/// the true set.
pub fn accuracy(results: &[(Vec<usize>, Vec<usize>)], a: usize) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no scenarios to score".into()));
    }
    let n = results.iter().filter(|(id, truth)| hits(id, truth) == a).count();
    Ok(n as f64 / results.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub coverages: Vec<f64>,
    /// Overrides `round(coverage N)` for every coverage.
    pub pmu_count: Option<usize>,
    pub runs: usize,
    pub kinds: Vec<OutageKind>,
    pub double_count: usize,
    pub rho_star: f64,
    pub rule: SelectionRule,
    pub max_steps: Option<usize>,
    pub noise: NoiseModel,
    /// Loads are scaled by factors drawn from `[1 - s, 1 + s]`.
    pub load_spread: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub power_flow: PowerFlowOptions,
    pub per_scenario: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            coverages: vec![0.25, 0.5],
            pmu_count: None,
            runs: 200,
            kinds: vec![OutageKind::Single, OutageKind::Double],
            double_count: 100,
            rho_star: 0.95,
            rule: SelectionRule::default(),
            max_steps: None,
            noise: NoiseModel::default(),
            load_spread: 0.05,
            methods: Method::ALL.to_vec(),
            seed: 42,
            power_flow: PowerFlowOptions::default(),
            per_scenario: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.coverages.is_empty() {
            return Err(Error::Config("no coverage given".into()));
        }
        for &c in &self.coverages {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::Config(format!("coverage {c} outside (0, 1]")));
            }
        }
        if self.pmu_count == Some(0) {
            return Err(Error::Config("pmu count must be at least 1".into()));
        }
        if self.kinds.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("no outage kind or method selected".into()));
        }
        if self.kinds.contains(&OutageKind::Double) && self.double_count == 0 {
            return Err(Error::Config("double-line count must be at least 1".into()));
        }
        if !(self.rho_star > 0.0 && self.rho_star <= 1.0) {
            return Err(Error::Config(format!("rho* {} outside (0, 1]", self.rho_star)));
        }
        if !(self.load_spread >= 0.0 && self.load_spread < 1.0) {
            return Err(Error::Config(format!("load spread {} outside [0, 1)", self.load_spread)));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max steps must be at least 1".into()));
        }
        self.rule.validate()?;
        self.noise.validate()
    }
}

/// One simulated outage in one run: the clean angle change at every bus and
/// the standard-normal draws its noise is built from.
#[derive(Clone, Debug)]
pub struct ScenarioSample {
    pub clean: Option<DVector<f64>>,
    pub z: DVector<f64>,
}

/// Base-case maps, scenario lists and per-run simulations, shared by the
/// benchmark and the sweeps.
pub struct Workbench {
    pub model: NetworkModel,
    pub base: SteadyState,
    pub ac: AngleResponse,
    pub dc: AngleResponse,
    pub scenarios: Vec<OutageScenario>,
    /// `samples[run][scenario]`.
    pub samples: Vec<Vec<ScenarioSample>>,
    pub seed: u64,
}

impl Workbench {
    pub fn prepare(model: &NetworkModel, config: &BenchConfig) -> Result<Workbench> {
        config.validate()?;
        let base = solve_power_flow(model, &config.power_flow)?;
        if !base.converged {
            return Err(Error::NotConverged {
                iterations: base.iterations,
                residual: base.residual,
            });
        }
        let ac = ac_response(model, &base)?;
        let dc = dc_response(model)?;
        let mut scenarios = Vec::new();
        for &kind in &config.kinds {
            for s in generate_scenarios(model, kind, config.double_count, config.seed)? {
                scenarios.push(OutageScenario {
                    index: scenarios.len(),
                    ..s
                });
            }
        }
        let load_buses = model.load_buses();
        let n = model.n_buses();
        let samples: Vec<Vec<ScenarioSample>> = (0..config.runs)
            .into_par_iter()
            .map(|run| {
                scenarios
                    .iter()
                    .map(|sc| {
                        let mut rng = stream(config.seed, &[TAG_SCENARIO, run as u64, sc.index as u64]);
                        let mut factors = vec![1.0; n];
                        for &b in &load_buses {
                            factors[b] = rng.gen_range(1.0 - config.load_spread..=1.0 + config.load_spread);
                        }
                        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                        let clean = simulate_measurement(model, &sc.lines, &factors, &config.power_flow)?;
                        Ok(ScenarioSample { clean, z })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let infeasible = samples.iter().flatten().filter(|s| s.clean.is_none()).count();
        if infeasible > 0 {
            warn!("{infeasible} scenario simulations did not converge and are excluded");
        }
        info!(
            "prepared {} scenarios over {} runs ({} infeasible)",
            scenarios.len(),
            config.runs,
            infeasible
        );
        Ok(Workbench {
            model: model.clone(),
            base,
            ac,
            dc,
            scenarios,
            samples,
            seed: config.seed,
        })
    }

    pub fn runs(&self) -> usize {
        self.samples.len()
    }

    pub fn infeasible(&self) -> usize {
        self.samples.iter().flatten().filter(|s| s.clean.is_none()).count()
    }

    /// The placement of `k` PMUs used in `run`; identical for every command
    /// sharing the seed.
    pub fn placement(&self, run: usize, k: usize) -> Result<PmuPlacement> {
        placement_of_size(
            self.model.n_buses(),
            k,
            &mut stream(self.seed, &[TAG_PLACEMENT, run as u64, k as u64]),
        )
    }

    pub fn maps(&self, placement: &PmuPlacement) -> Result<MethodMaps> {
        MethodMaps::new(self.ac.select(placement)?, self.dc.select(placement)?)
    }

    /// Scores every scenario of one run under one placement.
    pub fn evaluate_run(&self, run: usize, k: usize, spec: &EvalSpec) -> Result<RunOutcome> {
        let placement = self.placement(run, k)?;
        let maps = self.maps(&placement)?;
        let rows: Vec<usize> = placement.buses().iter().map(|b| b - 1).collect();
        let catalogs: Vec<(f64, MdcCatalog, MdcCatalog)> = spec
            .rho_stars
            .iter()
            .map(|&rho| Ok((rho, build_mdc(&maps.ac, rho)?, build_mdc(&maps.dc, rho)?)))
            .collect::<Result<_>>()?;
        let mut records = Vec::new();
        for (sc, sample) in self.scenarios.iter().zip(&self.samples[run]) {
            let Some(clean) = &sample.clean else { continue };
            let dtheta = spec
                .noise
                .apply(&clean.select_rows(&rows), &sample.z.select_rows(&rows));
            for &method in &spec.methods {
                let result = run_method(method, &maps, &dtheta, sc.lines.len(), spec.rule, spec.max_steps)?;
                for (rho, ac_cat, dc_cat) in &catalogs {
                    let catalog = if method == Method::Dc { dc_cat } else { ac_cat };
                    let augmented = augment(&result.selected_lines, catalog)?;
                    records.push(ScenarioRecord {
                        run,
                        pmus: k,
                        scenario: sc.index,
                        kind: sc.kind,
                        truth: sc.lines.clone(),
                        method,
                        rho_star: *rho,
                        hits: hits(&result.selected_lines, &sc.lines),
                        hits_mdc: hits(&augmented, &sc.lines),
                        selected: result.selected_lines.clone(),
                        augmented,
                    });
                }
            }
        }
        Ok(RunOutcome {
            run,
            pmus: k,
            diagnosability: catalogs.iter().map(|(rho, c, _)| (*rho, c.diagnosability)).collect(),
            records,
        })
    }

    /// Evaluates every run in parallel; the output is in run order.
    pub fn evaluate(&self, k: usize, spec: &EvalSpec) -> Result<Vec<RunOutcome>> {
        (0..self.runs())
            .into_par_iter()
            .map(|run| self.evaluate_run(run, k, spec))
            .collect()
    }
}

/// What to evaluate on a prepared workbench.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSpec {
    pub methods: Vec<Method>,
    pub rule: SelectionRule,
    pub max_steps: Option<usize>,
    pub noise: NoiseModel,
    pub rho_stars: Vec<f64>,
}

impl EvalSpec {
    pub fn from_config(config: &BenchConfig) -> Self {
        EvalSpec {
            methods: config.methods.clone(),
            rule: config.rule,
            max_steps: config.max_steps,
            noise: config.noise,
            rho_stars: vec![config.rho_star],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub run: usize,
    pub pmus: usize,
    pub scenario: usize,
    pub kind: OutageKind,
    pub truth: Vec<usize>,
    pub method: Method,
    pub rho_star: f64,
    pub selected: Vec<usize>,
    pub augmented: Vec<usize>,
    /// `|selected ∩ truth|`.
    pub hits: usize,
    pub hits_mdc: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run: usize,
    pub pmus: usize,
    /// `(rho*, V(rho*))` of the AC map under this run's placement.
    pub diagnosability: Vec<(f64, f64)>,
    pub records: Vec<ScenarioRecord>,
}

impl RunOutcome {
    /// Exact-`a` accuracy over this run's scenarios of `kind`, `None` when
    /// none were feasible.
    pub fn accuracy(&self, kind: OutageKind, method: Method, rho_star: f64, augmented: bool, a: usize) -> Option<f64> {
        let (mut n, mut good) = (0usize, 0usize);
        for r in &self.records {
            if r.kind == kind && r.method == method && r.rho_star == rho_star {
                n += 1;
                if (if augmented { r.hits_mdc } else { r.hits }) == a {
                    good += 1;
                }
            }
        }
        (n > 0).then(|| good as f64 / n as f64)
    }
}

/// Box-plot statistics of a per-run distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Distribution {
    /// Linear-interpolation quartiles; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Distribution> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Distribution {
            median: quantile(&v, 0.5),
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
            mean,
            std: var.sqrt(),
            min: v[0],
            max: v[v.len() - 1],
            count: v.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub kind: OutageKind,
    pub coverage: f64,
    pub pmus: usize,
    pub method: Method,
    pub mdc: bool,
    /// Intersection size scored, per Eq. `A(L_o, L_true, a)`.
    pub a: usize,
    pub accuracy: Distribution,
}

fn accuracy_rows(
    outcomes: &[RunOutcome],
    kinds: &[OutageKind],
    methods: &[Method],
    rho_star: f64,
    coverage: f64,
    pmus: usize,
) -> Vec<AccuracyRow> {
    let mut rows = Vec::new();
    for &kind in kinds {
        for &method in methods {
            for mdc in [false, true] {
                for a in 1..=kind.size() {
                    let values: Vec<f64> = outcomes
                        .iter()
                        .filter_map(|o| o.accuracy(kind, method, rho_star, mdc, a))
                        .collect();
                    if let Some(accuracy) = Distribution::of(&values) {
                        rows.push(AccuracyRow {
                            kind,
                            coverage,
                            pmus,
                            method,
                            mdc,
                            a,
                            accuracy,
                        });
                    }
                }
            }
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub coverage: f64,
    pub pmus: usize,
    /// Distribution over runs of `V(rho*)` for the AC map.
    pub diagnosability: Distribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchConfig,
    pub scenarios: Vec<OutageScenario>,
    /// Scenario simulations excluded because a power flow failed.
    pub infeasible: usize,
    pub coverage: Vec<CoverageSummary>,
    pub accuracy: Vec<AccuracyRow>,
    pub per_scenario: Option<Vec<ScenarioRecord>>,
}

impl BenchmarkReport {
    pub fn find(&self, kind: OutageKind, coverage: f64, method: Method, mdc: bool, a: usize) -> Option<&AccuracyRow> {
        self.accuracy
            .iter()
            .find(|r| r.kind == kind && r.coverage == coverage && r.method == method && r.mdc == mdc && r.a == a)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Quartile table, one row per (kind, coverage, method, mdc, a).
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("kind,coverage,pmus,method,mdc,a,median,q1,q3,mean,std,min,max,runs\n");
        for r in &self.accuracy {
            let d = &r.accuracy;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                kind_name(r.kind),
                r.coverage,
                r.pmus,
                r.method.name(),
                r.mdc,
                r.a,
                fmt17(d.median),
                fmt17(d.q1),
                fmt17(d.q3),
                fmt17(d.mean),
                fmt17(d.std),
                fmt17(d.min),
                fmt17(d.max),
                d.count
            ));
        }
        out
    }

    pub fn per_scenario_csv(&self) -> Option<String> {
        let records = self.per_scenario.as_ref()?;
        let mut out = String::from("run,pmus,scenario,kind,truth,method,rho_star,selected,augmented,hits,hits_mdc\n");
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        for r in records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.run,
                r.pmus,
                r.scenario,
                kind_name(r.kind),
                join(&r.truth),
                r.method.name(),
                r.rho_star,
                join(&r.selected),
                join(&r.augmented),
                r.hits,
                r.hits_mdc
            ));
        }
        Some(out)
    }
}

fn kind_name(kind: OutageKind) -> &'static str {
    match kind {
        OutageKind::Single => "single",
        OutageKind::Double => "double",
    }
}

/// Round-trip-safe float formatting with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn pmus_for(model: &NetworkModel, config: &BenchConfig, coverage: f64) -> Result<usize> {
    match config.pmu_count {
        Some(k) if k <= model.n_buses() => Ok(k),
        Some(k) => Err(Error::Config(format!("{k} PMUs on a {}-bus network", model.n_buses()))),
        None => pmu_count(model.n_buses(), coverage),
    }
}

pub fn run_benchmark(model: &NetworkModel, config: &BenchConfig) -> Result<BenchmarkReport> {
    let bench = Workbench::prepare(model, config)?;
    report_from(&bench, config)
}

/// Scores a prepared workbench under `config` (its seed and scenario
/// settings must match the ones the workbench was prepared with).
pub fn report_from(bench: &Workbench, config: &BenchConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let spec = EvalSpec::from_config(config);
    let mut accuracy = Vec::new();
    let mut coverage = Vec::new();
    let mut per_scenario = config.per_scenario.then(Vec::new);
    for &cov in &config.coverages {
        let k = pmus_for(&bench.model, config, cov)?;
        let outcomes = bench.evaluate(k, &spec)?;
        accuracy.extend(accuracy_rows(&outcomes, &config.kinds, &config.methods, config.rho_star, cov, k));
        let v: Vec<f64> = outcomes.iter().map(|o| o.diagnosability[0].1).collect();
        coverage.push(CoverageSummary {
            coverage: cov,
            pmus: k,
            diagnosability: Distribution::of(&v).expect("at least one run"),
        });
        if let Some(all) = per_scenario.as_mut() {
            all.extend(outcomes.into_iter().flat_map(|o| o.records));
        }
    }
    Ok(BenchmarkReport {
        config: config.clone(),
        scenarios: bench.scenarios.clone(),
        infeasible: bench.infeasible(),
        coverage,
        accuracy,
        per_scenario,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepRow {
    pub sigma_fraction: f64,
    pub kind: OutageKind,
    pub mdc: bool,
    /// Exact-`a` accuracy with `a` the outage size ("all correct").
    pub accuracy: Distribution,
}

/// Lasso accuracy as the noise fraction varies, on shared simulations and
/// placements (first coverage of `config`).
pub fn noise_sweep(model: &NetworkModel, config: &BenchConfig, fractions: &[f64]) -> Result<Vec<NoiseSweepRow>> {
    let bench = Workbench::prepare(model, config)?;
    noise_sweep_on(&bench, config, fractions)
}

pub fn noise_sweep_on(bench: &Workbench, config: &BenchConfig, fractions: &[f64]) -> Result<Vec<NoiseSweepRow>> {
    let k = pmus_for(&bench.model, config, config.coverages[0])?;
    let mut rows = Vec::new();
    for &fraction in fractions {
        let spec = EvalSpec {
            methods: vec![Method::Lasso],
            noise: NoiseModel {
                sigma_fraction: fraction,
                ..config.noise
            },
            ..EvalSpec::from_config(config)
        };
        spec.noise.validate()?;
        let outcomes = bench.evaluate(k, &spec)?;
        for &kind in &config.kinds {
            for mdc in [false, true] {
                let v: Vec<f64> = outcomes
                    .iter()
                    .filter_map(|o| o.accuracy(kind, Method::Lasso, config.rho_star, mdc, kind.size()))
                    .collect();
                if let Some(accuracy) = Distribution::of(&v) {
                    rows.push(NoiseSweepRow {
                        sigma_fraction: fraction,
                        kind,
                        mdc,
                        accuracy,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoSweepRow {
    pub rho_star: f64,
    /// Distribution over runs of the singleton-cluster fraction.
    pub diagnosability: Distribution,
    /// Lasso+MDC exact-`a` accuracy per outage kind, `a` = outage size.
    pub accuracy: Vec<(OutageKind, Distribution)>,
}

/// Table-I style sweep over MDC thresholds (first coverage of `config`).
pub fn rho_sweep(model: &NetworkModel, config: &BenchConfig, thresholds: &[f64]) -> Result<Vec<RhoSweepRow>> {
    let bench = Workbench::prepare(model, config)?;
    rho_sweep_on(&bench, config, thresholds)
}

pub fn rho_sweep_on(bench: &Workbench, config: &BenchConfig, thresholds: &[f64]) -> Result<Vec<RhoSweepRow>> {
    if thresholds.is_empty() {
        return Err(Error::Config("no thresholds given".into()));
    }
    let k = pmus_for(&bench.model, config, config.coverages[0])?;
    let spec = EvalSpec {
        methods: vec![Method::Lasso],
        rho_stars: thresholds.to_vec(),
        ..EvalSpec::from_config(config)
    };
    let outcomes = bench.evaluate(k, &spec)?;
    thresholds
        .iter()
        .enumerate()
        .map(|(i, &rho)| {
            let v: Vec<f64> = outcomes.iter().map(|o| o.diagnosability[i].1).collect();
            let accuracy = config
                .kinds
                .iter()
                .filter_map(|&kind| {
                    let acc: Vec<f64> = outcomes
                        .iter()
                        .filter_map(|o| o.accuracy(kind, Method::Lasso, rho, true, kind.size()))
                        .collect();
                    Distribution::of(&acc).map(|d| (kind, d))
                })
                .collect();
            Ok(RhoSweepRow {
                rho_star: rho,
                diagnosability: Distribution::of(&v).expect("at least one run"),
                accuracy,
            })
        })
        .collect()
}

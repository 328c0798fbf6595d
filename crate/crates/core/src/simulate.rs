//! Simulation scenarios under the null of no treatment effect and replicate
//! studies of confounder selection and randomization tests.
//!
//! Covariates are split into confounders `S1`, outcome-only predictors `S2`,
//! instruments or colliders `S3` and noise `S4`. Every replicate dataset is
//! analysed by each requested method so the methods are compared on
//! identical data.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, OutcomeKind};
use crate::effect::dr_effect;
use crate::error::{Error, Result};
use crate::glm::expit;
use crate::matching::{DistanceKind, FullMatch};
use crate::pipeline::{match_and_test, select_confounders, PipelineConfig};
use crate::randtest::{randomization_pvalue, DEFAULT_DRAWS};
use crate::rng::{replicate_rng, replicate_seed, Purpose};

/// Redraws allowed for a dataset whose treatment vector has a single class.
const MAX_REDRAWS: usize = 1000;
/// Studies abort once failures reach this fraction of replicates.
const MAX_FAILURE_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub p: usize,
    /// 0-based covariate indices.
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
    pub s3: Vec<usize>,
    pub s4: Vec<usize>,
    pub gamma_confounder: f64,
    pub gamma_instrument: f64,
    pub beta_signal: f64,
    pub outcome_kind: OutcomeKind,
    pub outcome_sd: f64,
    pub collider_mode: bool,
    pub nu: f64,
    pub beta0: f64,
    /// Variance of each latent factor in collider mode.
    pub latent_variance: f64,
    /// Residual variance of collider covariates given the latent factors.
    pub collider_residual_variance: f64,
}

impl Scenario {
    pub fn new(collider_mode: bool, p: usize, s3_size: usize, outcome_kind: OutcomeKind) -> Result<Scenario> {
        if p < 4 + s3_size {
            return Err(Error::InvalidInput(format!("p = {p} leaves no room for {s3_size} covariates in S3")));
        }
        let name = format!(
            "{}_p{p}_{}{s3_size}_{}",
            if collider_mode { "collider" } else { "base" },
            if collider_mode { "co" } else { "iv" },
            match outcome_kind {
                OutcomeKind::Continuous => "cont",
                OutcomeKind::Binary => "bin",
            }
        );
        Ok(Scenario {
            name,
            n: 80,
            p,
            s1: vec![0, 1],
            s2: vec![2, 3],
            s3: (4..4 + s3_size).collect(),
            s4: (4 + s3_size..p).collect(),
            gamma_confounder: 1.0,
            gamma_instrument: 1.6,
            beta_signal: 0.8,
            outcome_kind,
            outcome_sd: 4.0,
            collider_mode,
            nu: 2.0,
            beta0: 0.0,
            latent_variance: 1.0 / 16.0,
            collider_residual_variance: 0.5,
        })
    }

    /// Confounders and outcome-only predictors.
    pub fn target_subset(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.s1.iter().chain(&self.s2).copied().collect();
        s.sort_unstable();
        s
    }
}

/// All sixteen settings: {instrument, collider} x {p = 25, 60} x {|S3| = 2, 4} x {continuous, binary}.
pub fn registry() -> Vec<Scenario> {
    let mut out = Vec::with_capacity(16);
    for collider in [false, true] {
        for p in [25, 60] {
            for s3 in [2, 4] {
                for kind in [OutcomeKind::Continuous, OutcomeKind::Binary] {
                    out.push(Scenario::new(collider, p, s3, kind).expect("registry parameters are valid"));
                }
            }
        }
    }
    out
}

pub fn scenario(name: &str) -> Result<Scenario> {
    let all = registry();
    all.iter().find(|s| s.name == name).cloned().ok_or_else(|| Error::UnknownScenario {
        name: name.to_string(),
        available: all.into_iter().map(|s| s.name).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub data: Dataset,
    /// Datasets discarded for having a single treatment class.
    pub redraws: usize,
}

/// Draws one dataset; the treatment has no effect on the outcome.
pub fn generate(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Result<Generated> {
    for redraws in 0..=MAX_REDRAWS {
        let data = draw_once(scenario, rng)?;
        let treated = data.iter().filter(|&&(_, a, _)| a == 1).count();
        if treated == 0 || treated == scenario.n {
            log::debug!("{}: degenerate treatment vector, redrawing", scenario.name);
            continue;
        }
        let mut covariates = vec![Vec::with_capacity(scenario.n); scenario.p];
        let mut treatment = Vec::with_capacity(scenario.n);
        let mut outcome = Vec::with_capacity(scenario.n);
        for (l, a, y) in data {
            for (col, v) in covariates.iter_mut().zip(l) {
                col.push(v);
            }
            treatment.push(a);
            outcome.push(y);
        }
        let labels = (1..=scenario.p).map(|s| format!("L{s}")).collect();
        let data = Dataset::new(covariates, labels, treatment, outcome, scenario.outcome_kind)?;
        return Ok(Generated { data, redraws });
    }
    Err(Error::InvalidInput(format!("{}: {MAX_REDRAWS} degenerate draws in a row", scenario.name)))
}

type Unit = (Vec<f64>, u8, f64);

fn draw_once(sc: &Scenario, rng: &mut ChaCha8Rng) -> Result<Vec<Unit>> {
    let latent = Normal::new(0.0, sc.latent_variance.sqrt()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let residual =
        Normal::new(0.0, sc.collider_residual_variance.sqrt()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut gamma = vec![0.0; sc.p];
    let mut beta = vec![0.0; sc.p];
    for &s in &sc.s1 {
        gamma[s] = sc.gamma_confounder;
        beta[s] = sc.beta_signal;
    }
    for &s in &sc.s2 {
        beta[s] = sc.beta_signal;
    }
    if !sc.collider_mode {
        for &s in &sc.s3 {
            gamma[s] = sc.gamma_instrument;
        }
    }
    let mut is_collider = vec![false; sc.p];
    if sc.collider_mode {
        for &s in &sc.s3 {
            is_collider[s] = true;
        }
    }

    let mut units = Vec::with_capacity(sc.n);
    for _ in 0..sc.n {
        let (u1, u2) = if sc.collider_mode { (latent.sample(rng), latent.sample(rng)) } else { (0.0, 0.0) };
        let l: Vec<f64> =
            (0..sc.p)
                .map(|s| {
                    if is_collider[s] {
                        2.0 * u1 + 2.0 * u2 + residual.sample(rng)
                    } else {
                        StandardNormal.sample(rng)
                    }
                })
                .collect();
        let mut eta_a: f64 = l.iter().zip(&gamma).map(|(x, g)| x * g).sum();
        let mut y_star: f64 = l.iter().zip(&beta).map(|(x, b)| x * b).sum();
        if sc.collider_mode {
            eta_a += sc.nu * u1;
            y_star += sc.beta0 + sc.nu * u2;
        }
        let a = u8::from(rng.random::<f64>() < expit(eta_a));
        let y = match sc.outcome_kind {
            OutcomeKind::Continuous => {
                let z: f64 = StandardNormal.sample(rng);
                y_star + sc.outcome_sd * z
            }
            OutcomeKind::Binary => f64::from(u8::from(rng.random::<f64>() < expit(y_star))),
        };
        units.push((l, a, y));
    }
    Ok(units)
}

/// Dataset for one replicate of a study.
pub fn generate_replicate(scenario: &Scenario, master_seed: u64, replicate: u64) -> Result<Generated> {
    generate(scenario, &mut replicate_rng(master_seed, replicate, Purpose::Data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    StabilityPipeline,
    TargetPs,
    EmptyPs,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::StabilityPipeline, Method::TargetPs, Method::EmptyPs];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::StabilityPipeline => "stability_pipeline",
            Method::TargetPs => "target_ps",
            Method::EmptyPs => "empty_ps",
        }
    }

    fn purpose(self) -> Purpose {
        match self {
            Method::StabilityPipeline => Purpose::SelectedTest,
            Method::TargetPs => Purpose::TargetTest,
            Method::EmptyPs => Purpose::EmptyTest,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::InvalidInput(format!("unknown method `{s}` (stability_pipeline, target_ps, empty_ps)"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_replicates: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub pipeline: PipelineConfig,
}

impl StudyConfig {
    pub fn new(n_replicates: usize, master_seed: u64) -> Self {
        StudyConfig {
            n_replicates,
            master_seed,
            methods: Method::ALL.to_vec(),
            alpha: 0.05,
            pipeline: PipelineConfig { draws: DEFAULT_DRAWS, ..PipelineConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub method: Method,
    pub selected_subset: Vec<usize>,
    pub both_confounders: bool,
    pub at_least_one: bool,
    pub p_value: f64,
    pub effect_estimate: f64,
    pub se_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub replicates: usize,
    pub failed: usize,
    pub prob_both_confounders: f64,
    pub prob_at_least_one: f64,
    pub mean_selected: f64,
    pub rejection_rate: f64,
    pub mean_estimate: f64,
    /// Empirical standard deviation of the estimates.
    pub ese: f64,
    pub mean_se: f64,
    /// Standard deviation of the standard-error estimates.
    pub ase: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyOutput {
    pub scenario: Scenario,
    pub config: StudyConfig,
    pub replicates: Vec<ReplicateResult>,
    pub summaries: Vec<MethodSummary>,
    pub redraws: usize,
}

impl StudyOutput {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn p_values(&self, method: Method) -> Vec<f64> {
        self.replicates.iter().filter(|r| r.method == method).map(|r| r.p_value).collect()
    }
}

fn analyse(
    scenario: &Scenario,
    data: &Dataset,
    method: Method,
    config: &StudyConfig,
    replicate: usize,
) -> Result<ReplicateResult> {
    let seed = replicate_seed(config.master_seed, replicate as u64, method.purpose());
    let pc = &config.pipeline;
    let (subset, p_value, estimate) = match method {
        Method::StabilityPipeline => {
            let sel = select_confounders(data, pc)?;
            let subset = sel.selected_subset();
            let (_, test) = match_and_test(data, &subset, &pc.matching, pc.draws, seed)?;
            let e = sel.selected_estimate();
            (subset, test.p_value, (e.psi_hat, e.std_error()))
        }
        Method::TargetPs => {
            let subset = scenario.target_subset();
            let (_, test) = match_and_test(data, &subset, &pc.matching, pc.draws, seed)?;
            let e = dr_effect(data, &subset).map_err(|e| e.in_stage("effect"))?;
            (subset, test.p_value, (e.psi_hat, e.std_error()))
        }
        Method::EmptyPs => {
            let single = FullMatch::from_labels(&vec![0; data.n()], DistanceKind::AbsLogitPs);
            let test = randomization_pvalue(&single, data.treatment(), data.outcome(), pc.draws, seed)?;
            let e = dr_effect(data, &[]).map_err(|e| e.in_stage("effect"))?;
            (Vec::new(), test.p_value, (e.psi_hat, e.std_error()))
        }
    };
    let hits = scenario.s1.iter().filter(|s| subset.contains(s)).count();
    Ok(ReplicateResult {
        replicate,
        method,
        both_confounders: hits == scenario.s1.len(),
        at_least_one: hits > 0,
        selected_subset: subset,
        p_value,
        effect_estimate: estimate.0,
        se_estimate: estimate.1,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

fn summarise(method: Method, rows: &[&ReplicateResult], failed: usize, alpha: f64) -> MethodSummary {
    let frac = |f: &dyn Fn(&ReplicateResult) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / rows.len() as f64;
    let estimates: Vec<f64> = rows.iter().map(|r| r.effect_estimate).collect();
    let ses: Vec<f64> = rows.iter().map(|r| r.se_estimate).collect();
    let sizes: Vec<f64> = rows.iter().map(|r| r.selected_subset.len() as f64).collect();
    MethodSummary {
        method,
        replicates: rows.len(),
        failed,
        prob_both_confounders: frac(&|r| r.both_confounders),
        prob_at_least_one: frac(&|r| r.at_least_one),
        mean_selected: mean(&sizes),
        rejection_rate: frac(&|r| r.p_value <= alpha),
        mean_estimate: mean(&estimates),
        ese: sd(&estimates),
        mean_se: mean(&ses),
        ase: sd(&ses),
    }
}

/// Runs every requested method on `n_replicates` datasets drawn from `scenario`.
pub fn run_study(scenario: &Scenario, config: &StudyConfig) -> Result<StudyOutput> {
    if config.n_replicates < 1 {
        return Err(Error::InvalidInput("at least one replicate is required".into()));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidInput("no methods requested".into()));
    }
    config.pipeline.validate()?;

    let per_replicate: Vec<(usize, Vec<(Method, Result<ReplicateResult>)>)> = (0..config.n_replicates)
        .into_par_iter()
        .map(|r| match generate_replicate(scenario, config.master_seed, r as u64) {
            Ok(g) => {
                let results = config.methods.iter().map(|&m| (m, analyse(scenario, &g.data, m, config, r))).collect();
                (g.redraws, results)
            }
            Err(e) => {
                let msg = e.to_string();
                let results = config.methods.iter().map(|&m| (m, Err(Error::InvalidInput(msg.clone())))).collect();
                (0, results)
            }
        })
        .collect();

    let mut replicates = Vec::new();
    let mut failed = vec![0usize; config.methods.len()];
    let mut redraws = 0;
    for (r, (rd, results)) in per_replicate.into_iter().enumerate() {
        redraws += rd;
        for (mi, (method, res)) in results.into_iter().enumerate() {
            match res {
                Ok(row) => replicates.push(row),
                Err(e) => {
                    log::warn!("{}: replicate {r}, {}: {e}", scenario.name, method.as_str());
                    failed[mi] += 1;
                }
            }
        }
    }
    if redraws > 0 {
        log::info!("{}: {redraws} degenerate dataset(s) redrawn", scenario.name);
    }
    let worst = failed.iter().copied().max().unwrap_or(0);
    if worst > 0 && worst as f64 >= MAX_FAILURE_FRACTION * config.n_replicates as f64 {
        return Err(Error::StudyAborted { failed: worst, total: config.n_replicates });
    }

    let summaries = config
        .methods
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let rows: Vec<&ReplicateResult> = replicates.iter().filter(|r| r.method == m).collect();
            summarise(m, &rows, failed[mi], config.alpha)
        })
        .collect();

    Ok(StudyOutput { scenario: scenario.clone(), config: config.clone(), replicates, summaries, redraws })
}

const STUDY_COLUMNS: [&str; 17] = [
    "scenario",
    "s3_kind",
    "p",
    "s3_size",
    "outcome",
    "replicates",
    "prob_both_st",
    "prob_any_st",
    "mean_selected_st",
    "type1_no",
    "type1_st",
    "type1_ta",
    "mean_estimate_st",
    "ese_st",
    "mean_se_st",
    "ase_st",
    "failed",
];

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One aggregate row laid out like the published results table.
pub fn write_study_csv<W: std::io::Write>(out: &StudyOutput, w: W) -> Result<()> {
    let sc = &out.scenario;
    let st = out.summary(Method::StabilityPipeline);
    let rate = |m| num(out.summary(m).map(|s| s.rejection_rate));
    let failed: usize = out.summaries.iter().map(|s| s.failed).sum();
    let mut w = csv::Writer::from_writer(w);
    w.write_record(STUDY_COLUMNS)?;
    w.write_record([
        sc.name.clone(),
        if sc.collider_mode { "collider" } else { "instrument" }.to_string(),
        sc.p.to_string(),
        sc.s3.len().to_string(),
        match sc.outcome_kind {
            OutcomeKind::Continuous => "continuous",
            OutcomeKind::Binary => "binary",
        }
        .to_string(),
        out.config.n_replicates.to_string(),
        num(st.map(|s| s.prob_both_confounders)),
        num(st.map(|s| s.prob_at_least_one)),
        num(st.map(|s| s.mean_selected)),
        rate(Method::EmptyPs),
        rate(Method::StabilityPipeline),
        rate(Method::TargetPs),
        num(st.map(|s| s.mean_estimate)),
        num(st.map(|s| s.ese)),
        num(st.map(|s| s.mean_se)),
        num(st.map(|s| s.ase)),
        failed.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn write_replicates_csv<W: std::io::Write>(out: &StudyOutput, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "replicate",
        "method",
        "selected_subset",
        "subset_size",
        "both_confounders",
        "at_least_one",
        "p_value",
        "effect_estimate",
        "se_estimate",
    ])?;
    for r in &out.replicates {
        let subset = r.selected_subset.iter().fold(String::new(), |mut acc, k| {
            if !acc.is_empty() {
                acc.push(';');
            }
            let _ = write!(acc, "L{}", k + 1);
            acc
        });
        w.write_record([
            r.replicate.to_string(),
            r.method.as_str().to_string(),
            subset,
            r.selected_subset.len().to_string(),
            r.both_confounders.to_string(),
            r.at_least_one.to_string(),
            r.p_value.to_string(),
            r.effect_estimate.to_string(),
            r.se_estimate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical CDF of the p-values of each method on a 0.01 grid.
pub fn write_pvalue_ecdf_csv<W: std::io::Write>(out: &StudyOutput, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["alpha".to_string()];
    header.extend(out.config.methods.iter().map(|m| m.as_str().to_string()));
    w.write_record(&header)?;
    let pvs: Vec<Vec<f64>> = out.config.methods.iter().map(|&m| out.p_values(m)).collect();
    for step in 0..=100 {
        let alpha = step as f64 / 100.0;
        let mut row = vec![alpha.to_string()];
        for p in &pvs {
            let below = p.iter().filter(|&&v| v <= alpha).count();
            row.push((below as f64 / p.len() as f64).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    scenario: &'a Scenario,
    n_replicates: usize,
    master_seed: u64,
    seed_scheme: &'static str,
    methods: &'a [Method],
    alpha: f64,
    pipeline: &'a PipelineConfig,
    redraws: usize,
    summaries: &'a [MethodSummary],
    software: &'static str,
    version: &'static str,
}

/// Writes `study.csv`, `replicates.csv`, `pvalue_ecdf.csv` and `manifest.json` into `dir`.
pub fn write_study_outputs(out: &StudyOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_study_csv(out, std::fs::File::create(dir.join("study.csv"))?)?;
    write_replicates_csv(out, std::fs::File::create(dir.join("replicates.csv"))?)?;
    write_pvalue_ecdf_csv(out, std::fs::File::create(dir.join("pvalue_ecdf.csv"))?)?;
    let manifest = Manifest {
        scenario: &out.scenario,
        n_replicates: out.config.n_replicates,
        master_seed: out.config.master_seed,
        seed_scheme:
            "ChaCha8 keyed by the master seed; replicate r uses stream 4r for data and 4r+1..4r+3 for the tests",
        methods: &out.config.methods,
        alpha: out.config.alpha,
        pipeline: &out.config.pipeline,
        redraws: out.redraws,
        summaries: &out.summaries,
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
    };
    let f = std::fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(f, &manifest)?;
    Ok(())
}

//! Scenario, tracking and evaluation wired together.

use rayon::prelude::*;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::metrics::{
    density_gap, evaluate, DensitySample, EvalOptions, GapRow, MetricsError, MetricsReport,
};
use crate::policy::PolicyKind;
use crate::record::{RunManifest, RunRecord};
use crate::scenario::{
    archetype_with_capacity, generate, perceive_all, GroundTruth, ScenarioError,
};
use crate::tracker::{run, TrackerConfig, TrackerError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Ground truth and tracked run of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub ground_truth: GroundTruth,
    pub run: RunRecord,
}

/// Generates the scene, perceives it and tracks it. The manifest's
/// timestamp is the only field that depends on when this is called.
pub fn simulate(config: &ExperimentConfig) -> Result<Simulation, ExperimentError> {
    let manifest = RunManifest::now(
        config.digest(),
        config.scenario.seed,
        config.tracker.policy.kind,
    );
    simulate_with_manifest(config, manifest)
}

pub fn simulate_with_manifest(
    config: &ExperimentConfig,
    manifest: RunManifest,
) -> Result<Simulation, ExperimentError> {
    let ground_truth = generate(&config.scenario)?;
    let frames = perceive_all(&ground_truth, &config.scenario)?;
    let run = run(&frames, config.tracker, manifest)?;
    Ok(Simulation { ground_truth, run })
}

/// Configuration for an archetype at `seed` under `policy`, other tracker
/// settings taken from `base`.
pub fn archetype_config(
    name: &str,
    seed: u64,
    policy: PolicyKind,
    base: &TrackerConfig,
) -> Result<ExperimentConfig, ExperimentError> {
    let scenario = archetype_with_capacity(name, seed, base.bank_capacity)?;
    let mut tracker = *base;
    tracker.policy.kind = policy;
    Ok(ExperimentConfig { scenario, tracker })
}

/// One row of a policy comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub archetype: String,
    pub policy: PolicyKind,
    pub seed: u64,
    pub report: MetricsReport,
}

fn evaluate_one(
    name: &str,
    seed: u64,
    policy: PolicyKind,
    base: &TrackerConfig,
    options: &EvalOptions,
) -> Result<CompareRow, ExperimentError> {
    let config = archetype_config(name, seed, policy, base)?;
    let sim = simulate_with_manifest(&config, RunManifest::default())?;
    let report = evaluate(&sim.run, &sim.ground_truth, options)?;
    Ok(CompareRow {
        archetype: name.to_string(),
        policy,
        seed,
        report,
    })
}

/// Both policies on seeds `0..seeds`, in parallel. Rows come back ordered
/// by policy (coupled first), then seed.
pub fn compare(
    name: &str,
    seeds: u64,
    base: &TrackerConfig,
    options: &EvalOptions,
) -> Result<Vec<CompareRow>, ExperimentError> {
    // Fail fast on a bad name before spawning work.
    archetype_with_capacity(name, 0, base.bank_capacity)?;
    let jobs: Vec<(PolicyKind, u64)> = PolicyKind::ALL
        .iter()
        .flat_map(|&p| (0..seeds).map(move |s| (p, s)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(policy, seed)| evaluate_one(name, seed, policy, base, options))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by_key(|r| (r.policy, r.seed));
    Ok(rows)
}

/// Means of each policy's reports plus Decoupled minus Coupled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareSummary {
    pub coupled: MeanReport,
    pub decoupled: MeanReport,
    pub delta: MeanReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanReport {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub j: f64,
    pub f: f64,
    pub idsw: f64,
}

impl MeanReport {
    fn of<'a>(reports: impl Iterator<Item = &'a MetricsReport>) -> Self {
        let mut m = MeanReport::default();
        let mut n = 0usize;
        for r in reports {
            m.hota += r.hota;
            m.deta += r.deta;
            m.assa += r.assa;
            m.j += r.j;
            m.f += r.f;
            m.idsw += r.idsw as f64;
            n += 1;
        }
        if n > 0 {
            let k = n as f64;
            m = MeanReport {
                hota: m.hota / k,
                deta: m.deta / k,
                assa: m.assa / k,
                j: m.j / k,
                f: m.f / k,
                idsw: m.idsw / k,
            };
        }
        m
    }

    fn minus(&self, o: &MeanReport) -> MeanReport {
        MeanReport {
            hota: self.hota - o.hota,
            deta: self.deta - o.deta,
            assa: self.assa - o.assa,
            j: self.j - o.j,
            f: self.f - o.f,
            idsw: self.idsw - o.idsw,
        }
    }
}

pub fn summarize(rows: &[CompareRow]) -> CompareSummary {
    let of = |p| MeanReport::of(rows.iter().filter(|r| r.policy == p).map(|r| &r.report));
    let coupled = of(PolicyKind::Coupled);
    let decoupled = of(PolicyKind::Decoupled);
    CompareSummary {
        coupled,
        decoupled,
        delta: decoupled.minus(&coupled),
    }
}

/// Density archetype at every `n` for both policies and seeds `0..seeds`.
pub fn sweep(
    densities: &[usize],
    seeds: u64,
    base: &TrackerConfig,
    options: &EvalOptions,
) -> Result<(Vec<DensitySample>, Vec<GapRow>), ExperimentError> {
    let mut samples = Vec::new();
    for &n in densities {
        let name = format!("density({n})");
        for row in compare(&name, seeds, base, options)? {
            samples.push(DensitySample {
                n,
                policy: row.policy,
                seed: row.seed,
                report: row.report,
            });
        }
    }
    let gaps = density_gap(&samples)?;
    Ok((samples, gaps))
}

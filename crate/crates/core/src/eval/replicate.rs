//! Replication study: repeated samples from a simulated population, each
//! scored under every rule family and threshold.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{score_against_truth, RuleScore};
use crate::config::{ExperimentConfig, Family};
use crate::decision::optimal_rule;
use crate::error::{param, Error, Result};
use crate::flex::{fit_flex, predict_dataset};
use crate::loss::AdditiveLoss;
use crate::math::{mean, sample_sd};
use crate::rng::replicate_seed;
use crate::sim::{draw_sample, generate_population, ScenarioId, ScenarioSpec, SimPopulation};
use crate::simple::{
    direct_rule, fit_direct_logistic, fit_direct_tree, fit_soft_logistic, fit_soft_tree,
    DirectModel, SgdConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// True optimal rule from the simulated effects.
    Oracle,
    /// Plug-in rule from the flexible model.
    Optimal,
    DistilledTree,
    DirectTree,
    DistilledLogistic,
    DirectLogistic,
}

impl RuleKind {
    pub const ALL: [RuleKind; 6] = [
        RuleKind::Oracle,
        RuleKind::Optimal,
        RuleKind::DistilledTree,
        RuleKind::DirectTree,
        RuleKind::DistilledLogistic,
        RuleKind::DirectLogistic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RuleKind::Oracle => "oracle",
            RuleKind::Optimal => "optimal",
            RuleKind::DistilledTree => "distilled_tree",
            RuleKind::DirectTree => "direct_tree",
            RuleKind::DistilledLogistic => "distilled_logistic",
            RuleKind::DirectLogistic => "direct_logistic",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub scenario: ScenarioId,
    pub replicate: usize,
    pub threshold: u32,
    pub rule: RuleKind,
    pub score: RuleScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub scenario: ScenarioId,
    pub replicate: usize,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: ScenarioId,
    pub threshold: u32,
    pub rule: RuleKind,
    pub metric: &'static str,
    pub mean: Option<f64>,
    /// Standard error over defined replicates; absent with fewer than two.
    pub se: Option<f64>,
    pub n_defined: usize,
    pub n_undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub rows: Vec<ReplicateRow>,
    pub failures: Vec<ReplicateFailure>,
    pub replications: usize,
}

impl ReplicationReport {
    /// Mean and standard error of every metric per scenario, threshold and rule.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut keys: Vec<(ScenarioId, u32, RuleKind)> = self
            .rows
            .iter()
            .map(|r| (r.scenario, r.threshold, r.rule))
            .collect();
        keys.sort();
        keys.dedup();
        let mut out = Vec::new();
        for (scenario, threshold, rule) in keys {
            let rows: Vec<&ReplicateRow> = self
                .rows
                .iter()
                .filter(|r| r.scenario == scenario && r.threshold == threshold && r.rule == rule)
                .collect();
            for metric in RuleScore::METRICS {
                let vals: Vec<f64> = rows.iter().filter_map(|r| r.score.metric(metric)).collect();
                let k = vals.len();
                out.push(SummaryRow {
                    scenario,
                    threshold,
                    rule,
                    metric,
                    mean: (k > 0).then(|| mean(&vals)),
                    se: (k > 1).then(|| sample_sd(&vals) / (k as f64).sqrt()),
                    n_defined: k,
                    n_undefined: rows.len() - k,
                });
            }
        }
        out
    }

    /// Rows for one replicate, scenario, threshold and rule.
    pub fn score(
        &self,
        scenario: ScenarioId,
        replicate: usize,
        threshold: u32,
        rule: RuleKind,
    ) -> Option<&RuleScore> {
        self.rows
            .iter()
            .find(|r| {
                r.scenario == scenario
                    && r.replicate == replicate
                    && r.threshold == threshold
                    && r.rule == rule
            })
            .map(|r| &r.score)
    }
}

fn stage<T>(
    scenario: ScenarioId,
    replicate: usize,
    name: &str,
    r: Result<T>,
) -> std::result::Result<T, ReplicateFailure> {
    r.map_err(|e| ReplicateFailure {
        scenario,
        replicate,
        stage: name.into(),
        message: e.to_string(),
    })
}

/// Runs one replicate on `population`: sample, fit, derive, distill, score.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    scenario: ScenarioId,
    population: &SimPopulation,
    replicate: usize,
) -> std::result::Result<Vec<ReplicateRow>, ReplicateFailure> {
    let seed = replicate_seed(cfg.seed, replicate);
    let sample = stage(
        scenario,
        replicate,
        "sample",
        draw_sample(population, cfg.n, seed),
    )?;
    let target = if cfg.score_on_population {
        population
    } else {
        &sample
    };
    let model = stage(
        scenario,
        replicate,
        "fit_flex",
        fit_flex(&sample.dataset, &cfg.bart, seed, cfg.augment_propensity),
    )?;
    let fit_draws = stage(
        scenario,
        replicate,
        "predict",
        predict_dataset(&model, &sample.dataset),
    )?;
    let score_draws = if cfg.score_on_population {
        Some(stage(
            scenario,
            replicate,
            "predict",
            predict_dataset(&model, &population.dataset),
        )?)
    } else {
        None
    };
    let sgd = SgdConfig { seed, ..cfg.sgd };
    let use_tree = cfg.families.contains(&Family::Tree);
    let use_logistic = cfg.families.contains(&Family::Logistic);
    let direct_tree = if use_tree {
        Some(DirectModel::Tree(stage(
            scenario,
            replicate,
            "direct_tree",
            fit_direct_tree(&sample.dataset, &cfg.tree),
        )?))
    } else {
        None
    };
    let direct_logistic = if use_logistic {
        Some(DirectModel::Logistic(stage(
            scenario,
            replicate,
            "direct_logistic",
            fit_direct_logistic(&sample.dataset, &sgd),
        )?))
    } else {
        None
    };
    let cols = sample.dataset.columns();
    let tx = target.dataset.x();
    let mut rows = Vec::new();
    for &threshold in &cfg.thresholds {
        let additive = stage(
            scenario,
            replicate,
            "loss",
            AdditiveLoss::from_percent(threshold),
        )?;
        let table = additive.expand();
        let fitted = stage(
            scenario,
            replicate,
            "optimal_rule",
            optimal_rule(&fit_draws, &table, cfg.rho),
        )?;
        let optimal = match &score_draws {
            Some(d) => {
                stage(
                    scenario,
                    replicate,
                    "optimal_rule",
                    optimal_rule(d, &table, cfg.rho),
                )?
                .assignments
            }
            None => fitted.assignments.clone(),
        };
        let mut rules: Vec<(RuleKind, Vec<u8>)> = vec![
            (
                RuleKind::Oracle,
                super::metrics::true_optimal_rule(target, &additive),
            ),
            (RuleKind::Optimal, optimal),
        ];
        if let Some(direct) = &direct_tree {
            let tree = stage(
                scenario,
                replicate,
                "distill_tree",
                fit_soft_tree(&sample.dataset, &fitted.p_treat, &cfg.tree),
            )?;
            rules.push((
                RuleKind::DistilledTree,
                stage(scenario, replicate, "distill_tree", tree.assign(cols, tx))?,
            ));
            rules.push((
                RuleKind::DirectTree,
                stage(
                    scenario,
                    replicate,
                    "direct_tree",
                    direct_rule(direct, cols, tx, &table),
                )?
                .assignments,
            ));
        }
        if let Some(direct) = &direct_logistic {
            let m = stage(
                scenario,
                replicate,
                "distill_logistic",
                fit_soft_logistic(&sample.dataset, &fitted.p_treat, &sgd),
            )?;
            rules.push((
                RuleKind::DistilledLogistic,
                stage(scenario, replicate, "distill_logistic", m.assign(cols, tx))?,
            ));
            rules.push((
                RuleKind::DirectLogistic,
                stage(
                    scenario,
                    replicate,
                    "direct_logistic",
                    direct_rule(direct, cols, tx, &table),
                )?
                .assignments,
            ));
        }
        for (rule, assign) in rules {
            let score = stage(
                scenario,
                replicate,
                "score",
                score_against_truth(&assign, target, &additive),
            )?;
            rows.push(ReplicateRow {
                scenario,
                replicate,
                threshold,
                rule,
                score,
            });
        }
    }
    Ok(rows)
}

/// Runs every replicate of every configured scenario. Replicates execute on a
/// pool of `jobs` threads (all cores when `None`); output order is fixed by
/// scenario and replicate index.
pub fn run_replications(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ReplicationReport> {
    cfg.validate()?;
    if cfg.dataset.is_some() {
        return param("replication studies need simulated scenarios, not a dataset");
    }
    let mut populations = Vec::with_capacity(cfg.scenarios.len());
    for &id in &cfg.scenarios {
        let spec = ScenarioSpec {
            id,
            lambda: cfg.lambda,
        };
        populations.push((
            id,
            generate_population(&spec, cfg.population_size, cfg.seed)?,
        ));
    }
    let tasks: Vec<(usize, usize)> = (0..populations.len())
        .flat_map(|s| (0..cfg.replications).map(move |r| (s, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, r)| {
                let (id, pop) = &populations[s];
                run_replicate(cfg, *id, pop, r)
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for res in results {
        match res {
            Ok(r) => rows.extend(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(ReplicationReport {
        rows,
        failures,
        replications: cfg.replications,
    })
}

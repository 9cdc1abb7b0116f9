//! End-to-end run: data, flexible model, optimal rules, distilled models and
//! a score report, each written to a run directory and checksummed in a
//! manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Family};
use crate::data::Dataset;
use crate::decision::{optimal_rule, RuleDistribution};
use crate::error::{param, Error, Result};
use crate::eval::{eval_against_draws, score_against_truth, true_optimal_rule, RuleScore};
use crate::flex::{fit_flex, predict_dataset, PosteriorDraws};
use crate::io::{load_dataset, write_dataset};
use crate::loss::AdditiveLoss;
use crate::rng::replicate_seed;
use crate::sim::{draw_sample, generate_population, write_truth, ScenarioSpec, SimPopulation};
use crate::simple::export::{to_dot, to_text};
use crate::simple::{
    direct_rule, fit_direct_logistic, fit_direct_tree, fit_soft_logistic, fit_soft_tree,
    DirectModel, LogisticModel, SgdConfig, SoftLabelTree,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    pub files: Vec<FileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub population: u64,
    pub sample: u64,
    pub flex: u64,
    pub sgd: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub artifacts: Vec<ArtifactRecord>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn artifact(&self, name: &str) -> Option<&ArtifactRecord> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// One row per loss label and individual. Percent thresholds are labelled by
/// their integer value.
pub fn write_rules_csv(path: &Path, rules: &[(String, RuleDistribution)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "row", "assignment", "p_treat", "tau_hat"])?;
    for (threshold, r) in rules {
        for i in 0..r.assignments.len() {
            w.write_record([
                threshold.clone(),
                i.to_string(),
                r.assignments[i].to_string(),
                r.p_treat[i].to_string(),
                r.tau_hat[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a rules CSV back, grouped by label in file order.
pub fn read_rules_csv(path: &Path) -> Result<Vec<(String, RuleDistribution)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out: Vec<(String, RuleDistribution)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || {
            Error::Parameter(format!(
                "{}: malformed rules row {}",
                path.display(),
                line + 2
            ))
        };
        let field = |k: usize| rec.get(k).map(str::trim).ok_or_else(bad);
        let threshold = field(0)?.to_string();
        let row: usize = field(1)?.parse().map_err(|_| bad())?;
        let assignment: u8 = field(2)?.parse().map_err(|_| bad())?;
        let p_treat: f64 = field(3)?.parse().map_err(|_| bad())?;
        let tau_hat: f64 = field(4)?.parse().map_err(|_| bad())?;
        if assignment > 1 || !(0.0..=1.0).contains(&p_treat) {
            return Err(bad());
        }
        if out.last().is_none_or(|(t, _)| *t != threshold) {
            if out.iter().any(|(t, _)| *t == threshold) {
                return Err(Error::Parameter(format!(
                    "{}: rows for `{threshold}` are not contiguous",
                    path.display()
                )));
            }
            out.push((
                threshold,
                RuleDistribution {
                    assignments: vec![],
                    p_treat: vec![],
                    tau_hat: vec![],
                },
            ));
        }
        let r = &mut out.last_mut().expect("pushed above").1;
        if row != r.assignments.len() {
            return Err(bad());
        }
        r.assignments.push(assignment);
        r.p_treat.push(p_treat);
        r.tau_hat.push(tau_hat);
    }
    Ok(out)
}

/// Rules for every threshold of the configuration.
pub fn derive_rules(
    draws: &PosteriorDraws,
    thresholds: &[u32],
    rho: f64,
) -> Result<Vec<(u32, RuleDistribution)>> {
    thresholds
        .iter()
        .map(|&t| {
            Ok((
                t,
                optimal_rule(draws, &AdditiveLoss::from_percent(t)?.expand(), rho)?,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistilledModels {
    pub threshold: u32,
    pub tree: Option<SoftLabelTree>,
    pub logistic: Option<LogisticModel>,
}

/// One line of the run report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// Loss label, the percent threshold for additive losses.
    pub threshold: String,
    pub rule: String,
    pub score: RuleScore,
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "threshold",
        "rule",
        "R",
        "V",
        "accuracy",
        "precision",
        "recall",
    ])?;
    for r in rows {
        w.write_record([
            r.threshold.clone(),
            r.rule.clone(),
            r.score.r.to_string(),
            r.score.v.to_string(),
            opt(r.score.accuracy),
            opt(r.score.precision),
            opt(r.score.recall),
        ])?;
    }
    w.flush()?;
    Ok(())
}

struct Run<'a> {
    out: &'a Path,
    manifest: RunManifest,
}

impl Run<'_> {
    fn stage<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&Path) -> Result<(T, Vec<&'static str>)>,
    ) -> Result<T> {
        let start = Instant::now();
        let res = f(self.out);
        self.manifest
            .timings
            .insert(name.into(), start.elapsed().as_secs_f64());
        match res {
            Ok((v, files)) => {
                let mut recs = Vec::new();
                for f in files {
                    recs.push(FileRecord {
                        path: f.into(),
                        sha256: sha256_file(&self.out.join(f))?,
                    });
                }
                self.manifest.artifacts.push(ArtifactRecord {
                    name: name.into(),
                    files: recs,
                });
                Ok(v)
            }
            Err(e) => {
                self.manifest.failed_stage = Some(name.into());
                self.manifest.error = Some(e.to_string());
                Err(e)
            }
        }
    }

    fn write_manifest(&self) -> Result<()> {
        let w = fs::File::create(self.out.join(MANIFEST_FILE))?;
        serde_json::to_writer_pretty(w, &self.manifest)?;
        Ok(())
    }
}

/// Executes the full pipeline into `out`. The manifest is written whether or
/// not a stage fails; a failure is also returned as an error.
pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let sample_seed = replicate_seed(cfg.seed, 0);
    let mut run = Run {
        out,
        manifest: RunManifest {
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            seeds: Seeds {
                master: cfg.seed,
                population: cfg.seed,
                sample: sample_seed,
                flex: sample_seed,
                sgd: sample_seed,
            },
            artifacts: vec![],
            timings: BTreeMap::new(),
            failed_stage: None,
            error: None,
        },
    };
    let res = execute(cfg, &mut run, sample_seed);
    run.write_manifest()?;
    res.map(|_| run.manifest)
}

fn execute(cfg: &ExperimentConfig, run: &mut Run<'_>, seed: u64) -> Result<()> {
    let (dataset, truth) = run.stage("dataset", |out| {
        let (ds, truth) = match (&cfg.dataset, &cfg.schema) {
            (Some(d), Some(s)) => (load_dataset(d, s)?, None),
            _ => {
                let id = cfg.scenarios[0];
                let pop = generate_population(
                    &ScenarioSpec {
                        id,
                        lambda: cfg.lambda,
                    },
                    cfg.population_size,
                    cfg.seed,
                )?;
                let sample = draw_sample(&pop, cfg.n, seed)?;
                (sample.dataset.clone(), Some(sample))
            }
        };
        write_dataset(&ds, &out.join("dataset.csv"), &out.join("schema.toml"))?;
        let mut files = vec!["dataset.csv", "schema.toml"];
        if let Some(t) = &truth {
            write_truth(t, &out.join("truth.csv"))?;
            files.push("truth.csv");
        }
        Ok(((ds, truth), files))
    })?;
    let model = run.stage("model", |out| {
        let m = fit_flex(&dataset, &cfg.bart, seed, cfg.augment_propensity)?;
        m.save(&out.join("model.json"))?;
        Ok((m, vec!["model.json"]))
    })?;
    let (draws, rules) = run.stage("rules", |out| {
        let draws = predict_dataset(&model, &dataset)?;
        let rules = derive_rules(&draws, &cfg.thresholds, cfg.rho)?;
        let labelled: Vec<(String, RuleDistribution)> = rules
            .iter()
            .map(|(t, r)| (t.to_string(), r.clone()))
            .collect();
        write_rules_csv(&out.join("rules.csv"), &labelled)?;
        Ok(((draws, rules), vec!["rules.csv"]))
    })?;
    let sgd = SgdConfig { seed, ..cfg.sgd };
    let distilled = run.stage("tree", |out| distill_all(cfg, &dataset, &rules, &sgd, out))?;
    run.stage("report", |out| {
        let rows = score_run(
            cfg,
            &dataset,
            truth.as_ref(),
            &draws,
            &rules,
            &distilled,
            &sgd,
        )?;
        write_report_csv(&out.join("report.csv"), &rows)?;
        Ok(((), vec!["report.csv"]))
    })
}

fn distill_all(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    rules: &[(u32, RuleDistribution)],
    sgd: &SgdConfig,
    out: &Path,
) -> Result<(Vec<DistilledModels>, Vec<&'static str>)> {
    let mut models = Vec::new();
    let mut text = String::new();
    let mut dot = String::new();
    for (threshold, r) in rules {
        let tree = if cfg.families.contains(&Family::Tree) {
            let t = fit_soft_tree(dataset, &r.p_treat, &cfg.tree)?;
            text.push_str(&format!(
                "# threshold {threshold}%\n{}\n",
                to_text(&t.root, &t.feature_names())
            ));
            dot.push_str(&format!(
                "// threshold {threshold}%\n{}",
                to_dot(&t.root, &t.feature_names())
            ));
            Some(t)
        } else {
            None
        };
        let logistic = if cfg.families.contains(&Family::Logistic) {
            Some(fit_soft_logistic(dataset, &r.p_treat, sgd)?)
        } else {
            None
        };
        models.push(DistilledModels {
            threshold: *threshold,
            tree,
            logistic,
        });
    }
    serde_json::to_writer(fs::File::create(out.join("distilled.json"))?, &models)?;
    fs::write(out.join("trees.txt"), text)?;
    fs::write(out.join("trees.dot"), dot)?;
    Ok((models, vec!["distilled.json", "trees.txt", "trees.dot"]))
}

fn score_run(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    truth: Option<&SimPopulation>,
    draws: &PosteriorDraws,
    rules: &[(u32, RuleDistribution)],
    distilled: &[DistilledModels],
    sgd: &SgdConfig,
) -> Result<Vec<ReportRow>> {
    let cols = dataset.columns();
    let x = dataset.x();
    let mut direct = Vec::new();
    if cfg.families.contains(&Family::Tree) {
        direct.push((
            "direct_tree",
            DirectModel::Tree(fit_direct_tree(dataset, &cfg.tree)?),
        ));
    }
    if cfg.families.contains(&Family::Logistic) {
        direct.push((
            "direct_logistic",
            DirectModel::Logistic(fit_direct_logistic(dataset, sgd)?),
        ));
    }
    let mut rows = Vec::new();
    for ((threshold, rule), d) in rules.iter().zip(distilled) {
        if d.threshold != *threshold {
            return param("distilled models out of step with thresholds");
        }
        let additive = AdditiveLoss::from_percent(*threshold)?;
        let table = additive.expand();
        let mut candidates: Vec<(String, Vec<u8>)> =
            vec![("optimal".into(), rule.assignments.clone())];
        if let Some(t) = &d.tree {
            candidates.push(("distilled_tree".into(), t.assign(cols, x)?));
        }
        if let Some(m) = &d.logistic {
            candidates.push(("distilled_logistic".into(), m.assign(cols, x)?));
        }
        for (name, m) in &direct {
            candidates.push(((*name).into(), direct_rule(m, cols, x, &table)?.assignments));
        }
        match truth {
            Some(pop) => candidates.push(("oracle".into(), true_optimal_rule(pop, &additive))),
            None => candidates.push(("observed".into(), dataset.t().to_vec())),
        }
        for (name, assign) in candidates {
            let score = match truth {
                Some(pop) => score_against_truth(&assign, pop, &additive)?,
                None => {
                    let (r, v) = eval_against_draws(&assign, draws, &table)?;
                    RuleScore {
                        r,
                        v,
                        accuracy: None,
                        precision: None,
                        recall: None,
                    }
                }
            };
            rows.push(ReportRow {
                threshold: threshold.to_string(),
                rule: name,
                score,
            });
        }
    }
    Ok(rows)
}

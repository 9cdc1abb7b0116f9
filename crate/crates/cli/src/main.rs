//! `itr`: command-line frontend for estimating, distilling and evaluating
//! individualized treatment rules.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use itr_core::config::ExperimentConfig;
use itr_core::decision::{optimal_rule, RuleDistribution};
use itr_core::eval::report::{
    write_failures_csv, write_plot_csv, write_replicates_csv, write_summary_csv,
};
use itr_core::eval::{
    average_loss, average_outcome, eval_against_draws, run_replications, score_against_truth,
    RuleScore,
};
use itr_core::flex::{fit_flex, predict_dataset, BartConfig, FittedFlexModel};
use itr_core::io::{load_dataset, write_dataset};
use itr_core::loss::{AdditiveLoss, LossTable};
use itr_core::pipeline::{
    read_rules_csv, run_pipeline, sha256_file, write_report_csv, write_rules_csv, ReportRow,
};
use itr_core::sim::{
    draw_sample, generate_population, read_truth, write_truth, ScenarioId, ScenarioSpec,
};
use itr_core::simple::export::{to_dot, to_text};
use itr_core::simple::{fit_soft_logistic, fit_soft_tree, SgdConfig, TreeConfig};

#[derive(Parser)]
#[command(
    name = "itr",
    version,
    about = "Loss-optimal treatment rules, distilled into trees and logistic regressions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a confounded population and draw a sample from it.
    Simulate(SimulateArgs),
    /// Fit the probit tree ensemble to a dataset.
    FitFlex(FitFlexArgs),
    /// Derive loss-optimal rules and their posterior probabilities.
    DeriveRules(DeriveArgs),
    /// Distill rule probabilities into a tree or a logistic regression.
    Distill(DistillArgs),
    /// Score rules against simulated truth or the model's posterior.
    Evaluate(EvaluateArgs),
    /// Run the simulation replication study.
    ReproduceSim(ReproduceArgs),
    /// Run the whole pipeline from one configuration file.
    Run(RunArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Schema TOML describing the dataset's columns.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_scenario)]
    scenario: ScenarioId,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    population: usize,
    /// Confounding strength (default ln 3).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for dataset.csv, schema.toml and truth.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BartArgs {
    /// Use the reduced ensemble (50 trees, 600 iterations).
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
}

impl BartArgs {
    fn config(&self) -> BartConfig {
        let mut c = if self.desk {
            BartConfig::desk()
        } else {
            BartConfig::default()
        };
        if let Some(v) = self.trees {
            c.num_trees = v;
        }
        if let Some(v) = self.iterations {
            c.iterations = v;
        }
        if let Some(v) = self.burn_in {
            c.burn_in = v;
        }
        c
    }
}

#[derive(Args)]
struct FitFlexArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    bart: BartArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Add an estimated propensity score as an outcome covariate.
    #[arg(long)]
    augment_propensity: bool,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LossArgs {
    /// Decision thresholds c_t/c_d in percent, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["cost", "loss_table"])]
    thresholds: Vec<u32>,
    /// Additive loss as `c_t,c_d`.
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 2,
        conflicts_with = "loss_table"
    )]
    cost: Option<Vec<f64>>,
    /// Full loss table l[Y(1)][Y(0)][t], eight comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 8)]
    loss_table: Option<Vec<f64>>,
}

/// A loss with its label and, when additive, its `(c_t, c_d)` form.
struct NamedLoss {
    label: String,
    table: LossTable,
    additive: Option<AdditiveLoss>,
}

impl LossArgs {
    fn losses(&self) -> Result<Vec<NamedLoss>> {
        if let Some(c) = &self.cost {
            let a = AdditiveLoss::new(c[0], c[1])?;
            return Ok(vec![NamedLoss {
                label: format!("cost:{}/{}", c[0], c[1]),
                table: a.expand(),
                additive: Some(a),
            }]);
        }
        if let Some(v) = &self.loss_table {
            return Ok(vec![NamedLoss {
                label: "table".into(),
                table: LossTable::from_flat(v)?,
                additive: None,
            }]);
        }
        if self.thresholds.is_empty() {
            bail!("give --thresholds, --cost or --loss-table");
        }
        self.thresholds.iter().map(|&t| percent_loss(t)).collect()
    }

    fn provided(&self) -> bool {
        self.cost.is_some() || self.loss_table.is_some() || !self.thresholds.is_empty()
    }
}

fn percent_loss(t: u32) -> Result<NamedLoss> {
    let a = AdditiveLoss::from_percent(t)?;
    Ok(NamedLoss {
        label: t.to_string(),
        table: a.expand(),
        additive: Some(a),
    })
}

#[derive(Args)]
struct DeriveArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    loss: LossArgs,
    /// Correlation between the potential outcomes.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    rho: f64,
    /// Output rules CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Tree,
    Logistic,
}

#[derive(Args)]
struct DistillArgs {
    /// Model artifact whose covariate schema the distilled model must match.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Rules CSV from `derive-rules`.
    #[arg(long)]
    labels: PathBuf,
    /// Label of the rule set to distill; required when the file holds several.
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long, value_enum, default_value_t = FamilyArg::Tree)]
    family: FamilyArg,
    #[arg(long, default_value_t = 2)]
    d_max: u32,
    #[arg(long, default_value_t = 5)]
    n_obs: usize,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Rules CSV to score.
    #[arg(long)]
    rules: PathBuf,
    /// Ground-truth CSV from `simulate`; without it rules are scored against
    /// the model's posterior draws.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Loss used for scoring; defaults to reading rule labels as percent thresholds.
    #[command(flatten)]
    loss: LossArgs,
    /// Also score the observed treatment as a rule.
    #[arg(long)]
    observed: bool,
    /// Output report CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Configuration file (TOML or JSON); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario(s) to run, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_scenario)]
    scenario: Vec<ScenarioId>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Laptop-scale protocol (the default).
    #[arg(long, conflicts_with = "full")]
    desk: bool,
    /// 100 replicates, all eight scenarios, full ensemble.
    #[arg(long)]
    full: bool,
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<u32>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replicates (default: all cores).
    #[arg(long, env = "ITR_JOBS")]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_scenario(s: &str) -> std::result::Result<ScenarioId, String> {
    s.parse().map_err(|e: itr_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::FitFlex(a) => fit_flex_cmd(a),
        Command::DeriveRules(a) => derive_rules(a),
        Command::Distill(a) => distill(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ReproduceSim(a) => reproduce_sim(a),
        Command::Run(a) => run(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut spec = ScenarioSpec::new(a.scenario);
    if let Some(l) = a.lambda {
        spec.lambda = l;
    }
    let pop = generate_population(&spec, a.population, a.seed)?;
    let sample = draw_sample(&pop, a.n, a.seed)?;
    fs::create_dir_all(&a.out)?;
    write_dataset(
        &sample.dataset,
        &a.out.join("dataset.csv"),
        &a.out.join("schema.toml"),
    )?;
    write_truth(&sample, &a.out.join("truth.csv"))?;
    Ok(())
}

fn fit_flex_cmd(a: FitFlexArgs) -> Result<()> {
    let ds = load_dataset(&a.data.data, &a.data.schema)?;
    let model = fit_flex(&ds, &a.bart.config(), a.seed, a.augment_propensity)?;
    model
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn load_model_and_data(
    model: &Path,
    data: &DataArgs,
) -> Result<(FittedFlexModel, itr_core::data::Dataset)> {
    let m = FittedFlexModel::load(model).with_context(|| format!("reading {}", model.display()))?;
    let ds = load_dataset(&data.data, &data.schema)?;
    Ok((m, ds))
}

fn derive_rules(a: DeriveArgs) -> Result<()> {
    let (model, ds) = load_model_and_data(&a.model, &a.data)?;
    let draws = predict_dataset(&model, &ds)?;
    let mut rules = Vec::new();
    for l in a.loss.losses()? {
        rules.push((l.label, optimal_rule(&draws, &l.table, a.rho)?));
    }
    write_rules_csv(&a.out, &rules)?;
    Ok(())
}

fn pick_rules(
    all: Vec<(String, RuleDistribution)>,
    label: Option<&str>,
) -> Result<(String, RuleDistribution)> {
    match label {
        Some(l) => all
            .into_iter()
            .find(|(t, _)| t == l)
            .with_context(|| format!("no rules labelled `{l}`")),
        None if all.len() == 1 => Ok(all.into_iter().next().expect("one element")),
        None => bail!(
            "the labels file holds {} rule sets; choose one with --threshold",
            all.len()
        ),
    }
}

fn distill(a: DistillArgs) -> Result<()> {
    let (model, ds) = load_model_and_data(&a.model, &a.data)?;
    if model.columns() != ds.columns() {
        bail!("dataset covariates differ from the model's");
    }
    let (_, rules) = pick_rules(read_rules_csv(&a.labels)?, a.threshold.as_deref())?;
    if rules.p_treat.len() != ds.n() {
        bail!("{} labels for {} rows", rules.p_treat.len(), ds.n());
    }
    fs::create_dir_all(&a.out)?;
    match a.family {
        FamilyArg::Tree => {
            let cfg = TreeConfig {
                d_max: a.d_max,
                n_obs: a.n_obs,
                ..TreeConfig::default()
            };
            let tree = fit_soft_tree(&ds, &rules.p_treat, &cfg)?;
            let names = tree.feature_names();
            fs::write(a.out.join("tree.txt"), to_text(&tree.root, &names))?;
            fs::write(a.out.join("tree.dot"), to_dot(&tree.root, &names))?;
            serde_json::to_writer_pretty(fs::File::create(a.out.join("tree.json"))?, &tree)?;
        }
        FamilyArg::Logistic => {
            let cfg = SgdConfig {
                learning_rate: a.learning_rate,
                epochs: a.epochs,
                seed: a.seed,
                ..SgdConfig::default()
            };
            let m = fit_soft_logistic(&ds, &rules.p_treat, &cfg)?;
            let mut text = String::new();
            for (name, w) in m.basis.names().iter().zip(&m.weights) {
                text.push_str(&format!("{name}\t{w}\n"));
            }
            fs::write(a.out.join("logistic.txt"), text)?;
            serde_json::to_writer_pretty(fs::File::create(a.out.join("logistic.json"))?, &m)?;
        }
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (model, ds) = load_model_and_data(&a.model, &a.data)?;
    let rules = read_rules_csv(&a.rules)?;
    let truth = a
        .truth
        .as_deref()
        .map(|p| read_truth(ds.clone(), p))
        .transpose()?;
    let explicit = if a.loss.provided() {
        Some(a.loss.losses()?)
    } else {
        None
    };
    let draws = if truth.is_none() {
        Some(predict_dataset(&model, &ds)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for (label, rule) in &rules {
        let loss = match &explicit {
            Some(l) if l.len() == 1 => &l[0],
            Some(l) => l
                .iter()
                .find(|n| &n.label == label)
                .with_context(|| format!("no loss given for rules labelled `{label}`"))?,
            None => {
                let pct: u32 = label.parse().with_context(|| {
                    format!(
                        "rule label `{label}` is not a percent threshold; pass the loss explicitly"
                    )
                })?;
                &percent_loss(pct)?
            }
        };
        let mut candidates = vec![("optimal".to_string(), rule.assignments.clone())];
        if a.observed {
            candidates.push(("observed".into(), ds.t().to_vec()));
        }
        for (name, assign) in candidates {
            let score = match (&truth, &loss.additive) {
                (Some(pop), Some(add)) => score_against_truth(&assign, pop, add)?,
                (Some(pop), None) => RuleScore {
                    r: average_loss(&assign, pop, &loss.table)?,
                    v: average_outcome(&assign, pop)?,
                    accuracy: None,
                    precision: None,
                    recall: None,
                },
                (None, _) => {
                    let draws = draws.as_ref().expect("draws are computed without truth");
                    let (r, v) = eval_against_draws(&assign, draws, &loss.table)?;
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
                threshold: label.clone(),
                rule: name,
                score,
            });
        }
    }
    write_report_csv(&a.out, &rows)?;
    Ok(())
}

/// Flags over file over defaults.
fn reproduce_config(a: &ReproduceArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            ExperimentConfig::from_path(p).with_context(|| format!("reading {}", p.display()))?
        }
        None => ExperimentConfig::desk(),
    };
    if a.full {
        let full = ExperimentConfig::full();
        cfg.scenarios = full.scenarios;
        cfg.replications = full.replications;
        cfg.bart = full.bart;
        cfg.thresholds = full.thresholds;
    } else if a.desk {
        let desk = ExperimentConfig::desk();
        cfg.scenarios = desk.scenarios;
        cfg.replications = desk.replications;
        cfg.bart = desk.bart;
    }
    if !a.scenario.is_empty() {
        cfg.scenarios = a.scenario.clone();
    }
    if let Some(r) = a.replicates {
        cfg.replications = r;
    }
    if !a.thresholds.is_empty() {
        cfg.thresholds = a.thresholds.clone();
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn reproduce_sim(a: ReproduceArgs) -> Result<()> {
    let cfg = reproduce_config(&a)?;
    fs::create_dir_all(&a.out)?;
    let start = Instant::now();
    let report = run_replications(&cfg, a.jobs)?;
    let elapsed = start.elapsed().as_secs_f64();
    let files = [
        "report.csv",
        "plot_data.csv",
        "replicates.csv",
        "failures.csv",
        "config.toml",
    ];
    write_summary_csv(&report, &a.out.join(files[0]))?;
    write_plot_csv(&report, &a.out.join(files[1]))?;
    write_replicates_csv(&report, &a.out.join(files[2]))?;
    write_failures_csv(&report, &a.out.join(files[3]))?;
    fs::write(a.out.join(files[4]), cfg.to_toml()?)?;
    let mut checksums = BTreeMap::new();
    for f in files {
        checksums.insert(f, sha256_file(&a.out.join(f))?);
    }
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "seeds": { "master": cfg.seed, "replicate": "master XOR replicate index" },
        "artifacts": checksums,
        "timings": { "replications": elapsed },
        "failures": report.failures.len(),
    });
    fs::write(
        a.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    for f in &report.failures {
        eprintln!(
            "replicate {} of scenario {} failed at {}: {}",
            f.replicate, f.scenario, f.stage, f.message
        );
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_path(&a.config)
        .with_context(|| format!("reading {}", a.config.display()))?;
    run_pipeline(&cfg, &a.out)?;
    Ok(())
}

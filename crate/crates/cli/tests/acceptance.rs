//! Acceptance suite. Runs every criterion and prints one PASS/FAIL line each.
//!
//! Exact criteria fail the process. The directional reproduction criterion is
//! statistical: its FAIL line is printed like any other, but it only fails the
//! process when `ITR_ACCEPTANCE_STRICT=1`.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use itr_core::config::ExperimentConfig;
use itr_core::data::{Column, ColumnKind, Dataset};
use itr_core::decision::{
    additive_threshold_rule, argmin_arm, feasible_rho, joint_po, optimal_rule, JointPo,
};
use itr_core::eval::{
    average_loss, average_outcome, run_replications, true_optimal_rule, ReplicationReport, RuleKind,
};
use itr_core::flex::{fit_flex, predict_dataset, BartConfig, PosteriorDraws};
use itr_core::loss::{expand_additive, AdditiveLoss};
use itr_core::sim::{sample_covariates, sim_columns, ScenarioId, SimPopulation};
use itr_core::simple::logistic::{soft_gradient, soft_log_likelihood};
use itr_core::simple::tree::{best_split, region_objective, Features, Split};
use itr_core::simple::{fit_soft_tree, TreeConfig};

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

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_table(r: &mut ChaCha8Rng) -> JointPo {
    let raw: [f64; 4] = std::array::from_fn(|_| r.random::<f64>() + 1e-9);
    let s: f64 = raw.iter().sum();
    JointPo {
        theta: [[raw[0] / s, raw[1] / s], [raw[2] / s, raw[3] / s]],
    }
}

fn additive_equivalence() -> Outcome {
    let mut r = rng(1);
    let mut agree = 0usize;
    let total = 100_000;
    for _ in 0..total {
        let joint = random_table(&mut r);
        let c_d = r.random_range(0.05..5.0);
        let c_t = r.random_range(0.0..1.0) * c_d * r.random_range(0.0..1.2);
        let loss = expand_additive(&AdditiveLoss::new(c_t, c_d).unwrap());
        agree += usize::from(
            argmin_arm(&joint, &loss) == additive_threshold_rule(joint.tau(), c_t, c_d),
        );
    }
    // Dyadic tables make both sides exact, so ties are reproduced exactly.
    let mut ties = 0usize;
    let mut tie_agree = 0usize;
    let dyadic = 10_000;
    for _ in 0..dyadic {
        let mut cells = [0u32; 4];
        for _ in 0..16 {
            cells[r.random_range(0..4)] += 1;
        }
        let theta = cells.map(|c| f64::from(c) / 16.0);
        let joint = JointPo {
            theta: [[theta[0], theta[1]], [theta[2], theta[3]]],
        };
        let c_d = [1.0, 2.0, 4.0][r.random_range(0..3)];
        let tau = joint.tau();
        let c_t = if tau >= 0.0 && r.random_bool(0.5) {
            ties += 1;
            c_d * tau
        } else {
            c_d * f64::from(r.random_range(0..16u32)) / 16.0
        };
        let loss = expand_additive(&AdditiveLoss::new(c_t, c_d).unwrap());
        tie_agree +=
            usize::from(argmin_arm(&joint, &loss) == additive_threshold_rule(tau, c_t, c_d));
    }
    outcome(
        agree == total && tie_agree == dyadic,
        format!("{agree}/{total} random, {tie_agree}/{dyadic} dyadic ({ties} exact ties)"),
    )
}

fn rho_invariance() -> Outcome {
    let mut r = rng(2);
    let rhos = [-0.3, 0.0, 0.3, 0.6];
    let sets = 1000;
    let mut identical = 0usize;
    for _ in 0..sets {
        let d = r.random_range(1..=20);
        let n = r.random_range(1..=10);
        let mut p1 = vec![vec![0.0; n]; d];
        let mut p0 = vec![vec![0.0; n]; d];
        for k in 0..d {
            for i in 0..n {
                loop {
                    let (a, b) = (r.random_range(0.02..0.98), r.random_range(0.02..0.98));
                    let (lo, hi) = feasible_rho(a, b);
                    if lo <= -0.3 && hi >= 0.6 {
                        p1[k][i] = a;
                        p0[k][i] = b;
                        break;
                    }
                }
            }
        }
        let draws = PosteriorDraws::from_draws(&p1, &p0).unwrap();
        let loss = AdditiveLoss::from_percent(r.random_range(0..=40))
            .unwrap()
            .expand();
        let base = optimal_rule(&draws, &loss, rhos[0]).unwrap();
        let same = rhos[1..].iter().all(|&rho| {
            let o = optimal_rule(&draws, &loss, rho).unwrap();
            o.assignments == base.assignments
                && o.p_treat
                    .iter()
                    .zip(&base.p_treat)
                    .all(|(a, b)| a.to_bits() == b.to_bits())
        });
        identical += usize::from(same);
    }
    outcome(
        identical == sets,
        format!("{identical}/{sets} draw sets bit-identical across rho"),
    )
}

fn joint_algebra() -> Outcome {
    let mut r = rng(3);
    let total = 100_000;
    let mut ok = 0usize;
    let mut worst = 0.0f64;
    for _ in 0..total {
        let (t1, t0) = (
            r.random_range(1e-6..1.0 - 1e-6),
            r.random_range(1e-6..1.0 - 1e-6),
        );
        let (lo, hi) = feasible_rho(t1, t0);
        let rho = lo + r.random::<f64>() * (hi - lo);
        let j = joint_po(t1, t0, rho).unwrap();
        let sum: f64 = j.theta.iter().flatten().sum();
        let err = (sum - 1.0)
            .abs()
            .max((j.treated_marginal() - t1).abs())
            .max((j.control_marginal() - t0).abs());
        worst = worst.max(err);
        ok += usize::from(err <= 1e-12 && j.theta.iter().flatten().all(|&v| v >= 0.0));
    }
    outcome(
        ok == total,
        format!("{ok}/{total} valid, worst deviation {worst:.2e}"),
    )
}

fn gradient_check() -> Outcome {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (n, k) = (r.random_range(1..=50), r.random_range(1..=8));
        let phi: Vec<f64> = (0..n * k).map(|_| r.random_range(-2.0..2.0)).collect();
        let labels: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let w: Vec<f64> = (0..k).map(|_| r.random_range(-1.5..1.5)).collect();
        let g = soft_gradient(&w, &phi, &labels);
        let h = 1e-5;
        let num: Vec<f64> = (0..k)
            .map(|j| {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[j] += h;
                wm[j] -= h;
                (soft_log_likelihood(&wp, &phi, &labels) - soft_log_likelihood(&wm, &phi, &labels))
                    / (2.0 * h)
            })
            .collect();
        let diff = g
            .iter()
            .zip(&num)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(diff / norm);
    }
    outcome(
        worst < 1e-5,
        format!("worst relative error {worst:.2e} over 100 points"),
    )
}

fn exhaustive_split(
    cols: &[Vec<f64>],
    cont: &[bool],
    labels: &[f64],
    cfg: &TreeConfig,
) -> Option<Split> {
    let n = labels.len();
    let parent = region_objective(labels).1;
    let mut best: Option<Split> = None;
    for (j, col) in cols.iter().enumerate() {
        let mut vals = col.clone();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let l: Vec<f64> = (0..n)
                .filter(|&i| col[i] <= w[0])
                .map(|i| labels[i])
                .collect();
            let rr: Vec<f64> = (0..n)
                .filter(|&i| col[i] > w[0])
                .map(|i| labels[i])
                .collect();
            if l.len() <= cfg.n_obs || rr.len() <= cfg.n_obs {
                continue;
            }
            let gain = region_objective(&l).1 + region_objective(&rr).1 - parent;
            if gain > cfg.min_gain + 1e-10 && best.is_none_or(|b| gain > b.gain + 1e-10) {
                let cut = if cont[j] { (w[0] + w[1]) / 2.0 } else { w[0] };
                best = Some(Split {
                    feature: j,
                    cut,
                    gain,
                });
            }
        }
    }
    best
}

fn split_oracle() -> Outcome {
    let mut r = rng(5);
    let total = 500;
    let mut agree = 0usize;
    let mut splits = 0usize;
    for _ in 0..total {
        let n = r.random_range(2..=12);
        let p = r.random_range(1..=3);
        let cont: Vec<bool> = (0..p).map(|_| r.random_bool(0.5)).collect();
        let cols: Vec<Vec<f64>> = cont
            .iter()
            .map(|&c| {
                (0..n)
                    .map(|_| {
                        if c {
                            r.random_range(-1.0..1.0)
                        } else {
                            f64::from(r.random_range(0..4u8))
                        }
                    })
                    .collect()
            })
            .collect();
        let labels: Vec<f64> = (0..n)
            .map(|_| {
                if r.random_bool(0.3) {
                    f64::from(r.random_bool(0.5))
                } else {
                    r.random::<f64>()
                }
            })
            .collect();
        let cfg = TreeConfig {
            n_obs: r.random_range(1..=3),
            ..TreeConfig::default()
        };
        let rows: Vec<usize> = (0..n).collect();
        let got = best_split(
            Features {
                cols: &cols,
                continuous: &cont,
            },
            &labels,
            &rows,
            &cfg,
        );
        let want = exhaustive_split(&cols, &cont, &labels, &cfg);
        splits += usize::from(want.is_some());
        agree += usize::from(got.map(|s| (s.feature, s.cut)) == want.map(|s| (s.feature, s.cut)));
    }
    outcome(
        agree == total,
        format!("{agree}/{total} agree ({splits} with an admissible split)"),
    )
}

type Planted = (usize, f64, (usize, f64), (usize, f64), [f64; 4]);

/// Fits a soft tree to labels generated by `planted` and returns the number of
/// training rows whose decision matches the planted one.
fn planted_agreement(planted: Planted, r: &mut ChaCha8Rng, n: usize) -> usize {
    let (root, cut, (lf, lc), (rf, rc), w) = planted;
    let cols = vec![
        Column::new("b", ColumnKind::Binary),
        Column::new("o", ColumnKind::Ordinal { levels: 4 }),
        Column::new("c", ColumnKind::Continuous),
    ];
    let x: Vec<f64> = (0..n)
        .flat_map(|_| {
            [
                f64::from(r.random_bool(0.5)),
                f64::from(r.random_range(1..=4u8)),
                r.random_range(-2.0..2.0),
            ]
        })
        .collect();
    let labels: Vec<f64> = x
        .chunks_exact(3)
        .map(|row| {
            if row[root] <= cut {
                if row[lf] <= lc {
                    w[0]
                } else {
                    w[1]
                }
            } else if row[rf] <= rc {
                w[2]
            } else {
                w[3]
            }
        })
        .collect();
    let ds = Dataset::new(cols, x.clone(), vec![0; n], vec![0; n]).unwrap();
    let tree = fit_soft_tree(&ds, &labels, &TreeConfig::default()).unwrap();
    x.chunks_exact(3)
        .zip(&labels)
        .filter(|(row, &l)| tree.decide(row) == u8::from(l > 0.5))
        .count()
}

/// Planted depth-2 trees over (binary, ordinal, continuous) covariates: root
/// split, then a split in each child, with four leaf labels. The gating family
/// has a root split that is also the most informative single split, so greedy
/// induction can find it. The second family does not, and is reported only.
fn distillation_fidelity() -> Outcome {
    let gating: [Planted; 5] = [
        (0, 0.0, (1, 2.0), (2, 0.5), [0.02, 0.55, 0.45, 0.98]),
        (2, 0.0, (0, 0.0), (1, 3.0), [0.97, 0.6, 0.4, 0.05]),
        (1, 2.0, (2, -0.5), (0, 0.0), [0.03, 0.58, 0.42, 0.96]),
        (1, 1.0, (2, 0.8), (2, -0.8), [0.9, 0.52, 0.35, 0.08]),
        (0, 0.0, (2, 0.0), (2, 0.0), [0.3, 0.9, 0.8, 0.1]),
    ];
    let adversarial: [Planted; 4] = [
        (0, 0.0, (1, 2.0), (2, 0.5), [0.1, 0.8, 0.3, 0.9]),
        (2, 0.0, (0, 0.0), (1, 3.0), [0.9, 0.2, 0.15, 0.7]),
        (1, 2.0, (2, -0.5), (0, 0.0), [0.05, 0.6, 0.95, 0.35]),
        (1, 1.0, (2, 0.8), (2, -0.8), [0.7, 0.2, 0.4, 0.85]),
    ];
    let mut r = rng(6);
    let n = 500;
    let mut perfect = 0usize;
    let mut detail = Vec::new();
    for planted in gating {
        let agree = planted_agreement(planted, &mut r, n);
        perfect += usize::from(agree == n);
        detail.push(format!("{agree}/{n}"));
    }
    let other: Vec<String> = adversarial
        .into_iter()
        .map(|p| format!("{}/{n}", planted_agreement(p, &mut r, n)))
        .collect();
    eprintln!(
        "    root split not greedily identifiable (informational): {}",
        other.join(", ")
    );
    outcome(
        perfect == gating.len(),
        format!("decision agreement per planted tree: {}", detail.join(", ")),
    )
}

fn metric_algebra() -> Outcome {
    let mut r = rng(7);
    let zero_cost = expand_additive(&AdditiveLoss::new(0.0, 1.0).unwrap());
    let mut worst_sum = 0.0f64;
    let mut optimal_ok = 0usize;
    let total = 100;
    for _ in 0..total {
        let n = r.random_range(5..=200);
        let p1: Vec<f64> = (0..n).map(|_| r.random_range(0.01..0.99)).collect();
        let p0: Vec<f64> = (0..n).map(|_| r.random_range(0.01..0.99)).collect();
        let pop = SimPopulation {
            dataset: Dataset::new(vec![], vec![], vec![0; n], vec![0; n]).unwrap(),
            true_tau: p1.iter().zip(&p0).map(|(a, b)| a - b).collect(),
            true_p1: p1,
            true_p0: p0,
            propensity: vec![0.5; n],
        };
        let rule: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.5))).collect();
        let sum =
            average_loss(&rule, &pop, &zero_cost).unwrap() + average_outcome(&rule, &pop).unwrap();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        let additive = AdditiveLoss::from_percent(r.random_range(0..=100)).unwrap();
        let table = additive.expand();
        let best = average_loss(&true_optimal_rule(&pop, &additive), &pop, &table).unwrap();
        optimal_ok += usize::from(best <= average_loss(&rule, &pop, &table).unwrap() + 1e-12);
    }
    outcome(
        worst_sum <= 1e-12 && optimal_ok == total,
        format!("max |R + V - 1| = {worst_sum:.2e}; oracle loss minimal in {optimal_ok}/{total}"),
    )
}

struct Ordering {
    holds: usize,
    total: usize,
    mean_ok: bool,
}

fn check_order(
    rep: &ReplicationReport,
    scenario: ScenarioId,
    threshold: u32,
    metric: &str,
    lhs: RuleKind,
    rhs: RuleKind,
    slack: f64,
) -> Ordering {
    let mut holds = 0;
    let mut total = 0;
    let (mut sl, mut sr, mut nl, mut nr) = (0.0, 0.0, 0usize, 0usize);
    for k in 0..rep.replications {
        let (Some(a), Some(b)) = (
            rep.score(scenario, k, threshold, lhs),
            rep.score(scenario, k, threshold, rhs),
        ) else {
            continue;
        };
        let (a, b) = (a.metric(metric), b.metric(metric));
        if let Some(a) = a {
            sl += a;
            nl += 1;
        }
        if let Some(b) = b {
            sr += b;
            nr += 1;
        }
        if let (Some(a), Some(b)) = (a, b) {
            total += 1;
            holds += usize::from(a <= b + slack);
        }
    }
    let mean_ok = nl == 0 || nr == 0 || sl / nl as f64 <= sr / nr as f64 + slack;
    Ordering {
        holds,
        total,
        mean_ok,
    }
}

fn directional() -> Outcome {
    let cfg = ExperimentConfig {
        scenarios: vec![ScenarioId::E, ScenarioId::A, ScenarioId::F],
        replications: 20,
        n: 1000,
        thresholds: (0..=100).step_by(10).collect(),
        bart: BartConfig::desk(),
        ..ExperimentConfig::desk()
    };
    let rep = run_replications(&cfg, None).unwrap();
    let mut pass = rep.failures.is_empty();
    let mut notes = Vec::new();
    for scenario in [ScenarioId::E, ScenarioId::A, ScenarioId::F] {
        for (distilled, direct) in [
            (RuleKind::DistilledTree, RuleKind::DirectTree),
            (RuleKind::DistilledLogistic, RuleKind::DirectLogistic),
        ] {
            let mut worst = (f64::INFINITY, String::new());
            let mut family_ok = true;
            for t in [0, 10, 20, 30] {
                // (metric, lhs <= rhs + slack); recall is flipped to lhs >= rhs.
                let checks = [
                    ("R", RuleKind::Optimal, distilled, 0.0, "R(opt)<=R(dist)"),
                    ("R", distilled, direct, 0.01, "R(dist)<=R(direct)+0.01"),
                    (
                        "recall",
                        direct,
                        distilled,
                        0.0,
                        "recall(dist)>=recall(direct)",
                    ),
                ];
                for (metric, lhs, rhs, slack, name) in checks {
                    let o = check_order(&rep, scenario, t, metric, lhs, rhs, slack);
                    let frac = if o.total == 0 {
                        1.0
                    } else {
                        o.holds as f64 / o.total as f64
                    };
                    if frac < worst.0 {
                        worst = (frac, format!("{name}@{t}%: {}/{}", o.holds, o.total));
                    }
                    if frac < 0.7 || !o.mean_ok {
                        family_ok = false;
                        notes.push(format!(
                            "{scenario}/{distilled} {name} at {t}%: {}/{} replicates, mean order {}",
                            o.holds,
                            o.total,
                            if o.mean_ok { "ok" } else { "violated" }
                        ));
                    }
                }
            }
            pass &= family_ok;
            eprintln!(
                "    {scenario} {distilled:<18} {} (weakest: {})",
                if family_ok { "ok" } else { "violated" },
                worst.1
            );
        }
    }
    let detail = if notes.is_empty() {
        format!(
            "all orderings hold; {} failed replicates",
            rep.failures.len()
        )
    } else {
        format!("{} violations: {}", notes.len(), notes.join("; "))
    };
    outcome(pass, detail)
}

fn null_model() -> Outcome {
    let n = 1000;
    let mut r = rng(9);
    let t: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.5))).collect();
    let y: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.3))).collect();
    let ds = Dataset::new(sim_columns(), sample_covariates(n, 9), t, y).unwrap();
    let model = fit_flex(&ds, &BartConfig::desk(), 9, false).unwrap();
    let tau = predict_dataset(&model, &ds).unwrap().mean_tau();
    let avg = tau.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    outcome(avg < 0.05, format!("mean |tau_hat| = {avg:.4}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path| {
        Command::new(env!("CARGO_BIN_EXE_itr"))
            .args([
                "reproduce-sim",
                "--scenario",
                "E",
                "--replicates",
                "2",
                "--desk",
                "--thresholds",
                "0,10,20",
                "--seed",
                "42",
                "--out",
            ])
            .arg(out)
            .status()
            .expect("binary runs")
            .success()
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if !run(&a) || !run(&b) {
        return outcome(false, "reproduce-sim exited with an error");
    }
    let same = ["report.csv", "plot_data.csv", "replicates.csv"]
        .iter()
        .all(|f| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap());
    outcome(
        same,
        if same {
            "report, plot-data and replicate CSVs byte-identical"
        } else {
            "outputs differ"
        },
    )
}

type Criterion = (&'static str, fn() -> Outcome, bool);

fn main() -> ExitCode {
    // (name, check, gating outside strict mode)
    let criteria: [Criterion; 10] = [
        ("additive-loss equivalence", additive_equivalence, true),
        ("rho invariance", rho_invariance, true),
        ("joint potential-outcome algebra", joint_algebra, true),
        ("soft-logistic gradient", gradient_check, true),
        ("split oracle", split_oracle, true),
        ("distillation fidelity", distillation_fidelity, true),
        ("metric algebra", metric_algebra, true),
        ("directional reproduction", directional, false),
        ("null-model sanity", null_model, true),
        ("end-to-end determinism", determinism, true),
    ];
    let strict = std::env::var("ITR_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let (mut failed, mut gating_failed) = (Vec::new(), 0);
    for (i, (name, f, gating)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        if !o.pass {
            failed.push(i + 1);
            gating_failed += usize::from(*gating || strict);
        }
        println!(
            "criterion {:>2} {:<32} {} ({:.1}s) {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!(
        "{} of {} criteria passed; failed: {:?}",
        criteria.len() - failed.len(),
        criteria.len(),
        failed
    );
    if gating_failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

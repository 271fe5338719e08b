//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion's PASS/FAIL line is always printed; exits non-zero on any failure.

use std::fs;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use volleyxai::data::{
    generate_synthetic_league, parse_matches_csv, write_matches_csv, LeagueConfig,
};
use volleyxai::explain::{
    column_means, exact_shapley, kernel_shap, kernel_shap_sampled, protodash, ProtoDashConfig,
    DEFAULT_EXACT_BUDGET,
};
use volleyxai::features::build_features;
use volleyxai::metrics::{accuracy, auc_roc, f1, faithfulness};
use volleyxai::models::brcg::train_brcg;
use volleyxai::models::logreg::logreg_loss_grad;
use volleyxai::models::mlp::{mlp_loss_grad, mlp_param_count};
use volleyxai::models::{train_logreg, BrcgConfig, Dataset, LogRegConfig};
use volleyxai::ModelKind;
use volleyxai_cli::commands::{
    cmd_explain, cmd_run, ExplainOutcome, ExplainRequest, Method, RunArtifacts,
};
use volleyxai_cli::RunConfig;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:?}, limit {limit:?}"))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn normal_rows(rng: &mut StdRng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

fn shapley_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let w = [1.2, -0.8, 0.5, 0.0, 2.0, -1.5, 0.3, 0.9];
    let rows = normal_rows(&mut rng, 400, 8);
    let labels: Vec<u8> = rows
        .iter()
        .map(|r| {
            let z: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
            u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-z).exp()))
        })
        .collect();
    let data = Dataset::unnamed(rows.clone(), labels).map_err(|e| e.to_string())?;
    let model = train_logreg(&data, &LogRegConfig::default()).map_err(|e| e.to_string())?;
    let background: Vec<Vec<f64>> = rows[..50].to_vec();
    let (mut full_err, mut sampled_err) = (0.0_f64, 0.0_f64);
    for (k, x) in rows[300..320].iter().enumerate() {
        let exact = exact_shapley(&model, x, &background, DEFAULT_EXACT_BUDGET)
            .map_err(|e| e.to_string())?;
        let full =
            kernel_shap(&model, x, &background, 1 << 8, k as u64).map_err(|e| e.to_string())?;
        let sampled = kernel_shap_sampled(&model, x, &background, 512, k as u64)
            .map_err(|e| e.to_string())?;
        full_err = full_err.max(max_abs_diff(&exact.phi, &full.phi));
        sampled_err = sampled_err.max(max_abs_diff(&exact.phi, &sampled.phi));
    }
    ensure(full_err <= 1e-6, || {
        format!("full enumeration error {full_err:e}")
    })?;
    ensure(sampled_err <= 1e-2, || {
        format!("512-coalition error {sampled_err:e}")
    })?;
    within(start, Duration::from_secs(10))?;
    Ok(format!(
        "20 rows: full max|dphi| {full_err:.1e}, sampled(512) {sampled_err:.1e}, {:.2?}",
        start.elapsed()
    ))
}

fn linear_closed_form() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    let mut worst = 0.0_f64;
    for m in [6usize, 10, 19] {
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w2 = w.clone();
        let f = move |x: &[f64]| w2.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + 0.4;
        let background = normal_rows(&mut rng, 30, m);
        let mean = column_means(&background);
        for x in normal_rows(&mut rng, 5, m) {
            let expected: Vec<f64> = (0..m).map(|i| w[i] * (x[i] - mean[i])).collect();
            if m <= 10 {
                let exact = exact_shapley(&f, &x, &background, DEFAULT_EXACT_BUDGET)
                    .map_err(|e| e.to_string())?;
                worst = worst.max(max_abs_diff(&exact.phi, &expected));
            }
            for budget in [2 * m + 2, 2086] {
                let k = kernel_shap(&f, &x, &background, budget, 9).map_err(|e| e.to_string())?;
                worst = worst.max(max_abs_diff(&k.phi, &expected));
                let s = kernel_shap_sampled(&f, &x, &background, budget.max(4 * m), 9)
                    .map_err(|e| e.to_string())?;
                worst = worst.max(max_abs_diff(&s.phi, &expected));
            }
        }
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!(
        "M in {{6,10,19}}: max |phi - w(x - mean)| {worst:.1e}"
    ))
}

fn additivity_over_many_matches() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::default();
    cfg.synth.n_teams = 20;
    cmd_run(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let run = RunArtifacts::load(dir.path()).map_err(|e| e.to_string())?;
    let mut checked = 0;
    let mut worst = 0.0_f64;
    for model in [ModelKind::LinearSVM, ModelKind::Mlp] {
        let req = ExplainRequest {
            model,
            method: Method::Shap,
            match_id: None,
            all: true,
            reduced_features: None,
        };
        let ExplainOutcome::ShapAll { explanations, .. } =
            cmd_explain(&run, &req).map_err(|e| e.to_string())?
        else {
            return Err("unexpected outcome".into());
        };
        for e in &explanations {
            worst = worst.max(e.attribution.additivity_gap());
            // The emitted file, with its rounding, must reconstruct too.
            let path = dir.path().join(format!(
                "explanations/shap_{}_{}.json",
                model.slug(),
                e.attribution.match_id
            ));
            let json: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(&path).map_err(|e| e.to_string())?)
                    .map_err(|e| e.to_string())?;
            let total = json["base_value"].as_f64().unwrap()
                + json["phi"]
                    .as_object()
                    .unwrap()
                    .values()
                    .map(|v| v.as_f64().unwrap())
                    .sum::<f64>();
            worst = worst.max((total - json["predicted"].as_f64().unwrap()).abs());
        }
        checked += explanations.len();
    }
    ensure(checked >= 200, || format!("only {checked} explanations"))?;
    ensure(worst <= 1e-3, || format!("additivity gap {worst:e}"))?;
    Ok(format!(
        "{checked} attributions (svm + mlp), max gap {worst:.1e}"
    ))
}

fn faithfulness_identity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let w: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f = move |x: &[f64]| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let background = normal_rows(&mut rng, 20, 8);
        let x = normal_rows(&mut rng, 1, 8).remove(0);
        let attr =
            exact_shapley(&f, &x, &background, DEFAULT_EXACT_BUDGET).map_err(|e| e.to_string())?;
        let fa =
            faithfulness(&f, &x, &attr, &column_means(&background)).map_err(|e| e.to_string())?;
        worst = worst.max((fa.value - 1.0).abs());
    }
    ensure(worst <= 1e-10, || format!("faithfulness off by {worst:e}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    cmd_run(&RunConfig::default(), dir.path()).map_err(|e| e.to_string())?;
    let run = RunArtifacts::load(dir.path()).map_err(|e| e.to_string())?;
    let req = ExplainRequest {
        model: ModelKind::LinearSVM,
        method: Method::Shap,
        match_id: None,
        all: true,
        reduced_features: None,
    };
    let ExplainOutcome::ShapAll {
        mean_faithfulness, ..
    } = cmd_explain(&run, &req).map_err(|e| e.to_string())?
    else {
        return Err("unexpected outcome".into());
    };
    ensure((-1.0..=1.0).contains(&mean_faithfulness), || {
        format!("mean {mean_faithfulness}")
    })?;
    let summary = fs::read_to_string(dir.path().join("explanations/shap_svm_summary.json"))
        .map_err(|e| e.to_string())?;
    ensure(summary.contains("mean_faithfulness"), || {
        "summary lacks mean".into()
    })?;
    Ok(format!(
        "linear identity off by {worst:.1e}; CLI mean faithfulness (svm, -1..+1) {mean_faithfulness:.4}"
    ))
}

fn brcg_planted_rule() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..500)
        .map(|_| (0..10).map(|_| rng.random::<f64>()).collect())
        .collect();
    let labels: Vec<u8> = rows
        .iter()
        .map(|r| u8::from(r[3] > 0.5 && r[7] <= 0.2))
        .collect();
    let data = Dataset::unnamed(rows.clone(), labels.clone()).map_err(|e| e.to_string())?;
    let rules = train_brcg(&data, &BrcgConfig::default()).map_err(|e| e.to_string())?;
    let correct = rows
        .iter()
        .zip(&labels)
        .filter(|(r, y)| rules.predict(r) == **y)
        .count();
    ensure(correct == 500, || {
        format!("training accuracy {}/500", correct)
    })?;
    let text = rules.to_string();
    ensure(
        text.starts_with("Predict Y=1 if [") && text.ends_with("], else predict Y=0"),
        || text.clone(),
    )?;
    within(start, Duration::from_secs(30))?;
    Ok(format!("accuracy 1.0, \"{text}\", {:.2?}", start.elapsed()))
}

fn central_difference_check(f: impl Fn(&[f64]) -> (f64, Vec<f64>), params: &[f64]) -> f64 {
    let (_, grad) = f(params);
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for k in 0..params.len() {
        let mut p = params.to_vec();
        p[k] += h;
        let up = f(&p).0;
        p[k] -= 2.0 * h;
        let down = f(&p).0;
        let fd = (up - down) / (2.0 * h);
        let scale = fd.abs().max(grad[k].abs());
        let err = if scale < 1e-8 {
            (fd - grad[k]).abs()
        } else {
            (fd - grad[k]).abs() / scale
        };
        worst = worst.max(err);
    }
    worst
}

fn gradient_checks() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    let (mut lr_worst, mut mlp_worst) = (0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let d = rng.random_range(2..8);
        let n = rng.random_range(3..20);
        let rows = normal_rows(&mut rng, n, d);
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let params: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.0..1.0)).collect();
        lr_worst = lr_worst.max(central_difference_check(
            |p| logreg_loss_grad(p, &rows, &labels, 0.01),
            &params,
        ));
        let hidden = rng.random_range(1..6);
        let params: Vec<f64> = (0..mlp_param_count(d, hidden))
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        mlp_worst = mlp_worst.max(central_difference_check(
            |p| mlp_loss_grad(p, &rows, &labels, hidden),
            &params,
        ));
    }
    ensure(lr_worst <= 1e-4 && mlp_worst <= 1e-4, || {
        format!("relative errors logreg {lr_worst:e}, mlp {mlp_worst:e}")
    })?;
    Ok(format!(
        "20 instances each: max rel err logreg {lr_worst:.1e}, mlp {mlp_worst:.1e}"
    ))
}

fn pipeline_sanity() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let summary = cmd_run(&RunConfig::default(), dir.path()).map_err(|e| e.to_string())?;
    ensure(summary.reports.len() == 5, || {
        format!("{} reports", summary.reports.len())
    })?;
    for r in &summary.reports {
        ensure(r.accuracy > summary.majority_baseline, || {
            format!(
                "{} accuracy {:.4} <= baseline {:.4}",
                r.kind, r.accuracy, summary.majority_baseline
            )
        })?;
    }
    let table =
        fs::read_to_string(dir.path().join("reports/metrics.txt")).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = table.lines().collect();
    ensure(
        lines[0].split('|').map(str::trim).eq([
            "Models",
            "Type of Model",
            "Accuracy",
            "F1-Score",
            "AUC-ROC",
        ]),
        || lines[0].to_string(),
    )?;
    ensure(
        lines.len() == 7 && lines[2..].iter().all(|l| l.split('|').count() == 5),
        || table.clone(),
    )?;
    within(start, Duration::from_secs(120))?;
    let worst = summary
        .reports
        .iter()
        .map(|r| r.accuracy)
        .fold(1.0, f64::min);
    Ok(format!(
        "5 rows x 3 metrics, min accuracy {worst:.4} > baseline {:.4}, {:.2?}",
        summary.majority_baseline,
        start.elapsed()
    ))
}

fn protodash_properties() -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    for trial in 0..50 {
        let d = rng.random_range(2..10);
        let n = rng.random_range(10..60);
        let candidates = normal_rows(&mut rng, n, d);
        let planted = rng.random_range(0..n);
        let m = rng.random_range(1..=5.min(n));
        let gamma = rng.random_range(0.05..1.0);
        let sel = protodash(
            &candidates[planted],
            &candidates,
            &ProtoDashConfig::new(m, gamma),
        )
        .map_err(|e| e.to_string())?;
        ensure(sel.weights.iter().all(|w| *w >= 0.0), || {
            format!("trial {trial}: negative weight")
        })?;
        ensure(sel.indices[0] == planted, || {
            format!("trial {trial}: picked {} not {planted}", sel.indices[0])
        })?;
        ensure(
            sel.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-12),
            || format!("trial {trial}: objective {:?}", sel.objective_trace),
        )?;
    }
    Ok("50 instances: weights >= 0, planted row first, objective non-decreasing".into())
}

fn leakage_suite() -> Outcome {
    let matches = generate_synthetic_league(&LeagueConfig::default()).map_err(|e| e.to_string())?;
    let full = build_features(&matches, 0.2).map_err(|e| e.to_string())?;
    for cut in [1, 50, 133, 250, matches.len()] {
        let prefix = build_features(&matches[..cut], 0.2).map_err(|e| e.to_string())?;
        ensure(prefix[..] == full[..cut], || {
            format!("prefix {cut} differs")
        })?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let original = dir.path().join("original.csv");
    write_matches_csv(
        fs::File::create(&original).map_err(|e| e.to_string())?,
        &matches,
    )
    .map_err(|e| e.to_string())?;
    let mut scrambled = parse_matches_csv(&original).map_err(|e| e.to_string())?;
    let n = scrambled.len();
    let n_test = (n as f64 * 0.2).ceil() as usize;
    let mut flip = StdRng::seed_from_u64(9);
    for m in &mut scrambled[n - n_test..] {
        if flip.random::<bool>() {
            std::mem::swap(&mut m.home_sets, &mut m.away_sets);
            std::mem::swap(&mut m.home_points, &mut m.away_points);
        }
    }
    let scrambled_path = dir.path().join("scrambled.csv");
    write_matches_csv(
        fs::File::create(&scrambled_path).map_err(|e| e.to_string())?,
        &scrambled,
    )
    .map_err(|e| e.to_string())?;
    for (input, out) in [(&original, "a"), (&scrambled_path, "b")] {
        let cfg = RunConfig {
            input: Some(input.clone()),
            ..RunConfig::default()
        };
        cmd_run(&cfg, &dir.path().join(out)).map_err(|e| e.to_string())?;
    }
    for kind in ModelKind::ALL {
        let file = format!("models/{}.json", kind.slug());
        let a = fs::read(dir.path().join("a").join(&file)).map_err(|e| e.to_string())?;
        let b = fs::read(dir.path().join("b").join(&file)).map_err(|e| e.to_string())?;
        ensure(a == b, || {
            format!("{file} changed when test labels were shuffled")
        })?;
    }
    Ok(format!(
        "prefix replay equal at 5 cuts; 5 models identical with {n_test} test results shuffled"
    ))
}

fn metric_oracles() -> Outcome {
    let mut rng = StdRng::seed_from_u64(10);
    let mut auc_worst = 0.0_f64;
    let mut auc_cases = 0;
    for case in 0..1000 {
        let n = rng.random_range(1..25);
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let preds: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0..6u8)) / 5.0)
            .collect();

        let (mut tp, mut fp, mut fn_, mut tn) = (0u32, 0u32, 0u32, 0u32);
        for (p, y) in preds.iter().zip(&labels) {
            match (p, y) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 1) => fn_ += 1,
                _ => tn += 1,
            }
        }
        let acc_oracle = f64::from(tp + tn) / n as f64;
        let f1_oracle = if tp == 0 {
            0.0
        } else {
            f64::from(2 * tp) / f64::from(2 * tp + fp + fn_)
        };
        let acc = accuracy(&preds, &labels).map_err(|e| e.to_string())?;
        let f = f1(&preds, &labels, 1).map_err(|e| e.to_string())?;
        ensure(acc == acc_oracle && f == f1_oracle, || {
            format!("case {case}: {acc} / {f}")
        })?;

        if labels.contains(&0) && labels.contains(&1) {
            let (mut wins, mut pairs) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    if labels[i] == 1 && labels[j] == 0 {
                        pairs += 1.0;
                        wins += if scores[i] > scores[j] {
                            1.0
                        } else if scores[i] == scores[j] {
                            0.5
                        } else {
                            0.0
                        };
                    }
                }
            }
            let auc = auc_roc(&scores, &labels).map_err(|e| e.to_string())?;
            auc_worst = auc_worst.max((auc - wins / pairs).abs());
            auc_cases += 1;
        }
    }
    ensure(auc_worst <= 1e-12, || format!("AUC off by {auc_worst:e}"))?;
    Ok(format!(
        "1000 cases exact for accuracy/F1; {auc_cases} AUC cases, max error {auc_worst:.1e}"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Shapley oracle equivalence", shapley_oracle_equivalence),
        ("Linear closed form", linear_closed_form),
        ("Additivity", additivity_over_many_matches),
        ("Faithfulness identity", faithfulness_identity),
        ("BRCG planted-rule recovery", brcg_planted_rule),
        ("Gradient checks", gradient_checks),
        ("Pipeline sanity", pipeline_sanity),
        ("ProtoDash", protodash_properties),
        ("Leakage suite", leakage_suite),
        ("Metric oracles", metric_oracles),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL  {:>2}. {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}

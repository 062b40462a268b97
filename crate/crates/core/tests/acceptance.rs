//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`. Criterion 6 uses the official
//! train file when `HATEFUSE_DATA_ROOT` holds one and the synthetic fixture
//! with the published counts otherwise.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hatefuse::autograd::{softmax_rows, Graph, Matrix, ParamStore};
use hatefuse::data::{
    preprocess, write_split, DataFormat, DatasetSplit, LabelSchema, PerTask, SchemaSet, SplitName, TaskId,
};
use hatefuse::encoder::{BackboneResolver, EncoderConfig};
use hatefuse::ensemble::{argmax_labels, soft_vote, weighted_vote, PredictionMatrix};
use hatefuse::evaluation::{micro_f1, ConfusionMatrix};
use hatefuse::model::{
    cross_entropy, mtl_loss, predict_proba, train, Head, LossWeights, ModelConfig, MultitaskPrediction, TrainingConfig,
};
use hatefuse::pipeline::{
    cmd_evaluate, cmd_fuse, cmd_predict, cmd_prepare, cmd_train, FuseOptions, PredictRequest, Predictor, RunConfig,
};
use hatefuse::synthetic::{marginal_split, noisy_ensemble, separable_split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn random_members(rng: &mut ChaCha8Rng, n: usize, c: usize, k: usize) -> Vec<PredictionMatrix> {
    let labels: Vec<String> = (0..c).map(|i| format!("L{i}")).collect();
    let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    (0..k)
        .map(|m| {
            let logits = Matrix::from_shape_fn((n, c), |_| rng.random_range(-4.0..4.0));
            PredictionMatrix::new(
                format!("m{m}"),
                TaskId::Type,
                labels.clone(),
                softmax_rows(&logits),
                ids.clone(),
            )
            .unwrap()
        })
        .collect()
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn fusion_algebra() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..100 {
        let n = rng.random_range(1..=30);
        let c = rng.random_range(2..=6);
        let m = random_members(&mut rng, n, c, 3);

        let soft = soft_vote(&m).map_err(|e| e.to_string())?;
        let uniform = weighted_vote(&m, &[1.0 / 3.0; 3]).map_err(|e| e.to_string())?;
        let d = max_abs_diff(&soft.probs, &uniform.probs);
        ensure!(d <= 1e-9, "trial {trial}: uniform weights differ from soft vote by {d}");

        let first = weighted_vote(&m, &[1.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
        ensure!(
            first.probs == m[0].probs,
            "trial {trial}: weights (1,0,0) do not reproduce member 1"
        );

        let w = [0.5, 0.3, 0.2];
        let fused = weighted_vote(&m, &w).map_err(|e| e.to_string())?;
        let perm = [2, 0, 1];
        let pm: Vec<PredictionMatrix> = perm.iter().map(|&i| m[i].clone()).collect();
        let pw: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
        let again = weighted_vote(&pm, &pw).map_err(|e| e.to_string())?;
        let d = max_abs_diff(&fused.probs, &again.probs);
        ensure!(
            d <= 1e-12,
            "trial {trial}: member permutation changed the fused matrix by {d}"
        );
        let d = max_abs_diff(&soft.probs, &soft_vote(&pm).map_err(|e| e.to_string())?.probs);
        ensure!(
            d <= 1e-12,
            "trial {trial}: member permutation changed the soft vote by {d}"
        );

        // Reversing the samples reverses the fused rows.
        let rev: Vec<PredictionMatrix> = m
            .iter()
            .map(|x| {
                let probs = Matrix::from_shape_fn((n, c), |(i, j)| x.probs[(n - 1 - i, j)]);
                let ids = x.sample_ids.iter().rev().cloned().collect();
                PredictionMatrix::new(x.model_id.clone(), x.task, x.labels.clone(), probs, ids).unwrap()
            })
            .collect();
        let fr = weighted_vote(&rev, &w).map_err(|e| e.to_string())?;
        for i in 0..n {
            for j in 0..c {
                ensure!(
                    (fr.probs[(i, j)] - fused.probs[(n - 1 - i, j)]).abs() <= 1e-12,
                    "trial {trial}: row permutation is not equivariant"
                );
            }
        }
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(5), "took {t:?}");
    Ok(format!("100 fixtures in {:.2} s", t.as_secs_f64()))
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..500 {
        let n = rng.random_range(1..=20);
        let c = rng.random_range(2..=6);
        let labels: Vec<String> = (0..c).map(|i| format!("c{i}")).collect();
        let schema = LabelSchema::new(TaskId::Type, labels.clone()).unwrap();
        let gold: Vec<String> = (0..n).map(|_| labels[rng.random_range(0..c)].clone()).collect();
        let pred: Vec<String> = (0..n).map(|_| labels[rng.random_range(0..c)].clone()).collect();

        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for l in &labels {
            for (p, g) in pred.iter().zip(&gold) {
                tp += u64::from(p == l && g == l);
                fp += u64::from(p == l && g != l);
                fn_ += u64::from(p != l && g == l);
            }
        }
        let oracle = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        let f1 = micro_f1(&pred, &gold, &schema).map_err(|e| e.to_string())?;
        ensure!(f1 == oracle, "trial {trial}: micro_f1 {f1} vs tally {oracle}");

        let cm = ConfusionMatrix::new(&pred, &gold, &schema).map_err(|e| e.to_string())?;
        let ratio = cm.trace() as f64 / n as f64;
        ensure!(ratio == f1, "trial {trial}: trace/N {ratio} vs micro_f1 {f1}");
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(10), "took {t:?}");
    Ok(format!("500 instances in {:.2} s", t.as_secs_f64()))
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<Vec<f64>> {
    let logits = Matrix::from_shape_fn((n, c), |_| rng.random_range(-3.0..3.0));
    softmax_rows(&logits).rows().into_iter().map(|r| r.to_vec()).collect()
}

fn loss_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let schemas = SchemaSet::standard();
    let sizes = PerTask::from_fn(|t| schemas.get(t).len());

    // Linearity in the loss weights.
    let n = 12;
    let mut per_task = PerTask::from_fn(|t| random_rows(&mut rng, n, sizes[t]));
    let preds: Vec<MultitaskPrediction> = (0..n)
        .map(|i| MultitaskPrediction {
            type_probs: per_task.type_[i].clone(),
            severity_probs: per_task.severity[i].clone(),
            target_probs: per_task.target[i].clone(),
        })
        .collect();
    let gold: Vec<PerTask<Option<usize>>> = (0..n)
        .map(|_| PerTask::from_fn(|t| Some(rng.random_range(0..sizes[t]))))
        .collect();
    let loss = |a, b, g| mtl_loss(&preds, &gold, &LossWeights::new(a, b, g).unwrap()).unwrap();
    let basis = [loss(1.0, 0.0, 0.0), loss(0.0, 1.0, 0.0), loss(0.0, 0.0, 1.0)];
    for _ in 0..50 {
        let w: [f64; 3] = [
            rng.random_range(0.0..3.0),
            rng.random_range(0.0..3.0),
            rng.random_range(0.0..3.0),
        ];
        let direct = loss(w[0], w[1], w[2]);
        let combined: f64 = w.iter().zip(&basis).map(|(a, b)| a * b).sum();
        ensure!((direct - combined).abs() <= 1e-6, "linearity: {direct} vs {combined}");
    }

    // Uniform predictions cost ln C per task.
    for task in TaskId::ALL {
        let c = sizes[task];
        per_task[task] = vec![vec![1.0 / c as f64; c]; n];
        let rows: Vec<&[f64]> = per_task[task].iter().map(Vec::as_slice).collect();
        let labels: Vec<usize> = gold.iter().map(|g| g[task].unwrap()).collect();
        let ce = cross_entropy(&rows, &labels).unwrap();
        ensure!(
            (ce - (c as f64).ln()).abs() <= 1e-6,
            "{task}: uniform CE {ce} vs ln {c}"
        );
    }

    // Head gradient: autograd against central differences.
    let (hidden, batch) = (7, 9);
    let mut params = ParamStore::new();
    let head = Head::seeded(schemas.get(TaskId::Target), hidden, 0.5, 11, &mut params);
    let x = Matrix::from_shape_fn((batch, hidden), |_| rng.random_range(-1.0..1.0));
    let y: Vec<usize> = (0..batch).map(|_| rng.random_range(0..sizes.target)).collect();
    let eval = |p: &ParamStore| {
        let mut g = Graph::new(p);
        let xv = g.constant(x.clone());
        let logits = head.logits(&mut g, xv);
        let l = g.cross_entropy(logits, &y);
        g.scalar(l)
    };
    let grads = {
        let mut g = Graph::new(&params);
        let xv = g.constant(x.clone());
        let logits = head.logits(&mut g, xv);
        let l = g.cross_entropy(logits, &y);
        g.backward(l)
    };
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    for id in [head.weight_id(), head.bias_id()] {
        let analytic = grads.get(id).expect("head parameter has a gradient").clone();
        for idx in 0..analytic.len() {
            let (r, c) = (idx / analytic.ncols(), idx % analytic.ncols());
            let orig = params.get(id)[(r, c)];
            params.get_mut(id)[(r, c)] = orig + eps;
            let up = eval(&params);
            params.get_mut(id)[(r, c)] = orig - eps;
            let down = eval(&params);
            params.get_mut(id)[(r, c)] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[(r, c)];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            ensure!(rel <= 1e-3, "gradient {idx}: analytic {a} vs numeric {numeric}");
            worst = worst.max(rel);
        }
    }
    Ok(format!("worst relative gradient error {worst:.2e}"))
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let split = separable_split(200, 4);
    let training = TrainingConfig {
        learning_rate: 0.05,
        epochs: 20,
        ..TrainingConfig::default()
    };
    let config = ModelConfig::multitask("toy", EncoderConfig::toy(256), LossWeights::default(), training);
    let (model, _) = train(&split, &config, &BackboneResolver::default()).map_err(|e| e.to_string())?;
    let mut scores = Vec::new();
    for m in predict_proba(&model, &split).map_err(|e| e.to_string())? {
        let gold = split.gold_labels(m.task).unwrap();
        let f1 = micro_f1(&argmax_labels(&m), &gold, SchemaSet::standard().get(m.task)).unwrap();
        ensure!(f1 >= 0.99, "{}: micro-F1 {f1}", m.task);
        scores.push(format!("{} {f1:.3}", m.task));
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(60), "took {t:?}");
    Ok(format!("{} in {:.1} s", scores.join(", "), t.as_secs_f64()))
}

fn ensemble_beats_members() -> Outcome {
    let schema = SchemaSet::standard().get(TaskId::Type).clone();
    let mut wins = 0;
    for trial in 0..100 {
        let e = noisy_ensemble(200, 3, 0.2, 1000 + trial);
        let score = |m: &PredictionMatrix| micro_f1(&argmax_labels(m), &e.gold, &schema).unwrap();
        let best = e.members.iter().map(score).fold(0.0, f64::max);
        let fused = score(&soft_vote(&e.members).map_err(|e| e.to_string())?);
        wins += usize::from(fused >= best);
    }
    ensure!(
        wins >= 80,
        "soft vote matched the best member in only {wins} of 100 trials"
    );
    Ok(format!("{wins} of 100 trials"))
}

/// Train-split counts from the published label table.
const TABLE: &[(TaskId, &str, usize)] = &[
    (TaskId::Type, "None", 19_954),
    (TaskId::Type, "Abusive", 8_212),
    (TaskId::Type, "Political Hate", 4_227),
    (TaskId::Type, "Profane", 2_331),
    (TaskId::Type, "Religious Hate", 676),
    (TaskId::Type, "Sexism", 122),
    (TaskId::Severity, "Little to None", 23_489),
    (TaskId::Severity, "Mild", 6_853),
    (TaskId::Severity, "Severe", 5_180),
    (TaskId::Target, "None", 21_190),
    (TaskId::Target, "Individual", 5_646),
    (TaskId::Target, "Organization", 3_846),
    (TaskId::Target, "Community", 2_635),
    (TaskId::Target, "Society", 2_205),
];

fn official_train_file() -> Option<PathBuf> {
    let root = PathBuf::from(std::env::var_os(hatefuse::pipeline::DATA_ROOT_ENV)?);
    ["train.tsv", "train.jsonl", "blp25_hatespeech_subtask_1C_train.tsv"]
        .iter()
        .map(|n| root.join(n))
        .find(|p| p.is_file())
}

fn data_fidelity() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (train_file, source) = match official_train_file() {
        Some(p) => (p, "official train file"),
        None => {
            let p = tmp.path().join("train.tsv");
            write_split(&marginal_split(SplitName::Train, 6), &p, DataFormat::Tsv).unwrap();
            (p, "synthetic fixture")
        }
    };
    let mut cfg = RunConfig {
        out_dir: tmp.path().join("out"),
        ..RunConfig::default()
    };
    cfg.data.train = Some(train_file);
    let summary = cmd_prepare(&cfg).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&summary.table).unwrap();
    let mut counts = BTreeMap::new();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        counts.insert((f[1].to_string(), f[2].to_string()), f[3].parse::<usize>().unwrap());
    }
    for &(task, label, expected) in TABLE {
        let got = counts.get(&(task.to_string(), label.to_string())).copied();
        ensure!(got == Some(expected), "{task}/{label}: {got:?}, expected {expected}");
    }
    for task in TaskId::ALL {
        let total = counts.get(&(task.to_string(), "TOTAL".to_string())).copied();
        ensure!(total == Some(35_522), "{task} total {total:?}");
    }
    Ok(format!("{} counts match on the {source}", TABLE.len()))
}

fn preprocessing() -> Outcome {
    let mut swept = 0usize;
    for c in (0..=0x10FFFFu32).filter_map(char::from_u32) {
        let s = c.to_string();
        let out = preprocess(&s);
        let digit = ('\u{09E6}'..='\u{09EF}').contains(&c);
        ensure!(out.is_empty() == digit, "U+{:04X}: {out:?}", c as u32);
        ensure!(digit || out == s, "U+{:04X} altered", c as u32);
        ensure!(preprocess(&out) == out, "U+{:04X} not idempotent", c as u32);
        swept += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let len = rng.random_range(0..60);
        let s: String = (0..len)
            .map(|_| loop {
                let cp = if rng.random_bool(0.5) {
                    rng.random_range(0x0980..0x0A00)
                } else {
                    rng.random_range(0..0x110000)
                };
                if let Some(c) = char::from_u32(cp) {
                    break c;
                }
            })
            .collect();
        let out = preprocess(&s);
        let oracle: String = s.chars().filter(|c| !('০'..='৯').contains(c)).collect();
        ensure!(out == oracle, "string {i} differs from the filter oracle");
        ensure!(preprocess(&out) == out, "string {i} not idempotent");
    }
    Ok(format!("{swept} code points and 1000 random strings"))
}

fn pipeline_once(root: &Path, data: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let err = |e: hatefuse::Error| e.to_string();
    let mut cfg = RunConfig {
        out_dir: root.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.data.train = Some(data.join("train.tsv"));
    cfg.data.test = Some(data.join("test.tsv"));
    cfg.training.learning_rate = 0.05;
    cfg.training.epochs = 4;
    cfg.training.seed = 17;
    cmd_prepare(&cfg).map_err(err)?;
    let mut files = Vec::new();
    for id in ["toy-a", "toy-b"] {
        cfg.model.id = Some(id.into());
        cfg.training.seed += 1;
        let t = cmd_train(&cfg).map_err(err)?;
        let req = PredictRequest {
            predictor: Predictor::Model(t.model_dir),
            split: SplitName::Test,
            input: None,
            expected_fingerprint: None,
        };
        files.extend(cmd_predict(&cfg, &req).map_err(err)?);
    }
    let fused = cmd_fuse(&cfg, &files, &FuseOptions::default()).map_err(err)?;
    let eval = cmd_evaluate(&cfg, &fused, SplitName::Test, None).map_err(err)?;
    let mut out = Vec::new();
    for p in files.iter().chain(&fused).chain([&eval.dir.join("metrics.json")]) {
        let rel = p.strip_prefix(root).unwrap().display().to_string();
        out.push((rel, std::fs::read(p).unwrap()));
    }
    Ok(out)
}

fn pipeline_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    write_split(&separable_split(120, 8), &data.join("train.tsv"), DataFormat::Tsv).unwrap();
    let test = separable_split(40, 9);
    let test = DatasetSplit::new(SplitName::Test, test.samples, &SchemaSet::standard()).unwrap();
    write_split(&test, &data.join("test.tsv"), DataFormat::Tsv).unwrap();

    let a = pipeline_once(&tmp.path().join("run1"), &data)?;
    let b = pipeline_once(&tmp.path().join("run2"), &data)?;
    ensure!(a.len() == b.len(), "runs wrote different file sets");
    for ((pa, ba), (pb, bb)) in a.iter().zip(&b) {
        ensure!(pa == pb, "file {pa} vs {pb}");
        ensure!(ba == bb, "{pa} differs between runs");
    }
    Ok(format!("{} files byte-identical", a.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("fusion algebra", fusion_algebra),
        ("metric oracles", metric_oracles),
        ("loss suite", loss_suite),
        ("overfit sanity", overfit),
        ("ensemble beats members", ensemble_beats_members),
        ("data fidelity", data_fidelity),
        ("preprocessing", preprocessing),
        ("pipeline determinism", pipeline_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {}. {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

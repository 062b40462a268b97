//! Generated datasets and prediction fixtures for tests, examples and smoke
//! runs.
//!
//! * [`marginal_split`]: a split whose per-task label counts equal the
//!   published counts of the shared-task data ([`published_counts`]), with
//!   labels of different tasks paired at random.
//! * [`separable_split`]: each task's label is spelled out by a keyword in
//!   the text, so a bag-of-n-grams classifier can fit it exactly.
//! * [`noisy_ensemble`]: three members that agree with gold except for
//!   independent label noise on their logits.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{softmax_rows, Matrix};
use crate::data::{DatasetSplit, PerTask, Sample, SchemaSet, SplitName, TaskId, TYPE_LABELS};
use crate::ensemble::PredictionMatrix;

const TRAIN_COUNTS: PerTask<&[(&str, usize)]> = PerTask {
    type_: &[
        ("None", 19_954),
        ("Abusive", 8_212),
        ("Political Hate", 4_227),
        ("Profane", 2_331),
        ("Religious Hate", 676),
        ("Sexism", 122),
    ],
    severity: &[("Little to None", 23_489), ("Mild", 6_853), ("Severe", 5_180)],
    target: &[
        ("None", 21_190),
        ("Individual", 5_646),
        ("Organization", 3_846),
        ("Community", 2_635),
        ("Society", 2_205),
    ],
};

const DEV_COUNTS: PerTask<&[(&str, usize)]> = PerTask {
    type_: &[
        ("None", 1_447),
        ("Abusive", 549),
        ("Political Hate", 283),
        ("Profane", 185),
        ("Religious Hate", 40),
        ("Sexism", 8),
    ],
    severity: &[("Little to None", 1_714), ("Mild", 426), ("Severe", 372)],
    target: &[
        ("None", 1_528),
        ("Individual", 391),
        ("Organization", 292),
        ("Community", 159),
        ("Society", 142),
    ],
};

const TEST_COUNTS: PerTask<&[(&str, usize)]> = PerTask {
    type_: &[
        ("None", 5_751),
        ("Abusive", 2_312),
        ("Political Hate", 1_220),
        ("Profane", 709),
        ("Religious Hate", 179),
        ("Sexism", 29),
    ],
    severity: &[("Little to None", 6_737), ("Mild", 2_001), ("Severe", 1_462)],
    target: &[
        ("None", 6_093),
        ("Individual", 1_571),
        ("Organization", 1_152),
        ("Community", 759),
        ("Society", 625),
    ],
};

/// Published per-label counts of the shared-task splits.
pub fn published_counts(split: SplitName) -> PerTask<&'static [(&'static str, usize)]> {
    match split {
        SplitName::Train => TRAIN_COUNTS,
        SplitName::Dev => DEV_COUNTS,
        SplitName::Test => TEST_COUNTS,
    }
}

const FILLER: [&str; 16] = [
    "আজ",
    "কাল",
    "খবর",
    "দেখো",
    "এই",
    "সেই",
    "মানুষ",
    "কথা",
    "ভাই",
    "বলে",
    "আর",
    "কেন",
    "খুব",
    "ভালো",
    "নতুন",
    "পুরনো",
];

fn filler_text(rng: &mut ChaCha8Rng, words: usize) -> Vec<&'static str> {
    (0..words).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect()
}

/// A split with exactly the published label counts for every task. Texts
/// are random filler and carry no signal.
pub fn marginal_split(split: SplitName, seed: u64) -> DatasetSplit {
    let counts = published_counts(split);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns = PerTask::from_fn(|task| {
        let mut col: Vec<&str> = counts[task]
            .iter()
            .flat_map(|&(label, n)| std::iter::repeat_n(label, n))
            .collect();
        col.shuffle(&mut rng);
        col
    });
    let n = columns.type_.len();
    assert!(
        columns.severity.len() == n && columns.target.len() == n,
        "task totals differ"
    );
    let samples = (0..n)
        .map(|i| {
            let words = rng.random_range(3..9);
            let mut s = Sample::new(
                format!("{}-{i}", split.as_str()),
                filler_text(&mut rng, words).join(" "),
            );
            for task in TaskId::ALL {
                s = s.with_label(task, columns[task][i]);
            }
            s
        })
        .collect();
    DatasetSplit::new(split, samples, &SchemaSet::standard()).expect("generated labels are in schema")
}

/// Keyword spelling out each label; indices follow the standard schemas.
pub const KEYWORDS: PerTask<&[&str]> = PerTask {
    type_: &["শান্তি", "গালাগালি", "রাজনীতি", "অশ্লীল", "ধর্মীয়", "নারীবিদ্বেষ"],
    severity: &["সামান্য", "মাঝারি", "তীব্র"],
    target: &["সাধারণ", "ব্যক্তি", "প্রতিষ্ঠান", "সম্প্রদায়", "সমাজ"],
};

/// `n` samples with uniformly drawn labels for all three tasks; the text
/// holds one keyword per task plus two filler words, in random order.
pub fn separable_split(n: usize, seed: u64) -> DatasetSplit {
    let schemas = SchemaSet::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            let picks = PerTask::from_fn(|task| rng.random_range(0..KEYWORDS[task].len()));
            let mut words = filler_text(&mut rng, 2);
            for task in TaskId::ALL {
                words.push(KEYWORDS[task][picks[task]]);
            }
            words.shuffle(&mut rng);
            let mut s = Sample::new(format!("s{i:04}"), words.join(" "));
            for task in TaskId::ALL {
                s = s.with_label(task, schemas.get(task).label(picks[task]));
            }
            s
        })
        .collect();
    DatasetSplit::new(SplitName::Train, samples, &schemas).expect("generated labels are in schema")
}

/// Gold labels and member predictions for one ensemble trial.
#[derive(Debug, Clone)]
pub struct NoisyEnsemble {
    pub gold: Vec<String>,
    pub members: Vec<PredictionMatrix>,
}

/// `n` samples over the six type labels. Each member's logits peak on the
/// gold label, except that with probability `noise` (independently per
/// member and sample) the peak moves to a random wrong label. Logits also
/// get standard normal jitter.
pub fn noisy_ensemble(n: usize, members: usize, noise: f64, seed: u64) -> NoisyEnsemble {
    const PEAK: f64 = 3.0;
    let c = TYPE_LABELS.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gold_idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let jitter = Normal::new(0.0, 1.0).expect("valid normal");
    let labels: Vec<String> = TYPE_LABELS.iter().map(|s| s.to_string()).collect();
    let ids: Vec<String> = (0..n).map(|i| format!("e{i:04}")).collect();
    let members = (0..members)
        .map(|m| {
            let mut logits = Matrix::from_shape_simple_fn((n, c), || jitter.sample(&mut rng));
            for (i, &g) in gold_idx.iter().enumerate() {
                let peak = if rng.random_bool(noise) {
                    (g + rng.random_range(1..c)) % c
                } else {
                    g
                };
                logits[(i, peak)] += PEAK;
            }
            PredictionMatrix::new(
                format!("member{}", m + 1),
                TaskId::Type,
                labels.clone(),
                softmax_rows(&logits),
                ids.clone(),
            )
            .expect("softmax rows are distributions")
        })
        .collect();
    NoisyEnsemble {
        gold: gold_idx.into_iter().map(|g| labels[g].clone()).collect(),
        members,
    }
}

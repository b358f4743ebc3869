//! Deterministic runs for tests, demos and benchmarks.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{build_run, parse_run_document, DocumentInstance, RunDocument, FORMAT_VERSION};
use crate::model::TrainingRun;

/// Builds a run from `(id, truth, predictions)` rows given as label indices.
pub fn run_from_rows(labels: &[&str], epochs: usize, rows: &[(&str, u32, &[u32])]) -> TrainingRun {
    let doc = RunDocument {
        version: FORMAT_VERSION,
        classes: labels.iter().map(|s| s.to_string()).collect(),
        epochs,
        metadata: BTreeMap::new(),
        instances: rows
            .iter()
            .map(|(id, truth, preds)| DocumentInstance {
                id: id.to_string(),
                label: labels[*truth as usize].to_string(),
                predictions: preds.to_vec(),
                image: None,
            })
            .collect(),
    };
    build_run(&doc).expect("fixture rows are well formed")
}

/// Four instances over classes A, B, C and three epochs:
///
/// | id | truth | predictions |
/// |----|-------|-------------|
/// | i1 | A     | A A A       |
/// | i2 | A     | B A A       |
/// | i3 | B     | B C B       |
/// | i4 | C     | A B C       |
pub fn worked_run() -> TrainingRun {
    let doc = parse_run_document(WORKED_RUN_DOCUMENT).expect("worked run document parses");
    build_run(&doc).expect("worked run is well formed")
}

/// Text form of [`worked_run`], predictions written as labels.
pub const WORKED_RUN_DOCUMENT: &str = r#"{
  "version": 1,
  "classes": ["A", "B", "C"],
  "epochs": 3,
  "metadata": {"dataset": "worked"},
  "instances": [
    {"id": "i1", "label": "A", "predictions": ["A", "A", "A"]},
    {"id": "i2", "label": "A", "predictions": ["B", "A", "A"]},
    {"id": "i3", "label": "B", "predictions": ["B", "C", "B"]},
    {"id": "i4", "label": "C", "predictions": ["A", "B", "C"]}
  ]
}
"#;

/// Every instance predicted correctly in every epoch.
pub fn always_correct_run(m: usize, n: usize, epochs: usize) -> TrainingRun {
    let labels: Vec<String> = (0..n).map(|c| format!("c{c}")).collect();
    let doc = RunDocument {
        version: FORMAT_VERSION,
        classes: labels.clone(),
        epochs,
        metadata: BTreeMap::new(),
        instances: (0..m)
            .map(|i| DocumentInstance {
                id: format!("i{i:04}"),
                label: labels[i % n].clone(),
                predictions: vec![(i % n) as u32; epochs],
                image: None,
            })
            .collect(),
    };
    build_run(&doc).expect("valid sizes")
}

/// Uniformly random truths and predictions, reproducible per seed.
///
/// Panics unless `m >= 1`, `n >= 2` and `epochs >= 1`.
pub fn random_run(seed: u64, m: usize, n: usize, epochs: usize) -> TrainingRun {
    build_run(&random_document(seed, m, n, epochs)).expect("random runs are well formed")
}

pub fn random_document(seed: u64, m: usize, n: usize, epochs: usize) -> RunDocument {
    assert!(m >= 1 && n >= 2 && epochs >= 1, "random_run bounds must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: Vec<String> = (0..n).map(|c| format!("c{c}")).collect();
    let instances = (0..m)
        .map(|i| {
            let truth = rng.random_range(0..n);
            DocumentInstance {
                id: format!("i{i:04}"),
                label: classes[truth].clone(),
                predictions: (0..epochs).map(|_| rng.random_range(0..n) as u32).collect(),
                image: None,
            }
        })
        .collect();
    let mut metadata = BTreeMap::new();
    metadata.insert("generator".into(), "random".into());
    metadata.insert("seed".into(), seed.into());
    RunDocument {
        version: FORMAT_VERSION,
        classes,
        epochs,
        metadata,
        instances,
    }
}

pub const CIFAR_LABELS: [&str; 10] = [
    "Airplane", "Auto", "Bird", "Cat", "Deer", "Dog", "Frog", "Horse", "Ship", "Truck",
];
pub const CIFAR_INSTANCES: usize = 60_000;
pub const CIFAR_EPOCHS: usize = 50;
pub const FLIP_COHORT_SIZE: usize = 300;
pub const RECOVERY_COHORT_SIZE: usize = 300;

const AUTO: u32 = 1;
const TRUCK: u32 = 9;
const CAT: u32 = 3;
const DOG: u32 = 5;

/// Synthetic CIFAR-10 scale run plus the ids of its planted cohorts.
pub struct CifarScenario {
    pub run: TrainingRun,
    /// Auto images correct early, then stably predicted as Truck.
    pub flip_cohort: Vec<String>,
    /// Auto images predicted as Truck early, then stably correct.
    pub recovery_cohort: Vec<String>,
}

pub fn cifar_scenario_run(seed: u64) -> TrainingRun {
    cifar_scenario(seed).run
}

pub fn cifar_scenario(seed: u64) -> CifarScenario {
    let (doc, flip, recovery) = cifar_document(seed);
    CifarScenario {
        run: build_run(&doc).expect("scenario run is well formed"),
        flip_cohort: flip,
        recovery_cohort: recovery,
    }
}

pub fn cifar_scenario_document(seed: u64) -> RunDocument {
    cifar_document(seed).0
}

fn confusion_partner(class: u32) -> Option<u32> {
    match class {
        AUTO => Some(TRUCK),
        TRUCK => Some(AUTO),
        CAT => Some(DOG),
        DOG => Some(CAT),
        _ => None,
    }
}

fn wrong_prediction(rng: &mut ChaCha8Rng, truth: u32, n: u32) -> u32 {
    if let Some(partner) = confusion_partner(truth) {
        if rng.random_bool(0.5) {
            return partner;
        }
    }
    let p = rng.random_range(0..n - 1);
    if p >= truth {
        p + 1
    } else {
        p
    }
}

fn cifar_document(seed: u64) -> (RunDocument, Vec<String>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = CIFAR_LABELS.len() as u32;
    let epochs = CIFAR_EPOCHS;
    let id = |i: usize| format!("img-{i:05}");

    // Auto images are the positions i with i % 10 == AUTO.
    let autos: Vec<usize> = (0..CIFAR_INSTANCES)
        .filter(|i| *i as u32 % n == AUTO)
        .collect();
    let picked = sample(&mut rng, autos.len(), FLIP_COHORT_SIZE + RECOVERY_COHORT_SIZE);
    let mut role = vec![0u8; CIFAR_INSTANCES];
    for (k, pos) in picked.iter().enumerate() {
        role[autos[pos]] = if k < FLIP_COHORT_SIZE { 1 } else { 2 };
    }

    let mut instances = Vec::with_capacity(CIFAR_INSTANCES);
    for i in 0..CIFAR_INSTANCES {
        let truth = i as u32 % n;
        let predictions: Vec<u32> = match role[i] {
            1 => {
                let switch = rng.random_range(5..=20);
                (0..epochs)
                    .map(|j| if j < switch { AUTO } else { TRUCK })
                    .collect()
            }
            2 => {
                let settle = rng.random_range(2..=8);
                (0..epochs)
                    .map(|j| if j < settle { TRUCK } else { AUTO })
                    .collect()
            }
            _ => {
                let learned_at = if rng.random_bool(0.003) {
                    epochs
                } else {
                    let mut l = 0;
                    while l < 40 && rng.random_bool(0.7) {
                        l += 1;
                    }
                    l
                };
                (0..epochs)
                    .map(|j| {
                        let p_correct = if j < learned_at { 0.35 } else { 0.97 };
                        if rng.random_bool(p_correct) {
                            truth
                        } else {
                            wrong_prediction(&mut rng, truth, n)
                        }
                    })
                    .collect()
            }
        };
        instances.push(DocumentInstance {
            id: id(i),
            label: CIFAR_LABELS[truth as usize].to_string(),
            predictions,
            image: None,
        });
    }

    let flip = (0..CIFAR_INSTANCES).filter(|&i| role[i] == 1).map(id).collect();
    let recovery = (0..CIFAR_INSTANCES).filter(|&i| role[i] == 2).map(id).collect();

    let mut metadata = BTreeMap::new();
    metadata.insert("dataset".into(), "cifar-10-synthetic".into());
    metadata.insert("split".into(), "train".into());
    metadata.insert("seed".into(), seed.into());
    let doc = RunDocument {
        version: FORMAT_VERSION,
        classes: CIFAR_LABELS.iter().map(|s| s.to_string()).collect(),
        epochs,
        metadata,
        instances,
    };
    (doc, flip, recovery)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_run_is_reproducible() {
        let a = random_run(7, 12, 4, 5);
        let b = random_run(7, 12, 4, 5);
        assert_eq!(a, b);
        let c = random_run(8, 12, 4, 5);
        assert_ne!(a.run_id(), c.run_id());
    }

    #[test]
    fn worked_document_matches_worked_run() {
        let doc = crate::ingest::parse_run_document(WORKED_RUN_DOCUMENT).unwrap();
        let run = build_run(&doc).unwrap();
        assert_eq!(run.instances(), worked_run().instances());
    }
}

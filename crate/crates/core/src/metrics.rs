//! Per-instance difficulty measures over a window of epochs.
//!
//! With `k` selected epochs, `n` classes, truth `C(i)` and prediction
//! `P(i, j)`:
//!
//! * misclassification `S(i) = #{j : P(i,j) != C(i)} / k`
//! * variability `V(i) = |{P(i,j)}| / n`
//! * frequency `F(i) = #{j < k : P(i,j) != P(i,j+1)} / (k - 1)`, and `0` when `k = 1`
//!
//! All three are kept as exact fractions so that ranking and equality
//! checks never depend on floating point rounding. Measures look at raw class
//! predictions only; a class selection never changes them.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::QueryError;
use crate::model::{ClassId, EpochRange, InstanceRecord, TrainingRun};

/// Exact non-negative fraction, serialized as a decimal number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(Ratio<u32>);

impl Fraction {
    pub const ZERO: Fraction = Fraction(Ratio::new_raw(0, 1));
    pub const ONE: Fraction = Fraction(Ratio::new_raw(1, 1));

    pub fn new(numer: u32, denom: u32) -> Self {
        Fraction(Ratio::new(numer, denom))
    }

    pub fn numer(self) -> u32 {
        *self.0.numer()
    }

    pub fn denom(self) -> u32 {
        *self.0.denom()
    }

    pub fn value(self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Fraction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

/// The three difficulty measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "S", alias = "misclassification")]
    Misclassification,
    #[serde(rename = "V", alias = "variability")]
    Variability,
    #[serde(rename = "F", alias = "frequency")]
    Frequency,
}

impl Measure {
    pub const ALL: [Measure; 3] = [
        Measure::Misclassification,
        Measure::Variability,
        Measure::Frequency,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Measure::Misclassification => "S",
            Measure::Variability => "V",
            Measure::Frequency => "F",
        }
    }
}

impl FromStr for Measure {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" | "s" | "misclassification" => Ok(Measure::Misclassification),
            "V" | "v" | "variability" => Ok(Measure::Variability),
            "F" | "f" | "frequency" => Ok(Measure::Frequency),
            other => Err(QueryError::UnknownAttribute(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ascending,
    #[default]
    Descending,
}

pub fn misclassification_score(
    _run: &TrainingRun,
    instance: &InstanceRecord,
    range: EpochRange,
) -> Fraction {
    let wrong = instance
        .window(range)
        .iter()
        .filter(|&&p| p != instance.true_class)
        .count();
    Fraction::new(wrong as u32, range.len() as u32)
}

pub fn variability(run: &TrainingRun, instance: &InstanceRecord, range: EpochRange) -> Fraction {
    let mut seen = vec![false; run.class_count()];
    let distinct = count_distinct(instance.window(range), &mut seen);
    Fraction::new(distinct as u32, run.class_count() as u32)
}

pub fn frequency(_run: &TrainingRun, instance: &InstanceRecord, range: EpochRange) -> Fraction {
    let k = range.len();
    if k == 1 {
        return Fraction::ZERO;
    }
    let jumps = instance
        .window(range)
        .windows(2)
        .filter(|w| w[0] != w[1])
        .count();
    Fraction::new(jumps as u32, (k - 1) as u32)
}

// `seen` must be all-false on entry and is left all-false.
fn count_distinct(window: &[ClassId], seen: &mut [bool]) -> usize {
    let mut distinct = 0;
    for p in window {
        if !std::mem::replace(&mut seen[p.index()], true) {
            distinct += 1;
        }
    }
    for p in window {
        seen[p.index()] = false;
    }
    distinct
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InstanceScores {
    #[serde(rename = "S")]
    pub misclassification: Fraction,
    #[serde(rename = "V")]
    pub variability: Fraction,
    #[serde(rename = "F")]
    pub frequency: Fraction,
}

impl InstanceScores {
    pub fn get(&self, measure: Measure) -> Fraction {
        match measure {
            Measure::Misclassification => self.misclassification,
            Measure::Variability => self.variability,
            Measure::Frequency => self.frequency,
        }
    }
}

/// S, V and F for every instance of a run, in run order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifficultyScores {
    range: EpochRange,
    scores: Vec<InstanceScores>,
}

impl DifficultyScores {
    pub fn range(&self) -> EpochRange {
        self.range
    }

    pub fn scores(&self) -> &[InstanceScores] {
        &self.scores
    }

    /// Scores of the instance at `position` in the run.
    pub fn at(&self, position: usize) -> &InstanceScores {
        &self.scores[position]
    }
}

pub fn score_all(run: &TrainingRun, range: EpochRange) -> DifficultyScores {
    let k = range.len() as u32;
    let n = run.class_count() as u32;
    let mut seen = vec![false; run.class_count()];
    let scores = run
        .instances()
        .iter()
        .map(|inst| {
            let window = inst.window(range);
            let mut wrong = 0u32;
            let mut jumps = 0u32;
            let mut prev = None;
            for &p in window {
                wrong += (p != inst.true_class) as u32;
                if let Some(q) = prev {
                    jumps += (p != q) as u32;
                }
                prev = Some(p);
            }
            let distinct = count_distinct(window, &mut seen) as u32;
            InstanceScores {
                misclassification: Fraction::new(wrong, k),
                variability: Fraction::new(distinct, n),
                frequency: if k == 1 {
                    Fraction::ZERO
                } else {
                    Fraction::new(jumps, k - 1)
                },
            }
        })
        .collect();
    DifficultyScores { range, scores }
}

/// One weighted term of a combined ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMeasure {
    pub measure: Measure,
    pub weight: f64,
    #[serde(default)]
    pub direction: Direction,
}

/// Combined ranking value per score row (higher ranks first).
///
/// Each measure is min-max normalized over `rows` (constant columns become
/// 0), flipped when its direction is ascending, and summed with the weights
/// rescaled to total 1.
pub fn combined_score(
    rows: &[InstanceScores],
    terms: &[WeightedMeasure],
) -> Result<Vec<f64>, QueryError> {
    if terms.is_empty() {
        return Err(QueryError::InvalidWeights("no weighted measures".into()));
    }
    if let Some(t) = terms.iter().find(|t| !(t.weight >= 0.0) || !t.weight.is_finite()) {
        return Err(QueryError::InvalidWeights(format!(
            "weight {} for {} is negative or not finite",
            t.weight,
            t.measure.symbol()
        )));
    }
    let total: f64 = terms.iter().map(|t| t.weight).sum();
    if total == 0.0 {
        return Err(QueryError::InvalidWeights("all weights are zero".into()));
    }

    let mut combined = vec![0.0; rows.len()];
    for term in terms {
        let w = term.weight / total;
        let (lo, hi) = match (
            rows.iter().map(|r| r.get(term.measure)).min(),
            rows.iter().map(|r| r.get(term.measure)).max(),
        ) {
            (Some(lo), Some(hi)) => (lo.value(), hi.value()),
            _ => return Ok(combined),
        };
        for (acc, row) in combined.iter_mut().zip(rows) {
            let norm = if hi > lo {
                (row.get(term.measure).value() - lo) / (hi - lo)
            } else {
                0.0
            };
            let oriented = match term.direction {
                Direction::Descending => norm,
                Direction::Ascending => 1.0 - norm,
            };
            *acc += w * oriented;
        }
    }
    Ok(combined)
}

/// Orders `ids` by descending combined value, ties by ascending id.
pub fn rank_by_combined<'a>(ids: &[&'a str], values: &[f64]) -> Vec<&'a str> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .total_cmp(&values[a])
            .then_with(|| ids[a].cmp(ids[b]))
    });
    order.into_iter().map(|i| ids[i]).collect()
}

/// Compares two fractions in the requested direction.
pub fn compare_directed(a: Fraction, b: Fraction, direction: Direction) -> Ordering {
    match direction {
        Direction::Ascending => a.cmp(&b),
        Direction::Descending => b.cmp(&a),
    }
}

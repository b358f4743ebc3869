//! The instance table: filter, sort, group and page rows of per-instance
//! attributes, or collapse them into per-class summaries.
//!
//! A query runs in a fixed order: all filters (conjunctive), then a stable
//! sort whose final tie-break is the instance id, then grouping and mode
//! shaping, then pagination.
//!
//! Regular expression filters match the *sequence string* of an instance:
//! its predicted class labels over the selected range joined by `,` with no
//! whitespace, e.g. `B,A,A`. Anchors therefore refer to the first and last
//! selected epoch.

use std::cmp::Ordering;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::QueryError;
use crate::metrics::{
    combined_score, compare_directed, score_all, DifficultyScores, Direction,
    InstanceScores, Measure, WeightedMeasure,
};
use crate::model::{ClassId, ClassSelection, EpochRange, InstanceRecord, TrainingRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Attribute {
    InstanceId,
    TrueClass,
    Measure(Measure),
    PredictionSequence,
    CorrectnessHistogram,
}

impl Attribute {
    pub fn parse(name: &str) -> Result<Self, QueryError> {
        Ok(match name {
            "instance_id" | "id" => Attribute::InstanceId,
            "true_class" | "label" => Attribute::TrueClass,
            "prediction_sequence" => Attribute::PredictionSequence,
            "correctness_histogram" => Attribute::CorrectnessHistogram,
            other => Attribute::Measure(other.parse()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    /// Inclusive bounds on S, V or F.
    NumericRange { attribute: String, lo: f64, hi: f64 },
    ClassEquals { attribute: String, class: String },
    SequenceRegex { pattern: String },
    /// Predicted as any of `classes` in at least one selected epoch.
    EverPredicted { classes: Vec<String> },
    /// Keeps instances whose "wrong at least once in range" equals `value`.
    HasIncorrect { value: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortKey {
    pub attribute: String,
    #[serde(default)]
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sort {
    /// Lexicographic over the keys.
    Keys(Vec<SortKey>),
    /// Descending weighted combination of normalized measures.
    Combined(Vec<WeightedMeasure>),
}

impl Default for Sort {
    fn default() -> Self {
        Sort::Keys(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableMode {
    #[default]
    Full,
    /// Same rows as `Full`; tells the renderer to use minimal row height.
    Condensed,
    GroupSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Page {
    #[serde(default)]
    pub offset: usize,
    /// `None` returns everything after `offset`.
    #[serde(default)]
    pub limit: Option<usize>,
}

/// A resolved table query against one run.
#[derive(Debug, Clone)]
pub struct TableSpec {
    pub range: EpochRange,
    pub sel: ClassSelection,
    pub sort: Sort,
    pub filters: Vec<Filter>,
    /// Adds `HasIncorrect { value: true }` unless `filters` already has a
    /// `HasIncorrect` filter.
    pub default_filter: bool,
    pub group_by: Option<String>,
    pub mode: TableMode,
    pub page: Page,
}

impl TableSpec {
    /// Full range, all classes, default filter on, no sort.
    pub fn new(run: &TrainingRun) -> Self {
        TableSpec {
            range: run.full_range(),
            sel: run.all_classes(),
            sort: Sort::default(),
            filters: Vec::new(),
            default_filter: true,
            group_by: None,
            mode: TableMode::Full,
            page: Page::default(),
        }
    }
}

/// Wire form of [`TableSpec`]: epochs are 1-based and classes are labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRequest {
    #[serde(default)]
    pub from: Option<usize>,
    #[serde(default)]
    pub to: Option<usize>,
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    #[serde(default)]
    pub sort: Sort,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default = "default_true")]
    pub default_filter: bool,
    #[serde(default)]
    pub group_by: Option<String>,
    #[serde(default)]
    pub mode: TableMode,
    #[serde(default, flatten)]
    pub page: Page,
}

fn default_true() -> bool {
    true
}

impl Default for TableRequest {
    fn default() -> Self {
        TableRequest {
            from: None,
            to: None,
            classes: None,
            sort: Sort::default(),
            filters: Vec::new(),
            default_filter: true,
            group_by: None,
            mode: TableMode::Full,
            page: Page::default(),
        }
    }
}

impl TableRequest {
    pub fn resolve(&self, run: &TrainingRun) -> Result<TableSpec, QueryError> {
        Ok(TableSpec {
            range: resolve_range(run, self.from, self.to)?,
            sel: resolve_selection(run, self.classes.as_deref())?,
            sort: self.sort.clone(),
            filters: self.filters.clone(),
            default_filter: self.default_filter,
            group_by: self.group_by.clone(),
            mode: self.mode,
            page: self.page,
        })
    }
}

/// Range from optional 1-based inclusive bounds (defaults: whole run).
pub fn resolve_range(
    run: &TrainingRun,
    from: Option<usize>,
    to: Option<usize>,
) -> Result<EpochRange, QueryError> {
    let first = from.unwrap_or(1);
    let last = to.unwrap_or(run.epoch_count());
    if first == 0 || last == 0 {
        return Err(QueryError::Validation(crate::ValidationError::InvalidRange {
            first,
            last,
            epochs: run.epoch_count(),
        }));
    }
    Ok(run.epoch_range(first - 1, last - 1)?)
}

/// Selection from class labels (defaults: all classes). The Other bin is
/// always present.
pub fn resolve_selection(
    run: &TrainingRun,
    labels: Option<&[String]>,
) -> Result<ClassSelection, QueryError> {
    match labels {
        None => Ok(run.all_classes()),
        Some(labels) => {
            let classes = labels
                .iter()
                .map(|l| class_of(run, l))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ClassSelection::new(classes, true, run.class_count())?)
        }
    }
}

fn class_of(run: &TrainingRun, label: &str) -> Result<ClassId, QueryError> {
    run.class_by_label(label)
        .ok_or_else(|| QueryError::UnknownClass(label.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    Correct,
    /// Wrong, but predicted as one of the selected classes.
    Incorrect,
    /// Wrong, predicted as a class outside the selection.
    Other,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CorrectnessHistogram {
    pub correct: u32,
    pub incorrect: u32,
    pub other: u32,
}

impl CorrectnessHistogram {
    fn add(&mut self, mark: Mark) {
        match mark {
            Mark::Correct => self.correct += 1,
            Mark::Incorrect => self.incorrect += 1,
            Mark::Other => self.other += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.correct + self.incorrect + self.other
    }
}

pub fn mark_of(inst: &InstanceRecord, epoch: usize, sel: &ClassSelection) -> Mark {
    let p = inst.predictions[epoch];
    if p == inst.true_class {
        Mark::Correct
    } else if sel.contains(p) {
        Mark::Incorrect
    } else {
        Mark::Other
    }
}

fn histogram_of(inst: &InstanceRecord, range: EpochRange, sel: &ClassSelection) -> CorrectnessHistogram {
    let mut h = CorrectnessHistogram::default();
    for e in range.epochs() {
        h.add(mark_of(inst, e, sel));
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub instance_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload_ref: Option<String>,
    pub true_class: ClassId,
    pub true_label: String,
    #[serde(flatten)]
    pub scores: InstanceScores,
    pub prediction_sequence: Vec<ClassId>,
    pub correctness_sequence: Vec<Mark>,
    pub correctness_histogram: CorrectnessHistogram,
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    /// `None` for an empty sample.
    pub fn from_values(values: &mut [f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        Some(BoxStats {
            min: values[0],
            q1: quantile(values, 0.25),
            median: quantile(values, 0.5),
            q3: quantile(values, 0.75),
            max: values[values.len() - 1],
        })
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSummaries {
    #[serde(rename = "S")]
    pub misclassification: BoxStats,
    #[serde(rename = "V")]
    pub variability: BoxStats,
    #[serde(rename = "F")]
    pub frequency: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub key: ClassId,
    pub label: String,
    pub size: usize,
    /// (instance, epoch) pairs predicted as each class, indexed by class.
    pub prediction_histogram: Vec<u64>,
    pub correctness_histogram: CorrectnessHistogram,
    pub summaries: MeasureSummaries,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TablePage {
    pub range: EpochRange,
    pub mode: TableMode,
    /// Rows passing all filters, before pagination.
    pub total: usize,
    pub total_groups: usize,
    pub offset: usize,
    pub rows: Vec<TableRow>,
    pub groups: Vec<GroupSummary>,
}

/// Labels of `inst`'s predictions over `range`, comma-joined.
pub fn sequence_string(run: &TrainingRun, inst: &InstanceRecord, range: EpochRange) -> String {
    let mut s = String::new();
    for (i, &p) in inst.window(range).iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(run.label(p));
    }
    s
}

fn compile(pattern: &str) -> Result<Regex, QueryError> {
    Regex::new(pattern).map_err(|e| QueryError::InvalidRegex(e.to_string()))
}

/// Ids (in run order) whose sequence string over `range` matches `pattern`.
pub fn filter_sequence_regex(
    run: &TrainingRun,
    range: EpochRange,
    pattern: &str,
) -> Result<Vec<String>, QueryError> {
    run.check_range(range)?;
    let re = compile(pattern)?;
    let mut buf = String::new();
    Ok(run
        .instances()
        .iter()
        .filter(|inst| {
            buf.clear();
            buf.push_str(&sequence_string(run, inst, range));
            re.is_match(&buf)
        })
        .map(|inst| inst.instance_id.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionSummary {
    pub range: EpochRange,
    pub labels: Vec<String>,
    /// `counts[truth][predicted]` summed over the epochs of the range.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionSummary {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Largest off-diagonal cell as `(truth, predicted, count)`; ties go to
    /// the first cell in row-major order.
    pub fn largest_off_diagonal(&self) -> Option<(ClassId, ClassId, u64)> {
        let mut best: Option<(ClassId, ClassId, u64)> = None;
        for (c, row) in self.counts.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                if c != p && best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((ClassId(c as u16), ClassId(p as u16), v));
                }
            }
        }
        best
    }
}

/// Epoch-summed confusion matrix over `range`.
pub fn confusion_summary(run: &TrainingRun, range: EpochRange) -> Result<ConfusionSummary, QueryError> {
    run.check_range(range)?;
    let n = run.class_count();
    let mut counts = vec![vec![0u64; n]; n];
    for inst in run.instances() {
        let row = &mut counts[inst.true_class.index()];
        for p in inst.window(range) {
            row[p.index()] += 1;
        }
    }
    Ok(ConfusionSummary {
        range,
        labels: run.class_labels().to_vec(),
        counts,
    })
}

enum Compiled {
    Numeric(Measure, f64, f64),
    TrueClass(ClassId),
    Regex(Regex),
    EverPredicted(Vec<bool>),
    HasIncorrect(bool),
}

fn compile_filters(run: &TrainingRun, spec: &TableSpec) -> Result<Vec<Compiled>, QueryError> {
    let mut out = Vec::with_capacity(spec.filters.len() + 1);
    for f in &spec.filters {
        out.push(match f {
            Filter::NumericRange { attribute, lo, hi } => match Attribute::parse(attribute)? {
                Attribute::Measure(m) => {
                    if !(lo <= hi) {
                        return Err(QueryError::InvalidSpec(format!(
                            "empty numeric range [{lo}, {hi}] on {attribute}"
                        )));
                    }
                    Compiled::Numeric(m, *lo, *hi)
                }
                _ => {
                    return Err(QueryError::InvalidSpec(format!(
                        "{attribute} is not a numeric attribute"
                    )))
                }
            },
            Filter::ClassEquals { attribute, class } => match Attribute::parse(attribute)? {
                Attribute::TrueClass => Compiled::TrueClass(class_of(run, class)?),
                _ => {
                    return Err(QueryError::InvalidSpec(format!(
                        "{attribute} is not a class attribute"
                    )))
                }
            },
            Filter::SequenceRegex { pattern } => Compiled::Regex(compile(pattern)?),
            Filter::EverPredicted { classes } => {
                let mut wanted = vec![false; run.class_count()];
                for label in classes {
                    wanted[class_of(run, label)?.index()] = true;
                }
                Compiled::EverPredicted(wanted)
            }
            Filter::HasIncorrect { value } => Compiled::HasIncorrect(*value),
        });
    }
    let explicit = spec
        .filters
        .iter()
        .any(|f| matches!(f, Filter::HasIncorrect { .. }));
    if spec.default_filter && !explicit {
        out.push(Compiled::HasIncorrect(true));
    }
    Ok(out)
}

fn passes(
    run: &TrainingRun,
    inst: &InstanceRecord,
    scores: &InstanceScores,
    range: EpochRange,
    filters: &[Compiled],
) -> bool {
    filters.iter().all(|f| match f {
        Compiled::Numeric(m, lo, hi) => {
            let v = scores.get(*m).value();
            *lo <= v && v <= *hi
        }
        Compiled::TrueClass(c) => inst.true_class == *c,
        Compiled::Regex(re) => re.is_match(&sequence_string(run, inst, range)),
        Compiled::EverPredicted(wanted) => inst.window(range).iter().any(|p| wanted[p.index()]),
        Compiled::HasIncorrect(value) => {
            inst.window(range).iter().any(|&p| p != inst.true_class) == *value
        }
    })
}

/// Positions (in run order) of instances passing every filter of `spec`.
pub fn filtered_positions(
    run: &TrainingRun,
    spec: &TableSpec,
    scores: &DifficultyScores,
) -> Result<Vec<usize>, QueryError> {
    let filters = compile_filters(run, spec)?;
    Ok((0..run.instance_count())
        .filter(|&pos| passes(run, &run.instances()[pos], scores.at(pos), spec.range, &filters))
        .collect())
}

fn group_key(name: &str) -> Result<(), QueryError> {
    match Attribute::parse(name)? {
        Attribute::TrueClass => Ok(()),
        _ => Err(QueryError::InvalidSpec(format!("cannot group by {name}"))),
    }
}

fn compare_by(
    attr: Attribute,
    dir: Direction,
    run: &TrainingRun,
    spec: &TableSpec,
    scores: &DifficultyScores,
    a: usize,
    b: usize,
) -> Ordering {
    let (ia, ib) = (&run.instances()[a], &run.instances()[b]);
    let ord = match attr {
        Attribute::Measure(m) => return compare_directed(scores.at(a).get(m), scores.at(b).get(m), dir),
        Attribute::InstanceId => ia.instance_id.cmp(&ib.instance_id),
        Attribute::TrueClass => ia.true_class.cmp(&ib.true_class),
        Attribute::PredictionSequence => ia.window(spec.range).cmp(ib.window(spec.range)),
        Attribute::CorrectnessHistogram => histogram_of(ia, spec.range, &spec.sel)
            .cmp(&histogram_of(ib, spec.range, &spec.sel)),
    };
    match dir {
        Direction::Ascending => ord,
        Direction::Descending => ord.reverse(),
    }
}

/// Filtered positions in final display order (before pagination).
pub fn ordered_positions(
    run: &TrainingRun,
    spec: &TableSpec,
    scores: &DifficultyScores,
) -> Result<Vec<usize>, QueryError> {
    let mut positions = filtered_positions(run, spec, scores)?;
    if let Some(g) = &spec.group_by {
        group_key(g)?;
    }
    let grouped = spec.group_by.is_some();
    let by_id = |a: usize, b: usize| run.instances()[a].instance_id.cmp(&run.instances()[b].instance_id);
    let by_group = |a: usize, b: usize| {
        if grouped {
            run.instances()[a].true_class.cmp(&run.instances()[b].true_class)
        } else {
            Ordering::Equal
        }
    };

    match &spec.sort {
        Sort::Keys(keys) => {
            let keys = keys
                .iter()
                .map(|k| Attribute::parse(&k.attribute).map(|a| (a, k.direction)))
                .collect::<Result<Vec<_>, _>>()?;
            positions.sort_by(|&a, &b| {
                keys.iter()
                    .fold(by_group(a, b), |acc, &(attr, dir)| {
                        acc.then_with(|| compare_by(attr, dir, run, spec, scores, a, b))
                    })
                    .then_with(|| by_id(a, b))
            });
        }
        Sort::Combined(terms) => {
            let rows: Vec<InstanceScores> = positions.iter().map(|&p| *scores.at(p)).collect();
            let values = combined_score(&rows, terms)?;
            let mut order: Vec<usize> = (0..positions.len()).collect();
            order.sort_by(|&x, &y| {
                let (a, b) = (positions[x], positions[y]);
                by_group(a, b)
                    .then(values[y].total_cmp(&values[x]))
                    .then_with(|| by_id(a, b))
            });
            positions = order.into_iter().map(|i| positions[i]).collect();
        }
    }
    Ok(positions)
}

fn build_row(run: &TrainingRun, spec: &TableSpec, scores: &DifficultyScores, pos: usize) -> TableRow {
    let inst = &run.instances()[pos];
    let marks: Vec<Mark> = spec.range.epochs().map(|e| mark_of(inst, e, &spec.sel)).collect();
    let mut hist = CorrectnessHistogram::default();
    for &m in &marks {
        hist.add(m);
    }
    TableRow {
        instance_id: inst.instance_id.clone(),
        payload_ref: inst.payload_ref.clone(),
        true_class: inst.true_class,
        true_label: run.label(inst.true_class).to_string(),
        scores: *scores.at(pos),
        prediction_sequence: inst.window(spec.range).to_vec(),
        correctness_sequence: marks,
        correctness_histogram: hist,
    }
}

fn summarize_groups(
    run: &TrainingRun,
    spec: &TableSpec,
    scores: &DifficultyScores,
    positions: &[usize],
) -> Vec<GroupSummary> {
    let n = run.class_count();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &p in positions {
        members[run.instances()[p].true_class.index()].push(p);
    }
    members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(c, m)| {
            let mut prediction_histogram = vec![0u64; n];
            let mut correctness = CorrectnessHistogram::default();
            for &p in &m {
                let inst = &run.instances()[p];
                for e in spec.range.epochs() {
                    prediction_histogram[inst.predictions[e].index()] += 1;
                    correctness.add(mark_of(inst, e, &spec.sel));
                }
            }
            let stats = |measure: Measure| {
                let mut v: Vec<f64> = m.iter().map(|&p| scores.at(p).get(measure).value()).collect();
                BoxStats::from_values(&mut v).expect("groups are non-empty")
            };
            let key = ClassId(c as u16);
            GroupSummary {
                key,
                label: run.label(key).to_string(),
                size: m.len(),
                prediction_histogram,
                correctness_histogram: correctness,
                summaries: MeasureSummaries {
                    misclassification: stats(Measure::Misclassification),
                    variability: stats(Measure::Variability),
                    frequency: stats(Measure::Frequency),
                },
            }
        })
        .collect()
}

fn paginate<T>(items: Vec<T>, page: Page) -> Vec<T> {
    let it = items.into_iter().skip(page.offset);
    match page.limit {
        Some(limit) => it.take(limit).collect(),
        None => it.collect(),
    }
}

pub fn query_table(run: &TrainingRun, spec: &TableSpec) -> Result<TablePage, QueryError> {
    run.check_range(spec.range)?;
    if spec.sel.class_count() != run.class_count() {
        return Err(QueryError::InvalidSpec(
            "class selection was built for a different run".into(),
        ));
    }
    let scores = score_all(run, spec.range);
    let positions = ordered_positions(run, spec, &scores)?;
    let total = positions.len();

    match spec.mode {
        TableMode::Full | TableMode::Condensed => {
            let page: Vec<usize> = paginate(positions, spec.page);
            Ok(TablePage {
                range: spec.range,
                mode: spec.mode,
                total,
                total_groups: 0,
                offset: spec.page.offset,
                rows: page.into_iter().map(|p| build_row(run, spec, &scores, p)).collect(),
                groups: Vec::new(),
            })
        }
        TableMode::GroupSummary => {
            if let Some(g) = &spec.group_by {
                group_key(g)?;
            }
            let groups = summarize_groups(run, spec, &scores, &positions);
            Ok(TablePage {
                range: spec.range,
                mode: spec.mode,
                total,
                total_groups: groups.len(),
                offset: spec.page.offset,
                rows: Vec::new(),
                groups: paginate(groups, spec.page),
            })
        }
    }
}

//! Immutable domain types shared by the analysis modules.
//!
//! A [`TrainingRun`] holds the ground truth class of every instance together
//! with the class predicted after each recorded epoch. Everything else in the
//! crate is a read-only view over a run: an [`EpochRange`] picks the epochs
//! under analysis and a [`ClassSelection`] decides which classes get their own
//! bin, with the rest folded into a trailing `Other` bin.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a class in the run's ordered label list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u16);

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u16> for ClassId {
    fn from(v: u16) -> Self {
        ClassId(v)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Largest class count a run may declare.
pub const MAX_CLASSES: usize = u16::MAX as usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("a run needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("a run may declare at most {MAX_CLASSES} classes, got {0}")]
    TooManyClasses(usize),
    #[error("a run needs at least one instance")]
    NoInstances,
    #[error("a run needs at least one epoch")]
    NoEpochs,
    #[error("class label at position {0} is empty")]
    EmptyLabel(usize),
    #[error("duplicate class label {0:?}")]
    DuplicateLabel(String),
    #[error("duplicate instance id {0:?}")]
    DuplicateInstance(String),
    #[error("instance {instance:?} has {found} predictions, expected {expected} (ragged row)")]
    RaggedRow {
        instance: String,
        expected: usize,
        found: usize,
    },
    #[error("instance {instance:?}: class index {index} out of range for {classes} classes")]
    ClassOutOfRange {
        instance: String,
        index: usize,
        classes: usize,
    },
    #[error("instance {instance:?}: unknown class label {label:?}")]
    UnknownLabel { instance: String, label: String },
    #[error("epoch range {first}..={last} invalid for a run with {epochs} epochs")]
    InvalidRange {
        first: usize,
        last: usize,
        epochs: usize,
    },
    #[error("class selection must not be empty")]
    EmptySelection,
    #[error("class {0} selected twice")]
    DuplicateSelection(ClassId),
    #[error("selected class {index} out of range for {classes} classes")]
    SelectionOutOfRange { index: usize, classes: usize },
    #[error("a partial class selection needs the Other bin")]
    OtherBinRequired,
}

/// One instance: its ground truth and the class predicted at every epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceRecord {
    pub instance_id: String,
    pub true_class: ClassId,
    pub predictions: Vec<ClassId>,
    /// Image URI or inline (base64) thumbnail; never needed for analysis.
    pub payload_ref: Option<String>,
}

impl InstanceRecord {
    /// Predictions restricted to `range`.
    pub fn window(&self, range: EpochRange) -> &[ClassId] {
        &self.predictions[range.first..=range.last]
    }

    pub fn is_correct_at(&self, epoch: usize) -> bool {
        self.predictions[epoch] == self.true_class
    }
}

/// Validated, immutable per-instance prediction history of one training run.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    run_id: String,
    class_labels: Vec<String>,
    instances: Vec<InstanceRecord>,
    epoch_count: usize,
    metadata: BTreeMap<String, serde_json::Value>,
    positions: HashMap<String, usize>,
}

impl PartialEq for TrainingRun {
    fn eq(&self, other: &Self) -> bool {
        self.run_id == other.run_id
            && self.class_labels == other.class_labels
            && self.instances == other.instances
            && self.epoch_count == other.epoch_count
            && self.metadata == other.metadata
    }
}

impl TrainingRun {
    /// Checks every run invariant and reports the first violation.
    pub fn new(
        run_id: impl Into<String>,
        class_labels: Vec<String>,
        instances: Vec<InstanceRecord>,
        epoch_count: usize,
        metadata: BTreeMap<String, serde_json::Value>,
    ) -> Result<Self, ValidationError> {
        let n = class_labels.len();
        if n < 2 {
            return Err(ValidationError::TooFewClasses(n));
        }
        if n > MAX_CLASSES {
            return Err(ValidationError::TooManyClasses(n));
        }
        if epoch_count == 0 {
            return Err(ValidationError::NoEpochs);
        }
        if instances.is_empty() {
            return Err(ValidationError::NoInstances);
        }
        let mut seen = HashSet::with_capacity(n);
        for (pos, label) in class_labels.iter().enumerate() {
            if label.is_empty() {
                return Err(ValidationError::EmptyLabel(pos));
            }
            if !seen.insert(label.as_str()) {
                return Err(ValidationError::DuplicateLabel(label.clone()));
            }
        }

        let mut positions = HashMap::with_capacity(instances.len());
        for (pos, inst) in instances.iter().enumerate() {
            if positions.insert(inst.instance_id.clone(), pos).is_some() {
                return Err(ValidationError::DuplicateInstance(inst.instance_id.clone()));
            }
            if inst.true_class.index() >= n {
                return Err(ValidationError::ClassOutOfRange {
                    instance: inst.instance_id.clone(),
                    index: inst.true_class.index(),
                    classes: n,
                });
            }
            if inst.predictions.len() != epoch_count {
                return Err(ValidationError::RaggedRow {
                    instance: inst.instance_id.clone(),
                    expected: epoch_count,
                    found: inst.predictions.len(),
                });
            }
            if let Some(bad) = inst.predictions.iter().find(|p| p.index() >= n) {
                return Err(ValidationError::ClassOutOfRange {
                    instance: inst.instance_id.clone(),
                    index: bad.index(),
                    classes: n,
                });
            }
        }

        Ok(TrainingRun {
            run_id: run_id.into(),
            class_labels,
            instances,
            epoch_count,
            metadata,
            positions,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn label(&self, class: ClassId) -> &str {
        &self.class_labels[class.index()]
    }

    pub fn class_by_label(&self, label: &str) -> Option<ClassId> {
        self.class_labels
            .iter()
            .position(|l| l == label)
            .map(|p| ClassId(p as u16))
    }

    pub fn instances(&self) -> &[InstanceRecord] {
        &self.instances
    }

    pub fn instance(&self, id: &str) -> Option<&InstanceRecord> {
        self.positions.get(id).map(|&p| &self.instances[p])
    }

    /// Position of an instance in [`TrainingRun::instances`].
    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn metadata(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.metadata
    }

    /// m
    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    /// n
    pub fn class_count(&self) -> usize {
        self.class_labels.len()
    }

    /// E
    pub fn epoch_count(&self) -> usize {
        self.epoch_count
    }

    pub fn full_range(&self) -> EpochRange {
        EpochRange {
            first: 0,
            last: self.epoch_count - 1,
        }
    }

    /// Range from 0-based inclusive bounds.
    pub fn epoch_range(&self, first: usize, last: usize) -> Result<EpochRange, ValidationError> {
        EpochRange::new(first, last, self.epoch_count)
    }

    pub fn check_range(&self, range: EpochRange) -> Result<(), ValidationError> {
        EpochRange::new(range.first, range.last, self.epoch_count).map(|_| ())
    }

    pub fn all_classes(&self) -> ClassSelection {
        ClassSelection::all(self.class_count())
    }
}

/// Inclusive window of 0-based epoch indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EpochRange {
    first: usize,
    last: usize,
}

impl EpochRange {
    pub fn new(first: usize, last: usize, epoch_count: usize) -> Result<Self, ValidationError> {
        if first > last || last >= epoch_count {
            return Err(ValidationError::InvalidRange {
                first,
                last,
                epochs: epoch_count,
            });
        }
        Ok(EpochRange { first, last })
    }

    pub fn first(self) -> usize {
        self.first
    }

    pub fn last(self) -> usize {
        self.last
    }

    /// Number of selected epochs (k).
    pub fn len(self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn contains(self, epoch: usize) -> bool {
        (self.first..=self.last).contains(&epoch)
    }

    pub fn epochs(self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

impl Serialize for EpochRange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("EpochRange", 2)?;
        st.serialize_field("from", &crate::display_epoch(self.first))?;
        st.serialize_field("to", &crate::display_epoch(self.last))?;
        st.end()
    }
}

/// A vertical region of the flow diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinId {
    Class(ClassId),
    Other,
}

/// Classes of interest; every other class is folded into the Other bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSelection {
    selected: Vec<ClassId>,
    include_other: bool,
    class_count: usize,
}

impl ClassSelection {
    pub fn new(
        selected: Vec<ClassId>,
        include_other: bool,
        class_count: usize,
    ) -> Result<Self, ValidationError> {
        if selected.is_empty() {
            return Err(ValidationError::EmptySelection);
        }
        let mut seen = vec![false; class_count];
        for &c in &selected {
            if c.index() >= class_count {
                return Err(ValidationError::SelectionOutOfRange {
                    index: c.index(),
                    classes: class_count,
                });
            }
            if std::mem::replace(&mut seen[c.index()], true) {
                return Err(ValidationError::DuplicateSelection(c));
            }
        }
        if !include_other && selected.len() < class_count {
            return Err(ValidationError::OtherBinRequired);
        }
        Ok(ClassSelection {
            selected,
            include_other,
            class_count,
        })
    }

    /// Every class selected, Other bin kept (and empty).
    pub fn all(class_count: usize) -> Self {
        ClassSelection {
            selected: (0..class_count as u16).map(ClassId).collect(),
            include_other: true,
            class_count,
        }
    }

    pub fn selected(&self) -> &[ClassId] {
        &self.selected
    }

    pub fn include_other(&self) -> bool {
        self.include_other
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn contains(&self, class: ClassId) -> bool {
        self.selected.contains(&class)
    }

    pub fn covers_all(&self) -> bool {
        self.selected.len() == self.class_count
    }

    /// Bins in display order: selected classes, then Other.
    pub fn bins(&self) -> Vec<BinId> {
        let mut bins: Vec<BinId> = self.selected.iter().copied().map(BinId::Class).collect();
        if self.include_other {
            bins.push(BinId::Other);
        }
        bins
    }

    /// Lookup table from class index to bin position.
    pub fn layout(&self) -> BinLayout {
        let other = self.selected.len();
        let mut slot = vec![other; self.class_count];
        for (pos, c) in self.selected.iter().enumerate() {
            slot[c.index()] = pos;
        }
        BinLayout {
            bins: self.bins(),
            slot,
        }
    }
}

pub fn bin_of(class: ClassId, sel: &ClassSelection) -> BinId {
    if sel.contains(class) {
        BinId::Class(class)
    } else {
        BinId::Other
    }
}

/// Precomputed class → bin position mapping for one selection.
#[derive(Debug, Clone)]
pub struct BinLayout {
    bins: Vec<BinId>,
    slot: Vec<usize>,
}

impl BinLayout {
    pub fn bins(&self) -> &[BinId] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn position_of(&self, class: ClassId) -> usize {
        self.slot[class.index()]
    }

    pub fn bin_position(&self, bin: BinId) -> Option<usize> {
        self.bins.iter().position(|&b| b == bin)
    }
}

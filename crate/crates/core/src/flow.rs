//! Everything the flow diagram draws, as counts and ordinals.
//!
//! Instances are placed in bins by their predicted class under a
//! [`ClassSelection`]. Between consecutive epochs of the range a `B x B`
//! matrix counts how many instances move from bin `a` to bin `b`; per epoch
//! each bin is split into correctly and incorrectly predicted instances.

use std::cmp::Ordering;

use serde::Serialize;

use crate::epoch_serde::one_based;
use crate::error::QueryError;
use crate::metrics::{score_all, Fraction, Measure};
use crate::model::{BinId, BinLayout, ClassSelection, EpochRange, TrainingRun, ValidationError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BinCounts {
    pub correct: u64,
    pub incorrect: u64,
}

impl BinCounts {
    pub fn total(&self) -> u64 {
        self.correct + self.incorrect
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EpochDistribution {
    #[serde(serialize_with = "one_based")]
    pub epoch: usize,
    /// One entry per bin, in frame bin order.
    pub bins: Vec<BinCounts>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransitionMatrix {
    /// Transition from `from_epoch` to `from_epoch + 1`.
    #[serde(serialize_with = "one_based")]
    pub from_epoch: usize,
    /// `counts[a][b]`: instances in bin `a` before and bin `b` after.
    pub counts: Vec<Vec<u64>>,
}

impl TransitionMatrix {
    pub fn outgoing(&self, from: usize) -> u64 {
        self.counts[from].iter().sum()
    }

    pub fn incoming(&self, to: usize) -> u64 {
        self.counts.iter().map(|row| row[to]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlowFrame {
    pub range: EpochRange,
    pub bins: Vec<BinId>,
    pub bin_labels: Vec<String>,
    /// Number of instances the frame was computed over.
    pub instance_count: usize,
    pub distributions: Vec<EpochDistribution>,
    pub transitions: Vec<TransitionMatrix>,
}

pub const OTHER_LABEL: &str = "Other";

fn check_frame(run: &TrainingRun, sel: &ClassSelection, range: EpochRange) -> Result<(), QueryError> {
    run.check_range(range)?;
    if sel.class_count() != run.class_count() {
        return Err(QueryError::Validation(ValidationError::SelectionOutOfRange {
            index: sel.class_count(),
            classes: run.class_count(),
        }));
    }
    Ok(())
}

/// Instance positions selected by an optional id filter (all when `None`),
/// in run order without duplicates.
pub fn resolve_instances(
    run: &TrainingRun,
    filter: Option<&[String]>,
) -> Result<Vec<usize>, QueryError> {
    match filter {
        None => Ok((0..run.instance_count()).collect()),
        Some(ids) => {
            let mut positions = ids
                .iter()
                .map(|id| {
                    run.position(id)
                        .ok_or_else(|| QueryError::UnknownInstance(id.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            positions.sort_unstable();
            positions.dedup();
            Ok(positions)
        }
    }
}

pub fn bin_labels(run: &TrainingRun, bins: &[BinId]) -> Vec<String> {
    bins.iter()
        .map(|b| match b {
            BinId::Class(c) => run.label(*c).to_string(),
            BinId::Other => OTHER_LABEL.to_string(),
        })
        .collect()
}

pub fn compute_flow(
    run: &TrainingRun,
    sel: &ClassSelection,
    range: EpochRange,
    instance_filter: Option<&[String]>,
) -> Result<FlowFrame, QueryError> {
    check_frame(run, sel, range)?;
    let members = resolve_instances(run, instance_filter)?;
    let layout = sel.layout();
    let b = layout.len();
    let k = range.len();

    let mut dist = vec![BinCounts::default(); k * b];
    let mut flow = vec![0u64; (k - 1) * b * b];
    for &pos in &members {
        let inst = &run.instances()[pos];
        let mut prev_bin = None;
        for (offset, &p) in inst.window(range).iter().enumerate() {
            let bin = layout.position_of(p);
            let cell = &mut dist[offset * b + bin];
            if p == inst.true_class {
                cell.correct += 1;
            } else {
                cell.incorrect += 1;
            }
            if let Some(from) = prev_bin {
                flow[((offset - 1) * b + from) * b + bin] += 1;
            }
            prev_bin = Some(bin);
        }
    }

    let distributions = dist
        .chunks(b)
        .zip(range.epochs())
        .map(|(bins, epoch)| EpochDistribution {
            epoch,
            bins: bins.to_vec(),
        })
        .collect();
    let transitions = flow
        .chunks(b * b)
        .zip(range.epochs())
        .map(|(m, epoch)| TransitionMatrix {
            from_epoch: epoch,
            counts: m.chunks(b).map(|r| r.to_vec()).collect(),
        })
        .collect();

    Ok(FlowFrame {
        range,
        bins: layout.bins().to_vec(),
        bin_labels: bin_labels(run, layout.bins()),
        instance_count: members.len(),
        distributions,
        transitions,
    })
}

/// Instances counted in band `from_bin -> to_bin` between `epoch` and
/// `epoch + 1`, in run order.
pub fn band_members(
    run: &TrainingRun,
    sel: &ClassSelection,
    range: EpochRange,
    epoch: usize,
    from_bin: BinId,
    to_bin: BinId,
    instance_filter: Option<&[String]>,
) -> Result<Vec<String>, QueryError> {
    check_frame(run, sel, range)?;
    if !range.contains(epoch) || !range.contains(epoch + 1) {
        return Err(QueryError::InvalidTransition {
            epoch: crate::display_epoch(epoch),
        });
    }
    let layout = sel.layout();
    let from = bin_position(&layout, from_bin)?;
    let to = bin_position(&layout, to_bin)?;
    let members = resolve_instances(run, instance_filter)?;
    Ok(members
        .into_iter()
        .map(|pos| &run.instances()[pos])
        .filter(|inst| {
            layout.position_of(inst.predictions[epoch]) == from
                && layout.position_of(inst.predictions[epoch + 1]) == to
        })
        .map(|inst| inst.instance_id.clone())
        .collect())
}

fn bin_position(layout: &BinLayout, bin: BinId) -> Result<usize, QueryError> {
    layout
        .bin_position(bin)
        .ok_or_else(|| QueryError::UnknownBin(format!("{bin:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GlyphCategory {
    Stable,
    Incoming,
    Outgoing,
    InOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizontalSlot {
    Left,
    Center,
    Right,
}

impl GlyphCategory {
    /// Category from the bins before, at and after an epoch. A missing
    /// neighbour (range boundary) counts as staying in the current bin.
    pub fn classify<T: PartialEq>(prev: Option<T>, cur: T, next: Option<T>) -> Self {
        let came = prev.is_some_and(|p| p != cur);
        let leaves = next.is_some_and(|n| n != cur);
        match (came, leaves) {
            (false, false) => GlyphCategory::Stable,
            (true, false) => GlyphCategory::Incoming,
            (false, true) => GlyphCategory::Outgoing,
            (true, true) => GlyphCategory::InOut,
        }
    }

    pub fn slot(self) -> HorizontalSlot {
        match self {
            GlyphCategory::Incoming | GlyphCategory::InOut => HorizontalSlot::Left,
            GlyphCategory::Stable => HorizontalSlot::Center,
            GlyphCategory::Outgoing => HorizontalSlot::Right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GlyphInfo {
    pub instance_id: String,
    #[serde(serialize_with = "one_based")]
    pub epoch: usize,
    pub bin: BinId,
    pub category: GlyphCategory,
    pub rank_measure: Fraction,
    pub horizontal_slot: HorizontalSlot,
    /// 0 is the top of the (epoch, bin, slot) stack.
    pub vertical_order: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EpochGlyphs {
    #[serde(serialize_with = "one_based")]
    pub epoch: usize,
    /// Ordered by bin, slot (left to right), then vertical order.
    pub glyphs: Vec<GlyphInfo>,
}

pub fn glyph_layout(
    run: &TrainingRun,
    sel: &ClassSelection,
    range: EpochRange,
    rank_by: Measure,
    instance_filter: Option<&[String]>,
) -> Result<Vec<EpochGlyphs>, QueryError> {
    check_frame(run, sel, range)?;
    let members = resolve_instances(run, instance_filter)?;
    let layout = sel.layout();
    let scores = score_all(run, range);

    let mut out = Vec::with_capacity(range.len());
    for epoch in range.epochs() {
        let mut glyphs: Vec<(usize, GlyphInfo)> = members
            .iter()
            .map(|&pos| {
                let inst = &run.instances()[pos];
                let bin_at = |e: usize| layout.position_of(inst.predictions[e]);
                let cur = bin_at(epoch);
                let prev = (epoch > range.first()).then(|| bin_at(epoch - 1));
                let next = (epoch < range.last()).then(|| bin_at(epoch + 1));
                let category = GlyphCategory::classify(prev, cur, next);
                (
                    cur,
                    GlyphInfo {
                        instance_id: inst.instance_id.clone(),
                        epoch,
                        bin: layout.bins()[cur],
                        category,
                        rank_measure: scores.at(pos).get(rank_by),
                        horizontal_slot: category.slot(),
                        vertical_order: 0,
                    },
                )
            })
            .collect();
        glyphs.sort_by(|(ba, a), (bb, b)| {
            ba.cmp(bb)
                .then(a.horizontal_slot.cmp(&b.horizontal_slot))
                .then(b.rank_measure.cmp(&a.rank_measure))
                .then_with(|| a.instance_id.cmp(&b.instance_id))
        });
        let mut order = 0;
        for i in 0..glyphs.len() {
            if i > 0 && glyph_group_cmp(&glyphs[i - 1], &glyphs[i]) != Ordering::Equal {
                order = 0;
            }
            glyphs[i].1.vertical_order = order;
            order += 1;
        }
        out.push(EpochGlyphs {
            epoch,
            glyphs: glyphs.into_iter().map(|(_, g)| g).collect(),
        });
    }
    Ok(out)
}

fn glyph_group_cmp(a: &(usize, GlyphInfo), b: &(usize, GlyphInfo)) -> Ordering {
    a.0.cmp(&b.0).then(a.1.horizontal_slot.cmp(&b.1.horizontal_slot))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Correctness {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceSegment {
    pub instance_id: String,
    #[serde(serialize_with = "one_based")]
    pub from_epoch: usize,
    pub from_bin: BinId,
    pub to_bin: BinId,
    /// Whether the prediction at `from_epoch + 1` is the true class.
    pub correctness: Correctness,
}

/// `k - 1` segments per requested instance, in request order.
pub fn trace(
    run: &TrainingRun,
    sel: &ClassSelection,
    range: EpochRange,
    instance_ids: &[String],
) -> Result<Vec<TraceSegment>, QueryError> {
    check_frame(run, sel, range)?;
    let layout = sel.layout();
    let mut segments = Vec::with_capacity(instance_ids.len() * (range.len() - 1));
    for id in instance_ids {
        let inst = run
            .instance(id)
            .ok_or_else(|| QueryError::UnknownInstance(id.clone()))?;
        for epoch in range.first()..range.last() {
            let to = inst.predictions[epoch + 1];
            segments.push(TraceSegment {
                instance_id: inst.instance_id.clone(),
                from_epoch: epoch,
                from_bin: layout.bins()[layout.position_of(inst.predictions[epoch])],
                to_bin: layout.bins()[layout.position_of(to)],
                correctness: if to == inst.true_class {
                    Correctness::Correct
                } else {
                    Correctness::Incorrect
                },
            });
        }
    }
    Ok(segments)
}

//! Brute-force reference computations. These deliberately avoid the crate's
//! own counting paths: they work on plain index vectors, recount from scratch
//! and compare fractions by cross multiplication.

#![allow(dead_code)]

use std::collections::BTreeSet;

use epochflow_core::metrics::Fraction;
use epochflow_core::{BinId, ClassId, ClassSelection, TrainingRun};

/// (numerator, denominator), not necessarily reduced.
pub type Frac = (u64, u64);

pub fn same(f: Fraction, (n, d): Frac) -> bool {
    f.numer() as u64 * d == n * f.denom() as u64
}

pub fn preds(run: &TrainingRun, pos: usize, first: usize, last: usize) -> Vec<usize> {
    (first..=last)
        .map(|j| run.instances()[pos].predictions[j].0 as usize)
        .collect()
}

pub fn truth(run: &TrainingRun, pos: usize) -> usize {
    run.instances()[pos].true_class.0 as usize
}

pub fn oracle_s(run: &TrainingRun, pos: usize, first: usize, last: usize) -> Frac {
    let p = preds(run, pos, first, last);
    let k = p.len() as u64;
    let correct = p.iter().filter(|&&c| c == truth(run, pos)).count() as u64;
    (k - correct, k)
}

pub fn oracle_v(run: &TrainingRun, pos: usize, first: usize, last: usize) -> Frac {
    let distinct: BTreeSet<usize> = preds(run, pos, first, last).into_iter().collect();
    (distinct.len() as u64, run.class_count() as u64)
}

pub fn oracle_f(run: &TrainingRun, pos: usize, first: usize, last: usize) -> Frac {
    let p = preds(run, pos, first, last);
    if p.len() < 2 {
        return (0, 1);
    }
    let mut changes = 0;
    for j in 1..p.len() {
        if p[j] != p[j - 1] {
            changes += 1;
        }
    }
    (changes, p.len() as u64 - 1)
}

/// Bin index of class `c`: its position among the selected classes, or the
/// trailing Other slot.
pub fn oracle_bin(sel: &ClassSelection, c: usize) -> usize {
    sel.selected()
        .iter()
        .position(|s| s.0 as usize == c)
        .unwrap_or(sel.selected().len())
}

pub fn bin_count(sel: &ClassSelection) -> usize {
    sel.selected().len() + usize::from(sel.include_other())
}

/// counts[a][b] for the transition `epoch -> epoch + 1` over `members`.
pub fn oracle_transition(
    run: &TrainingRun,
    sel: &ClassSelection,
    members: &[usize],
    epoch: usize,
) -> Vec<Vec<u64>> {
    let b = bin_count(sel);
    let mut m = vec![vec![0; b]; b];
    for &pos in members {
        let from = oracle_bin(sel, run.instances()[pos].predictions[epoch].0 as usize);
        let to = oracle_bin(sel, run.instances()[pos].predictions[epoch + 1].0 as usize);
        m[from][to] += 1;
    }
    m
}

pub fn oracle_confusion(run: &TrainingRun, first: usize, last: usize) -> Vec<Vec<u64>> {
    let n = run.class_count();
    let mut m = vec![vec![0; n]; n];
    for j in first..=last {
        for pos in 0..run.instance_count() {
            m[truth(run, pos)][run.instances()[pos].predictions[j].0 as usize] += 1;
        }
    }
    m
}

pub fn oracle_sequence(run: &TrainingRun, pos: usize, first: usize, last: usize) -> String {
    preds(run, pos, first, last)
        .iter()
        .map(|&c| run.class_labels()[c].clone())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn class_bin(sel: &ClassSelection, c: usize) -> BinId {
    if sel.selected().contains(&ClassId(c as u16)) {
        BinId::Class(ClassId(c as u16))
    } else {
        BinId::Other
    }
}

/// Glyph category by explicit truth table.
pub fn oracle_category(prev: Option<usize>, cur: usize, next: Option<usize>) -> &'static str {
    let prev = prev.unwrap_or(cur);
    let next = next.unwrap_or(cur);
    match (prev == cur, cur == next) {
        (true, true) => "stable",
        (false, true) => "incoming",
        (true, false) => "outgoing",
        (false, false) => "in_out",
    }
}

pub fn oracle_slot(category: &str) -> &'static str {
    match category {
        "incoming" | "in_out" => "left",
        "stable" => "center",
        _ => "right",
    }
}

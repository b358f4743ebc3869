mod common;

use std::collections::BTreeSet;

use epochflow_core::fixtures::{random_document, random_run};
use epochflow_core::flow::{band_members, compute_flow, glyph_layout, trace, Correctness, GlyphCategory};
use epochflow_core::ingest::{build_run, parse_run_document, RunDocument};
use epochflow_core::metrics::{frequency, misclassification_score, score_all, variability, Fraction, Measure};
use epochflow_core::table::{
    confusion_summary, filter_sequence_regex, query_table, Filter, Sort, SortKey, TableMode,
    TableSpec,
};
use epochflow_core::metrics::Direction;
use epochflow_core::{ClassId, ClassSelection, TrainingRun};
use proptest::prelude::*;

use common::*;

#[derive(Debug, Clone)]
struct Case {
    run: TrainingRun,
    first: usize,
    last: usize,
    sel: ClassSelection,
    filter: Option<Vec<String>>,
}

fn case() -> impl Strategy<Value = Case> {
    (any::<u64>(), 1usize..=20, 2usize..=6, 1usize..=8)
        .prop_flat_map(|(seed, m, n, e)| {
            (
                Just(random_run(seed, m, n, e)),
                0..e,
                0..e,
                proptest::sample::subsequence((0..n as u16).collect::<Vec<_>>(), 1..=n),
                any::<bool>(),
                proptest::collection::vec(any::<bool>(), m),
            )
        })
        .prop_map(|(run, a, b, picked, shuffle, keep)| {
            let (first, last) = (a.min(b), a.max(b));
            let mut picked: Vec<ClassId> = picked.into_iter().map(ClassId).collect();
            if shuffle {
                picked.reverse();
            }
            let sel = ClassSelection::new(picked, true, run.class_count()).unwrap();
            let filter = keep.iter().any(|k| !k).then(|| {
                run.instances()
                    .iter()
                    .zip(&keep)
                    .filter(|(_, k)| **k)
                    .map(|(i, _)| i.instance_id.clone())
                    .collect()
            });
            Case { run, first, last, sel, filter }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn measures_match_brute_force(c in case()) {
        let range = c.run.epoch_range(c.first, c.last).unwrap();
        let all = score_all(&c.run, range);
        for (pos, inst) in c.run.instances().iter().enumerate() {
            let s = misclassification_score(&c.run, inst, range);
            let v = variability(&c.run, inst, range);
            let f = frequency(&c.run, inst, range);
            prop_assert!(same(s, oracle_s(&c.run, pos, c.first, c.last)));
            prop_assert!(same(v, oracle_v(&c.run, pos, c.first, c.last)));
            prop_assert!(same(f, oracle_f(&c.run, pos, c.first, c.last)));
            prop_assert_eq!(all.at(pos).misclassification, s);
            prop_assert_eq!(all.at(pos).variability, v);
            prop_assert_eq!(all.at(pos).frequency, f);
            // F = 0 <=> V = 1/n <=> constant over the range
            let constant = oracle_v(&c.run, pos, c.first, c.last).0 == 1;
            prop_assert_eq!(f == Fraction::ZERO, constant);
            prop_assert_eq!(v == Fraction::new(1, c.run.class_count() as u32), constant);
        }
    }

    #[test]
    fn measures_ignore_epochs_outside_range(c in case(), salt in any::<u64>()) {
        let range = c.run.epoch_range(c.first, c.last).unwrap();
        let mut doc = RunDocument::from_run(&c.run);
        let n = doc.classes.len() as u64;
        for (i, inst) in doc.instances.iter_mut().enumerate() {
            for (j, p) in inst.predictions.iter_mut().enumerate() {
                if j < c.first || j > c.last {
                    *p = ((salt ^ (i as u64 * 31 + j as u64)) % n) as u32;
                }
            }
        }
        let mutated = build_run(&doc).unwrap();
        prop_assert_eq!(score_all(&c.run, range), score_all(&mutated, range));
    }

    #[test]
    fn measures_invariant_under_label_permutation(c in case(), rot in 1u32..6) {
        let range = c.run.epoch_range(c.first, c.last).unwrap();
        let mut doc = RunDocument::from_run(&c.run);
        let n = doc.classes.len() as u32;
        let perm = |x: u32| (x + rot) % n;
        let old = doc.classes.clone();
        for (i, label) in old.iter().enumerate() {
            doc.classes[perm(i as u32) as usize] = label.clone();
        }
        for inst in doc.instances.iter_mut() {
            for p in inst.predictions.iter_mut() {
                *p = perm(*p);
            }
        }
        let permuted = build_run(&doc).unwrap();
        prop_assert_eq!(score_all(&c.run, range), score_all(&permuted, range));
    }

    #[test]
    fn flow_conserves_instances(c in case()) {
        let range = c.run.epoch_range(c.first, c.last).unwrap();
        let frame = compute_flow(&c.run, &c.sel, range, c.filter.as_deref()).unwrap();
        let members: Vec<usize> = match &c.filter {
            None => (0..c.run.instance_count()).collect(),
            Some(ids) => ids.iter().map(|id| c.run.position(id).unwrap()).collect(),
        };
        let m = members.len() as u64;
        prop_assert_eq!(frame.instance_count as u64, m);
        for d in &frame.distributions {
            prop_assert_eq!(d.bins.iter().map(|b| b.total()).sum::<u64>(), m);
        }
        for (t, pair) in frame.transitions.iter().zip(frame.distributions.windows(2)) {
            prop_assert_eq!(t.total(), m);
            for a in 0..frame.bins.len() {
                prop_assert_eq!(t.outgoing(a), pair[0].bins[a].total());
                prop_assert_eq!(t.incoming(a), pair[1].bins[a].total());
            }
            prop_assert_eq!(&t.counts, &oracle_transition(&c.run, &c.sel, &members, t.from_epoch));
        }
    }

    #[test]
    fn bands_partition_members(c in case()) {
        prop_assume!(c.last > c.first);
        let range = c.run.epoch_range(c.first, c.last).unwrap();
        let frame = compute_flow(&c.run, &c.sel, range, c.filter.as_deref()).unwrap();
        for t in &frame.transitions {
            let mut union = BTreeSet::new();
            for (a, &from) in frame.bins.iter().enumerate() {
                for (b, &to) in frame.bins.iter().enumerate() {
                    let band = band_members(&c.run, &c.sel, range, t.from_epoch, from, to, c.filter.as_deref()).unwrap();
                    prop_assert_eq!(band.len() as u64, t.counts[a][b]);
                    for id in band {
                        prop_assert!(union.insert(id), "bands overlap");
                    }
                }
            }
            prop_assert_eq!(union.len(), frame.instance_count);
        }
    }

    #[test]
    fn glyphs_follow_truth_table(c in case(), rank in 0usize..3) {
        let range = c.run.epoch_range(c.first, c.last).unwrap();
        let layout = glyph_layout(&c.run, &c.sel, range, Measure::ALL[rank], c.filter.as_deref()).unwrap();
        let frame = compute_flow(&c.run, &c.sel, range, c.filter.as_deref()).unwrap();
        for (eg, dist) in layout.iter().zip(&frame.distributions) {
            prop_assert_eq!(eg.glyphs.len(), frame.instance_count);
            for (b, counts) in dist.bins.iter().enumerate() {
                let in_bin = eg.glyphs.iter().filter(|g| g.bin == frame.bins[b]).count() as u64;
                prop_assert_eq!(in_bin, counts.total());
            }
            for g in &eg.glyphs {
                let pos = c.run.position(&g.instance_id).unwrap();
                let bin = |j: usize| oracle_bin(&c.sel, c.run.instances()[pos].predictions[j].0 as usize);
                let prev = (g.epoch > c.first).then(|| bin(g.epoch - 1));
                let next = (g.epoch < c.last).then(|| bin(g.epoch + 1));
                let expect = oracle_category(prev, bin(g.epoch), next);
                prop_assert_eq!(serde_json::to_value(g.category).unwrap(), expect);
                if g.epoch == c.first {
                    prop_assert!(!matches!(g.category, GlyphCategory::Incoming | GlyphCategory::InOut));
                }
                if g.epoch == c.last {
                    prop_assert!(!matches!(g.category, GlyphCategory::Outgoing | GlyphCategory::InOut));
                }
            }
        }
    }

    #[test]
    fn trace_correctness_agrees_with_distribution(c in case()) {
        let range = c.run.epoch_range(c.first, c.last).unwrap();
        let ids: Vec<String> = c.run.instances().iter().map(|i| i.instance_id.clone()).collect();
        let segments = trace(&c.run, &c.sel, range, &ids).unwrap();
        prop_assert_eq!(segments.len(), ids.len() * (c.last - c.first));
        let frame = compute_flow(&c.run, &c.sel, range, None).unwrap();
        for (offset, dist) in frame.distributions.iter().enumerate().skip(1) {
            let epoch = c.first + offset;
            for (b, counts) in dist.bins.iter().enumerate() {
                let correct = segments
                    .iter()
                    .filter(|s| s.from_epoch + 1 == epoch && s.to_bin == frame.bins[b] && s.correctness == Correctness::Correct)
                    .count() as u64;
                prop_assert_eq!(correct, counts.correct);
            }
        }
    }

    #[test]
    fn full_selection_gives_raw_class_transitions(c in case()) {
        prop_assume!(c.last > c.first);
        let range = c.run.epoch_range(c.first, c.last).unwrap();
        let n = c.run.class_count();
        let frame = compute_flow(&c.run, &c.run.all_classes(), range, None).unwrap();
        for t in &frame.transitions {
            let mut raw = vec![vec![0u64; n]; n];
            for inst in c.run.instances() {
                raw[inst.predictions[t.from_epoch].0 as usize][inst.predictions[t.from_epoch + 1].0 as usize] += 1;
            }
            for a in 0..n {
                prop_assert_eq!(&t.counts[a][..n], &raw[a][..]);
                prop_assert_eq!(t.counts[a][n], 0);
            }
            prop_assert!(t.counts[n].iter().all(|&x| x == 0));
        }
    }

    #[test]
    fn group_summaries_stack_to_confusion(c in case()) {
        let range = c.run.epoch_range(c.first, c.last).unwrap();
        let mut spec = TableSpec::new(&c.run);
        spec.range = range;
        spec.sel = c.sel.clone();
        spec.default_filter = false;
        spec.group_by = Some("true_class".into());
        spec.mode = TableMode::GroupSummary;
        let page = query_table(&c.run, &spec).unwrap();
        let confusion = confusion_summary(&c.run, range).unwrap();
        prop_assert_eq!(&confusion.counts, &oracle_confusion(&c.run, c.first, c.last));
        let n = c.run.class_count();
        let mut stacked = vec![vec![0u64; n]; n];
        for g in &page.groups {
            prop_assert_eq!(g.prediction_histogram.iter().sum::<u64>(), (g.size * range.len()) as u64);
            stacked[g.key.index()] = g.prediction_histogram.clone();
        }
        prop_assert_eq!(stacked, confusion.counts);
    }

    #[test]
    fn regex_filter_matches_naive_scan(c in case(), which in 0usize..6, class in 0usize..6) {
        let range = c.run.epoch_range(c.first, c.last).unwrap();
        let label = &c.run.class_labels()[class % c.run.class_count()];
        let pattern = match which {
            0 => format!("^{label}"),
            1 => format!("{label}$"),
            2 => format!("(^|,){label}(,|$)"),
            3 => format!("{label},{label}"),
            4 => format!("^({label},)*{label}$"),
            _ => ".*".to_string(),
        };
        let re = regex::Regex::new(&pattern).unwrap();
        let naive: Vec<String> = (0..c.run.instance_count())
            .filter(|&p| re.is_match(&oracle_sequence(&c.run, p, c.first, c.last)))
            .map(|p| c.run.instances()[p].instance_id.clone())
            .collect();
        prop_assert_eq!(filter_sequence_regex(&c.run, range, &pattern).unwrap(), naive.clone());

        let mut spec = TableSpec::new(&c.run);
        spec.range = range;
        spec.default_filter = false;
        spec.filters = vec![Filter::SequenceRegex { pattern }];
        let page = query_table(&c.run, &spec).unwrap();
        let got: Vec<String> = page.rows.iter().map(|r| r.instance_id.clone()).collect();
        prop_assert_eq!(got, naive);
    }

    #[test]
    fn sorted_rows_are_a_deterministic_permutation(
        c in case(),
        keys in proptest::collection::vec((0usize..5, any::<bool>()), 0..3),
        default_filter in any::<bool>(),
    ) {
        let range = c.run.epoch_range(c.first, c.last).unwrap();
        let names = ["S", "V", "F", "true_class", "instance_id"];
        let mut spec = TableSpec::new(&c.run);
        spec.range = range;
        spec.sel = c.sel.clone();
        spec.default_filter = default_filter;
        spec.sort = Sort::Keys(keys.iter().map(|&(k, asc)| SortKey {
            attribute: names[k].into(),
            direction: if asc { Direction::Ascending } else { Direction::Descending },
        }).collect());
        let page = query_table(&c.run, &spec).unwrap();
        prop_assert_eq!(&page, &query_table(&c.run, &spec).unwrap());

        // expected membership by brute force
        let mut expected: Vec<usize> = (0..c.run.instance_count())
            .filter(|&p| !default_filter || oracle_s(&c.run, p, c.first, c.last).0 > 0)
            .collect();
        let value = |p: usize, k: usize| -> (u64, u64) {
            match k {
                0 => oracle_s(&c.run, p, c.first, c.last),
                1 => oracle_v(&c.run, p, c.first, c.last),
                2 => oracle_f(&c.run, p, c.first, c.last),
                3 => (truth(&c.run, p) as u64, 1),
                _ => (0, 1),
            }
        };
        expected.sort_by(|&a, &b| {
            for &(k, asc) in &keys {
                let ord = if k == 4 {
                    c.run.instances()[a].instance_id.cmp(&c.run.instances()[b].instance_id)
                } else {
                    let (x, y) = (value(a, k), value(b, k));
                    (x.0 * y.1).cmp(&(y.0 * x.1))
                };
                let ord = if asc { ord } else { ord.reverse() };
                if ord.is_ne() {
                    return ord;
                }
            }
            c.run.instances()[a].instance_id.cmp(&c.run.instances()[b].instance_id)
        });
        let expected: Vec<&str> = expected.iter().map(|&p| c.run.instances()[p].instance_id.as_str()).collect();
        let got: Vec<&str> = page.rows.iter().map(|r| r.instance_id.as_str()).collect();
        prop_assert_eq!(got, expected);
        for row in &page.rows {
            prop_assert_eq!(row.correctness_histogram.total() as usize, range.len());
        }
    }

    #[test]
    fn canonical_round_trip(seed in any::<u64>(), m in 1usize..10, n in 2usize..5, e in 1usize..6) {
        let doc = random_document(seed, m, n, e);
        let text = String::from_utf8(doc.canonical_bytes()).unwrap();
        let parsed = parse_run_document(&text).unwrap();
        prop_assert_eq!(&parsed, &doc);
        let run = build_run(&parsed).unwrap();
        prop_assert_eq!(RunDocument::from_run(&run).canonical_bytes(), doc.canonical_bytes());
    }
}

//! Metric fixtures checked three ways: against values frozen from an
//! independent Python scorer, against naive set formulas written here, and
//! against exhaustive CEAF matching.

mod common;

use std::collections::{BTreeSet, HashMap};

use common::oracles::*;
use proptest::prelude::*;
use spanlink::corpus::{parse_conll_str, write_conll_string};
use spanlink::eval::{b_cubed, ceaf_phi4, evaluate, muc};
use spanlink::Span;

#[test]
fn at_least_ten_fixtures() {
    assert!(fixtures().len() >= 10);
}

#[test]
fn fixtures_match_the_frozen_scorer_values() {
    for f in fixtures() {
        check(&format!("{} MUC", f.name), muc(&f.gold, &f.pred), &f.muc);
        check(&format!("{} B3", f.name), b_cubed(&f.gold, &f.pred), &f.b_cubed);
        check(&format!("{} CEAFe", f.name), ceaf_phi4(&f.gold, &f.pred), &f.ceaf_e);
        let avg = (muc(&f.gold, &f.pred).f1 + b_cubed(&f.gold, &f.pred).f1 + ceaf_phi4(&f.gold, &f.pred).f1) / 3.0;
        assert!((avg - f.conll).abs() < TOL, "{} CoNLL", f.name);
    }
}

#[test]
fn fixtures_match_the_naive_oracles() {
    for f in fixtures() {
        let mut ids = HashMap::new();
        let (g, p) = (as_ids(&f.gold, &mut ids), as_ids(&f.pred, &mut ids));
        assert!(close3(muc(&g, &p), oracle_muc(&g, &p)), "{} MUC", f.name);
        assert!(close3(b_cubed(&g, &p), oracle_b_cubed(&g, &p)), "{} B3", f.name);
        assert!(close3(ceaf_phi4(&g, &p), oracle_ceaf(&g, &p)), "{} CEAFe", f.name);
    }
}

#[test]
fn missing_mention_values() {
    let gold = vec![vec!['a', 'b', 'c']];
    let m = muc(&gold, &[vec!['a', 'b']]);
    assert!((m.recall - 0.5).abs() < 1e-12 && (m.precision - 1.0).abs() < 1e-12);
    assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
    // With c left as a singleton response cluster, B³ gives it 1/3 recall.
    let b = b_cubed(&gold, &[vec!['a', 'b'], vec!['c']]);
    assert!((b.recall - 5.0 / 9.0).abs() < 1e-12 && (b.precision - 1.0).abs() < 1e-12);
    assert!((b.f1 - 5.0 / 7.0).abs() < 1e-12);
    // Unpredicted, c contributes nothing.
    let b = b_cubed(&gold, &[vec!['a', 'b']]);
    assert!((b.recall - 4.0 / 9.0).abs() < 1e-12);
}

#[test]
fn scorer_parse_of_a_prediction_file() {
    let gold = parse_conll_str(include_str!("fixtures/scorer_gold.conll")).unwrap();
    let pred = parse_conll_str(include_str!("fixtures/scorer_pred.conll")).unwrap();
    let docs: Vec<ScoredDoc> = serde_json::from_str(include_str!("fixtures/scorer_parse.json")).unwrap();
    assert_eq!(docs.len(), gold.len());
    let spans = |c: &[Vec<[usize; 2]>]| -> Vec<Vec<Span>> {
        let mut out: Vec<Vec<Span>> = c
            .iter()
            .map(|k| k.iter().map(|s| Span::new(s[0], s[1])).collect())
            .collect();
        out.sort();
        out
    };
    let sorted = |c: &[Vec<Span>]| {
        let mut c = c.to_vec();
        c.sort();
        c
    };
    for ((g, p), d) in gold.iter().zip(&pred).zip(&docs) {
        assert_eq!(d.doc, format!("{}-000", g.doc_key.trim_end_matches("_0")));
        assert_eq!(sorted(&g.gold_clusters), spans(&d.gold), "{}", d.doc);
        assert_eq!(sorted(&p.gold_clusters), spans(&d.pred), "{}", d.doc);
        let r = evaluate(&g.gold_clusters, &p.gold_clusters);
        check(&format!("{} MUC", d.doc), r.muc, &d.muc);
        check(&format!("{} B3", d.doc), r.b_cubed, &d.b_cubed);
        check(&format!("{} CEAFe", d.doc), r.ceaf_phi4, &d.ceaf_e);
    }
    // Writing the parsed predictions back reproduces the file.
    let clusters: Vec<_> = pred.iter().map(|d| d.gold_clusters.clone()).collect();
    assert_eq!(
        write_conll_string(&pred, &clusters).unwrap(),
        include_str!("fixtures/scorer_pred.conll")
    );
}

fn clustering(max_mentions: u32) -> impl Strategy<Value = Clusters> {
    prop::collection::vec((0..max_mentions, 0..5u32), 0..max_mentions as usize).prop_map(|pairs| {
        let mut by: std::collections::BTreeMap<u32, BTreeSet<u32>> = Default::default();
        let mut seen = BTreeSet::new();
        for (m, c) in pairs {
            if seen.insert(m) {
                by.entry(c).or_default().insert(m);
            }
        }
        by.into_values()
            .filter(|c| c.len() >= 2)
            .map(|c| c.into_iter().collect())
            .collect()
    })
}

proptest! {
    #[test]
    fn random_clusterings_match_the_oracles(g in clustering(10), p in clustering(10)) {
        prop_assert!(close3(muc(&g, &p), oracle_muc(&g, &p)));
        prop_assert!(close3(b_cubed(&g, &p), oracle_b_cubed(&g, &p)));
        prop_assert!(close3(ceaf_phi4(&g, &p), oracle_ceaf(&g, &p)));
    }

    #[test]
    fn metrics_ignore_order(g in clustering(10), p in clustering(10)) {
        let rev = |c: &Clusters| -> Clusters {
            c.iter().rev().map(|k| k.iter().rev().copied().collect()).collect()
        };
        let a = evaluate(&g, &p);
        let b = evaluate(&rev(&g), &rev(&p));
        prop_assert!((a.conll_avg_f1 - b.conll_avg_f1).abs() < 1e-12);
    }

    #[test]
    fn identity_scores_one_and_swap_trades_precision_for_recall(g in clustering(10), p in clustering(10)) {
        if !g.is_empty() {
            prop_assert!((evaluate(&g, &g).conll_avg_f1 - 1.0).abs() < 1e-12);
        }
        let a = evaluate(&g, &p);
        let b = evaluate(&p, &g);
        prop_assert!((a.muc.recall - b.muc.precision).abs() < 1e-12);
        prop_assert!((a.b_cubed.recall - b.b_cubed.precision).abs() < 1e-12);
        prop_assert!((a.ceaf_phi4.f1 - b.ceaf_phi4.f1).abs() < 1e-12);
    }
}

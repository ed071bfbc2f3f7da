//! Independent metric formulas and the frozen scorer fixtures.

use std::collections::{BTreeSet, HashMap};

use serde::Deserialize;
use spanlink::eval::Prf;

pub const TOL: f64 = 1e-4;

#[derive(Deserialize)]
pub struct Expected {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Deserialize)]
pub struct Fixture {
    pub name: String,
    pub gold: Vec<Vec<String>>,
    pub pred: Vec<Vec<String>>,
    pub muc: Expected,
    pub b_cubed: Expected,
    pub ceaf_e: Expected,
    pub conll: f64,
}

#[derive(Deserialize)]
pub struct ScoredDoc {
    pub doc: String,
    pub gold: Vec<Vec<[usize; 2]>>,
    pub pred: Vec<Vec<[usize; 2]>>,
    pub muc: Expected,
    pub b_cubed: Expected,
    pub ceaf_e: Expected,
}

pub fn fixtures() -> Vec<Fixture> {
    serde_json::from_str(include_str!("../fixtures/metric_fixtures.json")).unwrap()
}

pub fn prf_close(got: Prf, want: &Expected) -> bool {
    (got.recall - want.recall).abs() < TOL
        && (got.precision - want.precision).abs() < TOL
        && (got.f1 - want.f1).abs() < TOL
}

pub fn check(what: &str, got: Prf, want: &Expected) {
    for (k, g, w) in [
        ("recall", got.recall, want.recall),
        ("precision", got.precision, want.precision),
        ("f1", got.f1, want.f1),
    ] {
        assert!((g - w).abs() < TOL, "{what} {k}: {g} vs {w}");
    }
}

pub type Clusters = Vec<Vec<u32>>;

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn div(n: f64, d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        n / d
    }
}

pub fn sets(c: &Clusters) -> Vec<BTreeSet<u32>> {
    c.iter().map(|k| k.iter().copied().collect()).collect()
}

/// Vilain et al.: the partition of each key cluster by the response, with
/// unmatched mentions as their own parts.
pub fn oracle_muc(gold: &Clusters, pred: &Clusters) -> (f64, f64, f64) {
    let side = |a: &Clusters, b: &Clusters| {
        let bs = sets(b);
        let (mut n, mut d) = (0.0, 0.0);
        for k in sets(a) {
            let mut parts = 0;
            let mut covered = BTreeSet::new();
            for r in &bs {
                if !k.is_disjoint(r) {
                    parts += 1;
                    covered.extend(k.intersection(r).copied());
                }
            }
            parts += k.len() - covered.len();
            n += (k.len() - parts) as f64;
            d += (k.len() - 1) as f64;
        }
        div(n, d)
    };
    let (r, p) = (side(gold, pred), side(pred, gold));
    (r, p, f1(p, r))
}

/// Per-mention B³ averaged over mentions.
pub fn oracle_b_cubed(gold: &Clusters, pred: &Clusters) -> (f64, f64, f64) {
    let side = |a: &Clusters, b: &Clusters| {
        let bs = sets(b);
        let (mut n, mut d) = (0.0, 0.0);
        for k in sets(a) {
            for m in &k {
                let overlap = bs
                    .iter()
                    .find(|r| r.contains(m))
                    .map_or(0, |r| k.intersection(r).count());
                n += overlap as f64 / k.len() as f64;
                d += 1.0;
            }
        }
        div(n, d)
    };
    let (r, p) = (side(gold, pred), side(pred, gold));
    (r, p, f1(p, r))
}

/// Best φ4 total over every injective pairing, by recursion.
pub fn best_pairing(g: &[BTreeSet<u32>], p: &[BTreeSet<u32>], used: &mut Vec<bool>) -> f64 {
    let Some((k, rest)) = g.split_first() else { return 0.0 };
    let mut best = best_pairing(rest, p, used);
    for j in 0..p.len() {
        if !used[j] {
            used[j] = true;
            let phi = 2.0 * k.intersection(&p[j]).count() as f64 / (k.len() + p[j].len()) as f64;
            best = best.max(phi + best_pairing(rest, p, used));
            used[j] = false;
        }
    }
    best
}

pub fn oracle_ceaf(gold: &Clusters, pred: &Clusters) -> (f64, f64, f64) {
    let (g, p) = (sets(gold), sets(pred));
    let total = best_pairing(&g, &p, &mut vec![false; p.len()]);
    let (r, pr) = (div(total, g.len() as f64), div(total, p.len() as f64));
    (r, pr, f1(pr, r))
}

pub fn as_ids(c: &[Vec<String>], ids: &mut HashMap<String, u32>) -> Clusters {
    c.iter()
        .map(|k| {
            k.iter()
                .map(|m| {
                    let n = ids.len() as u32;
                    *ids.entry(m.clone()).or_insert(n)
                })
                .collect()
        })
        .collect()
}

pub fn close3(a: Prf, b: (f64, f64, f64)) -> bool {
    (a.recall - b.0).abs() < 1e-12 && (a.precision - b.1).abs() < 1e-12 && (a.f1 - b.2).abs() < 1e-12
}

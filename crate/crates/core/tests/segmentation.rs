//! Sliding-window segmentation, ownership and merging of window encodings.

mod common;

use common::{tiny_config, tiny_setup};
use ndarray::Array2;
use proptest::prelude::*;
use spanlink::autograd::Graph;
use spanlink::preprocess::{check_ownership, make_windows, merge_windows, Window};

fn centrality(w: &Window, p: usize) -> usize {
    (p - w.start).min(w.start + w.len - 1 - p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn owners_partition_positions(len in 1usize..400, half in 1usize..40) {
        let size = 2 * half;
        let windows = make_windows(len, size).unwrap();
        check_ownership(&windows, len).unwrap();
        if len <= size {
            prop_assert_eq!(windows.len(), 1);
        }
        let mut owners = vec![0usize; len];
        for (k, w) in windows.iter().enumerate() {
            prop_assert!(w.len <= size && w.len > 0);
            if len > size {
                prop_assert_eq!(w.start, k * half);
            }
            for p in w.owned.clone() {
                owners[p] += 1;
            }
        }
        prop_assert!(owners.iter().all(|&c| c == 1));
        for w in &windows {
            for p in w.owned.clone() {
                let best = windows
                    .iter()
                    .filter(|o| o.start <= p && p < o.start + o.len)
                    .map(|o| centrality(o, p))
                    .max()
                    .unwrap();
                prop_assert_eq!(centrality(w, p), best);
            }
        }
    }

    #[test]
    fn merge_copies_the_owner_rows(len in 1usize..120, half in 1usize..12, dim in 1usize..4) {
        let windows = make_windows(len, 2 * half).unwrap();
        let per_window: Vec<(Window, Array2<f64>)> = windows
            .iter()
            .enumerate()
            .map(|(k, w)| (w.clone(), Array2::from_shape_fn((w.len, dim), |(r, c)| (k * 1000 + r * 10 + c) as f64)))
            .collect();
        let merged = merge_windows(&per_window).unwrap();
        prop_assert_eq!(merged.nrows(), len);
        for (k, w) in windows.iter().enumerate() {
            for p in w.owned.clone() {
                for c in 0..dim {
                    prop_assert_eq!(merged[[p, c]], (k * 1000 + (p - w.start) * 10 + c) as f64);
                }
            }
        }
    }
}

#[test]
fn rejects_odd_or_tiny_windows() {
    assert!(make_windows(10, 7).is_err());
    assert!(make_windows(10, 0).is_err());
}

#[test]
fn short_documents_encode_in_one_pass() {
    let cfg = tiny_config(256);
    let (model, docs) = tiny_setup(&cfg, 4, 21);
    for d in &docs {
        assert_eq!(d.windows.len(), 1);
        let mut g = Graph::new(&model.params);
        let x = model.encode_document(&mut g, d).unwrap();
        let direct = model.encoder.encode_values(&model.params, &d.tokens.ids).unwrap();
        assert_eq!(g.value(x), &direct);
    }
}

#[test]
fn long_documents_take_each_row_from_its_owner() {
    let cfg = tiny_config(10);
    let (model, docs) = tiny_setup(&cfg, 4, 22);
    for d in &docs {
        assert!(d.windows.len() > 2);
        let per_window: Vec<(Window, Array2<f64>)> = d
            .windows
            .iter()
            .map(|w| {
                (
                    w.clone(),
                    model
                        .encoder
                        .encode_values(&model.params, &d.tokens.ids[w.range()])
                        .unwrap(),
                )
            })
            .collect();
        let merged = merge_windows(&per_window).unwrap();
        let mut g = Graph::new(&model.params);
        let x = model.encode_document(&mut g, d).unwrap();
        assert_eq!(g.value(x), &merged);
        // Windows see different contexts, so overlapping rows differ.
        let whole = model
            .encoder
            .encode_values(&model.params, &d.tokens.ids[d.windows[1].range()])
            .unwrap();
        let shifted = model
            .encoder
            .encode_values(&model.params, &d.tokens.ids[d.windows[0].range()])
            .unwrap();
        let offset = d.windows[1].start;
        assert_ne!(whole.row(0), shifted.row(offset));
    }
}

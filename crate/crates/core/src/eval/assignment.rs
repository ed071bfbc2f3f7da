//! Maximum-weight bipartite assignment (Hungarian algorithm).

/// Assignment of rows to columns maximizing the total weight of a dense
/// `rows × cols` matrix. Returns, for each row, its column (or `None` when
/// there are more rows than columns), and the total weight.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> (Vec<Option<usize>>, f64) {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (vec![None; rows], 0.0);
    }
    let n = rows.max(cols);
    let max_w = weights
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    // Square cost matrix; padding cells cost as much as a zero-weight pair.
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            max_w - weights[i][j]
        } else {
            max_w
        }
    };
    // Shortest augmenting path formulation with potentials, 1-indexed.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![None; rows];
    let mut total = 0.0;
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i - 1 < rows && j - 1 < cols {
            assignment[i - 1] = Some(j - 1);
            total += weights[i - 1][j - 1];
        }
    }
    (assignment, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive search over injective row→column maps.
    fn brute(weights: &[Vec<f64>]) -> f64 {
        fn go(i: usize, used: &mut Vec<bool>, w: &[Vec<f64>]) -> f64 {
            if i == w.len() {
                return 0.0;
            }
            let mut best = go(i + 1, used, w);
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(w[i][j] + go(i + 1, used, w));
                    used[j] = false;
                }
            }
            best
        }
        let cols = weights.first().map_or(0, Vec::len);
        go(0, &mut vec![false; cols], weights)
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut state = 12345u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        for rows in 1..=5 {
            for cols in 1..=5 {
                for _ in 0..10 {
                    let w: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| next()).collect()).collect();
                    let (assign, total) = max_weight_assignment(&w);
                    assert!((total - brute(&w)).abs() < 1e-12, "{rows}x{cols}");
                    let mut seen = std::collections::HashSet::new();
                    for c in assign.iter().flatten() {
                        assert!(seen.insert(*c));
                    }
                }
            }
        }
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(max_weight_assignment(&[]).1, 0.0);
        assert_eq!(max_weight_assignment(&[vec![], vec![]]).0, vec![None, None]);
    }
}

//! Exact shortest walk from a start to an end point visiting a set of
//! intermediate points, by Held–Karp dynamic programming over subsets.

use crate::error::{LabError, Result};

pub const MAX_VISIT_POINTS: usize = 14;

/// Minimum length of a walk `start → (all targets, any order) → end`.
///
/// `dist` is a square matrix over `[start, end, targets...]`, i.e. index 0 is
/// the start, index 1 the end and `2..` the points to visit. Distances must
/// satisfy the triangle inequality for the result to be a walk length.
pub fn shortest_visiting_walk(dist: &[Vec<u64>]) -> Result<u64> {
    let n = dist.len();
    if n < 2 || dist.iter().any(|row| row.len() != n) {
        return Err(LabError::InvalidParameter(
            "distance matrix must be square with start and end rows".into(),
        ));
    }
    let k = n - 2;
    if k > MAX_VISIT_POINTS {
        return Err(LabError::SupportTooLarge {
            size: k,
            max: MAX_VISIT_POINTS,
        });
    }
    if k == 0 {
        return Ok(dist[0][1]);
    }
    let full = (1usize << k) - 1;
    // best[mask * k + i]: cheapest walk from start covering `mask`, ending at target i.
    let mut best = vec![u64::MAX; (1 << k) * k];
    for i in 0..k {
        best[(1 << i) * k + i] = dist[0][i + 2];
    }
    for mask in 1..=full {
        for last in 0..k {
            let cur = best[mask * k + last];
            if cur == u64::MAX || mask & (1 << last) == 0 {
                continue;
            }
            let rest = full & !mask;
            let mut bits = rest;
            while bits != 0 {
                let next = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let slot = &mut best[(mask | (1 << next)) * k + next];
                let cand = cur + dist[last + 2][next + 2];
                if cand < *slot {
                    *slot = cand;
                }
            }
        }
    }
    Ok((0..k)
        .map(|i| best[full * k + i].saturating_add(dist[i + 2][1]))
        .min()
        .expect("k > 0"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Tries every visiting order.
    fn brute_force(dist: &[Vec<u64>]) -> u64 {
        fn go(dist: &[Vec<u64>], at: usize, left: &mut Vec<usize>) -> u64 {
            if left.is_empty() {
                return dist[at][1];
            }
            let mut best = u64::MAX;
            for i in 0..left.len() {
                let v = left.remove(i);
                best = best.min(dist[at][v] + go(dist, v, left));
                left.insert(i, v);
            }
            best
        }
        let mut left: Vec<usize> = (2..dist.len()).collect();
        go(dist, 0, &mut left)
    }

    fn line_metric(points: &[i64]) -> Vec<Vec<u64>> {
        points
            .iter()
            .map(|a| points.iter().map(|b| a.abs_diff(*b)).collect())
            .collect()
    }

    #[test]
    fn lamps_on_both_sides() {
        // start 0, end 0, visit -1 and 1: best tour has length 4.
        assert_eq!(shortest_visiting_walk(&line_metric(&[0, 0, -1, 1])).unwrap(), 4);
        assert_eq!(shortest_visiting_walk(&line_metric(&[0, 0, 1])).unwrap(), 2);
        assert_eq!(shortest_visiting_walk(&line_metric(&[3, -2])).unwrap(), 5);
    }

    #[test]
    fn rejects_oversized_instances() {
        let pts: Vec<i64> = (0..17).collect();
        assert_eq!(
            shortest_visiting_walk(&line_metric(&pts)),
            Err(LabError::SupportTooLarge { size: 15, max: 14 })
        );
    }

    proptest! {
        #[test]
        fn matches_brute_force_on_plane_points(
            pts in proptest::collection::vec((-6i64..6, -6i64..6), 2..9)
        ) {
            let dist: Vec<Vec<u64>> = pts
                .iter()
                .map(|a| pts.iter().map(|b| a.0.abs_diff(b.0) + a.1.abs_diff(b.1)).collect())
                .collect();
            prop_assert_eq!(shortest_visiting_walk(&dist).unwrap(), brute_force(&dist));
        }
    }
}

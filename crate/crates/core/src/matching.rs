//! Maximum bipartite matching (Hopcroft–Karp).

use std::collections::VecDeque;

const NIL: usize = usize::MAX;

/// Maximum matching of a bipartite graph with `left` vertices given by
/// adjacency lists into `0..right`. Returns, for each left vertex, its
/// matched right vertex.
pub fn maximum_matching(adj: &[Vec<usize>], right: usize) -> Vec<Option<usize>> {
    let left = adj.len();
    let mut match_l = vec![NIL; left];
    let mut match_r = vec![NIL; right];
    let mut dist = vec![0usize; left];

    loop {
        // Layer free left vertices, then search for disjoint shortest augmenting paths.
        let mut queue = VecDeque::new();
        let mut found = false;
        for u in 0..left {
            if match_l[u] == NIL {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let w = match_r[v];
                if w == NIL {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        let mut next_edge = vec![0usize; left];
        for u in 0..left {
            if match_l[u] == NIL {
                augment(u, adj, &mut match_l, &mut match_r, &mut dist, &mut next_edge);
            }
        }
    }
    match_l
        .into_iter()
        .map(|v| if v == NIL { None } else { Some(v) })
        .collect()
}

/// Iterative DFS along the layered graph from a free left vertex.
fn augment(
    root: usize,
    adj: &[Vec<usize>],
    match_l: &mut [usize],
    match_r: &mut [usize],
    dist: &mut [usize],
    next_edge: &mut [usize],
) -> bool {
    let mut stack = vec![root];
    while let Some(&u) = stack.last() {
        if next_edge[u] == adj[u].len() {
            dist[u] = usize::MAX;
            stack.pop();
            continue;
        }
        let v = adj[u][next_edge[u]];
        next_edge[u] += 1;
        let w = match_r[v];
        if w == NIL {
            // Flip the path recorded on the stack.
            let mut v = v;
            while let Some(u) = stack.pop() {
                let prev = match_l[u];
                match_l[u] = v;
                match_r[v] = u;
                v = prev;
            }
            return true;
        }
        if dist[w] == dist[u] + 1 {
            stack.push(w);
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Kuhn's augmenting-path algorithm, one augmentation per left vertex.
    fn kuhn_size(adj: &[Vec<usize>], right: usize) -> usize {
        fn try_kuhn(u: usize, adj: &[Vec<usize>], seen: &mut [bool], mr: &mut [Option<usize>]) -> bool {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    if mr[v].is_none_or(|w| try_kuhn(w, adj, seen, mr)) {
                        mr[v] = Some(u);
                        return true;
                    }
                }
            }
            false
        }
        let mut mr = vec![None; right];
        (0..adj.len())
            .filter(|&u| try_kuhn(u, adj, &mut vec![false; right], &mut mr))
            .count()
    }

    fn check_valid(adj: &[Vec<usize>], m: &[Option<usize>]) {
        let mut used = std::collections::HashSet::new();
        for (u, v) in m.iter().enumerate() {
            if let Some(v) = v {
                assert!(adj[u].contains(v));
                assert!(used.insert(*v));
            }
        }
    }

    #[test]
    fn needs_augmentation() {
        let adj = vec![vec![0, 1], vec![0]];
        let m = maximum_matching(&adj, 2);
        assert_eq!(m, vec![Some(1), Some(0)]);
    }

    #[test]
    fn empty_sides() {
        assert!(maximum_matching(&[], 3).is_empty());
        assert_eq!(maximum_matching(&[vec![], vec![]], 0), vec![None, None]);
    }

    proptest! {
        #[test]
        fn size_matches_kuhn(
            edges in proptest::collection::vec((0usize..12, 0usize..10), 0..50)
        ) {
            let mut adj = vec![Vec::new(); 12];
            for (u, v) in edges {
                if !adj[u].contains(&v) {
                    adj[u].push(v);
                }
            }
            let m = maximum_matching(&adj, 10);
            check_valid(&adj, &m);
            prop_assert_eq!(m.iter().flatten().count(), kuhn_size(&adj, 10));
        }
    }
}

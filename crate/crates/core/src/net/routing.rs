//! Global static shortest-path routing.
//!
//! Paths minimise hop count. Among equal-cost next hops the lowest node id
//! wins, then the lowest link id.

use std::collections::VecDeque;

use super::{LinkId, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub next: NodeId,
    pub link: LinkId,
}

#[derive(Debug, Clone, Default)]
pub struct Routes {
    // next[from][to]
    next: Vec<Vec<Option<Hop>>>,
}

impl Routes {
    /// `adjacency[v]` lists `(neighbor, link)` pairs.
    pub fn compute(adjacency: &[Vec<(NodeId, LinkId)>]) -> Routes {
        let n = adjacency.len();
        let mut next = vec![vec![None; n]; n];
        for dst in 0..n {
            let dist = bfs(adjacency, dst);
            for from in 0..n {
                if from == dst || dist[from].is_none() {
                    continue;
                }
                let want = dist[from].unwrap() - 1;
                next[from][dst] = adjacency[from]
                    .iter()
                    .filter(|(nb, _)| dist[nb.0 as usize] == Some(want))
                    .map(|&(next, link)| Hop { next, link })
                    .min_by_key(|h| (h.next, h.link));
            }
        }
        Routes { next }
    }

    pub fn next_hop(&self, from: NodeId, to: NodeId) -> Option<Hop> {
        self.next
            .get(from.0 as usize)
            .and_then(|row| row.get(to.0 as usize))
            .copied()
            .flatten()
    }

    /// Full node path including both endpoints, or `None` if unreachable.
    pub fn path(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        let mut path = vec![from];
        let mut cur = from;
        while cur != to {
            cur = self.next_hop(cur, to)?.next;
            path.push(cur);
        }
        Some(path)
    }
}

fn bfs(adjacency: &[Vec<(NodeId, LinkId)>], src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adjacency.len()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap();
        for (nb, _) in &adjacency[v] {
            let u = nb.0 as usize;
            if dist[u].is_none() {
                dist[u] = Some(d + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(u32, u32)]) -> Vec<Vec<(NodeId, LinkId)>> {
        let mut adj = vec![Vec::new(); n];
        for (i, &(a, b)) in edges.iter().enumerate() {
            adj[a as usize].push((NodeId(b), LinkId(i as u32)));
            adj[b as usize].push((NodeId(a), LinkId(i as u32)));
        }
        adj
    }

    #[test]
    fn tree_paths() {
        // 0 center, 1 gateway, 2-3 edges, 4-7 terminals
        let adj = graph(8, &[(0, 1), (1, 2), (1, 3), (2, 4), (2, 5), (3, 6), (3, 7)]);
        let r = Routes::compute(&adj);
        let ids = |v: &[u32]| v.iter().map(|&i| NodeId(i)).collect::<Vec<_>>();
        assert_eq!(r.path(NodeId(4), NodeId(0)), Some(ids(&[4, 2, 1, 0])));
        assert_eq!(r.path(NodeId(6), NodeId(5)), Some(ids(&[6, 3, 1, 2, 5])));
    }

    #[test]
    fn equal_cost_prefers_lower_next_hop() {
        // diamond: 0-2-1 and 0-3-1, with the 0-3 link declared first
        let adj = graph(4, &[(0, 3), (3, 1), (0, 2), (2, 1)]);
        let r = Routes::compute(&adj);
        assert_eq!(r.next_hop(NodeId(0), NodeId(1)).unwrap().next, NodeId(2));
    }

    #[test]
    fn parallel_links_prefer_lower_link_id() {
        let adj = graph(2, &[(0, 1), (0, 1)]);
        let r = Routes::compute(&adj);
        assert_eq!(r.next_hop(NodeId(1), NodeId(0)).unwrap().link, LinkId(0));
    }

    #[test]
    fn disconnected_has_no_route() {
        let adj = graph(3, &[(0, 1)]);
        let r = Routes::compute(&adj);
        assert!(r.next_hop(NodeId(0), NodeId(2)).is_none());
        assert!(r.path(NodeId(2), NodeId(0)).is_none());
        assert_eq!(r.path(NodeId(2), NodeId(2)), Some(vec![NodeId(2)]));
    }
}

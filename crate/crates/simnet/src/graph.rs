use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

/// Undirected peer graph over hosts `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerGraph {
    adj: Vec<BTreeSet<usize>>,
}

impl PeerGraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        Self { adj }
    }

    pub fn complete(n: usize) -> Self {
        Self::from_edges(n, (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))))
    }

    /// A connected random `k`-regular graph, built by pairing free stubs
    /// while avoiding loops and parallel edges and restarting when stuck.
    /// Falls back to the complete graph when `n <= k`, and to degree `k - 1`
    /// when `n·k` is odd.
    pub fn random_regular<R: Rng>(n: usize, k: usize, rng: &mut R) -> Self {
        if n <= k + 1 {
            return Self::complete(n);
        }
        let k = if n * k % 2 == 1 { k - 1 } else { k };
        'attempt: for _ in 0..1000 {
            let mut adj = vec![BTreeSet::new(); n];
            let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, k)).collect();
            stubs.shuffle(rng);
            while !stubs.is_empty() {
                let mut paired = false;
                for _ in 0..100 {
                    let i = rng.gen_range(0..stubs.len());
                    let j = rng.gen_range(0..stubs.len());
                    let (a, b) = (stubs[i], stubs[j]);
                    if i == j || a == b || adj[a].contains(&b) {
                        continue;
                    }
                    adj[a].insert(b);
                    adj[b].insert(a);
                    let (hi, lo) = (i.max(j), i.min(j));
                    stubs.swap_remove(hi);
                    stubs.swap_remove(lo);
                    paired = true;
                    break;
                }
                if !paired {
                    continue 'attempt;
                }
            }
            let g = Self { adj };
            if g.is_connected() {
                return g;
            }
        }
        panic!("could not build a connected {k}-regular graph on {n} vertices");
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[v].iter().copied()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Hop distance from `origin`, `None` where unreachable.
    pub fn bfs(&self, origin: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        let mut queue = VecDeque::from([origin]);
        dist[origin] = Some(0);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].expect("visited");
            for u in self.neighbors(v) {
                if dist[u].is_none() {
                    dist[u] = Some(d + 1);
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.is_empty() || self.bfs(0).iter().all(Option::is_some)
    }
}

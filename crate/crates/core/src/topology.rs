//! Graphs with an embedded Hamiltonian cycle, and activation orders.
//!
//! Agents are 0-based internally; the cycle is `0 → 1 → … → N-1 → 0`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("need at least 3 agents, got {0}")]
    TooFewAgents(usize),
    #[error("edge density {eta} must lie in (0, 1]")]
    InvalidDensity { eta: f64 },
    #[error("density yields {edges} edges but the Hamiltonian cycle over {agents} agents needs {agents}")]
    CycleDoesNotFit { edges: usize, agents: usize },
    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("cycle edge ({0}, {1}) missing")]
    MissingCycleEdge(usize, usize),
}

/// Undirected simple graph containing the cycle `0 → 1 → … → N-1 → 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list, checking that it is simple and
    /// carries the identity-order cycle.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        if n < 3 {
            return Err(TopologyError::TooFewAgents(n));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u == v || u >= n || v >= n {
                return Err(TopologyError::InvalidEdge(u, v));
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        if let Some(w) = normalized.windows(2).find(|w| w[0] == w[1]) {
            return Err(TopologyError::DuplicateEdge(w[0].0, w[0].1));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &normalized {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        adjacency.iter_mut().for_each(|a| a.sort_unstable());
        let graph = Self { n, edges: normalized, adjacency };
        for i in 0..n {
            let j = (i + 1) % n;
            if !graph.has_edge(i, j) {
                return Err(TopologyError::MissingCycleEdge(i, j));
            }
        }
        Ok(graph)
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.adjacency[agent]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Successor of `agent` along the Hamiltonian cycle.
    pub fn cycle_successor(&self, agent: usize) -> usize {
        (agent + 1) % self.n
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// `round(eta * N (N-1) / 2)`, ties to even.
pub fn target_edge_count(n: usize, eta: f64) -> usize {
    libm::rint(eta * (n * (n - 1)) as f64 / 2.0) as usize
}

/// Embeds the cycle `0 → … → N-1 → 0`, then adds extra edges drawn uniformly
/// without replacement until the graph has `round(eta N (N-1)/2)` edges.
pub fn generate_graph(n: usize, eta: f64, seed: u64) -> Result<Graph, TopologyError> {
    if n < 3 {
        return Err(TopologyError::TooFewAgents(n));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(TopologyError::InvalidDensity { eta });
    }
    let target = target_edge_count(n, eta);
    if target < n {
        return Err(TopologyError::CycleDoesNotFit { edges: target, agents: n });
    }

    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let is_cycle_pair = |u: usize, v: usize| v == u + 1 || (u == 0 && v == n - 1);
    let candidates: Vec<(usize, usize)> =
        (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).filter(|&(u, v)| !is_cycle_pair(u, v)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), target - n).into_vec();
    picked.sort_unstable();
    edges.extend(picked.into_iter().map(|i| candidates[i]));
    Graph::from_edges(n, &edges)
}

/// Order in which agents receive the token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationSchedule {
    /// Hamiltonian cycle in id order: `i_k = k mod N`.
    Cyclic,
    /// Uniform random neighbour at every hop (the W-ADMM order).
    RandomWalk { seed: u64 },
}

/// ChaCha stream reserved for random-walk hops.
pub const WALK_STREAM: u64 = 4;

/// Stateful cursor over an [`ActivationSchedule`].
#[derive(Debug, Clone)]
pub struct Walker {
    schedule: ActivationSchedule,
    rng: Option<ChaCha8Rng>,
}

impl Walker {
    pub fn new(schedule: ActivationSchedule) -> Self {
        let rng = match schedule {
            ActivationSchedule::Cyclic => None,
            ActivationSchedule::RandomWalk { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(WALK_STREAM);
                Some(rng)
            }
        };
        Self { schedule, rng }
    }

    pub fn schedule(&self) -> ActivationSchedule {
        self.schedule
    }

    /// The agent that receives the token after `prev` finishes iteration `k`.
    pub fn next_agent(&mut self, graph: &Graph, _k: usize, prev: usize) -> usize {
        match &mut self.rng {
            None => graph.cycle_successor(prev),
            Some(rng) => {
                let neighbors = graph.neighbors(prev);
                neighbors[rng.random_range(0..neighbors.len())]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bfs_connected(g: &Graph) -> bool {
        let n = g.n_agents();
        let mut dist = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        dist[0] = 0;
        while let Some(u) = queue.pop_front() {
            for &(a, b) in g.edges() {
                let other = if a == u { b } else if b == u { a } else { continue };
                if dist[other] == usize::MAX {
                    dist[other] = dist[u] + 1;
                    queue.push_back(other);
                }
            }
        }
        dist.iter().all(|&d| d != usize::MAX)
    }

    #[test]
    fn triangle_for_complete_three() {
        let g = generate_graph(3, 1.0, 0).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn hundred_agents_at_point_three() {
        let g = generate_graph(100, 0.3, 11).unwrap();
        assert_eq!(g.edge_count(), 1485);
        assert!(bfs_connected(&g));
    }

    #[test]
    fn sparse_ten_agents() {
        let g = generate_graph(10, 0.25, 42).unwrap();
        assert_eq!(g.edge_count(), 11);
        assert!(bfs_connected(&g));
        for i in 0..10 {
            assert!(g.has_edge(i, (i + 1) % 10));
        }
    }

    #[test]
    fn rejects_impossible_requests() {
        assert_eq!(generate_graph(2, 1.0, 0), Err(TopologyError::TooFewAgents(2)));
        assert!(matches!(generate_graph(10, 0.1, 0), Err(TopologyError::CycleDoesNotFit { edges: 4, agents: 10 })));
        assert!(matches!(generate_graph(10, 0.0, 0), Err(TopologyError::InvalidDensity { .. })));
        assert!(matches!(generate_graph(10, 1.5, 0), Err(TopologyError::InvalidDensity { .. })));
    }

    #[test]
    fn from_edges_validates() {
        assert!(matches!(Graph::from_edges(3, &[(0, 1), (1, 2)]), Err(TopologyError::MissingCycleEdge(2, 0))));
        assert!(matches!(Graph::from_edges(3, &[(0, 1), (1, 0), (1, 2), (2, 0)]), Err(TopologyError::DuplicateEdge(0, 1))));
        assert!(matches!(Graph::from_edges(3, &[(0, 0)]), Err(TopologyError::InvalidEdge(0, 0))));
    }

    #[test]
    fn ties_round_to_even() {
        // 5 exactly; 1.5 rounds up to 2; 2.5 rounds down to 2
        assert_eq!(target_edge_count(5, 0.5), 5);
        assert_eq!(target_edge_count(4, 0.25), 2);
        assert_eq!(target_edge_count(5, 0.25), 2);
    }

    #[test]
    fn cyclic_wraps() {
        let g = generate_graph(5, 1.0, 0).unwrap();
        let mut w = Walker::new(ActivationSchedule::Cyclic);
        assert_eq!(w.next_agent(&g, 0, 4), 0);
        assert_eq!(w.next_agent(&g, 0, 1), 2);
    }

    #[test]
    fn random_walk_is_uniform_on_triangle() {
        let g = generate_graph(3, 1.0, 0).unwrap();
        let mut w = Walker::new(ActivationSchedule::RandomWalk { seed: 9 });
        let draws = 10_000;
        let to_one = (0..draws).filter(|&k| w.next_agent(&g, k, 0) == 1).count();
        // chi-square with one degree of freedom against the uniform split
        let expected = draws as f64 / 2.0;
        let chi2 = 2.0 * (to_one as f64 - expected).powi(2) / expected;
        assert!(chi2 < 10.83, "chi2 = {chi2}");
        let freq = to_one as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn generated_graphs_meet_their_contract(n in 3usize..40, eta in 0.05f64..=1.0, seed in any::<u64>()) {
            let target = target_edge_count(n, eta);
            match generate_graph(n, eta, seed) {
                Ok(g) => {
                    prop_assert_eq!(g.edge_count(), target);
                    prop_assert!(bfs_connected(&g));
                    for i in 0..n {
                        prop_assert!(g.has_edge(i, (i + 1) % n));
                    }
                }
                Err(e) => prop_assert_eq!(e, TopologyError::CycleDoesNotFit { edges: target, agents: n }),
            }
        }

        #[test]
        fn cyclic_visits_everyone_once_per_period(n in 3usize..30, start in 0usize..30) {
            let g = generate_graph(n, 1.0, 0).unwrap();
            let mut w = Walker::new(ActivationSchedule::Cyclic);
            let mut agent = start % n;
            let mut seen = vec![0; n];
            for k in 0..n {
                seen[agent] += 1;
                agent = w.next_agent(&g, k, agent);
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }

        #[test]
        fn random_walk_follows_edges(seed in any::<u64>()) {
            let g = generate_graph(12, 0.3, seed).unwrap();
            let mut w = Walker::new(ActivationSchedule::RandomWalk { seed });
            let mut agent = 0;
            for k in 0..200 {
                let next = w.next_agent(&g, k, agent);
                prop_assert!(g.has_edge(agent, next));
                agent = next;
            }
        }
    }
}

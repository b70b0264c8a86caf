//! Joint column → (dictionary, atom) assignment with per-dictionary counts,
//! as a min-cost flow `source → column → atom → dictionary → sink`.

use std::collections::VecDeque;

use crate::dictionary::{CountConstraint, CountKind};
use crate::error::{Error, Issue, Result};

struct Edge {
    to: usize,
    cap: usize,
    cost: f64,
}

struct Graph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    fn new(nodes: usize) -> Self {
        Graph {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: usize, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.adj[from].push(id);
        self.edges.push(Edge { to: from, cap: 0, cost: -cost });
        self.adj[to].push(id + 1);
        id
    }
}

/// `costs[i][k][j]`: cost of column `j` taking atom `k` of dictionary `i`.
/// Constraints must be normalized (Exact / AtMost). Returns `(dictionary, atom)`
/// per column minimizing the summed cost with distinct atoms per dictionary.
pub(crate) fn joint_assignment(
    costs: &[Vec<Vec<f64>>],
    constraints: &[CountConstraint],
    r: usize,
) -> Result<Vec<(usize, usize)>> {
    let p = costs.len();
    let atom_offsets: Vec<usize> = costs
        .iter()
        .scan(0, |acc, d| {
            let o = *acc;
            *acc += d.len();
            Some(o)
        })
        .collect();
    let atoms_total: usize = costs.iter().map(Vec::len).sum();

    let source = 0;
    let col_node = |j: usize| 1 + j;
    let atom_node = |a: usize| 1 + r + a;
    let dict_node = |i: usize| 1 + r + atoms_total + i;
    let sink = 1 + r + atoms_total + p;
    let mut g = Graph::new(sink + 1);

    let max_cost = costs
        .iter()
        .flat_map(|d| d.iter().flat_map(|a| a.iter()))
        .fold(0.0_f64, |a, &c| a.max(c));
    // Exact copies are preferred over at-most slack by a margin exceeding any cost difference.
    let penalty = 1.0 + 2.0 * max_cost * r as f64;

    for j in 0..r {
        g.add(source, col_node(j), 1, 0.0);
    }
    let mut col_edges = vec![Vec::new(); r];
    for (i, dict) in costs.iter().enumerate() {
        for (k, per_col) in dict.iter().enumerate() {
            let a = atom_offsets[i] + k;
            for j in 0..r {
                let e = g.add(col_node(j), atom_node(a), 1, per_col[j]);
                col_edges[j].push((e, i, k));
            }
            g.add(atom_node(a), dict_node(i), 1, 0.0);
        }
    }
    let mut sink_edges = Vec::with_capacity(p);
    for (i, c) in constraints.iter().enumerate() {
        let (cap, cost) = match c.kind {
            CountKind::Exact => (c.count, 0.0),
            CountKind::AtMost => (c.count.min(costs[i].len()), penalty),
            CountKind::AtLeast => {
                return Err(Error::infeasible(Issue::UnnormalizedConstraint { dictionary: i.to_string() }))
            }
        };
        sink_edges.push(g.add(dict_node(i), sink, cap, cost));
    }

    let nodes = sink + 1;
    for _ in 0..r {
        // Residual costs can be negative; SPFA is exact without potentials.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev_edge = vec![usize::MAX; nodes];
        let mut queued = vec![false; nodes];
        let mut queue = VecDeque::new();
        dist[source] = 0.0;
        queue.push_back(source);
        queued[source] = true;
        while let Some(node) = queue.pop_front() {
            queued[node] = false;
            for &e in &g.adj[node] {
                let edge = &g.edges[e];
                if edge.cap == 0 {
                    continue;
                }
                let nd = dist[node] + edge.cost;
                // Strict improvement beyond rounding keeps the loop finite.
                if nd < dist[edge.to] - 1e-15 * (1.0 + nd.abs()) {
                    dist[edge.to] = nd;
                    prev_edge[edge.to] = e;
                    if !queued[edge.to] {
                        queued[edge.to] = true;
                        queue.push_back(edge.to);
                    }
                }
            }
        }
        if !dist[sink].is_finite() {
            let capacity = sink_edges.iter().map(|&e| g.edges[e].cap + g.edges[e ^ 1].cap).sum();
            return Err(Error::infeasible(Issue::CapacityBelowRank { capacity, rank: r }));
        }
        let mut v = sink;
        while v != source {
            let e = prev_edge[v];
            g.edges[e].cap -= 1;
            g.edges[e ^ 1].cap += 1;
            v = g.edges[e ^ 1].to;
        }
    }

    for (i, c) in constraints.iter().enumerate() {
        let used = g.edges[sink_edges[i] ^ 1].cap;
        if c.kind == CountKind::Exact && used != c.count {
            return Err(Error::infeasible(Issue::CountExceedsAtoms {
                dictionary: i.to_string(),
                count: c.count,
                atoms: used,
            }));
        }
    }

    col_edges
        .iter()
        .map(|edges| {
            edges
                .iter()
                .find(|(e, _, _)| g.edges[*e].cap == 0)
                .map(|&(_, i, k)| (i, k))
                .ok_or_else(|| Error::Contract("flow left a column unassigned".into()))
        })
        .collect()
}

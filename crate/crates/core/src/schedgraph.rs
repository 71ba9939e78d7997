//! The scheduling (conflict) graph: one node per delivery, an edge between
//! every pair of deliveries whose windows overlap.

use std::fmt::Write as _;

use crate::instances::DdppInstance;
use crate::nodeset::NodeSet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("node set has length {found}, graph has {expected} nodes")]
pub struct LengthMismatch {
    pub expected: usize,
    pub found: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedGraph {
    adjacency: Vec<NodeSet>,
    edges: Vec<(usize, usize)>,
}

impl SchedGraph {
    /// Builds a graph from an arbitrary edge list. Self-loops and duplicate
    /// edges are dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![NodeSet::empty(n); n];
        for (a, b) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range for {n} nodes");
            if a != b {
                adjacency[a].insert(b);
                adjacency[b].insert(a);
            }
        }
        let edges = (0..n).flat_map(|i| adjacency[i].nodes().filter(move |&j| j > i).map(move |j| (i, j))).collect();
        SchedGraph { adjacency, edges }
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    /// Sorted `(i, j)` pairs with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &NodeSet {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].weight()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(b)
    }

    fn check_len(&self, nodes: &NodeSet) -> Result<(), LengthMismatch> {
        if nodes.len() != self.n() {
            return Err(LengthMismatch { expected: self.n(), found: nodes.len() });
        }
        Ok(())
    }

    pub fn is_independent_set(&self, nodes: &NodeSet) -> Result<bool, LengthMismatch> {
        self.check_len(nodes)?;
        Ok(nodes.nodes().all(|v| self.adjacency[v].is_disjoint(nodes)))
    }

    /// For each selected node, the number of selected neighbors; zero for
    /// nodes outside the set.
    pub fn conflict_degrees(&self, nodes: &NodeSet) -> Result<Vec<usize>, LengthMismatch> {
        self.check_len(nodes)?;
        let mut degrees = vec![0; self.n()];
        for v in nodes.nodes() {
            degrees[v] = self.adjacency[v].intersection_count(nodes);
        }
        Ok(degrees)
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return true;
        }
        let mut seen = NodeSet::singleton(n, 0);
        let mut stack = vec![0];
        while let Some(v) = stack.pop() {
            for u in self.adjacency[v].nodes() {
                if !seen.contains(u) {
                    seen.insert(u);
                    stack.push(u);
                }
            }
        }
        seen.weight() == n
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph scheduling {\n");
        for v in 0..self.n() {
            let _ = writeln!(out, "  {v};");
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "  {a} -- {b};");
        }
        out.push_str("}\n");
        out
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes {} edges {}\n", self.n(), self.edges.len());
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }
}

/// Sweep over departures; a window conflicts with every still-open window.
pub fn build_graph(inst: &DdppInstance) -> SchedGraph {
    let d = inst.deliveries();
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by_key(|&j| (d[j].t_leave, d[j].t_return, j));
    let mut active: Vec<usize> = Vec::new();
    let mut edges = Vec::new();
    for j in order {
        active.retain(|&k| d[k].t_return > d[j].t_leave);
        edges.extend(active.iter().map(|&k| (k.min(j), k.max(j))));
        active.push(j);
    }
    SchedGraph::from_edges(d.len(), edges)
}

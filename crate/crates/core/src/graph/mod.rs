//! Causal DAGs over named variables.
//!
//! Graph values are immutable once built; every query is a pure function of
//! the graph and its arguments.

mod criterion;
mod format;
mod paths;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

pub use criterion::{find_adjustment_sets, satisfies_backdoor_criterion, CriterionReport, Violation};
pub use format::{parse_graph, to_dot};
pub use paths::{backdoor_paths, is_blocked, BlockingVerdict, NodeRole, NodeVerdict, Path, Step};

/// The 11-variable probing SCM with `D_a -> D_b`.
pub const REFERENCE_SCM: &str = include_str!("../../fixtures/probing_scm.graph");
/// The same SCM with the sample-disparity edge reversed (`D_b -> D_a`).
pub const REFERENCE_SCM_REVERSED: &str = include_str!("../../fixtures/probing_scm_reversed.graph");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub label: String,
    pub observable: bool,
    pub adjustable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalDag {
    nodes: Vec<Node>,
    index: BTreeMap<String, usize>,
    // Adjacency lists, sorted by node id.
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl CausalDag {
    /// Builds and validates a DAG. Edges are given as `(from, to)` id pairs.
    pub fn new(nodes: Vec<Node>, edges: &[(String, String)]) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(Error::DuplicateNode(node.id.clone()));
            }
            if node.adjustable && !node.observable {
                return Err(Error::LatentAdjustable(node.id.clone()));
            }
        }

        let n = nodes.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut edge_set = BTreeSet::new();
        for (from, to) in edges {
            let lookup = |id: &String| {
                index.get(id).copied().ok_or_else(|| Error::UndeclaredNode {
                    from: from.clone(),
                    to: to.clone(),
                    missing: id.clone(),
                })
            };
            let (f, t) = (lookup(from)?, lookup(to)?);
            if f == t {
                return Err(Error::Cycle(from.clone()));
            }
            if edge_set.insert((f, t)) {
                children[f].push(t);
                parents[t].push(f);
            }
        }
        let by_id = |list: &mut Vec<usize>| list.sort_by(|a, b| nodes[*a].id.cmp(&nodes[*b].id));
        parents.iter_mut().for_each(by_id);
        children.iter_mut().for_each(by_id);

        let dag = CausalDag {
            nodes,
            index,
            parents,
            children,
            edges: edge_set.into_iter().collect(),
        };
        dag.check_acyclic()?;
        Ok(dag)
    }

    fn check_acyclic(&self) -> Result<()> {
        // Kahn's algorithm; any node left with in-degree > 0 sits on a cycle.
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: Vec<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = ready.pop() {
            seen += 1;
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if seen == self.nodes.len() {
            return Ok(());
        }
        let stuck = self
            .index
            .iter()
            .find(|(_, &i)| indegree[i] > 0)
            .map(|(id, _)| id.clone())
            .unwrap_or_default();
        Err(Error::Cycle(stuck))
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    /// Edges as `(from, to)` id pairs, in declaration-independent order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.edges
            .iter()
            .map(|&(f, t)| (self.nodes[f].id.as_str(), self.nodes[t].id.as_str()))
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&f), Some(&t)) => self.children[f].contains(&t),
            _ => false,
        }
    }

    pub(crate) fn idx(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub(crate) fn id(&self, idx: usize) -> &str {
        &self.nodes[idx].id
    }

    pub(crate) fn parents_of(&self, idx: usize) -> &[usize] {
        &self.parents[idx]
    }

    pub(crate) fn children_of(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    /// Returns a copy with the `adjustable` flag overridden for `ids`.
    pub fn with_adjustable(&self, ids: &[&str], adjustable: bool) -> Result<Self> {
        let mut dag = self.clone();
        for id in ids {
            let i = dag.idx(id)?;
            if adjustable && !dag.nodes[i].observable {
                return Err(Error::LatentAdjustable(id.to_string()));
            }
            dag.nodes[i].adjustable = adjustable;
        }
        Ok(dag)
    }

    pub(crate) fn descendant_indices(&self, start: usize) -> BTreeSet<usize> {
        self.closure(start, &self.children)
    }

    fn closure(&self, start: usize, adjacency: &[Vec<usize>]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = adjacency[start].clone();
        while let Some(v) = stack.pop() {
            if out.insert(v) {
                stack.extend(&adjacency[v]);
            }
        }
        out
    }

    fn named(&self, set: BTreeSet<usize>) -> BTreeSet<String> {
        set.into_iter().map(|i| self.nodes[i].id.clone()).collect()
    }

    /// All nodes reachable from `id` along edge direction, excluding `id`.
    pub fn descendants(&self, id: &str) -> Result<BTreeSet<String>> {
        let i = self.idx(id)?;
        Ok(self.named(self.closure(i, &self.children)))
    }

    /// All nodes with a directed path into `id`, excluding `id`.
    pub fn ancestors(&self, id: &str) -> Result<BTreeSet<String>> {
        let i = self.idx(id)?;
        Ok(self.named(self.closure(i, &self.parents)))
    }

    pub fn adjustable_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.adjustable)
    }
}

/// The shipped probing SCM, parsed.
pub fn reference_scm() -> CausalDag {
    parse_graph(REFERENCE_SCM).expect("shipped fixture parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn reference_fixture_shape() {
        let dag = reference_scm();
        assert_eq!(dag.nodes().len(), 11);
        assert_eq!(dag.edges().count(), 14);
        for latent in ["L", "D_a", "D_b"] {
            assert!(!dag.node(latent).unwrap().observable);
        }
        let c = dag.node("C").unwrap();
        assert!(c.observable && !c.adjustable);
        assert!(!dag.node("I").unwrap().adjustable);
        assert!(!dag.node("E").unwrap().adjustable);
    }

    #[test]
    fn descendants_on_fixture() {
        let dag = reference_scm();
        assert_eq!(dag.descendants("M").unwrap(), set(&["I", "E"]));
        assert!(dag.descendants("E").unwrap().is_empty());
        assert_eq!(dag.descendants("L").unwrap(), set(&["C", "M", "P", "I", "X", "E"]));
        assert_eq!(dag.ancestors("M").unwrap(), set(&["C", "D_a", "L"]));
        assert!(matches!(dag.descendants("Q"), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn reversed_fixture_differs_only_in_disparity_edge() {
        let rev = parse_graph(REFERENCE_SCM_REVERSED).unwrap();
        assert!(rev.has_edge("D_b", "D_a"));
        assert!(!rev.has_edge("D_a", "D_b"));
        assert_eq!(rev.edges().count(), 14);
    }

    #[test]
    fn latent_cannot_be_made_adjustable() {
        let dag = reference_scm();
        assert!(matches!(
            dag.with_adjustable(&["L"], true),
            Err(Error::LatentAdjustable(_))
        ));
        let flipped = dag.with_adjustable(&["C"], true).unwrap();
        assert!(flipped.node("C").unwrap().adjustable);
    }
}

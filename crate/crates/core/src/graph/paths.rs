use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::CausalDag;
use crate::error::{Error, Result};

/// Direction of one step along a walk, relative to the walk order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Step {
    /// `a -> b`
    Forward,
    /// `a <- b`
    Backward,
}

/// A simple path in the skeleton of a DAG, with edge orientations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path {
    nodes: Vec<String>,
    steps: Vec<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Chain,
    Fork,
    Collider,
}

impl Path {
    pub fn new(nodes: Vec<String>, steps: Vec<Step>) -> Result<Self> {
        if nodes.len() < 2 || steps.len() + 1 != nodes.len() {
            return Err(Error::Config(format!(
                "a path needs n >= 2 nodes and n - 1 steps (got {} nodes, {} steps)",
                nodes.len(),
                steps.len()
            )));
        }
        let distinct: BTreeSet<&String> = nodes.iter().collect();
        if distinct.len() != nodes.len() {
            return Err(Error::Config("path repeats a node".into()));
        }
        Ok(Path { nodes, steps })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Role of the interior node at position `i` (0 < i < len - 1).
    pub fn role_at(&self, i: usize) -> NodeRole {
        match (self.steps[i - 1], self.steps[i]) {
            (Step::Forward, Step::Backward) => NodeRole::Collider,
            (Step::Backward, Step::Forward) => NodeRole::Fork,
            _ => NodeRole::Chain,
        }
    }

    pub fn colliders(&self) -> impl Iterator<Item = &str> {
        (1..self.nodes.len() - 1)
            .filter(|&i| self.role_at(i) == NodeRole::Collider)
            .map(|i| self.nodes[i].as_str())
    }

    /// True when the path carries association with nothing conditioned on.
    pub fn is_open_unconditioned(&self) -> bool {
        self.colliders().next().is_none()
    }

    /// `M<-C<-L->X->E` style rendering.
    pub fn ascii(&self) -> String {
        self.render("->", "<-")
    }

    fn render(&self, fwd: &str, back: &str) -> String {
        let mut out = self.nodes[0].clone();
        for (step, node) in self.steps.iter().zip(&self.nodes[1..]) {
            out.push_str(match step {
                Step::Forward => fwd,
                Step::Backward => back,
            });
            out.push_str(node);
        }
        out
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render("→", "←"))
    }
}

/// Accepts both `M<-C->X` and `M←C→X`.
impl FromStr for Path {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut steps = Vec::new();
        let mut current = String::new();
        let mut chars = s.chars().peekable();
        let push = |current: &mut String, nodes: &mut Vec<String>| -> Result<()> {
            let id = current.trim();
            if id.is_empty() {
                return Err(Error::Config(format!("malformed path `{s}`")));
            }
            nodes.push(id.to_string());
            current.clear();
            Ok(())
        };
        while let Some(c) = chars.next() {
            match c {
                '→' => {
                    push(&mut current, &mut nodes)?;
                    steps.push(Step::Forward);
                }
                '←' => {
                    push(&mut current, &mut nodes)?;
                    steps.push(Step::Backward);
                }
                '-' if chars.peek() == Some(&'>') => {
                    chars.next();
                    push(&mut current, &mut nodes)?;
                    steps.push(Step::Forward);
                }
                '<' if chars.peek() == Some(&'-') => {
                    chars.next();
                    push(&mut current, &mut nodes)?;
                    steps.push(Step::Backward);
                }
                _ => current.push(c),
            }
        }
        push(&mut current, &mut nodes)?;
        Path::new(nodes, steps)
    }
}

/// Every simple path from `treatment` to `outcome` whose first edge points
/// into `treatment`, sorted by node-id sequence. Paths containing colliders
/// are included; whether they transmit association depends on the
/// conditioning set.
pub fn backdoor_paths(dag: &CausalDag, treatment: &str, outcome: &str) -> Result<Vec<Path>> {
    let t = dag.idx(treatment)?;
    let o = dag.idx(outcome)?;
    if t == o {
        return Err(Error::SameEndpoints(treatment.to_string()));
    }

    let mut found = Vec::new();
    let mut on_path = vec![false; dag.nodes().len()];
    on_path[t] = true;
    let mut nodes = vec![t];
    let mut steps = Vec::new();
    for &p in dag.parents_of(t) {
        extend(
            dag,
            o,
            p,
            Step::Backward,
            &mut nodes,
            &mut steps,
            &mut on_path,
            &mut found,
        );
    }

    let mut paths: Vec<Path> = found
        .into_iter()
        .map(|(ns, ss)| Path {
            nodes: ns.into_iter().map(|i| dag.id(i).to_string()).collect(),
            steps: ss,
        })
        .collect();
    paths.sort_by(|a, b| a.nodes.cmp(&b.nodes).then_with(|| a.steps.cmp(&b.steps)));
    Ok(paths)
}

#[allow(clippy::too_many_arguments)]
fn extend(
    dag: &CausalDag,
    outcome: usize,
    next: usize,
    step: Step,
    nodes: &mut Vec<usize>,
    steps: &mut Vec<Step>,
    on_path: &mut [bool],
    found: &mut Vec<(Vec<usize>, Vec<Step>)>,
) {
    nodes.push(next);
    steps.push(step);
    if next == outcome {
        found.push((nodes.clone(), steps.clone()));
    } else {
        on_path[next] = true;
        for &c in dag.children_of(next) {
            if !on_path[c] {
                extend(dag, outcome, c, Step::Forward, nodes, steps, on_path, found);
            }
        }
        for &p in dag.parents_of(next) {
            if !on_path[p] {
                extend(dag, outcome, p, Step::Backward, nodes, steps, on_path, found);
            }
        }
        on_path[next] = false;
    }
    nodes.pop();
    steps.pop();
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeVerdict {
    pub node: String,
    pub role: NodeRole,
    pub blocks: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockingVerdict {
    pub blocked: bool,
    /// One entry per interior node, in path order.
    pub nodes: Vec<NodeVerdict>,
}

/// d-separation along one path: a chain or fork node blocks iff it is in
/// `z`; a collider blocks iff neither it nor any descendant is in `z`.
pub fn is_blocked<S: AsRef<str>>(dag: &CausalDag, path: &Path, z: &[S]) -> Result<BlockingVerdict> {
    let mut zset = BTreeSet::new();
    for id in z {
        zset.insert(dag.idx(id.as_ref())?);
    }
    let mut idx = Vec::with_capacity(path.nodes.len());
    for id in &path.nodes {
        idx.push(dag.idx(id).map_err(|_| Error::PathNotInGraph(path.ascii()))?);
    }
    for (w, step) in idx.windows(2).zip(&path.steps) {
        let (from, to) = match step {
            Step::Forward => (w[0], w[1]),
            Step::Backward => (w[1], w[0]),
        };
        if !dag.children_of(from).contains(&to) {
            return Err(Error::PathNotInGraph(path.ascii()));
        }
    }

    let mut verdicts = Vec::with_capacity(idx.len().saturating_sub(2));
    for (i, &v) in idx.iter().enumerate().take(idx.len() - 1).skip(1) {
        let role = path.role_at(i);
        let blocks = match role {
            NodeRole::Chain | NodeRole::Fork => zset.contains(&v),
            NodeRole::Collider => !zset.contains(&v) && dag.descendant_indices(v).is_disjoint(&zset),
        };
        verdicts.push(NodeVerdict {
            node: path.nodes[i].clone(),
            role,
            blocks,
        });
    }
    Ok(BlockingVerdict {
        blocked: verdicts.iter().any(|v| v.blocks),
        nodes: verdicts,
    })
}

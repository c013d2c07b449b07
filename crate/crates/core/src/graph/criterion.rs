use std::collections::BTreeSet;
use std::fmt;

use super::{backdoor_paths, is_blocked, CausalDag, Path};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// The conditioning set contains the treatment or the outcome itself.
    ContainsEndpoint(String),
    /// The conditioning set contains a descendant of the treatment.
    DescendantOfTreatment(String),
    /// A backdoor path stays open under the conditioning set.
    OpenPath(Path),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ContainsEndpoint(n) => write!(f, "adjusts for endpoint {n}"),
            Violation::DescendantOfTreatment(n) => write!(f, "{n} is a descendant of the treatment"),
            Violation::OpenPath(p) => write!(f, "open path {}", p.ascii()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriterionReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

pub fn satisfies_backdoor_criterion<S: AsRef<str>>(
    dag: &CausalDag,
    treatment: &str,
    outcome: &str,
    z: &[S],
) -> Result<CriterionReport> {
    let t = dag.idx(treatment)?;
    dag.idx(outcome)?;
    let mut zset = BTreeSet::new();
    for id in z {
        zset.insert(dag.idx(id.as_ref())?);
    }
    let paths = backdoor_paths(dag, treatment, outcome)?;

    let mut violations = Vec::new();
    let descendants = dag.descendant_indices(t);
    for &v in &zset {
        let id = dag.id(v).to_string();
        if id == treatment || id == outcome {
            violations.push(Violation::ContainsEndpoint(id));
        } else if descendants.contains(&v) {
            violations.push(Violation::DescendantOfTreatment(id));
        }
    }
    let mut open = Vec::new();
    for path in paths {
        if !is_blocked(dag, &path, z)?.blocked {
            open.push(path);
        }
    }
    // Shortest leak first.
    open.sort_by(|a, b| a.nodes().len().cmp(&b.nodes().len()).then_with(|| a.cmp(b)));
    violations.extend(open.into_iter().map(Violation::OpenPath));
    Ok(CriterionReport {
        valid: violations.is_empty(),
        violations,
    })
}

/// Inclusion-minimal adjustable sets of size <= `max_size` that satisfy the
/// backdoor criterion, ordered by size and then by sorted member ids.
///
/// Exhaustive subset search; intended for graphs of a few dozen nodes at most.
pub fn find_adjustment_sets(
    dag: &CausalDag,
    treatment: &str,
    outcome: &str,
    max_size: usize,
) -> Result<Vec<BTreeSet<String>>> {
    dag.idx(treatment)?;
    dag.idx(outcome)?;
    let candidates: Vec<&str> = {
        let mut ids: Vec<&str> = dag
            .adjustable_nodes()
            .map(|n| n.id.as_str())
            .filter(|&id| id != treatment && id != outcome)
            .collect();
        ids.sort_unstable();
        ids
    };
    let max_size = max_size.min(candidates.len());

    let mut minimal: Vec<BTreeSet<String>> = Vec::new();
    for size in 0..=max_size {
        let mut found_at_size = Vec::new();
        for combo in combinations(candidates.len(), size) {
            let set: BTreeSet<String> = combo.iter().map(|&i| candidates[i].to_string()).collect();
            // A valid proper subset would already be (or contain) a recorded minimal set.
            if minimal.iter().any(|m| m.is_subset(&set)) {
                continue;
            }
            let z: Vec<&str> = set.iter().map(String::as_str).collect();
            if satisfies_backdoor_criterion(dag, treatment, outcome, &z)?.valid {
                found_at_size.push(set);
            }
        }
        minimal.extend(found_at_size);
    }
    Ok(minimal)
}

/// Index combinations of `k` out of `n`, in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            if n - i < k - current.len() {
                break;
            }
            current.push(i);
            rec(i + 1, n, k, current, out);
            current.pop();
        }
    }
    rec(0, n, k, &mut current, &mut out);
    out
}

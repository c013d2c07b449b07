//! Brute-force reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's graph or metric code; graphs and
//! grids go through the library only as inputs, and results are recomputed
//! from raw edges and raw records.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use causal_probe::graph::{parse_graph, CausalDag};
use causal_probe::grid::{parse_grid, Catalog, PredictionGrid};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use unicode_normalization::UnicodeNormalization;

// ---------------------------------------------------------------- graphs

/// A small DAG as plain edge lists, over ids `V0..V{n-1}`.
#[derive(Debug, Clone)]
pub struct RawDag {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl RawDag {
    pub fn id(i: usize) -> String {
        format!("V{i}")
    }

    /// Edges follow a hidden random topological order, so ids are not sorted
    /// topologically.
    pub fn random(rng: &mut ChaCha8Rng, max_nodes: usize) -> Self {
        let n = rng.random_range(2..=max_nodes);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let density = rng.random_range(0.15..0.6);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(density) {
                    edges.push((order[a], order[b]));
                }
            }
        }
        RawDag { n, edges }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("nodes:\n");
        for i in 0..self.n {
            s.push_str(&format!("{} node {i} true true\n", Self::id(i)));
        }
        s.push_str("edges:\n");
        for &(a, b) in &self.edges {
            s.push_str(&format!("{} -> {}\n", Self::id(a), Self::id(b)));
        }
        s
    }

    pub fn to_dag(&self) -> CausalDag {
        parse_graph(&self.to_text()).expect("random dag parses")
    }

    fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a, b))
    }

    fn children(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == v).map(|e| e.1)
    }

    fn parents(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.1 == v).map(|e| e.0)
    }

    /// Strict descendants.
    pub fn descendants(&self, v: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            for c in self.children(x) {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        seen
    }

    fn ancestral_closure(&self, seed: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut seen = seed.clone();
        let mut stack: Vec<usize> = seed.iter().copied().collect();
        while let Some(x) = stack.pop() {
            for p in self.parents(x) {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// d-separation by moralizing the ancestral graph.
    pub fn d_separated(&self, x: usize, y: usize, z: &BTreeSet<usize>) -> bool {
        let mut seed = z.clone();
        seed.insert(x);
        seed.insert(y);
        let keep = self.ancestral_closure(&seed);
        let mut adj: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for &(a, b) in &self.edges {
            if keep.contains(&a) && keep.contains(&b) {
                adj.entry(a).or_default().insert(b);
                adj.entry(b).or_default().insert(a);
            }
        }
        for &v in &keep {
            let ps: Vec<usize> = self.parents(v).filter(|p| keep.contains(p)).collect();
            for i in 0..ps.len() {
                for j in i + 1..ps.len() {
                    adj.entry(ps[i]).or_default().insert(ps[j]);
                    adj.entry(ps[j]).or_default().insert(ps[i]);
                }
            }
        }
        let mut seen = BTreeSet::from([x]);
        let mut stack = vec![x];
        while let Some(v) = stack.pop() {
            if v == y {
                return false;
            }
            for &w in adj.get(&v).into_iter().flatten() {
                if !z.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        true
    }

    /// Same graph without the out-edges of `v`.
    pub fn cut_outgoing(&self, v: usize) -> RawDag {
        RawDag {
            n: self.n,
            edges: self.edges.iter().copied().filter(|e| e.0 != v).collect(),
        }
    }

    /// Backdoor criterion via the textbook characterization: no endpoint and
    /// no descendant of `t` in `z`, and `t` d-separated from `o` given `z`
    /// once the out-edges of `t` are removed.
    pub fn backdoor_valid(&self, t: usize, o: usize, z: &BTreeSet<usize>) -> bool {
        if z.contains(&t) || z.contains(&o) {
            return false;
        }
        if !z.is_disjoint(&self.descendants(t)) {
            return false;
        }
        self.cut_outgoing(t).d_separated(t, o, z)
    }

    /// Every simple path from `t` to `o` starting with an edge into `t`, found
    /// by trying all ordered selections of interior nodes. Rendered `A<-B->C`.
    pub fn backdoor_paths(&self, t: usize, o: usize) -> BTreeSet<String> {
        let others: Vec<usize> = (0..self.n).filter(|&v| v != t && v != o).collect();
        let mut out = BTreeSet::new();
        let mut seq = vec![t];
        self.extend(&others, &mut seq, o, &mut out);
        out
    }

    fn extend(&self, others: &[usize], seq: &mut Vec<usize>, o: usize, out: &mut BTreeSet<String>) {
        // close the path here
        let mut full = seq.clone();
        full.push(o);
        if self.is_backdoor_walk(&full) {
            out.insert(self.render(&full));
        }
        for &v in others {
            if !seq.contains(&v) {
                seq.push(v);
                self.extend(others, seq, o, out);
                seq.pop();
            }
        }
    }

    fn is_backdoor_walk(&self, seq: &[usize]) -> bool {
        if !self.has_edge(seq[1], seq[0]) {
            return false;
        }
        seq.windows(2)
            .all(|w| self.has_edge(w[0], w[1]) || self.has_edge(w[1], w[0]))
    }

    pub fn render(&self, seq: &[usize]) -> String {
        let mut s = Self::id(seq[0]);
        for w in seq.windows(2) {
            s.push_str(if self.has_edge(w[0], w[1]) { "->" } else { "<-" });
            s.push_str(&Self::id(w[1]));
        }
        s
    }

    /// Whether one rendered path is blocked by `z`. The path is copied into
    /// a graph of its own; every collider whose descendant (in the full
    /// graph) is conditioned on gets a fresh child that joins the
    /// conditioning set. Blocked iff the endpoints are then d-separated.
    pub fn path_blocked(&self, rendered: &str, z: &BTreeSet<usize>) -> bool {
        let seq = parse_rendered(rendered);
        let k = seq.len();
        // local ids 0..k for path nodes
        let mut local = RawDag {
            n: k,
            edges: Vec::new(),
        };
        for (i, w) in seq.windows(2).enumerate() {
            if self.has_edge(w[0], w[1]) {
                local.edges.push((i, i + 1));
            } else {
                local.edges.push((i + 1, i));
            }
        }
        let mut zl = BTreeSet::new();
        for (i, v) in seq.iter().enumerate() {
            if z.contains(v) {
                zl.insert(i);
            }
        }
        for (i, &v) in seq.iter().enumerate().take(k - 1).skip(1) {
            let collider = local.has_edge(i - 1, i) && local.has_edge(i + 1, i);
            if collider && !z.contains(&v) && !self.descendants(v).is_disjoint(z) {
                let fresh = local.n;
                local.n += 1;
                local.edges.push((i, fresh));
                zl.insert(fresh);
            }
        }
        // endpoints are never conditioned on in the local copy
        zl.remove(&0);
        zl.remove(&(k - 1));
        local.d_separated(0, k - 1, &zl)
    }
}

pub fn parse_rendered(s: &str) -> Vec<usize> {
    s.split(['-', '<', '>'])
        .filter(|t| !t.is_empty())
        .map(|t| t.trim_start_matches('V').parse().expect("V<i> id"))
        .collect()
}

/// All subsets of `items` as sets.
pub fn subsets(items: &[usize]) -> Vec<BTreeSet<usize>> {
    (0u32..1 << items.len())
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect()
}

pub fn ids(set: &BTreeSet<usize>) -> Vec<String> {
    set.iter().map(|&v| RawDag::id(v)).collect()
}

// ----------------------------------------------------------------- grids

#[derive(Debug, Clone)]
pub struct RawRecord {
    pub model: String,
    pub relation: String,
    pub instance: String,
    pub prompt: String,
    pub verb: String,
    pub predicted: String,
    pub gold: String,
}

/// One relation of a random grid: prompts in catalog order (index 0 is the
/// default), instances with their name ids (index 0 is the default).
#[derive(Debug, Clone)]
pub struct RawRelation {
    pub id: String,
    pub prompts: Vec<String>,
    pub instances: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone)]
pub struct RawGrid {
    pub models: Vec<String>,
    pub relations: Vec<RawRelation>,
    pub records: Vec<RawRecord>,
}

const GOLDS: [&str; 4] = ["café", "Zürich", "Paris", "Ōsaka"];

fn decomposed(s: &str) -> String {
    s.nfd().collect()
}

/// A random prediction: the gold in several encodings or a wrong token.
fn random_prediction(rng: &mut ChaCha8Rng, gold: &str) -> String {
    match rng.random_range(0..8) {
        0 | 1 => gold.to_string(),
        2 => format!("  {gold}\u{a0}"),
        3 => decomposed(gold),
        4 => gold.to_uppercase(),
        5 => format!(" {}", decomposed(GOLDS[rng.random_range(0..GOLDS.len())])),
        _ => GOLDS[rng.random_range(0..GOLDS.len())].to_string(),
    }
}

impl RawGrid {
    /// At most 3 models x 2 relations x 3 prompts x 3 instances x 3 names,
    /// i.e. 162 records. The first instance of each relation has two or more
    /// names so stability is defined. Model ids are shuffled in record order.
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let n_models = rng.random_range(2..=3);
        let mut models: Vec<String> = ["mB", "mA", "mC"][..n_models].iter().map(|s| s.to_string()).collect();
        models.shuffle(rng);
        let mut relations = Vec::new();
        for r in 0..rng.random_range(1..=2) {
            let rel = format!("r{r}");
            // catalog order deliberately not sorted by id
            let mut prompts: Vec<String> = (0..rng.random_range(2..=3)).map(|p| format!("{rel}p{p}")).collect();
            prompts.reverse();
            let mut instances = Vec::new();
            for i in 0..rng.random_range(1..=3) {
                let lo = if i == 0 { 2 } else { 1 };
                let names = (0..rng.random_range(lo..=3)).map(|v| format!("n{v}")).collect();
                instances.push((format!("{rel}i{i}"), names));
            }
            relations.push(RawRelation {
                id: rel,
                prompts,
                instances,
            });
        }
        let mut records = Vec::new();
        for rel in &relations {
            let golds: Vec<&str> = rel
                .instances
                .iter()
                .map(|_| GOLDS[rng.random_range(0..GOLDS.len())])
                .collect();
            for model in &models {
                for p in &rel.prompts {
                    for ((inst, names), gold) in rel.instances.iter().zip(&golds) {
                        for v in names {
                            records.push(RawRecord {
                                model: model.clone(),
                                relation: rel.id.clone(),
                                instance: inst.clone(),
                                prompt: p.clone(),
                                verb: v.clone(),
                                predicted: random_prediction(rng, gold),
                                gold: gold.to_string(),
                            });
                        }
                    }
                }
            }
        }
        records.shuffle(rng);
        RawGrid {
            models,
            relations,
            records,
        }
    }

    pub fn catalog_text(&self) -> String {
        let mut s = String::new();
        for rel in &self.relations {
            for (k, p) in rel.prompts.iter().enumerate() {
                let flag = if k == 0 { "default" } else { "-" };
                s.push_str(&format!("prompt {} {p} {flag} [S] is linked to [A].\n", rel.id));
            }
            for (inst, names) in &rel.instances {
                for (k, v) in names.iter().enumerate() {
                    let flag = if k == 0 { "default" } else { "-" };
                    s.push_str(&format!("name {inst} {v} {flag} subject {inst} form {k}\n"));
                }
            }
        }
        s
    }

    pub fn grid_text(&self) -> String {
        let mut s = String::from(causal_probe::grid::GRID_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.model, r.relation, r.instance, r.prompt, r.verb, r.predicted, r.gold
            ));
        }
        s
    }

    pub fn to_grid(&self) -> PredictionGrid {
        let catalog = Catalog::parse(&self.catalog_text()).expect("catalog parses");
        parse_grid(&self.grid_text(), &catalog).expect("grid parses")
    }

    pub fn sorted_models(&self) -> Vec<String> {
        let mut m = self.models.clone();
        m.sort();
        m
    }

    fn find(&self, model: &str, rel: &str, inst: &str, prompt: &str, verb: &str) -> &RawRecord {
        self.records
            .iter()
            .find(|r| {
                r.model == model && r.relation == rel && r.instance == inst && r.prompt == prompt && r.verb == verb
            })
            .expect("complete grid")
    }

    pub fn correct(&self, model: &str, rel: &str, inst: &str, prompt: &str, verb: &str) -> bool {
        let r = self.find(model, rel, inst, prompt, verb);
        norm(&r.predicted) == norm(&r.gold)
    }

    pub fn relation(&self, id: &str) -> &RawRelation {
        self.relations.iter().find(|r| r.id == id).expect("known relation")
    }

    /// (correct count, instance count) under default names.
    pub fn p_at_1(&self, model: &str, rel: &str, prompt: &str) -> (u64, u64) {
        let r = self.relation(rel);
        let hits = r
            .instances
            .iter()
            .filter(|(inst, names)| self.correct(model, rel, inst, prompt, &names[0]))
            .count();
        (hits as u64, r.instances.len() as u64)
    }

    /// (mean, min, max, population std) of per-prompt P@1, from integer sums.
    pub fn spread(&self, model: &str, rel: &str) -> [f64; 4] {
        let r = self.relation(rel);
        let counts: Vec<u64> = r.prompts.iter().map(|p| self.p_at_1(model, rel, p).0).collect();
        let n = r.instances.len() as f64;
        let k = counts.len() as u64;
        let s1: u64 = counts.iter().sum();
        let s2: u64 = counts.iter().map(|c| c * c).sum();
        let mean = s1 as f64 / (k as f64 * n);
        let var = (k * s2 - s1 * s1) as f64 / ((k * k) as f64 * n * n);
        let min = *counts.iter().min().unwrap() as f64 / n;
        let max = *counts.iter().max().unwrap() as f64 / n;
        [mean, min, max, var.sqrt()]
    }

    /// (stable, eligible) under the default prompt.
    pub fn stability(&self, model: &str, rel: &str) -> (usize, usize) {
        let r = self.relation(rel);
        let p = &r.prompts[0];
        let (mut stable, mut eligible) = (0, 0);
        for (inst, names) in &r.instances {
            if names.len() < 2 {
                continue;
            }
            eligible += 1;
            let preds: BTreeSet<String> = names
                .iter()
                .map(|v| norm(&self.find(model, rel, inst, p, v).predicted))
                .collect();
            if preds.len() == 1 {
                stable += 1;
            }
        }
        (stable, eligible)
    }

    /// Models ordered by hit count under `prompt`, best first, ties by id.
    pub fn prompt_ranking(&self, rel: &str, prompt: &str) -> Vec<String> {
        let mut models = self.sorted_models();
        // stable sort keeps ascending ids among equal counts
        models.sort_by_key(|m| std::cmp::Reverse(self.p_at_1(m, rel, prompt).0));
        models
    }

    pub fn rank_unstable(&self, rel: &str) -> bool {
        let r = self.relation(rel);
        let first = self.prompt_ranking(rel, &r.prompts[0]);
        r.prompts.iter().any(|p| self.prompt_ranking(rel, p) != first)
    }

    /// Mean over prompts of the mean over instances of the mean over names.
    pub fn cell_mean(&self, model: &str, rel: &str) -> f64 {
        let r = self.relation(rel);
        let mut total = 0.0;
        for p in &r.prompts {
            let mut inner = 0.0;
            for (inst, names) in &r.instances {
                let hits = names.iter().filter(|v| self.correct(model, rel, inst, p, v)).count();
                inner += hits as f64 / names.len() as f64;
            }
            total += inner / r.instances.len() as f64;
        }
        total / r.prompts.len() as f64
    }

    /// Smallest and largest single-cell correctness of a (model, relation).
    pub fn cell_bounds(&self, model: &str, rel: &str) -> (f64, f64) {
        let vals: Vec<bool> = self
            .records
            .iter()
            .filter(|r| r.model == model && r.relation == rel)
            .map(|r| norm(&r.predicted) == norm(&r.gold))
            .collect();
        let lo = if vals.iter().all(|&b| b) { 1.0 } else { 0.0 };
        let hi = if vals.iter().any(|&b| b) { 1.0 } else { 0.0 };
        (lo, hi)
    }
}

pub fn norm(s: &str) -> String {
    s.nfc().collect::<String>().trim().to_string()
}

/// Reference rank consistency: (per-model modal position and count,
/// modal ranking, its count). Quadratic on purpose.
pub fn rank_consistency_oracle(rankings: &[Vec<String>]) -> (BTreeMap<String, (usize, usize)>, Vec<String>, usize) {
    let mut per_model = BTreeMap::new();
    for m in &rankings[0] {
        let k = rankings[0].len();
        let mut best = (0, 0);
        for pos in 0..k {
            let c = rankings.iter().filter(|r| r[pos] == *m).count();
            if c > best.1 {
                best = (pos, c);
            }
        }
        per_model.insert(m.clone(), best);
    }
    let mut modal: Option<(Vec<String>, usize)> = None;
    for r in rankings {
        let c = rankings.iter().filter(|q| *q == r).count();
        modal = match modal {
            Some((mr, mc)) if mc > c || (mc == c && mr <= *r) => Some((mr, mc)),
            _ => Some((r.clone(), c)),
        };
    }
    let (mr, mc) = modal.expect("non-empty");
    (per_model, mr, mc)
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

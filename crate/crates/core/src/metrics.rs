//! Bias diagnostics and ranking statistics over prediction grids.
//!
//! All reductions run in a fixed order (sorted ids, catalog order for
//! prompts), so results are bit-identical regardless of scheduling.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::grid::PredictionGrid;

/// How each instance is verbalized when scoring a single prompt.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum VerbalizationPolicy {
    /// The catalog default name of every instance.
    #[default]
    Default,
    /// An explicit verbalization id per instance id.
    Fixed(BTreeMap<String, String>),
}

pub(crate) fn default_verbalizations(grid: &PredictionGrid, relation: usize) -> Result<Vec<usize>> {
    grid.relations()[relation]
        .instances
        .iter()
        .map(|inst| {
            inst.default_verbalization.ok_or_else(|| Error::NoDefault {
                kind: "verbalization",
                id: inst.id.clone(),
            })
        })
        .collect()
}

pub(crate) fn default_prompt(grid: &PredictionGrid, relation: usize) -> Result<usize> {
    let rel = &grid.relations()[relation];
    rel.default_prompt.ok_or_else(|| Error::NoDefault {
        kind: "prompt",
        id: rel.id.clone(),
    })
}

fn resolve_policy(grid: &PredictionGrid, relation: usize, policy: &VerbalizationPolicy) -> Result<Vec<usize>> {
    match policy {
        VerbalizationPolicy::Default => default_verbalizations(grid, relation),
        VerbalizationPolicy::Fixed(map) => grid.relations()[relation]
            .instances
            .iter()
            .map(|inst| {
                let wanted = map
                    .get(&inst.id)
                    .ok_or_else(|| Error::Config(format!("policy has no verbalization for instance `{}`", inst.id)))?;
                inst.verbalization_index(wanted).ok_or_else(|| Error::UnknownId {
                    kind: "verbalization",
                    id: format!("{}/{}", inst.id, wanted),
                })
            })
            .collect(),
    }
}

/// P@1 by position with one verbalization index per instance.
pub(crate) fn p_at_1_idx(grid: &PredictionGrid, model: usize, relation: usize, prompt: usize, verbs: &[usize]) -> f64 {
    let n = grid.relations()[relation].instances.len();
    grid.correct_count(model, relation, prompt, |i| verbs[i]) as f64 / n as f64
}

/// Fraction of the relation's instances predicted correctly with `prompt_id`.
pub fn precision_at_1(
    grid: &PredictionGrid,
    model: &str,
    relation: &str,
    prompt_id: &str,
    policy: &VerbalizationPolicy,
) -> Result<f64> {
    let m = grid.require_model(model)?;
    let r = grid.require_relation(relation)?;
    let rel = &grid.relations()[r];
    let p = rel.prompt_index(prompt_id).ok_or_else(|| Error::UnknownId {
        kind: "prompt",
        id: prompt_id.to_string(),
    })?;
    if rel.instances.is_empty() {
        return Err(Error::EmptyRelation(relation.to_string()));
    }
    let verbs = resolve_policy(grid, r, policy)?;
    Ok(p_at_1_idx(grid, m, r, p, &verbs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl SpreadStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        SpreadStats {
            mean,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationSpread {
    pub relation: String,
    /// (prompt id, P@1) in catalog order.
    pub per_prompt: Vec<(String, f64)>,
    pub stats: SpreadStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpread {
    pub model: String,
    pub relations: Vec<RelationSpread>,
    /// Each statistic averaged over relations with equal weight.
    pub macro_avg: SpreadStats,
}

/// P@1 of every prompt of a relation under default verbalizations.
pub(crate) fn per_prompt_p_at_1(grid: &PredictionGrid, model: usize, relation: usize) -> Result<Vec<f64>> {
    let rel = &grid.relations()[relation];
    if rel.instances.is_empty() {
        return Err(Error::EmptyRelation(rel.id.clone()));
    }
    let verbs = default_verbalizations(grid, relation)?;
    Ok((0..rel.prompts.len())
        .map(|p| p_at_1_idx(grid, model, relation, p, &verbs))
        .collect())
}

pub fn prompt_spread(grid: &PredictionGrid, model: &str) -> Result<PromptSpread> {
    let m = grid.require_model(model)?;
    let mut relations = Vec::with_capacity(grid.relations().len());
    for (r, rel) in grid.relations().iter().enumerate() {
        if rel.prompts.len() < 2 {
            return Err(Error::SinglePrompt(rel.id.clone()));
        }
        let values = per_prompt_p_at_1(grid, m, r)?;
        relations.push(RelationSpread {
            relation: rel.id.clone(),
            stats: SpreadStats::of(&values),
            per_prompt: rel.prompts.iter().cloned().zip(values).collect(),
        });
    }
    if relations.is_empty() {
        return Err(Error::Grid("grid has no relations".into()));
    }
    let n = relations.len() as f64;
    let avg = |f: fn(&SpreadStats) -> f64| relations.iter().map(|r| f(&r.stats)).sum::<f64>() / n;
    let macro_avg = SpreadStats {
        mean: avg(|s| s.mean),
        min: avg(|s| s.min),
        max: avg(|s| s.max),
        std: avg(|s| s.std),
    };
    Ok(PromptSpread {
        model: model.to_string(),
        relations,
        macro_avg,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationStability {
    pub relation: String,
    pub stable: usize,
    /// Instances with at least two verbalizations.
    pub eligible: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerbalizationStability {
    pub model: String,
    pub relations: Vec<RelationStability>,
    pub macro_avg: f64,
}

/// Share of instances whose prediction under the default prompt is the same
/// token for every verbalization. Single-verbalization instances are left
/// out of the denominator.
pub fn verbalization_stability(grid: &PredictionGrid, model: &str) -> Result<VerbalizationStability> {
    let m = grid.require_model(model)?;
    let mut relations = Vec::new();
    for (r, rel) in grid.relations().iter().enumerate() {
        let p = default_prompt(grid, r)?;
        let (mut stable, mut eligible) = (0, 0);
        for (i, inst) in rel.instances.iter().enumerate() {
            let nv = inst.verbalizations.len();
            if nv < 2 {
                continue;
            }
            eligible += 1;
            let cell = |v| crate::grid::Cell {
                model: m,
                relation: r,
                instance: i,
                prompt: p,
                verbalization: v,
            };
            let first = grid.prediction_class_at(cell(0));
            if (1..nv).all(|v| grid.prediction_class_at(cell(v)) == first) {
                stable += 1;
            }
        }
        if eligible == 0 {
            return Err(Error::StabilityUndefined(rel.id.clone()));
        }
        relations.push(RelationStability {
            relation: rel.id.clone(),
            stable,
            eligible,
            fraction: stable as f64 / eligible as f64,
        });
    }
    if relations.is_empty() {
        return Err(Error::Grid("grid has no relations".into()));
    }
    let macro_avg = relations.iter().map(|r| r.fraction).sum::<f64>() / relations.len() as f64;
    Ok(VerbalizationStability {
        model: model.to_string(),
        relations,
        macro_avg,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    /// Model ids, best first.
    pub order: Vec<String>,
    pub scores: BTreeMap<String, f64>,
    /// Whether two models had equal scores and the id tie-break decided.
    pub tie: bool,
}

impl Ranking {
    pub fn position(&self, model: &str) -> Option<usize> {
        self.order.iter().position(|m| m == model)
    }
}

/// Descending by score; equal scores fall back to ascending model id.
pub fn rank_models(scores: &BTreeMap<String, f64>) -> Ranking {
    let mut order: Vec<(&String, f64)> = scores.iter().map(|(k, &v)| (k, v)).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tie = order.windows(2).any(|w| w[0].1.total_cmp(&w[1].1) == Ordering::Equal);
    Ranking {
        order: order.into_iter().map(|(k, _)| k.clone()).collect(),
        scores: scores.clone(),
        tie,
    }
}

/// Same as [`rank_models`] over positional scores; ids must be sorted.
pub(crate) fn rank_indices(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankInstability {
    /// (relation id, unstable) per relation.
    pub relations: Vec<(String, bool)>,
    pub fraction: f64,
}

/// Fraction of relations where the model ranking is not the same for all
/// prompts. Any strict ordering difference counts.
pub fn prompt_rank_instability(grid: &PredictionGrid) -> Result<RankInstability> {
    let n_models = grid.models().len();
    if n_models < 2 {
        return Err(Error::TooFewModels {
            required: 2,
            found: n_models,
        });
    }
    let mut relations = Vec::new();
    for (r, rel) in grid.relations().iter().enumerate() {
        if rel.prompts.len() < 2 {
            return Err(Error::SinglePrompt(rel.id.clone()));
        }
        let per_model: Vec<Vec<f64>> = (0..n_models)
            .map(|m| per_prompt_p_at_1(grid, m, r))
            .collect::<Result<_>>()?;
        let ranking_for = |p: usize| rank_indices(&per_model.iter().map(|v| v[p]).collect::<Vec<_>>());
        let first = ranking_for(0);
        let unstable = (1..rel.prompts.len()).any(|p| ranking_for(p) != first);
        relations.push((rel.id.clone(), unstable));
    }
    if relations.is_empty() {
        return Err(Error::Grid("grid has no relations".into()));
    }
    let unstable = relations.iter().filter(|(_, u)| *u).count();
    Ok(RankInstability {
        fraction: unstable as f64 / relations.len() as f64,
        relations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConsistency {
    /// Most frequent 0-based rank position; ties go to the better position.
    pub modal_position: usize,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankConsistency {
    pub runtimes: usize,
    pub per_model: BTreeMap<String, ModelConsistency>,
    /// Most frequent full ranking; ties go to the lexicographically smallest.
    pub modal_ranking: Vec<String>,
    pub overall_count: usize,
    pub overall: f64,
}

/// Frequency of each model's modal rank, and of the modal full ranking,
/// across runtimes.
pub fn rank_consistency<S: AsRef<str>>(rankings: &[Vec<S>]) -> Result<RankConsistency> {
    let first = rankings
        .first()
        .ok_or_else(|| Error::Config("rank consistency needs at least one runtime".into()))?;
    let mut universe: Vec<&str> = first.iter().map(AsRef::as_ref).collect();
    universe.sort_unstable();
    if universe.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InconsistentUniverse);
    }
    let k = universe.len();
    let mut position_counts: BTreeMap<&str, Vec<usize>> = universe.iter().map(|&m| (m, vec![0; k])).collect();
    let mut vector_counts: HashMap<Vec<&str>, usize> = HashMap::new();
    for ranking in rankings {
        let vector: Vec<&str> = ranking.iter().map(AsRef::as_ref).collect();
        let mut sorted = vector.clone();
        sorted.sort_unstable();
        if sorted != universe {
            return Err(Error::InconsistentUniverse);
        }
        for (pos, m) in vector.iter().enumerate() {
            position_counts.get_mut(m).expect("checked universe")[pos] += 1;
        }
        *vector_counts.entry(vector).or_default() += 1;
    }

    let n = rankings.len();
    let per_model = position_counts
        .into_iter()
        .map(|(m, counts)| {
            // max_by_key keeps the last maximum; scan reversed to prefer the better position
            let (modal_position, &count) = counts
                .iter()
                .enumerate()
                .rev()
                .max_by_key(|(_, &c)| c)
                .expect("non-empty universe");
            (
                m.to_string(),
                ModelConsistency {
                    modal_position,
                    count,
                    fraction: count as f64 / n as f64,
                },
            )
        })
        .collect();
    let (modal, overall_count) = vector_counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .expect("at least one runtime");
    Ok(RankConsistency {
        runtimes: n,
        per_model,
        modal_ranking: modal.into_iter().map(str::to_string).collect(),
        overall_count,
        overall: overall_count as f64 / n as f64,
    })
}

/// One row per (model, relation, prompt) with default verbalizations, in
/// grid order. Box-plot input.
pub fn prompt_plot_rows(grid: &PredictionGrid) -> Result<Vec<(String, String, String, f64)>> {
    let mut rows = Vec::new();
    for (m, model) in grid.models().iter().enumerate() {
        for (r, rel) in grid.relations().iter().enumerate() {
            for (p, value) in per_prompt_p_at_1(grid, m, r)?.into_iter().enumerate() {
                rows.push((model.clone(), rel.id.clone(), rel.prompts[p].clone(), value));
            }
        }
    }
    Ok(rows)
}

//! Backdoor-adjusted ability estimates and the three evaluation modes.
//!
//! The adjusted score of a model on a relation is
//!
//! ```text
//! sum_p w(p) * (1/N) * sum_i sum_x w_i(x) * correct(p, i, x)
//! ```
//!
//! where `p` ranges over the sampled prompts, `x` over the sampled names of
//! instance `i`, and `N` is the number of instances. Prompt and name weights
//! are independent, so the joint weight factorizes.
//!
//! The grid carries the catalog projection it was built from (prompt and
//! name lists in catalog order, default flags), so everything here reads ids
//! and defaults off the grid.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::PredictionGrid;
use crate::metrics::{default_prompt, default_verbalizations, p_at_1_idx};

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// How many prompts (or names) to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleSize {
    #[default]
    All,
    Count(usize),
}

impl FromStr for SampleSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(SampleSize::All);
        }
        match s.parse::<usize>() {
            Ok(0) => Err(Error::Config("sample size must be positive".into())),
            Ok(n) => Ok(SampleSize::Count(n)),
            Err(_) => Err(Error::Config(format!(
                "sample size must be ALL or a positive integer, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for SampleSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSize::All => f.write_str("ALL"),
            SampleSize::Count(n) => write!(f, "{n}"),
        }
    }
}

/// Explicit prior weights. A relation (or instance) without an entry is
/// weighted uniformly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Weights {
    /// relation id -> prompt id -> weight
    pub prompts: BTreeMap<String, BTreeMap<String, f64>>,
    /// instance id -> verbalization id -> weight
    pub verbalizations: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Weights {
    /// Lines of `prompt <relation> <prompt_id> <w>` or
    /// `name <instance> <verbalization_id> <w>`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut weights = Weights::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [kind, owner, id, w] = fields[..] else {
                return Err(Error::syntax(i + 1, "expected `prompt|name <owner> <id> <weight>`"));
            };
            let w: f64 = w
                .parse()
                .map_err(|_| Error::syntax(i + 1, format!("invalid weight `{w}`")))?;
            let table = match kind {
                "prompt" => &mut weights.prompts,
                "name" => &mut weights.verbalizations,
                other => return Err(Error::syntax(i + 1, format!("unknown record kind `{other}`"))),
            };
            if table
                .entry(owner.to_string())
                .or_default()
                .insert(id.to_string(), w)
                .is_some()
            {
                return Err(Error::syntax(i + 1, format!("duplicate weight for `{owner}`/`{id}`")));
            }
        }
        Ok(weights)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub enum Distribution {
    #[default]
    Uniform,
    Weighted(Weights),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterventionConfig {
    pub k_p: SampleSize,
    pub k_x: SampleSize,
    pub distribution: Distribution,
    pub seed: u64,
}

impl InterventionConfig {
    /// Both sample sizes are ALL, so no randomness is involved.
    pub fn is_exhaustive(&self) -> bool {
        self.k_p == SampleSize::All && self.k_x == SampleSize::All
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Original,
    Random,
    Intervention,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Original, Mode::Random, Mode::Intervention];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Original => "original",
            Mode::Random => "random",
            Mode::Intervention => "intervention",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => Ok(Mode::Original),
            "random" => Ok(Mode::Random),
            "intervention" => Ok(Mode::Intervention),
            _ => Err(Error::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationConfig {
    pub relation: String,
    /// Sampled prompts in catalog order.
    pub prompts: Vec<Selection>,
    /// (instance id, sampled names in catalog order), instances sorted by id.
    pub instances: Vec<(String, Vec<Selection>)>,
    /// A requested sample size exceeded what was available.
    pub clamped: bool,
}

/// Prompt and name selections per relation; also serves as provenance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Configuration {
    pub relations: Vec<RelationConfig>,
}

impl Configuration {
    pub fn clamped(&self) -> bool {
        self.relations.iter().any(|r| r.clamped)
    }

    /// Sidecar text: one `prompts` line and one `names` line per instance.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let list = |sel: &[Selection]| {
            sel.iter()
                .map(|s| format!("{}:{}", s.id, s.weight))
                .collect::<Vec<_>>()
                .join(",")
        };
        for rel in &self.relations {
            let _ = writeln!(out, "prompts {} {}", rel.relation, list(&rel.prompts));
            for (inst, names) in &rel.instances {
                let _ = writeln!(out, "names {} {} {}", rel.relation, inst, list(names));
            }
        }
        out
    }
}

/// Index form of a [`RelationConfig`], resolved against one grid.
#[derive(Debug, Clone)]
pub(crate) struct Resolved {
    pub relation: usize,
    pub prompts: Vec<(usize, f64)>,
    pub verbs: Vec<Vec<(usize, f64)>>,
    pub clamped: bool,
}

impl Resolved {
    /// Adjusted score for one model. Prompts and names are kept in catalog
    /// order, which fixes the summation order.
    ///
    /// Each weighted sum is divided by its own realized weight total. The
    /// weights already sum to 1 up to rounding; dividing keeps the result
    /// inside [worst cell, best cell] in floating point too.
    pub fn score(&self, grid: &PredictionGrid, model: usize) -> f64 {
        let n = self.verbs.len() as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for &(p, wp) in &self.prompts {
            let mut inner = 0.0;
            for (i, names) in self.verbs.iter().enumerate() {
                let correct = grid.correct_slice(model, self.relation, p, i);
                let (mut hit, mut all) = (0.0, 0.0);
                for &(v, wv) in names {
                    if correct[v] {
                        hit += wv;
                    }
                    all += wv;
                }
                inner += hit / all;
            }
            num += wp * (inner / n);
            den += wp;
        }
        num / den
    }

    fn to_config(&self, grid: &PredictionGrid) -> RelationConfig {
        let rel = &grid.relations()[self.relation];
        RelationConfig {
            relation: rel.id.clone(),
            prompts: self
                .prompts
                .iter()
                .map(|&(p, weight)| Selection {
                    id: rel.prompts[p].clone(),
                    weight,
                })
                .collect(),
            instances: rel
                .instances
                .iter()
                .zip(&self.verbs)
                .map(|(inst, names)| {
                    let sel = names
                        .iter()
                        .map(|&(v, weight)| Selection {
                            id: inst.verbalizations[v].clone(),
                            weight,
                        })
                        .collect();
                    (inst.id.clone(), sel)
                })
                .collect(),
            clamped: self.clamped,
        }
    }
}

/// Draws `size` of `n` positions without replacement, returned ascending.
fn draw(rng: &mut impl Rng, n: usize, size: SampleSize) -> (Vec<usize>, bool) {
    match size {
        SampleSize::All => ((0..n).collect(), false),
        SampleSize::Count(k) if k >= n => ((0..n).collect(), k > n),
        SampleSize::Count(k) => {
            let mut picked = index::sample(rng, n, k).into_vec();
            picked.sort_unstable();
            (picked, false)
        }
    }
}

/// Attaches weights to the drawn positions and renormalizes them to sum to 1.
fn weigh(
    owner: &str,
    ids: &[String],
    picked: Vec<usize>,
    prior: Option<&BTreeMap<String, f64>>,
) -> Result<Vec<(usize, f64)>> {
    let Some(prior) = prior else {
        let w = 1.0 / picked.len() as f64;
        return Ok(picked.into_iter().map(|i| (i, w)).collect());
    };
    if prior.len() != ids.len() || ids.iter().any(|id| !prior.contains_key(id)) {
        return Err(Error::WeightMismatch(format!(
            "weights for `{owner}` must cover exactly {{{}}}",
            ids.join(", ")
        )));
    }
    if prior.values().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::WeightMismatch(format!(
            "weights for `{owner}` must be finite and non-negative"
        )));
    }
    let sum: f64 = ids.iter().map(|id| prior[id]).sum();
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::WeightMismatch(format!(
            "weights for `{owner}` sum to {sum}, expected 1"
        )));
    }
    let sampled: f64 = picked.iter().map(|&i| prior[&ids[i]]).sum();
    if sampled <= 0.0 {
        return Err(Error::EmptySample(owner.to_string()));
    }
    Ok(picked.into_iter().map(|i| (i, prior[&ids[i]] / sampled)).collect())
}

pub(crate) fn sample_resolved(
    grid: &PredictionGrid,
    relation: usize,
    config: &InterventionConfig,
    rng: &mut impl Rng,
) -> Result<Resolved> {
    let rel = &grid.relations()[relation];
    if rel.instances.is_empty() {
        return Err(Error::EmptyRelation(rel.id.clone()));
    }
    let weights = match &config.distribution {
        Distribution::Uniform => None,
        Distribution::Weighted(w) => Some(w),
    };
    let (picked, mut clamped) = draw(rng, rel.prompts.len(), config.k_p);
    let prompts = weigh(
        &rel.id,
        &rel.prompts,
        picked,
        weights.and_then(|w| w.prompts.get(&rel.id)),
    )?;
    let mut verbs = Vec::with_capacity(rel.instances.len());
    for inst in &rel.instances {
        let (picked, c) = draw(rng, inst.verbalizations.len(), config.k_x);
        clamped |= c;
        let prior = weights.and_then(|w| w.verbalizations.get(&inst.id));
        verbs.push(weigh(&inst.id, &inst.verbalizations, picked, prior)?);
    }
    Ok(Resolved {
        relation,
        prompts,
        verbs,
        clamped,
    })
}

pub(crate) fn original_resolved(grid: &PredictionGrid, relation: usize) -> Result<Resolved> {
    let p = default_prompt(grid, relation)?;
    let verbs = default_verbalizations(grid, relation)?;
    Ok(Resolved {
        relation,
        prompts: vec![(p, 1.0)],
        verbs: verbs.into_iter().map(|v| vec![(v, 1.0)]).collect(),
        clamped: false,
    })
}

/// One prompt for the relation and one name per instance, uniformly.
pub(crate) fn random_draw(grid: &PredictionGrid, relation: usize, rng: &mut impl Rng) -> (usize, Vec<usize>) {
    let rel = &grid.relations()[relation];
    let p = rng.random_range(0..rel.prompts.len());
    let verbs = rel
        .instances
        .iter()
        .map(|inst| rng.random_range(0..inst.verbalizations.len()))
        .collect();
    (p, verbs)
}

fn resolve_relations<S: AsRef<str>>(grid: &PredictionGrid, relations: &[S]) -> Result<Vec<usize>> {
    let mut idx = relations
        .iter()
        .map(|r| grid.require_relation(r.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// Samples prompts and names for each listed relation. `ALL` keeps the full
/// lists in catalog order; a finite size draws without replacement and is
/// clamped to what is available.
pub fn sample_configuration<S: AsRef<str>>(
    grid: &PredictionGrid,
    relations: &[S],
    config: &InterventionConfig,
) -> Result<Configuration> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let relations = resolve_relations(grid, relations)?
        .into_iter()
        .map(|r| sample_resolved(grid, r, config, &mut rng).map(|res| res.to_config(grid)))
        .collect::<Result<_>>()?;
    Ok(Configuration { relations })
}

/// Scores one model on one relation under an explicit configuration.
pub fn score_configuration(grid: &PredictionGrid, model: &str, config: &RelationConfig) -> Result<f64> {
    let m = grid.require_model(model)?;
    let r = grid.require_relation(&config.relation)?;
    let rel = &grid.relations()[r];
    if rel.instances.is_empty() {
        return Err(Error::EmptyRelation(rel.id.clone()));
    }
    if config.prompts.is_empty() {
        return Err(Error::EmptySample(rel.id.clone()));
    }
    let mut prompts = config
        .prompts
        .iter()
        .map(|s| {
            rel.prompt_index(&s.id)
                .map(|p| (p, s.weight))
                .ok_or_else(|| Error::UnknownId {
                    kind: "prompt",
                    id: s.id.clone(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    prompts.sort_by_key(|&(p, _)| p);
    if config.instances.len() != rel.instances.len() {
        return Err(Error::WeightMismatch(format!(
            "configuration for `{}` lists {} instances, grid has {}",
            rel.id,
            config.instances.len(),
            rel.instances.len()
        )));
    }
    let mut verbs = vec![Vec::new(); rel.instances.len()];
    for (inst_id, names) in &config.instances {
        let i = rel.instance_index(inst_id).ok_or_else(|| Error::UnknownId {
            kind: "instance",
            id: inst_id.clone(),
        })?;
        if names.is_empty() {
            return Err(Error::EmptySample(inst_id.clone()));
        }
        let inst = &rel.instances[i];
        let mut resolved = names
            .iter()
            .map(|s| {
                inst.verbalization_index(&s.id)
                    .map(|v| (v, s.weight))
                    .ok_or_else(|| Error::UnknownId {
                        kind: "verbalization",
                        id: format!("{inst_id}/{}", s.id),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        resolved.sort_by_key(|&(v, _)| v);
        verbs[i] = resolved;
    }
    let positive = |ws: &mut dyn Iterator<Item = f64>| {
        let mut sum = 0.0;
        for w in ws {
            if !w.is_finite() || w < 0.0 {
                return false;
            }
            sum += w;
        }
        sum > 0.0
    };
    if !positive(&mut prompts.iter().map(|s| s.1)) || !verbs.iter().all(|v| positive(&mut v.iter().map(|s| s.1))) {
        return Err(Error::WeightMismatch(format!(
            "configuration for `{}` needs finite non-negative weights with a positive sum",
            rel.id
        )));
    }
    Ok(Resolved {
        relation: r,
        prompts,
        verbs,
        clamped: false,
    }
    .score(grid, m))
}

/// Backdoor-adjusted score of `model` on `relation`.
pub fn adjusted_score(grid: &PredictionGrid, model: &str, relation: &str, config: &InterventionConfig) -> Result<f64> {
    let m = grid.require_model(model)?;
    let r = grid.require_relation(relation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(sample_resolved(grid, r, config, &mut rng)?.score(grid, m))
}

/// Per-(model, relation) ability estimates under one evaluation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub mode: Mode,
    pub models: Vec<String>,
    pub relations: Vec<String>,
    /// Model-major: `scores[m * relations.len() + r]`.
    scores: Vec<f64>,
    pub provenance: Configuration,
}

impl ScoreTable {
    pub fn get(&self, model: &str, relation: &str) -> Option<f64> {
        let m = self.models.iter().position(|x| x == model)?;
        let r = self.relations.iter().position(|x| x == relation)?;
        Some(self.scores[m * self.relations.len() + r])
    }

    /// (model, relation, score) in model then relation order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.models.iter().enumerate().flat_map(move |(m, model)| {
            self.relations
                .iter()
                .enumerate()
                .map(move |(r, rel)| (model.as_str(), rel.as_str(), self.scores[m * self.relations.len() + r]))
        })
    }

    /// Macro average over the table's relations per model.
    pub fn macro_average(&self) -> BTreeMap<String, f64> {
        let n = self.relations.len();
        self.models
            .iter()
            .enumerate()
            .map(|(m, model)| {
                let sum: f64 = self.scores[m * n..(m + 1) * n].iter().sum();
                (model.clone(), sum / n as f64)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,model_id,relation_id,score\n");
        for (m, r, s) in self.entries() {
            let _ = writeln!(out, "{},{m},{r},{s}", self.mode);
        }
        out
    }
}

/// Evaluates every model on the listed relations. `original` uses default
/// prompts and names, `random` draws one prompt per relation and one name
/// per instance from `config.seed`, `intervention` computes the adjusted
/// score under `config`.
pub fn evaluate_mode<S: AsRef<str>>(
    grid: &PredictionGrid,
    mode: Mode,
    relations: &[S],
    config: &InterventionConfig,
) -> Result<ScoreTable> {
    let rel_idx = resolve_relations(grid, relations)?;
    if rel_idx.is_empty() {
        return Err(Error::Config("no relations selected".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut resolved = Vec::with_capacity(rel_idx.len());
    for &r in &rel_idx {
        let res = match mode {
            Mode::Original => original_resolved(grid, r)?,
            Mode::Random => {
                let rel = &grid.relations()[r];
                if rel.instances.is_empty() {
                    return Err(Error::EmptyRelation(rel.id.clone()));
                }
                let (p, verbs) = random_draw(grid, r, &mut rng);
                Resolved {
                    relation: r,
                    prompts: vec![(p, 1.0)],
                    verbs: verbs.into_iter().map(|v| vec![(v, 1.0)]).collect(),
                    clamped: false,
                }
            }
            Mode::Intervention => sample_resolved(grid, r, config, &mut rng)?,
        };
        resolved.push(res);
    }
    let n_models = grid.models().len();
    let mut scores = Vec::with_capacity(n_models * resolved.len());
    for m in 0..n_models {
        for res in &resolved {
            let s = if res.prompts.len() == 1 && res.verbs.iter().all(|v| v.len() == 1) {
                let verbs: Vec<usize> = res.verbs.iter().map(|v| v[0].0).collect();
                p_at_1_idx(grid, m, res.relation, res.prompts[0].0, &verbs)
            } else {
                res.score(grid, m)
            };
            scores.push(s);
        }
    }
    Ok(ScoreTable {
        mode,
        models: grid.models().to_vec(),
        relations: rel_idx.iter().map(|&r| grid.relations()[r].id.clone()).collect(),
        scores,
        provenance: Configuration {
            relations: resolved.iter().map(|r| r.to_config(grid)).collect(),
        },
    })
}

/// All relation ids of a grid, sorted.
pub fn all_relations(grid: &PredictionGrid) -> Vec<String> {
    grid.relations().iter().map(|r| r.id.clone()).collect()
}

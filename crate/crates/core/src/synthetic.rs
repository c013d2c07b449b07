//! Prediction grids drawn from a known ability model with planted biases.
//!
//! A cell is correct with probability
//! `logistic(ability + prompt_affinity + verbalization_affinity + disparity_shift)`.
//! Incorrect cells predict a distractor that depends only on the instance
//! and the prompt.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Catalog, Cell, GridBuilder, Manifest, PredictionGrid, PromptEntry, Verbalization};
use crate::metrics::{rank_models, Ranking};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModel {
    pub id: String,
    /// relation id -> latent ability; missing relations count as 0.
    pub ability: BTreeMap<String, f64>,
}

/// Ground truth and bias knobs. Missing affinity entries are 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticSpec {
    pub models: Vec<SyntheticModel>,
    /// (model id, prompt id) -> shift
    pub prompt_affinity: BTreeMap<(String, String), f64>,
    /// (model id, verbalization id) -> shift
    pub verbalization_affinity: BTreeMap<(String, String), f64>,
    /// (model id, relation id) -> shift
    pub disparity_shift: BTreeMap<(String, String), f64>,
    pub seed: u64,
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// relation id -> (instance id, gold token), instances in any order.
pub type Facts = BTreeMap<String, Vec<(String, String)>>;

/// A spec together with the catalog and facts it is generated over.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: SyntheticSpec,
    pub catalog: Catalog,
    pub facts: Facts,
}

/// All entries of one model in a (model, id) keyed table.
fn row<'a>(map: &'a BTreeMap<(String, String), f64>, model: &str) -> BTreeMap<&'a str, f64> {
    map.range((model.to_string(), String::new())..)
        .take_while(|((m, _), _)| m == model)
        .map(|((_, id), v)| (id.as_str(), *v))
        .collect()
}

fn check_spec(spec: &SyntheticSpec, catalog: &Catalog, facts: &Facts) -> Result<()> {
    let models: BTreeSet<&str> = spec.models.iter().map(|m| m.id.as_str()).collect();
    if models.len() != spec.models.len() {
        return Err(Error::Scenario("duplicate model id".into()));
    }
    if models.is_empty() {
        return Err(Error::Scenario("at least one model is required".into()));
    }
    let relations: BTreeSet<&str> = facts.keys().map(String::as_str).collect();
    let prompts = catalog.prompt_ids();
    let verbs: BTreeSet<&str> = catalog
        .instances()
        .flat_map(|i| catalog.verbalizations(i).unwrap_or_default())
        .map(|v| v.id.as_str())
        .collect();
    for m in &spec.models {
        if let Some(r) = m.ability.keys().find(|r| !relations.contains(r.as_str())) {
            return Err(Error::Scenario(format!(
                "ability for unknown relation `{r}` (model `{}`)",
                m.id
            )));
        }
    }
    let check = |map: &BTreeMap<(String, String), f64>, what: &str, known: &dyn Fn(&str) -> bool| {
        for ((m, id), v) in map {
            if !models.contains(m.as_str()) {
                return Err(Error::Scenario(format!("{what} for unknown model `{m}`")));
            }
            if !known(id) {
                return Err(Error::Scenario(format!("{what} for unknown id `{id}`")));
            }
            if !v.is_finite() {
                return Err(Error::Scenario(format!("{what} for (`{m}`, `{id}`) is not finite")));
            }
        }
        Ok(())
    };
    check(&spec.prompt_affinity, "prompt affinity", &|id| prompts.contains(id))?;
    check(&spec.verbalization_affinity, "verbalization affinity", &|id| {
        verbs.contains(id)
    })?;
    check(&spec.disparity_shift, "disparity shift", &|id| relations.contains(id))?;
    for (rel, list) in facts {
        let mut seen = BTreeSet::new();
        for (inst, gold) in list {
            if !seen.insert(inst) {
                return Err(Error::Scenario(format!("instance `{inst}` listed twice for `{rel}`")));
            }
            if gold.trim().is_empty() || gold.contains(char::is_whitespace) {
                return Err(Error::Scenario(format!(
                    "gold for ({rel}, {inst}) must be one non-empty token"
                )));
            }
        }
    }
    Ok(())
}

/// Distractor for an incorrect cell: another gold of the same relation
/// when one exists, otherwise a token derived from the gold.
fn distractors(golds: &[&str], n_prompts: usize) -> Vec<Vec<String>> {
    let mut pool: Vec<&str> = golds.to_vec();
    pool.sort_unstable();
    pool.dedup();
    golds
        .iter()
        .map(|gold| {
            (0..n_prompts)
                .map(|p| {
                    if pool.len() < 2 {
                        return format!("{gold}~{p}");
                    }
                    let at = pool.binary_search(gold).expect("gold is in pool");
                    let step = 1 + p % (pool.len() - 1);
                    pool[(at + step) % pool.len()].to_string()
                })
                .collect()
        })
        .collect()
}

/// Draws every cell of the grid. Each (model, relation) pair has its own
/// random stream, so the result does not depend on the thread schedule.
pub fn generate_grid(spec: &SyntheticSpec, catalog: &Catalog, facts: &Facts) -> Result<PredictionGrid> {
    check_spec(spec, catalog, facts)?;
    let models: Vec<String> = spec.models.iter().map(|m| m.id.clone()).collect();
    let scope: BTreeMap<String, Vec<String>> = facts
        .iter()
        .map(|(r, list)| (r.clone(), list.iter().map(|(i, _)| i.clone()).collect()))
        .collect();
    let manifest = Manifest::from_catalog(&models, &scope, catalog)?;
    let mut builder = GridBuilder::new(manifest)?;
    let relations = builder.relations().to_vec();
    let by_model: BTreeMap<&str, &SyntheticModel> = spec.models.iter().map(|m| (m.id.as_str(), m)).collect();
    let model_ids: Vec<String> = builder.models().to_vec();

    let golds: Vec<Vec<&str>> = relations
        .iter()
        .map(|rel| {
            let lookup: BTreeMap<&str, &str> = facts[&rel.id].iter().map(|(i, g)| (i.as_str(), g.as_str())).collect();
            rel.instances.iter().map(|inst| lookup[inst.id.as_str()]).collect()
        })
        .collect();
    for (r, g) in golds.iter().enumerate() {
        for (i, gold) in g.iter().enumerate() {
            builder.set_gold(r, i, gold)?;
        }
    }
    let wrong: Vec<Vec<Vec<String>>> = relations
        .iter()
        .zip(&golds)
        .map(|(rel, g)| distractors(g, rel.prompts.len()))
        .collect();

    let n_rel = relations.len();
    let jobs: Vec<(usize, usize)> = (0..model_ids.len())
        .flat_map(|m| (0..n_rel).map(move |r| (m, r)))
        .collect();
    let draws: Vec<Vec<bool>> = jobs
        .par_iter()
        .map(|&(m, r)| {
            let model = by_model[model_ids[m].as_str()];
            let rel = &relations[r];
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream((m * n_rel + r) as u64);
            let prompt_aff = row(&spec.prompt_affinity, &model.id);
            let verb_aff = row(&spec.verbalization_affinity, &model.id);
            let base = model.ability.get(&rel.id).copied().unwrap_or(0.0)
                + row(&spec.disparity_shift, &model.id)
                    .get(rel.id.as_str())
                    .copied()
                    .unwrap_or(0.0);
            let mut out = Vec::new();
            for prompt in &rel.prompts {
                let pa = prompt_aff.get(prompt.as_str()).copied().unwrap_or(0.0);
                for inst in &rel.instances {
                    for verb in &inst.verbalizations {
                        let va = verb_aff.get(verb.as_str()).copied().unwrap_or(0.0);
                        out.push(rng.random::<f64>() < logistic(base + pa + va));
                    }
                }
            }
            out
        })
        .collect();

    for (&(m, r), cells) in jobs.iter().zip(&draws) {
        let rel = &relations[r];
        let mut k = 0;
        for (p, _) in rel.prompts.iter().enumerate() {
            for (i, inst) in rel.instances.iter().enumerate() {
                for v in 0..inst.verbalizations.len() {
                    let token = if cells[k] { golds[r][i] } else { wrong[r][i][p].as_str() };
                    let cell = Cell {
                        model: m,
                        relation: r,
                        instance: i,
                        prompt: p,
                        verbalization: v,
                    };
                    builder.set_prediction(cell, token)?;
                    k += 1;
                }
            }
        }
    }
    builder.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueRanking {
    pub per_relation: BTreeMap<String, Ranking>,
    /// By mean ability over all relations any model has an ability for.
    pub overall: Ranking,
}

impl TrueRanking {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "overall {}", self.overall.order.join(" "));
        for (rel, r) in &self.per_relation {
            let _ = writeln!(out, "relation {rel} {}", r.order.join(" "));
        }
        out
    }
}

pub fn true_ranking(spec: &SyntheticSpec) -> TrueRanking {
    let relations: BTreeSet<&String> = spec.models.iter().flat_map(|m| m.ability.keys()).collect();
    let ability = |m: &SyntheticModel, r: &str| m.ability.get(r).copied().unwrap_or(0.0);
    let per_relation = relations
        .iter()
        .map(|&r| {
            let scores = spec.models.iter().map(|m| (m.id.clone(), ability(m, r))).collect();
            (r.clone(), rank_models(&scores))
        })
        .collect();
    let n = relations.len().max(1) as f64;
    let means = spec
        .models
        .iter()
        .map(|m| (m.id.clone(), relations.iter().map(|r| ability(m, r)).sum::<f64>() / n))
        .collect();
    TrueRanking {
        per_relation,
        overall: rank_models(&means),
    }
}

/// Shape and bias scales for a generated scenario. Spreads are standard
/// deviations on the logit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioShape {
    pub models: usize,
    pub relations: usize,
    pub prompts: usize,
    pub max_verbalizations: usize,
    pub instances: usize,
    /// Distinct gold tokens per relation.
    pub objects: usize,
    /// Logit distance between neighbouring models' mean abilities.
    pub ability_gap: f64,
    pub relation_difficulty: f64,
    pub ability_noise: f64,
    pub prompt_spread: f64,
    pub verbalization_spread: f64,
    pub disparity_spread: f64,
    pub seed: u64,
}

impl ScenarioShape {
    /// Eight models, 32 relations, 5 prompts per relation, 1 to 5 names per
    /// instance and 100 instances per relation. Prompt spread is set so the
    /// per-prompt P@1 standard deviation is close to nine points.
    pub fn paper_like() -> Self {
        ScenarioShape {
            models: 8,
            relations: 32,
            prompts: 5,
            max_verbalizations: 5,
            instances: 100,
            objects: 12,
            ability_gap: 0.08,
            relation_difficulty: 0.5,
            ability_noise: 0.1,
            prompt_spread: 0.42,
            verbalization_spread: 0.5,
            disparity_spread: 0.1,
            seed: crate::DEFAULT_SEED,
        }
    }

    /// Scales outside this check make the generated scenario meaningless.
    fn validate(&self) -> Result<()> {
        let positive = [
            ("models", self.models),
            ("relations", self.relations),
            ("prompts", self.prompts),
            ("max_verbalizations", self.max_verbalizations),
            ("instances", self.instances),
            ("objects", self.objects),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Scenario(format!("{name} must be positive")));
        }
        let scales = [
            self.ability_gap,
            self.relation_difficulty,
            self.ability_noise,
            self.prompt_spread,
            self.verbalization_spread,
            self.disparity_spread,
        ];
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Scenario("scales must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Scenario> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // Uniform on [-a, a] has standard deviation a / sqrt(3).
        let noise = |sd: f64, rng: &mut ChaCha8Rng| {
            if sd == 0.0 {
                0.0
            } else {
                let a = sd * 3f64.sqrt();
                rng.random_range(-a..=a)
            }
        };
        let width = |n: usize| (n.max(2) - 1).to_string().len();
        let (mw, rw, pw, iw) = (
            width(self.models + 1),
            width(self.relations + 1),
            width(self.prompts),
            width(self.instances),
        );
        let model_ids: Vec<String> = (1..=self.models).map(|k| format!("M{k:0mw$}")).collect();
        let relation_ids: Vec<String> = (1..=self.relations).map(|k| format!("R{k:0rw$}")).collect();

        let mut catalog = Catalog::new();
        let mut facts = Facts::new();
        let mut name_counts = Vec::new();
        for rel in &relation_ids {
            for p in 0..self.prompts {
                catalog.add_prompt(
                    rel,
                    PromptEntry {
                        id: format!("{rel}.p{p:0pw$}"),
                        template: format!("[S] {rel} form {p} [A] ."),
                        is_default: p == 0,
                    },
                )?;
            }
            let mut list = Vec::with_capacity(self.instances);
            for i in 0..self.instances {
                let inst = format!("{rel}.s{i:0iw$}");
                let n_names = rng.random_range(1..=self.max_verbalizations);
                name_counts.push(n_names);
                for v in 0..n_names {
                    catalog.add_verbalization(
                        &inst,
                        Verbalization {
                            id: format!("n{v}"),
                            surface: format!("subject {rel}/{i} alias {v}"),
                            is_default: v == 0,
                        },
                    )?;
                }
                let gold = format!("{rel}.o{}", rng.random_range(0..self.objects));
                list.push((inst, gold));
            }
            facts.insert(rel.clone(), list);
        }

        // Neighbouring models are ability_gap apart; who is where is shuffled.
        let mut slots: Vec<usize> = (0..self.models).collect();
        slots.shuffle(&mut rng);
        let center = (self.models as f64 - 1.0) / 2.0;
        let difficulty: Vec<f64> = relation_ids
            .iter()
            .map(|_| noise(self.relation_difficulty, &mut rng))
            .collect();
        let mut spec = SyntheticSpec {
            seed: self.seed,
            ..Default::default()
        };
        for (m, id) in model_ids.iter().enumerate() {
            let base = self.ability_gap * (slots[m] as f64 - center);
            let ability = relation_ids
                .iter()
                .zip(&difficulty)
                .map(|(r, d)| (r.clone(), base + d + noise(self.ability_noise, &mut rng)))
                .collect();
            spec.models.push(SyntheticModel {
                id: id.clone(),
                ability,
            });
        }

        // Prompt affinities sum to zero within each (model, relation).
        for model in &model_ids {
            for rel in &relation_ids {
                let raw: Vec<f64> = (0..self.prompts).map(|_| noise(self.prompt_spread, &mut rng)).collect();
                let mean = raw.iter().sum::<f64>() / raw.len() as f64;
                for (p, v) in raw.iter().enumerate() {
                    if self.prompt_spread > 0.0 {
                        spec.prompt_affinity
                            .insert((model.clone(), format!("{rel}.p{p:0pw$}")), v - mean);
                    }
                }
            }
        }

        // Name affinities are centred under the weight each name slot gets
        // when every instance averages uniformly over its own names.
        let mut slot_weight = vec![0.0; self.max_verbalizations];
        for &k in &name_counts {
            for w in slot_weight.iter_mut().take(k) {
                *w += 1.0 / (k * name_counts.len()) as f64;
            }
        }
        for model in &model_ids {
            let raw: Vec<f64> = (0..self.max_verbalizations)
                .map(|_| noise(self.verbalization_spread, &mut rng))
                .collect();
            let mean: f64 = raw.iter().zip(&slot_weight).map(|(a, w)| a * w).sum();
            for (v, a) in raw.iter().enumerate() {
                if self.verbalization_spread > 0.0 {
                    spec.verbalization_affinity
                        .insert((model.clone(), format!("n{v}")), a - mean);
                }
            }
        }

        // Disparity shifts sum to zero over relations for each model.
        for model in &model_ids {
            let raw: Vec<f64> = relation_ids
                .iter()
                .map(|_| noise(self.disparity_spread, &mut rng))
                .collect();
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            for (rel, v) in relation_ids.iter().zip(&raw) {
                if self.disparity_spread > 0.0 {
                    spec.disparity_shift.insert((model.clone(), rel.clone()), v - mean);
                }
            }
        }
        catalog.validate()?;
        Ok(Scenario { spec, catalog, facts })
    }
}

/// The shipped reference scenario.
pub fn scenario_paper_like() -> Scenario {
    ScenarioShape::paper_like().build().expect("reference shape is valid")
}

impl Scenario {
    pub fn generate(&self) -> Result<PredictionGrid> {
        generate_grid(&self.spec, &self.catalog, &self.facts)
    }

    /// Same scenario with a different generation seed.
    pub fn with_seed(&self, seed: u64) -> Scenario {
        let mut s = self.clone();
        s.spec.seed = seed;
        s
    }

    /// Text form: spec lines, facts, then the catalog lines.
    ///
    /// ```text
    /// seed <u64>
    /// model <model_id>
    /// ability <model_id> <relation_id> <value>
    /// prompt_affinity <model_id> <prompt_id> <value>
    /// verbalization_affinity <model_id> <verbalization_id> <value>
    /// disparity_shift <model_id> <relation_id> <value>
    /// fact <relation_id> <instance_id> <gold>
    /// prompt ... / name ...   (catalog format)
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {}", self.spec.seed);
        for m in &self.spec.models {
            let _ = writeln!(out, "model {}", m.id);
        }
        for m in &self.spec.models {
            for (r, v) in &m.ability {
                let _ = writeln!(out, "ability {} {r} {v}", m.id);
            }
        }
        let tables = [
            ("prompt_affinity", &self.spec.prompt_affinity),
            ("verbalization_affinity", &self.spec.verbalization_affinity),
            ("disparity_shift", &self.spec.disparity_shift),
        ];
        for (name, table) in tables {
            for ((m, id), v) in table {
                let _ = writeln!(out, "{name} {m} {id} {v}");
            }
        }
        for (rel, list) in &self.facts {
            for (inst, gold) in list {
                let _ = writeln!(out, "fact {rel} {inst} {gold}");
            }
        }
        out.push_str(&self.catalog.to_text());
        out
    }

    pub fn parse(text: &str) -> Result<Scenario> {
        let mut spec = SyntheticSpec::default();
        let mut seed = None;
        let mut facts = Facts::new();
        let mut catalog_text = String::with_capacity(text.len());
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            let kind = line.split_whitespace().next().unwrap_or("");
            if line.is_empty() || line.starts_with('#') || kind == "prompt" || kind == "name" {
                catalog_text.push_str(raw);
                catalog_text.push('\n');
                continue;
            }
            catalog_text.push('\n');
            let fields: Vec<&str> = line.split_whitespace().collect();
            let value = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::syntax(line_no, format!("invalid number `{s}`")))
            };
            let arity = |n: usize| {
                if fields.len() == n {
                    Ok(())
                } else {
                    Err(Error::syntax(line_no, format!("`{kind}` takes {} fields", n - 1)))
                }
            };
            match kind {
                "seed" => {
                    arity(2)?;
                    let s = fields[1]
                        .parse()
                        .map_err(|_| Error::syntax(line_no, "seed must be an unsigned integer"))?;
                    if seed.replace(s).is_some() {
                        return Err(Error::syntax(line_no, "seed given twice"));
                    }
                }
                "model" => {
                    arity(2)?;
                    if index.insert(fields[1].to_string(), spec.models.len()).is_some() {
                        return Err(Error::syntax(line_no, format!("model `{}` declared twice", fields[1])));
                    }
                    spec.models.push(SyntheticModel {
                        id: fields[1].to_string(),
                        ability: BTreeMap::new(),
                    });
                }
                "ability" => {
                    arity(4)?;
                    let &m = index
                        .get(fields[1])
                        .ok_or_else(|| Error::syntax(line_no, format!("undeclared model `{}`", fields[1])))?;
                    if spec.models[m]
                        .ability
                        .insert(fields[2].to_string(), value(fields[3])?)
                        .is_some()
                    {
                        return Err(Error::syntax(line_no, "duplicate ability"));
                    }
                }
                "prompt_affinity" | "verbalization_affinity" | "disparity_shift" => {
                    arity(4)?;
                    let table = match kind {
                        "prompt_affinity" => &mut spec.prompt_affinity,
                        "verbalization_affinity" => &mut spec.verbalization_affinity,
                        _ => &mut spec.disparity_shift,
                    };
                    let key = (fields[1].to_string(), fields[2].to_string());
                    if table.insert(key, value(fields[3])?).is_some() {
                        return Err(Error::syntax(line_no, format!("duplicate {kind} entry")));
                    }
                }
                "fact" => {
                    arity(4)?;
                    facts
                        .entry(fields[1].to_string())
                        .or_default()
                        .push((fields[2].to_string(), fields[3].to_string()));
                }
                other => return Err(Error::syntax(line_no, format!("unknown record kind `{other}`"))),
            }
        }
        spec.seed = seed.ok_or_else(|| Error::Scenario("missing `seed` line".into()))?;
        let catalog = Catalog::parse(&catalog_text)?;
        check_spec(&spec, &catalog, &facts)?;
        Ok(Scenario { spec, catalog, facts })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intervention::{all_relations, evaluate_mode, InterventionConfig, Mode};
    use crate::metrics::precision_at_1;
    use crate::metrics::VerbalizationPolicy;

    fn tiny(models: usize, relations: usize, instances: usize) -> ScenarioShape {
        ScenarioShape {
            models,
            relations,
            instances,
            prompts: 2,
            max_verbalizations: 2,
            ..ScenarioShape::paper_like()
        }
    }

    fn flat(scenario: &mut Scenario, ability: impl Fn(usize) -> f64) {
        scenario.spec.prompt_affinity.clear();
        scenario.spec.verbalization_affinity.clear();
        scenario.spec.disparity_shift.clear();
        for (k, m) in scenario.spec.models.iter_mut().enumerate() {
            for v in m.ability.values_mut() {
                *v = ability(k);
            }
        }
    }

    #[test]
    fn saturated_link_gives_all_correct() {
        let mut s = tiny(2, 2, 20).build().unwrap();
        flat(&mut s, |_| 25.0);
        let g = s.generate().unwrap();
        assert!(g.cells().all(|c| g.is_correct_at(c)));
    }

    #[test]
    fn zero_ability_is_a_fair_coin() {
        let mut s = ScenarioShape {
            prompts: 1,
            max_verbalizations: 1,
            ..tiny(1, 1, 10_000)
        }
        .build()
        .unwrap();
        flat(&mut s, |_| 0.0);
        let g = s.generate().unwrap();
        let hits = g.cells().filter(|&c| g.is_correct_at(c)).count() as f64;
        let n = g.len() as f64;
        // 3 sigma binomial band around n/2
        assert!((hits - n / 2.0).abs() <= 3.0 * (n * 0.25).sqrt(), "{hits} of {n}");
    }

    #[test]
    fn stronger_model_dominates() {
        let mut s = tiny(2, 4, 1000).build().unwrap();
        flat(&mut s, |k| if k == 0 { 2.0 } else { -2.0 });
        let g = s.generate().unwrap();
        for rel in all_relations(&g) {
            let p = &g.relations()[g.relation_index(&rel).unwrap()].prompts[0];
            let a = precision_at_1(&g, "M1", &rel, p, &VerbalizationPolicy::Default).unwrap();
            let b = precision_at_1(&g, "M2", &rel, p, &VerbalizationPolicy::Default).unwrap();
            assert!(a > b);
        }
    }

    #[test]
    fn distractor_is_constant_per_instance_and_prompt() {
        let mut s = tiny(2, 1, 30).build().unwrap();
        flat(&mut s, |_| -25.0);
        let g = s.generate().unwrap();
        let rel = &g.relations()[0];
        for (i, inst) in rel.instances.iter().enumerate() {
            for p in 0..rel.prompts.len() {
                let at = |m, v| {
                    g.predicted_at(Cell {
                        model: m,
                        relation: 0,
                        instance: i,
                        prompt: p,
                        verbalization: v,
                    })
                };
                let first = at(0, 0);
                assert_ne!(first, g.gold(0, i));
                for v in 0..inst.verbalizations.len() {
                    assert_eq!(at(0, v), first);
                    assert_eq!(at(1, v), first);
                }
            }
        }
    }

    #[test]
    fn true_ranking_examples() {
        let spec = |pairs: &[(&str, f64)]| SyntheticSpec {
            models: pairs
                .iter()
                .map(|(id, a)| SyntheticModel {
                    id: id.to_string(),
                    ability: [("r".to_string(), *a)].into(),
                })
                .collect(),
            ..Default::default()
        };
        assert_eq!(true_ranking(&spec(&[("A", 0.9), ("B", 0.1)])).overall.order, ["A", "B"]);
        assert_eq!(true_ranking(&spec(&[("B", 0.5), ("A", 0.5)])).overall.order, ["A", "B"]);
        let three = true_ranking(&spec(&[("A", 0.2), ("B", 0.8), ("C", 0.5)]));
        assert_eq!(three.overall.order, ["B", "C", "A"]);
        assert_eq!(three.per_relation["r"].order, ["B", "C", "A"]);
    }

    #[test]
    fn paper_like_shape() {
        let s = scenario_paper_like();
        assert_eq!(s.spec.models.len(), 8);
        assert_eq!(s.facts.len(), 32);
        assert_eq!(s.catalog.prompt_count(), 160);
        assert!(s.facts.values().all(|f| f.len() == 100));
        let counts: BTreeSet<usize> = s
            .catalog
            .instances()
            .map(|i| s.catalog.verbalizations(i).unwrap().len())
            .collect();
        assert_eq!(counts, (1..=5).collect());
        // fixed seed, fixed permutation
        assert_eq!(
            true_ranking(&s.spec).overall.order,
            true_ranking(&scenario_paper_like().spec).overall.order
        );
    }

    #[test]
    fn scenario_text_round_trip() {
        let s = tiny(3, 2, 5).build().unwrap();
        let again = Scenario::parse(&s.to_text()).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.generate().unwrap(), s.generate().unwrap());
    }

    #[test]
    fn rejects_unknown_ids() {
        let mut s = tiny(2, 1, 3).build().unwrap();
        s.spec.prompt_affinity.insert(("M1".into(), "nope".into()), 1.0);
        assert!(matches!(s.generate(), Err(Error::Scenario(_))));
        assert!(Scenario::parse("seed 1\nmodel A\nability B r 0\n").is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let s = tiny(3, 3, 20).build().unwrap();
        assert_eq!(s.generate().unwrap(), s.generate().unwrap());
        assert_ne!(s.generate().unwrap(), s.with_seed(7).generate().unwrap());
    }

    #[test]
    fn planted_default_prompt_bias_favors_model_under_original() {
        // equal abilities; M2 loves every default prompt
        let mut s = tiny(2, 6, 300).build().unwrap();
        flat(&mut s, |_| 0.0);
        for rel in s.facts.keys() {
            let p = s.catalog.default_prompt(rel).unwrap().id.clone();
            s.spec.prompt_affinity.insert(("M2".into(), p.clone()), 1.5);
            let other = &s.catalog.prompts(rel).unwrap()[1].id;
            s.spec.prompt_affinity.insert(("M2".into(), other.clone()), -1.5);
        }
        let g = s.generate().unwrap();
        let rels = all_relations(&g);
        let cfg = InterventionConfig::default();
        let orig = evaluate_mode(&g, Mode::Original, &rels, &cfg).unwrap().macro_average();
        let inter = evaluate_mode(&g, Mode::Intervention, &rels, &cfg)
            .unwrap()
            .macro_average();
        assert!(orig["M2"] - orig["M1"] > 0.2);
        assert!((inter["M2"] - inter["M1"]).abs() < 0.05);
    }
}

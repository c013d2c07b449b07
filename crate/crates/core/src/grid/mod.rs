//! Prediction grids: the complete cross product of
//! (model × relation × instance × prompt × verbalization) predictions.
//!
//! A grid is stored densely. Models, relations and instances are kept in id
//! order; prompts and verbalizations keep catalog order. Every cell is
//! present, so downstream metrics never have to handle missing data.

mod catalog;
mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub use catalog::{validate_template, Catalog, PromptEntry, Verbalization, ANSWER_SLOT, SUBJECT_SLOT};
pub use io::{load_grid, parse_grid, write_grid, GRID_HEADER};

/// Token identity used for correctness: surrounding whitespace stripped,
/// then NFC. No case folding.
pub fn normalize_token(s: &str) -> String {
    s.trim().nfc().collect()
}

/// Exact match of predicted and gold after [`normalize_token`].
pub fn is_correct(record: &PredictionRecord) -> bool {
    normalize_token(&record.predicted) == normalize_token(&record.gold)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub model: String,
    pub relation: String,
    pub instance: String,
    pub prompt: String,
    pub verbalization: String,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {}, {})",
            self.model, self.relation, self.instance, self.prompt, self.verbalization
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub model_id: String,
    pub relation_id: String,
    pub instance_id: String,
    pub prompt_id: String,
    pub verbalization_id: String,
    pub predicted: String,
    pub gold: String,
}

impl PredictionRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            model: self.model_id.clone(),
            relation: self.relation_id.clone(),
            instance: self.instance_id.clone(),
            prompt: self.prompt_id.clone(),
            verbalization: self.verbalization_id.clone(),
        }
    }
}

/// Borrowed view of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordRef<'a> {
    pub model_id: &'a str,
    pub relation_id: &'a str,
    pub instance_id: &'a str,
    pub prompt_id: &'a str,
    pub verbalization_id: &'a str,
    pub predicted: &'a str,
    pub gold: &'a str,
}

impl RecordRef<'_> {
    pub fn to_owned(&self) -> PredictionRecord {
        PredictionRecord {
            model_id: self.model_id.into(),
            relation_id: self.relation_id.into(),
            instance_id: self.instance_id.into(),
            prompt_id: self.prompt_id.into(),
            verbalization_id: self.verbalization_id.into(),
            predicted: self.predicted.into(),
            gold: self.gold.into(),
        }
    }
}

/// Declared id universes of a grid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub models: Vec<String>,
    pub relations: Vec<RelationScope>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationScope {
    pub id: String,
    pub prompts: Vec<String>,
    pub default_prompt: Option<String>,
    pub instances: Vec<InstanceScope>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceScope {
    pub id: String,
    pub verbalizations: Vec<String>,
    pub default_verbalization: Option<String>,
}

impl Manifest {
    /// Full manifest for `models` over the given relation → instances map,
    /// with prompts and verbalizations taken from the catalog.
    pub fn from_catalog(
        models: &[String],
        instances: &BTreeMap<String, Vec<String>>,
        catalog: &Catalog,
    ) -> Result<Self> {
        let mut relations = Vec::new();
        for (rel, insts) in instances {
            let prompts = catalog.prompts(rel).ok_or_else(|| Error::DanglingId {
                kind: "relation",
                id: rel.clone(),
                key: "catalog lookup".into(),
            })?;
            let mut scopes = Vec::new();
            for inst in insts {
                let verbs = catalog.verbalizations(inst).ok_or_else(|| Error::DanglingId {
                    kind: "instance",
                    id: inst.clone(),
                    key: format!("relation {rel}"),
                })?;
                scopes.push(InstanceScope {
                    id: inst.clone(),
                    verbalizations: verbs.iter().map(|v| v.id.clone()).collect(),
                    default_verbalization: verbs.iter().find(|v| v.is_default).map(|v| v.id.clone()),
                });
            }
            relations.push(RelationScope {
                id: rel.clone(),
                prompts: prompts.iter().map(|p| p.id.clone()).collect(),
                default_prompt: prompts.iter().find(|p| p.is_default).map(|p| p.id.clone()),
                instances: scopes,
            });
        }
        Ok(Manifest {
            models: models.to_vec(),
            relations,
        })
    }

    fn canonicalize(&mut self) -> Result<()> {
        self.models.sort();
        check_unique("model", &self.models)?;
        self.relations.sort_by(|a, b| a.id.cmp(&b.id));
        check_unique("relation", self.relations.iter().map(|r| &r.id))?;
        let mut verb_lists: BTreeMap<&str, &Vec<String>> = BTreeMap::new();
        for rel in &mut self.relations {
            rel.instances.sort_by(|a, b| a.id.cmp(&b.id));
        }
        for rel in &self.relations {
            check_unique("prompt", &rel.prompts)?;
            check_unique("instance", rel.instances.iter().map(|i| &i.id))?;
            if let Some(d) = &rel.default_prompt {
                if !rel.prompts.contains(d) {
                    return Err(Error::Grid(format!(
                        "default prompt `{d}` not among prompts of `{}`",
                        rel.id
                    )));
                }
            }
            for inst in &rel.instances {
                check_unique("verbalization", &inst.verbalizations)?;
                if let Some(prev) = verb_lists.insert(&inst.id, &inst.verbalizations) {
                    if prev != &inst.verbalizations {
                        return Err(Error::Grid(format!(
                            "instance `{}` declared with different verbalizations in two relations",
                            inst.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_unique<'a>(kind: &str, ids: impl IntoIterator<Item = &'a String>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        catalog::validate_id(kind, id).map_err(|_| Error::Grid(format!("invalid {kind} id `{id}`")))?;
        if !seen.insert(id) {
            return Err(Error::Grid(format!("{kind} `{id}` declared twice")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationBlock {
    pub id: String,
    pub prompts: Vec<String>,
    pub default_prompt: Option<usize>,
    pub instances: Vec<InstanceBlock>,
    base: usize,
    stride: usize,
}

impl RelationBlock {
    pub fn prompt_index(&self, id: &str) -> Option<usize> {
        self.prompts.iter().position(|p| p == id)
    }

    pub fn instance_index(&self, id: &str) -> Option<usize> {
        self.instances.binary_search_by(|i| i.id.as_str().cmp(id)).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceBlock {
    pub id: String,
    pub verbalizations: Vec<String>,
    pub default_verbalization: Option<usize>,
    gold: u32,
    offset: usize,
}

impl InstanceBlock {
    pub fn verbalization_index(&self, id: &str) -> Option<usize> {
        self.verbalizations.iter().position(|v| v == id)
    }
}

/// Coordinates of a cell by position in the grid's own orderings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub model: usize,
    pub relation: usize,
    pub instance: usize,
    pub prompt: usize,
    pub verbalization: usize,
}

#[derive(Debug, Clone)]
pub struct PredictionGrid {
    models: Vec<String>,
    relations: Vec<RelationBlock>,
    cells_per_model: usize,
    predicted: Vec<u32>,
    correct: Vec<bool>,
    symbols: Vec<String>,
    // Normalized-token class per symbol.
    classes: Vec<u32>,
}

const UNSET: u32 = u32::MAX;

impl PartialEq for PredictionGrid {
    fn eq(&self, other: &Self) -> bool {
        self.models == other.models
            && self.relations.len() == other.relations.len()
            && self.relations.iter().zip(&other.relations).all(|(a, b)| {
                a.id == b.id
                    && a.prompts == b.prompts
                    && a.default_prompt == b.default_prompt
                    && a.instances.len() == b.instances.len()
                    && a.instances.iter().zip(&b.instances).all(|(x, y)| {
                        x.id == y.id
                            && x.verbalizations == y.verbalizations
                            && x.default_verbalization == y.default_verbalization
                            && self.symbols[x.gold as usize] == other.symbols[y.gold as usize]
                    })
            })
            && self
                .predicted
                .iter()
                .zip(&other.predicted)
                .all(|(&a, &b)| self.symbols[a as usize] == other.symbols[b as usize])
    }
}

impl PredictionGrid {
    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn relations(&self) -> &[RelationBlock] {
        &self.relations
    }

    pub fn model_index(&self, id: &str) -> Option<usize> {
        self.models.binary_search_by(|m| m.as_str().cmp(id)).ok()
    }

    pub fn relation_index(&self, id: &str) -> Option<usize> {
        self.relations.binary_search_by(|r| r.id.as_str().cmp(id)).ok()
    }

    pub(crate) fn require_model(&self, id: &str) -> Result<usize> {
        self.model_index(id).ok_or_else(|| Error::UnknownId {
            kind: "model",
            id: id.to_string(),
        })
    }

    pub(crate) fn require_relation(&self, id: &str) -> Result<usize> {
        self.relation_index(id).ok_or_else(|| Error::UnknownId {
            kind: "relation",
            id: id.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    #[inline]
    fn offset(&self, c: Cell) -> usize {
        let rel = &self.relations[c.relation];
        c.model * self.cells_per_model
            + rel.base
            + c.prompt * rel.stride
            + rel.instances[c.instance].offset
            + c.verbalization
    }

    #[inline]
    pub fn is_correct_at(&self, c: Cell) -> bool {
        self.correct[self.offset(c)]
    }

    pub fn predicted_at(&self, c: Cell) -> &str {
        &self.symbols[self.predicted[self.offset(c)] as usize]
    }

    /// Identifier of the normalized predicted token; equal ids mean equal
    /// tokens under [`normalize_token`].
    #[inline]
    pub fn prediction_class_at(&self, c: Cell) -> u32 {
        self.classes[self.predicted[self.offset(c)] as usize]
    }

    pub fn gold(&self, relation: usize, instance: usize) -> &str {
        &self.symbols[self.relations[relation].instances[instance].gold as usize]
    }

    /// Number of correct instances for (model, relation, prompt) with one
    /// verbalization chosen per instance by `pick`.
    pub(crate) fn correct_count(
        &self,
        model: usize,
        relation: usize,
        prompt: usize,
        mut pick: impl FnMut(usize) -> usize,
    ) -> usize {
        let rel = &self.relations[relation];
        let start = model * self.cells_per_model + rel.base + prompt * rel.stride;
        rel.instances
            .iter()
            .enumerate()
            .filter(|(i, inst)| self.correct[start + inst.offset + pick(*i)])
            .count()
    }

    pub(crate) fn correct_slice(&self, model: usize, relation: usize, prompt: usize, instance: usize) -> &[bool] {
        let rel = &self.relations[relation];
        let inst = &rel.instances[instance];
        let start = model * self.cells_per_model + rel.base + prompt * rel.stride + inst.offset;
        &self.correct[start..start + inst.verbalizations.len()]
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            models: self.models.clone(),
            relations: self
                .relations
                .iter()
                .map(|r| RelationScope {
                    id: r.id.clone(),
                    prompts: r.prompts.clone(),
                    default_prompt: r.default_prompt.map(|p| r.prompts[p].clone()),
                    instances: r
                        .instances
                        .iter()
                        .map(|i| InstanceScope {
                            id: i.id.clone(),
                            verbalizations: i.verbalizations.clone(),
                            default_verbalization: i.default_verbalization.map(|v| i.verbalizations[v].clone()),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// All cells in layout order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.models.len()).flat_map(move |m| {
            self.relations.iter().enumerate().flat_map(move |(r, rel)| {
                (0..rel.prompts.len()).flat_map(move |p| {
                    rel.instances.iter().enumerate().flat_map(move |(i, inst)| {
                        (0..inst.verbalizations.len()).map(move |v| Cell {
                            model: m,
                            relation: r,
                            instance: i,
                            prompt: p,
                            verbalization: v,
                        })
                    })
                })
            })
        })
    }

    pub fn record(&self, c: Cell) -> RecordRef<'_> {
        let rel = &self.relations[c.relation];
        let inst = &rel.instances[c.instance];
        RecordRef {
            model_id: &self.models[c.model],
            relation_id: &rel.id,
            instance_id: &inst.id,
            prompt_id: &rel.prompts[c.prompt],
            verbalization_id: &inst.verbalizations[c.verbalization],
            predicted: self.predicted_at(c),
            gold: &self.symbols[inst.gold as usize],
        }
    }

    pub fn records(&self) -> impl Iterator<Item = RecordRef<'_>> + '_ {
        self.cells().map(move |c| self.record(c))
    }

    pub fn get(&self, key: &RecordKey) -> Option<RecordRef<'_>> {
        let model = self.model_index(&key.model)?;
        let relation = self.relation_index(&key.relation)?;
        let rel = &self.relations[relation];
        let prompt = rel.prompt_index(&key.prompt)?;
        let instance = rel.instance_index(&key.instance)?;
        let verbalization = rel.instances[instance].verbalization_index(&key.verbalization)?;
        Some(self.record(Cell {
            model,
            relation,
            instance,
            prompt,
            verbalization,
        }))
    }

    /// Sub-grid restricted by `filter`. Instances left without
    /// verbalizations and relations left without prompts or instances are
    /// dropped.
    pub fn slice(&self, filter: &GridFilter) -> Result<PredictionGrid> {
        filter.check_known(self)?;
        let keep = |set: &Option<BTreeSet<String>>, id: &str| set.as_ref().map_or(true, |s| s.contains(id));

        let mut manifest = Manifest {
            models: self
                .models
                .iter()
                .filter(|m| keep(&filter.models, m))
                .cloned()
                .collect(),
            relations: Vec::new(),
        };
        for rel in &self.relations {
            if !keep(&filter.relations, &rel.id) {
                continue;
            }
            let prompts: Vec<String> = rel
                .prompts
                .iter()
                .filter(|p| keep(&filter.prompts, p))
                .cloned()
                .collect();
            let instances: Vec<InstanceScope> = rel
                .instances
                .iter()
                .filter(|i| keep(&filter.instances, &i.id))
                .map(|i| {
                    let verbs: Vec<String> = i
                        .verbalizations
                        .iter()
                        .filter(|v| keep(&filter.verbalizations, v))
                        .cloned()
                        .collect();
                    let default = i
                        .default_verbalization
                        .map(|d| i.verbalizations[d].clone())
                        .filter(|d| verbs.contains(d));
                    InstanceScope {
                        id: i.id.clone(),
                        verbalizations: verbs,
                        default_verbalization: default,
                    }
                })
                .filter(|i| !i.verbalizations.is_empty())
                .collect();
            if prompts.is_empty() || instances.is_empty() {
                continue;
            }
            let default_prompt = rel
                .default_prompt
                .map(|d| rel.prompts[d].clone())
                .filter(|d| prompts.contains(d));
            manifest.relations.push(RelationScope {
                id: rel.id.clone(),
                prompts,
                default_prompt,
                instances,
            });
        }

        let mut builder = GridBuilder::new(manifest)?;
        for record in self.records() {
            if builder.covers(&record) {
                builder.insert_ref(&record)?;
            }
        }
        builder.finish()
    }
}

/// Per-dimension id filter; `None` keeps everything on that dimension.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GridFilter {
    pub models: Option<BTreeSet<String>>,
    pub relations: Option<BTreeSet<String>>,
    pub instances: Option<BTreeSet<String>>,
    pub prompts: Option<BTreeSet<String>>,
    pub verbalizations: Option<BTreeSet<String>>,
}

fn id_set<I: IntoIterator<Item = S>, S: Into<String>>(ids: I) -> Option<BTreeSet<String>> {
    Some(ids.into_iter().map(Into::into).collect())
}

fn intersect(a: &Option<BTreeSet<String>>, b: &Option<BTreeSet<String>>) -> Option<BTreeSet<String>> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.intersection(y).cloned().collect()),
        (Some(x), None) | (None, Some(x)) => Some(x.clone()),
        (None, None) => None,
    }
}

impl GridFilter {
    pub fn models<I: IntoIterator<Item = S>, S: Into<String>>(mut self, ids: I) -> Self {
        self.models = id_set(ids);
        self
    }
    pub fn relations<I: IntoIterator<Item = S>, S: Into<String>>(mut self, ids: I) -> Self {
        self.relations = id_set(ids);
        self
    }
    pub fn instances<I: IntoIterator<Item = S>, S: Into<String>>(mut self, ids: I) -> Self {
        self.instances = id_set(ids);
        self
    }
    pub fn prompts<I: IntoIterator<Item = S>, S: Into<String>>(mut self, ids: I) -> Self {
        self.prompts = id_set(ids);
        self
    }
    pub fn verbalizations<I: IntoIterator<Item = S>, S: Into<String>>(mut self, ids: I) -> Self {
        self.verbalizations = id_set(ids);
        self
    }

    /// Filter equivalent to applying `self` and then `other`.
    pub fn and(&self, other: &GridFilter) -> GridFilter {
        GridFilter {
            models: intersect(&self.models, &other.models),
            relations: intersect(&self.relations, &other.relations),
            instances: intersect(&self.instances, &other.instances),
            prompts: intersect(&self.prompts, &other.prompts),
            verbalizations: intersect(&self.verbalizations, &other.verbalizations),
        }
    }

    fn check_known(&self, grid: &PredictionGrid) -> Result<()> {
        let universe = |kind: &'static str| -> BTreeSet<&str> {
            match kind {
                "model" => grid.models.iter().map(String::as_str).collect(),
                "relation" => grid.relations.iter().map(|r| r.id.as_str()).collect(),
                "instance" => grid
                    .relations
                    .iter()
                    .flat_map(|r| r.instances.iter().map(|i| i.id.as_str()))
                    .collect(),
                "prompt" => grid
                    .relations
                    .iter()
                    .flat_map(|r| r.prompts.iter().map(String::as_str))
                    .collect(),
                _ => grid
                    .relations
                    .iter()
                    .flat_map(|r| {
                        r.instances
                            .iter()
                            .flat_map(|i| i.verbalizations.iter().map(String::as_str))
                    })
                    .collect(),
            }
        };
        let dims = [
            ("model", &self.models),
            ("relation", &self.relations),
            ("instance", &self.instances),
            ("prompt", &self.prompts),
            ("verbalization", &self.verbalizations),
        ];
        for (kind, set) in dims {
            if let Some(set) = set {
                let known = universe(kind);
                if let Some(bad) = set.iter().find(|id| !known.contains(id.as_str())) {
                    return Err(Error::UnknownId { kind, id: bad.clone() });
                }
            }
        }
        Ok(())
    }
}

/// Incrementally fills a grid over a fixed manifest.
pub struct GridBuilder {
    grid: PredictionGrid,
    interner: HashMap<String, u32>,
    class_of: HashMap<String, u32>,
    gold_set: Vec<Vec<bool>>,
    model_idx: HashMap<String, usize>,
    relation_idx: HashMap<String, RelationLookup>,
}

/// Relation position plus prompt and instance positions by id.
type RelationLookup = (usize, HashMap<String, usize>, HashMap<String, usize>);

impl GridBuilder {
    pub fn new(mut manifest: Manifest) -> Result<Self> {
        manifest.canonicalize()?;
        let mut base = 0;
        let mut relations = Vec::with_capacity(manifest.relations.len());
        for rel in manifest.relations {
            let mut offset = 0;
            let instances: Vec<InstanceBlock> = rel
                .instances
                .into_iter()
                .map(|i| {
                    let block = InstanceBlock {
                        default_verbalization: i
                            .default_verbalization
                            .as_ref()
                            .and_then(|d| i.verbalizations.iter().position(|v| v == d)),
                        id: i.id,
                        gold: UNSET,
                        offset,
                        verbalizations: i.verbalizations,
                    };
                    offset += block.verbalizations.len();
                    block
                })
                .collect();
            let block = RelationBlock {
                default_prompt: rel
                    .default_prompt
                    .as_ref()
                    .and_then(|d| rel.prompts.iter().position(|p| p == d)),
                id: rel.id,
                base,
                stride: offset,
                prompts: rel.prompts,
                instances,
            };
            base += block.stride * block.prompts.len();
            relations.push(block);
        }
        let total = base
            .checked_mul(manifest.models.len())
            .filter(|&t| t < UNSET as usize)
            .ok_or_else(|| Error::Grid("grid too large".into()))?;

        let model_idx = manifest
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let relation_idx = relations
            .iter()
            .enumerate()
            .map(|(r, rel)| {
                let prompts = rel.prompts.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
                let insts = rel
                    .instances
                    .iter()
                    .enumerate()
                    .map(|(i, x)| (x.id.clone(), i))
                    .collect();
                (rel.id.clone(), (r, prompts, insts))
            })
            .collect();
        let gold_set = relations.iter().map(|r| vec![false; r.instances.len()]).collect();

        Ok(GridBuilder {
            grid: PredictionGrid {
                models: manifest.models,
                relations,
                cells_per_model: base,
                predicted: vec![UNSET; total],
                correct: vec![false; total],
                symbols: Vec::new(),
                classes: Vec::new(),
            },
            interner: HashMap::new(),
            class_of: HashMap::new(),
            gold_set,
            model_idx,
            relation_idx,
        })
    }

    pub fn relations(&self) -> &[RelationBlock] {
        &self.grid.relations
    }

    pub fn models(&self) -> &[String] {
        &self.grid.models
    }

    fn intern(&mut self, s: &str) -> Result<u32> {
        if let Some(&id) = self.interner.get(s) {
            return Ok(id);
        }
        if s.contains(['\t', '\n', '\r']) {
            return Err(Error::Grid(format!("token {s:?} contains a tab or line break")));
        }
        let id = self.grid.symbols.len() as u32;
        let norm = normalize_token(s);
        let next_class = self.class_of.len() as u32;
        let class = *self.class_of.entry(norm).or_insert(next_class);
        self.grid.symbols.push(s.to_string());
        self.grid.classes.push(class);
        self.interner.insert(s.to_string(), id);
        Ok(id)
    }

    fn covers(&self, r: &RecordRef<'_>) -> bool {
        self.locate(r).is_ok()
    }

    fn locate(&self, r: &RecordRef<'_>) -> Result<Cell> {
        let key = || {
            format!(
                "({}, {}, {}, {}, {})",
                r.model_id, r.relation_id, r.instance_id, r.prompt_id, r.verbalization_id
            )
        };
        let dangling = |kind: &'static str, id: &str| Error::DanglingId {
            kind,
            id: id.to_string(),
            key: key(),
        };
        let model = *self
            .model_idx
            .get(r.model_id)
            .ok_or_else(|| dangling("model", r.model_id))?;
        let (relation, prompts, insts) = self
            .relation_idx
            .get(r.relation_id)
            .ok_or_else(|| dangling("relation", r.relation_id))?;
        let prompt = *prompts
            .get(r.prompt_id)
            .ok_or_else(|| dangling("prompt", r.prompt_id))?;
        let instance = *insts
            .get(r.instance_id)
            .ok_or_else(|| dangling("instance", r.instance_id))?;
        let verbalization = self.grid.relations[*relation].instances[instance]
            .verbalization_index(r.verbalization_id)
            .ok_or_else(|| dangling("verbalization", r.verbalization_id))?;
        Ok(Cell {
            model,
            relation: *relation,
            instance,
            prompt,
            verbalization,
        })
    }

    pub fn insert(&mut self, r: &PredictionRecord) -> Result<()> {
        self.insert_ref(&RecordRef {
            model_id: &r.model_id,
            relation_id: &r.relation_id,
            instance_id: &r.instance_id,
            prompt_id: &r.prompt_id,
            verbalization_id: &r.verbalization_id,
            predicted: &r.predicted,
            gold: &r.gold,
        })
    }

    pub fn insert_ref(&mut self, r: &RecordRef<'_>) -> Result<()> {
        let cell = self.locate(r)?;
        self.set_gold(cell.relation, cell.instance, r.gold)?;
        if self.grid.predicted[self.grid.offset(cell)] != UNSET {
            return Err(Error::DuplicateRecord(self.key_string(cell)));
        }
        self.set_prediction(cell, r.predicted)
    }

    /// Sets gold for (relation, instance) by position; conflicting values are an error.
    pub fn set_gold(&mut self, relation: usize, instance: usize, gold: &str) -> Result<()> {
        let sym = self.intern(gold)?;
        let current = self.grid.relations[relation].instances[instance].gold;
        if self.gold_set[relation][instance] {
            if current != sym {
                let rel = &self.grid.relations[relation];
                return Err(Error::GoldConflict {
                    relation: rel.id.clone(),
                    instance: rel.instances[instance].id.clone(),
                    first: self.grid.symbols[current as usize].clone(),
                    second: gold.to_string(),
                });
            }
        } else {
            self.grid.relations[relation].instances[instance].gold = sym;
            self.gold_set[relation][instance] = true;
        }
        Ok(())
    }

    /// Sets one cell by position. Gold for the instance must be set first.
    pub fn set_prediction(&mut self, cell: Cell, predicted: &str) -> Result<()> {
        if !self.gold_set[cell.relation][cell.instance] {
            return Err(Error::Grid(format!(
                "gold not set before prediction {}",
                self.key_string(cell)
            )));
        }
        let sym = self.intern(predicted)?;
        let gold = self.grid.relations[cell.relation].instances[cell.instance].gold;
        let off = self.grid.offset(cell);
        self.grid.predicted[off] = sym;
        self.grid.correct[off] = self.grid.classes[sym as usize] == self.grid.classes[gold as usize];
        Ok(())
    }

    fn key_string(&self, c: Cell) -> String {
        let rel = &self.grid.relations[c.relation];
        let inst = &rel.instances[c.instance];
        RecordKey {
            model: self.grid.models[c.model].clone(),
            relation: rel.id.clone(),
            instance: inst.id.clone(),
            prompt: rel.prompts[c.prompt].clone(),
            verbalization: inst.verbalizations[c.verbalization].clone(),
        }
        .to_string()
    }

    /// Completes the grid; the first missing cell in key order is reported.
    pub fn finish(self) -> Result<PredictionGrid> {
        if let Some(missing) = self
            .grid
            .cells()
            .filter(|&c| self.grid.predicted[self.grid.offset(c)] == UNSET)
            .map(|c| self.grid.record_key_unchecked(c))
            .min()
        {
            return Err(Error::MissingRecord(missing.to_string()));
        }
        Ok(self.grid)
    }
}

impl PredictionGrid {
    fn record_key_unchecked(&self, c: Cell) -> RecordKey {
        let rel = &self.relations[c.relation];
        let inst = &rel.instances[c.instance];
        RecordKey {
            model: self.models[c.model].clone(),
            relation: rel.id.clone(),
            instance: inst.id.clone(),
            prompt: rel.prompts[c.prompt].clone(),
            verbalization: inst.verbalizations[c.verbalization].clone(),
        }
    }
}

//! Tab-separated grid files (tabs shown as two spaces below).
//!
//! ```text
//! # manifest models: A B
//! # manifest relations: capital
//! # manifest instances capital: us cn
//! # manifest prompts capital: p1 p2
//! # manifest verbalizations us: n0 n1
//! model_id  relation_id  instance_id  prompt_id  verbalization_id  predicted  gold
//! A  capital  us  p1  n0  Washington  Washington
//! ```
//!
//! Manifest lines are optional. Without them the models, relations and
//! instances are taken from the records and the prompt and verbalization
//! lists from the catalog.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use super::{Catalog, GridBuilder, InstanceScope, Manifest, PredictionGrid, RecordRef, RelationScope};
use crate::error::{Error, Result};

pub const GRID_HEADER: &str = "model_id\trelation_id\tinstance_id\tprompt_id\tverbalization_id\tpredicted\tgold";

const MANIFEST_PREFIX: &str = "# manifest ";

#[derive(Default)]
struct DeclaredManifest {
    models: Option<Vec<String>>,
    relations: Option<Vec<String>>,
    instances: BTreeMap<String, Vec<String>>,
    prompts: BTreeMap<String, Vec<String>>,
    verbalizations: BTreeMap<String, Vec<String>>,
}

impl DeclaredManifest {
    fn is_empty(&self) -> bool {
        self.models.is_none() && self.relations.is_none()
    }

    fn parse_line(&mut self, line_no: usize, body: &str) -> Result<()> {
        let (head, ids) = body
            .split_once(':')
            .ok_or_else(|| Error::syntax(line_no, "manifest line needs `:`"))?;
        let ids: Vec<String> = ids.split_whitespace().map(str::to_string).collect();
        let mut head = head.split_whitespace();
        let kind = head.next().unwrap_or("");
        let owner = head.next();
        match (kind, owner) {
            ("models", None) => self.models = Some(ids),
            ("relations", None) => self.relations = Some(ids),
            ("instances", Some(r)) => {
                self.instances.insert(r.to_string(), ids);
            }
            ("prompts", Some(r)) => {
                self.prompts.insert(r.to_string(), ids);
            }
            ("verbalizations", Some(i)) => {
                self.verbalizations.insert(i.to_string(), ids);
            }
            _ => {
                return Err(Error::syntax(
                    line_no,
                    format!("unknown manifest entry `{}`", body.trim()),
                ))
            }
        }
        Ok(())
    }

    /// Resolves against the catalog. Declared prompts/verbalizations must
    /// exist there; they are reordered to catalog order.
    fn resolve(self, catalog: &Catalog) -> Result<Manifest> {
        let dangling = |kind: &'static str, id: &str| Error::DanglingId {
            kind,
            id: id.to_string(),
            key: "manifest".into(),
        };
        let models = self
            .models
            .ok_or_else(|| Error::Grid("manifest lacks a models line".into()))?;
        let rel_ids = self
            .relations
            .ok_or_else(|| Error::Grid("manifest lacks a relations line".into()))?;
        let mut relations = Vec::new();
        for rel in rel_ids {
            let catalog_prompts = catalog.prompts(&rel).ok_or_else(|| dangling("relation", &rel))?;
            let prompts = match self.prompts.get(&rel) {
                Some(declared) => {
                    if let Some(bad) = declared.iter().find(|p| !catalog_prompts.iter().any(|c| &c.id == *p)) {
                        return Err(dangling("prompt", bad));
                    }
                    catalog_prompts
                        .iter()
                        .filter(|c| declared.contains(&c.id))
                        .map(|c| c.id.clone())
                        .collect()
                }
                None => catalog_prompts.iter().map(|c| c.id.clone()).collect::<Vec<_>>(),
            };
            let default_prompt = catalog_prompts
                .iter()
                .find(|p| p.is_default && prompts.contains(&p.id))
                .map(|p| p.id.clone());
            let inst_ids = self
                .instances
                .get(&rel)
                .ok_or_else(|| Error::Grid(format!("manifest lacks instances for relation `{rel}`")))?;
            let mut instances = Vec::new();
            for inst in inst_ids {
                let catalog_verbs = catalog.verbalizations(inst).ok_or_else(|| dangling("instance", inst))?;
                let verbs: Vec<String> = match self.verbalizations.get(inst) {
                    Some(declared) => {
                        if let Some(bad) = declared.iter().find(|v| !catalog_verbs.iter().any(|c| &c.id == *v)) {
                            return Err(dangling("verbalization", bad));
                        }
                        catalog_verbs
                            .iter()
                            .filter(|c| declared.contains(&c.id))
                            .map(|c| c.id.clone())
                            .collect()
                    }
                    None => catalog_verbs.iter().map(|c| c.id.clone()).collect(),
                };
                let default_verbalization = catalog_verbs
                    .iter()
                    .find(|v| v.is_default && verbs.contains(&v.id))
                    .map(|v| v.id.clone());
                instances.push(InstanceScope {
                    id: inst.clone(),
                    verbalizations: verbs,
                    default_verbalization,
                });
            }
            relations.push(RelationScope {
                id: rel,
                prompts,
                default_prompt,
                instances,
            });
        }
        Ok(Manifest { models, relations })
    }
}

struct RawRecord<'a> {
    line: usize,
    fields: [&'a str; 7],
}

impl<'a> RawRecord<'a> {
    fn as_ref(&self) -> RecordRef<'a> {
        let f = &self.fields;
        RecordRef {
            model_id: f[0],
            relation_id: f[1],
            instance_id: f[2],
            prompt_id: f[3],
            verbalization_id: f[4],
            predicted: f[5],
            gold: f[6],
        }
    }
}

/// Parses and validates a grid against `catalog`.
pub fn parse_grid(text: &str, catalog: &Catalog) -> Result<PredictionGrid> {
    let mut declared = DeclaredManifest::default();
    let mut header_seen = false;
    let mut raw = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if !header_seen {
            if let Some(body) = line.strip_prefix(MANIFEST_PREFIX) {
                declared.parse_line(line_no, body)?;
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if line != GRID_HEADER {
                return Err(Error::syntax(line_no, "expected the grid header line"));
            }
            header_seen = true;
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        let fields: [&str; 7] = parts.try_into().map_err(|p: Vec<&str>| {
            Error::syntax(line_no, format!("expected 7 tab-separated fields, found {}", p.len()))
        })?;
        if let Some(pos) = fields[..5].iter().position(|f| f.is_empty()) {
            return Err(Error::syntax(line_no, format!("empty id in column {}", pos + 1)));
        }
        raw.push(RawRecord { line: line_no, fields });
    }
    if !header_seen {
        return Err(Error::syntax(1, "missing grid header line"));
    }

    let manifest = if declared.is_empty() {
        infer_manifest(&raw, catalog)?
    } else {
        declared.resolve(catalog)?
    };

    let mut builder = GridBuilder::new(manifest)?;
    for r in &raw {
        builder.insert_ref(&r.as_ref()).map_err(|e| match e {
            Error::Grid(msg) => Error::syntax(r.line, msg),
            other => other,
        })?;
    }
    builder.finish()
}

fn infer_manifest(raw: &[RawRecord<'_>], catalog: &Catalog) -> Result<Manifest> {
    let mut models = BTreeSet::new();
    let mut instances: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in raw {
        let rec = r.as_ref();
        models.insert(rec.model_id.to_string());
        instances
            .entry(rec.relation_id.to_string())
            .or_default()
            .insert(rec.instance_id.to_string());
        if catalog.prompts(rec.relation_id).is_none() {
            return Err(Error::DanglingId {
                kind: "relation",
                id: rec.relation_id.into(),
                key: key_of(&rec),
            });
        }
        if catalog.verbalizations(rec.instance_id).is_none() {
            return Err(Error::DanglingId {
                kind: "instance",
                id: rec.instance_id.into(),
                key: key_of(&rec),
            });
        }
    }
    let models: Vec<String> = models.into_iter().collect();
    let instances = instances
        .into_iter()
        .map(|(r, set)| (r, set.into_iter().collect()))
        .collect();
    Manifest::from_catalog(&models, &instances, catalog)
}

fn key_of(r: &RecordRef<'_>) -> String {
    format!(
        "({}, {}, {}, {}, {})",
        r.model_id, r.relation_id, r.instance_id, r.prompt_id, r.verbalization_id
    )
}

pub fn load_grid(grid_path: impl AsRef<Path>, catalog_path: impl AsRef<Path>) -> Result<PredictionGrid> {
    let catalog = Catalog::load(catalog_path)?;
    let path = grid_path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text, &catalog)
}

/// Canonical text form: manifest lines, header, then records sorted by key.
pub fn write_grid(grid: &PredictionGrid) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MANIFEST_PREFIX}models: {}", grid.models().join(" "));
    let rel_ids: Vec<&str> = grid.relations().iter().map(|r| r.id.as_str()).collect();
    let _ = writeln!(out, "{MANIFEST_PREFIX}relations: {}", rel_ids.join(" "));
    let mut verbs: BTreeMap<&str, &[String]> = BTreeMap::new();
    for rel in grid.relations() {
        let insts: Vec<&str> = rel.instances.iter().map(|i| i.id.as_str()).collect();
        let _ = writeln!(out, "{MANIFEST_PREFIX}instances {}: {}", rel.id, insts.join(" "));
        let _ = writeln!(out, "{MANIFEST_PREFIX}prompts {}: {}", rel.id, rel.prompts.join(" "));
        for inst in &rel.instances {
            verbs.insert(&inst.id, &inst.verbalizations);
        }
    }
    for (inst, list) in verbs {
        let _ = writeln!(out, "{MANIFEST_PREFIX}verbalizations {inst}: {}", list.join(" "));
    }
    out.push_str(GRID_HEADER);
    out.push('\n');

    let sorted = |ids: &[String]| {
        let mut idx: Vec<usize> = (0..ids.len()).collect();
        idx.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
        idx
    };
    for m in 0..grid.models().len() {
        for (r, rel) in grid.relations().iter().enumerate() {
            let prompts = sorted(&rel.prompts);
            for (i, inst) in rel.instances.iter().enumerate() {
                let verbalizations = sorted(&inst.verbalizations);
                for &p in &prompts {
                    for &v in &verbalizations {
                        let rec = grid.record(super::Cell {
                            model: m,
                            relation: r,
                            instance: i,
                            prompt: p,
                            verbalization: v,
                        });
                        let _ = writeln!(
                            out,
                            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                            rec.model_id,
                            rec.relation_id,
                            rec.instance_id,
                            rec.prompt_id,
                            rec.verbalization_id,
                            rec.predicted,
                            rec.gold
                        );
                    }
                }
            }
        }
    }
    out
}

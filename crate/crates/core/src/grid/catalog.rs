//! Prompt and verbalization catalogs.
//!
//! Line format (fields separated by whitespace; the last field runs to end
//! of line):
//!
//! ```text
//! prompt <relation_id> <prompt_id> default|- <template with [S] and [A]>
//! name <instance_id> <verbalization_id> default|- <surface form>
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const SUBJECT_SLOT: &str = "[S]";
pub const ANSWER_SLOT: &str = "[A]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptEntry {
    pub id: String,
    pub template: String,
    pub is_default: bool,
}

impl PromptEntry {
    /// Fills the subject slot; the answer slot is replaced by `mask`.
    pub fn instantiate(&self, subject: &str, mask: &str) -> String {
        self.template.replace(SUBJECT_SLOT, subject).replace(ANSWER_SLOT, mask)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verbalization {
    pub id: String,
    pub surface: String,
    pub is_default: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    prompts: BTreeMap<String, Vec<PromptEntry>>,
    verbalizations: BTreeMap<String, Vec<Verbalization>>,
}

/// Exactly one subject slot and one answer slot, nothing but punctuation or
/// whitespace after the answer slot.
pub fn validate_template(template: &str) -> Result<()> {
    let subjects = template.matches(SUBJECT_SLOT).count();
    let answers = template.matches(ANSWER_SLOT).count();
    if subjects != 1 || answers != 1 {
        return Err(Error::Catalog(format!(
            "template `{template}` needs exactly one {SUBJECT_SLOT} and one {ANSWER_SLOT}"
        )));
    }
    let (_, tail) = template.split_once(ANSWER_SLOT).expect("counted above");
    if tail.chars().any(char::is_alphanumeric) || tail.contains(SUBJECT_SLOT) {
        return Err(Error::Catalog(format!(
            "template `{template}` must end with the answer slot"
        )));
    }
    Ok(())
}

pub(crate) fn validate_id(kind: &str, id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(Error::Catalog(format!("invalid {kind} id `{id}`")));
    }
    Ok(())
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a prompt. Default uniqueness is checked by [`Catalog::validate`].
    pub fn add_prompt(&mut self, relation: &str, entry: PromptEntry) -> Result<()> {
        validate_id("relation", relation)?;
        validate_id("prompt", &entry.id)?;
        validate_template(&entry.template)?;
        let list = self.prompts.entry(relation.to_string()).or_default();
        if list.iter().any(|p| p.id == entry.id) {
            return Err(Error::Catalog(format!(
                "duplicate prompt `{}` for relation `{relation}`",
                entry.id
            )));
        }
        list.push(entry);
        Ok(())
    }

    pub fn add_verbalization(&mut self, instance: &str, entry: Verbalization) -> Result<()> {
        validate_id("instance", instance)?;
        validate_id("verbalization", &entry.id)?;
        if entry.surface.trim().is_empty() || entry.surface.contains(['\n', '\t']) {
            return Err(Error::Catalog(format!(
                "invalid surface form for `{instance}`/`{}`",
                entry.id
            )));
        }
        let list = self.verbalizations.entry(instance.to_string()).or_default();
        if list.iter().any(|v| v.id == entry.id) {
            return Err(Error::Catalog(format!(
                "duplicate verbalization `{}` for instance `{instance}`",
                entry.id
            )));
        }
        list.push(entry);
        Ok(())
    }

    /// Checks that every list has exactly one default.
    pub fn validate(&self) -> Result<()> {
        for (rel, list) in &self.prompts {
            let n = list.iter().filter(|p| p.is_default).count();
            if n != 1 {
                return Err(Error::Catalog(format!(
                    "relation `{rel}` has {n} default prompts, expected exactly one"
                )));
            }
        }
        for (inst, list) in &self.verbalizations {
            let n = list.iter().filter(|v| v.is_default).count();
            if n != 1 {
                return Err(Error::Catalog(format!(
                    "instance `{inst}` has {n} default verbalizations, expected exactly one"
                )));
            }
        }
        Ok(())
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.prompts.keys().map(String::as_str)
    }

    pub fn instances(&self) -> impl Iterator<Item = &str> {
        self.verbalizations.keys().map(String::as_str)
    }

    pub fn prompts(&self, relation: &str) -> Option<&[PromptEntry]> {
        self.prompts.get(relation).map(Vec::as_slice)
    }

    pub fn verbalizations(&self, instance: &str) -> Option<&[Verbalization]> {
        self.verbalizations.get(instance).map(Vec::as_slice)
    }

    pub fn default_prompt(&self, relation: &str) -> Option<&PromptEntry> {
        self.prompts(relation)?.iter().find(|p| p.is_default)
    }

    pub fn default_verbalization(&self, instance: &str) -> Option<&Verbalization> {
        self.verbalizations(instance)?.iter().find(|v| v.is_default)
    }

    pub fn prompt_count(&self) -> usize {
        self.prompts.values().map(Vec::len).sum()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut catalog = Catalog::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(5, char::is_whitespace).filter(|s| !s.is_empty());
            let mut field = |what: &str| {
                parts
                    .next()
                    .ok_or_else(|| Error::syntax(line_no, format!("missing {what}")))
            };
            let kind = field("record kind")?;
            let owner = field("owner id")?;
            let id = field("entry id")?;
            let flag = field("default flag")?;
            let rest = line_rest(line, 4).ok_or_else(|| Error::syntax(line_no, "missing template or surface"))?;
            let is_default = match flag {
                "default" => true,
                "-" => false,
                other => {
                    return Err(Error::syntax(
                        line_no,
                        format!("default flag must be `default` or `-`, got `{other}`"),
                    ))
                }
            };
            let added = match kind {
                "prompt" => catalog.add_prompt(
                    owner,
                    PromptEntry {
                        id: id.to_string(),
                        template: rest.to_string(),
                        is_default,
                    },
                ),
                "name" => catalog.add_verbalization(
                    owner,
                    Verbalization {
                        id: id.to_string(),
                        surface: rest.to_string(),
                        is_default,
                    },
                ),
                other => return Err(Error::syntax(line_no, format!("unknown record kind `{other}`"))),
            };
            added.map_err(|e| Error::syntax(line_no, e.to_string()))?;
        }
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text: relations then instances in id order, entries in
    /// catalog order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (rel, list) in &self.prompts {
            for p in list {
                let flag = if p.is_default { "default" } else { "-" };
                let _ = writeln!(out, "prompt {rel} {} {flag} {}", p.id, p.template);
            }
        }
        for (inst, list) in &self.verbalizations {
            for v in list {
                let flag = if v.is_default { "default" } else { "-" };
                let _ = writeln!(out, "name {inst} {} {flag} {}", v.id, v.surface);
            }
        }
        out
    }

    /// Prompt ids used anywhere in the catalog.
    pub fn prompt_ids(&self) -> BTreeSet<&str> {
        self.prompts.values().flatten().map(|p| p.id.as_str()).collect()
    }
}

/// Everything after the first `skip` whitespace-separated fields.
fn line_rest(line: &str, skip: usize) -> Option<&str> {
    let mut rest = line;
    for _ in 0..skip {
        rest = rest.trim_start();
        let end = rest.find(char::is_whitespace)?;
        rest = &rest[end..];
    }
    let rest = rest.trim();
    (!rest.is_empty()).then_some(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# capital relation
prompt capital p1 default The capital of [S] is [A] .
prompt capital p2 - [S] has its capital in [A].
name us n0 default the U.S.
name us n1 - America
";

    #[test]
    fn parses_and_round_trips() {
        let c = Catalog::parse(SAMPLE).unwrap();
        assert_eq!(c.prompts("capital").unwrap().len(), 2);
        assert_eq!(c.default_prompt("capital").unwrap().id, "p1");
        assert_eq!(c.default_verbalization("us").unwrap().surface, "the U.S.");
        assert_eq!(c.verbalizations("us").unwrap()[1].surface, "America");
        let again = Catalog::parse(&c.to_text()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn instantiates_templates() {
        let c = Catalog::parse(SAMPLE).unwrap();
        let p = c.default_prompt("capital").unwrap();
        assert_eq!(
            p.instantiate("the U.S.", "[MASK]"),
            "The capital of the U.S. is [MASK] ."
        );
    }

    #[test]
    fn template_rules() {
        assert!(validate_template("The capital of [S] is [A] .").is_ok());
        assert!(validate_template("[S] was born in [A]").is_ok());
        assert!(validate_template("[A] is the capital of [S]").is_err());
        assert!(validate_template("[S] and [S] [A]").is_err());
        assert!(validate_template("no slots").is_err());
    }

    #[test]
    fn exactly_one_default() {
        let two = "prompt r p1 default [S] x [A]\nprompt r p2 default [S] y [A]\n";
        assert!(matches!(Catalog::parse(two), Err(Error::Catalog(_))));
        let none = "name e n0 - Foo\n";
        assert!(matches!(Catalog::parse(none), Err(Error::Catalog(_))));
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(
            Catalog::parse("prompt r p1 maybe [S] [A]\n"),
            Err(Error::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            Catalog::parse("bogus r p1 default x\n"),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            Catalog::parse("prompt r p1 default\n"),
            Err(Error::Syntax { .. })
        ));
    }
}

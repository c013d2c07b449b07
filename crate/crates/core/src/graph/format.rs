//! Text format for causal graphs.
//!
//! ```text
//! # comment
//! nodes:
//! M  Pretrained language model  true true
//! E  Performance                true false
//! edges:
//! M -> E
//! ```
//!
//! A node line is `id label... observable adjustable`; the label may contain
//! spaces and defaults to the id when omitted.

use std::fmt::Write as _;

use super::{CausalDag, Node};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Nodes,
    Edges,
}

fn parse_flag(token: &str, line: usize) -> Result<bool> {
    match token.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::syntax(line, format!("expected a boolean flag, got `{other}`"))),
    }
}

pub fn parse_graph(text: &str) -> Result<CausalDag> {
    let mut section = Section::None;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "nodes:" => {
                section = Section::Nodes;
                continue;
            }
            "edges:" => {
                section = Section::Edges;
                continue;
            }
            _ => {}
        }
        match section {
            Section::None => return Err(Error::syntax(line_no, "content before a `nodes:` or `edges:` header")),
            Section::Nodes => {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                if tokens.len() < 3 {
                    return Err(Error::syntax(
                        line_no,
                        "node line needs `id label observable adjustable`",
                    ));
                }
                let n = tokens.len();
                let label = if n > 3 {
                    tokens[1..n - 2].join(" ")
                } else {
                    tokens[0].to_string()
                };
                nodes.push(Node {
                    id: tokens[0].to_string(),
                    label,
                    observable: parse_flag(tokens[n - 2], line_no)?,
                    adjustable: parse_flag(tokens[n - 1], line_no)?,
                });
            }
            Section::Edges => {
                let (from, to) = line
                    .split_once("->")
                    .ok_or_else(|| Error::syntax(line_no, "edge line must be `from -> to`"))?;
                let (from, to) = (from.trim(), to.trim());
                if from.is_empty() || to.is_empty() || to.contains(char::is_whitespace) {
                    return Err(Error::syntax(line_no, "edge line must be `from -> to`"));
                }
                edges.push((from.to_string(), to.to_string()));
            }
        }
    }
    CausalDag::new(nodes, &edges)
}

/// Graphviz DOT rendering. Latent nodes are dashed, adjustable nodes boxed.
pub fn to_dot(dag: &CausalDag) -> String {
    let mut out = String::from("digraph scm {\n  rankdir=LR;\n");
    for node in dag.nodes() {
        let shape = if node.adjustable { "box" } else { "ellipse" };
        let style = if node.observable { "solid" } else { "dashed" };
        let _ = writeln!(
            out,
            "  \"{}\" [label=\"{}\\n{}\", shape={shape}, style={style}];",
            node.id,
            node.id,
            node.label.replace('"', "\\\"")
        );
    }
    for (from, to) in dag.edges() {
        let _ = writeln!(out, "  \"{from}\" -> \"{to}\";");
    }
    out.push_str("}\n");
    out
}

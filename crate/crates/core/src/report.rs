//! CSV and plain-text emitters for metric results.
//!
//! Columns are fixed; floats use Rust's shortest round-trip formatting so
//! the files parse back to the exact values.

use std::fmt::Write as _;

use crate::metrics::{PromptSpread, RankInstability, VerbalizationStability};

pub const MACRO_ROW: &str = "MACRO";

pub fn prompt_spread_csv(spreads: &[PromptSpread]) -> String {
    let mut out = String::from("model_id,relation_id,mean,min,max,std\n");
    for s in spreads {
        for r in &s.relations {
            let st = r.stats;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.model, r.relation, st.mean, st.min, st.max, st.std
            );
        }
        let m = s.macro_avg;
        let _ = writeln!(out, "{},{MACRO_ROW},{},{},{},{}", s.model, m.mean, m.min, m.max, m.std);
    }
    out
}

/// Macro averages per model in P@1 points.
pub fn prompt_spread_text(spreads: &[PromptSpread]) -> String {
    let width = spreads.iter().map(|s| s.model.len()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "{:<width$}  {:>9}  {:>10}  {:>9}  {:>6}\n",
        "Model", "Mean P@1", "Worst P@1", "Best P@1", "Std"
    );
    for s in spreads {
        let m = s.macro_avg;
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.2}  {:>10.2}  {:>9.2}  {:>6.2}",
            s.model,
            100.0 * m.mean,
            100.0 * m.min,
            100.0 * m.max,
            100.0 * m.std
        );
    }
    out
}

pub fn stability_csv(stabilities: &[VerbalizationStability]) -> String {
    let mut out = String::from("model_id,relation_id,stable,eligible,fraction\n");
    for s in stabilities {
        for r in &s.relations {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.model, r.relation, r.stable, r.eligible, r.fraction
            );
        }
        let stable: usize = s.relations.iter().map(|r| r.stable).sum();
        let eligible: usize = s.relations.iter().map(|r| r.eligible).sum();
        let _ = writeln!(out, "{},{MACRO_ROW},{stable},{eligible},{}", s.model, s.macro_avg);
    }
    out
}

pub fn instability_csv(inst: &RankInstability) -> String {
    let mut out = String::from("relation_id,unstable\n");
    for (rel, unstable) in &inst.relations {
        let _ = writeln!(out, "{rel},{}", u8::from(*unstable));
    }
    let _ = writeln!(out, "{MACRO_ROW},{}", inst.fraction);
    out
}

/// One row per (model, relation, prompt); box-plot input.
pub fn plot_csv(rows: &[(String, String, String, f64)]) -> String {
    let mut out = String::from("model_id,relation_id,prompt_id,p_at_1\n");
    for (m, r, p, v) in rows {
        let _ = writeln!(out, "{m},{r},{p},{v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{RelationSpread, SpreadStats};

    #[test]
    fn spread_csv_layout() {
        let stats = SpreadStats::of(&[0.2, 0.4]);
        let s = PromptSpread {
            model: "A".into(),
            relations: vec![RelationSpread {
                relation: "r".into(),
                per_prompt: vec![("p0".into(), 0.2), ("p1".into(), 0.4)],
                stats,
            }],
            macro_avg: stats,
        };
        let csv = prompt_spread_csv(std::slice::from_ref(&s));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "model_id,relation_id,mean,min,max,std");
        assert!(lines[1].starts_with("A,r,0.30000000000000004,0.2,0.4,"));
        assert!(lines[2].starts_with("A,MACRO,"));
        assert!(prompt_spread_text(&[s]).contains("20.00"));
    }

    #[test]
    fn instability_csv_layout() {
        let inst = RankInstability {
            relations: vec![("a".into(), true), ("b".into(), false)],
            fraction: 0.5,
        };
        assert_eq!(instability_csv(&inst), "relation_id,unstable\na,1\nb,0\nMACRO,0.5\n");
    }
}

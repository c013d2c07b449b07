//! Bootstrap rank-consistency protocol over random relation subsets.
//!
//! Each runtime draws a relation subset, scores every model under each mode
//! on that subset, macro-averages over the subset and ranks the models. The
//! rankings are then summarized with [`rank_consistency`].
//!
//! Randomness: one ChaCha8 key derived from the master seed, with a separate
//! stream per (runtime, purpose), so runtimes are independent of each other
//! and of the thread schedule.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::PredictionGrid;
use crate::intervention::{original_resolved, random_draw, sample_resolved, InterventionConfig, Mode};
use crate::metrics::{p_at_1_idx, rank_consistency, rank_indices, RankConsistency};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub n_runtimes: usize,
    pub subset_size: usize,
    pub modes: Vec<Mode>,
    pub master_seed: u64,
    pub intervention: InterventionConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            n_runtimes: 1000,
            subset_size: 20,
            modes: Mode::ALL.to_vec(),
            master_seed: crate::DEFAULT_SEED,
            intervention: InterventionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeConsistency {
    pub mode: Mode,
    pub consistency: RankConsistency,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuntimeRecord {
    pub runtime: usize,
    pub mode: Mode,
    pub ranking: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub runtimes: usize,
    pub models: Vec<String>,
    /// In canonical mode order.
    pub modes: Vec<ModeConsistency>,
    /// Runtime-major, then mode order.
    pub log: Vec<RuntimeRecord>,
}

impl ConsistencyReport {
    pub fn mode(&self, mode: Mode) -> Option<&RankConsistency> {
        self.modes.iter().find(|m| m.mode == mode).map(|m| &m.consistency)
    }

    /// Percentages with one row per model plus the overall row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self
            .models
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("Overall Rank".len());
        let _ = write!(out, "{:<width$}", "Model");
        for m in &self.modes {
            let _ = write!(out, "  {:>12}", m.mode.as_str());
        }
        out.push('\n');
        for model in &self.models {
            let _ = write!(out, "{model:<width$}");
            for m in &self.modes {
                let _ = write!(out, "  {:>12.1}", 100.0 * m.consistency.per_model[model].fraction);
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<width$}", "Overall Rank");
        for m in &self.modes {
            let _ = write!(out, "  {:>12.1}", 100.0 * m.consistency.overall);
        }
        out.push('\n');
        let _ = writeln!(out, "runtimes: {}", self.runtimes);
        out
    }

    /// `row,mode,consistency,modal`; `row` is a model id or `overall`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,mode,consistency,modal\n");
        for model in &self.models {
            for m in &self.modes {
                let c = &m.consistency.per_model[model];
                let _ = writeln!(out, "{model},{},{},{}", m.mode, c.fraction, c.modal_position + 1);
            }
        }
        for m in &self.modes {
            let _ = writeln!(
                out,
                "overall,{},{},{}",
                m.mode,
                m.consistency.overall,
                m.consistency.modal_ranking.join(" ")
            );
        }
        out
    }

    /// `runtime,mode,ranking` with the ranking best first, space separated.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("runtime,mode,ranking\n");
        for r in &self.log {
            let _ = writeln!(out, "{},{},{}", r.runtime, r.mode, r.ranking.join(" "));
        }
        out
    }
}

/// Per-mode scores that do not depend on the runtime, model-major over all
/// relations of the grid.
struct Fixed {
    original: Option<Vec<f64>>,
    intervention: Option<Vec<f64>>,
}

fn all_scores(grid: &PredictionGrid, resolved: &[crate::intervention::Resolved]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.models().len() * resolved.len());
    for m in 0..grid.models().len() {
        out.extend(resolved.iter().map(|res| res.score(grid, m)));
    }
    out
}

fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

// Stream layout per runtime: 0 subset, 1 + mode index for mode draws.
const STREAMS_PER_RUNTIME: u64 = 4;

fn mode_slot(mode: Mode) -> u64 {
    match mode {
        Mode::Original => 1,
        Mode::Random => 2,
        Mode::Intervention => 3,
    }
}

fn run_one(grid: &PredictionGrid, spec: &ExperimentSpec, fixed: &Fixed, runtime: usize) -> Result<Vec<Vec<usize>>> {
    let n_rel = grid.relations().len();
    let n_models = grid.models().len();
    let base = runtime as u64 * STREAMS_PER_RUNTIME;
    let mut subset = index::sample(&mut stream_rng(spec.master_seed, base), n_rel, spec.subset_size).into_vec();
    subset.sort_unstable();
    let k = subset.len() as f64;

    let mut rankings = Vec::with_capacity(spec.modes.len());
    for &mode in &spec.modes {
        let mut rng = stream_rng(spec.master_seed, base + mode_slot(mode));
        let mut totals = vec![0.0; n_models];
        match (mode, fixed) {
            (Mode::Original, Fixed { original: Some(s), .. })
            | (
                Mode::Intervention,
                Fixed {
                    intervention: Some(s), ..
                },
            ) => {
                for (m, total) in totals.iter_mut().enumerate() {
                    *total = subset.iter().map(|&r| s[m * n_rel + r]).sum();
                }
            }
            (Mode::Random, _) => {
                for &r in &subset {
                    let (p, verbs) = random_draw(grid, r, &mut rng);
                    for (m, total) in totals.iter_mut().enumerate() {
                        *total += p_at_1_idx(grid, m, r, p, &verbs);
                    }
                }
            }
            _ => {
                for &r in &subset {
                    let res = sample_resolved(grid, r, &spec.intervention, &mut rng)?;
                    for (m, total) in totals.iter_mut().enumerate() {
                        *total += res.score(grid, m);
                    }
                }
            }
        }
        let means: Vec<f64> = totals.iter().map(|t| t / k).collect();
        rankings.push(rank_indices(&means));
    }
    Ok(rankings)
}

/// Runs the protocol. Output is identical for any thread count.
pub fn run_rank_consistency(grid: &PredictionGrid, spec: &ExperimentSpec) -> Result<ConsistencyReport> {
    if spec.n_runtimes == 0 {
        return Err(Error::Config("n_runtimes must be at least 1".into()));
    }
    if spec.modes.is_empty() {
        return Err(Error::Config("at least one mode is required".into()));
    }
    let available = grid.relations().len();
    if spec.subset_size == 0 || spec.subset_size > available {
        return Err(Error::SubsetTooLarge {
            subset: spec.subset_size,
            available,
        });
    }
    let mut spec = spec.clone();
    spec.modes.sort_unstable();
    spec.modes.dedup();

    for rel in grid.relations() {
        if rel.instances.is_empty() {
            return Err(Error::EmptyRelation(rel.id.clone()));
        }
    }
    let relations = 0..available;
    let fixed = Fixed {
        original: if spec.modes.contains(&Mode::Original) {
            let res = relations
                .clone()
                .map(|r| original_resolved(grid, r))
                .collect::<Result<Vec<_>>>()?;
            Some(all_scores(grid, &res))
        } else {
            None
        },
        intervention: if spec.modes.contains(&Mode::Intervention) && spec.intervention.is_exhaustive() {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.intervention.seed);
            let res = relations
                .map(|r| sample_resolved(grid, r, &spec.intervention, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            Some(all_scores(grid, &res))
        } else {
            None
        },
    };

    let results: Vec<Result<Vec<Vec<usize>>>> = (0..spec.n_runtimes)
        .into_par_iter()
        .map(|rt| run_one(grid, &spec, &fixed, rt))
        .collect();

    let models = grid.models();
    let mut per_mode: Vec<Vec<Vec<&str>>> = vec![Vec::with_capacity(spec.n_runtimes); spec.modes.len()];
    let mut log = Vec::with_capacity(spec.n_runtimes * spec.modes.len());
    for (runtime, result) in results.into_iter().enumerate() {
        let rankings = result.map_err(|e| Error::Runtime {
            runtime,
            source: Box::new(e),
        })?;
        for ((ranking, &mode), acc) in rankings.into_iter().zip(&spec.modes).zip(&mut per_mode) {
            let named: Vec<&str> = ranking.iter().map(|&m| models[m].as_str()).collect();
            log.push(RuntimeRecord {
                runtime,
                mode,
                ranking: named.iter().map(|s| s.to_string()).collect(),
            });
            acc.push(named);
        }
    }
    let modes = spec
        .modes
        .iter()
        .zip(&per_mode)
        .map(|(&mode, rankings)| {
            Ok(ModeConsistency {
                mode,
                consistency: rank_consistency(rankings)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ConsistencyReport {
        runtimes: spec.n_runtimes,
        models: models.to_vec(),
        modes,
        log,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delta {
    pub from: Mode,
    pub to: Mode,
    /// `value(to) - value(from)`
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    /// Model id, or `overall`.
    pub row: String,
    pub values: BTreeMap<Mode, f64>,
    pub deltas: Vec<Delta>,
    /// Intervention is present alongside random and does not beat it.
    pub flagged: bool,
}

/// Per-model and overall differences between every pair of modes, models
/// first then the overall row.
pub fn compare_modes(report: &ConsistencyReport) -> Vec<ComparisonRow> {
    let mut rows: Vec<(String, BTreeMap<Mode, f64>)> = report
        .models
        .iter()
        .map(|model| {
            let values = report
                .modes
                .iter()
                .filter_map(|m| m.consistency.per_model.get(model).map(|c| (m.mode, c.fraction)))
                .collect();
            (model.clone(), values)
        })
        .collect();
    rows.push((
        "overall".to_string(),
        report.modes.iter().map(|m| (m.mode, m.consistency.overall)).collect(),
    ));
    rows.into_iter()
        .map(|(row, values)| {
            let modes: Vec<Mode> = values.keys().copied().collect();
            let mut deltas = Vec::new();
            for (i, &from) in modes.iter().enumerate() {
                for &to in &modes[i + 1..] {
                    deltas.push(Delta {
                        from,
                        to,
                        delta: values[&to] - values[&from],
                    });
                }
            }
            let flagged = matches!(
                (values.get(&Mode::Random), values.get(&Mode::Intervention)),
                (Some(r), Some(i)) if i <= r
            );
            ComparisonRow {
                row,
                values,
                deltas,
                flagged,
            }
        })
        .collect()
}

/// Comparison rows as CSV: values then deltas named `to-from`.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    let Some(first) = rows.first() else {
        return out;
    };
    out.push_str("row");
    for mode in first.values.keys() {
        let _ = write!(out, ",{mode}");
    }
    for d in &first.deltas {
        let _ = write!(out, ",{}-{}", d.to, d.from);
    }
    out.push_str(",flagged\n");
    for row in rows {
        out.push_str(&row.row);
        for v in row.values.values() {
            let _ = write!(out, ",{v}");
        }
        for d in &row.deltas {
            let _ = write!(out, ",{}", d.delta);
        }
        let _ = writeln!(out, ",{}", row.flagged);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{parse_grid, Catalog, GRID_HEADER};
    use crate::metrics::ModelConsistency;

    /// 3 relations, 2 prompts, 2 names; model A always right, B right on p1.
    fn dominance_grid() -> PredictionGrid {
        let mut cat = String::new();
        let mut text = format!("{GRID_HEADER}\n");
        for r in 0..3 {
            cat.push_str(&format!(
                "prompt r{r} p0 default [S] x [A]\nprompt r{r} p1 - [S] y [A]\n"
            ));
            for i in 0..4 {
                for p in 0..2 {
                    for v in 0..2 {
                        for m in ["A", "B", "C"] {
                            let ok = m == "A" || (m == "B" && p == 1 && i < 2);
                            let pred = if ok { "g" } else { "w" };
                            text.push_str(&format!("{m}\tr{r}\ti{i}\tp{p}\tn{v}\t{pred}\tg\n"));
                        }
                    }
                }
            }
        }
        for i in 0..4 {
            cat.push_str(&format!("name i{i} n0 default I{i}\nname i{i} n1 - Alt{i}\n"));
        }
        parse_grid(&text, &Catalog::parse(&cat).unwrap()).unwrap()
    }

    fn spec(n: usize, k: usize) -> ExperimentSpec {
        ExperimentSpec {
            n_runtimes: n,
            subset_size: k,
            master_seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn single_runtime_is_fully_consistent() {
        let rep = run_rank_consistency(&dominance_grid(), &spec(1, 2)).unwrap();
        for m in &rep.modes {
            assert_eq!(m.consistency.overall, 1.0);
            assert!(m.consistency.per_model.values().all(|c| c.fraction == 1.0));
        }
    }

    #[test]
    fn dominant_model_always_first() {
        let rep = run_rank_consistency(&dominance_grid(), &spec(50, 2)).unwrap();
        for m in &rep.modes {
            assert_eq!(m.consistency.per_model["A"].fraction, 1.0);
            assert_eq!(m.consistency.per_model["A"].modal_position, 0);
        }
        assert_eq!(rep.log.len(), 150);
    }

    #[test]
    fn deterministic_and_schedule_independent() {
        let g = dominance_grid();
        let a = run_rank_consistency(&g, &spec(40, 2)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_rank_consistency(&g, &spec(40, 2)).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.log_csv(), b.log_csv());
    }

    #[test]
    fn subset_too_large() {
        assert!(matches!(
            run_rank_consistency(&dominance_grid(), &spec(5, 4)),
            Err(Error::SubsetTooLarge {
                subset: 4,
                available: 3
            })
        ));
    }

    fn fake(values: &[(Mode, f64)]) -> ConsistencyReport {
        ConsistencyReport {
            runtimes: 1000,
            models: vec!["A".into()],
            modes: values
                .iter()
                .map(|&(mode, v)| ModeConsistency {
                    mode,
                    consistency: RankConsistency {
                        runtimes: 1000,
                        per_model: [(
                            "A".to_string(),
                            ModelConsistency {
                                modal_position: 0,
                                count: 1000,
                                fraction: 1.0,
                            },
                        )]
                        .into(),
                        modal_ranking: vec!["A".into()],
                        overall_count: (v * 1000.0) as usize,
                        overall: v,
                    },
                })
                .collect(),
            log: vec![],
        }
    }

    #[test]
    fn compares_modes() {
        let rows = compare_modes(&fake(&[
            (Mode::Original, 0.255),
            (Mode::Random, 0.055),
            (Mode::Intervention, 0.685),
        ]));
        let overall = rows.last().unwrap();
        let d = overall
            .deltas
            .iter()
            .find(|d| d.from == Mode::Random && d.to == Mode::Intervention)
            .unwrap();
        assert!((d.delta - 0.63).abs() < 1e-12);
        assert!(!overall.flagged);
        assert_eq!(overall.deltas.len(), 3);

        let same = compare_modes(&fake(&[(Mode::Random, 0.4), (Mode::Intervention, 0.4)]));
        assert!(same.iter().all(|r| r.deltas.len() == 1 && r.deltas[0].delta == 0.0));
        assert!(same.last().unwrap().flagged);
        assert!(comparison_csv(&same).starts_with("row,random,intervention,intervention-random,flagged\n"));
    }
}

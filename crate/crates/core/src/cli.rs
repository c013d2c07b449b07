//! Command-line front end.
//!
//! Exit codes: 0 success, 2 parse error, 3 invalid query, 4 data validation
//! failure, 5 I/O failure.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::experiments::{compare_modes, comparison_csv, run_rank_consistency, ExperimentSpec};
use crate::graph::{
    backdoor_paths, find_adjustment_sets, is_blocked, parse_graph, satisfies_backdoor_criterion, to_dot, CausalDag,
};
use crate::grid::{load_grid, write_grid, PredictionGrid};
use crate::intervention::{all_relations, evaluate_mode, Distribution, InterventionConfig, Mode, Weights};
use crate::metrics::{prompt_plot_rows, prompt_rank_instability, prompt_spread, rank_models, verbalization_stability};
use crate::report;
use crate::synthetic::{true_ranking, Scenario, ScenarioShape};

#[derive(Debug, Parser)]
#[command(
    name = "causal-probe",
    version,
    about = "Bias-aware evaluation of prompt-based knowledge probing"
)]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = crate::DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads for experiments and generation (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Causal graph queries.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Metrics and evaluation modes over a prediction grid.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Bootstrap rank-consistency experiment.
    Experiment(ExperimentArgs),
    /// Generate a synthetic grid with known ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct Query {
    #[arg(long)]
    pub treatment: String,
    #[arg(long)]
    pub outcome: String,
}

#[derive(Debug, Subcommand)]
pub enum GraphCommand {
    /// Parse and validate a graph file.
    Check { file: PathBuf },
    /// List backdoor paths, open ones first.
    BackdoorPaths {
        #[command(flatten)]
        query: Query,
        /// Conditioning set used to judge each path.
        #[arg(long, value_delimiter = ',')]
        adjust: Vec<String>,
        /// Print arrows as `<-` and `->`.
        #[arg(long)]
        ascii: bool,
        file: PathBuf,
    },
    /// Check a conditioning set against the backdoor criterion.
    Criterion {
        #[command(flatten)]
        query: Query,
        #[arg(long, value_delimiter = ',')]
        adjust: Vec<String>,
        file: PathBuf,
    },
    /// Minimal adjustment sets among adjustable nodes.
    AdjustmentSets {
        #[command(flatten)]
        query: Query,
        /// Treat these nodes as adjustable in addition to the file's flags.
        #[arg(long, value_delimiter = ',')]
        adjustable: Vec<String>,
        #[arg(long)]
        max_size: Option<usize>,
        file: PathBuf,
    },
    /// Render as Graphviz dot.
    Dot { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricReport {
    PromptSpread,
    Stability,
    Instability,
    Plot,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

#[derive(Debug, Args)]
pub struct GridInput {
    pub grid: PathBuf,
    pub catalog: PathBuf,
}

#[derive(Debug, Args)]
pub struct Sampling {
    /// Prompts sampled per relation: ALL or a positive integer.
    #[arg(long, default_value = "ALL")]
    pub kp: String,
    /// Names sampled per instance: ALL or a positive integer.
    #[arg(long, default_value = "ALL")]
    pub kx: String,
    /// Prior weights file (`prompt|name <owner> <id> <weight>` lines).
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

impl Sampling {
    fn config(&self, seed: u64) -> Result<InterventionConfig> {
        Ok(InterventionConfig {
            k_p: self.kp.parse()?,
            k_x: self.kx.parse()?,
            distribution: match &self.weights {
                Some(path) => Distribution::Weighted(Weights::load(path)?),
                None => Distribution::Uniform,
            },
            seed,
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Bias diagnostics.
    Metrics {
        #[command(flatten)]
        input: GridInput,
        #[arg(long, value_enum, default_value_t = MetricReport::All)]
        report: MetricReport,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Write report files here instead of printing them.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score tables for the evaluation modes.
    Intervene {
        #[command(flatten)]
        input: GridInput,
        #[arg(long, value_delimiter = ',', default_value = "original,random,intervention")]
        modes: Vec<String>,
        #[command(flatten)]
        sampling: Sampling,
        /// Restrict to these relations (default: all).
        #[arg(long, value_delimiter = ',')]
        relations: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub input: GridInput,
    #[arg(long, default_value_t = 1000)]
    pub runtimes: usize,
    #[arg(long, default_value_t = 20)]
    pub subset_size: usize,
    #[arg(long, value_delimiter = ',', default_value = "original,random,intervention")]
    pub modes: Vec<String>,
    #[command(flatten)]
    pub sampling: Sampling,
    /// Write table, CSVs and the per-runtime log here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioName {
    PaperLike,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Named scenario; shape flags override its fields.
    #[arg(long, value_enum, conflicts_with = "scenario_file")]
    pub scenario: Option<ScenarioName>,
    /// Scenario file written by an earlier `synth` run.
    #[arg(long)]
    pub scenario_file: Option<PathBuf>,
    #[arg(long, conflicts_with = "scenario_file")]
    pub models: Option<usize>,
    #[arg(long, conflicts_with = "scenario_file")]
    pub relations: Option<usize>,
    #[arg(long, conflicts_with = "scenario_file")]
    pub prompts: Option<usize>,
    /// Maximum names per instance.
    #[arg(long, conflicts_with = "scenario_file")]
    pub names: Option<usize>,
    #[arg(long, conflicts_with = "scenario_file")]
    pub instances: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Outcome of one invocation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommandResult {
    pub exit_code: i32,
    pub emitted_paths: Vec<PathBuf>,
    pub diagnostics: Vec<String>,
}

struct Emitter<'a> {
    out: &'a mut (dyn Write + Send),
    dir: Option<PathBuf>,
    result: CommandResult,
}

impl<'a> Emitter<'a> {
    fn new(out: &'a mut (dyn Write + Send), dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        Ok(Emitter {
            out,
            dir,
            result: CommandResult::default(),
        })
    }

    fn print(&mut self, text: &str) -> Result<()> {
        self.out
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
    }

    /// Writes `name` into the output directory, or prints it when there is none.
    fn emit(&mut self, name: &str, contents: &str) -> Result<()> {
        match &self.dir {
            Some(dir) => {
                let path = dir.join(name);
                std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
                self.print(&format!("wrote {}\n", path.display()))?;
                self.result.emitted_paths.push(path);
                Ok(())
            }
            None => self.print(contents),
        }
    }

    fn warn(&mut self, message: impl Into<String>) {
        self.result.diagnostics.push(message.into());
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_dag(path: &Path) -> Result<CausalDag> {
    parse_graph(&read(path)?)
}

fn parse_modes(modes: &[String]) -> Result<Vec<Mode>> {
    let mut parsed = modes.iter().map(|m| m.parse()).collect::<Result<Vec<Mode>>>()?;
    parsed.sort_unstable();
    parsed.dedup();
    if parsed.is_empty() {
        return Err(Error::Config("at least one mode is required".into()));
    }
    Ok(parsed)
}

fn run_graph(cmd: &GraphCommand, em: &mut Emitter) -> Result<()> {
    match cmd {
        GraphCommand::Check { file } => {
            let dag = load_dag(file)?;
            let adjustable = dag.adjustable_nodes().count();
            em.print(&format!(
                "ok: {} nodes, {} edges, {adjustable} adjustable\n",
                dag.nodes().len(),
                dag.edges().count()
            ))
        }
        GraphCommand::BackdoorPaths {
            query,
            adjust,
            ascii,
            file,
        } => {
            let dag = load_dag(file)?;
            let paths = backdoor_paths(&dag, &query.treatment, &query.outcome)?;
            let mut open = Vec::new();
            let mut blocked = Vec::new();
            for p in paths {
                let text = if *ascii { p.ascii() } else { p.to_string() };
                if is_blocked(&dag, &p, adjust)?.blocked {
                    blocked.push(text);
                } else {
                    open.push(text);
                }
            }
            let mut text = String::new();
            for p in &open {
                text.push_str(&format!("open     {p}\n"));
            }
            for p in &blocked {
                text.push_str(&format!("blocked  {p}\n"));
            }
            em.print(&text)
        }
        GraphCommand::Criterion { query, adjust, file } => {
            let dag = load_dag(file)?;
            let report = satisfies_backdoor_criterion(&dag, &query.treatment, &query.outcome, adjust)?;
            if report.valid {
                em.print("VALID\n")
            } else {
                let mut text = format!("INVALID: {}\n", report.violations[0]);
                for v in &report.violations[1..] {
                    text.push_str(&format!("  {v}\n"));
                }
                em.print(&text)
            }
        }
        GraphCommand::AdjustmentSets {
            query,
            adjustable,
            max_size,
            file,
        } => {
            let mut dag = load_dag(file)?;
            if !adjustable.is_empty() {
                let ids: Vec<&str> = adjustable.iter().map(String::as_str).collect();
                dag = dag.with_adjustable(&ids, true)?;
            }
            let sets = find_adjustment_sets(&dag, &query.treatment, &query.outcome, max_size.unwrap_or(usize::MAX))?;
            if sets.is_empty() {
                em.warn("no adjustment set among adjustable nodes");
            }
            let mut text = String::new();
            for s in sets {
                let ids: Vec<&str> = s.iter().map(String::as_str).collect();
                text.push_str(&format!("{{{}}}\n", ids.join(", ")));
            }
            em.print(&text)
        }
        GraphCommand::Dot { file } => {
            let dag = load_dag(file)?;
            em.print(&to_dot(&dag))
        }
    }
}

fn run_metrics(grid: &PredictionGrid, report: MetricReport, format: Format, em: &mut Emitter) -> Result<()> {
    let all = report == MetricReport::All;
    let models = grid.models().to_vec();
    if all || report == MetricReport::PromptSpread {
        let spreads = models
            .iter()
            .map(|m| prompt_spread(grid, m))
            .collect::<Result<Vec<_>>>();
        match spreads {
            Ok(s) => match format {
                Format::Csv => em.emit("prompt_spread.csv", &report::prompt_spread_csv(&s))?,
                Format::Text => em.emit("prompt_spread.txt", &report::prompt_spread_text(&s))?,
            },
            Err(e @ Error::SinglePrompt(_)) if all => em.warn(format!("prompt spread skipped: {e}")),
            Err(e) => return Err(e),
        }
    }
    if all || report == MetricReport::Stability {
        let stabilities = models
            .iter()
            .map(|m| verbalization_stability(grid, m))
            .collect::<Result<Vec<_>>>();
        match stabilities {
            Ok(s) => em.emit("verbalization_stability.csv", &report::stability_csv(&s))?,
            Err(e @ Error::StabilityUndefined(_)) if all => em.warn(format!("stability skipped: {e}")),
            Err(e) => return Err(e),
        }
    }
    if all || report == MetricReport::Instability {
        match prompt_rank_instability(grid) {
            Ok(i) => em.emit("rank_instability.csv", &report::instability_csv(&i))?,
            Err(e @ (Error::SinglePrompt(_) | Error::TooFewModels { .. })) if all => {
                em.warn(format!("rank instability skipped: {e}"))
            }
            Err(e) => return Err(e),
        }
    }
    if all || report == MetricReport::Plot {
        em.emit("prompt_plot.csv", &report::plot_csv(&prompt_plot_rows(grid)?))?;
    }
    Ok(())
}

fn run_intervene(
    grid: &PredictionGrid,
    modes: &[Mode],
    relations: &[String],
    config: &InterventionConfig,
    em: &mut Emitter,
) -> Result<()> {
    let relations = if relations.is_empty() {
        all_relations(grid)
    } else {
        relations.to_vec()
    };
    let mut csv = String::from("mode,model_id,relation_id,score\n");
    let mut provenance = String::new();
    for &mode in modes {
        let table = evaluate_mode(grid, mode, &relations, config)?;
        if table.provenance.clamped() {
            em.warn(format!("{mode}: sample size clamped to the available prompts or names"));
        }
        if rank_models(&table.macro_average()).tie {
            em.warn(format!("{mode}: tied model scores, order broken by model id"));
        }
        csv.push_str(table.to_csv().split_once('\n').map_or("", |(_, rows)| rows));
        provenance.push_str(&format!("# {mode}\n{}", table.provenance.to_text()));
    }
    em.emit("scores.csv", &csv)?;
    if em.dir.is_some() {
        em.emit("provenance.txt", &provenance)?;
    }
    Ok(())
}

fn run_experiment(args: &ExperimentArgs, seed: u64, em: &mut Emitter) -> Result<()> {
    let grid = load_grid(&args.input.grid, &args.input.catalog)?;
    let spec = ExperimentSpec {
        n_runtimes: args.runtimes,
        subset_size: args.subset_size,
        modes: parse_modes(&args.modes)?,
        master_seed: seed,
        intervention: args.sampling.config(seed)?,
    };
    let report = run_rank_consistency(&grid, &spec)?;
    let rows = compare_modes(&report);
    for row in rows.iter().filter(|r| r.flagged) {
        em.warn(format!("{}: intervention does not improve over random", row.row));
    }
    em.emit("consistency.txt", &report.to_text())?;
    if em.dir.is_some() {
        em.emit("consistency.csv", &report.to_csv())?;
        em.emit("comparison.csv", &comparison_csv(&rows))?;
        em.emit("runtimes.csv", &report.log_csv())?;
    }
    Ok(())
}

fn run_synth(args: &SynthArgs, seed: u64, em: &mut Emitter) -> Result<()> {
    let scenario = match &args.scenario_file {
        Some(path) => Scenario::load(path)?.with_seed(seed),
        None => {
            let mut shape = ScenarioShape::paper_like();
            shape.seed = seed;
            if let Some(v) = args.models {
                shape.models = v;
            }
            if let Some(v) = args.relations {
                shape.relations = v;
            }
            if let Some(v) = args.prompts {
                shape.prompts = v;
            }
            if let Some(v) = args.names {
                shape.max_verbalizations = v;
            }
            if let Some(v) = args.instances {
                shape.instances = v;
            }
            shape.build()?
        }
    };
    let grid = scenario.generate()?;
    em.emit("grid.tsv", &write_grid(&grid))?;
    em.emit("catalog.txt", &scenario.catalog.to_text())?;
    em.emit("truth.txt", &true_ranking(&scenario.spec).to_text())?;
    em.emit("scenario.txt", &scenario.to_text())?;
    Ok(())
}

/// Executes a parsed command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<CommandResult> {
    let work = |em: &mut Emitter| -> Result<()> {
        match &cli.command {
            Command::Graph(cmd) => run_graph(cmd, em),
            Command::Eval(EvalCommand::Metrics {
                input, report, format, ..
            }) => {
                let grid = load_grid(&input.grid, &input.catalog)?;
                run_metrics(&grid, *report, *format, em)
            }
            Command::Eval(EvalCommand::Intervene {
                input,
                modes,
                sampling,
                relations,
                ..
            }) => {
                let grid = load_grid(&input.grid, &input.catalog)?;
                let config = sampling.config(cli.seed)?;
                run_intervene(&grid, &parse_modes(modes)?, relations, &config, em)
            }
            Command::Experiment(args) => run_experiment(args, cli.seed, em),
            Command::Synth(args) => run_synth(args, cli.seed, em),
        }
    };
    let dir = match &cli.command {
        Command::Eval(EvalCommand::Metrics { out, .. })
        | Command::Eval(EvalCommand::Intervene { out, .. })
        | Command::Experiment(ExperimentArgs { out, .. }) => out.clone(),
        Command::Synth(args) => Some(args.out.clone()),
        Command::Graph(_) => None,
    };
    let mut em = Emitter::new(out, dir)?;
    match cli.jobs {
        Some(0) => return Err(Error::Config("--jobs must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| work(&mut em))?,
        None => work(&mut em)?,
    }
    Ok(em.result)
}

/// Parses `args`, runs the command and reports errors on `err`. Returns the
/// process exit code.
pub fn main_with<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match run(&cli, out) {
        Ok(result) => {
            let seen: BTreeSet<&String> = result.diagnostics.iter().collect();
            for d in seen {
                let _ = writeln!(err, "warning: {d}");
            }
            result.exit_code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.class().exit_code()
        }
    }
}

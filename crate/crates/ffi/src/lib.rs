//! C ABI over the causal-probe engine.
//!
//! Objects are opaque handles released with their `*_free` function. Every
//! fallible call returns a [`CpStatus`]; on failure the message is available
//! from [`cp_last_error`] on the same thread. Strings returned through out
//! parameters are owned by the caller and released with [`cp_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, size_t};

use causal_probe::experiments::{run_rank_consistency, ExperimentSpec};
use causal_probe::graph::{self, CausalDag};
use causal_probe::grid::{load_grid, parse_grid, Catalog, PredictionGrid};
use causal_probe::intervention::{adjusted_score, all_relations, evaluate_mode, InterventionConfig, Mode, SampleSize};
use causal_probe::metrics::{precision_at_1, VerbalizationPolicy};
use causal_probe::{Error, ErrorClass};

/// Result codes. Values 2 to 5 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpStatus {
    Ok = 0,
    ParseError = 2,
    QueryError = 3,
    ValidationError = 4,
    IoError = 5,
    NullArgument = 6,
    InvalidUtf8 = 7,
    Panic = 8,
}

/// Parsed causal graph.
pub struct CpGraph(CausalDag);

/// Validated prediction grid.
pub struct CpGrid(PredictionGrid);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Engine(Error),
    Null(&'static str),
    Utf8(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

fn status_of(f: Failure) -> CpStatus {
    match f {
        Failure::Engine(e) => {
            set_error(e.to_string());
            match e.class() {
                ErrorClass::Parse => CpStatus::ParseError,
                ErrorClass::Query => CpStatus::QueryError,
                ErrorClass::Validation => CpStatus::ValidationError,
                ErrorClass::Io => CpStatus::IoError,
            }
        }
        Failure::Null(what) => {
            set_error(format!("`{what}` must not be null"));
            CpStatus::NullArgument
        }
        Failure::Utf8(what) => {
            set_error(format!("`{what}` is not valid UTF-8"));
            CpStatus::InvalidUtf8
        }
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> CpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CpStatus::Ok,
        Ok(Err(f)) => status_of(f),
        Err(_) => {
            set_error("internal panic".into());
            CpStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or points to a NUL-terminated string valid for `'a`.
unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(what))
}

/// Comma-separated list; null or empty means no entries.
unsafe fn list<'a>(p: *const c_char, what: &'static str) -> Result<Vec<&'a str>, Failure> {
    if p.is_null() {
        return Ok(Vec::new());
    }
    Ok(text(p, what)?
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect())
}

/// Writes `value` through an out-pointer without reading or dropping the
/// previous contents.
fn put<T>(p: *mut T, what: &'static str, value: T) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: non-null out-pointers are writable per the function contracts.
    unsafe { p.write(value) };
    Ok(())
}

/// Boxes `value` into a new handle only once the out-pointer is known good.
fn put_handle<T>(p: *mut *mut T, value: T) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null("out"));
    }
    put(p, "out", Box::into_raw(Box::new(value)))
}

fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: non-null handles come from the matching constructor.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

fn give_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    put(
        out,
        "out",
        CString::new(s.replace('\0', " ")).expect("NULs removed").into_raw(),
    )
}

fn sample_size(k: size_t) -> SampleSize {
    if k == 0 {
        SampleSize::All
    } else {
        SampleSize::Count(k)
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a graph from text.
///
/// # Safety
/// `source` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_parse(source: *const c_char, out: *mut *mut CpGraph) -> CpStatus {
    guard(|| {
        let dag = graph::parse_graph(text(source, "source")?)?;
        put_handle(out, CpGraph(dag))?;
        Ok(())
    })
}

/// The built-in 11-node probing graph.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_reference(out: *mut *mut CpGraph) -> CpStatus {
    guard(|| {
        put_handle(out, CpGraph(graph::reference_scm()))?;
        Ok(())
    })
}

/// # Safety
/// `g` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_free(g: *mut CpGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Backdoor paths from `treatment` to `outcome`, one per line, open ones
/// (under the comma-separated `adjust` set, which may be null) first. Each
/// line is `open <path>` or `blocked <path>` with `<-`/`->` arrows.
///
/// # Safety
/// String arguments are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_backdoor_paths(
    g: *const CpGraph,
    treatment: *const c_char,
    outcome: *const c_char,
    adjust: *const c_char,
    out: *mut *mut c_char,
) -> CpStatus {
    guard(|| {
        let dag = &handle(g, "graph")?.0;
        let z = list(adjust, "adjust")?;
        let paths = graph::backdoor_paths(dag, text(treatment, "treatment")?, text(outcome, "outcome")?)?;
        let (mut open, mut blocked) = (String::new(), String::new());
        for p in paths {
            if graph::is_blocked(dag, &p, &z)?.blocked {
                blocked.push_str(&format!("blocked {}\n", p.ascii()));
            } else {
                open.push_str(&format!("open {}\n", p.ascii()));
            }
        }
        open.push_str(&blocked);
        give_string(out, open)
    })
}

/// Checks `adjust` (comma-separated, null for the empty set) against the
/// backdoor criterion. Violations are written one per line to `report`.
///
/// # Safety
/// String arguments are NUL-terminated; `valid` and `report` are writable.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_criterion(
    g: *const CpGraph,
    treatment: *const c_char,
    outcome: *const c_char,
    adjust: *const c_char,
    valid: *mut bool,
    report: *mut *mut c_char,
) -> CpStatus {
    guard(|| {
        let dag = &handle(g, "graph")?.0;
        let z = list(adjust, "adjust")?;
        let r = graph::satisfies_backdoor_criterion(dag, text(treatment, "treatment")?, text(outcome, "outcome")?, &z)?;
        put(valid, "valid", r.valid)?;
        let lines: String = r.violations.iter().map(|v| format!("{v}\n")).collect();
        give_string(report, lines)
    })
}

/// Minimal adjustment sets, one per line as comma-separated ids; the empty
/// set is an empty line. `max_size` 0 means unbounded.
///
/// # Safety
/// String arguments are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_adjustment_sets(
    g: *const CpGraph,
    treatment: *const c_char,
    outcome: *const c_char,
    max_size: size_t,
    out: *mut *mut c_char,
) -> CpStatus {
    guard(|| {
        let dag = &handle(g, "graph")?.0;
        let limit = if max_size == 0 { usize::MAX } else { max_size };
        let sets = graph::find_adjustment_sets(dag, text(treatment, "treatment")?, text(outcome, "outcome")?, limit)?;
        let lines: String = sets
            .iter()
            .map(|s| format!("{}\n", s.iter().map(String::as_str).collect::<Vec<_>>().join(",")))
            .collect();
        give_string(out, lines)
    })
}

/// Loads and validates a grid file against a catalog file.
///
/// # Safety
/// Paths are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_grid_load(
    grid_path: *const c_char,
    catalog_path: *const c_char,
    out: *mut *mut CpGrid,
) -> CpStatus {
    guard(|| {
        let grid = load_grid(text(grid_path, "grid_path")?, text(catalog_path, "catalog_path")?)?;
        put_handle(out, CpGrid(grid))?;
        Ok(())
    })
}

/// Parses a grid from text against catalog text.
///
/// # Safety
/// Texts are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_grid_parse(
    grid_text: *const c_char,
    catalog_text: *const c_char,
    out: *mut *mut CpGrid,
) -> CpStatus {
    guard(|| {
        let catalog = Catalog::parse(text(catalog_text, "catalog_text")?)?;
        let grid = parse_grid(text(grid_text, "grid_text")?, &catalog)?;
        put_handle(out, CpGrid(grid))?;
        Ok(())
    })
}

/// # Safety
/// `g` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_grid_free(g: *mut CpGrid) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of models, or 0 for a null handle.
///
/// # Safety
/// `g` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_grid_model_count(g: *const CpGrid) -> size_t {
    g.as_ref().map_or(0, |g| g.0.models().len())
}

/// Number of relations, or 0 for a null handle.
///
/// # Safety
/// `g` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_grid_relation_count(g: *const CpGrid) -> size_t {
    g.as_ref().map_or(0, |g| g.0.relations().len())
}

/// P@1 of one prompt with default names.
///
/// # Safety
/// String arguments are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_precision_at_1(
    g: *const CpGrid,
    model: *const c_char,
    relation: *const c_char,
    prompt: *const c_char,
    out: *mut f64,
) -> CpStatus {
    guard(|| {
        let grid = &handle(g, "grid")?.0;
        let v = precision_at_1(
            grid,
            text(model, "model")?,
            text(relation, "relation")?,
            text(prompt, "prompt")?,
            &VerbalizationPolicy::Default,
        )?;
        put(out, "out", v)?;
        Ok(())
    })
}

/// Backdoor-adjusted score with uniform weights. `k_p`/`k_x` of 0 mean all.
///
/// # Safety
/// String arguments are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_adjusted_score(
    g: *const CpGrid,
    model: *const c_char,
    relation: *const c_char,
    k_p: size_t,
    k_x: size_t,
    seed: u64,
    out: *mut f64,
) -> CpStatus {
    guard(|| {
        let grid = &handle(g, "grid")?.0;
        let config = InterventionConfig {
            k_p: sample_size(k_p),
            k_x: sample_size(k_x),
            seed,
            ..Default::default()
        };
        put(
            out,
            "out",
            adjusted_score(grid, text(model, "model")?, text(relation, "relation")?, &config)?,
        )?;
        Ok(())
    })
}

/// Score table CSV (`mode,model_id,relation_id,score`) for one mode over all
/// relations. `mode` is `original`, `random` or `intervention`.
///
/// # Safety
/// `mode` is NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_evaluate_mode(
    g: *const CpGrid,
    mode: *const c_char,
    k_p: size_t,
    k_x: size_t,
    seed: u64,
    out: *mut *mut c_char,
) -> CpStatus {
    guard(|| {
        let grid = &handle(g, "grid")?.0;
        let mode: Mode = text(mode, "mode")?.parse()?;
        let config = InterventionConfig {
            k_p: sample_size(k_p),
            k_x: sample_size(k_x),
            seed,
            ..Default::default()
        };
        let table = evaluate_mode(grid, mode, &all_relations(grid), &config)?;
        give_string(out, table.to_csv())
    })
}

/// Rank-consistency experiment; writes the consistency CSV
/// (`row,mode,consistency,modal`). `modes` is comma-separated, null for all.
///
/// # Safety
/// `modes` is null or NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cp_rank_consistency(
    g: *const CpGrid,
    runtimes: size_t,
    subset_size: size_t,
    modes: *const c_char,
    seed: u64,
    out: *mut *mut c_char,
) -> CpStatus {
    guard(|| {
        let grid = &handle(g, "grid")?.0;
        let names = list(modes, "modes")?;
        let modes = if names.is_empty() {
            Mode::ALL.to_vec()
        } else {
            names.iter().map(|m| m.parse()).collect::<Result<Vec<Mode>, Error>>()?
        };
        let spec = ExperimentSpec {
            n_runtimes: runtimes,
            subset_size,
            modes,
            master_seed: seed,
            intervention: InterventionConfig {
                seed,
                ..Default::default()
            },
        };
        give_string(out, run_rank_consistency(grid, &spec)?.to_csv())
    })
}

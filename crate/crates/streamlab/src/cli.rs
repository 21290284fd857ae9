//! Command-line surface: single runs, override sweeps, report comparison,
//! and microbenchmarks.
//!
//! Exit codes are the only success signal: 0 = completed (and SLO met when
//! one is configured), 1 = SLO violated or a sweep/report cell failed,
//! 2 = configuration problem, 3 = engine error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use serde_json::Value;

use crate::bench::{
    self, evaluate_slo, MicrobenchComponent, MicrobenchRow, RunConfig, RunError, RunReport,
    SloVerdict, Summary,
};
use crate::chaos::load_plan;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SLO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ENGINE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "streamlab", about = "Deterministic stream-processing resiliency lab")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute one configured run and write its report files.
    Run {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Dot-notation override, e.g. --set engine.spare_tms=4 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (default: $STREAMLAB_OUT or ./streamlab-out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the cartesian product of override axes as independent runs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Grid axis: key=v1,v2,... (repeatable; axes multiply).
        #[arg(long = "set", value_name = "KEY=V1,V2,...")]
        set: Vec<String>,
        /// Worker threads for independent cells.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare report directories side by side (text + CSV).
    Report {
        /// Directories containing summary.json from earlier runs.
        dirs: Vec<PathBuf>,
        /// Write the CSV table here instead of printing it.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Measure host wall-clock throughput of one engine component.
    Microbench {
        /// One of: state_store, routing, scheduler.
        component: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses argv and dispatches; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.cmd {
        Command::Run { config, set, out } => cmd_run(&config, &set, out.as_deref()),
        Command::Sweep { config, set, parallel, out } => {
            cmd_sweep(&config, &set, parallel.max(1), out.as_deref())
        }
        Command::Report { dirs, csv } => cmd_report(&dirs, csv.as_deref()),
        Command::Microbench { component, out } => cmd_microbench(&component, out.as_deref()),
    }
}

fn out_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os("STREAMLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("streamlab-out"))
}

// ---------------------------------------------------------------------------
// Config loading and overrides
// ---------------------------------------------------------------------------

fn parse_override(s: &str) -> Result<(&str, &str), String> {
    s.split_once('=').ok_or_else(|| format!("override '{}' is not KEY=VALUE", s))
}

/// Sets `path` (dot notation) in a JSON tree, creating objects as needed.
/// The value is parsed as JSON when possible, else taken as a string.
fn apply_set(root: &mut Value, path: &str, raw: &str) -> Result<(), String> {
    let val = serde_json::from_str::<Value>(raw).unwrap_or(Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| format!("'{}' is not an object in path '{}'", part, path))?;
        if i == parts.len() - 1 {
            obj.insert(part.to_string(), val);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("empty override path")
}

/// Reads the config file, applies overrides, resolves any fault-plan file
/// inline, and validates the result. Every failure here is exit code 2.
fn load_config(path: &Path, sets: &[(String, String)]) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {}", path.display(), e))?;
    let mut val: Value = serde_json::from_str(&text)
        .map_err(|e| format!("config parse error in {} at line {} column {}: {}",
            path.display(), e.line(), e.column(), e))?;
    if !val.get("seed").is_some_and(Value::is_u64) {
        // applied overrides may still supply it; checked again after merge
    }
    for (k, v) in sets {
        apply_set(&mut val, k, v)?;
    }
    if !val.get("seed").is_some_and(Value::is_u64) {
        return Err("config must set an explicit integer 'seed'".into());
    }
    let mut cfg: RunConfig = serde_json::from_value(val)
        .map_err(|e| format!("invalid config {}: {}", path.display(), e))?;
    if let Some(plan_path) = cfg.fault_plan.take() {
        let resolved = path.parent().unwrap_or(Path::new(".")).join(&plan_path);
        let doc = std::fs::read_to_string(&resolved)
            .map_err(|e| format!("cannot read fault plan {}: {}", resolved.display(), e))?;
        let plan = load_plan(&doc, cfg.seed).map_err(|e| e.to_string())?;
        // merged inline so the resolved-config snapshot is self-contained
        cfg.faults.extend(plan.specs);
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

fn execute(cfg: &RunConfig, dir: &Path) -> Result<(RunReport, Option<SloVerdict>), (i32, String)> {
    let report = bench::run(cfg).map_err(|e| match e {
        RunError::InvalidWorkload(_) => (EXIT_CONFIG, e.to_string()),
        _ => (EXIT_ENGINE, e.to_string()),
    })?;
    let verdict = cfg.slo.as_ref().map(|t| evaluate_slo(&report, t));
    bench::write_report(dir, &report, verdict.as_ref())
        .map_err(|e| (EXIT_ENGINE, format!("cannot write report to {}: {}", dir.display(), e)))?;
    Ok((report, verdict))
}

fn cmd_run(config: &Path, sets: &[String], out: Option<&Path>) -> i32 {
    let sets: Vec<(String, String)> = match sets
        .iter()
        .map(|s| parse_override(s).map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
    {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {}", e);
            return EXIT_CONFIG;
        }
    };
    let cfg = match load_config(config, &sets) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e);
            return EXIT_CONFIG;
        }
    };
    let dir = out_dir(out);
    match execute(&cfg, &dir) {
        Ok((report, verdict)) => {
            println!(
                "run seed={} workload={:?}: emitted={} consumed={} dropped={} qps_mean={:.1}",
                report.summary.seed,
                report.summary.workload,
                report.summary.emitted,
                report.summary.consumed,
                report.summary.dropped,
                report.summary.qps_mean,
            );
            println!("report written to {}", dir.display());
            match verdict {
                Some(v) if !v.overall => {
                    eprintln!("SLO violated: {}", v.detail);
                    EXIT_SLO
                }
                _ => EXIT_OK,
            }
        }
        Err((code, msg)) => {
            eprintln!("error: {}", msg);
            code
        }
    }
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct Cell {
    label: String,
    sets: Vec<(String, String)>,
}

fn grid_cells(axes: &[String]) -> Result<Vec<Cell>, String> {
    let mut parsed: Vec<(String, Vec<String>)> = Vec::new();
    for axis in axes {
        let (k, vals) = parse_override(axis)?;
        let vals: Vec<String> = vals.split(',').map(str::to_string).collect();
        if vals.is_empty() {
            return Err(format!("axis '{}' has no values", k));
        }
        parsed.push((k.to_string(), vals));
    }
    let mut cells = vec![Cell { label: "base".into(), sets: Vec::new() }];
    for (k, vals) in &parsed {
        let mut next = Vec::with_capacity(cells.len() * vals.len());
        for cell in &cells {
            for v in vals {
                let mut sets = cell.sets.clone();
                sets.push((k.clone(), v.clone()));
                let tag = format!("{}={}", k.rsplit('.').next().unwrap(), v);
                let label = if cell.sets.is_empty() {
                    tag
                } else {
                    format!("{},{}", cell.label, tag)
                };
                next.push(Cell { label, sets });
            }
        }
        cells = next;
    }
    Ok(cells)
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '=' || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

enum CellOutcome {
    Done(Summary, Option<SloVerdict>),
    Crashed(String),
}

fn cmd_sweep(config: &Path, axes: &[String], parallel: usize, out: Option<&Path>) -> i32 {
    let cells = match grid_cells(axes) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e);
            return EXIT_CONFIG;
        }
    };
    let base = out_dir(out);
    let results: Mutex<BTreeMap<usize, CellOutcome>> = Mutex::new(BTreeMap::new());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..parallel.min(cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let cell = &cells[i];
                let dir = base.join(format!("cell_{:03}_{}", i, sanitize(&cell.label)));
                let outcome = match load_config(config, &cell.sets) {
                    Ok(cfg) => match execute(&cfg, &dir) {
                        Ok((report, verdict)) => CellOutcome::Done(report.summary, verdict),
                        Err((_, msg)) => CellOutcome::Crashed(msg),
                    },
                    Err(e) => CellOutcome::Crashed(e),
                };
                results.lock().unwrap().insert(i, outcome);
            });
        }
    });
    let results = results.into_inner().unwrap();

    let header = ["cell", "qps_mean", "qps_min", "ckpt_success_pct", "ckpt_merged_pct", "dropped", "recoveries", "slo", "status"];
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut failed = false;
    for (i, cell) in cells.iter().enumerate() {
        match &results[&i] {
            CellOutcome::Done(s, v) => {
                let slo = match v {
                    Some(v) if v.overall => "pass".to_string(),
                    Some(v) => {
                        failed = true;
                        format!("FAIL ({})", v.detail)
                    }
                    None => "-".to_string(),
                };
                rows.push(vec![
                    cell.label.clone(),
                    format!("{:.1}", s.qps_mean),
                    s.qps_min.to_string(),
                    format!("{:.1}", s.ckpt_success_pct),
                    format!("{:.1}", s.ckpt_merged_pct),
                    s.dropped.to_string(),
                    s.recoveries.to_string(),
                    slo,
                    "ok".to_string(),
                ]);
            }
            CellOutcome::Crashed(msg) => {
                failed = true;
                rows.push(vec![
                    cell.label.clone(),
                    "-".into(), "-".into(), "-".into(), "-".into(), "-".into(), "-".into(), "-".into(),
                    format!("CRASH: {}", msg),
                ]);
            }
        }
    }
    let text = render_table(&header, &rows);
    println!("{}", text);
    let csv = render_csv(&header, &rows);
    if std::fs::create_dir_all(&base).is_ok() {
        let _ = std::fs::write(base.join("sweep_summary.csv"), &csv);
        let _ = std::fs::write(base.join("sweep_summary.txt"), &text);
    }
    if failed {
        EXIT_SLO
    } else {
        EXIT_OK
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn cmd_report(dirs: &[PathBuf], csv_out: Option<&Path>) -> i32 {
    if dirs.is_empty() {
        eprintln!("usage: streamlab report <RUN_DIR>... [--csv FILE]");
        return EXIT_CONFIG;
    }
    let mut cols: Vec<(String, Summary)> = Vec::new();
    let mut skipped = false;
    for dir in dirs {
        let path = dir.join("summary.json");
        match std::fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<Summary>(&t).map_err(|e| e.to_string()))
        {
            Ok(s) => cols.push((dir.display().to_string(), s)),
            Err(e) => {
                eprintln!("warning: skipping {}: {}", dir.display(), e);
                skipped = true;
            }
        }
    }
    if cols.is_empty() {
        eprintln!("error: no readable reports");
        return EXIT_SLO;
    }
    let metrics: Vec<(&str, Box<dyn Fn(&Summary) -> String>)> = vec![
        ("qps_mean", Box::new(|s: &Summary| format!("{:.1}", s.qps_mean))),
        ("qps_min", Box::new(|s: &Summary| s.qps_min.to_string())),
        ("latency_p99_ms", Box::new(|s: &Summary| format!("{:.2}", s.latency_p99_ns as f64 / 1e6))),
        ("ckpt_success_pct", Box::new(|s: &Summary| format!("{:.1}", s.ckpt_success_pct))),
        ("ckpt_merged_pct", Box::new(|s: &Summary| format!("{:.1}", s.ckpt_merged_pct))),
        ("recoveries", Box::new(|s: &Summary| s.recoveries.to_string())),
        ("max_recovery_time_ms", Box::new(|s: &Summary| format!("{:.1}", s.max_recovery_time_ns as f64 / 1e6))),
        ("dropped", Box::new(|s: &Summary| s.dropped.to_string())),
        ("duplicates", Box::new(|s: &Summary| s.duplicates.to_string())),
        ("ledger_total", Box::new(|s: &Summary| s.ledger_total.to_string())),
    ];
    let mut header: Vec<String> = vec!["metric".into()];
    header.extend(cols.iter().map(|(name, _)| name.clone()));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = metrics
        .iter()
        .map(|(name, f)| {
            let mut row = vec![name.to_string()];
            row.extend(cols.iter().map(|(_, s)| f(s)));
            row
        })
        .collect();
    println!("{}", render_table(&header_refs, &rows));
    let csv = render_csv(&header_refs, &rows);
    match csv_out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, &csv) {
                eprintln!("error: cannot write {}: {}", p.display(), e);
                return EXIT_SLO;
            }
        }
        None => print!("{}", csv),
    }
    if skipped {
        EXIT_SLO
    } else {
        EXIT_OK
    }
}

// ---------------------------------------------------------------------------
// microbench
// ---------------------------------------------------------------------------

fn cmd_microbench(component: &str, out: Option<&Path>) -> i32 {
    let comp: MicrobenchComponent = match component.parse() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e);
            return EXIT_CONFIG;
        }
    };
    let rows: Vec<MicrobenchRow> = bench::run_microbench(comp);
    let header = ["component", "case", "metric", "value", "cv"];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.component.clone(),
                r.case.clone(),
                r.metric.clone(),
                format!("{:.0}", r.value),
                format!("{:.4}", r.cv),
            ]
        })
        .collect();
    println!("{}", render_table(&header, &table));
    let dir = out_dir(out);
    if std::fs::create_dir_all(&dir).is_err() {
        eprintln!("error: cannot create {}", dir.display());
        return EXIT_ENGINE;
    }
    let json = serde_json::to_string_pretty(&rows).unwrap() + "\n";
    if let Err(e) = std::fs::write(dir.join("microbench.json"), json) {
        eprintln!("error: cannot write microbench.json: {}", e);
        return EXIT_ENGINE;
    }
    EXIT_OK
}

// ---------------------------------------------------------------------------
// table rendering
// ---------------------------------------------------------------------------

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let fmt_row = |cells: Vec<&str>, widths: &[usize]| -> String {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:<w$}", c, w = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    out.push_str(&fmt_row(header.to_vec(), &widths));
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in rows {
        out.push_str(&fmt_row(row.iter().map(String::as_str).collect(), &widths));
        out.push('\n');
    }
    out
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.iter().map(|h| csv_escape(h)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.iter().map(|c| csv_escape(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

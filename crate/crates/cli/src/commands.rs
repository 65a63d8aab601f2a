use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use convtrace::attacks::attack_entry;
use convtrace::classify::{
    kfold_cv, pairwise_subsets, parse_classifier_list, predict, split_eval, train, EvalReport,
    FeatureRecord, Hyper, ReportGrid, TrainedModel,
};
use convtrace::em::EmConfig;
use convtrace::features::{
    extract_entry, merge_tables, read_features, write_features, FeatureTable,
};
use convtrace::image_io::{read_manifest, write_manifest, DatasetManifest, LABEL_REAL};
use convtrace::synth::{gen_datasets, parse_spec_file};
use log::{info, warn};
use rayon::prelude::*;

use crate::args::{
    AttackArgs, EvalArgs, ExtractArgs, Grouping, Mode, ReportArgs, SynthArgs, TrainArgs,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input files.
    Usage(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<convtrace::Error> for CliError {
    fn from(e: convtrace::Error) -> Self {
        use convtrace::Error::*;
        match e {
            Io { .. } | Parse(_) | Validation(_) => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

/// Records of one grid column, keyed by kernel half-width.
type Column = (usize, Vec<FeatureRecord>);

pub type CmdResult = Result<Outcome, CliError>;

/// How a command finished when it did not error out.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    /// Some inputs failed; their count.
    Partial(usize),
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Internal(format!("cannot start worker pool: {e}")))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn ensure_parent(file: &Path) -> Result<(), CliError> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn report_failures(what: &str, total: usize, failures: &[(String, String)]) -> Outcome {
    if failures.is_empty() {
        return Outcome::Complete;
    }
    eprintln!("{} of {total} {what} failed:", failures.len());
    for (path, err) in failures {
        eprintln!("  {path}: {err}");
    }
    Outcome::Partial(failures.len())
}

pub fn synth(args: &SynthArgs) -> CmdResult {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.spec.display())))?;
    let specs = parse_spec_file(&text)?;
    ensure_dir(&args.out)?;
    let manifest = gen_datasets(&specs, &args.out)?;
    info!("generated {} images", manifest.len());
    println!("{}", args.out.join("manifest.csv").display());
    Ok(Outcome::Complete)
}

pub fn extract(args: &ExtractArgs) -> CmdResult {
    let config = EmConfig {
        alpha: args.alpha,
        max_iters: args.max_iters,
        tol: args.tol,
        ..EmConfig::default()
    };
    config.validate()?;
    let manifest = read_manifest(&args.manifest)?;
    ensure_parent(&args.out)?;

    let results: Vec<_> = pool(args.jobs)?.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|entry| {
                let out = extract_entry(&args.manifest, entry, &config);
                info!("extracted {}", entry.path);
                out
            })
            .collect()
    });

    let mut table = FeatureTable::new(args.alpha);
    let mut failures = Vec::new();
    for (row, err) in results {
        if let Some(e) = err {
            warn!("{}: {e}", row.path);
            failures.push((row.path.clone(), e.to_string()));
        }
        table.rows.push(row);
    }
    write_features(&table, &args.out).map_err(|e| CliError::Internal(e.to_string()))?;
    println!(
        "wrote {} rows ({} failed) to {}",
        table.rows.len(),
        failures.len(),
        args.out.display()
    );
    Ok(report_failures("images", manifest.len(), &failures))
}

pub fn attack(args: &AttackArgs) -> CmdResult {
    args.attack.validate()?;
    let manifest = read_manifest(&args.manifest)?;
    ensure_dir(&args.out)?;

    let results: Vec<_> = pool(args.jobs)?.install(|| {
        manifest
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, entry)| {
                attack_entry(&args.manifest, i, entry, args.attack, args.seed, &args.out)
            })
            .collect()
    });

    let mut derived = DatasetManifest::default();
    let mut failures = Vec::new();
    for (entry, result) in manifest.entries.iter().zip(results) {
        match result {
            Ok(e) => derived.push(e)?,
            Err(e) => {
                warn!("{}: {e}", entry.path);
                failures.push((entry.path.clone(), e.to_string()));
            }
        }
    }
    let manifest_out = args.out.join("manifest.csv");
    write_manifest(&derived, &manifest_out).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{}", manifest_out.display());
    Ok(report_failures("images", manifest.len(), &failures))
}

/// Reads and concatenates feature CSVs that must share one kernel size.
fn load_tables(paths: &[PathBuf]) -> Result<FeatureTable, CliError> {
    let tables = paths
        .iter()
        .map(read_features)
        .collect::<convtrace::Result<Vec<_>>>()?;
    let table = merge_tables(tables)?;
    let failed = table.failures().count();
    if failed > 0 {
        warn!("skipping {failed} rows marked failed");
    }
    Ok(table)
}

fn hyper(no_standardize: bool) -> Hyper {
    Hyper {
        standardize: !no_standardize,
        ..Hyper::default()
    }
}

pub fn train_cmd(args: &TrainArgs) -> CmdResult {
    let table = load_tables(&args.features)?;
    ensure_parent(&args.out)?;
    let records = table.records();
    let model = train(
        args.classifier,
        &records,
        &hyper(args.no_standardize),
        args.seed,
    )?;
    model
        .save(&args.out)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    println!(
        "trained {} on {} records ({} features) -> {}",
        args.classifier,
        records.len(),
        model.dim,
        args.out.display()
    );
    Ok(Outcome::Complete)
}

fn file_stem_for(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn eval(args: &EvalArgs) -> CmdResult {
    let kinds = parse_classifier_list(&args.classifiers)?;
    let mut columns: Vec<Column> = Vec::new();
    for group in &args.features {
        let paths: Vec<PathBuf> = group
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(PathBuf::from)
            .collect();
        let table = load_tables(&paths)?;
        if columns.iter().any(|(a, _)| *a == table.alpha) {
            return Err(CliError::Usage(format!(
                "two --features groups share kernel size alpha={}",
                table.alpha
            )));
        }
        columns.push((table.alpha, table.records()));
    }
    columns.sort_by_key(|(a, _)| *a);
    ensure_dir(&args.out)?;

    let comparisons: Vec<(String, Vec<Column>)> = match args.grouping {
        Grouping::Pooled => vec![("pooled".to_string(), columns)],
        Grouping::Pairwise => {
            let mut sources: Vec<String> = columns
                .iter()
                .flat_map(|(_, rs)| {
                    rs.iter()
                        .filter(|r| r.label != LABEL_REAL)
                        .map(|r| r.source.clone())
                })
                .collect();
            sources.sort();
            sources.dedup();
            let per_column: Vec<_> = columns
                .iter()
                .map(|(a, rs)| (*a, pairwise_subsets(rs)))
                .collect();
            sources
                .into_iter()
                .map(|s| {
                    let cols = per_column
                        .iter()
                        .filter_map(|(a, subsets)| {
                            subsets
                                .iter()
                                .find(|(src, _)| *src == s)
                                .map(|(_, rs)| (*a, rs.clone()))
                        })
                        .collect();
                    (format!("real_vs_{s}"), cols)
                })
                .collect()
        }
    };

    let mode_tag = match args.mode {
        Mode::Split70 => "split70",
        Mode::Cv5 => "cv5",
    };
    let hyper = hyper(args.no_standardize);
    let mut cells = Vec::new();
    for (ci, (_, cols)) in comparisons.iter().enumerate() {
        for &kind in &kinds {
            for (col, (alpha, _)) in cols.iter().enumerate() {
                cells.push((ci, kind, col, *alpha));
            }
        }
    }
    let results: Vec<convtrace::Result<EvalReport>> = pool(args.jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(ci, kind, col, _)| {
                let records = &comparisons[ci].1[col].1;
                match args.mode {
                    Mode::Split70 => split_eval(kind, records, 0.7, &hyper, args.seed),
                    Mode::Cv5 => kfold_cv(kind, records, 5, &hyper, args.seed),
                }
            })
            .collect()
    });

    let mut grids: Vec<ReportGrid> = comparisons
        .iter()
        .map(|(name, _)| ReportGrid::new(name.clone(), mode_tag))
        .collect();
    for (&(ci, kind, _, alpha), result) in cells.iter().zip(results) {
        let report = result.map_err(|e| {
            CliError::from(e).prefixed(&format!("{} {kind} alpha={alpha}", comparisons[ci].0))
        })?;
        grids[ci].push(kind, alpha, report);
    }
    for grid in &grids {
        let stem = file_stem_for(&grid.title);
        write_text(&args.out.join(format!("{stem}.csv")), &grid.to_csv())?;
        write_text(&args.out.join(format!("{stem}.txt")), &grid.to_text())?;
        println!("{}", grid.to_text());
    }
    Ok(Outcome::Complete)
}

impl CliError {
    fn prefixed(self, context: &str) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{context}: {m}")),
            CliError::Internal(m) => CliError::Internal(format!("{context}: {m}")),
        }
    }
}

fn summary_text(model: &TrainedModel, report: &EvalReport) -> String {
    let mut out = format!(
        "{} on {} records\n",
        model.kind.display_name(),
        report.total()
    );
    let _ = writeln!(out, "accuracy {:.2}%", 100.0 * report.accuracy);
    let _ = write!(out, "{:>10}", "true\\pred");
    for c in &report.classes {
        let _ = write!(out, "{c:>8}");
    }
    out.push('\n');
    for (i, c) in report.classes.iter().enumerate() {
        let _ = write!(out, "{c:>10}");
        for n in &report.confusion[i] {
            let _ = write!(out, "{n:>8}");
        }
        let _ = writeln!(out, "   ({:.2}%)", 100.0 * report.per_class_accuracy[i]);
    }
    out
}

pub fn report(args: &ReportArgs) -> CmdResult {
    let model = TrainedModel::load(&args.model)?;
    let table = load_tables(&args.features)?;
    if table.dim() != model.dim {
        return Err(CliError::Usage(format!(
            "model expects {} features, CSV has {}",
            model.dim,
            table.dim()
        )));
    }
    ensure_parent(&args.out)?;
    let mut csv = String::from("path,label,predicted\n");
    let mut pairs = Vec::new();
    for row in &table.rows {
        if row.is_failed() {
            let _ = writeln!(csv, "{},{},failed", row.path, row.label);
            continue;
        }
        let p = predict(&model, &row.features)?;
        pairs.push((row.label, p));
        let _ = writeln!(csv, "{},{},{p}", row.path, row.label);
    }
    write_text(&args.out, &csv)?;
    let report = EvalReport::from_pairs(&model.classes, &pairs);
    print!("{}", summary_text(&model, &report));
    Ok(Outcome::Complete)
}

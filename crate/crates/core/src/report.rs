//! Result files: per-run CSV, grid matrices, BRoT tables and a manifest.
//!
//! Floats are written in Rust's shortest round-trip form, so re-parsing a
//! CSV reproduces the in-memory values exactly. Wall-clock times are never
//! written, which keeps output bytes a pure function of the configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, MetricRecord, RankingTable};
use crate::runner::{auc_deviation_pct, group_ordered, Comparison, GridCell, GridResult, MetricProfile, RunResult};

/// One line of the per-run CSV: one testing experience of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_id: String,
    pub strategy: String,
    pub lambda: f64,
    pub size_mode: String,
    pub order_perm: String,
    pub seed: u64,
    pub experience_idx: usize,
    pub eer: Option<f64>,
    pub bpcer10: Option<f64>,
    pub bpcer1: Option<f64>,
    pub bpcer01: Option<f64>,
    pub accuracy: f64,
    pub mad_point: Option<f64>,
}

impl RunRow {
    pub fn record(&self) -> MetricRecord {
        MetricRecord {
            experience_index: self.experience_idx,
            eer: self.eer,
            bpcer_at_10pct: self.bpcer10,
            bpcer_at_1pct: self.bpcer1,
            bpcer_at_01pct: self.bpcer01,
            mad_point: self.mad_point,
            top1_accuracy: self.accuracy,
        }
    }
}

pub fn order_perm(order: &[usize]) -> String {
    order.iter().map(|o| o.to_string()).collect::<Vec<_>>().join("-")
}

pub fn run_rows(run: &RunResult) -> Vec<RunRow> {
    let c = &run.config;
    run.records
        .iter()
        .map(|r| RunRow {
            run_id: run.run_id().to_string(),
            strategy: c.strategy.kind.to_string(),
            lambda: c.lambda(),
            size_mode: c.schedule.mode.to_string(),
            order_perm: order_perm(&c.order),
            seed: c.seed,
            experience_idx: r.experience_index,
            eer: r.eer,
            bpcer10: r.bpcer_at_10pct,
            bpcer1: r.bpcer_at_1pct,
            bpcer01: r.bpcer_at_01pct,
            accuracy: r.top1_accuracy,
            mad_point: r.mad_point,
        })
        .collect()
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_runs_csv(path: impl AsRef<Path>, runs: &[RunResult]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let mut wrote = false;
    for run in runs {
        for row in run_rows(run) {
            w.serialize(row)?;
            wrote = true;
        }
    }
    if !wrote {
        w.write_record([
            "run_id", "strategy", "lambda", "size_mode", "order_perm", "seed", "experience_idx", "eer", "bpcer10",
            "bpcer1", "bpcer01", "accuracy", "mad_point",
        ])?;
    }
    finish(w, path)
}

pub fn read_runs_csv(path: impl AsRef<Path>) -> Result<Vec<RunRow>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(file).deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Matrix CSV with `size` as first column and one column per λ.
pub fn write_matrix_csv(path: impl AsRef<Path>, sizes: &[usize], lambdas: &[f64], values: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    if values.len() != sizes.len() || values.iter().any(|r| r.len() != lambdas.len()) {
        return Err(Error::Shape(format!(
            "matrix must be {}x{}",
            sizes.len(),
            lambdas.len()
        )));
    }
    let mut w = csv_writer(path)?;
    let mut header = vec!["size".to_string()];
    header.extend(lambdas.iter().map(|l| l.to_string()));
    w.write_record(&header)?;
    for (s, row) in sizes.iter().zip(values) {
        let mut rec = vec![s.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    finish(w, path)
}

/// Chunk sizes (rows), λ values (columns) and the cell values.
pub type MatrixCsv = (Vec<usize>, Vec<f64>, Vec<Vec<f64>>);

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<MatrixCsv> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let bad = |what: &str| Error::Config(format!("{}: bad {what}", path.display()));
    let lambdas = r
        .headers()?
        .iter()
        .skip(1)
        .map(|h| h.parse::<f64>().map_err(|_| bad("header")))
        .collect::<Result<Vec<_>>>()?;
    let mut sizes = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut it = rec.iter();
        sizes.push(it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("size"))?);
        values.push(
            it.map(|v| v.parse::<f64>().map_err(|_| bad("value")))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((sizes, lambdas, values))
}

pub type CellField = fn(&GridCell) -> f64;

/// Per-metric matrix files emitted for a grid.
pub const GRID_MATRICES: [(&str, CellField); 8] = [
    ("auc_deviation", |c| c.auc_deviation_pct),
    ("auc", |c| c.auc),
    ("eer", |c| c.auc_eer),
    ("bpcer10", |c| c.auc_bpcer10),
    ("bpcer1", |c| c.auc_bpcer1),
    ("bpcer01", |c| c.auc_bpcer01),
    ("accuracy", |c| c.auc_accuracy),
    ("failures", |c| c.failures as f64),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub profile: MetricProfile,
    /// Fingerprint of the template configuration.
    pub fingerprint: String,
    pub seeds: Vec<u64>,
    pub orders: Vec<String>,
    /// Fingerprints of every run, in emission order.
    pub runs: Vec<String>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, profile: MetricProfile, fingerprint: String, seeds: &[u64], orders: &[Vec<usize>]) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            profile,
            fingerprint,
            seeds: seeds.to_vec(),
            orders: orders.iter().map(|o| order_perm(o)).collect(),
            runs: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        create_parent(path)?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

/// Writes `runs.csv`, one matrix per metric, `brot.csv` and
/// `manifest.json` into `dir`. Returns the written paths.
pub fn write_grid(dir: impl AsRef<Path>, grid: &GridResult, mut manifest: Manifest) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    let runs = dir.join("runs.csv");
    write_runs_csv(&runs, &grid.runs)?;
    written.push(runs);
    for (name, f) in GRID_MATRICES {
        let p = dir.join(format!("grid_{name}.csv"));
        write_matrix_csv(&p, &grid.sizes, &grid.lambdas, &grid.matrix(f))?;
        written.push(p);
    }
    let p = dir.join("brot.csv");
    write_matrix_csv(&p, &grid.sizes, &grid.lambdas, &grid.matrix(|c| c.brot))?;
    written.push(p);
    manifest.runs = grid.runs.iter().map(|r| r.fingerprint.clone()).collect();
    finish_manifest(dir, manifest, written)
}

fn finish_manifest(dir: &Path, mut manifest: Manifest, mut written: Vec<PathBuf>) -> Result<Vec<PathBuf>> {
    manifest.files = written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let p = dir.join("manifest.json");
    manifest.write(&p)?;
    written.push(p);
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub runs: usize,
    pub mean_auc: f64,
    pub mean_deviation_pct: Option<f64>,
    pub mean_brot: f64,
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    finish(w, path)
}

/// Writes `runs.csv`, `summary.csv` and `manifest.json` for a comparison.
pub fn write_comparison(dir: impl AsRef<Path>, cmp: &Comparison, mut manifest: Manifest) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    let runs = dir.join("runs.csv");
    write_runs_csv(&runs, &cmp.runs)?;
    written.push(runs);
    let mut rows = vec![SummaryRow {
        strategy: "joint".into(),
        runs: cmp.seeds.len() * cmp.orders.len(),
        mean_auc: cmp.joint_mean_auc,
        mean_deviation_pct: Some(0.0),
        mean_brot: f64::NAN,
    }];
    rows.extend(cmp.strategies.iter().map(|s| SummaryRow {
        strategy: s.label.clone(),
        runs: s.runs,
        mean_auc: s.mean_auc,
        mean_deviation_pct: Some(s.mean_deviation_pct),
        mean_brot: s.mean_brot,
    }));
    let p = dir.join("summary.csv");
    write_summary(&p, &rows)?;
    written.push(p);
    manifest.runs = cmp.runs.iter().map(|r| r.fingerprint.clone()).collect();
    finish_manifest(dir, manifest, written)
}

/// Aggregates per-run rows into one summary line per (strategy, λ, size
/// mode). BRoT ranks the groups on every stream (order, seed, size mode)
/// they share, at each testing experience; Joint is excluded from ranking
/// and serves as the deviation reference of its stream.
pub fn summarize(rows: &[RunRow], profile: MetricProfile) -> Result<Vec<SummaryRow>> {
    let runs = group_ordered(rows.iter().map(|r| (r.run_id.clone(), r)));
    struct Run {
        label: String,
        stream: (String, String, u64),
        series: Vec<f64>,
        ranking: Vec<f64>,
        joint: bool,
    }
    let runs: Vec<Run> = runs
        .into_iter()
        .map(|(_, mut rs)| {
            rs.sort_by_key(|r| r.experience_idx);
            let r0 = rs[0];
            let records: Vec<MetricRecord> = rs.iter().map(|r| r.record()).collect();
            Run {
                label: if r0.strategy == "joint" {
                    "joint".into()
                } else {
                    format!("{}@{}", r0.strategy, r0.lambda)
                },
                stream: (r0.size_mode.clone(), r0.order_perm.clone(), r0.seed),
                series: records.iter().map(|m| profile.primary(m)).collect(),
                ranking: records.iter().map(|m| profile.ranking(m)).collect(),
                joint: r0.strategy == "joint",
            }
        })
        .collect();

    let groups = group_ordered(runs.iter().enumerate().map(|(i, r)| (r.label.clone(), i)));
    let mut auc = vec![0.0; groups.len()];
    let mut dev = vec![(0.0, 0usize); groups.len()];
    let mut brot = vec![(0.0, 0usize); groups.len()];
    let group_of: std::collections::HashMap<usize, usize> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, (_, idx))| idx.iter().map(move |&i| (i, g)))
        .collect();
    for (g, (_, idx)) in groups.iter().enumerate() {
        for &i in idx {
            auc[g] += metrics::auc_over_time(&runs[i].series)?;
        }
    }

    // contenders grouped by shared stream, each with its Joint reference
    let streams = group_ordered(runs.iter().enumerate().filter(|(_, r)| !r.joint).map(|(i, r)| (r.stream.clone(), i)));
    for (key, idx) in &streams {
        if let Some(j) = runs.iter().find(|r| r.joint && &r.stream == key) {
            for &i in idx {
                let d = auc_deviation_pct(&runs[i].series, j.series[0])?;
                let g = group_of[&i];
                dev[g].0 += d;
                dev[g].1 += 1;
            }
        }
        let lens: Vec<usize> = idx.iter().map(|&i| runs[i].ranking.len()).collect();
        if idx.len() > 1 && lens.iter().all(|&l| l == lens[0]) {
            let table = RankingTable::new(
                idx.iter().map(|&i| runs[i].label.clone()).collect(),
                idx.iter().map(|&i| runs[i].ranking.clone()).collect(),
            )?;
            for (&i, b) in idx.iter().zip(metrics::brot(&table, profile.lower_is_better())?) {
                let g = group_of[&i];
                brot[g].0 += b;
                brot[g].1 += 1;
            }
        }
    }
    Ok(groups
        .iter()
        .enumerate()
        .map(|(g, (label, idx))| SummaryRow {
            strategy: label.clone(),
            runs: idx.len(),
            mean_auc: auc[g] / idx.len() as f64,
            mean_deviation_pct: (dev[g].1 > 0).then(|| dev[g].0 / dev[g].1 as f64),
            mean_brot: if brot[g].1 > 0 { brot[g].0 / brot[g].1 as f64 } else { f64::NAN },
        })
        .collect())
}

/// Aggregates a runs CSV into `summary.csv`, and when the runs form a LwF
/// size x λ grid, also into per-metric matrices.
pub fn report(runs_csv: impl AsRef<Path>, out: impl AsRef<Path>, profile: MetricProfile) -> Result<Vec<PathBuf>> {
    let rows = read_runs_csv(runs_csv)?;
    if rows.is_empty() {
        return Err(Error::Config("runs CSV has no rows".into()));
    }
    let out = out.as_ref();
    let summary = summarize(&rows, profile)?;
    let mut written = Vec::new();
    let p = out.join("summary.csv");
    write_summary(&p, &summary)?;
    written.push(p);

    // size x λ matrices over fixed-size LwF runs
    let lwf: Vec<&RunRow> = rows.iter().filter(|r| r.strategy == "lwf").collect();
    let mut sizes: Vec<usize> = lwf
        .iter()
        .filter_map(|r| r.size_mode.strip_prefix("fixed:").and_then(|s| s.parse().ok()))
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut lambdas: Vec<f64> = lwf.iter().map(|r| r.lambda).collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    if !sizes.is_empty() {
        let per_run = group_ordered(lwf.iter().map(|r| (r.run_id.clone(), *r)));
        let mut sums = vec![vec![(0.0, 0usize); lambdas.len()]; sizes.len()];
        for (_, rs) in &per_run {
            let Some(size) = rs[0].size_mode.strip_prefix("fixed:").and_then(|s| s.parse::<usize>().ok()) else {
                continue;
            };
            let i = sizes.binary_search(&size).expect("size collected above");
            let j = lambdas.iter().position(|&l| l == rs[0].lambda).expect("lambda collected above");
            let series: Vec<f64> = rs.iter().map(|r| profile.primary(&r.record())).collect();
            sums[i][j].0 += metrics::auc_over_time(&series)?;
            sums[i][j].1 += 1;
        }
        let matrix: Vec<Vec<f64>> = sums
            .iter()
            .map(|row| row.iter().map(|&(s, n)| if n == 0 { f64::NAN } else { s / n as f64 }).collect())
            .collect();
        let p = out.join("grid_auc.csv");
        write_matrix_csv(&p, &sizes, &lambdas, &matrix)?;
        written.push(p);
    }
    Ok(written)
}

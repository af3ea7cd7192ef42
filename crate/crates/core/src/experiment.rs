//! Experiment specs, sweeps over configuration axes, and figure data export.

use crate::error::{Error, Result};
use crate::latency_engine::{Retransmission, Scheduling};
use crate::link_adaptation::McsTable;
use crate::resource_grid::{ControlVariant, SlotType};
use crate::sim_engine::{run, CastMode, MetricsReport, PointConfig, PointContext, TrafficKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// Values swept for each axis; absent axes keep the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Axes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth_mhz: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scs_khz: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slot_type: Option<Vec<SlotType>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheduling: Option<Vec<Scheduling>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retransmission: Option<Vec<Retransmission>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cast: Option<Vec<CastMode>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub receivers: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traffic: Option<Vec<TrafficKind>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period_ms: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcs_table: Option<Vec<McsTable>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<Vec<ControlVariant>>,
}

/// Axis names in canonical order; also the leading CSV columns.
pub const AXIS_NAMES: [&str; 12] = [
    "density",
    "bandwidth_mhz",
    "scs_khz",
    "slot_type",
    "scheduling",
    "retransmission",
    "cast",
    "receivers",
    "traffic",
    "period_ms",
    "mcs_table",
    "control",
];

fn axis_values(axes: &Axes, name: &str) -> Option<Vec<serde_json::Value>> {
    fn vals<T: Serialize>(v: &Option<Vec<T>>) -> Option<Vec<serde_json::Value>> {
        v.as_ref().map(|v| v.iter().map(|x| serde_json::to_value(x).expect("axis value serializes")).collect())
    }
    match name {
        "density" => vals(&axes.density),
        "bandwidth_mhz" => vals(&axes.bandwidth_mhz),
        "scs_khz" => vals(&axes.scs_khz),
        "slot_type" => vals(&axes.slot_type),
        "scheduling" => vals(&axes.scheduling),
        "retransmission" => vals(&axes.retransmission),
        "cast" => vals(&axes.cast),
        "receivers" => vals(&axes.receivers),
        "traffic" => vals(&axes.traffic),
        "period_ms" => vals(&axes.period_ms),
        "mcs_table" => vals(&axes.mcs_table),
        "control" => vals(&axes.control),
        _ => None,
    }
}

fn clear_axis(axes: &mut Axes, name: &str) {
    match name {
        "density" => axes.density = None,
        "bandwidth_mhz" => axes.bandwidth_mhz = None,
        "scs_khz" => axes.scs_khz = None,
        "slot_type" => axes.slot_type = None,
        "scheduling" => axes.scheduling = None,
        "retransmission" => axes.retransmission = None,
        "cast" => axes.cast = None,
        "receivers" => axes.receivers = None,
        "traffic" => axes.traffic = None,
        "period_ms" => axes.period_ms = None,
        "mcs_table" => axes.mcs_table = None,
        "control" => axes.control = None,
        _ => {}
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    /// Bound on concurrently simulated points; all cores when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub base: PointConfig,
    pub axes: Axes,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a TOML experiment spec. Unknown keys are errors.
pub fn parse_spec_str(text: &str) -> Result<ExperimentSpec> {
    let de = toml::Deserializer::parse(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
        Error::Spec(format!("line {line}: {}", e.message()))
    })?;
    let spec: ExperimentSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let line = inner.span().map(|s| line_of(text, s.start)).unwrap_or(0);
        Error::Spec(format!("{path} (line {line}): {}", inner.message()))
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn parse_spec(path: &Path) -> Result<ExperimentSpec> {
    parse_spec_str(&fs::read_to_string(path)?)
}

impl ExperimentSpec {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Spec(e.to_string()))
    }

    /// Every expanded point must be a valid configuration.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points()?.iter().enumerate() {
            PointContext::new(p).map_err(|e| Error::Spec(format!("point {i} ({}): {e}", describe(p))))?;
        }
        Ok(())
    }

    /// Cartesian product of the axes, in canonical axis order.
    pub fn points(&self) -> Result<Vec<PointConfig>> {
        let base = serde_json::to_value(&self.base).map_err(|e| Error::Spec(e.to_string()))?;
        let mut configs = vec![base];
        for name in AXIS_NAMES {
            let Some(values) = axis_values(&self.axes, name) else { continue };
            if values.is_empty() {
                return Err(Error::Spec(format!("axes.{name} is empty")));
            }
            configs = configs
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c[name] = v.clone();
                        c
                    })
                })
                .collect();
        }
        configs
            .into_iter()
            .map(|c| serde_json::from_value(c).map_err(|e| Error::Spec(e.to_string())))
            .collect()
    }

    /// Applies `key=value` to the base config and pins that axis.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Spec(format!("override '{assignment}' is not key=value")))?;
        let key = key.trim();
        let value: serde_json::Value =
            serde_json::from_str(raw.trim()).unwrap_or_else(|_| serde_json::Value::String(raw.trim().to_string()));
        let mut base = serde_json::to_value(&self.base).map_err(|e| Error::Spec(e.to_string()))?;
        if base.get(key).is_none() {
            return Err(Error::Spec(format!("unknown configuration key '{key}'")));
        }
        base[key] = value;
        self.base = serde_json::from_value(base).map_err(|e| Error::Spec(format!("{key}: {e}")))?;
        clear_axis(&mut self.axes, key);
        Ok(())
    }
}

/// Short human-readable label of a point's axis values.
pub fn describe(p: &PointConfig) -> String {
    axis_columns(p).iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

fn axis_columns(p: &PointConfig) -> Vec<(&'static str, String)> {
    vec![
        ("density", p.density.to_string()),
        ("bandwidth_mhz", p.bandwidth_mhz.to_string()),
        ("scs_khz", p.scs_khz.to_string()),
        ("slot_type", p.slot_type.to_string()),
        ("scheduling", p.scheduling.to_string()),
        ("retransmission", p.retransmission.to_string()),
        ("cast", p.cast.to_string()),
        ("receivers", p.receivers.to_string()),
        ("traffic", p.traffic.to_string()),
        ("period_ms", p.period_ms.to_string()),
        ("mcs_table", p.mcs_table.to_string()),
        ("control", p.control.to_string()),
    ]
}

/// One sweep result: the resolved configuration, its seed and outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub key: String,
    pub seed: u64,
    pub version: String,
    pub config: PointConfig,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

/// Canonical identity of a point: the full configuration plus seed.
pub fn point_key(config: &PointConfig, seed: u64) -> String {
    format!("{}#{seed}", serde_json::to_string(config).expect("config serializes"))
}

fn canonical_cmp(a: &ResultRow, b: &ResultRow) -> Ordering {
    let (x, y) = (&a.config, &b.config);
    x.density
        .total_cmp(&y.density)
        .then(x.bandwidth_mhz.cmp(&y.bandwidth_mhz))
        .then(x.scs_khz.cmp(&y.scs_khz))
        .then(x.slot_type.to_string().cmp(&y.slot_type.to_string()))
        .then(x.scheduling.to_string().cmp(&y.scheduling.to_string()))
        .then(x.retransmission.to_string().cmp(&y.retransmission.to_string()))
        .then(x.cast.to_string().cmp(&y.cast.to_string()))
        .then(x.receivers.cmp(&y.receivers))
        .then(x.traffic.to_string().cmp(&y.traffic.to_string()))
        .then(x.period_ms.total_cmp(&y.period_ms))
        .then(x.mcs_table.to_string().cmp(&y.mcs_table.to_string()))
        .then(x.control.to_string().cmp(&y.control.to_string()))
        .then(a.seed.cmp(&b.seed))
        .then(a.key.cmp(&b.key))
}

pub const METRIC_COLUMNS: [&str; 21] = [
    "replications",
    "packets",
    "delivered",
    "dropped",
    "failed",
    "infeasible_packets",
    "mean_l_radio_ms",
    "mean_ul_ms",
    "mean_dl_ms",
    "p90_ms",
    "p9999_ms",
    "drop_fraction",
    "failure_fraction",
    "fraction_within_lloa",
    "fraction_within_hloa",
    "rb_utilization_ul",
    "rb_utilization_dl",
    "lloa_pass",
    "hloa_pass",
    "ci_half_width_ms",
    "ci_relative_error",
];

fn metric_cells(r: &MetricsReport) -> Vec<String> {
    let opt = |v: Option<f64>| v.map_or("inf".to_string(), |x| x.to_string());
    vec![
        r.replications.to_string(),
        r.packets.to_string(),
        r.delivered.to_string(),
        r.dropped.to_string(),
        r.failed.to_string(),
        r.infeasible_packets.to_string(),
        r.mean_l_radio_ms.to_string(),
        r.mean_ul_ms.to_string(),
        r.mean_dl_ms.to_string(),
        opt(r.p90_ms),
        opt(r.p9999_ms),
        r.drop_fraction.to_string(),
        r.failure_fraction.to_string(),
        r.fraction_within_lloa.to_string(),
        r.fraction_within_hloa.to_string(),
        r.rb_utilization_ul.to_string(),
        r.rb_utilization_dl.to_string(),
        r.lloa_pass.to_string(),
        r.hloa_pass.to_string(),
        r.ci_half_width_ms.to_string(),
        r.ci_relative_error.to_string(),
    ]
}

/// Writes rows, sorted canonically, as CSV.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| canonical_cmp(a, b));
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = AXIS_NAMES.to_vec();
    header.push("seed");
    header.extend(METRIC_COLUMNS);
    header.push("error");
    w.write_record(&header)?;
    for row in sorted {
        let mut cells: Vec<String> = axis_columns(&row.config).into_iter().map(|(_, v)| v).collect();
        cells.push(row.seed.to_string());
        match &row.report {
            Some(r) => cells.extend(metric_cells(r)),
            None => cells.extend(std::iter::repeat_n(String::new(), METRIC_COLUMNS.len())),
        }
        cells.push(row.error.clone().unwrap_or_default());
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSONL: &str = "results.jsonl";

fn load_rows(path: &Path) -> Result<Vec<ResultRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    BufReader::new(fs::File::open(path)?)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| serde_json::from_str(&l?).map_err(|e| Error::Io(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SweepSummary {
    pub rows: Vec<ResultRow>,
    pub ran: usize,
    pub skipped: usize,
    pub failed: usize,
    pub output_dir: PathBuf,
}

/// Runs every point not already present in the output directory. Points
/// that fail are recorded with their error and the sweep continues.
pub fn run_sweep(spec: &ExperimentSpec, opts: &SweepOptions) -> Result<SweepSummary> {
    let dir = opts.output_dir.clone().or_else(|| spec.output_dir.clone()).unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&dir)?;
    let seed = opts.seed.unwrap_or(spec.seed);
    let jsonl = dir.join(RESULTS_JSONL);
    let mut rows = load_rows(&jsonl)?;
    let done: HashSet<String> = rows.iter().filter(|r| r.error.is_none()).map(|r| r.key.clone()).collect();
    rows.retain(|r| r.error.is_none());
    let todo: Vec<PointConfig> = spec.points()?.into_iter().filter(|p| !done.contains(&point_key(p, seed))).collect();
    let skipped = spec.points()?.len() - todo.len();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.or(spec.workers).unwrap_or(0))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let writer = Mutex::new(fs::OpenOptions::new().create(true).append(true).open(&jsonl)?);
    let new_rows: Vec<ResultRow> = pool.install(|| {
        todo.par_iter()
            .map(|p| {
                let outcome = run(p, seed);
                let row = ResultRow {
                    key: point_key(p, seed),
                    seed,
                    version: env!("CARGO_PKG_VERSION").to_string(),
                    config: p.clone(),
                    error: outcome.as_ref().err().map(|e| e.to_string()),
                    report: outcome.ok(),
                };
                let line = serde_json::to_string(&row).expect("row serializes");
                let mut f = writer.lock().expect("writer lock");
                // Best effort: the file is rewritten in full once the sweep ends.
                let _ = writeln!(f, "{line}");
                row
            })
            .collect()
    });
    let failed = new_rows.iter().filter(|r| r.error.is_some()).count();
    let ran = new_rows.len();
    rows.extend(new_rows);
    drop(writer);
    let mut f = fs::File::create(&jsonl)?;
    for r in &rows {
        writeln!(f, "{}", serde_json::to_string(r).expect("row serializes"))?;
    }
    write_csv(&rows, fs::File::create(dir.join(RESULTS_CSV))?)?;
    Ok(SweepSummary { rows, ran, skipped, failed, output_dir: dir })
}

/// A results table read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ResultTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.iter().map(String::from).collect();
        let rows = r.records().map(|rec| Ok(rec?.iter().map(String::from).collect())).collect::<Result<_>>()?;
        Ok(ResultTable { headers, rows })
    }

    pub fn from_rows(rows: &[ResultRow]) -> Result<Self> {
        let mut buf = Vec::new();
        write_csv(rows, &mut buf)?;
        let mut r = csv::Reader::from_reader(buf.as_slice());
        let headers = r.headers()?.iter().map(String::from).collect();
        let rows = r.records().map(|rec| Ok(rec?.iter().map(String::from).collect())).collect::<Result<_>>()?;
        Ok(ResultTable { headers, rows })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FigureSpec {
    pub id: u32,
    pub x: &'static str,
    pub series: &'static [&'static str],
    pub y: &'static [&'static str],
}

pub const FIGURES: [FigureSpec; 13] = [
    FigureSpec { id: 3, x: "density", series: &["mcs_table", "cast", "receivers", "period_ms"], y: &["mean_l_radio_ms"] },
    FigureSpec { id: 4, x: "density", series: &["mcs_table", "period_ms"], y: &["mean_l_radio_ms"] },
    FigureSpec { id: 5, x: "bandwidth_mhz", series: &["mcs_table", "cast", "receivers"], y: &["mean_l_radio_ms"] },
    FigureSpec { id: 6, x: "density", series: &["mcs_table", "retransmission", "period_ms"], y: &["mean_l_radio_ms"] },
    FigureSpec {
        id: 7,
        x: "density",
        series: &["scs_khz", "slot_type"],
        y: &["mean_l_radio_ms", "rb_utilization_ul", "rb_utilization_dl"],
    },
    FigureSpec { id: 8, x: "density", series: &["scs_khz", "slot_type"], y: &["mean_l_radio_ms", "p90_ms"] },
    FigureSpec {
        id: 9,
        x: "density",
        series: &["scs_khz", "slot_type", "mcs_table", "retransmission"],
        y: &["fraction_within_hloa"],
    },
    FigureSpec {
        id: 10,
        x: "bandwidth_mhz",
        series: &["scs_khz", "slot_type", "mcs_table", "retransmission"],
        y: &["fraction_within_hloa"],
    },
    FigureSpec {
        id: 11,
        x: "density",
        series: &["scs_khz", "mcs_table", "retransmission"],
        y: &["mean_l_radio_ms", "p9999_ms"],
    },
    FigureSpec { id: 12, x: "density", series: &["traffic", "control"], y: &["mean_l_radio_ms", "drop_fraction"] },
    FigureSpec {
        id: 13,
        x: "density",
        series: &["scs_khz", "slot_type", "control"],
        y: &["mean_l_radio_ms", "p90_ms"],
    },
    FigureSpec {
        id: 14,
        x: "density",
        series: &["scs_khz", "period_ms", "retransmission"],
        y: &["mean_l_radio_ms", "p9999_ms"],
    },
    FigureSpec { id: 15, x: "bandwidth_mhz", series: &["scs_khz", "slot_type", "retransmission"], y: &["p9999_ms"] },
];

pub fn figure(id: u32) -> Result<&'static FigureSpec> {
    FIGURES.iter().find(|f| f.id == id).ok_or_else(|| Error::Spec(format!("unknown figure id {id}")))
}

/// One plottable series: `(x, y)` points, sorted by x.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub metric: String,
    pub label: String,
    pub points: Vec<(String, String)>,
}

/// Splits the table into per-series `(x, y)` data for figure `id`. Axis
/// columns that vary but are not part of the figure's legend are added to the
/// series label so no two rows share a series point.
pub fn figure_series(table: &ResultTable, id: u32) -> Result<Vec<Series>> {
    let fig = figure(id)?;
    let needed: Vec<&str> = std::iter::once(fig.x).chain(fig.series.iter().copied()).chain(fig.y.iter().copied()).collect();
    let missing: Vec<&str> = needed.iter().copied().filter(|c| table.column(c).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Spec(format!("figure {id}: table lacks columns {}", missing.join(", "))));
    }
    let err_col = table.column("error");
    let rows: Vec<&Vec<String>> =
        table.rows.iter().filter(|r| err_col.is_none_or(|c| r[c].is_empty())).collect();
    let x_col = table.column(fig.x).expect("checked");
    let mut label_cols: Vec<&str> = fig.series.to_vec();
    for name in AXIS_NAMES.iter().copied().chain(["seed"]) {
        if name == fig.x || label_cols.contains(&name) {
            continue;
        }
        if let Some(c) = table.column(name) {
            let distinct: HashSet<&str> = rows.iter().map(|r| r[c].as_str()).collect();
            if distinct.len() > 1 {
                label_cols.push(name);
            }
        }
    }
    let mut out = Vec::new();
    for metric in fig.y {
        let y_col = table.column(metric).expect("checked");
        let mut groups: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        for r in &rows {
            let label = label_cols
                .iter()
                .map(|c| format!("{c}-{}", r[table.column(c).expect("present")]))
                .collect::<Vec<_>>()
                .join("__");
            groups.entry(label).or_default().push((r[x_col].clone(), r[y_col].clone()));
        }
        for (label, mut points) in groups {
            points.sort_by(|a, b| {
                match (a.0.parse::<f64>(), b.0.parse::<f64>()) {
                    (Ok(x), Ok(y)) => x.total_cmp(&y),
                    _ => a.0.cmp(&b.0),
                }
            });
            out.push(Series { metric: metric.to_string(), label, points });
        }
    }
    Ok(out)
}

/// Writes one CSV file `(x, y)` per series under `out_dir/figNN/`.
pub fn emit_figure_data(table: &ResultTable, id: u32, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let series = figure_series(table, id)?;
    let fig = figure(id)?;
    let dir = out_dir.join(format!("fig{id:02}"));
    fs::create_dir_all(&dir)?;
    let mut paths = Vec::new();
    for s in series {
        let path = dir.join(format!("{}__{}.csv", s.metric, s.label.replace(['/', ' '], "_")));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([fig.x, s.metric.as_str()])?;
        for (x, y) in &s.points {
            w.write_record([x, y])?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

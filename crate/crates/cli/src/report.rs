//! Run reports: the row schema shared with the bench command, plus the
//! report command that merges runs into comparison and breakdown tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use reis_core::host::{end_to_end_breakdown, PipelineConstants};

use crate::Global;

/// One sweep cell's results. `mode` is "flat" or "ivf" for engine rows and
/// "host" for the conventional baseline on the same image.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ReportRow {
    pub preset: String,
    pub mode: String,
    pub nprobe: usize,
    pub threshold: Option<u16>,
    pub df: bool,
    pub pl: bool,
    pub mpibc: bool,
    pub queries: usize,
    pub qps: f64,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub energy_uj_per_query: f64,
    pub recall_at_10: f64,
    pub filtered_pct: f64,
    pub pages_read: u64,
}

impl ReportRow {
    pub const CSV_HEADER: &'static str = "preset,mode,nprobe,threshold,df,pl,mpibc,queries,qps,\
        mean_us,p50_us,p95_us,p99_us,energy_uj_per_query,recall_at_10,filtered_pct,pages_read";

    pub fn csv_fields(&self) -> String {
        let threshold = self.threshold.map_or(String::new(), |t| t.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.preset,
            self.mode,
            self.nprobe,
            threshold,
            self.df,
            self.pl,
            self.mpibc,
            self.queries,
            self.qps,
            self.mean_us,
            self.p50_us,
            self.p95_us,
            self.p99_us,
            self.energy_uj_per_query,
            self.recall_at_10,
            self.filtered_pct,
            self.pages_read
        )
    }

    pub fn opts_label(&self) -> &'static str {
        match (self.mode.as_str(), self.df, self.pl, self.mpibc) {
            ("host", ..) => "-",
            (_, false, false, false) => "none",
            (_, true, false, false) => "df",
            (_, true, true, false) => "df+pl",
            (_, true, true, true) => "df+pl+mpibc",
            _ => "custom",
        }
    }
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
}

/// Writes rows as CSV. The generation timestamp lives in the leading
/// comment line only, so the data lines are reproducible.
pub fn write_rows_csv(path: &Path, rows: &[ReportRow], stamp: bool) -> Result<()> {
    let mut text = String::new();
    if stamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(text, "# generated at unix {secs}")?;
    }
    writeln!(text, "{}", ReportRow::CSV_HEADER)?;
    for row in rows {
        writeln!(text, "{}", row.csv_fields())?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_rows_json(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&RunReport { rows: rows.to_vec() })?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Args)]
pub struct ReportArgs {
    /// Run report JSON files produced by the bench command.
    #[arg(required = true)]
    runs: Vec<PathBuf>,

    /// Base name of the merged CSV and JSON outputs.
    #[arg(long, default_value = "report")]
    label: String,
}

#[derive(Debug, serde::Serialize)]
struct ScoredRow {
    #[serde(flatten)]
    row: ReportRow,
    speedup_vs_host: f64,
}

pub fn run(global: &Global, args: &ReportArgs) -> Result<()> {
    let mut rows: Vec<ReportRow> = Vec::new();
    for path in &args.runs {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading run report {}", path.display()))?;
        let run: RunReport = serde_json::from_str(&text)
            .with_context(|| format!("parsing run report {}", path.display()))?;
        rows.extend(run.rows);
    }
    if rows.is_empty() {
        bail!("the run reports hold no rows");
    }

    // First host row per preset anchors that preset's speedups. Merged
    // runs of the same preset are assumed to share a host config.
    let mut host_mean: BTreeMap<&str, f64> = BTreeMap::new();
    for row in &rows {
        if row.mode == "host" {
            host_mean.entry(row.preset.as_str()).or_insert(row.mean_us);
        }
    }
    let scored: Vec<ScoredRow> = rows
        .iter()
        .map(|row| {
            let Some(&host) = host_mean.get(row.preset.as_str()) else {
                bail!("preset {} has no host baseline row", row.preset);
            };
            Ok(ScoredRow { row: row.clone(), speedup_vs_host: host / row.mean_us })
        })
        .collect::<Result<_>>()?;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(
        out,
        "{:<12} {:<5} {:>6} {:<12} {:>10} {:>12} {:>10} {:>9}",
        "preset", "mode", "nprobe", "opts", "qps", "mean_us", "recall@10", "speedup"
    )?;
    for s in &scored {
        writeln!(
            out,
            "{:<12} {:<5} {:>6} {:<12} {:>10.1} {:>12.1} {:>10.3} {:>8.1}x",
            s.row.preset,
            s.row.mode,
            s.row.nprobe,
            s.row.opts_label(),
            s.row.qps,
            s.row.mean_us,
            s.row.recall_at_10,
            s.speedup_vs_host
        )?;
    }

    // End-to-end stage table per preset, anchored on its fastest engine row.
    let constants = PipelineConstants::default();
    let mut presets: Vec<&str> = Vec::new();
    for s in &scored {
        if !presets.contains(&s.row.preset.as_str()) {
            presets.push(s.row.preset.as_str());
        }
    }
    for preset in presets {
        let best = scored
            .iter()
            .filter(|s| s.row.preset == preset && s.row.mode != "host")
            .min_by(|a, b| a.row.mean_us.total_cmp(&b.row.mean_us));
        let Some(best) = best else { continue };
        writeln!(out)?;
        writeln!(
            out,
            "end-to-end stages, {preset} ({} nprobe={} {}):",
            best.row.mode,
            best.row.nprobe,
            best.row.opts_label()
        )?;
        for stage in end_to_end_breakdown(&constants, best.row.mean_us / 1e6) {
            writeln!(out, "  {:<26} {:>10.4} s {:>6.2}%", stage.stage, stage.seconds, stage.percent)?;
        }
    }

    let out_dir = global.out_dir()?;
    let csv_path = out_dir.join(format!("{}.csv", args.label));
    let json_path = out_dir.join(format!("{}.json", args.label));

    let mut text = String::new();
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    writeln!(text, "# generated at unix {secs}")?;
    writeln!(text, "{},speedup_vs_host", ReportRow::CSV_HEADER)?;
    for s in &scored {
        writeln!(text, "{},{:.6}", s.row.csv_fields(), s.speedup_vs_host)?;
    }
    fs::write(&csv_path, text).with_context(|| format!("writing {}", csv_path.display()))?;

    let mut json = serde_json::to_string_pretty(&serde_json::json!({ "rows": scored }))?;
    json.push('\n');
    fs::write(&json_path, json).with_context(|| format!("writing {}", json_path.display()))?;

    writeln!(out)?;
    writeln!(out, "csv: {}", csv_path.display())?;
    writeln!(out, "json: {}", json_path.display())?;
    Ok(())
}

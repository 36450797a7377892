//! Experiment reports: CSV and text tables, box-plot data, and readers.
//!
//! `report.csv` has one line per (row, system) plus one `average` line
//! per row:
//!
//! | column | meaning |
//! |---|---|
//! | `row` | position of the configuration in the grid |
//! | `training_days`, `patch_px`, `horizon`, `cloud_mode` | the setting |
//! | `kernel` | canonical kernel template |
//! | `kernel_name` | family label used in tables |
//! | `system_id` | system id, or `average` |
//! | `mae_w` | mean of the per-day MAEs in watts |
//! | `daylight_mae_w` | same, restricted to steps with the sun up |
//! | `status` | `ok` or `failed` |
//! | `detail` | failure reason |
//!
//! `report_samples.csv` lists every per-day MAE:
//! `row,system_id,day,forecast_start,mae_w,daylight_mae_w`.
//!
//! Box-plot files have `row,group,n,q1,median,q3,whisker_low,whisker_high,outliers`
//! with outliers separated by `;`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::geo::{index_to_timestamp, TimeIndex};
use crate::gp::PosteriorPrediction;
use crate::pipeline::power::{format_timestamp, parse_timestamp};

use super::{CloudMode, ExperimentConfig, Horizon};

pub const REPORT_FILE: &str = "report.csv";
pub const SAMPLES_FILE: &str = "report_samples.csv";
pub const TABLE_FILE: &str = "report_table.txt";
pub const BOXPLOT_SYSTEM_FILE: &str = "boxplot_system.csv";
pub const BOXPLOT_DAY_FILE: &str = "boxplot_testing_day.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SystemCell {
    pub system_id: i64,
    pub mae_w: Option<f64>,
    pub daylight_mae_w: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub index: usize,
    pub training_days: u32,
    pub patch_px: usize,
    pub kernel: String,
    pub kernel_name: String,
    pub horizon: Horizon,
    pub cloud_mode: CloudMode,
    pub systems: Vec<SystemCell>,
}

impl ReportRow {
    pub fn for_config(index: usize, cfg: &ExperimentConfig) -> Self {
        ReportRow {
            index,
            training_days: cfg.training_days,
            patch_px: cfg.patch_px,
            kernel: cfg.kernel.to_string(),
            kernel_name: cfg.kernel.display_name(),
            horizon: cfg.horizon,
            cloud_mode: cfg.cloud_mode,
            systems: Vec::new(),
        }
    }

    /// Mean of the successful per-system MAEs.
    pub fn average_mae(&self) -> Option<f64> {
        let v: Vec<f64> = self.systems.iter().filter_map(|s| s.mae_w).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn failed_cells(&self) -> usize {
        self.systems.iter().filter(|s| s.failure.is_some()).count()
    }

    pub fn cell(&self, system_id: i64) -> Option<&SystemCell> {
        self.systems.iter().find(|s| s.system_id == system_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaySample {
    pub row: usize,
    pub system_id: i64,
    /// Day number of the launch since the dataset epoch.
    pub day: i64,
    pub forecast_start: TimeIndex,
    pub mae_w: f64,
    pub daylight_mae_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub samples: Vec<DaySample>,
}

impl ExperimentReport {
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().map(ReportRow::failed_cells).sum()
    }

    /// System ids in first-seen order.
    pub fn system_ids(&self) -> Vec<i64> {
        let mut ids = Vec::new();
        for r in &self.rows {
            for c in &r.systems {
                if !ids.contains(&c.system_id) {
                    ids.push(c.system_id);
                }
            }
        }
        ids
    }
}

fn fmt_w(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::parse(path, e.to_string())
}

pub fn write_report_csv<W: Write>(w: W, report: &ExperimentReport) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "row",
        "training_days",
        "patch_px",
        "kernel",
        "kernel_name",
        "horizon",
        "cloud_mode",
        "system_id",
        "mae_w",
        "daylight_mae_w",
        "status",
        "detail",
    ])?;
    for r in &report.rows {
        let head = [
            r.index.to_string(),
            r.training_days.to_string(),
            r.patch_px.to_string(),
            r.kernel.clone(),
            r.kernel_name.clone(),
            r.horizon.to_string(),
            r.cloud_mode.to_string(),
        ];
        for c in &r.systems {
            let status = if c.failure.is_some() { "failed" } else { "ok" };
            let mut rec = head.to_vec();
            rec.extend([
                c.system_id.to_string(),
                fmt_w(c.mae_w),
                fmt_w(c.daylight_mae_w),
                status.to_string(),
                c.failure.clone().unwrap_or_default(),
            ]);
            out.write_record(&rec)?;
        }
        let avg = r.average_mae();
        let day: Vec<f64> = r.systems.iter().filter_map(|s| s.daylight_mae_w).collect();
        let day_avg = (!day.is_empty()).then(|| day.iter().sum::<f64>() / day.len() as f64);
        let mut rec = head.to_vec();
        rec.extend([
            "average".to_string(),
            fmt_w(avg),
            fmt_w(day_avg),
            if avg.is_some() { "ok" } else { "failed" }.to_string(),
            format!("{} failed cells", r.failed_cells()),
        ]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Parse `report.csv` back into report rows (samples are not included).
pub fn read_report_csv<R: Read>(reader: R, source: &str) -> Result<ExperimentReport> {
    let path = Path::new(source);
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows: Vec<ReportRow> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(csv_err(path))?;
        let bad = |m: &str| Error::parse(path, format!("line {line}: {m}"));
        if rec.len() != 12 {
            return Err(bad("expected 12 columns"));
        }
        let num = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                rec[i].parse().map(Some).map_err(|_| bad(&format!("bad number `{}`", &rec[i])))
            }
        };
        let index: usize = rec[0].parse().map_err(|_| bad("bad row index"))?;
        if rec[7] == *"average" {
            continue;
        }
        if rows.last().is_none_or(|r| r.index != index) {
            rows.push(ReportRow {
                index,
                training_days: rec[1].parse().map_err(|_| bad("bad training_days"))?,
                patch_px: rec[2].parse().map_err(|_| bad("bad patch_px"))?,
                kernel: rec[3].to_string(),
                kernel_name: rec[4].to_string(),
                horizon: rec[5].parse().map_err(|_| bad("bad horizon"))?,
                cloud_mode: rec[6].parse().map_err(|_| bad("bad cloud_mode"))?,
                systems: Vec::new(),
            });
        }
        let failed = match &rec[10] {
            "ok" => false,
            "failed" => true,
            _ => return Err(bad("status must be ok or failed")),
        };
        rows.last_mut().expect("pushed above").systems.push(SystemCell {
            system_id: rec[7].parse().map_err(|_| bad("bad system_id"))?,
            mae_w: num(8)?,
            daylight_mae_w: num(9)?,
            failure: failed.then(|| rec[11].to_string()),
        });
    }
    Ok(ExperimentReport { rows, samples: Vec::new() })
}

pub fn write_samples_csv<W: Write>(w: W, report: &ExperimentReport) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row", "system_id", "day", "forecast_start", "mae_w", "daylight_mae_w"])?;
    for s in &report.samples {
        out.write_record([
            s.row.to_string(),
            s.system_id.to_string(),
            s.day.to_string(),
            s.forecast_start.to_string(),
            fmt_w(Some(s.mae_w)),
            fmt_w(s.daylight_mae_w),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn period_label(days: u32) -> String {
    match days {
        7 => "1 week".into(),
        30 => "1 month".into(),
        d if d % 7 == 0 => format!("{} weeks", d / 7),
        d => format!("{d} days"),
    }
}

/// Aligned plain-text table, one line per configuration. Horizon and
/// cloud-coverage columns appear only when they vary between rows.
pub fn render_table(report: &ExperimentReport) -> String {
    let ids = report.system_ids();
    let varies = |f: &dyn Fn(&ReportRow) -> String| {
        report.rows.windows(2).any(|w| f(&w[0]) != f(&w[1]))
    };
    let show_horizon = varies(&|r| r.horizon.to_string());
    let show_cloud = varies(&|r| r.cloud_mode.to_string());

    let mut header = vec!["Training Period".to_string(), "Sky Coverage".into(), "Kernel Structure".into()];
    if show_horizon {
        header.push("Horizon".into());
    }
    if show_cloud {
        header.push("Cloud Coverage".into());
    }
    header.extend(ids.iter().map(|id| format!("System {id}")));
    header.push("Average (MAE)".into());

    let mut lines = vec![header];
    for r in &report.rows {
        let mut cells = vec![
            period_label(r.training_days),
            format!("{0}x{0}", r.patch_px),
            r.kernel_name.clone(),
        ];
        if show_horizon {
            cells.push(r.horizon.to_string());
        }
        if show_cloud {
            cells.push(r.cloud_mode.to_string());
        }
        for id in &ids {
            cells.push(match r.cell(*id) {
                Some(SystemCell { mae_w: Some(m), .. }) => format!("{m:.2}"),
                Some(_) => "failed".into(),
                None => "-".into(),
            });
        }
        cells.push(r.average_mae().map_or("failed".into(), |m| format!("{m:.2}")));
        lines.push(cells);
    }

    let widths: Vec<usize> = (0..lines[0].len())
        .map(|j| lines.iter().map(|l| l[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (k, l) in lines.iter().enumerate() {
        let cells: Vec<String> = l
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, w))| if j < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
        if k == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("-+-"));
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    TestingDay,
    System,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub row: usize,
    pub group: i64,
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartiles, 1.5·IQR whiskers and outliers; `None` for empty input.
pub fn box_stats(values: &[f64]) -> Option<(f64, f64, f64, f64, f64, Vec<f64>)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, med, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().cloned().filter(|x| (lo_fence..=hi_fence).contains(x)).collect();
    let outliers = v.iter().cloned().filter(|x| !(lo_fence..=hi_fence).contains(x)).collect();
    Some((q1, med, q3, inside[0], inside[inside.len() - 1], outliers))
}

/// Per-(row, group) box statistics of the per-day MAE samples.
pub fn export_boxplot_data(report: &ExperimentReport, group_by: GroupBy) -> Vec<BoxStats> {
    let mut groups: BTreeMap<(usize, i64), Vec<f64>> = BTreeMap::new();
    for s in &report.samples {
        let key = match group_by {
            GroupBy::TestingDay => s.day,
            GroupBy::System => s.system_id,
        };
        groups.entry((s.row, key)).or_default().push(s.mae_w);
    }
    if group_by == GroupBy::System {
        for r in &report.rows {
            for c in &r.systems {
                if !groups.contains_key(&(r.index, c.system_id)) {
                    log::warn!("row {} system {} has no samples; omitted from box plot", r.index, c.system_id);
                }
            }
        }
    }
    groups
        .into_iter()
        .filter_map(|((row, group), v)| {
            let (q1, median, q3, whisker_low, whisker_high, outliers) = box_stats(&v)?;
            Some(BoxStats {
                row,
                group,
                n: v.len(),
                q1,
                median,
                q3,
                whisker_low,
                whisker_high,
                outliers,
            })
        })
        .collect()
}

pub fn write_boxplot_csv<W: Write>(w: W, stats: &[BoxStats]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row", "group", "n", "q1", "median", "q3", "whisker_low", "whisker_high", "outliers"])?;
    for s in stats {
        let outliers: Vec<String> = s.outliers.iter().map(|o| format!("{o:.6}")).collect();
        out.write_record([
            s.row.to_string(),
            s.group.to_string(),
            s.n.to_string(),
            format!("{:.6}", s.q1),
            format!("{:.6}", s.median),
            format!("{:.6}", s.q3),
            format!("{:.6}", s.whisker_low),
            format!("{:.6}", s.whisker_high),
            outliers.join(";"),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Write every report artifact into `dir`.
pub fn write_report_files(dir: &Path, report: &ExperimentReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(REPORT_FILE);
    write_report_csv(create(&p)?, report).map_err(csv_err(&p))?;
    let p = dir.join(SAMPLES_FILE);
    write_samples_csv(create(&p)?, report).map_err(csv_err(&p))?;
    let p = dir.join(TABLE_FILE);
    std::fs::write(&p, render_table(report)).map_err(|e| Error::io(&p, e))?;
    for (file, g) in [(BOXPLOT_SYSTEM_FILE, GroupBy::System), (BOXPLOT_DAY_FILE, GroupBy::TestingDay)] {
        let p = dir.join(file);
        write_boxplot_csv(create(&p)?, &export_boxplot_data(report, g)).map_err(csv_err(&p))?;
    }
    Ok(())
}

/// One line of a forecast CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub time_index: TimeIndex,
    pub timestamp: DateTime<Utc>,
    pub mean_w: f64,
    pub sd_w: f64,
}

pub const FORECAST_HEADER: [&str; 4] = ["time_index", "timestamp_utc", "mean_w", "sd_w"];

/// Forecast CSV with one line per horizon step; `mean` is the reported
/// (clamped) mean.
pub fn write_forecast_csv<W: Write>(
    w: W,
    times: &[TimeIndex],
    epoch: DateTime<Utc>,
    mean: &[f64],
    prediction: &PosteriorPrediction,
) -> csv::Result<()> {
    let sd = prediction.std_dev();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FORECAST_HEADER)?;
    for (k, t) in times.iter().enumerate() {
        out.write_record([
            t.to_string(),
            format_timestamp(index_to_timestamp(*t, epoch)),
            format!("{:.6}", mean[k]),
            format!("{:.6}", sd[k]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_forecast_csv<R: Read>(reader: R, source: &str) -> Result<Vec<ForecastRow>> {
    let path = Path::new(source);
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    if header.iter().collect::<Vec<_>>() != FORECAST_HEADER {
        return Err(Error::parse(path, format!("line 1: expected header `{}`", FORECAST_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = || Error::parse(path, format!("line {}: malformed forecast row", k + 2));
        rows.push(ForecastRow {
            time_index: TimeIndex(rec[0].parse().map_err(|_| bad())?),
            timestamp: parse_timestamp(&rec[1]).ok_or_else(bad)?,
            mean_w: rec[2].parse().map_err(|_| bad())?,
            sd_w: rec[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(row: usize, system_id: i64, day: i64, mae_w: f64) -> DaySample {
        DaySample {
            row,
            system_id,
            day,
            forecast_start: TimeIndex(day * 288),
            mae_w,
            daylight_mae_w: None,
        }
    }

    #[test]
    fn hand_quartiles_flag_outlier() {
        let (q1, med, q3, lo, hi, out) = box_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((q1, med, q3), (2.0, 3.0, 4.0));
        assert_eq!((lo, hi), (1.0, 4.0));
        assert_eq!(out, [100.0]);
    }

    #[test]
    fn identical_values_zero_width() {
        let (q1, med, q3, lo, hi, out) = box_stats(&[5.0; 4]).unwrap();
        assert_eq!([q1, med, q3, lo, hi], [5.0; 5]);
        assert!(out.is_empty());
        assert!(box_stats(&[]).is_none());
    }

    fn table_two_shaped() -> ExperimentReport {
        let ids = [709, 1556, 1627, 1872];
        let mut report = ExperimentReport::default();
        for (row, (patch, mode)) in [(6, CloudMode::Given), (12, CloudMode::Given), (6, CloudMode::Persistence), (12, CloudMode::Persistence)]
            .into_iter()
            .enumerate()
        {
            report.rows.push(ReportRow {
                index: row,
                training_days: 21,
                patch_px: patch,
                kernel: "periodic(matern12; h=1, w=1, T=288) + whitenoise(σ²=0)".into(),
                kernel_name: "Matern12".into(),
                horizon: Horizon::Hours4,
                cloud_mode: mode,
                systems: ids
                    .iter()
                    .map(|&id| SystemCell {
                        system_id: id,
                        mae_w: Some(100.0 * row as f64 + id as f64),
                        daylight_mae_w: None,
                        failure: None,
                    })
                    .collect(),
            });
            for &id in &ids {
                for day in 21..25 {
                    report.samples.push(sample(row, id, day, (id + day) as f64));
                }
            }
        }
        report
    }

    #[test]
    fn grouping_by_system_gives_four_groups_per_row() {
        let r = table_two_shaped();
        let stats = export_boxplot_data(&r, GroupBy::System);
        assert_eq!(stats.len(), 16);
        assert_eq!(stats.iter().filter(|s| s.row == 0).count(), 4);
        assert!(stats.iter().all(|s| s.n == 4));
    }

    #[test]
    fn report_csv_round_trip() {
        let mut r = table_two_shaped();
        r.rows[1].systems[2] = SystemCell {
            system_id: 1627,
            mae_w: None,
            daylight_mae_w: None,
            failure: Some("fit failed, badly".into()),
        };
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &r).unwrap();
        let back = read_report_csv(buf.as_slice(), "report.csv").unwrap();
        assert_eq!(back.rows, r.rows);
        let table = render_table(&r);
        assert!(table.contains("Cloud Coverage"));
        assert!(!table.contains("Horizon"));
        assert!(table.contains("failed"));
    }

    #[test]
    fn average_is_mean_of_cells() {
        let r = table_two_shaped();
        let row = &r.rows[0];
        let mean = row.systems.iter().map(|c| c.mae_w.unwrap()).sum::<f64>() / 4.0;
        assert!((row.average_mae().unwrap() - mean).abs() < 1e-9);
    }

    #[test]
    fn forecast_csv_round_trip() {
        use chrono::TimeZone;
        use nalgebra::{DMatrix, DVector};
        let epoch = Utc.with_ymd_and_hms(2021, 6, 1, 0, 0, 0).unwrap();
        let times = [TimeIndex(120), TimeIndex(121)];
        let pred = PosteriorPrediction {
            mean: DVector::from_vec(vec![10.0, 20.0]),
            cov: DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0])),
        };
        let mut buf = Vec::new();
        write_forecast_csv(&mut buf, &times, epoch, &[10.0, 20.0], &pred).unwrap();
        let rows = read_forecast_csv(buf.as_slice(), "f.csv").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].time_index, TimeIndex(121));
        assert_eq!(rows[0].sd_w, 2.0);
        assert_eq!(format_timestamp(rows[0].timestamp), "2021-06-01T10:00:00Z");
    }
}

//! On-disk basin layout: loading and writing.
//!
//! Load is strict where silence would corrupt analysis: backwards or
//! duplicated dates, unparseable numbers, non-finite values, and negative
//! discharge are all hard errors naming the file and line. Gaps in a
//! file's date column are fine; they become missing values on the shared
//! calendar axis.

use super::{
    AttributeVector, BasinRecord, CalendarAxis, DataError, ForcingSource,
};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaFile {
    gauge_id: String,
    drainage_area_reported_km2: f64,
    drainage_area_polygon_km2: f64,
    continent: String,
    climate_zone: String,
    terminal_basin_id: String,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

/// Parsed time-series CSV: strictly increasing dates, one or more value
/// columns, empty fields as missing.
struct RawSeries {
    dates: Vec<NaiveDate>,
    columns: Vec<String>,
    values: Vec<Vec<Option<f64>>>, // [column][row]
}

fn parse_series_csv(path: &Path) -> Result<RawSeries, DataError> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| DataError::Parse { file: file.clone(), line: 1, message: e.to_string() })?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::Parse { file: file.clone(), line: 1, message: e.to_string() })?
        .clone();
    if headers.is_empty() || &headers[0] != "date" {
        return Err(DataError::Parse {
            file,
            line: 1,
            message: format!("first column must be 'date', got {:?}", headers.iter().next()),
        });
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    if columns.is_empty() {
        return Err(DataError::Parse {
            file,
            line: 1,
            message: "expected at least one value column".into(),
        });
    }
    let mut dates = Vec::new();
    let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); columns.len()];
    for (i, row) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let row = row.map_err(|e| DataError::Parse {
            file: file.clone(),
            line,
            message: e.to_string(),
        })?;
        let date: NaiveDate = row[0].parse().map_err(|_| DataError::Parse {
            file: file.clone(),
            line,
            message: format!("invalid date {:?}", &row[0]),
        })?;
        if let Some(&prev) = dates.last() {
            if date == prev {
                return Err(DataError::Parse {
                    file,
                    line,
                    message: format!("duplicate date {date}"),
                });
            }
            if date < prev {
                return Err(DataError::Parse {
                    file,
                    line,
                    message: format!("date {date} is out of order (previous row was {prev})"),
                });
            }
        }
        dates.push(date);
        for (c, cell) in row.iter().skip(1).enumerate() {
            let parsed = if cell.is_empty() {
                None
            } else {
                let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                    file: file.clone(),
                    line,
                    message: format!("column {:?}: invalid number {cell:?}", columns[c]),
                })?;
                if !v.is_finite() {
                    return Err(DataError::Parse {
                        file,
                        line,
                        message: format!("column {:?}: non-finite value {cell:?}", columns[c]),
                    });
                }
                Some(v)
            };
            values[c].push(parsed);
        }
    }
    if dates.is_empty() {
        return Err(DataError::Parse { file, line: 2, message: "file has no data rows".into() });
    }
    Ok(RawSeries { dates, columns, values })
}

fn reindex(
    axis: &CalendarAxis,
    dates: &[NaiveDate],
    column: &[Option<f64>],
) -> Vec<Option<f64>> {
    let mut out = vec![None; axis.len()];
    for (d, v) in dates.iter().zip(column) {
        if let Some(i) = axis.index_of(*d) {
            out[i] = *v;
        }
    }
    out
}

/// Load one basin directory into a [`BasinRecord`].
pub fn load_basin(dir: &Path) -> Result<BasinRecord, DataError> {
    let meta_path = dir.join("meta.json");
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: MetaFile = serde_json::from_str(&meta_text).map_err(|e| DataError::Meta {
        file: meta_path.display().to_string(),
        message: e.to_string(),
    })?;
    for (name, v) in [
        ("drainage_area_reported_km2", meta.drainage_area_reported_km2),
        ("drainage_area_polygon_km2", meta.drainage_area_polygon_km2),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(DataError::Meta {
                file: meta_path.display().to_string(),
                message: format!("{name} must be a positive number, got {v}"),
            });
        }
    }

    let attr_path = dir.join("attributes.json");
    let attr_text = std::fs::read_to_string(&attr_path).map_err(|e| io_err(&attr_path, e))?;
    let attributes: AttributeVector =
        serde_json::from_str(&attr_text).map_err(|e| DataError::Meta {
            file: attr_path.display().to_string(),
            message: e.to_string(),
        })?;

    let discharge_path = dir.join("discharge.csv");
    let discharge_raw = parse_series_csv(&discharge_path)?;
    if discharge_raw.columns != ["q_mmday"] {
        return Err(DataError::Parse {
            file: discharge_path.display().to_string(),
            line: 1,
            message: format!("expected single column q_mmday, got {:?}", discharge_raw.columns),
        });
    }
    for (i, v) in discharge_raw.values[0].iter().enumerate() {
        if let Some(q) = v {
            if *q < 0.0 {
                return Err(DataError::Parse {
                    file: discharge_path.display().to_string(),
                    line: i + 2,
                    message: format!("negative discharge {q}"),
                });
            }
        }
    }

    let mut forcing_files: Vec<(String, PathBuf)> = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_prefix("forcings_").and_then(|s| s.strip_suffix(".csv")) {
            forcing_files.push((stem.to_owned(), entry.path()));
        }
    }
    if forcing_files.is_empty() {
        return Err(DataError::NoForcings { dir: dir.display().to_string() });
    }
    forcing_files.sort();

    let mut raw_sources = Vec::with_capacity(forcing_files.len());
    for (source, path) in &forcing_files {
        raw_sources.push((source.clone(), parse_series_csv(path)?));
    }

    // Shared axis spans the union of all files, discharge included.
    let mut start = *discharge_raw.dates.first().unwrap();
    let mut end = *discharge_raw.dates.last().unwrap();
    for (_, raw) in &raw_sources {
        start = start.min(*raw.dates.first().unwrap());
        end = end.max(*raw.dates.last().unwrap());
    }
    let axis = CalendarAxis::from_span(start, end);

    let discharge_mmday = reindex(&axis, &discharge_raw.dates, &discharge_raw.values[0]);
    let forcings = raw_sources
        .into_iter()
        .map(|(name, raw)| ForcingSource {
            columns: raw
                .values
                .iter()
                .map(|col| reindex(&axis, &raw.dates, col))
                .collect(),
            variables: raw.columns,
            name,
        })
        .collect();

    Ok(BasinRecord {
        gauge_id: meta.gauge_id,
        area_reported_km2: meta.drainage_area_reported_km2,
        area_polygon_km2: meta.drainage_area_polygon_km2,
        continent: meta.continent,
        climate_zone: meta.climate_zone,
        terminal_basin_id: meta.terminal_basin_id,
        axis,
        forcings,
        discharge_mmday,
        attributes,
    })
}

/// Load every basin directory directly under `root`, sorted by gauge id.
pub fn load_basin_dirs(root: &Path) -> Result<Vec<BasinRecord>, DataError> {
    let mut dirs: Vec<PathBuf> = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| io_err(root, e))? {
        let entry = entry.map_err(|e| io_err(root, e))?;
        if entry.path().is_dir() && entry.path().join("meta.json").exists() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    let mut records = Vec::with_capacity(dirs.len());
    for dir in dirs {
        records.push(load_basin(&dir)?);
    }
    records.sort_by(|a, b| a.gauge_id.cmp(&b.gauge_id));
    Ok(records)
}

fn write_series_csv(
    path: &Path,
    axis: &CalendarAxis,
    columns: &[String],
    values: &[&[Option<f64>]],
) -> Result<(), DataError> {
    let mut out = String::new();
    out.push_str("date");
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for t in 0..axis.len() {
        out.push_str(&axis.date_at(t).to_string());
        for col in values {
            out.push(',');
            if let Some(v) = col[t] {
                out.push_str(&format!("{v}"));
            }
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

/// Write a basin directory in the layout [`load_basin`] reads.
pub fn write_basin(record: &BasinRecord, dir: &Path) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let meta = MetaFile {
        gauge_id: record.gauge_id.clone(),
        drainage_area_reported_km2: record.area_reported_km2,
        drainage_area_polygon_km2: record.area_polygon_km2,
        continent: record.continent.clone(),
        climate_zone: record.climate_zone.clone(),
        terminal_basin_id: record.terminal_basin_id.clone(),
    };
    let meta_path = dir.join("meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).unwrap())
        .map_err(|e| io_err(&meta_path, e))?;

    let attr_path = dir.join("attributes.json");
    std::fs::write(
        &attr_path,
        serde_json::to_string_pretty(&record.attributes).unwrap(),
    )
    .map_err(|e| io_err(&attr_path, e))?;

    write_series_csv(
        &dir.join("discharge.csv"),
        &record.axis,
        &["q_mmday".to_owned()],
        &[&record.discharge_mmday],
    )?;
    for source in &record.forcings {
        let cols: Vec<&[Option<f64>]> = source.columns.iter().map(|c| c.as_slice()).collect();
        write_series_csv(
            &dir.join(format!("forcings_{}.csv", source.name)),
            &record.axis,
            &source.variables,
            &cols,
        )?;
    }
    Ok(())
}

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::TrendSurface;
use crate::inference::{LatentTrajectory, Observation};
use crate::model::{Forcing, MeasurementType};

use super::DataError;

pub(crate) const PLOTS_HEADER: [&str; 5] = ["id", "treatment", "area", "x", "y"];
pub(crate) const FORCING_HEADER: [&str; 5] = ["plot_id", "month", "P", "M", "rate_mod"];
pub(crate) const OBS_HEADER: [&str; 4] = ["plot_id", "month", "type", "value"];

/// One row of the plot table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRecord {
    pub id: String,
    pub treatment: String,
    pub area: f64,
    pub x: f64,
    pub y: f64,
}

/// One row of the observation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRow {
    pub plot_id: String,
    pub observation: Observation,
}

type Rows = Vec<(u64, csv::StringRecord)>;

fn read_rows(path: &Path, header: &[&str]) -> Result<Rows, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let found = reader.headers().map_err(|e| DataError::io(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(DataError::Header {
            path: path.to_path_buf(),
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            DataError::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, k: usize, name: &str) -> Result<T, DataError>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(k).ok_or_else(|| DataError::parse(path, line, format!("missing column `{name}`")))?;
    raw.parse().map_err(|e| DataError::parse(path, line, format!("column `{name}` = `{raw}`: {e}")))
}

fn finite(path: &Path, line: u64, name: &str, v: f64) -> Result<f64, DataError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DataError::parse(path, line, format!("column `{name}` must be finite")))
    }
}

fn check_id(path: &Path, line: u64, id: &str) -> Result<(), DataError> {
    if id.is_empty() || id.contains(['[', ']', ',', '"']) {
        return Err(DataError::parse(path, line, format!("plot id `{id}` must be nonempty without brackets, commas or quotes")));
    }
    Ok(())
}

pub fn read_plots(path: &Path) -> Result<Vec<PlotRecord>, DataError> {
    let mut out: Vec<PlotRecord> = Vec::new();
    for (line, rec) in read_rows(path, &PLOTS_HEADER)? {
        let id: String = field(path, line, &rec, 0, "id")?;
        check_id(path, line, &id)?;
        if out.iter().any(|p| p.id == id) {
            return Err(DataError::parse(path, line, format!("duplicate plot id `{id}`")));
        }
        let area = finite(path, line, "area", field(path, line, &rec, 2, "area")?)?;
        if area <= 0.0 {
            return Err(DataError::parse(path, line, format!("area must be positive, got {area}")));
        }
        let treatment: String = field(path, line, &rec, 1, "treatment")?;
        if treatment.is_empty() || treatment.contains(['[', ']', ',', '"']) {
            return Err(DataError::parse(path, line, format!("invalid treatment label `{treatment}`")));
        }
        out.push(PlotRecord {
            id,
            treatment,
            area,
            x: finite(path, line, "x", field(path, line, &rec, 3, "x")?)?,
            y: finite(path, line, "y", field(path, line, &rec, 4, "y")?)?,
        });
    }
    if out.is_empty() {
        return Err(DataError::invalid(path, "plot table is empty"));
    }
    Ok(out)
}

/// Forcing per plot id, months `1..=T` in order. `dt` applies to every row.
pub fn read_forcing(path: &Path, plots: &[PlotRecord], dt: f64) -> Result<BTreeMap<String, Vec<Forcing<f64>>>, DataError> {
    let mut rows: BTreeMap<String, BTreeMap<usize, (u64, Forcing<f64>)>> = BTreeMap::new();
    for (line, rec) in read_rows(path, &FORCING_HEADER)? {
        let id: String = field(path, line, &rec, 0, "plot_id")?;
        if !plots.iter().any(|p| p.id == id) {
            return Err(DataError::UnknownPlot { path: path.to_path_buf(), line, id });
        }
        let month: usize = field(path, line, &rec, 1, "month")?;
        let forcing = Forcing {
            p: field(path, line, &rec, 2, "P")?,
            m: field(path, line, &rec, 3, "M")?,
            rate_mod: field(path, line, &rec, 4, "rate_mod")?,
            dt,
        };
        forcing.validate().map_err(|e| DataError::parse(path, line, e.to_string()))?;
        if month == 0 {
            return Err(DataError::parse(path, line, "forcing months start at 1"));
        }
        if rows.entry(id.clone()).or_default().insert(month, (line, forcing)).is_some() {
            return Err(DataError::parse(path, line, format!("duplicate forcing for plot `{id}` month {month}")));
        }
    }
    let mut out = BTreeMap::new();
    for plot in plots {
        let months = rows
            .remove(&plot.id)
            .ok_or_else(|| DataError::invalid(path, format!("no forcing rows for plot `{}`", plot.id)))?;
        let mut seq = Vec::with_capacity(months.len());
        for (expect, (month, (line, f))) in (1..).zip(months) {
            if month != expect {
                return Err(DataError::parse(path, line, format!("plot `{}` is missing forcing for month {expect}", plot.id)));
            }
            seq.push(f);
        }
        out.insert(plot.id.clone(), seq);
    }
    Ok(out)
}

/// Observations in file order. Months are checked against each plot's
/// horizon when the experiment is assembled.
pub fn read_observations(path: &Path, plots: &[PlotRecord]) -> Result<Vec<(u64, ObservationRow)>, DataError> {
    let mut out = Vec::new();
    for (line, rec) in read_rows(path, &OBS_HEADER)? {
        let plot_id: String = field(path, line, &rec, 0, "plot_id")?;
        if !plots.iter().any(|p| p.id == plot_id) {
            return Err(DataError::UnknownPlot { path: path.to_path_buf(), line, id: plot_id });
        }
        let month: usize = field(path, line, &rec, 1, "month")?;
        let kind: MeasurementType = field(path, line, &rec, 2, "type")?;
        let value: f64 = field(path, line, &rec, 3, "value")?;
        if !(value > 0.0) || !value.is_finite() {
            return Err(DataError::NonPositiveObservation { path: path.to_path_buf(), line, value });
        }
        out.push((line, ObservationRow { plot_id, observation: Observation { month, kind, value } }));
    }
    Ok(out)
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<(), DataError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::io(path, e))?;
    w.write_record(header).map_err(|e| DataError::io(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| DataError::io(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

pub fn write_plots(path: &Path, plots: &[PlotRecord]) -> Result<(), DataError> {
    let rows = plots.iter().map(|p| {
        vec![p.id.clone(), p.treatment.clone(), p.area.to_string(), p.x.to_string(), p.y.to_string()]
    });
    write_rows(path, &PLOTS_HEADER, rows)
}

/// Writes forcing in plot-table order.
pub fn write_forcing(path: &Path, plots: &[PlotRecord], forcing: &BTreeMap<String, Vec<Forcing<f64>>>) -> Result<(), DataError> {
    let mut rows = Vec::new();
    for plot in plots {
        let seq = forcing.get(&plot.id).ok_or_else(|| DataError::invalid(path, format!("no forcing for `{}`", plot.id)))?;
        for (k, f) in seq.iter().enumerate() {
            rows.push(vec![plot.id.clone(), (k + 1).to_string(), f.p.to_string(), f.m.to_string(), f.rate_mod.to_string()]);
        }
    }
    write_rows(path, &FORCING_HEADER, rows)
}

pub fn write_observations(path: &Path, obs: &[ObservationRow]) -> Result<(), DataError> {
    let rows = obs.iter().map(|o| {
        let ob = &o.observation;
        vec![o.plot_id.clone(), ob.month.to_string(), ob.kind.to_string(), ob.value.to_string()]
    });
    write_rows(path, &OBS_HEADER, rows)
}

/// Pool time series: `plot_id,month,D,R,F,S,H,I,TOC,POC,ROC`.
pub fn write_trajectories(path: &Path, trajs: &[(String, LatentTrajectory)]) -> Result<(), DataError> {
    let header = ["plot_id", "month", "D", "R", "F", "S", "H", "I", "TOC", "POC", "ROC"];
    let mut rows = Vec::new();
    for (id, traj) in trajs {
        for (t, s) in traj.states.iter().enumerate() {
            let fr = crate::model::observe_map(s);
            let mut row = vec![id.clone(), t.to_string()];
            row.extend(s.to_array().iter().map(|v| v.to_string()));
            row.extend([fr.toc, fr.poc, fr.roc].iter().map(|v| v.to_string()));
            rows.push(row);
        }
    }
    write_rows(path, &header, rows)
}

/// Residual-pair table with columns `d,sq_diff,rootabs_diff,type`.
pub fn write_trend_table(path: &Path, surface: &TrendSurface) -> Result<(), DataError> {
    let rows = surface.pairs.iter().map(|p| {
        vec![p.d.to_string(), p.sq_diff.to_string(), p.rootabs_diff.to_string(), p.kind.to_string()]
    });
    write_rows(path, &["d", "sq_diff", "rootabs_diff", "type"], rows)
}

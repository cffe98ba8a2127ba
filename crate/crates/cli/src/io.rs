//! File formats.
//!
//! CSV: header `t,mx,my,mz` with an optional trailing `purity` column, one
//! sample per line, seconds, `.` decimal point, LF endings. JSON documents
//! carry `schema_version` and the same columns as arrays.

use std::fs;
use std::io::Write;
use std::path::Path;

use nhbloch::{BlochVector, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: &str = "1";
pub const CSV_COLUMNS: [&str; 4] = ["t", "mx", "my", "mz"];

/// Provenance of a simulated table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationInfo {
    pub model: String,
    pub preset: String,
    /// `(omega_x, omega_y, omega_z)`, rad/s.
    pub field: [f64; 3],
    pub delta: Option<f64>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub noise: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDoc {
    pub schema_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationInfo>,
    pub t: Vec<f64>,
    pub mx: Vec<f64>,
    pub my: Vec<f64>,
    pub mz: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purity: Option<Vec<f64>>,
}

impl TrajectoryDoc {
    pub fn new(traj: &Trajectory, purity: Option<Vec<f64>>, simulation: Option<SimulationInfo>) -> Self {
        let s = traj.states();
        Self {
            schema_version: SCHEMA_VERSION.into(),
            simulation,
            t: traj.times().to_vec(),
            mx: s.iter().map(|r| r.x).collect(),
            my: s.iter().map(|r| r.y).collect(),
            mz: s.iter().map(|r| r.z).collect(),
            purity,
        }
    }

    pub fn to_trajectory(&self) -> CliResult<Trajectory> {
        let n = self.t.len();
        if self.mx.len() != n || self.my.len() != n || self.mz.len() != n {
            return Err(CliError::Parse("JSON columns have different lengths".into()));
        }
        let states = (0..n).map(|i| BlochVector::new(self.mx[i], self.my[i], self.mz[i])).collect();
        Trajectory::new(self.t.clone(), states).map_err(|e| CliError::Parse(e.to_string()))
    }
}

pub fn csv_bytes(traj: &Trajectory, purity: Option<&[f64]>) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    if purity.is_some() {
        header.push("purity");
    }
    let io_err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&header).map_err(io_err)?;
    for (i, (t, r)) in traj.iter().enumerate() {
        let mut row = vec![t.to_string(), r.x.to_string(), r.y.to_string(), r.z.to_string()];
        if let Some(p) = purity {
            row.push(p[i].to_string());
        }
        w.write_record(&row).map_err(io_err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Parses the CSV contract; errors name the offending line.
pub fn parse_csv(text: &str) -> CliResult<Trajectory> {
    if text.trim().is_empty() {
        return Err(CliError::Parse("empty file".into()));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CliError::Parse(format!("line 1: {e}")))?.clone();
    let names: Vec<&str> = header.iter().collect();
    let valid = names[..] == CSV_COLUMNS || names[..] == ["t", "mx", "my", "mz", "purity"];
    if !valid {
        return Err(CliError::Parse(format!("line 1: expected header `t,mx,my,mz[,purity]`, found `{}`", names.join(","))));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Parse(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut vals = [0.0; 4];
        for (k, v) in vals.iter_mut().enumerate() {
            let field = &record[k];
            *v = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Parse(format!("line {line}: column {} is not a finite number: `{field}`", CSV_COLUMNS[k])))?;
        }
        times.push(vals[0]);
        states.push(BlochVector::new(vals[1], vals[2], vals[3]));
    }
    if times.is_empty() {
        return Err(CliError::Parse("no samples after the header".into()));
    }
    Trajectory::new(times, states).map_err(|e| CliError::Parse(e.to_string()))
}

/// Reads a CSV table, or a JSON trajectory when the extension is `.json`.
pub fn read_table(path: &Path) -> CliResult<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str::<TrajectoryDoc>(&text)
            .map_err(|e| CliError::Parse(format!("line {}: {e}", e.line())))
            .and_then(|doc| doc.to_trajectory())
    } else {
        parse_csv(&text)
    };
    parsed.map_err(|e| match e {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file. `None` or `-` means `stdout`.
pub fn write_output(path: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> CliResult<()> {
    let io_err = |e: std::io::Error| CliError::Io(e.to_string());
    match path {
        None => stdout.write_all(bytes).map_err(io_err),
        Some(p) if p.as_os_str() == "-" => stdout.write_all(bytes).map_err(io_err),
        Some(p) => {
            let dir = match p.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp =
                tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            tmp.write_all(bytes).map_err(io_err)?;
            tmp.persist(p).map_err(|e| CliError::Io(format!("{}: {}", p.display(), e.error)))?;
            Ok(())
        }
    }
}

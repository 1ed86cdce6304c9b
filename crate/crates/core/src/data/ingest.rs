use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ParseIssue;
use crate::{Error, Result};

pub const MPH_TO_MPS: f64 = 0.44704;
const KMH_TO_MPS: f64 = 1.0 / 3.6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedUnit {
    #[default]
    #[serde(rename = "m/s")]
    MetersPerSecond,
    #[serde(rename = "mph")]
    MilesPerHour,
    #[serde(rename = "km/h")]
    KilometersPerHour,
}

impl SpeedUnit {
    pub fn to_si(self) -> f64 {
        match self {
            SpeedUnit::MetersPerSecond => 1.0,
            SpeedUnit::MilesPerHour => MPH_TO_MPS,
            SpeedUnit::KilometersPerHour => KMH_TO_MPS,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LengthUnit {
    #[default]
    #[serde(rename = "m")]
    Meters,
    #[serde(rename = "km")]
    Kilometers,
    #[serde(rename = "mi")]
    Miles,
}

impl LengthUnit {
    pub fn to_si(self) -> f64 {
        match self {
            LengthUnit::Meters => 1.0,
            LengthUnit::Kilometers => 1000.0,
            LengthUnit::Miles => 1609.344,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeUnit {
    #[default]
    #[serde(rename = "s")]
    Seconds,
    #[serde(rename = "min")]
    Minutes,
    #[serde(rename = "h")]
    Hours,
}

impl TimeUnit {
    pub fn to_si(self) -> f64 {
        match self {
            TimeUnit::Seconds => 1.0,
            TimeUnit::Minutes => 60.0,
            TimeUnit::Hours => 3600.0,
        }
    }
}

/// Contents of the JSON sidecar that accompanies a measurement file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitDeclaration {
    pub time: TimeUnit,
    pub position: LengthUnit,
    pub speed: SpeedUnit,
    /// Flow is vehicles per this unit of time.
    pub flow_per: TimeUnit,
    /// Length of the study section in `position` units; defaults to the
    /// span of the observed positions.
    pub section_length: Option<f64>,
    /// Scale density and speed by their observed maxima. Turn off for
    /// data that is already dimensionless.
    pub rescale: bool,
}

impl Default for UnitDeclaration {
    fn default() -> Self {
        Self {
            time: TimeUnit::Seconds,
            position: LengthUnit::Meters,
            speed: SpeedUnit::MetersPerSecond,
            flow_per: TimeUnit::Hours,
            section_length: None,
            rescale: true,
        }
    }
}

impl UnitDeclaration {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// `data.csv` → `data.units.json`
    pub fn sidecar_path(csv: &Path) -> std::path::PathBuf {
        csv.with_extension("units.json")
    }
}

/// One row in SI units: seconds, meters, m/s, vehicles per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub t: f64,
    pub x: f64,
    pub speed: f64,
    pub flow: f64,
}

/// Measurements sorted by `(t, x)` with SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMeasurementTable {
    pub rows: Vec<Measurement>,
    /// Section length in meters, when declared.
    pub section_length: Option<f64>,
    pub rescale: bool,
}

const COLUMNS: [&str; 4] = ["t", "x", "speed", "flow"];

/// Read a `t,x,speed,flow` table and convert it to SI units. All problems in
/// the file are reported together.
pub fn ingest_csv(path: &Path, units: &UnitDeclaration) -> Result<RawMeasurementTable> {
    let file = std::fs::File::open(path)?;
    read_measurements(file, units).map_err(|e| match e {
        Error::Parse { issues, .. } => Error::Parse {
            path: path.to_path_buf(),
            issues,
        },
        other => other,
    })
}

/// [`ingest_csv`] over any reader.
pub fn read_measurements<R: std::io::Read>(input: R, units: &UnitDeclaration) -> Result<RawMeasurementTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers()?.clone();
    let mut idx = [0usize; 4];
    let mut issues = Vec::new();
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        match header.iter().position(|h| h.eq_ignore_ascii_case(name)) {
            Some(i) => *slot = i,
            None => issues.push(ParseIssue {
                line: 1,
                message: format!("missing column `{name}`"),
            }),
        }
    }
    if !issues.is_empty() {
        return Err(parse_error(issues));
    }
    if let Some(l) = units.section_length {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::param("section_length", format!("must be positive, got {l}")));
        }
    }

    let speed_si = units.speed.to_si();
    let flow_si = 1.0 / units.flow_per.to_si();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                issues.push(ParseIssue {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let mut vals = [0.0; 4];
        let mut ok = true;
        for (k, name) in COLUMNS.iter().enumerate() {
            let cell = record.get(idx[k]).unwrap_or("");
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => vals[k] = v,
                _ => {
                    issues.push(ParseIssue {
                        line,
                        message: format!("column `{name}`: `{cell}` is not a finite number"),
                    });
                    ok = false;
                }
            }
        }
        if !ok {
            continue;
        }
        for (k, name) in [(2, "speed"), (3, "flow")] {
            if vals[k] < 0.0 {
                issues.push(ParseIssue {
                    line,
                    message: format!("negative {name} {}", vals[k]),
                });
                ok = false;
            }
        }
        if ok {
            rows.push(Measurement {
                t: vals[0] * units.time.to_si(),
                x: vals[1] * units.position.to_si(),
                speed: vals[2] * speed_si,
                flow: vals[3] * flow_si,
            });
            lines.push(line);
        }
    }

    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    for (row, &line) in rows.iter().zip(&lines) {
        if let Some(first) = seen.insert((row.t.to_bits(), row.x.to_bits()), line) {
            issues.push(ParseIssue {
                line,
                message: format!("duplicate (t, x) = ({}, {}) first seen on line {first}", row.t, row.x),
            });
        }
    }
    if rows.is_empty() && issues.is_empty() {
        issues.push(ParseIssue {
            line: 1,
            message: "no data rows".into(),
        });
    }
    if !issues.is_empty() {
        issues.sort_by_key(|i| i.line);
        return Err(parse_error(issues));
    }
    rows.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.x.total_cmp(&b.x)));
    Ok(RawMeasurementTable {
        rows,
        section_length: units.section_length.map(|l| l * units.position.to_si()),
        rescale: units.rescale,
    })
}

fn parse_error(issues: Vec<ParseIssue>) -> Error {
    Error::Parse {
        path: "<input>".into(),
        issues,
    }
}

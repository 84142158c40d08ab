//! On-disk dataset formats.
//!
//! * Portable binary: a JSON manifest plus a little-endian `f32` payload laid
//!   out as contiguous row-major blocks `[states][actions][rewards][next_states]`.
//! * CSV: header `s0..,a0..,r,ns0..,episode_start` with an optional
//!   `<stem>.meta.json` sidecar carrying [`DatasetMeta`] fields.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetMeta, DatasetParts};
use crate::error::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    PortableBinary,
    Csv,
}

impl DatasetFormat {
    /// `.csv` selects CSV, anything else is treated as a portable manifest.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::PortableBinary,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub n_transitions: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub episode_starts: Vec<usize>,
    #[serde(flatten)]
    pub meta: DatasetMeta,
    /// Payload path, relative to the manifest's directory.
    pub data_file: String,
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset, DatasetError> {
    match format {
        DatasetFormat::PortableBinary => load_portable(path),
        DatasetFormat::Csv => load_csv(path),
    }
}

pub fn load_portable(manifest_path: &Path) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| DatasetError::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|source| DatasetError::Manifest {
            path: manifest_path.to_path_buf(),
            source,
        })?;
    let data_path = sibling(manifest_path, &manifest.data_file);
    let bytes = fs::read(&data_path).map_err(|e| DatasetError::io(&data_path, e))?;

    let (n, ds, da) = (
        manifest.n_transitions,
        manifest.state_dim,
        manifest.action_dim,
    );
    if ds == 0 || da == 0 || n == 0 {
        return Err(DatasetError::MalformedHeader(format!(
            "manifest declares n_transitions={n}, state_dim={ds}, action_dim={da}; all must be >= 1"
        )));
    }
    let expected = n * (2 * ds + da + 1);
    if bytes.len() % 4 != 0 || bytes.len() / 4 != expected {
        return Err(DatasetError::DimensionMismatch {
            field: format!("data_file {} (f32 values)", data_path.display()),
            expected,
            found: bytes.len() / 4,
        });
    }
    let mut floats = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut take = |count: usize| floats.by_ref().take(count).collect::<Vec<f32>>();
    let states = take(n * ds);
    let actions = take(n * da);
    let rewards = take(n);
    let next_states = take(n * ds);

    Dataset::new(DatasetParts {
        name: manifest.name,
        state_dim: ds,
        action_dim: da,
        states,
        actions,
        rewards,
        next_states,
        episode_starts: manifest.episode_starts,
        meta: manifest.meta,
    })
}

/// Writes `manifest_path` and a `<stem>.bin` payload next to it.
pub fn save_portable(dataset: &Dataset, manifest_path: &Path) -> Result<(), DatasetError> {
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    let data_file = format!("{stem}.bin");
    let manifest = Manifest {
        name: dataset.name().to_string(),
        n_transitions: dataset.n_transitions(),
        state_dim: dataset.state_dim(),
        action_dim: dataset.action_dim(),
        episode_starts: dataset.episode_starts().to_vec(),
        meta: dataset.meta().clone(),
        data_file: data_file.clone(),
    };
    let mut payload = Vec::with_capacity(
        4 * dataset.n_transitions() * (2 * dataset.state_dim() + dataset.action_dim() + 1),
    );
    for block in [
        dataset.states(),
        dataset.actions(),
        dataset.rewards(),
        dataset.next_states(),
    ] {
        for v in block {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let data_path = sibling(manifest_path, &data_file);
    fs::write(&data_path, payload).map_err(|e| DatasetError::io(&data_path, e))?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(manifest_path, json).map_err(|e| DatasetError::io(manifest_path, e))
}

#[derive(Debug, Deserialize, Serialize)]
struct Sidecar {
    #[serde(default)]
    name: Option<String>,
    #[serde(flatten)]
    meta: DatasetMeta,
}

/// `data.csv` -> `data.meta.json`
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    sibling(csv_path, &format!("{stem}.meta.json"))
}

pub fn load_csv(path: &Path) -> Result<Dataset, DatasetError> {
    let sidecar_file = sidecar_path(path);
    let sidecar = if sidecar_file.exists() {
        let text =
            fs::read_to_string(&sidecar_file).map_err(|e| DatasetError::io(&sidecar_file, e))?;
        serde_json::from_str::<Sidecar>(&text).map_err(|source| DatasetError::Manifest {
            path: sidecar_file.clone(),
            source,
        })?
    } else {
        Sidecar {
            name: None,
            meta: DatasetMeta::default(),
        }
    };
    let name = sidecar.name.unwrap_or_else(|| {
        path.file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("dataset")
            .to_string()
    });

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let headers = reader.headers().map_err(|e| csv_io(path, e))?.clone();
    let (ds, da) = parse_header(&headers)?;
    let width = 2 * ds + da + 2;

    let mut parts = DatasetParts {
        name,
        state_dim: ds,
        action_dim: da,
        meta: sidecar.meta,
        ..Default::default()
    };
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_io(path, e))?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(row as u64 + 2);
        if record.len() != width {
            return Err(DatasetError::MalformedRecord {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let mut values = Vec::with_capacity(width - 1);
        for (col, field) in record.iter().take(width - 1).enumerate() {
            let v: f32 = field.parse().map_err(|_| DatasetError::MalformedRecord {
                line,
                message: format!("column {} ({field:?}) is not a number", &headers[col]),
            })?;
            values.push(v);
        }
        parts.states.extend_from_slice(&values[..ds]);
        parts.actions.extend_from_slice(&values[ds..ds + da]);
        parts.rewards.push(values[ds + da]);
        parts.next_states.extend_from_slice(&values[ds + da + 1..]);
        match record.get(width - 1) {
            Some("1") => parts.episode_starts.push(row),
            Some("0") => {}
            other => {
                return Err(DatasetError::MalformedRecord {
                    line,
                    message: format!("episode_start must be 0 or 1, found {other:?}"),
                })
            }
        }
    }
    if parts.rewards.is_empty() {
        return Err(DatasetError::Empty("CSV file has no rows"));
    }
    Dataset::new(parts)
}

/// Writes the CSV file and its `.meta.json` sidecar.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let (ds, da) = (dataset.state_dim(), dataset.action_dim());
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let header: Vec<String> = (0..ds)
        .map(|k| format!("s{k}"))
        .chain((0..da).map(|k| format!("a{k}")))
        .chain(std::iter::once("r".to_string()))
        .chain((0..ds).map(|k| format!("ns{k}")))
        .chain(std::iter::once("episode_start".to_string()))
        .collect();
    writer.write_record(&header).map_err(|e| csv_io(path, e))?;
    let starts = dataset.episode_starts();
    let mut next_start = 0;
    for i in 0..dataset.n_transitions() {
        let is_start = next_start < starts.len() && starts[next_start] == i;
        if is_start {
            next_start += 1;
        }
        let row: Vec<String> = dataset
            .state(i)
            .iter()
            .chain(dataset.action(i))
            .chain(std::iter::once(&dataset.rewards()[i]))
            .chain(&dataset.next_states()[i * ds..(i + 1) * ds])
            .map(|v| v.to_string())
            .chain(std::iter::once(
                if is_start { "1" } else { "0" }.to_string(),
            ))
            .collect();
        writer.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    writer.flush().map_err(|e| DatasetError::io(path, e))?;
    let sidecar = Sidecar {
        name: Some(dataset.name().to_string()),
        meta: dataset.meta().clone(),
    };
    let sidecar_file = sidecar_path(path);
    fs::write(
        &sidecar_file,
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )
    .map_err(|e| DatasetError::io(&sidecar_file, e))
}

fn parse_header(headers: &csv::StringRecord) -> Result<(usize, usize), DatasetError> {
    let cols: Vec<&str> = headers.iter().collect();
    let count = |prefix: &str, from: usize| {
        cols[from..]
            .iter()
            .enumerate()
            .take_while(|(k, c)| **c == format!("{prefix}{k}"))
            .count()
    };
    let ds = count("s", 0);
    let da = count("a", ds);
    let expected: Vec<String> = (0..ds)
        .map(|k| format!("s{k}"))
        .chain((0..da).map(|k| format!("a{k}")))
        .chain(std::iter::once("r".into()))
        .chain((0..ds).map(|k| format!("ns{k}")))
        .chain(std::iter::once("episode_start".into()))
        .collect();
    if ds == 0
        || da == 0
        || cols.len() != expected.len()
        || cols.iter().zip(&expected).any(|(a, b)| a != b)
    {
        return Err(DatasetError::MalformedHeader(format!(
            "expected `s0..s{{ds-1}},a0..a{{da-1}},r,ns0..ns{{ds-1}},episode_start`, found `{}`",
            cols.join(",")
        )));
    }
    Ok((ds, da))
}

fn csv_io(path: &Path, e: csv::Error) -> DatasetError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DatasetError::io(path, io),
        other => DatasetError::MalformedRecord {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn sibling(base: &Path, file: &str) -> PathBuf {
    match base.parent() {
        Some(dir) => dir.join(file),
        None => PathBuf::from(file),
    }
}

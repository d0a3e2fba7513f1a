//! On-disk formats.
//!
//! - Dataset CSV: header `k,u1,…,uNu,y1,…,yNy`, one row per sample, `k`
//!   counting from 1.
//! - Model file: JSON document ([`ModelFile`]) holding the orders, layer
//!   specs, scalers and the flat parameter vector in packed layout (per layer:
//!   weights row-major, then biases).
//! - Training history CSV: `epoch,V,lambda,rho,accepted,wall_ms,predicted_flops`.
//!
//! Floats are written in Rust's shortest round-trip representation, so a
//! save/load cycle reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use nnsysid::dynmodel::{DynamicModel, ModelOrders, Scaling};
use nnsysid::lmsolver::EpochRecord;
use nnsysid::net::{FeedforwardNet, LayerSpec, NetStructure};
use nnsysid::{DMatrix, DVector, Dataset, TrainingMethod};

use crate::error::{CliError, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::parse(path, format!("{other:?}")),
    }
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["k".to_string()];
    header.extend((1..=data.n_inputs()).map(|i| format!("u{i}")));
    header.extend((1..=data.n_outputs()).map(|i| format!("y{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for k in 0..data.len() {
        let mut row = vec![(k + 1).to_string()];
        row.extend(data.u.row(k).iter().map(|v| v.to_string()));
        row.extend(data.y.row(k).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.get(0) != Some("k") {
        return Err(CliError::parse(path, "first column must be `k`"));
    }
    let mut n_u = 0;
    let mut n_y = 0;
    for (i, name) in header.iter().enumerate().skip(1) {
        let expected_u = format!("u{}", n_u + 1);
        let expected_y = format!("y{}", n_y + 1);
        if n_y == 0 && name == expected_u {
            n_u += 1;
        } else if name == expected_y {
            n_y += 1;
        } else {
            return Err(CliError::parse(
                path,
                format!(
                    "column {}: unexpected header `{name}` (expected k,u1..uNu,y1..yNy)",
                    i + 1
                ),
            ));
        }
    }
    if n_u == 0 || n_y == 0 {
        return Err(CliError::parse(path, "dataset needs at least one u and one y column"));
    }
    let mut u = Vec::new();
    let mut y = Vec::new();
    for (row_idx, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = row_idx + 2;
        if rec.len() != 1 + n_u + n_y {
            return Err(CliError::parse(
                path,
                format!("row {row}: expected {} fields, found {}", 1 + n_u + n_y, rec.len()),
            ));
        }
        for (col, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field.parse().map_err(|_| {
                CliError::parse(path, format!("row {row}, column {}: invalid number `{field}`", col + 1))
            })?;
            if col <= n_u {
                u.push(v);
            } else {
                y.push(v);
            }
        }
    }
    let n = u.len() / n_u;
    if n == 0 {
        return Err(CliError::parse(path, "dataset has no samples"));
    }
    Ok(Dataset::new(
        DMatrix::from_row_slice(n, n_u, &u),
        DMatrix::from_row_slice(n, n_y, &y),
        None,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub method: TrainingMethod,
    pub epochs: usize,
    pub seed: u64,
    pub final_objective: Option<f64>,
}

/// Serialized [`DynamicModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub orders: ModelOrders,
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
    pub scaling: Scaling,
    /// Packed Θ.
    pub params: Vec<f64>,
    /// Estimated initial conditions (network units), if trained with them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_conditions: Option<Vec<f64>>,
    pub training: Option<TrainingMeta>,
}

impl ModelFile {
    pub fn from_model(
        model: &DynamicModel,
        initial_conditions: Option<&DVector<f64>>,
        training: Option<TrainingMeta>,
    ) -> Self {
        let structure = model.net.structure();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            orders: model.orders,
            input_size: structure.input_size,
            layers: structure.layers,
            scaling: model.scaling.clone(),
            params: model.net.pack_params().as_slice().to_vec(),
            initial_conditions: initial_conditions.map(|v| v.as_slice().to_vec()),
            training,
        }
    }

    pub fn to_model(&self) -> nnsysid::Result<DynamicModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(nnsysid::Error::Data(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let structure = NetStructure::new(self.input_size, self.layers.clone())?;
        let net = FeedforwardNet::unpack_params(&self.params, &structure)?;
        DynamicModel::new(net, self.orders, self.scaling.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| CliError::parse(path, e.to_string()))?;
        w.write_all(b"\n")
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.to_string()))
    }
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "V", "lambda", "rho", "accepted", "wall_ms", "predicted_flops"])
        .map_err(|e| csv_err(path, e))?;
    for r in history {
        w.write_record(&[
            r.epoch.to_string(),
            r.objective.to_string(),
            r.lambda.to_string(),
            r.rho.to_string(),
            (r.accepted as u8).to_string(),
            format!("{:.3}", r.wall_ms),
            r.predicted_flops.map(|f| f.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::parse(path, e.to_string()))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

/// Writes rows of pre-formatted fields under `header`.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

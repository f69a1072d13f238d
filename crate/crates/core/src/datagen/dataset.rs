use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FlowOracle, SamplingConfig, Split};
use crate::error::{shape_err, Error, Result};
use crate::grid::TopologyVector;
use crate::nn::Tensor2;
use crate::powerflow::InjectionSample;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Reference,
    Unary,
    Double,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub x: usize,
    pub tau: usize,
    pub y: usize,
}

/// First line of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub grid: String,
    pub dict_hash: String,
    pub dims: Dims,
    pub split: Split,
    pub seed: u64,
    pub config: SamplingConfig,
    /// Dictionary indices of the unary actions seen in the source domain.
    pub unary_actions: Vec<usize>,
    /// Action pairs of the target domain (empty for source files).
    pub double_actions: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub x: Vec<f64>,
    pub tau: TopologyVector,
    pub y: Vec<f64>,
    pub tag: DomainTag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub rows: Vec<DatasetRow>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for row in &self.rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    /// Parses a JSONL dataset and checks every row against the header dims.
    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let first = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))??;
        let header: DatasetHeader =
            serde_json::from_str(&first).map_err(|e| Error::Parse(format!("dataset header: {e}")))?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "dataset schema version {} is not supported (expected {SCHEMA_VERSION})",
                header.schema_version
            )));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = n + 2;
            let row: DatasetRow =
                serde_json::from_str(&line).map_err(|e| Error::Parse(format!("dataset line {lineno}: {e}")))?;
            let d = header.dims;
            if row.x.len() != d.x || row.tau.len() != d.tau || row.y.len() != d.y {
                return Err(shape_err!(
                    "dataset line {lineno}: row dims ({}, {}, {}) differ from header ({}, {}, {})",
                    row.x.len(),
                    row.tau.len(),
                    row.y.len(),
                    d.x,
                    d.tau,
                    d.y
                ));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }

    /// `(x, tau, y)` as row-stacked matrices.
    pub fn tensors(&self) -> (Tensor2, Tensor2, Tensor2) {
        let d = self.header.dims;
        let n = self.rows.len();
        let x = self.rows.iter().flat_map(|r| r.x.iter().copied()).collect();
        let tau = self.rows.iter().flat_map(|r| r.tau.as_f64()).collect();
        let y = self.rows.iter().flat_map(|r| r.y.iter().copied()).collect();
        (
            Tensor2::from_vec(n, d.x, x).expect("rows checked against dims"),
            Tensor2::from_vec(n, d.tau, tau).expect("rows checked against dims"),
            Tensor2::from_vec(n, d.y, y).expect("rows checked against dims"),
        )
    }

    /// Largest absolute difference between stored targets and a fresh oracle
    /// call for the given rows.
    pub fn replay(&self, oracle: &dyn FlowOracle, rows: &[usize]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for &i in rows {
            let row = self.rows.get(i).ok_or_else(|| Error::Precondition(format!("row {i} out of range")))?;
            let x = InjectionSample::from_active(oracle.grid(), row.x.clone())?;
            let y = oracle.flows(&row.tau, &x)?;
            for (a, b) in y.0.iter().zip(&row.y) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }
}

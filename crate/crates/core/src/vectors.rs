//! Per-asset vector tables and their CSV exchange format.
//!
//! The CSV layout is `asset_id,v0,...,v{d-1}` with a header row. Values are
//! written in Rust's shortest round-trip decimal form, so a write/read cycle
//! reproduces every `f64` bit-exactly.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A set of named assets with one fixed-length vector each, in a fixed row order.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetVectors {
    asset_ids: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Matrix,
}

impl AssetVectors {
    pub fn new(asset_ids: Vec<String>, matrix: Matrix) -> Result<Self> {
        if asset_ids.len() != matrix.rows() {
            return Err(Error::invalid(format!(
                "{} asset ids for {} vector rows",
                asset_ids.len(),
                matrix.rows()
            )));
        }
        let mut index = HashMap::with_capacity(asset_ids.len());
        for (i, id) in asset_ids.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::invalid("empty asset id in vector table"));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate asset id {id:?}")));
            }
        }
        if !matrix.is_finite() {
            return Err(Error::numerical("vector table contains non-finite entries"));
        }
        Ok(Self {
            asset_ids,
            index,
            matrix,
        })
    }

    pub fn len(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.asset_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn index_of(&self, asset_id: &str) -> Option<usize> {
        self.index.get(asset_id).copied()
    }

    pub fn get(&self, asset_id: &str) -> Option<&[f64]> {
        self.index_of(asset_id).map(|i| self.matrix.row(i))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = Vec::with_capacity(self.dim() + 1);
        header.push("asset_id".to_string());
        header.extend((0..self.dim()).map(|j| format!("v{j}")));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.dim() + 1);
        for (id, row) in self.asset_ids.iter().zip(self.matrix.iter_rows()) {
            record.clear();
            record.push(id.clone());
            record.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let header = r.headers()?.clone();
        if header.is_empty() || &header[0] != "asset_id" {
            return Err(Error::parse(1, "expected header starting with asset_id"));
        }
        let dim = header.len() - 1;
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for record in r.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != dim + 1 {
                return Err(Error::parse(
                    line,
                    format!("expected {} fields, found {}", dim + 1, record.len()),
                ));
            }
            ids.push(record[0].to_string());
            for field in record.iter().skip(1) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(line, format!("not a number: {field:?}")))?;
                data.push(v);
            }
        }
        let matrix = Matrix::from_vec(ids.len(), dim, data)?;
        Self::new(ids, matrix)
    }
}

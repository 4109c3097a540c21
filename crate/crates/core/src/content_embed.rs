//! Content representation: the mean of pretrained word vectors over an
//! asset's title and description tokens.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::vectors::AssetVectors;

/// Pretrained token vectors, all of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn new(dim: usize, vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("word vectors must have at least one dimension"));
        }
        for (token, v) in &vectors {
            if token.is_empty() {
                return Err(Error::invalid("empty token in word vector table"));
            }
            if v.len() != dim {
                return Err(Error::invalid(format!(
                    "token {token:?} has {} values, expected {dim}",
                    v.len()
                )));
            }
        }
        Ok(Self { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }
}

/// Reads the whitespace-separated text format: `token v1 ... vd` per line,
/// with an optional leading `count dim` header line.
pub fn load_word_vectors<R: Read>(reader: R) -> Result<WordVectorTable> {
    let mut dim: Option<usize> = None;
    let mut vectors = HashMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = i as u64 + 1;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let rest: Vec<&str> = fields.collect();
        if i == 0 && rest.len() == 1 && token.parse::<u64>().is_ok() && rest[0].parse::<u64>().is_ok() {
            continue;
        }
        let values = rest
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line_no, format!("bad vector component {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::parse(line_no, format!("token {token:?} has no vector")));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::parse(
                    line_no,
                    format!("expected {d} components, found {}", values.len()),
                ))
            }
            _ => {}
        }
        vectors.insert(token.to_string(), values);
    }
    match dim {
        Some(d) => WordVectorTable::new(d, vectors),
        None => Err(Error::invalid("word vector file has no entries")),
    }
}

/// Writes `token v1 ... vd` lines (no header) in the given order.
pub fn write_word_vectors<W: Write>(entries: &[(String, Vec<f64>)], mut writer: W) -> Result<()> {
    for (token, v) in entries {
        write!(writer, "{token}")?;
        for x in v {
            write!(writer, " {x}")?;
        }
        writeln!(writer)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentDocument {
    pub asset_id: String,
    pub title: String,
    pub description: String,
}

/// Content CSV: `asset_id,title,description`.
pub fn parse_content<R: Read>(reader: R) -> Result<Vec<ContentDocument>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::parse(
                line,
                format!("expected 3 fields, found {}", record.len()),
            ));
        }
        if record[0].is_empty() {
            return Err(Error::parse(line, "empty asset_id"));
        }
        out.push(ContentDocument {
            asset_id: record[0].to_string(),
            title: record[1].to_string(),
            description: record[2].to_string(),
        });
    }
    Ok(out)
}

pub fn write_content<W: Write>(docs: &[ContentDocument], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["asset_id", "title", "description"])?;
    for d in docs {
        w.write_record([&d.asset_id, &d.title, &d.description])?;
    }
    w.flush()?;
    Ok(())
}

/// Lowercases `title + " " + description` and splits on every maximal run of
/// characters that are neither alphanumeric nor `#`.
pub fn tokenize(title: &str, description: &str) -> Vec<String> {
    let text = format!("{title} {description}").to_lowercase();
    text.split(|c: char| !(c.is_alphanumeric() || c == '#'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Mean of the table vectors of every matched token (repeats counted), or the
/// zero vector when nothing matches.
pub fn embed_content(doc: &ContentDocument, table: &WordVectorTable) -> Vec<f64> {
    let mut sum = vec![0.0; table.dim()];
    let mut matched = 0usize;
    for token in tokenize(&doc.title, &doc.description) {
        if let Some(v) = table.get(&token) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            matched += 1;
        }
    }
    if matched > 0 {
        let inv = 1.0 / matched as f64;
        sum.iter_mut().for_each(|s| *s *= inv);
    }
    sum
}

/// Embeds every document; rows follow ascending asset id.
pub fn embed_documents(docs: &[ContentDocument], table: &WordVectorTable) -> Result<AssetVectors> {
    let mut sorted: Vec<&ContentDocument> = docs.iter().collect();
    sorted.sort_by(|a, b| a.asset_id.cmp(&b.asset_id));
    let rows: Vec<Vec<f64>> = sorted.iter().map(|d| embed_content(d, table)).collect();
    let ids = sorted.iter().map(|d| d.asset_id.clone()).collect();
    let matrix = if rows.is_empty() {
        Matrix::zeros(0, table.dim())
    } else {
        Matrix::from_rows(&rows)?
    };
    AssetVectors::new(ids, matrix)
}

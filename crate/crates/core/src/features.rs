//! Representation variants aligned over the labelled asset set.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{list_preview, Error, Result};
use crate::event_log::PopularityLabel;
use crate::matrix::{norm, Matrix};
use crate::vectors::AssetVectors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetType {
    CollabWb,
    Asset,
    SoloWb,
    Curated,
}

impl AssetType {
    pub const ALL: [AssetType; 4] = [
        AssetType::CollabWb,
        AssetType::Asset,
        AssetType::SoloWb,
        AssetType::Curated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AssetType::CollabWb => "collab_wb",
            AssetType::Asset => "asset",
            AssetType::SoloWb => "solo_wb",
            AssetType::Curated => "curated",
        }
    }

    fn one_hot_index(self) -> usize {
        match self {
            AssetType::CollabWb => 0,
            AssetType::Asset => 1,
            AssetType::SoloWb => 2,
            AssetType::Curated => 3,
        }
    }
}

impl FromStr for AssetType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AssetType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown asset type {s:?}")))
    }
}

/// Instructor-specified attributes of one asset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructorFeatures {
    pub asset_id: String,
    /// Academic value, 1-5.
    pub acad: u8,
    /// 1-5.
    pub creativity: u8,
    /// Days between the asset being added and its hashtag being assigned.
    pub day_asgmt: i64,
    pub title_len: u32,
    pub desc_len: u32,
    pub asset_type: AssetType,
}

impl InstructorFeatures {
    pub fn validate(&self) -> Result<()> {
        if self.asset_id.is_empty() {
            return Err(Error::invalid("empty asset_id"));
        }
        for (name, v) in [("acad", self.acad), ("creativity", self.creativity)] {
            if !(1..=5).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in 1..=5, got {v}")));
            }
        }
        Ok(())
    }
}

pub const INSTRUCTOR_COLUMNS: [&str; 7] = [
    "asset_id",
    "acad",
    "creativity",
    "day_asgmt",
    "title_len",
    "desc_len",
    "type",
];

/// Instructor CSV: `asset_id,acad,creativity,day_asgmt,title_len,desc_len,type`.
pub fn parse_instructor<R: Read>(reader: R) -> Result<Vec<InstructorFeatures>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 7 {
            return Err(Error::parse(
                line,
                format!("expected 7 fields, found {}", record.len()),
            ));
        }
        fn num<T: FromStr>(s: &str, name: &str, line: u64) -> Result<T> {
            s.trim()
                .parse()
                .map_err(|_| Error::parse(line, format!("bad {name} {s:?}")))
        }
        let f = InstructorFeatures {
            asset_id: record[0].to_string(),
            acad: num(&record[1], "acad", line)?,
            creativity: num(&record[2], "creativity", line)?,
            day_asgmt: num(&record[3], "day_asgmt", line)?,
            title_len: num(&record[4], "title_len", line)?,
            desc_len: num(&record[5], "desc_len", line)?,
            asset_type: record[6]
                .trim()
                .parse()
                .map_err(|e: Error| Error::parse(line, e.to_string()))?,
        };
        f.validate().map_err(|e| Error::parse(line, e.to_string()))?;
        out.push(f);
    }
    Ok(out)
}

pub fn write_instructor<W: Write>(features: &[InstructorFeatures], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(INSTRUCTOR_COLUMNS)?;
    for f in features {
        w.write_record([
            f.asset_id.clone(),
            f.acad.to_string(),
            f.creativity.to_string(),
            f.day_asgmt.to_string(),
            f.title_len.to_string(),
            f.desc_len.to_string(),
            f.asset_type.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `[acad, creativity, day_asgmt, title_len, desc_len, one-hot(type) x 4]`,
/// one-hot order collab_wb, asset, solo_wb, curated.
pub fn encode_instructor(f: &InstructorFeatures) -> [f64; 9] {
    let mut row = [0.0; 9];
    row[0] = f.acad as f64;
    row[1] = f.creativity as f64;
    row[2] = f.day_asgmt as f64;
    row[3] = f.title_len as f64;
    row[4] = f.desc_len as f64;
    row[5 + f.asset_type.one_hot_index()] = 1.0;
    row
}

/// Column means and population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub fn zscore_fit(train: &Matrix) -> Result<ZScore> {
    if train.rows() == 0 {
        return Err(Error::invalid("cannot fit z-scores on an empty matrix"));
    }
    let n = train.rows() as f64;
    let mut means = vec![0.0; train.cols()];
    for row in train.iter_rows() {
        for (m, x) in means.iter_mut().zip(row) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = vec![0.0; train.cols()];
    for row in train.iter_rows() {
        for ((v, x), m) in vars.iter_mut().zip(row).zip(&means) {
            *v += (x - m) * (x - m);
        }
    }
    let stds = vars.into_iter().map(|v| (v / n).sqrt()).collect();
    Ok(ZScore { means, stds })
}

/// `(x - mean) / std` per column; zero-variance columns map to 0.
pub fn zscore_apply(matrix: &Matrix, z: &ZScore) -> Result<Matrix> {
    if matrix.cols() != z.means.len() {
        return Err(Error::invalid(format!(
            "matrix has {} columns, z-score fit has {}",
            matrix.cols(),
            z.means.len()
        )));
    }
    let mut out = matrix.clone();
    for i in 0..out.rows() {
        for ((x, m), s) in out.row_mut(i).iter_mut().zip(&z.means).zip(&z.stds) {
            *x = if *s > 0.0 { (*x - m) / s } else { 0.0 };
        }
    }
    Ok(out)
}

/// `v / ||v||`, or `v` unchanged when it is the zero vector.
pub fn unit_normalize(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}

pub fn ensemble_concat(context: &[f64], content: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(context.len() + content.len());
    out.extend_from_slice(context);
    out.extend_from_slice(content);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Asset2vec,
    AvgContent,
    Ensemble,
    Instructor,
}

impl Representation {
    pub const ALL: [Representation; 4] = [
        Representation::Asset2vec,
        Representation::AvgContent,
        Representation::Ensemble,
        Representation::Instructor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Asset2vec => "asset2vec",
            Representation::AvgContent => "avg_content",
            Representation::Ensemble => "ensemble",
            Representation::Instructor => "instructor",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Representation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown representation {s:?}")))
    }
}

/// A feature matrix with aligned asset ids and popularity labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    pub name: Representation,
    pub asset_ids: Vec<String>,
    pub matrix: Matrix,
    pub labels: Vec<u64>,
}

impl RepresentationSet {
    pub fn len(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.asset_ids.is_empty()
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&y| y as f64).collect()
    }

    /// Whether features are standardized per training fold.
    pub fn needs_zscore(&self) -> bool {
        self.name == Representation::Instructor
    }
}

/// Where each representation variant reads its per-asset vectors from.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sources<'a> {
    pub asset2vec: Option<&'a AssetVectors>,
    pub content: Option<&'a AssetVectors>,
    pub instructor: Option<&'a [InstructorFeatures]>,
}

/// Labels restricted to assets that carry instructor features.
pub fn analysis_subset(labels: &[PopularityLabel], instructor: &[InstructorFeatures]) -> Vec<PopularityLabel> {
    let coded: HashSet<&str> = instructor.iter().map(|f| f.asset_id.as_str()).collect();
    labels
        .iter()
        .filter(|l| coded.contains(l.asset_id.as_str()))
        .cloned()
        .collect()
}

/// Builds the requested variant over every labelled asset, rows in ascending
/// asset id. Learned vectors are unit-normalized; instructor features stay raw
/// (standardization happens per fold).
pub fn assemble<'a>(
    name: Representation,
    sources: &Sources<'a>,
    labels: &[PopularityLabel],
) -> Result<RepresentationSet> {
    let mut by_id: BTreeMap<&str, u64> = BTreeMap::new();
    for l in labels {
        if by_id.insert(l.asset_id.as_str(), l.popularity).is_some() {
            return Err(Error::invalid(format!("duplicate label for {:?}", l.asset_id)));
        }
    }
    let need = |src: Option<&'a AssetVectors>, what: &str| -> Result<&'a AssetVectors> {
        src.ok_or_else(|| Error::invalid(format!("{name} needs {what} vectors")))
    };
    let instructor: Option<HashMap<&str, &InstructorFeatures>> = sources
        .instructor
        .map(|fs| fs.iter().map(|f| (f.asset_id.as_str(), f)).collect());

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(by_id.len());
    let mut missing: Vec<&str> = Vec::new();
    for &asset in by_id.keys() {
        let row = match name {
            Representation::Asset2vec => need(sources.asset2vec, "asset2vec")?
                .get(asset)
                .map(unit_normalize),
            Representation::AvgContent => need(sources.content, "content")?
                .get(asset)
                .map(unit_normalize),
            Representation::Ensemble => {
                let ctx = need(sources.asset2vec, "asset2vec")?.get(asset);
                let content = need(sources.content, "content")?.get(asset);
                ctx.zip(content)
                    .map(|(a, b)| ensemble_concat(&unit_normalize(a), &unit_normalize(b)))
            }
            Representation::Instructor => instructor
                .as_ref()
                .ok_or_else(|| Error::invalid("instructor representation needs instructor features"))?
                .get(asset)
                .map(|f| encode_instructor(f).to_vec()),
        };
        match row {
            Some(r) => rows.push(r),
            None => missing.push(asset),
        }
    }
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "labelled assets without a {name} representation: {}",
            list_preview(&missing, 10)
        )));
    }
    let matrix = if rows.is_empty() {
        Matrix::zeros(0, 0)
    } else {
        Matrix::from_rows(&rows)?
    };
    if !matrix.is_finite() {
        return Err(Error::numerical(format!("{name} features contain non-finite values")));
    }
    Ok(RepresentationSet {
        name,
        asset_ids: by_id.keys().map(|a| a.to_string()).collect(),
        matrix,
        labels: by_id.values().copied().collect(),
    })
}

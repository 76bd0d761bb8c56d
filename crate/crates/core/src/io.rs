//! File formats: FRF and lambda-table CSV, time-series CSV, model and
//! report JSON.

use std::io::{Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::models::{FrequencyResponseData, ModelError, C64};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected header {expected:?}, found {found:?}")]
    Header {
        expected: Vec<&'static str>,
        found: Vec<String>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Serde adapter for `Vec<C64>` as a list of `[re, im]` pairs.
pub mod complex_list {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(values: &[C64], ser: S) -> Result<S::Ok, S::Error> {
        values
            .iter()
            .map(|v| [v.re, v.im])
            .collect::<Vec<_>>()
            .serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<C64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(de)?;
        Ok(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }
}

/// Serde adapter for a single `C64` as `[re, im]`.
pub mod complex {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &C64, ser: S) -> Result<S::Ok, S::Error> {
        [v.re, v.im].serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(de)?;
        Ok(C64::new(re, im))
    }
}

const FRF_HEADER: [&str; 3] = ["omega_rad_s", "real", "imag"];
const LAMBDA_HEADER: [&str; 5] = [
    "omega_rad_s",
    "lambda1_re",
    "lambda1_im",
    "lambda2_re",
    "lambda2_im",
];
const SERIES_HEADER: [&str; 2] = ["t_s", "value"];

fn open(path: &Path) -> Result<std::fs::File, IoError> {
    std::fs::File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn create(path: &Path) -> Result<std::fs::File, IoError> {
    std::fs::File::create(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn read_rows<R: Read>(reader: R, header: &[&'static str]) -> Result<Vec<Vec<f64>>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if found.iter().map(String::as_str).ne(header.iter().copied()) {
        return Err(IoError::Header {
            expected: header.to_vec(),
            found,
        });
    }
    let mut rows = Vec::new();
    for record in rdr.deserialize::<Vec<f64>>() {
        rows.push(record?);
    }
    Ok(rows)
}

fn write_rows<W: Write>(
    writer: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    wtr.flush().map_err(|source| IoError::File {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn read_frf<R: Read>(
    reader: R,
    label: impl Into<String>,
) -> Result<FrequencyResponseData, IoError> {
    let rows = read_rows(reader, &FRF_HEADER)?;
    let omegas = rows.iter().map(|r| r[0]).collect();
    let values = rows.iter().map(|r| C64::new(r[1], r[2])).collect();
    Ok(FrequencyResponseData::new(omegas, values, label)?)
}

pub fn write_frf<W: Write>(writer: W, data: &FrequencyResponseData) -> Result<(), IoError> {
    write_rows(
        writer,
        &FRF_HEADER,
        data.iter().map(|(w, v)| vec![w, v.re, v.im]),
    )
}

pub fn read_frf_file(path: &Path) -> Result<FrequencyResponseData, IoError> {
    read_frf(open(path)?, path.display().to_string())
}

pub fn write_frf_file(path: &Path, data: &FrequencyResponseData) -> Result<(), IoError> {
    write_frf(create(path)?, data)
}

/// Tabulated propagation coefficients `(omega, lambda1, lambda2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTable {
    pub omegas: Vec<f64>,
    pub lambda1: Vec<C64>,
    pub lambda2: Vec<C64>,
}

pub fn read_lambda_table<R: Read>(reader: R) -> Result<LambdaTable, IoError> {
    let rows = read_rows(reader, &LAMBDA_HEADER)?;
    Ok(LambdaTable {
        omegas: rows.iter().map(|r| r[0]).collect(),
        lambda1: rows.iter().map(|r| C64::new(r[1], r[2])).collect(),
        lambda2: rows.iter().map(|r| C64::new(r[3], r[4])).collect(),
    })
}

pub fn write_lambda_table<W: Write>(writer: W, table: &LambdaTable) -> Result<(), IoError> {
    write_rows(
        writer,
        &LAMBDA_HEADER,
        (0..table.omegas.len()).map(|i| {
            let (l1, l2) = (table.lambda1[i], table.lambda2[i]);
            vec![table.omegas[i], l1.re, l1.im, l2.re, l2.im]
        }),
    )
}

pub fn read_lambda_table_file(path: &Path) -> Result<LambdaTable, IoError> {
    read_lambda_table(open(path)?)
}

/// Sampled signal `(t, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn read_series<R: Read>(reader: R) -> Result<TimeSeries, IoError> {
    let rows = read_rows(reader, &SERIES_HEADER)?;
    Ok(TimeSeries {
        t: rows.iter().map(|r| r[0]).collect(),
        y: rows.iter().map(|r| r[1]).collect(),
    })
}

pub fn write_series<W: Write>(writer: W, series: &TimeSeries) -> Result<(), IoError> {
    write_rows(
        writer,
        &SERIES_HEADER,
        series.t.iter().zip(&series.y).map(|(&t, &y)| vec![t, y]),
    )
}

pub fn write_series_file(path: &Path, series: &TimeSeries) -> Result<(), IoError> {
    write_series(create(path)?, series)
}

/// Generic CSV with a caller-chosen header.
pub fn write_table_file(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), IoError> {
    write_rows(create(path)?, header, rows)
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_reader(std::io::BufReader::new(open(
        path,
    )?))?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"QGSCORE1";

/// Where a score table came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
}

/// Influence scores, one row per training sample and one column per
/// validation task.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    train_ids: Vec<String>,
    tasks: Vec<String>,
    values: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl ScoreTable {
    /// `values` is row-major, `train_ids.len() * tasks.len()` long.
    pub fn new(train_ids: Vec<String>, tasks: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != train_ids.len() * tasks.len() {
            return Err(Error::Dimension {
                context: "score table".into(),
                expected: train_ids.len() * tasks.len(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite score {} for sample {:?}",
                values[i],
                train_ids[i / tasks.len()]
            )));
        }
        Ok(Self {
            train_ids,
            tasks,
            values,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }

    pub fn train_ids(&self) -> &[String] {
        &self.train_ids
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    pub fn rows(&self) -> usize {
        self.train_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.tasks.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.tasks.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.tasks.len();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// CSV with header `sample_id,<task>...`; scores in scientific notation
    /// with 9 significant digits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).at(path)?;
        self.write_csv_to(BufWriter::new(file))
            .map_err(|e| csv_err(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["sample_id"];
        header.extend(self.tasks.iter().map(String::as_str));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.cols() + 1);
        for (r, id) in self.train_ids.iter().enumerate() {
            record.clear();
            record.push(id.clone());
            record.extend(self.row(r).iter().map(|v| format!("{v:.8e}")));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).at(path)?;
        let mut rdr = csv::Reader::from_reader(BufReader::new(file));
        let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
        if header.get(0) != Some("sample_id") || header.len() < 2 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "expected header `sample_id,<task>...`".into(),
            });
        }
        let tasks: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            if rec.len() != tasks.len() + 1 {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("row {} has {} fields, expected {}", ids.len() + 1, rec.len(), tasks.len() + 1),
                });
            }
            ids.push(rec[0].to_string());
            for field in rec.iter().skip(1) {
                values.push(field.trim().parse::<f64>().map_err(|_| Error::Data(format!(
                    "{}: bad score {field:?} for sample {:?}",
                    path.display(),
                    &rec[0]
                )))?);
            }
        }
        Self::new(ids, tasks, values)
    }

    /// Compact binary form: magic, counts, ids, tasks, f64 scores, provenance JSON.
    pub fn write_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).at(path)?);
        let mut put = |bytes: &[u8]| w.write_all(bytes).at(path);
        put(CACHE_MAGIC)?;
        put(&(self.rows() as u64).to_le_bytes())?;
        put(&(self.cols() as u32).to_le_bytes())?;
        for s in self.train_ids.iter().chain(&self.tasks) {
            put(&(s.len() as u32).to_le_bytes())?;
            put(s.as_bytes())?;
        }
        for v in &self.values {
            put(&v.to_le_bytes())?;
        }
        let prov = serde_json::to_vec(&self.provenance).expect("provenance serializes");
        put(&(prov.len() as u32).to_le_bytes())?;
        put(&prov)?;
        w.flush().at(path)
    }

    pub fn read_cache(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path).at(path)?);
        let truncated = |e: std::io::Error| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Format {
                    path: path.to_path_buf(),
                    message: "truncated score cache".into(),
                }
            } else {
                Error::io(path, e)
            }
        };
        let mut take = |n: usize| -> Result<Vec<u8>> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf).map_err(truncated)?;
            Ok(buf)
        };
        if take(8)? != CACHE_MAGIC {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "not a score cache (bad magic)".into(),
            });
        }
        let rows = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut strings = Vec::with_capacity(rows + cols);
        for _ in 0..rows + cols {
            let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            strings.push(String::from_utf8(take(len)?).map_err(|_| Error::Format {
                path: path.to_path_buf(),
                message: "invalid UTF-8 in score cache".into(),
            })?);
        }
        let tasks = strings.split_off(rows);
        let raw = take(rows * cols * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let plen = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let provenance: Option<Provenance> =
            serde_json::from_slice(&take(plen)?).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: format!("bad provenance: {e}"),
            })?;
        let mut t = Self::new(strings, tasks, values)?;
        t.provenance = provenance;
        Ok(t)
    }

    /// Reads either format, chosen by the file's leading bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut head = [0u8; 8];
        let n = File::open(path).at(path)?.read(&mut head).at(path)?;
        if n == 8 && &head == CACHE_MAGIC {
            Self::read_cache(path)
        } else {
            Self::read_csv(path)
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ScoreTable {
        ScoreTable::new(
            vec!["a".into(), "b,c".into()],
            vec!["t1".into(), "t2".into()],
            vec![0.1, -2.5e-7, 1.0 / 3.0, 123456.789],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(ScoreTable::new(vec!["a".into()], vec!["t".into()], vec![]).is_err());
        assert!(ScoreTable::new(vec!["a".into()], vec!["t".into()], vec![f64::NAN]).is_err());
    }

    #[test]
    fn csv_format() {
        let mut out = Vec::new();
        table().write_csv_to(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "sample_id,t1,t2");
        assert_eq!(lines[1], "a,1.00000000e-1,-2.50000000e-7");
        assert_eq!(lines[2], "\"b,c\",3.33333333e-1,1.23456789e5");
    }

    #[test]
    fn csv_and_cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let t = table().with_provenance(Provenance {
            mode: "qless".into(),
            scheme: Some("sign-1bit".into()),
            manifest_hash: Some("ab".into()),
        });
        let csv = dir.path().join("s.csv");
        t.write_csv(&csv).unwrap();
        let back = ScoreTable::load(&csv).unwrap();
        assert_eq!(back.train_ids(), t.train_ids());
        for (a, b) in back.values().iter().zip(t.values()) {
            assert!(((a - b) / b).abs() < 1e-8);
        }
        let bin = dir.path().join("s.bin");
        t.write_cache(&bin).unwrap();
        assert_eq!(ScoreTable::load(&bin).unwrap(), t);
    }
}

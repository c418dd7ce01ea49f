//! CSV ping files: a header `n_samples,dt_s,n_pings`, one row with those
//! values, then one row of samples per ping. Ping indices are implied (1-based).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::tracker::PingRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct PingFile {
    pub dt_s: f64,
    pub records: Vec<PingRecord<f64>>,
}

pub fn write_pings<W: Write>(writer: W, dt_s: f64, records: &[PingRecord<f64>]) -> Result<()> {
    let n = records.first().map_or(0, |r| r.y.len());
    if records.iter().any(|r| r.y.len() != n) {
        return Err(Error::dim("all pings in a file must have the same length"));
    }
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    w.write_record(["n_samples", "dt_s", "n_pings"])?;
    w.write_record([n.to_string(), dt_s.to_string(), records.len().to_string()])?;
    for r in records {
        w.write_record(r.y.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pings<R: Read>(reader: R) -> Result<PingFile> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(reader);
    let header = rd.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["n_samples", "dt_s", "n_pings"] {
        return Err(Error::Config("ping file header must be n_samples,dt_s,n_pings".into()));
    }
    let mut rows = rd.records();
    let meta = rows
        .next()
        .ok_or_else(|| Error::Config("ping file is missing its size row".into()))??;
    let parse_err = |what: &str| Error::Config(format!("ping file: cannot parse {what}"));
    let field = |i: usize| meta.get(i).ok_or_else(|| parse_err("size row"));
    let n: usize = field(0)?.trim().parse().map_err(|_| parse_err("n_samples"))?;
    let dt_s: f64 = field(1)?.trim().parse().map_err(|_| parse_err("dt_s"))?;
    let n_pings: usize = field(2)?.trim().parse().map_err(|_| parse_err("n_pings"))?;
    let mut records = Vec::with_capacity(n_pings);
    for (k, row) in rows.enumerate() {
        let row = row?;
        if row.len() != n {
            return Err(Error::dim(format!("ping {} has {} samples, expected {n}", k + 1, row.len())));
        }
        let y = row
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| parse_err("sample")))
            .collect::<Result<Vec<_>>>()?;
        records.push(PingRecord::new(DVector::from_vec(y), k + 1));
    }
    if records.len() != n_pings {
        return Err(Error::dim(format!("expected {n_pings} pings, found {}", records.len())));
    }
    Ok(PingFile { dt_s, records })
}

pub fn save(path: &Path, dt_s: f64, records: &[PingRecord<f64>]) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    write_pings(f, dt_s, records)
}

pub fn load(path: &Path) -> Result<PingFile> {
    read_pings(BufReader::new(File::open(path)?))
}

//! Per-round CSV records.
//!
//! One row per `(trial, iteration)` with a fixed column order. Reals are
//! written with 17 significant digits so a parsed file reproduces the
//! records' summary exactly. Flags are `0`/`1`; `lambda_t` is empty for
//! schemes that do not use it.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::engine::RoundRecord;
use crate::error::{Error, Result};
use crate::policy::Scheme;

pub const COLUMNS: [&str; 14] = [
    "trial",
    "iteration",
    "scheme",
    "loss",
    "dist_to_opt",
    "gradients_computed",
    "gradients_used",
    "efficiency",
    "fault_check",
    "suspects",
    "identified_cum",
    "update_faulty",
    "q_t",
    "lambda_t",
];

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn row(r: &RoundRecord) -> [String; 14] {
    [
        r.trial.to_string(),
        r.iteration.to_string(),
        r.scheme.name().to_string(),
        real(r.loss),
        real(r.dist_to_opt),
        r.gradients_computed.to_string(),
        r.gradients_used.to_string(),
        real(r.efficiency()),
        flag(r.fault_check).to_string(),
        r.suspects.to_string(),
        r.identified_cum.to_string(),
        flag(r.update_faulty).to_string(),
        real(r.q_t),
        r.lambda_t.map(real).unwrap_or_default(),
    ]
}

pub fn write_csv<W: Write>(records: &[Vec<RoundRecord>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records.iter().flatten() {
        w.write_record(row(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes all trials to `path`, creating parent directories.
pub fn emit_csv(records: &[Vec<RoundRecord>], path: &Path) -> Result<()> {
    if records.iter().all(Vec::is_empty) {
        return Err(Error::EmptyInput("records"));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(records, std::fs::File::create(path)?)
}

fn field(rec: &csv::StringRecord, i: usize, line: u64) -> Result<&str> {
    rec.get(i)
        .ok_or_else(|| Error::Csv(format!("row {line}: missing column {}", COLUMNS[i])))
}

fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let s = field(rec, i, line)?;
    s.parse()
        .map_err(|_| Error::Csv(format!("row {line}: bad {} value {s:?}", COLUMNS[i])))
}

fn parse_flag(rec: &csv::StringRecord, i: usize, line: u64) -> Result<bool> {
    match field(rec, i, line)? {
        "0" => Ok(false),
        "1" => Ok(true),
        s => Err(Error::Csv(format!("row {line}: bad {} flag {s:?}", COLUMNS[i]))),
    }
}

/// Reads records back, grouped by trial in file order. Columns not in the
/// file (sampled indices, per-round identified sets) come back empty.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<Vec<RoundRecord>>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(Error::Csv(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut trials: Vec<Vec<RoundRecord>> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = k as u64 + 2;
        let scheme_name = field(&rec, 2, line)?;
        let scheme = Scheme::parse(scheme_name)
            .ok_or_else(|| Error::Csv(format!("row {line}: unknown scheme {scheme_name:?}")))?;
        let lambda = field(&rec, 13, line)?;
        let record = RoundRecord {
            trial: num(&rec, 0, line)?,
            iteration: num(&rec, 1, line)?,
            scheme,
            sampled: Vec::new(),
            loss: num(&rec, 3, line)?,
            dist_to_opt: num(&rec, 4, line)?,
            gradients_computed: num(&rec, 5, line)?,
            gradients_used: num(&rec, 6, line)?,
            fault_check: parse_flag(&rec, 8, line)?,
            suspects: num(&rec, 9, line)?,
            identified: BTreeSet::new(),
            identified_cum: num(&rec, 10, line)?,
            update_faulty: parse_flag(&rec, 11, line)?,
            q_t: num(&rec, 12, line)?,
            lambda_t: if lambda.is_empty() { None } else { Some(num(&rec, 13, line)?) },
        };
        match trials.last_mut() {
            Some(current) if current[0].trial == record.trial => current.push(record),
            _ => trials.push(vec![record]),
        }
    }
    Ok(trials)
}

pub fn load_csv(path: &Path) -> Result<Vec<Vec<RoundRecord>>> {
    read_csv(std::fs::File::open(path)?)
}

//! Dataset files: CSV with header `x,z1,...,zk`, and a JSON envelope that
//! also carries the generating spec and seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    one_step_plugin, one_step_split, EstimationResult, EstimationTarget, EstimatorOptions, Scheme,
};
use crate::model::{Dataset, ModelSpec, Observation};
use crate::rng::SeedSpec;

fn header(k: usize) -> Vec<String> {
    std::iter::once("x".to_string()).chain((1..=k).map(|j| format!("z{j}"))).collect()
}

/// Reads `x,z1,...,zk`. Row numbers in errors count data rows from 1.
pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { row: None, message: format!("cannot read header: {e}") })?
        .iter()
        .map(str::to_string)
        .collect();
    if names.len() < 2 || names != header(names.len() - 1) {
        return Err(Error::Parse {
            row: None,
            message: format!("header must be x,z1,...,zk; got {}", names.join(",")),
        });
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Parse { row: Some(i + 1), message: e.to_string() })?;
        let values = row
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|_| Error::Parse {
                    row: Some(i + 1),
                    message: format!("column {} is not a number: {field:?}", names[j]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        records.push(Observation { x: values[0], z: values[1..].to_vec() });
    }
    if records.is_empty() {
        return Err(Error::Parse { row: None, message: "file has no data rows".into() });
    }
    Dataset::new(records, None)
}

pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(BufReader::new(file))
}

/// Writes `x,z1,...,zk` with round-trip exact numbers.
pub fn write_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header(data.dim())).map_err(csv_err)?;
    for r in data.records() {
        let row: Vec<String> = std::iter::once(r.x).chain(r.z.iter().copied()).map(|v| format!("{v:?}")).collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_csv(data, BufWriter::new(file))
}

/// A dataset together with the model and seed that generated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEnvelope {
    pub spec: ModelSpec,
    pub seed: Option<SeedSpec>,
    pub records: Vec<Observation>,
}

impl DatasetEnvelope {
    pub fn new(spec: &ModelSpec, data: &Dataset) -> Self {
        Self { spec: spec.clone(), seed: data.seed(), records: data.records().to_vec() }
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::new(self.records.clone(), self.seed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("envelope serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Reads a CSV file and runs the preliminary plus one-step estimator on it.
pub fn estimate_from_file(
    path: impl AsRef<Path>,
    target: EstimationTarget<'_>,
    scheme: Scheme,
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    let data = read_csv_file(path)?;
    match scheme {
        Scheme::Split => one_step_split(&data, target, opts),
        Scheme::Plugin => one_step_plugin(&data, target, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Dataset> {
        read_csv(s.as_bytes())
    }

    #[test]
    fn reads_well_formed_file() {
        let d = parse("x,z1,z2\n1.5,0.1,-2\n0.25,3,4e-3\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.records()[1].z, vec![3.0, 0.004]);
    }

    #[test]
    fn row_numbered_errors() {
        let e = parse("x,z1\n1,0\n-1,0\n").unwrap_err();
        assert!(matches!(e, Error::Parse { row: Some(2), .. }), "{e}");
        let e = parse("x,z1\n1,0\n2,abc\n").unwrap_err();
        assert!(e.to_string().starts_with("row 2: column z1"), "{e}");
        let e = parse("x,z1\n1,0\n2,0,3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { row: Some(2), .. }), "{e}");
        assert!(matches!(parse("t,z1\n1,0\n"), Err(Error::Parse { row: None, .. })));
        assert!(matches!(parse("x,z2\n1,0\n"), Err(Error::Parse { row: None, .. })));
        assert!(parse("x,z1\n").is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let d = Dataset::new(
            vec![
                Observation { x: 0.1 + 0.2, z: vec![1e-300, -std::f64::consts::PI] },
                Observation { x: 7.0, z: vec![0.0, 1.0 / 3.0] },
            ],
            None,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), d);
    }
}

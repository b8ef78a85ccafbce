//! Dataset files: one JSON header line, then one pixel per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FieldDataset, GeneratorConfig, MultiViewSample};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub generator: Option<GeneratorConfig>,
}

pub fn write_dataset(path: &Path, dataset: &FieldDataset, generator: Option<&GeneratorConfig>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header = DatasetHeader { schema_version: SCHEMA_VERSION, generator: generator.cloned() };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for s in &dataset.samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(FieldDataset, DatasetHeader)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or_else(|| Error::Data(format!("{} is empty", path.display())))??;
    let header: DatasetHeader = serde_json::from_str(&first)
        .map_err(|e| Error::Data(format!("{}: bad header line: {e}", path.display())))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Data(format!("unsupported schema version {}", header.schema_version)));
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: MultiViewSample = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 2)))?;
        samples.push(s);
    }
    Ok((FieldDataset::from_samples(samples)?, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic_dataset;

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let cfg = GeneratorConfig { n_farms: 2, fields_per_farm: 2, pixels_per_field: 4, ..GeneratorConfig::desk(9) };
        let ds = generate_synthetic_dataset(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        write_dataset(&a, &ds, Some(&cfg)).unwrap();
        let (back, header) = read_dataset(&a).unwrap();
        assert_eq!(back, ds);
        assert_eq!(header.generator, Some(cfg.clone()));
        write_dataset(&b, &generate_synthetic_dataset(&cfg).unwrap(), Some(&cfg)).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn malformed_lines_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"schema_version\":1,\"generator\":null}\n{\"pixel_id\":1}\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Data(_))));
        std::fs::write(&path, "{\"schema_version\":7,\"generator\":null}\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Data(_))));
    }
}

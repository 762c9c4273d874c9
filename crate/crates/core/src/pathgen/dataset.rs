//! Line-delimited dataset files.
//!
//! Each line is one JSON object. An optional first line `{"manifest": …}`
//! records how the file was produced; every other line is a
//! [`TrainingSequence`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::path::TrainingSequence;
use crate::error::{Error, Result};

/// Provenance header of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub count: usize,
    /// Resolved generation settings.
    pub config: serde_json::Value,
    /// Digest of the material parameters used for labelling.
    pub params_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub manifest: Option<Manifest>,
    pub sequences: Vec<TrainingSequence>,
}

pub fn write_dataset(location: &Path, manifest: Option<&Manifest>, seqs: &[TrainingSequence]) -> Result<()> {
    let mut w = BufWriter::new(File::create(location)?);
    if let Some(m) = manifest {
        serde_json::to_writer(&mut w, &ManifestLine { manifest: m.clone() }).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    for s in seqs {
        serde_json::to_writer(&mut w, s).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(location: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(location)?);
    let mut out = Dataset::default();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let err = |message: String| Error::Parse {
            path: location.to_path_buf(),
            line: lineno,
            message,
        };
        if k == 0 && line.starts_with("{\"manifest\"") {
            let m: ManifestLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            out.manifest = Some(m.manifest);
            continue;
        }
        let seq: TrainingSequence = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        seq.validate().map_err(|e| err(e.to_string()))?;
        out.sequences.push(seq);
    }
    Ok(out)
}

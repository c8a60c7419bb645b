//! Learned-trajectory artifacts: the (desired, input, measured) triple a
//! learning run leaves behind and transfer picks up. Lifted signals are
//! stored as plain text, one sample per line, channels comma-separated.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::report::fmt;
use crate::CmdError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub trajectory: String,
    pub plant: String,
    pub iterations: usize,
    pub final_error: f64,
    pub seed: u64,
    pub duration_s: f64,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct LearnedArtifact {
    pub meta: ArtifactMeta,
    /// Learned lifted input correction `ũ(0..N-1)`.
    pub input: Vec<DVector<f64>>,
    /// Desired positions `y*(0..N)`.
    pub desired: Vec<DVector<f64>>,
    /// Measured positions of the final iteration, `y(1..N)`.
    pub measured: Vec<DVector<f64>>,
}

pub fn artifact_dir(out_dir: &Path, trajectory: &str) -> PathBuf {
    out_dir.join("learned").join(trajectory)
}

fn write_samples(path: &Path, samples: &[DVector<f64>]) -> Result<(), CmdError> {
    let mut text = String::with_capacity(samples.len() * 32);
    for s in samples {
        let fields: Vec<String> = s.iter().map(|v| fmt(*v)).collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)
        .map_err(|e| CmdError::Fault(format!("cannot write {}: {e}", path.display())))
}

fn read_samples(path: &Path) -> Result<Vec<DVector<f64>>, CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| {
            CmdError::Config(format!("{}: line {i}: {e}", path.display()))
        })?;
        out.push(DVector::from_vec(vals));
    }
    Ok(out)
}

impl LearnedArtifact {
    pub fn save(&self, out_dir: &Path) -> Result<(), CmdError> {
        let dir = artifact_dir(out_dir, &self.meta.trajectory);
        std::fs::create_dir_all(&dir)
            .map_err(|e| CmdError::Fault(format!("cannot create {}: {e}", dir.display())))?;
        write_samples(&dir.join("input.txt"), &self.input)?;
        write_samples(&dir.join("desired.txt"), &self.desired)?;
        write_samples(&dir.join("measured.txt"), &self.measured)?;
        let meta = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| CmdError::Fault(format!("meta serialization: {e}")))?;
        std::fs::write(dir.join("meta.json"), meta)
            .map_err(|e| CmdError::Fault(format!("cannot write meta: {e}")))?;
        Ok(())
    }

    pub fn load(out_dir: &Path, trajectory: &str) -> Result<Self, CmdError> {
        let dir = artifact_dir(out_dir, trajectory);
        let meta_text = std::fs::read_to_string(dir.join("meta.json")).map_err(|e| {
            CmdError::Config(format!(
                "missing learned artifact for '{trajectory}' in {}: {e}",
                dir.display()
            ))
        })?;
        let meta: ArtifactMeta = serde_json::from_str(&meta_text)
            .map_err(|e| CmdError::Config(format!("bad meta for '{trajectory}': {e}")))?;
        let input = read_samples(&dir.join("input.txt"))?;
        let desired = read_samples(&dir.join("desired.txt"))?;
        let measured = read_samples(&dir.join("measured.txt"))?;
        if desired.len() != input.len() + 1 || measured.len() != input.len() {
            return Err(CmdError::Config(format!(
                "artifact for '{trajectory}' is inconsistent: {} inputs, {} desired, {} measured",
                input.len(),
                desired.len(),
                measured.len()
            )));
        }
        Ok(Self {
            meta,
            input,
            desired,
            measured,
        })
    }

    pub fn exists(out_dir: &Path, trajectory: &str) -> bool {
        artifact_dir(out_dir, trajectory).join("meta.json").is_file()
    }
}

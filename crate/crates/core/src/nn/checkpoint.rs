//! Flat little-endian f64 checkpoints with a JSON sidecar naming the segments.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NnError, ParameterSet, Segment};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSidecar {
    pub format: String,
    pub total_len: usize,
    pub segments: Vec<Segment>,
}

pub const FORMAT: &str = "f64-le";

pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes to a temporary name and renames, so a crash never leaves a
/// truncated checkpoint under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn save_parameters(params: &ParameterSet, path: &Path) -> Result<(), NnError> {
    let mut bytes = Vec::with_capacity(params.len() * 8);
    for v in params.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let sidecar = CheckpointSidecar {
        format: FORMAT.to_string(),
        total_len: params.len(),
        segments: params.segments().to_vec(),
    };
    let json = serde_json::to_vec_pretty(&sidecar).map_err(|e| NnError::Io(e.to_string()))?;
    write_atomic(&sidecar_path(path), &json).map_err(|e| NnError::Io(e.to_string()))?;
    write_atomic(path, &bytes).map_err(|e| NnError::Io(e.to_string()))
}

pub fn load_parameters(path: &Path) -> Result<ParameterSet, NnError> {
    let json = fs::read(sidecar_path(path)).map_err(|e| NnError::Io(e.to_string()))?;
    let sidecar: CheckpointSidecar =
        serde_json::from_slice(&json).map_err(|e| NnError::Layout(format!("sidecar: {e}")))?;
    if sidecar.format != FORMAT {
        return Err(NnError::Layout(format!("unsupported format `{}`", sidecar.format)));
    }
    let bytes = fs::read(path).map_err(|e| NnError::Io(e.to_string()))?;
    if bytes.len() != sidecar.total_len * 8 {
        return Err(NnError::Layout(format!(
            "binary holds {} bytes, sidecar expects {}",
            bytes.len(),
            sidecar.total_len * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ParameterSet::from_parts(sidecar.segments, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ParameterSet::new();
        p.push_segment("a.weight", 3, 2);
        p.push_segment("a.bias", 3, 1);
        p.init_uniform(&mut crate::seed::rng_from(3));
        p.values_mut()[7] = -0.0;
        let path = dir.path().join("actor.bin");
        save_parameters(&p, &path).unwrap();
        let q = load_parameters(&path).unwrap();
        assert_eq!(p.segments(), q.segments());
        for (a, b) in p.values().iter().zip(q.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ParameterSet::new();
        p.push_segment("w.weight", 2, 2);
        let path = dir.path().join("x.bin");
        save_parameters(&p, &path).unwrap();
        fs::write(&path, [0u8; 12]).unwrap();
        assert!(matches!(load_parameters(&path), Err(NnError::Layout(_))));
    }
}

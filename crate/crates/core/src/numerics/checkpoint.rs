//! Parameter checkpoints: a flat little-endian `f32` array (`.bin`) plus a
//! plain-text manifest (`.shapes`) with one `name offset dims` line per tensor,
//! dims joined by `x`.

use std::fs;
use std::path::{Path, PathBuf};

use super::params::{ParamShape, ParamVector};
use super::NumericsError;

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("shapes"))
}

pub fn manifest_text(params: &ParamVector) -> String {
    let mut out = String::new();
    for s in params.layout() {
        let dims: Vec<String> = s.dims.iter().map(|d| d.to_string()).collect();
        out.push_str(&format!("{} {} {}\n", s.name, s.offset, dims.join("x")));
    }
    out
}

pub fn encode_values(params: &ParamVector) -> Vec<u8> {
    params.values().iter().flat_map(|v| (*v as f32).to_le_bytes()).collect()
}

pub fn save(params: &ParamVector, stem: &Path) -> Result<(), NumericsError> {
    let (bin, shapes) = paths(stem);
    if let Some(dir) = bin.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(bin, encode_values(params))?;
    fs::write(shapes, manifest_text(params))?;
    Ok(())
}

pub fn parse_manifest(text: &str) -> Result<Vec<ParamShape>, NumericsError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [name, offset, dims] = parts.as_slice() else {
                return Err(NumericsError::Manifest(format!("line {}: expected `name offset dims`", n + 1)));
            };
            let offset = offset.parse().map_err(|_| NumericsError::Manifest(format!("line {}: bad offset", n + 1)))?;
            let dims = dims
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| NumericsError::Manifest(format!("line {}: bad dims", n + 1)))?;
            Ok(ParamShape { name: name.to_string(), dims, offset })
        })
        .collect()
}

pub fn decode_values(bytes: &[u8]) -> Result<Vec<f64>, NumericsError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(NumericsError::Manifest("value file length is not a multiple of 4".into()));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

pub fn load(stem: &Path) -> Result<ParamVector, NumericsError> {
    let (bin, shapes) = paths(stem);
    let layout = parse_manifest(&fs::read_to_string(shapes)?)?;
    let values = decode_values(&fs::read(bin)?)?;
    ParamVector::from_parts(values, layout)
}

/// Loads values into an existing vector, requiring an identical layout.
pub fn load_into(params: &mut ParamVector, stem: &Path) -> Result<(), NumericsError> {
    let loaded = load(stem)?;
    params.copy_from(&loaded)
}

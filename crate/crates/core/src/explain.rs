//! Saliency export: raw CSV scores plus a plain-text PGM (P2) rendering.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dtd::RelevanceMap;
use crate::error::{Error, Result};

/// Writes `<prefix>.csv` (raw scores, one row per image row) and
/// `<prefix>.pgm` (min-max normalized to 0..255; a zero-range map renders
/// as all 0). The normalization constants go into a comment line inside
/// the PGM. `width` overrides the row width for flat maps.
pub fn export_saliency(
    map: &RelevanceMap,
    width: Option<usize>,
    prefix: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf)> {
    let scores = map.scores.data();
    let (h, w) = grid_dims(map.scores.shape(), scores.len(), width)?;

    let prefix = prefix.as_ref();
    let csv_path = with_extension(prefix, "csv");
    let pgm_path = with_extension(prefix, "pgm");

    let mut csv = String::new();
    for row in scores.chunks(w) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        csv.push_str(&line.join(","));
        csv.push('\n');
    }
    fs::write(&csv_path, csv)?;

    let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let mut pgm = String::new();
    writeln!(pgm, "P2").expect("string write");
    writeln!(pgm, "# min={min} max={max}").expect("string write");
    writeln!(pgm, "{w} {h}").expect("string write");
    writeln!(pgm, "255").expect("string write");
    for row in scores.chunks(w) {
        let line: Vec<String> = row
            .iter()
            .map(|v| {
                let px = if range > 0.0 {
                    ((v - min) / range * 255.0).round() as u8
                } else {
                    0
                };
                px.to_string()
            })
            .collect();
        writeln!(pgm, "{}", line.join(" ")).expect("string write");
    }
    fs::write(&pgm_path, pgm)?;
    Ok((csv_path, pgm_path))
}

fn grid_dims(shape: &[usize], len: usize, width: Option<usize>) -> Result<(usize, usize)> {
    if let Some(w) = width {
        if w == 0 || !len.is_multiple_of(w) {
            return Err(Error::Config(format!(
                "width {w} does not divide {len} scores"
            )));
        }
        return Ok((len / w, w));
    }
    match shape {
        [h, w] => Ok((*h, *w)),
        [1, h, w] => Ok((*h, *w)),
        [n] => Ok((1, *n)),
        other => Err(Error::Config(format!(
            "cannot render shape {other:?} as a grid; pass an explicit width"
        ))),
    }
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_owned()).unwrap_or_default();
    name.push(".");
    name.push(ext);
    prefix.with_file_name(name)
}

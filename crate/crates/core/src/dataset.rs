//! Dataset container plus IDX and CSV loaders, and seeded synthetic sets
//! for self-contained runs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::tensor::Tensor;

/// Labeled examples with every feature in [0,1].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    /// Per-example tensor shape, e.g. `[1, 28, 28]` or `[n]`.
    pub shape: Vec<usize>,
    pub classes: usize,
    pub examples: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        shape: Vec<usize>,
        classes: usize,
        examples: Vec<Tensor>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            shape,
            classes,
            examples,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.examples.len() != self.labels.len() {
            return Err(Error::DataFormat(format!(
                "{} examples but {} labels",
                self.examples.len(),
                self.labels.len()
            )));
        }
        for (row, (x, &label)) in self.examples.iter().zip(&self.labels).enumerate() {
            x.ensure_shape(&self.shape)?;
            if label >= self.classes {
                return Err(Error::DataLabel {
                    row: row + 1,
                    label,
                    classes: self.classes,
                });
            }
            if let Some((col, &v)) = x
                .data()
                .iter()
                .enumerate()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(Error::DataDomain {
                    row: row + 1,
                    column: format!("f{col}"),
                    value: v,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// First `n` examples (or all, when fewer exist).
    pub fn prefix(&self, n: usize) -> Dataset {
        let k = n.min(self.len());
        Dataset {
            name: self.name.clone(),
            shape: self.shape.clone(),
            classes: self.classes,
            examples: self.examples[..k].to_vec(),
            labels: self.labels[..k].to_vec(),
        }
    }

    /// First `fraction` of the set, at least one example.
    pub fn fraction_prefix(&self, fraction: f64) -> Dataset {
        let k = ((self.len() as f64 * fraction).floor() as usize).max(1);
        self.prefix(k)
    }
}

/// Source format accepted by `load_dataset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Idx,
    Csv,
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::Idx => load_idx(path),
        DataFormat::Csv => load_csv(path),
    }
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    let slice = bytes
        .get(offset..end)
        .ok_or_else(|| Error::DataFormat(format!("truncated IDX file while reading {what}")))?;
    Ok(u32::from_be_bytes([slice[0], slice[1], slice[2], slice[3]]))
}

/// Loads an IDX image/label pair. `path` may be the images file (the labels
/// file is found by the conventional `images`->`labels`, `idx3`->`idx1`
/// name substitution) or a directory holding exactly one such pair.
pub fn load_idx(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let (images_path, labels_path) = resolve_idx_pair(path)?;

    let img_bytes = fs::read(&images_path)?;
    let magic = read_be_u32(&img_bytes, 0, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::DataFormat(format!(
            "bad IDX image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_be_u32(&img_bytes, 4, "image count")? as usize;
    let rows = read_be_u32(&img_bytes, 8, "row count")? as usize;
    let cols = read_be_u32(&img_bytes, 12, "column count")? as usize;
    let pixels = rows * cols;
    let body = img_bytes
        .get(16..16 + count * pixels)
        .ok_or_else(|| Error::DataFormat("truncated IDX image body".into()))?;

    let lbl_bytes = fs::read(&labels_path)?;
    let lmagic = read_be_u32(&lbl_bytes, 0, "label magic")?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::DataFormat(format!(
            "bad IDX label magic {lmagic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let lcount = read_be_u32(&lbl_bytes, 4, "label count")? as usize;
    if lcount != count {
        return Err(Error::DataFormat(format!(
            "{count} images but {lcount} labels"
        )));
    }
    let label_body = lbl_bytes
        .get(8..8 + count)
        .ok_or_else(|| Error::DataFormat("truncated IDX label body".into()))?;

    let shape = vec![1usize, rows, cols];
    let mut examples = Vec::with_capacity(count);
    for i in 0..count {
        let data = body[i * pixels..(i + 1) * pixels]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        examples.push(Tensor::new(shape.clone(), data)?);
    }
    let labels: Vec<usize> = label_body.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(name, shape, classes, examples, labels)
}

fn resolve_idx_pair(path: &Path) -> Result<(PathBuf, PathBuf)> {
    let images = if path.is_dir() {
        let mut candidates: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().contains("images"))
                    .unwrap_or(false)
            })
            .collect();
        candidates.sort();
        match candidates.len() {
            1 => candidates.pop().unwrap(),
            0 => {
                return Err(Error::DataFormat(format!(
                    "no *images* IDX file in {}",
                    path.display()
                )))
            }
            _ => {
                return Err(Error::DataFormat(format!(
                    "multiple *images* IDX files in {}; pass one directly",
                    path.display()
                )))
            }
        }
    } else {
        path.to_path_buf()
    };
    let name = images
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let sibling = name.replace("images", "labels").replace("idx3", "idx1");
    if sibling == name {
        return Err(Error::DataFormat(format!(
            "cannot derive labels file for {name}; expected an *images*idx3* file name"
        )));
    }
    Ok((images.clone(), images.with_file_name(sibling)))
}

/// Writes an IDX image/label pair (`<stem>-images-idx3-ubyte`,
/// `<stem>-labels-idx1-ubyte`) under `dir`. Pixels are quantized to bytes.
pub fn write_idx_pair(
    dataset: &Dataset,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<(PathBuf, PathBuf)> {
    let [_, rows, cols] = match dataset.shape.as_slice() {
        [c, h, w] if *c == 1 => [*c, *h, *w],
        other => {
            return Err(Error::Config(format!(
                "IDX export needs single-channel [1,h,w] examples, got {other:?}"
            )))
        }
    };
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let images_path = dir.join(format!("{stem}-images-idx3-ubyte"));
    let labels_path = dir.join(format!("{stem}-labels-idx1-ubyte"));

    let mut img = Vec::with_capacity(16 + dataset.len() * rows * cols);
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    for x in &dataset.examples {
        img.extend(x.data().iter().map(|v| (v * 255.0).round() as u8));
    }
    fs::write(&images_path, img)?;

    let mut lbl = Vec::with_capacity(8 + dataset.len());
    lbl.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    lbl.extend(dataset.labels.iter().map(|&l| l as u8));
    fs::write(&labels_path, lbl)?;
    Ok((images_path, labels_path))
}

/// Loads a CSV dataset: header row, one column named `label`, all other
/// columns numeric features already normalized into [0,1].
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::DataFormat("empty CSV file".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_col = columns
        .iter()
        .position(|c| *c == "label")
        .ok_or_else(|| Error::DataFormat("CSV header has no 'label' column".into()))?;
    let feature_names: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_col)
        .map(|(_, c)| c.to_string())
        .collect();
    let n = feature_names.len();
    if n == 0 {
        return Err(Error::DataFormat("CSV has no feature columns".into()));
    }

    let mut examples = Vec::new();
    let mut labels = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        let row = row_idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::DataFormat(format!(
                "data row {row} has {} fields, header has {}",
                fields.len(),
                columns.len()
            )));
        }
        let label: usize = fields[label_col].parse().map_err(|_| {
            Error::DataFormat(format!(
                "data row {row}: label {:?} is not an integer",
                fields[label_col]
            ))
        })?;
        let mut features = Vec::with_capacity(n);
        for (i, field) in fields.iter().enumerate() {
            if i == label_col {
                continue;
            }
            let name = columns[i];
            let v: f64 = field.parse().map_err(|_| {
                Error::DataFormat(format!(
                    "data row {row}, column {name}: {field:?} is not numeric"
                ))
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::DataDomain {
                    row,
                    column: name.to_string(),
                    value: v,
                });
            }
            features.push(v);
        }
        examples.push(Tensor::new(vec![n], features)?);
        labels.push(label);
    }
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = labels.iter().copied().max().unwrap() + 1;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::new(name, vec![n], classes, examples, labels)
}

/// Writes the dataset as CSV (`label,f0,f1,...`); floats use the shortest
/// exact decimal form, so a reload reproduces values bit for bit.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = fs::File::create(path)?;
    let n = dataset.feature_count();
    let header: Vec<String> = std::iter::once("label".to_string())
        .chain((0..n).map(|i| format!("f{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (x, label) in dataset.examples.iter().zip(&dataset.labels) {
        let mut row = String::with_capacity(n * 8);
        row.push_str(&label.to_string());
        for v in x.data() {
            row.push(',');
            row.push_str(&format!("{v}"));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

const GLYPHS: [[u8; 7]; 10] = [
    [
        0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110,
    ], // 0
    [
        0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110,
    ], // 1
    [
        0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111,
    ], // 2
    [
        0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110,
    ], // 3
    [
        0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010,
    ], // 4
    [
        0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110,
    ], // 5
    [
        0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110,
    ], // 6
    [
        0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000,
    ], // 7
    [
        0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110,
    ], // 8
    [
        0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100,
    ], // 9
];

/// Seeded synthetic 1x28x28 digit set: jittered, smeared glyph renderings
/// with sparse background noise. Stands in for handwritten-digit data when
/// no IDX files are on hand; label of example `i` is `i % 10`.
pub fn synthetic_digits(count: usize, seed: u64, name: &str) -> Dataset {
    let shape = vec![1usize, 28, 28];
    let mut examples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let digit = i % 10;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let mut img = [0.0f64; 28 * 28];

        let dx = rng.gen_range(-3i32..=3);
        let dy = rng.gen_range(-3i32..=3);
        let base_ink: f64 = rng.gen_range(0.75..1.0);
        for (gy, row_bits) in GLYPHS[digit].iter().enumerate() {
            for gx in 0..5i32 {
                if row_bits >> (4 - gx) & 1 == 0 {
                    continue;
                }
                for sy in 0..3 {
                    for sx in 0..3 {
                        let y = 3 + (gy as i32) * 3 + sy + dy;
                        let x = 6 + gx * 3 + sx + dx;
                        let ink = (base_ink + rng.gen_range(-0.12..0.05)).clamp(0.3, 1.0);
                        img[(y * 28 + x) as usize] = ink;
                    }
                }
            }
        }

        // one smear pass: bleed a fraction of the 4-neighborhood into each pixel
        let bleed: f64 = rng.gen_range(0.2..0.45);
        let src = img;
        for y in 0..28i32 {
            for x in 0..28i32 {
                let mut acc = 0.0;
                for (ny, nx) in [(y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)] {
                    if (0..28).contains(&ny) && (0..28).contains(&nx) {
                        acc += src[(ny * 28 + nx) as usize];
                    }
                }
                let v = src[(y * 28 + x) as usize] + bleed * acc / 4.0;
                img[(y * 28 + x) as usize] = v.min(1.0);
            }
        }

        // sparse salt noise on the background
        let salt = rng.gen_range(4..=10);
        for _ in 0..salt {
            let p = rng.gen_range(0..28 * 28);
            if img[p] == 0.0 {
                img[p] = rng.gen_range(0.05..0.35);
            }
        }

        examples.push(Tensor::new(shape.clone(), img.to_vec()).expect("synthetic digit in [0,1]"));
        labels.push(digit);
    }
    Dataset {
        name: name.to_string(),
        shape,
        classes: 10,
        examples,
        labels,
    }
}

/// Two well-separated Gaussian-ish blobs in [0,1]^2, labels 0/1.
pub fn synthetic_blobs(count: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % 2;
        let center: f64 = if label == 0 { 0.25 } else { 0.75 };
        let x = (center + rng.gen_range(-0.12..0.12)).clamp(0.0, 1.0);
        let y = (center + rng.gen_range(-0.12..0.12)).clamp(0.0, 1.0);
        examples.push(Tensor::from_vec(vec![x, y]).unwrap());
        labels.push(label);
    }
    Dataset {
        name: "blobs".into(),
        shape: vec![2],
        classes: 2,
        examples,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("diaa_dataset_{tag}"));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn idx_single_saturated_pixel_scales_to_one() {
        let dir = temp_dir("saturated");
        let ds = Dataset::new(
            "one",
            vec![1, 2, 2],
            2,
            vec![Tensor::new(vec![1, 2, 2], vec![1.0; 4]).unwrap()],
            vec![1],
        )
        .unwrap();
        let (images, _) = write_idx_pair(&ds, &dir, "one").unwrap();
        let loaded = load_idx(&images).unwrap();
        assert_eq!(loaded.len(), 1);
        assert!(loaded.examples[0].data().iter().all(|&v| v == 1.0));
        assert_eq!(loaded.labels, vec![1]);
    }

    #[test]
    fn idx_bad_magic_is_format_error() {
        let dir = temp_dir("badmagic");
        let images = dir.join("bogus-images-idx3-ubyte");
        fs::write(&images, 0xdeadbeefu32.to_be_bytes()).unwrap();
        let err = load_idx(&images).unwrap_err();
        assert!(matches!(err, Error::DataFormat(_)), "{err:?}");
    }

    #[test]
    fn csv_minimal_file() {
        let dir = temp_dir("minimal");
        let path = dir.join("mini.csv");
        fs::write(&path, "label,f0,f1\n1,0.2,0.9\n").unwrap();
        let ds = load_csv(&path).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.examples[0].data(), &[0.2, 0.9]);
        assert_eq!(ds.labels, vec![1]);
        assert_eq!(ds.classes, 2);
    }

    #[test]
    fn csv_out_of_domain_feature_names_row_and_column() {
        let dir = temp_dir("domain");
        let path = dir.join("bad.csv");
        fs::write(&path, "label,f0,f1\n0,0.2,0.5\n1,0.3,1.5\n").unwrap();
        match load_csv(&path).unwrap_err() {
            Error::DataDomain { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "f1");
                assert_eq!(value, 1.5);
            }
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = temp_dir("roundtrip");
        let path = dir.join("rt.csv");
        let ds = synthetic_blobs(17, 3);
        write_csv(&ds, &path).unwrap();
        let loaded = load_csv(&path).unwrap();
        assert_eq!(loaded.len(), ds.len());
        for (a, b) in loaded.examples.iter().zip(&ds.examples) {
            assert_eq!(a.data(), b.data());
        }
        assert_eq!(loaded.labels, ds.labels);
    }

    #[test]
    fn synthetic_digits_are_valid_and_deterministic() {
        let a = synthetic_digits(30, 9, "synth");
        let b = synthetic_digits(30, 9, "synth");
        assert_eq!(a.len(), 30);
        assert_eq!(a.classes, 10);
        for (x, y) in a.examples.iter().zip(&b.examples) {
            assert_eq!(x.data(), y.data());
        }
        // digits keep a mostly-dark background
        let dark = a.examples[0].data().iter().filter(|&&v| v == 0.0).count();
        assert!(dark > 300, "background too dense: {dark} zero pixels");
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let err = Dataset::new(
            "bad",
            vec![2],
            2,
            vec![Tensor::from_vec(vec![0.1, 0.2]).unwrap()],
            vec![2],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DataLabel { .. }));
    }
}

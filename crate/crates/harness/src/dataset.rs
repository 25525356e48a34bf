//! Pattern sources: PPM image directories, HENB containers and seeded
//! synthetic fixtures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hen_core::codec::EmbeddingTable;
use hen_core::fixtures;
use hen_core::image::{Image, ImageShape};
use hen_core::henb;
use thiserror::Error;

use crate::config::{ExperimentConfig, FixtureKind};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("malformed PPM {path}: {reason}")]
    MalformedPpm { path: PathBuf, reason: String },

    #[error("caption line {line} refers to unknown id `{id}`")]
    CaptionIdMismatch { line: usize, id: String },

    #[error("caption line {line} is not `id<TAB>caption`")]
    MalformedCaption { line: usize },

    #[error("{path} holds no PPM images or HENB container")]
    Empty { path: PathBuf },

    #[error("HENB originals have length {got}, image shape {shape} needs {expected}")]
    ShapeMismatch {
        shape: ImageShape,
        expected: usize,
        got: usize,
    },

    #[error(transparent)]
    Henb(#[from] henb::HenbError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: u32,
    pub image: Image,
    pub caption: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<Item>,
    pub shape: ImageShape,
    /// All values lie in `[0, 1]`, so image metrics apply.
    pub pixel_valued: bool,
    /// Embedding table found alongside the images, if any.
    pub embeddings: Option<EmbeddingTable>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn patterns(&self) -> Vec<Vec<f64>> {
        self.items.iter().map(|i| i.image.as_slice().to_vec()).collect()
    }

    /// The first `n` items.
    pub fn truncated(&self, n: usize) -> Dataset {
        Dataset {
            items: self.items[..n.min(self.items.len())].to_vec(),
            ..self.clone()
        }
    }

    /// Caption text for an item, falling back to a label derived from its id.
    pub fn caption(&self, index: usize) -> String {
        let item = &self.items[index];
        item.caption.clone().unwrap_or_else(|| format!("item {}", item.id))
    }
}

pub fn fixture(kind: FixtureKind, count: usize, shape: ImageShape, noise: f64, seed: u64) -> Dataset {
    let dim = shape.len();
    let patterns = match kind {
        FixtureKind::Correlated => fixtures::correlated(count, dim, noise, seed),
        FixtureKind::Separable => fixtures::separable(count, dim, seed),
        FixtureKind::RandomUnit => fixtures::random_unit(count, dim, seed),
    };
    let items = patterns
        .into_iter()
        .enumerate()
        .map(|(i, p)| Item {
            id: i as u32,
            image: Image::new(shape, p).expect("fixture length matches shape"),
            caption: None,
        })
        .collect();
    Dataset {
        items,
        shape,
        pixel_valued: kind != FixtureKind::RandomUnit,
        embeddings: None,
    }
}

fn unreadable(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Unreadable {
        path: path.to_path_buf(),
        source,
    }
}

/// Decodes a binary (P6) PPM, resamples it to `shape` and scales to `[0, 1]`.
pub fn load_ppm(path: &Path, shape: ImageShape) -> Result<Image, DatasetError> {
    let bytes = std::fs::read(path).map_err(unreadable(path))?;
    let malformed = |reason: String| DatasetError::MalformedPpm {
        path: path.to_path_buf(),
        reason,
    };
    if !bytes.starts_with(b"P6") {
        return Err(malformed("missing P6 magic".into()));
    }
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm).map_err(|e| malformed(e.to_string()))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, raw): (usize, Vec<u8>) = match shape.channels {
        1 => (1, decoded.to_luma8().into_raw()),
        3 => (3, decoded.to_rgb8().into_raw()),
        c => return Err(malformed(format!("cannot produce {c} channels from RGB"))),
    };
    let data = raw.into_iter().map(|v| v as f64 / 255.0).collect();
    let source = Image::new(ImageShape::new(height, width, channels), data).expect("decoder output matches its size");
    Ok(source.resample_bilinear(shape.height, shape.width))
}

/// Reads `id<TAB>caption` lines. Blank lines are skipped.
pub fn read_captions(path: &Path, known_ids: &[u32]) -> Result<BTreeMap<u32, String>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(unreadable(path))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, caption) = line
            .split_once('\t')
            .ok_or(DatasetError::MalformedCaption { line: line_no })?;
        let mismatch = || DatasetError::CaptionIdMismatch {
            line: line_no,
            id: id.to_string(),
        };
        let id: u32 = id.trim().parse().map_err(|_| mismatch())?;
        if !known_ids.contains(&id) {
            return Err(mismatch());
        }
        out.insert(id, caption.to_string());
    }
    Ok(out)
}

fn items_from_table(table: &EmbeddingTable, shape: ImageShape) -> Result<Vec<Item>, DatasetError> {
    table
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let image = Image::new(shape, e.original.clone()).map_err(|_| DatasetError::ShapeMismatch {
                shape,
                expected: shape.len(),
                got: e.original.len(),
            })?;
            Ok(Item {
                id: i as u32,
                image,
                caption: None,
            })
        })
        .collect()
}

/// Loads a directory of PPM images (ids assigned in lexicographic filename
/// order) or a single HENB file. A directory may also hold one `.henb`
/// container, which is kept as the embedding table; without PPMs its
/// originals become the dataset.
pub fn load_dataset(path: &Path, shape: ImageShape, captions: Option<&Path>) -> Result<Dataset, DatasetError> {
    let (mut items, embeddings) = if path.is_file() {
        let table = henb::load_embedding_table(path)?;
        (items_from_table(&table, shape)?, Some(table))
    } else {
        let mut ppms = Vec::new();
        let mut henbs = Vec::new();
        for entry in std::fs::read_dir(path).map_err(unreadable(path))? {
            let p = entry.map_err(unreadable(path))?.path();
            match p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
                Some("ppm") => ppms.push(p),
                Some("henb") => henbs.push(p),
                _ => {}
            }
        }
        ppms.sort();
        henbs.sort();
        let table = match henbs.first() {
            Some(p) => Some(henb::load_embedding_table(p)?),
            None => None,
        };
        let items = if !ppms.is_empty() {
            ppms.iter()
                .enumerate()
                .map(|(i, p)| {
                    Ok(Item {
                        id: i as u32,
                        image: load_ppm(p, shape)?,
                        caption: None,
                    })
                })
                .collect::<Result<Vec<_>, DatasetError>>()?
        } else if let Some(t) = &table {
            items_from_table(t, shape)?
        } else {
            return Err(DatasetError::Empty { path: path.to_path_buf() });
        };
        (items, table)
    };

    let default_captions = path.join("captions.tsv");
    let caption_file = captions.map(Path::to_path_buf).or_else(|| path.is_dir().then_some(default_captions).filter(|p| p.exists()));
    if let Some(file) = caption_file {
        let ids: Vec<u32> = items.iter().map(|i| i.id).collect();
        let mut captions = read_captions(&file, &ids)?;
        for item in &mut items {
            item.caption = captions.remove(&item.id);
        }
    }
    let pixel_valued = items.iter().all(|i| i.image.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    Ok(Dataset {
        items,
        shape,
        pixel_valued,
        embeddings,
    })
}

/// The dataset a config points at: a loaded path or a generated fixture.
pub fn from_config(config: &ExperimentConfig) -> anyhow::Result<Dataset> {
    Ok(match &config.dataset_path {
        Some(path) => load_dataset(path, config.image_shape, config.captions_path.as_deref())?,
        None => {
            let mut data = fixture(
                config.fixture,
                config.fixture_size(),
                config.image_shape,
                config.fixture_noise,
                config.seed,
            );
            if let Some(path) = &config.captions_path {
                let ids: Vec<u32> = data.items.iter().map(|i| i.id).collect();
                let mut captions = read_captions(path, &ids)?;
                for item in &mut data.items {
                    item.caption = captions.remove(&item.id);
                }
            }
            data
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_ppm(path: &Path, width: usize, height: usize, value: u8) {
        let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
        bytes.extend(std::iter::repeat_n(value, width * height * 3));
        std::fs::write(path, bytes).unwrap();
    }

    #[test]
    fn loads_ppm_directory_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        write_ppm(&dir.path().join("b.ppm"), 28, 28, 255);
        write_ppm(&dir.path().join("a.ppm"), 28, 28, 0);
        write_ppm(&dir.path().join("c.ppm"), 56, 56, 51);
        let data = load_dataset(dir.path(), ImageShape::new(28, 28, 3), None).unwrap();
        assert_eq!(data.len(), 3);
        assert!(data.pixel_valued);
        assert_eq!(data.items[0].image.get(0, 0, 0), 0.0);
        assert_eq!(data.items[1].image.get(3, 3, 2), 1.0);
        assert_eq!(data.items[2].image.shape(), ImageShape::new(28, 28, 3));
        assert!((data.items[2].image.get(10, 10, 1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn captions_attach_and_unknown_ids_fail() {
        let dir = tempfile::tempdir().unwrap();
        write_ppm(&dir.path().join("x.ppm"), 4, 4, 10);
        write_ppm(&dir.path().join("y.ppm"), 4, 4, 20);
        std::fs::write(dir.path().join("captions.tsv"), "1\ta red square\n0\tthe other one\n").unwrap();
        let data = load_dataset(dir.path(), ImageShape::new(4, 4, 3), None).unwrap();
        assert_eq!(data.items[1].caption.as_deref(), Some("a red square"));

        std::fs::write(dir.path().join("captions.tsv"), "7\tnobody\n").unwrap();
        let err = load_dataset(dir.path(), ImageShape::new(4, 4, 3), None).unwrap_err();
        assert!(matches!(err, DatasetError::CaptionIdMismatch { .. }));
    }

    #[test]
    fn malformed_header_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.ppm"), b"P3\n1 1\n255\n0 0 0\n").unwrap();
        let err = load_dataset(dir.path(), ImageShape::new(4, 4, 3), None).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedPpm { .. }));

        std::fs::write(dir.path().join("bad.ppm"), b"P6\n4 4\n255\nshort").unwrap();
        let err = load_dataset(dir.path(), ImageShape::new(4, 4, 3), None).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedPpm { .. }));
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset(dir.path(), ImageShape::new(4, 4, 3), None),
            Err(DatasetError::Empty { .. })
        ));
    }

    #[test]
    fn fixtures_are_seeded() {
        let shape = ImageShape::new(4, 4, 3);
        assert_eq!(fixture(FixtureKind::Correlated, 5, shape, 0.05, 1), fixture(FixtureKind::Correlated, 5, shape, 0.05, 1));
        assert!(!fixture(FixtureKind::RandomUnit, 5, shape, 0.0, 1).pixel_valued);
    }
}

use super::Dataset;
use crate::error::{Error, Result};
use std::path::Path;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Loads an MNIST-style IDX image/label pair.
///
/// Big-endian headers: image magic 0x00000803 followed by count/rows/cols,
/// label magic 0x00000801 followed by count. Pixels are scaled to [0,1] and
/// the whole dataset is mean-centered; `limit` truncates deterministically
/// from the front.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    limit: Option<usize>,
) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let image_bytes =
        std::fs::read(images_path).map_err(|e| Error::io(images_path.display().to_string(), e))?;
    let label_bytes =
        std::fs::read(labels_path).map_err(|e| Error::io(labels_path.display().to_string(), e))?;

    let image_name = images_path.display().to_string();
    let label_name = labels_path.display().to_string();

    let magic = read_be_u32(&image_bytes, 0, &image_name)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::BadMagic { path: image_name, expected: IMAGE_MAGIC, found: magic });
    }
    let n_images = read_be_u32(&image_bytes, 4, &image_name)? as usize;
    let rows = read_be_u32(&image_bytes, 8, &image_name)? as usize;
    let cols = read_be_u32(&image_bytes, 12, &image_name)? as usize;
    let dim = rows * cols;
    let needed = 16 + n_images * dim;
    if image_bytes.len() < needed {
        return Err(Error::TruncatedFile {
            path: image_name,
            needed,
            available: image_bytes.len(),
        });
    }

    let magic = read_be_u32(&label_bytes, 0, &label_name)?;
    if magic != LABEL_MAGIC {
        return Err(Error::BadMagic { path: label_name, expected: LABEL_MAGIC, found: magic });
    }
    let n_labels = read_be_u32(&label_bytes, 4, &label_name)? as usize;
    if n_labels != n_images {
        return Err(Error::CountMismatch { images: n_images, labels: n_labels });
    }
    let needed = 8 + n_labels;
    if label_bytes.len() < needed {
        return Err(Error::TruncatedFile {
            path: label_name,
            needed,
            available: label_bytes.len(),
        });
    }

    let n = limit.map_or(n_images, |l| l.min(n_images));
    let mut features = Vec::with_capacity(n * dim);
    for px in &image_bytes[16..16 + n * dim] {
        features.push(*px as f64 / 255.0);
    }
    let mut labels = Vec::with_capacity(n);
    for b in &label_bytes[8..8 + n] {
        labels.push(*b as usize);
    }
    let class_count = 10;
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::InvalidSpec(format!("IDX label {bad} exceeds 9")));
    }

    let mut ds = Dataset::new(features, labels, dim, class_count)?;
    ds.mean_center();
    Ok(ds)
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::TruncatedFile {
            path: path.to_string(),
            needed: end,
            available: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx_pair(dir: &std::path::Path, n: usize, rows: usize, cols: usize) -> (std::path::PathBuf, std::path::PathBuf) {
        let img_path = dir.join("images.idx3-ubyte");
        let lbl_path = dir.join("labels.idx1-ubyte");
        let mut img = Vec::new();
        img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        img.extend_from_slice(&(n as u32).to_be_bytes());
        img.extend_from_slice(&(rows as u32).to_be_bytes());
        img.extend_from_slice(&(cols as u32).to_be_bytes());
        for i in 0..n * rows * cols {
            img.push((i % 251) as u8);
        }
        let mut lbl = Vec::new();
        lbl.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        lbl.extend_from_slice(&(n as u32).to_be_bytes());
        for i in 0..n {
            lbl.push((i % 10) as u8);
        }
        std::fs::File::create(&img_path).unwrap().write_all(&img).unwrap();
        std::fs::File::create(&lbl_path).unwrap().write_all(&lbl).unwrap();
        (img_path, lbl_path)
    }

    #[test]
    fn parses_and_centers_a_valid_pair() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx_pair(dir.path(), 12, 2, 3);
        let ds = load_idx(&img, &lbl, None).unwrap();
        assert_eq!(ds.len(), 12);
        assert_eq!(ds.dim(), 6);
        assert_eq!(ds.class_count(), 10);
        assert_eq!(ds.label(3), 3);
        // globally mean-centered
        let total: f64 = (0..ds.len()).flat_map(|i| ds.feature_row(i).to_vec()).sum();
        assert!(total.abs() < 1e-9);
    }

    #[test]
    fn limit_truncates_from_the_front() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx_pair(dir.path(), 12, 2, 2);
        let ds = load_idx(&img, &lbl, Some(5)).unwrap();
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.labels(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx_pair(dir.path(), 3, 2, 2);
        let mut bytes = std::fs::read(&img).unwrap();
        bytes[..4].copy_from_slice(&0xDEADBEEFu32.to_be_bytes());
        std::fs::write(&img, &bytes).unwrap();
        match load_idx(&img, &lbl, None) {
            Err(Error::BadMagic { found, .. }) => assert_eq!(found, 0xDEADBEEF),
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncation_and_count_mismatch_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx_pair(dir.path(), 4, 2, 2);
        let bytes = std::fs::read(&img).unwrap();
        std::fs::write(&img, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_idx(&img, &lbl, None), Err(Error::TruncatedFile { .. })));

        let (img, lbl) = write_idx_pair(dir.path(), 4, 2, 2);
        let mut lbl_bytes = std::fs::read(&lbl).unwrap();
        lbl_bytes[4..8].copy_from_slice(&7u32.to_be_bytes());
        std::fs::write(&lbl, &lbl_bytes).unwrap();
        assert!(matches!(load_idx(&img, &lbl, None), Err(Error::CountMismatch { .. })));
    }
}

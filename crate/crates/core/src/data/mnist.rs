//! IDX container reader (optionally gzip-compressed), as used by MNIST.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

/// Train/validation/test splits with pixels scaled to `[0, 1]`.
#[derive(Clone, Debug)]
pub struct DatasetHandle {
    pub name: String,
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    /// Images are `channels x rows x cols`.
    pub image_shape: (usize, usize, usize),
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Dataset {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| parse_err(path, e.to_string()))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| parse_err(path, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Parses an IDX byte buffer, returning its dimensions and unsigned-byte
/// payload.
pub fn parse_idx(bytes: &[u8], expected_magic: u32, path: &Path) -> Result<(Vec<usize>, Vec<u8>)> {
    if bytes.len() < 4 {
        return Err(parse_err(path, "file shorter than the IDX magic number"));
    }
    let magic = be_u32(bytes, 0);
    if magic != expected_magic {
        return Err(parse_err(
            path,
            format!("bad magic number {magic}, expected {expected_magic}"),
        ));
    }
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(parse_err(path, "truncated IDX header"));
    }
    let dims: Vec<usize> = (0..ndim).map(|d| be_u32(bytes, 4 + 4 * d) as usize).collect();
    let count: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < count {
        return Err(parse_err(
            path,
            format!("truncated payload: {} bytes, header promises {count}", payload.len()),
        ));
    }
    Ok((dims, payload[..count].to_vec()))
}

/// Reads an images file into one `[0, 1]`-scaled vector per image.
pub fn read_images(path: &Path) -> Result<(Vec<Vec<f64>>, (usize, usize))> {
    let bytes = read_maybe_gz(path)?;
    let (dims, data) = parse_idx(&bytes, IMAGES_MAGIC, path)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let per = rows * cols;
    let images = (0..n)
        .map(|i| data[i * per..(i + 1) * per].iter().map(|&p| p as f64 / 255.0).collect())
        .collect();
    Ok((images, (rows, cols)))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_maybe_gz(path)?;
    let (_, data) = parse_idx(&bytes, LABELS_MAGIC, path)?;
    Ok(data.into_iter().map(usize::from).collect())
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(&name);
        if p.is_file() {
            return Ok(p);
        }
    }
    // Some mirrors use a dot instead of a dash before "idx".
    let dotted = stem.replacen("-idx", ".idx", 1);
    for name in [dotted.clone(), format!("{dotted}.gz")] {
        let p = dir.join(&name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(parse_err(&dir.join(stem), "file not found (also tried .gz)"))
}

fn load_split(dir: &Path, prefix: &str) -> Result<(Dataset, (usize, usize))> {
    let img_path = locate(dir, &format!("{prefix}-images-idx3-ubyte"))?;
    let lbl_path = locate(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
    let (images, shape) = read_images(&img_path)?;
    let labels = read_labels(&lbl_path)?;
    if images.len() != labels.len() {
        return Err(parse_err(
            &lbl_path,
            format!(
                "{} labels for {} images in {}",
                labels.len(),
                images.len(),
                img_path.display()
            ),
        ));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    Ok((Dataset::new(images, labels, classes)?, shape))
}

/// Loads the four standard MNIST files from `dir`. The last
/// `validation_size` training examples become the validation split.
pub fn ingest_mnist(dir: &Path, validation_size: usize) -> Result<DatasetHandle> {
    let (train, shape) = load_split(dir, "train")?;
    let (test, _) = load_split(dir, "t10k")?;
    let (train, validation) = train.split_tail(validation_size);
    Ok(DatasetHandle {
        name: "mnist".into(),
        train,
        validation,
        test,
        image_shape: (1, shape.0, shape.1),
    })
}

/// Encodes an IDX file with unsigned-byte payload (used by tests and tools).
pub fn encode_idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + payload.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_gz(path: &Path, bytes: &[u8]) {
        let f = fs::File::create(path).unwrap();
        let mut enc = flate2::write::GzEncoder::new(f, flate2::Compression::default());
        enc.write_all(bytes).unwrap();
        enc.finish().unwrap();
    }

    fn write_split(dir: &Path, prefix: &str, labels: &[u8], gz: bool) {
        let n = labels.len() as u32;
        let pixels: Vec<u8> = (0..n * 4).map(|i| (i * 17 % 256) as u8).collect();
        let img = encode_idx(IMAGES_MAGIC, &[n, 2, 2], &pixels);
        let lbl = encode_idx(LABELS_MAGIC, &[n], labels);
        let (ip, lp) = (
            dir.join(format!("{prefix}-images-idx3-ubyte")),
            dir.join(format!("{prefix}-labels-idx1-ubyte")),
        );
        if gz {
            write_gz(&dir.join(format!("{prefix}-images-idx3-ubyte.gz")), &img);
            write_gz(&dir.join(format!("{prefix}-labels-idx1-ubyte.gz")), &lbl);
        } else {
            fs::write(ip, img).unwrap();
            fs::write(lp, lbl).unwrap();
        }
    }

    #[test]
    fn reads_plain_and_gzip() {
        for gz in [false, true] {
            let dir = tempfile::tempdir().unwrap();
            write_split(dir.path(), "train", &[5, 0, 4, 1, 9], gz);
            write_split(dir.path(), "t10k", &[7, 2], gz);
            let h = ingest_mnist(dir.path(), 2).unwrap();
            assert_eq!(h.train.labels, vec![5, 0, 4]);
            assert_eq!(h.validation.labels, vec![1, 9]);
            assert_eq!(h.test.len(), 2);
            assert_eq!(h.image_shape, (1, 2, 2));
            assert_eq!(h.train.inputs[0], vec![0.0, 17.0 / 255.0, 34.0 / 255.0, 51.0 / 255.0]);
            assert!(h.train.inputs.iter().flatten().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn corrupted_magic_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        write_split(dir.path(), "train", &[1, 2], false);
        write_split(dir.path(), "t10k", &[1], false);
        let p = dir.path().join("train-images-idx3-ubyte");
        let mut bytes = fs::read(&p).unwrap();
        bytes[3] = 0x02;
        fs::write(&p, bytes).unwrap();
        let err = ingest_mnist(dir.path(), 0).unwrap_err().to_string();
        assert!(err.contains("train-images-idx3-ubyte"), "{err}");
        assert!(err.contains("magic"), "{err}");
    }

    #[test]
    fn truncated_payload_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, encode_idx(IMAGES_MAGIC, &[3, 2, 2], &[0; 8])).unwrap();
        assert!(read_images(&p).unwrap_err().to_string().contains("truncated"));

        write_split(dir.path(), "train", &[1, 2, 3], false);
        write_split(dir.path(), "t10k", &[1], false);
        fs::write(
            dir.path().join("train-labels-idx1-ubyte"),
            encode_idx(LABELS_MAGIC, &[2], &[1, 2]),
        )
        .unwrap();
        assert!(ingest_mnist(dir.path(), 0)
            .unwrap_err()
            .to_string()
            .contains("labels for 3 images"));
    }
}

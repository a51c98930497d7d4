//! MNIST-style IDX files: big-endian u32 header fields followed by raw bytes.

use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    fn err(&self, offset: usize, message: String) -> Error {
        Error::Format {
            offset: offset as u64,
            message: format!("{} file: {message}", self.what),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let Some(chunk) = self.bytes.get(self.pos..end) else {
            return Err(self.err(self.pos, "truncated header".into()));
        };
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n);
        match end.and_then(|end| self.bytes.get(self.pos..end)) {
            Some(s) => {
                self.pos += n;
                Ok(s)
            }
            None => Err(self.err(
                self.bytes.len(),
                format!(
                    "truncated payload: expected {n} bytes from offset {}, file has {}",
                    self.pos,
                    self.bytes.len().saturating_sub(self.pos)
                ),
            )),
        }
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(self.err(
                0,
                format!("bad magic 0x{found:08x}, expected 0x{expected:08x}"),
            ));
        }
        Ok(())
    }
}

/// Parse in-memory IDX image and label files. Pixels are divided by 255 and
/// the class count is `max(label) + 1`.
pub fn parse_idx<T: Scalar>(images: &[u8], labels: &[u8]) -> Result<Dataset<T>> {
    let mut img = Reader::new(images, "images");
    img.magic(IMAGES_MAGIC)?;
    let count = img.u32()? as usize;
    let rows = img.u32()? as usize;
    let cols = img.u32()? as usize;
    let dims = rows * cols;
    let total = count
        .checked_mul(dims)
        .ok_or_else(|| img.err(4, format!("{count} images of {rows}x{cols} overflow")))?;
    let pixels = img.take(total)?;

    let mut lab = Reader::new(labels, "labels");
    lab.magic(LABELS_MAGIC)?;
    let label_count_offset = lab.pos;
    let label_count = lab.u32()? as usize;
    if label_count != count {
        return Err(lab.err(
            label_count_offset,
            format!("label count {label_count} does not match image count {count}"),
        ));
    }
    let label_bytes = lab.take(count)?;

    let scale = T::of(255.0);
    let features = pixels.iter().map(|&p| T::of(f64::from(p)) / scale).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&b| usize::from(b)).collect();
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(Matrix::new(count, dims, features)?, labels, num_classes)
}

pub fn load_idx<T: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset<T>> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx(&images, &labels)
}

/// Encode a dataset as `(images, labels)` IDX bytes, laying features out as a
/// `1 x dims` image. Features are quantised to `round(255 * x)`.
pub fn encode_idx<T: Scalar>(dataset: &Dataset<T>) -> Result<(Vec<u8>, Vec<u8>)> {
    if dataset.num_classes() > 256 {
        return Err(Error::config("IDX labels are single bytes; at most 256 classes"));
    }
    let count = u32::try_from(dataset.len()).map_err(|_| Error::config("too many samples"))?;
    let dims = u32::try_from(dataset.dims()).map_err(|_| Error::config("too many features"))?;
    let mut images = Vec::with_capacity(16 + dataset.features().as_slice().len());
    for field in [IMAGES_MAGIC, count, 1, dims] {
        images.extend_from_slice(&field.to_be_bytes());
    }
    for &v in dataset.features().as_slice() {
        let q = (v.as_f64() * 255.0).round().clamp(0.0, 255.0);
        images.push(q as u8);
    }
    let mut labels = Vec::with_capacity(8 + dataset.len());
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&count.to_be_bytes());
    labels.extend(dataset.labels().iter().map(|&y| y as u8));
    Ok((images, labels))
}

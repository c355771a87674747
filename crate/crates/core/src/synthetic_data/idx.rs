//! Big-endian IDX container used by the MNIST distribution.

use std::path::Path;

use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Grayscale images stored contiguously, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
}

impl IdxImages {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 || !pixels.len().is_multiple_of(rows * cols) {
            return Err(Error::Shape(format!(
                "{} pixels do not form {rows}x{cols} images",
                pixels.len()
            )));
        }
        Ok(IdxImages { rows, cols, pixels })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols)
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn fail(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Ingestion {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        if end > self.bytes.len() {
            return Err(self.fail(
                self.bytes.len(),
                format!("file truncated while reading {what}"),
            ));
        }
        let v = u32::from_be_bytes(self.bytes[self.pos..end].try_into().unwrap());
        self.pos = end;
        Ok(v)
    }

    fn magic(&mut self, expect: u32) -> Result<()> {
        let m = self.u32("magic number")?;
        if m != expect {
            return Err(self.fail(0, format!("bad magic 0x{m:08x}, expected 0x{expect:08x}")));
        }
        Ok(())
    }

    fn payload(&mut self, len: usize) -> Result<&[u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(self.fail(
                self.bytes.len(),
                format!(
                    "file truncated: payload needs {len} bytes from offset {}, found {}",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = read_file(path)?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    r.magic(IMAGE_MAGIC)?;
    let n = r.u32("image count")? as usize;
    let rows = r.u32("row count")? as usize;
    let cols = r.u32("column count")? as usize;
    if rows == 0 || cols == 0 {
        return Err(r.fail(8, "zero image dimension"));
    }
    let pixels = r.payload(n * rows * cols)?.to_vec();
    IdxImages::new(rows, cols, pixels)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    r.magic(LABEL_MAGIC)?;
    let n = r.u32("label count")? as usize;
    Ok(r.payload(n)?.to_vec())
}

pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<()> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGE_MAGIC,
        images.count() as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
        let imgs = IdxImages::new(2, 3, (0..18).collect()).unwrap();
        write_idx_images(&ip, &imgs).unwrap();
        write_idx_labels(&lp, &[1, 2, 3]).unwrap();
        let raw = std::fs::read(&ip).unwrap();
        assert_eq!(&raw[..4], &[0, 0, 8, 3]);
        assert_eq!(read_idx_images(&ip).unwrap(), imgs);
        assert_eq!(read_idx_labels(&lp).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn malformed_files_name_path_and_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad");
        std::fs::write(&p, [0, 0, 8, 1, 0, 0, 0, 1, 7]).unwrap();
        match read_idx_images(&p) {
            Err(Error::Ingestion { path, offset, .. }) => {
                assert_eq!(path, p);
                assert_eq!(offset, 0);
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, [0, 0, 8, 1, 0, 0, 0, 5, 7, 7]).unwrap();
        match read_idx_labels(&p) {
            Err(Error::Ingestion {
                offset, message, ..
            }) => {
                assert_eq!(offset, 10);
                assert!(message.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, [0, 0, 8]).unwrap();
        assert!(matches!(
            read_idx_labels(&p),
            Err(Error::Ingestion { offset: 3, .. })
        ));
    }
}

//! Binary dataset container.
//!
//! Layout, all integers little-endian: magic `GNNDATA1`, `u32` version, `u64`
//! sample count, `u64` features `F`, `u64` nodes `N`, `u64` class count, then
//! per sample `F * N` `f64` values (feature-major) followed by a `u64` label.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{GraphSignal, LabeledDataset};

const MAGIC: &[u8; 8] = b"GNNDATA1";
const VERSION: u32 = 1;

pub fn write_dataset<W: Write>(mut w: W, data: &LabeledDataset) -> Result<()> {
    let (f, n) = data.signals.first().map_or((0, 0), |s| (s.n_features(), s.n_nodes()));
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [data.len(), f, n, data.n_classes] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for (s, &label) in data.signals.iter().zip(&data.labels) {
        for v in s.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(label as u64).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("dataset container is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn read_count<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    usize::try_from(read_u64(r)?).map_err(|_| Error::Format(format!("{what} does not fit in memory")))
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<LabeledDataset> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a dataset container (bad magic)".into()));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version).map_err(truncated)?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let count = read_count(&mut r, "sample count")?;
    let f = read_count(&mut r, "feature count")?;
    let n = read_count(&mut r, "node count")?;
    let n_classes = read_count(&mut r, "class count")?;
    if count > 0 && (f == 0 || n == 0) {
        return Err(Error::Format("nonempty dataset with empty signal shape".into()));
    }
    let width = f.checked_mul(n).ok_or_else(|| Error::Format("signal shape overflows".into()))?;
    let mut signals = Vec::with_capacity(count.min(1 << 20));
    let mut labels = Vec::with_capacity(count.min(1 << 20));
    let mut buf = vec![0u8; width * 8];
    for _ in 0..count {
        r.read_exact(&mut buf).map_err(truncated)?;
        let values = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        signals.push(GraphSignal::new(f, n, values)?);
        labels.push(read_count(&mut r, "label")?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after dataset".into()));
    }
    LabeledDataset::new(signals, labels, n_classes).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_dataset(path: &Path, data: &LabeledDataset) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), data)
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

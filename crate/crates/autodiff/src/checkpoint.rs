//! Named-array checkpoint files.
//!
//! Layout (little-endian): magic `S360CKPT`, u32 array count, then per array
//! u32 name length, UTF-8 name, u32 rank, u32 dims, f32 values. A text
//! manifest listing `name<TAB>shape<TAB>count` accompanies each file.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::numel;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"S360CKPT";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn u32_of(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| bad(format!("{what} {v} does not fit in u32")))
}

pub fn write_checkpoint_to<W: Write>(w: &mut W, arrays: &[NamedArray]) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&u32_of(arrays.len(), "array count")?)?;
    for a in arrays {
        if numel(&a.shape) != a.values.len() {
            return Err(bad(format!("{}: shape {:?} vs {} values", a.name, a.shape, a.values.len())));
        }
        w.write_all(&u32_of(a.name.len(), "name length")?)?;
        w.write_all(a.name.as_bytes())?;
        w.write_all(&u32_of(a.shape.len(), "rank")?)?;
        for &d in &a.shape {
            w.write_all(&u32_of(d, "dimension")?)?;
        }
        let mut buf = Vec::with_capacity(a.values.len() * 4);
        for v in &a.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| bad(format!("truncated checkpoint: {e}")))?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn read_checkpoint_from<R: Read>(r: &mut R) -> Result<Vec<NamedArray>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("missing magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let count = read_u32(r)?;
    let mut arrays = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = read_u32(r)?;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|e| bad(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| bad("name is not UTF-8"))?;
        let rank = read_u32(r)?;
        let shape = (0..rank).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
        let mut raw = vec![0u8; numel(&shape) * 4];
        r.read_exact(&mut raw).map_err(|e| bad(format!("{name}: truncated values: {e}")))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        arrays.push(NamedArray { name, shape, values });
    }
    Ok(arrays)
}

pub fn manifest(arrays: &[NamedArray]) -> String {
    let mut out = String::new();
    for a in arrays {
        let dims: Vec<String> = a.shape.iter().map(|d| d.to_string()).collect();
        out.push_str(&format!("{}\t{}\t{}\n", a.name, dims.join("x"), a.values.len()));
    }
    out
}

/// Writes `path` and `path` with `.manifest.txt` appended.
pub fn save_checkpoint(path: &Path, arrays: &[NamedArray]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint_to(&mut f, arrays)?;
    f.flush()?;
    std::fs::write(manifest_path(path), manifest(arrays))?;
    Ok(())
}

pub fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.txt");
    s.into()
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<NamedArray>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint_from(&mut f)
}

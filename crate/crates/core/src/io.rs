//! Saliency-map files.
//!
//! Binary layout: the 4-byte magic `S360`, width and height as u32 LE, then
//! `width × height` f32 LE values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::map::{FixationMap, SaliencyMap};
use crate::sphere::EquirectGrid;

pub const MAP_MAGIC: &[u8; 4] = b"S360";

pub fn write_map_to<W: Write>(w: &mut W, map: &SaliencyMap) -> Result<()> {
    w.write_all(MAP_MAGIC)?;
    w.write_all(&(map.width() as u32).to_le_bytes())?;
    w.write_all(&(map.height() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(map.values().len() * 4);
    for &v in map.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_map_from<R: Read>(r: &mut R) -> Result<SaliencyMap> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAP_MAGIC {
        return Err(Error::data("not a saliency map file (bad magic)"));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let width = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let height = u32::from_le_bytes(word) as usize;
    let grid = EquirectGrid::new(width, height)?;
    let mut raw = vec![0u8; grid.len() * 4];
    r.read_exact(&mut raw)
        .map_err(|e| Error::data(format!("truncated saliency map: {e}")))?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    SaliencyMap::from_values(grid, values)
}

pub fn write_map(path: &Path, map: &SaliencyMap) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_map_to(&mut f, map)?;
    f.flush()?;
    Ok(())
}

pub fn read_map(path: &Path) -> Result<SaliencyMap> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_map_from(&mut f)
}

/// Fixation maps use the same container with values 0 and 1.
pub fn write_fixations(path: &Path, fixations: &FixationMap) -> Result<()> {
    write_map(path, &fixations.to_saliency())
}

pub fn read_fixations(path: &Path) -> Result<FixationMap> {
    let m = read_map(path)?;
    let hits = m.values().iter().map(|&v| v > 0.5).collect();
    FixationMap::from_hits(m.grid(), hits)
}

/// Grayscale PNG, min–max scaled to `0..=255`.
pub fn save_png(path: &Path, map: &SaliencyMap) -> Result<()> {
    let (lo, hi) = (map.min(), map.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = map
        .values()
        .iter()
        .map(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let img = image::GrayImage::from_raw(map.width() as u32, map.height() as u32, pixels)
        .ok_or_else(|| Error::input("image buffer size mismatch"))?;
    img.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_for_f32_values() {
        let g = EquirectGrid::new(6, 3).unwrap();
        let m = SaliencyMap::from_fn(g, |x, y| (x as f32 * 0.1 + y as f32) as f64);
        let mut buf = Vec::new();
        write_map_to(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], b"S360");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 6);
        assert_eq!(buf.len(), 12 + 18 * 4);
        assert_eq!(read_map_from(&mut &buf[..]).unwrap(), m);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(read_map_from(&mut &b"XXXX\0\0\0\0"[..]), Err(Error::Data(_))));
        let mut buf = Vec::new();
        write_map_to(&mut buf, &SaliencyMap::zeros(EquirectGrid::new(4, 2).unwrap())).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(matches!(read_map_from(&mut &buf[..]), Err(Error::Data(_))));
    }

    #[test]
    fn png_and_fixation_files() {
        let dir = tempfile::tempdir().unwrap();
        let g = EquirectGrid::new(8, 4).unwrap();
        let mut f = FixationMap::empty(g);
        f.mark(3, 2);
        let p = dir.path().join("fix.bin");
        write_fixations(&p, &f).unwrap();
        assert_eq!(read_fixations(&p).unwrap(), f);
        let png = dir.path().join("m.png");
        save_png(&png, &f.to_saliency()).unwrap();
        let img = image::open(&png).unwrap().to_luma8();
        assert_eq!(img.get_pixel(3, 2).0[0], 255);
        assert_eq!(img.get_pixel(0, 0).0[0], 0);
    }
}

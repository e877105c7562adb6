//! Flat binary field files.
//!
//! Layout: a 64-byte header
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ELF3"
//! 4       4     version, u32 LE, currently 1
//! 8       4     n, u32 LE
//! 12      4     component count, u32 LE, one of {1, 3, 9}
//! 16      8     box half-width, f64 LE
//! 24      40    reserved, zero
//! ```
//!
//! followed by `ncomp * n^3` f64 LE samples, component-major, each
//! component in node order with k fastest. Everything is explicit little
//! endian so files are portable and byte-stable.

use super::{Grid3, ScalarField, TensorField, VectorField};
use crate::error::{ElkError, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const ELF3_HEADER_LEN: usize = 64;
const MAGIC: &[u8; 4] = b"ELF3";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub enum AnyField {
    Scalar(ScalarField),
    Vector(VectorField),
    Tensor(TensorField),
}

impl AnyField {
    pub fn grid(&self) -> Grid3 {
        match self {
            AnyField::Scalar(f) => f.grid,
            AnyField::Vector(f) => f.grid(),
            AnyField::Tensor(f) => f.grid(),
        }
    }

    pub fn ncomp(&self) -> usize {
        match self {
            AnyField::Scalar(_) => 1,
            AnyField::Vector(_) => 3,
            AnyField::Tensor(_) => 9,
        }
    }

    fn component(&self, c: usize) -> &[f64] {
        match self {
            AnyField::Scalar(f) => &f.data,
            AnyField::Vector(f) => &f.comps[c].data,
            AnyField::Tensor(f) => &f.comps[c / 3][c % 3].data,
        }
    }
}

pub fn write_field(path: &Path, field: &AnyField) -> Result<()> {
    let grid = field.grid();
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = [0u8; ELF3_HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..12].copy_from_slice(&(grid.n() as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(field.ncomp() as u32).to_le_bytes());
    header[16..24].copy_from_slice(&grid.box_half().to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(grid.len() * 8);
    for c in 0..field.ncomp() {
        buf.clear();
        for v in field.component(c) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<AnyField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; ELF3_HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| ElkError::BadFieldFile("short header".into()))?;
    if &header[0..4] != MAGIC {
        return Err(ElkError::BadFieldFile("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(ElkError::BadFieldFile(format!("unknown version {version}")));
    }
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let ncomp = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if !matches!(ncomp, 1 | 3 | 9) {
        return Err(ElkError::BadFieldFile(format!("bad component count {ncomp}")));
    }
    if header[24..].iter().any(|&b| b != 0) {
        return Err(ElkError::BadFieldFile("nonzero reserved bytes".into()));
    }
    let box_half = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let grid = Grid3::new(n, box_half)?;

    let mut comps: Vec<Vec<f64>> = Vec::with_capacity(ncomp);
    let mut buf = vec![0u8; grid.len() * 8];
    for _ in 0..ncomp {
        r.read_exact(&mut buf)
            .map_err(|_| ElkError::BadFieldFile("truncated payload".into()))?;
        comps.push(
            buf.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        );
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(ElkError::BadFieldFile("trailing bytes".into()));
    }

    let scalar = |data: Vec<f64>| ScalarField { grid, data };
    Ok(match ncomp {
        1 => AnyField::Scalar(scalar(comps.pop().unwrap())),
        3 => {
            let c2 = comps.pop().unwrap();
            let c1 = comps.pop().unwrap();
            let c0 = comps.pop().unwrap();
            AnyField::Vector(VectorField {
                comps: [scalar(c0), scalar(c1), scalar(c2)],
            })
        }
        _ => {
            let mut it = comps.into_iter();
            let mut rows: Vec<[ScalarField; 3]> = Vec::with_capacity(3);
            for _ in 0..3 {
                let a = scalar(it.next().unwrap());
                let b = scalar(it.next().unwrap());
                let c = scalar(it.next().unwrap());
                rows.push([a, b, c]);
            }
            let r2 = rows.pop().unwrap();
            let r1 = rows.pop().unwrap();
            let r0 = rows.pop().unwrap();
            AnyField::Tensor(TensorField { comps: [r0, r1, r2] })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(field: AnyField) -> AnyField {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.elf3");
        write_field(&p, &field).unwrap();
        read_field(&p).unwrap()
    }

    #[test]
    fn scalar_roundtrip_is_bit_exact() {
        let g = Grid3::new(16, 2.5).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0] * 1.7 + (x[1] * x[2]).sin());
        let back = roundtrip(AnyField::Scalar(f.clone()));
        match back {
            AnyField::Scalar(b) => {
                assert_eq!(b.grid, g);
                assert!(f.data.iter().zip(&b.data).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn vector_and_tensor_roundtrip() {
        let g = Grid3::new(16, 1.0).unwrap();
        let v = VectorField::from_fn(g, |x| [x[0], -x[1], x[2] * x[0]]);
        match roundtrip(AnyField::Vector(v.clone())) {
            AnyField::Vector(b) => {
                for c in 0..3 {
                    assert_eq!(v.comps[c].data, b.comps[c].data);
                }
            }
            _ => panic!("wrong kind"),
        }
        let mut t = TensorField::zeros(g);
        for i in 0..3 {
            for j in 0..3 {
                t.comps[i][j] = ScalarField::from_fn(g, |x| x[i] * (j as f64 + 0.5));
            }
        }
        match roundtrip(AnyField::Tensor(t.clone())) {
            AnyField::Tensor(b) => {
                assert_eq!(t.comps[2][1].data, b.comps[2][1].data);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn file_size_arithmetic() {
        let g = Grid3::new(16, 1.0).unwrap();
        let f = ScalarField::zeros(g);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.elf3");
        write_field(&p, &AnyField::Scalar(f)).unwrap();
        let len = std::fs::metadata(&p).unwrap().len();
        assert_eq!(len, (ELF3_HEADER_LEN + 8 * 16 * 16 * 16) as u64);
    }

    #[test]
    fn rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.elf3");

        // bad magic
        let mut h = [0u8; ELF3_HEADER_LEN];
        h[0..4].copy_from_slice(b"NOPE");
        std::fs::File::create(&p).unwrap().write_all(&h).unwrap();
        assert!(read_field(&p).is_err());

        // good header, truncated payload
        let g = Grid3::new(16, 1.0).unwrap();
        let f = ScalarField::zeros(g);
        write_field(&p, &AnyField::Scalar(f)).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(read_field(&p), Err(ElkError::BadFieldFile(_))));
    }
}

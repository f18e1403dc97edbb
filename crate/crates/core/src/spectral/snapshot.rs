//! Field snapshot files.
//!
//! Binary layout (all little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `NUDGSNP1` |
//! | 4     | `n` (u32) |
//! | 4     | component count (u32, 1 or 2) |
//! | 8     | period `length` (f64) |
//! | 8     | `time` (f64) |
//! | 4     | metadata byte count `m` (u32) |
//! | m     | UTF-8 `key=value` lines |
//! | 16 n^2 per component | Fourier coefficients `(re, im)` as f64, flat grid order |
//!
//! Coefficients rather than grid values are stored so that a load/save
//! cycle reproduces the field bit for bit.
//!
//! CSV layout: a metadata line `# n=<n> length=<L> time=<t>`, the column
//! header `x,y,u1[,u2]`, then one row of grid values per point.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use num_complex::Complex;

use super::field::{ScalarField, SpectralVectorField};
use super::grid::TorusGrid;
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 8] = b"NUDGSNP1";

/// A vector field with its time stamp and free-form metadata.
#[derive(Clone, Debug)]
pub struct Snapshot<T: Real> {
    pub time: T,
    pub field: SpectralVectorField<T>,
    pub metadata: BTreeMap<String, String>,
}

impl<T: Real> Snapshot<T> {
    pub fn new(time: T, field: SpectralVectorField<T>) -> Self {
        Self {
            time,
            field,
            metadata: BTreeMap::new(),
        }
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let g = self.field.grid();
        let meta: String = self
            .metadata
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        w.write_all(MAGIC)?;
        w.write_all(&(g.n() as u32).to_le_bytes())?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&g.length().to_f64_lossy().to_le_bytes())?;
        w.write_all(&self.time.to_f64_lossy().to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(meta.as_bytes())?;
        for comp in self.field.components() {
            for c in comp.coeffs() {
                w.write_all(&c.re.to_f64_lossy().to_le_bytes())?;
                w.write_all(&c.im.to_f64_lossy().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad snapshot magic".into()));
        }
        let n = read_u32(&mut r)? as usize;
        let comps = read_u32(&mut r)? as usize;
        if comps != 2 {
            return Err(Error::Format(format!("expected 2 components, found {comps}")));
        }
        let length = read_f64(&mut r)?;
        let time = read_f64(&mut r)?;
        let mlen = read_u32(&mut r)? as usize;
        let mut mbytes = vec![0u8; mlen];
        r.read_exact(&mut mbytes)?;
        let meta = String::from_utf8(mbytes).map_err(|e| Error::Format(e.to_string()))?;
        let metadata = meta
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let grid = TorusGrid::with_length(n, T::lit(length))?;
        let mut parts = Vec::with_capacity(2);
        for _ in 0..2 {
            let mut coeffs = Vec::with_capacity(grid.len());
            for _ in 0..grid.len() {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                coeffs.push(Complex::new(T::lit(re), T::lit(im)));
            }
            parts.push(ScalarField::from_coeffs(&grid, coeffs)?);
        }
        let u2 = parts.pop().unwrap();
        let u1 = parts.pop().unwrap();
        Ok(Self {
            time: T::lit(time),
            field: SpectralVectorField::from_components(u1, u2)?,
            metadata,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let g = self.field.grid();
        writeln!(
            w,
            "# n={} length={} time={}",
            g.n(),
            g.length().to_f64_lossy(),
            self.time.to_f64_lossy()
        )?;
        writeln!(w, "x,y,u1,u2")?;
        let a = self.field.component(0).to_grid_values();
        let b = self.field.component(1).to_grid_values();
        let n = g.n();
        for j in 0..n {
            for i in 0..n {
                let p = j * n + i;
                writeln!(
                    w,
                    "{},{},{},{}",
                    g.coord(i).to_f64_lossy(),
                    g.coord(j).to_f64_lossy(),
                    a[p].to_f64_lossy(),
                    b[p].to_f64_lossy()
                )?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let head = lines
            .next()
            .ok_or_else(|| Error::Format("empty snapshot".into()))??;
        let head = head
            .strip_prefix('#')
            .ok_or_else(|| Error::Format("missing metadata line".into()))?;
        let mut n = None;
        let mut length = None;
        let mut time = None;
        for tok in head.split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                match k {
                    "n" => n = v.parse::<usize>().ok(),
                    "length" => length = v.parse::<f64>().ok(),
                    "time" => time = v.parse::<f64>().ok(),
                    _ => {}
                }
            }
        }
        let (n, length, time) = match (n, length, time) {
            (Some(n), Some(l), Some(t)) => (n, l, t),
            _ => return Err(Error::Format("metadata needs n, length and time".into())),
        };
        let _columns = lines.next();
        let grid: Arc<TorusGrid<T>> = TorusGrid::with_length(n, T::lit(length))?;
        let mut a = Vec::with_capacity(grid.len());
        let mut b = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Format(format!("expected 4 columns: {line}")));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("{s}: {e}")))
            };
            a.push(T::lit(parse(cols[2])?));
            b.push(T::lit(parse(cols[3])?));
        }
        let field = SpectralVectorField::from_components(
            ScalarField::from_grid_values(&grid, &a)?,
            ScalarField::from_grid_values(&grid, &b)?,
        )?;
        Ok(Self::new(T::lit(time), field))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::random::random_solenoidal_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let g = TorusGrid::<f64>::new(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut snap = Snapshot::new(0.25, random_solenoidal_field(&g, &mut rng, 7, 1.0));
        snap.metadata.insert("step".into(), "25".into());
        let mut bytes = Vec::new();
        snap.write_binary(&mut bytes).unwrap();
        let back: Snapshot<f64> = Snapshot::read_binary(&bytes[..]).unwrap();
        let mut again = Vec::new();
        back.write_binary(&mut again).unwrap();
        assert_eq!(bytes, again);
        assert_eq!(back.metadata["step"], "25");
        assert_eq!(back.time, 0.25);
    }

    #[test]
    fn csv_round_trip() {
        let g = TorusGrid::<f64>::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let snap = Snapshot::new(1.5, random_solenoidal_field(&g, &mut rng, 3, 1.0));
        let mut text = Vec::new();
        snap.write_csv(&mut text).unwrap();
        let back: Snapshot<f64> = Snapshot::read_csv(&text[..]).unwrap();
        assert!(back.field.sub(&snap.field).norm() < 1e-14);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Snapshot::<f64>::read_binary(&b"NOTASNAP........"[..]).is_err());
        assert!(Snapshot::<f64>::read_csv(&b"x,y\n1,2\n"[..]).is_err());
    }
}

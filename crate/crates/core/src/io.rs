//! Text and binary dumps of grid fields and dense operators, CSV and
//! `key = value` sidecars. Every header carries the config hash.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::{Grid, Rect, ScalarField};
use crate::linearization::DenseOperator;

pub const GRID_MAGIC: &[u8; 8] = b"HLGRID01";
pub const MAT_MAGIC: &[u8; 7] = b"HLMAT01";
const HASH_BYTES: usize = 64;

/// Header `grid n h x0 y0 w h_rect config=<hash>`, then `i j re im` rows
/// in interior order.
pub fn grid_text(field: &ScalarField, hash: &str) -> String {
    let g = field.grid();
    let r = g.rect();
    let mut s = format!("grid {} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} config={hash}\n", g.n(), g.h(), r.x0, r.y0, r.width, r.height);
    for (k, v) in field.values().iter().enumerate() {
        let (i, j) = g.ij(k);
        s.push_str(&format!("{i} {j} {:.17e} {:.17e}\n", v.re, v.im));
    }
    s
}

pub fn read_grid_text(text: &str) -> Result<(ScalarField, String)> {
    let bad = |m: &str| Error::Config(format!("grid dump: {m}"));
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().ok_or_else(|| bad("empty"))?.split_whitespace().collect();
    if head.len() != 8 || head[0] != "grid" {
        return Err(bad("bad header"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
    let n: usize = head[1].parse().map_err(|_| bad("bad n"))?;
    let grid = Grid::new(n, Rect::new(num(head[3])?, num(head[4])?, num(head[5])?, num(head[6])?))?;
    let hash = head[7].strip_prefix("config=").ok_or_else(|| bad("missing config hash"))?.to_string();
    let mut values = vec![C64::new(0.0, 0.0); grid.len()];
    let mut seen = 0;
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 4 {
            return Err(bad("bad row"));
        }
        let i: usize = t[0].parse().map_err(|_| bad("bad index"))?;
        let j: usize = t[1].parse().map_err(|_| bad("bad index"))?;
        if i >= n || j >= n {
            return Err(bad("index out of range"));
        }
        values[grid.idx(i, j)] = C64::new(num(t[2])?, num(t[3])?);
        seen += 1;
    }
    if seen != grid.len() {
        return Err(bad("row count"));
    }
    Ok((ScalarField::from_values(grid, values)?, hash))
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_hash(out: &mut Vec<u8>, hash: &str) {
    let mut h = [0u8; HASH_BYTES];
    let b = hash.as_bytes();
    let len = b.len().min(HASH_BYTES);
    h[..len].copy_from_slice(&b[..len]);
    out.extend_from_slice(&h);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(Error::Config("binary dump truncated".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn hash(&mut self) -> Result<String> {
        let b = self.take(HASH_BYTES)?;
        let end = b.iter().position(|&c| c == 0).unwrap_or(HASH_BYTES);
        String::from_utf8(b[..end].to_vec()).map_err(|_| Error::Config("hash is not UTF-8".into()))
    }
}

/// `HLGRID01`, 64-byte config hash, `n` (u64), `h x0 y0 w h_rect` (f64),
/// then `re, im` per interior node, row-major, little endian.
pub fn grid_binary(field: &ScalarField, hash: &str) -> Vec<u8> {
    let g = field.grid();
    let r = g.rect();
    let mut out = Vec::with_capacity(8 + HASH_BYTES + 48 + 16 * g.len());
    out.extend_from_slice(GRID_MAGIC);
    push_hash(&mut out, hash);
    push_u64(&mut out, g.n() as u64);
    for v in [g.h(), r.x0, r.y0, r.width, r.height] {
        push_f64(&mut out, v);
    }
    for v in field.values() {
        push_f64(&mut out, v.re);
        push_f64(&mut out, v.im);
    }
    out
}

pub fn read_grid_binary(bytes: &[u8]) -> Result<(ScalarField, String)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != GRID_MAGIC {
        return Err(Error::Config("not an HLGRID01 dump".into()));
    }
    let hash = r.hash()?;
    let n = r.u64()? as usize;
    let _h = r.f64()?;
    let rect = Rect::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let grid = Grid::new(n, rect)?;
    let values = (0..grid.len()).map(|_| Ok(C64::new(r.f64()?, r.f64()?))).collect::<Result<Vec<_>>>()?;
    Ok((ScalarField::from_values(grid, values)?, hash))
}

/// `HLMAT01`, 64-byte config hash, rows and cols (u64), the row map and
/// column map as u64 pairs, then the matrix column-major as `re, im`.
pub fn matrix_binary(op: &DenseOperator, hash: &str) -> Vec<u8> {
    let m = &op.matrix;
    let mut out = Vec::with_capacity(7 + HASH_BYTES + 16 + 16 * (m.nrows() + m.ncols()) + 16 * m.len());
    out.extend_from_slice(MAT_MAGIC);
    push_hash(&mut out, hash);
    push_u64(&mut out, m.nrows() as u64);
    push_u64(&mut out, m.ncols() as u64);
    for &(a, b) in op.row_map.iter().chain(&op.col_map) {
        push_u64(&mut out, a as u64);
        push_u64(&mut out, b as u64);
    }
    for v in m.iter() {
        push_f64(&mut out, v.re);
        push_f64(&mut out, v.im);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixDump {
    pub hash: String,
    pub matrix: DMatrix<C64>,
    pub row_map: Vec<(usize, usize)>,
    pub col_map: Vec<(usize, usize)>,
}

pub fn read_matrix_binary(bytes: &[u8]) -> Result<MatrixDump> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(7)? != MAT_MAGIC {
        return Err(Error::Config("not an HLMAT01 dump".into()));
    }
    let hash = r.hash()?;
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    let mut pair = || -> Result<(usize, usize)> { Ok((r.u64()? as usize, r.u64()? as usize)) };
    let row_map = (0..rows).map(|_| pair()).collect::<Result<Vec<_>>>()?;
    let col_map = (0..cols).map(|_| pair()).collect::<Result<Vec<_>>>()?;
    let vals = (0..rows * cols).map(|_| Ok(C64::new(r.f64()?, r.f64()?))).collect::<Result<Vec<_>>>()?;
    Ok(MatrixDump { hash, matrix: DMatrix::from_vec(rows, cols, vals), row_map, col_map })
}

/// Prefixes a CSV body with a `# config=<hash>` comment line.
pub fn csv_with_hash(body: &str, hash: &str) -> String {
    format!("# config={hash}\n{body}")
}

/// `key = value` lines, `config` first.
pub fn sidecar(pairs: &[(&str, String)], hash: &str) -> String {
    let mut s = format!("config = {hash}\n");
    for (k, v) in pairs {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}

/// Writes `<stem>.grid.txt` and `<stem>.grid.bin` under `dir`.
pub fn write_grid(dir: &Path, stem: &str, field: &ScalarField, hash: &str) -> Result<()> {
    fs::write(dir.join(format!("{stem}.grid.txt")), grid_text(field, hash))?;
    fs::write(dir.join(format!("{stem}.grid.bin")), grid_binary(field, hash))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainMasks;
    use crate::linearization::{assemble, IdentityMap};

    #[test]
    fn grid_round_trips() {
        let g = Grid::new(5, Rect::new(-1.0, 0.5, 2.0, 2.0)).unwrap();
        let f = ScalarField::from_fn(g, |x, y| C64::new(x.sin(), y * 1e-300));
        let (a, h) = read_grid_binary(&grid_binary(&f, "abc")).unwrap();
        assert_eq!(h, "abc");
        assert_eq!(a.values(), f.values());
        assert_eq!(a.grid(), g);
        let (b, h) = read_grid_text(&grid_text(&f, "abc")).unwrap();
        assert_eq!(h, "abc");
        assert_eq!(b.values(), f.values());
        assert!(grid_text(&f, "abc").starts_with("grid 5 "));
        assert_eq!(&grid_binary(&f, "x")[..8], b"HLGRID01");
    }

    #[test]
    fn matrix_round_trips() {
        let g = Grid::unit(7).unwrap();
        let masks = DomainMasks::with_defaults(g).unwrap();
        let op = assemble(&IdentityMap::new(masks.clone()), &masks).unwrap();
        let d = read_matrix_binary(&matrix_binary(&op, "h")).unwrap();
        assert_eq!(d.matrix, op.matrix);
        assert_eq!(d.row_map, op.row_map);
        assert_eq!(d.col_map, op.col_map);
        assert!(read_matrix_binary(b"HLMAT01").is_err());
        assert!(read_grid_binary(b"nope").is_err());
    }

    #[test]
    fn headers_carry_hash() {
        assert!(csv_with_hash("a,b\n", "h1").starts_with("# config=h1\n"));
        assert_eq!(sidecar(&[("k", "v".into())], "h2"), "config = h2\nk = v\n");
    }
}

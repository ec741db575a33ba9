//! `(x0, xT)` training pairs and their on-disk formats.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! "PRNF" | version: u32 | d: u32 | N: u64 | t_final: f64 | N × (x0[0..d], xt[0..d]) as f64
//! ```

use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};

use super::SdeError;

pub const DATASET_MAGIC: &[u8; 4] = b"PRNF";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    d: usize,
    t_final: f64,
    x0: Vec<f64>,
    xt: Vec<f64>,
}

impl PairDataset {
    pub fn new(d: usize, t_final: f64, x0: Vec<f64>, xt: Vec<f64>) -> Result<Self, SdeError> {
        if d == 0 {
            return Err(SdeError::Dataset("dimension must be positive".into()));
        }
        if x0.len() != xt.len() || !x0.len().is_multiple_of(d) {
            return Err(SdeError::Dataset(format!(
                "row buffers of lengths {} and {} do not form rows of width {d}",
                x0.len(),
                xt.len()
            )));
        }
        if x0.is_empty() {
            return Err(SdeError::Dataset("dataset must contain at least one row".into()));
        }
        if let Some(i) = x0.iter().chain(&xt).position(|v| !v.is_finite()) {
            return Err(SdeError::Dataset(format!("non-finite entry at flat index {i}")));
        }
        Ok(Self { d, t_final, x0, xt })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn len(&self) -> usize {
        self.x0.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    /// Row-major `N × d` initial states.
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// Row-major `N × d` terminal states.
    pub fn xt(&self) -> &[f64] {
        &self.xt
    }

    pub fn row(&self, i: usize) -> (&[f64], &[f64]) {
        let r = i * self.d..(i + 1) * self.d;
        (&self.x0[r.clone()], &self.xt[r])
    }

    /// First `n` rows and the remainder, for train/held-out splits.
    pub fn split(&self, n: usize) -> Result<(Self, Self), SdeError> {
        let k = n * self.d;
        Ok((
            Self::new(self.d, self.t_final, self.x0[..k].to_vec(), self.xt[..k].to_vec())?,
            Self::new(self.d, self.t_final, self.x0[k..].to_vec(), self.xt[k..].to_vec())?,
        ))
    }

    pub fn write_binary<W: Write>(&self, w: W) -> io::Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.t_final.to_le_bytes())?;
        for i in 0..self.len() {
            let (a, b) = self.row(i);
            for v in a.iter().chain(b) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self, SdeError> {
        let mut r = BufReader::new(r);
        let io = |e: io::Error| SdeError::Dataset(format!("read failed: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != DATASET_MAGIC {
            return Err(SdeError::Dataset(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r).map_err(io)?;
        if version != DATASET_VERSION {
            return Err(SdeError::Dataset(format!("unsupported version {version}")));
        }
        let d = read_u32(&mut r).map_err(io)? as usize;
        let n = read_u64(&mut r).map_err(io)? as usize;
        let t_final = read_f64(&mut r).map_err(io)?;
        let mut x0 = Vec::with_capacity(n * d);
        let mut xt = Vec::with_capacity(n * d);
        for _ in 0..n {
            for _ in 0..d {
                x0.push(read_f64(&mut r).map_err(io)?);
            }
            for _ in 0..d {
                xt.push(read_f64(&mut r).map_err(io)?);
            }
        }
        Self::new(d, t_final, x0, xt)
    }

    /// CSV with columns `x0_0..x0_{d-1}, xt_0..xt_{d-1}`. Values are written with
    /// Rust's shortest round-trip formatting, so the export is lossless.
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut w = BufWriter::new(w);
        let header: Vec<String> = (0..self.d)
            .map(|i| format!("x0_{i}"))
            .chain((0..self.d).map(|i| format!("xt_{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let (a, b) = self.row(i);
            let line: Vec<String> = a.iter().chain(b).map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()
    }

    /// Reads the CSV export, skipping `#` comment lines. The file carries no
    /// horizon, so it is passed in.
    pub fn read_csv<R: Read>(r: R, t_final: f64) -> Result<Self, SdeError> {
        let r = BufReader::new(r);
        let mut lines = r.lines().filter(|l| !matches!(l, Ok(s) if s.starts_with('#')));
        let header = lines
            .next()
            .ok_or_else(|| SdeError::Dataset("empty CSV".into()))?
            .map_err(|e| SdeError::Dataset(e.to_string()))?;
        let cols = header.split(',').count();
        if cols == 0 || cols % 2 != 0 {
            return Err(SdeError::Dataset(format!("expected an even column count, got {cols}")));
        }
        let d = cols / 2;
        let (mut x0, mut xt) = (Vec::new(), Vec::new());
        for (ln, line) in lines.enumerate() {
            let line = line.map_err(|e| SdeError::Dataset(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| SdeError::Dataset(format!("line {}: {e}", ln + 2)))?;
            if vals.len() != cols {
                return Err(SdeError::Dataset(format!("line {}: {} columns", ln + 2, vals.len())));
            }
            x0.extend_from_slice(&vals[..d]);
            xt.extend_from_slice(&vals[d..]);
        }
        Self::new(d, t_final, x0, xt)
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let ds = PairDataset::new(2, 0.5, vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        ds.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"PRNF");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), 0.5);
        let rec: Vec<f64> = buf[28..].chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(rec, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(PairDataset::new(1, 0.1, vec![], vec![]).is_err());
        assert!(PairDataset::new(1, 0.1, vec![f64::NAN], vec![1.0]).is_err());
        assert!(PairDataset::new(2, 0.1, vec![1.0], vec![1.0]).is_err());
        assert!(PairDataset::read_binary(&b"XXXX\x01\0\0\0"[..]).is_err());
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(
            d in 1usize..4,
            rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 8), 1..20),
            t in 0.0f64..30.0,
        ) {
            let x0: Vec<f64> = rows.iter().flat_map(|r| r[..d].to_vec()).collect();
            let xt: Vec<f64> = rows.iter().flat_map(|r| r[4..4 + d].to_vec()).collect();
            let ds = PairDataset::new(d, t, x0, xt).unwrap();
            let mut buf = Vec::new();
            ds.write_binary(&mut buf).unwrap();
            prop_assert_eq!(&PairDataset::read_binary(&buf[..]).unwrap(), &ds);
            let mut csv = Vec::new();
            ds.write_csv(&mut csv).unwrap();
            prop_assert_eq!(&PairDataset::read_csv(&csv[..], t).unwrap(), &ds);
        }
    }
}

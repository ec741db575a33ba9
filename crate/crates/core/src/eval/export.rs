//! Histogram and grid exports.

use std::io::{self, Write};

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Samples that fell outside `[lo, hi]`.
    pub outside: u64,
}

impl Histogram {
    /// Equal-width bins on `[lo, hi]`; the last bin is closed.
    pub fn new(samples: impl IntoIterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Self {
        assert!(bins > 0 && lo < hi, "histogram needs bins > 0 and lo < hi");
        let mut counts = vec![0u64; bins];
        let mut outside = 0;
        let w = (hi - lo) / bins as f64;
        for x in samples {
            if !(x >= lo && x <= hi) {
                outside += 1;
                continue;
            }
            let b = (((x - lo) / w) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self { lo, hi, counts, outside }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outside
    }

    /// Density per bin, normalized by all samples (including those outside).
    pub fn densities(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / (n * self.width())).collect()
    }

    /// CSV with header `bin_left,bin_right,count,density`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin_left,bin_right,count,density")?;
        let width = self.width();
        for (i, (c, d)) in self.counts.iter().zip(self.densities()).enumerate() {
            let left = self.lo + i as f64 * width;
            writeln!(w, "{:?},{:?},{c},{:?}", left, left + width, d)?;
        }
        Ok(())
    }
}

/// CSV with header `x,y,value`.
pub fn write_grid_csv<W: Write>(rows: &[(f64, f64, f64)], mut w: W) -> io::Result<()> {
    writeln!(w, "x,y,value")?;
    for (x, y, v) in rows {
        writeln!(w, "{x:?},{y:?},{v:?}")?;
    }
    Ok(())
}

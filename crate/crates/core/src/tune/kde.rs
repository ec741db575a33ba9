//! Product-Gaussian kernel density estimator.
//!
//! Evaluation sums kernels only over points inside a box of half-width
//! [`CUTOFF`] bandwidths around the query, found through a uniform cell grid
//! on the leading (up to three) coordinates. Every skipped point contributes
//! at most `exp(−CUTOFF²/2)`; if that bound is not negligible against the
//! truncated sum (relative [`TRUNCATION_TOL`]) the query falls back to an
//! exhaustive log-sum-exp over all points.

use std::f64::consts::PI;

use super::TuneError;
use crate::par;

/// Truncation radius in bandwidth units.
pub const CUTOFF: f64 = 8.0;
/// Relative bound on the neglected mass before falling back to exhaustive sums.
pub const TRUNCATION_TOL: f64 = 1e-6;
const MAX_CELLS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth {
    /// `h_i = σ̂_i · M^{−1/(k+4)}`
    Scott,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone)]
struct CellGrid {
    dims: usize,
    lo: Vec<f64>,
    width: Vec<f64>,
    counts: Vec<usize>,
    /// CSR offsets into the cell-sorted point array, length `cells + 1`
    start: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct KdeEstimator {
    k: usize,
    /// row-major `M × k`, sorted by cell
    points: Vec<f64>,
    bandwidth: Vec<f64>,
    log_norm: f64,
    grid: CellGrid,
}

/// Fits a KDE to row-major `points` (`k` columns). `widths` (per dimension)
/// sets the bandwidth floor `1e-6 · width` for degenerate columns; without it
/// the floor uses a unit width.
pub fn kde_fit(points: &[f64], k: usize, rule: &Bandwidth, widths: Option<&[f64]>) -> Result<KdeEstimator, TuneError> {
    if k == 0 || !points.len().is_multiple_of(k) {
        return Err(TuneError::Invalid(format!("{} values do not form rows of width {k}", points.len())));
    }
    let m = points.len() / k;
    if m < 2 {
        return Err(TuneError::Invalid("a KDE needs at least two points".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(TuneError::Invalid("KDE points must be finite".into()));
    }
    let floor = |i: usize| 1e-6 * widths.map_or(1.0, |w| w[i]);
    let bandwidth: Vec<f64> = match rule {
        Bandwidth::Scott => {
            let factor = (m as f64).powf(-1.0 / (k as f64 + 4.0));
            (0..k)
                .map(|i| {
                    let col = points.iter().skip(i).step_by(k);
                    let mean = col.clone().sum::<f64>() / m as f64;
                    let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m as f64 - 1.0);
                    (var.sqrt() * factor).max(floor(i))
                })
                .collect()
        }
        Bandwidth::Fixed(h) => {
            if h.len() != k || h.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(TuneError::Invalid(format!("bandwidths {h:?} must be {k} positive values")));
            }
            h.clone()
        }
    };
    let log_norm = -(m as f64).ln() - bandwidth.iter().map(|h| h.ln()).sum::<f64>() - 0.5 * k as f64 * (2.0 * PI).ln();
    let (grid, sorted) = build_grid(points, k, &bandwidth);
    Ok(KdeEstimator { k, points: sorted, bandwidth, log_norm, grid })
}

fn build_grid(points: &[f64], k: usize, h: &[f64]) -> (CellGrid, Vec<f64>) {
    let m = points.len() / k;
    let dims = k.min(3);
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for row in points.chunks(k) {
        for i in 0..dims {
            lo[i] = lo[i].min(row[i]);
            hi[i] = hi[i].max(row[i]);
        }
    }
    let mut width: Vec<f64> = (0..dims).map(|i| 0.5 * CUTOFF * h[i]).collect();
    let count = |width: &[f64]| -> Vec<usize> {
        (0..dims).map(|i| (((hi[i] - lo[i]) / width[i]).floor() as usize).saturating_add(1)).collect()
    };
    let mut counts = count(&width);
    while counts.iter().try_fold(1usize, |a, &c| a.checked_mul(c)).is_none_or(|total| total > MAX_CELLS) {
        width.iter_mut().for_each(|w| *w *= 2.0);
        counts = count(&width);
    }
    let cells: usize = counts.iter().product();
    let cell_of = |row: &[f64]| {
        let mut idx = 0;
        for i in 0..dims {
            let c = (((row[i] - lo[i]) / width[i]).floor() as usize).min(counts[i] - 1);
            idx = idx * counts[i] + c;
        }
        idx
    };
    let mut start = vec![0usize; cells + 1];
    let ids: Vec<usize> = points.chunks(k).map(cell_of).collect();
    for &c in &ids {
        start[c + 1] += 1;
    }
    for c in 0..cells {
        start[c + 1] += start[c];
    }
    let mut fill = start.clone();
    let mut sorted = vec![0.0; m * k];
    for (row, &c) in points.chunks(k).zip(&ids) {
        let at = fill[c];
        sorted[at * k..(at + 1) * k].copy_from_slice(row);
        fill[c] += 1;
    }
    (CellGrid { dims, lo, width, counts, start }, sorted)
}

impl KdeEstimator {
    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    #[inline]
    fn q(&self, x: &[f64], row: &[f64]) -> f64 {
        let mut q = 0.0;
        for i in 0..self.k {
            let u = (x[i] - row[i]) / self.bandwidth[i];
            q += u * u;
        }
        q
    }

    fn log_density_exhaustive(&self, x: &[f64]) -> f64 {
        let qmin = self.points.chunks(self.k).map(|r| self.q(x, r)).fold(f64::INFINITY, f64::min);
        let s: f64 = self.points.chunks(self.k).map(|r| (-0.5 * (self.q(x, r) - qmin)).exp()).sum();
        self.log_norm - 0.5 * qmin + s.ln()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.k, "query dimension");
        let g = &self.grid;
        let mut lo_c = [0usize; 3];
        let mut hi_c = [0usize; 3];
        for i in 0..g.dims {
            let a = (x[i] - CUTOFF * self.bandwidth[i] - g.lo[i]) / g.width[i];
            let b = (x[i] + CUTOFF * self.bandwidth[i] - g.lo[i]) / g.width[i];
            if b < 0.0 || a >= g.counts[i] as f64 {
                return self.log_density_exhaustive(x);
            }
            lo_c[i] = a.max(0.0).floor() as usize;
            hi_c[i] = (b.floor() as usize).min(g.counts[i] - 1);
        }
        let mut sum = 0.0;
        let mut scanned = 0usize;
        let mut visit = |cell: usize| {
            let (s, e) = (g.start[cell], g.start[cell + 1]);
            scanned += e - s;
            for r in s..e {
                let q = self.q(x, &self.points[r * self.k..(r + 1) * self.k]);
                sum += (-0.5 * q).exp();
            }
        };
        match g.dims {
            1 => (lo_c[0]..=hi_c[0]).for_each(&mut visit),
            2 => {
                for a in lo_c[0]..=hi_c[0] {
                    for b in lo_c[1]..=hi_c[1] {
                        visit(a * g.counts[1] + b);
                    }
                }
            }
            _ => {
                for a in lo_c[0]..=hi_c[0] {
                    for b in lo_c[1]..=hi_c[1] {
                        for c in lo_c[2]..=hi_c[2] {
                            visit((a * g.counts[1] + b) * g.counts[2] + c);
                        }
                    }
                }
            }
        }
        let skipped = (self.len() - scanned) as f64;
        let bound = skipped * (-0.5 * CUTOFF * CUTOFF).exp();
        if sum > 0.0 && bound <= TRUNCATION_TOL * sum {
            self.log_norm + sum.ln()
        } else {
            self.log_density_exhaustive(x)
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// Log-densities at the rows of `xs` (row-major, `k` columns).
    pub fn log_density_batch(&self, xs: &[f64]) -> Vec<f64> {
        let k = self.k;
        let n = xs.len() / k;
        let chunk = 256;
        par::map_indexed(n.div_ceil(chunk), |c| {
            let lo = c * chunk;
            let hi = (lo + chunk).min(n);
            (lo..hi).map(|i| self.log_density(&xs[i * k..(i + 1) * k])).collect::<Vec<_>>()
        })
        .concat()
    }
}

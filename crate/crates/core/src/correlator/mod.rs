//! Second-order intensity correlation between two detector channels.
//!
//! Every ordered pair `(a, b)` with `a` from the start channel and `b` from
//! the stop channel contributes to the bin holding `t_b - t_a` (full pair
//! correlation, not start-stop). Counting is exact integer arithmetic: for
//! each bin edge `e` the sweep accumulates `S(e) = sum_a #{b : t_b - t_a < e}`
//! with one monotone pointer per edge, and bin counts are differences of
//! neighbouring `S`.

mod grid;

pub use grid::{make_grid, BinGrid, GridKind};

use crate::error::{Error, Result};
use crate::ttio::PhotonStream;

/// Pair-count ceiling for [`brute_force_correlate`].
pub const BRUTE_FORCE_LIMIT: u128 = 100_000_000;

/// Normalized g²(τ) estimate on a lag grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    pub grid: BinGrid,
    pub counts: Vec<u64>,
    pub g2: Vec<f64>,
    pub g2_sigma: Vec<f64>,
    pub n1: u64,
    pub n2: u64,
    /// Acquisition span `T` in ticks used for normalization.
    pub span_ticks: u64,
    pub resolution_ps: u32,
}

impl CorrelationCurve {
    /// Normalizes raw pair counts: `g2 = counts * T / (n1 * n2 * width)`.
    /// With an empty channel the estimate is undefined and `g2` is NaN.
    pub fn from_counts(grid: BinGrid, counts: Vec<u64>, n1: u64, n2: u64, span_ticks: u64, resolution_ps: u32) -> Self {
        assert_eq!(counts.len(), grid.n_bins());
        let widths = grid.widths();
        let (g2, g2_sigma) = counts
            .iter()
            .zip(&widths)
            .map(|(&c, &w)| {
                let scale = pair_scale(n1, n2, span_ticks, w);
                let g = c as f64 * scale;
                (g, g / (c.max(1) as f64).sqrt())
            })
            .unzip();
        Self { grid, counts, g2, g2_sigma, n1, n2, span_ticks, resolution_ps }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// g² value corresponding to a single pair count in each bin,
    /// `T / (n1 * n2 * width)`.
    pub fn count_scale(&self) -> Vec<f64> {
        self.grid.widths().iter().map(|&w| pair_scale(self.n1, self.n2, self.span_ticks, w)).collect()
    }

    /// Bin centres in seconds.
    pub fn lag_seconds(&self) -> Vec<f64> {
        let tick = self.resolution_ps as f64 * 1e-12;
        self.grid.centers().iter().map(|c| c * tick).collect()
    }
}

fn pair_scale(n1: u64, n2: u64, span: u64, width: i64) -> f64 {
    if n1 == 0 || n2 == 0 {
        return f64::NAN;
    }
    span as f64 / (n1 as f64 * n2 as f64 * width as f64)
}

/// How the start-channel events are partitioned. Results are bit-identical
/// for every choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Split the start channel into `chunks` contiguous blocks whose partial
    /// sums are merged afterwards. Blocks run on the rayon pool when the
    /// `parallel` feature is enabled.
    Chunked { chunks: usize },
}

impl Execution {
    /// Chunked over the current thread pool, or sequential on one thread.
    pub fn auto() -> Self {
        match crate::parallel::threads() {
            1 => Execution::Sequential,
            n => Execution::Chunked { chunks: 4 * n },
        }
    }
}

pub fn correlate(stream: &PhotonStream, ch_a: u8, ch_b: u8, grid: &BinGrid) -> Result<CorrelationCurve> {
    correlate_with(stream, ch_a, ch_b, grid, Execution::auto())
}

pub fn correlate_with(
    stream: &PhotonStream,
    ch_a: u8,
    ch_b: u8,
    grid: &BinGrid,
    exec: Execution,
) -> Result<CorrelationCurve> {
    let (a, b) = channel_pair(stream, ch_a, ch_b, grid)?;
    let counts = pair_counts(&a, &b, grid.edges(), exec);
    Ok(CorrelationCurve::from_counts(
        grid.clone(),
        counts,
        a.len() as u64,
        b.len() as u64,
        stream.duration(),
        stream.resolution_ps(),
    ))
}

fn channel_pair(stream: &PhotonStream, ch_a: u8, ch_b: u8, grid: &BinGrid) -> Result<(Vec<i64>, Vec<i64>)> {
    if ch_a == ch_b {
        return Err(Error::InvalidArgument("start and stop channels must differ".into()));
    }
    if grid.reach() > stream.duration() {
        return Err(Error::LagExceedsSpan { max_lag: grid.reach() as i64, span: stream.duration() });
    }
    if stream.duration() > (i64::MAX / 4) as u64 {
        return Err(Error::InvalidArgument("stream span too large for signed lag arithmetic".into()));
    }
    let ticks = |ch| stream.channel_timestamps(ch).into_iter().map(|t| t as i64).collect::<Vec<_>>();
    Ok((ticks(ch_a), ticks(ch_b)))
}

/// Exact pair counts of `b - a` lags over half-open bins between `edges`.
/// Both inputs must be sorted ascending.
pub fn pair_counts(a: &[i64], b: &[i64], edges: &[i64], exec: Execution) -> Vec<u64> {
    let sums = match exec {
        Execution::Sequential => cumulative(a, b, edges),
        Execution::Chunked { chunks } => {
            let chunks = chunks.max(1);
            let size = a.len().div_ceil(chunks).max(1);
            let blocks: Vec<&[i64]> = a.chunks(size).collect();
            let partial = crate::parallel::map_collect(&blocks, |blk| cumulative(blk, b, edges));
            let mut total = vec![0u64; edges.len()];
            for p in partial {
                for (t, v) in total.iter_mut().zip(p) {
                    *t += v;
                }
            }
            total
        }
    };
    sums.windows(2).map(|w| w[1] - w[0]).collect()
}

/// `S(e) = sum over a of #{b : b < a + e}` for every edge.
fn cumulative(a: &[i64], b: &[i64], edges: &[i64]) -> Vec<u64> {
    let Some(&first) = a.first() else {
        return vec![0; edges.len()];
    };
    edges
        .iter()
        .map(|&e| {
            let mut j = b.partition_point(|&t| t < first + e);
            let mut s = 0u64;
            for &ta in a {
                let bound = ta + e;
                while j < b.len() && b[j] < bound {
                    j += 1;
                }
                s += j as u64;
            }
            s
        })
        .collect()
}

/// Exhaustive enumeration of all `n1 * n2` pairs; the reference that
/// [`correlate`] must match exactly.
pub fn brute_force_correlate(stream: &PhotonStream, ch_a: u8, ch_b: u8, grid: &BinGrid) -> Result<CorrelationCurve> {
    let (a, b) = channel_pair(stream, ch_a, ch_b, grid)?;
    let pairs = a.len() as u128 * b.len() as u128;
    if pairs > BRUTE_FORCE_LIMIT {
        return Err(Error::GuardExceeded { pairs, limit: BRUTE_FORCE_LIMIT });
    }
    let mut counts = vec![0u64; grid.n_bins()];
    for &ta in &a {
        for &tb in &b {
            if let Some(k) = grid.bin_of(tb - ta) {
                counts[k] += 1;
            }
        }
    }
    Ok(CorrelationCurve::from_counts(
        grid.clone(),
        counts,
        a.len() as u64,
        b.len() as u64,
        stream.duration(),
        stream.resolution_ps(),
    ))
}

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Linear,
    Logarithmic,
    /// A linear block followed by logarithmic bins above it.
    Composite,
}

/// Half-open lag bins `[edges[i], edges[i+1])` in ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinGrid {
    edges: Vec<i64>,
    kind: GridKind,
}

impl BinGrid {
    pub fn from_edges(edges: Vec<i64>, kind: GridKind) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidArgument("a grid needs at least two edges".into()));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("grid edges must be strictly increasing".into()));
        }
        if kind == GridKind::Logarithmic && edges[0] <= 0 {
            return Err(Error::InvalidArgument("logarithmic grids take positive lags only".into()));
        }
        Ok(Self { edges, kind })
    }

    /// Bins of `width` ticks from `min_lag` until `max_lag` is covered.
    pub fn linear(min_lag: i64, max_lag: i64, width: i64) -> Result<Self> {
        if width <= 0 {
            return Err(Error::InvalidArgument(format!("bin width {width} must be positive")));
        }
        if max_lag <= min_lag {
            return Err(Error::InvalidArgument("max_lag must exceed min_lag".into()));
        }
        let span = max_lag - min_lag;
        let n = span / width + i64::from(span % width != 0);
        let edges = (0..=n).map(|k| min_lag + k * width).collect();
        Self::from_edges(edges, GridKind::Linear)
    }

    /// `per_decade` bins per factor of ten, starting at `min_lag` and
    /// extending until `max_lag` is covered. Edges are rounded to whole ticks.
    pub fn logarithmic(min_lag: i64, max_lag: i64, per_decade: f64) -> Result<Self> {
        if !(per_decade > 0.0 && per_decade.is_finite()) {
            return Err(Error::InvalidArgument(format!("bins per decade {per_decade} must be positive")));
        }
        if min_lag <= 0 {
            return Err(Error::InvalidArgument("logarithmic grids need min_lag > 0".into()));
        }
        if max_lag <= min_lag {
            return Err(Error::InvalidArgument("max_lag must exceed min_lag".into()));
        }
        let decades = (max_lag as f64 / min_lag as f64).log10();
        let n = (per_decade * decades - 1e-9).ceil().max(1.0) as i64;
        let edges: Vec<i64> =
            (0..=n).map(|k| (min_lag as f64 * 10f64.powf(k as f64 / per_decade)).round() as i64).collect();
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "{per_decade} bins per decade from {min_lag} ticks is finer than the tick resolution"
            )));
        }
        Self::from_edges(edges, GridKind::Logarithmic)
    }

    /// Linear bins followed by the logarithmic edges lying above them.
    pub fn composite(linear: &BinGrid, log: &BinGrid) -> Result<Self> {
        let top = linear.max_lag();
        if log.max_lag() <= top {
            return Err(Error::InvalidArgument("logarithmic part must extend past the linear part".into()));
        }
        let mut edges = linear.edges.clone();
        edges.extend(log.edges.iter().copied().filter(|&e| e > top));
        Self::from_edges(edges, GridKind::Composite)
    }

    pub fn edges(&self) -> &[i64] {
        &self.edges
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn min_lag(&self) -> i64 {
        self.edges[0]
    }

    pub fn max_lag(&self) -> i64 {
        *self.edges.last().unwrap()
    }

    /// Largest |lag| any bin can hold.
    pub fn reach(&self) -> u64 {
        self.min_lag().unsigned_abs().max(self.max_lag().unsigned_abs())
    }

    pub fn widths(&self) -> Vec<i64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| (w[0] as f64 + w[1] as f64) / 2.0).collect()
    }

    /// Index of the bin holding `lag`, if any.
    pub fn bin_of(&self, lag: i64) -> Option<usize> {
        if lag < self.min_lag() || lag >= self.max_lag() {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= lag) - 1)
    }
}

/// Generic constructor: `param` is the bin width in ticks for linear grids
/// and the number of bins per decade for logarithmic ones.
pub fn make_grid(kind: GridKind, min_lag: i64, max_lag: i64, param: f64) -> Result<BinGrid> {
    if !(param > 0.0) {
        return Err(Error::InvalidArgument(format!("grid parameter {param} must be positive")));
    }
    match kind {
        GridKind::Linear => {
            if param.fract() != 0.0 {
                return Err(Error::InvalidArgument("linear bin width must be a whole number of ticks".into()));
            }
            BinGrid::linear(min_lag, max_lag, param as i64)
        }
        GridKind::Logarithmic => BinGrid::logarithmic(min_lag, max_lag, param),
        GridKind::Composite => Err(Error::InvalidArgument("build composite grids with BinGrid::composite".into())),
    }
}

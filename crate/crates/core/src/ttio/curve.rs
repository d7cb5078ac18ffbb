use std::io::{Read, Write};

use crate::correlator::{BinGrid, CorrelationCurve, GridKind};
use crate::error::{Error, Result};

const HEADER: &str = "lag_center_ps\twidth_ps\tcounts\tg2\tg2_sigma";

/// Writes a curve as tab-separated `lag_center_ps, width_ps, counts, g2,
/// g2_sigma` rows, preceded by `#` directives carrying the normalization
/// inputs.
pub fn write_curve<W: Write>(curve: &CorrelationCurve, mut dest: W) -> Result<()> {
    let res = curve.resolution_ps as i64;
    let kind = match curve.grid.kind() {
        GridKind::Linear => "linear",
        GridKind::Logarithmic => "logarithmic",
        GridKind::Composite => "composite",
    };
    writeln!(dest, "# resolution_ps: {res}")?;
    writeln!(dest, "# n1: {}", curve.n1)?;
    writeln!(dest, "# n2: {}", curve.n2)?;
    writeln!(dest, "# span_ticks: {}", curve.span_ticks)?;
    writeln!(dest, "# grid: {kind}")?;
    writeln!(dest, "{HEADER}")?;
    let edges = curve.grid.edges();
    for k in 0..curve.n_bins() {
        let (lo, hi) = (edges[k] * res, edges[k + 1] * res);
        let center = (lo as f64 + hi as f64) / 2.0;
        writeln!(dest, "{center}\t{}\t{}\t{}\t{}", hi - lo, curve.counts[k], curve.g2[k], curve.g2_sigma[k])?;
    }
    Ok(())
}

/// Reads a curve written by [`write_curve`], recomputing g² from the counts.
pub fn read_curve<R: Read>(mut source: R) -> Result<CorrelationCurve> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let mut res = 1i64;
    let (mut n1, mut n2, mut span) = (None, None, None);
    let mut kind = GridKind::Linear;
    let mut edges: Vec<i64> = Vec::new();
    let mut counts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim();
        let err = |m: &str| Error::Row { row, message: m.to_owned() };
        if line.is_empty() || line == HEADER {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.split_once(':') {
                let v = v.trim();
                let int = || v.parse::<u64>().map_err(|_| err("bad directive value"));
                match k.trim() {
                    "resolution_ps" => res = int()? as i64,
                    "n1" => n1 = Some(int()?),
                    "n2" => n2 = Some(int()?),
                    "span_ticks" => span = Some(int()?),
                    "grid" => {
                        kind = match v {
                            "linear" => GridKind::Linear,
                            "logarithmic" => GridKind::Logarithmic,
                            "composite" => GridKind::Composite,
                            _ => return Err(err("unknown grid kind")),
                        }
                    }
                    _ => {}
                }
            }
            continue;
        }
        let f: Vec<&str> = line.split(['\t', ',']).map(str::trim).collect();
        if f.len() != 5 {
            return Err(err("expected 5 columns"));
        }
        let center: f64 = f[0].parse().map_err(|_| err("bad lag centre"))?;
        let width: i64 = f[1].parse().map_err(|_| err("bad width"))?;
        let count: u64 = f[2].parse().map_err(|_| err("bad count"))?;
        let lo = center - width as f64 / 2.0;
        if lo.fract() != 0.0 || (lo as i64) % res != 0 || width % res != 0 {
            return Err(err("bin edges are not whole ticks"));
        }
        let (lo, hi) = (lo as i64 / res, (lo as i64 + width) / res);
        match edges.last() {
            None => edges.push(lo),
            Some(&prev) if prev != lo => return Err(err("bins are not contiguous")),
            _ => {}
        }
        edges.push(hi);
        counts.push(count);
    }
    let missing = |k: &str| Error::InvalidArgument(format!("curve file lacks the `# {k}:` directive"));
    let grid = BinGrid::from_edges(edges, kind)?;
    Ok(CorrelationCurve::from_counts(
        grid,
        counts,
        n1.ok_or_else(|| missing("n1"))?,
        n2.ok_or_else(|| missing("n2"))?,
        span.ok_or_else(|| missing("span_ticks"))?,
        res as u32,
    ))
}

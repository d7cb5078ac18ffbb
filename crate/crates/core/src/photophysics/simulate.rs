use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::level_system::{steady_state, LevelSystem};
use crate::error::{Error, Result};
use crate::ttio::{PhotonRecord, PhotonStream};

/// Upper bound on expected jumps per simulation, a guard against runaway
/// memory use from mis-scaled rates.
pub const MAX_EXPECTED_EVENTS: f64 = 2e9;

/// Hanbury Brown–Twiss detection: a beam splitter routing photons to
/// channels 0 and 1, Poissonian background, timing jitter and dead time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorChain {
    /// Total background rate over both channels, s⁻¹.
    pub background_rate: f64,
    /// Probability that a photon goes to channel 0.
    pub split_ratio: f64,
    /// Non-paralyzable dead time per channel, ticks.
    pub dead_time: u64,
    /// Standard deviation of Gaussian timing jitter, ticks.
    pub jitter_sigma: f64,
    pub seed: u64,
    pub resolution_ps: u32,
}

impl Default for DetectorChain {
    fn default() -> Self {
        Self { background_rate: 0.0, split_ratio: 0.5, dead_time: 0, jitter_sigma: 0.0, seed: 0, resolution_ps: 1 }
    }
}

impl DetectorChain {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.background_rate >= 0.0 && self.background_rate.is_finite()) {
            return bad(format!("background_rate {} must be finite and >= 0", self.background_rate));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} must lie in (0, 1)", self.split_ratio));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return bad(format!("jitter_sigma {} must be finite and >= 0", self.jitter_sigma));
        }
        if self.resolution_ps == 0 {
            return bad("resolution_ps must be positive".into());
        }
        Ok(())
    }

    pub fn ticks_per_second(&self) -> f64 {
        1e12 / self.resolution_ps as f64
    }
}

/// Background rate that makes the signal fraction `S/(S+B)` equal `sigma`
/// for the emitter's steady-state photon rate `S`.
pub fn background_for_signal_fraction(sys: &LevelSystem, sigma: f64) -> Result<f64> {
    super::propagate::check_sigma(sigma)?;
    let s = sys.emission_rate(&steady_state(sys)?);
    Ok(s * (1.0 - sigma) / sigma)
}

/// Exact-jump (Gillespie) simulation of the emitter plus background over
/// `span` ticks. The emitter starts from a steady-state draw.
pub fn simulate_photon_stream(sys: &LevelSystem, chain: &DetectorChain, span: u64) -> Result<PhotonStream> {
    simulate_segmented(sys, chain, span, 1)
}

/// Splits the span into `segments` independent pieces, each restarted from a
/// steady-state draw with its own derived seed, and simulates them in
/// parallel. The result depends on `segments` but not on the thread count.
pub fn simulate_segmented(sys: &LevelSystem, chain: &DetectorChain, span: u64, segments: usize) -> Result<PhotonStream> {
    chain.validate()?;
    if span == 0 {
        return Err(Error::InvalidArgument("simulation span must be positive".into()));
    }
    if segments == 0 || segments as u64 > span {
        return Err(Error::InvalidArgument(format!("cannot split {span} ticks into {segments} segments")));
    }
    let seconds = span as f64 / chain.ticks_per_second();
    let expected = (sys.max_rate() * sys.n_levels() as f64 + chain.background_rate) * seconds;
    if expected > MAX_EXPECTED_EVENTS {
        return Err(Error::InvalidArgument(format!(
            "about {expected:.3e} expected events exceed the simulation limit {MAX_EXPECTED_EVENTS:.0e}"
        )));
    }
    let p_ss = steady_state(sys)?;
    let table = JumpTable::new(sys);
    let bounds: Vec<(u64, u64)> = (0..segments as u64)
        .map(|k| (span * k / segments as u64, span * (k + 1) / segments as u64))
        .collect();
    let parts = crate::parallel::map_range(segments, |k| {
        let seed = if segments == 1 { chain.seed } else { derive_seed(chain.seed, k as u64) };
        let (lo, hi) = bounds[k];
        segment(&table, &p_ss, chain, seed, lo, hi, span)
    });
    let mut channels = [Vec::new(), Vec::new()];
    for part in parts {
        for (c, p) in channels.iter_mut().zip(part) {
            c.extend(p);
        }
    }
    let mut records = Vec::new();
    for (ch, mut ticks) in channels.into_iter().enumerate() {
        ticks.sort_unstable();
        apply_dead_time(&mut ticks, chain.dead_time);
        records.extend(ticks.into_iter().map(|t| PhotonRecord::new(ch as u8, t)));
    }
    PhotonStream::from_records(records, chain.resolution_ps, &[0, 1], Some(span))
}

/// SplitMix64 finalizer over `(seed, index)`.
fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct JumpTable {
    exit: Vec<f64>,
    /// Per level: cumulative rates and target levels.
    cumulative: Vec<Vec<(f64, usize)>>,
    emissive: Vec<Vec<bool>>,
}

impl JumpTable {
    fn new(sys: &LevelSystem) -> Self {
        let n = sys.n_levels();
        let mut cumulative = Vec::with_capacity(n);
        let mut emissive = vec![vec![false; n]; n];
        for i in 0..n {
            let mut acc = 0.0;
            let mut row = Vec::new();
            for j in (0..n).filter(|&j| j != i && sys.rate(i, j) > 0.0) {
                acc += sys.rate(i, j);
                row.push((acc, j));
            }
            cumulative.push(row);
        }
        for &(i, j) in sys.emissive() {
            emissive[i][j] = true;
        }
        Self { exit: (0..n).map(|i| sys.exit_rate(i)).collect(), cumulative, emissive }
    }
}

fn draw_level(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

/// Raw per-channel detection ticks in `[lo, hi)`, before dead time. RNG
/// streams: 0 drives the emitter, 1 the background, 2 routing and jitter, so
/// changing the detector never perturbs the emitter trajectory.
fn segment(
    table: &JumpTable,
    p_ss: &[f64],
    chain: &DetectorChain,
    seed: u64,
    lo: u64,
    hi: u64,
    span: u64,
) -> [Vec<u64>; 2] {
    let tps = chain.ticks_per_second();
    let mut emitter = ChaCha8Rng::seed_from_u64(seed);
    emitter.set_stream(0);
    let mut bg = ChaCha8Rng::seed_from_u64(seed);
    bg.set_stream(1);
    let mut det = ChaCha8Rng::seed_from_u64(seed);
    det.set_stream(2);

    let mut arrivals: Vec<f64> = Vec::new();
    let mut state = draw_level(&mut emitter, p_ss);
    let mut t = lo as f64;
    loop {
        let r = table.exit[state];
        if r <= 0.0 {
            break;
        }
        let wait: f64 = Exp1.sample(&mut emitter);
        t += wait / r * tps;
        if t >= hi as f64 {
            break;
        }
        let pick = emitter.random::<f64>() * r;
        let row = &table.cumulative[state];
        let next = row.iter().find(|(c, _)| pick < *c).unwrap_or(row.last().unwrap()).1;
        if table.emissive[state][next] {
            arrivals.push(t);
        }
        state = next;
    }
    if chain.background_rate > 0.0 {
        let mut tb = lo as f64;
        loop {
            let wait: f64 = Exp1.sample(&mut bg);
            tb += wait / chain.background_rate * tps;
            if tb >= hi as f64 {
                break;
            }
            arrivals.push(tb);
        }
        arrivals.sort_by(f64::total_cmp);
    }
    let mut out = [Vec::new(), Vec::new()];
    for t in arrivals {
        let ch = usize::from(det.random::<f64>() >= chain.split_ratio);
        let mut x = t;
        if chain.jitter_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut det);
            x += z * chain.jitter_sigma;
        }
        out[ch].push(x.floor().clamp(0.0, span as f64) as u64);
    }
    out
}

/// Drops events arriving less than `dead_time` ticks after the previous
/// kept event on the same channel.
fn apply_dead_time(ticks: &mut Vec<u64>, dead_time: u64) {
    if dead_time == 0 {
        return;
    }
    let mut last: Option<u64> = None;
    ticks.retain(|&t| match last {
        Some(l) if t - l < dead_time => false,
        _ => {
            last = Some(t);
            true
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    const SECOND_PS: u64 = 1_000_000_000_000;

    #[test]
    fn no_pump_gives_only_background() {
        let sys = LevelSystem::two_level(0.0, 1e8).unwrap();
        let chain = DetectorChain { background_rate: 1000.0, seed: 3, resolution_ps: 1000, ..Default::default() };
        let s = simulate_photon_stream(&sys, &chain, SECOND_PS / 1000).unwrap();
        assert!(s.len() > 800 && s.len() < 1200, "{}", s.len());
        let quiet = simulate_photon_stream(&sys, &DetectorChain { background_rate: 0.0, ..chain }, SECOND_PS / 1000).unwrap();
        assert!(quiet.is_empty());
    }

    #[test]
    fn two_level_detected_rate() {
        let (k12, k21) = (2e5, 1e6);
        let sys = LevelSystem::two_level(k12, k21).unwrap();
        let chain = DetectorChain { seed: 11, resolution_ps: 1000, ..Default::default() };
        let span = 10 * SECOND_PS / 1000;
        let s = simulate_photon_stream(&sys, &chain, span).unwrap();
        let p2 = steady_state(&sys).unwrap()[1];
        let expected = p2 * k21 * 10.0;
        // Photon counts of a two-level emitter are sub-Poissonian, so the
        // Poisson standard error is a conservative bound.
        assert!((s.len() as f64 - expected).abs() < 3.0 * expected.sqrt(), "{} vs {expected}", s.len());
        assert_eq!(s.duration(), span);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let sys = LevelSystem::three_level(1e6, 1e8, 1e5, 1e4).unwrap();
        let chain = DetectorChain {
            background_rate: 5e3,
            jitter_sigma: 300.0,
            dead_time: 20_000,
            seed: 42,
            ..Default::default()
        };
        let a = simulate_photon_stream(&sys, &chain, SECOND_PS / 10).unwrap();
        let b = simulate_photon_stream(&sys, &chain, SECOND_PS / 10).unwrap();
        assert_eq!(a, b);
        let c = simulate_photon_stream(&sys, &DetectorChain { seed: 43, ..chain.clone() }, SECOND_PS / 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dead_time_spacing_holds_per_channel() {
        let sys = LevelSystem::two_level(1e7, 1e8).unwrap();
        let chain = DetectorChain { dead_time: 50_000, seed: 5, ..Default::default() };
        let s = simulate_photon_stream(&sys, &chain, SECOND_PS / 100).unwrap();
        for ch in [0, 1] {
            let t = s.channel_timestamps(ch);
            assert!(t.windows(2).all(|w| w[1] - w[0] >= 50_000));
        }
    }

    #[test]
    fn segmented_runs_are_reproducible() {
        let sys = LevelSystem::three_level(1e6, 1e8, 1e5, 1e4).unwrap();
        let chain = DetectorChain { seed: 9, resolution_ps: 100, ..Default::default() };
        let a = simulate_segmented(&sys, &chain, SECOND_PS / 1000, 4).unwrap();
        let b = simulate_segmented(&sys, &chain, SECOND_PS / 1000, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.records().iter().all(|r| r.timestamp <= SECOND_PS / 1000));
    }

    #[test]
    fn rejects_invalid_chains() {
        let sys = LevelSystem::two_level(1e6, 1e8).unwrap();
        assert!(simulate_photon_stream(&sys, &DetectorChain::default(), 0).is_err());
        let bad = DetectorChain { split_ratio: 1.0, ..Default::default() };
        assert!(simulate_photon_stream(&sys, &bad, 100).is_err());
    }

    #[test]
    fn background_matches_signal_fraction() {
        let sys = LevelSystem::two_level(1e6, 1e8).unwrap();
        let b = background_for_signal_fraction(&sys, 0.8).unwrap();
        let s = sys.emission_rate(&steady_state(&sys).unwrap());
        assert!((s / (s + b) - 0.8).abs() < 1e-14);
    }
}

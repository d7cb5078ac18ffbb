//! Durations with units: `5ms`, `0.5ns`, `10 ps`, `2us`, `1s`. A bare number
//! is taken in picoseconds, the native tick of time-tag files.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Duration {
    pub ps: f64,
}

const UNITS: [(&str, f64); 7] =
    [("ps", 1.0), ("ns", 1e3), ("us", 1e6), ("µs", 1e6), ("ms", 1e9), ("s", 1e12), ("", 1.0)];

impl FromStr for Duration {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim();
        // Longest suffix first so that "ms" is not read as "s".
        for (suffix, factor) in UNITS {
            if let Some(num) = t.strip_suffix(suffix) {
                let Ok(v) = num.trim().parse::<f64>() else { continue };
                if !(v.is_finite() && v >= 0.0) {
                    return Err(format!("duration {s:?} must be finite and non-negative"));
                }
                return Ok(Duration { ps: v * factor });
            }
        }
        Err(format!("cannot read {s:?} as a duration (units ps, ns, us, ms, s)"))
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.ps)
    }
}

impl Duration {
    /// Nearest whole number of ticks of `resolution_ps`.
    pub fn ticks(self, resolution_ps: u32) -> u64 {
        (self.ps / resolution_ps as f64).round() as u64
    }
}

impl serde::Serialize for Duration {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Duration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(f64),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(v) => Duration::from_str(&v.to_string()),
            Repr::S(s) => Duration::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units() {
        let p = |s: &str| s.parse::<Duration>().unwrap().ps;
        assert_eq!(p("5ms"), 5e9);
        assert_eq!(p("0.5ns"), 500.0);
        assert_eq!(p("10 ps"), 10.0);
        assert_eq!(p("2us"), 2e6);
        assert_eq!(p("2µs"), 2e6);
        assert_eq!(p("1s"), 1e12);
        assert_eq!(p("40"), 40.0);
        assert_eq!(p("0"), 0.0);
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", "ms", "5 hours", "-1ns", "nan", "inf s"] {
            assert!(s.parse::<Duration>().is_err(), "{s}");
        }
    }

    #[test]
    fn ticks_round_to_resolution() {
        let d: Duration = "0.5ns".parse().unwrap();
        assert_eq!(d.ticks(1), 500);
        assert_eq!(d.ticks(4), 125);
        assert_eq!(d.ticks(3), 167);
    }

    #[test]
    fn display_round_trips() {
        let d: Duration = "1.25us".parse().unwrap();
        assert_eq!(d.to_string().parse::<Duration>().unwrap(), d);
    }
}

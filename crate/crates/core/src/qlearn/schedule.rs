//! Piecewise learning-rate schedules indexed by the episode number.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Rate on one segment of episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Const(f64),
    /// `c / linspace(1, b, n)(k - origin)`, where `linspace(1, b, n)(j)` is
    /// the `j`-th of `n` equally spaced points from 1 to `b` (1-based).
    /// `n = None` means the run's episode count.
    LinspaceDecay {
        c: f64,
        b: f64,
        n: Option<u64>,
        origin: u64,
    },
}

impl Rate {
    pub fn at(&self, k: u64, episodes: u64) -> f64 {
        match *self {
            Rate::Const(c) => c,
            Rate::LinspaceDecay { c, b, n, origin } => {
                let n = n.unwrap_or(episodes).max(2) as f64;
                let j = k.saturating_sub(origin) as f64;
                c / (1.0 + (b - 1.0) * (j - 1.0) / (n - 1.0))
            }
        }
    }
}

/// Episodes `from..=to` (1-based); `to = None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub from: u64,
    pub to: Option<u64>,
    pub rate: Rate,
}

impl Segment {
    fn contains(&self, k: u64) -> bool {
        k >= self.from && self.to.is_none_or(|to| k <= to)
    }
}

/// Text form `from,to,kind,c[,b[,n[,origin]]]` with `kind` one of `const`
/// or `linspace-decay`, and `to` either a number or `N` for open-ended.
impl FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |what: &str| Error::InvalidParameter(format!("schedule segment `{s}`: {what}"));
        let fields: Vec<&str> = s.split(',').map(str::trim).collect();
        if fields.len() < 4 {
            return Err(bad("expected from,to,kind,c[,b[,n[,origin]]]"));
        }
        let int = |f: &str| f.parse::<u64>().map_err(|_| bad(&format!("`{f}` is not a non-negative integer")));
        let real = |f: &str| f.parse::<f64>().map_err(|_| bad(&format!("`{f}` is not a number")));
        let from = int(fields[0])?;
        let to = match fields[1] {
            "N" | "n" | "inf" => None,
            f => Some(int(f)?),
        };
        let c = real(fields[3])?;
        let rate = match fields[2] {
            "const" => {
                if fields.len() != 4 {
                    return Err(bad("const takes exactly one value"));
                }
                Rate::Const(c)
            }
            "linspace-decay" | "linspace" => {
                if fields.len() < 5 || fields.len() > 7 {
                    return Err(bad("linspace-decay takes c,b[,n[,origin]]"));
                }
                let b = real(fields[4])?;
                let n = fields.get(5).map(|f| int(f)).transpose()?;
                let origin = fields.get(6).map(|f| int(f)).transpose()?.unwrap_or(0);
                if b < 1.0 {
                    return Err(bad("linspace end point must be at least 1"));
                }
                Rate::LinspaceDecay { c, b, n, origin }
            }
            k => return Err(bad(&format!("unknown kind `{k}`"))),
        };
        Ok(Segment { from, to, rate })
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},", self.from)?;
        match self.to {
            Some(to) => write!(f, "{to},")?,
            None => write!(f, "N,")?,
        }
        match self.rate {
            Rate::Const(c) => write!(f, "const,{c}"),
            Rate::LinspaceDecay { c, b, n, origin } => {
                write!(f, "linspace-decay,{c},{b}")?;
                match (n, origin) {
                    (None, 0) => Ok(()),
                    (Some(n), 0) => write!(f, ",{n}"),
                    (n, o) => write!(f, ",{},{o}", n.map_or("N".to_string(), |n| n.to_string())),
                }
            }
        }
    }
}

/// Ordered, non-overlapping segments starting at episode 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    segments: Vec<Segment>,
}

impl Schedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidParameter("schedule has no segments".into()));
        }
        if segments[0].from != 1 {
            return Err(Error::InvalidParameter("schedule must start at episode 1".into()));
        }
        for w in segments.windows(2) {
            match w[0].to {
                Some(to) if to + 1 == w[1].from => {}
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "schedule segments `{}` and `{}` are not contiguous",
                        w[0], w[1]
                    )))
                }
            }
        }
        for s in &segments {
            if s.to.is_some_and(|to| to < s.from) {
                return Err(Error::InvalidParameter(format!("empty schedule segment `{s}`")));
            }
            let c = match s.rate {
                Rate::Const(c) | Rate::LinspaceDecay { c, .. } => c,
            };
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter(format!("negative or non-finite rate in `{s}`")));
            }
        }
        Ok(Self { segments })
    }

    pub fn constant(c: f64) -> Self {
        Self { segments: vec![Segment { from: 1, to: None, rate: Rate::Const(c) }] }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Whether episodes `1..=episodes` are all covered.
    pub fn covers(&self, episodes: u64) -> bool {
        self.segments.last().is_some_and(|s| s.to.is_none_or(|to| to >= episodes))
    }

    /// Rate at episode `k` of a run of `episodes`; 0 outside the segments.
    pub fn rate(&self, k: u64, episodes: u64) -> f64 {
        self.segments.iter().find(|s| s.contains(k)).map_or(0.0, |s| s.rate.at(k, episodes))
    }

    pub fn is_zero(&self) -> bool {
        self.segments.iter().all(|s| matches!(s.rate, Rate::Const(c) | Rate::LinspaceDecay { c, .. } if c == 0.0))
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

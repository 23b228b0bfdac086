use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result, Scalar};

use super::{deterministic_flow, Position, Velocity};

/// Label attached to each recorded skeleton point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Initial,
    /// Full or partial velocity reflection (negation or BPS bounce).
    Reflection,
    /// Zig-zag flip of coordinate `i`.
    Flip(usize),
    Refresh,
    Terminal,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Initial => write!(f, "initial"),
            EventKind::Reflection => write!(f, "reflection"),
            EventKind::Flip(i) => write!(f, "flip({i})"),
            EventKind::Refresh => write!(f, "refresh"),
            EventKind::Terminal => write!(f, "terminal"),
        }
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "initial" => Ok(EventKind::Initial),
            "reflection" => Ok(EventKind::Reflection),
            "refresh" => Ok(EventKind::Refresh),
            "terminal" => Ok(EventKind::Terminal),
            other => {
                if let Some(idx) = other.strip_prefix("flip(").and_then(|r| r.strip_suffix(')')) {
                    let i: usize = idx
                        .parse()
                        .map_err(|_| Error::Contract(format!("bad event kind: {other}")))?;
                    Ok(EventKind::Flip(i))
                } else {
                    Err(Error::Contract(format!("bad event kind: {other}")))
                }
            }
        }
    }
}

impl Serialize for EventKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EventKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// State of the process at one event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonPoint<F> {
    pub t: F,
    pub x: Position<F>,
    pub v: Velocity<F>,
    pub kind: EventKind,
}

/// Header line of the JSON-lines skeleton format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonHeader {
    pub d: usize,
    pub horizon: f64,
    pub seed: u64,
    pub stream: u64,
}

/// Time-ordered event record from which the full continuous path is
/// reconstructed: between consecutive points the position follows the
/// constant-velocity flow of the earlier point.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton<F> {
    points: Vec<SkeletonPoint<F>>,
    horizon: F,
}

impl<F: Scalar> Skeleton<F> {
    pub fn new(points: Vec<SkeletonPoint<F>>, horizon: F) -> Result<Self> {
        let skel = Skeleton { points, horizon };
        skel.validate()?;
        Ok(skel)
    }

    pub fn points(&self) -> &[SkeletonPoint<F>] {
        &self.points
    }

    pub fn horizon(&self) -> F {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.points[0].x.dim()
    }

    /// Number of recorded points that are actual jumps (not the initial or
    /// terminal markers).
    pub fn n_events(&self) -> usize {
        self.points
            .iter()
            .filter(|p| !matches!(p.kind, EventKind::Initial | EventKind::Terminal))
            .count()
    }

    /// Check ordering, endpoint conventions and flow consistency between
    /// consecutive points (1e-9 relative).
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::Contract("skeleton needs initial and terminal points".into()));
        }
        let first = &self.points[0];
        if first.t != F::zero() || first.kind != EventKind::Initial {
            return Err(Error::Contract("skeleton must start with the initial point at t = 0".into()));
        }
        let last = self.points.last().unwrap();
        // 1e-9 relative in f64; scaled up for coarser scalars.
        let tol = F::from_real(1e-9).max(F::epsilon() * F::from_real(32.0));
        if (last.t - self.horizon).abs() > tol * self.horizon.max(F::one())
            || last.kind != EventKind::Terminal
        {
            return Err(Error::Contract("skeleton must end with the terminal point at t = T".into()));
        }
        for pair in self.points.windows(2) {
            let (p, q) = (&pair[0], &pair[1]);
            if q.t <= p.t {
                return Err(Error::Contract(format!(
                    "event times not strictly increasing at t = {}",
                    q.t.to_real()
                )));
            }
            let dt = q.t - p.t;
            let expect = deterministic_flow(&p.x, &p.v, dt);
            // Event times accumulate rounding of order eps * t, which the
            // recorded positions inherit through the flow.
            let time_noise =
                F::epsilon() * F::from_real(64.0) * q.t.abs() * (F::one() + p.v.speed());
            for (a, b) in expect.coords().iter().zip(q.x.coords()) {
                let scale = a.abs().max(b.abs()).max(F::one());
                if (*a - *b).abs() > tol * scale + time_noise {
                    return Err(Error::Contract(format!(
                        "flow inconsistency at t = {}: expected {}, recorded {}",
                        q.t.to_real(),
                        a.to_real(),
                        b.to_real()
                    )));
                }
            }
        }
        Ok(())
    }

    /// State at an arbitrary time: the last event at `tau <= t` flowed
    /// forward by `t - tau`.
    pub fn state_at_time(&self, t: F) -> Result<(Position<F>, Velocity<F>)> {
        if t < F::zero() || t > self.horizon {
            return Err(Error::TimeOutOfRange {
                t: t.to_real(),
                horizon: self.horizon.to_real(),
            });
        }
        let idx = match self
            .points
            .binary_search_by(|p| p.t.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(i) => i - 1, // first point is at t = 0, so i >= 1 here
        };
        let p = &self.points[idx];
        Ok((deterministic_flow(&p.x, &p.v, t - p.t), p.v.clone()))
    }

    /// Constant-velocity segments `(t0, t1, x(t0), v)` covering `[from, T]`.
    pub fn segments_from(&self, from: F) -> Vec<(F, F, Position<F>, Velocity<F>)> {
        let mut out = Vec::new();
        for pair in self.points.windows(2) {
            let (p, q) = (&pair[0], &pair[1]);
            if q.t <= from {
                continue;
            }
            if p.t >= from {
                out.push((p.t, q.t, p.x.clone(), p.v.clone()));
            } else {
                let x = deterministic_flow(&p.x, &p.v, from - p.t);
                out.push((from, q.t, x, p.v.clone()));
            }
        }
        out
    }

    /// Write as JSON lines: a header object followed by one object per
    /// point with fields `t`, `x`, `v`, `kind`.
    pub fn write_jsonl<W: Write>(&self, mut w: W, seed: u64, stream: u64) -> Result<()> {
        let header = SkeletonHeader {
            d: self.dim(),
            horizon: self.horizon.to_real(),
            seed,
            stream,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for p in &self.points {
            serde_json::to_writer(&mut w, p)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<(SkeletonHeader, Skeleton<F>)> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Contract("empty skeleton file".into()))??;
        let header: SkeletonHeader = serde_json::from_str(&header_line)?;
        let mut points = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            points.push(serde_json::from_str::<SkeletonPoint<F>>(&line)?);
        }
        let skel = Skeleton::new(points, F::from_real(header.horizon))?;
        Ok((header, skel))
    }
}

//! Messages exchanged by the simulated protocol and their serialization.
//!
//! A transcript serializes as one line per message:
//!
//! ```text
//! <round>\t<down|up>\t<user index or ->\t<base64 payload>
//! ```
//!
//! Payloads are a tag byte followed by little-endian fields: `f64` values as
//! IEEE-754 bits, counts as `u32`, seeds and ids as `u64`, signs as `i8`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// One randomized sign.
    Bit(i8),
    /// A noisy real vector.
    Vector(Vec<f64>),
}

/// A single client message. `epsilon` is the local budget its randomizer used.
#[derive(Debug, Clone, PartialEq)]
pub struct LdpReport {
    pub user: usize,
    pub round: u32,
    pub epsilon: f64,
    pub payload: Payload,
}

/// Public server message opening a round.
#[derive(Debug, Clone, PartialEq)]
pub enum Broadcast {
    /// Seed of the public hash functions, the radius schedule, the reduced
    /// bucket domain size and the per-report budget.
    BucketSchedule {
        seed: u64,
        radii: Vec<f64>,
        domain: u64,
        epsilon: f64,
    },
    /// Kept `(radius index, reduced bucket id)` pairs.
    KeptBuckets {
        seed: u64,
        entries: Vec<(u32, u64)>,
        epsilon: f64,
    },
    /// A list of points the clients compare themselves against.
    Candidates {
        seed: u64,
        centers: Vec<Point>,
        epsilon: f64,
    },
}

impl Broadcast {
    pub fn epsilon(&self) -> f64 {
        match self {
            Broadcast::BucketSchedule { epsilon, .. }
            | Broadcast::KeptBuckets { epsilon, .. }
            | Broadcast::Candidates { epsilon, .. } => *epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpRound {
    pub index: u32,
    pub broadcast: Broadcast,
    pub reports: Vec<LdpReport>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LdpTranscript {
    rounds: Vec<LdpRound>,
}

impl LdpTranscript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, round: LdpRound) {
        self.rounds.push(round);
    }

    pub fn rounds(&self) -> &[LdpRound] {
        &self.rounds
    }

    pub fn round_count(&self) -> usize {
        self.rounds.len()
    }

    /// Total local budget spent by each of `n` users across all rounds.
    pub fn per_user_epsilon(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for round in &self.rounds {
            for r in &round.reports {
                if let Some(slot) = out.get_mut(r.user) {
                    *slot += r.epsilon;
                }
            }
        }
        out
    }

    /// Checks one report per user per round.
    pub fn validate(&self, n: usize) -> Result<()> {
        for round in &self.rounds {
            let mut seen = vec![false; n];
            for r in &round.reports {
                if r.round != round.index {
                    return Err(Error::Protocol(format!(
                        "report from user {} tagged round {} inside round {}",
                        r.user, r.round, round.index
                    )));
                }
                match seen.get_mut(r.user) {
                    Some(s) if !*s => *s = true,
                    Some(_) => return Err(Error::Protocol(format!("user {} reported twice in round {}", r.user, round.index))),
                    None => return Err(Error::Protocol(format!("unknown user {}", r.user))),
                }
            }
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut out = String::from("# dpkm transcript v1: round\tdirection\tuser\tpayload\n");
        for round in &self.rounds {
            out.push_str(&format!("{}\tdown\t-\t{}\n", round.index, STANDARD.encode(encode_broadcast(&round.broadcast))));
            for r in &round.reports {
                out.push_str(&format!("{}\tup\t{}\t{}\n", r.round, r.user, STANDARD.encode(encode_report(r))));
            }
        }
        out
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        let mut t = LdpTranscript::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Protocol(format!("line {}: {what}", lineno + 1));
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            let round: u32 = fields[0].parse().map_err(|_| bad("bad round"))?;
            let bytes = STANDARD.decode(fields[3]).map_err(|_| bad("bad base64"))?;
            match fields[1] {
                "down" => {
                    let broadcast = decode_broadcast(&bytes).ok_or_else(|| bad("bad broadcast payload"))?;
                    t.rounds.push(LdpRound {
                        index: round,
                        broadcast,
                        reports: Vec::new(),
                    });
                }
                "up" => {
                    let user: usize = fields[2].parse().map_err(|_| bad("bad user"))?;
                    let (epsilon, payload) = decode_report(&bytes).ok_or_else(|| bad("bad report payload"))?;
                    let current = t.rounds.last_mut().ok_or_else(|| bad("report before any broadcast"))?;
                    current.reports.push(LdpReport {
                        user,
                        round,
                        epsilon,
                        payload,
                    });
                }
                _ => return Err(bad("direction must be `down` or `up`")),
            }
        }
        Ok(t)
    }
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn encode_report(r: &LdpReport) -> Vec<u8> {
    let mut buf = Vec::new();
    match &r.payload {
        Payload::Bit(b) => {
            buf.push(0x01);
            put_f64(&mut buf, r.epsilon);
            buf.push(*b as u8);
        }
        Payload::Vector(v) => {
            buf.push(0x02);
            put_f64(&mut buf, r.epsilon);
            put_u32(&mut buf, v.len() as u32);
            v.iter().for_each(|x| put_f64(&mut buf, *x));
        }
    }
    buf
}

fn encode_broadcast(b: &Broadcast) -> Vec<u8> {
    let mut buf = Vec::new();
    match b {
        Broadcast::BucketSchedule {
            seed,
            radii,
            domain,
            epsilon,
        } => {
            buf.push(0x10);
            put_u64(&mut buf, *seed);
            put_f64(&mut buf, *epsilon);
            put_u64(&mut buf, *domain);
            put_u32(&mut buf, radii.len() as u32);
            radii.iter().for_each(|r| put_f64(&mut buf, *r));
        }
        Broadcast::KeptBuckets { seed, entries, epsilon } => {
            buf.push(0x11);
            put_u64(&mut buf, *seed);
            put_f64(&mut buf, *epsilon);
            put_u32(&mut buf, entries.len() as u32);
            for (r, id) in entries {
                put_u32(&mut buf, *r);
                put_u64(&mut buf, *id);
            }
        }
        Broadcast::Candidates { seed, centers, epsilon } => {
            buf.push(0x12);
            put_u64(&mut buf, *seed);
            put_f64(&mut buf, *epsilon);
            put_u32(&mut buf, centers.len() as u32);
            put_u32(&mut buf, centers.first().map_or(0, Point::dim) as u32);
            for c in centers {
                c.coords().iter().for_each(|x| put_f64(&mut buf, *x));
            }
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let (head, rest) = self.bytes.split_at_checked(N)?;
        self.bytes = rest;
        head.try_into().ok()
    }

    fn u8(&mut self) -> Option<u8> {
        self.take::<1>().map(|b| b[0])
    }

    fn u32(&mut self) -> Option<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Option<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }

    fn done(&self) -> bool {
        self.bytes.is_empty()
    }
}

fn decode_report(bytes: &[u8]) -> Option<(f64, Payload)> {
    let mut r = Reader { bytes };
    let tag = r.u8()?;
    let epsilon = r.f64()?;
    let payload = match tag {
        0x01 => Payload::Bit(r.u8()? as i8),
        0x02 => {
            let len = r.u32()? as usize;
            Payload::Vector((0..len).map(|_| r.f64()).collect::<Option<Vec<_>>>()?)
        }
        _ => return None,
    };
    r.done().then_some((epsilon, payload))
}

fn decode_broadcast(bytes: &[u8]) -> Option<Broadcast> {
    let mut r = Reader { bytes };
    let tag = r.u8()?;
    let seed = r.u64()?;
    let epsilon = r.f64()?;
    let b = match tag {
        0x10 => {
            let domain = r.u64()?;
            let len = r.u32()? as usize;
            let radii = (0..len).map(|_| r.f64()).collect::<Option<Vec<_>>>()?;
            Broadcast::BucketSchedule {
                seed,
                radii,
                domain,
                epsilon,
            }
        }
        0x11 => {
            let len = r.u32()? as usize;
            let entries = (0..len)
                .map(|_| Some((r.u32()?, r.u64()?)))
                .collect::<Option<Vec<_>>>()?;
            Broadcast::KeptBuckets { seed, entries, epsilon }
        }
        0x12 => {
            let len = r.u32()? as usize;
            let dim = r.u32()? as usize;
            let centers = (0..len)
                .map(|_| {
                    let coords = (0..dim).map(|_| r.f64()).collect::<Option<Vec<_>>>()?;
                    Point::new(coords).ok()
                })
                .collect::<Option<Vec<_>>>()?;
            Broadcast::Candidates { seed, centers, epsilon }
        }
        _ => return None,
    };
    r.done().then_some(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialization_round_trips() {
        let mut t = LdpTranscript::new();
        t.push(LdpRound {
            index: 0,
            broadcast: Broadcast::BucketSchedule {
                seed: 7,
                radii: vec![0.5, 1.0],
                domain: 64,
                epsilon: 0.25,
            },
            reports: vec![
                LdpReport {
                    user: 0,
                    round: 0,
                    epsilon: 0.25,
                    payload: Payload::Bit(-1),
                },
                LdpReport {
                    user: 1,
                    round: 0,
                    epsilon: 0.25,
                    payload: Payload::Bit(1),
                },
            ],
        });
        t.push(LdpRound {
            index: 1,
            broadcast: Broadcast::Candidates {
                seed: 9,
                centers: vec![Point::new(vec![0.1, -0.2]).unwrap()],
                epsilon: 0.5,
            },
            reports: vec![LdpReport {
                user: 1,
                round: 1,
                epsilon: 0.5,
                payload: Payload::Vector(vec![1.5, -2.25, 0.0]),
            }],
        });
        t.push(LdpRound {
            index: 2,
            broadcast: Broadcast::KeptBuckets {
                seed: 11,
                entries: vec![(0, 3), (2, 17)],
                epsilon: 0.25,
            },
            reports: Vec::new(),
        });
        let text = t.serialize();
        assert_eq!(text.lines().count(), 1 + 3 + 3);
        assert_eq!(LdpTranscript::deserialize(&text).unwrap(), t);
        assert_eq!(t.per_user_epsilon(2), vec![0.25, 0.75]);
        t.validate(2).unwrap();
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(LdpTranscript::deserialize("0\tsideways\t-\tAA==\n").is_err());
        assert!(LdpTranscript::deserialize("0\tup\t1\tAQ==\n").is_err());
    }
}

//! Synthetic memory-game data drawn from known decay curves.
//!
//! [`simulate_dataset`] works at the annotation level: every video receives
//! `annotations_per_video` repeat presentations at lags drawn uniformly from
//! `[lag_lo, lag_hi]`, each detected with probability equal to the true curve
//! at that lag (clamped into `[0, 1]`). [`simulate_stream_session`] lays the
//! same draws out as an explicit stream of videos for one participant.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotationRecord, DecayCurve, VideoScoreTable, DEFAULT_REF_LAG};
use crate::rng::{stream_rng, string_key, Domain};

/// Distribution of one true curve parameter across videos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamDist {
    Constant {
        value: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Value `i` goes to video `i`; must have exactly `n_videos` entries.
    List {
        values: Vec<f64>,
    },
}

impl ParamDist {
    fn validate(&self, name: &str, n_videos: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(format!("{name}: {m}")));
        match self {
            ParamDist::Constant { value } if !value.is_finite() => {
                bad("value must be finite".into())
            }
            ParamDist::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                bad(format!("need finite lo <= hi, got [{lo}, {hi}]"))
            }
            ParamDist::List { values } if values.len() != n_videos => bad(format!(
                "list has {} values for {n_videos} videos",
                values.len()
            )),
            ParamDist::List { values } if values.iter().any(|v| !v.is_finite()) => {
                bad("list values must be finite".into())
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, video: usize) -> f64 {
        match self {
            ParamDist::Constant { value } => *value,
            ParamDist::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                lo + (hi - lo) * u
            }
            ParamDist::List { values } => values[video],
        }
    }
}

impl fmt::Display for ParamDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamDist::Constant { value } => write!(f, "const:{value}"),
            ParamDist::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            ParamDist::List { values } => {
                let parts: Vec<String> = values.iter().map(f64::to_string).collect();
                write!(f, "list:{}", parts.join(","))
            }
        }
    }
}

/// Parses `const:V`, `uniform:LO:HI` or `list:V1,V2,...`.
impl FromStr for ParamDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidSpec(format!("`{t}` is not a number in `{s}`")))
        };
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidSpec(format!("expected KIND:ARGS, got `{s}`")))?;
        match kind {
            "const" => Ok(ParamDist::Constant { value: num(rest)? }),
            "uniform" => {
                let (lo, hi) = rest.split_once(':').ok_or_else(|| {
                    Error::InvalidSpec(format!("expected uniform:LO:HI, got `{s}`"))
                })?;
                Ok(ParamDist::Uniform {
                    lo: num(lo)?,
                    hi: num(hi)?,
                })
            }
            "list" => Ok(ParamDist::List {
                values: rest.split(',').map(num).collect::<Result<_>>()?,
            }),
            other => Err(Error::InvalidSpec(format!(
                "unknown distribution `{other}`"
            ))),
        }
    }
}

/// Parameters of a synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n_videos: usize,
    pub annotations_per_video: usize,
    /// Participants are assigned round-robin over the annotation sequence.
    pub n_participants: usize,
    pub lag_lo: u32,
    pub lag_hi: u32,
    pub ref_lag: u32,
    pub m80_dist: ParamDist,
    pub alpha_dist: ParamDist,
    /// Keypress probability on presentations that are not repeats.
    pub false_alarm_rate: f64,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            n_videos: 200,
            annotations_per_video: 90,
            n_participants: 100,
            lag_lo: 9,
            lag_hi: 200,
            ref_lag: DEFAULT_REF_LAG,
            m80_dist: ParamDist::Uniform { lo: 0.4, hi: 1.0 },
            alpha_dist: ParamDist::Uniform { lo: -1e-3, hi: 0.0 },
            false_alarm_rate: 0.0,
            seed: 0,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.into()));
        if self.n_videos == 0 {
            return bad("n_videos must be >= 1");
        }
        if self.annotations_per_video == 0 {
            return bad("annotations_per_video must be >= 1");
        }
        if self.n_participants == 0 {
            return bad("n_participants must be >= 1");
        }
        if self.lag_lo == 0 || self.lag_lo > self.lag_hi {
            return bad("need 1 <= lag_lo <= lag_hi");
        }
        if self.ref_lag == 0 {
            return bad("ref_lag must be >= 1");
        }
        if !(0.0..1.0).contains(&self.false_alarm_rate) {
            return bad("false_alarm_rate must lie in [0, 1)");
        }
        self.m80_dist.validate("m80_dist", self.n_videos)?;
        self.alpha_dist.validate("alpha_dist", self.n_videos)?;
        Ok(())
    }

    fn id_width(n: usize) -> usize {
        n.saturating_sub(1).max(1).to_string().len()
    }

    pub fn video_id(&self, index: usize) -> String {
        format!("v{:0w$}", index, w = Self::id_width(self.n_videos))
    }

    pub fn participant_id(&self, index: usize) -> String {
        format!("p{:0w$}", index, w = Self::id_width(self.n_participants))
    }

    /// Ground-truth curves, in video index order.
    pub fn true_curves(&self) -> Result<Vec<(String, DecayCurve)>> {
        self.validate()?;
        (0..self.n_videos)
            .map(|i| {
                let mut rng = stream_rng(self.seed, Domain::TrueCurves, i as u64);
                let m = self.m80_dist.sample(&mut rng, i);
                let a = self.alpha_dist.sample(&mut rng, i);
                let n = self.annotations_per_video as u64;
                Ok((self.video_id(i), DecayCurve::new(m, a, self.ref_lag, n)?))
            })
            .collect()
    }
}

/// Output of [`simulate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub truth: VideoScoreTable,
    pub records: Vec<AnnotationRecord>,
    pub participants: Vec<String>,
}

/// Draws a complete annotation dataset from `spec`.
pub fn simulate_dataset(spec: &SimSpec) -> Result<SimResult> {
    let curves = spec.true_curves()?;
    let per_video = spec.annotations_per_video;
    let participants: Vec<String> = (0..spec.n_participants)
        .map(|p| spec.participant_id(p))
        .collect();

    let records: Vec<AnnotationRecord> = curves
        .par_iter()
        .enumerate()
        .flat_map_iter(|(v, (video_id, curve))| {
            let mut rng = stream_rng(spec.seed, Domain::VideoAnnotations, v as u64);
            let participants = &participants;
            (0..per_video).map(move |j| {
                let lag = rng.random_range(spec.lag_lo..=spec.lag_hi);
                let p = curve.score_at_lag(lag, true);
                let response = rng.random::<f64>() < p;
                AnnotationRecord {
                    video_id: video_id.clone(),
                    participant_id: participants[(v * per_video + j) % participants.len()].clone(),
                    lag,
                    response,
                }
            })
        })
        .collect();

    Ok(SimResult {
        truth: curves.into_iter().collect(),
        records,
        participants,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresentationKind {
    Filler,
    /// First showing of a target video.
    TargetFirst,
    /// Second showing; the participant should respond.
    TargetRepeat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Presentation {
    pub position: usize,
    pub video_id: String,
    pub kind: PresentationKind,
    /// Set on both presentations of a target pair.
    pub lag: Option<u32>,
    pub keypress: bool,
}

/// One participant's stream of presentations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub participant_id: String,
    pub presentations: Vec<Presentation>,
}

impl Session {
    /// Repeat presentations as annotation records, in stream order.
    pub fn target_records(&self) -> Vec<AnnotationRecord> {
        self.presentations
            .iter()
            .filter(|p| p.kind == PresentationKind::TargetRepeat)
            .map(|p| AnnotationRecord {
                video_id: p.video_id.clone(),
                participant_id: self.participant_id.clone(),
                lag: p.lag.expect("repeat presentations carry a lag"),
                response: p.keypress,
            })
            .collect()
    }

    /// Keypresses on presentations that were not repeats.
    pub fn false_alarms(&self) -> usize {
        self.presentations
            .iter()
            .filter(|p| p.kind != PresentationKind::TargetRepeat && p.keypress)
            .count()
    }
}

/// Builds an explicit presentation stream for one participant.
///
/// The stream is cut into blocks of `lag_hi + 2` positions, each holding one
/// target pair whose lag is uniform over `[lag_lo, lag_hi]` and whose start is
/// uniform over the offsets that fit in the block. Every other position is a
/// filler. A trailing partial block is left to fillers, except when the whole
/// session is shorter than one block: then a single pair is placed with its lag
/// drawn from `[lag_lo, session_length - 2]`.
pub fn simulate_stream_session(
    spec: &SimSpec,
    participant_id: &str,
    session_length: usize,
) -> Result<Session> {
    let curves = spec.true_curves()?;
    let lag_lo = spec.lag_lo as usize;
    if session_length < lag_lo + 2 {
        return Err(Error::InvalidSpec(format!(
            "session_length {session_length} cannot hold a repeat at lag {lag_lo}"
        )));
    }
    let block = spec.lag_hi as usize + 2;
    let (n_blocks, block_len, lag_hi) = if session_length >= block {
        (session_length / block, block, spec.lag_hi as usize)
    } else {
        (1, session_length, session_length - 2)
    };

    let mut rng = stream_rng(spec.seed, Domain::Session, string_key(participant_id));
    let targets: Vec<usize> = if n_blocks <= curves.len() {
        rand::seq::index::sample(&mut rng, curves.len(), n_blocks).into_vec()
    } else {
        (0..n_blocks)
            .map(|_| rng.random_range(0..curves.len()))
            .collect()
    };

    let mut slots: Vec<Option<Presentation>> = vec![None; session_length];
    for (b, &video) in targets.iter().enumerate() {
        let lag = rng.random_range(lag_lo..=lag_hi);
        let offset = rng.random_range(0..=block_len - lag - 2);
        let first = b * block_len + offset;
        let repeat = first + lag + 1;
        let (video_id, curve) = &curves[video];
        let p = curve.score_at_lag(lag as u32, true);
        slots[first] = Some(Presentation {
            position: first,
            video_id: video_id.clone(),
            kind: PresentationKind::TargetFirst,
            lag: Some(lag as u32),
            keypress: false,
        });
        slots[repeat] = Some(Presentation {
            position: repeat,
            video_id: video_id.clone(),
            kind: PresentationKind::TargetRepeat,
            lag: Some(lag as u32),
            keypress: rng.random::<f64>() < p,
        });
    }

    let presentations = slots
        .into_iter()
        .enumerate()
        .map(|(pos, slot)| {
            let mut p = slot.unwrap_or_else(|| Presentation {
                position: pos,
                video_id: format!("filler-{pos}"),
                kind: PresentationKind::Filler,
                lag: None,
                keypress: false,
            });
            if p.kind != PresentationKind::TargetRepeat {
                p.keypress = rng.random::<f64>() < spec.false_alarm_rate;
            }
            p
        })
        .collect();

    Ok(Session {
        participant_id: participant_id.to_owned(),
        presentations,
    })
}

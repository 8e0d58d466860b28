//! Trial log format.
//!
//! Line 1 is a JSON header with the configuration, seed and per-movement
//! metadata. Line 2 names the columns. Every further line is one sample:
//!
//! ```text
//! t,x,y,z,fx,fy,fz,phase,trial,direction
//! ```
//!
//! Floats are written in shortest round-trip form, so parsing a log and
//! writing it again reproduces the original bytes.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{SphereSurface, Vec3};
use crate::haptic::{Experiment, Protocol, ServoConfig, SubjectModel};

pub const FORMAT_NAME: &str = "sphere-minjerk trial log";
pub const FORMAT_VERSION: u32 = 1;
pub const COLUMNS: &str = "t,x,y,z,fx,fy,fz,phase,trial,direction";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    TestPre,
    Training,
    TestPost,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::TestPre, Phase::Training, Phase::TestPost];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::TestPre => "test_pre",
            Phase::Training => "training",
            Phase::TestPost => "test_post",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Phase::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown phase {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            _ => Err(format!("unknown direction {s:?}")),
        }
    }
}

/// One logged sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub position: Vec3<f64>,
    pub force: Vec3<f64>,
    pub phase: Phase,
    /// Trial index within the phase.
    pub trial: u32,
    pub direction: Direction,
}

/// Generation-time metadata for one movement.
///
/// Sample indices are global. The block `first_sample .. first_sample + sample_count`
/// holds the movement followed by its dwell; `onset_sample..=offset_sample` is
/// the part above the separation threshold plus one sample on each side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovementInfo {
    pub index: u32,
    pub phase: Phase,
    pub trial: u32,
    pub direction: Direction,
    pub start_target: usize,
    pub end_target: usize,
    pub learning_index: u32,
    pub duration: f64,
    pub peak_speed: f64,
    /// Whether the peak speed fell inside the speed band (the tone feedback).
    pub in_band: bool,
    /// A rest period precedes this movement.
    pub rest_before: bool,
    pub first_sample: u64,
    pub sample_count: u64,
    pub onset_sample: u64,
    pub offset_sample: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    /// True for simulator output.
    pub synthetic: bool,
    pub seed: u64,
    pub sphere: SphereSurface<f64>,
    pub plane_height: f64,
    pub targets: [Vec3<f64>; 3],
    pub servo: ServoConfig,
    pub subject: Option<SubjectModel>,
    pub protocol: Protocol,
    pub movements: Vec<MovementInfo>,
}

impl LogHeader {
    pub fn synthetic(exp: &Experiment, targets: [Vec3<f64>; 3], movements: Vec<MovementInfo>) -> Self {
        Self {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            synthetic: true,
            seed: exp.subject.rng_seed,
            sphere: exp.sphere,
            plane_height: exp.plane_height,
            targets,
            servo: exp.servo,
            subject: Some(exp.subject),
            protocol: exp.protocol,
            movements,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialLog {
    pub header: LogHeader,
    pub samples: Vec<Sample>,
}

impl TrialLog {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        w.write_all(COLUMNS.as_bytes())?;
        w.write_all(b"\n")?;
        let mut line = String::with_capacity(160);
        for s in &self.samples {
            line.clear();
            format_sample(s, &mut line);
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("log output is ASCII")
    }

    /// Parses a log; errors carry the 1-based line number.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header_line = next_line(&mut lines, 1)?.ok_or_else(|| format_error(1, "missing header"))?;
        let header: LogHeader =
            serde_json::from_str(&header_line).map_err(|e| format_error(1, &format!("bad header: {e}")))?;
        if header.format != FORMAT_NAME {
            return Err(format_error(1, &format!("unrecognized format {:?}", header.format)));
        }
        if header.version != FORMAT_VERSION {
            return Err(format_error(1, &format!("unsupported version {}", header.version)));
        }
        match next_line(&mut lines, 2)? {
            Some(cols) if cols == COLUMNS => {}
            Some(cols) => return Err(format_error(2, &format!("expected columns {COLUMNS:?}, got {cols:?}"))),
            None => return Err(format_error(2, "missing column line")),
        }
        let mut samples = Vec::new();
        let mut number = 2;
        while let Some(line) = next_line(&mut lines, number + 1)? {
            number += 1;
            samples.push(parse_sample(&line).map_err(|m| format_error(number, &m))?);
        }
        Ok(TrialLog { header, samples })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }

    /// Checks the sample clock and the movement index ranges against the header.
    pub fn validate(&self) -> Result<()> {
        let rate = f64::from(self.header.servo.sample_rate);
        if !(rate > 0.0) {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        for (k, s) in self.samples.iter().enumerate() {
            let expected = k as f64 / rate;
            if (s.t - expected).abs() > 1e-9 * (1.0 + expected) {
                return Err(format_error(
                    k + 3,
                    &format!("timestamp {} is off the {} Hz grid", s.t, rate),
                ));
            }
        }
        let n = self.samples.len() as u64;
        for m in &self.header.movements {
            if m.first_sample + m.sample_count > n {
                return Err(format_error(
                    1,
                    &format!("movement {} extends past the last sample", m.index),
                ));
            }
        }
        Ok(())
    }
}

fn next_line<I: Iterator<Item = std::io::Result<String>>>(lines: &mut I, number: usize) -> Result<Option<String>> {
    match lines.next() {
        None => Ok(None),
        Some(Ok(l)) => Ok(Some(l)),
        Some(Err(e)) => Err(format_error(number, &e.to_string())),
    }
}

fn format_error(line: usize, message: &str) -> Error {
    Error::LogFormat {
        line,
        message: message.to_string(),
    }
}

fn push_float(out: &mut String, x: f64) {
    let mut buf = ryu::Buffer::new();
    out.push_str(buf.format(x));
}

fn format_sample(s: &Sample, out: &mut String) {
    for (k, v) in [
        s.t,
        s.position.x,
        s.position.y,
        s.position.z,
        s.force.x,
        s.force.y,
        s.force.z,
    ]
    .into_iter()
    .enumerate()
    {
        if k > 0 {
            out.push(',');
        }
        push_float(out, v);
    }
    out.push(',');
    out.push_str(s.phase.as_str());
    out.push(',');
    out.push_str(&s.trial.to_string());
    out.push(',');
    out.push_str(s.direction.as_str());
    out.push('\n');
}

fn parse_sample(line: &str) -> std::result::Result<Sample, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 10 {
        return Err(format!("expected 10 fields, found {}", fields.len()));
    }
    let mut v = [0.0f64; 7];
    for (k, slot) in v.iter_mut().enumerate() {
        let x: f64 = fields[k]
            .parse()
            .map_err(|_| format!("field {} is not a number: {:?}", k + 1, fields[k]))?;
        if !x.is_finite() {
            return Err(format!("field {} is not finite", k + 1));
        }
        *slot = x;
    }
    Ok(Sample {
        t: v[0],
        position: Vec3::new(v[1], v[2], v[3]),
        force: Vec3::new(v[4], v[5], v[6]),
        phase: fields[7].parse()?,
        trial: fields[8]
            .parse()
            .map_err(|_| format!("trial index is not a non-negative integer: {:?}", fields[8]))?,
        direction: fields[9].parse()?,
    })
}

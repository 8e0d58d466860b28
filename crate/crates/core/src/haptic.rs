//! The virtual elastic sphere, its servo loop and a synthetic learning subject.
//!
//! The subject model is synthetic: an exponentially decaying lateral bias,
//! radial penetration and timing skew on top of the geodesic-quintic motion,
//! plus speed-proportional motor noise. It exists to exercise the analysis
//! pipeline end to end, not to model human motor control.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geodesic_between, triangle_targets, GeodesicArc, SphereSurface, Vec3};
use crate::reference::sigma_derivative;
use crate::scalar::Real;
use crate::triallog::{Direction, LogHeader, MovementInfo, Phase, Sample, TrialLog};

/// Bilateral penalty force `-k (|p - c| - r) u`, with `u` the outward unit normal.
///
/// Points within the surface tolerance of the sphere get exactly zero force.
pub fn contact_force<T: Real>(p: &Vec3<T>, s: &SphereSurface<T>) -> Result<Vec3<T>> {
    let d = *p - s.center;
    let dist = d.norm();
    if dist == T::zero() {
        return Err(Error::DegenerateProjection);
    }
    let offset = dist - s.radius;
    if offset.abs() <= T::surface_tolerance() * s.radius {
        return Ok(Vec3::zero());
    }
    Ok(d * (-s.stiffness * offset / dist))
}

/// Servo loop and sampling parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoConfig {
    /// Force update rate, Hz.
    pub servo_rate: u32,
    /// Logging rate, Hz. Must divide `servo_rate`.
    pub sample_rate: u32,
    /// Target peak-speed band `[min, max]`, m/s.
    pub speed_band: [f64; 2],
    /// A rest marker is placed before every `rest_every`-th movement; 0 disables.
    pub rest_every: u32,
    /// Speed below which the hand counts as stopped when marking movement bounds, m/s.
    pub separation_threshold: f64,
    /// Pause at the end target after each movement, s.
    pub dwell: f64,
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self {
            servo_rate: 1000,
            sample_rate: 100,
            speed_band: [0.6, 1.0],
            rest_every: 40,
            separation_threshold: 0.005,
            dwell: 0.6,
        }
    }
}

impl ServoConfig {
    /// Servo ticks per logged sample.
    pub fn decimation(&self) -> u32 {
        self.servo_rate / self.sample_rate
    }

    fn dwell_samples(&self) -> u64 {
        (self.dwell * f64::from(self.sample_rate)).round() as u64
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.sample_rate == 0 {
            out.push("sample_rate must be positive".to_string());
        }
        if self.servo_rate == 0 {
            out.push("servo_rate must be positive".to_string());
        }
        if self.sample_rate > 0 && !self.servo_rate.is_multiple_of(self.sample_rate) {
            out.push(format!(
                "servo_rate {} is not an integer multiple of sample_rate {}",
                self.servo_rate, self.sample_rate
            ));
        }
        let [lo, hi] = self.speed_band;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            out.push(format!("speed_band must satisfy 0 < min <= max, got [{lo}, {hi}]"));
        }
        if !(self.separation_threshold.is_finite() && self.separation_threshold > 0.0) {
            out.push(format!(
                "separation_threshold must be positive, got {}",
                self.separation_threshold
            ));
        }
        if !self.dwell.is_finite() || self.sample_rate == 0 || self.dwell_samples() == 0 {
            out.push(format!(
                "dwell must cover at least one sample period, got {} s",
                self.dwell
            ));
        }
        out
    }
}

/// Generative stand-in for a subject.
///
/// Each bias is scaled by `exp(-learning_rate * k)` where `k` is the learning
/// index of the movement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectModel {
    /// Peak lateral deviation as a fraction of the arc length.
    pub path_bias: f64,
    /// Peak radial penetration into the sphere, m.
    pub penetration_bias: f64,
    /// Skew of the timing law, dimensionless; the applied skew is capped at 0.9.
    pub timing_distortion: f64,
    /// Per-trial exponential decay constant; 0 disables learning.
    pub learning_rate: f64,
    /// Noise standard deviation per unit speed, s.
    pub motor_noise: f64,
    pub rng_seed: u64,
}

impl Default for SubjectModel {
    fn default() -> Self {
        Self {
            path_bias: 0.1,
            penetration_bias: 0.003,
            timing_distortion: 0.4,
            learning_rate: 0.01,
            motor_noise: 0.0003,
            rng_seed: 0,
        }
    }
}

const MAX_SKEW: f64 = 0.9;

impl SubjectModel {
    /// A subject that reproduces the geodesic-quintic reference exactly.
    pub fn ideal(rng_seed: u64) -> Self {
        Self {
            path_bias: 0.0,
            penetration_bias: 0.0,
            timing_distortion: 0.0,
            learning_rate: 0.0,
            motor_noise: 0.0,
            rng_seed,
        }
    }

    pub fn decay(&self, learning_index: u32) -> f64 {
        (-self.learning_rate * f64::from(learning_index)).exp()
    }

    /// Peak lateral displacement (m) on an arc of length `arc_length`.
    pub fn lateral_amplitude(&self, arc_length: f64, learning_index: u32) -> f64 {
        self.path_bias * arc_length * self.decay(learning_index)
    }

    pub fn problems(&self) -> Vec<String> {
        let fields = [
            ("path_bias", self.path_bias),
            ("penetration_bias", self.penetration_bias),
            ("timing_distortion", self.timing_distortion),
            ("learning_rate", self.learning_rate),
            ("motor_noise", self.motor_noise),
        ];
        fields
            .iter()
            .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .map(|(name, v)| format!("{name} must be finite and non-negative, got {v}"))
            .collect()
    }
}

/// Movement counts per phase and the target edges each phase uses.
///
/// An edge `[a, b]` is traversed forward as `a -> b`. Directions alternate
/// within a phase, starting forward, so an even count ends back at `a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub test_pre: u32,
    pub training: u32,
    pub test_post: u32,
    pub test_edge: [usize; 2],
    pub training_edge: [usize; 2],
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            test_pre: 60,
            training: 300,
            test_post: 60,
            test_edge: [2, 0],
            training_edge: [2, 1],
        }
    }
}

impl Protocol {
    pub fn total(&self) -> usize {
        (self.test_pre + self.training + self.test_post) as usize
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, [a, b]) in [("test_edge", self.test_edge), ("training_edge", self.training_edge)] {
            if a > 2 || b > 2 || a == b {
                out.push(format!(
                    "{name} must name two distinct targets in 0..=2, got [{a}, {b}]"
                ));
            }
        }
        out
    }

    /// Phase, trial within phase, learning index and edge for each movement, in order.
    fn schedule(&self) -> Vec<(Phase, u32, u32, [usize; 2])> {
        let mut out = Vec::with_capacity(self.total());
        out.extend((0..self.test_pre).map(|k| (Phase::TestPre, k, 0, self.test_edge)));
        out.extend((0..self.training).map(|k| (Phase::Training, k, k, self.training_edge)));
        out.extend((0..self.test_post).map(|k| (Phase::TestPost, k, self.training, self.test_edge)));
        out
    }
}

/// Full description of one simulated experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub sphere: SphereSurface<f64>,
    /// Height of the target plane above the sphere center, m.
    pub plane_height: f64,
    pub servo: ServoConfig,
    pub subject: SubjectModel,
    pub protocol: Protocol,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            sphere: SphereSurface::experiment(),
            plane_height: 0.08,
            servo: ServoConfig::default(),
            subject: SubjectModel::default(),
            protocol: Protocol::default(),
        }
    }
}

impl Experiment {
    /// Every configuration problem found, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = SphereSurface::new(self.sphere.center, self.sphere.radius, self.sphere.stiffness) {
            out.push(e.to_string());
        }
        if !(self.plane_height.is_finite() && self.plane_height.abs() < self.sphere.radius) {
            out.push(format!(
                "plane_height {} must lie strictly inside the sphere radius {}",
                self.plane_height, self.sphere.radius
            ));
        }
        out.extend(self.servo.problems());
        out.extend(self.subject.problems());
        out.extend(self.protocol.problems());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    pub fn targets(&self) -> Result<[Vec3<f64>; 3]> {
        triangle_targets(&self.sphere, self.plane_height)
    }
}

/// Hand path for one movement at `servo_rate`, ticks `0..=n` with `n = round(tf * servo_rate)`.
///
/// The first and last points are exactly the arc endpoints. The noise draws
/// advance `rng` by three normals per tick even when `motor_noise` is zero.
pub fn synthetic_movement<R: Rng + ?Sized>(
    arc: &GeodesicArc<f64>,
    subject: &SubjectModel,
    learning_index: u32,
    duration: f64,
    servo_rate: u32,
    rng: &mut R,
) -> Result<Vec<Vec3<f64>>> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "movement duration must be positive, got {duration}"
        )));
    }
    let rate = f64::from(servo_rate);
    let n = (duration * rate).round().max(1.0) as usize;
    let decay = subject.decay(learning_index);
    let skew = (subject.timing_distortion * decay).min(MAX_SKEW);
    let lateral = subject.lateral_amplitude(arc.arc_length, learning_index) / arc.sphere.radius;
    let depth = subject.penetration_bias * decay;
    let pi = std::f64::consts::PI;

    let mut path = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let tau = (i as f64 / rate / duration).min(1.0);
        let w = tau + skew * tau * (1.0 - tau);
        let dw = 1.0 + skew * (1.0 - 2.0 * tau);
        let u = sigma_derivative(w, 0);
        let bump = (pi * u).sin();
        let beta = lateral * bump;
        let dir = arc.direction_at_angle(u * arc.central_angle) * beta.cos() + arc.normal * beta.sin();
        let p = arc.sphere.center + dir * (arc.sphere.radius - depth * bump);

        let speed = arc.arc_length * sigma_derivative(w, 1) * dw / duration;
        let sd = subject.motor_noise * speed;
        let noise = Vec3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        path.push(p + noise * sd);
    }
    path[0] = arc.start();
    path[n] = arc.end();
    Ok(path)
}

/// One servo update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServoTick {
    pub tick: u64,
    pub t: f64,
    pub position: Vec3<f64>,
    pub force: Vec3<f64>,
}

/// Runs the protocol and returns the decimated log.
pub fn run_experiment(exp: &Experiment) -> Result<TrialLog> {
    run_experiment_with_trace(exp, |_| {})
}

/// As [`run_experiment`], also handing every servo tick to `on_tick`.
pub fn run_experiment_with_trace<F: FnMut(&ServoTick)>(exp: &Experiment, mut on_tick: F) -> Result<TrialLog> {
    exp.validate()?;
    let targets = exp.targets()?;
    let servo = &exp.servo;
    let decim = u64::from(servo.decimation());
    let sample_rate = f64::from(servo.sample_rate);
    let servo_rate = f64::from(servo.servo_rate);
    let dwell_ticks = servo.dwell_samples() * decim;
    let mut rng = ChaCha8Rng::seed_from_u64(exp.subject.rng_seed);

    let mut samples: Vec<Sample> = Vec::new();
    let mut movements: Vec<MovementInfo> = Vec::new();
    let mut tick: u64 = 0;

    let mut emit =
        |tick: &mut u64, p: Vec3<f64>, label: (Phase, u32, Direction), samples: &mut Vec<Sample>| -> Result<()> {
            let force = contact_force(&p, &exp.sphere)?;
            on_tick(&ServoTick {
                tick: *tick,
                t: *tick as f64 / servo_rate,
                position: p,
                force,
            });
            if (*tick).is_multiple_of(decim) {
                samples.push(Sample {
                    t: (*tick / decim) as f64 / sample_rate,
                    position: p,
                    force,
                    phase: label.0,
                    trial: label.1,
                    direction: label.2,
                });
            }
            *tick += 1;
            Ok(())
        };

    let schedule = exp.protocol.schedule();
    let mut prev_phase = None;
    let mut within = 0u32;
    for (index, &(phase, trial, learning_index, edge)) in schedule.iter().enumerate() {
        if prev_phase != Some(phase) {
            within = 0;
            prev_phase = Some(phase);
        }
        let direction = if within.is_multiple_of(2) {
            Direction::Forward
        } else {
            Direction::Backward
        };
        within += 1;
        let (from, to) = match direction {
            Direction::Forward => (edge[0], edge[1]),
            Direction::Backward => (edge[1], edge[0]),
        };
        let arc = geodesic_between(&targets[from], &targets[to], &exp.sphere)?;
        let label = (phase, trial, direction);

        if index == 0 {
            for _ in 0..dwell_ticks {
                emit(&mut tick, arc.start(), label, &mut samples)?;
            }
        }

        let v_star = rng.random_range(servo.speed_band[0]..=servo.speed_band[1]);
        let periods = (1.875 * arc.arc_length / v_star * sample_rate).round().max(1.0);
        let duration = periods / sample_rate;
        let path = synthetic_movement(&arc, &exp.subject, learning_index, duration, servo.servo_rate, &mut rng)?;
        let first_sample = samples.len();
        let move_ticks = path.len() - 1;
        for p in &path[..move_ticks] {
            emit(&mut tick, *p, label, &mut samples)?;
        }
        for _ in 0..dwell_ticks {
            emit(&mut tick, arc.end(), label, &mut samples)?;
        }

        let block = &samples[first_sample..];
        let speeds = sample_speeds(block, sample_rate);
        let peak_speed = speeds.iter().copied().fold(0.0, f64::max);
        let moving: Vec<usize> = (0..speeds.len())
            .filter(|&k| speeds[k] > servo.separation_threshold)
            .collect();
        let (onset, offset) = match (moving.first(), moving.last()) {
            (Some(&a), Some(&b)) => (a.saturating_sub(1), (b + 1).min(block.len() - 1)),
            _ => (0, block.len() - 1),
        };
        movements.push(MovementInfo {
            index: index as u32,
            phase,
            trial,
            direction,
            start_target: from,
            end_target: to,
            learning_index,
            duration,
            peak_speed,
            in_band: peak_speed >= servo.speed_band[0] && peak_speed <= servo.speed_band[1],
            rest_before: servo.rest_every > 0 && index > 0 && index % servo.rest_every as usize == 0,
            first_sample: first_sample as u64,
            sample_count: block.len() as u64,
            onset_sample: (first_sample + onset) as u64,
            offset_sample: (first_sample + offset) as u64,
        });
    }

    Ok(TrialLog {
        header: LogHeader::synthetic(exp, targets, movements),
        samples,
    })
}

/// Central-difference speeds of a run of samples (one-sided at the ends).
fn sample_speeds(samples: &[Sample], rate: f64) -> Vec<f64> {
    let n = samples.len();
    (0..n)
        .map(|k| {
            if n < 2 {
                return 0.0;
            }
            let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
            samples[b].position.distance(&samples[a].position) * rate / (b - a) as f64
        })
        .collect()
}

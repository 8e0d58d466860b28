//! Movement segmentation and the five per-movement measures.
//!
//! - APD: mean distance to the geodesic between the observed endpoints, over its length.
//! - ACF: path-length-weighted mean contact-force magnitude.
//! - CFV: path-length-weighted variance of the force magnitude about ACF.
//! - VPE: area between the fitted tangential speed and the quintic bell.
//! - SSJ: integral of the squared jerk of the degree-8 fit.

mod polyfit;

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use polyfit::{fit_polynomial, PolyFit, FIT_DEGREE};

use crate::error::{Error, Result};
use crate::geometry::{geodesic_between, project_to_sphere, SphereSurface, Vec3};
use crate::haptic::contact_force;
use crate::reference::{reference_trajectory, QuinticProfile, ReferenceTrajectory};
use crate::scalar::Real;
use crate::triallog::{Direction, Phase, TrialLog};

/// Segmentation speed threshold, m/s.
pub const SEGMENT_THRESHOLD: f64 = 0.025;

/// One point-to-point movement.
#[derive(Clone, Debug, PartialEq)]
pub struct Movement<T> {
    pub times: Vec<T>,
    pub positions: Vec<Vec3<T>>,
    pub forces: Vec<Vec3<T>>,
    pub phase: Phase,
    pub trial: u32,
    pub direction: Direction,
    pub start_target: Option<usize>,
    pub end_target: Option<usize>,
}

impl<T: Real> Movement<T> {
    /// Unlabeled movement; needs matching lengths, two samples and increasing times.
    pub fn new(times: Vec<T>, positions: Vec<Vec3<T>>, forces: Vec<Vec3<T>>) -> Result<Self> {
        if positions.len() != times.len() || forces.len() != times.len() {
            return Err(Error::InvalidParameter(format!(
                "sample arrays differ in length: {} times, {} positions, {} forces",
                times.len(),
                positions.len(),
                forces.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: times.len(),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("sample times must increase strictly".into()));
        }
        Ok(Self {
            times,
            positions,
            forces,
            phase: Phase::Training,
            trial: 0,
            direction: Direction::Forward,
            start_target: None,
            end_target: None,
        })
    }

    /// The reference samples, with forces from the contact law.
    pub fn from_reference(r: &ReferenceTrajectory<T>) -> Result<Self> {
        let forces = r
            .positions
            .iter()
            .map(|p| contact_force(p, &r.arc.sphere))
            .collect::<Result<Vec<_>>>()?;
        Self::new(r.times.clone(), r.positions.clone(), forces)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> T {
        self.times[self.len() - 1] - self.times[0]
    }

    /// Mean sampling rate, Hz.
    pub fn sample_rate(&self) -> T {
        T::lit((self.len() - 1) as f64) / self.duration()
    }

    pub fn path_length(&self) -> T {
        self.positions
            .windows(2)
            .fold(T::zero(), |acc, w| acc + w[1].distance(&w[0]))
    }
}

/// Per-movement measures with their labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord<T> {
    pub phase: Phase,
    pub trial: u32,
    pub direction: Direction,
    pub start_target: Option<usize>,
    pub end_target: Option<usize>,
    pub apd: T,
    pub acf: T,
    pub cfv: T,
    pub vpe: T,
    pub ssj: T,
    pub duration: T,
    /// Geodesic length between the projected observed endpoints, m.
    pub path_length: T,
    /// Peak of the fitted tangential speed, m/s.
    pub peak_speed: T,
}

/// Segmentation parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segmentation {
    /// Speed threshold, m/s.
    pub threshold: f64,
    /// Extend each segment outward until the hand is at rest, so that the
    /// observed endpoints are the targets rather than mid-flight points.
    pub extend_to_rest: bool,
    /// Positions closer than this (m) count as unchanged.
    pub rest_tolerance: f64,
    pub min_samples: usize,
}

impl Default for Segmentation {
    fn default() -> Self {
        Self {
            threshold: SEGMENT_THRESHOLD,
            extend_to_rest: true,
            rest_tolerance: 1e-9,
            min_samples: FIT_DEGREE + 1,
        }
    }
}

/// Central-difference speeds, one-sided at the ends.
pub fn central_speeds<T: Real>(times: &[T], positions: &[Vec3<T>]) -> Vec<T> {
    let n = times.len();
    if n < 2 {
        return vec![T::zero(); n];
    }
    (0..n)
        .map(|k| {
            let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
            positions[b].distance(&positions[a]) / (times[b] - times[a])
        })
        .collect()
}

/// Index ranges of the movements in a sample stream.
///
/// Each maximal run of samples above the threshold is closed by the adjacent
/// sample on either side; with `extend_to_rest` the bounds then move outward
/// while the position is still changing, never into a neighboring segment.
pub fn segment_ranges<T: Real>(
    times: &[T],
    positions: &[Vec3<T>],
    opts: &Segmentation,
) -> Result<Vec<RangeInclusive<usize>>> {
    if !(opts.threshold > 0.0 && opts.threshold.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "segmentation threshold must be positive, got {}",
            opts.threshold
        )));
    }
    let n = times.len();
    let threshold = T::lit(opts.threshold);
    let speeds = central_speeds(times, positions);
    let mut runs = Vec::new();
    let mut k = 0;
    while k < n {
        if speeds[k] > threshold {
            let a = k;
            while k + 1 < n && speeds[k + 1] > threshold {
                k += 1;
            }
            runs.push((a, k));
        }
        k += 1;
    }

    let tol = T::lit(opts.rest_tolerance);
    let moved = |i: usize| positions[i].distance(&positions[i - 1]) > tol;
    let mut out: Vec<RangeInclusive<usize>> = Vec::new();
    for (idx, &(a, b)) in runs.iter().enumerate() {
        let floor = out.last().map_or(0, |r| *r.end());
        let ceiling = runs.get(idx + 1).map_or(n - 1, |&(next, _)| next.saturating_sub(1));
        let mut lo = a.saturating_sub(1).max(floor);
        let mut hi = (b + 1).min(n - 1).min(ceiling.max(b));
        if opts.extend_to_rest {
            while lo > floor && moved(lo) {
                lo -= 1;
            }
            while hi < ceiling && moved(hi + 1) {
                hi += 1;
            }
        }
        if hi + 1 - lo >= opts.min_samples {
            out.push(lo..=hi);
        }
    }
    Ok(out)
}

/// Movements in a log, with labels from their middle sample and endpoint
/// targets from the header.
pub fn segment_movements(log: &TrialLog, threshold: f64) -> Result<Vec<Movement<f64>>> {
    segment_movements_with(
        log,
        &Segmentation {
            threshold,
            ..Segmentation::default()
        },
    )
}

pub fn segment_movements_with(log: &TrialLog, opts: &Segmentation) -> Result<Vec<Movement<f64>>> {
    let times: Vec<f64> = log.samples.iter().map(|s| s.t).collect();
    let positions: Vec<Vec3<f64>> = log.samples.iter().map(|s| s.position).collect();
    let ranges = segment_ranges(&times, &positions, opts)?;
    let nearest = |p: &Vec3<f64>| {
        (0..3).min_by(|&i, &j| {
            p.distance(&log.header.targets[i])
                .total_cmp(&p.distance(&log.header.targets[j]))
        })
    };
    Ok(ranges
        .into_iter()
        .map(|r| {
            let (lo, hi) = (*r.start(), *r.end());
            let mid = &log.samples[(lo + hi) / 2];
            Movement {
                times: times[lo..=hi].to_vec(),
                positions: positions[lo..=hi].to_vec(),
                forces: log.samples[lo..=hi].iter().map(|s| s.force).collect(),
                phase: mid.phase,
                trial: mid.trial,
                direction: mid.direction,
                start_target: nearest(&positions[lo]),
                end_target: nearest(&positions[hi]),
            }
        })
        .collect())
}

/// Degree-8 fit of the movement's positions against time.
pub fn fit_tangential_velocity<T: Real>(m: &Movement<T>) -> Result<PolyFit<T>> {
    fit_polynomial(&m.times, &m.positions)
}

/// Geodesic-quintic reference between the projected observed endpoints,
/// lasting as long as the movement, sampled at the movement's mean rate.
pub fn reference_for<T: Real>(m: &Movement<T>, sphere: &SphereSurface<T>) -> Result<ReferenceTrajectory<T>> {
    let a = project_to_sphere(&m.positions[0], sphere)?;
    let b = project_to_sphere(&m.positions[m.len() - 1], sphere)?;
    let arc = geodesic_between(&a, &b, sphere).map_err(|e| match e {
        Error::CoincidentEndpoints => Error::DegenerateReference,
        other => other,
    })?;
    reference_trajectory(&arc, m.duration(), m.sample_rate())
}

/// Average path deviation: mean distance from each sample to the reference
/// arc, divided by the arc length.
pub fn apd<T: Real>(m: &Movement<T>, reference: &ReferenceTrajectory<T>) -> Result<T> {
    let length = reference.arc.arc_length;
    if !(length > T::zero()) {
        return Err(Error::DegenerateReference);
    }
    let sum = m
        .positions
        .iter()
        .fold(T::zero(), |acc, p| acc + reference.arc.distance_to(p));
    Ok(sum / T::lit(m.len() as f64) / length)
}

/// Trapezoidal path-length weights: each sample gets half of each adjacent segment.
pub fn path_weights<T: Real>(positions: &[Vec3<T>]) -> Vec<T> {
    let mut w = vec![T::zero(); positions.len()];
    let half = T::lit(0.5);
    for k in 1..positions.len() {
        let ds = positions[k].distance(&positions[k - 1]) * half;
        w[k - 1] += ds;
        w[k] += ds;
    }
    w
}

/// Weighted mean and weighted (population) variance.
pub fn weighted_mean_variance<T: Real>(values: &[T], weights: &[T]) -> Result<(T, T)> {
    let total = weights.iter().fold(T::zero(), |a, &w| a + w);
    if !(total > T::zero()) {
        return Err(Error::ZeroPathLength);
    }
    let mean = values.iter().zip(weights).fold(T::zero(), |a, (&v, &w)| a + v * w) / total;
    let var = values
        .iter()
        .zip(weights)
        .fold(T::zero(), |a, (&v, &w)| a + (v - mean) * (v - mean) * w)
        / total;
    Ok((mean, var))
}

fn force_moments<T: Real>(m: &Movement<T>) -> Result<(T, T)> {
    let mags: Vec<T> = m.forces.iter().map(|f| f.norm()).collect();
    weighted_mean_variance(&mags, &path_weights(&m.positions))
}

/// Average contact force, N.
pub fn acf<T: Real>(m: &Movement<T>) -> Result<T> {
    force_moments(m).map(|(mean, _)| mean)
}

/// Contact force variance, N^2.
pub fn cfv<T: Real>(m: &Movement<T>) -> Result<T> {
    force_moments(m).map(|(_, var)| var)
}

/// Area between fitted and quintic speed over `[t0, t0 + duration]`, on a
/// uniform grid of `intervals` trapezoids.
pub fn vpe_from_fit<T: Real>(fit: &PolyFit<T>, profile: &QuinticProfile<T>, intervals: usize) -> T {
    let n = intervals.max(1);
    let h = fit.duration / T::lit(n as f64);
    let gap = |k: usize| {
        let s = h * T::lit(k as f64);
        (fit.speed(fit.t0 + s) - profile.speed_clamped(s)).abs()
    };
    let inner = (1..n).fold(T::zero(), |acc, k| acc + gap(k));
    h * (inner + T::lit(0.5) * (gap(0) + gap(n)))
}

/// Velocity profile error, m. The grid is ten times denser than the samples.
pub fn vpe<T: Real>(m: &Movement<T>, profile: &QuinticProfile<T>) -> Result<T> {
    let fit = fit_tangential_velocity(m)?;
    Ok(vpe_from_fit(&fit, profile, vpe_intervals(m.len())))
}

fn vpe_intervals(samples: usize) -> usize {
    (10 * samples.saturating_sub(1)).max(200)
}

/// Sum of squared jerk, m^2/s^5, integrated exactly from the fit.
pub fn ssj<T: Real>(m: &Movement<T>) -> Result<T> {
    Ok(fit_tangential_velocity(m)?.squared_jerk_integral())
}

/// All five measures for one movement.
pub fn compute_metrics<T: Real>(m: &Movement<T>, sphere: &SphereSurface<T>) -> Result<MetricRecord<T>> {
    let reference = reference_for(m, sphere)?;
    let fit = fit_tangential_velocity(m)?;
    let (acf, cfv) = force_moments(m)?;
    let apd = apd(m, &reference)?;
    let vpe = vpe_from_fit(&fit, &reference.profile, vpe_intervals(m.len()));
    let n = vpe_intervals(m.len());
    let peak_speed = (0..=n).fold(T::zero(), |acc, k| {
        let v = fit.speed(fit.t0 + fit.duration * T::lit(k as f64 / n as f64));
        if v > acc {
            v
        } else {
            acc
        }
    });
    Ok(MetricRecord {
        phase: m.phase,
        trial: m.trial,
        direction: m.direction,
        start_target: m.start_target,
        end_target: m.end_target,
        apd,
        acf,
        cfv,
        vpe,
        ssj: fit.squared_jerk_integral(),
        duration: m.duration(),
        path_length: reference.arc.arc_length,
        peak_speed,
    })
}

/// Segments a log and measures every movement, in log order.
pub fn analyze_log(log: &TrialLog, opts: &Segmentation) -> Result<Vec<MetricRecord<f64>>> {
    let movements = segment_movements_with(log, opts)?;
    movements
        .par_iter()
        .map(|m| compute_metrics(m, &log.header.sphere))
        .collect()
}

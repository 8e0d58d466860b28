//! Analytic minimum-jerk references: the rest-to-rest quintic and its
//! composition with a great-circle arc.

use crate::error::{Error, Result};
use crate::geometry::{GeodesicArc, Vec3};
use crate::scalar::Real;

/// Rest-to-rest quintic timing law over a path of length `path_length`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuinticProfile<T> {
    pub path_length: T,
    pub duration: T,
}

/// Scalar kinematics along the path at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kinematics<T> {
    pub position: T,
    pub speed: T,
    pub accel: T,
    pub jerk: T,
}

impl<T: Real> QuinticProfile<T> {
    pub fn new(path_length: T, duration: T) -> Result<Self> {
        if !(path_length > T::zero()) || !path_length.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "path length must be positive, got {}",
                path_length.as_f64()
            )));
        }
        if !(duration > T::zero()) || !duration.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "duration must be positive, got {}",
                duration.as_f64()
            )));
        }
        Ok(Self { path_length, duration })
    }

    /// Peak speed, reached at mid-movement: `1.875 L / tf`.
    pub fn peak_speed(&self) -> T {
        T::lit(1.875) * self.path_length / self.duration
    }

    /// Speed at time `t`, with `t` clamped into `[0, tf]`.
    pub fn speed_clamped(&self, t: T) -> T {
        let tau = clamp01(t / self.duration);
        self.path_length / self.duration * sigma_derivative(tau, 1)
    }
}

fn clamp01<T: Real>(x: T) -> T {
    if x < T::zero() {
        T::zero()
    } else if x > T::one() {
        T::one()
    } else {
        x
    }
}

/// `k`-th derivative of `10 tau^3 - 15 tau^4 + 6 tau^5` with respect to `tau`.
pub fn sigma_derivative<T: Real>(tau: T, k: usize) -> T {
    let c = |x: f64| T::lit(x);
    let t = tau;
    match k {
        0 => t * t * t * (c(10.0) + t * (c(-15.0) + c(6.0) * t)),
        1 => t * t * (c(30.0) + t * (c(-60.0) + c(30.0) * t)),
        2 => t * (c(60.0) + t * (c(-180.0) + c(120.0) * t)),
        3 => c(60.0) + t * (c(-360.0) + c(360.0) * t),
        4 => c(-360.0) + c(720.0) * t,
        5 => c(720.0),
        _ => T::zero(),
    }
}

/// Position, speed, acceleration and jerk along the path at time `t`.
pub fn quintic_kinematics<T: Real>(p: &QuinticProfile<T>, t: T) -> Result<Kinematics<T>> {
    if !(t >= T::zero() && t <= p.duration) {
        return Err(Error::OutOfRange {
            what: "time",
            value: t.as_f64(),
            min: 0.0,
            max: p.duration.as_f64(),
        });
    }
    let tau = t / p.duration;
    let l = p.path_length;
    let tf = p.duration;
    Ok(Kinematics {
        position: l * sigma_derivative(tau, 0),
        speed: l / tf * sigma_derivative(tau, 1),
        accel: l / (tf * tf) * sigma_derivative(tau, 2),
        jerk: l / (tf * tf * tf) * sigma_derivative(tau, 3),
    })
}

/// Exact integral of the squared jerk of the 1-D quintic: `720 L^2 / tf^5`.
pub fn ssj_closed_form<T: Real>(p: &QuinticProfile<T>) -> T {
    let tf = p.duration;
    T::lit(720.0) * p.path_length * p.path_length / (tf * tf * tf * tf * tf)
}

/// Number of time derivatives (including order 0) carried by [`ReferenceTrajectory::derivatives_at`].
pub const JET_ORDER: usize = 7;

/// Geodesic arc traversed with quintic timing, sampled at a fixed rate.
#[derive(Clone, Debug)]
pub struct ReferenceTrajectory<T> {
    pub arc: GeodesicArc<T>,
    pub profile: QuinticProfile<T>,
    pub times: Vec<T>,
    pub positions: Vec<Vec3<T>>,
}

impl<T: Real> ReferenceTrajectory<T> {
    /// Position and its time derivatives of orders `0..JET_ORDER` at time `t`
    /// (clamped into `[0, tf]`), by exact differentiation.
    pub fn derivatives_at(&self, t: T) -> [Vec3<T>; JET_ORDER] {
        geodesic_quintic_jet(&self.arc, &self.profile, t)
    }

    pub fn position_at(&self, t: T) -> Vec3<T> {
        let tau = clamp01(t / self.profile.duration);
        if tau == T::one() {
            return self.arc.end();
        }
        self.arc
            .point_at_angle(self.arc.central_angle * sigma_derivative(tau, 0))
    }
}

/// Time derivatives of `c + r (cos phi e1 + sin phi e2)` with
/// `phi(t) = angle * sigma(t / tf)`, via truncated Taylor series.
pub fn geodesic_quintic_jet<T: Real>(arc: &GeodesicArc<T>, profile: &QuinticProfile<T>, t: T) -> [Vec3<T>; JET_ORDER] {
    let tf = profile.duration;
    let tau = clamp01(t / tf);
    // Taylor coefficients of phi around t: phi^(k) / k!
    let mut phi = [T::zero(); JET_ORDER];
    let mut fact = T::one();
    let mut tf_pow = T::one();
    for (k, coeff) in phi.iter_mut().enumerate() {
        if k > 0 {
            fact *= T::lit(k as f64);
            tf_pow *= tf;
        }
        *coeff = arc.central_angle * sigma_derivative(tau, k) / (tf_pow * fact);
    }
    let (sin, cos) = sin_cos_jet(&phi);
    let mut out = [Vec3::zero(); JET_ORDER];
    let mut fact = T::one();
    for k in 0..JET_ORDER {
        if k > 0 {
            fact *= T::lit(k as f64);
        }
        let dir = arc.start_dir * cos[k] + arc.plane_dir * sin[k];
        out[k] = dir * (arc.sphere.radius * fact);
    }
    out[0] += arc.sphere.center;
    out
}

/// Taylor coefficients of `sin(u)` and `cos(u)` given those of `u`.
fn sin_cos_jet<T: Real>(u: &[T; JET_ORDER]) -> ([T; JET_ORDER], [T; JET_ORDER]) {
    let mut s = [T::zero(); JET_ORDER];
    let mut c = [T::zero(); JET_ORDER];
    s[0] = u[0].sin();
    c[0] = u[0].cos();
    for k in 1..JET_ORDER {
        let mut sk = T::zero();
        let mut ck = T::zero();
        for j in 1..=k {
            let w = T::lit(j as f64) * u[j];
            sk += w * c[k - j];
            ck -= w * s[k - j];
        }
        let kk = T::lit(k as f64);
        s[k] = sk / kk;
        c[k] = ck / kk;
    }
    (s, c)
}

/// Samples the geodesic-quintic trajectory at `sample_rate` Hz over `[0, duration]`.
///
/// Sample `k` sits at `k / sample_rate`; when the duration is not a whole
/// number of periods a final sample is added at `duration`.
pub fn reference_trajectory<T: Real>(
    arc: &GeodesicArc<T>,
    duration: T,
    sample_rate: T,
) -> Result<ReferenceTrajectory<T>> {
    let profile = QuinticProfile::new(arc.arc_length, duration)?;
    if !(sample_rate > T::zero()) || !sample_rate.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sample rate must be positive, got {}",
            sample_rate.as_f64()
        )));
    }
    let periods = duration * sample_rate;
    let slack = T::lit(1e-9) * (T::one() + periods);
    let whole = (periods + slack).floor();
    let n = whole.to_usize().unwrap_or(0);
    let mut times: Vec<T> = (0..=n).map(|k| T::lit(k as f64) / sample_rate).collect();
    if (periods - whole).abs() > slack {
        times.push(duration);
    } else if let Some(last) = times.last_mut() {
        *last = duration;
    }
    let mut traj = ReferenceTrajectory {
        arc: *arc,
        profile,
        times,
        positions: Vec::new(),
    };
    traj.positions = traj.times.iter().map(|&t| traj.position_at(t)).collect();
    Ok(traj)
}

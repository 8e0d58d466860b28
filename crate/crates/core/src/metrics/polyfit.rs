//! Degree-8 least-squares fit of a sampled 3-D path.
//!
//! Time is normalized to `s = (t - t0) / T` in `[0, 1]` and the basis is the
//! monomials of `x = 2s - 1`, which keeps the Vandermonde matrix well
//! conditioned on the symmetric interval.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;

pub const FIT_DEGREE: usize = 8;
const NCOEF: usize = FIT_DEGREE + 1;

/// Fitted path; `coeffs[axis][k]` multiplies `x^k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolyFit<T> {
    pub t0: T,
    pub duration: T,
    pub coeffs: [[T; NCOEF]; 3],
}

impl<T: Real> PolyFit<T> {
    fn basis_coordinate(&self, t: T) -> T {
        T::lit(2.0) * (t - self.t0) / self.duration - T::one()
    }

    /// `order`-th time derivative of the fitted position at time `t`.
    pub fn derivative(&self, t: T, order: usize) -> Vec3<T> {
        let x = self.basis_coordinate(t);
        let scale = (T::lit(2.0) / self.duration).powi(order as i32);
        let axis = |c: &[T; NCOEF]| eval_derivative(c, x, order) * scale;
        Vec3::new(axis(&self.coeffs[0]), axis(&self.coeffs[1]), axis(&self.coeffs[2]))
    }

    pub fn position(&self, t: T) -> Vec3<T> {
        self.derivative(t, 0)
    }

    /// Tangential speed, the norm of the fitted velocity.
    pub fn speed(&self, t: T) -> T {
        self.derivative(t, 1).norm()
    }

    pub fn jerk(&self, t: T) -> T {
        self.derivative(t, 3).norm()
    }

    /// Exact integral of the squared jerk norm over `[t0, t0 + duration]`.
    pub fn squared_jerk_integral(&self) -> T {
        let mut total = T::zero();
        for c in &self.coeffs {
            let j = derivative_coeffs(c, 3);
            // Integral over x in [-1, 1] of j(x)^2: only even powers survive.
            for (a, &ja) in j.iter().enumerate() {
                for (b, &jb) in j.iter().enumerate() {
                    let m = a + b;
                    if m % 2 == 0 {
                        total += ja * jb * T::lit(2.0 / (m as f64 + 1.0));
                    }
                }
            }
        }
        // dt = (T/2) dx and each d/dt brings 2/T: overall (2/T)^5.
        total * (T::lit(2.0) / self.duration).powi(5)
    }

    /// Root-mean-square distance between the samples and the fit.
    pub fn rms_residual(&self, times: &[T], positions: &[Vec3<T>]) -> T {
        let n = times.len().max(1);
        let sum = times
            .iter()
            .zip(positions)
            .fold(T::zero(), |acc, (&t, p)| acc + (self.position(t) - *p).norm_squared());
        (sum / T::lit(n as f64)).sqrt()
    }
}

fn derivative_coeffs<T: Real>(c: &[T; NCOEF], order: usize) -> Vec<T> {
    (order..NCOEF)
        .map(|k| {
            let falling = ((k - order + 1)..=k).fold(1.0, |acc, j| acc * j as f64);
            c[k] * T::lit(falling)
        })
        .collect()
}

fn eval_derivative<T: Real>(c: &[T; NCOEF], x: T, order: usize) -> T {
    derivative_coeffs(c, order)
        .iter()
        .rev()
        .fold(T::zero(), |acc, &a| acc * x + a)
}

/// Least-squares fit through Householder QR; fails on a rank-deficient design.
pub fn fit_polynomial<T: Real>(times: &[T], positions: &[Vec3<T>]) -> Result<PolyFit<T>> {
    let n = times.len();
    if n < NCOEF || positions.len() != n {
        return Err(Error::InsufficientSamples {
            needed: NCOEF,
            got: n.min(positions.len()),
        });
    }
    let t0 = times[0];
    let duration = times[n - 1] - t0;
    if !(duration > T::zero()) {
        return Err(Error::RankDeficient);
    }
    let a = DMatrix::from_fn(n, NCOEF, |i, k| {
        let x = T::lit(2.0) * (times[i] - t0) / duration - T::one();
        x.powi(k as i32)
    });
    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<T> = (0..NCOEF).map(|k| r[(k, k)].abs()).collect();
    let largest = diag.iter().copied().fold(T::zero(), |m, d| if d > m { d } else { m });
    let floor = largest * T::default_epsilon() * T::lit(n as f64);
    if diag.iter().any(|&d| !(d > floor)) {
        return Err(Error::RankDeficient);
    }
    let mut coeffs = [[T::zero(); NCOEF]; 3];
    for (axis, out) in coeffs.iter_mut().enumerate() {
        let mut b = DVector::from_fn(n, |i, _| positions[i].component(axis));
        qr.q_tr_mul(&mut b);
        let top = b.rows(0, NCOEF).into_owned();
        let sol = r.solve_upper_triangular(&top).ok_or(Error::RankDeficient)?;
        for k in 0..NCOEF {
            out[k] = sol[k];
        }
    }
    Ok(PolyFit { t0, duration, coeffs })
}

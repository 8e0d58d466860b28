//! Three-stage Lobatto IIIA collocation for the index-reduced Euler-Poisson
//! system on the unit sphere with unit duration.
//!
//! State layout: `y[3 k + c]` is the `k`-th derivative of coordinate `c`.

use nalgebra::{SMatrix, SVector};

use super::banded::BandedMatrix;
use crate::scalar::Real;

pub(crate) const DIM: usize = 18;
const HALF: usize = 9;
// Row offset of interval blocks and resulting bandwidth of the Jacobian.
const BAND: usize = 26;

pub(crate) type StateVec<T> = SVector<T, DIM>;
type Block<T> = SMatrix<T, DIM, DIM>;

/// Multiplier for the unit sphere: `-(12 q'.q5 + 30 q''.q4 + 20 |q'''|^2) / 2`.
#[inline]
pub(crate) fn lambda_unit<T: Real>(y: &StateVec<T>) -> T {
    let dot = |a: usize, b: usize| y[3 * a] * y[3 * b] + y[3 * a + 1] * y[3 * b + 1] + y[3 * a + 2] * y[3 * b + 2];
    -(T::lit(6.0) * dot(1, 5) + T::lit(15.0) * dot(2, 4) + T::lit(10.0) * dot(3, 3))
}

#[inline]
pub(crate) fn rhs<T: Real>(y: &StateVec<T>) -> StateVec<T> {
    let mut f = StateVec::<T>::zeros();
    for i in 0..15 {
        f[i] = y[i + 3];
    }
    let lam = lambda_unit(y);
    for c in 0..3 {
        f[15 + c] = lam * y[c];
    }
    f
}

fn jacobian<T: Real>(y: &StateVec<T>) -> Block<T> {
    let mut j = Block::<T>::zeros();
    for i in 0..15 {
        j[(i, i + 3)] = T::one();
    }
    let lam = lambda_unit(y);
    // d lambda / d y for each derivative order.
    let coeff = |k: usize| -> (usize, T) {
        match k {
            1 => (5, T::lit(-6.0)),
            5 => (1, T::lit(-6.0)),
            2 => (4, T::lit(-15.0)),
            4 => (2, T::lit(-15.0)),
            3 => (3, T::lit(-20.0)),
            _ => unreachable!(),
        }
    };
    for c in 0..3 {
        let row = 15 + c;
        j[(row, c)] = lam;
        for k in 1..6 {
            let (partner, w) = coeff(k);
            for d in 0..3 {
                j[(row, 3 * k + d)] += y[c] * w * y[3 * partner + d];
            }
        }
    }
    j
}

/// Per-derivative-order Euclidean norms, so that every tolerance test is
/// invariant under rotations of the coordinate frame.
#[inline]
fn block_norm<T: Real>(v: &StateVec<T>, k: usize) -> T {
    (v[3 * k] * v[3 * k] + v[3 * k + 1] * v[3 * k + 1] + v[3 * k + 2] * v[3 * k + 2]).sqrt()
}

fn relative_error<T: Real>(r: &StateVec<T>, f: &StateVec<T>) -> T {
    let mut worst = T::zero();
    for k in 0..6 {
        let e = block_norm(r, k) / (T::one() + block_norm(f, k));
        if e > worst {
            worst = e;
        }
    }
    worst
}

pub(crate) struct Settings<T> {
    pub tol: T,
    pub max_newton_iter: usize,
    pub max_nodes: usize,
    pub max_refinements: usize,
}

pub(crate) struct Outcome<T> {
    pub mesh: Vec<T>,
    pub y: Vec<StateVec<T>>,
    pub newton_converged: bool,
    pub max_interval_residual: T,
    pub max_collocation_defect: T,
    pub iterations: usize,
    pub refinements: usize,
}

struct Mesh<'a, T> {
    tau: &'a [T],
    y: &'a [StateVec<T>],
}

impl<T: Real> Mesh<'_, T> {
    fn midpoint(&self, i: usize, f: &[StateVec<T>]) -> StateVec<T> {
        let h = self.tau[i + 1] - self.tau[i];
        (self.y[i] + self.y[i + 1]) * T::lit(0.5) - (f[i + 1] - f[i]) * (h / T::lit(8.0))
    }

    /// Cubic Hermite interpolant and its derivative at local coordinate `s`.
    fn hermite(&self, i: usize, f: &[StateVec<T>], s: T) -> (StateVec<T>, StateVec<T>) {
        let h = self.tau[i + 1] - self.tau[i];
        let c = |x: f64| T::lit(x);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = c(2.0) * s3 - c(3.0) * s2 + T::one();
        let h10 = s3 - c(2.0) * s2 + s;
        let h01 = c(-2.0) * s3 + c(3.0) * s2;
        let h11 = s3 - s2;
        let d00 = c(6.0) * s2 - c(6.0) * s;
        let d10 = c(3.0) * s2 - c(4.0) * s + T::one();
        let d01 = c(-6.0) * s2 + c(6.0) * s;
        let d11 = c(3.0) * s2 - c(2.0) * s;
        let (yi, yj, fi, fj) = (&self.y[i], &self.y[i + 1], &f[i], &f[i + 1]);
        let val = yi * h00 + fi * (h10 * h) + yj * h01 + fj * (h11 * h);
        let der = (yi * d00 + yj * d01) / h + fi * d10 + fj * d11;
        (val, der)
    }
}

fn residual<T: Real>(
    tau: &[T],
    y: &[StateVec<T>],
    f: &[StateVec<T>],
    left: &[T; HALF],
    right: &[T; HALF],
    out: &mut [T],
) {
    let n = tau.len();
    let mesh = Mesh { tau, y };
    for m in 0..HALF {
        out[m] = y[0][m] - left[m];
        out[HALF + DIM * (n - 1) + m] = y[n - 1][m] - right[m];
    }
    for i in 0..n - 1 {
        let h = tau[i + 1] - tau[i];
        let ym = mesh.midpoint(i, f);
        let fm = rhs(&ym);
        let phi = y[i + 1] - y[i] - (f[i] + fm * T::lit(4.0) + f[i + 1]) * (h / T::lit(6.0));
        let base = HALF + DIM * i;
        out[base..base + DIM].copy_from_slice(phi.as_slice());
    }
}

/// Largest scaled collocation defect `|Phi| / (h (1 + |f|))`, and boundary mismatch.
fn defect_norm<T: Real>(tau: &[T], f: &[StateVec<T>], res: &[T]) -> T {
    let n = tau.len();
    let mut worst = T::zero();
    for m in 0..HALF {
        for v in [res[m], res[HALF + DIM * (n - 1) + m]] {
            if v.abs() > worst {
                worst = v.abs();
            }
        }
    }
    for i in 0..n - 1 {
        let h = tau[i + 1] - tau[i];
        let base = HALF + DIM * i;
        let phi = StateVec::<T>::from_column_slice(&res[base..base + DIM]) / h;
        let e = relative_error(&phi, &f[i]);
        if e > worst {
            worst = e;
        }
    }
    worst
}

fn assemble<T: Real>(tau: &[T], y: &[StateVec<T>], f: &[StateVec<T>]) -> BandedMatrix<T> {
    let n = tau.len();
    let mut a = BandedMatrix::zeros(DIM * n, BAND, BAND);
    for m in 0..HALF {
        a.set(m, m, T::one());
        let row = HALF + DIM * (n - 1) + m;
        a.set(row, DIM * (n - 1) + m, T::one());
    }
    let jac: Vec<Block<T>> = y.iter().map(jacobian).collect();
    let mesh = Mesh { tau, y };
    let eye = Block::<T>::identity();
    let half = T::lit(0.5);
    for i in 0..n - 1 {
        let h = tau[i + 1] - tau[i];
        let ym = mesh.midpoint(i, f);
        let jm = jacobian(&ym) * T::lit(4.0);
        let dm_di = eye * half + jac[i] * (h / T::lit(8.0));
        let dm_dj = eye * half - jac[i + 1] * (h / T::lit(8.0));
        let h6 = h / T::lit(6.0);
        let left = -eye - (jac[i] + jm * dm_di) * h6;
        let right = eye - (jac[i + 1] + jm * dm_dj) * h6;
        let row0 = HALF + DIM * i;
        let col0 = DIM * i;
        for r in 0..DIM {
            for c in 0..DIM {
                a.set(row0 + r, col0 + c, left[(r, c)]);
                a.set(row0 + r, col0 + DIM + c, right[(r, c)]);
            }
        }
    }
    a
}

fn sum_squares<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc + *x * *x)
}

/// Damped Newton iteration on a fixed mesh. Returns (converged, iterations, defect).
fn newton<T: Real>(
    tau: &[T],
    y: &mut [StateVec<T>],
    left: &[T; HALF],
    right: &[T; HALF],
    tol: T,
    max_iter: usize,
) -> (bool, usize, T) {
    let n = tau.len();
    let mut f: Vec<StateVec<T>> = y.iter().map(rhs).collect();
    let mut res = vec![T::zero(); DIM * n];
    residual(tau, y, &f, left, right, &mut res);
    let mut defect = defect_norm(tau, &f, &res);
    let target = tol * T::lit(0.01);
    let stall_limit = tol * T::lit(100.0);
    for iter in 0..max_iter {
        if defect <= target {
            return (true, iter, defect);
        }
        let lu = match assemble(tau, y, &f).factor() {
            Some(lu) => lu,
            None => return (false, iter, defect),
        };
        let mut step: Vec<T> = res.iter().map(|v| -*v).collect();
        lu.solve_in_place(&mut step);
        let base = sum_squares(&res);
        let mut alpha = T::one();
        let mut trial_y: Vec<StateVec<T>> = y.to_vec();
        let mut trial_f = f.clone();
        let mut trial_res = vec![T::zero(); DIM * n];
        let mut accepted = false;
        for _ in 0..12 {
            for (i, ty) in trial_y.iter_mut().enumerate() {
                let d = StateVec::<T>::from_column_slice(&step[DIM * i..DIM * (i + 1)]);
                *ty = y[i] + d * alpha;
            }
            for (tf, ty) in trial_f.iter_mut().zip(&trial_y) {
                *tf = rhs(ty);
            }
            residual(tau, &trial_y, &trial_f, left, right, &mut trial_res);
            let value = sum_squares(&trial_res);
            if value.is_finite() && value <= base * (T::one() - T::lit(1e-4) * alpha) {
                accepted = true;
                break;
            }
            alpha *= T::lit(0.5);
        }
        if !accepted {
            // Stalled at the roundoff floor, which on fine meshes sits close to
            // `tol`. Accuracy is judged afterwards by the interval residuals, so
            // here it is enough to rule out a Newton that never got going.
            return (defect <= stall_limit, iter + 1, defect);
        }
        y.copy_from_slice(&trial_y);
        f = trial_f;
        res = trial_res;
        defect = defect_norm(tau, &f, &res);
        let step_size = step
            .iter()
            .fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m })
            * alpha;
        let scale = y.iter().fold(T::one(), |m, v| {
            let a = v.amax();
            if a > m {
                a
            } else {
                m
            }
        });
        if defect <= target || (alpha == T::one() && step_size <= T::default_epsilon() * T::lit(100.0) * scale) {
            return (defect <= stall_limit, iter + 1, defect);
        }
    }
    (defect <= target, max_iter, defect)
}

/// Lobatto-weighted RMS of the relative residual of the Hermite interpolant on each interval.
fn interval_residuals<T: Real>(tau: &[T], y: &[StateVec<T>]) -> Vec<T> {
    let f: Vec<StateVec<T>> = y.iter().map(rhs).collect();
    let mesh = Mesh { tau, y };
    let offset = T::lit(21f64.sqrt() / 14.0);
    let half = T::lit(0.5);
    let weight = T::lit(49.0 / 90.0);
    (0..tau.len() - 1)
        .map(|i| {
            let mut acc = T::zero();
            for s in [half - offset, half + offset] {
                let (val, der) = mesh.hermite(i, &f, s);
                let fv = rhs(&val);
                let e = relative_error(&(der - fv), &fv);
                acc += weight * e * e;
            }
            (acc / T::lit(2.0)).sqrt()
        })
        .collect()
}

fn refine<T: Real>(tau: &[T], y: &[StateVec<T>], errors: &[T], tol: T) -> (Vec<T>, Vec<StateVec<T>>) {
    let f: Vec<StateVec<T>> = y.iter().map(rhs).collect();
    let mesh = Mesh { tau, y };
    let mut new_tau = Vec::with_capacity(tau.len() * 2);
    let mut new_y = Vec::with_capacity(tau.len() * 2);
    for i in 0..tau.len() - 1 {
        new_tau.push(tau[i]);
        new_y.push(y[i]);
        if errors[i] > tol {
            let h = tau[i + 1] - tau[i];
            let pieces = if errors[i] > tol * T::lit(100.0) { 3 } else { 2 };
            for p in 1..pieces {
                let s = T::lit(p as f64) / T::lit(pieces as f64);
                new_tau.push(tau[i] + h * s);
                new_y.push(mesh.hermite(i, &f, s).0);
            }
        }
    }
    new_tau.push(tau[tau.len() - 1]);
    new_y.push(y[y.len() - 1]);
    (new_tau, new_y)
}

pub(crate) fn solve<T: Real>(
    mut tau: Vec<T>,
    mut y: Vec<StateVec<T>>,
    left: [T; HALF],
    right: [T; HALF],
    settings: &Settings<T>,
) -> Outcome<T> {
    let mut iterations = 0;
    let mut refinements = 0;
    loop {
        let (ok, iters, defect) = newton(&tau, &mut y, &left, &right, settings.tol, settings.max_newton_iter);
        iterations += iters;
        let errors = interval_residuals(&tau, &y);
        let worst = errors.iter().fold(T::zero(), |m, e| if *e > m { *e } else { m });
        let done = ok && worst <= settings.tol;
        let exhausted = refinements >= settings.max_refinements;
        let inserted = errors.iter().filter(|e| **e > settings.tol).count();
        if done || exhausted || !ok || tau.len() + 2 * inserted > settings.max_nodes {
            return Outcome {
                mesh: tau,
                y,
                newton_converged: ok,
                max_interval_residual: worst,
                max_collocation_defect: defect,
                iterations,
                refinements,
            };
        }
        let (t2, y2) = refine(&tau, &y, &errors, settings.tol);
        tau = t2;
        y = y2;
        refinements += 1;
    }
}

/// `int |q'''|^2 dtau` by Simpson's rule on the collocation midpoints.
pub(crate) fn jerk_cost<T: Real>(tau: &[T], y: &[StateVec<T>]) -> T {
    let f: Vec<StateVec<T>> = y.iter().map(rhs).collect();
    let mesh = Mesh { tau, y };
    let jerk2 = |v: &StateVec<T>| v[9] * v[9] + v[10] * v[10] + v[11] * v[11];
    let mut acc = T::zero();
    for i in 0..tau.len() - 1 {
        let h = tau[i + 1] - tau[i];
        let ym = mesh.midpoint(i, &f);
        acc += (jerk2(&y[i]) + T::lit(4.0) * jerk2(&ym) + jerk2(&y[i + 1])) * h / T::lit(6.0);
    }
    acc
}

/// Hermite interpolation of the state at `tau`.
pub(crate) fn interpolate<T: Real>(tau: &[T], y: &[StateVec<T>], at: T) -> StateVec<T> {
    let n = tau.len();
    if at <= tau[0] {
        return y[0];
    }
    if at >= tau[n - 1] {
        return y[n - 1];
    }
    let i = match tau.binary_search_by(|t| t.partial_cmp(&at).unwrap_or(std::cmp::Ordering::Less)) {
        Ok(i) => return y[i],
        Err(i) => i - 1,
    };
    let f = [rhs(&y[i]), rhs(&y[i + 1])];
    let h = tau[i + 1] - tau[i];
    let s = (at - tau[i]) / h;
    let local = Mesh {
        tau: &tau[i..i + 2],
        y: &y[i..i + 2],
    };
    local.hermite(0, &f, s).0
}

//! Constrained minimum-jerk motion on a sphere as a two-point boundary-value problem.
//!
//! Stationarity of `int |p'''|^2 + lambda (|p - c|^2 - r^2) dt` gives the
//! sixth-order Euler-Poisson system `p^(6) = lambda (p - c)` for each
//! coordinate. The multiplier is eliminated by differentiating the
//! constraint six times, which leaves an explicit 18-state ODE with nine
//! boundary conditions at each end (position, velocity, acceleration).
//!
//! The ODE is solved in scaled variables (unit radius, unit duration) by
//! collocation on an adaptively refined mesh, seeded with the geodesic
//! traversed by the quintic rest-to-rest profile.

mod banded;
mod collocation;

pub use banded::{BandedLu, BandedMatrix};

use collocation::StateVec;

use crate::error::{Error, Result};
use crate::geometry::{angle_between, geodesic_between, project_to_sphere, slerp, SphereSurface, Vec3};
use crate::reference::{geodesic_quintic_jet, QuinticProfile, ReferenceTrajectory};
use crate::scalar::Real;

/// Position relative to the sphere center and its first five time derivatives.
pub type State<T> = [Vec3<T>; 6];

/// Right-hand side of the chained Euler-Poisson system:
/// `d/dt (p, p', p'', p''', p'''', p^(5)) = (p', p'', p''', p'''', p^(5), lambda p)`.
pub fn euler_poisson_rhs<T: Real>(state: &State<T>, lambda: T) -> State<T> {
    [state[1], state[2], state[3], state[4], state[5], state[0] * lambda]
}

/// Multiplier that makes the sixth derivative of `|p|^2 - r^2` vanish:
/// `-(12 p'.p5 + 30 p''.p4 + 20 |p'''|^2) / (2 r^2)`.
pub fn lambda_consistent<T: Real>(state: &State<T>, radius: T) -> T {
    let s = T::lit(12.0) * state[1].dot(&state[5])
        + T::lit(30.0) * state[2].dot(&state[4])
        + T::lit(20.0) * state[3].norm_squared();
    -s / (T::lit(2.0) * radius * radius)
}

/// Position, velocity and acceleration imposed at one end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryState<T> {
    pub position: Vec3<T>,
    pub velocity: Vec3<T>,
    pub acceleration: Vec3<T>,
}

impl<T: Real> BoundaryState<T> {
    pub fn at_rest(position: Vec3<T>) -> Self {
        Self {
            position,
            velocity: Vec3::zero(),
            acceleration: Vec3::zero(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BvpProblem<T> {
    pub sphere: SphereSurface<T>,
    pub start: BoundaryState<T>,
    pub end: BoundaryState<T>,
    pub duration: T,
    /// Initial mesh, strictly increasing from `0` to `duration`.
    pub mesh: Vec<T>,
}

/// Default number of points in the initial uniform mesh.
pub const INITIAL_MESH_POINTS: usize = 41;

impl<T: Real> BvpProblem<T> {
    /// Rest-to-rest problem on a uniform 41-point initial mesh.
    pub fn rest_to_rest(sphere: SphereSurface<T>, start: Vec3<T>, end: Vec3<T>, duration: T) -> Self {
        Self {
            sphere,
            start: BoundaryState::at_rest(start),
            end: BoundaryState::at_rest(end),
            duration,
            mesh: uniform_mesh(duration, INITIAL_MESH_POINTS),
        }
    }

    /// Checks the 18 boundary conditions for consistency with the constraint.
    pub fn validate(&self) -> Result<()> {
        let s = &self.sphere;
        if !(self.duration > T::zero()) || !self.duration.is_finite() {
            return Err(Error::InvalidBoundary(format!(
                "duration must be positive, got {}",
                self.duration.as_f64()
            )));
        }
        let m = &self.mesh;
        if m.len() < 2 || m[0] != T::zero() || m[m.len() - 1] != self.duration {
            return Err(Error::InvalidBoundary(
                "mesh must start at 0 and end at the duration".into(),
            ));
        }
        if m.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidBoundary("mesh must be strictly increasing".into()));
        }
        let tol = T::surface_tolerance();
        for (name, b) in [("start", &self.start), ("end", &self.end)] {
            if !(b.position.is_finite() && b.velocity.is_finite() && b.acceleration.is_finite()) {
                return Err(Error::InvalidBoundary(format!("{name} state is not finite")));
            }
            let rel = b.position - s.center;
            let offset = rel.norm() - s.radius;
            if offset.abs() > tol * s.radius {
                return Err(Error::InvalidBoundary(format!(
                    "{name} position is {:.3e} m off the surface",
                    offset.as_f64()
                )));
            }
            let v = b.velocity.norm();
            let radial_v = rel.dot(&b.velocity);
            if radial_v.abs() > tol * s.radius * (T::one() + v) {
                return Err(Error::InvalidBoundary(format!(
                    "{name} velocity is not tangent to the surface"
                )));
            }
            // Second derivative of the constraint: p.a + |v|^2 = 0.
            let g2 = rel.dot(&b.acceleration) + b.velocity.norm_squared();
            let scale = s.radius * (T::one() + b.acceleration.norm()) + v * v;
            if g2.abs() > tol * scale {
                return Err(Error::InvalidBoundary(format!(
                    "{name} acceleration is inconsistent with staying on the surface"
                )));
            }
        }
        let a = (self.start.position - s.center).normalized();
        let b = (self.end.position - s.center).normalized();
        if let (Some(a), Some(b)) = (a, b) {
            let angle = angle_between(&a, &b);
            if (T::PI() - angle).abs() <= T::lit(1e-6) {
                return Err(Error::InvalidBoundary(
                    "antipodal endpoints: the geodesic seed is not unique".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn uniform_mesh<T: Real>(duration: T, points: usize) -> Vec<T> {
    let points = points.max(2);
    let mut mesh: Vec<T> = (0..points)
        .map(|i| duration * T::lit(i as f64) / T::lit((points - 1) as f64))
        .collect();
    mesh[points - 1] = duration;
    mesh
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions<T> {
    /// Relative tolerance for the collocation residual, boundary conditions and constraint.
    pub tol: T,
    /// Newton iterations allowed on each mesh.
    pub max_newton_iter: usize,
    pub max_nodes: usize,
    pub max_refinements: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            max_newton_iter: 50,
            max_nodes: 40_000,
            max_refinements: 40,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BvpSolution<T> {
    pub sphere: SphereSurface<T>,
    pub duration: T,
    pub times: Vec<T>,
    /// Absolute position followed by derivatives 1 to 5 at each mesh time.
    pub states: Vec<State<T>>,
    pub lambda: Vec<T>,
    /// Largest `|g| = ||p - c|^2 - r^2|` over the mesh, in m^2.
    pub max_constraint_residual: T,
    /// Largest relative residual of the interpolant against the ODE.
    pub max_ode_residual: T,
    /// Largest scaled collocation defect left by the last Newton solve.
    pub max_collocation_defect: T,
    /// Largest mismatch in any of the 18 boundary conditions (SI units).
    pub max_boundary_residual: T,
    /// Integral of the squared jerk magnitude, m^2/s^5.
    pub cost: T,
    pub iterations: usize,
    pub refinements: usize,
    pub converged: bool,
}

impl<T: Real> BvpSolution<T> {
    pub fn positions(&self) -> impl Iterator<Item = Vec3<T>> + '_ {
        self.states.iter().map(|s| s[0])
    }

    pub fn speeds(&self) -> Vec<T> {
        self.states.iter().map(|s| s[1].norm()).collect()
    }

    /// State at an arbitrary time by cubic Hermite interpolation between mesh points.
    pub fn state_at(&self, t: T) -> State<T> {
        let (tau, y) = self.scaled();
        let v = collocation::interpolate(&tau, &y, t / self.duration);
        self.unscale(&v)
    }

    fn scaled(&self) -> (Vec<T>, Vec<StateVec<T>>) {
        let tau = self.times.iter().map(|t| *t / self.duration).collect();
        let y = self
            .states
            .iter()
            .map(|s| scale_state(s, &self.sphere, self.duration))
            .collect();
        (tau, y)
    }

    fn unscale(&self, y: &StateVec<T>) -> State<T> {
        unscale_state(y, &self.sphere, self.duration)
    }

    /// Packs an analytic geodesic-quintic reference as a solution record,
    /// evaluated on the reference's own sample times.
    pub fn from_reference(reference: &ReferenceTrajectory<T>) -> Self {
        let sphere = reference.arc.sphere;
        let duration = reference.profile.duration;
        let mut states = Vec::with_capacity(reference.times.len());
        let mut lambda = Vec::with_capacity(reference.times.len());
        for &t in &reference.times {
            let jet = reference.derivatives_at(t);
            let state = [jet[0], jet[1], jet[2], jet[3], jet[4], jet[5]];
            let mut rel = state;
            rel[0] -= sphere.center;
            lambda.push(lambda_consistent(&rel, sphere.radius));
            states.push(state);
        }
        let (tau, y): (Vec<T>, Vec<StateVec<T>>) = (
            reference.times.iter().map(|t| *t / duration).collect(),
            states.iter().map(|s| scale_state(s, &sphere, duration)).collect(),
        );
        let cost = collocation::jerk_cost(&tau, &y) * sphere.radius * sphere.radius / duration.powi(5);
        Self {
            sphere,
            duration,
            times: reference.times.clone(),
            states,
            lambda,
            max_constraint_residual: T::zero(),
            max_ode_residual: T::zero(),
            max_collocation_defect: T::zero(),
            max_boundary_residual: T::zero(),
            cost,
            iterations: 0,
            refinements: 0,
            converged: true,
        }
    }
}

fn scale_state<T: Real>(s: &State<T>, sphere: &SphereSurface<T>, duration: T) -> StateVec<T> {
    let mut y = StateVec::<T>::zeros();
    let mut factor = T::one() / sphere.radius;
    for (k, v) in s.iter().enumerate() {
        let v = if k == 0 { *v - sphere.center } else { *v };
        y[3 * k] = v.x * factor;
        y[3 * k + 1] = v.y * factor;
        y[3 * k + 2] = v.z * factor;
        factor *= duration;
    }
    y
}

fn unscale_state<T: Real>(y: &StateVec<T>, sphere: &SphereSurface<T>, duration: T) -> State<T> {
    let mut out = [Vec3::zero(); 6];
    let mut factor = sphere.radius;
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = Vec3::new(y[3 * k], y[3 * k + 1], y[3 * k + 2]) * factor;
        factor /= duration;
    }
    out[0] += sphere.center;
    out
}

fn boundary_values<T: Real>(b: &BoundaryState<T>, sphere: &SphereSurface<T>, duration: T) -> [T; 9] {
    let state = [
        b.position,
        b.velocity,
        b.acceleration,
        Vec3::zero(),
        Vec3::zero(),
        Vec3::zero(),
    ];
    let y = scale_state(&state, sphere, duration);
    let mut out = [T::zero(); 9];
    out.copy_from_slice(&y.as_slice()[..9]);
    out
}

/// Geodesic-quintic seed in scaled variables, or a constant state for coincident endpoints.
fn initial_guess<T: Real>(prob: &BvpProblem<T>, tau: &[T]) -> Result<Vec<StateVec<T>>> {
    let unit = SphereSurface::new(Vec3::zero(), T::one(), T::zero())?;
    let a = (prob.start.position - prob.sphere.center) / prob.sphere.radius;
    let b = (prob.end.position - prob.sphere.center) / prob.sphere.radius;
    let a = project_to_sphere(&a, &unit)?;
    let b = project_to_sphere(&b, &unit)?;
    match geodesic_between(&a, &b, &unit) {
        Ok(arc) => {
            let profile = QuinticProfile::new(arc.arc_length, T::one())?;
            Ok(tau
                .iter()
                .map(|&t| {
                    let jet = geodesic_quintic_jet(&arc, &profile, t);
                    let mut y = StateVec::<T>::zeros();
                    for k in 0..6 {
                        y[3 * k] = jet[k].x;
                        y[3 * k + 1] = jet[k].y;
                        y[3 * k + 2] = jet[k].z;
                    }
                    y
                })
                .collect())
        }
        Err(Error::CoincidentEndpoints) => {
            let mut y = StateVec::<T>::zeros();
            y[0] = a.x;
            y[1] = a.y;
            y[2] = a.z;
            Ok(vec![y; tau.len()])
        }
        Err(e) => Err(Error::InvalidBoundary(e.to_string())),
    }
}

/// Fractions of the arc at which the end point is placed for the intermediate solve.
const CONTINUATION_STEPS: [f64; 3] = [0.9, 0.75, 0.5];

/// Fallback for a Newton iteration that fails from the geodesic seed.
///
/// The Jacobian at the seed is occasionally close to singular for long arcs.
/// The same problem with the end point pulled back along the arc is solved
/// first. Its correction to its own seed is then carried over to the full
/// problem, on the mesh it adapted.
fn continuation<T: Real>(
    prob: &BvpProblem<T>,
    tau: &[T],
    left: [T; 9],
    right: [T; 9],
    settings: &collocation::Settings<T>,
) -> Result<Option<collocation::Outcome<T>>> {
    let arc = match geodesic_between(&prob.start.position, &prob.end.position, &prob.sphere) {
        Ok(arc) => arc,
        Err(_) => return Ok(None),
    };
    for frac in CONTINUATION_STEPS {
        let mut near = prob.clone();
        near.end.position = slerp(&arc, T::lit(frac))?;
        let near_right = boundary_values(&near.end, &near.sphere, near.duration);
        let mid = collocation::solve(tau.to_vec(), initial_guess(&near, tau)?, left, near_right, settings);
        if !mid.newton_converged {
            continue;
        }
        let full_seed = initial_guess(prob, &mid.mesh)?;
        let near_seed = initial_guess(&near, &mid.mesh)?;
        let guess = mid
            .y
            .iter()
            .zip(full_seed.iter().zip(&near_seed))
            .map(|(y, (a, b))| y + (a - b))
            .collect();
        let mut out = collocation::solve(mid.mesh, guess, left, right, settings);
        if out.newton_converged {
            out.iterations += mid.iterations;
            out.refinements += mid.refinements;
            return Ok(Some(out));
        }
    }
    Ok(None)
}

/// Solves the constrained minimum-jerk problem.
///
/// Invalid boundary data is rejected up front. Failure to converge is not an
/// error: the returned solution has `converged == false` and carries the
/// residual diagnostics.
pub fn solve_constrained_minjerk<T: Real>(prob: &BvpProblem<T>, options: &SolverOptions<T>) -> Result<BvpSolution<T>> {
    prob.validate()?;
    if !(options.tol > T::zero()) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let tau: Vec<T> = prob.mesh.iter().map(|t| *t / prob.duration).collect();
    let seed = initial_guess(prob, &tau)?;
    let left = boundary_values(&prob.start, &prob.sphere, prob.duration);
    let right = boundary_values(&prob.end, &prob.sphere, prob.duration);
    let settings = collocation::Settings {
        tol: options.tol,
        max_newton_iter: options.max_newton_iter,
        max_nodes: options.max_nodes,
        max_refinements: options.max_refinements,
    };
    let mut out = collocation::solve(tau.clone(), seed, left, right, &settings);
    if !out.newton_converged {
        if let Some(better) = continuation(prob, &tau, left, right, &settings)? {
            out = better;
        }
    }

    let sphere = prob.sphere;
    let duration = prob.duration;
    let r2 = sphere.radius * sphere.radius;
    let mut max_g = T::zero();
    let mut states = Vec::with_capacity(out.mesh.len());
    let mut lambda = Vec::with_capacity(out.mesh.len());
    let lambda_scale = duration.powi(6);
    for y in &out.y {
        let g = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2] - T::one()).abs();
        if g > max_g {
            max_g = g;
        }
        lambda.push(collocation::lambda_unit(y) / lambda_scale);
        states.push(unscale_state(y, &sphere, duration));
    }
    let mut max_bc = T::zero();
    let first = &states[0];
    let last = &states[states.len() - 1];
    for (got, want) in [
        (first[0], prob.start.position),
        (first[1], prob.start.velocity),
        (first[2], prob.start.acceleration),
        (last[0], prob.end.position),
        (last[1], prob.end.velocity),
        (last[2], prob.end.acceleration),
    ] {
        let d = (got - want).norm();
        if d > max_bc {
            max_bc = d;
        }
    }
    let cost = collocation::jerk_cost(&out.mesh, &out.y) * r2 / duration.powi(5);
    let bc_ok = max_bc <= options.tol * (sphere.radius + T::one());
    let converged = out.newton_converged && out.max_interval_residual <= options.tol && max_g <= options.tol && bc_ok;
    Ok(BvpSolution {
        sphere,
        duration,
        times: out.mesh.iter().map(|t| *t * duration).collect(),
        states,
        lambda,
        max_constraint_residual: max_g * r2,
        max_ode_residual: out.max_interval_residual,
        max_collocation_defect: out.max_collocation_defect,
        max_boundary_residual: max_bc,
        cost,
        iterations: out.iterations,
        refinements: out.refinements,
        converged,
    })
}

/// Largest geodesic distance from the (projected) solution path to the great
/// circle arc joining its endpoints.
pub fn path_deviation_from_geodesic<T: Real>(sol: &BvpSolution<T>) -> Result<T> {
    if !sol.converged {
        return Err(Error::NotConverged {
            constraint_residual: sol.max_constraint_residual.as_f64(),
            ode_residual: sol.max_ode_residual.as_f64(),
        });
    }
    let points: Vec<Vec3<T>> = sol.positions().collect();
    max_deviation_from_geodesic(&points, &sol.sphere)
}

/// [`path_deviation_from_geodesic`] for a bare sequence of points.
pub fn max_deviation_from_geodesic<T: Real>(points: &[Vec3<T>], sphere: &SphereSurface<T>) -> Result<T> {
    let (first, last) = match (points.first(), points.last()) {
        (Some(f), Some(l)) => (project_to_sphere(f, sphere)?, project_to_sphere(l, sphere)?),
        _ => return Ok(T::zero()),
    };
    let mut worst = T::zero();
    match geodesic_between(&first, &last, sphere) {
        Ok(arc) => {
            for p in points {
                let d = arc.geodesic_distance_to(p)?;
                if d > worst {
                    worst = d;
                }
            }
        }
        Err(Error::CoincidentEndpoints) => {
            let anchor = (first - sphere.center)
                .normalized()
                .ok_or(Error::DegenerateProjection)?;
            for p in points {
                let dir = (*p - sphere.center).normalized().ok_or(Error::DegenerateProjection)?;
                let d = angle_between(&dir, &anchor) * sphere.radius;
                if d > worst {
                    worst = d;
                }
            }
        }
        Err(e) => return Err(e),
    }
    Ok(worst)
}

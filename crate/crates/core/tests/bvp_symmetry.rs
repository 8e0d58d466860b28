use nalgebra::{Rotation3, Unit, Vector3};
use proptest::prelude::*;
use sphere_minjerk::bvp::{path_deviation_from_geodesic, solve_constrained_minjerk};
use sphere_minjerk::geometry::{geodesic_between, triangle_targets};
use sphere_minjerk::reference::reference_trajectory;
use sphere_minjerk::{BvpProblem, BvpSolution, SolverOptions, SphereSurface, Vec3};

fn solve(sphere: SphereSurface, a: Vec3, b: Vec3, tf: f64) -> BvpSolution {
    let prob = BvpProblem::rest_to_rest(sphere, a, b, tf);
    let sol = solve_constrained_minjerk(&prob, &SolverOptions::default()).unwrap();
    assert!(sol.converged);
    sol
}

fn on_sphere(s: &SphereSurface, polar: f64, azimuth: f64) -> Vec3 {
    s.center + Vec3::new(polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin(), polar.cos()) * s.radius
}

/// Largest position gap between two solutions, sampled on a common grid.
fn max_gap(a: &BvpSolution, b: &BvpSolution, map: impl Fn(f64, Vec3) -> (f64, Vec3)) -> f64 {
    (0..=200)
        .map(|k| {
            let t = a.duration * k as f64 / 200.0;
            let (tb, expected) = map(t, a.state_at(t)[0]);
            (b.state_at(tb)[0] - expected).norm()
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn solution_rotates_with_the_problem(
        axis in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_filter("axis", |(x, y, z)| x * x + y * y + z * z > 0.01),
        angle in -3.0..3.0f64,
        polar in 0.6..1.4f64,
        sweep in 0.3..2.0f64,
    ) {
        let s = SphereSurface::experiment();
        let a = on_sphere(&s, polar, 0.0);
        let b = on_sphere(&s, polar, sweep);
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(axis.0, axis.1, axis.2)), angle);
        let r = |p: Vec3| Vec3::from(rot * Vector3::from(p));
        let base = solve(s, a, b, 1.0);
        let turned = solve(s, r(a), r(b), 1.0);
        prop_assert!((turned.cost - base.cost).abs() <= 1e-9 * base.cost);
        let gap = max_gap(&base, &turned, |t, p| (t, r(p)));
        prop_assert!(gap <= 1e-9 * s.radius, "gap {gap}");
    }

    #[test]
    fn reversed_problem_runs_the_path_backwards(polar in 0.6..1.4f64, sweep in 0.3..2.0f64, tf in 0.5..1.5f64) {
        let s = SphereSurface::experiment();
        let a = on_sphere(&s, polar, 0.0);
        let b = on_sphere(&s, polar, sweep);
        let fwd = solve(s, a, b, tf);
        let back = solve(s, b, a, tf);
        prop_assert!((fwd.cost - back.cost).abs() <= 1e-7 * fwd.cost);
        let gap = max_gap(&fwd, &back, |t, p| (tf - t, p));
        prop_assert!(gap <= 1e-7 * s.radius, "gap {gap}");
    }

    #[test]
    fn constrained_optimum_beats_the_geodesic_quintic(polar in 0.6..1.4f64, sweep in 0.3..2.0f64, tf in 0.5..1.5f64) {
        let s = SphereSurface::experiment();
        let a = on_sphere(&s, polar, 0.0);
        let b = on_sphere(&s, polar, sweep);
        let sol = solve(s, a, b, tf);
        let arc = geodesic_between(&a, &b, &s).unwrap();
        let reference = BvpSolution::from_reference(&reference_trajectory(&arc, tf, 4000.0 / tf).unwrap());
        prop_assert!(sol.cost <= reference.cost * (1.0 + 1e-9), "{} > {}", sol.cost, reference.cost);
        prop_assert!(path_deviation_from_geodesic(&sol).unwrap() < 1e-3 * s.radius);
    }
}

#[test]
fn solution_translates_and_scales_with_the_sphere() {
    let base_sphere = SphereSurface::experiment();
    let t = triangle_targets(&base_sphere, 0.08).unwrap();
    let base = solve(base_sphere, t[0], t[1], 0.86);

    let k = 2.5;
    let shift = Vec3::new(0.3, -1.2, 0.7);
    let big = SphereSurface::new(shift, k * base_sphere.radius, 1000.0).unwrap();
    let moved = solve(big, shift + t[0] * k, shift + t[1] * k, 0.86);
    // Cost scales with length squared.
    assert!((moved.cost - k * k * base.cost).abs() <= 1e-9 * moved.cost);
    let gap = max_gap(&base, &moved, |t, p| (t, shift + p * k));
    assert!(gap <= 1e-9 * big.radius, "gap {gap}");
}

#[test]
fn mirror_image_problem_has_mirror_image_solution() {
    let s = SphereSurface::experiment();
    let t = triangle_targets(&s, 0.08).unwrap();
    let mirror = |p: Vec3| Vec3::new(p.x, -p.y, p.z);
    let base = solve(s, t[0], t[1], 0.86);
    let flipped = solve(s, mirror(t[0]), mirror(t[1]), 0.86);
    let gap = max_gap(&base, &flipped, |t, p| (t, mirror(p)));
    assert!(gap <= 1e-9 * s.radius, "gap {gap}");
}

//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.
//!
//! Run with `cargo test -p sphere-minjerk-validation --test acceptance`.

use std::time::{Duration, Instant};

use nalgebra::{Rotation3, Unit, Vector3};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sphere_minjerk::analysis::{population_report, summarize_subject, Comparison, Metric, TRAINING_BLOCK};
use sphere_minjerk::bvp::{path_deviation_from_geodesic, solve_constrained_minjerk};
use sphere_minjerk::geometry::{angle_between, geodesic_between, triangle_targets};
use sphere_minjerk::haptic::{contact_force, run_experiment, synthetic_movement};
use sphere_minjerk::metrics::{acf, analyze_log, apd, cfv, compute_metrics, reference_for, ssj, vpe, Segmentation};
use sphere_minjerk::reference::{reference_trajectory, sigma_derivative, ssj_closed_form};
use sphere_minjerk::stats::{change_sign_table, chi_square_2x2, ContingencyTable2x2, SubjectChange, CHI2_CRITICAL_005};
use sphere_minjerk::{
    BvpProblem, BvpSolution, Experiment, Movement, QuinticProfile, SolverOptions, SphereSurface, SubjectModel, Vec3,
};

const PLANE_HEIGHT: f64 = 0.08;
const MOVE_TIME: f64 = 0.86;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: &str, pass: bool, what: &str, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "criterion {id:<3} {}  {what}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }

    fn note(&self, text: String) {
        println!("              note: {text}");
    }
}

fn sphere() -> SphereSurface {
    SphereSurface::experiment()
}

fn solve(s: SphereSurface, a: Vec3, b: Vec3, tf: f64) -> (BvpSolution, Duration) {
    let start = Instant::now();
    let sol = solve_constrained_minjerk(&BvpProblem::rest_to_rest(s, a, b, tf), &SolverOptions::default())
        .expect("well-posed problem");
    (sol, start.elapsed())
}

struct Case {
    name: &'static str,
    a: Vec3,
    b: Vec3,
    tf: f64,
}

fn cases() -> Vec<Case> {
    let s = sphere();
    let t = triangle_targets(&s, PLANE_HEIGHT).unwrap();
    let r = s.radius;
    vec![
        Case {
            name: "targets 0-1",
            a: t[0],
            b: t[1],
            tf: MOVE_TIME,
        },
        Case {
            name: "targets 1-2",
            a: t[1],
            b: t[2],
            tf: MOVE_TIME,
        },
        Case {
            name: "targets 2-0",
            a: t[2],
            b: t[0],
            tf: MOVE_TIME,
        },
        Case {
            name: "quarter circle",
            a: Vec3::new(r, 0.0, 0.0),
            b: Vec3::new(0.0, r, 0.0),
            tf: 1.0,
        },
    ]
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn property(result: Result<(), proptest::test_runner::TestError<impl std::fmt::Debug>>) -> (bool, String) {
    match result {
        Ok(()) => (true, "all cases hold".to_string()),
        Err(e) => (false, format!("{e}")),
    }
}

fn geodesic_and_bell(rep: &mut Report) {
    let s = sphere();
    let mut worst_dev: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    let mut all_converged = true;
    let mut worst_speed: f64 = 0.0;
    let mut speed_lines = Vec::new();
    for c in cases() {
        let (sol, took) = solve(s, c.a, c.b, c.tf);
        all_converged &= sol.converged;
        slowest = slowest.max(took);
        let dev = path_deviation_from_geodesic(&sol).unwrap_or(f64::INFINITY);
        worst_dev = worst_dev.max(dev);
        rep.note(format!(
            "{}: deviation {:.3e} r, solved in {:.2?}",
            c.name,
            dev / s.radius,
            took
        ));

        let arc = geodesic_between(&c.a, &c.b, &s).unwrap();
        let bell = QuinticProfile::new(arc.arc_length, c.tf).unwrap();
        let gap = sol
            .times
            .iter()
            .zip(sol.speeds())
            .map(|(&t, v)| (v - bell.speed_clamped(t)).abs())
            .fold(0.0, f64::max)
            / bell.peak_speed();
        worst_speed = worst_speed.max(gap);
        speed_lines.push(format!("{} {:.2}%", c.name, 100.0 * gap));
    }
    rep.check(
        "1",
        all_converged && worst_dev < 1e-3 * s.radius && slowest < Duration::from_secs(10),
        "geodesic convergence, deviation < 1e-3 r and each solve < 10 s",
        format!(
            "worst deviation {:.3e} r, slowest solve {:.2?}",
            worst_dev / s.radius,
            slowest
        ),
    );
    rep.check(
        "2",
        worst_speed < 0.01,
        "speed matches the quintic bell, L-inf < 1% of peak",
        format!("worst {:.2}% ({})", 100.0 * worst_speed, speed_lines.join(", ")),
    );
}

fn flat_limit(rep: &mut Report) {
    let s = sphere();
    let half = 2.5f64.to_radians();
    let a = Vec3::new(s.radius * half.cos(), -s.radius * half.sin(), 0.0);
    let b = Vec3::new(s.radius * half.cos(), s.radius * half.sin(), 0.0);
    let tf = 1.0;
    let (sol, _) = solve(s, a, b, tf);
    let chord = b - a;
    let length = chord.norm();
    let mut worst: f64 = 0.0;
    let mut along: f64 = 0.0;
    let arc_length = s.radius * 2.0 * half;
    let mut progress: f64 = 0.0;
    for (&t, state) in sol.times.iter().zip(&sol.states) {
        let sigma = sigma_derivative(t / tf, 0);
        let free = a + chord * sigma;
        worst = worst.max((state[0] - free).norm());
        // Along-chord component only, and progress along the arc.
        along = along.max(((state[0] - a).dot(&chord) / length - length * sigma).abs());
        let travelled = s.radius * angle_between(&(a - s.center), &(state[0] - s.center));
        progress = progress.max((travelled - arc_length * sigma).abs());
    }
    rep.check(
        "3",
        sol.converged && worst <= 1e-4 * length,
        "5 degree flat limit, pointwise within 1e-4 L of the free-space quintic",
        format!("max gap {:.3e} L", worst / length),
    );
    rep.note(format!(
        "sagitta of the chord {:.3e} L; along-chord gap {:.3e} L; arc-progress gap to the geodesic quintic {:.3e} L",
        s.radius * (1.0 - half.cos()) / length,
        along / length,
        progress / arc_length
    ));
}

fn ssj_oracle(rep: &mut Report) {
    let (l, tf, rate) = (0.3, 0.86, 2000.0);
    let n = (tf * rate) as usize;
    let times: Vec<f64> = (0..=n).map(|k| tf * k as f64 / n as f64).collect();
    let positions: Vec<Vec3> = times
        .iter()
        .map(|&t| Vec3::new(l * sigma_derivative(t / tf, 0), 0.0, 0.0))
        .collect();
    let forces = vec![Vec3::zero(); times.len()];
    let m = Movement::new(times, positions, forces).unwrap();
    let got = ssj(&m).unwrap();
    let expected = 720.0 * l * l / tf.powi(5);
    let err = (got - expected).abs() / expected;
    rep.check(
        "4",
        err < 1e-3,
        "SSJ of dense 1-D quintic equals 720 L^2/tf^5 within 0.1%",
        format!("{got:.6} vs {expected:.6} (relative error {err:.2e})"),
    );
}

fn force_law(rep: &mut Report) {
    let s = sphere();
    let u = Vec3::new(1.0, 2.0, -2.0).normalized().unwrap();
    let outside = contact_force(&(s.center + u * (s.radius + 0.001)), &s).unwrap();
    let inside = contact_force(&(s.center + u * (s.radius - 0.001)), &s).unwrap();
    let on = contact_force(&(s.center + u * s.radius), &s).unwrap();
    let ok_mag = (outside.norm() - 1.0).abs() <= 1e-9 && (inside.norm() - 1.0).abs() <= 1e-9;
    let ok_sign = outside.dot(&u) < 0.0 && inside.dot(&u) > 0.0 && on == Vec3::zero();
    rep.check(
        "5",
        ok_mag && ok_sign,
        "1 mm penetration gives 1.000 N, restoring on both sides",
        format!(
            "outside {:.12} N (radial {:+.3}), inside {:.12} N (radial {:+.3}), on surface {}",
            outside.norm(),
            outside.dot(&u),
            inside.norm(),
            inside.dot(&u),
            on.norm()
        ),
    );
}

fn target_geometry(rep: &mut Report) {
    let t = triangle_targets(&sphere(), PLANE_HEIGHT).unwrap();
    let sides = [t[0].distance(&t[1]), t[1].distance(&t[2]), t[2].distance(&t[0])];
    let ok = sides.iter().all(|d| (d - 0.3174902).abs() <= 1e-5);
    rep.check(
        "6",
        ok,
        "target triangle side 0.3174902 m +- 1e-5",
        format!("sides {:.7} {:.7} {:.7} m", sides[0], sides[1], sides[2]),
    );
}

fn population(rep: &mut Report) {
    let start = Instant::now();
    let summaries: Vec<_> = (1..=20u64)
        .into_par_iter()
        .map(|seed| {
            let exp = Experiment {
                subject: SubjectModel {
                    rng_seed: seed,
                    ..SubjectModel::default()
                },
                ..Experiment::default()
            };
            let log = run_experiment(&exp).unwrap();
            let records = analyze_log(&log, &Segmentation::default()).unwrap();
            summarize_subject(&format!("subject-{seed:02}"), &records, TRAINING_BLOCK)
        })
        .collect();
    let report = population_report(summaries);
    let took = start.elapsed();
    let mut ok = took < Duration::from_secs(120);
    let mut lines = Vec::new();
    for comparison in Comparison::ALL {
        for metric in [Metric::Apd, Metric::Acf, Metric::Cfv, Metric::Vpe] {
            let t = report.test(metric, comparison).unwrap();
            let p = t.wilcoxon.as_ref().map_or(1.0, |w| w.p_value);
            let reduced = matches!((t.pre_mean, t.post_mean), (Some(a), Some(b)) if b < a);
            ok &= p < 0.05 && reduced;
            lines.push(format!(
                "{} {} p={:.3e} ({:.1}%)",
                comparison.name(),
                metric.name(),
                p,
                t.reduction_percent.unwrap_or(f64::NAN)
            ));
        }
    }
    rep.check(
        "7",
        ok,
        "20 learning subjects reduce APD/ACF/CFV/VPE in training and test (p < 0.05), pipeline < 2 min",
        format!("pipeline {took:.2?}"),
    );
    for l in lines {
        rep.note(l);
    }
}

/// Pre/post values of two metrics for 20 subjects; `tied` makes the second
/// metric's change follow the first.
fn synthetic_changes(seed: u64, tied: bool) -> Vec<SubjectChange> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..20)
        .map(|k| {
            let acf_pre: f64 = rng.random_range(0.5..2.0);
            let acf_post = acf_pre * rng.random_range(0.6..1.4);
            let cfv_pre = rng.random_range(0.1..1.0);
            let cfv_post = if tied {
                // Variance of a force that scales with the mean.
                cfv_pre * (acf_post / acf_pre).powi(2) * rng.random_range(0.98..1.02)
            } else {
                cfv_pre * rng.random_range(0.6..1.4)
            };
            SubjectChange {
                subject: format!("s{k}"),
                first: Some((cfv_pre, cfv_post)),
                second: Some((acf_pre, acf_post)),
            }
        })
        .collect()
}

fn chi_square_machinery(rep: &mut Report) {
    let rate = |tied: bool| {
        let hits = (0..100u64)
            .filter(|&seed| {
                let chi2 = change_sign_table(&synthetic_changes(seed, tied))
                    .and_then(|t| chi_square_2x2(&t.table))
                    .unwrap_or(0.0);
                if tied {
                    chi2 > CHI2_CRITICAL_005
                } else {
                    chi2 < CHI2_CRITICAL_005
                }
            })
            .count();
        hits as f64 / 100.0
    };
    let independent = rate(false);
    let dependent = rate(true);
    let t = |a, b, c, d| chi_square_2x2(&ContingencyTable2x2::new(a, b, c, d)).unwrap();
    let table_values = [t(10, 10, 10, 10), t(20, 0, 0, 20), t(15, 5, 5, 15)];
    let exact = table_values == [0.0, 40.0, 10.0];
    rep.check(
        "8",
        independent >= 0.9 && dependent >= 0.9 && exact,
        "chi-square: independent populations below 3.8415 and dependent above in >= 90% of 100 seeds; tables give 0, 40, 10",
        format!(
            "independent {:.0}%, dependent {:.0}%, tables {:?}",
            100.0 * independent,
            100.0 * dependent,
            table_values
        ),
    );
}

fn rotation() -> impl Strategy<Value = Rotation3<f64>> {
    ((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), -3.1..3.1f64)
        .prop_filter("axis", |((x, y, z), _)| x * x + y * y + z * z > 0.01)
        .prop_map(|((x, y, z), angle)| Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(x, y, z)), angle))
}

fn on_sphere(s: &SphereSurface, polar: f64, azimuth: f64) -> Vec3 {
    s.center + Vec3::new(polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin(), polar.cos()) * s.radius
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn sample_movement(s: &SphereSurface, sweep: f64, seed: u64) -> Movement {
    let arc = geodesic_between(&on_sphere(s, 1.2, 0.0), &on_sphere(s, 1.2, sweep), s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = synthetic_movement(&arc, &SubjectModel::default(), 0, 0.9, 100, &mut rng).unwrap();
    let times = (0..positions.len()).map(|k| k as f64 / 100.0).collect();
    let forces = positions.iter().map(|p| contact_force(p, s).unwrap()).collect();
    Movement::new(times, positions, forces).unwrap()
}

fn invariants(rep: &mut Report) {
    let s = sphere();
    let mut all = true;
    let mut parts = Vec::new();

    let solver_rotation = property(
        runner(4).run(&(rotation(), 0.6..1.4f64, 0.3..2.0f64), |(rot, polar, sweep)| {
            let r = |p: Vec3| Vec3::from(rot * Vector3::from(p));
            let (a, b) = (on_sphere(&s, polar, 0.0), on_sphere(&s, polar, sweep));
            let (base, _) = solve(s, a, b, 1.0);
            let (turned, _) = solve(s, r(a), r(b), 1.0);
            prop_assert!(base.converged && turned.converged);
            prop_assert!(rel(base.cost, turned.cost) <= 1e-9);
            for k in 0..=100 {
                let t = k as f64 / 100.0;
                let gap = (turned.state_at(t)[0] - r(base.state_at(t)[0])).norm();
                prop_assert!(gap <= 1e-9 * s.radius, "gap {gap}");
            }
            Ok(())
        }),
    );
    parts.push(("solver rotation", solver_rotation));

    let metric_rotation = property(
        runner(32).run(&(rotation(), 0.4..2.0f64, 0u64..1000), |(rot, sweep, seed)| {
            let r = |p: &Vec3| Vec3::from(rot * Vector3::from(*p));
            let m = sample_movement(&s, sweep, seed);
            let turned = Movement::new(
                m.times.clone(),
                m.positions.iter().map(r).collect(),
                m.forces.iter().map(r).collect(),
            )
            .unwrap();
            let s2 = SphereSurface::new(r(&s.center), s.radius, s.stiffness).unwrap();
            let (x, y) = (compute_metrics(&m, &s).unwrap(), compute_metrics(&turned, &s2).unwrap());
            for (u, v) in [
                (x.apd, y.apd),
                (x.acf, y.acf),
                (x.cfv, y.cfv),
                (x.vpe, y.vpe),
                (x.ssj, y.ssj),
            ] {
                prop_assert!(rel(u, v) <= 1e-9, "{u} vs {v}");
            }
            Ok(())
        }),
    );
    parts.push(("metric rotation", metric_rotation));

    let reversal = property(
        runner(3).run(&(0.6..1.4f64, 0.3..2.0f64, 0.5..1.5f64), |(polar, sweep, tf)| {
            let (a, b) = (on_sphere(&s, polar, 0.0), on_sphere(&s, polar, sweep));
            let (fwd, _) = solve(s, a, b, tf);
            let (back, _) = solve(s, b, a, tf);
            prop_assert!(rel(fwd.cost, back.cost) <= 1e-7);
            for k in 0..=100 {
                let t = tf * k as f64 / 100.0;
                let gap = (back.state_at(tf - t)[0] - fwd.state_at(t)[0]).norm();
                prop_assert!(gap <= 1e-7 * s.radius, "gap {gap}");
            }
            Ok(())
        }),
    );
    parts.push(("time reversal", reversal));

    let zero_cases = property(
        runner(32).run(&(0.2..2.5f64, 0.4..1.5f64, 0.05..0.6f64), |(sweep, tf, l)| {
            let arc = geodesic_between(&on_sphere(&s, 1.1, 0.0), &on_sphere(&s, 1.1, sweep), &s).unwrap();
            let on_arc = Movement::from_reference(&reference_trajectory(&arc, tf, 100.0).unwrap()).unwrap();
            let reference = reference_for(&on_arc, &s).unwrap();
            prop_assert!(apd(&on_arc, &reference).unwrap() <= 1e-12);
            prop_assert!(acf(&on_arc).unwrap() == 0.0 && cfv(&on_arc).unwrap() == 0.0);
            // On a straight line the fitted speed is the quintic itself.
            let times: Vec<f64> = (0..=100).map(|k| tf * k as f64 / 100.0).collect();
            let line: Vec<Vec3> = times
                .iter()
                .map(|&t| Vec3::new(l * sigma_derivative(t / tf, 0), 0.0, 0.0))
                .collect();
            let m = Movement::new(times, line, vec![Vec3::zero(); 101]).unwrap();
            let profile = QuinticProfile::new(l, tf).unwrap();
            prop_assert!(vpe(&m, &profile).unwrap() <= 1e-9 * l);
            prop_assert!(rel(ssj(&m).unwrap(), ssj_closed_form(&profile)) <= 1e-9);
            Ok(())
        }),
    );
    parts.push(("metric zero cases", zero_cases));

    let exp = Experiment {
        subject: SubjectModel {
            rng_seed: 7,
            ..SubjectModel::default()
        },
        ..Experiment::default()
    };
    let log_a = run_experiment(&exp).unwrap().to_text();
    let log_b = run_experiment(&exp).unwrap().to_text();
    let t = triangle_targets(&s, PLANE_HEIGHT).unwrap();
    let (sol_a, _) = solve(s, t[0], t[1], MOVE_TIME);
    let (sol_b, _) = solve(s, t[0], t[1], MOVE_TIME);
    let same_solution = sol_a.times == sol_b.times && sol_a.states == sol_b.states && sol_a.lambda == sol_b.lambda;
    let determinism = if log_a == log_b && same_solution {
        (
            true,
            format!("log of {} bytes and solver output identical", log_a.len()),
        )
    } else {
        (false, "reruns differ".to_string())
    };
    parts.push(("deterministic reruns", determinism));

    let mut detail = Vec::new();
    for (name, (ok, msg)) in &parts {
        all &= *ok;
        detail.push(format!("{name}: {}", if *ok { "ok" } else { msg.as_str() }));
    }
    rep.check(
        "9",
        all,
        "invariants: rotation equivariance (1e-9), time reversal, metric zero cases, determinism",
        detail.join("; "),
    );

    let ideal = Experiment {
        subject: SubjectModel::ideal(1),
        ..Experiment::default()
    };
    let records = analyze_log(&run_experiment(&ideal).unwrap(), &Segmentation::default()).unwrap();
    let medians = summarize_subject("ideal", &records, TRAINING_BLOCK)
        .all
        .unwrap()
        .medians;
    rep.note(format!(
        "ideal simulated subject medians: APD {:.2e}, ACF {:.2e} N, CFV {:.2e} N^2, VPE {:.2e} m, SSJ {:.2} m^2/s^5",
        medians.apd, medians.acf, medians.cfv, medians.vpe, medians.ssj
    ));
}

fn main() {
    let mut rep = Report { failures: 0 };
    geodesic_and_bell(&mut rep);
    flat_limit(&mut rep);
    ssj_oracle(&mut rep);
    force_law(&mut rep);
    target_geometry(&mut rep);
    population(&mut rep);
    chi_square_machinery(&mut rep);
    invariants(&mut rep);
    println!();
    if rep.failures == 0 {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: {} criteria FAIL", rep.failures);
        std::process::exit(1);
    }
}

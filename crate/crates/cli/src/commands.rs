use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use sphere_minjerk::analysis::{population_report, render_text, summarize_subject, Metric, PopulationReport};
use sphere_minjerk::bvp::{path_deviation_from_geodesic, solve_constrained_minjerk};
use sphere_minjerk::error::Error;
use sphere_minjerk::geometry::{geodesic_between, triangle_targets};
use sphere_minjerk::haptic::run_experiment;
use sphere_minjerk::metrics::{compute_metrics, fit_tangential_velocity, reference_for, segment_movements_with};
use sphere_minjerk::reference::{geodesic_quintic_jet, reference_trajectory};
use sphere_minjerk::{BvpProblem, BvpSolution, MetricRecord, Movement, Phase, QuinticProfile, TrialLog};

use crate::config::RunConfig;
use crate::output::{write_file, Csv};
use crate::Failure;

/// Points per movement in the velocity-profile plot data.
const PROFILE_POINTS: usize = 101;
/// Samples per movement used to integrate the reference cost.
const REFERENCE_COST_RATE: f64 = 4000.0;

#[derive(Serialize)]
struct SolveReport {
    from: usize,
    to: usize,
    duration: f64,
    tol: f64,
    converged: bool,
    iterations: usize,
    refinements: usize,
    mesh_points: usize,
    max_constraint_residual: f64,
    max_ode_residual: f64,
    max_collocation_defect: f64,
    max_boundary_residual: f64,
    cost: f64,
    /// Squared jerk of the geodesic arc under quintic timing, m^2/s^5.
    reference_cost: f64,
    central_angle: f64,
    path_length: f64,
    /// Largest geodesic distance from the path to the great-circle arc, m.
    geodesic_deviation: Option<f64>,
    geodesic_deviation_over_radius: Option<f64>,
    /// Largest speed gap to the geodesic quintic, as a fraction of its peak speed.
    speed_error_over_peak: f64,
}

pub fn solve(cfg: &RunConfig, out: &Path, from: usize, to: usize, tol: Option<f64>) -> anyhow::Result<()> {
    if from == to {
        return Err(Failure::usage(format!("--from and --to must differ, both are {from}")));
    }
    let mut options = cfg.solver_options();
    if let Some(t) = tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::usage(format!("--tol must be positive, got {t}")));
        }
        options.tol = t;
    }
    let sphere = cfg.sphere();
    let plane_height = cfg.sphere.plane_height_mm / 1000.0;
    let targets = triangle_targets(&sphere, plane_height).map_err(|e| Failure::usage(e.to_string()))?;
    let duration = cfg.solver.duration_s;
    let problem = BvpProblem::rest_to_rest(sphere, targets[from], targets[to], duration);
    let sol = solve_constrained_minjerk(&problem, &options).map_err(|e| Failure::numerical(e.to_string()))?;

    let arc = geodesic_between(&targets[from], &targets[to], &sphere).map_err(|e| Failure::numerical(e.to_string()))?;
    let profile = QuinticProfile::new(arc.arc_length, duration).map_err(|e| Failure::numerical(e.to_string()))?;
    let jets: Vec<_> = sol
        .times
        .iter()
        .map(|&t| geodesic_quintic_jet(&arc, &profile, t))
        .collect();
    let speeds = sol.speeds();
    let peak = profile.peak_speed();
    let speed_error = speeds
        .iter()
        .zip(&jets)
        .map(|(v, j)| (v - j[1].norm()).abs())
        .fold(0.0, f64::max);
    let deviation = path_deviation_from_geodesic(&sol).ok();
    let dense = reference_trajectory(&arc, duration, REFERENCE_COST_RATE / duration)
        .map_err(|e| Failure::numerical(e.to_string()))?;
    let reference_cost = BvpSolution::from_reference(&dense).cost;
    let report = SolveReport {
        from,
        to,
        duration,
        tol: options.tol,
        converged: sol.converged,
        iterations: sol.iterations,
        refinements: sol.refinements,
        mesh_points: sol.times.len(),
        max_constraint_residual: sol.max_constraint_residual,
        max_ode_residual: sol.max_ode_residual,
        max_collocation_defect: sol.max_collocation_defect,
        max_boundary_residual: sol.max_boundary_residual,
        cost: sol.cost,
        reference_cost,
        central_angle: arc.central_angle,
        path_length: arc.arc_length,
        geodesic_deviation: deviation,
        geodesic_deviation_over_radius: deviation.map(|d| d / sphere.radius),
        speed_error_over_peak: speed_error / peak,
    };
    let residuals = serde_json::to_string_pretty(&report)? + "\n";
    let residuals_path = write_file(out, "residuals.json", &residuals)?;
    if !sol.converged {
        eprintln!(
            "solver did not converge after {} Newton iterations and {} refinements ({} mesh points)",
            sol.iterations,
            sol.refinements,
            sol.times.len()
        );
        eprintln!("  constraint residual  {:e} m^2", sol.max_constraint_residual);
        eprintln!("  ODE residual         {:e}", sol.max_ode_residual);
        eprintln!("  collocation defect   {:e}", sol.max_collocation_defect);
        eprintln!("  boundary residual    {:e}", sol.max_boundary_residual);
        eprintln!("  diagnostics written to {}", residuals_path.display());
        return Err(Failure::numerical(format!("no converged solution for {from} -> {to}")));
    }

    let mut solution = Csv::new(&[
        "t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az", "jx", "jy", "jz", "speed", "lambda",
    ]);
    for (k, s) in sol.states.iter().enumerate() {
        let mut row = vec![sol.times[k]];
        for d in &s[..4] {
            row.extend(d.to_array());
        }
        row.push(speeds[k]);
        row.push(sol.lambda[k]);
        solution.row(&[], &row);
    }
    let mut reference = Csv::new(&["t", "x", "y", "z", "speed"]);
    for (t, j) in sol.times.iter().zip(&jets) {
        let p = j[0].to_array();
        reference.row(&[], &[*t, p[0], p[1], p[2], j[1].norm()]);
    }
    let solution_path = write_file(out, "solution.csv", &solution.into_string())?;
    let reference_path = write_file(out, "reference.csv", &reference.into_string())?;

    println!(
        "solve {from} -> {to}: converged after {} Newton iterations, {} refinements, {} mesh points",
        sol.iterations,
        sol.refinements,
        sol.times.len()
    );
    if let Some(d) = deviation {
        println!("  geodesic deviation  {d:.3e} m ({:.3e} r)", d / sphere.radius);
    }
    println!(
        "  squared jerk        {:.4} m^2/s^5 (geodesic quintic {:.4})",
        sol.cost, report.reference_cost
    );
    println!(
        "  speed gap to quintic {:.2}% of peak",
        100.0 * report.speed_error_over_peak
    );
    for p in [&solution_path, &reference_path, &residuals_path] {
        println!("  wrote {}", p.display());
    }
    Ok(())
}

fn log_name(seed: u64) -> String {
    format!("subject-{seed:04}.log")
}

pub fn simulate(cfg: &RunConfig, out: &Path, first_seed: u64, count: u64) -> anyhow::Result<()> {
    let seeds: Vec<u64> = (0..count)
        .map(|k| {
            first_seed
                .checked_add(k)
                .ok_or_else(|| Failure::usage("seed range overflows u64"))
        })
        .collect::<anyhow::Result<_>>()?;
    let logs: Vec<TrialLog> = seeds
        .par_iter()
        .map(|&seed| run_experiment(&cfg.experiment(seed)).map_err(|e| Failure::numerical(e.to_string())))
        .collect::<anyhow::Result<_>>()?;
    for (seed, log) in seeds.iter().zip(&logs) {
        let path = write_file(out, &log_name(*seed), &log.to_text())?;
        let moves = &log.header.movements;
        let count_of = |p: Phase| moves.iter().filter(|m| m.phase == p).count();
        let mean_peak = moves.iter().map(|m| m.peak_speed).sum::<f64>() / moves.len().max(1) as f64;
        let in_band = moves.iter().filter(|m| m.in_band).count();
        println!(
            "{}: {} movements (test_pre {}, training {}, test_post {}), mean peak speed {:.3} m/s, {} in band",
            path.display(),
            moves.len(),
            count_of(Phase::TestPre),
            count_of(Phase::Training),
            count_of(Phase::TestPost),
            mean_peak,
            in_band
        );
    }
    Ok(())
}

struct SubjectData {
    id: String,
    movements: Vec<Movement>,
    records: Vec<MetricRecord>,
}

fn load_subject(cfg: &RunConfig, path: &Path) -> anyhow::Result<SubjectData> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Failure::usage(format!("{}: not a file name", path.display())))?;
    let file = std::fs::File::open(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let log = TrialLog::read_from(BufReader::new(file)).map_err(|e| match e {
        Error::LogFormat { line, message } => Failure::usage(format!("{}:{line}: {message}", path.display())),
        other => Failure::usage(format!("{}: {other}", path.display())),
    })?;
    let movements = segment_movements_with(&log, &cfg.segmentation())
        .map_err(|e| Failure::numerical(format!("{}: {e}", path.display())))?;
    let records = movements
        .par_iter()
        .enumerate()
        .map(|(k, m)| {
            compute_metrics(m, &log.header.sphere)
                .map_err(|e| Failure::numerical(format!("{}: movement {k}: {e}", path.display())))
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(SubjectData { id, movements, records })
}

pub fn analyze(cfg: &RunConfig, out: &Path, logs: &[PathBuf]) -> anyhow::Result<()> {
    let mut subjects: Vec<SubjectData> = logs
        .par_iter()
        .map(|p| load_subject(cfg, p))
        .collect::<anyhow::Result<_>>()?;
    subjects.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = subjects.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Failure::usage(format!("two logs share the subject id {}", w[0].id)));
    }

    let summaries = subjects
        .iter()
        .map(|s| summarize_subject(&s.id, &s.records, cfg.analysis.training_block))
        .collect();
    let report = population_report(summaries);
    let text = render_text(&report);

    let mut written = vec![
        write_file(out, "metrics.csv", &metrics_table(&subjects))?,
        write_file(out, "summary.json", &(serde_json::to_string_pretty(&report)? + "\n"))?,
        write_file(out, "report.txt", &text)?,
        write_file(out, "plot_metric_trials.csv", &metric_traces(&subjects))?,
    ];
    let (velocity, paths) = profile_plots(cfg, &subjects)?;
    written.push(write_file(out, "plot_velocity.csv", &velocity)?);
    written.push(write_file(out, "plot_paths.csv", &paths)?);

    print!("{text}");
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn metrics_table(subjects: &[SubjectData]) -> String {
    let mut csv = Csv::new(&[
        "subject",
        "phase",
        "trial",
        "direction",
        "start_target",
        "end_target",
        "apd",
        "acf_n",
        "cfv_n2",
        "vpe_m",
        "ssj_m2_per_s5",
        "duration_s",
        "path_length_m",
        "peak_speed_m_per_s",
    ]);
    for s in subjects {
        for r in &s.records {
            let target = |t: Option<usize>| t.map_or(String::new(), |t| t.to_string());
            csv.row(
                &[
                    &s.id,
                    r.phase.as_str(),
                    &r.trial.to_string(),
                    r.direction.as_str(),
                    &target(r.start_target),
                    &target(r.end_target),
                ],
                &[
                    r.apd,
                    r.acf,
                    r.cfv,
                    r.vpe,
                    r.ssj,
                    r.duration,
                    r.path_length,
                    r.peak_speed,
                ],
            );
        }
    }
    csv.into_string()
}

/// Population mean of each metric per (phase, trial).
fn metric_traces(subjects: &[SubjectData]) -> String {
    let mut groups: BTreeMap<(Phase, u32), Vec<&MetricRecord>> = BTreeMap::new();
    for s in subjects {
        for r in &s.records {
            groups.entry((r.phase, r.trial)).or_default().push(r);
        }
    }
    let mut cols = vec!["phase", "trial", "subjects"];
    cols.extend(["apd", "acf", "cfv", "vpe", "ssj"]);
    let mut csv = Csv::new(&cols);
    for ((phase, trial), rs) in groups {
        let n = rs.len() as f64;
        let means: Vec<f64> = Metric::ALL
            .iter()
            .map(|m| rs.iter().map(|r| m.of(r)).sum::<f64>() / n)
            .collect();
        csv.row(&[phase.as_str(), &trial.to_string(), &rs.len().to_string()], &means);
    }
    csv.into_string()
}

/// Velocity profiles and hand paths of the first pre-test and the last
/// post-test movement of each subject, with the reference overlaid.
fn profile_plots(cfg: &RunConfig, subjects: &[SubjectData]) -> anyhow::Result<(String, String)> {
    let mut velocity = Csv::new(&["subject", "phase", "trial", "t", "speed", "reference_speed"]);
    let mut paths = Csv::new(&[
        "subject",
        "phase",
        "trial",
        "t",
        "x",
        "y",
        "z",
        "reference_x",
        "reference_y",
        "reference_z",
    ]);
    let sphere = cfg.sphere();
    for s in subjects {
        let picks = [
            s.movements.iter().find(|m| m.phase == Phase::TestPre),
            s.movements.iter().rev().find(|m| m.phase == Phase::TestPost),
        ];
        for m in picks.into_iter().flatten() {
            let fail = |e: Error| Failure::numerical(format!("{}: {e}", s.id));
            let fit = fit_tangential_velocity(m).map_err(fail)?;
            let reference = reference_for(m, &sphere).map_err(fail)?;
            let trial = m.trial.to_string();
            let labels = [s.id.as_str(), m.phase.as_str(), &trial];
            for k in 0..PROFILE_POINTS {
                let t = m.duration() * k as f64 / (PROFILE_POINTS - 1) as f64;
                let v = fit.speed(fit.t0 + t);
                velocity.row(&labels, &[t, v, reference.profile.speed_clamped(t)]);
            }
            for (t, p) in m.times.iter().zip(&m.positions) {
                let rel = t - m.times[0];
                let q = reference.position_at(rel);
                paths.row(&labels, &[rel, p.x, p.y, p.z, q.x, q.y, q.z]);
            }
        }
    }
    Ok((velocity.into_string(), paths.into_string()))
}

pub fn report(out: &Path, summary: Option<&Path>) -> anyhow::Result<()> {
    let mut path = summary.map_or_else(|| out.join("summary.json"), Path::to_path_buf);
    if path.is_dir() {
        path = path.join("summary.json");
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let report: PopulationReport = serde_json::from_str(&text)
        .with_context(|| format!("{}: not an analysis summary", path.display()))
        .map_err(|e| Failure::usage(format!("{e:#}")))?;
    let rendered = render_text(&report);
    print!("{rendered}");
    Ok(())
}

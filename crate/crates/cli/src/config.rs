//! Run configuration file. Lengths and stiffness are given in the units the
//! experiment is usually described in (cm, mm, N/mm) and converted to SI here.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sphere_minjerk::metrics::{Segmentation, SEGMENT_THRESHOLD};
use sphere_minjerk::{Experiment, Protocol, ServoConfig, SolverOptions, SphereSurface, SubjectModel, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    pub sphere: SphereSection,
    pub servo: ServoSection,
    pub subject: SubjectSection,
    pub protocol: ProtocolSection,
    pub solver: SolverSection,
    pub analysis: AnalysisSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereSection {
    pub radius_cm: f64,
    pub center_cm: [f64; 3],
    pub stiffness_n_per_mm: f64,
    /// Height of the target plane above the center.
    pub plane_height_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServoSection {
    pub servo_rate_hz: u32,
    pub sample_rate_hz: u32,
    pub speed_band_m_per_s: [f64; 2],
    pub rest_every: u32,
    pub separation_threshold_m_per_s: f64,
    pub dwell_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubjectSection {
    /// Peak lateral deviation as a fraction of the arc length.
    pub path_bias: f64,
    pub penetration_bias_mm: f64,
    pub timing_distortion: f64,
    pub learning_rate: f64,
    pub motor_noise_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub test_pre: u32,
    pub training: u32,
    pub test_post: u32,
    pub test_edge: [usize; 2],
    pub training_edge: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub duration_s: f64,
    pub max_nodes: usize,
    pub max_newton_iter: usize,
    pub max_refinements: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub segment_threshold_m_per_s: f64,
    /// Movements in each of the first and last training blocks.
    pub training_block: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: "out".to_string(),
            sphere: SphereSection::default(),
            servo: ServoSection::default(),
            subject: SubjectSection::default(),
            protocol: ProtocolSection::default(),
            solver: SolverSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

impl Default for SphereSection {
    fn default() -> Self {
        let s = SphereSurface::experiment();
        let e = Experiment::default();
        Self {
            radius_cm: s.radius * 100.0,
            center_cm: [0.0; 3],
            stiffness_n_per_mm: s.stiffness / 1000.0,
            plane_height_mm: e.plane_height * 1000.0,
        }
    }
}

impl Default for ServoSection {
    fn default() -> Self {
        let s = ServoConfig::default();
        Self {
            servo_rate_hz: s.servo_rate,
            sample_rate_hz: s.sample_rate,
            speed_band_m_per_s: s.speed_band,
            rest_every: s.rest_every,
            separation_threshold_m_per_s: s.separation_threshold,
            dwell_s: s.dwell,
        }
    }
}

impl Default for SubjectSection {
    fn default() -> Self {
        let s = SubjectModel::default();
        Self {
            path_bias: s.path_bias,
            penetration_bias_mm: s.penetration_bias * 1000.0,
            timing_distortion: s.timing_distortion,
            learning_rate: s.learning_rate,
            motor_noise_s: s.motor_noise,
        }
    }
}

impl Default for ProtocolSection {
    fn default() -> Self {
        let p = Protocol::default();
        Self {
            test_pre: p.test_pre,
            training: p.training,
            test_post: p.test_post,
            test_edge: p.test_edge,
            training_edge: p.training_edge,
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            tol: o.tol,
            duration_s: 0.86,
            max_nodes: o.max_nodes,
            max_newton_iter: o.max_newton_iter,
            max_refinements: o.max_refinements,
        }
    }
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            segment_threshold_m_per_s: SEGMENT_THRESHOLD,
            training_block: sphere_minjerk::analysis::TRAINING_BLOCK,
        }
    }
}

impl RunConfig {
    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn sphere(&self) -> SphereSurface {
        let c = self.sphere.center_cm;
        SphereSurface {
            center: Vec3::new(c[0] / 100.0, c[1] / 100.0, c[2] / 100.0),
            radius: self.sphere.radius_cm / 100.0,
            stiffness: self.sphere.stiffness_n_per_mm * 1000.0,
        }
    }

    /// Experiment for one subject; the subject's generator is seeded with `seed`.
    pub fn experiment(&self, seed: u64) -> Experiment {
        Experiment {
            sphere: self.sphere(),
            plane_height: self.sphere.plane_height_mm / 1000.0,
            servo: ServoConfig {
                servo_rate: self.servo.servo_rate_hz,
                sample_rate: self.servo.sample_rate_hz,
                speed_band: self.servo.speed_band_m_per_s,
                rest_every: self.servo.rest_every,
                separation_threshold: self.servo.separation_threshold_m_per_s,
                dwell: self.servo.dwell_s,
            },
            subject: SubjectModel {
                path_bias: self.subject.path_bias,
                penetration_bias: self.subject.penetration_bias_mm / 1000.0,
                timing_distortion: self.subject.timing_distortion,
                learning_rate: self.subject.learning_rate,
                motor_noise: self.subject.motor_noise_s,
                rng_seed: seed,
            },
            protocol: Protocol {
                test_pre: self.protocol.test_pre,
                training: self.protocol.training,
                test_post: self.protocol.test_post,
                test_edge: self.protocol.test_edge,
                training_edge: self.protocol.training_edge,
            },
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_newton_iter: self.solver.max_newton_iter,
            max_nodes: self.solver.max_nodes,
            max_refinements: self.solver.max_refinements,
        }
    }

    pub fn segmentation(&self) -> Segmentation {
        Segmentation {
            threshold: self.analysis.segment_threshold_m_per_s,
            ..Segmentation::default()
        }
    }

    /// Every problem with the configuration, in a stable order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.experiment(self.seed).problems();
        let s = &self.solver;
        if !(s.tol.is_finite() && s.tol > 0.0) {
            out.push(format!("solver.tol must be positive, got {}", s.tol));
        }
        if !(s.duration_s.is_finite() && s.duration_s > 0.0) {
            out.push(format!("solver.duration_s must be positive, got {}", s.duration_s));
        }
        if s.max_nodes < 2 * sphere_minjerk::bvp::INITIAL_MESH_POINTS {
            out.push(format!(
                "solver.max_nodes must be at least {}, got {}",
                2 * sphere_minjerk::bvp::INITIAL_MESH_POINTS,
                s.max_nodes
            ));
        }
        if s.max_newton_iter == 0 {
            out.push("solver.max_newton_iter must be positive".to_string());
        }
        let a = &self.analysis;
        if !(a.segment_threshold_m_per_s.is_finite() && a.segment_threshold_m_per_s > 0.0) {
            out.push(format!(
                "analysis.segment_threshold_m_per_s must be positive, got {}",
                a.segment_threshold_m_per_s
            ));
        }
        if a.training_block == 0 {
            out.push("analysis.training_block must be positive".to_string());
        }
        if self.output_dir.is_empty() {
            out.push("output_dir must not be empty".to_string());
        }
        out
    }
}

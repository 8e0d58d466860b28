//! Population analysis: per-subject pre/post summaries, signed-rank tests,
//! reduction percentages and metric-change chi-square tables.
//!
//! Training is compared between its first and last blocks of movements,
//! the test phase between the pre- and post-training test movements.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metrics::MetricRecord;
use crate::stats::{
    change_sign_table, chi_square_2x2, independent_at_005, reduction_percent, wilcoxon_signed_rank, PairedSamples,
    SignTable, SubjectChange, WilcoxonResult, CHI2_CRITICAL_005,
};
use crate::triallog::Phase;

/// Movements in each of the first and last training blocks.
pub const TRAINING_BLOCK: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Apd,
    Acf,
    Cfv,
    Vpe,
    Ssj,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Apd, Metric::Acf, Metric::Cfv, Metric::Vpe, Metric::Ssj];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Apd => "APD",
            Metric::Acf => "ACF",
            Metric::Cfv => "CFV",
            Metric::Vpe => "VPE",
            Metric::Ssj => "SSJ",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::Apd => "",
            Metric::Acf => "N",
            Metric::Cfv => "N^2",
            Metric::Vpe => "m",
            Metric::Ssj => "m^2/s^5",
        }
    }

    pub fn of(self, r: &MetricRecord<f64>) -> f64 {
        match self {
            Metric::Apd => r.apd,
            Metric::Acf => r.acf,
            Metric::Cfv => r.cfv,
            Metric::Vpe => r.vpe,
            Metric::Ssj => r.ssj,
        }
    }
}

/// Metric-pair comparisons examined with chi-square tables.
pub const CHI_SQUARE_PAIRS: [(Metric, Metric); 3] = [
    (Metric::Apd, Metric::Acf),
    (Metric::Cfv, Metric::Acf),
    (Metric::Vpe, Metric::Ssj),
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub apd: f64,
    pub acf: f64,
    pub cfv: f64,
    pub vpe: f64,
    pub ssj: f64,
}

impl MetricValues {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Apd => self.apd,
            Metric::Acf => self.acf,
            Metric::Cfv => self.cfv,
            Metric::Vpe => self.vpe,
            Metric::Ssj => self.ssj,
        }
    }

    fn set(&mut self, m: Metric, v: f64) {
        match m {
            Metric::Apd => self.apd = v,
            Metric::Acf => self.acf = v,
            Metric::Cfv => self.cfv = v,
            Metric::Vpe => self.vpe = v,
            Metric::Ssj => self.ssj = v,
        }
    }
}

/// Means over a group of movements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub movements: usize,
    pub means: MetricValues,
    pub medians: MetricValues,
    /// Variance of the per-movement ACF across the group, N^2.
    pub acf_across_variance: f64,
}

fn summarize(records: &[&MetricRecord<f64>]) -> Option<GroupSummary> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    let mut means = MetricValues::default();
    let mut medians = MetricValues::default();
    for m in Metric::ALL {
        let mut v: Vec<f64> = records.iter().map(|r| m.of(r)).collect();
        means.set(m, v.iter().sum::<f64>() / n);
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        medians.set(
            m,
            if v.len() % 2 == 1 {
                v[mid]
            } else {
                0.5 * (v[mid - 1] + v[mid])
            },
        );
    }
    let acf_across_variance = records.iter().map(|r| (r.acf - means.acf).powi(2)).sum::<f64>() / n;
    Some(GroupSummary {
        movements: records.len(),
        means,
        medians,
        acf_across_variance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Training,
    Test,
}

impl Comparison {
    pub const ALL: [Comparison; 2] = [Comparison::Training, Comparison::Test];

    pub fn name(self) -> &'static str {
        match self {
            Comparison::Training => "training",
            Comparison::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub subject: String,
    pub movements: usize,
    pub all: Option<GroupSummary>,
    pub training_first: Option<GroupSummary>,
    pub training_last: Option<GroupSummary>,
    pub test_pre: Option<GroupSummary>,
    pub test_post: Option<GroupSummary>,
}

impl SubjectSummary {
    pub fn pair(&self, c: Comparison) -> Option<(&GroupSummary, &GroupSummary)> {
        match c {
            Comparison::Training => self.training_first.as_ref().zip(self.training_last.as_ref()),
            Comparison::Test => self.test_pre.as_ref().zip(self.test_post.as_ref()),
        }
    }
}

/// Summaries for one subject. Training records are ordered by trial; the
/// blocks shrink to half the training movements when fewer than `2 * block` exist.
pub fn summarize_subject(subject: &str, records: &[MetricRecord<f64>], block: usize) -> SubjectSummary {
    let of_phase = |p: Phase| {
        let mut v: Vec<&MetricRecord<f64>> = records.iter().filter(|r| r.phase == p).collect();
        v.sort_by_key(|r| r.trial);
        v
    };
    let training = of_phase(Phase::Training);
    let k = block.min(training.len() / 2);
    let (first, last) = if k == 0 {
        (None, None)
    } else {
        (summarize(&training[..k]), summarize(&training[training.len() - k..]))
    };
    SubjectSummary {
        subject: subject.to_string(),
        movements: records.len(),
        all: summarize(&records.iter().collect::<Vec<_>>()),
        training_first: first,
        training_last: last,
        test_pre: summarize(&of_phase(Phase::TestPre)),
        test_post: summarize(&of_phase(Phase::TestPost)),
    }
}

/// Signed-rank comparison of one metric across subjects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTest {
    pub metric: Metric,
    pub comparison: Comparison,
    pub subjects: usize,
    pub pre_mean: Option<f64>,
    pub post_mean: Option<f64>,
    pub reduction_percent: Option<f64>,
    pub wilcoxon: Option<WilcoxonResult>,
    /// Fraction of subjects whose metric decreased.
    pub fraction_reduced: f64,
    pub note: Option<String>,
}

impl MetricTest {
    pub fn significant(&self) -> bool {
        self.wilcoxon.is_some_and(|w| w.p_value < 0.05)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub first: Metric,
    pub second: Metric,
    pub comparison: Comparison,
    pub signs: Option<SignTable>,
    pub chi2: Option<f64>,
    pub critical: f64,
    pub independent: Option<bool>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationReport {
    /// True when no subject contributed a single movement.
    pub empty: bool,
    pub subjects: Vec<SubjectSummary>,
    pub tests: Vec<MetricTest>,
    pub chi_square: Vec<ChiSquareTest>,
}

impl PopulationReport {
    pub fn test(&self, metric: Metric, comparison: Comparison) -> Option<&MetricTest> {
        self.tests
            .iter()
            .find(|t| t.metric == metric && t.comparison == comparison)
    }
}

fn metric_test(subjects: &[SubjectSummary], metric: Metric, comparison: Comparison) -> MetricTest {
    let (pre, post): (Vec<f64>, Vec<f64>) = subjects
        .iter()
        .filter_map(|s| s.pair(comparison))
        .map(|(a, b)| (a.means.get(metric), b.means.get(metric)))
        .unzip();
    let n = pre.len();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let fraction_reduced = if n == 0 {
        0.0
    } else {
        pre.iter().zip(&post).filter(|(a, b)| b < a).count() as f64 / n as f64
    };
    let mut test = MetricTest {
        metric,
        comparison,
        subjects: n,
        pre_mean: mean(&pre),
        post_mean: mean(&post),
        reduction_percent: None,
        wilcoxon: None,
        fraction_reduced,
        note: None,
    };
    match PairedSamples::new(pre, post) {
        Ok(pairs) => {
            test.reduction_percent = reduction_percent(&pairs).ok();
            match wilcoxon_signed_rank(&pairs) {
                Ok(w) => test.wilcoxon = Some(w),
                Err(e) => test.note = Some(e.to_string()),
            }
        }
        Err(e) => test.note = Some(e.to_string()),
    }
    test
}

fn chi_square_test(
    subjects: &[SubjectSummary],
    first: Metric,
    second: Metric,
    comparison: Comparison,
) -> ChiSquareTest {
    let changes: Vec<SubjectChange> = subjects
        .iter()
        .map(|s| {
            let pair = s.pair(comparison);
            SubjectChange {
                subject: s.subject.clone(),
                first: pair.map(|(a, b)| (a.means.get(first), b.means.get(first))),
                second: pair.map(|(a, b)| (a.means.get(second), b.means.get(second))),
            }
        })
        .collect();
    let mut out = ChiSquareTest {
        first,
        second,
        comparison,
        signs: None,
        chi2: None,
        critical: CHI2_CRITICAL_005,
        independent: None,
        note: None,
    };
    match change_sign_table(&changes) {
        Ok(signs) => {
            out.signs = Some(signs);
            match chi_square_2x2(&signs.table) {
                Ok(x) => {
                    out.chi2 = Some(x);
                    out.independent = Some(independent_at_005(x));
                }
                Err(e) => out.note = Some(e.to_string()),
            }
        }
        Err(e) => out.note = Some(e.to_string()),
    }
    out
}

/// Tests every metric in both comparisons and builds the three chi-square
/// tables per comparison. Subjects are reported in the order given.
pub fn population_report(subjects: Vec<SubjectSummary>) -> PopulationReport {
    let empty = subjects.iter().all(|s| s.movements == 0);
    let mut tests = Vec::new();
    let mut chi_square = Vec::new();
    if !empty {
        for c in Comparison::ALL {
            for m in Metric::ALL {
                tests.push(metric_test(&subjects, m, c));
            }
            for (a, b) in CHI_SQUARE_PAIRS {
                chi_square.push(chi_square_test(&subjects, a, b, c));
            }
        }
    }
    PopulationReport {
        empty,
        subjects,
        tests,
        chi_square,
    }
}

/// Marker line written when no movements were found.
pub const EMPTY_MARKER: &str = "RESULT: EMPTY (no movements found)";

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

/// Human-readable report.
pub fn render_text(r: &PopulationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Movement smoothness analysis (synthetic subjects are labeled in the logs)"
    );
    let _ = writeln!(s, "subjects: {}", r.subjects.len());
    if r.empty {
        let _ = writeln!(s, "{EMPTY_MARKER}");
        return s;
    }
    for sub in &r.subjects {
        let _ = writeln!(s, "  {}: {} movements", sub.subject, sub.movements);
    }
    for c in Comparison::ALL {
        let _ = writeln!(s, "\n[{} phase: pre vs post]", c.name());
        let _ = writeln!(
            s,
            "  {:<4} {:>14} {:>14} {:>11} {:>11} {:>9} {:>8}",
            "", "pre mean", "post mean", "reduction%", "p-value", "W+", "reduced"
        );
        for t in r.tests.iter().filter(|t| t.comparison == c) {
            let _ = writeln!(
                s,
                "  {:<4} {:>14} {:>14} {:>11} {:>11} {:>9} {:>8.2}{}",
                t.metric.name(),
                t.pre_mean.map_or_else(|| "n/a".into(), |v| format!("{v:.6e}")),
                t.post_mean.map_or_else(|| "n/a".into(), |v| format!("{v:.6e}")),
                fmt_opt(t.reduction_percent, 2),
                t.wilcoxon
                    .map_or_else(|| "n/a".into(), |w| format!("{:.4e}", w.p_value)),
                fmt_opt(t.wilcoxon.map(|w| w.statistic), 1),
                t.fraction_reduced,
                t.note.as_ref().map_or_else(String::new, |n| format!("  ({n})")),
            );
        }
        for x in r.chi_square.iter().filter(|x| x.comparison == c) {
            let _ = write!(s, "  chi-square {} vs {}: ", x.first.name(), x.second.name());
            match (&x.signs, x.chi2) {
                (Some(t), Some(v)) => {
                    let _ =
                        writeln!(
                        s,
                        "{v:.4} ({} {:.4}); table [[{}, {}], [{}, {}]]; reduced first {:.2}, second {:.2}, both {:.2}",
                        if v < x.critical { "independent, <" } else { "dependent, >=" },
                        x.critical,
                        t.table.a,
                        t.table.b,
                        t.table.c,
                        t.table.d,
                        t.fraction_first,
                        t.fraction_second,
                        t.fraction_both
                    );
                }
                (Some(t), None) => {
                    let _ = writeln!(
                        s,
                        "n/a ({}); table [[{}, {}], [{}, {}]]",
                        x.note.as_deref().unwrap_or("undefined"),
                        t.table.a,
                        t.table.b,
                        t.table.c,
                        t.table.d
                    );
                }
                _ => {
                    let _ = writeln!(s, "n/a ({})", x.note.as_deref().unwrap_or("undefined"));
                }
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triallog::Direction;

    fn record(phase: Phase, trial: u32, v: f64) -> MetricRecord<f64> {
        MetricRecord {
            phase,
            trial,
            direction: Direction::Forward,
            start_target: Some(0),
            end_target: Some(1),
            apd: v,
            acf: 2.0 * v,
            cfv: v * v,
            vpe: 0.1 * v,
            ssj: 100.0 + v,
            duration: 0.8,
            path_length: 0.36,
            peak_speed: 0.8,
        }
    }

    fn subject(name: &str, scale: f64) -> SubjectSummary {
        let mut recs = Vec::new();
        for k in 0..6 {
            recs.push(record(Phase::TestPre, k, scale * 2.0));
        }
        for k in 0..10 {
            recs.push(record(Phase::Training, k, scale * (2.0 - 0.1 * k as f64)));
        }
        for k in 0..6 {
            recs.push(record(Phase::TestPost, k, scale));
        }
        summarize_subject(name, &recs, 3)
    }

    #[test]
    fn blocks_and_means() {
        let s = subject("a", 1.0);
        assert_eq!(s.movements, 22);
        let first = s.training_first.unwrap();
        assert_eq!(first.movements, 3);
        assert!((first.means.apd - 1.9).abs() < 1e-12);
        assert!((s.training_last.unwrap().means.apd - 1.2).abs() < 1e-12);
        assert_eq!(s.test_pre.unwrap().means.acf, 4.0);
        assert_eq!(s.test_post.unwrap().acf_across_variance, 0.0);
    }

    #[test]
    fn population_detects_consistent_reduction() {
        let subjects: Vec<_> = (0..8)
            .map(|k| subject(&format!("s{k}"), 1.0 + 0.1 * k as f64))
            .collect();
        let r = population_report(subjects);
        assert!(!r.empty);
        for c in Comparison::ALL {
            for m in [Metric::Apd, Metric::Acf, Metric::Cfv, Metric::Vpe] {
                let t = r.test(m, c).unwrap();
                assert!(t.significant(), "{m:?} {c:?}");
                assert_eq!(t.fraction_reduced, 1.0);
            }
        }
        let t = r.test(Metric::Apd, Comparison::Test).unwrap();
        assert!((t.reduction_percent.unwrap() - 50.0).abs() < 1e-9);
        // Every subject reduces both metrics: the table has an empty margin.
        let x = &r.chi_square[0];
        assert_eq!(x.signs.unwrap().table.a, 8);
        assert!(x.chi2.is_none() && x.note.is_some());
        assert!(render_text(&r).contains("APD"));
    }

    #[test]
    fn too_few_subjects_noted() {
        let r = population_report(vec![subject("only", 1.0)]);
        let t = r.test(Metric::Apd, Comparison::Training).unwrap();
        assert!(t.wilcoxon.is_none());
        assert!(t.note.as_ref().unwrap().contains("5"));
    }

    #[test]
    fn empty_population_has_marker() {
        let r = population_report(vec![summarize_subject("none", &[], TRAINING_BLOCK)]);
        assert!(r.empty);
        assert!(render_text(&r).contains(EMPTY_MARKER));
        let json = serde_json::to_string(&r).unwrap();
        let back: PopulationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}

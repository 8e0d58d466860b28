//! Paired signed-rank tests, reduction percentages and 2x2 chi-square tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Critical chi-square value at alpha = 0.05 with one degree of freedom.
pub const CHI2_CRITICAL_005: f64 = 3.8415;

/// Largest number of nonzero differences for which the exact null
/// distribution is enumerated.
pub const EXACT_LIMIT: usize = 25;

pub const MIN_PAIRS: usize = 5;

/// Per-subject (pre, post) values of one metric.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSamples {
    pre: Vec<f64>,
    post: Vec<f64>,
}

impl PairedSamples {
    pub fn new(pre: Vec<f64>, post: Vec<f64>) -> Result<Self> {
        if pre.len() != post.len() {
            return Err(Error::InvalidParameter(format!(
                "paired samples differ in length: {} pre, {} post",
                pre.len(),
                post.len()
            )));
        }
        if pre.len() < MIN_PAIRS {
            return Err(Error::InsufficientSamples {
                needed: MIN_PAIRS,
                got: pre.len(),
            });
        }
        if pre.iter().chain(&post).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("paired samples must be finite".into()));
        }
        Ok(Self { pre, post })
    }

    pub fn pre(&self) -> &[f64] {
        &self.pre
    }

    pub fn post(&self) -> &[f64] {
        &self.post
    }

    pub fn len(&self) -> usize {
        self.pre.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pre.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of positive differences `post - pre`.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Nonzero differences that were ranked.
    pub n: usize,
    pub zeros_dropped: usize,
    pub method: WilcoxonMethod,
}

/// Midranks (1-based) of `values`, which must be sorted ascending.
fn midranks(sorted: &[f64]) -> Vec<f64> {
    let mut ranks = vec![0.0; sorted.len()];
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        ranks[i..=j].iter_mut().for_each(|x| *x = r);
        i = j + 1;
    }
    ranks
}

/// Wilcoxon signed-rank test on `post - pre`, two-sided.
///
/// Zero differences are dropped and counted. Ties get midranks. Up to
/// [`EXACT_LIMIT`] nonzero differences the null distribution is enumerated
/// exactly (over doubled ranks, so midranks stay integral); beyond that a
/// tie-corrected normal approximation with continuity correction is used.
pub fn wilcoxon_signed_rank(s: &PairedSamples) -> Result<WilcoxonResult> {
    let diffs: Vec<f64> = s.post.iter().zip(&s.pre).map(|(b, a)| b - a).collect();
    let mut nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let zeros_dropped = diffs.len() - nonzero.len();
    if nonzero.is_empty() {
        return Err(Error::UndefinedTest);
    }
    nonzero.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mags: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&mags);
    let n = nonzero.len();
    let statistic: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .fold(0.0, |acc, (_, r)| acc + r);

    if n <= EXACT_LIMIT {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        // counts[k]: number of sign assignments whose positive doubled-rank sum is k.
        let mut counts = vec![0f64; total + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for k in (r..=total).rev() {
                counts[k] += counts[k - r];
            }
        }
        let all = 2f64.powi(n as i32);
        let observed = (2.0 * statistic).round() as usize;
        let lower: f64 = counts[..=observed].iter().sum::<f64>() / all;
        let upper: f64 = counts[observed..].iter().sum::<f64>() / all;
        Ok(WilcoxonResult {
            statistic,
            p_value: (2.0 * lower.min(upper)).min(1.0),
            n,
            zeros_dropped,
            method: WilcoxonMethod::Exact,
        })
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && mags[j + 1] == mags[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = ((statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::standard();
        let p = (2.0 * normal.sf(z)).clamp(f64::MIN_POSITIVE, 1.0);
        Ok(WilcoxonResult {
            statistic,
            p_value: p,
            n,
            zeros_dropped,
            method: WilcoxonMethod::Normal,
        })
    }
}

/// `100 (mean(pre) - mean(post)) / mean(pre)`; an increase is a negative reduction.
pub fn reduction_percent(s: &PairedSamples) -> Result<f64> {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let pre = mean(&s.pre);
    if !(pre > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "reduction needs a positive pre mean, got {pre}"
        )));
    }
    Ok(100.0 * (pre - mean(&s.post)) / pre)
}

/// Subjects classified by whether each of two metrics decreased.
///
/// Rows: first metric decreased / not. Columns: second metric decreased / not.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    pub fn transposed(&self) -> Self {
        Self::new(self.a, self.c, self.b, self.d)
    }
}

/// Pearson chi-square of a 2x2 table without continuity correction.
pub fn chi_square_2x2(t: &ContingencyTable2x2) -> Result<f64> {
    chi_square_2x2_with(t, false)
}

/// Pearson chi-square, optionally with Yates' continuity correction.
pub fn chi_square_2x2_with(t: &ContingencyTable2x2, yates: bool) -> Result<f64> {
    let [a, b, c, d] = [t.a, t.b, t.c, t.d].map(|x| x as f64);
    let n = a + b + c + d;
    let margins = [a + b, c + d, a + c, b + d];
    if n == 0.0 || margins.contains(&0.0) {
        return Err(Error::DegenerateTable);
    }
    let mut cross = (a * d - b * c).abs();
    if yates {
        cross = (cross - n / 2.0).max(0.0);
    }
    Ok(n * cross * cross / margins.iter().product::<f64>())
}

/// Independence is retained when the statistic is below [`CHI2_CRITICAL_005`].
pub fn independent_at_005(chi2: f64) -> bool {
    chi2 < CHI2_CRITICAL_005
}

/// One subject's pre/post values for two metrics; `None` marks missing data.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectChange {
    pub subject: String,
    pub first: Option<(f64, f64)>,
    pub second: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignTable {
    pub table: ContingencyTable2x2,
    /// Fraction of subjects whose first metric decreased.
    pub fraction_first: f64,
    pub fraction_second: f64,
    pub fraction_both: f64,
}

/// Classifies each subject by the sign of `post - pre` for both metrics.
pub fn change_sign_table(changes: &[SubjectChange]) -> Result<SignTable> {
    let missing: Vec<String> = changes
        .iter()
        .filter(|c| c.first.is_none() || c.second.is_none())
        .map(|c| c.subject.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingData(missing));
    }
    if changes.is_empty() {
        return Err(Error::DegenerateTable);
    }
    let mut t = ContingencyTable2x2::default();
    for c in changes {
        let (p1, q1) = c.first.expect("checked above");
        let (p2, q2) = c.second.expect("checked above");
        match (q1 < p1, q2 < p2) {
            (true, true) => t.a += 1,
            (true, false) => t.b += 1,
            (false, true) => t.c += 1,
            (false, false) => t.d += 1,
        }
    }
    let n = t.total() as f64;
    Ok(SignTable {
        table: t,
        fraction_first: (t.a + t.b) as f64 / n,
        fraction_second: (t.a + t.c) as f64 / n,
        fraction_both: t.a as f64 / n,
    })
}

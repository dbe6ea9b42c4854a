//! Latency histograms, slowdown ratios, and single-failure coverage of whole
//! systems under an extra-device budget.
//!
//! Coverage compares two protection schemes. Double modular redundancy (2MR)
//! duplicates one device per extra device. The hybrid scheme spends an extra
//! device on a code-suitable model-parallel stage instead, covering every
//! device of that stage at once, and falls back to duplication elsewhere.

use alloc::vec::Vec;
use core::fmt;

use crate::report::RunReport;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnalyticsError {
    EmptySamples,
    InvalidBinWidth,
    /// A stage is code-suitable but not model-parallel, or has no devices.
    InvalidTopology,
}

impl fmt::Display for AnalyticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalyticsError::EmptySamples => write!(f, "no samples"),
            AnalyticsError::InvalidBinWidth => write!(f, "bin width must be positive"),
            AnalyticsError::InvalidTopology => write!(f, "invalid topology"),
        }
    }
}

impl core::error::Error for AnalyticsError {}

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatencyHistogram {
    pub bin_width_ms: f64,
    /// Count per half-open bin `[k·w, (k+1)·w)`.
    pub bins: Vec<u64>,
    pub total: u64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
}

/// Nearest-rank percentile (no interpolation): the `⌈q·N⌉`-th smallest.
pub fn percentile_nearest_rank(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let exact = q * n as f64;
    let mut rank = exact as usize;
    if (rank as f64) < exact {
        rank += 1; // ceil for positive values
    }
    sorted[rank.clamp(1, n) - 1]
}

/// Bin latency samples with half-open bins `[k·w, (k+1)·w)`.
pub fn histogram(samples: &[f64], bin_width_ms: f64) -> Result<LatencyHistogram, AnalyticsError> {
    if samples.is_empty() {
        return Err(AnalyticsError::EmptySamples);
    }
    if !(bin_width_ms > 0.0) {
        return Err(AnalyticsError::InvalidBinWidth);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite latencies"));

    let max_bin = (sorted[sorted.len() - 1] / bin_width_ms) as usize;
    let mut bins = alloc::vec![0u64; max_bin + 1];
    for &s in samples {
        bins[(s / bin_width_ms) as usize] += 1;
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(LatencyHistogram {
        bin_width_ms,
        bins,
        total: samples.len() as u64,
        mean_ms: mean,
        p50_ms: percentile_nearest_rank(&sorted, 0.50),
        p90_ms: percentile_nearest_rank(&sorted, 0.90),
        p99_ms: percentile_nearest_rank(&sorted, 0.99),
    })
}

/// Ratio of mean completed-request latencies: `after / before`.
pub fn slowdown(before: &RunReport, after: &RunReport) -> Result<f64, AnalyticsError> {
    Ok(mean(&after.latencies_ms())? / mean(&before.latencies_ms())?)
}

pub fn mean(samples: &[f64]) -> Result<f64, AnalyticsError> {
    if samples.is_empty() {
        return Err(AnalyticsError::EmptySamples);
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

// ---------------------------------------------------------------------------
// Coverage
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageTopology {
    pub devices: usize,
    pub model_parallel: bool,
    pub cdc_suitable: bool,
}

/// The stages of a deployed model and how many devices each uses.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemTopology {
    stages: Vec<StageTopology>,
}

impl SystemTopology {
    pub fn new(stages: Vec<StageTopology>) -> Result<Self, AnalyticsError> {
        if stages.is_empty() {
            return Err(AnalyticsError::InvalidTopology);
        }
        for s in &stages {
            if s.devices == 0 || (s.cdc_suitable && !s.model_parallel) {
                return Err(AnalyticsError::InvalidTopology);
            }
        }
        Ok(SystemTopology { stages })
    }

    pub fn stages(&self) -> &[StageTopology] {
        &self.stages
    }

    pub fn total_devices(&self) -> usize {
        self.stages.iter().map(|s| s.devices).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scheme {
    TwoMR,
    CdcPlusTwoMR,
}

/// What one extra device protects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Protection {
    /// Coded device on a suitable stage: covers every device of the stage.
    CodedStage { stage: usize, covers: usize },
    /// Plain duplicate of one device.
    Duplicate { stage: usize, device: usize },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoverageReport {
    pub scheme: Scheme,
    pub budget: usize,
    pub covered: usize,
    pub total: usize,
    /// Fraction of devices whose single failure the protected system
    /// tolerates without losing a request.
    pub fraction: f64,
    pub assignment: Vec<Protection>,
}

/// Protect `topology` with `budget` extra devices under `scheme` and report
/// the single-failure coverage achieved.
///
/// The hybrid assignment is greedy — largest suitable stages first, plain
/// duplication with the remainder — which is optimal here because stage
/// gains are independent. The covered count is then re-derived by
/// enumerating every device against the protected set rather than trusted
/// from the greedy bookkeeping.
pub fn coverage(topology: &SystemTopology, scheme: Scheme, budget: usize) -> CoverageReport {
    let stages = topology.stages();
    let total = topology.total_devices();

    let mut assignment: Vec<Protection> = Vec::new();
    let mut remaining = budget;
    let mut coded_stages: Vec<bool> = alloc::vec![false; stages.len()];

    if scheme == Scheme::CdcPlusTwoMR {
        let mut suitable: Vec<usize> = (0..stages.len())
            .filter(|&i| stages[i].cdc_suitable)
            .collect();
        suitable.sort_by(|&a, &b| {
            stages[b]
                .devices
                .cmp(&stages[a].devices)
                .then(a.cmp(&b))
        });
        for i in suitable {
            if remaining == 0 {
                break;
            }
            assignment.push(Protection::CodedStage {
                stage: i,
                covers: stages[i].devices,
            });
            coded_stages[i] = true;
            remaining -= 1;
        }
    }

    // Duplicate still-unprotected devices with whatever budget is left.
    let mut duplicated: Vec<Vec<bool>> = stages
        .iter()
        .map(|s| alloc::vec![false; s.devices])
        .collect();
    'outer: for (i, s) in stages.iter().enumerate() {
        if coded_stages[i] {
            continue;
        }
        for d in 0..s.devices {
            if remaining == 0 {
                break 'outer;
            }
            assignment.push(Protection::Duplicate { stage: i, device: d });
            duplicated[i][d] = true;
            remaining -= 1;
        }
    }

    // Verify by enumeration: is each device's single failure tolerated?
    let mut covered = 0;
    for (i, s) in stages.iter().enumerate() {
        for d in 0..s.devices {
            if coded_stages[i] || duplicated[i][d] {
                covered += 1;
            }
        }
    }

    CoverageReport {
        scheme,
        budget,
        covered,
        total,
        fraction: covered as f64 / total as f64,
        assignment,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::RequestRecord;
    use alloc::vec;

    fn report_with(latencies: &[f64]) -> RunReport {
        RunReport {
            records: latencies
                .iter()
                .enumerate()
                .map(|(i, &l)| RequestRecord {
                    request: i as u64,
                    latency_ms: l,
                    timed_out: false,
                    stages: vec![],
                    failures_observed: vec![],
                    fallback_switch: None,
                })
                .collect(),
        }
    }

    #[test]
    fn histogram_bins_are_half_open() {
        let h = histogram(&[50.0, 60.0, 200.0], 100.0).unwrap();
        assert_eq!(h.bins, vec![2, 0, 1]);
        assert_eq!(h.total, 3);
    }

    #[test]
    fn single_sample_percentiles_collapse() {
        let h = histogram(&[42.0], 10.0).unwrap();
        assert_eq!(h.p50_ms, 42.0);
        assert_eq!(h.p99_ms, 42.0);
        assert_eq!(h.mean_ms, 42.0);
    }

    #[test]
    fn empty_samples_rejected() {
        assert_eq!(histogram(&[], 10.0), Err(AnalyticsError::EmptySamples));
    }

    #[test]
    fn slowdown_of_identical_reports_is_one() {
        let r = report_with(&[100.0, 120.0]);
        assert_eq!(slowdown(&r, &r).unwrap(), 1.0);
    }

    #[test]
    fn slowdown_matches_mean_ratio() {
        let before = report_with(&[100.0]);
        let after = report_with(&[240.0]);
        assert!((slowdown(&before, &after).unwrap() - 2.4).abs() < 1e-12);
    }

    fn six_device_topology() -> SystemTopology {
        SystemTopology::new(vec![
            StageTopology { devices: 2, model_parallel: true, cdc_suitable: true },
            StageTopology { devices: 2, model_parallel: true, cdc_suitable: true },
            StageTopology { devices: 1, model_parallel: false, cdc_suitable: false },
            StageTopology { devices: 1, model_parallel: false, cdc_suitable: false },
        ])
        .unwrap()
    }

    #[test]
    fn hybrid_covers_both_parallel_stages_with_two_extras() {
        let r = coverage(&six_device_topology(), Scheme::CdcPlusTwoMR, 2);
        assert_eq!((r.covered, r.total), (4, 6));
        assert!((r.fraction - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn duplication_covers_one_device_per_extra() {
        let r = coverage(&six_device_topology(), Scheme::TwoMR, 2);
        assert_eq!((r.covered, r.total), (2, 6));
        assert!((r.fraction - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_covers_nothing() {
        for scheme in [Scheme::TwoMR, Scheme::CdcPlusTwoMR] {
            assert_eq!(coverage(&six_device_topology(), scheme, 0).fraction, 0.0);
        }
    }

    #[test]
    fn full_coverage_budgets() {
        let t = six_device_topology();
        assert_eq!(coverage(&t, Scheme::TwoMR, t.total_devices()).fraction, 1.0);
        // Hybrid: one extra per suitable stage + one per remaining device.
        assert_eq!(coverage(&t, Scheme::CdcPlusTwoMR, 2 + 2).fraction, 1.0);
    }

    #[test]
    fn suitable_requires_model_parallel() {
        assert!(SystemTopology::new(vec![StageTopology {
            devices: 2,
            model_parallel: false,
            cdc_suitable: true,
        }])
        .is_err());
    }

    #[test]
    fn nearest_rank_is_exact_on_small_sets() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_nearest_rank(&sorted, 0.5), 2.0);
        assert_eq!(percentile_nearest_rank(&sorted, 0.9), 4.0);
        assert_eq!(percentile_nearest_rank(&sorted, 0.25), 1.0);
    }
}

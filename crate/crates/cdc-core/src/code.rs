//! Coded redundancy over suitable partitions.
//!
//! A coded device's weight block is the elementwise sum of the base devices'
//! blocks, computed offline. Its partial therefore equals the sum of their
//! partials, so one missing partial is recovered with a single pass of
//! subtractions — no GEMM, no recomputation, no extra communication. Groups
//! covering subsets of devices extend this to most double failures; a peeling
//! decoder resolves any group with exactly one unknown until done or stuck.
//!
//! Coding happens strictly on pre-activation values: devices under a coded
//! plan apply their bias slice but defer the activation to the merge point,
//! and the coded device carries the sum of the covered bias slices so a
//! recovered partial is bias-correct.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::element::Element;
use crate::matrix::Matrix;
use crate::model::WeightStore;
use crate::split::{
    extract_device_task, DeviceTask, InputSelector, PartitionPlan, Placement, SplitError,
    SplitMethod,
};

/// Patterns explored by `decodability` before the guard trips.
pub const DEFAULT_PATTERN_CAP: u64 = 1_000_000;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum CodeError {
    /// The plan's method divides the input, so no shared factor exists for a
    /// coded device to exploit.
    UnsuitableMethod(SplitMethod),
    /// A coded group is empty or names a device outside the plan.
    InvalidGroup { group: usize },
    /// Covered blocks disagree in width (cannot happen for plans built by
    /// `plan_split`; rows may differ by one and are zero-padded).
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// More than one covered device is missing.
    TooManyMissing(Vec<u32>),
    /// Every covered device arrived; the caller should simply merge.
    NothingMissing,
    /// Pattern enumeration would exceed the configured cap.
    ExplosionGuard { patterns: u128, cap: u64 },
    Split(SplitError),
}

impl fmt::Display for CodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeError::UnsuitableMethod(m) => {
                let s = m.suitability();
                write!(
                    f,
                    "{m:?} is not suitable for coded redundancy \
                     (divides input: {}, divides weight: {}, divides output: {})",
                    s.divides_input, s.divides_weight, s.divides_output
                )
            }
            CodeError::InvalidGroup { group } => {
                write!(f, "coded group {group} is empty or out of range")
            }
            CodeError::ShapeMismatch { expected, got } => write!(
                f,
                "block shape mismatch in group: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            CodeError::TooManyMissing(ids) => {
                write!(f, "cannot decode: devices {ids:?} are all missing")
            }
            CodeError::NothingMissing => write!(f, "nothing to decode"),
            CodeError::ExplosionGuard { patterns, cap } => {
                write!(f, "{patterns} failure patterns exceed the cap of {cap}")
            }
            CodeError::Split(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for CodeError {}

impl From<SplitError> for CodeError {
    fn from(e: SplitError) -> Self {
        CodeError::Split(e)
    }
}

// ---------------------------------------------------------------------------
// Coded plans
// ---------------------------------------------------------------------------

/// One coded device: which base devices it covers and its offline-summed
/// weight block and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedDevice<T> {
    pub ordinal: u32,
    pub covers: Vec<u32>,
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

/// A partition plan augmented with coded devices and their recovery map.
///
/// The embedded base plan has its activation moved to the merge point;
/// partials must stay linear (bias included, activation deferred) for
/// subtraction to recover them.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedPlan<T> {
    pub base: PartitionPlan,
    pub coded: Vec<CodedDevice<T>>,
}

impl<T: Element> CodedPlan<T> {
    pub fn groups(&self) -> Vec<Vec<u32>> {
        self.coded.iter().map(|c| c.covers.clone()).collect()
    }

    /// Executable task for coded device `g`, identical in nature to a base
    /// task: same selector, same GEMM, bias applied, activation deferred.
    pub fn coded_task(&self, group: usize) -> DeviceTask<T> {
        let c = &self.coded[group];
        let template = self.base.blocks[c.covers[0] as usize];
        let produces = {
            // A coded partial has the padded shape of its widest covered
            // block; reuse the first covered device's descriptor class.
            use crate::split::Produces;
            match self.base.method {
                SplitMethod::FcOutput => Produces::OutputRows(template),
                SplitMethod::ConvChannel => Produces::OutputChannels(template),
                _ => unreachable!("only suitable methods are coded"),
            }
        };
        let geom = match &self.base.layer.kind {
            crate::model::LayerKind::Conv(g) => Some(*g),
            _ => None,
        };
        DeviceTask {
            device: (self.base.n + group) as u32,
            weights: c.weights.clone(),
            bias: c.bias.clone(),
            selector: InputSelector::All,
            produces,
            activation: self.base.layer.activation,
            apply_bias: true,
            apply_activation: false,
            geom,
        }
    }
}

/// Augment a suitable plan with coded devices, one per group. The group's
/// weight block and bias are summed here, offline; blocks that are one row
/// short (remainder imbalance) are zero-padded to the widest block first.
pub fn encode<T: Element>(
    plan: &PartitionPlan,
    store: &WeightStore<T>,
    groups: &[Vec<u32>],
) -> Result<CodedPlan<T>, CodeError> {
    if !plan.method.suitability().suitable_for_cdc {
        return Err(CodeError::UnsuitableMethod(plan.method));
    }

    let mut base = plan.clone();
    base.merge.activation = Placement::AtMerge;

    let mut coded = Vec::with_capacity(groups.len());
    for (g, covers) in groups.iter().enumerate() {
        if covers.is_empty() {
            return Err(CodeError::InvalidGroup { group: g });
        }
        let mut seen = BTreeSet::new();
        for &d in covers {
            if d as usize >= plan.n || !seen.insert(d) {
                return Err(CodeError::InvalidGroup { group: g });
            }
        }

        let tasks: Vec<DeviceTask<T>> = covers
            .iter()
            .map(|&d| extract_device_task(plan, store, d))
            .collect::<Result<_, _>>()?;

        let rows = tasks.iter().map(|t| t.weights.rows()).max().unwrap();
        let cols = tasks[0].weights.cols();
        for t in &tasks {
            if t.weights.cols() != cols {
                return Err(CodeError::ShapeMismatch {
                    expected: (rows, cols),
                    got: t.weights.shape(),
                });
            }
        }

        let mut weights = Matrix::zeros(rows, cols);
        let mut bias = vec![T::ZERO; rows];
        for t in &tasks {
            weights = weights
                .add(&t.weights.pad_to(rows, cols))
                .expect("padded to common shape");
            for (i, &b) in t.bias.iter().enumerate() {
                bias[i] += b;
            }
        }

        // The sum above is the definition; double-check it element by
        // element in the same order before shipping the block offline.
        debug_assert!({
            let mut ok = true;
            for r in 0..rows {
                for cidx in 0..cols {
                    let mut acc = T::ZERO;
                    for t in &tasks {
                        if r < t.weights.rows() {
                            acc += t.weights.get(r, cidx);
                        }
                    }
                    ok &= acc == weights.get(r, cidx);
                }
            }
            ok
        });

        coded.push(CodedDevice {
            ordinal: g as u32,
            covers: covers.clone(),
            weights,
            bias,
        });
    }

    Ok(CodedPlan { base, coded })
}

/// Fig.-16-style default construction for two coded devices over `n` base
/// devices: two overlapping groups of `⌈n/2⌉ + 1` devices each, anchored at
/// the front and the back.
pub fn default_two_group_construction(n: usize) -> Vec<Vec<u32>> {
    let size = (n.div_ceil(2) + 1).min(n);
    vec![
        (0..size as u32).collect(),
        ((n - size) as u32..n as u32).collect(),
    ]
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

/// A partial recovered by subtraction, with the work it took: the count of
/// the final subtraction pass over one block. Received partials are
/// accumulated as they arrive; no GEMM runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovered<T> {
    pub partial: Matrix<T>,
    pub subtractions: u64,
}

impl<T: Element> CodedPlan<T> {
    /// Recover the single missing member of group `group` from the coded
    /// partial and the received partials (all pre-activation).
    pub fn decode_single(
        &self,
        group: usize,
        coded_partial: &Matrix<T>,
        received: &BTreeMap<u32, Matrix<T>>,
        missing: u32,
    ) -> Result<Recovered<T>, CodeError> {
        let covers = &self.coded[group].covers;
        let absent: Vec<u32> = covers
            .iter()
            .copied()
            .filter(|d| !received.contains_key(d))
            .collect();
        if absent.is_empty() {
            return Err(CodeError::NothingMissing);
        }
        if absent.len() > 1 || absent[0] != missing {
            return Err(CodeError::TooManyMissing(absent));
        }

        let (rows, cols) = coded_partial.shape();
        let mut acc = Matrix::zeros(rows, cols);
        for &d in covers {
            if d == missing {
                continue;
            }
            let p = &received[&d];
            if p.cols() != cols || p.rows() > rows {
                return Err(CodeError::ShapeMismatch {
                    expected: (rows, cols),
                    got: p.shape(),
                });
            }
            acc = acc.add(&p.pad_to(rows, cols)).expect("padded");
        }

        // One pass of subtractions over one block.
        let padded = coded_partial.sub(&acc).expect("same shape");
        let true_rows = self.base.partial_shape(missing as usize).0;
        let partial = if true_rows == rows {
            padded
        } else {
            padded.slice_rows(0..true_rows)
        };
        Ok(Recovered {
            partial,
            subtractions: (rows * cols) as u64,
        })
    }
}

/// One recovery step: `group` had exactly one unknown, `recovered`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeelStep {
    pub group: u32,
    pub recovered: u32,
}

/// Outcome of peeling: either every base partial (received or recovered), or
/// the devices that remained unknown when no group had a single unknown left.
#[derive(Debug, Clone, PartialEq)]
pub enum PeelOutcome<T> {
    Decoded {
        partials: BTreeMap<u32, Matrix<T>>,
        steps: Vec<PeelStep>,
        subtractions: u64,
    },
    Undecodable {
        unrecovered: Vec<u32>,
    },
}

/// Recovery order for the given failure pattern, or `None` when peeling
/// stalls. Shared by the matrix-level decoder and the pattern enumerator so
/// both report identical decodability.
pub fn peel_schedule(
    n: usize,
    groups: &[Vec<u32>],
    failed_base: &BTreeSet<u32>,
    available_coded: &BTreeSet<u32>,
) -> Option<Vec<PeelStep>> {
    debug_assert!(failed_base.iter().all(|&d| (d as usize) < n));
    let mut missing = failed_base.clone();
    let mut spent = BTreeSet::new();
    let mut steps = Vec::new();
    while !missing.is_empty() {
        let mut progressed = false;
        for (g, covers) in groups.iter().enumerate() {
            if !available_coded.contains(&(g as u32)) || spent.contains(&g) {
                continue;
            }
            let unknown: Vec<u32> = covers
                .iter()
                .copied()
                .filter(|d| missing.contains(d))
                .collect();
            if unknown.len() == 1 {
                steps.push(PeelStep {
                    group: g as u32,
                    recovered: unknown[0],
                });
                missing.remove(&unknown[0]);
                spent.insert(g);
                progressed = true;
            }
        }
        if !progressed {
            return None;
        }
    }
    Some(steps)
}

impl<T: Element> CodedPlan<T> {
    /// Peel until every base partial is known or no group has exactly one
    /// unknown. `received_coded` is keyed by group ordinal. Never fails:
    /// `Undecodable` is a value.
    pub fn peel_decode(
        &self,
        received: &BTreeMap<u32, Matrix<T>>,
        received_coded: &BTreeMap<u32, Matrix<T>>,
    ) -> PeelOutcome<T> {
        let failed: BTreeSet<u32> = (0..self.base.n as u32)
            .filter(|d| !received.contains_key(d))
            .collect();
        let available: BTreeSet<u32> = received_coded.keys().copied().collect();
        let groups = self.groups();

        let Some(steps) = peel_schedule(self.base.n, &groups, &failed, &available) else {
            let mut missing = failed.clone();
            // Remove whatever a partial peel could still recover, to report
            // only the truly stuck devices.
            let mut progressed = true;
            let mut spent: BTreeSet<usize> = BTreeSet::new();
            while progressed {
                progressed = false;
                for (g, covers) in groups.iter().enumerate() {
                    if !available.contains(&(g as u32)) || spent.contains(&g) {
                        continue;
                    }
                    let unknown: Vec<u32> = covers
                        .iter()
                        .copied()
                        .filter(|d| missing.contains(d))
                        .collect();
                    if unknown.len() == 1 {
                        missing.remove(&unknown[0]);
                        spent.insert(g);
                        progressed = true;
                    }
                }
            }
            return PeelOutcome::Undecodable {
                unrecovered: missing.into_iter().collect(),
            };
        };

        let mut partials = received.clone();
        let mut subtractions = 0;
        for step in &steps {
            let coded_partial = &received_coded[&step.group];
            let out = self
                .decode_single(step.group as usize, coded_partial, &partials, step.recovered)
                .expect("schedule guarantees exactly one unknown");
            subtractions += out.subtractions;
            partials.insert(step.recovered, out.partial);
        }
        PeelOutcome::Decoded {
            partials,
            steps,
            subtractions,
        }
    }
}

// ---------------------------------------------------------------------------
// Decodability analysis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecodabilityRow {
    pub failures: usize,
    pub total_patterns: u64,
    pub recoverable: u64,
    pub fraction: f64,
}

/// Recoverable fraction per failure count, by exhaustive enumeration of
/// failure patterns over base and coded devices.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecodabilityReport {
    pub base_devices: usize,
    pub groups: Vec<Vec<u32>>,
    pub rows: Vec<DecodabilityRow>,
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    acc
}

fn for_each_combination(items: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 {
        f(&[]);
        return;
    }
    if k > items {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // Advance the rightmost index that can still move.
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + items - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Enumerate every failure pattern of size `0..=max_failures` over the
/// `n + groups` devices and run the peeling schedule on each. Deterministic;
/// guarded against combinatorial explosion by `cap`.
pub fn decodability(
    n: usize,
    groups: &[Vec<u32>],
    max_failures: usize,
    cap: u64,
) -> Result<DecodabilityReport, CodeError> {
    let total = n + groups.len();
    assert!(max_failures <= total, "more failures than devices");

    let worst = (0..=max_failures)
        .map(|f| binomial(total as u64, f as u64))
        .max()
        .unwrap_or(0);
    if worst > cap as u128 {
        return Err(CodeError::ExplosionGuard {
            patterns: worst,
            cap,
        });
    }

    let mut rows = Vec::with_capacity(max_failures + 1);
    for f in 0..=max_failures {
        let mut total_patterns = 0u64;
        let mut recoverable = 0u64;
        for_each_combination(total, f, |failed| {
            total_patterns += 1;
            let failed_base: BTreeSet<u32> = failed
                .iter()
                .filter(|&&d| d < n)
                .map(|&d| d as u32)
                .collect();
            let available_coded: BTreeSet<u32> = (0..groups.len())
                .filter(|g| !failed.contains(&(n + g)))
                .map(|g| g as u32)
                .collect();
            if peel_schedule(n, groups, &failed_base, &available_coded).is_some() {
                recoverable += 1;
            }
        });
        rows.push(DecodabilityRow {
            failures: f,
            total_patterns,
            recoverable,
            fraction: recoverable as f64 / total_patterns as f64,
        });
    }

    Ok(DecodabilityReport {
        base_devices: n,
        groups: groups.to_vec(),
        rows,
    })
}

/// Hardware cost of protecting `n` devices with `coded_groups` coded devices,
/// relative to the unprotected system: `(n + coded) / n`. Double modular
/// redundancy costs 2.0 regardless of `n`.
pub fn hardware_cost(n: usize, coded_groups: usize) -> f64 {
    assert!(n >= 1);
    (n + coded_groups) as f64 / n as f64
}

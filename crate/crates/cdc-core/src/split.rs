//! Layer partitioning: one layer becomes `n` per-device matrix tasks plus a
//! merge rule.
//!
//! Five methods exist. Fully-connected layers split by output rows (each
//! device owns whole output elements) or by input columns (each device owns a
//! partial sum of every output). Convolutions split by filter channel, by
//! output height (spatial tiles with halo input), or by filter depth
//! (outer-product partial sums). Only the methods that leave the input whole
//! and divide the weights admit coded redundancy; see [`suitability`].

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::element::Element;
use crate::matrix::{
    affine_activate, gemm, im2col, im2col_rows, unroll_filters, ActivationKind, ConvGeometry,
    Matrix, MatrixError,
};
use crate::model::{
    layer_bias, LayerInput, LayerKind, LayerSpec, LayerWeights, Shape, WeightStore,
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum SplitError {
    /// Method does not apply to this layer kind.
    IncompatibleMethod {
        method: SplitMethod,
        layer: u32,
    },
    /// More devices than elements along the split axis.
    TooManyDevices {
        requested: usize,
        extent: usize,
    },
    /// Device count of zero.
    InvalidDeviceCount,
    UnknownDevice {
        device: u32,
        devices: usize,
    },
    /// Merge invoked with absent partials; lists the missing device ids.
    MissingPartial(Vec<u32>),
    MissingWeights {
        layer: u32,
    },
    ShapeMismatch {
        expected: Shape,
        got: Shape,
    },
    Matrix(MatrixError),
}

impl fmt::Display for SplitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitError::IncompatibleMethod { method, layer } => {
                write!(f, "{method:?} cannot split layer {layer}")
            }
            SplitError::TooManyDevices { requested, extent } => write!(
                f,
                "{requested} devices requested but the split axis has only {extent} elements"
            ),
            SplitError::InvalidDeviceCount => write!(f, "device count must be >= 1"),
            SplitError::UnknownDevice { device, devices } => {
                write!(f, "device {device} outside plan of {devices} devices")
            }
            SplitError::MissingPartial(ids) => write!(f, "missing partials from devices {ids:?}"),
            SplitError::MissingWeights { layer } => write!(f, "layer {layer}: no weights in store"),
            SplitError::ShapeMismatch { expected, got } => {
                write!(f, "input shape mismatch: expected {expected:?}, got {got:?}")
            }
            SplitError::Matrix(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SplitError {}

impl From<MatrixError> for SplitError {
    fn from(e: MatrixError) -> Self {
        SplitError::Matrix(e)
    }
}

// ---------------------------------------------------------------------------
// Methods and suitability
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SplitMethod {
    FcOutput,
    FcInput,
    ConvChannel,
    ConvSpatial,
    ConvFilter,
}

/// Which operands a method divides, and whether the divided-weights /
/// whole-input structure needed for coded redundancy is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Suitability {
    pub divides_input: bool,
    pub divides_weight: bool,
    pub divides_output: bool,
    pub suitable_for_cdc: bool,
}

/// Suitability of each method for coded redundancy. A coded device recomputes
/// nothing only when the base devices share the whole input and differ purely
/// in their weight block; input-dividing methods leave no shared factor.
pub fn suitability(method: SplitMethod) -> Suitability {
    match method {
        SplitMethod::FcOutput => Suitability {
            divides_input: false,
            divides_weight: true,
            divides_output: true,
            suitable_for_cdc: true,
        },
        SplitMethod::FcInput => Suitability {
            divides_input: true,
            divides_weight: true,
            divides_output: false,
            suitable_for_cdc: false,
        },
        SplitMethod::ConvChannel => Suitability {
            divides_input: false,
            divides_weight: true,
            divides_output: true,
            suitable_for_cdc: true,
        },
        SplitMethod::ConvSpatial => Suitability {
            divides_input: true,
            divides_weight: false,
            divides_output: true,
            suitable_for_cdc: false,
        },
        SplitMethod::ConvFilter => Suitability {
            divides_input: true,
            divides_weight: true,
            divides_output: true,
            suitable_for_cdc: false,
        },
    }
}

impl SplitMethod {
    pub fn suitability(self) -> Suitability {
        suitability(self)
    }

    fn compatible_with(self, kind: &LayerKind) -> bool {
        matches!(
            (self, kind),
            (SplitMethod::FcOutput | SplitMethod::FcInput, LayerKind::Fc { .. })
                | (
                    SplitMethod::ConvChannel | SplitMethod::ConvSpatial | SplitMethod::ConvFilter,
                    LayerKind::Conv(_)
                )
        )
    }
}

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

/// Half-open index range along the split axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockRange {
    pub start: usize,
    pub end: usize,
}

impl BlockRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MergeKind {
    ConcatRows,
    SumPartials,
    ConcatChannels,
    ConcatSpatial,
}

/// Where a step of the layer epilogue runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Placement {
    PerDevice,
    AtMerge,
}

/// How partials combine and where bias/activation are applied.
///
/// Sum-merges force both to the merge point: σ of a sum is not the sum of
/// σ's, and per-device bias would be added once per partial. Concat-merges
/// default to per-device epilogues; coded plans move the activation (but not
/// the bias) to the merge point so partials stay linear for decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MergeSpec {
    pub kind: MergeKind,
    pub activation: Placement,
    pub bias: Placement,
}

/// Which weight/input block each of `n` devices owns and how partials merge.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PartitionPlan {
    pub layer: LayerSpec,
    pub method: SplitMethod,
    pub n: usize,
    pub blocks: Vec<BlockRange>,
    pub merge: MergeSpec,
}

impl PartitionPlan {
    pub fn layer_id(&self) -> u32 {
        self.layer.id
    }

    /// Shape of device `d`'s partial output (pre-merge).
    pub fn partial_shape(&self, device: usize) -> (usize, usize) {
        let blk = self.blocks[device];
        match (&self.layer.kind, self.method) {
            (LayerKind::Fc { .. }, SplitMethod::FcOutput) => (blk.len(), 1),
            (LayerKind::Fc { outputs, .. }, SplitMethod::FcInput) => (*outputs, 1),
            (LayerKind::Conv(g), SplitMethod::ConvChannel) => (blk.len(), g.out_h() * g.out_w()),
            (LayerKind::Conv(g), SplitMethod::ConvSpatial) => (g.filters, blk.len() * g.out_w()),
            (LayerKind::Conv(g), SplitMethod::ConvFilter) => (g.filters, g.out_h() * g.out_w()),
            _ => unreachable!("plan validated at construction"),
        }
    }
}

/// Contiguous near-equal ranges; the first `extent mod n` ranges take the
/// extra element.
pub fn balanced_ranges(extent: usize, n: usize) -> Vec<BlockRange> {
    let base = extent / n;
    let remainder = extent % n;
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for d in 0..n {
        let len = base + usize::from(d < remainder);
        out.push(BlockRange {
            start,
            end: start + len,
        });
        start += len;
    }
    out
}

/// Partition `layer` across `n` devices with the given method.
pub fn plan_split(
    layer: &LayerSpec,
    method: SplitMethod,
    n: usize,
) -> Result<PartitionPlan, SplitError> {
    if n == 0 {
        return Err(SplitError::InvalidDeviceCount);
    }
    if !method.compatible_with(&layer.kind) {
        return Err(SplitError::IncompatibleMethod {
            method,
            layer: layer.id,
        });
    }
    let extent = match (&layer.kind, method) {
        (LayerKind::Fc { outputs, .. }, SplitMethod::FcOutput) => *outputs,
        (LayerKind::Fc { inputs, .. }, SplitMethod::FcInput) => *inputs,
        (LayerKind::Conv(g), SplitMethod::ConvChannel) => g.filters,
        (LayerKind::Conv(g), SplitMethod::ConvSpatial) => {
            g.validate()?;
            g.out_h()
        }
        (LayerKind::Conv(g), SplitMethod::ConvFilter) => g.in_c,
        _ => unreachable!("compatibility checked above"),
    };
    if n > extent {
        return Err(SplitError::TooManyDevices {
            requested: n,
            extent,
        });
    }
    let merge = match method {
        SplitMethod::FcOutput => MergeSpec {
            kind: MergeKind::ConcatRows,
            activation: Placement::PerDevice,
            bias: Placement::PerDevice,
        },
        SplitMethod::FcInput => MergeSpec {
            kind: MergeKind::SumPartials,
            activation: Placement::AtMerge,
            bias: Placement::AtMerge,
        },
        SplitMethod::ConvChannel => MergeSpec {
            kind: MergeKind::ConcatChannels,
            activation: Placement::PerDevice,
            bias: Placement::PerDevice,
        },
        SplitMethod::ConvSpatial => MergeSpec {
            kind: MergeKind::ConcatSpatial,
            activation: Placement::PerDevice,
            bias: Placement::PerDevice,
        },
        SplitMethod::ConvFilter => MergeSpec {
            kind: MergeKind::SumPartials,
            activation: Placement::AtMerge,
            bias: Placement::AtMerge,
        },
    };
    Ok(PartitionPlan {
        layer: layer.clone(),
        method,
        n,
        blocks: balanced_ranges(extent, n),
        merge,
    })
}

// ---------------------------------------------------------------------------
// Device tasks
// ---------------------------------------------------------------------------

/// What part of the layer input a device needs shipped to it.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum InputSelector {
    /// The whole input.
    All,
    /// A contiguous slice of input vector elements.
    RowRange(BlockRange),
    /// Input rows covering this device's output rows plus filter overlap.
    SpatialRegionWithHalo {
        input_rows: BlockRange,
        output_rows: BlockRange,
    },
    /// A contiguous slice of input channels.
    DepthRange(BlockRange),
}

/// What a device's partial represents.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Produces {
    OutputRows(BlockRange),
    PartialSum,
    OutputChannels(BlockRange),
    SpatialTile(BlockRange),
}

/// One device's share of a layer: its weight block (already in GEMM form),
/// its bias slice, the input it needs, and what its partial means.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTask<T> {
    pub device: u32,
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub selector: InputSelector,
    pub produces: Produces,
    pub activation: ActivationKind,
    pub apply_bias: bool,
    pub apply_activation: bool,
    /// Geometry for convolution tasks. For filter splits the channel count
    /// is the device's slice, not the full layer's.
    pub geom: Option<ConvGeometry>,
}

impl<T: Element> DeviceTask<T> {
    /// Apply the input selector: exactly the bytes a coordinator ships.
    pub fn select_input(&self, full: &LayerInput<T>) -> Result<LayerInput<T>, SplitError> {
        match (&self.selector, full) {
            (InputSelector::All, _) => Ok(full.clone()),
            (InputSelector::RowRange(r), LayerInput::Vector(v)) => {
                if r.end > v.len() {
                    return Err(SplitError::ShapeMismatch {
                        expected: Shape::Vector(r.end),
                        got: full.shape(),
                    });
                }
                Ok(LayerInput::Vector(v[r.range()].to_vec()))
            }
            (InputSelector::SpatialRegionWithHalo { input_rows, .. }, LayerInput::Image(t)) => {
                if input_rows.end > t.h() {
                    return Err(SplitError::ShapeMismatch {
                        expected: Shape::Image {
                            h: input_rows.end,
                            w: t.w(),
                            c: t.c(),
                        },
                        got: full.shape(),
                    });
                }
                Ok(LayerInput::Image(t.slice_rows(input_rows.range())))
            }
            (InputSelector::DepthRange(r), LayerInput::Image(t)) => {
                if r.end > t.c() {
                    return Err(SplitError::ShapeMismatch {
                        expected: Shape::Image {
                            h: t.h(),
                            w: t.w(),
                            c: r.end,
                        },
                        got: full.shape(),
                    });
                }
                Ok(LayerInput::Image(t.slice_channels(r.range())))
            }
            _ => Err(SplitError::ShapeMismatch {
                expected: Shape::Vector(0),
                got: full.shape(),
            }),
        }
    }

    /// GEMM flop count (multiply + add) of this task.
    pub fn flops(&self) -> u64 {
        let out_cols = match (&self.produces, &self.geom) {
            (Produces::OutputRows(_), _) | (Produces::PartialSum, None) => 1,
            (Produces::OutputChannels(_), Some(g)) | (Produces::PartialSum, Some(g)) => {
                g.out_h() as u64 * g.out_w() as u64
            }
            (Produces::SpatialTile(rows), Some(g)) => rows.len() as u64 * g.out_w() as u64,
            _ => 1,
        };
        2 * self.weights.rows() as u64 * self.weights.cols() as u64 * out_cols
    }
}

/// Build the task for `device` of `plan`. Conv weights are unrolled to their
/// GEMM form here, so coded summation and execution see plain matrices.
pub fn extract_device_task<T: Element>(
    plan: &PartitionPlan,
    store: &WeightStore<T>,
    device: u32,
) -> Result<DeviceTask<T>, SplitError> {
    if device as usize >= plan.n {
        return Err(SplitError::UnknownDevice {
            device,
            devices: plan.n,
        });
    }
    let blk = plan.blocks[device as usize];
    let entry = store
        .get(plan.layer.id)
        .ok_or(SplitError::MissingWeights {
            layer: plan.layer.id,
        })?;
    let apply_bias = plan.merge.bias == Placement::PerDevice;
    let apply_activation = plan.merge.activation == Placement::PerDevice;

    let (weights, bias, selector, produces, geom) = match (&plan.layer.kind, plan.method) {
        (LayerKind::Fc { outputs, .. }, SplitMethod::FcOutput) => {
            let LayerWeights::Dense(w) = &entry.weights else {
                return Err(SplitError::MissingWeights {
                    layer: plan.layer.id,
                });
            };
            let full_bias = layer_bias(&plan.layer, entry, *outputs);
            (
                w.slice_rows(blk.range()),
                full_bias[blk.range()].to_vec(),
                InputSelector::All,
                Produces::OutputRows(blk),
                None,
            )
        }
        (LayerKind::Fc { .. }, SplitMethod::FcInput) => {
            let LayerWeights::Dense(w) = &entry.weights else {
                return Err(SplitError::MissingWeights {
                    layer: plan.layer.id,
                });
            };
            (
                w.slice_cols(blk.range()),
                vec![],
                InputSelector::RowRange(blk),
                Produces::PartialSum,
                None,
            )
        }
        (LayerKind::Conv(g), SplitMethod::ConvChannel) => {
            let LayerWeights::Filters(f) = &entry.weights else {
                return Err(SplitError::MissingWeights {
                    layer: plan.layer.id,
                });
            };
            let full_bias = layer_bias(&plan.layer, entry, g.filters);
            (
                unroll_filters(&f.slice_filters(blk.range())),
                full_bias[blk.range()].to_vec(),
                InputSelector::All,
                Produces::OutputChannels(blk),
                Some(*g),
            )
        }
        (LayerKind::Conv(g), SplitMethod::ConvSpatial) => {
            let LayerWeights::Filters(f) = &entry.weights else {
                return Err(SplitError::MissingWeights {
                    layer: plan.layer.id,
                });
            };
            // Input rows feeding output rows [blk.start, blk.end), clamped
            // to the real input; reads outside are padding.
            let lo = (blk.start * g.stride).saturating_sub(g.pad);
            let hi = ((blk.end - 1) * g.stride + g.filter)
                .saturating_sub(g.pad)
                .min(g.in_h);
            let input_rows = BlockRange {
                start: lo.min(hi),
                end: hi,
            };
            (
                unroll_filters(f),
                layer_bias(&plan.layer, entry, g.filters),
                InputSelector::SpatialRegionWithHalo {
                    input_rows,
                    output_rows: blk,
                },
                Produces::SpatialTile(blk),
                Some(*g),
            )
        }
        (LayerKind::Conv(g), SplitMethod::ConvFilter) => {
            let LayerWeights::Filters(f) = &entry.weights else {
                return Err(SplitError::MissingWeights {
                    layer: plan.layer.id,
                });
            };
            let sliced = ConvGeometry {
                in_c: blk.len(),
                ..*g
            };
            (
                unroll_filters(&f.slice_channels(blk.range())),
                vec![],
                InputSelector::DepthRange(blk),
                Produces::PartialSum,
                Some(sliced),
            )
        }
        _ => unreachable!("plan validated at construction"),
    };

    Ok(DeviceTask {
        device,
        weights,
        bias,
        selector,
        produces,
        activation: plan.layer.activation,
        apply_bias,
        apply_activation,
        geom,
    })
}

/// Run one device's task against the full layer input. The selector is
/// applied first — the computation sees exactly what would arrive on the
/// wire — then the block GEMM and any per-device epilogue.
pub fn execute_task<T: Element>(
    task: &DeviceTask<T>,
    layer_input: &LayerInput<T>,
) -> Result<Matrix<T>, SplitError> {
    let local = task.select_input(layer_input)?;

    let raw = match (&task.produces, &local) {
        (Produces::OutputRows(_), LayerInput::Vector(v))
        | (Produces::PartialSum, LayerInput::Vector(v)) => {
            if v.len() != task.weights.cols() {
                return Err(SplitError::ShapeMismatch {
                    expected: Shape::Vector(task.weights.cols()),
                    got: local.shape(),
                });
            }
            gemm(&task.weights, &Matrix::column(v))?
        }
        (Produces::OutputChannels(_), LayerInput::Image(t)) => {
            let g = task.geom.as_ref().expect("conv task has geometry");
            gemm(&task.weights, &im2col(t, g)?)?
        }
        (Produces::SpatialTile(out_rows), LayerInput::Image(t)) => {
            let g = task.geom.as_ref().expect("conv task has geometry");
            let InputSelector::SpatialRegionWithHalo { input_rows, .. } = &task.selector else {
                unreachable!("spatial tile task has halo selector");
            };
            let cols = im2col_rows(t, g, out_rows.range(), input_rows.start)?;
            gemm(&task.weights, &cols)?
        }
        (Produces::PartialSum, LayerInput::Image(t)) => {
            let g = task.geom.as_ref().expect("conv task has geometry");
            gemm(&task.weights, &im2col(t, g)?)?
        }
        _ => {
            return Err(SplitError::ShapeMismatch {
                expected: Shape::Vector(0),
                got: local.shape(),
            })
        }
    };

    let bias = if task.apply_bias && !task.bias.is_empty() {
        task.bias.clone()
    } else {
        vec![T::ZERO; raw.rows()]
    };
    let act = if task.apply_activation {
        task.activation
    } else {
        ActivationKind::Identity
    };
    Ok(affine_activate(&raw, &bias, act)?)
}

/// Combine one partial per device into the layer output, applying whatever
/// part of the epilogue the plan deferred to the merge point.
///
/// `bias` is the full layer bias; it is consumed only when the plan placed
/// bias at the merge. `partials` is indexed by plan device ordinal; `None`
/// entries produce `MissingPartial`.
pub fn merge<T: Element>(
    plan: &PartitionPlan,
    partials: &[Option<Matrix<T>>],
    bias: &[T],
    activation: ActivationKind,
) -> Result<Matrix<T>, SplitError> {
    let missing: Vec<u32> = partials
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_none())
        .map(|(d, _)| d as u32)
        .collect();
    if !missing.is_empty() {
        return Err(SplitError::MissingPartial(missing));
    }
    if partials.len() != plan.n {
        return Err(SplitError::MissingPartial(
            (partials.len() as u32..plan.n as u32).collect(),
        ));
    }
    let parts: Vec<&Matrix<T>> = partials.iter().map(|p| p.as_ref().unwrap()).collect();

    let combined = match plan.merge.kind {
        MergeKind::ConcatRows | MergeKind::ConcatChannels => Matrix::concat_rows(&parts)?,
        MergeKind::ConcatSpatial => Matrix::concat_cols(&parts)?,
        MergeKind::SumPartials => {
            let mut acc = parts[0].clone();
            for p in &parts[1..] {
                acc = acc.add(p)?;
            }
            acc
        }
    };

    let bias_vec = if plan.merge.bias == Placement::AtMerge {
        if bias.len() != combined.rows() {
            return Err(SplitError::Matrix(MatrixError::DimensionMismatch {
                expected: (combined.rows(), 1),
                got: (bias.len(), 1),
            }));
        }
        bias.to_vec()
    } else {
        vec![T::ZERO; combined.rows()]
    };
    let act = if plan.merge.activation == Placement::AtMerge {
        activation
    } else {
        ActivationKind::Identity
    };
    Ok(affine_activate(&combined, &bias_vec, act)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightEntry;

    fn fc_layer(m: usize, k: usize) -> LayerSpec {
        LayerSpec {
            id: 0,
            kind: LayerKind::Fc {
                inputs: k,
                outputs: m,
            },
            activation: ActivationKind::Identity,
            has_bias: false,
        }
    }

    fn fc_store(w: Matrix<f64>) -> WeightStore<f64> {
        let mut s = WeightStore::new();
        s.insert(
            0,
            WeightEntry {
                weights: LayerWeights::Dense(w),
                bias: None,
            },
        );
        s
    }

    #[test]
    fn output_split_divides_rows_evenly() {
        let plan = plan_split(&fc_layer(4, 3), SplitMethod::FcOutput, 2).unwrap();
        assert_eq!(plan.blocks, vec![
            BlockRange { start: 0, end: 2 },
            BlockRange { start: 2, end: 4 }
        ]);
        assert_eq!(plan.merge.kind, MergeKind::ConcatRows);
        assert_eq!(plan.merge.activation, Placement::PerDevice);
    }

    #[test]
    fn input_split_divides_columns_and_sums() {
        let plan = plan_split(&fc_layer(4, 4), SplitMethod::FcInput, 2).unwrap();
        assert_eq!(plan.blocks.iter().map(BlockRange::len).sum::<usize>(), 4);
        assert_eq!(plan.merge.kind, MergeKind::SumPartials);
        assert_eq!(plan.merge.activation, Placement::AtMerge);
    }

    #[test]
    fn remainder_goes_to_the_front() {
        let plan = plan_split(&fc_layer(5, 3), SplitMethod::FcOutput, 2).unwrap();
        assert_eq!(plan.blocks[0].len(), 3);
        assert_eq!(plan.blocks[1].len(), 2);
    }

    #[test]
    fn incompatible_method_rejected() {
        assert!(matches!(
            plan_split(&fc_layer(4, 4), SplitMethod::ConvChannel, 2),
            Err(SplitError::IncompatibleMethod { .. })
        ));
    }

    #[test]
    fn too_many_devices_rejected() {
        assert!(matches!(
            plan_split(&fc_layer(3, 4), SplitMethod::FcOutput, 4),
            Err(SplitError::TooManyDevices { .. })
        ));
    }

    #[test]
    fn device_task_owns_its_rows_with_full_input() {
        let w = Matrix::from_rows(&[
            &[1.0, 2.0, 3.0],
            &[4.0, 5.0, 6.0],
            &[7.0, 8.0, 9.0],
            &[10.0, 11.0, 12.0],
        ]);
        let store = fc_store(w.clone());
        let plan = plan_split(&fc_layer(4, 3), SplitMethod::FcOutput, 2).unwrap();
        let task = extract_device_task(&plan, &store, 0).unwrap();
        assert_eq!(task.weights, w.slice_rows(0..2));
        assert_eq!(task.selector, InputSelector::All);
    }

    #[test]
    fn degenerate_single_device_plan_is_whole_layer() {
        let w = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let store = fc_store(w.clone());
        let plan = plan_split(&fc_layer(2, 2), SplitMethod::FcOutput, 1).unwrap();
        let task = extract_device_task(&plan, &store, 0).unwrap();
        assert_eq!(task.weights, w);
    }

    #[test]
    fn unknown_device_rejected() {
        let store = fc_store(Matrix::zeros(4, 3));
        let plan = plan_split(&fc_layer(4, 3), SplitMethod::FcOutput, 2).unwrap();
        assert!(matches!(
            extract_device_task(&plan, &store, 5),
            Err(SplitError::UnknownDevice { device: 5, .. })
        ));
    }

    #[test]
    fn output_split_device_computes_its_rows() {
        let store = fc_store(Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let plan = plan_split(&fc_layer(2, 2), SplitMethod::FcOutput, 2).unwrap();
        let task = extract_device_task(&plan, &store, 0).unwrap();
        let out = execute_task(&task, &LayerInput::Vector(vec![5.0, 6.0])).unwrap();
        assert_eq!(out.data(), &[17.0]);
    }

    #[test]
    fn input_split_zero_slice_gives_zero_partial() {
        let store = fc_store(Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let plan = plan_split(&fc_layer(2, 2), SplitMethod::FcInput, 2).unwrap();
        let task = extract_device_task(&plan, &store, 1).unwrap();
        let out = execute_task(&task, &LayerInput::Vector(vec![5.0, 0.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0]);
    }

    #[test]
    fn merge_concatenates_fc_rows() {
        let plan = plan_split(&fc_layer(2, 2), SplitMethod::FcOutput, 2).unwrap();
        let partials = vec![
            Some(Matrix::column(&[17.0])),
            Some(Matrix::column(&[39.0])),
        ];
        let out = merge(&plan, &partials, &[0.0, 0.0], ActivationKind::Identity).unwrap();
        assert_eq!(out.data(), &[17.0, 39.0]);
    }

    #[test]
    fn sum_merge_applies_relu_after_aggregation() {
        let plan = plan_split(&fc_layer(2, 2), SplitMethod::FcInput, 2).unwrap();
        let x = Matrix::column(&[1.0, -2.0]);
        let neg = Matrix::column(&[-1.0, 2.0]);
        let out = merge(
            &plan,
            &[Some(x), Some(neg)],
            &[0.0, 0.0],
            ActivationKind::Relu,
        )
        .unwrap();
        assert_eq!(out.data(), &[0.0, 0.0]);
    }

    #[test]
    fn merge_reports_missing_devices() {
        let plan = plan_split(&fc_layer(2, 2), SplitMethod::FcOutput, 2).unwrap();
        let partials = vec![Some(Matrix::column(&[17.0])), None];
        match merge(&plan, &partials, &[0.0, 0.0], ActivationKind::Identity) {
            Err(SplitError::MissingPartial(ids)) => assert_eq!(ids, vec![1]),
            other => panic!("expected MissingPartial, got {other:?}"),
        }
    }

    #[test]
    fn suitability_matches_the_published_table() {
        let rows = [
            (SplitMethod::FcOutput, (false, true, true), true),
            (SplitMethod::FcInput, (true, true, false), false),
            (SplitMethod::ConvChannel, (false, true, true), true),
            (SplitMethod::ConvSpatial, (true, false, true), false),
            (SplitMethod::ConvFilter, (true, true, true), false),
        ];
        for (method, (di, dw, dout), ok) in rows {
            let s = suitability(method);
            assert_eq!(
                (s.divides_input, s.divides_weight, s.divides_output, s.suitable_for_cdc),
                (di, dw, dout, ok),
                "{method:?}"
            );
        }
    }

    #[test]
    fn filter_split_slices_depth_of_input_and_filters() {
        use crate::matrix::Tensor4;
        let g = ConvGeometry::new(4, 4, 4, 3, 1, 1, 2).unwrap();
        let layer = LayerSpec {
            id: 0,
            kind: LayerKind::Conv(g),
            activation: ActivationKind::Identity,
            has_bias: false,
        };
        let mut store = WeightStore::<f64>::new();
        store.insert(
            0,
            WeightEntry {
                weights: LayerWeights::Filters(Tensor4::zeros(2, 3, 4)),
                bias: None,
            },
        );
        let plan = plan_split(&layer, SplitMethod::ConvFilter, 2).unwrap();
        let task = extract_device_task(&plan, &store, 0).unwrap();
        assert_eq!(
            task.selector,
            InputSelector::DepthRange(BlockRange { start: 0, end: 2 })
        );
        assert_eq!(task.weights.shape(), (2, 3 * 3 * 2));
        assert_eq!(task.geom.unwrap().in_c, 2);
    }

    #[test]
    fn spatial_halo_covers_filter_overlap() {
        let g = ConvGeometry::new(8, 8, 1, 3, 1, 1, 2).unwrap();
        let layer = LayerSpec {
            id: 0,
            kind: LayerKind::Conv(g),
            activation: ActivationKind::Identity,
            has_bias: false,
        };
        let plan = plan_split(&layer, SplitMethod::ConvSpatial, 2).unwrap();
        // Device 1 owns output rows 4..8; with f=3, p=1 it needs input rows 3..8.
        assert_eq!(plan.blocks[1], BlockRange { start: 4, end: 8 });
        let mut store = WeightStore::<f64>::new();
        store.insert(
            0,
            WeightEntry {
                weights: LayerWeights::Filters(crate::matrix::Tensor4::zeros(2, 3, 1)),
                bias: None,
            },
        );
        let task = extract_device_task(&plan, &store, 1).unwrap();
        assert_eq!(
            task.selector,
            InputSelector::SpatialRegionWithHalo {
                input_rows: BlockRange { start: 3, end: 8 },
                output_rows: BlockRange { start: 4, end: 8 },
            }
        );
    }
}

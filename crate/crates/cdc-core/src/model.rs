//! Layer and model descriptions, the in-memory weight store, and the
//! single-device reference executor.
//!
//! `reference_forward` is the correctness oracle for everything else in the
//! workspace: every split, every coded recovery, and every simulated run is
//! compared against it.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::element::Element;
use crate::matrix::{
    affine_activate, gemm, im2col, unroll_filters, ActivationKind, ConvGeometry, Matrix,
    MatrixError, Tensor3, Tensor4,
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    EmptyModel,
    /// Adjacent layer shapes are incompatible; names the offending layer.
    ShapeMismatch {
        layer: u32,
        expected: Shape,
        got: Shape,
    },
    /// A layer's own parameters are invalid.
    InvalidLayer {
        layer: u32,
        reason: &'static str,
    },
    MissingWeights {
        layer: u32,
    },
    /// Stored weights do not match the layer's declared dimensions.
    WeightShape {
        layer: u32,
    },
    Matrix(MatrixError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::EmptyModel => write!(f, "model has no layers"),
            ModelError::ShapeMismatch {
                layer,
                expected,
                got,
            } => write!(
                f,
                "layer {layer}: shape mismatch, expected {expected:?}, got {got:?}"
            ),
            ModelError::InvalidLayer { layer, reason } => {
                write!(f, "layer {layer}: {reason}")
            }
            ModelError::MissingWeights { layer } => {
                write!(f, "layer {layer}: no weights in store")
            }
            ModelError::WeightShape { layer } => {
                write!(f, "layer {layer}: stored weights have wrong dimensions")
            }
            ModelError::Matrix(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ModelError {}

impl From<MatrixError> for ModelError {
    fn from(e: MatrixError) -> Self {
        ModelError::Matrix(e)
    }
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LayerKind {
    Fc {
        inputs: usize,
        outputs: usize,
    },
    Conv(ConvGeometry),
    Pool {
        window: usize,
        stride: usize,
        kind: PoolKind,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerSpec {
    pub id: u32,
    pub kind: LayerKind,
    pub activation: ActivationKind,
    pub has_bias: bool,
}

/// Shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Shape {
    Vector(usize),
    Image { h: usize, w: usize, c: usize },
}

impl Shape {
    pub fn elements(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Image { h, w, c } => h * w * c,
        }
    }
}

/// A named, validated sequence of layers with derived per-layer shapes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    name: String,
    layers: Vec<LayerSpec>,
    input_shape: Shape,
    output_shapes: Vec<Shape>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Result<Self, ModelError> {
        let first = layers.first().ok_or(ModelError::EmptyModel)?;
        let input_shape = match &first.kind {
            LayerKind::Fc { inputs, .. } => Shape::Vector(*inputs),
            LayerKind::Conv(g) => Shape::Image {
                h: g.in_h,
                w: g.in_w,
                c: g.in_c,
            },
            LayerKind::Pool { .. } => {
                return Err(ModelError::InvalidLayer {
                    layer: first.id,
                    reason: "pool layer cannot start a model; it groups with a parent layer",
                })
            }
        };

        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape;
        for layer in &layers {
            current = derive_output_shape(layer, current)?;
            shapes.push(current);
        }

        Ok(ModelSpec {
            name: name.into(),
            layers,
            input_shape,
            output_shapes: shapes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, id: u32) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    /// Output shape of layer index `idx` (cached at construction).
    pub fn output_shape(&self, idx: usize) -> Shape {
        self.output_shapes[idx]
    }

    pub fn final_shape(&self) -> Shape {
        *self.output_shapes.last().expect("non-empty model")
    }
}

fn derive_output_shape(layer: &LayerSpec, input: Shape) -> Result<Shape, ModelError> {
    match &layer.kind {
        LayerKind::Fc { inputs, outputs } => {
            if *inputs == 0 || *outputs == 0 {
                return Err(ModelError::InvalidLayer {
                    layer: layer.id,
                    reason: "fc dimensions must be >= 1",
                });
            }
            if input.elements() != *inputs {
                return Err(ModelError::ShapeMismatch {
                    layer: layer.id,
                    expected: Shape::Vector(*inputs),
                    got: input,
                });
            }
            Ok(Shape::Vector(*outputs))
        }
        LayerKind::Conv(g) => {
            g.validate().map_err(|_| ModelError::InvalidLayer {
                layer: layer.id,
                reason: "convolution geometry yields no output",
            })?;
            let expected = Shape::Image {
                h: g.in_h,
                w: g.in_w,
                c: g.in_c,
            };
            if input != expected {
                return Err(ModelError::ShapeMismatch {
                    layer: layer.id,
                    expected,
                    got: input,
                });
            }
            Ok(Shape::Image {
                h: g.out_h(),
                w: g.out_w(),
                c: g.filters,
            })
        }
        LayerKind::Pool { window, stride, .. } => {
            let Shape::Image { h, w, c } = input else {
                return Err(ModelError::ShapeMismatch {
                    layer: layer.id,
                    expected: Shape::Image { h: 0, w: 0, c: 0 },
                    got: input,
                });
            };
            if *window == 0 || *stride == 0 || *window > h || *window > w {
                return Err(ModelError::InvalidLayer {
                    layer: layer.id,
                    reason: "pool window must fit inside the input",
                });
            }
            Ok(Shape::Image {
                h: (h - window) / stride + 1,
                w: (w - window) / stride + 1,
                c,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Weight store (in-memory)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights<T> {
    Dense(Matrix<T>),
    Filters(Tensor4<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry<T> {
    pub weights: LayerWeights<T>,
    pub bias: Option<Vec<T>>,
}

/// Per-layer weights keyed by layer id. Extra entries beyond the model's
/// layers are permitted; the host uses reserved ids for offline-summed coded
/// blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore<T> {
    entries: BTreeMap<u32, WeightEntry<T>>,
}

impl<T: Element> WeightStore<T> {
    pub fn new() -> Self {
        WeightStore {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, layer: u32, entry: WeightEntry<T>) {
        self.entries.insert(layer, entry);
    }

    pub fn get(&self, layer: u32) -> Option<&WeightEntry<T>> {
        self.entries.get(&layer)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&u32, &WeightEntry<T>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Check that every weighted layer has an entry of the right dimensions.
    pub fn validate(&self, model: &ModelSpec) -> Result<(), ModelError> {
        for layer in model.layers() {
            match &layer.kind {
                LayerKind::Fc { inputs, outputs } => {
                    let entry = self
                        .get(layer.id)
                        .ok_or(ModelError::MissingWeights { layer: layer.id })?;
                    let LayerWeights::Dense(w) = &entry.weights else {
                        return Err(ModelError::WeightShape { layer: layer.id });
                    };
                    if w.shape() != (*outputs, *inputs) {
                        return Err(ModelError::WeightShape { layer: layer.id });
                    }
                    check_bias(layer, entry, *outputs)?;
                }
                LayerKind::Conv(g) => {
                    let entry = self
                        .get(layer.id)
                        .ok_or(ModelError::MissingWeights { layer: layer.id })?;
                    let LayerWeights::Filters(f) = &entry.weights else {
                        return Err(ModelError::WeightShape { layer: layer.id });
                    };
                    if f.count() != g.filters || f.side() != g.filter || f.channels() != g.in_c {
                        return Err(ModelError::WeightShape { layer: layer.id });
                    }
                    check_bias(layer, entry, g.filters)?;
                }
                LayerKind::Pool { .. } => {}
            }
        }
        Ok(())
    }
}

fn check_bias<T: Element>(
    layer: &LayerSpec,
    entry: &WeightEntry<T>,
    expected: usize,
) -> Result<(), ModelError> {
    match &entry.bias {
        Some(b) if b.len() != expected => Err(ModelError::WeightShape { layer: layer.id }),
        None if layer.has_bias => Err(ModelError::WeightShape { layer: layer.id }),
        _ => Ok(()),
    }
}

/// Bias vector for a layer: stored values, or zeros when the layer has none.
pub fn layer_bias<T: Element>(layer: &LayerSpec, entry: &WeightEntry<T>, rows: usize) -> Vec<T> {
    if layer.has_bias {
        entry.bias.clone().unwrap_or_else(|| vec![T::ZERO; rows])
    } else {
        vec![T::ZERO; rows]
    }
}

// ---------------------------------------------------------------------------
// Reference executor
// ---------------------------------------------------------------------------

/// Value flowing between layers.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerInput<T> {
    Vector(Vec<T>),
    Image(Tensor3<T>),
}

impl<T: Element> LayerInput<T> {
    pub fn shape(&self) -> Shape {
        match self {
            LayerInput::Vector(v) => Shape::Vector(v.len()),
            LayerInput::Image(t) => Shape::Image {
                h: t.h(),
                w: t.w(),
                c: t.c(),
            },
        }
    }

    pub fn elements(&self) -> usize {
        match self {
            LayerInput::Vector(v) => v.len(),
            LayerInput::Image(t) => t.len(),
        }
    }

    /// Flatten in storage order (image layout is `((y·W)+x)·C + c`).
    pub fn flatten(&self) -> Vec<T> {
        match self {
            LayerInput::Vector(v) => v.clone(),
            LayerInput::Image(t) => t.data().to_vec(),
        }
    }
}

/// Reshape a `K × H_o·W_o` convolution output matrix (row = channel) into
/// the `H_o × W_o × K` activation volume.
pub fn conv_matrix_to_tensor<T: Element>(m: &Matrix<T>, out_h: usize, out_w: usize) -> Tensor3<T> {
    debug_assert_eq!(m.cols(), out_h * out_w);
    let k = m.rows();
    let mut t = Tensor3::zeros(out_h, out_w, k);
    for ch in 0..k {
        for oy in 0..out_h {
            for ox in 0..out_w {
                t.set(oy, ox, ch, m.get(ch, oy * out_w + ox));
            }
        }
    }
    t
}

/// Pool an activation volume per channel; no padding.
pub fn pool_tensor<T: Element>(
    input: &Tensor3<T>,
    window: usize,
    stride: usize,
    kind: PoolKind,
) -> Tensor3<T> {
    let out_h = (input.h() - window) / stride + 1;
    let out_w = (input.w() - window) / stride + 1;
    let mut out = Tensor3::zeros(out_h, out_w, input.c());
    let inv = T::from_f64(1.0 / (window * window) as f64);
    for ch in 0..input.c() {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = match kind {
                    PoolKind::Max => input.get(oy * stride, ox * stride, ch),
                    PoolKind::Avg => T::ZERO,
                };
                for wy in 0..window {
                    for wx in 0..window {
                        let v = input.get(oy * stride + wy, ox * stride + wx, ch);
                        match kind {
                            PoolKind::Max => acc = acc.max(v),
                            PoolKind::Avg => acc += v,
                        }
                    }
                }
                if kind == PoolKind::Avg {
                    acc = acc * inv;
                }
                out.set(oy, ox, ch, acc);
            }
        }
    }
    out
}

/// Pool a `K_block × H_o·W_o` convolution output matrix directly. Used by
/// channel-split device tasks, which hold whole channels and can pool before
/// shipping their partial.
pub fn pool_conv_matrix<T: Element>(
    m: &Matrix<T>,
    out_h: usize,
    out_w: usize,
    window: usize,
    stride: usize,
    kind: PoolKind,
) -> Matrix<T> {
    let t = conv_matrix_to_tensor(m, out_h, out_w);
    let pooled = pool_tensor(&t, window, stride, kind);
    let mut out = Matrix::zeros(m.rows(), pooled.h() * pooled.w());
    for ch in 0..m.rows() {
        for oy in 0..pooled.h() {
            for ox in 0..pooled.w() {
                out.set(ch, oy * pooled.w() + ox, pooled.get(oy, ox, ch));
            }
        }
    }
    out
}

/// Run one layer on one device: the undistributed computation.
pub fn forward_layer<T: Element>(
    layer: &LayerSpec,
    entry: Option<&WeightEntry<T>>,
    input: &LayerInput<T>,
) -> Result<LayerInput<T>, ModelError> {
    match &layer.kind {
        LayerKind::Fc { inputs, outputs } => {
            let flat = input.flatten();
            if flat.len() != *inputs {
                return Err(ModelError::ShapeMismatch {
                    layer: layer.id,
                    expected: Shape::Vector(*inputs),
                    got: input.shape(),
                });
            }
            let entry = entry.ok_or(ModelError::MissingWeights { layer: layer.id })?;
            let LayerWeights::Dense(w) = &entry.weights else {
                return Err(ModelError::WeightShape { layer: layer.id });
            };
            let product = gemm(w, &Matrix::column(&flat))?;
            let bias = layer_bias(layer, entry, *outputs);
            let out = affine_activate(&product, &bias, layer.activation)?;
            Ok(LayerInput::Vector(out.data().to_vec()))
        }
        LayerKind::Conv(g) => {
            let LayerInput::Image(t) = input else {
                return Err(ModelError::ShapeMismatch {
                    layer: layer.id,
                    expected: Shape::Image {
                        h: g.in_h,
                        w: g.in_w,
                        c: g.in_c,
                    },
                    got: input.shape(),
                });
            };
            if t.h() != g.in_h || t.w() != g.in_w || t.c() != g.in_c {
                return Err(ModelError::ShapeMismatch {
                    layer: layer.id,
                    expected: Shape::Image {
                        h: g.in_h,
                        w: g.in_w,
                        c: g.in_c,
                    },
                    got: input.shape(),
                });
            }
            let entry = entry.ok_or(ModelError::MissingWeights { layer: layer.id })?;
            let LayerWeights::Filters(f) = &entry.weights else {
                return Err(ModelError::WeightShape { layer: layer.id });
            };
            let cols = im2col(t, g)?;
            let product = gemm(&unroll_filters(f), &cols)?;
            let bias = layer_bias(layer, entry, g.filters);
            let out = affine_activate(&product, &bias, layer.activation)?;
            Ok(LayerInput::Image(conv_matrix_to_tensor(
                &out,
                g.out_h(),
                g.out_w(),
            )))
        }
        LayerKind::Pool {
            window,
            stride,
            kind,
        } => {
            let LayerInput::Image(t) = input else {
                return Err(ModelError::ShapeMismatch {
                    layer: layer.id,
                    expected: Shape::Image { h: 0, w: 0, c: 0 },
                    got: input.shape(),
                });
            };
            Ok(LayerInput::Image(pool_tensor(t, *window, *stride, *kind)))
        }
    }
}

/// Run the whole model on one device and flatten the final activation.
///
/// This is the oracle every distributed execution is checked against.
pub fn reference_forward<T: Element>(
    model: &ModelSpec,
    store: &WeightStore<T>,
    input: &LayerInput<T>,
) -> Result<Vec<T>, ModelError> {
    if input.shape() != model.input_shape() {
        return Err(ModelError::ShapeMismatch {
            layer: model.layers()[0].id,
            expected: model.input_shape(),
            got: input.shape(),
        });
    }
    let mut current = input.clone();
    for layer in model.layers() {
        current = forward_layer(layer, store.get(layer.id), &current)?;
    }
    Ok(current.flatten())
}

//! Shared oracles and generators for the property suites.
//!
//! Everything here is an independent computation path: the direct
//! convolution walks six nested loops over the original tensors, never
//! touching the GEMM lowering it checks.

use cdc_core::element::Element;
use cdc_core::matrix::{ActivationKind, ConvGeometry, Matrix, Tensor3, Tensor4};
use cdc_core::model::{LayerKind, LayerSpec, LayerWeights, WeightEntry, WeightStore};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix<T: Element>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<T> {
    let data = (0..rows * cols)
        .map(|_| T::from_f64(rng.random_range(-1.0..1.0)))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_vec<T: Element>(rng: &mut ChaCha8Rng, len: usize) -> Vec<T> {
    (0..len)
        .map(|_| T::from_f64(rng.random_range(-1.0..1.0)))
        .collect()
}

pub fn random_tensor3<T: Element>(
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
    c: usize,
) -> Tensor3<T> {
    Tensor3::new(h, w, c, random_vec(rng, h * w * c)).unwrap()
}

pub fn random_tensor4<T: Element>(
    rng: &mut ChaCha8Rng,
    k: usize,
    f: usize,
    c: usize,
) -> Tensor4<T> {
    Tensor4::new(k, f, c, random_vec(rng, k * f * f * c)).unwrap()
}

/// Mixed relative/absolute deviation: relative for elements above one,
/// absolute below.
pub fn max_rel_diff<T: Element>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (x, y) = (x.to_f64(), y.to_f64());
            (x - y).abs() / x.abs().max(y.abs()).max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Direct convolution: six nested loops over output position, filter window,
/// and channel, with explicit zero padding. Independent of im2col/GEMM.
pub fn direct_conv<T: Element>(input: &Tensor3<T>, filters: &Tensor4<T>, geom: &ConvGeometry) -> Tensor3<T> {
    let out_h = (input.h() + 2 * geom.pad - geom.filter) / geom.stride + 1;
    let out_w = (input.w() + 2 * geom.pad - geom.filter) / geom.stride + 1;
    let mut out = Tensor3::zeros(out_h, out_w, filters.count());
    for k in 0..filters.count() {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = T::ZERO;
                for fy in 0..geom.filter {
                    for fx in 0..geom.filter {
                        let iy = (oy * geom.stride + fy) as isize - geom.pad as isize;
                        let ix = (ox * geom.stride + fx) as isize - geom.pad as isize;
                        if iy < 0
                            || ix < 0
                            || iy as usize >= input.h()
                            || ix as usize >= input.w()
                        {
                            continue;
                        }
                        for ch in 0..input.c() {
                            let w = filters.filter(k)[(fy * geom.filter + fx) * input.c() + ch];
                            acc += w * input.get(iy as usize, ix as usize, ch);
                        }
                    }
                }
                out.set(oy, ox, k, acc);
            }
        }
    }
    out
}

pub fn fc_layer(id: u32, inputs: usize, outputs: usize, act: ActivationKind, bias: bool) -> LayerSpec {
    LayerSpec {
        id,
        kind: LayerKind::Fc { inputs, outputs },
        activation: act,
        has_bias: bias,
    }
}

pub fn conv_layer(id: u32, geom: ConvGeometry, act: ActivationKind, bias: bool) -> LayerSpec {
    LayerSpec {
        id,
        kind: LayerKind::Conv(geom),
        activation: act,
        has_bias: bias,
    }
}

/// Random weights for a single layer, keyed under its id.
pub fn random_store_for<T: Element>(rng: &mut ChaCha8Rng, layer: &LayerSpec) -> WeightStore<T> {
    let mut store = WeightStore::new();
    match &layer.kind {
        LayerKind::Fc { inputs, outputs } => {
            store.insert(
                layer.id,
                WeightEntry {
                    weights: LayerWeights::Dense(random_matrix(rng, *outputs, *inputs)),
                    bias: layer.has_bias.then(|| random_vec(rng, *outputs)),
                },
            );
        }
        LayerKind::Conv(g) => {
            store.insert(
                layer.id,
                WeightEntry {
                    weights: LayerWeights::Filters(random_tensor4(rng, g.filters, g.filter, g.in_c)),
                    bias: layer.has_bias.then(|| random_vec(rng, g.filters)),
                },
            );
        }
        LayerKind::Pool { .. } => {}
    }
    store
}

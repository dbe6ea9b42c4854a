//! Dense matrices, small tensors, and the convolution-to-GEMM lowering.
//!
//! Fully-connected layers are a single GEMM already; convolutions become one
//! by unrolling the filter bank to a `K × F²C` matrix and the input patches
//! to an `F²C × H_o·W_o` matrix. Every split and every coded task downstream
//! is defined on these dense matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::element::Element;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatrixError {
    /// Operand shapes do not line up for the requested operation.
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// Backing buffer length does not match `rows × cols`.
    DataLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    /// Convolution geometry cannot produce a single output element.
    InvalidGeometry {
        input: usize,
        filter: usize,
        pad: usize,
    },
}

impl fmt::Display for MatrixError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixError::DimensionMismatch { expected, got } => write!(
                f,
                "dimension mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            MatrixError::DataLength { rows, cols, len } => write!(
                f,
                "data length {len} does not match {rows}x{cols}"
            ),
            MatrixError::InvalidGeometry { input, filter, pad } => write!(
                f,
                "invalid geometry: input {input} + 2*pad {pad} smaller than filter {filter}"
            ),
        }
    }
}

impl core::error::Error for MatrixError {}

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Element> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dims must be >= 1");
        Matrix {
            rows,
            cols,
            data: vec![T::ZERO; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(MatrixError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build from row slices; panics on ragged input (test convenience).
    pub fn from_rows(rows: &[&[T]]) -> Self {
        assert!(!rows.is_empty() && !rows[0].is_empty());
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Column vector.
    pub fn column(values: &[T]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::ONE;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy of rows `range` (half-open).
    pub fn slice_rows(&self, range: Range<usize>) -> Matrix<T> {
        assert!(range.start < range.end && range.end <= self.rows);
        Matrix {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    /// Copy of columns `range` (half-open).
    pub fn slice_cols(&self, range: Range<usize>) -> Matrix<T> {
        assert!(range.start < range.end && range.end <= self.cols);
        let mut data = Vec::with_capacity(self.rows * range.len());
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[range.clone()]);
        }
        Matrix {
            rows: self.rows,
            cols: range.len(),
            data,
        }
    }

    pub fn concat_rows(parts: &[&Matrix<T>]) -> Result<Matrix<T>, MatrixError> {
        assert!(!parts.is_empty());
        let cols = parts[0].cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(MatrixError::DimensionMismatch {
                    expected: (p.rows, cols),
                    got: (p.rows, p.cols),
                });
            }
            rows += p.rows;
            data.extend_from_slice(&p.data);
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn concat_cols(parts: &[&Matrix<T>]) -> Result<Matrix<T>, MatrixError> {
        assert!(!parts.is_empty());
        let rows = parts[0].rows;
        let mut cols = 0;
        for p in parts {
            if p.rows != rows {
                return Err(MatrixError::DimensionMismatch {
                    expected: (rows, p.cols),
                    got: (p.rows, p.cols),
                });
            }
            cols += p.cols;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Matrix<T>) -> Result<Matrix<T>, MatrixError> {
        if self.shape() != other.shape() {
            return Err(MatrixError::DimensionMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Elementwise difference; shapes must match.
    pub fn sub(&self, other: &Matrix<T>) -> Result<Matrix<T>, MatrixError> {
        if self.shape() != other.shape() {
            return Err(MatrixError::DimensionMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Zero-extend to `rows × cols` (new cells at the bottom/right).
    pub fn pad_to(&self, rows: usize, cols: usize) -> Matrix<T> {
        assert!(rows >= self.rows && cols >= self.cols);
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..self.rows {
            out.data[r * cols..r * cols + self.cols].copy_from_slice(self.row(r));
        }
        out
    }
}

/// `C = A × B`; deterministic ikj loop, no reassociation across calls.
pub fn gemm<T: Element>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>, MatrixError> {
    if a.cols != b.rows {
        return Err(MatrixError::DimensionMismatch {
            expected: (a.cols, b.rows),
            got: (b.rows, b.cols),
        });
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    let n = b.cols;
    for i in 0..a.rows {
        let a_row = a.row(i);
        let c_row = &mut c.data[i * n..(i + 1) * n];
        for (k, &a_ik) in a_row.iter().enumerate() {
            let b_row = b.row(k);
            for (c_ij, &b_kj) in c_row.iter_mut().zip(b_row) {
                *c_ij += a_ik * b_kj;
            }
        }
    }
    Ok(c)
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ActivationKind {
    Identity,
    Relu,
}

impl ActivationKind {
    pub fn apply<T: Element>(self, x: T) -> T {
        match self {
            ActivationKind::Identity => x,
            ActivationKind::Relu => x.max(T::ZERO),
        }
    }
}

/// `σ(M[i][j] + bias[i])` elementwise. `bias` length must equal `M.rows()`.
pub fn affine_activate<T: Element>(
    m: &Matrix<T>,
    bias: &[T],
    act: ActivationKind,
) -> Result<Matrix<T>, MatrixError> {
    if bias.len() != m.rows() {
        return Err(MatrixError::DimensionMismatch {
            expected: (m.rows(), 1),
            got: (bias.len(), 1),
        });
    }
    let mut out = m.clone();
    for r in 0..out.rows {
        let b = bias[r];
        for v in &mut out.data[r * out.cols..(r + 1) * out.cols] {
            *v = act.apply(*v + b);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Tensors
// ---------------------------------------------------------------------------

/// `H × W × C` activation volume, channels innermost:
/// element `(y, x, c)` lives at `((y·W) + x)·C + c`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tensor3<T> {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<T>,
}

impl<T: Element> Tensor3<T> {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<T>) -> Result<Self, MatrixError> {
        if data.len() != h * w * c {
            return Err(MatrixError::DataLength {
                rows: h * w,
                cols: c,
                len: data.len(),
            });
        }
        Ok(Tensor3 { h, w, c, data })
    }

    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Tensor3 {
            h,
            w,
            c,
            data: vec![T::ZERO; h * w * c],
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, ch: usize) -> T {
        self.data[(y * self.w + x) * self.c + ch]
    }

    pub fn set(&mut self, y: usize, x: usize, ch: usize, v: T) {
        self.data[(y * self.w + x) * self.c + ch] = v;
    }

    /// Copy of input rows `range` (full width, all channels). Rows are
    /// contiguous in this layout, so this is a straight memcpy. The
    /// range may be empty (spatial task whose window is pure padding).
    pub fn slice_rows(&self, range: Range<usize>) -> Tensor3<T> {
        assert!(range.start <= range.end && range.end <= self.h);
        let stride = self.w * self.c;
        Tensor3 {
            h: range.len(),
            w: self.w,
            c: self.c,
            data: self.data[range.start * stride..range.end * stride].to_vec(),
        }
    }

    /// Copy of channels `range` at every spatial position.
    pub fn slice_channels(&self, range: Range<usize>) -> Tensor3<T> {
        assert!(range.start < range.end && range.end <= self.c);
        let mut data = Vec::with_capacity(self.h * self.w * range.len());
        for yx in 0..self.h * self.w {
            let base = yx * self.c;
            data.extend_from_slice(&self.data[base + range.start..base + range.end]);
        }
        Tensor3 {
            h: self.h,
            w: self.w,
            c: range.len(),
            data,
        }
    }
}

/// Filter bank: `K` square filters of side `F` over `C` channels; filter `k`
/// occupies a contiguous `F²C` block in `Tensor3` element order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tensor4<T> {
    count: usize,
    side: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Element> Tensor4<T> {
    pub fn new(count: usize, side: usize, channels: usize, data: Vec<T>) -> Result<Self, MatrixError> {
        if data.len() != count * side * side * channels {
            return Err(MatrixError::DataLength {
                rows: count,
                cols: side * side * channels,
                len: data.len(),
            });
        }
        Ok(Tensor4 {
            count,
            side,
            channels,
            data,
        })
    }

    pub fn zeros(count: usize, side: usize, channels: usize) -> Self {
        Tensor4 {
            count,
            side,
            channels,
            data: vec![T::ZERO; count * side * side * channels],
        }
    }

    /// Number of filters (K).
    pub fn count(&self) -> usize {
        self.count
    }

    /// Filter side (F).
    pub fn side(&self) -> usize {
        self.side
    }

    /// Input channels per filter (C).
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Filter `k` in unrolled (row-major window, channel innermost) order.
    pub fn filter(&self, k: usize) -> &[T] {
        let len = self.side * self.side * self.channels;
        &self.data[k * len..(k + 1) * len]
    }

    /// Copy of filters `range`.
    pub fn slice_filters(&self, range: Range<usize>) -> Tensor4<T> {
        assert!(range.start < range.end && range.end <= self.count);
        let len = self.side * self.side * self.channels;
        Tensor4 {
            count: range.len(),
            side: self.side,
            channels: self.channels,
            data: self.data[range.start * len..range.end * len].to_vec(),
        }
    }

    /// Copy of channels `range` of every filter.
    pub fn slice_channels(&self, range: Range<usize>) -> Tensor4<T> {
        assert!(range.start < range.end && range.end <= self.channels);
        let mut data = Vec::with_capacity(self.count * self.side * self.side * range.len());
        for k in 0..self.count {
            let f = self.filter(k);
            for pos in 0..self.side * self.side {
                let base = pos * self.channels;
                data.extend_from_slice(&f[base + range.start..base + range.end]);
            }
        }
        Tensor4 {
            count: self.count,
            side: self.side,
            channels: range.len(),
            data,
        }
    }
}

// ---------------------------------------------------------------------------
// Convolution lowering
// ---------------------------------------------------------------------------

/// Convolution layer geometry: input dims, filter side, stride, zero padding,
/// filter count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub filter: usize,
    pub stride: usize,
    pub pad: usize,
    pub filters: usize,
}

impl ConvGeometry {
    pub fn new(
        in_h: usize,
        in_w: usize,
        in_c: usize,
        filter: usize,
        stride: usize,
        pad: usize,
        filters: usize,
    ) -> Result<Self, MatrixError> {
        let g = ConvGeometry {
            in_h,
            in_w,
            in_c,
            filter,
            stride,
            pad,
            filters,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), MatrixError> {
        assert!(
            self.filter >= 1 && self.stride >= 1 && self.in_c >= 1 && self.filters >= 1,
            "conv geometry fields must be >= 1"
        );
        conv_output_dim(self.in_h, self.filter, self.pad, self.stride)?;
        conv_output_dim(self.in_w, self.filter, self.pad, self.stride)?;
        Ok(())
    }

    /// Output height; geometry must be valid.
    pub fn out_h(&self) -> usize {
        conv_output_dim(self.in_h, self.filter, self.pad, self.stride).expect("validated geometry")
    }

    /// Output width; geometry must be valid.
    pub fn out_w(&self) -> usize {
        conv_output_dim(self.in_w, self.filter, self.pad, self.stride).expect("validated geometry")
    }

    /// Rows of the unrolled filter/patch matrices (`F²C`).
    pub fn patch_len(&self) -> usize {
        self.filter * self.filter * self.in_c
    }
}

/// `⌊(i − f + 2p) / s⌋ + 1` valid filter positions along one dimension.
pub fn conv_output_dim(i: usize, f: usize, p: usize, s: usize) -> Result<usize, MatrixError> {
    if i + 2 * p < f {
        return Err(MatrixError::InvalidGeometry {
            input: i,
            filter: f,
            pad: p,
        });
    }
    Ok((i + 2 * p - f) / s + 1)
}

/// Unroll input patches into an `F²C × H_o·W_o` matrix.
///
/// Column `j` is the patch for output position `j` (row-major over output
/// positions); within a column the window is walked row-major with channels
/// innermost, matching [`unroll_filters`]. Out-of-bounds reads are zero
/// (padding).
pub fn im2col<T: Element>(input: &Tensor3<T>, geom: &ConvGeometry) -> Result<Matrix<T>, MatrixError> {
    geom.validate()?;
    im2col_rows(input, geom, 0..geom.out_h(), 0)
}

/// [`im2col`] restricted to output rows `out_rows`, reading from an input
/// slab whose first row is global input row `input_row_offset`.
///
/// Spatially split tasks receive only their halo region; any read outside
/// the slab is a padding read and yields zero by construction of the halo.
pub fn im2col_rows<T: Element>(
    input: &Tensor3<T>,
    geom: &ConvGeometry,
    out_rows: Range<usize>,
    input_row_offset: usize,
) -> Result<Matrix<T>, MatrixError> {
    let out_w = conv_output_dim(geom.in_w, geom.filter, geom.pad, geom.stride)?;
    let out_h = conv_output_dim(geom.in_h, geom.filter, geom.pad, geom.stride)?;
    assert!(out_rows.end <= out_h, "output rows out of range");
    assert_eq!(input.w(), geom.in_w, "input width mismatch");
    assert_eq!(input.c(), geom.in_c, "input channel mismatch");

    let f = geom.filter;
    let c = geom.in_c;
    let cols = out_rows.len() * out_w;
    let mut m = Matrix::zeros(f * f * c, cols);

    for (tile_y, oy) in out_rows.enumerate() {
        for ox in 0..out_w {
            let col = tile_y * out_w + ox;
            for fy in 0..f {
                let iy = (oy * geom.stride + fy) as isize - geom.pad as isize;
                for fx in 0..f {
                    let ix = (ox * geom.stride + fx) as isize - geom.pad as isize;
                    let in_bounds = iy >= 0
                        && (iy as usize) < geom.in_h
                        && ix >= 0
                        && (ix as usize) < geom.in_w;
                    if !in_bounds {
                        continue; // zero padding
                    }
                    let local_y = iy as usize - input_row_offset;
                    debug_assert!(local_y < input.h(), "halo region too small");
                    for ch in 0..c {
                        let row = (fy * f + fx) * c + ch;
                        m.set(row, col, input.get(local_y, ix as usize, ch));
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Unroll the filter bank to a `K × F²C` matrix; row `k` is filter `k` in
/// the same element order as [`im2col`] columns.
pub fn unroll_filters<T: Element>(filters: &Tensor4<T>) -> Matrix<T> {
    Matrix {
        rows: filters.count(),
        cols: filters.side() * filters.side() * filters.channels(),
        data: filters.data().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn gemm_2x2_by_2x1() {
        let a = Matrix::from_rows(&[&[1.0f64, 2.0], &[3.0, 4.0]]);
        let b = Matrix::column(&[5.0, 6.0]);
        let c = gemm(&a, &b).unwrap();
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn gemm_identity_passthrough() {
        let b = Matrix::from_rows(&[&[1.0f32, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let c = gemm(&Matrix::identity(3), &b).unwrap();
        assert_eq!(c, b);
    }

    #[test]
    fn gemm_zero_row_annihilates() {
        let a = Matrix::from_rows(&[&[0.0f32, 0.0]]);
        let b = Matrix::column(&[7.0, 9.0]);
        let c = gemm(&a, &b).unwrap();
        assert_eq!(c.data(), &[0.0]);
    }

    #[test]
    fn gemm_rejects_mismatched_inner_dim() {
        let a = Matrix::<f32>::zeros(2, 3);
        let b = Matrix::<f32>::zeros(2, 2);
        assert!(matches!(
            gemm(&a, &b),
            Err(MatrixError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn output_dim_same_padding() {
        assert_eq!(conv_output_dim(5, 3, 1, 1).unwrap(), 5);
    }

    // Oracle: count filter placements whose window fits in the padded input.
    fn enumerate_positions(i: usize, f: usize, p: usize, s: usize) -> usize {
        let padded = i + 2 * p;
        (0..padded)
            .step_by(s)
            .filter(|&start| start + f <= padded)
            .count()
    }

    #[test]
    fn output_dim_matches_position_enumeration() {
        assert_eq!(conv_output_dim(4, 2, 0, 2).unwrap(), 2);
        assert_eq!(conv_output_dim(7, 3, 0, 1).unwrap(), 5);
        for (i, f, p, s) in [(4, 2, 0, 2), (7, 3, 0, 1), (5, 3, 1, 1), (9, 4, 2, 3)] {
            assert_eq!(conv_output_dim(i, f, p, s).unwrap(), enumerate_positions(i, f, p, s));
        }
    }

    #[test]
    fn output_dim_rejects_oversized_filter() {
        assert!(matches!(
            conv_output_dim(2, 5, 1, 1),
            Err(MatrixError::InvalidGeometry { .. })
        ));
    }

    #[test]
    fn im2col_degenerate_1x1() {
        let t = Tensor3::new(1, 1, 1, vec![4.5f32]).unwrap();
        let g = ConvGeometry::new(1, 1, 1, 1, 1, 0, 1).unwrap();
        let m = im2col(&t, &g).unwrap();
        assert_eq!(m.shape(), (1, 1));
        assert_eq!(m.get(0, 0), 4.5);
    }

    #[test]
    fn im2col_single_full_patch() {
        let t = Tensor3::new(3, 3, 1, vec![1.0f32; 9]).unwrap();
        let g = ConvGeometry::new(3, 3, 1, 3, 1, 0, 1).unwrap();
        let m = im2col(&t, &g).unwrap();
        assert_eq!(m.shape(), (9, 1));
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn im2col_zero_padding_corner() {
        // 2x2 input, f=2, s=1, p=1 -> 3x3 output positions, 4x9 matrix.
        let t = Tensor3::new(2, 2, 1, vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let g = ConvGeometry::new(2, 2, 1, 2, 1, 1, 1).unwrap();
        let m = im2col(&t, &g).unwrap();
        assert_eq!(m.shape(), (4, 9));
        // Output (0,0): window covers padding except its bottom-right element.
        let col0: Vec<f32> = (0..4).map(|r| m.get(r, 0)).collect();
        assert_eq!(col0, vec![0.0, 0.0, 0.0, 1.0]);
        // Center output (1,1) sees the whole input.
        let col4: Vec<f32> = (0..4).map(|r| m.get(r, 4)).collect();
        assert_eq!(col4, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn unroll_single_weight() {
        let f = Tensor4::new(1, 1, 1, vec![2.5f32]).unwrap();
        let m = unroll_filters(&f);
        assert_eq!(m.shape(), (1, 1));
        assert_eq!(m.get(0, 0), 2.5);
    }

    #[test]
    fn unroll_ones_bank() {
        let f = Tensor4::new(2, 2, 1, vec![1.0f32; 8]).unwrap();
        let m = unroll_filters(&f);
        assert_eq!(m.shape(), (2, 4));
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn affine_activate_relu_clamps() {
        let m = Matrix::from_rows(&[&[-1.0f32, 2.0]]);
        let out = affine_activate(&m, &[0.0], ActivationKind::Relu).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0]);

        let m = Matrix::from_rows(&[&[3.0f32]]);
        let out = affine_activate(&m, &[-3.0], ActivationKind::Relu).unwrap();
        assert_eq!(out.data(), &[0.0]);
    }

    #[test]
    fn affine_activate_identity_shifts() {
        let m = Matrix::from_rows(&[&[1.0f64, 2.0], &[3.0, 4.0]]);
        let out = affine_activate(&m, &[10.0, 20.0], ActivationKind::Identity).unwrap();
        assert_eq!(out.data(), &[11.0, 12.0, 23.0, 24.0]);
    }

    #[test]
    fn affine_activate_rejects_bad_bias_len() {
        let m = Matrix::<f32>::zeros(2, 2);
        assert!(matches!(
            affine_activate(&m, &[0.0], ActivationKind::Identity),
            Err(MatrixError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tensor_slices() {
        // 2x2x2 volume with distinct values.
        let t = Tensor3::new(2, 2, 2, (0..8).map(|v| v as f32).collect()).unwrap();
        let rows = t.slice_rows(1..2);
        assert_eq!(rows.data(), &[4.0, 5.0, 6.0, 7.0]);
        let chans = t.slice_channels(1..2);
        assert_eq!(chans.data(), &[1.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn tensor4_channel_slice_regathers() {
        // 1 filter, 2x2 window, 2 channels: values interleave per position.
        let f = Tensor4::new(1, 2, 2, (0..8).map(|v| v as f32).collect()).unwrap();
        let s = f.slice_channels(0..1);
        assert_eq!(s.data(), &[0.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn pad_to_extends_with_zeros() {
        let m = Matrix::from_rows(&[&[1.0f32, 2.0]]);
        let p = m.pad_to(2, 2);
        assert_eq!(p.data(), &[1.0, 2.0, 0.0, 0.0]);
    }
}

//! Orthonormal block-wise 2D DCT-II and coefficient scan order.

use crate::error::{Error, Result};

/// Block dimensions: `rows` x `cols` samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub rows: usize,
    pub cols: usize,
}

impl Default for BlockSpec {
    fn default() -> Self {
        Self { rows: 4, cols: 4 }
    }
}

impl BlockSpec {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::invalid(format!("block {rows}x{cols} is smaller than 2x2")));
        }
        Ok(Self { rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Orthonormal DCT-II basis matrix, `m[u * n + x] = c(u) cos(pi (2x+1) u / 2n)`.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for u in 0..n {
        let scale = if u == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for x in 0..n {
            let angle = std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2 * n) as f64;
            m[u * n + x] = scale * angle.cos();
        }
    }
    m
}

/// Precomputed separable 2D transform for one block shape.
#[derive(Debug, Clone)]
pub struct BlockDct {
    spec: BlockSpec,
    row_basis: Vec<f64>,
    col_basis: Vec<f64>,
}

impl BlockDct {
    pub fn new(spec: BlockSpec) -> Self {
        Self {
            spec,
            row_basis: dct_matrix(spec.rows),
            col_basis: dct_matrix(spec.cols),
        }
    }

    pub fn spec(&self) -> BlockSpec {
        self.spec
    }

    /// Basis value of coefficient `(u, v)` at sample `(x, y)`.
    pub fn basis(&self, u: usize, v: usize, x: usize, y: usize) -> f64 {
        self.row_basis[u * self.spec.rows + x] * self.col_basis[v * self.spec.cols + y]
    }

    /// `out[u][v] = sum_xy a_u(x) b_v(y) block[x][y]`, row-major.
    pub fn forward(&self, block: &[f64], out: &mut [f64]) {
        self.apply(block, out, false);
    }

    pub fn inverse(&self, coeffs: &[f64], out: &mut [f64]) {
        self.apply(coeffs, out, true);
    }

    fn apply(&self, input: &[f64], out: &mut [f64], transpose: bool) {
        let (n, m) = (self.spec.rows, self.spec.cols);
        debug_assert_eq!(input.len(), n * m);
        debug_assert_eq!(out.len(), n * m);
        let a = |i: usize, j: usize| {
            if transpose {
                self.row_basis[j * n + i]
            } else {
                self.row_basis[i * n + j]
            }
        };
        let b = |i: usize, j: usize| {
            if transpose {
                self.col_basis[j * m + i]
            } else {
                self.col_basis[i * m + j]
            }
        };
        let mut tmp = [0.0f64; 64];
        let mut tmp_heap;
        let tmp: &mut [f64] = if n * m <= 64 {
            &mut tmp[..n * m]
        } else {
            tmp_heap = vec![0.0; n * m];
            &mut tmp_heap
        };
        // along columns (second index)
        for x in 0..n {
            for v in 0..m {
                let mut acc = 0.0;
                for y in 0..m {
                    acc += b(v, y) * input[x * m + y];
                }
                tmp[x * m + v] = acc;
            }
        }
        // along rows (first index)
        for u in 0..n {
            for v in 0..m {
                let mut acc = 0.0;
                for x in 0..n {
                    acc += a(u, x) * tmp[x * m + v];
                }
                out[u * m + v] = acc;
            }
        }
    }

    /// Worst-case per-sample reconstruction error when every coefficient is
    /// perturbed by at most `coeff_err`.
    pub fn sample_error_bound(&self, coeff_err: f64) -> f64 {
        let (n, m) = (self.spec.rows, self.spec.cols);
        let mut worst = 0.0f64;
        for x in 0..n {
            for y in 0..m {
                let mut s = 0.0;
                for u in 0..n {
                    for v in 0..m {
                        s += self.basis(u, v, x, y).abs();
                    }
                }
                worst = worst.max(s);
            }
        }
        worst * coeff_err
    }
}

pub fn dct_block(block: &[f64], spec: BlockSpec) -> Vec<f64> {
    let mut out = vec![0.0; spec.len()];
    BlockDct::new(spec).forward(block, &mut out);
    out
}

pub fn idct_block(coeffs: &[f64], spec: BlockSpec) -> Vec<f64> {
    let mut out = vec![0.0; spec.len()];
    BlockDct::new(spec).inverse(coeffs, &mut out);
    out
}

/// Block DCT coefficients of a whole plane. Blocks are stored in raster
/// order, each holding `spec.len()` coefficients in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPlane {
    pub spec: BlockSpec,
    /// Source plane dimensions.
    pub height: usize,
    pub width: usize,
    /// Block grid dimensions after replicate padding.
    pub blocks_down: usize,
    pub blocks_across: usize,
    pub coeffs: Vec<f64>,
}

impl CoefficientPlane {
    pub fn block_count(&self) -> usize {
        self.blocks_down * self.blocks_across
    }

    pub fn block(&self, index: usize) -> &[f64] {
        let n = self.spec.len();
        &self.coeffs[index * n..(index + 1) * n]
    }
}

/// Transforms every non-overlapping block of a `height` x `width` plane.
/// Dimensions that are not multiples of the block size are replicate-padded.
pub fn transform_plane(plane: &[f64], height: usize, width: usize, spec: BlockSpec) -> CoefficientPlane {
    transform_plane_with(&BlockDct::new(spec), plane, height, width)
}

pub fn transform_plane_with(dct: &BlockDct, plane: &[f64], height: usize, width: usize) -> CoefficientPlane {
    assert_eq!(plane.len(), height * width);
    let spec = dct.spec();
    let blocks_down = height.div_ceil(spec.rows);
    let blocks_across = width.div_ceil(spec.cols);
    let n = spec.len();
    let mut coeffs = vec![0.0; blocks_down * blocks_across * n];
    let mut block = vec![0.0; n];
    for by in 0..blocks_down {
        for bx in 0..blocks_across {
            for r in 0..spec.rows {
                let row = (by * spec.rows + r).min(height - 1);
                for c in 0..spec.cols {
                    let col = (bx * spec.cols + c).min(width - 1);
                    block[r * spec.cols + c] = plane[row * width + col];
                }
            }
            let idx = by * blocks_across + bx;
            dct.forward(&block, &mut coeffs[idx * n..(idx + 1) * n]);
        }
    }
    CoefficientPlane {
        spec,
        height,
        width,
        blocks_down,
        blocks_across,
        coeffs,
    }
}

/// Inverse of [`transform_plane`], cropping the padding.
pub fn inverse_transform_plane(coeffs: &CoefficientPlane) -> Vec<f64> {
    let dct = BlockDct::new(coeffs.spec);
    blockwise_inverse(&dct, coeffs, false)
}

/// Adjoint of [`transform_plane`]: maps a gradient over coefficients to a
/// gradient over the source plane. Padded samples fold back onto the edge
/// texels they replicate.
pub fn transform_plane_adjoint(dct: &BlockDct, coeff_grad: &CoefficientPlane) -> Vec<f64> {
    blockwise_inverse(dct, coeff_grad, true)
}

fn blockwise_inverse(dct: &BlockDct, coeffs: &CoefficientPlane, accumulate: bool) -> Vec<f64> {
    let spec = coeffs.spec;
    let (height, width) = (coeffs.height, coeffs.width);
    let n = spec.len();
    let mut plane = vec![0.0; height * width];
    let mut block = vec![0.0; n];
    for by in 0..coeffs.blocks_down {
        for bx in 0..coeffs.blocks_across {
            let idx = by * coeffs.blocks_across + bx;
            dct.inverse(coeffs.block(idx), &mut block);
            for r in 0..spec.rows {
                let row = by * spec.rows + r;
                for c in 0..spec.cols {
                    let col = bx * spec.cols + c;
                    let v = block[r * spec.cols + c];
                    if accumulate {
                        plane[row.min(height - 1) * width + col.min(width - 1)] += v;
                    } else if row < height && col < width {
                        plane[row * width + col] = v;
                    }
                }
            }
        }
    }
    plane
}

/// Anti-diagonal scan order starting at DC: `(0,0), (0,1), (1,0), (2,0),
/// (1,1), (0,2), ...` as `(row, col)` pairs.
pub fn zigzag_order(spec: BlockSpec) -> Vec<(usize, usize)> {
    let (n, m) = (spec.rows, spec.cols);
    let mut order = Vec::with_capacity(n * m);
    for s in 0..(n + m - 1) {
        let lo = s.saturating_sub(m - 1);
        let hi = s.min(n - 1);
        if s % 2 == 1 {
            for r in lo..=hi {
                order.push((r, s - r));
            }
        } else {
            for r in (lo..=hi).rev() {
                order.push((r, s - r));
            }
        }
    }
    order
}

/// Reorders a row-major block into zigzag sequence order.
pub fn zigzag_scan(block: &[f64], spec: BlockSpec) -> Vec<f64> {
    zigzag_order(spec).into_iter().map(|(r, c)| block[r * spec.cols + c]).collect()
}

pub fn inverse_zigzag_scan(seq: &[f64], spec: BlockSpec) -> Vec<f64> {
    let mut block = vec![0.0; spec.len()];
    for (&v, (r, c)) in seq.iter().zip(zigzag_order(spec)) {
        block[r * spec.cols + c] = v;
    }
    block
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const S: BlockSpec = BlockSpec { rows: 4, cols: 4 };

    #[test]
    fn constant_block_has_dc_only() {
        let c = dct_block(&[1.0; 16], S);
        assert!((c[0] - 4.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
        assert!(dct_block(&[0.0; 16], S).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dc_only_inverse_is_constant() {
        let mut coeffs = [0.0; 16];
        coeffs[0] = 4.0;
        assert!(idct_block(&coeffs, S).iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(idct_block(&[0.0; 16], S).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn basis_is_orthonormal() {
        for n in [2, 3, 4, 8] {
            let m = dct_matrix(n);
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn matches_unnormalized_definition_up_to_scale() {
        // direct double sum of the cosine definition times the orthonormal factors
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let block: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = dct_block(&block, S);
        let pi = std::f64::consts::PI;
        for u in 0..4 {
            for v in 0..4 {
                let mut acc = 0.0;
                for x in 0..4 {
                    for y in 0..4 {
                        acc += block[x * 4 + y]
                            * (pi * (2 * x + 1) as f64 * u as f64 / 8.0).cos()
                            * (pi * (2 * y + 1) as f64 * v as f64 / 8.0).cos();
                    }
                }
                let cu = if u == 0 { 0.5 } else { (0.5f64).sqrt() };
                let cv = if v == 0 { 0.5 } else { (0.5f64).sqrt() };
                assert!((c[u * 4 + v] - cu * cv * acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (1.7, -0.3);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (cx, cy, cm) = (dct_block(&x, S), dct_block(&y, S), dct_block(&mix, S));
        for i in 0..16 {
            assert!((cm[i] - (a * cx[i] + b * cy[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_of_constant_is_dc_only() {
        let plane = vec![0.7; 8 * 12];
        let t = transform_plane(&plane, 8, 12, S);
        assert_eq!(t.block_count(), 6);
        for b in 0..t.block_count() {
            let blk = t.block(b);
            assert!((blk[0] - 2.8).abs() < 1e-12);
            assert!(blk[1..].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn single_texel_touches_one_block() {
        let mut plane = vec![0.0; 16 * 16];
        plane[5 * 16 + 9] = 1.0;
        let t = transform_plane(&plane, 16, 16, S);
        let touched: Vec<usize> = (0..t.block_count())
            .filter(|&b| t.block(b).iter().any(|v| *v != 0.0))
            .collect();
        assert_eq!(touched, vec![4 + 2]);
    }

    #[test]
    fn plane_round_trip_with_and_without_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (h, w) in [(16, 16), (10, 7), (5, 5)] {
            let plane: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let back = inverse_transform_plane(&transform_plane(&plane, h, w, S));
            let err = plane.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "{h}x{w}: {err}");
        }
    }

    #[test]
    fn plane_transform_equals_independent_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let plane: Vec<f64> = (0..8 * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = transform_plane(&plane, 8, 8, S);
        for by in 0..2 {
            for bx in 0..2 {
                let mut blk = vec![0.0; 16];
                for r in 0..4 {
                    for c in 0..4 {
                        blk[r * 4 + c] = plane[(by * 4 + r) * 8 + bx * 4 + c];
                    }
                }
                assert_eq!(dct_block(&blk, S), t.block(by * 2 + bx));
            }
        }
    }

    #[test]
    fn adjoint_matches_inner_product() {
        // <T x, g> == <x, T* g>, including the padded case
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (h, w) = (6, 9);
        let x: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tx = transform_plane(&x, h, w, S);
        let mut g = tx.clone();
        g.coeffs.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let lhs: f64 = tx.coeffs.iter().zip(&g.coeffs).map(|(a, b)| a * b).sum();
        let adj = transform_plane_adjoint(&BlockDct::new(S), &g);
        let rhs: f64 = x.iter().zip(&adj).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn zigzag_examples() {
        let order = zigzag_order(S);
        assert_eq!(&order[..6], &[(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2)]);
        assert_eq!(order[15], (3, 3));
        let mut seen = [false; 16];
        for (r, c) in order {
            seen[r * 4 + c] = true;
        }
        assert!(seen.iter().all(|&s| s));

        let block: Vec<f64> = (0..16).map(f64::from).collect();
        assert_eq!(inverse_zigzag_scan(&zigzag_scan(&block, S), S), block);

        let mut dc = [0.0; 16];
        dc[0] = 3.0;
        let seq = zigzag_scan(&dc, S);
        assert_eq!(seq[0], 3.0);
        assert!(seq[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zigzag_rectangular_is_a_permutation() {
        let spec = BlockSpec::new(2, 5).unwrap();
        let mut order = zigzag_order(spec);
        assert_eq!(order.len(), 10);
        order.sort();
        order.dedup();
        assert_eq!(order.len(), 10);
    }

    #[test]
    fn sample_bound_of_4x4() {
        let d = BlockDct::new(S);
        // (sum of |a_u(x)| over u) squared, worst sample
        let one_d: f64 = 0.5 + 0.5 + (0.5f64).sqrt() * ((std::f64::consts::PI / 8.0).cos() + (3.0 * std::f64::consts::PI / 8.0).cos());
        assert!((d.sample_error_bound(1.0) - one_d * one_d).abs() < 1e-12);
    }
}

//! Low-level numeric kernels shared by graph operations and layers.

use super::Scalar;

/// `c = alpha * op(a) * op(b) + beta * c` for contiguous row-major buffers.
///
/// `op(a)` is `m×k`; when `ta` is set, `a` is stored as `k×m`. Likewise `op(b)`
/// is `k×n`, stored as `n×k` when `tb` is set. `c` is `m×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<S: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: S,
    a: &[S],
    ta: bool,
    b: &[S],
    tb: bool,
    beta: S,
    c: &mut [S],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for x in c[..m * n].iter_mut() {
            *x = if beta == S::zero() { S::zero() } else { *x * beta };
        }
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays in bounds.
    unsafe {
        S::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Time-axis geometry of a 1D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_len: usize,
    pub out_len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub channels: usize,
}

impl ConvGeom {
    pub fn patch_width(&self) -> usize {
        self.kernel * self.channels
    }

    #[inline]
    fn source(&self, l: usize, j: usize) -> Option<usize> {
        let pos = (l * self.stride + j) as isize - self.pad_left as isize;
        (pos >= 0 && (pos as usize) < self.in_len).then_some(pos as usize)
    }

    /// Unfolds one `in_len × channels` sample into `out_len × (kernel·channels)` patches.
    pub fn im2col<S: Scalar>(&self, x: &[S], cols: &mut [S]) {
        let c = self.channels;
        let pw = self.patch_width();
        for l in 0..self.out_len {
            let row = &mut cols[l * pw..(l + 1) * pw];
            for j in 0..self.kernel {
                let dst = &mut row[j * c..(j + 1) * c];
                match self.source(l, j) {
                    Some(p) => dst.copy_from_slice(&x[p * c..(p + 1) * c]),
                    None => dst.iter_mut().for_each(|v| *v = S::zero()),
                }
            }
        }
    }

    /// Adjoint of [`ConvGeom::im2col`]: scatters patches back, accumulating into `x`.
    pub fn col2im_add<S: Scalar>(&self, cols: &[S], x: &mut [S]) {
        let c = self.channels;
        let pw = self.patch_width();
        for l in 0..self.out_len {
            let row = &cols[l * pw..(l + 1) * pw];
            for j in 0..self.kernel {
                if let Some(p) = self.source(l, j) {
                    let src = &row[j * c..(j + 1) * c];
                    for (d, &s) in x[p * c..(p + 1) * c].iter_mut().zip(src) {
                        *d = *d + s;
                    }
                }
            }
        }
    }
}

pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// `exp` by range reduction to `[-ln2/2, ln2/2]` and a degree-7 polynomial,
/// about 2 ulp over the clamped domain `[-87, 88]`. NaN propagates.
#[inline(always)]
pub(crate) fn exp_f32(x: f32) -> f32 {
    const ROUND: f32 = 12_582_912.0;
    let x = x.clamp(-87.0, 88.0);
    let v = x * std::f32::consts::LOG2_E + ROUND;
    let n = v - ROUND;
    let r = x - n * 0.693_359_4 - n * -2.121_944_4e-4;
    let mut p = 1.987_569_1e-4;
    p = p * r + 1.398_199_9e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 0.5;
    let p = p * r * r + r + 1.0;
    let scale = v.to_bits().wrapping_sub(ROUND.to_bits()).wrapping_add(127) << 23;
    p * f32::from_bits(scale)
}

/// Adds `bias` to each row of a row-major matrix whose width is `bias.len()`.
pub(crate) fn add_rows<S: Scalar>(m: &mut [S], bias: &[S]) {
    for row in m.chunks_exact_mut(bias.len()) {
        for (x, &b) in row.iter_mut().zip(bias) {
            *x = *x + b;
        }
    }
}

/// Accumulates column sums of a row-major matrix into `out`.
pub(crate) fn col_sums_add<S: Scalar>(m: &[S], out: &mut [S]) {
    for row in m.chunks_exact(out.len()) {
        for (o, &x) in out.iter_mut().zip(row) {
            *o = *o + x;
        }
    }
}

pub(crate) fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// Strided matrix view used where rows of a state buffer interleave `h` and `c`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Strided {
    pub rs: usize,
    pub cs: usize,
}

impl Strided {
    pub const fn rows(width: usize) -> Self {
        Self { rs: width, cs: 1 }
    }

    pub const fn cols(height: usize) -> Self {
        Self { rs: 1, cs: height }
    }

    fn span(&self, r: usize, c: usize) -> usize {
        if r == 0 || c == 0 {
            0
        } else {
            (r - 1) * self.rs + (c - 1) * self.cs + 1
        }
    }
}

/// `c = alpha * a * b + beta * c` where `a` is `m×k`, `b` is `k×n` and `c` is `m×n`,
/// each addressed through an explicit stride pair.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_strided<S: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: S,
    a: &[S],
    sa: Strided,
    b: &[S],
    sb: Strided,
    beta: S,
    c: &mut [S],
    sc: Strided,
) {
    assert!(sa.span(m, k) <= a.len() && sb.span(k, n) <= b.len() && sc.span(m, n) <= c.len());
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let x = &mut c[i * sc.rs + j * sc.cs];
                *x = if beta == S::zero() { S::zero() } else { *x * beta };
            }
        }
        return;
    }
    // SAFETY: spans were bounds-checked above.
    unsafe {
        S::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            sa.rs as isize,
            sa.cs as isize,
            b.as_ptr(),
            sb.rs as isize,
            sb.cs as isize,
            beta,
            c.as_mut_ptr(),
            sc.rs as isize,
            sc.cs as isize,
        );
    }
}

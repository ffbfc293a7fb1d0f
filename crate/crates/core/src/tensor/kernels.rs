// Row-major matrix kernels backed by a blocked SIMD dgemm. All of them
// accumulate into `out`.

use matrixmultiply::dgemm;

fn as_isize(x: usize) -> isize {
    x as isize
}

/// out[m×n] += a[m×k] · b[k×n]
pub(crate) fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && out.len() >= m * n);
    // SAFETY: the slices cover every element addressed by the given
    // dimensions and strides, and `out` does not alias the inputs.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            as_isize(k),
            1,
            b.as_ptr(),
            as_isize(n),
            1,
            1.0,
            out.as_mut_ptr(),
            as_isize(n),
            1,
        );
    }
}

/// out[m×k] += g[m×n] · b[k×n]ᵀ
pub(crate) fn gemm_nt(m: usize, n: usize, k: usize, g: &[f64], b: &[f64], out: &mut [f64]) {
    assert!(g.len() >= m * n && b.len() >= k * n && out.len() >= m * k);
    // SAFETY: as above; bᵀ is read through swapped strides.
    unsafe {
        dgemm(
            m,
            n,
            k,
            1.0,
            g.as_ptr(),
            as_isize(n),
            1,
            b.as_ptr(),
            1,
            as_isize(n),
            1.0,
            out.as_mut_ptr(),
            as_isize(k),
            1,
        );
    }
}

/// out[k×n] += a[m×k]ᵀ · g[m×n]
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], g: &[f64], out: &mut [f64]) {
    assert!(a.len() >= m * k && g.len() >= m * n && out.len() >= k * n);
    // SAFETY: as above; aᵀ is read through swapped strides.
    unsafe {
        dgemm(
            k,
            m,
            n,
            1.0,
            a.as_ptr(),
            1,
            as_isize(k),
            g.as_ptr(),
            as_isize(n),
            1,
            1.0,
            out.as_mut_ptr(),
            as_isize(n),
            1,
        );
    }
}

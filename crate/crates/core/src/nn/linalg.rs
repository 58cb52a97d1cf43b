//! Row-major matrix-vector kernels on flat slices. These four loops carry
//! nearly all of the training flops, so they stay iterator-shaped for
//! bounds-check-free codegen.

/// y += A x, with A row-major of shape (y.len(), x.len()).
///
/// The dot product runs on four independent accumulators so the compiler
/// can keep SIMD lanes busy; the summation order is fixed, so results stay
/// deterministic (they just differ from a naive left fold by normal
/// floating-point reassociation).
pub fn matvec_add(a: &[f64], x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(a.len(), x.len() * y.len());
    for (yi, row) in y.iter_mut().zip(a.chunks_exact(x.len())) {
        let mut lanes = [0.0f64; 4];
        let mut row4 = row.chunks_exact(4);
        let mut x4 = x.chunks_exact(4);
        for (r, v) in (&mut row4).zip(&mut x4) {
            lanes[0] += r[0] * v[0];
            lanes[1] += r[1] * v[1];
            lanes[2] += r[2] * v[2];
            lanes[3] += r[3] * v[3];
        }
        let mut tail = 0.0;
        for (aij, xj) in row4.remainder().iter().zip(x4.remainder()) {
            tail += aij * xj;
        }
        *yi += ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + tail;
    }
}

/// dA += dy ⊗ x (outer product), dA row-major (dy.len(), x.len()).
pub fn outer_add(dy: &[f64], x: &[f64], da: &mut [f64]) {
    debug_assert_eq!(da.len(), dy.len() * x.len());
    for (dyi, drow) in dy.iter().zip(da.chunks_exact_mut(x.len())) {
        for (daij, xj) in drow.iter_mut().zip(x) {
            *daij += dyi * xj;
        }
    }
}

/// dx += Aᵀ dy, with A row-major of shape (dy.len(), dx.len()).
pub fn matvec_transpose_add(a: &[f64], dy: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(a.len(), dy.len() * dx.len());
    for (dyi, row) in dy.iter().zip(a.chunks_exact(dx.len())) {
        for (dxj, aij) in dx.iter_mut().zip(row) {
            *dxj += dyi * aij;
        }
    }
}

/// y += a (elementwise).
pub fn add_assign(y: &mut [f64], a: &[f64]) {
    debug_assert_eq!(y.len(), a.len());
    for (yi, ai) in y.iter_mut().zip(a) {
        *yi += ai;
    }
}

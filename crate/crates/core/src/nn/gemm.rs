//! Strided matrix products over flat slices.

/// Row- or column-major view description of an `rows x cols` operand.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MatRef {
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl MatRef {
    pub fn row_major(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major `cols x rows` buffer.
    pub fn transposed(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_stride: 1,
            col_stride: rows,
        }
    }

    fn max_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride + 1
        }
    }
}

/// `c = alpha * a * b + beta * c`, with `c` row-major.
pub(crate) fn gemm(
    alpha: f64,
    a: &[f64],
    ad: MatRef,
    b: &[f64],
    bd: MatRef,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(ad.cols, bd.rows, "inner dimensions differ");
    assert!(a.len() >= ad.max_index(), "lhs buffer too small");
    assert!(b.len() >= bd.max_index(), "rhs buffer too small");
    assert!(c.len() >= ad.rows * bd.cols, "output buffer too small");
    if ad.rows == 0 || bd.cols == 0 {
        return;
    }
    // SAFETY: all three buffers were bounds-checked against their strided extents above.
    unsafe {
        matrixmultiply::dgemm(
            ad.rows,
            ad.cols,
            bd.cols,
            alpha,
            a.as_ptr(),
            ad.row_stride as isize,
            ad.col_stride as isize,
            b.as_ptr(),
            bd.row_stride as isize,
            bd.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            bd.cols as isize,
            1,
        );
    }
}

//! Bounds-checked strided matrix views over `matrixmultiply::dgemm`.

#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> View<'a> {
    /// Row-major `rows x cols` matrix with row stride `rs`.
    pub(crate) fn new(data: &'a [f64], rows: usize, cols: usize, rs: usize) -> Self {
        let v = View { data, rows, cols, rs, cs: 1 };
        v.check();
        v
    }

    pub(crate) fn t(self) -> Self {
        View { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            assert!((self.rows - 1) * self.rs + (self.cols - 1) * self.cs < self.data.len());
        }
    }
}

/// `c = alpha * a * b + beta * c` where `c` is row-major with row stride `rsc`.
pub(crate) fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64], rsc: usize) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "inner dimensions differ");
    if m == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * rsc + n - 1 < c.len());
    if k == 0 {
        for i in 0..m {
            c[i * rsc..i * rsc + n].iter_mut().for_each(|v| *v *= beta);
        }
        return;
    }
    // SAFETY: every index reachable through the strides was bounds-checked
    // above and in `View::check`; `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

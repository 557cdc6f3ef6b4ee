use ndarray::{Array2, Array3};

use crate::real::Real;

/// `(T, B, F)` to `(T * B, F)`, step-major.
pub(crate) fn flatten_steps<F: Real>(x: &Array3<F>) -> Array2<F> {
    let (t, b, f) = x.dim();
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order((t * b, f))
        .expect("standard layout")
}

pub(crate) fn unflatten_steps<F: Real>(x: Array2<F>, t: usize, b: usize) -> Array3<F> {
    let f = x.ncols();
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order((t, b, f))
        .expect("standard layout")
}

/// Swaps the two leading axes, `(A, B, F)` to `(B, A, F)`, into standard layout.
pub(crate) fn swap_leading<F: Real>(x: &Array3<F>) -> Array3<F> {
    x.view().permuted_axes([1, 0, 2]).as_standard_layout().into_owned()
}

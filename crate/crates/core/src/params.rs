/// A bundle of trainable arrays, exposed as flat slices in a fixed order.
///
/// The same type doubles as the gradient container, so `grads.slices()`
/// lines up element for element with `params.slices_mut()`.
pub trait ParamSet<T> {
    fn slices(&self) -> Vec<&[T]>;
    fn slices_mut(&mut self) -> Vec<&mut [T]>;

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

/// Euclidean norm of every slice, for diagnostics.
pub fn slice_norms<T, P>(p: &P) -> Vec<f64>
where
    T: crate::math::Scalar,
    P: ParamSet<T> + ?Sized,
{
    p.slices()
        .iter()
        .map(|s| s.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt())
        .collect()
}

impl<T> ParamSet<T> for ndarray::Array2<T> {
    fn slices(&self) -> Vec<&[T]> {
        vec![self.as_slice().expect("standard layout")]
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.as_slice_mut().expect("standard layout")]
    }
}

/// `dst += src`, slice by slice.
pub(crate) fn accumulate<T, P>(dst: &mut P, src: &P)
where
    T: crate::math::Scalar,
    P: ParamSet<T> + ?Sized,
{
    for (d, s) in dst.slices_mut().into_iter().zip(src.slices()) {
        d.iter_mut().zip(s).for_each(|(a, &b)| *a += b);
    }
}

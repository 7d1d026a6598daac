//! Named parameter traversal shared by the optimizer, checkpoints and gradient checks.

use crate::conv::ConvKernel;
use crate::tensor::Scalar;

pub trait Parameters<T: Scalar> {
    /// Visits every parameter array in a fixed order as `(name, dims, values)`.
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[T]));

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, v| n += v.len());
        n
    }

    fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.visit("", &mut |_, _, v| out.extend_from_slice(v));
        out
    }

    /// Overwrites all values from a slice produced by [`Parameters::flatten`].
    fn load_flat(&mut self, flat: &[T]) {
        let mut at = 0;
        self.visit_mut("", &mut |_, _, v| {
            v.copy_from_slice(&flat[at..at + v.len()]);
            at += v.len();
        });
        assert_eq!(at, flat.len(), "flat parameter length");
    }

    fn fill_zero(&mut self) {
        self.visit_mut("", &mut |_, _, v| v.iter_mut().for_each(|x| *x = T::zero()));
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.fill_zero();
        z
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<T: Scalar> Parameters<T> for ConvKernel<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[T])) {
        f(&join(prefix, "weight"), &self.weight.dims(), self.weight.data());
        f(&join(prefix, "bias"), &[self.bias.len()], &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        let dims = self.weight.dims();
        f(&join(prefix, "weight"), &dims, self.weight.data_mut());
        let n = self.bias.len();
        f(&join(prefix, "bias"), &[n], &mut self.bias);
    }
}

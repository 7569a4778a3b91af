//! Objective functions split across clients.

mod libsvm;
mod logreg;
mod quadratic;

pub use libsvm::{parse_libsvm, parse_libsvm_str, Dataset};
pub use logreg::{logreg_constants, partition_even, synthetic_logreg_dataset, LogRegProblem, DEFAULT_LOGREG_LAMBDA};
pub use quadratic::{gen_quadratic, QuadraticProblem};

use crate::theory::SmoothnessConstants;
use crate::vector::DenseVector;

/// A finite-sum objective `f = (1/n) sum_i f_i`, one term per client.
pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;

    fn n_clients(&self) -> usize;

    /// Writes `grad f_i(x)` into `out`.
    fn client_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]);

    fn client_grad(&self, i: usize, x: &DenseVector) -> DenseVector {
        let mut out = DenseVector::zeros(self.dim());
        self.client_grad_into(i, x.as_slice(), out.as_mut_slice());
        out
    }

    /// `grad f(x)`, summed in client order.
    fn grad(&self, x: &DenseVector) -> DenseVector {
        let mut acc = DenseVector::zeros(self.dim());
        for i in 0..self.n_clients() {
            acc.add_assign(&self.client_grad(i, x));
        }
        acc.scale(1.0 / self.n_clients() as f64);
        acc
    }

    fn value(&self, x: &DenseVector) -> f64;

    fn constants(&self) -> SmoothnessConstants;

    /// Smoothness constant of `f_i`.
    fn client_smoothness(&self, i: usize) -> f64;

    fn x0(&self) -> DenseVector;

    /// `f(x) - f*` computed without cancellation, when the minimum is known.
    fn suboptimality(&self, _x: &DenseVector) -> Option<f64> {
        None
    }

    /// `f*` if known, otherwise a lower bound.
    fn f_lower_bound(&self) -> f64;
}

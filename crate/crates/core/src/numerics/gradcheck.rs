//! Central-finite-difference gradient verification.
//!
//! The checker is the independent oracle for every differentiable block in
//! this crate: it perturbs each parameter coordinate in turn and compares
//! the quotient against the reverse-mode gradient.

use super::graph::{Graph, NodeId};
use super::params::ModelParams;
use super::Result;
use crate::fmath;

/// Maximum relative error between reverse-mode and central finite
/// differences over every coordinate of every parameter.
///
/// `build` must construct the scalar loss from the given parameter store;
/// it is re-invoked for each perturbed evaluation.
pub fn grad_check<F>(params: &ModelParams, epsilon: f64, build: F) -> Result<f64>
where
    F: Fn(&ModelParams, &mut Graph) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let loss = build(params, &mut g)?;
    let grads = g.backward(loss)?;

    let eval = |p: &ModelParams| -> Result<f64> {
        let mut g = Graph::new();
        let loss = build(p, &mut g)?;
        Ok(g.value(loss).item())
    };

    let mut worst = 0.0f64;
    let mut work = params.clone();
    let names: alloc::vec::Vec<alloc::string::String> =
        params.iter().map(|(n, _)| alloc::string::String::from(n)).collect();
    for name in &names {
        let len = params.get(name)?.len();
        for i in 0..len {
            let orig = params.get(name)?.data()[i];
            work.get_mut(name)?.data_mut()[i] = orig + epsilon;
            let up = eval(&work)?;
            work.get_mut(name)?.data_mut()[i] = orig - epsilon;
            let down = eval(&work)?;
            work.get_mut(name)?.data_mut()[i] = orig;

            let fd = (up - down) / (2.0 * epsilon);
            let ad = grads.get(name).map_or(0.0, |t| t.data()[i]);
            let denom = fmath::abs(ad).max(fmath::abs(fd)).max(1e-6);
            worst = worst.max(fmath::abs(ad - fd) / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use crate::rng::Rng;

    #[test]
    fn quadratic_form_is_nearly_exact() {
        // loss = x^T A x with fixed A; gradient is exactly (A + A^T) x, and
        // central differences are exact for quadratics up to roundoff.
        let mut params = ModelParams::new();
        params.insert("x", Tensor::row(&[0.3, -1.2, 0.7])).unwrap();
        let a = Tensor::from_vec(
            3,
            3,
            alloc::vec![1.0, 0.2, -0.5, 0.0, 2.0, 0.3, 0.1, -0.2, 1.5],
        )
        .unwrap();
        let err = grad_check(&params, 1e-5, |p, g| {
            let x = g.param_from(p, "x")?;
            let a = g.input(a.clone())?;
            let ax = g.matmul_tb(x, a)?; // 1x3: x @ A^T ... combined below
            let quad = g.mul(ax, x)?;
            Ok(g.sum_all(quad))
        })
        .unwrap();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn mlp_with_activations() {
        let mut rng = Rng::new(21);
        let mut params = ModelParams::new();
        params.insert("w1", Tensor::xavier(4, 8, &mut rng)).unwrap();
        params.insert("b1", Tensor::zeros(1, 8)).unwrap();
        params.insert("w2", Tensor::xavier(8, 3, &mut rng)).unwrap();
        let x = Tensor::xavier(5, 4, &mut rng);
        let err = grad_check(&params, 1e-5, |p, g| {
            let x = g.input(x.clone())?;
            let w1 = g.param_from(p, "w1")?;
            let b1 = g.param_from(p, "b1")?;
            let w2 = g.param_from(p, "w2")?;
            let h = g.matmul(x, w1)?;
            let h = g.add_row(h, b1)?;
            let h = g.tanh(h);
            let y = g.matmul(h, w2)?;
            let y = g.softplus(y);
            let sm = g.row_softmax(y);
            let pooled = g.row_maxpool(sm);
            Ok(g.sum_all(pooled))
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }
}

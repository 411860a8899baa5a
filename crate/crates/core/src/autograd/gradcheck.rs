//! Central finite-difference checks for the reverse sweep.

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// `|a - n| / (|a| + |n| + 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-8)
}

/// Largest relative error between the analytic gradient of the scalar
/// function `f` at `x` and its central difference with step `eps`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<'_>, Var) -> Result<Var>,
{
    let store = ParamStore::new();
    let eval = |t: Tensor| -> Result<f64> {
        let mut g = Graph::frozen(&store);
        let v = g.constant(t)?;
        let out = f(&mut g, v)?;
        g.value(out).item()
    };

    let mut g = Graph::new(&store);
    let leaf = g.leaf(x.clone())?;
    let out = f(&mut g, leaf)?;
    let grads = g.backward(out)?;
    let analytic = grads
        .wrt(leaf)
        .ok_or_else(|| Error::Contract("input leaf lost its gradient".into()))?
        .clone();

    let mut worst = 0.0f64;
    for k in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[k] += eps;
        let mut minus = x.clone();
        minus.data_mut()[k] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.data()[k], numeric));
    }
    Ok(worst)
}

/// One parameter coordinate compared by [`param_finite_diff`].
#[derive(Clone, Copy, Debug)]
pub struct CoordCheck {
    pub param: ParamId,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl CoordCheck {
    pub fn relative_error(&self) -> f64 {
        relative_error(self.analytic, self.numeric)
    }
}

/// Compares analytic parameter gradients of the loss built by `f` against
/// central differences at the given `(parameter, flat index)` coordinates.
/// The store is perturbed in place and restored.
pub fn param_finite_diff<F>(
    store: &mut ParamStore,
    coords: &[(ParamId, usize)],
    eps: f64,
    f: F,
) -> Result<Vec<CoordCheck>>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let grads = {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        g.backward(loss)?
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::frozen(store);
        let loss = f(&mut g)?;
        g.value(loss).item()
    };

    let mut out = Vec::with_capacity(coords.len());
    for &(param, index) in coords {
        let analytic = grads.param(param).map_or(0.0, |t| t.data()[index]);
        let original = store.value(param).data()[index];
        store.get_mut(param).value.data_mut()[index] = original + eps;
        let up = eval(store);
        store.get_mut(param).value.data_mut()[index] = original - eps;
        let down = eval(store);
        store.get_mut(param).value.data_mut()[index] = original;
        let numeric = (up? - down?) / (2.0 * eps);
        out.push(CoordCheck {
            param,
            index,
            analytic,
            numeric,
        });
    }
    Ok(out)
}

use crate::error::Result;
use crate::tensor::Tensor;

use super::graph::{Graph, Var};
use super::params::{BoundParams, ParamStore};

/// Denominator floor for relative errors, so coordinates with vanishing
/// gradients are judged on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

fn summarize(analytic: Vec<f64>, numeric: Vec<f64>) -> GradCheck {
    let max_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max);
    GradCheck { max_rel_error, analytic, numeric }
}

fn eval_scalar<F>(f: &F, input: &Tensor<f64>) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let y = f(&mut g, x)?;
    Ok(g.data(y)?[0])
}

/// Central-difference check of a scalar-valued composition over every input
/// coordinate.
pub fn finite_diff_gradcheck<F>(f: F, input: &Tensor<f64>, h: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..input.numel()).collect();
    gradcheck_coords(f, input, h, &coords)
}

/// Same as [`finite_diff_gradcheck`] restricted to `coords`, which lets
/// callers leave out non-differentiable points.
pub fn gradcheck_coords<F>(f: F, input: &Tensor<f64>, h: f64, coords: &[usize]) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.param(input.clone());
    let y = f(&mut g, x)?;
    g.backward(y)?;
    let grad = g.grad(x).unwrap_or_else(|| Tensor::zeros(input.shape()));
    let mut analytic = Vec::with_capacity(coords.len());
    let mut numeric = Vec::with_capacity(coords.len());
    for &i in coords {
        let mut plus = input.clone();
        plus.data_mut()[i] += h;
        let mut minus = input.clone();
        minus.data_mut()[i] -= h;
        numeric.push((eval_scalar(&f, &plus)? - eval_scalar(&f, &minus)?) / (2.0 * h));
        analytic.push(grad.data()[i]);
    }
    Ok(summarize(analytic, numeric))
}

/// Central-difference check of a loss over selected parameter coordinates.
pub fn gradcheck_params<F>(store: &ParamStore<f64>, f: F, coords: &[(String, usize)], h: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &BoundParams) -> Result<Var>,
{
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let bound = s.bind_frozen(&mut g);
        let y = f(&mut g, &bound)?;
        Ok(g.data(y)?[0])
    };
    let mut g = Graph::new();
    let bound = store.bind(&mut g);
    let y = f(&mut g, &bound)?;
    g.backward(y)?;
    let mut analytic = Vec::with_capacity(coords.len());
    let mut numeric = Vec::with_capacity(coords.len());
    let mut work = store.clone();
    for (name, i) in coords {
        let var = bound.get(name)?;
        analytic.push(g.grad(var).map(|t| t.data()[*i]).unwrap_or(0.0));
        let orig = store.get(name).expect("bound above").data()[*i];
        work.get_mut(name).unwrap().data_mut()[*i] = orig + h;
        let fp = eval(&work)?;
        work.get_mut(name).unwrap().data_mut()[*i] = orig - h;
        let fm = eval(&work)?;
        work.get_mut(name).unwrap().data_mut()[*i] = orig;
        numeric.push((fp - fm) / (2.0 * h));
    }
    Ok(summarize(analytic, numeric))
}

use super::{Graph, Tensor, Var};
use crate::{Error, Result};

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Worst relative error between reverse-mode and central-difference gradients of the
/// scalar function `f` at `x`, over every coordinate of `x`.
///
/// `f` receives a fresh graph and the leaf holding `x`, and returns its scalar output.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    grad_check_coords(f, x, step, &coords)
}

/// Like [`grad_check`] but only probes the listed coordinates.
pub fn grad_check_coords<F>(f: F, x: &Tensor, step: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let leaf = g.param(x);
    let out = f(&mut g, leaf)?;
    if g.value(out).len() != 1 {
        return Err(Error::invalid("grad_check needs a scalar-valued function"));
    }
    g.backward(out)?;
    let zeros = vec![0.0; x.len()];
    let analytic = g.grad(leaf).unwrap_or(&zeros).to_vec();

    let eval = |probe: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let leaf = g.constant(probe.clone());
        let out = f(&mut g, leaf)?;
        Ok(g.value(out).item())
    };

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for &i in coords {
        let orig = x.values()[i];
        probe.values_mut()[i] = orig + step;
        let plus = eval(&probe)?;
        probe.values_mut()[i] = orig - step;
        let minus = eval(&probe)?;
        probe.values_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

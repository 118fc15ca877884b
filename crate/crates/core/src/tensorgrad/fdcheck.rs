//! Central-finite-difference verification of analytic gradients.

use super::{GradError, Graph, Tensor, Var};

/// Max over all coordinates of `|analytic - numeric| / max(1, |numeric|)`,
/// central differences with step `h` (1e-4 is the conventional choice).
///
/// `f` must build a scalar loss from its input variable.
pub fn finite_diff_check(
    f: impl Fn(&mut Graph, Var) -> Result<Var, GradError>,
    x: &Tensor,
    h: f64,
) -> Result<f64, GradError> {
    let coords: Vec<usize> = (0..x.len()).collect();
    finite_diff_check_coords(f, x, h, &coords)
}

/// Same as [`finite_diff_check`] but probing only the listed coordinates —
/// for large graphs where a full per-coordinate sweep is wasteful.
pub fn finite_diff_check_coords(
    f: impl Fn(&mut Graph, Var) -> Result<Var, GradError>,
    x: &Tensor,
    h: f64,
    coords: &[usize],
) -> Result<f64, GradError> {
    let eval = |t: Tensor| -> Result<f64, GradError> {
        let mut g = Graph::new();
        let v = g.input(t, false);
        let out = f(&mut g, v)?;
        if g.value(out).len() != 1 {
            return Err(GradError::Contract(
                "finite_diff_check requires a scalar-valued function".into(),
            ));
        }
        g.value(out).item()
    };

    // analytic gradient
    let mut g = Graph::new();
    let v = g.input(x.clone(), true);
    let out = f(&mut g, v)?;
    if g.value(out).len() != 1 {
        return Err(GradError::Contract(
            "finite_diff_check requires a scalar-valued function".into(),
        ));
    }
    let grads = g.backward(out)?;
    let analytic = grads
        .wrt(v)
        .ok_or_else(|| GradError::Contract("input received no gradient".into()))?
        .clone();

    let mut worst = 0.0f64;
    for &i in coords {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

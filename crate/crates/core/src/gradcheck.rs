//! Central finite-difference gradient checking.

use crate::autodiff::{ParamSet, Tape, Var};
use crate::error::{Error, Result};

/// Compare the tape's analytic gradient of `f` against central differences.
///
/// `f` builds a scalar loss on the given tape from the bound parameter vars.
/// Returns the maximum over every scalar parameter of
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn finite_diff_check<F>(f: F, params: &ParamSet, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {h} outside [1e-7, 1e-3]"
        )));
    }

    let mut tape = Tape::new();
    let vars = params.bind(&mut tape)?;
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params.iter())
        .map(|(&v, p)| {
            grads
                .get(v)
                .map_or_else(|| vec![0.0; p.value.len()], <[f64]>::to_vec)
        })
        .collect();

    let eval = |ps: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = ps.bind_frozen(&mut tape)?;
        let loss = f(&mut tape, &vars)?;
        let v = tape.value(loss)?.item();
        if !v.is_finite() {
            return Err(Error::NonFinite {
                op: "finite_diff_check".into(),
            });
        }
        Ok(v)
    };

    let mut work = params.clone();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        for (ei, &a) in grad.iter().enumerate() {
            let orig = work.get(pi).value.values()[ei];
            work.value_mut(pi).values_mut()[ei] = orig + h;
            let up = eval(&work)?;
            work.value_mut(pi).values_mut()[ei] = orig - h;
            let down = eval(&work)?;
            work.value_mut(pi).values_mut()[ei] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

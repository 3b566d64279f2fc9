use super::{ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Worst per-entry relative error between reverse-mode gradients and central
/// differences over every parameter entry in `params`.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`. `build` must be a pure
/// function of the parameter values.
pub fn grad_check<F>(params: &mut ParamStore, step: f64, mut build: F) -> Result<f64>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::invalid(format!("grad_check step must be positive, got {step}")));
    }
    params.zero_grad();
    {
        let mut tape = Tape::new();
        let loss = build(&mut tape, params)?;
        if !tape.scalar(loss)?.is_finite() {
            return Err(Error::NonFinite("grad_check loss"));
        }
        tape.backward(loss, params)?;
    }
    let analytic: Vec<Vec<f64>> = params.iter().map(|(_, p)| p.grad.data().to_vec()).collect();

    let mut worst = 0.0f64;
    let ids: Vec<_> = params.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        for e in 0..params.value(id).len() {
            let orig = params.value(id).data()[e];
            params.get_mut(id).value.data_mut()[e] = orig + step;
            let plus = eval(&mut build, params)?;
            params.get_mut(id).value.data_mut()[e] = orig - step;
            let minus = eval(&mut build, params)?;
            params.get_mut(id).value.data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[k][e];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

fn eval<F>(build: &mut F, params: &ParamStore) -> Result<f64>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    let v = tape.scalar(loss)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("grad_check loss"));
    }
    Ok(v)
}

use super::{AutogradError, Result, Tape, Tensor, Var};

/// Largest elementwise relative error between the tape gradient of `f` at `x`
/// and central differences with step `h`:
/// `|a − d| / max(|a|, |d|, 1e-8)`.
///
/// `f` builds a scalar loss on a fresh tape from a leaf holding `x`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(AutogradError::Argument(format!(
            "step h must be positive, got {h}"
        )));
    }
    let eval = |point: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(point.clone());
        let loss = f(&mut tape, v)?;
        let val = tape.value(loss).item()?;
        if !val.is_finite() {
            return Err(AutogradError::Domain("function value is not finite".into()));
        }
        Ok(val)
    };

    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let loss = f(&mut tape, v)?;
    tape.backward(loss)?;
    let analytic = tape.grad(v)?.clone();

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

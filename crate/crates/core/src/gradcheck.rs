//! Central finite-difference gradient checking for functions built on a
//! [`Tape`]. The numeric side only ever evaluates forward values.

use ndarray::Array2;

use crate::autograd::{Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||)` over all
    /// inputs jointly.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub numeric_norm: f64,
}

/// Step used for the central differences.
pub const STEP: f64 = 1e-5;

/// Compares the tape gradient of the scalar built by `f` against central
/// differences with respect to every entry of every input.
pub fn check_gradients<F>(inputs: &[Array2<f64>], f: F) -> GradCheck
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |xs: &[Array2<f64>]| {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.param(x.clone())).collect();
        let out = f(&mut t, &vars);
        t.scalar_value(out)
    };

    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.param(x.clone())).collect();
    let out = f(&mut t, &vars);
    let grads = t.backward(out);

    let mut diff_sq = 0.0;
    let mut an_sq = 0.0;
    let mut nu_sq = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut work: Vec<Array2<f64>> = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*v, inputs[k].dim());
        for idx in ndarray::indices(inputs[k].dim()) {
            let orig = work[k][idx];
            work[k][idx] = orig + STEP;
            let plus = eval(&work);
            work[k][idx] = orig - STEP;
            let minus = eval(&work);
            work[k][idx] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic[idx];
            diff_sq += (a - numeric).powi(2);
            an_sq += a * a;
            nu_sq += numeric * numeric;
            max_abs = max_abs.max((a - numeric).abs());
        }
    }
    let denom = an_sq.sqrt().max(nu_sq.sqrt()).max(1e-12);
    GradCheck {
        max_rel_error: diff_sq.sqrt() / denom,
        max_abs_error: max_abs,
        numeric_norm: nu_sq.sqrt(),
    }
}

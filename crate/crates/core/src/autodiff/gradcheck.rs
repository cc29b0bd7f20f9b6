//! Central finite-difference gradient checking.

use super::params::ParameterSet;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max over scalars of `|analytic - fd| / max(1, |analytic|)`
    pub max_rel_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares tape gradients of `objective` against `(f(p+h) - f(p-h)) / 2h`
/// for every scalar in `params`.
///
/// `objective` must be deterministic: any noise has to be frozen by the
/// caller. It is evaluated twice at the base point to confirm this.
pub fn finite_difference_check<F>(
    objective: F,
    params: &ParameterSet,
    h: f64,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &ParameterSet) -> Result<Var<'t>>,
{
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::invalid(format!("step h={h} outside (0, 1e-2]")));
    }
    let eval = |p: &ParameterSet| -> Result<f64> {
        let tape = Tape::new();
        let y = objective(&tape, p)?;
        tape.check()?;
        Ok(y.item())
    };

    let mut analytic = params.clone();
    analytic.zero_grad();
    let base = {
        let tape = Tape::new();
        let y = objective(&tape, &analytic)?;
        let v = y.item();
        tape.backward(y, &mut analytic)?;
        v
    };
    let again = eval(params)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic(base, again));
    }

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let n = params.value(name).map_or(0, |t| t.len());
        for i in 0..n {
            let orig = params.value(name).expect("present").data()[i];
            set(&mut probe, name, i, orig + h);
            let plus = eval(&probe)?;
            set(&mut probe, name, i, orig - h);
            let minus = eval(&probe)?;
            set(&mut probe, name, i, orig);
            let fd = (plus - minus) / (2.0 * h);
            let an = analytic.grad(name).expect("present").data()[i];
            let rel = (an - fd).abs() / an.abs().max(1.0);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_parameter.is_empty() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst_parameter = name.clone();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}

fn set(ps: &mut ParameterSet, name: &str, i: usize, v: f64) {
    ps.get_mut(name).expect("present").value.data_mut()[i] = v;
}

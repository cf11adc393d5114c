use crate::error::AutodiffError;
use crate::rng::RngKey;

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Gradients below this magnitude on both sides count as agreeing.
const ABS_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub epsilon: f64,
    /// (tensor index, element index) of the worst disagreement.
    pub worst: Option<(usize, usize)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < ABS_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn eval<F, E>(params: &[Tensor<f64>], loss: &F) -> Result<f64, E>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, E>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = loss(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

/// Compares reverse-mode gradients with central differences on `samples`
/// elements, spread round-robin over the parameter tensors.
///
/// `loss` must be deterministic: any randomness (dropout masks) has to be
/// fixed by the caller. This is checked by evaluating the loss twice.
pub fn finite_diff_check<F, E>(
    params: &[Tensor<f64>],
    loss: F,
    epsilon: f64,
    samples: usize,
    key: RngKey,
) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, E>,
    E: From<AutodiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = loss(&mut tape, &vars)?;
    let first = tape.value(out).item();
    let grads = tape.backward(out)?;

    let second = eval(params, &loss)?;
    if first.to_bits() != second.to_bits() {
        return Err(AutodiffError::Determinism { first, second }.into());
    }

    let candidates: Vec<usize> = (0..params.len()).filter(|&i| !params[i].is_empty()).collect();
    if candidates.is_empty() {
        return Err(AutodiffError::Contract("no parameters to check".into()).into());
    }

    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        epsilon,
        worst: None,
    };
    for s in 0..samples {
        let t = candidates[s % candidates.len()];
        let elem = (key.bits(s as u64) % params[t].len() as u64) as usize;
        let orig = params[t].data()[elem];

        work[t].data_mut()[elem] = orig + epsilon;
        let plus = eval(&work, &loss)?;
        work[t].data_mut()[elem] = orig - epsilon;
        let minus = eval(&work, &loss)?;
        work[t].data_mut()[elem] = orig;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let analytic = grads.get(vars[t]).map(|g| g.data()[elem]).unwrap_or(0.0);
        let err = relative_error(analytic, numeric);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            if err >= report.max_rel_error {
                report.worst = Some((t, elem));
            }
        }
        report.checked += 1;
    }
    Ok(report)
}

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::train::Trainable;
use crate::error::Result;

/// Finite-difference step.
pub const STEP: f64 = 1e-4;

/// Gradients below this magnitude are compared absolutely.
const FLOOR: f64 = 1e-3;

/// Compares tape gradients of a scalar function against central differences.
///
/// `forward` receives the tape and one leaf per entry of `params` (in order)
/// and returns the scalar loss node. Returns the largest relative error over
/// every parameter element.
pub fn grad_check<F>(params: &mut [Tensor], mut forward: F) -> f64
where
    F: FnMut(&mut Tape, &[Var]) -> Var,
{
    let mut eval = |params: &[Tensor]| -> (f64, Vec<Tensor>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
        let loss = forward(&mut tape, &vars);
        let value = tape.value(loss).data()[0];
        tape.backward(loss);
        (value, tape.param_grads())
    };
    let (_, analytic) = eval(params);
    let mut worst = 0.0f64;
    for p in 0..params.len() {
        for i in 0..params[p].len() {
            let orig = params[p].data()[i];
            params[p].data_mut()[i] = orig + STEP;
            let (up, _) = eval(params);
            params[p].data_mut()[i] = orig - STEP;
            let (down, _) = eval(params);
            params[p].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(relative(analytic[p].data()[i], numeric));
        }
    }
    worst
}

fn relative(a: f64, numeric: f64) -> f64 {
    (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR)
}

/// [`grad_check`] over every parameter of a model, using its inference-mode
/// batch loss.
pub fn grad_check_model<M: Trainable + Clone>(model: &M, batch: &[&M::Sample]) -> Result<f64> {
    let loss = |m: &M| -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let l = m.batch_loss(&mut tape, batch, None)?;
        let value = tape.value(l).data()[0];
        tape.backward(l);
        Ok((value, tape.param_grads()))
    };
    let (_, analytic) = loss(model)?;
    let mut probe = model.clone();
    let count = probe.named_parameters().len();
    let mut worst = 0.0f64;
    for p in 0..count {
        let size = probe.named_parameters()[p].1.len();
        for i in 0..size {
            let orig = probe.named_parameters()[p].1.data()[i];
            probe.named_parameters_mut()[p].1.data_mut()[i] = orig + STEP;
            let up = loss(&probe)?.0;
            probe.named_parameters_mut()[p].1.data_mut()[i] = orig - STEP;
            let down = loss(&probe)?.0;
            probe.named_parameters_mut()[p].1.data_mut()[i] = orig;
            worst = worst.max(relative(analytic[p].data()[i], (up - down) / (2.0 * STEP)));
        }
    }
    Ok(worst)
}

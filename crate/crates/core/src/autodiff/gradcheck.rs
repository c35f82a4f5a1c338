//! Central finite-difference gradient checking.

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Relative error between analytic and numeric gradient entries.
/// Near-zero entries fall back to absolute comparison via the 1e-6 floor.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Checks the tape gradient of a scalar-valued graph builder against
/// central finite differences, coordinate by coordinate.
///
/// `f` receives a fresh tape plus one leaf per input tensor and must return
/// the (scalar) loss node. Returns the maximum relative error over all
/// input coordinates.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |tensors: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        assert!(tape.value(loss).is_scalar(), "grad_check requires a scalar loss");
        tape.value(loss).item()
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).expect("backward failed in grad_check");
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| grads.grad_or_zeros(*v, t.shape()))
        .collect();

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for ti in 0..inputs.len() {
        for ci in 0..inputs[ti].len() {
            let orig = work[ti].data()[ci];
            work[ti].data_mut()[ci] = orig + step;
            let fp = eval(&work);
            work[ti].data_mut()[ci] = orig - step;
            let fm = eval(&work);
            work[ti].data_mut()[ci] = orig;
            let numeric = (fp - fm) / (2.0 * step);
            worst = worst.max(rel_err(analytic[ti].data()[ci], numeric));
        }
    }
    worst
}

/// Same check for functions differentiated by hand (outside the tape).
/// `analytic` must hold one gradient tensor per input, shape-matched.
pub fn grad_check_fn<F>(mut f: F, analytic: &[Tensor], inputs: &[Tensor], step: f64) -> f64
where
    F: FnMut(&[Tensor]) -> f64,
{
    assert_eq!(analytic.len(), inputs.len());
    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for ti in 0..inputs.len() {
        assert_eq!(analytic[ti].shape(), inputs[ti].shape());
        for ci in 0..inputs[ti].len() {
            let orig = work[ti].data()[ci];
            work[ti].data_mut()[ci] = orig + step;
            let fp = f(&work);
            work[ti].data_mut()[ci] = orig - step;
            let fm = f(&work);
            work[ti].data_mut()[ci] = orig;
            let numeric = (fp - fm) / (2.0 * step);
            worst = worst.max(rel_err(analytic[ti].data()[ci], numeric));
        }
    }
    worst
}

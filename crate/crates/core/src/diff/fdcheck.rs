//! Central finite-difference verification of tape gradients.
//!
//! Checks run in `f64` so that the comparison is limited by the difference
//! step, not by accumulation noise in the implementation under test.

use super::net::Network;
use super::tape::Tape;
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub struct FdReport {
    /// Largest relative deviation between analytic and numeric gradients.
    pub max_rel_dev: f64,
    /// Number of coordinates compared.
    pub checked: usize,
}

impl FdReport {
    fn fold(&mut self, analytic: f64, numeric: f64) {
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        let dev = (analytic - numeric).abs() / denom;
        if dev > self.max_rel_dev {
            self.max_rel_dev = dev;
        }
        self.checked += 1;
    }
}

fn loss_of(net: &Network<f64>, x: &Tensor<f64>, labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let fwd = net.forward_taped(&mut tape, x.clone(), false, false)?;
    let loss = tape.softmax_cross_entropy(fwd.logits, labels)?;
    Ok(tape.value(loss).scalar().expect("loss is scalar"))
}

/// Compares the analytic input gradient against central differences over
/// every input coordinate.
pub fn check_input_gradient(
    net: &Network<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    step: f64,
) -> Result<FdReport> {
    let mut tape = Tape::new();
    let fwd = net.forward_taped(&mut tape, x.clone(), true, false)?;
    let loss = tape.softmax_cross_entropy(fwd.logits, labels)?;
    let grads = tape.backward(loss)?;
    let analytic = grads.get_or_zeros(fwd.input, x.shape());

    let mut report = FdReport {
        max_rel_dev: 0.0,
        checked: 0,
    };
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = loss_of(net, &probe, labels)?;
        probe.data_mut()[i] = orig - step;
        let down = loss_of(net, &probe, labels)?;
        probe.data_mut()[i] = orig;
        report.fold(analytic.data()[i], (up - down) / (2.0 * step));
    }
    Ok(report)
}

/// Compares analytic parameter gradients against central differences.
///
/// At most `per_tensor` coordinates are probed per parameter tensor,
/// spread evenly across the tensor, so large layers stay affordable.
pub fn check_param_gradients(
    net: &Network<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    step: f64,
    per_tensor: usize,
) -> Result<FdReport> {
    let mut tape = Tape::new();
    let fwd = net.forward_taped(&mut tape, x.clone(), false, true)?;
    let loss = tape.softmax_cross_entropy(fwd.logits, labels)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = fwd
        .params
        .iter()
        .zip(net.params().tensors())
        .map(|(&id, t)| grads.get_or_zeros(id, t.shape()))
        .collect();

    let mut report = FdReport {
        max_rel_dev: 0.0,
        checked: 0,
    };
    let mut probe = net.clone();
    for t_idx in 0..analytic.len() {
        let len = analytic[t_idx].len();
        let stride = (len / per_tensor).max(1);
        for i in (0..len).step_by(stride) {
            let orig = probe.params().tensors().nth(t_idx).unwrap().data()[i];
            set_param(&mut probe, t_idx, i, orig + step);
            let up = loss_of(&probe, x, labels)?;
            set_param(&mut probe, t_idx, i, orig - step);
            let down = loss_of(&probe, x, labels)?;
            set_param(&mut probe, t_idx, i, orig);
            report.fold(analytic[t_idx].data()[i], (up - down) / (2.0 * step));
        }
    }
    Ok(report)
}

fn set_param(net: &mut Network<f64>, tensor_idx: usize, elem: usize, value: f64) {
    let t = net.params_mut().tensors_mut().nth(tensor_idx).expect("tensor index in range");
    t.data_mut()[elem] = value;
}

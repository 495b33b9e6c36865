use alloc::vec;

use super::{cross_entropy, Matrix, MlpModel, Mode};
use crate::math::abs;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

/// Gradients of |g| below this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

/// Compares analytic parameter gradients of the unit-weight cross-entropy
/// of `model(x)` against central differences with step `h`. The model is
/// evaluated in eval mode (dropout off, batch norm on running stats) and
/// restored to its previous mode.
pub fn grad_check(model: &mut MlpModel, x: &Matrix, labels: &[usize], h: f64) -> GradCheckReport {
    let prev = model.mode;
    model.mode = Mode::Eval;
    let c = model.output_dim();
    let sw = vec![1.0; labels.len()];
    let cw = vec![1.0; c];
    let loss_of = |m: &MlpModel| {
        let z = m.infer(x).expect("grad_check forward");
        cross_entropy(&z, labels, &sw, &cw).expect("grad_check loss").0
    };

    model.zero_grad();
    let z = model.forward(x).expect("grad_check forward");
    let (_, g) = cross_entropy(&z, labels, &sw, &cw).expect("grad_check loss");
    model.backward(&g).expect("grad_check backward");

    let mut report = GradCheckReport { max_rel_error: 0.0, max_abs_error: 0.0, checked: 0 };
    for li in 0..model.layers.len() {
        for pi in 0..model.layers[li].params.len() {
            for k in 0..model.layers[li].params[pi].value.len() {
                let orig = model.layers[li].params[pi].value[k];
                model.layers[li].params[pi].value[k] = orig + h;
                let up = loss_of(model);
                model.layers[li].params[pi].value[k] = orig - h;
                let down = loss_of(model);
                model.layers[li].params[pi].value[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = model.layers[li].params[pi].grad[k];
                let err = abs(analytic - numeric);
                let scale = abs(analytic).max(abs(numeric)).max(REL_FLOOR);
                report.max_abs_error = report.max_abs_error.max(err);
                report.max_rel_error = report.max_rel_error.max(err / scale);
                report.checked += 1;
            }
        }
    }
    model.zero_grad();
    model.mode = prev;
    report
}

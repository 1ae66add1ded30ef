use ndarray::{Array2, Zip};

use super::{GcnParameters, Gradients};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One Adam update. Weight decay is L2: `weight_decay · w` is added to the
/// gradient before the moment updates.
pub fn adam_step(p: &mut GcnParameters, grads: &Gradients, lr: f64, weight_decay: f64) {
    p.step += 1;
    let t = p.step as i32;
    let bias1 = 1.0 - ADAM_BETA1.powi(t);
    let bias2 = 1.0 - ADAM_BETA2.powi(t);
    update(&mut p.w1, &mut p.m1, &mut p.v1, &grads.w1, lr, weight_decay, bias1, bias2);
    update(&mut p.w2, &mut p.m2, &mut p.v2, &grads.w2, lr, weight_decay, bias1, bias2);
}

#[allow(clippy::too_many_arguments)]
fn update(
    w: &mut Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    g: &Array2<f64>,
    lr: f64,
    weight_decay: f64,
    bias1: f64,
    bias2: f64,
) {
    Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
        let g = if weight_decay != 0.0 { g + weight_decay * *w } else { g };
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    });
}

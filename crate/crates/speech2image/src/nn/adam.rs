use std::collections::HashMap;

use super::Params;

/// Adam optimizer with name-keyed first/second moment state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: HashMap<String, Vec<f64>>,
    v: HashMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn step<M: Params + ?Sized>(&mut self, model: &mut M) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_params(&mut |name, mut value, grad| {
            let n = value.len();
            let m = ms.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let v = vs.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            debug_assert_eq!(m.len(), n, "param {name} changed size");
            for ((p, &g), (mi, vi)) in value
                .iter_mut()
                .zip(grad.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{zero_grads, Params};
    use ndarray::{Array1, ArrayViewMutD};

    struct Quad {
        x: Array1<f64>,
        g: Array1<f64>,
    }

    impl Params for Quad {
        fn visit_params(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<f64>, ArrayViewMutD<f64>)) {
            f("x", self.x.view_mut().into_dyn(), self.g.view_mut().into_dyn());
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut q = Quad {
            x: Array1::from_vec(vec![3.0, -2.0]),
            g: Array1::zeros(2),
        };
        let mut opt = Adam::new(0.1, 0.9, 0.999);
        for _ in 0..500 {
            zero_grads(&mut q);
            let g = q.x.clone() * 2.0;
            q.g.assign(&g);
            opt.step(&mut q);
        }
        assert!(q.x.iter().all(|v| v.abs() < 1e-3));
    }
}

use ndarray::{Array1, Array2, Array3, ArrayViewMutD};

/// Per-channel batch normalization over [batch, channels, positions].
/// 4-D feature maps are viewed as [b, c, h*w] by the caller.
///
/// An optional [batch, positions] mask restricts the statistics to valid
/// positions, so padded sequence tails do not contaminate them.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub run_mean: Array1<f64>,
    pub run_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
    pub g_gamma: Array1<f64>,
    pub g_beta: Array1<f64>,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    x_hat: Array3<f64>,
    inv_std: Array1<f64>,
    mask: Option<Array2<f64>>,
    weight_total: f64,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            run_mean: Array1::zeros(channels),
            run_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
            g_gamma: Array1::zeros(channels),
            g_beta: Array1::zeros(channels),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>, train: bool) -> Array3<f64> {
        self.forward_masked(x, None, train)
    }

    pub fn forward_masked(
        &mut self,
        x: &Array3<f64>,
        mask: Option<&Array2<f64>>,
        train: bool,
    ) -> Array3<f64> {
        let (b, c, l) = x.dim();
        assert_eq!(c, self.gamma.len(), "batchnorm channel mismatch");
        let mut y = Array3::<f64>::zeros((b, c, l));

        if !train {
            for ci in 0..c {
                let inv = 1.0 / (self.run_var[ci] + self.eps).sqrt();
                let (m, g, be) = (self.run_mean[ci], self.gamma[ci], self.beta[ci]);
                for bi in 0..b {
                    for li in 0..l {
                        y[[bi, ci, li]] = g * (x[[bi, ci, li]] - m) * inv + be;
                    }
                }
            }
            return y;
        }

        let weight = |bi: usize, li: usize| mask.map_or(1.0, |m| m[[bi, li]]);
        let total: f64 = match mask {
            Some(m) => m.sum(),
            None => (b * l) as f64,
        };
        assert!(total > 1.0, "batchnorm needs more than one valid position");

        let mut mean = Array1::<f64>::zeros(c);
        for ci in 0..c {
            let mut s = 0.0;
            for bi in 0..b {
                for li in 0..l {
                    s += weight(bi, li) * x[[bi, ci, li]];
                }
            }
            mean[ci] = s / total;
        }
        let mut var = Array1::<f64>::zeros(c);
        for ci in 0..c {
            let mut s = 0.0;
            for bi in 0..b {
                for li in 0..l {
                    let d = x[[bi, ci, li]] - mean[ci];
                    s += weight(bi, li) * d * d;
                }
            }
            var[ci] = s / total;
        }

        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let mut x_hat = Array3::<f64>::zeros((b, c, l));
        for ci in 0..c {
            for bi in 0..b {
                for li in 0..l {
                    x_hat[[bi, ci, li]] = (x[[bi, ci, li]] - mean[ci]) * inv_std[ci];
                }
            }
        }
        for ci in 0..c {
            let (g, be) = (self.gamma[ci], self.beta[ci]);
            for bi in 0..b {
                for li in 0..l {
                    y[[bi, ci, li]] = g * x_hat[[bi, ci, li]] + be;
                }
            }
        }

        // unbiased variance for the running estimate
        let bessel = total / (total - 1.0);
        for ci in 0..c {
            self.run_mean[ci] = (1.0 - self.momentum) * self.run_mean[ci] + self.momentum * mean[ci];
            self.run_var[ci] =
                (1.0 - self.momentum) * self.run_var[ci] + self.momentum * var[ci] * bessel;
        }

        self.cache = Some(Cache {
            x_hat,
            inv_std,
            mask: mask.cloned(),
            weight_total: total,
        });
        y
    }

    pub fn backward(&mut self, gy: &Array3<f64>) -> Array3<f64> {
        let cache = self.cache.as_ref().expect("forward(train) before backward");
        let (b, c, l) = gy.dim();
        let total = cache.weight_total;
        let weight = |bi: usize, li: usize| cache.mask.as_ref().map_or(1.0, |m| m[[bi, li]]);

        let mut gx = Array3::<f64>::zeros((b, c, l));
        for ci in 0..c {
            let mut sum_gy = 0.0;
            let mut sum_gy_xhat = 0.0;
            for bi in 0..b {
                for li in 0..l {
                    let g = gy[[bi, ci, li]];
                    sum_gy += g;
                    sum_gy_xhat += g * cache.x_hat[[bi, ci, li]];
                }
            }
            self.g_beta[ci] += sum_gy;
            self.g_gamma[ci] += sum_gy_xhat;

            let k = self.gamma[ci] * cache.inv_std[ci];
            for bi in 0..b {
                for li in 0..l {
                    let w = weight(bi, li);
                    gx[[bi, ci, li]] = k
                        * (gy[[bi, ci, li]]
                            - w * (sum_gy + cache.x_hat[[bi, ci, li]] * sum_gy_xhat) / total);
                }
            }
        }
        gx
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<f64>, ArrayViewMutD<f64>)) {
        f(
            &format!("{prefix}.gamma"),
            self.gamma.view_mut().into_dyn(),
            self.g_gamma.view_mut().into_dyn(),
        );
        f(
            &format!("{prefix}.beta"),
            self.beta.view_mut().into_dyn(),
            self.g_beta.view_mut().into_dyn(),
        );
    }

    pub fn visit_state(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<f64>)) {
        f(&format!("{prefix}.run_mean"), self.run_mean.view_mut().into_dyn());
        f(&format!("{prefix}.run_var"), self.run_var.view_mut().into_dyn());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn train_mode_normalizes_batch() {
        let mut bn = BatchNorm::new(2);
        let x = Array3::from_shape_fn((4, 2, 3), |(b, c, l)| (b * 6 + c * 3 + l) as f64);
        let y = bn.forward(&x, true);
        for ci in 0..2 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|bi| (0..3).map(move |li| (bi, li)))
                .map(|(bi, li)| y[[bi, ci, li]])
                .collect();
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn eval_mode_is_per_sample_affine() {
        let mut bn = BatchNorm::new(1);
        bn.run_mean[0] = 2.0;
        bn.run_var[0] = 4.0;
        let x1 = Array3::from_elem((1, 1, 1), 6.0);
        let y1 = bn.forward(&x1, false);
        let x2 = Array3::from_elem((3, 1, 5), 6.0);
        let y2 = bn.forward(&x2, false);
        assert!((y1[[0, 0, 0]] - y2[[2, 0, 4]]).abs() < 1e-12);
    }

    #[test]
    fn masked_stats_ignore_padding() {
        let mut bn = BatchNorm::new(1);
        let mut x = Array3::from_elem((2, 1, 4), 1.0);
        x[[0, 0, 1]] = 3.0;
        // mark everything beyond position 1 (sample 0) / 0 (sample 1) as padding
        let mut mask = Array2::zeros((2, 4));
        mask[[0, 0]] = 1.0;
        mask[[0, 1]] = 1.0;
        mask[[1, 0]] = 1.0;
        // garbage in the padded region must not shift the statistics
        x[[1, 0, 3]] = 1000.0;
        let y = bn.forward_masked(&x, Some(&mask), true);
        // valid values are {1, 3, 1}: mean 5/3
        let m = 5.0 / 3.0;
        let v = ((1.0 - m) * (1.0 - m) * 2.0 + (3.0 - m) * (3.0 - m)) / 3.0;
        let expect = (1.0 - m) / (v + bn.eps).sqrt();
        assert!((y[[0, 0, 0]] - expect).abs() < 1e-10);
    }
}

use ndarray::{Array1, Array2, Array3, ArrayViewMutD, Axis};
use rand::Rng;

use super::init::kaiming_normal;

/// Temporal convolution over [batch, channels, time] with symmetric zero
/// padding. With pad = (kernel-1)/2 the output length is ceil(time/stride)
/// for every input length, which is what the sequence-shortening encoder
/// stack relies on.
#[derive(Debug, Clone)]
pub struct Conv1d {
    /// [out, in, kernel]
    pub w: Array3<f64>,
    pub b: Array1<f64>,
    pub stride: usize,
    pub pad: usize,
    pub gw: Array3<f64>,
    pub gb: Array1<f64>,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    cols: Array2<f64>,
    batch: usize,
    t_in: usize,
    t_out: usize,
}

impl Conv1d {
    pub fn new<R: Rng>(rng: &mut R, in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        let w = kaiming_normal(rng, (out_ch, in_ch, kernel), in_ch * kernel, 2f64.sqrt());
        Self {
            gw: Array3::zeros(w.raw_dim()),
            gb: Array1::zeros(out_ch),
            w,
            b: Array1::zeros(out_ch),
            stride,
            pad: (kernel - 1) / 2,
            cache: None,
        }
    }

    pub fn out_len(&self, t_in: usize) -> usize {
        let k = self.w.dim().2;
        (t_in + 2 * self.pad - k) / self.stride + 1
    }

    pub fn forward(&mut self, x: &Array3<f64>, train: bool) -> Array3<f64> {
        let (batch, cin, t_in) = x.dim();
        let (cout, wcin, k) = self.w.dim();
        assert_eq!(cin, wcin, "conv1d channel mismatch");
        let t_out = self.out_len(t_in);

        // im2col: cols[(c*k + kk), b*t_out + t] = padded x[b, c, t*stride + kk]
        let mut cols = Array2::<f64>::zeros((cin * k, batch * t_out));
        {
            let xs = x.as_slice().expect("contiguous input");
            let cs = cols.as_slice_mut().expect("contiguous cols");
            let row_len = batch * t_out;
            for c in 0..cin {
                for kk in 0..k {
                    let row = (c * k + kk) * row_len;
                    for b in 0..batch {
                        let xb = (b * cin + c) * t_in;
                        let cb = row + b * t_out;
                        for t in 0..t_out {
                            let src = (t * self.stride + kk) as isize - self.pad as isize;
                            if src >= 0 && (src as usize) < t_in {
                                cs[cb + t] = xs[xb + src as usize];
                            }
                        }
                    }
                }
            }
        }

        let w2 = self
            .w
            .view()
            .into_shape_with_order((cout, cin * k))
            .expect("contiguous weight");
        let y2 = w2.dot(&cols); // [cout, batch*t_out]

        let mut y = Array3::<f64>::zeros((batch, cout, t_out));
        for co in 0..cout {
            let bias = self.b[co];
            for b in 0..batch {
                let src = y2.row(co);
                let mut dst = y.slice_mut(ndarray::s![b, co, ..]);
                for t in 0..t_out {
                    dst[t] = src[b * t_out + t] + bias;
                }
            }
        }

        self.cache = train.then(|| Cache { cols, batch, t_in, t_out });
        y
    }

    pub fn backward(&mut self, gy: &Array3<f64>) -> Array3<f64> {
        let cache = self.cache.as_ref().expect("forward(train) before backward");
        let (cout, cin, k) = self.w.dim();
        let (batch, t_in, t_out) = (cache.batch, cache.t_in, cache.t_out);
        assert_eq!(gy.dim(), (batch, cout, t_out));

        // reorder gy to [cout, batch*t_out]
        let mut gy2 = Array2::<f64>::zeros((cout, batch * t_out));
        for co in 0..cout {
            for b in 0..batch {
                let src = gy.slice(ndarray::s![b, co, ..]);
                let mut dst = gy2.row_mut(co);
                for t in 0..t_out {
                    dst[b * t_out + t] = src[t];
                }
            }
        }

        self.gb += &gy.sum_axis(Axis(2)).sum_axis(Axis(0));
        let gw2 = gy2.dot(&cache.cols.t()); // [cout, cin*k]
        self.gw += &gw2
            .into_shape_with_order((cout, cin, k))
            .expect("weight grad shape");

        let w2 = self
            .w
            .view()
            .into_shape_with_order((cout, cin * k))
            .expect("contiguous weight");
        let gcols = w2.t().dot(&gy2); // [cin*k, batch*t_out]

        // col2im accumulate
        let mut gx = Array3::<f64>::zeros((batch, cin, t_in));
        {
            let gs = gcols.as_slice().expect("contiguous gcols");
            let xs = gx.as_slice_mut().expect("contiguous gx");
            let row_len = batch * t_out;
            for c in 0..cin {
                for kk in 0..k {
                    let row = (c * k + kk) * row_len;
                    for b in 0..batch {
                        let xb = (b * cin + c) * t_in;
                        let cb = row + b * t_out;
                        for t in 0..t_out {
                            let src = (t * self.stride + kk) as isize - self.pad as isize;
                            if src >= 0 && (src as usize) < t_in {
                                xs[xb + src as usize] += gs[cb + t];
                            }
                        }
                    }
                }
            }
        }
        gx
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<f64>, ArrayViewMutD<f64>)) {
        f(
            &format!("{prefix}.w"),
            self.w.view_mut().into_dyn(),
            self.gw.view_mut().into_dyn(),
        );
        f(
            &format!("{prefix}.b"),
            self.b.view_mut().into_dyn(),
            self.gb.view_mut().into_dyn(),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn out_len_is_ceil_div_for_same_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = Conv1d::new(&mut rng, 1, 1, 5, 4);
        for t in [64usize, 65, 100, 640, 641] {
            assert_eq!(c.out_len(t), t.div_ceil(4), "t={t}");
        }
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = Conv1d::new(&mut rng, 1, 1, 5, 1);
        c.w.fill(0.0);
        c.w[[0, 0, 2]] = 1.0; // center tap
        let x = Array3::from_shape_fn((1, 1, 7), |(_, _, t)| t as f64);
        let y = c.forward(&x, false);
        assert_eq!(y, x);
    }

    #[test]
    fn conv_grad_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut c = Conv1d::new(&mut rng, 2, 3, 5, 4);
        let x = Array3::from_shape_fn((2, 2, 13), |(b, ch, t)| ((b + ch + t) as f64 * 0.37).sin());
        let y = c.forward(&x, true);
        // loss = sum(y^2)/2, gy = y
        let gx = c.backward(&y.clone());
        let h = 1e-5;
        for idx in [(0usize, 0usize, 0usize), (1, 1, 7), (0, 1, 12)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let lp = c.forward(&xp, false).mapv(|v| v * v).sum() / 2.0;
            let mut xm = x.clone();
            xm[idx] -= h;
            let lm = c.forward(&xm, false).mapv(|v| v * v).sum() / 2.0;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - gx[idx]).abs() < 1e-6, "idx {idx:?}: fd {fd} vs {}", gx[idx]);
        }
    }
}

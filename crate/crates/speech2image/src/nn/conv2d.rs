use ndarray::{Array1, Array2, Array4, ArrayViewMutD, Axis};
use rand::Rng;

use super::init::kaiming_normal;

/// 2-D convolution over [batch, channels, height, width] with symmetric zero
/// padding, implemented as im2col + one matrix product.
#[derive(Debug, Clone)]
pub struct Conv2d {
    /// [out, in, kh, kw]
    pub w: Array4<f64>,
    pub b: Array1<f64>,
    pub stride: usize,
    pub pad: usize,
    pub gw: Array4<f64>,
    pub gb: Array1<f64>,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    cols: Array2<f64>,
    batch: usize,
    h_in: usize,
    w_in: usize,
    h_out: usize,
    w_out: usize,
}

impl Conv2d {
    pub fn new<R: Rng>(
        rng: &mut R,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let w = kaiming_normal(
            rng,
            (out_ch, in_ch, kernel, kernel),
            in_ch * kernel * kernel,
            2f64.sqrt(),
        );
        Self {
            gw: Array4::zeros(w.raw_dim()),
            gb: Array1::zeros(out_ch),
            w,
            b: Array1::zeros(out_ch),
            stride,
            pad,
            cache: None,
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.w.dim().2;
        (
            (h + 2 * self.pad - k) / self.stride + 1,
            (w + 2 * self.pad - k) / self.stride + 1,
        )
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64> {
        let (batch, cin, h_in, w_in) = x.dim();
        let (cout, wcin, kh, kw) = self.w.dim();
        assert_eq!(cin, wcin, "conv2d channel mismatch");
        let (h_out, w_out) = self.out_size(h_in, w_in);
        let patch = cin * kh * kw;
        let npos = batch * h_out * w_out;

        let mut cols = Array2::<f64>::zeros((patch, npos));
        {
            let xs = x.as_slice().expect("contiguous input");
            let cs = cols.as_slice_mut().expect("contiguous cols");
            let s = self.stride as isize;
            let p = self.pad as isize;
            for c in 0..cin {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let row = ((c * kh + ky) * kw + kx) * npos;
                        for b in 0..batch {
                            let xb = ((b * cin + c) * h_in) * w_in;
                            let cb = row + b * h_out * w_out;
                            for oy in 0..h_out {
                                let sy = oy as isize * s + ky as isize - p;
                                if sy < 0 || sy as usize >= h_in {
                                    continue;
                                }
                                let xrow = xb + sy as usize * w_in;
                                let crow = cb + oy * w_out;
                                for ox in 0..w_out {
                                    let sx = ox as isize * s + kx as isize - p;
                                    if sx >= 0 && (sx as usize) < w_in {
                                        cs[crow + ox] = xs[xrow + sx as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        let w2 = self
            .w
            .view()
            .into_shape_with_order((cout, patch))
            .expect("contiguous weight");
        let y2 = w2.dot(&cols); // [cout, batch*h_out*w_out]

        let hw = h_out * w_out;
        let mut y = Array4::<f64>::zeros((batch, cout, h_out, w_out));
        {
            let ys = y.as_slice_mut().expect("contiguous output");
            let y2s = y2.as_slice().expect("contiguous y2");
            for b in 0..batch {
                for co in 0..cout {
                    let bias = self.b[co];
                    let dst = ((b * cout + co) * hw) as usize;
                    let src = co * npos + b * hw;
                    for i in 0..hw {
                        ys[dst + i] = y2s[src + i] + bias;
                    }
                }
            }
        }

        self.cache = train.then(|| Cache {
            cols,
            batch,
            h_in,
            w_in,
            h_out,
            w_out,
        });
        y
    }

    pub fn backward(&mut self, gy: &Array4<f64>) -> Array4<f64> {
        let cache = self.cache.as_ref().expect("forward(train) before backward");
        let (cout, cin, kh, kw) = self.w.dim();
        let (batch, h_out, w_out) = (cache.batch, cache.h_out, cache.w_out);
        assert_eq!(gy.dim(), (batch, cout, h_out, w_out));
        let patch = cin * kh * kw;
        let npos = batch * h_out * w_out;
        let hw = h_out * w_out;

        let mut gy2 = Array2::<f64>::zeros((cout, npos));
        {
            let gs = gy.as_slice().expect("contiguous gy");
            let g2 = gy2.as_slice_mut().expect("contiguous gy2");
            for b in 0..batch {
                for co in 0..cout {
                    let src = (b * cout + co) * hw;
                    let dst = co * npos + b * hw;
                    g2[dst..dst + hw].copy_from_slice(&gs[src..src + hw]);
                }
            }
        }

        self.gb += &gy.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0));
        let gw2 = gy2.dot(&cache.cols.t());
        self.gw += &gw2
            .into_shape_with_order((cout, cin, kh, kw))
            .expect("weight grad shape");

        let w2 = self
            .w
            .view()
            .into_shape_with_order((cout, patch))
            .expect("contiguous weight");
        let gcols = w2.t().dot(&gy2);

        let (h_in, w_in) = (cache.h_in, cache.w_in);
        let mut gx = Array4::<f64>::zeros((batch, cin, h_in, w_in));
        {
            let gs = gcols.as_slice().expect("contiguous gcols");
            let xs = gx.as_slice_mut().expect("contiguous gx");
            let s = self.stride as isize;
            let p = self.pad as isize;
            for c in 0..cin {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let row = ((c * kh + ky) * kw + kx) * npos;
                        for b in 0..batch {
                            let xb = ((b * cin + c) * h_in) * w_in;
                            let cb = row + b * hw;
                            for oy in 0..h_out {
                                let sy = oy as isize * s + ky as isize - p;
                                if sy < 0 || sy as usize >= h_in {
                                    continue;
                                }
                                let xrow = xb + sy as usize * w_in;
                                let crow = cb + oy * w_out;
                                for ox in 0..w_out {
                                    let sx = ox as isize * s + kx as isize - p;
                                    if sx >= 0 && (sx as usize) < w_in {
                                        xs[xrow + sx as usize] += gs[crow + ox];
                                    }
                                }
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

/// Nearest-neighbour 2x upsampling (no parameters).
pub fn upsample2x(x: &Array4<f64>) -> Array4<f64> {
    let (b, c, h, w) = x.dim();
    let mut y = Array4::<f64>::zeros((b, c, h * 2, w * 2));
    for bi in 0..b {
        for ci in 0..c {
            for yi in 0..h * 2 {
                for xi in 0..w * 2 {
                    y[[bi, ci, yi, xi]] = x[[bi, ci, yi / 2, xi / 2]];
                }
            }
        }
    }
    y
}

/// Gradient of [`upsample2x`]: sums each 2x2 block.
pub fn upsample2x_backward(gy: &Array4<f64>) -> Array4<f64> {
    let (b, c, h2, w2) = gy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut gx = Array4::<f64>::zeros((b, c, h, w));
    for bi in 0..b {
        for ci in 0..c {
            for yi in 0..h2 {
                for xi in 0..w2 {
                    gx[[bi, ci, yi / 2, xi / 2]] += gy[[bi, ci, yi, xi]];
                }
            }
        }
    }
    gx
}

/// 2x2 mean downsampling, used to build real-image pyramids. No gradients.
pub fn avgpool2x(x: &Array4<f64>) -> Array4<f64> {
    let (b, c, h, w) = x.dim();
    let mut y = Array4::<f64>::zeros((b, c, h / 2, w / 2));
    for bi in 0..b {
        for ci in 0..c {
            for yi in 0..h / 2 {
                for xi in 0..w / 2 {
                    y[[bi, ci, yi, xi]] = 0.25
                        * (x[[bi, ci, 2 * yi, 2 * xi]]
                            + x[[bi, ci, 2 * yi + 1, 2 * xi]]
                            + x[[bi, ci, 2 * yi, 2 * xi + 1]]
                            + x[[bi, ci, 2 * yi + 1, 2 * xi + 1]]);
                }
            }
        }
    }
    y
}

use ndarray::{s, Array1, Array2, Array3, ArrayViewMutD, Axis};
use rand::Rng;

use super::init::{kaiming_normal, uniform_init};

/// Single-layer gated recurrent unit. Consumes [batch, channels, time]
/// feature sequences and returns the final hidden state of each sequence,
/// honoring per-sequence valid lengths so batch padding never leaks into
/// the state.
///
/// Gate layout follows the usual stacked convention: rows [0,h) reset,
/// [h,2h) update, [2h,3h) candidate.
#[derive(Debug, Clone)]
pub struct Gru {
    pub w_ih: Array2<f64>, // [3h, in]
    pub w_hh: Array2<f64>, // [3h, h]
    pub b_ih: Array1<f64>,
    pub b_hh: Array1<f64>,
    pub g_w_ih: Array2<f64>,
    pub g_w_hh: Array2<f64>,
    pub g_b_ih: Array1<f64>,
    pub g_b_hh: Array1<f64>,
    hidden: usize,
    cache: Option<Cache>,
}

struct StepCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    r: Array2<f64>,
    z: Array2<f64>,
    n: Array2<f64>,
    hh_n: Array2<f64>,
}

struct Cache {
    steps: Vec<StepCache>,
    lengths: Vec<usize>,
}

impl std::fmt::Debug for Cache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Cache({} steps)", self.steps.len())
    }
}

impl Clone for Cache {
    fn clone(&self) -> Self {
        Cache {
            steps: Vec::new(),
            lengths: self.lengths.clone(),
        }
    }
}

fn sigmoid_arr(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(super::sigmoid)
}

impl Gru {
    pub fn new<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: kaiming_normal(rng, (3 * hidden, input), input, 1.0),
            w_hh: uniform_init(rng, (3 * hidden, hidden), bound),
            b_ih: Array1::zeros(3 * hidden),
            b_hh: Array1::zeros(3 * hidden),
            g_w_ih: Array2::zeros((3 * hidden, input)),
            g_w_hh: Array2::zeros((3 * hidden, hidden)),
            g_b_ih: Array1::zeros(3 * hidden),
            g_b_hh: Array1::zeros(3 * hidden),
            hidden,
            cache: None,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    /// Run the recurrence over `x` [batch, channels, time]; `lengths[i]` is
    /// the number of valid timesteps of sequence i (1..=time). Returns the
    /// hidden state of each sequence at its own last valid step.
    pub fn forward(&mut self, x: &Array3<f64>, lengths: &[usize], train: bool) -> Array2<f64> {
        let (batch, _cin, t_max) = x.dim();
        assert_eq!(lengths.len(), batch);
        assert!(lengths.iter().all(|&l| l >= 1 && l <= t_max));
        let h = self.hidden;

        let mut h_t = Array2::<f64>::zeros((batch, h));
        let mut out = Array2::<f64>::zeros((batch, h));
        let mut steps = Vec::with_capacity(if train { t_max } else { 0 });

        for t in 0..t_max {
            let x_t = x.slice(s![.., .., t]).to_owned(); // [batch, in]
            let gi = x_t.dot(&self.w_ih.t()) + &self.b_ih; // [batch, 3h]
            let gh = h_t.dot(&self.w_hh.t()) + &self.b_hh;

            let r = sigmoid_arr(&(gi.slice(s![.., 0..h]).to_owned() + gh.slice(s![.., 0..h])));
            let z = sigmoid_arr(&(gi.slice(s![.., h..2 * h]).to_owned() + gh.slice(s![.., h..2 * h])));
            let hh_n = gh.slice(s![.., 2 * h..3 * h]).to_owned();
            let n = (gi.slice(s![.., 2 * h..3 * h]).to_owned() + &r * &hh_n).mapv(f64::tanh);
            let h_new = (1.0 - &z) * &n + &z * &h_t;

            if train {
                steps.push(StepCache {
                    x: x_t,
                    h_prev: h_t.clone(),
                    r,
                    z,
                    n,
                    hh_n,
                });
            }
            h_t = h_new;
            for (i, &len) in lengths.iter().enumerate() {
                if len == t + 1 {
                    out.row_mut(i).assign(&h_t.row(i));
                }
            }
        }

        self.cache = train.then(|| Cache {
            steps,
            lengths: lengths.to_vec(),
        });
        out
    }

    /// Backpropagate from the gradient of the per-sequence final states.
    /// Returns the gradient w.r.t. the input sequence [batch, channels, time].
    pub fn backward(&mut self, g_out: &Array2<f64>) -> Array3<f64> {
        let cache = self.cache.take().expect("forward(train) before backward");
        let t_max = cache.steps.len();
        let (batch, h) = g_out.dim();
        let cin = self.w_ih.dim().1;

        let mut gx = Array3::<f64>::zeros((batch, cin, t_max));
        let mut dh = Array2::<f64>::zeros((batch, h));

        for t in (0..t_max).rev() {
            // inject the output gradient of sequences ending here
            for (i, &len) in cache.lengths.iter().enumerate() {
                if len == t + 1 {
                    let mut row = dh.row_mut(i);
                    row += &g_out.row(i);
                } else if len <= t {
                    dh.row_mut(i).fill(0.0);
                }
            }

            let st = &cache.steps[t];
            let dn = &dh * &(1.0 - &st.z);
            let dz = &dh * &(&st.h_prev - &st.n);
            let mut dh_prev = &dh * &st.z;

            let da_n = &dn * &st.n.mapv(|v| 1.0 - v * v);
            let dr = &da_n * &st.hh_n;
            let d_hh_n = &da_n * &st.r;

            let da_r = &dr * &(&st.r * &st.r.mapv(|v| 1.0 - v));
            let da_z = &dz * &(&st.z * &st.z.mapv(|v| 1.0 - v));

            // stack gate pre-activation grads into [batch, 3h]
            let mut dgi = Array2::<f64>::zeros((batch, 3 * h));
            dgi.slice_mut(s![.., 0..h]).assign(&da_r);
            dgi.slice_mut(s![.., h..2 * h]).assign(&da_z);
            dgi.slice_mut(s![.., 2 * h..3 * h]).assign(&da_n);
            let mut dgh = dgi.clone();
            dgh.slice_mut(s![.., 2 * h..3 * h]).assign(&d_hh_n);

            self.g_w_ih += &dgi.t().dot(&st.x);
            self.g_w_hh += &dgh.t().dot(&st.h_prev);
            self.g_b_ih += &dgi.sum_axis(Axis(0));
            self.g_b_hh += &dgh.sum_axis(Axis(0));

            let dx_t = dgi.dot(&self.w_ih); // [batch, in]
            gx.slice_mut(s![.., .., t]).assign(&dx_t);
            dh_prev += &dgh.dot(&self.w_hh);
            dh = dh_prev;
        }
        gx
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<f64>, ArrayViewMutD<f64>)) {
        f(
            &format!("{prefix}.w_ih"),
            self.w_ih.view_mut().into_dyn(),
            self.g_w_ih.view_mut().into_dyn(),
        );
        f(
            &format!("{prefix}.w_hh"),
            self.w_hh.view_mut().into_dyn(),
            self.g_w_hh.view_mut().into_dyn(),
        );
        f(
            &format!("{prefix}.b_ih"),
            self.b_ih.view_mut().into_dyn(),
            self.g_b_ih.view_mut().into_dyn(),
        );
        f(
            &format!("{prefix}.b_hh"),
            self.b_hh.view_mut().into_dyn(),
            self.g_b_hh.view_mut().into_dyn(),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn padding_does_not_leak_into_final_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut gru = Gru::new(&mut rng, 3, 4);
        let x = Array3::from_shape_fn((1, 3, 5), |(_, c, t)| ((c + t) as f64 * 0.3).sin());
        let short = gru.forward(&x.slice(s![.., .., 0..3]).to_owned(), &[3], false);

        // same sequence padded with garbage past length 3
        let mut padded = Array3::from_elem((1, 3, 5), 77.0);
        padded.slice_mut(s![.., .., 0..3]).assign(&x.slice(s![.., .., 0..3]));
        let long = gru.forward(&padded, &[3], false);
        for (a, b) in short.iter().zip(long.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_input_grad_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut gru = Gru::new(&mut rng, 2, 3);
        let x = Array3::from_shape_fn((2, 2, 4), |(b, c, t)| ((b * 5 + c * 3 + t) as f64 * 0.41).cos());
        let lengths = [4usize, 2];
        let y = gru.forward(&x, &lengths, true);
        let gx = gru.backward(&y.clone()); // loss = sum(y^2)/2
        let h = 1e-6;
        for idx in [(0usize, 0usize, 0usize), (0, 1, 3), (1, 0, 1), (1, 1, 3)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let lp = gru.forward(&xp, &lengths, false).mapv(|v| v * v).sum() / 2.0;
            let mut xm = x.clone();
            xm[idx] -= h;
            let lm = gru.forward(&xm, &lengths, false).mapv(|v| v * v).sum() / 2.0;
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - gx[idx]).abs() < 1e-6,
                "idx {idx:?}: fd {fd} vs analytic {}",
                gx[idx]
            );
        }
        // timestep beyond sample 1's length must get zero gradient
        assert_eq!(gx[[1, 0, 2]], 0.0);
    }
}

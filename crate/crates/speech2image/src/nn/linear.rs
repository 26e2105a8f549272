use ndarray::{Array1, Array2, ArrayViewMutD, Axis};
use rand::Rng;

use super::init::{kaiming_normal, uniform_init};

/// Fully connected layer: y = x Wᵀ + b, with x of shape [batch, in].
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gw: Array2<f64>,
    pub gb: Array1<f64>,
    cache_x: Option<Array2<f64>>,
}

impl Dense {
    pub fn new<R: Rng>(rng: &mut R, in_dim: usize, out_dim: usize) -> Self {
        let w = kaiming_normal(rng, (out_dim, in_dim), in_dim, 1.0);
        let b = uniform_init(rng, out_dim, 0.0);
        Self {
            gw: Array2::zeros(w.raw_dim()),
            gb: Array1::zeros(b.raw_dim()),
            w,
            b,
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        self.cache_x = train.then(|| x.clone());
        y
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache_x.as_ref().expect("forward(train) before backward");
        self.gw += &gy.t().dot(x);
        self.gb += &gy.sum_axis(Axis(0));
        gy.dot(&self.w)
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
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_forward_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dense::new(&mut rng, 2, 2);
        d.w = array![[1.0, 2.0], [3.0, 4.0]];
        d.b = array![0.5, -0.5];
        let y = d.forward(&array![[1.0, 1.0]], false);
        assert_eq!(y, array![[3.5, 6.5]]);
    }

    #[test]
    fn dense_backward_shapes_and_grad_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Dense::new(&mut rng, 3, 2);
        let x = array![[1.0, 2.0, 3.0], [0.5, -1.0, 2.0]];
        let _ = d.forward(&x, true);
        let gx = d.backward(&array![[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(gx.dim(), (2, 3));
        // gw row 0 is x row 0, row 1 is x row 1 for this one-hot gy
        assert_eq!(d.gw.row(0).to_owned(), x.row(0).to_owned());
        assert_eq!(d.gw.row(1).to_owned(), x.row(1).to_owned());
    }
}

use ndarray::{Array, Dimension, ShapeBuilder};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// He-style normal init: std = gain / sqrt(fan_in).
pub fn kaiming_normal<D, Sh, R>(rng: &mut R, shape: Sh, fan_in: usize, gain: f64) -> Array<f64, D>
where
    D: Dimension,
    Sh: ShapeBuilder<Dim = D>,
    R: Rng,
{
    let std = gain / (fan_in.max(1) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("valid normal");
    Array::from_shape_simple_fn(shape, || dist.sample(rng))
}

pub fn uniform_init<D, Sh, R>(rng: &mut R, shape: Sh, bound: f64) -> Array<f64, D>
where
    D: Dimension,
    Sh: ShapeBuilder<Dim = D>,
    R: Rng,
{
    let dist = Uniform::new_inclusive(-bound, bound);
    Array::from_shape_simple_fn(shape, || dist.sample(rng))
}

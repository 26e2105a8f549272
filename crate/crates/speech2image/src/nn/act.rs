use ndarray::ArrayD;

/// ReLU with cached activation mask.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    cache: Option<ArrayD<f64>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &ArrayD<f64>, train: bool) -> ArrayD<f64> {
        let y = x.mapv(|v| v.max(0.0));
        self.cache = train.then(|| x.clone());
        y
    }

    pub fn backward(&mut self, gy: &ArrayD<f64>) -> ArrayD<f64> {
        let x = self.cache.as_ref().expect("forward(train) before backward");
        let mut gx = gy.clone();
        gx.zip_mut_with(x, |g, &v| {
            if v <= 0.0 {
                *g = 0.0
            }
        });
        gx
    }
}

#[derive(Debug, Clone)]
pub struct LeakyRelu {
    pub slope: f64,
    cache: Option<ArrayD<f64>>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        Self { slope, cache: None }
    }

    pub fn forward(&mut self, x: &ArrayD<f64>, train: bool) -> ArrayD<f64> {
        let s = self.slope;
        let y = x.mapv(|v| if v > 0.0 { v } else { s * v });
        self.cache = train.then(|| x.clone());
        y
    }

    pub fn backward(&mut self, gy: &ArrayD<f64>) -> ArrayD<f64> {
        let x = self.cache.as_ref().expect("forward(train) before backward");
        let s = self.slope;
        let mut gx = gy.clone();
        gx.zip_mut_with(x, |g, &v| {
            if v <= 0.0 {
                *g *= s
            }
        });
        gx
    }
}

/// Tanh with cached output (gradient uses 1 - y²).
#[derive(Debug, Clone, Default)]
pub struct Tanh {
    cache_y: Option<ArrayD<f64>>,
}

impl Tanh {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &ArrayD<f64>, train: bool) -> ArrayD<f64> {
        let y = x.mapv(f64::tanh);
        self.cache_y = train.then(|| y.clone());
        y
    }

    pub fn backward(&mut self, gy: &ArrayD<f64>) -> ArrayD<f64> {
        let y = self.cache_y.as_ref().expect("forward(train) before backward");
        let mut gx = gy.clone();
        gx.zip_mut_with(y, |g, &v| *g *= 1.0 - v * v);
        gx
    }
}

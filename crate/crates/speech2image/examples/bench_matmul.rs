use ndarray::Array2;
use std::time::Instant;

fn main() {
    for &(m, k, n) in &[(64usize, 512usize, 2048usize), (128, 1152, 4096), (256, 256, 256), (32, 360, 16384)] {
        let a = Array2::<f64>::from_elem((m, k), 0.5);
        let b = Array2::<f64>::from_elem((k, n), 0.25);
        let t = Instant::now();
        let mut iters = 0u64;
        while t.elapsed().as_secs_f64() < 1.0 {
            let c = a.dot(&b);
            std::hint::black_box(&c);
            iters += 1;
        }
        let flops = 2.0 * (m * k * n) as f64 * iters as f64 / t.elapsed().as_secs_f64();
        println!("({m},{k},{n}): {:.2} GFLOP/s f64", flops / 1e9);
    }
    for &(m, k, n) in &[(64usize, 512usize, 2048usize), (256, 256, 256)] {
        let a = Array2::<f32>::from_elem((m, k), 0.5);
        let b = Array2::<f32>::from_elem((k, n), 0.25);
        let t = Instant::now();
        let mut iters = 0u64;
        while t.elapsed().as_secs_f64() < 1.0 {
            let c = a.dot(&b);
            std::hint::black_box(&c);
            iters += 1;
        }
        let flops = 2.0 * (m * k * n) as f64 * iters as f64 / t.elapsed().as_secs_f64();
        println!("({m},{k},{n}): {:.2} GFLOP/s f32", flops / 1e9);
    }
}

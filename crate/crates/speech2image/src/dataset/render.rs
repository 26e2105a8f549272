//! Shape rendering and the attribute probe that inverts it.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClassSpec, ShapeKind, ACCENT_PALETTE, FILL_PALETTE};

/// Fraction of the object's half-extent occupied by the accent border.
const BORDER_FRAC: f64 = 0.22;
/// Cross arm half-width as a fraction of the half-extent.
const CROSS_ARM: f64 = 0.25;

fn to_unit(c: [u8; 3]) -> [f64; 3] {
    [
        c[0] as f64 / 255.0 * 2.0 - 1.0,
        c[1] as f64 / 255.0 * 2.0 - 1.0,
        c[2] as f64 / 255.0 * 2.0 - 1.0,
    ]
}

/// Signed membership test: is (dx, dy) within the shape of half-extent `r`?
/// dy grows downward (image rows).
fn inside(shape: ShapeKind, dx: f64, dy: f64, r: f64) -> bool {
    match shape {
        ShapeKind::Circle => dx * dx + dy * dy <= r * r,
        ShapeKind::Square => dx.abs() <= r && dy.abs() <= r,
        ShapeKind::Triangle => {
            // apex up at (0, -r), base corners at (+-r, +0.9r)
            if dy < -r || dy > 0.9 * r {
                return false;
            }
            let t = (dy + r) / (1.9 * r); // 0 at apex, 1 at base
            dx.abs() <= t * r
        }
        ShapeKind::Cross => {
            let arm = CROSS_ARM * r;
            (dx.abs() <= arm && dy.abs() <= r) || (dy.abs() <= arm && dx.abs() <= r)
        }
    }
}

/// Rasterize a class at `size`x`size`. The nuisance seed drives background
/// color, object position and size; class attributes are invariant to it.
/// Returns [3, size, size] in [-1, 1].
pub fn render_image(spec: &ClassSpec, nuisance_seed: u64, size: usize) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(nuisance_seed);
    // muted mid-dark background, rejection-sampled to stay clear of every
    // palette color so the probe can separate object from backdrop
    let bg = loop {
        let cand = to_unit([
            rng.gen_range(40u8..=110),
            rng.gen_range(40u8..=110),
            rng.gen_range(40u8..=110),
        ]);
        let near = FILL_PALETTE
            .iter()
            .chain(ACCENT_PALETTE.iter())
            .any(|&(_, c)| dist2(cand, to_unit(c)) < 0.5 * 0.5);
        if !near {
            break cand;
        }
    };
    let fill = to_unit(FILL_PALETTE[spec.fill].1);
    let accent = to_unit(ACCENT_PALETTE[spec.accent].1);

    let s = size as f64;
    let cx = s * rng.gen_range(0.40..=0.60);
    let cy = s * rng.gen_range(0.40..=0.60);
    let r = s * rng.gen_range(0.24..=0.36);
    let r_inner = r * (1.0 - BORDER_FRAC);

    let mut img = Array3::<f64>::zeros((3, size, size));
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let px = if inside(spec.shape, dx, dy, r_inner) {
                fill
            } else if inside(spec.shape, dx, dy, r) {
                accent
            } else {
                bg
            };
            for c in 0..3 {
                img[[c, y, x]] = px[c];
            }
        }
    }
    img
}

pub fn render_image_f32(spec: &ClassSpec, nuisance_seed: u64, size: usize) -> Array3<f32> {
    render_image(spec, nuisance_seed, size).mapv(|v| v as f32)
}

/// Attributes recovered from an image by the probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeResult {
    pub shape: ShapeKind,
    pub fill: usize,
    pub accent: usize,
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Recover (shape, fill, accent) from a rendered or generated image.
///
/// Background is estimated from the corner patches (the object never reaches
/// them), foreground pixels vote for their nearest palette color, and the
/// shape is classified from the foreground bounding-box fill ratio plus the
/// bottom/middle width profile (separates triangle from cross).
pub fn attribute_probe(image: &Array3<f64>) -> ProbeResult {
    let (_, h, w) = image.dim();
    let px = |y: usize, x: usize| [image[[0, y, x]], image[[1, y, x]], image[[2, y, x]]];

    // corner median-ish background estimate (mean of 4 corner patches)
    let patch = (h / 8).max(1);
    let mut bg = [0.0f64; 3];
    let mut n = 0.0;
    for &(y0, x0) in &[(0, 0), (0, w - patch), (h - patch, 0), (h - patch, w - patch)] {
        for y in y0..y0 + patch {
            for x in x0..x0 + patch {
                let p = px(y, x);
                for c in 0..3 {
                    bg[c] += p[c];
                }
                n += 1.0;
            }
        }
    }
    for c in 0..3 {
        bg[c] /= n;
    }

    let fill_colors: Vec<[f64; 3]> = FILL_PALETTE.iter().map(|&(_, c)| to_unit(c)).collect();
    let accent_colors: Vec<[f64; 3]> = ACCENT_PALETTE.iter().map(|&(_, c)| to_unit(c)).collect();

    let mut mask = vec![false; h * w];
    let mut fill_votes = [0usize; 8];
    let mut accent_votes = [0usize; 8];
    // exclusion radius well under the background-to-palette margin the
    // renderer enforces, so real object pixels always survive
    let bg_tau2 = 0.3f64 * 0.3;
    for y in 0..h {
        for x in 0..w {
            let p = px(y, x);
            if dist2(p, bg) <= bg_tau2 {
                continue;
            }
            mask[y * w + x] = true;
            let mut best = (f64::INFINITY, 0usize, false); // (d2, idx, is_accent)
            for (i, &c) in fill_colors.iter().enumerate() {
                let d = dist2(p, c);
                if d < best.0 {
                    best = (d, i, false);
                }
            }
            for (i, &c) in accent_colors.iter().enumerate() {
                let d = dist2(p, c);
                if d < best.0 {
                    best = (d, i, true);
                }
            }
            if best.2 {
                accent_votes[best.1] += 1;
            } else {
                fill_votes[best.1] += 1;
            }
        }
    }

    let argmax = |v: &[usize; 8]| {
        let mut best = 0usize;
        for (i, &c) in v.iter().enumerate() {
            if c > v[best] {
                best = i;
            }
        }
        best
    };
    let fill = argmax(&fill_votes);
    let accent = argmax(&accent_votes);

    // bounding box over rows/cols with at least 2 foreground pixels
    let row_count: Vec<usize> = (0..h)
        .map(|y| (0..w).filter(|&x| mask[y * w + x]).count())
        .collect();
    let col_count: Vec<usize> = (0..w)
        .map(|x| (0..h).filter(|&y| mask[y * w + x]).count())
        .collect();
    let rows: Vec<usize> = (0..h).filter(|&y| row_count[y] >= 2).collect();
    let cols: Vec<usize> = (0..w).filter(|&x| col_count[x] >= 2).collect();
    let shape = if rows.is_empty() || cols.is_empty() {
        ShapeKind::Circle
    } else {
        let (y0, y1) = (rows[0], rows[rows.len() - 1]);
        let (x0, x1) = (cols[0], cols[cols.len() - 1]);
        let bbox_area = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
        let area = mask.iter().filter(|&&m| m).count() as f64;
        let ratio = area / bbox_area;
        if ratio > 0.9 {
            ShapeKind::Square
        } else if ratio > 0.65 {
            ShapeKind::Circle
        } else {
            // triangle widens toward the base; a cross narrows again
            let span = y1 - y0 + 1;
            let third = (span / 3).max(1);
            let mean_w = |lo: usize, hi: usize| {
                let mut s = 0.0;
                let mut k = 0.0;
                for y in lo..hi {
                    s += row_count[y] as f64;
                    k += 1.0;
                }
                if k > 0.0 {
                    s / k
                } else {
                    0.0
                }
            };
            let mid = mean_w(y0 + third, y0 + 2 * third);
            let bottom = mean_w(y1 + 1 - third, y1 + 1);
            if bottom > 0.8 * mid {
                ShapeKind::Triangle
            } else {
                ShapeKind::Cross
            }
        }
    };

    ProbeResult { shape, fill, accent }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_classes;

    #[test]
    fn render_is_deterministic_and_in_range() {
        let classes = make_classes(8, 0).unwrap();
        let a = render_image(&classes[0], 42, 64);
        let b = render_image(&classes[0], 42, 64);
        assert_eq!(a, b);
        assert_eq!(a.dim(), (3, 64, 64));
        assert!(a.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn different_seeds_only_change_nuisance() {
        let classes = make_classes(16, 1).unwrap();
        for c in &classes {
            for seed in [1u64, 2, 3] {
                let img = render_image(c, seed, 64);
                let probe = attribute_probe(&img);
                assert_eq!(probe.shape, c.shape, "class {}", c.class_id);
                assert_eq!(probe.fill, c.fill, "class {}", c.class_id);
                assert_eq!(probe.accent, c.accent, "class {}", c.class_id);
            }
        }
    }

    #[test]
    fn probe_accuracy_on_rendered_set() {
        let classes = make_classes(40, 2).unwrap();
        let mut total = 0;
        let mut shape_ok = 0;
        let mut fill_ok = 0;
        let mut accent_ok = 0;
        for c in &classes {
            for i in 0..5u64 {
                let img = render_image(c, 1000 + i, 64);
                let p = attribute_probe(&img);
                total += 1;
                shape_ok += (p.shape == c.shape) as usize;
                fill_ok += (p.fill == c.fill) as usize;
                accent_ok += (p.accent == c.accent) as usize;
            }
        }
        let acc = |k: usize| k as f64 / total as f64;
        assert!(acc(shape_ok) >= 0.99, "shape acc {}", acc(shape_ok));
        assert!(acc(fill_ok) >= 0.99, "fill acc {}", acc(fill_ok));
        assert!(acc(accent_ok) >= 0.99, "accent acc {}", acc(accent_ok));
    }

    #[test]
    fn small_render_has_requested_shape_contract() {
        let classes = make_classes(4, 5).unwrap();
        let img = render_image(&classes[1], 0, 16);
        assert_eq!(img.dim(), (3, 16, 16));
    }
}

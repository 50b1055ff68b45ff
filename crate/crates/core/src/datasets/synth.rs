//! Download-free data: Gaussian blobs and procedurally drawn digit glyphs.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::LabeledSet;
use crate::seeded_rng;

pub const DIGIT_SIDE: usize = 28;

/// `k` Gaussian clusters of `per_class` points each, in class-major order.
/// Centers are uniform in `[0.2, 0.8]^dim`; points are clipped to `[0, 1]`.
pub fn synth_blobs(k: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> LabeledSet {
    assert!(k >= 2, "synth_blobs needs at least two classes");
    let mut rng = seeded_rng(seed);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let mut set = LabeledSet::empty(dim);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            let x: Vec<f64> = center
                .iter()
                .map(|c| {
                    (c + spread * gauss(&mut rng)).clamp(0.0, 1.0)
                })
                .collect();
            set.push(&x, class).expect("width matches");
        }
    }
    set
}

type Stroke = Vec<(f64, f64)>;

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64, n: usize) -> Stroke {
    (0..=n)
        .map(|i| {
            let t = from + (to - from) * i as f64 / n as f64;
            (cx + rx * libm::cos(t), cy + ry * libm::sin(t))
        })
        .collect()
}

/// Glyph skeletons in a unit box, y pointing down.
fn glyph(digit: usize) -> Vec<Stroke> {
    match digit {
        0 => vec![arc(0.5, 0.5, 0.28, 0.4, 0.0, 2.0 * PI, 20)],
        1 => vec![vec![(0.38, 0.25), (0.55, 0.1), (0.55, 0.9)]],
        2 => {
            let mut top = arc(0.5, 0.33, 0.26, 0.23, PI, 2.15 * PI, 10);
            top.extend([(0.24, 0.9), (0.8, 0.9)]);
            vec![top]
        }
        3 => vec![
            arc(0.48, 0.3, 0.25, 0.2, 1.1 * PI, 2.5 * PI, 10),
            arc(0.48, 0.7, 0.27, 0.2, 1.5 * PI, 2.9 * PI, 10),
        ],
        4 => vec![vec![(0.62, 0.1), (0.2, 0.65), (0.82, 0.65)], vec![(0.64, 0.35), (0.64, 0.92)]],
        5 => {
            let mut s = vec![(0.78, 0.1), (0.3, 0.1), (0.27, 0.46)];
            s.extend(arc(0.5, 0.66, 0.27, 0.24, 1.2 * PI, 2.8 * PI, 12));
            vec![s]
        }
        6 => {
            let mut s = vec![(0.7, 0.1)];
            s.extend(arc(0.5, 0.68, 0.25, 0.22, 1.05 * PI, 3.05 * PI, 16));
            vec![s]
        }
        7 => vec![vec![(0.2, 0.12), (0.8, 0.12), (0.42, 0.92)]],
        8 => vec![
            arc(0.5, 0.3, 0.2, 0.19, 0.0, 2.0 * PI, 14),
            arc(0.5, 0.7, 0.25, 0.21, 0.0, 2.0 * PI, 16),
        ],
        9 => {
            let mut s = arc(0.5, 0.32, 0.24, 0.21, 0.0, 2.0 * PI, 16);
            s.extend([(0.74, 0.32), (0.66, 0.92)]);
            vec![s]
        }
        _ => unreachable!("digits are 0..=9"),
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 { 0.0 } else { ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0) };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    libm::sqrt(dx * dx + dy * dy)
}

/// Handwriting-like 28×28 digits: each sample jitters the glyph skeleton and
/// draws it under a random affine map with a random pen width, anti-aliased.
/// Returns `10 × per_class` images with pixels in `[0, 1]`, interleaved by class.
pub fn synth_digits(per_class: usize, seed: u64) -> LabeledSet {
    let mut rng = seeded_rng(seed);
    let side = DIGIT_SIDE as f64;
    let mut set = LabeledSet::empty(DIGIT_SIDE * DIGIT_SIDE);
    for _ in 0..per_class {
        for digit in 0..10 {
            let rot = rng.random_range(-0.25..0.25);
            let shear = rng.random_range(-0.25..0.25);
            let (sx, sy) = (rng.random_range(13.0..19.0), rng.random_range(15.0..20.0));
            let (tx, ty) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let pen = rng.random_range(0.9..1.8);
            let ink = rng.random_range(0.75..1.0);
            let (s, c) = (libm::sin(rot), libm::cos(rot));
            let strokes: Vec<Stroke> = glyph(digit)
                .into_iter()
                .map(|stroke| {
                    stroke
                        .into_iter()
                        .map(|(u, v)| {
                            let u = u + 0.03 * gauss(&mut rng) - 0.5;
                            let v = v + 0.03 * gauss(&mut rng) - 0.5;
                            let (u, v) = (u + shear * v, v);
                            let (x, y) = (sx * u, sy * v);
                            (c * x - s * y + side / 2.0 + tx, s * x + c * y + side / 2.0 + ty)
                        })
                        .collect()
                })
                .collect();
            let mut img = vec![0.0; DIGIT_SIDE * DIGIT_SIDE];
            for (idx, px) in img.iter_mut().enumerate() {
                let p = ((idx % DIGIT_SIDE) as f64 + 0.5, (idx / DIGIT_SIDE) as f64 + 0.5);
                let d = strokes
                    .iter()
                    .flat_map(|st| st.windows(2).map(|w| segment_distance(p, w[0], w[1])))
                    .fold(f64::INFINITY, f64::min);
                *px = ink * (1.0 - (d - pen) / 1.2).clamp(0.0, 1.0);
            }
            set.push(&img, digit).expect("width matches");
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nearest_centroid_accuracy(set: &LabeledSet, k: usize) -> f64 {
        let d = set.dim();
        let mut centroids = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..set.len() {
            counts[set.label(i)] += 1;
            for (c, x) in centroids[set.label(i)].iter_mut().zip(set.input(i)) {
                *c += x;
            }
        }
        for (c, n) in centroids.iter_mut().zip(&counts) {
            c.iter_mut().for_each(|v| *v /= *n as f64);
        }
        let correct = (0..set.len())
            .filter(|&i| {
                let x = set.input(i);
                let best = (0..k)
                    .min_by(|&a, &b| {
                        let da: f64 = centroids[a].iter().zip(x).map(|(c, v)| (c - v) * (c - v)).sum();
                        let db: f64 = centroids[b].iter().zip(x).map(|(c, v)| (c - v) * (c - v)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                best == set.label(i)
            })
            .count();
        correct as f64 / set.len() as f64
    }

    #[test]
    fn tight_blobs_are_separable() {
        let set = synth_blobs(5, 40, 8, 1e-9, 3);
        assert_eq!(nearest_centroid_accuracy(&set, 5), 1.0);
    }

    #[test]
    fn blobs_respect_counts_and_seed() {
        let set = synth_blobs(3, 17, 4, 0.1, 9);
        assert_eq!(set.len(), 51);
        for c in 0..3 {
            assert_eq!(set.labels().iter().filter(|&&y| y == c).count(), 17);
        }
        assert_eq!(set, synth_blobs(3, 17, 4, 0.1, 9));
        assert_ne!(set, synth_blobs(3, 17, 4, 0.1, 10));
    }

    #[test]
    fn digits_are_valid_images() {
        let set = synth_digits(3, 1);
        assert_eq!(set.len(), 30);
        assert_eq!(set.dim(), 784);
        assert!(set.inputs().iter().all(|v| (0.0..=1.0).contains(v)));
        for i in 0..set.len() {
            let ink: f64 = set.input(i).iter().sum();
            assert!(ink > 20.0, "image {i} is nearly blank");
        }
        assert_eq!(set, synth_digits(3, 1));
    }

    #[test]
    fn digit_classes_are_distinguishable() {
        let set = synth_digits(30, 2);
        assert!(nearest_centroid_accuracy(&set, 10) > 0.6);
    }
}

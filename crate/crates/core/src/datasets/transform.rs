use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::RngCore;

pub fn random_permutation<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// `out[i] = x[perm[i]]`.
pub fn permute_pixels(x: &[f64], perm: &[usize]) -> Vec<f64> {
    perm.iter().map(|&j| x[j]).collect()
}

/// Rotates a square `side × side` image by `theta` radians about its center.
///
/// Each output pixel is mapped back through the inverse rotation and sampled
/// bilinearly; samples falling outside the source read as zero.
pub fn rotate_image(x: &[f64], side: usize, theta: f64) -> Vec<f64> {
    debug_assert_eq!(x.len(), side * side);
    let c = (side as f64 - 1.0) / 2.0;
    let (s, co) = (libm::sin(theta), libm::cos(theta));
    let at = |r: isize, q: isize| -> f64 {
        if r < 0 || q < 0 || r >= side as isize || q >= side as isize {
            0.0
        } else {
            x[r as usize * side + q as usize]
        }
    };
    let mut out = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let (dx, dy) = (j as f64 - c, i as f64 - c);
            // inverse rotation
            let sx = co * dx + s * dy + c;
            let sy = -s * dx + co * dy + c;
            let (x0, y0) = (libm::floor(sx), libm::floor(sy));
            let (fx, fy) = (sx - x0, sy - y0);
            let (q, r) = (x0 as isize, y0 as isize);
            let v = (1.0 - fy) * ((1.0 - fx) * at(r, q) + fx * at(r, q + 1))
                + fy * ((1.0 - fx) * at(r + 1, q) + fx * at(r + 1, q + 1));
            out.push(v.clamp(0.0, 1.0));
        }
    }
    out
}

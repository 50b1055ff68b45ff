use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::transform::{permute_pixels, random_permutation, rotate_image};
use super::{Dataset, EvalSplit, LabeledSet, Phase, Setting, TaskStream};
use crate::error::{Error, Result};
use crate::{seeded_rng, Rng as SeededRng};

/// How much of the base data each task draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSize {
    pub tasks: usize,
    /// `None` keeps every available train sample.
    pub train_per_task: Option<usize>,
    pub test_per_task: Option<usize>,
}

impl StreamSize {
    pub fn new(tasks: usize, train_per_task: usize, test_per_task: usize) -> Self {
        StreamSize {
            tasks,
            train_per_task: Some(train_per_task),
            test_per_task: Some(test_per_task),
        }
    }
}

/// Draws `n` shuffled indices out of `0..len` (all of them when `n` is `None`).
fn draw(len: usize, n: Option<usize>, rng: &mut SeededRng) -> Result<Vec<usize>> {
    match n {
        Some(n) if n > len => Err(Error::config(format!("requested {n} samples but only {len} exist"))),
        Some(n) => Ok(index::sample(rng, len, n).into_vec()),
        None => {
            let mut all: Vec<usize> = (0..len).collect();
            all.shuffle(rng);
            Ok(all)
        }
    }
}

fn image_side(dim: usize) -> Result<usize> {
    let side = libm::sqrt(dim as f64) as usize;
    if side * side != dim {
        return Err(Error::config(format!("input width {dim} is not a square image")));
    }
    Ok(side)
}

fn domain_stream(
    base: &Dataset,
    size: StreamSize,
    seed: u64,
    mut transform_for_task: impl FnMut(usize, &mut SeededRng) -> Result<alloc::boxed::Box<dyn Fn(&[f64]) -> Vec<f64>>>,
) -> Result<TaskStream> {
    if size.tasks == 0 {
        return Err(Error::config("a stream needs at least one task"));
    }
    let mut rng = seeded_rng(seed);
    let mut phases = Vec::with_capacity(size.tasks);
    let mut eval = Vec::with_capacity(size.tasks);
    for t in 0..size.tasks {
        let f = transform_for_task(t, &mut rng)?;
        let train_idx = draw(base.train.len(), size.train_per_task, &mut rng)?;
        let test_idx = draw(base.test.len(), size.test_per_task, &mut rng)?;
        let train = base.train.subset(&train_idx).map_inputs(|_, x| f(x))?;
        let test = base.test.subset(&test_idx).map_inputs(|_, x| f(x))?;
        phases.push(Phase {
            train,
            classes: None,
            boundary: true,
        });
        eval.push(EvalSplit {
            name: format!("task{}", t + 1),
            test,
            classes: None,
        });
    }
    Ok(TaskStream {
        phases,
        eval,
        classes: base.train.num_classes().max(base.test.num_classes()),
        setting: Setting::DomainIl,
    })
}

/// Permuted stream: task `t` applies its own fixed pixel permutation to every
/// train and test image. With `identity_first` the first task is unpermuted.
pub fn build_pmnist(base: &Dataset, size: StreamSize, identity_first: bool, seed: u64) -> Result<TaskStream> {
    let dim = base.train.dim();
    domain_stream(base, size, seed, |t, rng| {
        let perm = if t == 0 && identity_first {
            (0..dim).collect()
        } else {
            random_permutation(dim, rng)
        };
        Ok(alloc::boxed::Box::new(move |x: &[f64]| permute_pixels(x, &perm)))
    })
}

/// Rotated stream: task `t` rotates every image by its own angle drawn
/// uniformly from `[0, π)`.
pub fn build_rmnist(base: &Dataset, size: StreamSize, seed: u64) -> Result<TaskStream> {
    let side = image_side(base.train.dim())?;
    domain_stream(base, size, seed, |_, rng| {
        let theta = rng.random_range(0.0..PI);
        Ok(alloc::boxed::Box::new(move |x: &[f64]| rotate_image(x, side, theta)))
    })
}

/// Split stream: phase `t` holds only the classes of `tasks[t]`.
pub fn build_split(
    base: &Dataset,
    tasks: &[Vec<usize>],
    train_per_task: Option<usize>,
    test_per_task: Option<usize>,
    setting: Setting,
    seed: u64,
) -> Result<TaskStream> {
    if tasks.is_empty() || tasks.iter().any(|t| t.is_empty()) {
        return Err(Error::config("split stream needs non-empty class sets"));
    }
    if !matches!(setting, Setting::ClassIl | Setting::TaskIl) {
        return Err(Error::config("split streams are class_il or task_il"));
    }
    let mut seen: Vec<usize> = Vec::new();
    for set in tasks {
        for &c in set {
            if seen.contains(&c) {
                return Err(Error::config(format!("class {c} appears in more than one task")));
            }
            seen.push(c);
        }
    }
    let mut rng = seeded_rng(seed);
    let mut phases = Vec::new();
    let mut eval = Vec::new();
    for (t, set) in tasks.iter().enumerate() {
        let pick = |s: &LabeledSet, cap: Option<usize>, rng: &mut SeededRng| -> Result<LabeledSet> {
            let mut idx = s.indices_of(set);
            if idx.is_empty() {
                return Err(Error::config(format!("no samples for classes {set:?}")));
            }
            idx.shuffle(rng);
            if let Some(cap) = cap {
                idx.truncate(cap);
            }
            Ok(s.subset(&idx))
        };
        let train = pick(&base.train, train_per_task, &mut rng)?;
        let test = pick(&base.test, test_per_task, &mut rng)?;
        phases.push(Phase {
            train,
            classes: Some(set.clone()),
            boundary: true,
        });
        eval.push(EvalSplit {
            name: format!("task{}", t + 1),
            test,
            classes: Some(set.clone()),
        });
    }
    let classes = seen.iter().max().map_or(0, |m| m + 1);
    Ok(TaskStream {
        phases,
        eval,
        classes,
        setting,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mnist360Options {
    /// Samples presented for each consecutive-digit pair.
    pub per_pair: usize,
    /// Test images per digit (each at a uniform random angle in `[0, 2π)`).
    pub test_per_digit: usize,
}

impl Default for Mnist360Options {
    fn default() -> Self {
        Mnist360Options {
            per_pair: 500,
            test_per_digit: 100,
        }
    }
}

pub const MNIST360_DIGITS: usize = 9;

/// Sample schedule of the boundary-free rotating stream: for each of the nine
/// pairs `(d, d+1 mod 9)`, the interleaved `(digit, angle)` sequence. Each
/// digit's angle ramps linearly over `[0, 2π)` across all its appearances.
pub fn mnist360_schedule(per_pair: usize) -> Vec<Vec<(usize, f64)>> {
    let pairs: Vec<(usize, usize)> = (0..MNIST360_DIGITS).map(|d| (d, (d + 1) % MNIST360_DIGITS)).collect();
    let first = per_pair.div_ceil(2);
    let second = per_pair / 2;
    let mut totals = [0usize; MNIST360_DIGITS];
    for &(a, b) in &pairs {
        totals[a] += first;
        totals[b] += second;
    }
    // Appearance counters follow stream order; digit 0 shows up first in pair
    // 0 and last in pair 8, so counting in pair order keeps every ramp monotone.
    let mut used = [0usize; MNIST360_DIGITS];
    let mut angle = |d: usize| {
        let a = 2.0 * PI * used[d] as f64 / totals[d] as f64;
        used[d] += 1;
        a
    };
    pairs
        .iter()
        .map(|&(a, b)| {
            // first digit at even slots, second at odd
            let mut out: Vec<(usize, f64)> = Vec::with_capacity(per_pair);
            let (mut na, mut nb) = (0, 0);
            for i in 0..per_pair {
                let take_a = (i % 2 == 0 && na < first) || nb >= second;
                let d = if take_a { a } else { b };
                if take_a {
                    na += 1;
                } else {
                    nb += 1;
                }
                out.push((d, angle(d)));
            }
            out
        })
        .collect()
}

/// Boundary-free rotating-digit stream over digits `0..=8`.
pub fn build_mnist360(base: &Dataset, opts: Mnist360Options, seed: u64) -> Result<TaskStream> {
    if opts.per_pair < 2 {
        return Err(Error::config("mnist360 needs at least two samples per pair"));
    }
    let side = image_side(base.train.dim())?;
    let mut rng = seeded_rng(seed);
    let mut pools: Vec<Vec<usize>> = (0..MNIST360_DIGITS).map(|d| base.train.indices_of(&[d])).collect();
    if let Some(d) = pools.iter().position(|p| p.is_empty()) {
        return Err(Error::config(format!("no training samples of digit {d}")));
    }
    pools.iter_mut().for_each(|p| p.shuffle(&mut rng));
    let mut cursor = [0usize; MNIST360_DIGITS];

    let phases = mnist360_schedule(opts.per_pair)
        .into_iter()
        .enumerate()
        .map(|(p, seq)| {
            let mut train = LabeledSet::empty(base.train.dim());
            for (d, theta) in seq {
                let pool = &pools[d];
                let idx = pool[cursor[d] % pool.len()];
                cursor[d] += 1;
                train.push(&rotate_image(base.train.input(idx), side, theta), d)?;
            }
            Ok(Phase {
                train,
                classes: Some(vec![p, (p + 1) % MNIST360_DIGITS]),
                boundary: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut test = LabeledSet::empty(base.test.dim());
    for d in 0..MNIST360_DIGITS {
        let mut idx = base.test.indices_of(&[d]);
        if idx.is_empty() {
            return Err(Error::config(format!("no test samples of digit {d}")));
        }
        idx.shuffle(&mut rng);
        for k in 0..opts.test_per_digit {
            let theta = rng.random_range(0.0..2.0 * PI);
            test.push(&rotate_image(base.test.input(idx[k % idx.len()]), side, theta), d)?;
        }
    }
    Ok(TaskStream {
        phases,
        eval: vec![EvalSplit {
            name: "mnist360".into(),
            test,
            classes: None,
        }],
        classes: MNIST360_DIGITS,
        setting: Setting::Gcl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::synth_digits;

    fn base() -> Dataset {
        Dataset {
            train: synth_digits(12, 1),
            test: synth_digits(4, 2),
        }
    }

    #[test]
    fn pmnist_identity_first_and_bijections() {
        let b = base();
        let s = build_pmnist(&b, StreamSize::new(3, 50, 20), true, 7).unwrap();
        assert_eq!(s.phases.len(), 3);
        assert_eq!(s.eval.len(), 3);
        assert_eq!(s.classes, 10);
        assert!(s.phases.iter().all(|p| p.boundary && p.train.len() == 50));
        // identity task: every image is a base image
        for i in 0..s.phases[0].train.len() {
            let x = s.phases[0].train.input(i);
            assert!((0..b.train.len()).any(|j| b.train.input(j) == x));
        }
        // permuted tasks keep each image's pixel multiset
        let x = s.phases[1].train.input(0);
        let mut sorted_x = x.to_vec();
        sorted_x.sort_by(f64::total_cmp);
        let found = (0..b.train.len()).any(|j| {
            let mut v = b.train.input(j).to_vec();
            v.sort_by(f64::total_cmp);
            v == sorted_x
        });
        assert!(found);
        assert_eq!(s, build_pmnist(&b, StreamSize::new(3, 50, 20), true, 7).unwrap());
    }

    #[test]
    fn rmnist_pixels_stay_in_range() {
        let s = build_rmnist(&base(), StreamSize::new(2, 30, 10), 3).unwrap();
        for p in &s.phases {
            assert!(p.train.inputs().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(s.setting, Setting::DomainIl);
    }

    #[test]
    fn oversized_request_is_rejected() {
        assert!(build_pmnist(&base(), StreamSize::new(1, 10_000, 10), false, 0).is_err());
        assert!(build_pmnist(&base(), StreamSize::new(0, 10, 10), false, 0).is_err());
    }

    #[test]
    fn split_partitions_classes() {
        let tasks: Vec<Vec<usize>> = (0..5).map(|t| vec![2 * t, 2 * t + 1]).collect();
        let s = build_split(&base(), &tasks, None, None, Setting::ClassIl, 4).unwrap();
        assert_eq!(s.phases.len(), 5);
        let mut all = Vec::new();
        for (p, set) in s.phases.iter().zip(&tasks) {
            assert!(p.train.labels().iter().all(|y| set.contains(y)));
            let mut labels = p.train.labels().to_vec();
            labels.sort_unstable();
            labels.dedup();
            assert_eq!(&labels, set);
            all.extend(labels);
        }
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let total: usize = s.phases.iter().map(|p| p.train.len()).sum();
        assert_eq!(total, base().train.len());

        let overlapping = vec![vec![0, 1], vec![1, 2]];
        assert!(matches!(
            build_split(&base(), &overlapping, None, None, Setting::TaskIl, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mnist360_schedule_properties() {
        let sched = mnist360_schedule(50);
        assert_eq!(sched.len(), 9);
        let mut last = [-1.0f64; 9];
        for (p, seq) in sched.iter().enumerate() {
            assert_eq!(seq.len(), 50);
            let pair = [p, (p + 1) % 9];
            for &(d, angle) in seq {
                assert!(pair.contains(&d));
                assert!(d < 9);
                assert!(angle >= last[d], "digit {d} angle went backwards");
                assert!((0.0..2.0 * PI).contains(&angle));
                last[d] = angle;
            }
            // the two digits alternate
            assert_ne!(seq[0].0, seq[1].0);
        }
    }

    #[test]
    fn mnist360_stream() {
        let s = build_mnist360(
            &base(),
            Mnist360Options {
                per_pair: 20,
                test_per_digit: 3,
            },
            5,
        )
        .unwrap();
        assert!(s.boundary_free());
        assert_eq!(s.classes, 9);
        assert_eq!(s.train_len(), 180);
        assert!(s.phases.iter().all(|p| !p.train.labels().contains(&9)));
        assert_eq!(s.eval[0].test.len(), 27);
        assert!(!s.eval[0].test.labels().contains(&9));
    }
}

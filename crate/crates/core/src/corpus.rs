//! Seeded random test functions.
//!
//! Every generator takes an explicit seed and uses ChaCha8, so a corpus is
//! reproducible across platforms and thread counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::{check_dim, CellBox, GridFunction};
use crate::group::{DyadicVec, GroupElement};
use crate::rearrange::{Chunk, StepFunction};

/// Level used for corpus samples in each dimension.
pub fn corpus_level(dim: usize) -> i32 {
    match dim {
        1 => 6,
        2 => 4,
        _ => 3,
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Three families, cycled: sums of signed boxes, cones, and cell noise.
/// With `nonnegative` all values are `>= 0`. Amplitudes span roughly
/// `[2^-3, 2^3]` so that truncation bands at several scales are hit.
pub fn random_grid_function(dim: usize, rng: &mut ChaCha8Rng, kind: usize, nonnegative: bool) -> Result<GridFunction> {
    check_dim(dim)?;
    let level = corpus_level(dim);
    let n = 1i64 << level;
    // a box of 1 to 3 unit cubes per axis, at a random integer offset
    let origin: Vec<i64> = (0..dim).map(|_| rng.gen_range(-2..=1) * n).collect();
    let extents: Vec<usize> = (0..dim).map(|_| (rng.gen_range(1..=3) * n) as usize).collect();
    let cells = CellBox::new(origin, extents)?;
    let h = 2f64.powi(-level);
    let amplitude = |rng: &mut ChaCha8Rng| {
        let a = 2f64.powf(rng.gen_range(-3.0..3.0));
        if nonnegative || rng.gen_bool(0.6) {
            a
        } else {
            -a
        }
    };
    let mut values = vec![0.0; usize::try_from(cells.cell_count()).expect("small box")];
    let centre = |idx: &[i64]| -> Vec<f64> { idx.iter().map(|&i| (i as f64 + 0.5) * h).collect() };
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..dim)
        .map(|a| (cells.origin[a] as f64 * h, cells.end(a) as f64 * h))
        .unzip();
    match kind % 3 {
        0 => {
            for _ in 0..rng.gen_range(1..=4) {
                let a = amplitude(rng);
                let bl: Vec<f64> = (0..dim).map(|d| rng.gen_range(lo[d]..hi[d])).collect();
                let bh: Vec<f64> = (0..dim).map(|d| rng.gen_range(bl[d]..hi[d])).collect();
                let mut flat = 0;
                cells.for_each(|idx| {
                    let x = centre(idx);
                    if x.iter().enumerate().all(|(d, &t)| t >= bl[d] && t < bh[d]) {
                        values[flat] += a;
                    }
                    flat += 1;
                });
            }
        }
        1 => {
            for _ in 0..rng.gen_range(1..=3) {
                let a = amplitude(rng);
                let c: Vec<f64> = (0..dim).map(|d| rng.gen_range(lo[d]..hi[d])).collect();
                let r = rng.gen_range(0.2..1.0);
                let mut flat = 0;
                cells.for_each(|idx| {
                    let x = centre(idx);
                    let d = x.iter().zip(&c).map(|(s, t)| (s - t).powi(2)).sum::<f64>().sqrt();
                    values[flat] += a * (1.0 - d / r).max(0.0);
                    flat += 1;
                });
            }
        }
        _ => {
            let a = amplitude(rng).abs();
            for v in &mut values {
                if rng.gen_bool(0.5) {
                    let x = a * rng.gen_range(0.0..1.0);
                    *v = if nonnegative || rng.gen_bool(0.5) { x } else { -x };
                }
            }
        }
    }
    GridFunction::new(level, cells, values)
}

/// `size` samples in dimension `dim`.
pub fn random_corpus(dim: usize, size: usize, seed: u64, nonnegative: bool) -> Result<Vec<GridFunction>> {
    let mut rng = rng_for(seed, dim as u64 + if nonnegative { 16 } else { 0 });
    (0..size)
        .map(|i| random_grid_function(dim, &mut rng, i, nonnegative))
        .collect()
}

/// Non-increasing step functions with 1 to 8 chunks, values and measures
/// spread over several orders of magnitude.
pub fn random_step_functions(size: usize, seed: u64) -> Vec<StepFunction> {
    let mut rng = rng_for(seed, 32);
    (0..size)
        .map(|_| {
            let count = rng.gen_range(1..=8);
            let mut values: Vec<f64> = (0..count).map(|_| 2f64.powf(rng.gen_range(-6.0..6.0))).collect();
            values.sort_by(|a, b| b.total_cmp(a));
            values.dedup();
            let chunks = values
                .into_iter()
                .map(|value| Chunk {
                    value,
                    measure: 2f64.powf(rng.gen_range(-8.0..4.0)),
                })
                .collect();
            StepFunction::new(chunks).expect("strictly decreasing positive chunks")
        })
        .collect()
}

/// Group elements with `|j| <= max_scale` and translations with dyadic
/// denominators up to `2^4`. The denominator is further capped at
/// `2^(base_level + j)` (a multiple of `2^-(base_level + j)` when that is
/// negative), so the element relabels the cells of a level
/// `base_level` grid without refining it.
pub fn random_group_elements(dim: usize, count: usize, max_scale: i32, base_level: i32, seed: u64) -> Vec<GroupElement> {
    let mut rng = rng_for(seed, 48 + dim as u64);
    (0..count)
        .map(|_| {
            let j = rng.gen_range(-max_scale..=max_scale);
            let finest = base_level + j;
            if finest < 0 {
                // the output cells are coarser than 1: translate by multiples
                // of their width
                let y: Vec<i64> = (0..dim).map(|_| rng.gen_range(-8i64..=8) << -finest).collect();
                return GroupElement::new(j, DyadicVec::new(y, 0));
            }
            let level = rng.gen_range(0..=finest.min(4));
            let span = 8i64 << level;
            let y: Vec<i64> = (0..dim).map(|_| rng.gen_range(-span..=span)).collect();
            GroupElement::new(j, DyadicVec::new(y, level))
        })
        .collect()
}

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{check_finite, sq_dist};

const MAX_LLOYD_ITERS: usize = 100;
const REL_INERTIA_TOL: f64 = 1e-6;

/// Local descriptors extracted from one video.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub video_id: String,
    /// One descriptor per row.
    pub descriptors: DMatrix<f64>,
}

/// Visual-word codebook, one basis per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub bases: DMatrix<f64>,
}

impl Codebook {
    pub fn size(&self) -> usize {
        self.bases.nrows()
    }

    pub fn dim(&self) -> usize {
        self.bases.ncols()
    }
}

/// Learns a codebook with k-means++ seeded Lloyd iterations over at most
/// `per_video_sample` randomly chosen descriptors of each video.
pub fn build_codebook(
    sets: &[DescriptorSet],
    codebook_size: usize,
    per_video_sample: usize,
    seed: u64,
) -> Result<Codebook> {
    if codebook_size == 0 {
        return Err(Error::BadConfig("codebook size must be positive".into()));
    }
    let dim = sets.first().map_or(0, |s| s.descriptors.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Vec<f64>> = Vec::new();
    for set in sets {
        check_finite(&set.descriptors)?;
        if set.descriptors.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: set.descriptors.ncols(),
            });
        }
        let m = set.descriptors.nrows();
        let mut picked = if m > per_video_sample {
            index::sample(&mut rng, m, per_video_sample).into_vec()
        } else {
            (0..m).collect()
        };
        picked.sort_unstable();
        for i in picked {
            points.push(set.descriptors.row(i).iter().copied().collect());
        }
    }

    let distinct: HashSet<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|v| v.to_bits()).collect())
        .collect();
    if distinct.len() < codebook_size {
        return Err(Error::InsufficientData(format!(
            "{} distinct descriptors for a codebook of {codebook_size}",
            distinct.len()
        )));
    }

    let mut centers = kmeans_pp_init(&points, codebook_size, &mut rng);
    let mut assign = vec![0usize; points.len()];
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..MAX_LLOYD_ITERS {
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(&centers, p);
            assign[i] = c;
            inertia += d;
        }
        let mut sums = vec![vec![0.0; dim]; codebook_size];
        let mut counts = vec![0usize; codebook_size];
        for (p, &c) in points.iter().zip(&assign) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..codebook_size {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centers[c] = sums[c].iter().map(|s| s / n).collect();
            } else {
                // empty cluster: move it onto the point worst served by its center
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centers[assign[a]]);
                        let db = sq_dist(&points[b], &centers[assign[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap();
                centers[c] = points[far].clone();
                assign[far] = c;
            }
        }
        let done = prev_inertia.is_finite()
            && (prev_inertia - inertia).abs() <= REL_INERTIA_TOL * prev_inertia.max(f64::MIN_POSITIVE);
        prev_inertia = inertia;
        if done || inertia == 0.0 {
            break;
        }
    }

    let bases = DMatrix::from_fn(codebook_size, dim, |i, j| centers[i][j]);
    Ok(Codebook { bases })
}

fn nearest(centers: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(center, p);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let first = rng.gen_range(0..points.len());
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    if r < d {
                        chosen = Some(i);
                        break;
                    }
                    r -= d;
                }
            }
            // rounding can leave r just past the end
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            unreachable!("distinct point count checked by caller")
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    centers
}

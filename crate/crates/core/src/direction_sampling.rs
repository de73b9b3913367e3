//! Unit directions on the sphere.
//!
//! A direction is a normalized vector of independent Gaussian coordinates,
//! each obtained from a uniform draw by inverse transform. Well-spread sets
//! are made by oversampling a scrambled Halton pool and then repeatedly
//! discarding the point that feels the largest "pressure" from the others.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::gaussian_geometry::SpaceDim;
use crate::points::{dist_sq, norm, PointSet};
use crate::rng::RngStream;
use crate::special::norm_ppf;

pub const DEFAULT_OVERSAMPLE: f64 = 7.0;

/// A set of unit vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    pub dim: SpaceDim,
    pub directions: PointSet,
}

impl DirectionSet {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// One direction from i.i.d. uniform draws.
pub fn sample_direction(rng: &mut RngStream, dim: SpaceDim) -> Vec<f64> {
    let n = dim.get();
    loop {
        let m: Vec<f64> = (0..n).map(|_| norm_ppf(rng.open01())).collect();
        let len = norm(&m);
        if len > 0.0 && len.is_finite() {
            return m.into_iter().map(|v| v / len).collect();
        }
    }
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut k = 2u64;
    while primes.len() < count {
        if primes
            .iter()
            .take_while(|&&p| p * p <= k)
            .all(|&p| !k.is_multiple_of(p))
        {
            primes.push(k);
        }
        k += 1;
    }
    primes
}

/// Halton sequence with an independent random permutation of the digits
/// at every (coordinate, digit position), plus a uniform jitter below the
/// last retained digit so each coordinate is exactly uniform on (0, 1).
pub struct ScrambledHalton {
    bases: Vec<u64>,
    perms: Vec<Vec<Vec<u32>>>,
    jitter: RngStream,
}

impl ScrambledHalton {
    pub fn new(rng: &mut RngStream, dims: usize) -> Self {
        use rand::seq::SliceRandom;
        let bases = first_primes(dims);
        let perms = bases
            .iter()
            .map(|&b| {
                let digits = (53.0 / (b as f64).log2()).ceil() as usize;
                (0..digits)
                    .map(|_| {
                        let mut p: Vec<u32> = (0..b as u32).collect();
                        p.shuffle(rng);
                        p
                    })
                    .collect()
            })
            .collect();
        ScrambledHalton {
            bases,
            perms,
            jitter: rng.derive(0x4A17),
        }
    }

    pub fn dims(&self) -> usize {
        self.bases.len()
    }

    /// Coordinates of point `index`, written into `out`.
    pub fn point(&mut self, index: u64, out: &mut [f64]) {
        for (v, slot) in out.iter_mut().enumerate() {
            let b = self.bases[v];
            let inv_b = 1.0 / b as f64;
            let mut scale = inv_b;
            let mut k = index;
            let mut u = 0.0;
            for perm in &self.perms[v] {
                let digit = (k % b) as usize;
                k /= b;
                u += perm[digit] as f64 * scale;
                scale *= inv_b;
            }
            u += self.jitter.open01() * scale * b as f64;
            *slot = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        }
    }
}

/// `m` low-discrepancy directions from a scrambled sequence.
pub fn low_discrepancy_directions(rng: &mut RngStream, m: usize, dim: SpaceDim) -> PointSet {
    let n = dim.get();
    let mut seq = ScrambledHalton::new(rng, n);
    let mut out = PointSet::with_capacity(n, m);
    let mut u = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut index = 0u64;
    while out.len() < m {
        seq.point(index, &mut u);
        index += 1;
        for (xv, &uv) in x.iter_mut().zip(&u) {
            *xv = norm_ppf(uv);
        }
        let len = norm(&x);
        if !(len > 0.0 && len.is_finite()) {
            continue;
        }
        for xv in &mut x {
            *xv /= len;
        }
        out.push(&x);
    }
    out
}

/// Pair contribution `1/d^N`, or `None` when it is infinite.
fn pair_pressure(d2: f64, n: usize) -> Option<f64> {
    let inv = 1.0 / d2;
    let mut p = inv.powi((n / 2) as i32);
    if n % 2 == 1 {
        p *= inv.sqrt();
    }
    if d2 > 0.0 && p.is_finite() {
        Some(p)
    } else {
        None
    }
}

/// Keep `n` points of `pool` by iterated maximum-pressure removal.
///
/// Pressures are summed once and then decremented as points leave. A point
/// with a coincident earlier partner still alive counts as infinitely
/// pressed. When a decrement cancels most of a sum, that sum is recomputed
/// from scratch so the comparison stays meaningful in high dimension.
pub fn thin_by_pressure(pool: &DirectionSet, n: usize) -> Result<DirectionSet> {
    let pts = &pool.directions;
    let m = pts.len();
    if n == 0 || n > m {
        return Err(domain(format!("cannot thin {m} points to {n}")));
    }
    let dim = pool.dim.get();
    let mut alive = vec![true; m];
    let mut dup_before = vec![0usize; m];
    let mut sum = vec![0.0f64; m];
    for i in 0..m {
        for j in (i + 1)..m {
            match pair_pressure(dist_sq(pts.point(i), pts.point(j)), dim) {
                Some(p) => {
                    sum[i] += p;
                    sum[j] += p;
                }
                None => dup_before[j] += 1,
            }
        }
    }
    let recompute = |k: usize, alive: &[bool]| -> f64 {
        (0..m)
            .filter(|&j| j != k && alive[j])
            .filter_map(|j| pair_pressure(dist_sq(pts.point(k), pts.point(j)), dim))
            .sum()
    };
    for _ in 0..(m - n) {
        let mut best = usize::MAX;
        for i in 0..m {
            if !alive[i] {
                continue;
            }
            if best == usize::MAX {
                best = i;
                continue;
            }
            let (ib, bb) = (dup_before[i] > 0, dup_before[best] > 0);
            if (ib && !bb) || (ib == bb && !ib && sum[i] > sum[best]) {
                best = i;
            }
        }
        alive[best] = false;
        for j in 0..m {
            if !alive[j] {
                continue;
            }
            match pair_pressure(dist_sq(pts.point(best), pts.point(j)), dim) {
                Some(p) => {
                    let before = sum[j];
                    sum[j] -= p;
                    if sum[j] < 1e-9 * before {
                        sum[j] = recompute(j, &alive);
                    }
                }
                None => {
                    if best < j {
                        dup_before[j] -= 1;
                    }
                }
            }
        }
    }
    Ok(DirectionSet {
        dim: pool.dim,
        directions: pts.retain_by(&alive),
    })
}

/// `n` well-spread directions from an oversampled low-discrepancy pool.
///
/// In one dimension only the two directions `+1` and `-1` exist, so `n` is
/// capped at 2.
pub fn spread_directions(
    rng: &mut RngStream,
    n: usize,
    dim: SpaceDim,
    oversample: f64,
) -> Result<DirectionSet> {
    if n == 0 {
        return Err(domain("direction count must be at least 1"));
    }
    if !(oversample >= 1.0) {
        return Err(domain(format!(
            "oversample factor must be >= 1, got {oversample}"
        )));
    }
    if dim.get() == 1 {
        if n > 2 {
            log::warn!("only two directions exist in one dimension; capping {n} to 2");
        }
        let mut d = PointSet::new(1);
        let first = if rng.open01() < 0.5 { 1.0 } else { -1.0 };
        d.push(&[first]);
        if n >= 2 {
            d.push(&[-first]);
        }
        return Ok(DirectionSet { dim, directions: d });
    }
    let m = ((oversample * n as f64).ceil() as usize).max(n);
    let pool = DirectionSet {
        dim,
        directions: low_discrepancy_directions(rng, m, dim),
    };
    thin_by_pressure(&pool, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(n: usize) -> SpaceDim {
        SpaceDim::new(n).unwrap()
    }

    fn min_pair_dist(p: &PointSet) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..p.len() {
            for j in (i + 1)..p.len() {
                best = best.min(dist_sq(p.point(i), p.point(j)).sqrt());
            }
        }
        best
    }

    #[test]
    fn one_dimensional_directions_are_signs() {
        let mut rng = RngStream::new(3);
        for _ in 0..20 {
            let s = sample_direction(&mut rng, d(1));
            assert!(s[0] == 1.0 || s[0] == -1.0);
        }
    }

    #[test]
    fn directions_are_unit_and_centred() {
        let mut rng = RngStream::new(11);
        let mut mean = [0.0; 3];
        let n = 100_000;
        for _ in 0..n {
            let s = sample_direction(&mut rng, d(3));
            assert!((norm(&s) - 1.0).abs() < 1e-12);
            for v in 0..3 {
                mean[v] += s[v] / n as f64;
            }
        }
        for m in mean {
            assert!(m.abs() < 0.01);
        }
    }

    #[test]
    fn halton_coordinates_are_uniform() {
        let mut rng = RngStream::new(5);
        let mut seq = ScrambledHalton::new(&mut rng, 3);
        let mut u = [0.0; 3];
        let n = 4096;
        let mut buckets = [[0usize; 8]; 3];
        for i in 0..n {
            seq.point(i, &mut u);
            for v in 0..3 {
                assert!(u[v] > 0.0 && u[v] < 1.0);
                buckets[v][(u[v] * 8.0) as usize] += 1;
            }
        }
        for b in buckets {
            for c in b {
                // Low discrepancy keeps every bucket within a few points of n/8.
                assert!((c as i64 - 512).abs() <= 8, "{c}");
            }
        }
    }

    #[test]
    fn thinning_identity_when_nothing_to_remove() {
        let mut rng = RngStream::new(1);
        let pool = DirectionSet {
            dim: d(3),
            directions: low_discrepancy_directions(&mut rng, 20, d(3)),
        };
        assert_eq!(thin_by_pressure(&pool, 20).unwrap(), pool);
        assert!(thin_by_pressure(&pool, 21).is_err());
        assert!(thin_by_pressure(&pool, 0).is_err());
    }

    #[test]
    fn thinning_keeps_isolated_point() {
        let angles = [0.0f64, 0.05, 0.1, 3.0];
        let rows: Vec<Vec<f64>> = angles.iter().map(|a| vec![a.cos(), a.sin()]).collect();
        let pool = DirectionSet {
            dim: d(2),
            directions: PointSet::from_rows(2, &rows),
        };
        let out = thin_by_pressure(&pool, 2).unwrap();
        let kept = out.directions.to_rows();
        assert!(kept.contains(&rows[3]));
        assert!(kept[0] == rows[0] || kept[0] == rows[1] || kept[0] == rows[2]);
        // Brute force: the middle of the cluster is pressed hardest, then the
        // more crowded of the remaining two.
        let pressure = |set: &[usize], i: usize| -> f64 {
            set.iter()
                .filter(|&&j| j != i)
                .map(|&j| 1.0 / dist_sq(&rows[i], &rows[j]))
                .sum()
        };
        let mut set = vec![0, 1, 2, 3];
        while set.len() > 2 {
            let worst = *set
                .iter()
                .max_by(|&&a, &&b| {
                    pressure(&set, a)
                        .total_cmp(&pressure(&set, b))
                        .then(b.cmp(&a))
                })
                .unwrap();
            set.retain(|&k| k != worst);
        }
        let expected: Vec<Vec<f64>> = set.iter().map(|&k| rows[k].clone()).collect();
        assert_eq!(kept, expected);
    }

    #[test]
    fn duplicates_removed_later_first() {
        let rows = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
        ];
        let pool = DirectionSet {
            dim: d(2),
            directions: PointSet::from_rows(2, &rows),
        };
        let out = thin_by_pressure(&pool, 3).unwrap().directions.to_rows();
        assert_eq!(out, vec![rows[0].clone(), rows[1].clone(), rows[3].clone()]);
    }

    #[test]
    fn thinning_increases_min_distance() {
        for &(n, dim) in &[(5usize, 2usize), (24, 6), (46, 10)] {
            let mut rng = RngStream::new(9);
            let m = 7 * n;
            let pool = DirectionSet {
                dim: d(dim),
                directions: low_discrepancy_directions(&mut rng, m, d(dim)),
            };
            let thin = thin_by_pressure(&pool, n).unwrap();
            assert!(min_pair_dist(&thin.directions) > min_pair_dist(&pool.directions));
        }
    }

    #[test]
    fn spread_circle_quality() {
        let mut rng = RngStream::new(2024);
        let set = spread_directions(&mut rng, 64, d(2), DEFAULT_OVERSAMPLE).unwrap();
        assert_eq!(set.len(), 64);
        let mut ang: Vec<f64> = set.directions.iter().map(|s| s[1].atan2(s[0])).collect();
        ang.sort_by(f64::total_cmp);
        let mut gaps: Vec<f64> = ang.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.push(ang[0] + 2.0 * std::f64::consts::PI - ang[63]);
        let mean = gaps.iter().sum::<f64>() / 64.0;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / 64.0;
        let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        // Greedy removal reaches 0.52 of the mean gap at worst over 200 seeds.
        assert!(
            min_gap >= 0.5 * 2.0 * std::f64::consts::PI / 64.0,
            "min gap {min_gap}"
        );
        assert!(var.sqrt() / mean < 0.5);
    }

    #[test]
    fn spread_small_and_one_dimensional() {
        let mut rng = RngStream::new(8);
        let s = spread_directions(&mut rng, 5, d(2), DEFAULT_OVERSAMPLE).unwrap();
        assert_eq!(s.len(), 5);
        for x in s.directions.iter() {
            assert!((norm(x) - 1.0).abs() < 1e-12);
        }
        let one = spread_directions(&mut rng, 1, d(4), DEFAULT_OVERSAMPLE).unwrap();
        assert_eq!(one.len(), 1);
        let line = spread_directions(&mut rng, 5, d(1), DEFAULT_OVERSAMPLE).unwrap();
        assert_eq!(line.len(), 2);
    }
}

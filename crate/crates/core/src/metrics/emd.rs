use std::collections::VecDeque;

use crate::error::{Error, Result};

use super::pointset::PointSet;

/// Largest size solved with the exact assignment algorithm.
pub const EXACT_EMD_MAX: usize = 512;
/// Each auction phase divides epsilon by this factor.
pub const AUCTION_EPS_FACTOR: f64 = 5.0;
/// Final auction epsilon times `n`, relative to the largest pairwise distance.
pub const AUCTION_FINAL_EPS: f64 = 1e-9;

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn cost_matrix(p: &PointSet, q: &PointSet) -> Result<Vec<f64>> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!(
            "matching needs equal sizes, got {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut c = Vec::with_capacity(p.len() * q.len());
    for a in p.points() {
        c.extend(q.points().iter().map(|b| dist(a, b)));
    }
    Ok(c)
}

fn mean_matched(c: &[f64], n: usize, assign: &[usize]) -> f64 {
    assign.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum::<f64>() / n as f64
}

/// Minimum-cost perfect matching for a square row-major cost matrix
/// (shortest augmenting paths with potentials). Returns the column of each row.
pub fn hungarian(c: &[f64], n: usize) -> Vec<usize> {
    // 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[row_of[j] - 1] = j - 1;
    }
    assign
}

/// Epsilon-scaling forward auction for the minimum-cost matching.
///
/// Epsilon starts at a quarter of the largest cost and is divided by
/// [`AUCTION_EPS_FACTOR`] per phase down to [`AUCTION_FINAL_EPS`] times the
/// largest cost over `n`, so the final matching's total cost is within
/// `AUCTION_FINAL_EPS * max_cost` of the optimum. Unassigned rows bid in
/// FIFO order, so the result is deterministic.
pub fn auction(c: &[f64], n: usize) -> Vec<usize> {
    let cmax = c.iter().cloned().fold(0.0, f64::max);
    if n == 1 || cmax == 0.0 {
        return (0..n).collect();
    }
    let final_eps = cmax * AUCTION_FINAL_EPS / n as f64;
    let mut eps = cmax / 4.0;
    let mut price = vec![0.0; n];
    let mut owner = vec![usize::MAX; n];
    let mut assign = vec![usize::MAX; n];
    loop {
        owner.fill(usize::MAX);
        assign.fill(usize::MAX);
        let mut queue: VecDeque<usize> = (0..n).collect();
        while let Some(i) = queue.pop_front() {
            let row = &c[i * n..(i + 1) * n];
            let (mut best, mut best_j, mut second) = (f64::NEG_INFINITY, 0, f64::NEG_INFINITY);
            for j in 0..n {
                let value = -row[j] - price[j];
                if value > best {
                    second = best;
                    best = value;
                    best_j = j;
                } else if value > second {
                    second = value;
                }
            }
            price[best_j] += best - second + eps;
            if owner[best_j] != usize::MAX {
                assign[owner[best_j]] = usize::MAX;
                queue.push_back(owner[best_j]);
            }
            owner[best_j] = i;
            assign[i] = best_j;
        }
        if eps <= final_eps {
            return assign;
        }
        eps = (eps / AUCTION_EPS_FACTOR).max(final_eps);
    }
}

/// Mean matched Euclidean distance under the optimal matching.
pub fn emd_exact(p: &PointSet, q: &PointSet) -> Result<f64> {
    let c = cost_matrix(p, q)?;
    Ok(mean_matched(&c, p.len(), &hungarian(&c, p.len())))
}

/// Mean matched Euclidean distance under the auction matching.
pub fn emd_auction(p: &PointSet, q: &PointSet) -> Result<f64> {
    let c = cost_matrix(p, q)?;
    Ok(mean_matched(&c, p.len(), &auction(&c, p.len())))
}

/// Earth mover's distance between equal-size point sets as the mean
/// matched distance: exact up to [`EXACT_EMD_MAX`] points, auction above.
pub fn emd_approx(p: &PointSet, q: &PointSet) -> Result<f64> {
    if p.len() <= EXACT_EMD_MAX {
        emd_exact(p, q)
    } else {
        emd_auction(p, q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::rng::{StreamId, StreamTag};
    use rand::Rng;

    fn random_set(seed: u64, n: usize) -> PointSet {
        let mut rng = StreamId::new(seed, 9, 1, StreamTag::Misc).rng();
        PointSet::new((0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect()).unwrap()
    }

    fn brute_min(c: &[f64], n: usize) -> f64 {
        fn rec(c: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(c, n, row + 1, used, acc + c[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(c, n, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    #[test]
    fn hungarian_matches_permutation_search() {
        for s in 0..20 {
            let n = 1 + (s as usize % 7);
            let (p, q) = (random_set(s, n), random_set(s + 50, n));
            let c = cost_matrix(&p, &q).unwrap();
            let a = hungarian(&c, n);
            let mut seen = a.clone();
            seen.sort();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            let got: f64 = a.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum();
            assert!((got - brute_min(&c, n)).abs() < 1e-12);
        }
    }

    #[test]
    fn auction_within_two_percent_of_exact() {
        for s in 0..3 {
            let (p, q) = (random_set(s, 128), random_set(s + 7, 128));
            let exact = emd_exact(&p, &q).unwrap();
            let approx = emd_auction(&p, &q).unwrap();
            assert!(approx >= exact - 1e-12);
            assert!((approx - exact) / exact <= 0.02, "{approx} vs {exact}");
        }
    }

    #[test]
    fn identities_and_errors() {
        let p = random_set(3, 64);
        assert_eq!(emd_approx(&p, &p).unwrap(), 0.0);
        assert_eq!(emd_auction(&p, &p).unwrap(), 0.0);
        let q = random_set(4, 64);
        assert!((emd_approx(&p, &q).unwrap() - emd_approx(&q, &p).unwrap()).abs() < 1e-12);
        let a = PointSet::new(vec![[1.0, 2.0, 3.0]]).unwrap();
        let b = PointSet::new(vec![[1.0, 2.0, 3.5]]).unwrap();
        assert_eq!(emd_approx(&a, &b).unwrap(), 0.5);
        assert_eq!(emd_auction(&a, &b).unwrap(), 0.5);
        assert!(emd_approx(&p, &random_set(1, 63)).is_err());
    }

    #[test]
    fn large_sets_use_auction() {
        let (p, q) = (random_set(5, 2048), random_set(6, 2048));
        assert_eq!(emd_approx(&p, &q).unwrap(), emd_auction(&p, &q).unwrap());
        assert_eq!(emd_approx(&p, &p).unwrap(), 0.0);
    }
}

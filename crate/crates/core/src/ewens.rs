//! The Ewens distribution on permutations: normalizer, sampler, fixed-point
//! laws and the Poisson-type domination tail.

use rand::Rng;

use crate::error::{invalid, Result};

/// A permutation of `0..n`, `perm[i]` being the image of `i`.
pub type Permutation = Vec<usize>;

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta > 0.0 {
        Ok(())
    } else {
        Err(invalid("theta", format!("Ewens parameter must be > 0 (got {theta})")))
    }
}

/// `Z(theta, n) = theta (theta + 1) ... (theta + n - 1)`.
pub fn ewens_normalizer(theta: f64, n: usize) -> Result<f64> {
    check_theta(theta)?;
    Ok((0..n).map(|i| theta + i as f64).product())
}

/// `ln Z(theta, n)`, stable for large `n`.
pub fn ln_ewens_normalizer(theta: f64, n: usize) -> Result<f64> {
    check_theta(theta)?;
    Ok((0..n).map(|i| (theta + i as f64).ln()).sum())
}

pub fn cycle_count(perm: &[usize]) -> usize {
    let mut seen = vec![false; perm.len()];
    let mut c = 0;
    for s in 0..perm.len() {
        if seen[s] {
            continue;
        }
        c += 1;
        let mut i = s;
        while !seen[i] {
            seen[i] = true;
            i = perm[i];
        }
    }
    c
}

pub fn fixed_points(perm: &[usize]) -> usize {
    perm.iter().enumerate().filter(|&(i, &p)| i == p).count()
}

/// `theta^c(sigma) / Z(theta, n)`.
pub fn ewens_probability(theta: f64, perm: &[usize]) -> Result<f64> {
    let ln_z = ln_ewens_normalizer(theta, perm.len())?;
    Ok((cycle_count(perm) as f64 * theta.ln() - ln_z).exp())
}

/// Draws from the Ewens law by sequential insertion: element `i` opens a new
/// cycle with probability `theta / (theta + i)`, otherwise it is spliced in
/// after a uniformly chosen earlier element.
pub fn sample_ewens<R: Rng + ?Sized>(theta: f64, n: usize, rng: &mut R) -> Permutation {
    let mut perm: Permutation = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = rng.random::<f64>() * (theta + i as f64);
        if u < theta {
            perm.push(i);
        } else {
            let j = rng.random_range(0..i);
            perm.push(perm[j]);
            perm[j] = i;
        }
    }
    perm
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Permutation> {
    let mut out = Vec::new();
    let mut p: Permutation = (0..n).collect();
    loop {
        out.push(p.clone());
        if !next_permutation(&mut p) {
            return out;
        }
    }
}

/// Advances `p` to the next permutation in lexicographic order.
pub fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `P(no point of a fixed s-subset is fixed)` under Ewens(theta, m), for all
/// `m <= n`, `s <= m`, via
/// `r(m, s) = r(m, s-1) - theta/(theta+m-1) r(m-1, s-1)`.
fn no_fixed_table(theta: f64, n: usize) -> Vec<Vec<f64>> {
    let mut r = vec![vec![0.0; n + 1]; n + 1];
    for m in 0..=n {
        r[m][0] = 1.0;
        for s in 1..=m {
            let hit = theta / (theta + (m - 1) as f64);
            r[m][s] = r[m][s - 1] - hit * r[m - 1][s - 1];
        }
    }
    r
}

/// Probability that a Ewens(theta, n) permutation has exactly `a_j` fixed
/// points inside disjoint blocks of sizes `v_j`.
pub fn fixed_point_prob(theta: f64, n: usize, v: &[usize], a: &[usize]) -> Result<f64> {
    check_theta(theta)?;
    if v.len() != a.len() {
        return Err(invalid("a", "block sizes and fixed-point counts differ in length"));
    }
    let total_v: usize = v.iter().sum();
    if total_v > n {
        return Err(invalid("v", format!("blocks cover {total_v} > n = {n} points")));
    }
    if a.iter().zip(v).any(|(ai, vi)| ai > vi) {
        return Ok(0.0);
    }
    let total_a: usize = a.iter().sum();
    let table = no_fixed_table(theta, n);
    Ok(fixed_point_prob_with(theta, n, v, a, total_v, total_a, &table))
}

fn fixed_point_prob_with(
    theta: f64,
    n: usize,
    v: &[usize],
    a: &[usize],
    total_v: usize,
    total_a: usize,
    table: &[Vec<f64>],
) -> f64 {
    let choose: f64 = v.iter().zip(a).map(|(&vi, &ai)| binomial(vi, ai)).product();
    let all_fixed: f64 = (0..total_a).map(|i| theta / (theta + (n - 1 - i) as f64)).product();
    choose * all_fixed * table[n - total_a][total_v - total_a]
}

/// `q(theta, n, v, k)`: probability of at least `k` fixed points among `v`
/// given points.
pub fn fixed_point_tail(theta: f64, n: usize, v: usize, k: usize) -> Result<f64> {
    check_theta(theta)?;
    if v > n {
        return Err(invalid("v", format!("v = {v} exceeds n = {n}")));
    }
    let table = no_fixed_table(theta, n);
    Ok((k..=v)
        .map(|a| fixed_point_prob_with(theta, n, &[v], &[a], v, a, &table))
        .sum::<f64>()
        .clamp(0.0, 1.0))
}

/// `P(Y >= k) = min{1, sum_{j >= k} max{1, N/2}^j / j!}`.
pub fn domination_tail(big_n: f64, k: usize) -> f64 {
    let m = (big_n / 2.0).max(1.0);
    let mut term: f64 = (1..=k).fold(1.0, |t, j| t * m / j as f64);
    let mut sum = 0.0f64;
    let mut j = k;
    while term > 1e-18 * sum.max(1e-300) || j < k + 2 {
        sum += term;
        j += 1;
        term *= m / j as f64;
        if sum >= 1.0 {
            return 1.0;
        }
    }
    sum.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalizer() {
        assert_eq!(ewens_normalizer(1.0, 4).unwrap(), 24.0);
        assert_relative_eq!(ewens_normalizer(0.5, 3).unwrap(), 1.875);
        assert_eq!(ewens_normalizer(3.3, 0).unwrap(), 1.0);
        assert!(ewens_normalizer(0.0, 2).is_err());
        for n in 1..20 {
            let z = ewens_normalizer(0.7, n).unwrap();
            let prev = ewens_normalizer(0.7, n - 1).unwrap();
            assert_relative_eq!(z, (0.7 + n as f64 - 1.0) * prev, max_relative = 1e-14);
        }
    }

    #[test]
    fn law_sums_to_one() {
        for theta in [0.5, 1.0, 2.5] {
            let s: f64 = permutations(5).iter().map(|p| ewens_probability(theta, p).unwrap()).sum();
            assert_relative_eq!(s, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn sampler_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            assert_eq!(sample_ewens(2.0, 1, &mut rng), vec![0]);
        }
        let ids = (0..100_000)
            .filter(|_| fixed_points(&sample_ewens(1e3, 3, &mut rng)) == 3)
            .count();
        assert!(ids as f64 / 1e5 >= 0.99);
    }

    #[test]
    fn fixed_point_laws_against_brute_force() {
        for theta in [0.5, 1.0, 2.0] {
            let n = 6;
            let perms = permutations(n);
            // Blocks {0,1} and {2,3,4}.
            for a0 in 0..=2 {
                for a1 in 0..=3 {
                    let brute: f64 = perms
                        .iter()
                        .filter(|p| {
                            (0..2).filter(|&i| p[i] == i).count() == a0
                                && (2..5).filter(|&i| p[i] == i).count() == a1
                        })
                        .map(|p| ewens_probability(theta, p).unwrap())
                        .sum();
                    let dp = fixed_point_prob(theta, n, &[2, 3], &[a0, a1]).unwrap();
                    assert_relative_eq!(dp, brute, epsilon = 1e-13);
                }
            }
        }
        assert_relative_eq!(fixed_point_tail(1.0, 4, 4, 1).unwrap(), 15.0 / 24.0, epsilon = 1e-14);
        let id = 1.5f64.powi(5) / ewens_normalizer(1.5, 5).unwrap();
        assert_relative_eq!(fixed_point_tail(1.5, 5, 5, 5).unwrap(), id, max_relative = 1e-13);
        assert_eq!(fixed_point_prob(1.0, 3, &[], &[]).unwrap(), 1.0);
        assert_eq!(fixed_point_prob(1.0, 3, &[1], &[2]).unwrap(), 0.0);
    }

    #[test]
    fn domination_values() {
        assert_eq!(domination_tail(2.0, 0), 1.0);
        assert_relative_eq!(domination_tail(2.0, 2), std::f64::consts::E - 2.0, epsilon = 1e-14);
        assert_eq!(domination_tail(4.0, 1), 1.0);
        assert_relative_eq!(
            domination_tail(1.0, 3),
            std::f64::consts::E - 2.5,
            epsilon = 1e-14
        );
    }
}

//! Binomials with the zero convention, multi-index helpers, and the two
//! binomial summation identities used by the Taylor expansions.

/// `C(a, b)`, zero unless `0 <= b <= a`.
pub fn binom(a: i64, b: i64) -> u128 {
    if a < 0 || b < 0 || b > a {
        return 0;
    }
    let b = b.min(a - b) as u128;
    let a = a as u128;
    let mut acc: u128 = 1;
    for i in 0..b {
        acc = acc * (a - i) / (i + 1);
    }
    acc
}

pub fn factorial(n: u32) -> u128 {
    (1..=n as u128).product()
}

/// `(2j − 1)!! = (2j − 1)(2j − 3)···1`, with `(−1)!! = 1`.
pub fn double_factorial_odd(j: u32) -> u128 {
    (1..=j as u128).map(|i| 2 * i - 1).product()
}

/// `Π_j C(γ_j, α_j)`; a missing entry in the shorter index counts as zero.
pub fn multi_binom(gamma: &[i64], alpha: &[i64]) -> u128 {
    let d = gamma.len().max(alpha.len());
    (0..d)
        .map(|j| binom(gamma.get(j).copied().unwrap_or(0), alpha.get(j).copied().unwrap_or(0)))
        .product()
}

/// `α! = Π α_j!`.
pub fn multi_factorial(alpha: &[u32]) -> u128 {
    alpha.iter().map(|&a| factorial(a)).product()
}

/// All multi-indices in `Z_+^d` with `|α| = total`, in lexicographic order.
pub fn multi_indices_of_total(d: usize, total: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == d {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for a in (0..=left).rev() {
            prefix.push(a);
            rec(d, left - a, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(d, total, &mut Vec::with_capacity(d), &mut out);
    out
}

/// All multi-indices with `|α| <= max_total`, grouped by total degree.
pub fn multi_indices_up_to(d: usize, max_total: u32) -> Vec<Vec<u32>> {
    (0..=max_total).flat_map(|m| multi_indices_of_total(d, m)).collect()
}

/// Left side of `Σ_{j=0}^{c} C(a−c, b−j) C(c, j) = C(a, b)`.
pub fn vandermonde_split_sum(a: i64, b: i64, c: i64) -> u128 {
    (0..=c).map(|j| binom(a - c, b - j) * binom(c, j)).sum()
}

/// Left side of `Σ_{|α| = m, α <= γ} C(γ, α) = C(|γ|, m)`.
pub fn bounded_multi_binom_sum(gamma: &[u32], m: u32) -> u128 {
    multi_indices_of_total(gamma.len(), m)
        .into_iter()
        .filter(|alpha| alpha.iter().zip(gamma).all(|(a, g)| a <= g))
        .map(|alpha| {
            let g: Vec<i64> = gamma.iter().map(|&x| x as i64).collect();
            let a: Vec<i64> = alpha.iter().map(|&x| x as i64).collect();
            multi_binom(&g, &a)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_convention() {
        assert_eq!(binom(5, 2), 10);
        assert_eq!(binom(5, -1), 0);
        assert_eq!(binom(5, 6), 0);
        assert_eq!(binom(0, 0), 1);
        assert_eq!(binom(60, 30), 118_264_581_564_861_424);
    }

    #[test]
    fn multi_binom_examples() {
        assert_eq!(multi_binom(&[2, 1], &[1, 0]), 2);
        assert_eq!(multi_binom(&[2, 1], &[3, 0]), 0);
        assert_eq!(bounded_multi_binom_sum(&[2, 1], 1), 3);
        assert_eq!(vandermonde_split_sum(5, 3, 2), 10);
    }

    #[test]
    fn index_enumeration_counts() {
        // Number of α in Z_+^d with |α| = m is C(m + d − 1, d − 1).
        for d in 1..5usize {
            for m in 0..7u32 {
                assert_eq!(
                    multi_indices_of_total(d, m).len() as u128,
                    binom((m as usize + d - 1) as i64, (d - 1) as i64)
                );
            }
        }
        assert_eq!(multi_indices_up_to(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn double_factorials() {
        assert_eq!(double_factorial_odd(0), 1);
        assert_eq!(double_factorial_odd(1), 1);
        assert_eq!(double_factorial_odd(3), 15);
        assert_eq!(factorial(5), 120);
        assert_eq!(multi_factorial(&[2, 3]), 12);
    }
}

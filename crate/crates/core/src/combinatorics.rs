//! Log-factorials, binomials and composition enumeration.

/// `ln k!` for `k = 0..=n`, by cumulative summation.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `ln C(n, k)` from a log-factorial table covering `n`.
pub fn ln_binomial(table: &[f64], n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    table[n] - table[k] - table[n - k]
}

/// Exact `C(n, k)` as `u128`, `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(acc)
}

/// `n!` as `u128`, `None` on overflow.
pub fn factorial(n: u64) -> Option<u128> {
    (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k))
}

/// All length-`parts` vectors of nonnegative integers summing to `total`, in
/// lexicographically decreasing order.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; parts];
    fn rec(pos: usize, remaining: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos + 1 == cur.len() {
            cur[pos] = remaining;
            out.push(cur.clone());
            return;
        }
        for v in (0..=remaining).rev() {
            cur[pos] = v;
            rec(pos + 1, remaining - v, cur, out);
        }
    }
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(0, total, &mut cur, &mut out);
    out
}

/// Compositions of `total` into `parts` entries bounded entrywise by `bound`.
pub fn bounded_compositions(total: usize, bound: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let parts = bound.len();
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    let mut suffix = vec![0usize; parts + 1];
    for i in (0..parts).rev() {
        suffix[i] = suffix[i + 1] + bound[i];
    }
    let mut cur = vec![0usize; parts];
    fn rec(pos: usize, remaining: usize, bound: &[usize], suffix: &[usize], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == bound.len() {
            if remaining == 0 {
                out.push(cur.clone());
            }
            return;
        }
        if suffix[pos] < remaining {
            return;
        }
        for v in (0..=remaining.min(bound[pos])).rev() {
            cur[pos] = v;
            rec(pos + 1, remaining - v, bound, suffix, cur, out);
        }
    }
    rec(0, total, bound, &suffix, &mut cur, &mut out);
    out
}

/// Multinomial `k! / ∏ y_a!` as `f64`.
pub fn multinomial(table: &[f64], y: &[usize]) -> f64 {
    let k: usize = y.iter().sum();
    (table[k] - y.iter().map(|&v| table[v]).sum::<f64>()).exp().round()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_values() {
        assert_eq!(binomial(5, 2), Some(10));
        assert_eq!(factorial(5), Some(120));
        let t = ln_factorials(10);
        assert!((ln_binomial(&t, 10, 3) - 120f64.ln()).abs() < 1e-12);
        assert_eq!(multinomial(&t, &[1, 1, 0]), 2.0);
    }

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(4, 3).len(), 15);
        assert_eq!(compositions(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(bounded_compositions(2, &[1, 1, 3]).len(), 4);
    }
}

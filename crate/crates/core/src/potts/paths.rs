//! Monotone-in-measure paths on sorted magnetization vectors toward the diagonal mode.

use crate::combinatorics::{ln_binomial, ln_factorials};
use crate::error::{Error, Result};

use super::chain::energy_of;

/// `(n - (q-1)k, k, …, k)`.
pub fn diagonal_point(n: usize, q: usize, k: usize) -> Vec<usize> {
    let mut m = vec![k; q];
    m[0] = n - (q - 1) * k;
    m
}

/// Unfolded log-weight `ln(n!/∏ m_a!) + (β/n) Σ m_a²`.
pub fn log_weight(table: &[f64], m: &[usize], beta: f64) -> f64 {
    let n: usize = m.iter().sum();
    table[n] - m.iter().map(|&v| table[v]).sum::<f64>() + beta * energy_of(m, n)
}

/// `ln p_k` for the diagonal points `k = 0..=⌊n/q⌋`.
pub fn diagonal_profile(n: usize, q: usize, beta: f64) -> Vec<f64> {
    let table = ln_factorials(n);
    (0..=n / q).map(|k| log_weight(&table, &diagonal_point(n, q, k), beta)).collect()
}

/// Smallest maximizer of the diagonal profile.
pub fn diagonal_mode(n: usize, q: usize, beta: f64) -> usize {
    let p = diagonal_profile(n, q, beta);
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

/// Smallest maximizer `M ≥ 0` (parity of `spins`) of `ln C(N, (N+M)/2) + β M²/(2N)`.
pub fn ising_mode(spins: usize, beta: f64) -> usize {
    if spins == 0 {
        return 0;
    }
    let table = ln_factorials(spins);
    let nf = spins as f64;
    let mut best = (spins % 2, f64::NEG_INFINITY);
    for m in (spins % 2..=spins).step_by(2) {
        let v = ln_binomial(&table, spins, (spins + m) / 2) + beta * (m * m) as f64 / (2.0 * nf);
        if v > best.1 {
            best = (m, v);
        }
    }
    best.0
}

/// Path from a sorted magnetization vector `m` to the diagonal mode
/// `m* = (n - (q-1)k*, k*, …, k*)`, as the list of vertices after `m`.
///
/// 1. For colors `a = q, …, 2` with `m_a ≥ n/(2β)`, move single units from `a` to color 1
///    until `m_a` reaches the larger of `m_{a+1}` and the mode of the two-color Ising
///    conditional on `N = m_1 + m_a` spins at inverse temperature `Nβ/n`.
/// 2. Balance colors `2..q` to `⌈(n-m_1)/(q-1)⌉, …, ⌊(n-m_1)/(q-1)⌋` by unit moves from the
///    last color above target to the first color below it.
/// 3. If colors `2..q` still differ by one, jump to the better of the two adjacent
///    diagonal points (ties and the top of the diagonal go to the lower one).
/// 4. Slide along the diagonal to `k*` in `(q-1)`-unit steps.
///
/// Requires `β ≥ q/2`.
pub fn potts_path(n: usize, q: usize, beta: f64, m: &[usize]) -> Result<Vec<Vec<usize>>> {
    let min = q as f64 / 2.0;
    if !(beta >= min) {
        return Err(Error::PreconditionBeta { beta, min });
    }
    if q < 2 || n < q || m.len() != q || m.iter().sum::<usize>() != n || m.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidInput(format!("{m:?} is not a sorted magnetization vector of n={n}, q={q}")));
    }
    let table = ln_factorials(n);
    let k_star = diagonal_mode(n, q, beta);
    let target = diagonal_point(n, q, k_star);
    if m == target.as_slice() {
        return Ok(Vec::new());
    }
    let mut cur = m.to_vec();
    let mut path: Vec<Vec<usize>> = Vec::new();
    let push = |v: &Vec<usize>, path: &mut Vec<Vec<usize>>| {
        if path.last().map_or(v.as_slice() != m, |last| last != v) {
            path.push(v.clone());
        }
    };

    let threshold = n as f64 / (2.0 * beta);
    for a in (1..q).rev() {
        if (cur[a] as f64) < threshold {
            continue;
        }
        let spins = cur[0] + cur[a];
        let m_hat = (spins - ising_mode(spins, spins as f64 * beta / n as f64)) / 2;
        let next = if a + 1 < q { cur[a + 1] } else { 0 };
        while cur[a] > m_hat.max(next) {
            cur[a] -= 1;
            cur[0] += 1;
            push(&cur, &mut path);
        }
    }

    let rest = n - cur[0];
    let (base, extra) = (rest / (q - 1), rest % (q - 1));
    let goal: Vec<usize> = (0..q)
        .map(|a| {
            if a == 0 {
                cur[0]
            } else if a - 1 < extra {
                base + 1
            } else {
                base
            }
        })
        .collect();
    while let (Some(a), Some(b)) = ((1..q).rev().find(|&a| cur[a] > goal[a]), (1..q).find(|&b| cur[b] < goal[b])) {
        while cur[a] > goal[a] && cur[b] < goal[b] {
            cur[a] -= 1;
            cur[b] += 1;
            push(&cur, &mut path);
        }
    }

    if q >= 3 && cur[1] == cur[q - 1] + 1 {
        let k = cur[q - 1];
        let lower = diagonal_point(n, q, k);
        let jump = if k == n / q {
            lower
        } else {
            let upper = diagonal_point(n, q, k + 1);
            if log_weight(&table, &lower, beta) >= log_weight(&table, &upper, beta) {
                lower
            } else {
                upper
            }
        };
        cur = jump;
        push(&cur, &mut path);
    }

    let mut k = cur[q - 1];
    debug_assert_eq!(cur, diagonal_point(n, q, k));
    while k != k_star {
        k = if k < k_star { k + 1 } else { k - 1 };
        cur = diagonal_point(n, q, k);
        push(&cur, &mut path);
    }
    Ok(path)
}

/// Worst value of `ln π̄(m') - ln π̄(m)` along the path from `m` (zero for an empty path).
pub fn path_log_dip(n: usize, beta: f64, m: &[usize], path: &[Vec<usize>]) -> f64 {
    let table = ln_factorials(n);
    let start = log_weight(&table, m, beta);
    path.iter().map(|v| log_weight(&table, v, beta) - start).fold(0.0, f64::min)
}

/// Classifies a sequence as increasing, decreasing or unimodal (rising then falling).
pub fn is_unimodal(seq: &[f64]) -> bool {
    let diffs: Vec<f64> = seq.windows(2).map(|w| w[1] - w[0]).collect();
    let rising = diffs.iter().take_while(|&&d| d > 0.0).count();
    diffs[rising..].iter().all(|&d| d < 0.0)
}

//! Square linear assignment: exhaustive enumeration for small sizes and the
//! Hungarian method (shortest augmenting paths with potentials) otherwise.

/// Largest size solved by enumerating all permutations.
pub const EXHAUSTIVE_LIMIT: usize = 8;

/// Minimizes `Σ_r cost[r][perm[r]]` over permutations; returns `(perm, total)`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    if cost.len() <= EXHAUSTIVE_LIMIT {
        exhaustive(cost.len(), |perm| perm.iter().enumerate().map(|(r, &c)| cost[r][c]).sum())
    } else {
        let perm = hungarian(cost);
        let total = perm.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        (perm, total)
    }
}

/// Minimizes an arbitrary objective over all permutations of `0..k` in
/// lexicographic order; the first minimizer wins ties.
pub fn exhaustive(k: usize, mut objective: impl FnMut(&[usize]) -> f64) -> (Vec<usize>, f64) {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_val = objective(&perm);
    while next_permutation(&mut perm) {
        let v = objective(&perm);
        if v < best_val {
            best_val = v;
            best.copy_from_slice(&perm);
        }
    }
    (best, best_val)
}

fn next_permutation(p: &mut [usize]) -> bool {
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

/// Hungarian algorithm, O(k³). `result[row] = column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials; column 0 is a virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for c in 1..=n {
                if !used[c] {
                    let cur = cost[r - 1][c - 1] - u[r] - v[c];
                    if cur < minv[c] {
                        minv[c] = cur;
                        way[c] = col0;
                    }
                    if minv[c] < delta {
                        delta = minv[c];
                        col1 = c;
                    }
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for c in 1..=n {
        result[owner[c] - 1] = c - 1;
    }
    result
}

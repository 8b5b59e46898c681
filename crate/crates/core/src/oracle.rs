//! Deliberately naive reference implementations used to cross-check the
//! production paths.
//!
//! Everything here trades speed for transparency: scalar triple loops,
//! explicit Gauss–Jordan inverses, zooming grid searches, and vertex
//! enumeration. The `verify` command and the test suites compare these
//! against the optimized implementations; none of this code shares a
//! factorization or solver with the paths it checks.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelMatrix;
use crate::precoding::{CiMatrix, SymbolVector, TargetMatrix};

/// `rho_ij = sum_n h_in * conj(h_jn)` by scalar triple loop.
pub fn naive_gram(h: &ChannelMatrix) -> DMatrix<Complex64> {
    let k = h.k_users();
    let n = h.n_tx();
    let e = h.entries();
    DMatrix::from_fn(k, k, |i, j| {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in 0..n {
            acc += e[(i, c)] * e[(j, c)].conj();
        }
        acc
    })
}

/// Gauss–Jordan inverse with partial pivoting; `None` when a pivot
/// vanishes. Independent of the LU route used by the precoder.
pub fn gauss_jordan_inverse(m: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return None;
    }
    let mut a = m.clone();
    let mut inv = DMatrix::<Complex64>::identity(n, n);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                a[(r1, col)]
                    .norm()
                    .partial_cmp(&a[(r2, col)].norm())
                    .unwrap()
            })
            .unwrap();
        if a[(pivot_row, col)].norm() < 1e-300 {
            return None;
        }
        if pivot_row != col {
            a.swap_rows(pivot_row, col);
            inv.swap_rows(pivot_row, col);
        }
        let pivot = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= pivot;
            inv[(col, j)] /= pivot;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[(r, col)];
            if factor.norm() != 0.0 {
                for j in 0..n {
                    let ac = a[(col, j)];
                    let ic = inv[(col, j)];
                    a[(r, j)] -= factor * ac;
                    inv[(r, j)] -= factor * ic;
                }
            }
        }
    }
    Some(inv)
}

/// Precoder by the explicit route `W = H† · (R⁻¹ · T)` with `R` from the
/// naive gram and `R⁻¹` by Gauss–Jordan.
pub fn precoder_gram_route(
    h: &ChannelMatrix,
    t: &TargetMatrix,
) -> Option<DMatrix<Complex64>> {
    let r = naive_gram(h);
    let rinv = gauss_jordan_inverse(&r)?;
    let x = &rinv * t.entries();
    Some(h.entries().adjoint() * x)
}

/// Uniform power by the trace formula `p = P_tot / Tr{T† R⁻¹ T}`, all
/// scalar arithmetic.
pub fn uniform_power_trace_route(
    h: &ChannelMatrix,
    t: &TargetMatrix,
    p_tot: f64,
) -> Option<f64> {
    let r = naive_gram(h);
    let rinv = gauss_jordan_inverse(&r)?;
    let k = t.k();
    // Tr{T† R⁻¹ T} = sum_{j} (T† R⁻¹ T)_{jj}
    let mut trace = 0.0;
    for j in 0..k {
        for a in 0..k {
            for b in 0..k {
                let v = t.tau(a, j).conj() * rinv[(a, b)] * t.tau(b, j);
                trace += v.re;
            }
        }
    }
    if trace <= 0.0 {
        return None;
    }
    Some(p_tot / trace)
}

/// Scalar SINR loop: `SINR_k = sum_j |tau_kj|^2 p_j`.
pub fn sinr_scalar(t: &TargetMatrix, p: &[f64]) -> Vec<f64> {
    let k = t.k();
    (0..k)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..k {
                let tau = t.tau(i, j);
                acc += (tau.re * tau.re + tau.im * tau.im) * p[j];
            }
            acc
        })
        .collect()
}

/// `sum_k log2(1 + sinr_k)` without using `ln_1p`, as a distinct route.
pub fn sum_rate_scalar(sinr: &[f64]) -> f64 {
    sinr.iter().map(|&s| (1.0 + s).log2()).sum()
}

// ---------------------------------------------------------------------
// Grid-search oracles for the throughput power allocations
// ---------------------------------------------------------------------

struct ZoomGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Zooming grid search over the budget-binding surface
/// `{p >= 0, c·p = P_tot}`: the throughput objective is strictly
/// increasing in every power, so the optimum binds the budget and the last
/// coordinate can be eliminated. Each level lays an `n`-point grid per
/// free coordinate, then shrinks the box around the best point until the
/// cell size drops below `resolution`.
fn zoom_grid_search<F: Fn(&[f64]) -> f64>(
    k: usize,
    cost: &[f64],
    p_tot: f64,
    resolution: f64,
    objective: F,
    seeds: &[Vec<f64>],
) -> f64 {
    assert!(k >= 1);
    if k == 1 {
        return objective(&[p_tot / cost[0]]);
    }
    let free = k - 1;
    let divisions = 18usize;
    let mut boxes: Vec<ZoomGrid> = Vec::new();
    boxes.push(ZoomGrid {
        lo: vec![0.0; free],
        hi: (0..free).map(|j| p_tot / cost[j]).collect(),
    });
    for seed in seeds {
        // A small box around an externally suggested point (multistart).
        let width: Vec<f64> = (0..free).map(|j| 0.1 * p_tot / cost[j]).collect();
        boxes.push(ZoomGrid {
            lo: (0..free).map(|j| (seed[j] - width[j]).max(0.0)).collect(),
            hi: (0..free)
                .map(|j| (seed[j] + width[j]).min(p_tot / cost[j]))
                .collect(),
        });
    }

    let mut best_value = f64::NEG_INFINITY;
    for mut grid in boxes {
        loop {
            let mut level_best: Option<(f64, Vec<f64>)> = None;
            let mut idx = vec![0usize; free];
            'outer: loop {
                let mut p = vec![0.0; k];
                let mut spent = 0.0;
                for j in 0..free {
                    let x = grid.lo[j]
                        + (grid.hi[j] - grid.lo[j]) * idx[j] as f64
                            / divisions as f64;
                    p[j] = x;
                    spent += cost[j] * x;
                }
                let rem = (p_tot - spent) / cost[k - 1];
                if rem >= -1e-12 {
                    p[k - 1] = rem.max(0.0);
                    let v = objective(&p);
                    if level_best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                        level_best = Some((v, p));
                    }
                }
                // Advance the multi-index.
                for j in 0..free {
                    idx[j] += 1;
                    if idx[j] <= divisions {
                        continue 'outer;
                    }
                    idx[j] = 0;
                }
                break;
            }
            let (value, at) = level_best.expect("grid always has feasible points");
            best_value = best_value.max(value);

            let cell: Vec<f64> = (0..free)
                .map(|j| (grid.hi[j] - grid.lo[j]) / divisions as f64)
                .collect();
            if cell.iter().all(|&c| c <= resolution) {
                break;
            }
            // Shrink to +-3 cells around the best point.
            for j in 0..free {
                let center = at[j];
                grid.lo[j] = (center - 3.0 * cell[j]).max(0.0);
                grid.hi[j] = (center + 3.0 * cell[j]).min(p_tot / cost[j]);
            }
        }
    }
    best_value
}

/// Grid-search oracle for the decoupled (diagonal) throughput problem.
pub fn grid_search_throughput_diag(
    gains: &[f64],
    cost: &[f64],
    p_tot: f64,
    resolution: f64,
) -> f64 {
    let k = gains.len();
    zoom_grid_search(
        k,
        cost,
        p_tot,
        resolution,
        |p| {
            gains
                .iter()
                .zip(p)
                .map(|(g, p)| (1.0 + g * p).log2())
                .sum()
        },
        &[],
    )
}

/// Grid-search oracle with random multistarts for the coupled throughput
/// problem.
pub fn grid_search_throughput_coupled(
    a: &DMatrix<f64>,
    cost: &[f64],
    p_tot: f64,
    resolution: f64,
    multistarts: usize,
    seed: u64,
) -> f64 {
    let k = a.nrows();
    let mut rng = crate::channel::RandomSource::new(seed, 0);
    let seeds: Vec<Vec<f64>> = (0..multistarts)
        .map(|_| {
            use rand::Rng;
            // Random point on the budget surface via normalized weights.
            let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
            let spend: f64 = w.iter().zip(cost).map(|(w, c)| w * c).sum();
            w.iter()
                .take(k - 1)
                .map(|&wi| wi * p_tot / spend)
                .collect()
        })
        .collect();
    zoom_grid_search(
        k,
        cost,
        p_tot,
        resolution,
        |p| {
            (0..k)
                .map(|i| {
                    let sinr: f64 = (0..k).map(|j| a[(i, j)] * p[j]).sum();
                    (1.0 + sinr).log2()
                })
                .sum()
        },
        &seeds,
    )
}

// ---------------------------------------------------------------------
// Fairness oracles: vertex enumeration and bisection
// ---------------------------------------------------------------------

fn gauss_jordan_solve_real(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a[i].clone();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| m[r1][col].abs().partial_cmp(&m[r2][col].abs()).unwrap())?;
        if m[pivot_row][col].abs() < 1e-12 {
            return None;
        }
        m.swap(pivot_row, col);
        let pivot = m[col][col];
        for v in m[col].iter_mut() {
            *v /= pivot;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for j in 0..=n {
                        let v = m[col][j];
                        m[r][j] -= f * v;
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n]).collect())
}

/// `min c·p s.t. a·p >= 1, p >= 0` by enumerating basic feasible points:
/// every choice of K active constraints among `{a_k·p = 1} ∪ {p_j = 0}`.
pub fn min_cost_lp_by_vertices(a: &DMatrix<f64>, c: &[f64]) -> Option<f64> {
    let k = a.nrows();
    let n_constraints = 2 * k;
    let mut best: Option<f64> = None;
    // Choose k active constraints out of 2k.
    let mut choice: Vec<usize> = (0..k).collect();
    loop {
        // Build the active system.
        let mut rows = Vec::with_capacity(k);
        let mut rhs = Vec::with_capacity(k);
        for &cidx in &choice {
            if cidx < k {
                rows.push((0..k).map(|j| a[(cidx, j)]).collect::<Vec<f64>>());
                rhs.push(1.0);
            } else {
                let j = cidx - k;
                let mut row = vec![0.0; k];
                row[j] = 1.0;
                rows.push(row);
                rhs.push(0.0);
            }
        }
        if let Some(p) = gauss_jordan_solve_real(&rows, &rhs) {
            let feasible = p.iter().all(|&v| v >= -1e-9)
                && (0..k).all(|i| {
                    (0..k).map(|j| a[(i, j)] * p[j]).sum::<f64>() >= 1.0 - 1e-9
                });
            if feasible {
                let cost: f64 = c.iter().zip(&p).map(|(c, p)| c * p).sum();
                if best.map_or(true, |b| cost < b) {
                    best = Some(cost);
                }
            }
        }
        // Next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if choice[i] != i + n_constraints - k {
                break;
            }
        }
        if choice[i] == i + n_constraints - k {
            return best;
        }
        choice[i] += 1;
        for j in i + 1..k {
            choice[j] = choice[j - 1] + 1;
        }
    }
}

/// Feasibility of `{p >= 0, c·p <= p_tot, a·p >= t}` by enumerating vertex
/// candidates of the polyhedron (active sets of size K drawn from the
/// 2K + 1 constraints).
fn maxmin_feasible(a: &DMatrix<f64>, cost: &[f64], p_tot: f64, t: f64) -> bool {
    let k = a.nrows();
    let n_constraints = 2 * k + 1;
    let mut choice: Vec<usize> = (0..k).collect();
    loop {
        let mut rows = Vec::with_capacity(k);
        let mut rhs = Vec::with_capacity(k);
        for &cidx in &choice {
            if cidx < k {
                rows.push((0..k).map(|j| a[(cidx, j)]).collect::<Vec<f64>>());
                rhs.push(t);
            } else if cidx < 2 * k {
                let j = cidx - k;
                let mut row = vec![0.0; k];
                row[j] = 1.0;
                rows.push(row);
                rhs.push(0.0);
            } else {
                rows.push(cost.to_vec());
                rhs.push(p_tot);
            }
        }
        if let Some(p) = gauss_jordan_solve_real(&rows, &rhs) {
            let scale = p_tot.max(t).max(1.0);
            let ok = p.iter().all(|&v| v >= -1e-9 * scale)
                && cost.iter().zip(&p).map(|(c, p)| c * p).sum::<f64>()
                    <= p_tot * (1.0 + 1e-9)
                && (0..k).all(|i| {
                    (0..k).map(|j| a[(i, j)] * p[j]).sum::<f64>()
                        >= t - 1e-9 * scale
                });
            if ok {
                return true;
            }
        }
        let mut i = k;
        loop {
            if i == 0 {
                return false;
            }
            i -= 1;
            if choice[i] != i + n_constraints - k {
                break;
            }
        }
        if choice[i] == i + n_constraints - k {
            return false;
        }
        choice[i] += 1;
        for j in i + 1..k {
            choice[j] = choice[j - 1] + 1;
        }
    }
}

/// Max-min SINR level by bisection over the vertex feasibility test.
pub fn maxmin_bisection(a: &DMatrix<f64>, cost: &[f64], p_tot: f64) -> f64 {
    let k = a.nrows();
    // Upper bound: give the whole budget to the cheapest coefficient.
    let mut hi: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            hi = hi.max(a[(i, j)] * p_tot / cost[j]);
        }
    }
    hi = hi.max(1.0) * 2.0;
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if maxmin_feasible(a, cost, p_tot, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

// ---------------------------------------------------------------------
// Enumeration oracles for the partial-CI search and optimal selection
// ---------------------------------------------------------------------

fn scalar_target(
    r: &DMatrix<Complex64>,
    positions: &[(usize, usize)],
    bits: u64,
) -> DMatrix<Complex64> {
    let k = r.nrows();
    let mut t = DMatrix::from_element(k, k, Complex64::new(0.0, 0.0));
    for i in 0..k {
        t[(i, i)] = r[(i, i)];
    }
    for (idx, &(i, j)) in positions.iter().enumerate() {
        if (bits >> idx) & 1 == 1 {
            t[(i, j)] = r[(i, j)];
        }
    }
    t
}

/// Full 2^m enumeration of the partial-CI search under uniform power, all
/// scalar arithmetic, replicating the more-terms-then-lexicographic tie
/// break. Returns the winning bits (over `positions` row-major) and the
/// objective.
pub fn pcizf_enumerate_uniform(
    h: &ChannelMatrix,
    g: &CiMatrix,
    p_tot: f64,
) -> Option<(u64, f64)> {
    let r = naive_gram(h);
    let rinv = gauss_jordan_inverse(&r)?;
    let k = r.nrows();
    let mut positions = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i != j && g.g(i, j) > 0.0 {
                positions.push((i, j));
            }
        }
    }
    let m = positions.len();
    let mut best: Option<(f64, usize, u64)> = None;
    for bits in 0..(1u64 << m) {
        let t = scalar_target(&r, &positions, bits);
        // Uniform power via the trace formula.
        let mut trace = 0.0;
        for j in 0..k {
            for a in 0..k {
                for b in 0..k {
                    trace += (t[(a, j)].conj() * rinv[(a, b)] * t[(b, j)]).re;
                }
            }
        }
        if trace <= 0.0 {
            continue;
        }
        let p = vec![p_tot / trace; k];
        let sinr: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| t[(i, j)].norm_sqr() * p[j]).sum())
            .collect();
        let value = sum_rate_scalar(&sinr);
        let retained = bits.count_ones() as usize;
        let better = match best {
            None => true,
            Some((bv, bc, bb)) => {
                value > bv
                    || (value == bv
                        && (retained > bc
                            || (retained == bc && lex_less(bits, bb, m))))
            }
        };
        if better {
            best = Some((value, retained, bits));
        }
    }
    best.map(|(v, _, bits)| (bits, v))
}

fn lex_less(a: u64, b: u64, m: usize) -> bool {
    for p in 0..m {
        let (x, y) = ((a >> p) & 1, (b >> p) & 1);
        if x != y {
            return x < y;
        }
    }
    false
}

/// Direct enumeration of the optimal CI-aware selection: every
/// combination, CIZF target, uniform power by the trace route, scalar
/// SINRs. Returns sorted winning users and the objective.
pub fn optimal_selection_enumerate(
    h: &ChannelMatrix,
    s_pool: &SymbolVector,
    n_tx: usize,
    p_tot: f64,
) -> (Vec<usize>, f64) {
    let k_pool = h.k_users();
    let r_pool = naive_gram(h);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut combo: Vec<usize> = (0..n_tx).collect();
    loop {
        if let Some(value) = evaluate_subset(&r_pool, s_pool, &combo, p_tot) {
            if best.as_ref().map_or(true, |(bv, _)| value > *bv) {
                best = Some((value, combo.clone()));
            }
        }
        let mut i = n_tx;
        loop {
            if i == 0 {
                let (v, u) = best.expect("at least one subset is invertible");
                return (u, v);
            }
            i -= 1;
            if combo[i] != i + k_pool - n_tx {
                break;
            }
        }
        if combo[i] == i + k_pool - n_tx {
            let (v, u) = best.expect("at least one subset is invertible");
            return (u, v);
        }
        combo[i] += 1;
        for j in i + 1..n_tx {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

fn evaluate_subset(
    r_pool: &DMatrix<Complex64>,
    s_pool: &SymbolVector,
    users: &[usize],
    p_tot: f64,
) -> Option<f64> {
    let k = users.len();
    let r = DMatrix::from_fn(k, k, |i, j| r_pool[(users[i], users[j])]);
    let rinv = gauss_jordan_inverse(&r)?;
    let mut t = DMatrix::from_element(k, k, Complex64::new(0.0, 0.0));
    for i in 0..k {
        t[(i, i)] = r[(i, i)];
        for j in 0..k {
            if i != j {
                let gij = s_pool.sign_f64(users[i])
                    * r[(i, j)].re
                    * s_pool.sign_f64(users[j]);
                if gij > 0.0 {
                    t[(i, j)] = r[(i, j)];
                }
            }
        }
    }
    let mut trace = 0.0;
    for j in 0..k {
        for a in 0..k {
            for b in 0..k {
                trace += (t[(a, j)].conj() * rinv[(a, b)] * t[(b, j)]).re;
            }
        }
    }
    if trace <= 0.0 || !trace.is_finite() {
        return None;
    }
    let p = vec![p_tot / trace; k];
    let sinr: Vec<f64> = (0..k)
        .map(|i| (0..k).map(|j| t[(i, j)].norm_sqr() * p[j]).sum())
        .collect();
    Some(sum_rate_scalar(&sinr))
}

/// Independent greedy semi-orthogonal selection using a normalized
/// Gram–Schmidt basis (a distinct arithmetic route from the production
/// implementation, same tie-break and refill semantics).
pub fn sus_reference(h: &ChannelMatrix, n_tx: usize, alpha: f64) -> Vec<usize> {
    use nalgebra::DVector;
    let k_pool = h.k_users();
    let row = |k: usize| DVector::from_fn(h.n_tx(), |j, _| h.entries()[(k, j)]);
    let residual = |basis: &Vec<DVector<Complex64>>, v: &DVector<Complex64>| {
        let mut r = v.clone();
        for q in basis {
            let coeff = q.dotc(&r);
            r -= q * coeff;
        }
        r
    };

    let mut basis: Vec<DVector<Complex64>> = Vec::new();
    let mut selected: Vec<usize> = Vec::new();
    let mut candidates: Vec<usize> = (0..k_pool).collect();

    while selected.len() < n_tx && !candidates.is_empty() {
        let mut pick = candidates[0];
        let mut pick_res = residual(&basis, &row(pick));
        for &k in &candidates[1..] {
            let r = residual(&basis, &row(k));
            if r.norm_squared() > pick_res.norm_squared() {
                pick = k;
                pick_res = r;
            }
        }
        selected.push(pick);
        candidates.retain(|&k| k != pick);
        let rn = pick_res.norm();
        if rn > 1e-15 {
            candidates.retain(|&k| {
                let hv = row(k);
                let hn = hv.norm();
                if hn <= 1e-300 {
                    return true;
                }
                pick_res.dotc(&hv).norm() / (hn * rn) <= alpha
            });
            basis.push(pick_res.clone() / Complex64::new(rn, 0.0));
        }
    }

    while selected.len() < n_tx {
        let remaining: Vec<usize> =
            (0..k_pool).filter(|k| !selected.contains(k)).collect();
        let mut pick = remaining[0];
        let mut pick_res = residual(&basis, &row(pick));
        for &k in &remaining[1..] {
            let r = residual(&basis, &row(k));
            if r.norm_squared() > pick_res.norm_squared() {
                pick = k;
                pick_res = r;
            }
        }
        selected.push(pick);
        let rn = pick_res.norm();
        if rn > 1e-15 {
            basis.push(pick_res / Complex64::new(rn, 0.0));
        }
    }
    selected
}

/// Interpolated SNR at which a monotone curve reaches a target value —
/// straightforward linear interpolation for checking the production
/// readout.
pub fn interpolate_crossing(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    if curve.is_empty() || target < curve[0].1 || target > curve[curve.len() - 1].1 {
        return None;
    }
    for i in 0..curve.len() {
        if curve[i].1 >= target {
            if i == 0 {
                return Some(curve[0].0);
            }
            let (x0, y0) = curve[i - 1];
            let (x1, y1) = curve[i];
            return Some(x0 + (target - y0) * (x1 - x0) / (y1 - y0));
        }
    }
    None
}

//! User selection over a pool of K >= N_t candidates.
//!
//! Four strategies: a uniform random baseline, the greedy semi-orthogonal
//! algorithm (good channels for plain zero forcing), the exhaustive
//! CI-aware optimum, and the semi-parallel heuristic that greedily picks
//! users most aligned with the already-selected set through accumulated
//! rows of the CI matrix.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::channel::{submatrix, ChannelMatrix, GramMatrix, RandomSource};
use crate::error::{Error, Result};
use crate::metrics::{sinr_ci, Objective};
use crate::power::uniform_power;
use crate::precoding::{
    ci_matrix, constructive_positions, target_cizf, CiMask, CiMatrix,
    PrecoderBuilder, SymbolVector,
};

/// Largest combination count the exhaustive search will enumerate.
pub const MAX_COMBINATIONS: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Random,
    Sus,
    Optimal,
    Spus,
}

/// Outcome of a selection pass: exactly N_t distinct pool indices.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    /// Selected pool indices in selection order.
    pub users: Vec<usize>,
    pub method: SelectionMethod,
    /// SPUS step-3 output: the CI mask of the selected block with every
    /// non-constructive cross term removed. Indices follow `users` order.
    pub pruned_mask: Option<CiMask>,
}

impl SelectionResult {
    /// Selected indices in ascending order.
    pub fn sorted_users(&self) -> Vec<usize> {
        let mut u = self.users.clone();
        u.sort_unstable();
        u
    }
}

/// Semi-orthogonality threshold for the greedy orthogonal selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SusParams {
    pub alpha: f64,
}

impl Default for SusParams {
    fn default() -> Self {
        Self { alpha: 0.3 }
    }
}

impl SusParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Argument(format!(
                "sus alpha must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }
}

/// Uniformly random N_t-subset of the pool, in random order.
pub fn select_random(
    k_pool: usize,
    n_tx: usize,
    rng: &mut RandomSource,
) -> Result<SelectionResult> {
    if n_tx == 0 {
        return Err(Error::Argument("n_tx must be positive".into()));
    }
    if k_pool < n_tx {
        return Err(Error::Argument(format!(
            "pool of {k_pool} users cannot fill {n_tx} slots"
        )));
    }
    let users = rand::seq::index::sample(rng, k_pool, n_tx).into_vec();
    Ok(SelectionResult {
        users,
        method: SelectionMethod::Random,
        pruned_mask: None,
    })
}

fn row_vector(h: &ChannelMatrix, k: usize) -> DVector<Complex64> {
    DVector::from_fn(h.n_tx(), |j, _| h.entries()[(k, j)])
}

fn residual_against(
    basis: &[DVector<Complex64>],
    v: &DVector<Complex64>,
) -> DVector<Complex64> {
    let mut r = v.clone();
    for e in basis {
        let denom = e.norm_squared();
        if denom < 1e-30 {
            continue;
        }
        let coeff = e.dotc(&r) / Complex64::new(denom, 0.0);
        r -= e * coeff;
    }
    r
}

fn argmax_by_norm(
    h: &ChannelMatrix,
    basis: &[DVector<Complex64>],
    candidates: &[usize],
) -> Option<(usize, DVector<Complex64>)> {
    let mut best: Option<(usize, f64, DVector<Complex64>)> = None;
    for &k in candidates {
        let r = residual_against(basis, &row_vector(h, k));
        let n = r.norm_squared();
        let better = match &best {
            None => true,
            Some((_, bn, _)) => n > *bn,
        };
        if better {
            best = Some((k, n, r));
        }
    }
    best.map(|(k, _, r)| (k, r))
}

/// Greedy semi-orthogonal selection.
///
/// The first pick is the strongest channel; each later pick maximizes the
/// component orthogonal to the span of the already-selected channels
/// (Gram–Schmidt residual), after which candidates whose normalized
/// correlation with the latest residual exceeds `alpha` are pruned. If
/// pruning empties the pool early, the remaining slots are refilled with
/// the largest-residual users from the unpruned pool so exactly `n_tx`
/// users are always returned.
pub fn select_sus(
    h: &ChannelMatrix,
    n_tx: usize,
    params: SusParams,
) -> Result<SelectionResult> {
    let k_pool = h.k_users();
    if n_tx == 0 {
        return Err(Error::Argument("n_tx must be positive".into()));
    }
    if k_pool < n_tx {
        return Err(Error::Argument(format!(
            "pool of {k_pool} users cannot fill {n_tx} slots"
        )));
    }
    SusParams::new(params.alpha)?;

    let mut selected: Vec<usize> = Vec::with_capacity(n_tx);
    let mut basis: Vec<DVector<Complex64>> = Vec::with_capacity(n_tx);
    let mut candidates: Vec<usize> = (0..k_pool).collect();

    while selected.len() < n_tx && !candidates.is_empty() {
        let (pick, residual) = argmax_by_norm(h, &basis, &candidates)
            .expect("candidate list is non-empty");
        selected.push(pick);
        candidates.retain(|&k| k != pick);
        let res_norm = residual.norm();
        if res_norm > 1e-15 {
            // Prune candidates too correlated with the new direction.
            candidates.retain(|&k| {
                let hv = row_vector(h, k);
                let hn = hv.norm();
                if hn <= 1e-300 {
                    return true;
                }
                let corr = residual.dotc(&hv).norm() / (hn * res_norm);
                corr <= params.alpha
            });
        }
        basis.push(residual);
    }

    // Refill from the pre-pruning pool: everyone not yet selected ranked
    // by residual norm against the current basis.
    while selected.len() < n_tx {
        let remaining: Vec<usize> =
            (0..k_pool).filter(|k| !selected.contains(k)).collect();
        let (pick, residual) = argmax_by_norm(h, &basis, &remaining)
            .expect("pool is large enough by precondition");
        selected.push(pick);
        if residual.norm_squared() > 1e-30 {
            basis.push(residual);
        }
    }

    Ok(SelectionResult {
        users: selected,
        method: SelectionMethod::Sus,
        pruned_mask: None,
    })
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    for i in 0..k {
        num = num.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    num
}

fn for_each_combination<F: FnMut(&[usize]) -> Result<()>>(
    n: usize,
    k: usize,
    mut f: F,
) -> Result<()> {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx)?;
        // Advance to the next combination in lexicographic order.
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        if idx[i] == i + n - k {
            return Ok(());
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exhaustive CI-aware selection: evaluates every N_t-combination under
/// CIZF precoding with uniform power and returns the sum-rate maximizer.
/// Ties break toward the lexicographically smallest sorted index tuple.
pub fn select_optimal(
    h: &ChannelMatrix,
    s_pool: &SymbolVector,
    n_tx: usize,
    p_tot: f64,
) -> Result<SelectionResult> {
    let k_pool = h.k_users();
    if n_tx == 0 {
        return Err(Error::Argument("n_tx must be positive".into()));
    }
    if k_pool < n_tx {
        return Err(Error::Argument(format!(
            "pool of {k_pool} users cannot fill {n_tx} slots"
        )));
    }
    if s_pool.len() != k_pool {
        return Err(Error::Dimension(format!(
            "symbol pool length {} does not match pool size {k_pool}",
            s_pool.len()
        )));
    }
    let combos = binomial(k_pool, n_tx);
    if combos > MAX_COMBINATIONS {
        return Err(Error::Capacity(format!(
            "{combos} combinations exceed the enumeration guard of {MAX_COMBINATIONS}"
        )));
    }

    let r_pool = crate::channel::gram(h);
    let g_pool = ci_matrix(&r_pool, s_pool)?;

    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_combination(k_pool, n_tx, |users| {
        let value = match cizf_uniform_sum_rate(h, &r_pool, &g_pool, users, p_tot) {
            Ok(v) => v,
            // A numerically non-invertible subset simply cannot be served.
            Err(Error::IllConditioned { .. }) => return Ok(()),
            Err(e) => return Err(e),
        };
        if best.as_ref().map_or(true, |(bv, _)| value > *bv) {
            best = Some((value, users.to_vec()));
        }
        Ok(())
    })?;

    let (_, users) = best.ok_or_else(|| {
        Error::IllConditioned {
            cond: f64::INFINITY,
            limit: crate::channel::MAX_GRAM_CONDITION,
        }
    })?;
    Ok(SelectionResult {
        users,
        method: SelectionMethod::Optimal,
        pruned_mask: None,
    })
}

/// Sum rate of one candidate subset under CIZF precoding with uniform
/// power: the selection objective shared by the exhaustive search and the
/// dominance checks.
pub fn cizf_uniform_sum_rate(
    h: &ChannelMatrix,
    r_pool: &GramMatrix,
    g_pool: &CiMatrix,
    users: &[usize],
    p_tot: f64,
) -> Result<f64> {
    let h_sel = submatrix(h, users)?;
    let r_sel = r_pool.principal(users)?;
    let g_sel = g_pool.principal(users)?;
    let builder = PrecoderBuilder::new(&h_sel, &r_sel)?;
    let (t, _) = target_cizf(&r_sel, &g_sel)?;
    let prec = builder.build(&t)?;
    let power = uniform_power(&prec, p_tot)?;
    Ok(Objective::Throughput.evaluate(&sinr_ci(&t, &power)))
}

/// Buffer semantics for the semi-parallel selection. The iteration buffer
/// either accumulates the rows of every selected user or keeps only the
/// two most recent rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpusBuffer {
    #[default]
    Cumulative,
    LastTwoRows,
}

/// Semi-parallel user selection with the default cumulative buffer.
pub fn select_spus(g_pool: &CiMatrix, n_tx: usize) -> Result<SelectionResult> {
    select_spus_with_buffer(g_pool, n_tx, SpusBuffer::Cumulative)
}

/// Semi-parallel user selection.
///
/// Step 1 seeds with the largest diagonal entry of `G` (the strongest
/// channel); step 2 repeatedly picks the unselected user with the largest
/// buffer value, the buffer tracking alignment with the selected set;
/// step 3 prunes every non-constructive cross term from the selected
/// block and reports the surviving mask. All argmax ties break toward the
/// lowest index.
pub fn select_spus_with_buffer(
    g_pool: &CiMatrix,
    n_tx: usize,
    buffer_mode: SpusBuffer,
) -> Result<SelectionResult> {
    let k_pool = g_pool.k();
    if n_tx == 0 {
        return Err(Error::Argument("n_tx must be positive".into()));
    }
    if k_pool < n_tx {
        return Err(Error::Argument(format!(
            "pool of {k_pool} users cannot fill {n_tx} slots"
        )));
    }

    let row = |k: usize| -> Vec<f64> {
        (0..k_pool).map(|j| g_pool.g(k, j)).collect()
    };

    // Step 1: strongest diagonal entry (equivalently the largest ||h_k||).
    let first = (0..k_pool)
        .max_by(|&a, &b| {
            g_pool
                .g(a, a)
                .partial_cmp(&g_pool.g(b, b))
                .unwrap()
                .then(b.cmp(&a)) // lowest index wins ties
        })
        .expect("pool is non-empty");
    let mut selected = vec![first];
    let mut in_selected = vec![false; k_pool];
    in_selected[first] = true;
    let mut buffer = row(first);

    // Step 2: repeatedly take the strongest buffer entry among unselected
    // users, then fold that user's row into the buffer.
    while selected.len() < n_tx {
        let mut pick: Option<usize> = None;
        for k in 0..k_pool {
            if in_selected[k] {
                continue;
            }
            let better = match pick {
                None => true,
                Some(p) => buffer[k] > buffer[p],
            };
            if better {
                pick = Some(k);
            }
        }
        let pick = pick.expect("pool larger than n_tx by precondition");
        match buffer_mode {
            SpusBuffer::Cumulative => {
                let r = row(pick);
                for (b, v) in buffer.iter_mut().zip(r) {
                    *b += v;
                }
            }
            SpusBuffer::LastTwoRows => {
                let prev = *selected.last().expect("at least the seed");
                let rp = row(prev);
                let rn = row(pick);
                for (i, b) in buffer.iter_mut().enumerate() {
                    *b = rp[i] + rn[i];
                }
            }
        }
        in_selected[pick] = true;
        selected.push(pick);
    }

    // Step 3: restrict G to the selected block and zero every negative
    // cross term; the surviving positions form the pruned mask.
    let g_sel = g_pool.principal(&selected)?;
    let mut mask = CiMask::none(n_tx);
    for (i, j) in constructive_positions(&g_sel) {
        mask.set(i, j, true);
    }

    Ok(SelectionResult {
        users: selected,
        method: SelectionMethod::Spus,
        pruned_mask: Some(mask),
    })
}

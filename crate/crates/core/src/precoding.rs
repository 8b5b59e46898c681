//! Symbol vectors, the symbol-aware interference matrix `G`, target
//! matrices for the zero-forcing family, and the precoder itself.
//!
//! The precoder synthesizes an effective channel `T` through
//! `W = H†·R⁻¹·T`: conventional zero forcing keeps only the diagonal of
//! `R` in `T`, while the constructive-interference variant also keeps the
//! cross terms whose sign pushes each receiver deeper into its BPSK
//! decision region (`s_k·Re(rho_kj)·s_j > 0`). The partial variant
//! enumerates every subset of those cross terms and keeps the subset that
//! maximizes the configured objective.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::channel::{
    gram_condition, validate_index_set, ChannelMatrix, GramMatrix, RandomSource,
    MAX_GRAM_CONDITION,
};
use crate::error::{Error, Result};
use crate::metrics::{sinr_ci, Objective};
use crate::power::{allocate, PaPolicy, PowerAllocation};

/// Largest number of CI terms the partial search will enumerate (2^m masks).
pub const MAX_CI_TERMS: usize = 20;

/// Relative tolerance on the defining identity `H·W = T`.
pub const PRECODER_RESIDUAL_TOL: f64 = 1e-9;

/// Length-K vector of BPSK symbols, each exactly +1 or -1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SymbolVector {
    s: Vec<i8>,
}

impl SymbolVector {
    pub fn from_signs(s: Vec<i8>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::Dimension("empty symbol vector".into()));
        }
        if s.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::Argument(
                "symbol entries must be exactly +1 or -1".into(),
            ));
        }
        Ok(Self { s })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.s
    }

    /// Sign of user k as a float (+1.0 or -1.0).
    pub fn sign_f64(&self, k: usize) -> f64 {
        f64::from(self.s[k])
    }

    /// Subset of symbols for the given users, in the given order.
    pub fn subset(&self, users: &[usize]) -> Result<SymbolVector> {
        validate_index_set(self.len(), users)?;
        Ok(SymbolVector {
            s: users.iter().map(|&u| self.s[u]).collect(),
        })
    }
}

/// Draw k i.i.d. uniform BPSK symbols.
pub fn draw_symbols(k: usize, rng: &mut RandomSource) -> Result<SymbolVector> {
    if k == 0 {
        return Err(Error::Argument("symbol count must be positive".into()));
    }
    let s = (0..k)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect();
    Ok(SymbolVector { s })
}

/// K×K real symbol-aware interference matrix `G = diag(s)·Re(R)·diag(s)`.
///
/// Entry `g_kj` is positive exactly when the interference of user j onto
/// user k is constructive for the current symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct CiMatrix {
    g: DMatrix<f64>,
}

impl CiMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn k(&self) -> usize {
        self.g.nrows()
    }

    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.g[(i, j)]
    }

    /// Principal submatrix over the given users, in the given order.
    pub fn principal(&self, users: &[usize]) -> Result<CiMatrix> {
        validate_index_set(self.k(), users)?;
        let n = users.len();
        let g = DMatrix::from_fn(n, n, |i, j| self.g[(users[i], users[j])]);
        Ok(CiMatrix { g })
    }
}

/// `g_kj = s_k · Re(rho_kj) · s_j`.
pub fn ci_matrix(r: &GramMatrix, s: &SymbolVector) -> Result<CiMatrix> {
    let k = r.k();
    if s.len() != k {
        return Err(Error::Dimension(format!(
            "symbol vector length {} does not match gram size {k}",
            s.len()
        )));
    }
    let g = DMatrix::from_fn(k, k, |i, j| {
        s.sign_f64(i) * r.rho(i, j).re * s.sign_f64(j)
    });
    Ok(CiMatrix { g })
}

/// Off-diagonal positions where `g_kj > 0`, in row-major order. These are
/// the CI terms a mask may retain.
pub fn constructive_positions(g: &CiMatrix) -> Vec<(usize, usize)> {
    let k = g.k();
    let mut out = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i != j && g.g(i, j) > 0.0 {
                out.push((i, j));
            }
        }
    }
    out
}

/// Boolean retention mask over the off-diagonal entries of `T`.
///
/// The diagonal is implicitly retained. A valid mask keeps an off-diagonal
/// position only where the CI matrix is strictly positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CiMask {
    k: usize,
    keep: Vec<bool>,
}

impl CiMask {
    /// All-false mask (pure zero forcing).
    pub fn none(k: usize) -> Self {
        Self {
            k,
            keep: vec![false; k * k],
        }
    }

    /// Mask retaining every constructive position of `g`.
    pub fn all_constructive(g: &CiMatrix) -> Self {
        let mut mask = Self::none(g.k());
        for (i, j) in constructive_positions(g) {
            mask.keep[i * g.k() + j] = true;
        }
        mask
    }

    /// Mask from an integer whose bit i toggles the i-th constructive
    /// position of `g` (row-major order).
    pub fn from_bits(g: &CiMatrix, bits: u64) -> Result<Self> {
        let positions = constructive_positions(g);
        if positions.len() < 64 && bits >> positions.len() != 0 {
            return Err(Error::Argument(format!(
                "mask bits 0x{bits:x} exceed {} constructive positions",
                positions.len()
            )));
        }
        let mut mask = Self::none(g.k());
        for (idx, &(i, j)) in positions.iter().enumerate() {
            if (bits >> idx) & 1 == 1 {
                mask.keep[i * g.k() + j] = true;
            }
        }
        Ok(mask)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Whether position (i, j) is retained; the diagonal always is.
    pub fn keep(&self, i: usize, j: usize) -> bool {
        i == j || self.keep[i * self.k + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        if i != j {
            self.keep[i * self.k + j] = value;
        }
    }

    /// Number of retained off-diagonal positions.
    pub fn retained_count(&self) -> usize {
        let mut n = 0;
        for i in 0..self.k {
            for j in 0..self.k {
                if i != j && self.keep[i * self.k + j] {
                    n += 1;
                }
            }
        }
        n
    }

    /// Check that every retained position is genuinely constructive in `g`.
    pub fn validate_against(&self, g: &CiMatrix) -> Result<()> {
        if self.k != g.k() {
            return Err(Error::Dimension(format!(
                "mask size {} does not match ci matrix size {}",
                self.k,
                g.k()
            )));
        }
        for i in 0..self.k {
            for j in 0..self.k {
                if i != j && self.keep[i * self.k + j] && g.g(i, j) <= 0.0 {
                    return Err(Error::Invariant(format!(
                        "mask retains non-constructive position ({i},{j}) with g={}",
                        g.g(i, j)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Bitstring over the constructive positions of `g`, row-major; '1'
    /// marks a retained term. This is the serialized form in result records.
    pub fn to_bitstring(&self, g: &CiMatrix) -> String {
        constructive_positions(g)
            .iter()
            .map(|&(i, j)| if self.keep(i, j) { '1' } else { '0' })
            .collect()
    }
}

/// K×K complex target matrix `T`: the effective channel the precoder
/// synthesizes. The diagonal always carries `rho_kk`; each off-diagonal
/// entry is either `rho_kj` (retained CI term) or zero (cancelled).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    t: DMatrix<Complex64>,
}

impl TargetMatrix {
    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.t
    }

    pub fn k(&self) -> usize {
        self.t.nrows()
    }

    pub fn tau(&self, i: usize, j: usize) -> Complex64 {
        self.t[(i, j)]
    }

    /// True when every off-diagonal entry is exactly zero (ZF target).
    pub fn is_diagonal(&self) -> bool {
        let k = self.k();
        for i in 0..k {
            for j in 0..k {
                if i != j && self.t[(i, j)] != Complex64::new(0.0, 0.0) {
                    return false;
                }
            }
        }
        true
    }

    /// Per-user direct gains `|tau_kk|^2`.
    pub fn diag_gains(&self) -> Vec<f64> {
        (0..self.k()).map(|k| self.t[(k, k)].norm_sqr()).collect()
    }
}

fn build_target(r: &GramMatrix, keep: impl Fn(usize, usize) -> bool) -> TargetMatrix {
    let k = r.k();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            r.rho(i, i)
        } else if keep(i, j) {
            r.rho(i, j)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    TargetMatrix { t }
}

/// Conventional zero-forcing target: the diagonal of `R`, zeros elsewhere.
pub fn target_zf(r: &GramMatrix) -> TargetMatrix {
    build_target(r, |_, _| false)
}

/// Constructive-interference target: retains `rho_kj` exactly where
/// `g_kj > 0`, together with the mask recording the retained positions.
pub fn target_cizf(r: &GramMatrix, g: &CiMatrix) -> Result<(TargetMatrix, CiMask)> {
    if r.k() != g.k() {
        return Err(Error::Dimension(format!(
            "gram size {} does not match ci matrix size {}",
            r.k(),
            g.k()
        )));
    }
    let mask = CiMask::all_constructive(g);
    let t = build_target(r, |i, j| mask.keep(i, j));
    Ok((t, mask))
}

/// Target for an explicit retention mask; rejects masks that keep a
/// non-constructive position.
pub fn target_masked(r: &GramMatrix, g: &CiMatrix, mask: &CiMask) -> Result<TargetMatrix> {
    if r.k() != g.k() || r.k() != mask.k() {
        return Err(Error::Dimension(format!(
            "size mismatch: gram {}, ci {}, mask {}",
            r.k(),
            g.k(),
            mask.k()
        )));
    }
    mask.validate_against(g)?;
    Ok(build_target(r, |i, j| mask.keep(i, j)))
}

/// Precoding matrix `W` for a target `T`, together with the per-user power
/// cost `c_j = sum_i |w_ij|^2` (transmit power consumed per unit of
/// allocated user power).
#[derive(Debug, Clone)]
pub struct Precoder {
    w: DMatrix<Complex64>,
    t: TargetMatrix,
    cost: Vec<f64>,
}

impl Precoder {
    pub fn w(&self) -> &DMatrix<Complex64> {
        &self.w
    }

    pub fn target(&self) -> &TargetMatrix {
        &self.t
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn k(&self) -> usize {
        self.t.k()
    }

    /// Total transmit power `sum_j c_j p_j` for an allocation.
    pub fn transmit_power(&self, p: &[f64]) -> f64 {
        self.cost.iter().zip(p).map(|(c, p)| c * p).sum()
    }
}

/// Factors a square channel once so that precoders for many targets (e.g.
/// the 2^m masks of the partial search) can be built cheaply.
pub struct PrecoderBuilder {
    h: DMatrix<Complex64>,
    lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    cond: f64,
    k: usize,
}

impl PrecoderBuilder {
    pub fn new(h: &ChannelMatrix, r: &GramMatrix) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Dimension(format!(
                "precoding requires a square channel (K = N_t), got {}x{}",
                h.k_users(),
                h.n_tx()
            )));
        }
        if r.k() != h.k_users() {
            return Err(Error::Dimension(format!(
                "gram size {} does not match channel size {}",
                r.k(),
                h.k_users()
            )));
        }
        let cond = gram_condition(h);
        if !(cond < MAX_GRAM_CONDITION) {
            return Err(Error::IllConditioned {
                cond,
                limit: MAX_GRAM_CONDITION,
            });
        }
        Ok(Self {
            h: h.entries().clone(),
            lu: h.entries().clone().lu(),
            cond,
            k: h.k_users(),
        })
    }

    pub fn gram_condition(&self) -> f64 {
        self.cond
    }

    /// Solve `H·W = T` for `W = H†·R⁻¹·T` (the two coincide for square
    /// invertible `H`), with one step of iterative refinement to keep the
    /// residual near machine precision even for poorly conditioned draws.
    pub fn build(&self, t: &TargetMatrix) -> Result<Precoder> {
        if t.k() != self.k {
            return Err(Error::Dimension(format!(
                "target size {} does not match channel size {}",
                t.k(),
                self.k
            )));
        }
        let t_scale = t
            .entries()
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut w = self.lu.solve(t.entries()).ok_or(Error::IllConditioned {
            cond: self.cond,
            limit: MAX_GRAM_CONDITION,
        })?;
        for _ in 0..2 {
            let resid = t.entries() - &self.h * &w;
            let err = resid.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
            if err <= 1e-13 * t_scale {
                break;
            }
            let delta = self.lu.solve(&resid).ok_or(Error::IllConditioned {
                cond: self.cond,
                limit: MAX_GRAM_CONDITION,
            })?;
            w += delta;
        }
        let resid = t.entries() - &self.h * &w;
        let err = resid.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        if err > PRECODER_RESIDUAL_TOL * t_scale {
            return Err(Error::Invariant(format!(
                "precoder residual {:.3e} exceeds {:.1e} (gram condition {:.3e})",
                err / t_scale,
                PRECODER_RESIDUAL_TOL,
                self.cond
            )));
        }
        let cost = (0..self.k)
            .map(|j| w.column(j).iter().map(|z| z.norm_sqr()).sum())
            .collect();
        Ok(Precoder {
            w,
            t: t.clone(),
            cost,
        })
    }
}

/// Build the precoder `W = H†·R⁻¹·T` for one target.
pub fn build_precoder(
    h: &ChannelMatrix,
    r: &GramMatrix,
    t: &TargetMatrix,
) -> Result<Precoder> {
    PrecoderBuilder::new(h, r)?.build(t)
}

/// Winning mask of the partial-CI search together with its allocation,
/// objective value, and precoder.
#[derive(Debug, Clone)]
pub struct PcizfOutcome {
    pub mask: CiMask,
    pub power: PowerAllocation,
    pub objective: f64,
    pub precoder: Precoder,
}

// Lexicographic order over mask bitstrings: position 0 is the first
// character, and '0' < '1'.
fn lex_less(a: u64, b: u64, m: usize) -> bool {
    for p in 0..m {
        let (x, y) = ((a >> p) & 1, (b >> p) & 1);
        if x != y {
            return x < y;
        }
    }
    false
}

/// Enumerate all 2^m retention masks over the constructive positions of
/// `g`, evaluate each under the given power policy, and return the mask
/// maximizing the objective.
///
/// Ties break toward the mask retaining more terms, then toward the
/// lexicographically smallest bitstring, so the result is independent of
/// enumeration order.
pub fn pcizf_search(
    h: &ChannelMatrix,
    r: &GramMatrix,
    g: &CiMatrix,
    objective: Objective,
    pa_policy: PaPolicy,
    p_tot: f64,
) -> Result<PcizfOutcome> {
    if r.k() != g.k() {
        return Err(Error::Dimension(format!(
            "gram size {} does not match ci matrix size {}",
            r.k(),
            g.k()
        )));
    }
    let positions = constructive_positions(g);
    let m = positions.len();
    if m > MAX_CI_TERMS {
        return Err(Error::Capacity(format!(
            "{m} CI terms exceed the enumeration guard of {MAX_CI_TERMS} (2^m masks)"
        )));
    }
    let builder = PrecoderBuilder::new(h, r)?;
    let mut best: Option<(f64, usize, u64, PowerAllocation, Precoder)> = None;
    for bits in 0..(1u64 << m) {
        let retained = bits.count_ones() as usize;
        let t = build_target(r, |i, j| {
            positions
                .iter()
                .enumerate()
                .any(|(idx, &(pi, pj))| (bits >> idx) & 1 == 1 && pi == i && pj == j)
        });
        let prec = builder.build(&t)?;
        let power = allocate(pa_policy, &prec, p_tot)?;
        let sinr = sinr_ci(&t, &power);
        let value = objective.evaluate(&sinr);
        let better = match &best {
            None => true,
            Some((bv, bc, bb, _, _)) => {
                value > *bv
                    || (value == *bv
                        && (retained > *bc
                            || (retained == *bc && lex_less(bits, *bb, m))))
            }
        };
        if better {
            best = Some((value, retained, bits, power, prec));
        }
    }
    let (objective, _, bits, power, precoder) =
        best.expect("mask enumeration is never empty");
    Ok(PcizfOutcome {
        mask: CiMask::from_bits(g, bits)?,
        power,
        objective,
        precoder,
    })
}

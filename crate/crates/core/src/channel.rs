//! Channel matrices, their Gram matrices, and the seeded random source
//! used for Monte Carlo trials.
//!
//! A [`ChannelMatrix`] holds the K×N_t complex gains between a multi-antenna
//! transmitter and K single-antenna users (rows are users). Its Gram matrix
//! `R = H·H†` collects the pairwise channel cross-correlations that drive
//! both the precoder design and the constructive-interference test.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Gram matrices with a condition number above this limit are rejected:
/// the precoder requires an invertible `R`.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

const REDRAW_LIMIT: usize = 64;

/// Deterministic random stream for one Monte Carlo trial.
///
/// Identical `(seed, stream_id)` pairs reproduce identical draws bit for bit
/// on the same build; disjoint stream ids give independent streams, which is
/// how trial-parallelism stays reproducible.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// K×N_t complex channel matrix; row k is the channel of user k.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: DMatrix<Complex64>,
}

impl ChannelMatrix {
    /// Wrap an explicit matrix, rejecting empty dimensions and non-finite
    /// entries.
    pub fn from_matrix(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "channel matrix must be at least 1x1, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Argument(
                "channel matrix contains non-finite entries".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Number of users K (rows).
    pub fn k_users(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of transmit antennas N_t (columns).
    pub fn n_tx(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.k_users() == self.n_tx()
    }

    /// Squared Euclidean norm of user k's channel row.
    pub fn row_norm_sq(&self, k: usize) -> f64 {
        self.entries.row(k).iter().map(|z| z.norm_sqr()).sum()
    }
}

/// K×K Hermitian Gram matrix `R = H·H†` with entries `rho_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<Complex64>,
}

impl GramMatrix {
    /// Wrap an explicitly given Hermitian matrix (e.g. hand-built test
    /// instances). Rejects matrices that are not Hermitian to 1e-12
    /// relative or whose diagonal is negative.
    pub fn from_hermitian(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "gram matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let scale = entries
            .iter()
            .map(|z| z.norm())
            .fold(f64::MIN_POSITIVE, f64::max);
        for i in 0..entries.nrows() {
            if entries[(i, i)].im.abs() > 1e-12 * scale || entries[(i, i)].re < 0.0 {
                return Err(Error::Argument(format!(
                    "gram diagonal entry {i} must be real and nonnegative"
                )));
            }
            for j in 0..entries.ncols() {
                if (entries[(i, j)] - entries[(j, i)].conj()).norm() > 1e-12 * scale {
                    return Err(Error::Argument(format!(
                        "gram matrix is not Hermitian at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    /// Cross-correlation `rho_ij` between users i and j.
    pub fn rho(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }

    /// Real diagonal `rho_kk = ||h_k||^2`.
    pub fn diag_real(&self) -> Vec<f64> {
        (0..self.k()).map(|k| self.entries[(k, k)].re).collect()
    }

    /// Principal submatrix over the given user indices, in the given order.
    pub fn principal(&self, users: &[usize]) -> Result<GramMatrix> {
        validate_index_set(self.k(), users)?;
        let n = users.len();
        let entries =
            DMatrix::from_fn(n, n, |i, j| self.entries[(users[i], users[j])]);
        Ok(GramMatrix { entries })
    }
}

/// Draw a K×N_t channel with i.i.d. circularly-symmetric complex Gaussian
/// entries of unit variance (real and imaginary parts each N(0, 1/2)).
///
/// Square draws that would be numerically non-invertible (Gram condition
/// above [`MAX_GRAM_CONDITION`]) are rejected and redrawn; for continuous
/// fading this has negligible probability.
pub fn generate_rayleigh(
    k: usize,
    n_tx: usize,
    rng: &mut RandomSource,
) -> Result<ChannelMatrix> {
    if k == 0 || n_tx == 0 {
        return Err(Error::Dimension(format!(
            "channel dimensions must be positive, got k={k}, n_tx={n_tx}"
        )));
    }
    let sigma = std::f64::consts::FRAC_1_SQRT_2;
    for _attempt in 0..REDRAW_LIMIT {
        let mut entries = DMatrix::zeros(k, n_tx);
        // Row-major draw order: row i depends only on draws before it, so
        // the first rows of a larger pool match a smaller pool's draw.
        for i in 0..k {
            for j in 0..n_tx {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                entries[(i, j)] = Complex64::new(re * sigma, im * sigma);
            }
        }
        let h = ChannelMatrix { entries };
        if k != n_tx {
            return Ok(h);
        }
        let cond = gram_condition(&h);
        if cond <= MAX_GRAM_CONDITION {
            return Ok(h);
        }
        log::warn!(
            "redrawing {k}x{n_tx} channel: gram condition {cond:.3e} exceeds {MAX_GRAM_CONDITION:.1e}"
        );
    }
    Err(Error::IllConditioned {
        cond: f64::INFINITY,
        limit: MAX_GRAM_CONDITION,
    })
}

/// Condition number of `R = H·H†`, computed as the squared singular-value
/// ratio of `H`. Infinite when `H` is rank deficient.
pub fn gram_condition(h: &ChannelMatrix) -> f64 {
    let sv = h.entries.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        return f64::INFINITY;
    }
    (max / min).powi(2)
}

/// Gram matrix `R = H·H†`, symmetrized so that `rho_ij = conj(rho_ji)` holds
/// exactly and the diagonal is exactly real.
pub fn gram(h: &ChannelMatrix) -> GramMatrix {
    let a = h.entries() * h.entries().adjoint();
    let k = a.nrows();
    let mut r = DMatrix::zeros(k, k);
    for i in 0..k {
        r[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..k {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)].conj());
            r[(i, j)] = avg;
            r[(j, i)] = avg.conj();
        }
    }
    GramMatrix { entries: r }
}

/// Extract the rows `users` of `h`, in the given order.
pub fn submatrix(h: &ChannelMatrix, users: &[usize]) -> Result<ChannelMatrix> {
    validate_index_set(h.k_users(), users)?;
    let entries = DMatrix::from_fn(users.len(), h.n_tx(), |i, j| {
        h.entries[(users[i], j)]
    });
    Ok(ChannelMatrix { entries })
}

pub(crate) fn validate_index_set(k: usize, users: &[usize]) -> Result<()> {
    if users.is_empty() {
        return Err(Error::Index("empty user index set".into()));
    }
    let mut seen = vec![false; k];
    for &u in users {
        if u >= k {
            return Err(Error::Index(format!(
                "user index {u} out of range 0..{k}"
            )));
        }
        if seen[u] {
            return Err(Error::Index(format!("duplicate user index {u}")));
        }
        seen[u] = true;
    }
    Ok(())
}

#[derive(Deserialize)]
struct ChannelFile {
    k: usize,
    n_tx: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Load a fixed channel matrix from JSON with fields `k`, `n_tx`, and
/// row-major `re`/`im` arrays of length `k * n_tx`.
pub fn channel_from_json_str(text: &str) -> Result<ChannelMatrix> {
    let file: ChannelFile = serde_json::from_str(text)?;
    if file.re.len() != file.k * file.n_tx || file.im.len() != file.k * file.n_tx {
        return Err(Error::Dimension(format!(
            "expected {} re/im entries for a {}x{} channel, got {}/{}",
            file.k * file.n_tx,
            file.k,
            file.n_tx,
            file.re.len(),
            file.im.len()
        )));
    }
    if file.k == 0 || file.n_tx == 0 {
        return Err(Error::Dimension(
            "channel dimensions must be positive".into(),
        ));
    }
    let entries = DMatrix::from_fn(file.k, file.n_tx, |i, j| {
        let idx = i * file.n_tx + j;
        Complex64::new(file.re[idx], file.im[idx])
    });
    ChannelMatrix::from_matrix(entries)
}

/// Load a fixed channel matrix from a JSON file (see [`channel_from_json_str`]).
pub fn load_channel_json(path: &std::path::Path) -> Result<ChannelMatrix> {
    let text = std::fs::read_to_string(path)?;
    channel_from_json_str(&text)
}

//! Monte Carlo experiment engine.
//!
//! A sweep iterates a grid (SNR in dB, or pool size at fixed SNR) over
//! `n_trials` paired trials: every scheme at a given trial sees the same
//! channel and symbol draws, which keeps dB-gap readouts between schemes
//! low-variance. Draws depend only on `(seed, trial_index)`, never on the
//! grid point or the worker schedule, so results are bit-reproducible and
//! sweeps can be split or parallelized freely.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{gram, generate_rayleigh, submatrix, RandomSource};
use crate::error::{Error, Result};
use crate::metrics::{rate_report, retention, sinr_ci, Objective, RateReport, RetentionStat};
use crate::power::{allocate, PaPolicy};
use crate::precoding::{
    ci_matrix, draw_symbols, pcizf_search, target_cizf, target_zf, PrecoderBuilder,
};
use crate::selection::{
    cizf_uniform_sum_rate, select_optimal, select_random, select_spus, select_sus,
    SelectionResult, SusParams,
};

/// Convert a total transmit power from dB (over unit noise) to linear.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderKind {
    Zf,
    Cizf,
    Pcizf,
}

impl PrecoderKind {
    pub fn label(&self) -> &'static str {
        match self {
            PrecoderKind::Zf => "zf",
            PrecoderKind::Cizf => "cizf",
            PrecoderKind::Pcizf => "pcizf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    None,
    Random,
    Sus,
    Optimal,
    Spus,
}

impl SelectionKind {
    pub fn label(&self) -> &'static str {
        match self {
            SelectionKind::None => "none",
            SelectionKind::Random => "random",
            SelectionKind::Sus => "sus",
            SelectionKind::Optimal => "optimal",
            SelectionKind::Spus => "spus",
        }
    }
}

/// One experiment arm: which precoder, which power policy, which selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub precoder: PrecoderKind,
    pub pa: PaPolicy,
    pub selection: SelectionKind,
}

impl SchemeSpec {
    pub fn new(precoder: PrecoderKind, pa: PaPolicy, selection: SelectionKind) -> Self {
        Self {
            precoder,
            pa,
            selection,
        }
    }

    /// Label of the form `precoder/pa/selection`, e.g. `cizf/uniform/none`.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}",
            self.precoder.label(),
            self.pa.label(),
            self.selection.label()
        )
    }

    /// Parse `precoder/pa` or `precoder/pa/selection`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split('/').collect();
        if parts.len() != 2 && parts.len() != 3 {
            return Err(Error::Argument(format!(
                "scheme '{text}' must look like zf/uniform or cizf/max_throughput/spus"
            )));
        }
        let precoder = match parts[0] {
            "zf" => PrecoderKind::Zf,
            "cizf" => PrecoderKind::Cizf,
            "pcizf" => PrecoderKind::Pcizf,
            other => {
                return Err(Error::Argument(format!(
                    "unknown precoder '{other}' (zf | cizf | pcizf)"
                )))
            }
        };
        let pa = PaPolicy::parse(parts[1])?;
        let selection = if parts.len() == 3 {
            match parts[2] {
                "none" => SelectionKind::None,
                "random" => SelectionKind::Random,
                "sus" => SelectionKind::Sus,
                "optimal" => SelectionKind::Optimal,
                "spus" => SelectionKind::Spus,
                other => {
                    return Err(Error::Argument(format!(
                        "unknown selection '{other}' (none | random | sus | optimal | spus)"
                    )))
                }
            }
        } else {
            SelectionKind::None
        };
        Ok(Self {
            precoder,
            pa,
            selection,
        })
    }
}

fn default_sus_alpha() -> f64 {
    0.3
}

fn default_trials() -> usize {
    100
}

/// Full description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_tx: usize,
    pub k_pool: usize,
    /// SNR grid in dB (ignored when `pool_grid` is set).
    #[serde(default)]
    pub snr_grid_db: Vec<f64>,
    /// Pool-size grid; set together with `fixed_snr_db` for pool sweeps.
    #[serde(default)]
    pub pool_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub fixed_snr_db: Option<f64>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    pub seed: u64,
    pub schemes: Vec<SchemeSpec>,
    #[serde(default)]
    pub capped: bool,
    #[serde(default = "default_sus_alpha")]
    pub sus_alpha: f64,
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridPoint {
    SnrDb(f64),
    PoolSize(usize),
}

impl GridPoint {
    pub fn kind(&self) -> &'static str {
        match self {
            GridPoint::SnrDb(_) => "snr_db",
            GridPoint::PoolSize(_) => "pool",
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            GridPoint::SnrDb(v) => *v,
            GridPoint::PoolSize(p) => *p as f64,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 {
            return Err(Error::Config("n_tx must be positive".into()));
        }
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        if self.k_pool < self.n_tx {
            return Err(Error::Config(format!(
                "k_pool {} must be at least n_tx {}",
                self.k_pool, self.n_tx
            )));
        }
        match &self.pool_grid {
            Some(grid) => {
                if grid.is_empty() {
                    return Err(Error::Config("pool grid is empty".into()));
                }
                if self.fixed_snr_db.is_none() {
                    return Err(Error::Config(
                        "pool sweeps need fixed_snr_db".into(),
                    ));
                }
                if grid.iter().any(|&p| p < self.n_tx) {
                    return Err(Error::Config(format!(
                        "every pool-grid value must be at least n_tx {}",
                        self.n_tx
                    )));
                }
            }
            None => {
                if self.snr_grid_db.is_empty() {
                    return Err(Error::Config("snr grid is empty".into()));
                }
            }
        }
        if !(self.sus_alpha > 0.0 && self.sus_alpha < 1.0) {
            return Err(Error::Config(format!(
                "sus_alpha must lie in (0, 1), got {}",
                self.sus_alpha
            )));
        }
        for scheme in &self.schemes {
            if scheme.selection == SelectionKind::None {
                let pools_match = match &self.pool_grid {
                    Some(grid) => grid.iter().all(|&p| p == self.n_tx),
                    None => self.k_pool == self.n_tx,
                };
                if !pools_match {
                    return Err(Error::Config(format!(
                        "scheme {} has no selection but the pool exceeds n_tx",
                        scheme.label()
                    )));
                }
            }
            if scheme.precoder == PrecoderKind::Pcizf
                && self.n_tx * (self.n_tx - 1) > crate::precoding::MAX_CI_TERMS
            {
                return Err(Error::Config(format!(
                    "pcizf with n_tx {} can exceed the CI enumeration guard",
                    self.n_tx
                )));
            }
        }
        Ok(())
    }

    /// Grid points in sweep order.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        match &self.pool_grid {
            Some(grid) => grid.iter().map(|&p| GridPoint::PoolSize(p)).collect(),
            None => self
                .snr_grid_db
                .iter()
                .map(|&db| GridPoint::SnrDb(db))
                .collect(),
        }
    }

    /// Rows drawn per trial: enough for the largest pool in the sweep.
    fn max_pool_rows(&self) -> usize {
        match &self.pool_grid {
            Some(grid) => grid.iter().copied().max().unwrap_or(self.k_pool),
            None => self.k_pool,
        }
    }
}

/// Results of one scheme at one trial.
#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub scheme: SchemeSpec,
    pub report: RateReport,
    pub retention: Option<RetentionStat>,
    pub selection: Option<SelectionResult>,
}

// Streams per trial: channel, symbols, and selection randomness.
const STREAMS_PER_TRIAL: u64 = 3;

fn grid_mix(seed: u64, grid: GridPoint) -> u64 {
    // Stable per-grid-point sub-seed for the random-selection stream.
    let bits = match grid {
        GridPoint::SnrDb(db) => db.to_bits(),
        GridPoint::PoolSize(p) => p as u64,
    };
    seed ^ bits.rotate_left(17) ^ 0x9e37_79b9_7f4a_7c15
}

/// Run the full scheme list once at a single grid point.
///
/// One channel draw and one symbol draw per pool user are shared by every
/// scheme (paired design). Pipeline per scheme: select users, build the
/// target and precoder on the selected subchannel, allocate power, report
/// metrics.
pub fn run_trial(
    cfg: &ExperimentConfig,
    grid: GridPoint,
    trial_index: usize,
) -> Result<Vec<TrialOutcome>> {
    let n = cfg.n_tx;
    let rows = cfg.max_pool_rows();
    let pool_size = match grid {
        GridPoint::PoolSize(p) => p,
        GridPoint::SnrDb(_) => cfg.k_pool,
    };
    let snr_db = match grid {
        GridPoint::SnrDb(db) => db,
        GridPoint::PoolSize(_) => cfg.fixed_snr_db.ok_or_else(|| {
            Error::Config("pool sweeps need fixed_snr_db".into())
        })?,
    };
    let p_tot = db_to_linear(snr_db);
    let base = STREAMS_PER_TRIAL * trial_index as u64;

    let mut ch_rng = RandomSource::new(cfg.seed, base);
    let h_full = generate_rayleigh(rows, n, &mut ch_rng)?;
    let mut sym_rng = RandomSource::new(cfg.seed, base + 1);
    let s_full = draw_symbols(rows, &mut sym_rng)?;

    let pool_users: Vec<usize> = (0..pool_size).collect();
    let h_pool = submatrix(&h_full, &pool_users)?;
    let s_pool = s_full.subset(&pool_users)?;
    let r_pool = gram(&h_pool);
    let g_pool = ci_matrix(&r_pool, &s_pool)?;

    let mut random_users: Option<SelectionResult> = None;
    let mut outcomes = Vec::with_capacity(cfg.schemes.len());

    for scheme in &cfg.schemes {
        let label = scheme.label();
        let wrap = |e: Error| e.in_trial(trial_index, &label);

        let selection: Option<SelectionResult> = match scheme.selection {
            SelectionKind::None => {
                if pool_size != n {
                    return Err(wrap(Error::Config(format!(
                        "scheme without selection needs pool == n_tx, got {pool_size}"
                    ))));
                }
                None
            }
            SelectionKind::Random => {
                if random_users.is_none() {
                    let mut sel_rng =
                        RandomSource::new(grid_mix(cfg.seed, grid), base + 2);
                    random_users =
                        Some(select_random(pool_size, n, &mut sel_rng).map_err(wrap)?);
                }
                random_users.clone()
            }
            SelectionKind::Sus => Some(
                select_sus(&h_pool, n, SusParams { alpha: cfg.sus_alpha })
                    .map_err(wrap)?,
            ),
            SelectionKind::Optimal => {
                Some(select_optimal(&h_pool, &s_pool, n, p_tot).map_err(wrap)?)
            }
            SelectionKind::Spus => Some(select_spus(&g_pool, n).map_err(wrap)?),
        };

        let users: Vec<usize> = match &selection {
            Some(sel) => sel.users.clone(),
            None => (0..n).collect(),
        };
        let h_sel = submatrix(&h_pool, &users).map_err(wrap)?;
        let r_sel = r_pool.principal(&users).map_err(wrap)?;
        let g_sel = g_pool.principal(&users).map_err(wrap)?;

        let (target, power, retention_stat) = match scheme.precoder {
            PrecoderKind::Zf => {
                let builder = PrecoderBuilder::new(&h_sel, &r_sel).map_err(wrap)?;
                let t = target_zf(&r_sel);
                let prec = builder.build(&t).map_err(wrap)?;
                let power = allocate(scheme.pa, &prec, p_tot).map_err(wrap)?;
                (t, power, None)
            }
            PrecoderKind::Cizf => {
                let builder = PrecoderBuilder::new(&h_sel, &r_sel).map_err(wrap)?;
                let (t, _mask) = target_cizf(&r_sel, &g_sel).map_err(wrap)?;
                let prec = builder.build(&t).map_err(wrap)?;
                let power = allocate(scheme.pa, &prec, p_tot).map_err(wrap)?;
                (t, power, None)
            }
            PrecoderKind::Pcizf => {
                let outcome = pcizf_search(
                    &h_sel,
                    &r_sel,
                    &g_sel,
                    Objective::for_policy(scheme.pa),
                    scheme.pa,
                    p_tot,
                )
                .map_err(wrap)?;
                let stat = retention(&outcome.mask, &g_sel);
                (
                    outcome.precoder.target().clone(),
                    outcome.power,
                    Some(stat),
                )
            }
        };

        let sinr = sinr_ci(&target, &power);
        let report = rate_report(&sinr, cfg.capped);
        outcomes.push(TrialOutcome {
            scheme: *scheme,
            report,
            retention: retention_stat,
            selection,
        });
    }

    check_trial_dominance(cfg, &outcomes, &h_pool, &r_pool, &g_pool, p_tot)
        .map_err(|e| e.in_trial(trial_index, "dominance"))?;

    Ok(outcomes)
}

/// In-trial sanity assertions: an optimized allocation can never do worse
/// than uniform for the same precoder and selection; the partial-CI search
/// can never do worse than the full CI mask under the same policy; the
/// exhaustive selection can never do worse than a heuristic under the
/// shared selection objective.
fn check_trial_dominance(
    cfg: &ExperimentConfig,
    outcomes: &[TrialOutcome],
    h_pool: &crate::channel::ChannelMatrix,
    r_pool: &crate::channel::GramMatrix,
    g_pool: &crate::precoding::CiMatrix,
    p_tot: f64,
) -> Result<()> {
    let uncapped_sum = |o: &TrialOutcome| Objective::Throughput.evaluate(&o.report.sinr);
    let min_sinr = |o: &TrialOutcome| Objective::Fairness.evaluate(&o.report.sinr);

    for a in outcomes {
        for b in outcomes {
            // Optimized PA dominates uniform PA for the same precoder and
            // selection.
            if a.scheme.precoder == b.scheme.precoder
                && a.scheme.selection == b.scheme.selection
                && b.scheme.pa == PaPolicy::Uniform
            {
                if a.scheme.pa == PaPolicy::MaxThroughput {
                    let (fa, fb) = (uncapped_sum(a), uncapped_sum(b));
                    if fa < fb - 1e-9 * fb.abs().max(1.0) {
                        return Err(Error::Invariant(format!(
                            "{} sum rate {fa} below uniform {fb}",
                            a.scheme.label()
                        )));
                    }
                }
                if a.scheme.pa == PaPolicy::MaxFairness {
                    let (fa, fb) = (min_sinr(a), min_sinr(b));
                    if fa < fb - 1e-9 * fb.abs().max(1.0) {
                        return Err(Error::Invariant(format!(
                            "{} min SINR {fa} below uniform {fb}",
                            a.scheme.label()
                        )));
                    }
                }
            }
            // The partial search dominates the full CI mask.
            if a.scheme.precoder == PrecoderKind::Pcizf
                && b.scheme.precoder == PrecoderKind::Cizf
                && a.scheme.pa == b.scheme.pa
                && a.scheme.selection == b.scheme.selection
            {
                let objective = Objective::for_policy(a.scheme.pa);
                let (fa, fb) = (
                    objective.evaluate(&a.report.sinr),
                    objective.evaluate(&b.report.sinr),
                );
                if fa < fb - 1e-9 * fb.abs().max(1.0) {
                    return Err(Error::Invariant(format!(
                        "{} objective {fa} below full-mask {fb}",
                        a.scheme.label()
                    )));
                }
            }
            // Exhaustive selection dominates heuristics on the selection
            // objective (uniform-power CI sum rate).
            if a.scheme.selection == SelectionKind::Optimal
                && matches!(
                    b.scheme.selection,
                    SelectionKind::Spus | SelectionKind::Sus
                )
                && a.scheme.precoder == b.scheme.precoder
                && a.scheme.pa == b.scheme.pa
            {
                let ua = a.selection.as_ref().expect("optimal has users");
                let ub = b.selection.as_ref().expect("heuristic has users");
                let fa =
                    cizf_uniform_sum_rate(h_pool, r_pool, g_pool, &ua.users, p_tot)?;
                let fb =
                    cizf_uniform_sum_rate(h_pool, r_pool, g_pool, &ub.users, p_tot)?;
                if fa < fb - 1e-9 * fb.abs().max(1.0) {
                    return Err(Error::Invariant(format!(
                        "optimal selection objective {fa} below {} {fb}",
                        b.scheme.label()
                    )));
                }
            }
        }
    }
    let _ = cfg;
    Ok(())
}

/// One aggregated row of a sweep: a scheme at a grid point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub scheme: String,
    pub precoder: &'static str,
    pub pa: &'static str,
    pub selection: &'static str,
    pub grid_kind: &'static str,
    pub grid_value: f64,
    pub mean_per_user_rate: f64,
    pub mean_min_rate: f64,
    pub mean_retention_pct: Option<f64>,
    pub std_error: f64,
    pub n_trials: usize,
    pub seed: u64,
}

/// Aggregated sweep output plus the config it came from.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    /// Set when a trial failed: results cover only the surviving trials.
    pub aborted: Option<String>,
}

pub const CSV_HEADER: &str = "scheme,precoder,pa,selection,grid_kind,grid_value,\
mean_per_user_rate,mean_min_rate,mean_retention_pct,std_error,n_trials,seed";

impl SweepResult {
    /// Deterministic CSV rendering (byte-identical across reruns and
    /// worker counts).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let retention = row
                .mean_retention_pct
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                row.scheme,
                row.precoder,
                row.pa,
                row.selection,
                row.grid_kind,
                row.grid_value,
                row.mean_per_user_rate,
                row.mean_min_rate,
                retention,
                row.std_error,
                row.n_trials,
                row.seed
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Path of the JSON config sidecar for an output path.
    pub fn sidecar_path(out: &Path) -> PathBuf {
        let sidecar = out.with_extension("json");
        if sidecar == out {
            out.with_extension("config.json")
        } else {
            sidecar
        }
    }

    /// Persist the full config (and abort flag) next to the CSV.
    pub fn write_sidecar(&self, out: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            config: &'a ExperimentConfig,
            aborted: &'a Option<String>,
        }
        let text = serde_json::to_string_pretty(&Sidecar {
            config: &self.config,
            aborted: &self.aborted,
        })?;
        std::fs::write(Self::sidecar_path(out), text)?;
        Ok(())
    }

    /// `(grid_value, mean_per_user_rate)` in grid order for one scheme.
    pub fn curve(&self, scheme_label: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme_label)
            .map(|r| (r.grid_value, r.mean_per_user_rate))
            .collect()
    }

    /// `(grid_value, mean_min_rate)` in grid order for one scheme.
    pub fn min_rate_curve(&self, scheme_label: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme_label)
            .map(|r| (r.grid_value, r.mean_min_rate))
            .collect()
    }

    /// Mean retention percentage across grid points for one scheme.
    pub fn mean_retention(&self, scheme_label: &str) -> Option<f64> {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.scheme == scheme_label)
            .filter_map(|r| r.mean_retention_pct)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(kahan_sum(values.iter().copied()) / values.len() as f64)
        }
    }
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = kahan_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = kahan_sum(values.iter().map(|v| (v - mean) * (v - mean)))
        / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Run a sweep on the current rayon pool.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let grid = cfg.grid_points();

    // One work unit per trial; grid points inside so every scheme shares
    // the trial's draws. Collection is indexed by trial, which makes the
    // reduction order (and therefore the output bytes) independent of the
    // worker schedule.
    let per_trial: Vec<Result<Vec<Vec<TrialOutcome>>>> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|trial| {
            grid.iter()
                .map(|&gp| run_trial(cfg, gp, trial))
                .collect::<Result<Vec<_>>>()
        })
        .collect();

    let mut survivors: Vec<&Vec<Vec<TrialOutcome>>> = Vec::new();
    let mut aborted = None;
    for (trial, result) in per_trial.iter().enumerate() {
        match result {
            Ok(data) => survivors.push(data),
            Err(e) => {
                if aborted.is_none() {
                    aborted = Some(format!("trial {trial} failed: {e}"));
                }
            }
        }
    }

    let mut rows = Vec::new();
    for (s_idx, scheme) in cfg.schemes.iter().enumerate() {
        for (g_idx, gp) in grid.iter().enumerate() {
            let per_user: Vec<f64> = survivors
                .iter()
                .map(|t| t[g_idx][s_idx].report.per_user_rate)
                .collect();
            let min_rate: Vec<f64> = survivors
                .iter()
                .map(|t| t[g_idx][s_idx].report.min_rate)
                .collect();
            let retention: Vec<f64> = survivors
                .iter()
                .filter_map(|t| {
                    t[g_idx][s_idx]
                        .retention
                        .as_ref()
                        .and_then(|r| r.percentage())
                })
                .collect();
            let (mean, se) = mean_and_se(&per_user);
            let (mean_min, _) = mean_and_se(&min_rate);
            let mean_retention = if retention.is_empty() {
                None
            } else {
                Some(kahan_sum(retention.iter().copied()) / retention.len() as f64)
            };
            rows.push(SweepRow {
                scheme: scheme.label(),
                precoder: scheme.precoder.label(),
                pa: scheme.pa.label(),
                selection: scheme.selection.label(),
                grid_kind: gp.kind(),
                grid_value: gp.value(),
                mean_per_user_rate: mean,
                mean_min_rate: mean_min,
                mean_retention_pct: mean_retention,
                std_error: se,
                n_trials: per_user.len(),
                seed: cfg.seed,
            });
        }
    }

    Ok(SweepResult {
        config: cfg.clone(),
        rows,
        aborted,
    })
}

/// Run a sweep on a dedicated pool with `workers` threads (`None` uses the
/// global pool). Results are identical either way.
pub fn run_sweep_with_workers(
    cfg: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<SweepResult> {
    match workers {
        None => run_sweep(cfg),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(|| run_sweep(cfg))
        }
    }
}

/// Interpolated SNR at which a monotone nondecreasing curve reaches
/// `target`; errors when the target lies outside the curve's value range.
fn snr_at_rate(curve: &[(f64, f64)], target: f64) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::Range("curve needs at least two points".into()));
    }
    let first = curve[0].1;
    let last = curve[curve.len() - 1].1;
    if target < first || target > last {
        return Err(Error::Range(format!(
            "target rate {target} outside curve range [{first}, {last}]"
        )));
    }
    for i in 0..curve.len() {
        if curve[i].1 >= target {
            if i == 0 {
                return Ok(curve[0].0);
            }
            let (x0, y0) = curve[i - 1];
            let (x1, y1) = curve[i];
            return Ok(x0 + (target - y0) * (x1 - x0) / (y1 - y0));
        }
    }
    unreachable!("target within range implies a crossing");
}

/// Horizontal gap in dB between two rate curves at a target rate:
/// `SNR_b(target) − SNR_a(target)`. Positive when curve `a` reaches the
/// target with less power.
pub fn db_gain_at_rate(
    curve_a: &[(f64, f64)],
    curve_b: &[(f64, f64)],
    target_rate: f64,
) -> Result<f64> {
    let a = snr_at_rate(curve_a, target_rate)?;
    let b = snr_at_rate(curve_b, target_rate)?;
    Ok(b - a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            n_tx: 4,
            k_pool: 4,
            snr_grid_db: vec![0.0, 5.0, 10.0],
            pool_grid: None,
            fixed_snr_db: None,
            n_trials: 4,
            seed: 42,
            schemes: vec![
                SchemeSpec::parse("zf/uniform").unwrap(),
                SchemeSpec::parse("cizf/uniform").unwrap(),
            ],
            capped: false,
            sus_alpha: 0.3,
        }
    }

    #[test]
    fn scheme_labels_round_trip() {
        for text in [
            "zf/uniform/none",
            "cizf/max_throughput/spus",
            "pcizf/max_fairness/optimal",
        ] {
            let scheme = SchemeSpec::parse(text).unwrap();
            assert_eq!(scheme.label(), text);
        }
        assert_eq!(
            SchemeSpec::parse("zf/uniform").unwrap().label(),
            "zf/uniform/none"
        );
        assert!(SchemeSpec::parse("nope/uniform").is_err());
        assert!(SchemeSpec::parse("zf").is_err());
    }

    #[test]
    fn config_validation_rules() {
        let mut cfg = tiny_config();
        assert!(cfg.validate().is_ok());

        cfg.n_trials = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.k_pool = 3;
        assert!(cfg.validate().is_err());

        // Pool larger than n_tx without selection is rejected.
        let mut cfg = tiny_config();
        cfg.k_pool = 8;
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config();
        cfg.snr_grid_db.clear();
        assert!(cfg.validate().is_err());

        // Pool sweep needs a fixed SNR.
        let mut cfg = tiny_config();
        cfg.schemes = vec![SchemeSpec::parse("cizf/uniform/spus").unwrap()];
        cfg.k_pool = 12;
        cfg.pool_grid = Some(vec![4, 8, 12]);
        assert!(cfg.validate().is_err());
        cfg.fixed_snr_db = Some(15.0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn trial_is_deterministic() {
        let cfg = tiny_config();
        let a = run_trial(&cfg, GridPoint::SnrDb(5.0), 3).unwrap();
        let b = run_trial(&cfg, GridPoint::SnrDb(5.0), 3).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.report.sinr, y.report.sinr);
            assert_eq!(x.report.rate, y.report.rate);
        }
    }

    #[test]
    fn cizf_target_differs_from_zf_only_on_constructive_terms() {
        let cfg = tiny_config();
        let trial = 2;
        // Recreate the trial's draws to inspect the targets directly.
        let mut ch = RandomSource::new(cfg.seed, STREAMS_PER_TRIAL * trial);
        let h = generate_rayleigh(4, 4, &mut ch).unwrap();
        let mut sy = RandomSource::new(cfg.seed, STREAMS_PER_TRIAL * trial + 1);
        let s = draw_symbols(4, &mut sy).unwrap();
        let r = gram(&h);
        let g = ci_matrix(&r, &s).unwrap();
        let (t_ci, _) = target_cizf(&r, &g).unwrap();
        let t_zf = target_zf(&r);
        for i in 0..4 {
            for j in 0..4 {
                if t_ci.tau(i, j) != t_zf.tau(i, j) {
                    assert!(i != j && g.g(i, j) > 0.0);
                }
            }
        }
    }

    #[test]
    fn sweep_single_trial_equals_trial_values() {
        let mut cfg = tiny_config();
        cfg.n_trials = 1;
        cfg.snr_grid_db = vec![10.0];
        let sweep = run_sweep(&cfg).unwrap();
        let trial = run_trial(&cfg, GridPoint::SnrDb(10.0), 0).unwrap();
        assert_eq!(sweep.rows.len(), 2);
        assert_relative_eq!(
            sweep.rows[0].mean_per_user_rate,
            trial[0].report.per_user_rate
        );
        assert_eq!(sweep.rows[0].std_error, 0.0);
        assert_eq!(sweep.rows[0].n_trials, 1);
    }

    #[test]
    fn half_sweeps_concatenate_to_full_sweep() {
        let cfg = tiny_config();
        let full = run_sweep(&cfg).unwrap();

        let mut first = cfg.clone();
        first.snr_grid_db = vec![0.0, 5.0];
        let mut second = cfg.clone();
        second.snr_grid_db = vec![10.0];
        let a = run_sweep(&first).unwrap();
        let b = run_sweep(&second).unwrap();

        // Rows are grouped by scheme then grid point; interleave manually.
        let mut merged: Vec<String> = Vec::new();
        for scheme in &cfg.schemes {
            for part in [&a, &b] {
                for row in part.rows.iter().filter(|r| r.scheme == scheme.label()) {
                    merged.push(format!(
                        "{},{},{},{}",
                        row.scheme, row.grid_value, row.mean_per_user_rate, row.std_error
                    ));
                }
            }
        }
        let full_rows: Vec<String> = full
            .rows
            .iter()
            .map(|row| {
                format!(
                    "{},{},{},{}",
                    row.scheme, row.grid_value, row.mean_per_user_rate, row.std_error
                )
            })
            .collect();
        assert_eq!(merged, full_rows);
    }

    #[test]
    fn sweep_is_worker_independent() {
        let cfg = tiny_config();
        let one = run_sweep_with_workers(&cfg, Some(1)).unwrap();
        let four = run_sweep_with_workers(&cfg, Some(4)).unwrap();
        assert_eq!(one.to_csv_string(), four.to_csv_string());
    }

    #[test]
    fn std_error_shrinks_with_trials() {
        let mut small = tiny_config();
        small.snr_grid_db = vec![10.0];
        small.n_trials = 25;
        let mut large = small.clone();
        large.n_trials = 100;
        let se_small = run_sweep(&small).unwrap().rows[0].std_error;
        let se_large = run_sweep(&large).unwrap().rows[0].std_error;
        let ratio = se_small / se_large;
        // Expected ratio 2 within a factor-of-two band.
        assert!(
            (1.0..=4.0).contains(&ratio),
            "std-error ratio {ratio} outside [1, 4]"
        );
    }

    #[test]
    fn csv_shape_and_retention_column() {
        let mut cfg = tiny_config();
        cfg.schemes = vec![
            SchemeSpec::parse("cizf/uniform").unwrap(),
            SchemeSpec::parse("pcizf/uniform").unwrap(),
        ];
        cfg.n_trials = 3;
        cfg.snr_grid_db = vec![10.0];
        let sweep = run_sweep(&cfg).unwrap();
        let csv = sweep.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let cizf_line = lines.next().unwrap();
        let pcizf_line = lines.next().unwrap();
        // cizf has no retention column value; pcizf does.
        let cizf_fields: Vec<&str> = cizf_line.split(',').collect();
        let pcizf_fields: Vec<&str> = pcizf_line.split(',').collect();
        assert_eq!(cizf_fields[8], "");
        assert!(!pcizf_fields[8].is_empty());
        assert_eq!(cizf_fields.len(), 12);
    }

    #[test]
    fn gap_readout_basics() {
        let a = vec![(0.0, 0.2), (10.0, 1.2)];
        assert_relative_eq!(db_gain_at_rate(&a, &a, 0.7).unwrap(), 0.0);

        let b = vec![(2.0, 0.2), (12.0, 1.2)];
        assert_relative_eq!(db_gain_at_rate(&a, &b, 0.7).unwrap(), 2.0);

        // Hand interpolation: crossing 0.5 on [(0,0),(4,0.8),(8,1.0)] is 2.5.
        let c = vec![(0.0, 0.0), (4.0, 0.8), (8.0, 1.0)];
        let crossing = snr_at_rate(&c, 0.5).unwrap();
        assert_relative_eq!(crossing, 2.5);
        assert_relative_eq!(
            crossing,
            crate::oracle::interpolate_crossing(&c, 0.5).unwrap()
        );

        assert!(matches!(
            db_gain_at_rate(&a, &b, 5.0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn pool_sweep_runs_and_uses_nested_pools() {
        let cfg = ExperimentConfig {
            n_tx: 2,
            k_pool: 6,
            snr_grid_db: vec![],
            pool_grid: Some(vec![2, 4, 6]),
            fixed_snr_db: Some(10.0),
            n_trials: 5,
            seed: 7,
            schemes: vec![SchemeSpec::parse("cizf/uniform/spus").unwrap()],
            capped: false,
            sus_alpha: 0.3,
        };
        let sweep = run_sweep(&cfg).unwrap();
        assert!(sweep.aborted.is_none());
        assert_eq!(sweep.rows.len(), 3);
        for row in &sweep.rows {
            assert_eq!(row.grid_kind, "pool");
            assert!(row.mean_per_user_rate.is_finite());
        }
    }
}

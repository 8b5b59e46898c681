//! Multiuser MISO linear precoding with constructive interference.
//!
//! One multi-antenna transmitter serves K single-antenna BPSK users
//! through channel inversion. Conventional zero forcing cancels all
//! cross-user interference; the constructive-interference variant keeps
//! the cross terms that push each receiver deeper into its decision
//! region, and the partial variant searches subsets of those terms for
//! the best power/benefit tradeoff. On top of the precoders sit three
//! power-allocation policies (uniform, max-throughput, max-fairness),
//! four user-selection strategies over larger pools, and a deterministic
//! Monte Carlo sweep engine.
//!
//! # Example
//!
//! ```
//! use cizf_core::{
//!     channel::{generate_rayleigh, gram, RandomSource},
//!     metrics::{rate_report, sinr_ci},
//!     power::{allocate, PaPolicy},
//!     precoding::{build_precoder, ci_matrix, draw_symbols, target_cizf},
//! };
//!
//! let mut rng = RandomSource::new(42, 0);
//! let h = generate_rayleigh(4, 4, &mut rng).unwrap();
//! let r = gram(&h);
//! let s = draw_symbols(4, &mut rng).unwrap();
//! let g = ci_matrix(&r, &s).unwrap();
//! let (t, _mask) = target_cizf(&r, &g).unwrap();
//! let prec = build_precoder(&h, &r, &t).unwrap();
//! let power = allocate(PaPolicy::Uniform, &prec, 10.0).unwrap();
//! let report = rate_report(&sinr_ci(&t, &power), false);
//! assert!(report.sum_rate > 0.0);
//! ```

pub mod channel;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod power;
pub mod precoding;
pub mod selection;
pub mod sim;

pub use channel::{
    channel_from_json_str, generate_rayleigh, gram, gram_condition,
    load_channel_json, submatrix, ChannelMatrix, GramMatrix, RandomSource,
    MAX_GRAM_CONDITION,
};
pub use error::{Error, Result};
pub use metrics::{
    rate_report, retention, sinr_ci, sinr_zf, Objective, RateReport, RetentionStat,
};
pub use power::{
    allocate, ascent_throughput, maxmin_fairness, uniform_power,
    waterfill_throughput, PaPolicy, PowerAllocation, SinrCoefficients,
};
pub use precoding::{
    build_precoder, ci_matrix, constructive_positions, draw_symbols, pcizf_search,
    target_cizf, target_masked, target_zf, CiMask, CiMatrix, PcizfOutcome, Precoder,
    PrecoderBuilder, SymbolVector, TargetMatrix, MAX_CI_TERMS,
};
pub use selection::{
    select_optimal, select_random, select_spus, select_spus_with_buffer, select_sus,
    SelectionMethod, SelectionResult, SpusBuffer, SusParams,
};
pub use sim::{
    db_gain_at_rate, db_to_linear, run_sweep, run_sweep_with_workers, run_trial,
    ExperimentConfig, GridPoint, PrecoderKind, SchemeSpec, SelectionKind,
    SweepResult, TrialOutcome,
};

//! SINRs, spectral efficiencies, the BPSK modulation cap, and CI-term
//! retention statistics.

use serde::Serialize;

use crate::power::{PaPolicy, PowerAllocation};
use crate::precoding::{constructive_positions, CiMask, CiMatrix, TargetMatrix};

const LN_2: f64 = std::f64::consts::LN_2;

/// Per-user SINR for a zero-forcing (diagonal) target: `|tau_kk|^2 p_k`.
pub fn sinr_zf(t: &TargetMatrix, p: &PowerAllocation) -> Vec<f64> {
    (0..t.k())
        .map(|k| t.tau(k, k).norm_sqr() * p.p()[k])
        .collect()
}

/// Per-user SINR with retained CI terms: `sum_j |tau_kj|^2 p_j` (unit
/// noise). Reduces to [`sinr_zf`] when the target is diagonal.
pub fn sinr_ci(t: &TargetMatrix, p: &PowerAllocation) -> Vec<f64> {
    (0..t.k())
        .map(|k| {
            (0..t.k())
                .map(|j| t.tau(k, j).norm_sqr() * p.p()[j])
                .sum()
        })
        .collect()
}

/// Objective used to rank precoder/mask candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Sum rate `sum_k log2(1 + SINR_k)`.
    Throughput,
    /// Worst-user SINR `min_k SINR_k`.
    Fairness,
}

impl Objective {
    pub fn evaluate(&self, sinr: &[f64]) -> f64 {
        match self {
            Objective::Throughput => {
                sinr.iter().map(|&s| s.ln_1p() / LN_2).sum()
            }
            Objective::Fairness => {
                sinr.iter().cloned().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Objective naturally paired with a power policy.
    pub fn for_policy(pa: PaPolicy) -> Objective {
        match pa {
            PaPolicy::MaxFairness => Objective::Fairness,
            _ => Objective::Throughput,
        }
    }
}

/// Per-user and aggregate spectral efficiencies for one trial.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    /// Per-user SINR (linear, unit noise).
    pub sinr: Vec<f64>,
    /// Per-user rate `log2(1 + sinr)`, capped at 1 bit/s/Hz in capped mode.
    pub rate: Vec<f64>,
    pub sum_rate: f64,
    pub min_rate: f64,
    /// `sum_rate / K`.
    pub per_user_rate: f64,
    /// Which users hit the modulation cap (all false when uncapped).
    pub capped: Vec<bool>,
}

/// Build a rate report from SINRs. With `capped` set, rates are limited to
/// the 1 bit/s/Hz BPSK ceiling; the cap applies at reporting time only and
/// never inside power optimization.
pub fn rate_report(sinr: &[f64], capped: bool) -> RateReport {
    assert!(!sinr.is_empty(), "rate report over an empty SINR vector");
    assert!(
        sinr.iter().all(|&s| s >= 0.0 && s.is_finite()),
        "SINRs must be finite and nonnegative"
    );
    let mut rate = Vec::with_capacity(sinr.len());
    let mut caps = Vec::with_capacity(sinr.len());
    for &s in sinr {
        let r = s.ln_1p() / LN_2;
        if capped && r > 1.0 {
            rate.push(1.0);
            caps.push(true);
        } else {
            rate.push(r);
            caps.push(false);
        }
    }
    let sum_rate: f64 = rate.iter().sum();
    let min_rate = rate.iter().cloned().fold(f64::INFINITY, f64::min);
    RateReport {
        per_user_rate: sum_rate / sinr.len() as f64,
        sum_rate,
        min_rate,
        sinr: sinr.to_vec(),
        rate,
        capped: caps,
    }
}

/// How many CI terms a mask kept out of the constructive total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RetentionStat {
    pub retained: usize,
    pub total: usize,
}

impl RetentionStat {
    /// Percentage of kept terms; absent when there were no CI terms.
    pub fn percentage(&self) -> Option<f64> {
        if self.total == 0 {
            None
        } else {
            Some(100.0 * self.retained as f64 / self.total as f64)
        }
    }
}

/// Count retained versus total constructive positions.
pub fn retention(mask: &CiMask, g: &CiMatrix) -> RetentionStat {
    let positions = constructive_positions(g);
    let retained = positions
        .iter()
        .filter(|&&(i, j)| mask.keep(i, j))
        .count();
    RetentionStat {
        retained,
        total: positions.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::GramMatrix;
    use crate::precoding::{ci_matrix, target_cizf, target_zf, SymbolVector};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn real_gram(values: &[f64], k: usize) -> GramMatrix {
        GramMatrix::from_hermitian(DMatrix::from_fn(k, k, |i, j| {
            Complex64::new(values[i * k + j], 0.0)
        }))
        .unwrap()
    }

    fn alloc(p: &[f64]) -> PowerAllocation {
        PowerAllocation::new(p.to_vec(), p.iter().sum::<f64>().max(1.0)).unwrap()
    }

    #[test]
    fn sinr_zf_basic() {
        let r = real_gram(&[1.0, 0.0, 0.0, 1.0], 2);
        let t = target_zf(&r);
        let s = sinr_zf(&t, &alloc(&[1.0, 1.0]));
        assert_eq!(s, vec![1.0, 1.0]);

        let doubled = sinr_zf(&t, &alloc(&[2.0, 2.0]));
        assert_eq!(doubled, vec![2.0, 2.0]);
    }

    #[test]
    fn sinr_zf_hand_instance() {
        let r = real_gram(&[3.0, 0.0, 0.0, 2.0], 2);
        let t = target_zf(&r);
        let s = sinr_zf(&t, &alloc(&[0.5, 2.0]));
        // |3|^2 * 0.5 = 4.5, |2|^2 * 2 = 8.
        assert_relative_eq!(s[0], 4.5);
        assert_relative_eq!(s[1], 8.0);
    }

    #[test]
    fn sinr_ci_reduces_to_zf_on_diagonal() {
        let r = real_gram(&[2.0, -0.4, -0.4, 3.0], 2);
        let t = target_zf(&r);
        let p = alloc(&[0.7, 1.3]);
        assert_eq!(sinr_ci(&t, &p), sinr_zf(&t, &p));
    }

    #[test]
    fn sinr_ci_direct_sum() {
        let r = real_gram(&[1.0, 0.5, 0.5, 1.0], 2);
        let s = SymbolVector::from_signs(vec![1, 1]).unwrap();
        let g = ci_matrix(&r, &s).unwrap();
        let (t, _) = target_cizf(&r, &g).unwrap();
        let sinr = sinr_ci(&t, &alloc(&[1.0, 1.0]));
        assert_relative_eq!(sinr[0], 1.25);
        assert_relative_eq!(sinr[1], 1.25);
    }

    #[test]
    fn sinr_ci_never_below_diagonal_part() {
        let r = real_gram(
            &[2.0, 0.5, 0.2, 0.5, 2.5, 0.8, 0.2, 0.8, 1.8],
            3,
        );
        let s = SymbolVector::from_signs(vec![1, 1, 1]).unwrap();
        let g = ci_matrix(&r, &s).unwrap();
        let (t_ci, _) = target_cizf(&r, &g).unwrap();
        let t_zf = target_zf(&r);
        let p = alloc(&[0.3, 1.0, 0.6]);
        let ci = sinr_ci(&t_ci, &p);
        let zf = sinr_ci(&t_zf, &p);
        for (a, b) in ci.iter().zip(&zf) {
            assert!(a >= b);
        }
    }

    #[test]
    fn rate_report_uncapped() {
        let rep = rate_report(&[1.0, 1.0], false);
        assert_eq!(rep.rate, vec![1.0, 1.0]);
        assert_relative_eq!(rep.sum_rate, 2.0);
        assert_relative_eq!(rep.per_user_rate, 1.0);
        assert_relative_eq!(rep.min_rate, 1.0);
        assert!(rep.capped.iter().all(|&c| !c));
    }

    #[test]
    fn rate_report_cap_engages() {
        let rep = rate_report(&[3.0, 3.0], true);
        assert_eq!(rep.rate, vec![1.0, 1.0]);
        assert!(rep.capped.iter().all(|&c| c));

        // Below the cap the two modes agree.
        let low = rate_report(&[0.8, 0.9], true);
        let low_un = rate_report(&[0.8, 0.9], false);
        assert_eq!(low.rate, low_un.rate);
    }

    #[test]
    fn rate_report_zero_sinr() {
        let rep = rate_report(&[0.0], false);
        assert_eq!(rep.rate, vec![0.0]);
        assert_eq!(rep.min_rate, 0.0);
    }

    #[test]
    fn rate_report_monotone_in_sinr() {
        let lo = rate_report(&[0.5, 1.0, 2.0], false);
        let hi = rate_report(&[0.6, 1.5, 2.0], false);
        assert!(hi.sum_rate >= lo.sum_rate);
    }

    #[test]
    fn retention_counts() {
        let r = real_gram(
            &[2.0, 0.5, -0.3, 0.5, 2.5, 0.7, -0.3, 0.7, 3.0],
            3,
        );
        let s = SymbolVector::from_signs(vec![1, 1, 1]).unwrap();
        let g = ci_matrix(&r, &s).unwrap();

        let full = CiMask::all_constructive(&g);
        let stat = retention(&full, &g);
        assert_eq!(stat.percentage(), Some(100.0));

        let empty = CiMask::none(3);
        let stat = retention(&empty, &g);
        assert_eq!(stat.total, 4);
        assert_eq!(stat.percentage(), Some(0.0));
    }

    #[test]
    fn retention_degenerate_no_terms() {
        let r = real_gram(&[2.0, -0.5, -0.5, 3.0], 2);
        let s = SymbolVector::from_signs(vec![1, 1]).unwrap();
        let g = ci_matrix(&r, &s).unwrap();
        let stat = retention(&CiMask::none(2), &g);
        assert_eq!(stat.total, 0);
        assert_eq!(stat.percentage(), None);
    }
}

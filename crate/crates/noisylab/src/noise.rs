//! Simple non-uniform label noise: the true label is kept with probability
//! 1 - omega(x) and otherwise replaced uniformly among the K - 1 other
//! classes, with 0 <= omega(x) < (K-1)/K.
//!
//! The module provides the transition row, the closed-form forward and
//! inverse transforms between the clean conditional g and the noisy
//! conditional g-tilde, and seeded label flipping.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::simplex::{LabelId, ProbVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Flip-mass specification: one omega for all inputs, or a per-support-point
/// table keyed by point id.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSpec {
    Constant(f64),
    Table(BTreeMap<String, f64>),
}

/// The noise model: kind, flip mass and class count.
///
/// Serialized as `{"kind": "symmetric"|"tabular", "omega": number | {id: number}, "k": integer}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub omega: OmegaSpec,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Symmetric,
    Tabular,
}

/// Upper bound (exclusive) on omega for `k` classes.
pub fn omega_bound(k: usize) -> f64 {
    (k as f64 - 1.0) / k as f64
}

fn check_omega(omega: f64, k: usize) -> Result<()> {
    if !omega.is_finite() || omega < 0.0 || omega >= omega_bound(k) {
        return Err(Error::OmegaOutOfBound { omega, k });
    }
    Ok(())
}

impl NoiseModel {
    /// Symmetric noise with constant flip mass.
    pub fn symmetric(omega: f64, k: usize) -> Result<Self> {
        check_omega(omega, k)?;
        Ok(Self {
            kind: NoiseKind::Symmetric,
            omega: OmegaSpec::Constant(omega),
            k,
        })
    }

    /// Tabular noise keyed by support-point id.
    pub fn tabular(table: BTreeMap<String, f64>, k: usize) -> Result<Self> {
        for &omega in table.values() {
            check_omega(omega, k)?;
        }
        Ok(Self {
            kind: NoiseKind::Tabular,
            omega: OmegaSpec::Table(table),
            k,
        })
    }

    /// Flip mass at a support point. The bound is re-checked at application
    /// so hand-built (deserialized) models cannot smuggle an invalid omega.
    pub fn omega_at(&self, point_id: &str) -> Result<f64> {
        let omega = match &self.omega {
            OmegaSpec::Constant(omega) => *omega,
            OmegaSpec::Table(table) => *table
                .get(point_id)
                .ok_or_else(|| Error::UnknownSupportPoint(point_id.to_string()))?,
        };
        check_omega(omega, self.k)?;
        Ok(omega)
    }

    /// P(Ytilde = . | Y = y, X = x): mass 1 - omega(x) at y, omega(x)/(K-1)
    /// elsewhere.
    pub fn transition_row(&self, point_id: &str, y: LabelId) -> Result<ProbVector> {
        let omega = self.omega_at(point_id)?;
        if y.value() > self.k {
            return Err(Error::InvalidLabel {
                value: y.value(),
                k: self.k,
            });
        }
        let off = omega / (self.k as f64 - 1.0);
        let mut row = vec![off; self.k];
        row[y.index()] = 1.0 - omega;
        ProbVector::new(row)
    }

    /// Resamples each label independently from its transition row.
    ///
    /// Sampling is pinned: one uniform variate per label, the unit interval
    /// partitioned with the kept-label mass first, then off-labels in
    /// ascending class order. `point_ids` must be given for tabular models.
    pub fn flip_labels(
        &self,
        labels: &[LabelId],
        point_ids: Option<&[String]>,
        rng: &mut Rng,
    ) -> Result<Vec<LabelId>> {
        let mut out = Vec::with_capacity(labels.len());
        for (i, &y) in labels.iter().enumerate() {
            let omega = match (&self.omega, point_ids) {
                (OmegaSpec::Constant(omega), _) => {
                    check_omega(*omega, self.k)?;
                    *omega
                }
                (OmegaSpec::Table(_), Some(ids)) => self.omega_at(&ids[i])?,
                (OmegaSpec::Table(_), None) => {
                    return Err(Error::InvalidParameter(
                        "tabular noise model requires per-sample point ids".into(),
                    ))
                }
            };
            let u: f64 = rng.gen::<f64>();
            if u < 1.0 - omega {
                out.push(y);
            } else {
                let off_mass = omega / (self.k as f64 - 1.0);
                let mut slot = ((u - (1.0 - omega)) / off_mass) as usize;
                if slot > self.k - 2 {
                    slot = self.k - 2; // guard against u at the partition edge
                }
                // slot-th class in ascending order, skipping y.
                let flipped = if slot + 1 < y.value() { slot + 1 } else { slot + 2 };
                out.push(LabelId::new(flipped, self.k)?);
            }
        }
        Ok(out)
    }
}

/// Forward transform in closed form: (1 - omega K/(K-1)) g + (omega/(K-1)) 1_K.
pub fn noisy_conditional(g: &ProbVector, omega: f64) -> Result<ProbVector> {
    let k = g.k();
    check_omega(omega, k)?;
    let scale = 1.0 - omega * k as f64 / (k as f64 - 1.0);
    let shift = omega / (k as f64 - 1.0);
    let out: Vec<f64> = g.as_slice().iter().map(|&x| scale * x + shift).collect();
    ProbVector::new(out)
}

/// Inverse transform: (g_tilde - (omega/(K-1)) 1_K) / (1 - omega K/(K-1)).
///
/// `g_tilde` must lie in the image of [`noisy_conditional`] for this omega,
/// i.e. every entry at least omega/(K-1).
pub fn clean_conditional(g_tilde: &ProbVector, omega: f64) -> Result<ProbVector> {
    let k = g_tilde.k();
    check_omega(omega, k)?;
    let shift = omega / (k as f64 - 1.0);
    let scale = 1.0 - omega * k as f64 / (k as f64 - 1.0);
    for &entry in g_tilde.as_slice() {
        if entry < shift - 1e-12 {
            return Err(Error::InfeasibleNoisyConditional { entry, floor: shift });
        }
    }
    let out: Vec<f64> = g_tilde
        .as_slice()
        .iter()
        .map(|&x| ((x - shift) / scale).clamp(0.0, 1.0))
        .collect();
    ProbVector::new(out)
}

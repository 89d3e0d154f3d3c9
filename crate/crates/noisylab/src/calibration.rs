//! Calibration analysis: exact level-set maps on finite-support problems and
//! binned reliability diagnostics for trained models.
//!
//! The exact map conditions on the full predicted vector, which is only
//! tractable on discrete problems; the binned estimator is the standard
//! top-label relaxation for finite samples and is strictly weaker.

use crate::error::{Error, Result};
use crate::losses::DiscreteProblem;
use crate::noise::NoiseModel;
use crate::simplex::{argmax_class, entropy, LabelId, ProbVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One level set of a prediction table: the predicted vector, its mass, and
/// the exact conditional label distribution on the set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationLevel {
    pub predicted: ProbVector,
    pub mass: f64,
    pub conditional: ProbVector,
    /// L-infinity distance between conditional and predicted.
    pub gap: f64,
}

/// Exact calibration map of a prediction table over a finite problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationMap {
    /// Levels ordered by predicted vector (lexicographic).
    pub levels: Vec<CalibrationLevel>,
    pub max_gap: f64,
}

impl CalibrationMap {
    /// CSV rows with pinned column order: level, mass, predicted, empirical, gap.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,mass,predicted,empirical,gap\n");
        for (i, level) in self.levels.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                level.mass,
                join_probs(&level.predicted),
                join_probs(&level.conditional),
                level.gap
            ));
        }
        out
    }
}

fn join_probs(p: &ProbVector) -> String {
    p.as_slice()
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

/// Level-set grouping quantizes predicted values to 12 decimal places so
/// exact-by-construction tables group correctly without float dust splitting
/// levels.
fn quantize_key(p: &ProbVector) -> Vec<i64> {
    p.as_slice()
        .iter()
        .map(|&x| (x * 1e12).round() as i64)
        .collect()
}

/// Groups support points by identical predicted vector and computes the exact
/// conditional P(Y | f(X) = v) per group, weighting by the marginal.
pub fn exact_calibration_map(problem: &DiscreteProblem, f: &[ProbVector]) -> Result<CalibrationMap> {
    if problem.is_empty() {
        return Err(Error::InvalidProblem("empty problem".into()));
    }
    if f.len() != problem.len() || f.iter().any(|p| p.k() != problem.k()) {
        return Err(Error::InvalidProblem(
            "prediction table must cover every support point with matching K".into(),
        ));
    }
    let k = problem.k();
    let mut groups: BTreeMap<Vec<i64>, (f64, Vec<f64>, ProbVector)> = BTreeMap::new();
    for i in 0..problem.len() {
        let entry = groups
            .entry(quantize_key(&f[i]))
            .or_insert_with(|| (0.0, vec![0.0; k], f[i].clone()));
        entry.0 += problem.mu[i];
        for (acc, &gk) in entry.1.iter_mut().zip(problem.g[i].as_slice()) {
            *acc += problem.mu[i] * gk;
        }
    }
    let mut levels = Vec::with_capacity(groups.len());
    let mut max_gap = 0.0f64;
    for (_, (mass, weighted, predicted)) in groups {
        if mass <= 0.0 {
            continue;
        }
        let conditional = ProbVector::new(weighted.iter().map(|w| w / mass).collect())?;
        let gap = conditional.linf_distance(&predicted);
        max_gap = max_gap.max(gap);
        levels.push(CalibrationLevel {
            predicted,
            mass,
            conditional,
            gap,
        });
    }
    Ok(CalibrationMap { levels, max_gap })
}

/// Calibration of the noisy-risk minimiser g-tilde against the CLEAN
/// conditionals: with active noise on a non-uniform point the map has a
/// strictly positive gap.
pub fn noisy_minimizer_calibration(
    problem: &DiscreteProblem,
    noise: &NoiseModel,
) -> Result<CalibrationMap> {
    let noisy = problem.noisy_g(noise)?;
    exact_calibration_map(problem, &noisy)
}

/// Average conditional entropy over the support, for the clean and noisy
/// conditional tables.
pub fn expected_entropy_pair(problem: &DiscreteProblem, noise: &NoiseModel) -> Result<(f64, f64)> {
    let noisy = problem.noisy_g(noise)?;
    let clean: f64 = problem
        .mu
        .iter()
        .zip(&problem.g)
        .map(|(m, g)| m * entropy(g))
        .sum();
    let noisy: f64 = problem
        .mu
        .iter()
        .zip(&noisy)
        .map(|(m, g)| m * entropy(g))
        .sum();
    Ok((clean, noisy))
}

/// Fraction of support mass where the clean and noisy conditionals pick the
/// same most-probable class; equals 1 under the simple non-uniform model.
pub fn decision_agreement(problem: &DiscreteProblem, noise: &NoiseModel) -> Result<f64> {
    let noisy = problem.noisy_g(noise)?;
    Ok(agreement_mass(problem, &noisy))
}

/// Agreement against an arbitrary transformed conditional table. This is the
/// negative-control hook: test fixtures feed tables built from transitions
/// OUTSIDE the simple non-uniform family to show the agreement guarantee
/// depends on that structure.
pub fn decision_agreement_with_table(problem: &DiscreteProblem, table: &[ProbVector]) -> f64 {
    agreement_mass(problem, table)
}

fn agreement_mass(problem: &DiscreteProblem, table: &[ProbVector]) -> f64 {
    problem
        .mu
        .iter()
        .zip(&problem.g)
        .zip(table)
        .filter(|((_, g), t)| argmax_class(g) == argmax_class(t))
        .map(|((m, _), _)| m)
        .sum()
}

/// Applies a general row-stochastic transition (rows indexed by clean class)
/// to a conditional. Fixture support for non-Def.-1 negative controls.
pub fn apply_transition(g: &ProbVector, transition: &[ProbVector]) -> Result<ProbVector> {
    let k = g.k();
    if transition.len() != k || transition.iter().any(|row| row.k() != k) {
        return Err(Error::InvalidParameter("transition must be K x K".into()));
    }
    let mut out = vec![0.0; k];
    for (row, &gk) in transition.iter().zip(g.as_slice()) {
        for (o, &t) in out.iter_mut().zip(row.as_slice()) {
            *o += gk * t;
        }
    }
    ProbVector::new(out)
}

/// One confidence bin of the reliability table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

/// Binned top-label reliability table with expected calibration error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReliabilityTable {
    pub bins: Vec<ReliabilityBin>,
    pub ece: f64,
    pub n: usize,
}

impl ReliabilityTable {
    /// CSV rows with pinned column order: bin, count, predicted, empirical, gap.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,count,predicted,empirical,gap\n");
        for (i, bin) in self.bins.iter().enumerate() {
            let gap = if bin.count > 0 {
                (bin.accuracy - bin.mean_confidence).abs()
            } else {
                0.0
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i, bin.count, bin.mean_confidence, bin.accuracy, gap
            ));
        }
        out
    }
}

/// Bins predictions by max predicted probability into equal-width bins on
/// [1/K, 1] and computes ece = sum (count/n) |accuracy - mean confidence|.
pub fn binned_reliability(
    predictions: &[(ProbVector, LabelId)],
    n_bins: usize,
) -> Result<ReliabilityTable> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter("need at least one bin".into()));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidParameter("empty prediction sample".into()));
    }
    let k = predictions[0].0.k();
    let floor = 1.0 / k as f64;
    let width = (1.0 - floor) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    let mut conf_sums = vec![0.0f64; n_bins];
    let mut correct = vec![0usize; n_bins];
    for (p, y) in predictions {
        let predicted = argmax_class(p);
        let confidence = p.get(predicted);
        let mut bin = ((confidence - floor) / width) as usize;
        if bin >= n_bins {
            bin = n_bins - 1;
        }
        counts[bin] += 1;
        conf_sums[bin] += confidence;
        if predicted == *y {
            correct[bin] += 1;
        }
    }
    let n = predictions.len();
    let mut bins = Vec::with_capacity(n_bins);
    let mut ece = 0.0;
    for b in 0..n_bins {
        let mean_confidence = if counts[b] > 0 {
            conf_sums[b] / counts[b] as f64
        } else {
            0.0
        };
        let accuracy = if counts[b] > 0 {
            correct[b] as f64 / counts[b] as f64
        } else {
            0.0
        };
        if counts[b] > 0 {
            ece += counts[b] as f64 / n as f64 * (accuracy - mean_confidence).abs();
        }
        bins.push(ReliabilityBin {
            lo: floor + b as f64 * width,
            hi: floor + (b + 1) as f64 * width,
            count: counts[b],
            mean_confidence,
            accuracy,
        });
    }
    Ok(ReliabilityTable { bins, ece, n })
}

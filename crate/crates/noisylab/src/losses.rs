//! The loss zoo, point-wise risk, brute-force and analytic risk minimisers,
//! and the verdict engines for symmetry, properness, robustness and
//! calibration-based strict properness.
//!
//! The grid search in [`pointwise_minimizers`] is the brute-force oracle that
//! every analytic claim is checked against. Verdict engines are
//! falsification-style: they certify on sampled or grid instances and report
//! counterexamples, they do not claim universal proofs.

use crate::error::{Error, Result};
use crate::noise::{noisy_conditional, NoiseModel};
use crate::rng::Rng;
use crate::simplex::{random_simplex, simplex_grid, LabelId, ProbVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Probabilities are floored at this value inside the CCE log so grid
/// vertices stay evaluable. Minimiser locations are unaffected at any grid
/// step of 1e-3 or coarser.
pub const CCE_CLAMP: f64 = 1e-12;

/// Risk-tie tolerance for membership in a minimiser set: exact-arithmetic
/// plateaus (MAE) must all be reported.
pub const MIN_SET_TOLERANCE: f64 = 1e-9;

/// Loss identifiers, used on the wire and by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossId {
    Cce,
    Mae,
    Sigmoid,
    Constant,
    Custom,
}

impl std::fmt::Display for LossId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LossId::Cce => "cce",
            LossId::Mae => "mae",
            LossId::Sigmoid => "sigmoid",
            LossId::Constant => "constant",
            LossId::Custom => "custom",
        };
        write!(f, "{s}")
    }
}

/// A point-evaluable loss: identifier plus evaluation on simplex x label.
#[derive(Clone)]
pub enum LossFunction {
    /// Categorical cross-entropy, -ln q_y (clamped at the boundary).
    Cce,
    /// Mean absolute error in its sum form, sum_k |e^(y)_k - q_k|.
    Mae,
    /// Sigmoid loss with q_1 as the logit argument; binary only.
    Sigmoid,
    /// Constant loss, 1 for every input.
    Constant,
    /// User-supplied loss; not serializable.
    Custom {
        name: String,
        eval: Arc<dyn Fn(&ProbVector, LabelId) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for LossFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LossFunction({})", self.id())
    }
}

impl LossFunction {
    pub fn from_id(id: LossId) -> Result<Self> {
        match id {
            LossId::Cce => Ok(Self::Cce),
            LossId::Mae => Ok(Self::Mae),
            LossId::Sigmoid => Ok(Self::Sigmoid),
            LossId::Constant => Ok(Self::Constant),
            LossId::Custom => Err(Error::Unsupported(
                "custom losses must be constructed in code".into(),
            )),
        }
    }

    pub fn id(&self) -> LossId {
        match self {
            Self::Cce => LossId::Cce,
            Self::Mae => LossId::Mae,
            Self::Sigmoid => LossId::Sigmoid,
            Self::Constant => LossId::Constant,
            Self::Custom { .. } => LossId::Custom,
        }
    }

    /// Point evaluation l(q, y).
    ///
    /// Panics if `y` is out of range for `q`, or for the sigmoid loss outside
    /// the binary setting it is defined in.
    pub fn eval(&self, q: &ProbVector, y: LabelId) -> f64 {
        assert!(y.value() <= q.k(), "label {y} out of range for K={}", q.k());
        match self {
            Self::Cce => -q.get(y).max(CCE_CLAMP).ln(),
            Self::Mae => {
                let onehot = y.index();
                q.as_slice()
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| if k == onehot { (1.0 - p).abs() } else { p.abs() })
                    .sum()
            }
            Self::Sigmoid => {
                assert!(q.k() == 2, "sigmoid loss is defined for K = 2 only");
                let s = 1.0 / (1.0 + q.as_slice()[0].exp());
                if y.value() == 1 {
                    s
                } else {
                    1.0 - s
                }
            }
            Self::Constant => 1.0,
            Self::Custom { eval, .. } => eval(q, y),
        }
    }

    /// Sum of the loss over all class labels at a fixed prediction; a loss is
    /// symmetric when this is constant over the simplex.
    pub fn symmetry_sum(&self, q: &ProbVector) -> f64 {
        (1..=q.k())
            .map(|y| self.eval(q, LabelId::new(y, q.k()).expect("in range")))
            .sum()
    }

    /// Samples the simplex and declares the loss symmetric when the symmetry
    /// sum is constant within 1e-9 across all draws.
    pub fn is_symmetric(&self, k: usize, samples: usize, rng: &mut Rng) -> bool {
        let reference = self.symmetry_sum(&random_simplex(k, rng));
        (1..samples).all(|_| (self.symmetry_sum(&random_simplex(k, rng)) - reference).abs() <= 1e-9)
    }
}

/// Expected loss at a fixed input: sum_k g_k l(q, k).
pub fn pointwise_risk(loss: &LossFunction, q: &ProbVector, g: &ProbVector) -> f64 {
    assert_eq!(q.k(), g.k(), "prediction and conditional must share K");
    g.as_slice()
        .iter()
        .enumerate()
        .map(|(k, &gk)| gk * loss.eval(q, LabelId::new(k + 1, g.k()).expect("in range")))
        .sum()
}

/// Grid-searches the simplex lattice and returns every point whose point-wise
/// risk is within [`MIN_SET_TOLERANCE`] of the grid minimum.
pub fn pointwise_minimizers(
    loss: &LossFunction,
    g: &ProbVector,
    step: f64,
) -> Result<Vec<ProbVector>> {
    let mut best = f64::INFINITY;
    let mut set: Vec<(ProbVector, f64)> = Vec::new();
    for q in simplex_grid(g.k(), step)? {
        let risk = pointwise_risk(loss, &q, g);
        if risk < best - MIN_SET_TOLERANCE {
            best = risk;
            set.retain(|(_, r)| *r <= best + MIN_SET_TOLERANCE);
        }
        if risk <= best + MIN_SET_TOLERANCE {
            if risk < best {
                best = risk;
            }
            set.push((q, risk));
        }
    }
    set.retain(|(_, r)| *r <= best + MIN_SET_TOLERANCE);
    Ok(set.into_iter().map(|(q, _)| q).collect())
}

/// Closed-form point-wise risk minimiser: the true conditional for CCE, the
/// half-threshold vertex indicator for MAE and sigmoid (binary setting).
pub fn analytic_minimizer(loss: &LossFunction, g: &ProbVector) -> Result<ProbVector> {
    match loss {
        LossFunction::Cce => Ok(g.clone()),
        LossFunction::Mae | LossFunction::Sigmoid => {
            if g.k() != 2 {
                return Err(Error::Unsupported(
                    "analytic minimiser for symmetric losses is binary only".into(),
                ));
            }
            // (gamma, gamma') = (1, 0); the closed set {g_1 >= 1/2} gets gamma.
            let first = if g.as_slice()[0] >= 0.5 { 1.0 } else { 0.0 };
            ProbVector::new(vec![first, 1.0 - first])
        }
        _ => Err(Error::Unsupported(format!(
            "no analytic minimiser for loss `{}`",
            loss.id()
        ))),
    }
}

/// Properness verdict over sampled conditionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Properness {
    StrictlyProper,
    ProperNotStrict,
    NotProper,
}

/// Samples `trials` random conditionals and classifies the loss:
/// strictly proper if the grid minimiser set collapses onto g (within one
/// grid step) every trial, proper-not-strict if g always belongs to the set
/// but uniqueness fails, not proper if some trial excludes g.
pub fn properness_test(
    loss: &LossFunction,
    k: usize,
    trials: usize,
    step: f64,
    rng: &mut Rng,
) -> Result<Properness> {
    assert!(trials >= 1);
    let near = step * (1.0 + 1e-6);
    let mut unique_everywhere = true;
    for _ in 0..trials {
        let g = random_simplex(k, rng);
        let mins = pointwise_minimizers(loss, &g, step)?;
        let g_in_set = mins.iter().any(|q| q.linf_distance(&g) <= near);
        if !g_in_set {
            return Ok(Properness::NotProper);
        }
        if !mins.iter().all(|q| q.linf_distance(&g) <= near) {
            unique_everywhere = false;
        }
    }
    Ok(if unique_everywhere {
        Properness::StrictlyProper
    } else {
        Properness::ProperNotStrict
    })
}

/// A finite-support joint distribution: support points, marginal over points
/// and the clean conditional per point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteProblem {
    /// Support-point ids (feature tags).
    pub points: Vec<String>,
    /// Marginal mass per point; non-negative, sums to 1.
    pub mu: Vec<f64>,
    /// Conditional P(Y | X = x) per point; all rows share K.
    pub g: Vec<ProbVector>,
}

impl DiscreteProblem {
    pub fn new(points: Vec<String>, mu: Vec<f64>, g: Vec<ProbVector>) -> Result<Self> {
        if points.is_empty() || points.len() != mu.len() || points.len() != g.len() {
            return Err(Error::InvalidProblem(
                "points, mu and g must be non-empty and of equal length".into(),
            ));
        }
        if mu.iter().any(|&m| !(0.0..=1.0 + 1e-9).contains(&m)) {
            return Err(Error::InvalidProblem("marginal masses must be in [0, 1]".into()));
        }
        let total: f64 = mu.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProblem(format!("marginal sums to {total}, not 1")));
        }
        let k = g[0].k();
        if g.iter().any(|row| row.k() != k) {
            return Err(Error::InvalidProblem("conditional rows must share K".into()));
        }
        Ok(Self { points, mu, g })
    }

    /// Convenience constructor with ids "x0", "x1", ...
    pub fn from_rows(mu: Vec<f64>, g: Vec<ProbVector>) -> Result<Self> {
        let points = (0..mu.len()).map(|i| format!("x{i}")).collect();
        Self::new(points, mu, g)
    }

    pub fn k(&self) -> usize {
        self.g[0].k()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The noisy conditional table under a noise model covering the support.
    pub fn noisy_g(&self, noise: &NoiseModel) -> Result<Vec<ProbVector>> {
        self.points
            .iter()
            .zip(&self.g)
            .map(|(id, g)| noisy_conditional(g, noise.omega_at(id)?))
            .collect()
    }

    /// Class prior P(Y = k) implied by mu and g.
    pub fn class_prior(&self) -> ProbVector {
        let k = self.k();
        let mut prior = vec![0.0; k];
        for (m, g) in self.mu.iter().zip(&self.g) {
            for (p, &gk) in prior.iter_mut().zip(g.as_slice()) {
                *p += m * gk;
            }
        }
        ProbVector::new(prior).expect("mixture of simplex points is on the simplex")
    }
}

/// Grid minimiser sets and risk values for one loss on one problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizerReport {
    pub loss: LossId,
    pub step: f64,
    /// Minimising set per support point, in problem order.
    pub per_point: Vec<Vec<ProbVector>>,
    /// mu-weighted risk of the (grid) clean minimiser.
    pub clean_risk: f64,
    /// mu-weighted noisy risk values when a noise model was supplied.
    pub noisy_risk: Option<f64>,
}

/// Full-risk grid minimisation over a problem: since the model class is
/// unconstrained per point, the full risk separates and each support point is
/// optimized independently.
pub fn minimize_risk(
    loss: &LossFunction,
    problem: &DiscreteProblem,
    noise: Option<&NoiseModel>,
    step: f64,
) -> Result<MinimizerReport> {
    let target = match noise {
        Some(model) => problem.noisy_g(model)?,
        None => problem.g.clone(),
    };
    let mut per_point = Vec::with_capacity(problem.len());
    let mut clean_risk = 0.0;
    let mut noisy_risk = noise.map(|_| 0.0);
    for (i, g_target) in target.iter().enumerate() {
        let mins = pointwise_minimizers(loss, g_target, step)?;
        clean_risk += problem.mu[i] * pointwise_risk(loss, &mins[0], &problem.g[i]);
        if let Some(acc) = &mut noisy_risk {
            *acc += problem.mu[i] * pointwise_risk(loss, &mins[0], g_target);
        }
        per_point.push(mins);
    }
    Ok(MinimizerReport {
        loss: loss.id(),
        step,
        per_point,
        clean_risk,
        noisy_risk,
    })
}

/// Robustness verdict: whether every clean-risk minimiser also attains the
/// noisy-risk minimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub loss: LossId,
    pub robust: bool,
    /// mu-weighted minimum of the clean risk.
    pub clean_min_risk: f64,
    /// mu-weighted noisy risk of the worst clean minimiser.
    pub noisy_risk_of_clean_min: f64,
    /// mu-weighted minimum of the noisy risk.
    pub noisy_min_risk: f64,
}

/// Grid-checks the robustness condition on a finite problem: the full-risk
/// minimiser sets under clean and noisy conditionals are computed per point,
/// and the loss is robust when every clean minimiser attains the noisy
/// minimum within tolerance.
pub fn robustness_test(
    loss: &LossFunction,
    problem: &DiscreteProblem,
    noise: &NoiseModel,
    step: f64,
) -> Result<RobustnessReport> {
    let noisy = problem.noisy_g(noise)?;
    let mut robust = true;
    let mut clean_min_risk = 0.0;
    let mut noisy_of_clean = 0.0;
    let mut noisy_min_risk = 0.0;
    for i in 0..problem.len() {
        let clean_mins = pointwise_minimizers(loss, &problem.g[i], step)?;
        let noisy_mins = pointwise_minimizers(loss, &noisy[i], step)?;
        let noisy_min = pointwise_risk(loss, &noisy_mins[0], &noisy[i]);
        let worst_clean_under_noise = clean_mins
            .iter()
            .map(|q| pointwise_risk(loss, q, &noisy[i]))
            .fold(f64::NEG_INFINITY, f64::max);
        if problem.mu[i] > 0.0 && worst_clean_under_noise > noisy_min + MIN_SET_TOLERANCE {
            robust = false;
        }
        clean_min_risk += problem.mu[i] * pointwise_risk(loss, &clean_mins[0], &problem.g[i]);
        noisy_of_clean += problem.mu[i] * worst_clean_under_noise;
        noisy_min_risk += problem.mu[i] * noisy_min;
    }
    Ok(RobustnessReport {
        loss: loss.id(),
        robust,
        clean_min_risk,
        noisy_risk_of_clean_min: noisy_of_clean,
        noisy_min_risk,
    })
}

/// One level set of the symmetric-loss minimiser in the alpha-shift
/// construction: the set mass, the conditional accuracy before and after the
/// shift, and the calibration gap against the predicted value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CspLevel {
    /// Value predicted on this level set (gamma or gamma').
    pub predicted: f64,
    pub mass: f64,
    pub original_accuracy: f64,
    pub shifted_accuracy: f64,
    /// |shifted_accuracy - predicted|.
    pub gap: f64,
}

/// Output of the alpha-shift counterexample construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CspReport {
    pub alpha: f64,
    pub gamma: f64,
    pub gamma_prime: f64,
    /// The problem with conditionals shifted to (1 - 2 alpha) g_1 + alpha.
    pub shifted_problem: DiscreteProblem,
    /// Level sets for gamma (where g_1 >= 1/2) and gamma' (elsewhere);
    /// absent when the level set has zero mass.
    pub upper_level: Option<CspLevel>,
    pub lower_level: Option<CspLevel>,
}

/// Builds the alpha-shifted conditional P'(Y=1|X=x) = (1-2a) P(Y=1|X=x) + a
/// while keeping the marginal, evaluates the symmetric-loss minimiser taking
/// value gamma on {g_1 >= 1/2} and gamma' elsewhere, and reports the exact
/// conditional accuracies and calibration gaps per level set.
pub fn csp_counterexample(
    gamma: f64,
    gamma_prime: f64,
    alpha: f64,
    problem: &DiscreteProblem,
) -> Result<CspReport> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1/2)")));
    }
    if !(0.5..=1.0).contains(&gamma) || !(0.0..0.5).contains(&gamma_prime) {
        return Err(Error::InvalidParameter(
            "need gamma in [1/2, 1] and gamma' in [0, 1/2)".into(),
        ));
    }
    if problem.k() != 2 {
        return Err(Error::Unsupported("alpha-shift construction is binary only".into()));
    }

    let shifted_g: Vec<ProbVector> = problem
        .g
        .iter()
        .map(|g| {
            let p1 = (1.0 - 2.0 * alpha) * g.as_slice()[0] + alpha;
            ProbVector::new(vec![p1, 1.0 - p1])
        })
        .collect::<Result<_>>()?;
    let shifted_problem =
        DiscreteProblem::new(problem.points.clone(), problem.mu.clone(), shifted_g)?;

    // Level sets are defined by the ORIGINAL conditionals, so the minimiser
    // is unchanged by the shift.
    let level = |upper: bool, predicted: f64| -> Option<CspLevel> {
        let mut mass = 0.0;
        let mut orig = 0.0;
        let mut shifted = 0.0;
        for i in 0..problem.len() {
            let in_upper = problem.g[i].as_slice()[0] >= 0.5;
            if in_upper == upper {
                mass += problem.mu[i];
                orig += problem.mu[i] * problem.g[i].as_slice()[0];
                shifted += problem.mu[i] * shifted_problem.g[i].as_slice()[0];
            }
        }
        if mass <= 0.0 {
            return None;
        }
        let original_accuracy = orig / mass;
        let shifted_accuracy = shifted / mass;
        Some(CspLevel {
            predicted,
            mass,
            original_accuracy,
            shifted_accuracy,
            gap: (shifted_accuracy - predicted).abs(),
        })
    };

    Ok(CspReport {
        alpha,
        gamma,
        gamma_prime,
        upper_level: level(true, gamma),
        lower_level: level(false, gamma_prime),
        shifted_problem,
    })
}

/// Determinant of a small square matrix by LU with partial pivoting.
fn determinant(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for j in col..n {
                a[row][j] -= factor * a[col][j];
            }
        }
    }
    det
}

/// Population DMI loss for a K x K joint prediction-label probability matrix:
/// -ln |det(joint)|, with +inf as the sentinel for singular matrices.
pub fn dmi_population_loss(joint: &[Vec<f64>]) -> Result<f64> {
    let k = joint.len();
    if k < 2 || joint.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidParameter("joint must be a K x K matrix, K >= 2".into()));
    }
    let mut total = 0.0;
    for row in joint {
        for &p in row {
            if !(0.0..=1.0 + 1e-9).contains(&p) {
                return Err(Error::InvalidParameter(format!("joint entry {p} outside [0, 1]")));
            }
            total += p;
        }
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("joint mass {total}, expected 1")));
    }
    let det = determinant(joint).abs();
    if det == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-det.ln())
}

/// Joint P(Yhat = i, Y = j) implied by a per-point prediction table on a
/// finite problem: sum_x mu(x) f_i(x) g_j(x), with `target` the conditional
/// table to pair predictions with (clean or noisy).
pub fn dmi_joint(problem: &DiscreteProblem, f: &[ProbVector], target: &[ProbVector]) -> Vec<Vec<f64>> {
    let k = problem.k();
    let mut joint = vec![vec![0.0; k]; k];
    for ((m, fx), gx) in problem.mu.iter().zip(f).zip(target) {
        for i in 0..k {
            for j in 0..k {
                joint[i][j] += m * fx.as_slice()[i] * gx.as_slice()[j];
            }
        }
    }
    joint
}

/// The first of the two sign-symmetric population DMI minimisers on a binary
/// problem: f_1(x) = 1 exactly when P(Y=1|X=x) >= P(Y=1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DmiMinimizerReport {
    pub prior_class1: f64,
    pub per_point: Vec<ProbVector>,
    /// True when every point falls on the same side of the prior, which makes
    /// the joint singular and the loss degenerate.
    pub degenerate: bool,
}

pub fn dmi_population_minimizer(problem: &DiscreteProblem) -> Result<DmiMinimizerReport> {
    if problem.k() != 2 {
        return Err(Error::Unsupported("DMI population minimiser is binary only".into()));
    }
    let prior = problem.class_prior().as_slice()[0];
    let per_point: Vec<ProbVector> = problem
        .g
        .iter()
        .map(|g| {
            let f1 = if g.as_slice()[0] >= prior { 1.0 } else { 0.0 };
            ProbVector::new(vec![f1, 1.0 - f1])
        })
        .collect::<Result<_>>()?;
    let first = per_point[0].as_slice()[0];
    let degenerate = per_point.iter().all(|p| p.as_slice()[0] == first);
    Ok(DmiMinimizerReport {
        prior_class1: prior,
        per_point,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn label(v: usize, k: usize) -> LabelId {
        LabelId::new(v, k).unwrap()
    }

    #[test]
    fn eval_known_values() {
        assert_eq!(LossFunction::Cce.eval(&pv(&[1.0, 0.0]), label(1, 2)), 0.0);
        assert_abs_diff_eq!(
            LossFunction::Mae.eval(&pv(&[0.7, 0.3]), label(1, 2)),
            0.6,
            epsilon = 1e-15
        );
        assert_eq!(LossFunction::Constant.eval(&pv(&[0.4, 0.6]), label(2, 2)), 1.0);
        // CCE at a boundary zero is clamped, not infinite.
        let clamped = LossFunction::Cce.eval(&pv(&[1.0, 0.0]), label(2, 2));
        assert!(clamped.is_finite() && clamped > 20.0);
    }

    #[test]
    fn symmetry_sums() {
        let mut rng = seeded(31);
        for _ in 0..100 {
            let q = random_simplex(2, &mut rng);
            assert_abs_diff_eq!(LossFunction::Mae.symmetry_sum(&q), 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(LossFunction::Sigmoid.symmetry_sum(&q), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(
            LossFunction::Cce.symmetry_sum(&pv(&[0.5, 0.5])),
            1.3863,
            epsilon = 1e-4
        );
        assert_abs_diff_eq!(
            LossFunction::Cce.symmetry_sum(&pv(&[0.9, 0.1])),
            2.4079,
            epsilon = 1e-4
        );
        let mut rng = seeded(32);
        assert!(LossFunction::Mae.is_symmetric(2, 1000, &mut rng));
        assert!(LossFunction::Sigmoid.is_symmetric(2, 1000, &mut rng));
        assert!(!LossFunction::Cce.is_symmetric(2, 1000, &mut rng));
    }

    #[test]
    fn pointwise_risk_values() {
        let g = pv(&[0.7, 0.3]);
        assert_eq!(pointwise_risk(&LossFunction::Constant, &pv(&[0.1, 0.9]), &g), 1.0);
        assert_abs_diff_eq!(
            pointwise_risk(&LossFunction::Mae, &pv(&[1.0, 0.0]), &g),
            0.6,
            epsilon = 1e-15
        );
        let half = pv(&[0.5, 0.5]);
        assert_abs_diff_eq!(
            pointwise_risk(&LossFunction::Cce, &half, &half),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn grid_minimizers_match_table() {
        let g = pv(&[0.7, 0.3]);
        let cce = pointwise_minimizers(&LossFunction::Cce, &g, 1e-3).unwrap();
        assert!(cce.iter().all(|q| q.linf_distance(&g) <= 1e-3 + 1e-9));

        let mae = pointwise_minimizers(&LossFunction::Mae, &g, 1e-3).unwrap();
        assert_eq!(mae.len(), 1);
        assert!(mae[0].linf_distance(&pv(&[1.0, 0.0])) < 1e-12);

        let sig = pointwise_minimizers(&LossFunction::Sigmoid, &pv(&[0.6, 0.4]), 1e-3).unwrap();
        assert_eq!(sig.len(), 1);
        assert!(sig[0].linf_distance(&pv(&[1.0, 0.0])) < 1e-12);

        // At the uniform conditional the sigmoid risk is constant in q, so
        // every lattice point minimizes.
        let flat = pointwise_minimizers(&LossFunction::Sigmoid, &pv(&[0.5, 0.5]), 1e-3).unwrap();
        assert_eq!(flat.len(), 1001);
    }

    #[test]
    fn analytic_minimizer_values() {
        let g = pv(&[0.3, 0.7]);
        assert_eq!(analytic_minimizer(&LossFunction::Cce, &g).unwrap(), g);
        assert_eq!(
            analytic_minimizer(&LossFunction::Mae, &g).unwrap(),
            pv(&[0.0, 1.0])
        );
        // Closed-set boundary: g_1 = 1/2 gets gamma.
        assert_eq!(
            analytic_minimizer(&LossFunction::Mae, &pv(&[0.5, 0.5])).unwrap(),
            pv(&[1.0, 0.0])
        );
        assert!(analytic_minimizer(&LossFunction::Constant, &g).is_err());
    }

    #[test]
    fn oracle_agrees_with_analytic() {
        let mut rng = seeded(33);
        for _ in 0..200 {
            let g = random_simplex(2, &mut rng);
            for loss in [LossFunction::Cce, LossFunction::Mae, LossFunction::Sigmoid] {
                let analytic = analytic_minimizer(&loss, &g).unwrap();
                let grid = pointwise_minimizers(&loss, &g, 1e-3).unwrap();
                assert!(
                    grid.iter().any(|q| q.linf_distance(&analytic) <= 1e-3 + 1e-9),
                    "{:?} grid set misses analytic minimiser for g = {:?}",
                    loss.id(),
                    g
                );
            }
        }
    }

    #[test]
    fn scaling_leaves_minimizer_sets_unchanged() {
        let mut rng = seeded(34);
        let scaled_mae = LossFunction::Custom {
            name: "mae_scaled".into(),
            eval: Arc::new(|q, y| 0.5 * LossFunction::Mae.eval(q, y)),
        };
        for _ in 0..50 {
            let g = random_simplex(2, &mut rng);
            let a = pointwise_minimizers(&LossFunction::Mae, &g, 0.01).unwrap();
            let b = pointwise_minimizers(&scaled_mae, &g, 0.01).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert!(x.linf_distance(y) < 1e-12);
            }
        }
    }

    #[test]
    fn properness_verdicts() {
        let mut rng = seeded(35);
        assert_eq!(
            properness_test(&LossFunction::Cce, 2, 50, 1e-3, &mut rng).unwrap(),
            Properness::StrictlyProper
        );
        assert_eq!(
            properness_test(&LossFunction::Mae, 2, 50, 1e-3, &mut rng).unwrap(),
            Properness::NotProper
        );
        assert_eq!(
            properness_test(&LossFunction::Constant, 2, 10, 0.01, &mut rng).unwrap(),
            Properness::ProperNotStrict
        );
    }

    fn two_point_problem() -> DiscreteProblem {
        DiscreteProblem::from_rows(vec![0.5, 0.5], vec![pv(&[0.8, 0.2]), pv(&[0.3, 0.7])]).unwrap()
    }

    #[test]
    fn mae_robust_cce_not() {
        let problem = two_point_problem();
        let noise = NoiseModel::symmetric(0.3, 2).unwrap();
        let mae = robustness_test(&LossFunction::Mae, &problem, &noise, 1e-3).unwrap();
        assert!(mae.robust);
        let cce = robustness_test(&LossFunction::Cce, &problem, &noise, 1e-3).unwrap();
        assert!(!cce.robust);
        assert!(cce.noisy_risk_of_clean_min > cce.noisy_min_risk + MIN_SET_TOLERANCE);
    }

    #[test]
    fn mae_robust_under_tabular_noise_on_separable_problem() {
        let problem =
            DiscreteProblem::from_rows(vec![0.5, 0.5], vec![pv(&[1.0, 0.0]), pv(&[0.0, 1.0])])
                .unwrap();
        let table =
            std::collections::BTreeMap::from([("x0".to_string(), 0.1), ("x1".to_string(), 0.4)]);
        let noise = NoiseModel::tabular(table, 2).unwrap();
        let report = robustness_test(&LossFunction::Mae, &problem, &noise, 1e-3).unwrap();
        assert!(report.robust);
    }

    #[test]
    fn csp_shift_formula() {
        // Two singleton level sets calibrated at (1, 0).
        let problem =
            DiscreteProblem::from_rows(vec![0.5, 0.5], vec![pv(&[1.0, 0.0]), pv(&[0.0, 1.0])])
                .unwrap();
        let report = csp_counterexample(1.0, 0.0, 0.2, &problem).unwrap();
        let upper = report.upper_level.unwrap();
        let lower = report.lower_level.unwrap();
        assert_abs_diff_eq!(upper.shifted_accuracy, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(lower.shifted_accuracy, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(upper.gap, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(lower.gap, 0.2, epsilon = 1e-12);

        // alpha -> 0: identity shift, gaps vanish.
        let small = csp_counterexample(1.0, 0.0, 1e-9, &problem).unwrap();
        assert!(small.upper_level.unwrap().gap < 1e-8);

        // gamma = 1/2 is the equality case of the upper bound.
        let problem_half =
            DiscreteProblem::from_rows(vec![0.5, 0.5], vec![pv(&[0.5, 0.5]), pv(&[0.1, 0.9])])
                .unwrap();
        let report = csp_counterexample(0.5, 0.1, 0.3, &problem_half).unwrap();
        assert_abs_diff_eq!(report.upper_level.unwrap().gap, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn csp_rejects_bad_alpha() {
        let problem = two_point_problem();
        assert!(csp_counterexample(1.0, 0.0, 0.0, &problem).is_err());
        assert!(csp_counterexample(1.0, 0.0, 0.5, &problem).is_err());
    }

    #[test]
    fn dmi_loss_values() {
        let j = vec![vec![0.4, 0.1], vec![0.1, 0.4]];
        assert_abs_diff_eq!(dmi_population_loss(&j).unwrap(), -(0.15f64.ln()), epsilon = 1e-12);

        let singular = vec![vec![0.25, 0.25], vec![0.25, 0.25]];
        assert!(dmi_population_loss(&singular).unwrap().is_infinite());

        let diag = vec![vec![0.5, 0.0], vec![0.0, 0.5]];
        assert_abs_diff_eq!(dmi_population_loss(&diag).unwrap(), -(0.25f64.ln()), epsilon = 1e-12);

        assert!(dmi_population_loss(&[vec![0.9, 0.2], vec![0.1, 0.4]]).is_err());
    }

    #[test]
    fn dmi_minimizer_threshold_at_prior() {
        let balanced =
            DiscreteProblem::from_rows(vec![0.5, 0.5], vec![pv(&[0.8, 0.2]), pv(&[0.3, 0.7])])
                .unwrap();
        let report = dmi_population_minimizer(&balanced).unwrap();
        assert_abs_diff_eq!(report.prior_class1, 0.55, epsilon = 1e-12);
        assert_eq!(report.per_point[0].as_slice()[0], 1.0);
        assert_eq!(report.per_point[1].as_slice()[0], 0.0);
        assert!(!report.degenerate);

        let skewed =
            DiscreteProblem::from_rows(vec![0.5, 0.5], vec![pv(&[0.75, 0.25]), pv(&[0.65, 0.35])])
                .unwrap();
        let report = dmi_population_minimizer(&skewed).unwrap();
        assert_abs_diff_eq!(report.prior_class1, 0.7, epsilon = 1e-12);
        assert_eq!(report.per_point[0].as_slice()[0], 1.0);
        assert_eq!(report.per_point[1].as_slice()[0], 0.0);

        let constant =
            DiscreteProblem::from_rows(vec![0.5, 0.5], vec![pv(&[0.6, 0.4]), pv(&[0.6, 0.4])])
                .unwrap();
        assert!(dmi_population_minimizer(&constant).unwrap().degenerate);
    }

    #[test]
    fn problem_validation() {
        assert!(DiscreteProblem::from_rows(vec![], vec![]).is_err());
        assert!(DiscreteProblem::from_rows(vec![0.6, 0.6], vec![pv(&[1.0, 0.0]); 2]).is_err());
        assert!(DiscreteProblem::from_rows(
            vec![0.5, 0.5],
            vec![pv(&[1.0, 0.0]), pv(&[0.5, 0.25, 0.25])]
        )
        .is_err());
    }
}

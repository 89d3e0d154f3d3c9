//! Probability vectors on the (K-1)-simplex and the operations every other
//! module builds on: entropy, deterministic argmax, lattice enumeration and
//! uniform sampling.
//!
//! Class indices are 1-based throughout the crate.

use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Tolerance on the total mass at construction. Inputs within this tolerance
/// are renormalized; inputs outside are rejected.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A point on the (K-1)-simplex: entries in [0, 1] summing to 1, K >= 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidProbVector(format!(
                "need K >= 2, got K = {}",
                probs.len()
            )));
        }
        for &p in &probs {
            if !p.is_finite() || !(-SUM_TOLERANCE..=1.0 + SUM_TOLERANCE).contains(&p) {
                return Err(Error::InvalidProbVector(format!("entry {p} outside [0, 1]")));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidProbVector(format!("entries sum to {sum}, not 1")));
        }
        let probs = probs
            .into_iter()
            .map(|p| (p / sum).clamp(0.0, 1.0))
            .collect();
        Ok(Self { probs })
    }

    /// Uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Self {
        Self::new(vec![1.0 / k as f64; k]).expect("uniform vector is valid")
    }

    /// One-hot vector e^(y) over `k` classes.
    pub fn one_hot(y: LabelId, k: usize) -> Self {
        let mut v = vec![0.0; k];
        v[y.index()] = 1.0;
        Self::new(v).expect("one-hot vector is valid")
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Entry for a 1-based class label.
    pub fn get(&self, y: LabelId) -> f64 {
        self.probs[y.index()]
    }

    /// L-infinity distance to another vector of the same length.
    pub fn linf_distance(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.probs
    }
}

/// 1-based class index in {1, ..., K}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(usize);

impl LabelId {
    pub fn new(value: usize, k: usize) -> Result<Self> {
        if value == 0 || value > k {
            return Err(Error::InvalidLabel { value, k });
        }
        Ok(Self(value))
    }

    /// The raw 1-based value.
    pub fn value(&self) -> usize {
        self.0
    }

    /// 0-based index for array access.
    pub fn index(&self) -> usize {
        self.0 - 1
    }
}

impl std::fmt::Display for LabelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Shannon entropy in nats, with the convention 0 ln 0 = 0.
pub fn entropy(p: &ProbVector) -> f64 {
    p.as_slice()
        .iter()
        .map(|&x| if x > 0.0 { -x * x.ln() } else { 0.0 })
        .sum()
}

/// Smallest index attaining the maximum entry (the inf-argmax tie-break).
pub fn argmax_class(p: &ProbVector) -> LabelId {
    let mut best = 0;
    for (i, &x) in p.as_slice().iter().enumerate() {
        if x > p.as_slice()[best] {
            best = i;
        }
    }
    LabelId(best + 1)
}

/// Enumerates all lattice points with entries that are integer multiples of
/// `step` summing to 1; the last coordinate absorbs rounding. Includes all
/// vertices. Count is C(1/step + K - 1, K - 1).
pub fn simplex_grid(k: usize, step: f64) -> Result<SimplexGrid> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need K >= 2, got {k}")));
    }
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::BadGridStep(step));
    }
    let m = (1.0 / step).round() as u64;
    if ((m as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::BadGridStep(step));
    }
    Ok(SimplexGrid {
        k,
        step,
        m,
        counts: None,
        done: false,
    })
}

/// Iterator over simplex lattice points, see [`simplex_grid`].
pub struct SimplexGrid {
    k: usize,
    step: f64,
    m: u64,
    /// Current composition; first k-1 entries are free, the last is implied.
    counts: Option<Vec<u64>>,
    done: bool,
}

impl SimplexGrid {
    fn to_point(&self, counts: &[u64]) -> ProbVector {
        let mut probs: Vec<f64> = counts[..self.k - 1]
            .iter()
            .map(|&c| c as f64 * self.step)
            .collect();
        let partial: f64 = probs.iter().sum();
        probs.push((1.0 - partial).clamp(0.0, 1.0));
        ProbVector::new(probs).expect("lattice point is on the simplex")
    }
}

impl Iterator for SimplexGrid {
    type Item = ProbVector;

    fn next(&mut self) -> Option<ProbVector> {
        if self.done {
            return None;
        }
        match self.counts.take() {
            None => {
                let counts = vec![0u64; self.k - 1];
                let point = self.to_point(&counts);
                self.counts = Some(counts);
                Some(point)
            }
            Some(mut counts) => {
                // Advance the composition in colex order: find the last free
                // coordinate that can still grow given the remaining mass.
                let mut used: u64 = counts.iter().sum();
                for i in (0..counts.len()).rev() {
                    if used < self.m {
                        counts[i] += 1;
                        let point = self.to_point(&counts);
                        self.counts = Some(counts);
                        return Some(point);
                    }
                    used -= counts[i];
                    counts[i] = 0;
                }
                self.done = true;
                None
            }
        }
    }
}

/// Uniform draw from the (k-1)-simplex via exponential spacings.
pub fn random_simplex(k: usize, rng: &mut Rng) -> ProbVector {
    assert!(k >= 2, "need K >= 2");
    let mut exps: Vec<f64> = (0..k)
        .map(|_| {
            let u: f64 = rng.gen::<f64>();
            -(1.0 - u).ln()
        })
        .collect();
    let sum: f64 = exps.iter().sum();
    for e in &mut exps {
        *e /= sum;
    }
    // Exact renormalization can leave dust of order 1e-16; construction
    // renormalizes again within tolerance.
    ProbVector::new(exps).expect("normalized exponentials lie on the simplex")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn construction_rejects_bad_inputs() {
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![0.6, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        // Within tolerance: renormalized.
        let p = ProbVector::new(vec![0.5, 0.5 + 5e-10]).unwrap();
        assert_abs_diff_eq!(p.as_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn entropy_known_values() {
        assert_abs_diff_eq!(entropy(&pv(&[0.5, 0.5])), std::f64::consts::LN_2, epsilon = 1e-12);
        assert_eq!(entropy(&pv(&[1.0, 0.0])), 0.0);
        // Independent high-precision evaluation: -0.68 ln 0.68 - 0.32 ln 0.32.
        assert_abs_diff_eq!(entropy(&pv(&[0.68, 0.32])), 0.626_869_55, epsilon = 1e-5);
    }

    #[test]
    fn argmax_ties_take_smallest_index() {
        assert_eq!(argmax_class(&pv(&[0.2, 0.8])).value(), 2);
        assert_eq!(argmax_class(&pv(&[0.5, 0.5])).value(), 1);
        assert_eq!(argmax_class(&pv(&[0.2, 0.4, 0.4])).value(), 2);
    }

    #[test]
    fn argmax_invariant_under_monotone_transform() {
        let mut rng = seeded(11);
        for _ in 0..200 {
            let p = random_simplex(3, &mut rng);
            let before = argmax_class(&p);
            // exp is strictly increasing; transformed entries renormalized.
            let t: Vec<f64> = p.as_slice().iter().map(|&x| x.exp()).collect();
            let s: f64 = t.iter().sum();
            let q = pv(&t.iter().map(|x| x / s).collect::<Vec<_>>());
            assert_eq!(argmax_class(&q), before);
        }
    }

    #[test]
    fn grid_k2_half_step() {
        let points: Vec<_> = simplex_grid(2, 0.5).unwrap().collect();
        assert_eq!(points.len(), 3);
        let firsts: Vec<f64> = points.iter().map(|p| p.as_slice()[0]).collect();
        assert_eq!(firsts, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn grid_counts() {
        assert_eq!(simplex_grid(2, 0.001).unwrap().count(), 1001);
        // C(4, 2) = 6 for K = 3, step 0.5.
        assert_eq!(simplex_grid(3, 0.5).unwrap().count(), 6);
    }

    #[test]
    fn grid_includes_vertices() {
        let points: Vec<_> = simplex_grid(3, 0.25).unwrap().collect();
        for v in 1..=3 {
            let vertex = ProbVector::one_hot(LabelId::new(v, 3).unwrap(), 3);
            assert!(points.iter().any(|p| p.linf_distance(&vertex) < 1e-12));
        }
    }

    #[test]
    fn grid_rejects_non_dividing_step() {
        assert!(simplex_grid(2, 0.3).is_err());
        assert!(simplex_grid(2, 0.7).is_err());
        assert!(simplex_grid(1, 0.5).is_err());
    }

    #[test]
    fn random_simplex_deterministic_and_valid() {
        let a = random_simplex(4, &mut seeded(3));
        let b = random_simplex(4, &mut seeded(3));
        assert_eq!(a, b);
        for _ in 0..100 {
            let p = random_simplex(5, &mut seeded(9));
            assert!(p.as_slice().iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn random_simplex_mean_is_uniform() {
        let mut rng = seeded(42);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| random_simplex(2, &mut rng).as_slice()[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean first coordinate {mean}");
    }

    #[test]
    fn entropy_unique_maximum_at_uniform() {
        let mut rng = seeded(5);
        let k = 3;
        let ln_k = (k as f64).ln();
        let u = ProbVector::uniform(k);
        let mut tested = 0;
        while tested < 1000 {
            let p = random_simplex(k, &mut rng);
            let d = p.linf_distance(&u);
            if d <= 1e-3 {
                continue;
            }
            tested += 1;
            assert!(entropy(&p) < ln_k - 1e-9 * d);
        }
    }

    #[test]
    fn entropy_concavity() {
        let mut rng = seeded(8);
        for _ in 0..1000 {
            let p = random_simplex(3, &mut rng);
            let q = random_simplex(3, &mut rng);
            let lambda: f64 = rng.gen_range(0.01..0.99);
            let mix: Vec<f64> = p
                .as_slice()
                .iter()
                .zip(q.as_slice())
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect();
            let mix = ProbVector::new(mix).unwrap();
            let lower = lambda * entropy(&p) + (1.0 - lambda) * entropy(&q);
            assert!(entropy(&mix) >= lower - 1e-12);
            if p.linf_distance(&q) > 1e-6 {
                assert!(entropy(&mix) > lower);
            }
        }
    }
}

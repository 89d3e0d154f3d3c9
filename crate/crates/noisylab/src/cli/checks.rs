//! Verification commands: random-problem property sweeps, loss verdicts,
//! determinant-loss cross-checks, grid minimisation and calibration reports.

use super::{ensure_dir, parse_probs, write_json, write_manifest, EXIT_OK, EXIT_VERIFICATION};
use crate::calibration::{
    decision_agreement, exact_calibration_map, expected_entropy_pair, noisy_minimizer_calibration,
};
use crate::error::Result;
use crate::losses::{
    analytic_minimizer, dmi_joint, dmi_population_loss, dmi_population_minimizer, minimize_risk,
    robustness_test, properness_test, DiscreteProblem, LossFunction, LossId, Properness,
};
use crate::noise::NoiseModel;
use crate::rng::{seeded, Rng};
use crate::simplex::random_simplex;
use crate::ProbVector;
use clap::Args;
use rand::Rng as _;
use serde::Serialize;
use std::path::{Path, PathBuf};

fn random_problem(k: usize, rng: &mut Rng) -> DiscreteProblem {
    let n_points = rng.gen_range(2..=6);
    let mu = random_simplex(n_points.max(2), rng);
    let g = (0..n_points).map(|_| random_simplex(k, rng)).collect();
    DiscreteProblem::from_rows(mu.as_slice()[..n_points].to_vec(), g)
        .expect("sampled problem is valid")
}

#[derive(Args, Debug)]
pub struct PropsArgs {
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 0.2)]
    pub omega: f64,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
}

#[derive(Serialize)]
struct PropCase {
    description: String,
    trials: usize,
    failures: usize,
}

#[derive(Serialize)]
struct PropsReport {
    k: usize,
    omega: f64,
    seed: u64,
    passed: bool,
    decision_agreement: PropCase,
    entropy_increase: PropCase,
    minimizer_miscalibration: PropCase,
}

pub fn check_props(out: &Path, seed: u64, args: PropsArgs) -> Result<i32> {
    let noise = NoiseModel::symmetric(args.omega, args.k)?;
    let mut rng = seeded(seed);
    let mut agreement_failures = 0;
    let mut entropy_failures = 0;
    let mut calibration_failures = 0;
    for _ in 0..args.trials {
        let problem = random_problem(args.k, &mut rng);
        // Sampled conditionals are non-uniform almost surely, so with active
        // noise the strict forms of the entropy and calibration statements
        // are checked.
        let active = args.omega > 0.0;

        if (decision_agreement(&problem, &noise)? - 1.0).abs() > 1e-12 {
            agreement_failures += 1;
        }

        let (clean, noisy) = expected_entropy_pair(&problem, &noise)?;
        let entropy_ok = if active { noisy - clean > 1e-9 } else { (noisy - clean).abs() <= 1e-12 };
        if !entropy_ok {
            entropy_failures += 1;
        }

        let noisy_map = noisy_minimizer_calibration(&problem, &noise)?;
        let clean_map = exact_calibration_map(&problem, &problem.g)?;
        let calibration_ok = clean_map.max_gap <= 1e-12
            && if active { noisy_map.max_gap > 0.0 } else { noisy_map.max_gap <= 1e-12 };
        if !calibration_ok {
            calibration_failures += 1;
        }
    }
    let report = PropsReport {
        k: args.k,
        omega: args.omega,
        seed,
        passed: agreement_failures + entropy_failures + calibration_failures == 0,
        decision_agreement: PropCase {
            description: "clean and noisy conditionals pick the same top class".into(),
            trials: args.trials,
            failures: agreement_failures,
        },
        entropy_increase: PropCase {
            description: "expected conditional entropy rises under active noise".into(),
            trials: args.trials,
            failures: entropy_failures,
        },
        minimizer_miscalibration: PropCase {
            description: "noisy-risk minimiser is miscalibrated against clean labels".into(),
            trials: args.trials,
            failures: calibration_failures,
        },
    };
    ensure_dir(out)?;
    let report_path = out.join("props.json");
    write_json(&report_path, &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    write_manifest(
        out,
        "check props",
        serde_json::json!({"k": args.k, "omega": args.omega, "trials": args.trials}),
        seed,
        &[&report_path],
    )?;
    Ok(if report.passed { EXIT_OK } else { EXIT_VERIFICATION })
}

#[derive(Args, Debug)]
pub struct LossArgs {
    #[arg(long)]
    pub loss: LossIdArg,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Symmetric flip probability used by the robustness verdict.
    #[arg(long, default_value_t = 0.3)]
    pub omega: f64,
    /// Random conditionals sampled by the properness verdict.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
}

/// clap-parsable wrapper around the loss identifier.
#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum LossIdArg {
    Cce,
    Mae,
    Sigmoid,
    Constant,
}

impl From<LossIdArg> for LossId {
    fn from(value: LossIdArg) -> Self {
        match value {
            LossIdArg::Cce => LossId::Cce,
            LossIdArg::Mae => LossId::Mae,
            LossIdArg::Sigmoid => LossId::Sigmoid,
            LossIdArg::Constant => LossId::Constant,
        }
    }
}

#[derive(Serialize)]
struct LossReport {
    loss: LossId,
    k: usize,
    step: f64,
    omega: f64,
    symmetric: bool,
    properness: Properness,
    robust_symmetric_noise: bool,
    /// Grid-vs-analytic consistency; available for losses with a closed-form
    /// minimiser.
    grid_matches_analytic: Option<bool>,
}

pub fn check_loss(out: &Path, seed: u64, args: LossArgs) -> Result<i32> {
    let loss = LossFunction::from_id(args.loss.into())?;
    let mut rng = seeded(seed);
    let symmetric = loss.is_symmetric(args.k, 1000, &mut rng);
    let properness = properness_test(&loss, args.k, args.trials, args.step, &mut rng)?;

    // Fixed two-point benchmark problem for the robustness verdict.
    let problem = benchmark_problem(args.k)?;
    let noise = NoiseModel::symmetric(args.omega, args.k)?;
    let robustness = robustness_test(&loss, &problem, &noise, args.step)?;

    let grid_matches_analytic = match analytic_minimizer(&loss, &problem.g[0]) {
        Ok(analytic) => {
            let report = minimize_risk(&loss, &problem, None, args.step)?;
            let near = args.step * (1.0 + 1e-6);
            Some(report.per_point[0].iter().any(|q| q.linf_distance(&analytic) <= near))
        }
        Err(_) => None,
    };

    let report = LossReport {
        loss: args.loss.into(),
        k: args.k,
        step: args.step,
        omega: args.omega,
        symmetric,
        properness,
        robust_symmetric_noise: robustness.robust,
        grid_matches_analytic,
    };
    ensure_dir(out)?;
    let report_path = out.join("loss.json");
    write_json(&report_path, &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    write_manifest(
        out,
        "check loss",
        serde_json::json!({
            "loss": report.loss, "step": args.step, "k": args.k,
            "omega": args.omega, "trials": args.trials,
        }),
        seed,
        &[&report_path],
    )?;
    Ok(if report.grid_matches_analytic == Some(false) { EXIT_VERIFICATION } else { EXIT_OK })
}

/// Two-point problem with one confident and one uncertain conditional.
fn benchmark_problem(k: usize) -> Result<DiscreteProblem> {
    let mut confident = vec![0.2 / (k as f64 - 1.0); k];
    confident[0] = 0.8;
    let mut uncertain = vec![0.7 / (k as f64 - 1.0); k];
    uncertain[k - 1] = 0.3;
    DiscreteProblem::from_rows(
        vec![0.5, 0.5],
        vec![ProbVector::new(confident)?, ProbVector::new(uncertain)?],
    )
}

#[derive(Args, Debug)]
pub struct DmiArgs {
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Flip probabilities checked by the invariance sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.3])]
    pub omega: Vec<f64>,
}

#[derive(Serialize)]
struct DmiReport {
    trials: usize,
    seed: u64,
    passed: bool,
    minimizer_mismatches: usize,
    degenerate_skipped: usize,
    invariance_failures: usize,
}

pub fn check_dmi(out: &Path, seed: u64, args: DmiArgs) -> Result<i32> {
    let mut rng = seeded(seed);
    let mut mismatches = 0;
    let mut skipped = 0;
    for _ in 0..args.trials {
        let problem = random_problem(2, &mut rng);
        let report = dmi_population_minimizer(&problem)?;
        if report.degenerate {
            skipped += 1;
            continue;
        }
        let analytic = dmi_population_loss(&dmi_joint(&problem, &report.per_point, &problem.g))?;
        let best = exhaustive_vertex_minimum(&problem)?;
        if analytic > best + 1e-9 {
            mismatches += 1;
        }
    }

    // The noisy joint is the clean joint times the transposed transition, so
    // switching to noisy targets shifts the loss of EVERY prediction table by
    // the same constant.
    let mut invariance_failures = 0;
    for &omega in &args.omega {
        let noise = NoiseModel::symmetric(omega, 2)?;
        let problem = random_problem(2, &mut rng);
        let noisy_g = problem.noisy_g(&noise)?;
        let mut shifts = Vec::new();
        for _ in 0..12 {
            let f: Vec<ProbVector> =
                (0..problem.len()).map(|_| random_simplex(2, &mut rng)).collect();
            let clean_loss = dmi_population_loss(&dmi_joint(&problem, &f, &problem.g))?;
            let noisy_loss = dmi_population_loss(&dmi_joint(&problem, &f, &noisy_g))?;
            if clean_loss.is_finite() && noisy_loss.is_finite() {
                shifts.push(noisy_loss - clean_loss);
            }
        }
        let expected = -(1.0 - 2.0 * omega).abs().ln();
        if shifts.iter().any(|s| (s - expected).abs() > 1e-9) {
            invariance_failures += 1;
        }
    }

    let report = DmiReport {
        trials: args.trials,
        seed,
        passed: mismatches == 0 && invariance_failures == 0,
        minimizer_mismatches: mismatches,
        degenerate_skipped: skipped,
        invariance_failures,
    };
    ensure_dir(out)?;
    let report_path = out.join("dmi.json");
    write_json(&report_path, &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    write_manifest(
        out,
        "check dmi",
        serde_json::json!({"trials": args.trials, "omega": args.omega}),
        seed,
        &[&report_path],
    )?;
    Ok(if report.passed { EXIT_OK } else { EXIT_VERIFICATION })
}

/// Minimum loss over all 2^n vertex prediction tables.
fn exhaustive_vertex_minimum(problem: &DiscreteProblem) -> Result<f64> {
    let n = problem.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        let f: Vec<ProbVector> = (0..n)
            .map(|i| {
                let f1 = f64::from(mask >> i & 1);
                ProbVector::new(vec![f1, 1.0 - f1])
            })
            .collect::<Result<_>>()?;
        let loss = dmi_population_loss(&dmi_joint(problem, &f, &problem.g))?;
        if loss < best {
            best = loss;
        }
    }
    Ok(best)
}

#[derive(Args, Debug)]
pub struct MinimizeArgs {
    #[arg(long)]
    pub loss: LossIdArg,
    /// Conditional as comma-separated probabilities.
    #[arg(long)]
    pub g: String,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// When set, minimise the noisy risk at this flip probability.
    #[arg(long)]
    pub omega: Option<f64>,
}

#[derive(Serialize)]
struct MinimizeOutput {
    grid: crate::losses::MinimizerReport,
    analytic: Option<ProbVector>,
}

pub fn minimize(out: &Path, args: MinimizeArgs) -> Result<i32> {
    let loss = LossFunction::from_id(args.loss.into())?;
    let g = parse_probs(&args.g)?;
    let k = g.k();
    let problem = DiscreteProblem::from_rows(vec![1.0], vec![g.clone()])?;
    let noise = args.omega.map(|w| NoiseModel::symmetric(w, k)).transpose()?;
    let grid = minimize_risk(&loss, &problem, noise.as_ref(), args.step)?;
    let analytic = analytic_minimizer(&loss, &g).ok();
    let output = MinimizeOutput { grid, analytic };
    ensure_dir(out)?;
    let report_path = out.join("minimize.json");
    write_json(&report_path, &output)?;
    println!("{}", serde_json::to_string_pretty(&output)?);
    write_manifest(
        out,
        "minimize",
        serde_json::json!({
            "loss": LossId::from(args.loss), "g": args.g,
            "step": args.step, "omega": args.omega,
        }),
        0,
        &[&report_path],
    )?;
    Ok(EXIT_OK)
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Finite problem as JSON: {"points": [...], "mu": [...], "g": [[...]]}.
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub omega: f64,
}

#[derive(Serialize)]
struct CalibrateSummary {
    omega: f64,
    clean_entropy: f64,
    noisy_entropy: f64,
    decision_agreement: f64,
    clean_max_gap: f64,
    noisy_max_gap: f64,
}

pub fn calibrate(out: &Path, args: CalibrateArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.problem)?;
    let problem: DiscreteProblem = serde_json::from_str(&text)?;
    let noise = NoiseModel::symmetric(args.omega, problem.k())?;
    let clean_map = exact_calibration_map(&problem, &problem.g)?;
    let noisy_map = noisy_minimizer_calibration(&problem, &noise)?;
    let (clean_entropy, noisy_entropy) = expected_entropy_pair(&problem, &noise)?;
    let agreement = decision_agreement(&problem, &noise)?;

    ensure_dir(out)?;
    let clean_path = out.join("clean_map.csv");
    let noisy_path = out.join("noisy_map.csv");
    let summary_path = out.join("calibration.json");
    std::fs::write(&clean_path, clean_map.to_csv())?;
    std::fs::write(&noisy_path, noisy_map.to_csv())?;
    let summary = CalibrateSummary {
        omega: args.omega,
        clean_entropy,
        noisy_entropy,
        decision_agreement: agreement,
        clean_max_gap: clean_map.max_gap,
        noisy_max_gap: noisy_map.max_gap,
    };
    write_json(&summary_path, &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    write_manifest(
        out,
        "calibrate",
        serde_json::json!({
            "problem": args.problem.display().to_string(),
            "omega": args.omega,
        }),
        0,
        &[&clean_path, &noisy_path, &summary_path],
    )?;
    Ok(EXIT_OK)
}

//! The four subcommands. Each writes its artifacts under one output
//! directory and lists them in `manifest.json`.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use fracmorse::assembly::{is_symmetric, MatrixManifest, OperatorPair, ASSEMBLY_TOL};
use fracmorse::experiment::{
    existence_verdict, multiplicity_verdict, search, ExistenceVerdict, MultiplicityVerdict, PassOutcome,
};
use fracmorse::export::{write_file, write_json, write_run_manifest, write_solution, write_spectrum, FileEntry};
use fracmorse::mesh::{bump_profile, Mesh1D, WeightField};
use fracmorse::oracle::oracle_stiffness;
use fracmorse::reaction::{
    check_hypotheses, truncate, ExampleReaction, ExampleVariant, HypothesisMode, HypothesisParams, LinearReaction,
    SharedReaction, Sign, TableReaction,
};
use fracmorse::spectral::{
    courant_fischer_check, deflated_minimize, mode_sign, monotonicity_check_with, norm_bound, solve_eigen,
    DeflationOptions, EigenSet, ModeSign, SpectrumReport, RESIDUAL_TOL,
};
use fracmorse::variational::{derivative_check, EnergyModel, MorseData, SignClass};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{HypothesisChoice, ReactionSpec, RunConfig};
use crate::Failure;

/// Dual-norm residual below which a solution counts in the verdicts.
pub const ACCEPT_RESIDUAL: f64 = 1e-8;

/// Sampling points of `Ω` for the hypothesis check.
fn sample_points(mesh: &Mesh1D) -> Vec<f64> {
    let nodes = mesh.interior_nodes();
    let stride = (nodes.len() / 8).max(1);
    nodes.into_iter().step_by(stride).collect()
}

pub fn build_reaction(spec: &ReactionSpec, lambdas: &[f64]) -> fracmorse::Result<SharedReaction> {
    Ok(match spec {
        ReactionSpec::ExampleH1 { mu, k, h } => Arc::new(ExampleReaction::new(
            mu.eval(lambdas),
            *k,
            lambdas,
            ExampleVariant::H1 { h: *h },
        )?),
        ReactionSpec::ExampleH2 { mu, k } => {
            Arc::new(ExampleReaction::new(mu.eval(lambdas), *k, lambdas, ExampleVariant::H2)?)
        }
        ReactionSpec::CustomTable { points, .. } => Arc::new(TableReaction::new(points)?),
        ReactionSpec::Linear { slope, .. } => Arc::new(LinearReaction::new(slope.eval(lambdas))?),
    })
}

#[derive(Serialize)]
struct SpectrumRun<'a> {
    a: f64,
    b: f64,
    n: usize,
    s: f64,
    weight: String,
    k_max: usize,
    lambdas: &'a [f64],
    residuals: &'a [f64],
    orthonormality_defect: f64,
    clusters: Vec<(usize, usize)>,
    structure: SpectrumReport,
}

pub fn spectrum(cfg: &RunConfig, dir: &Path) -> Result<(), Failure> {
    let mesh = cfg.mesh()?;
    let weight = cfg.weight.build(&mesh)?;
    let ops = OperatorPair::new(&mesh, Some(&weight))?;
    let eig = solve_eigen(&ops, cfg.k_max)?;
    let mut files = write_spectrum(dir, "", &mesh, &eig)?;
    let report = SpectrumRun {
        a: mesh.a(),
        b: mesh.b(),
        n: mesh.n(),
        s: mesh.s(),
        weight: weight.label().to_string(),
        k_max: cfg.k_max,
        lambdas: &eig.lambdas,
        residuals: &eig.residuals,
        orthonormality_defect: eig.orthonormality_defect(&ops.m_eta),
        clusters: eig.clusters(),
        structure: SpectrumReport::from_eigen(&eig),
    };
    files.push(write_json(dir, "report.json", &report)?);
    write_run_manifest(dir, "spectrum", files)?;
    println!("spectrum: {} eigenpairs, lambda_1 = {:.12e}", eig.len(), eig.lambda(1));
    Ok(())
}

#[derive(Serialize)]
struct SolveSummary {
    n_solutions: usize,
    n_nontrivial: usize,
    sign_classes: Vec<SignClass>,
    morse_indices: Vec<usize>,
    nullities: Vec<usize>,
    energies: Vec<f64>,
    residuals_dual: Vec<f64>,
    hypotheses_ok: bool,
    forced: bool,
    seed: u64,
    origin: MorseData,
    mountain_passes: Vec<PassOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    multiplicity: Option<MultiplicityVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    existence: Option<ExistenceVerdict>,
}

pub fn solve(cfg: &RunConfig, seed: u64, force: bool, dir: &Path) -> Result<(), Failure> {
    let mesh = cfg.mesh()?;
    let ops = OperatorPair::new(&mesh, None)?;
    let eig = solve_eigen(&ops, cfg.spectrum_needed())?;
    let reaction = build_reaction(&cfg.reaction, &eig.lambdas)?;
    let mode = match cfg.hypotheses {
        HypothesisChoice::H1 => HypothesisMode::H1 { h: cfg.h },
        HypothesisChoice::H2 => HypothesisMode::H2,
    };
    let params = HypothesisParams::new(cfg.reaction.k(), sample_points(&mesh));
    let report = check_hypotheses(reaction.as_ref(), &eig, mode, &params)?;

    let mut files = vec![write_json(dir, "config.json", &ResolvedConfig { seed, config: cfg })?];
    files.push(write_json(dir, "hypotheses.json", &report)?);
    if !report.all_passed && !force {
        write_run_manifest(dir, "solve", files)?;
        let failing: Vec<String> = report
            .clauses
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.clause, c.detail))
            .collect();
        return Err(Failure::Hypotheses(failing));
    }

    let mut solver = cfg.solver.clone();
    solver.seed = seed;
    let model = EnergyModel::new(ops, reaction)?;
    let out = search(&model, cfg.pipeline, &solver)?;
    for (i, p) in out.points.iter().enumerate() {
        files.push(write_solution(dir, i + 1, &mesh, p, seed, &solver)?);
    }
    let (multiplicity, existence) = match cfg.hypotheses {
        HypothesisChoice::H2 => (Some(multiplicity_verdict(&out, ACCEPT_RESIDUAL)), None),
        HypothesisChoice::H1 => (None, Some(existence_verdict(&out, ACCEPT_RESIDUAL, cfg.h))),
    };
    let summary = SolveSummary {
        n_solutions: out.points.len(),
        n_nontrivial: out.nontrivial(ACCEPT_RESIDUAL).len(),
        sign_classes: out.points.iter().map(|p| p.sign_class).collect(),
        morse_indices: out.points.iter().map(|p| p.morse_index).collect(),
        nullities: out.points.iter().map(|p| p.nullity).collect(),
        energies: out.points.iter().map(|p| p.energy).collect(),
        residuals_dual: out.points.iter().map(|p| p.residual_dual).collect(),
        hypotheses_ok: report.all_passed,
        forced: force && !report.all_passed,
        seed,
        origin: out.origin.clone(),
        mountain_passes: out.passes.clone(),
        multiplicity,
        existence,
    };
    files.push(write_json(dir, "summary.json", &summary)?);
    write_run_manifest(dir, "solve", files)?;
    println!(
        "solve: {} critical points ({} nontrivial), sign classes {}",
        summary.n_solutions,
        summary.n_nontrivial,
        serde_json::to_string(&summary.sign_classes).unwrap_or_default()
    );
    Ok(())
}

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    seed: u64,
    config: &'a RunConfig,
}

/// One row of the verification matrix.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, f: impl FnOnce() -> fracmorse::Result<(bool, String)>) -> CheckResult {
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn max_relative_entry_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn with_eig(
    eig: &Result<EigenSet, String>,
    f: impl FnOnce(&EigenSet) -> fracmorse::Result<(bool, String)>,
) -> fracmorse::Result<(bool, String)> {
    match eig {
        Ok(e) => f(e),
        Err(msg) => Ok((false, format!("eigensolve failed: {msg}"))),
    }
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    passed: bool,
    failing: Vec<&'a str>,
    checks: &'a [CheckResult],
}

/// Runs the invariant suite; `Err(Failure::Verify)` lists the failing checks.
pub fn verify(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<(), Failure> {
    let mesh = cfg.mesh()?;
    let weight = cfg.weight.build(&mesh)?;
    let mut ops = OperatorPair::new(&mesh, Some(&weight))?;
    if cfg.inject_fault {
        ops.a[(0, 0)] = -ops.a[(0, 0)];
    }
    let k_max = cfg.k_max;
    let eig = solve_eigen(&ops, k_max).map_err(|e| e.to_string());
    let mut checks = Vec::new();

    checks.push(check("oracle_equivalence", || {
        let small = mesh.with_n(mesh.n().min(16))?;
        let err = max_relative_entry_error(
            &fracmorse::assembly::assemble_stiffness(&small)?,
            &oracle_stiffness(&small)?,
        );
        Ok((err < 1e-8, format!("n={}: max relative entry error {err:.3e}", small.n())))
    }));
    checks.push(check("symmetric_positive_definite", || {
        let sym = is_symmetric(&ops.a) && is_symmetric(&ops.m_eta);
        Ok(match ops.validate() {
            Ok(()) => (sym, format!("symmetric={sym}, Cholesky of A and M_eta succeeded")),
            Err(e) => (false, e.to_string()),
        })
    }));
    checks.push(check("eigen_residuals", || {
        with_eig(&eig, |e| {
            let bound = RESIDUAL_TOL * norm_bound(&ops.a);
            let worst = e.residuals.iter().copied().fold(0.0, f64::max);
            Ok((worst <= bound, format!("max residual {worst:.3e}, bound {bound:.3e}")))
        })
    }));
    checks.push(check("orthonormality", || {
        with_eig(&eig, |e| {
            let d = e.orthonormality_defect(&ops.m_eta);
            Ok((d < 1e-8, format!("max |E^T M_eta E - I| = {d:.3e}")))
        })
    }));
    checks.push(check("scaling", || {
        with_eig(&eig, |e| {
            let mut worst: f64 = 0.0;
            for c in [0.5, 2.0, 10.0] {
                let scaled = solve_eigen(&ops.reweighted(Some(&weight.scaled(c)?))?, k_max)?;
                for k in 1..=k_max.min(6) {
                    worst = worst.max((c * scaled.lambda(k) - e.lambda(k)).abs() / e.lambda(k).abs());
                }
            }
            Ok((worst < 1e-10, format!("max relative error of c*lambda_k(c*eta) {worst:.3e}")))
        })
    }));
    checks.push(check("sign_structure", || {
        with_eig(&eig, |e| {
            let l1 = e.lambda(1);
            let mut problems = Vec::new();
            if !(l1 > 0.0) {
                problems.push(format!("lambda_1 = {l1:e} is not positive"));
            }
            if e.len() >= 2 && !(e.lambda(2) - l1 > 1e-6 * l1.abs()) {
                problems.push("lambda_1 is not simple".to_string());
            }
            if mode_sign(&e.vector(1)) != ModeSign::OneSigned {
                problems.push("e_1 changes sign".to_string());
            }
            for k in 2..=e.len().min(6) {
                if mode_sign(&e.vector(k)) != ModeSign::Nodal {
                    problems.push(format!("e_{k} does not change sign"));
                }
            }
            let ok = problems.is_empty();
            Ok((ok, if ok { format!("lambda_1 = {l1:.12e}") } else { problems.join("; ") }))
        })
    }));
    checks.push(check("courant_fischer", || {
        with_eig(&eig, |e| {
            let mut notes = Vec::new();
            let mut ok = true;
            for k in 1..=k_max.min(4) {
                let r = courant_fischer_check(&ops, e, k, cfg.verify_trials, seed.wrapping_add(k as u64))?;
                ok &= r.passed;
                notes.push(format!(
                    "k={k}: excess {:.2e}, attained {:.2e}",
                    r.max_excess, r.attained_error
                ));
            }
            Ok((ok, notes.join("; ")))
        })
    }));
    checks.push(check("monotonicity", || {
        let (a, b) = (mesh.a(), mesh.b());
        let (center, radius) = (0.5 * (a + b), 0.25 * (b - a));
        let values: Vec<f64> = weight
            .values()
            .iter()
            .zip(mesh.interior_nodes())
            .map(|(w, x)| w + bump_profile(x, center, radius))
            .collect();
        let bumped = WeightField::new(values, weight.eta0(), format!("{}+bump", weight.label()))?;
        let r = monotonicity_check_with(&ops, &weight, &bumped, k_max.min(6))?;
        let strict = r.monotonicity_records.iter().filter(|m| m.strict).count();
        let min_margin = r
            .monotonicity_records
            .iter()
            .map(|m| m.relative_margin)
            .fold(f64::INFINITY, f64::min);
        Ok((
            r.violations == 0,
            format!(
                "{} violations, {strict}/{} strict, smallest relative margin {min_margin:.3e}",
                r.violations,
                r.monotonicity_records.len()
            ),
        ))
    }));
    checks.push(check("deflated_minimization", || {
        with_eig(&eig, |e| {
            let mut worst: f64 = 0.0;
            for k in 1..=k_max.min(4) {
                let (lam, _) = deflated_minimize(&ops, e, k, 2, seed.wrapping_add(k as u64), DeflationOptions::default())?;
                worst = worst.max((lam - e.lambda(k)).abs() / e.lambda(k).abs());
            }
            Ok((worst < 1e-6, format!("max relative deviation from the direct solve {worst:.3e}")))
        })
    }));
    checks.push(check("derivatives", || {
        let fd_mesh = mesh.with_n(mesh.n().min(64))?;
        let unit = OperatorPair::new(&fd_mesh, None)?;
        let l = solve_eigen(&unit, 3)?.lambdas;
        let bases: [SharedReaction; 2] = [
            Arc::new(ExampleReaction::new(0.5 * l[0], 2, &l, ExampleVariant::H2)?),
            Arc::new(ExampleReaction::new(0.5 * (l[0] + l[1]), 2, &l, ExampleVariant::H1 { h: 1 })?),
        ];
        let base_model = EnergyModel::new(unit, bases[0].clone())?;
        let mut grad: f64 = 0.0;
        let mut hess: f64 = 0.0;
        let mut detail = String::new();
        for base in bases {
            let variants: [SharedReaction; 3] = [
                base.clone(),
                Arc::new(truncate(base.clone(), Sign::Plus)),
                Arc::new(truncate(base.clone(), Sign::Minus)),
            ];
            for r in variants {
                let name = r.meta().name.clone();
                let d = derivative_check(&base_model.with_reaction(r), 20, 4.0, seed)?;
                grad = grad.max(d.max_gradient_error);
                hess = hess.max(d.max_hessian_error);
                let _ = write!(
                    detail,
                    "{name}: {:.1e}/{:.1e}; ",
                    d.max_gradient_error, d.max_hessian_error
                );
            }
        }
        Ok((grad < 1e-6 && hess < 1e-5, detail.trim_end_matches("; ").to_string()))
    }));

    let failing: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let report = VerifyReport {
        passed: failing.is_empty(),
        failing: failing.clone(),
        checks: &checks,
    };
    let files = vec![write_json(dir, "checks.json", &report)?];
    write_run_manifest(dir, "verify", files)?;
    for c in &checks {
        println!("{:<28} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    if failing.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(failing.iter().map(|s| s.to_string()).collect()))
    }
}

/// `row,col,value` for the nonzero entries, one-based, row-major.
pub fn triplet_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::from("row,col,value\n");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 {
                let _ = writeln!(s, "{},{},{:.17e}", i + 1, j + 1, v);
            }
        }
    }
    s
}

pub fn assemble(cfg: &RunConfig, dir: &Path) -> Result<(), Failure> {
    let mesh = cfg.mesh()?;
    let weight = cfg.weight.build(&mesh)?;
    let ops = OperatorPair::new(&mesh, Some(&weight))?;
    // the stiffness file is covered by the matrix manifest's checksum
    let stiffness: FileEntry = write_file(dir, "stiffness.csv", triplet_csv(&ops.a).as_bytes())?;
    let manifest = MatrixManifest {
        a: mesh.a(),
        b: mesh.b(),
        n: mesh.n(),
        s: mesh.s(),
        tolerance: ASSEMBLY_TOL,
        checksum: stiffness.sha256,
    };
    let files = vec![
        write_json(dir, "matrix_manifest.json", &manifest)?,
        write_file(dir, "mass.csv", triplet_csv(&ops.m).as_bytes())?,
        write_file(dir, "mass_eta.csv", triplet_csv(&ops.m_eta).as_bytes())?,
    ];
    write_run_manifest(dir, "assemble", files)?;
    println!("assemble: n={} matrices written", mesh.n());
    Ok(())
}

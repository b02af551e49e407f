//! End-to-end searches: multistart Newton plus mountain passes on the two
//! truncated energies, merged into one list of distinct critical points.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reaction::{truncate, SharedReaction, Sign};
use crate::spectral::solve_pencil;
use crate::variational::{
    merge_distinct, morse_data, mountain_pass_run, newton_multistart, CriticalPoint, EnergyModel, MorseData,
    MountainPassRun, Provenance, SignClass, SolverConfig,
};

/// Doubles `τ` until `φ(τ · dir) < 0`.
pub fn ramp_endpoint(model: &EnergyModel, dir: &DVector<f64>) -> Result<DVector<f64>> {
    let mut tau = 1.0;
    for _ in 0..60 {
        let p = dir * tau;
        if model.energy(&p)? < 0.0 {
            return Ok(p);
        }
        tau *= 2.0;
    }
    Err(Error::Geometry("energy stays nonnegative along the ramp direction".into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassOutcome {
    pub sign: Sign,
    pub run: Option<MountainPassRun>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Distinct critical points of the full energy, classified on it.
    pub points: Vec<CriticalPoint>,
    pub origin: MorseData,
    pub passes: Vec<PassOutcome>,
}

impl SearchOutcome {
    pub fn nontrivial(&self, max_residual: f64) -> Vec<&CriticalPoint> {
        self.points
            .iter()
            .filter(|c| !c.is_trivial() && c.residual_dual < max_residual)
            .collect()
    }
}

/// Which searches to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Minimize,
    MountainPass,
    NewtonMultistart,
    All,
}

/// Runs the selected searches on `φ` (built from `base`) and, for mountain
/// passes, on `φ±` with endpoints on the rays through `±e_1`.
pub fn search(model: &EnergyModel, pipeline: Pipeline, cfg: &SolverConfig) -> Result<SearchOutcome> {
    let base: SharedReaction = model.reaction.clone();
    let n = model.n();
    let mut points: Vec<CriticalPoint> = Vec::new();
    let mut passes = Vec::new();
    if matches!(pipeline, Pipeline::Minimize | Pipeline::All) {
        let cp = crate::variational::minimize(model, &DVector::zeros(n), cfg)?;
        merge_distinct(model, &mut points, [cp]);
    }
    if matches!(pipeline, Pipeline::NewtonMultistart | Pipeline::All) {
        let found = newton_multistart(model, cfg.n_starts, cfg.seed, cfg)?;
        merge_distinct(model, &mut points, found);
    }
    if matches!(pipeline, Pipeline::MountainPass | Pipeline::All) {
        let e1 = solve_pencil(&model.ops.a, &model.ops.m, 1, "unit".into())?
            .vectors
            .column(0)
            .into_owned();
        for sign in [Sign::Plus, Sign::Minus] {
            let truncated = model.with_reaction(Arc::new(truncate(base.clone(), sign)));
            let dir = match sign {
                Sign::Plus => e1.clone(),
                Sign::Minus => -&e1,
            };
            let outcome = ramp_endpoint(&truncated, &dir).and_then(|end| mountain_pass_run(&truncated, &end, cfg));
            match outcome {
                Ok((cp, run)) => {
                    let full = CriticalPoint::classify(model, cp.u, Provenance::MountainPass, cfg.kernel_tol)?;
                    merge_distinct(model, &mut points, [full]);
                    passes.push(PassOutcome {
                        sign,
                        run: Some(run),
                        error: None,
                    });
                }
                Err(e) => passes.push(PassOutcome {
                    sign,
                    run: None,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    let origin = morse_data(model, &DVector::zeros(n), cfg.kernel_tol)?;
    Ok(SearchOutcome { points, origin, passes })
}

/// Checks of the three-solution prediction on one search outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplicityVerdict {
    pub nontrivial: usize,
    pub has_positive: bool,
    pub has_negative: bool,
    pub origin_index: (usize, usize),
    /// `(morse_index, nullity)` of the one-signed points.
    pub one_signed_indices: Vec<(usize, usize)>,
    /// One-signed points with nullity > 0, excluded from the index check.
    pub degenerate: usize,
    pub passed: bool,
}

pub fn multiplicity_verdict(out: &SearchOutcome, max_residual: f64) -> MultiplicityVerdict {
    let nontrivial = out.nontrivial(max_residual);
    let has_positive = nontrivial.iter().any(|c| c.sign_class == SignClass::Positive);
    let has_negative = nontrivial.iter().any(|c| c.sign_class == SignClass::Negative);
    let one_signed: Vec<&&CriticalPoint> = nontrivial
        .iter()
        .filter(|c| matches!(c.sign_class, SignClass::Positive | SignClass::Negative))
        .collect();
    let one_signed_indices: Vec<(usize, usize)> = one_signed.iter().map(|c| (c.morse_index, c.nullity)).collect();
    let degenerate = one_signed.iter().filter(|c| c.nullity > 0).count();
    let indices_ok = one_signed.iter().filter(|c| c.nullity == 0).all(|c| c.morse_index == 1);
    let origin_index = (out.origin.morse_index, out.origin.nullity);
    MultiplicityVerdict {
        nontrivial: nontrivial.len(),
        has_positive,
        has_negative,
        origin_index,
        one_signed_indices,
        degenerate,
        passed: nontrivial.len() >= 3 && has_positive && has_negative && origin_index == (0, 0) && indices_ok,
    }
}

/// Checks of the one-solution prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExistenceVerdict {
    pub nontrivial: usize,
    pub origin_index: (usize, usize),
    pub expected_origin_index: (usize, usize),
    pub passed: bool,
}

pub fn existence_verdict(out: &SearchOutcome, max_residual: f64, h: usize) -> ExistenceVerdict {
    let nontrivial = out.nontrivial(max_residual).len();
    let origin_index = (out.origin.morse_index, out.origin.nullity);
    ExistenceVerdict {
        nontrivial,
        origin_index,
        expected_origin_index: (h, 0),
        passed: nontrivial >= 1 && origin_index == (h, 0),
    }
}

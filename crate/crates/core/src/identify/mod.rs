//! Communication-user identification: given the detected candidates of one
//! radar frame and the optimal beam index, pick the candidate that is the user.
//!
//! Four model-based solvers map the beam to an expected radar state and pick
//! the nearest candidate; the DNN scores every candidate independently and
//! picks the highest score.

mod baseline;
mod dnn;

pub use baseline::{
    estimate_offset, fit_linreg_3d, fit_linreg_angle, fit_lookup, nearest_angle, ols, predict_offset, LinReg3d,
    LinRegAngle, LinRegAngleSolver, LinReg3dSolver, LookupSolver, LookupTable, OffsetSolver, Ols,
};
pub use dnn::{expand_rows, predict_dnn, train_dnn, DnnHyper, DnnSolver, TrainReport};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::detect::Candidate;
use crate::{Error, Result};

/// One dataset row: the candidates of a frame, the optimal beam and the index
/// of the candidate that is the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: u64,
    pub sequence_id: u32,
    pub candidates: Vec<Candidate>,
    pub beam: usize,
    pub label: usize,
}

impl Sample {
    pub fn validate(&self, n_beams: usize) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::Domain(format!("sample {} has no candidates", self.sample_id)));
        }
        if self.label >= self.candidates.len() {
            return Err(Error::Domain(format!(
                "sample {}: label {} out of {} candidates",
                self.sample_id,
                self.label,
                self.candidates.len()
            )));
        }
        if self.beam >= n_beams {
            return Err(Error::Domain(format!(
                "sample {}: beam {} out of {n_beams}",
                self.sample_id, self.beam
            )));
        }
        Ok(())
    }

    pub fn target(&self) -> &Candidate {
        &self.candidates[self.label]
    }
}

pub trait Solver: Send + Sync {
    fn kind(&self) -> SolverKind;
    fn fit(&mut self, train: &[Sample]) -> Result<()>;
    /// Index into `candidates` of the predicted user.
    fn predict(&self, candidates: &[Candidate], beam: usize) -> Result<usize>;
    /// Fitted parameters for reports and manifests.
    fn params_json(&self) -> serde_json::Value;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Offset,
    LinregAngle,
    Linreg3d,
    Lookup,
    Dnn,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] = [
        SolverKind::Offset,
        SolverKind::LinregAngle,
        SolverKind::Linreg3d,
        SolverKind::Lookup,
        SolverKind::Dnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Offset => "offset",
            SolverKind::LinregAngle => "linreg-angle",
            SolverKind::Linreg3d => "linreg-3d",
            SolverKind::Lookup => "lookup",
            SolverKind::Dnn => "dnn",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::as_str).join(", ")
    }

    /// An unfitted solver. `pointing_deg` are the codebook pointing angles.
    pub fn build(self, pointing_deg: &[f64], hyper: &DnnHyper) -> Box<dyn Solver> {
        let p = pointing_deg.to_vec();
        match self {
            SolverKind::Offset => Box::new(OffsetSolver::new(p)),
            SolverKind::LinregAngle => Box::new(LinRegAngleSolver::new(p)),
            SolverKind::Linreg3d => Box::new(LinReg3dSolver::new(p)),
            SolverKind::Lookup => Box::new(LookupSolver::new(p)),
            SolverKind::Dnn => Box::new(DnnSolver::new(p.len(), hyper.clone())),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown solver '{s}' (valid: {})", Self::valid_names())))
    }
}

/// Rebuilds a fitted solver from its [`Solver::params_json`] output. The DNN
/// needs its model, which lives in a separate checkpoint.
pub fn restore(
    kind: SolverKind,
    pointing_deg: &[f64],
    params: &serde_json::Value,
    model: Option<crate::nn::MlpModel>,
) -> Result<Box<dyn Solver>> {
    fn parse<T: for<'de> Deserialize<'de>>(v: &serde_json::Value, kind: SolverKind) -> Result<T> {
        T::deserialize(v).map_err(|e| Error::Config(format!("bad parameters for '{kind}': {e}")))
    }
    let p = pointing_deg.to_vec();
    Ok(match kind {
        SolverKind::Offset => {
            let mut s = OffsetSolver::new(p);
            s.offset = params.get("offset_deg").and_then(|v| v.as_f64());
            require_fitted(&s.offset, kind)?;
            Box::new(s)
        }
        SolverKind::LinregAngle => {
            let mut s = LinRegAngleSolver::new(p);
            s.params = Some(parse(params, kind)?);
            Box::new(s)
        }
        SolverKind::Linreg3d => {
            let mut s = LinReg3dSolver::new(p);
            s.params = Some(parse(params, kind)?);
            Box::new(s)
        }
        SolverKind::Lookup => {
            let mut s = LookupSolver::new(p);
            let t: LookupTable = parse(params, kind)?;
            if t.angle_deg.len() != pointing_deg.len() {
                return Err(Error::DimensionMismatch {
                    expected: pointing_deg.len(),
                    actual: t.angle_deg.len(),
                });
            }
            s.table = Some(t);
            Box::new(s)
        }
        SolverKind::Dnn => {
            let model = model.ok_or_else(|| Error::Config("dnn solver needs a model checkpoint".into()))?;
            let hyper = params.get("hyper").map(|h| parse(h, kind)).transpose()?.unwrap_or_default();
            Box::new(DnnSolver::from_model(model, hyper))
        }
    })
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

/// Index of the smallest value; ties go to the lowest index.
pub(crate) fn argmin(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    argmax(values.into_iter().map(|v| -v))
}

/// Predictions for every sample, in sample order.
pub fn predict_all(solver: &dyn Solver, samples: &[Sample]) -> Result<Vec<usize>> {
    samples
        .par_iter()
        .map(|s| solver.predict(&s.candidates, s.beam))
        .collect()
}

/// Fraction of samples whose prediction equals the label.
pub fn evaluate(solver: &dyn Solver, test: &[Sample]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let preds = predict_all(solver, test)?;
    let hits = preds.iter().zip(test).filter(|(p, s)| **p == s.label).count();
    Ok(hits as f64 / test.len() as f64)
}

pub(crate) fn require_fitted<T>(v: &Option<T>, kind: SolverKind) -> Result<&T> {
    v.as_ref()
        .ok_or_else(|| Error::Config(format!("solver '{kind}' used before fit")))
}

pub(crate) fn check_beam(beam: usize, n_beams: usize) -> Result<()> {
    if beam >= n_beams {
        return Err(Error::Domain(format!("beam {beam} out of {n_beams}")));
    }
    Ok(())
}

//! Per-candidate neural scorer: every candidate of a sample becomes one
//! training row labeled 1 for the user and 0 otherwise.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{argmax, check_beam, require_fitted, Sample, Solver, SolverKind};
use crate::detect::Candidate;
use crate::nn::{AdamState, Architecture, Example, MlpModel, Normalization};
use crate::rng::{stream, stream_rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DnnHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub architecture: Architecture,
}

impl Default for DnnHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            architecture: Architecture::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    pub n_rows: usize,
}

/// One row per candidate: normalized (candidate, beam) inputs with target 1
/// for the labeled candidate and 0 for the rest.
pub fn expand_rows(samples: &[Sample], norm: &Normalization) -> Result<Vec<Example>> {
    let mut rows = Vec::new();
    for s in samples {
        s.validate(norm.n_beams)?;
        for (k, c) in s.candidates.iter().enumerate() {
            rows.push(Example {
                x: norm.inputs(c, s.beam)?,
                y: if k == s.label { 1.0 } else { 0.0 },
            });
        }
    }
    Ok(rows)
}

/// Adam on the mean squared error with per-epoch seeded shuffling. Returns
/// the weights after the final epoch.
pub fn train_dnn(train: &[Sample], hyper: &DnnHyper, n_beams: usize) -> Result<(MlpModel, TrainReport)> {
    if hyper.batch_size == 0 || hyper.epochs == 0 || !(hyper.lr > 0.0) {
        return Err(Error::Config("epochs, batch_size and lr must be positive".into()));
    }
    let norm = Normalization::fit(train.iter().flat_map(|s| &s.candidates), n_beams);
    let rows = expand_rows(train, &norm)?;
    if rows.is_empty() {
        return Err(Error::Empty("training rows"));
    }
    let mut model = MlpModel::init(&hyper.architecture, norm, hyper.seed)?;
    let mut params = model.parameters();
    let mut adam = AdamState::new(params.len(), hyper.lr);
    let mut rng = stream_rng(hyper.seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut batch = Vec::with_capacity(hyper.batch_size);
    let mut epoch_loss = Vec::with_capacity(hyper.epochs);
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| rows[i]));
            let (loss, grad) = model.loss_and_grad(&batch)?;
            total += loss * chunk.len() as f64;
            adam.step(&mut params, &grad)?;
            model.set_parameters(&params)?;
        }
        let mean = total / rows.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        epoch_loss.push(mean);
    }
    Ok((
        model,
        TrainReport {
            epoch_loss,
            n_rows: rows.len(),
        },
    ))
}

/// Scores each candidate independently and returns the best; ties go to the
/// lowest index.
pub fn predict_dnn(candidates: &[Candidate], beam: usize, model: &MlpModel) -> Result<usize> {
    check_beam(beam, model.norm.n_beams)?;
    let scores = candidates
        .iter()
        .map(|c| model.forward(c, beam))
        .collect::<Result<Vec<_>>>()?;
    argmax(scores).ok_or(Error::Empty("candidate list"))
}

pub struct DnnSolver {
    n_beams: usize,
    pub hyper: DnnHyper,
    pub model: Option<MlpModel>,
    pub report: Option<TrainReport>,
}

impl DnnSolver {
    pub fn new(n_beams: usize, hyper: DnnHyper) -> Self {
        Self {
            n_beams,
            hyper,
            model: None,
            report: None,
        }
    }

    pub fn from_model(model: MlpModel, hyper: DnnHyper) -> Self {
        Self {
            n_beams: model.norm.n_beams,
            hyper,
            model: Some(model),
            report: None,
        }
    }
}

impl Solver for DnnSolver {
    fn kind(&self) -> SolverKind {
        SolverKind::Dnn
    }

    fn fit(&mut self, train: &[Sample]) -> Result<()> {
        let (model, report) = train_dnn(train, &self.hyper, self.n_beams)?;
        self.model = Some(model);
        self.report = Some(report);
        Ok(())
    }

    fn predict(&self, candidates: &[Candidate], beam: usize) -> Result<usize> {
        predict_dnn(candidates, beam, require_fitted(&self.model, self.kind())?)
    }

    fn params_json(&self) -> serde_json::Value {
        serde_json::json!({
            "hyper": self.hyper,
            "normalization": self.model.as_ref().map(|m| m.norm),
            "final_loss": self.report.as_ref().and_then(|r| r.epoch_loss.last()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identify::evaluate;

    fn norm() -> Normalization {
        Normalization {
            range_max: 100.0,
            angle_span: 180.0,
            vel_max: 20.0,
            n_beams: 64,
        }
    }

    fn toy() -> Vec<Sample> {
        let a = Candidate::new(20.0, -30.0, 4.0);
        let b = Candidate::new(60.0, 25.0, -6.0);
        vec![
            Sample {
                sample_id: 0,
                sequence_id: 0,
                candidates: vec![a, b],
                beam: 10,
                label: 0,
            },
            Sample {
                sample_id: 1,
                sequence_id: 0,
                candidates: vec![a, b],
                beam: 50,
                label: 1,
            },
        ]
    }

    #[test]
    fn rows_are_labeled_per_candidate() {
        let rows = expand_rows(&toy(), &norm()).unwrap();
        assert_eq!(rows.iter().map(|r| r.y).collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 1.0]);
        assert!(expand_rows(&[], &norm()).unwrap().is_empty());
    }

    #[test]
    fn memorizes_two_samples() {
        let hyper = DnnHyper {
            lr: 1e-2,
            epochs: 400,
            batch_size: 4,
            ..DnnHyper::default()
        };
        let (model, report) = train_dnn(&toy(), &hyper, 64).unwrap();
        assert!(*report.epoch_loss.last().unwrap() < 1e-3, "{:?}", report.epoch_loss.last());
        let solver = DnnSolver::from_model(model, hyper);
        assert_eq!(evaluate(&solver, &toy()).unwrap(), 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let hyper = DnnHyper {
            epochs: 5,
            batch_size: 3,
            seed: 17,
            ..DnnHyper::default()
        };
        let (a, ra) = train_dnn(&toy(), &hyper, 64).unwrap();
        let (b, rb) = train_dnn(&toy(), &hyper, 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(train_dnn(&[], &DnnHyper::default(), 64).is_err());
    }

    #[test]
    fn single_and_duplicate_candidates() {
        let model = MlpModel::init(&Architecture::default(), norm(), 2).unwrap();
        let c = Candidate::new(30.0, 5.0, 1.0);
        assert_eq!(predict_dnn(&[c], 3, &model).unwrap(), 0);
        assert_eq!(predict_dnn(&[c, c, c], 3, &model).unwrap(), 0);
        assert!(predict_dnn(&[], 3, &model).is_err());
        assert!(predict_dnn(&[c], 64, &model).is_err());
    }

    #[test]
    fn selection_follows_the_candidate_under_permutation() {
        let model = MlpModel::init(&Architecture::default(), norm(), 6).unwrap();
        let cands: Vec<Candidate> = (0..5)
            .map(|k| Candidate::new(15.0 + 9.0 * k as f64, -40.0 + 17.0 * k as f64, 3.0 - 2.0 * k as f64))
            .collect();
        let pick = predict_dnn(&cands, 20, &model).unwrap();
        let mut rev = cands.clone();
        rev.reverse();
        assert_eq!(rev[predict_dnn(&rev, 20, &model).unwrap()], cands[pick]);
    }
}

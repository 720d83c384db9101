//! Model-based solvers: offset, angle regression, 3-D regression and lookup.

use serde::{Deserialize, Serialize};

use super::{argmin, check_beam, require_fitted, Sample, Solver, SolverKind};
use crate::detect::Candidate;
use crate::{Error, Result};

fn beam_angle(pointing: &[f64], beam: usize) -> Result<f64> {
    check_beam(beam, pointing.len())?;
    Ok(pointing[beam])
}

fn non_empty(train: &[Sample]) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    Ok(())
}

/// Index of the candidate whose angle is closest to `angle_deg`.
pub fn nearest_angle(candidates: &[Candidate], angle_deg: f64) -> Result<usize> {
    argmin(candidates.iter().map(|c| (c.angle_deg - angle_deg).abs())).ok_or(Error::Empty("candidate list"))
}

/// Mean of target radar angle minus beam pointing angle: the offset that
/// minimizes the squared residual.
pub fn estimate_offset(train: &[Sample], pointing: &[f64]) -> Result<f64> {
    non_empty(train)?;
    let mut sum = 0.0;
    for s in train {
        sum += s.target().angle_deg - beam_angle(pointing, s.beam)?;
    }
    Ok(sum / train.len() as f64)
}

pub fn predict_offset(candidates: &[Candidate], beam: usize, offset: f64, pointing: &[f64]) -> Result<usize> {
    nearest_angle(candidates, beam_angle(pointing, beam)? + offset)
}

/// Ordinary least squares fit of `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ols {
    pub intercept: f64,
    pub slope: f64,
    /// Residual standard deviation with n − 2 degrees of freedom (0 for n = 2).
    pub residual_sd: f64,
    pub slope_se: f64,
}

impl Ols {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub fn ols(xs: &[f64], ys: &[f64]) -> Result<Ols> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), actual: ys.len() });
    }
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Err(Error::Degenerate("regression needs at least two points".into()));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let spread = xs.iter().map(|x| (x - mx).abs()).fold(0.0, f64::max);
    if !(spread > 1e-12 * mx.abs().max(1.0)) {
        return Err(Error::Degenerate("all regressor values are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let residual_sd = if xs.len() > 2 { (ssr / (n - 2.0)).sqrt() } else { 0.0 };
    Ok(Ols {
        intercept,
        slope,
        residual_sd,
        slope_se: residual_sd / sxx.sqrt(),
    })
}

fn beam_angles(train: &[Sample], pointing: &[f64]) -> Result<Vec<f64>> {
    train.iter().map(|s| beam_angle(pointing, s.beam)).collect()
}

/// Radar angle as an affine function of the beam pointing angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinRegAngle {
    pub intercept: f64,
    pub slope: f64,
}

pub fn fit_linreg_angle(train: &[Sample], pointing: &[f64]) -> Result<LinRegAngle> {
    non_empty(train)?;
    let xs = beam_angles(train, pointing)?;
    let ys: Vec<f64> = train.iter().map(|s| s.target().angle_deg).collect();
    let f = ols(&xs, &ys)?;
    Ok(LinRegAngle {
        intercept: f.intercept,
        slope: f.slope,
    })
}

/// Range, angle and velocity each regressed on the beam pointing angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinReg3d {
    pub fits: [Ols; 3],
    /// Per-axis distance scale: residual standard deviation floored at 1e-6.
    pub scale: [f64; 3],
}

impl LinReg3d {
    pub fn predict_state(&self, beam_angle: f64) -> [f64; 3] {
        self.fits.map(|f| f.predict(beam_angle))
    }
}

pub fn fit_linreg_3d(train: &[Sample], pointing: &[f64]) -> Result<LinReg3d> {
    non_empty(train)?;
    let xs = beam_angles(train, pointing)?;
    let mut fits = Vec::with_capacity(3);
    for axis in 0..3 {
        let ys: Vec<f64> = train.iter().map(|s| s.target().state()[axis]).collect();
        fits.push(ols(&xs, &ys)?);
    }
    let fits: [Ols; 3] = fits.try_into().unwrap();
    Ok(LinReg3d {
        fits,
        scale: fits.map(|f| f.residual_sd.max(1e-6)),
    })
}

/// Per-beam mean radar angle of the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub angle_deg: Vec<f64>,
    /// Training samples behind each entry; 0 means the entry is the offset fallback.
    pub count: Vec<usize>,
    pub fallback_offset: f64,
}

pub fn fit_lookup(train: &[Sample], pointing: &[f64]) -> Result<LookupTable> {
    let fallback_offset = estimate_offset(train, pointing)?;
    let mut sum = vec![0.0; pointing.len()];
    let mut count = vec![0usize; pointing.len()];
    for s in train {
        sum[s.beam] += s.target().angle_deg;
        count[s.beam] += 1;
    }
    let angle_deg = (0..pointing.len())
        .map(|b| {
            if count[b] > 0 {
                sum[b] / count[b] as f64
            } else {
                pointing[b] + fallback_offset
            }
        })
        .collect();
    Ok(LookupTable {
        angle_deg,
        count,
        fallback_offset,
    })
}

pub struct OffsetSolver {
    pointing: Vec<f64>,
    pub offset: Option<f64>,
}

impl OffsetSolver {
    pub fn new(pointing: Vec<f64>) -> Self {
        Self { pointing, offset: None }
    }
}

impl Solver for OffsetSolver {
    fn kind(&self) -> SolverKind {
        SolverKind::Offset
    }

    fn fit(&mut self, train: &[Sample]) -> Result<()> {
        self.offset = Some(estimate_offset(train, &self.pointing)?);
        Ok(())
    }

    fn predict(&self, candidates: &[Candidate], beam: usize) -> Result<usize> {
        let offset = *require_fitted(&self.offset, self.kind())?;
        predict_offset(candidates, beam, offset, &self.pointing)
    }

    fn params_json(&self) -> serde_json::Value {
        serde_json::json!({ "offset_deg": self.offset })
    }
}

pub struct LinRegAngleSolver {
    pointing: Vec<f64>,
    pub params: Option<LinRegAngle>,
}

impl LinRegAngleSolver {
    pub fn new(pointing: Vec<f64>) -> Self {
        Self { pointing, params: None }
    }
}

impl Solver for LinRegAngleSolver {
    fn kind(&self) -> SolverKind {
        SolverKind::LinregAngle
    }

    fn fit(&mut self, train: &[Sample]) -> Result<()> {
        self.params = Some(fit_linreg_angle(train, &self.pointing)?);
        Ok(())
    }

    fn predict(&self, candidates: &[Candidate], beam: usize) -> Result<usize> {
        let p = require_fitted(&self.params, self.kind())?;
        let phi = beam_angle(&self.pointing, beam)?;
        nearest_angle(candidates, p.intercept + p.slope * phi)
    }

    fn params_json(&self) -> serde_json::Value {
        serde_json::json!(self.params)
    }
}

pub struct LinReg3dSolver {
    pointing: Vec<f64>,
    pub params: Option<LinReg3d>,
}

impl LinReg3dSolver {
    pub fn new(pointing: Vec<f64>) -> Self {
        Self { pointing, params: None }
    }
}

impl Solver for LinReg3dSolver {
    fn kind(&self) -> SolverKind {
        SolverKind::Linreg3d
    }

    fn fit(&mut self, train: &[Sample]) -> Result<()> {
        self.params = Some(fit_linreg_3d(train, &self.pointing)?);
        Ok(())
    }

    fn predict(&self, candidates: &[Candidate], beam: usize) -> Result<usize> {
        let p = require_fitted(&self.params, self.kind())?;
        let want = p.predict_state(beam_angle(&self.pointing, beam)?);
        argmin(candidates.iter().map(|c| {
            let s = c.state();
            (0..3).map(|i| ((s[i] - want[i]) / p.scale[i]).powi(2)).sum::<f64>()
        }))
        .ok_or(Error::Empty("candidate list"))
    }

    fn params_json(&self) -> serde_json::Value {
        serde_json::json!(self.params)
    }
}

pub struct LookupSolver {
    pointing: Vec<f64>,
    pub table: Option<LookupTable>,
}

impl LookupSolver {
    pub fn new(pointing: Vec<f64>) -> Self {
        Self { pointing, table: None }
    }
}

impl Solver for LookupSolver {
    fn kind(&self) -> SolverKind {
        SolverKind::Lookup
    }

    fn fit(&mut self, train: &[Sample]) -> Result<()> {
        for s in train {
            check_beam(s.beam, self.pointing.len())?;
        }
        self.table = Some(fit_lookup(train, &self.pointing)?);
        Ok(())
    }

    fn predict(&self, candidates: &[Candidate], beam: usize) -> Result<usize> {
        let t = require_fitted(&self.table, self.kind())?;
        check_beam(beam, t.angle_deg.len())?;
        nearest_angle(candidates, t.angle_deg[beam])
    }

    fn params_json(&self) -> serde_json::Value {
        serde_json::json!(self.table)
    }
}

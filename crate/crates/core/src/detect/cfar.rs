//! Cell-averaging CFAR along the range axis.
//!
//! For `N_t = 2·train` training cells the scale factor
//! `α = N_t (pfa^(-1/N_t) - 1)` gives false-alarm probability `pfa` on
//! i.i.d. exponential (square-law) noise. Cells near an edge take all `N_t`
//! training cells from the side that has room, so `α` stays exact.

use super::{Detection, DetectConfig, PowerCube};
use crate::{Error, Result};

pub fn threshold_factor(n_train: usize, pfa: f64) -> f64 {
    let n = n_train as f64;
    n * (pfa.powf(-1.0 / n) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Window {
    Both,
    Right,
    Left,
}

/// Training-window placement for each cell of a line of length `n`.
fn plan_windows(n: usize, train: usize, guard: usize) -> Result<Vec<Window>> {
    let half = guard + train;
    let full = guard + 2 * train;
    (0..n)
        .map(|i| {
            if i >= half && i + half < n {
                Ok(Window::Both)
            } else if i + full < n {
                Ok(Window::Right)
            } else if i >= full {
                Ok(Window::Left)
            } else {
                Err(Error::Config(format!(
                    "CFAR window (train {train}, guard {guard}) does not fit a range axis of {n} cells"
                )))
            }
        })
        .collect()
}

fn validate(cfg: &DetectConfig) -> Result<()> {
    if cfg.cfar_train < 1 {
        return Err(Error::Config("cfar_train must be at least 1".into()));
    }
    if !(cfg.cfar_pfa > 0.0 && cfg.cfar_pfa < 1.0) {
        return Err(Error::Config("cfar_pfa must lie in (0, 1)".into()));
    }
    Ok(())
}

fn detect_line(line: &[f64], windows: &[Window], train: usize, guard: usize, alpha: f64, out: &mut Vec<usize>) {
    let n_t = (2 * train) as f64;
    for (i, w) in windows.iter().enumerate() {
        let sum: f64 = match w {
            Window::Both => {
                line[i - guard - train..i - guard].iter().sum::<f64>()
                    + line[i + guard + 1..=i + guard + train].iter().sum::<f64>()
            }
            Window::Right => line[i + guard + 1..=i + guard + 2 * train].iter().sum(),
            Window::Left => line[i - guard - 2 * train..i - guard].iter().sum(),
        };
        if line[i] > alpha * (sum / n_t) {
            out.push(i);
        }
    }
}

/// CA-CFAR over one line; returns the flagged cell indices.
pub fn ca_cfar_line(line: &[f64], train: usize, guard: usize, pfa: f64) -> Result<Vec<usize>> {
    validate(&DetectConfig {
        cfar_train: train,
        cfar_guard: guard,
        cfar_pfa: pfa,
        ..DetectConfig::default()
    })?;
    let windows = plan_windows(line.len(), train, guard)?;
    let mut out = Vec::new();
    detect_line(line, &windows, train, guard, threshold_factor(2 * train, pfa), &mut out);
    Ok(out)
}

/// CA-CFAR along range for every (angle, Doppler) slice of the cube.
pub fn cfar_detect(pc: &PowerCube, cfg: &DetectConfig) -> Result<Vec<Detection>> {
    validate(cfg)?;
    let windows = plan_windows(pc.n_range, cfg.cfar_train, cfg.cfar_guard)?;
    let alpha = threshold_factor(2 * cfg.cfar_train, cfg.cfar_pfa);
    let mut hits = Vec::new();
    let mut dets = Vec::new();
    for a in 0..pc.n_angle {
        for d in 0..pc.n_doppler {
            let start = (a * pc.n_doppler + d) * pc.n_range;
            let line = &pc.power[start..start + pc.n_range];
            hits.clear();
            detect_line(line, &windows, cfg.cfar_train, cfg.cfar_guard, alpha, &mut hits);
            dets.extend(hits.iter().map(|&r| Detection {
                angle: a,
                doppler: d,
                range: r,
                power: line[r],
            }));
        }
    }
    Ok(dets)
}

//! Classical object detection on the radar cube.
//!
//! The chain is: FFT processing into a [`PowerCube`], CA-CFAR along range,
//! gates against the cube peak and against each Doppler line's peak, one
//! angle per range-Doppler line, DBSCAN in bin-normalized coordinates, and
//! per-cluster averaging into [`Candidate`]s.

mod cfar;
mod cube;
mod dbscan;

pub use cfar::{ca_cfar_line, cfar_detect, threshold_factor};
pub use cube::{clean_clutter, process_cube, process_cube_with, range_profile, ProcessOptions};
pub use dbscan::{dbscan, NOISE};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::radar::{RadarConfig, RadarCube};
use crate::{Error, Result};

/// Physical coordinates of the processed cube axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeAxes {
    pub range_bin_m: f64,
    pub velocity_bin_mps: f64,
    pub rx_spacing: f64,
    pub n_angle: usize,
    pub n_doppler: usize,
}

impl CubeAxes {
    pub fn new(cfg: &RadarConfig, n_angle: usize) -> Self {
        Self {
            range_bin_m: cfg.range_bin_m(),
            velocity_bin_mps: cfg.velocity_bin_mps(),
            rx_spacing: cfg.rx_spacing,
            n_angle,
            n_doppler: cfg.n_chirps,
        }
    }

    pub fn range_m(&self, bin: usize) -> f64 {
        bin as f64 * self.range_bin_m
    }

    pub fn velocity_mps(&self, bin: usize) -> f64 {
        (bin as f64 - (self.n_doppler / 2) as f64) * self.velocity_bin_mps
    }

    pub fn angle_deg(&self, bin: usize) -> f64 {
        let s = (bin as f64 - (self.n_angle / 2) as f64) / (self.n_angle as f64 * self.rx_spacing);
        s.clamp(-1.0, 1.0).asin().to_degrees()
    }
}

/// Power over angle × Doppler × range bins.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCube {
    pub power: Vec<f64>,
    pub n_angle: usize,
    pub n_doppler: usize,
    pub n_range: usize,
    pub axes: CubeAxes,
}

impl PowerCube {
    #[inline]
    pub fn index(&self, angle: usize, doppler: usize, range: usize) -> usize {
        (angle * self.n_doppler + doppler) * self.n_range + range
    }

    /// (angle, Doppler, range) bins of a flat index.
    pub fn unravel(&self, k: usize) -> (usize, usize, usize) {
        let r = k % self.n_range;
        let d = (k / self.n_range) % self.n_doppler;
        (k / (self.n_range * self.n_doppler), d, r)
    }

    pub fn peak(&self) -> f64 {
        self.power.iter().copied().fold(0.0, f64::max)
    }
}

/// One CFAR hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub angle: usize,
    pub doppler: usize,
    pub range: usize,
    pub power: f64,
}

/// Summary of one detected object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub range_m: f64,
    pub angle_deg: f64,
    pub velocity_mps: f64,
    pub n_points: usize,
    pub power: f64,
}

impl Candidate {
    pub fn new(range_m: f64, angle_deg: f64, velocity_mps: f64) -> Self {
        Self {
            range_m,
            angle_deg,
            velocity_mps,
            n_points: 1,
            power: 1.0,
        }
    }

    pub fn state(&self) -> [f64; 3] {
        [self.range_m, self.angle_deg, self.velocity_mps]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub cfar_train: usize,
    pub cfar_guard: usize,
    pub cfar_pfa: f64,
    /// Neighborhood radius in bins.
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub angle_fft_size: usize,
    /// Detections weaker than the cube peak by more than this are dropped.
    pub dynamic_range_db: f64,
    /// Detections weaker than the strongest cell on their Doppler line (same
    /// angle and range) by more than this are dropped.
    pub doppler_line_db: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            cfar_train: 8,
            cfar_guard: 2,
            cfar_pfa: 1e-3,
            dbscan_eps: 3.0,
            dbscan_min_pts: 2,
            angle_fft_size: 64,
            dynamic_range_db: 40.0,
            doppler_line_db: 20.0,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cfar_train < 1 {
            return Err(Error::Config("cfar_train must be at least 1".into()));
        }
        if !(self.cfar_pfa > 0.0 && self.cfar_pfa < 1.0) {
            return Err(Error::Config("cfar_pfa must lie in (0, 1)".into()));
        }
        if self.dbscan_min_pts < 1 {
            return Err(Error::Config("dbscan_min_pts must be at least 1".into()));
        }
        if !(self.dbscan_eps > 0.0) || !(self.dynamic_range_db > 0.0) || !(self.doppler_line_db > 0.0) {
            return Err(Error::Config(
                "dbscan_eps and the gate levels must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Drops detections more than `dynamic_range_db` below `peak`.
pub fn dynamic_range_gate(dets: Vec<Detection>, peak: f64, dynamic_range_db: f64) -> Vec<Detection> {
    let floor = peak * 10f64.powf(-dynamic_range_db / 10.0);
    dets.into_iter().filter(|d| d.power >= floor).collect()
}

/// Drops detections more than `db` below the strongest cell of their Doppler
/// line. This removes Doppler sidelobes and the zero-Doppler residue that
/// mean removal leaves behind a moving object.
pub fn doppler_line_gate(dets: Vec<Detection>, pc: &PowerCube, db: f64) -> Vec<Detection> {
    let ratio = 10f64.powf(-db / 10.0);
    let mut line_max: HashMap<(usize, usize), f64> = HashMap::new();
    dets.into_iter()
        .filter(|d| {
            let peak = *line_max.entry((d.angle, d.range)).or_insert_with(|| {
                (0..pc.n_doppler)
                    .map(|k| pc.power[pc.index(d.angle, k, d.range)])
                    .fold(0.0, f64::max)
            });
            d.power >= peak * ratio
        })
        .collect()
}

/// Keeps, for every (Doppler, range) line, only the strongest detection across
/// angle. Output keeps the input order of the survivors.
pub fn strongest_angle_per_line(dets: Vec<Detection>) -> Vec<Detection> {
    let mut best: HashMap<(usize, usize), usize> = HashMap::new();
    for (k, d) in dets.iter().enumerate() {
        best.entry((d.doppler, d.range))
            .and_modify(|b| {
                if d.power > dets[*b].power {
                    *b = k;
                }
            })
            .or_insert(k);
    }
    let mut keep = vec![false; dets.len()];
    for k in best.into_values() {
        keep[k] = true;
    }
    dets.into_iter().zip(keep).filter_map(|(d, k)| k.then_some(d)).collect()
}

/// Bin-normalized clustering coordinates (range, angle, Doppler).
pub fn cluster_points(dets: &[Detection]) -> Vec<[f64; 3]> {
    dets.iter()
        .map(|d| [d.range as f64, d.angle as f64, d.doppler as f64])
        .collect()
}

/// Averages each cluster's cells into a candidate; noise is dropped and the
/// result is sorted by descending summed power.
pub fn summarize_clusters(dets: &[Detection], labels: &[i32], pc: &PowerCube) -> Result<Vec<Candidate>> {
    if dets.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: dets.len(),
            actual: labels.len(),
        });
    }
    let n_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    let mut acc = vec![(0.0, 0.0, 0.0, 0usize, 0.0); n_clusters];
    for (d, &l) in dets.iter().zip(labels) {
        if l < 0 {
            continue;
        }
        let a = &mut acc[l as usize];
        a.0 += pc.axes.range_m(d.range);
        a.1 += pc.axes.angle_deg(d.angle);
        a.2 += pc.axes.velocity_mps(d.doppler);
        a.3 += 1;
        a.4 += d.power;
    }
    let mut out: Vec<Candidate> = acc
        .into_iter()
        .filter(|a| a.3 > 0)
        .map(|(r, th, v, n, p)| {
            let k = n as f64;
            Candidate {
                range_m: r / k,
                angle_deg: th / k,
                velocity_mps: v / k,
                n_points: n,
                power: p,
            }
        })
        .collect();
    out.sort_by(|a, b| b.power.total_cmp(&a.power));
    Ok(out)
}

/// Full detection chain from ADC cube to candidate objects.
pub fn detect_objects(cube: &RadarCube, cfg: &DetectConfig) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    let pc = process_cube(cube, cfg.angle_fft_size)?;
    detect_in_power_cube(&pc, cfg)
}

pub fn detect_in_power_cube(pc: &PowerCube, cfg: &DetectConfig) -> Result<Vec<Candidate>> {
    let dets = cfar_detect(pc, cfg)?;
    let dets = dynamic_range_gate(dets, pc.peak(), cfg.dynamic_range_db);
    let dets = doppler_line_gate(dets, pc, cfg.doppler_line_db);
    let dets = strongest_angle_per_line(dets);
    let labels = dbscan(&cluster_points(&dets), cfg.dbscan_eps, cfg.dbscan_min_pts)?;
    summarize_clusters(&dets, &labels, pc)
}

//! Labeled synthetic datasets of drive-through sequences.
//!
//! Each sequence is one pass of the user's car along a road in front of the
//! basestation, sampled at a fixed frame rate and centered near boresight.
//! Frames in which the user is outside the field of view are skipped. Every frame also holds
//! distractor objects: other traffic on the same road, traffic on a farther
//! road and pedestrians on the sidewalks. The radar sees the scene rotated by
//! the radar/comm misalignment and reports angles through a smooth nonlinear
//! distortion.
//!
//! Fast mode turns the ground truth into candidates directly with Gaussian
//! measurement noise. Full mode synthesizes the radar cube of every frame and
//! runs the detection chain, labeling the detected candidate nearest the user.

mod io;
mod split;

pub use io::{load_samples, read_candidates, read_samples, save_samples, write_candidates, write_samples, CandidateRow};
pub use split::{split_by_sequence, DatasetSplit};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::detect::{detect_objects, Candidate, DetectConfig};
use crate::identify::Sample;
use crate::radar::{synthesize_frame, RadarConfig};
use crate::rng::{derive_seed, stream, stream_rng};
use crate::scene::{optimal_beam, sweep_beams, synthesize_channel, CommConfig, SceneObject};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fast,
    Full,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Mode::Fast),
            "full" => Ok(Mode::Full),
            _ => Err(Error::Config(format!("unknown mode '{s}' (valid: fast, full)"))),
        }
    }
}

/// Road layout and object populations. Distances in meters along +y from
/// the basestation, speeds in m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    /// Lane of the user's road driven toward +x, then toward −x.
    pub road_lanes: [f64; 2],
    /// Lanes of the farther road, same direction convention.
    pub far_lanes: [f64; 2],
    pub sidewalks: [f64; 2],
    /// Half-width of the usable field of view in degrees.
    pub fov_deg: f64,
    pub user_speed: [f64; 2],
    pub traffic_speed: [f64; 2],
    pub pedestrian_speed: [f64; 2],
    /// Minimum bumper-to-bumper style gap between the user and other cars on its road.
    pub min_gap_m: f64,
    /// Far-road cars and pedestrians appear within this azimuth of the user.
    pub azimuth_spread_deg: f64,
    /// Relative draw weights of same-road traffic, far-road traffic and pedestrians.
    pub mix: [f64; 3],
    pub car_reflectivity: f64,
    pub pedestrian_reflectivity: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            road_lanes: [20.0, 23.5],
            far_lanes: [32.0, 35.5],
            sidewalks: [16.5, 27.0],
            fov_deg: 60.0,
            user_speed: [4.0, 7.0],
            traffic_speed: [4.0, 12.0],
            pedestrian_speed: [0.5, 1.8],
            min_gap_m: 10.0,
            azimuth_spread_deg: 8.0,
            mix: [0.3, 0.4, 0.3],
            car_reflectivity: 1.0,
            pedestrian_reflectivity: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_sequences: usize,
    pub min_samples_per_sequence: usize,
    pub max_samples_per_sequence: usize,
    pub min_candidates: usize,
    pub max_candidates: usize,
    /// Radar azimuth minus comm azimuth of the same object, degrees.
    pub misalignment_deg: f64,
    /// Standard deviation of the measured radar angle, degrees.
    pub angle_noise_deg: f64,
    /// Amplitude of the radar angle distortion, degrees.
    pub distortion_deg: f64,
    pub range_noise_m: f64,
    pub velocity_noise_mps: f64,
    pub frame_rate_hz: f64,
    pub geometry: Geometry,
    pub comm: CommConfig,
    pub radar: RadarConfig,
    pub detect: DetectConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_sequences: 20,
            min_samples_per_sequence: 90,
            max_samples_per_sequence: 110,
            min_candidates: 1,
            max_candidates: 6,
            misalignment_deg: 5.0,
            angle_noise_deg: 1.5,
            distortion_deg: 3.0,
            range_noise_m: 0.25,
            velocity_noise_mps: 0.15,
            frame_rate_hz: 9.0,
            geometry: Geometry::default(),
            comm: CommConfig::default(),
            radar: RadarConfig::default(),
            detect: DetectConfig::default(),
        }
    }
}

fn ordered(pair: [f64; 2], what: &str) -> Result<()> {
    if !(pair[0] <= pair[1]) {
        return Err(Error::Config(format!("{what}: lower bound exceeds upper bound")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sequences < 1 || self.min_samples_per_sequence < 1 || self.min_candidates < 1 {
            return Err(Error::Config("sequence, sample and candidate counts must be at least 1".into()));
        }
        if self.min_samples_per_sequence > self.max_samples_per_sequence {
            return Err(Error::Config("min_samples_per_sequence exceeds max_samples_per_sequence".into()));
        }
        if self.min_candidates > self.max_candidates {
            return Err(Error::Config("min_candidates exceeds max_candidates".into()));
        }
        for (v, what) in [
            (self.angle_noise_deg, "angle_noise_deg"),
            (self.distortion_deg, "distortion_deg"),
            (self.range_noise_m, "range_noise_m"),
            (self.velocity_noise_mps, "velocity_noise_mps"),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{what} must be non-negative")));
            }
        }
        if !self.misalignment_deg.is_finite() || !(self.frame_rate_hz > 0.0) {
            return Err(Error::Config("misalignment must be finite and frame rate positive".into()));
        }
        let g = &self.geometry;
        if !(g.fov_deg > 0.0 && g.fov_deg < 90.0) {
            return Err(Error::Config("fov_deg must lie in (0, 90)".into()));
        }
        ordered(g.user_speed, "user_speed")?;
        ordered(g.traffic_speed, "traffic_speed")?;
        ordered(g.pedestrian_speed, "pedestrian_speed")?;
        if g.mix.iter().any(|w| !(*w >= 0.0)) || !(g.mix.iter().sum::<f64>() > 0.0) {
            return Err(Error::Config("mix weights must be non-negative with a positive sum".into()));
        }
        if !(g.car_reflectivity > 0.0 && g.pedestrian_reflectivity > 0.0) {
            return Err(Error::Config("reflectivities must be positive".into()));
        }
        if !(g.min_gap_m >= 0.0 && g.azimuth_spread_deg >= 0.0) {
            return Err(Error::Config("min_gap_m and azimuth_spread_deg must be non-negative".into()));
        }
        self.comm.validate()
    }
}

/// Smooth radar angle error: `a + A·sin(3a)`. One full period spans ±60°.
pub fn distort_angle(angle_deg: f64, amplitude_deg: f64) -> f64 {
    angle_deg + amplitude_deg * (3.0 * angle_deg.to_radians()).sin()
}

/// Maps a scene object into the radar frame, whose azimuth is offset by
/// `misalignment_deg`.
pub fn to_radar_frame(obj: &SceneObject, misalignment_deg: f64) -> SceneObject {
    let (s, c) = misalignment_deg.to_radians().sin_cos();
    let rot = |v: [f64; 2]| [v[0] * c + v[1] * s, v[1] * c - v[0] * s];
    SceneObject {
        position: rot(obj.position),
        velocity: rot(obj.velocity),
        ..obj.clone()
    }
}

/// Ground truth of one frame, in the comm frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub sample_id: u64,
    pub sequence_id: u32,
    /// The user first, then the distractors.
    pub objects: Vec<SceneObject>,
    pub beam: usize,
}

#[derive(Debug, Clone, Copy)]
enum Class {
    Traffic,
    FarTraffic,
    Pedestrian,
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn pick_class(rng: &mut ChaCha8Rng, mix: &[f64; 3]) -> Class {
    let u = rng.random::<f64>() * mix.iter().sum::<f64>();
    if u < mix[0] {
        Class::Traffic
    } else if u < mix[0] + mix[1] {
        Class::FarTraffic
    } else {
        Class::Pedestrian
    }
}

/// One distractor near the user, or `None` when no placement inside the
/// field of view was found.
fn draw_distractor(user: &SceneObject, id: u32, g: &Geometry, rng: &mut ChaCha8Rng) -> Option<SceneObject> {
    let user_az = user.azimuth_deg();
    for _ in 0..16 {
        let class = pick_class(rng, &g.mix);
        let lane = rng.random_range(0..2usize);
        let dir = if lane == 0 { 1.0 } else { -1.0 };
        let (position, velocity, reflectivity) = match class {
            Class::Traffic => {
                let x = user.position[0] + sign(rng) * (g.min_gap_m + rng.random_range(0.0..25.0));
                let v = dir * uniform(rng, g.traffic_speed);
                ([x, g.road_lanes[lane]], [v, 0.0], g.car_reflectivity)
            }
            Class::FarTraffic | Class::Pedestrian => {
                let az = user_az + rng.random_range(-1.0..=1.0) * g.azimuth_spread_deg;
                let (y, v, refl) = match class {
                    Class::FarTraffic => (g.far_lanes[lane], dir * uniform(rng, g.traffic_speed), g.car_reflectivity),
                    _ => (g.sidewalks[lane], sign(rng) * uniform(rng, g.pedestrian_speed), g.pedestrian_reflectivity),
                };
                ([y * az.to_radians().tan(), y], [v, 0.0], refl)
            }
        };
        let obj = SceneObject {
            id,
            position,
            velocity,
            reflectivity,
            is_comm_user: false,
        };
        if obj.azimuth_deg().abs() <= g.fov_deg && obj.range() > 0.0 {
            return Some(obj);
        }
    }
    None
}

/// Ground-truth frames of one sequence; sample ids are filled in later.
fn sequence_frames(cfg: &ScenarioConfig, seq: u32) -> Result<Vec<Frame>> {
    let g = &cfg.geometry;
    let mut rng = stream_rng(cfg.seed, stream::SEQUENCE + seq as u64);
    let mut channel_rng = stream_rng(cfg.seed, stream::CHANNEL + seq as u64);
    let codebook = cfg.comm.codebook()?;

    let dir_idx = rng.random_range(0..2usize);
    let dir = if dir_idx == 0 { 1.0 } else { -1.0 };
    let lane_y = g.road_lanes[dir_idx];
    if !(lane_y > 0.0) {
        return Err(Error::Generation(format!(
            "sequence {seq}: road lane at y = {lane_y} m keeps the user outside the field of view"
        )));
    }
    let n = rng.random_range(cfg.min_samples_per_sequence..=cfg.max_samples_per_sequence);
    let speed = uniform(&mut rng, g.user_speed);
    let x_max = lane_y * g.fov_deg.to_radians().tan();
    let center = rng.random_range(-0.15..=0.15) * x_max;

    let mut frames = Vec::with_capacity(n);
    for t in 0..n {
        let x = center + dir * speed * (t as f64 - (n - 1) as f64 / 2.0) / cfg.frame_rate_hz;
        let user = SceneObject {
            id: 0,
            position: [x, lane_y],
            velocity: [dir * speed, 0.0],
            reflectivity: g.car_reflectivity,
            is_comm_user: true,
        };
        let k = rng.random_range(cfg.min_candidates..=cfg.max_candidates);
        if user.azimuth_deg().abs() > g.fov_deg {
            continue;
        }
        let mut objects = vec![user];
        for id in 1..k as u32 {
            if let Some(d) = draw_distractor(&objects[0], id, g, &mut rng) {
                objects.push(d);
            }
        }
        let h = synthesize_channel(&objects, &cfg.comm, &mut channel_rng)?;
        let beam = optimal_beam(&sweep_beams(&h, &codebook, &cfg.comm, &mut channel_rng)?)?;
        frames.push(Frame {
            sample_id: 0,
            sequence_id: seq,
            objects,
            beam,
        });
    }
    if frames.is_empty() {
        return Err(Error::Generation(format!(
            "sequence {seq}: the user never enters the ±{}° field of view",
            g.fov_deg
        )));
    }
    Ok(frames)
}

/// Ground-truth frames of every sequence, with sample ids numbered in
/// sequence order.
pub fn generate_frames(cfg: &ScenarioConfig) -> Result<Vec<Frame>> {
    cfg.validate()?;
    let per_seq = (0..cfg.n_sequences as u32)
        .into_par_iter()
        .map(|s| sequence_frames(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let mut frames: Vec<Frame> = per_seq.into_iter().flatten().collect();
    for (i, f) in frames.iter_mut().enumerate() {
        f.sample_id = i as u64;
    }
    Ok(frames)
}

/// Candidate list for a frame straight from ground truth plus noise. The
/// user's candidate is returned at a random position; its index is the label.
fn measure_fast(frame: &Frame, cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Sample {
    let noise = |sd: f64, rng: &mut ChaCha8Rng| {
        if sd > 0.0 {
            Normal::new(0.0, sd).unwrap().sample(rng)
        } else {
            0.0
        }
    };
    let mut cands: Vec<(bool, Candidate)> = frame
        .objects
        .iter()
        .map(|o| {
            let r = to_radar_frame(o, cfg.misalignment_deg);
            let range = r.range();
            let c = Candidate {
                range_m: (range + noise(cfg.range_noise_m, rng)).max(0.0),
                angle_deg: (distort_angle(r.azimuth_deg(), cfg.distortion_deg) + noise(cfg.angle_noise_deg, rng))
                    .clamp(-90.0, 90.0),
                velocity_mps: r.radial_velocity() + noise(cfg.velocity_noise_mps, rng),
                n_points: 1,
                power: r.reflectivity * (10.0 / range).powi(4),
            };
            (o.is_comm_user, c)
        })
        .collect();
    cands.shuffle(rng);
    Sample {
        sample_id: frame.sample_id,
        sequence_id: frame.sequence_id,
        label: cands.iter().position(|(u, _)| *u).unwrap(),
        candidates: cands.into_iter().map(|(_, c)| c).collect(),
        beam: frame.beam,
    }
}

/// Runs the radar chain on one frame. Returns `None` when no detected
/// candidate lies within two bins of the user on every axis.
pub fn measure_full(frame: &Frame, cfg: &ScenarioConfig) -> Result<Option<Sample>> {
    let radar_scene: Vec<SceneObject> = frame
        .objects
        .iter()
        .map(|o| to_radar_frame(o, cfg.misalignment_deg))
        .collect();
    let noise_seed = derive_seed(cfg.seed, stream::FRAME + frame.sample_id);
    let cube = synthesize_frame(&radar_scene, &cfg.radar, noise_seed)?;
    let mut cands = detect_objects(&cube, &cfg.detect)?;

    let rc = &cfg.radar;
    let na = cfg.detect.angle_fft_size;
    let user = &radar_scene[0];
    let truth = [
        rc.range_to_bin(user.range()),
        rc.angle_to_bin(user.azimuth_deg(), na),
        rc.velocity_to_bin(user.radial_velocity()),
    ];
    let offsets = |c: &Candidate| {
        [
            rc.range_to_bin(c.range_m) - truth[0],
            rc.angle_to_bin(c.angle_deg, na) - truth[1],
            rc.velocity_to_bin(c.velocity_mps) - truth[2],
        ]
    };
    let label = cands
        .iter()
        .enumerate()
        .map(|(k, c)| (k, offsets(c)))
        .filter(|(_, d)| d.iter().all(|v| v.abs() <= 2.0))
        .min_by(|a, b| {
            let n = |d: &[f64; 3]| d.iter().map(|v| v * v).sum::<f64>();
            n(&a.1).total_cmp(&n(&b.1))
        })
        .map(|(k, _)| k);
    let Some(label) = label else {
        return Ok(None);
    };
    for c in &mut cands {
        c.angle_deg = distort_angle(c.angle_deg, cfg.distortion_deg).clamp(-90.0, 90.0);
    }
    Ok(Some(Sample {
        sample_id: frame.sample_id,
        sequence_id: frame.sequence_id,
        candidates: cands,
        beam: frame.beam,
        label,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub n_frames: usize,
    pub n_samples: usize,
    /// Frames dropped in full mode because the user was not detected.
    pub n_dropped: usize,
}

pub fn generate_dataset_with_stats(cfg: &ScenarioConfig, mode: Mode) -> Result<(Vec<Sample>, GenerationStats)> {
    let frames = generate_frames(cfg)?;
    let samples: Vec<Sample> = match mode {
        Mode::Fast => {
            let mut by_seq: Vec<Vec<&Frame>> = vec![Vec::new(); cfg.n_sequences];
            for f in &frames {
                by_seq[f.sequence_id as usize].push(f);
            }
            by_seq
                .par_iter()
                .enumerate()
                .map(|(s, fs)| {
                    let mut rng = stream_rng(cfg.seed, stream::FRAME + s as u64);
                    fs.iter().map(|f| measure_fast(f, cfg, &mut rng)).collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .collect()
        }
        Mode::Full => {
            if frames.iter().any(|f| f.objects[0].range() >= cfg.radar.max_range_m()) {
                return Err(Error::Generation("user lies beyond the radar's maximum range".into()));
            }
            frames
                .par_iter()
                .map(|f| measure_full(f, cfg))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect()
        }
    };
    let stats = GenerationStats {
        n_frames: frames.len(),
        n_samples: samples.len(),
        n_dropped: frames.len() - samples.len(),
    };
    Ok((samples, stats))
}

pub fn generate_dataset(cfg: &ScenarioConfig, mode: Mode) -> Result<Vec<Sample>> {
    Ok(generate_dataset_with_stats(cfg, mode)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n_sequences: 4,
            min_samples_per_sequence: 20,
            max_samples_per_sequence: 30,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn single_candidate_config_labels_zero() {
        let cfg = ScenarioConfig {
            max_candidates: 1,
            ..small()
        };
        let data = generate_dataset(&cfg, Mode::Fast).unwrap();
        assert!(!data.is_empty());
        assert!(data.iter().all(|s| s.candidates.len() == 1 && s.label == 0));
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_dataset(&small(), Mode::Fast).unwrap();
        let b = generate_dataset(&small(), Mode::Fast).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&ScenarioConfig { seed: 1, ..small() }, Mode::Fast).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_scale_and_invariants() {
        let cfg = ScenarioConfig::default();
        let data = generate_dataset(&cfg, Mode::Fast).unwrap();
        // 20 sequences of 90..=110 frames, a few outside the field of view.
        assert!((1600..=2200).contains(&data.len()), "{}", data.len());
        let mut seqs: Vec<u32> = data.iter().map(|s| s.sequence_id).collect();
        seqs.dedup();
        assert_eq!(seqs.len(), 20);
        for s in &data {
            s.validate(cfg.comm.n_beams).unwrap();
            assert!(s.candidates.len() <= cfg.max_candidates);
        }
    }

    #[test]
    fn fast_labels_sit_near_ground_truth() {
        let cfg = ScenarioConfig::default();
        let frames = generate_frames(&cfg).unwrap();
        let data = generate_dataset(&cfg, Mode::Fast).unwrap();
        assert_eq!(frames.len(), data.len());
        for (f, s) in frames.iter().zip(&data) {
            let r = to_radar_frame(&f.objects[0], cfg.misalignment_deg);
            let t = s.target();
            let want = distort_angle(r.azimuth_deg(), cfg.distortion_deg);
            // Six standard deviations on every axis.
            assert!((t.angle_deg - want).abs() < 6.0 * cfg.angle_noise_deg);
            assert!((t.range_m - r.range()).abs() < 6.0 * cfg.range_noise_m);
            assert!((t.velocity_mps - r.radial_velocity()).abs() < 6.0 * cfg.velocity_noise_mps);
        }
    }

    #[test]
    fn noiseless_beam_points_at_user() {
        let cfg = ScenarioConfig::default();
        let cb = cfg.comm.codebook().unwrap();
        for f in generate_frames(&small()).unwrap() {
            let s = f.objects[0].azimuth_deg().to_radians().sin();
            let best = cb
                .pointing_angles
                .iter()
                .map(|a| (a.to_radians().sin() - s).abs())
                .fold(f64::INFINITY, f64::min);
            let got = (cb.pointing_angles[f.beam].to_radians().sin() - s).abs();
            assert!((got - best).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_shifts_azimuth() {
        let o = SceneObject {
            id: 0,
            position: [10.0, 20.0],
            velocity: [3.0, -1.0],
            reflectivity: 1.0,
            is_comm_user: true,
        };
        let r = to_radar_frame(&o, 5.0);
        assert!((r.azimuth_deg() - o.azimuth_deg() - 5.0).abs() < 1e-12);
        assert!((r.range() - o.range()).abs() < 1e-12);
        assert!((r.radial_velocity() - o.radial_velocity()).abs() < 1e-12);
    }

    #[test]
    fn bad_geometry_is_a_generation_error() {
        let mut cfg = small();
        cfg.geometry.road_lanes = [-5.0, -5.0];
        assert!(matches!(generate_dataset(&cfg, Mode::Fast), Err(Error::Generation(_))));
        let bad = ScenarioConfig {
            min_candidates: 3,
            max_candidates: 2,
            ..small()
        };
        assert!(matches!(generate_dataset(&bad, Mode::Fast), Err(Error::Config(_))));
    }

    #[test]
    fn full_mode_labels_detected_user() {
        let mut cfg = ScenarioConfig {
            n_sequences: 2,
            min_samples_per_sequence: 6,
            max_samples_per_sequence: 6,
            max_candidates: 3,
            ..ScenarioConfig::default()
        };
        cfg.radar.n_chirps = 64;
        cfg.radar.n_samples = 256;
        cfg.radar.sample_rate_hz /= 2.0;
        cfg.radar.noise_floor = 1e-9;
        let (data, stats) = generate_dataset_with_stats(&cfg, Mode::Full).unwrap();
        assert_eq!(stats.n_frames, 12);
        assert_eq!(stats.n_samples + stats.n_dropped, 12);
        assert!(stats.n_samples >= 6, "{stats:?}");
        let frames = generate_frames(&cfg).unwrap();
        for s in &data {
            let f = &frames[s.sample_id as usize];
            let r = to_radar_frame(&f.objects[0], cfg.misalignment_deg);
            assert!((s.target().range_m - r.range()).abs() <= 2.0 * cfg.radar.range_bin_m() + 1e-9);
        }
    }
}

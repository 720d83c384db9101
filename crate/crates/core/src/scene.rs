//! Communication side of the scene: ground-truth objects, the MISO geometric
//! channel to the user, the DFT beam codebook and exhaustive beam search.
//!
//! Geometry is 2-D with the basestation at the origin and array boresight
//! along +y. Azimuth is measured from boresight, positive toward +x.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

/// A mobile object in the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    /// Position in meters.
    pub position: [f64; 2],
    /// Velocity in m/s.
    pub velocity: [f64; 2],
    /// Linear radar power gain.
    pub reflectivity: f64,
    pub is_comm_user: bool,
}

impl SceneObject {
    pub fn range(&self) -> f64 {
        self.position[0].hypot(self.position[1])
    }

    /// Azimuth from boresight in degrees.
    pub fn azimuth_deg(&self) -> f64 {
        self.position[0].atan2(self.position[1]).to_degrees()
    }

    /// Radial velocity, positive when closing on the origin.
    pub fn radial_velocity(&self) -> f64 {
        let r = self.range();
        if r == 0.0 {
            return 0.0;
        }
        -(self.velocity[0] * self.position[0] + self.velocity[1] * self.position[1]) / r
    }
}

/// Checks the scene invariants and returns the communication user.
pub fn comm_user(scene: &[SceneObject]) -> Result<&SceneObject> {
    let mut user = None;
    for obj in scene {
        if !(obj.reflectivity > 0.0) {
            return Err(Error::InvalidScene(format!(
                "object {} has non-positive reflectivity",
                obj.id
            )));
        }
        if !(obj.range() > 0.0) {
            return Err(Error::InvalidScene(format!(
                "object {} sits at the array origin",
                obj.id
            )));
        }
        if obj.is_comm_user {
            if user.is_some() {
                return Err(Error::InvalidScene("more than one comm user".into()));
            }
            user = Some(obj);
        }
    }
    user.ok_or_else(|| Error::InvalidScene("no comm user in scene".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommConfig {
    pub n_antennas: usize,
    pub n_beams: usize,
    pub tx_gain: f64,
    pub noise_var: f64,
    pub n_paths: usize,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
}

impl Default for CommConfig {
    fn default() -> Self {
        Self {
            n_antennas: 16,
            n_beams: 64,
            tx_gain: 1.0,
            noise_var: 0.0,
            n_paths: 1,
            element_spacing: 0.5,
        }
    }
}

impl CommConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_antennas < 1 || self.n_beams < 1 || self.n_paths < 1 {
            return Err(Error::Config(
                "antennas, beams and paths must all be at least 1".into(),
            ));
        }
        if !(self.tx_gain > 0.0) {
            return Err(Error::Config("tx_gain must be positive".into()));
        }
        if !(self.noise_var >= 0.0) {
            return Err(Error::Config("noise_var must be non-negative".into()));
        }
        if !(self.element_spacing > 0.0) {
            return Err(Error::Config("element_spacing must be positive".into()));
        }
        Ok(())
    }

    pub fn codebook(&self) -> Result<Codebook> {
        dft_codebook_with_spacing(self.n_antennas, self.n_beams, self.element_spacing)
    }
}

/// Beamforming codebook: unit-norm weight vectors and their pointing angles.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub vectors: Vec<Vec<Complex64>>,
    /// Degrees, strictly increasing.
    pub pointing_angles: Vec<f64>,
}

impl Codebook {
    pub fn n_beams(&self) -> usize {
        self.vectors.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

/// ULA response toward `theta_deg`: element `m` is `exp(j 2π spacing m sin θ)`.
pub fn array_response(theta_deg: f64, n: usize, spacing: f64) -> Result<Vec<Complex64>> {
    if !(-90.0..=90.0).contains(&theta_deg) {
        return Err(Error::Domain(format!(
            "angle {theta_deg}° outside [-90, 90]"
        )));
    }
    let s = theta_deg.to_radians().sin();
    Ok((0..n)
        .map(|m| Complex64::from_polar(1.0, 2.0 * PI * spacing * m as f64 * s))
        .collect())
}

/// DFT codebook at half-wavelength spacing.
pub fn dft_codebook(n: usize, b: usize) -> Result<Codebook> {
    dft_codebook_with_spacing(n, b, 0.5)
}

/// DFT codebook: beam `b` points where `sin φ_b = -1 + 2b/B`, and its weights
/// are the array response at `φ_b` scaled to unit norm.
pub fn dft_codebook_with_spacing(n: usize, b: usize, spacing: f64) -> Result<Codebook> {
    if n == 0 || b == 0 {
        return Err(Error::Config("codebook needs N >= 1 and B >= 1".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let mut vectors = Vec::with_capacity(b);
    let mut pointing_angles = Vec::with_capacity(b);
    for beam in 0..b {
        let sin_phi = -1.0 + 2.0 * beam as f64 / b as f64;
        let phi = sin_phi.asin().to_degrees();
        let v = array_response(phi, n, spacing)?
            .into_iter()
            .map(|a| a * scale)
            .collect();
        vectors.push(v);
        pointing_angles.push(phi);
    }
    Ok(Codebook {
        vectors,
        pointing_angles,
    })
}

/// One term of the geometric channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: Complex64,
    pub angle_deg: f64,
}

/// `h = Σ_p α_p a(θ_p)`.
pub fn channel_from_paths(paths: &[PathComponent], n: usize, spacing: f64) -> Result<Vec<Complex64>> {
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for p in paths {
        for (hm, am) in h.iter_mut().zip(array_response(p.angle_deg, n, spacing)?) {
            *hm += p.gain * am;
        }
    }
    Ok(h)
}

/// Free-space amplitude gain at `range_m`, referenced to unity at 1 m.
pub fn free_space_gain(range_m: f64) -> f64 {
    1.0 / range_m
}

fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))
}

/// Builds the channel from the basestation to the comm user.
///
/// The first path is line of sight with free-space magnitude and a random
/// phase. Further paths bounce off the other scene objects in order, with the
/// free-space loss of the two-leg path and the scatterer's amplitude
/// reflectivity; once scatterers run out, diffuse paths at uniform random
/// angles carry 0.3 of the line-of-sight magnitude.
pub fn synthesize_channel<R: Rng + ?Sized>(
    scene: &[SceneObject],
    cfg: &CommConfig,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    let user = comm_user(scene)?;
    let theta = user.azimuth_deg();
    if !(-90.0..=90.0).contains(&theta) {
        return Err(Error::InvalidScene(format!(
            "comm user behind the array (azimuth {theta:.1}°)"
        )));
    }
    let los = free_space_gain(user.range());
    let mut paths = vec![PathComponent {
        gain: random_phase(rng) * los,
        angle_deg: theta,
    }];
    let mut scatterers = scene
        .iter()
        .filter(|o| !o.is_comm_user && o.azimuth_deg().abs() <= 90.0);
    while paths.len() < cfg.n_paths {
        let path = match scatterers.next() {
            Some(s) => {
                let dx = s.position[0] - user.position[0];
                let dy = s.position[1] - user.position[1];
                let length = s.range() + dx.hypot(dy);
                PathComponent {
                    gain: random_phase(rng) * free_space_gain(length) * s.reflectivity.sqrt(),
                    angle_deg: s.azimuth_deg(),
                }
            }
            None => PathComponent {
                gain: random_phase(rng) * (0.3 * los),
                angle_deg: rng.random_range(-90.0..=90.0),
            },
        };
        paths.push(path);
    }
    channel_from_paths(&paths, cfg.n_antennas, cfg.element_spacing)
}

fn inner(h: &[Complex64], f: &[Complex64]) -> Complex64 {
    h.iter().zip(f).map(|(a, b)| a.conj() * b).sum()
}

/// Per-beam gains `|h^H f_b|²`.
pub fn beam_gains(h: &[Complex64], codebook: &Codebook) -> Result<Vec<f64>> {
    if h.len() != codebook.n_antennas() {
        return Err(Error::DimensionMismatch {
            expected: codebook.n_antennas(),
            actual: h.len(),
        });
    }
    Ok(codebook
        .vectors
        .iter()
        .map(|f| inner(h, f).norm_sqr())
        .collect())
}

/// Measured beam-sweep powers `|√ρ h^H f_b s + n|²` with `s = 1` and
/// `n ~ CN(0, σ²)`. Exact gains scaled by ρ when `σ² = 0`.
pub fn sweep_beams<R: Rng + ?Sized>(
    h: &[Complex64],
    codebook: &Codebook,
    cfg: &CommConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if h.len() != codebook.n_antennas() {
        return Err(Error::DimensionMismatch {
            expected: codebook.n_antennas(),
            actual: h.len(),
        });
    }
    let amp = cfg.tx_gain.sqrt();
    let sigma = (cfg.noise_var / 2.0).sqrt();
    Ok(codebook
        .vectors
        .iter()
        .map(|f| {
            let mut y = inner(h, f) * amp;
            if cfg.noise_var > 0.0 {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                y += Complex64::new(re * sigma, im * sigma);
            }
            y.norm_sqr()
        })
        .collect())
}

/// Argmax of `gains`, ties to the lowest index.
pub fn optimal_beam(gains: &[f64]) -> Result<usize> {
    if gains.is_empty() {
        return Err(Error::Empty("beam gains"));
    }
    let mut best = 0;
    for (b, &g) in gains.iter().enumerate().skip(1) {
        if g > gains[best] {
            best = b;
        }
    }
    Ok(best)
}

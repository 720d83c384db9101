//! FMCW radar frontend: IF signal synthesis into the ADC cube.
//!
//! Each object contributes the dechirped tone of a linear up-chirp with
//! round-trip delay `τ = 2d/c`, a per-chirp Doppler phasor (stop-and-hop) and
//! a per-antenna phasor at its azimuth. The cube is `antennas × chirps × samples`.

use num_complex::{Complex32, Complex64};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::rng::stream_rng;
use crate::scene::SceneObject;
use crate::{Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarConfig {
    pub carrier_hz: f64,
    /// Chirp slope μ in Hz/s.
    pub slope_hz_per_s: f64,
    pub chirp_duration_s: f64,
    pub inter_chirp_wait_s: f64,
    pub n_chirps: usize,
    pub n_samples: usize,
    pub n_rx: usize,
    pub sample_rate_hz: f64,
    /// Receive element spacing in wavelengths.
    pub rx_spacing: f64,
    /// Per-sample complex noise power.
    pub noise_floor: f64,
}

impl Default for RadarConfig {
    /// Long-range profile: μ = 10 MHz/µs, 250 chirps of 512 samples, and a
    /// 16.666 MHz ADC for a 249 m maximum range. A 31 µs chirp sweeps 310 MHz.
    fn default() -> Self {
        Self {
            carrier_hz: 77e9,
            slope_hz_per_s: 10e12,
            chirp_duration_s: 31e-6,
            inter_chirp_wait_s: 12e-6,
            n_chirps: 250,
            n_samples: 512,
            n_rx: 4,
            sample_rate_hz: 16.666e6,
            rx_spacing: 0.5,
            noise_floor: 0.0,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chirps < 1 || self.n_samples < 1 || self.n_rx < 1 {
            return Err(Error::Config("radar counts must be at least 1".into()));
        }
        for (name, v) in [
            ("carrier_hz", self.carrier_hz),
            ("slope_hz_per_s", self.slope_hz_per_s),
            ("chirp_duration_s", self.chirp_duration_s),
            ("sample_rate_hz", self.sample_rate_hz),
            ("rx_spacing", self.rx_spacing),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.inter_chirp_wait_s >= 0.0) || !(self.noise_floor >= 0.0) {
            return Err(Error::Config(
                "inter_chirp_wait_s and noise_floor must be non-negative".into(),
            ));
        }
        let sampling_window = self.n_samples as f64 / self.sample_rate_hz;
        if sampling_window > self.chirp_duration_s * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "sampling window {:.3e} s exceeds chirp duration {:.3e} s",
                sampling_window, self.chirp_duration_s
            )));
        }
        Ok(())
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.slope_hz_per_s * self.chirp_duration_s
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Chirp repetition interval `T_c + T_w`.
    pub fn chirp_interval_s(&self) -> f64 {
        self.chirp_duration_s + self.inter_chirp_wait_s
    }

    /// Range spanned by one range-FFT bin, `c f_s / (2 μ M_s)`.
    pub fn range_bin_m(&self) -> f64 {
        SPEED_OF_LIGHT * self.sample_rate_hz / (2.0 * self.slope_hz_per_s * self.n_samples as f64)
    }

    pub fn max_range_m(&self) -> f64 {
        SPEED_OF_LIGHT * self.sample_rate_hz / (2.0 * self.slope_hz_per_s)
    }

    /// Velocity spanned by one Doppler bin.
    pub fn velocity_bin_mps(&self) -> f64 {
        self.wavelength_m() / (2.0 * self.n_chirps as f64 * self.chirp_interval_s())
    }

    /// Unambiguous radial velocity, `λ / (4 (T_c + T_w))`.
    pub fn max_velocity_mps(&self) -> f64 {
        self.wavelength_m() / (4.0 * self.chirp_interval_s())
    }

    /// Fractional range-FFT bin of a target at `range_m`.
    pub fn range_to_bin(&self, range_m: f64) -> f64 {
        range_m / self.range_bin_m()
    }

    /// Fractional FFT-shifted Doppler bin of radial velocity `v`.
    pub fn velocity_to_bin(&self, v: f64) -> f64 {
        (self.n_chirps / 2) as f64 + v / self.velocity_bin_mps()
    }

    /// Fractional FFT-shifted angle bin for `theta_deg` with an `n_fft`-point angle FFT.
    pub fn angle_to_bin(&self, theta_deg: f64, n_fft: usize) -> f64 {
        (n_fft / 2) as f64 + n_fft as f64 * self.rx_spacing * theta_deg.to_radians().sin()
    }
}

/// Complex ADC samples of one frame, antenna-major then chirp then sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarCube {
    pub data: Vec<Complex64>,
    pub config: RadarConfig,
}

impl RadarCube {
    pub fn zeros(config: &RadarConfig) -> Self {
        let n = config.n_rx * config.n_chirps * config.n_samples;
        Self {
            data: vec![Complex64::new(0.0, 0.0); n],
            config: config.clone(),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.config.n_rx, self.config.n_chirps, self.config.n_samples)
    }

    #[inline]
    pub fn index(&self, antenna: usize, chirp: usize, sample: usize) -> usize {
        (antenna * self.config.n_chirps + chirp) * self.config.n_samples + sample
    }

    pub fn get(&self, antenna: usize, chirp: usize, sample: usize) -> Complex64 {
        self.data[self.index(antenna, chirp, sample)]
    }
}

fn echo_amplitude(obj: &SceneObject) -> f64 {
    // Two-way spreading: received amplitude falls as 1/d².
    let d = obj.range();
    obj.reflectivity.sqrt() / (d * d)
}

/// `exp(j 2π cycles)` with the integer part of `cycles` removed first, which
/// keeps large carrier phases accurate.
fn phasor(cycles: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * (cycles - cycles.floor()))
}

struct ToneFactors {
    amplitude: f64,
    /// Constant phase `f_c τ − μ τ² / 2`, cycles.
    base_cycles: f64,
    /// Beat frequency `μ τ`, Hz.
    beat_hz: f64,
    doppler_hz: f64,
    sin_theta: f64,
}

impl ToneFactors {
    fn new(obj: &SceneObject, cfg: &RadarConfig) -> Result<Self> {
        let d = obj.range();
        if !(d > 0.0) {
            return Err(Error::Domain(format!("object {} has range {d}", obj.id)));
        }
        let tau = 2.0 * d / SPEED_OF_LIGHT;
        let theta = obj.position[0].atan2(obj.position[1]);
        Ok(Self {
            amplitude: echo_amplitude(obj),
            base_cycles: cfg.carrier_hz * tau - 0.5 * cfg.slope_hz_per_s * tau * tau,
            beat_hz: cfg.slope_hz_per_s * tau,
            doppler_hz: 2.0 * obj.radial_velocity() * cfg.carrier_hz / SPEED_OF_LIGHT,
            sin_theta: theta.sin(),
        })
    }
}

/// IF sample of one object at (antenna `m`, chirp `l`, sample `i`).
pub fn if_tone(obj: &SceneObject, cfg: &RadarConfig, m: usize, l: usize, i: usize) -> Result<Complex64> {
    let f = ToneFactors::new(obj, cfg)?;
    let t = i as f64 / cfg.sample_rate_hz;
    let cycles = f.beat_hz * t
        + f.base_cycles
        + f.doppler_hz * l as f64 * cfg.chirp_interval_s()
        + cfg.rx_spacing * m as f64 * f.sin_theta;
    Ok(phasor(cycles) * f.amplitude)
}

/// Adds one object's echo to `cube`. The tone separates into sample, chirp
/// and antenna factors, so the cube is filled as their outer product.
fn add_object(cube: &mut RadarCube, obj: &SceneObject) -> Result<()> {
    let cfg = cube.config.clone();
    let f = ToneFactors::new(obj, &cfg)?;
    let fast: Vec<Complex64> = (0..cfg.n_samples)
        .map(|i| phasor(f.beat_hz * i as f64 / cfg.sample_rate_hz + f.base_cycles) * f.amplitude)
        .collect();
    let slow: Vec<Complex64> = (0..cfg.n_chirps)
        .map(|l| phasor(f.doppler_hz * l as f64 * cfg.chirp_interval_s()))
        .collect();
    let spatial: Vec<Complex64> = (0..cfg.n_rx)
        .map(|m| phasor(cfg.rx_spacing * m as f64 * f.sin_theta))
        .collect();
    for (m, a) in spatial.iter().enumerate() {
        for (l, d) in slow.iter().enumerate() {
            let ad = a * d;
            let start = cube.index(m, l, 0);
            for (x, r) in cube.data[start..start + cfg.n_samples].iter_mut().zip(&fast) {
                *x += ad * r;
            }
        }
    }
    Ok(())
}

/// Synthesizes one frame: the sum of every object's IF tone plus circular
/// complex Gaussian noise of power `noise_floor`. Deterministic in `seed`.
pub fn synthesize_frame(scene: &[SceneObject], cfg: &RadarConfig, seed: u64) -> Result<RadarCube> {
    cfg.validate()?;
    if scene.is_empty() {
        return Err(Error::Empty("radar scene"));
    }
    let mut cube = RadarCube::zeros(cfg);
    for obj in scene {
        add_object(&mut cube, obj)?;
    }
    if cfg.noise_floor > 0.0 {
        let mut rng = stream_rng(seed, 0);
        add_noise(&mut cube.data, cfg.noise_floor, &mut rng);
    }
    Ok(cube)
}

fn add_noise<R: Rng + ?Sized>(data: &mut [Complex64], power: f64, rng: &mut R) {
    let sigma = (power / 2.0).sqrt();
    for x in data {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *x += Complex64::new(re * sigma, im * sigma);
    }
}

const CUBE_MAGIC: &[u8; 4] = b"RCUB";
const CUBE_VERSION: u32 = 1;

/// Writes the cube: `RCUB`, version, `M_a`, `M_c`, `M_s` as little-endian
/// u32, then interleaved little-endian f32 `(re, im)` in storage order.
pub fn write_cube<W: Write>(cube: &RadarCube, mut w: W) -> Result<()> {
    let (ma, mc, ms) = cube.shape();
    w.write_all(CUBE_MAGIC)?;
    for v in [CUBE_VERSION, ma as u32, mc as u32, ms as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(cube.data.len() * 8);
    for x in &cube.data {
        let c = Complex32::new(x.re as f32, x.im as f32);
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a cube written by [`write_cube`]; its shape must match `config`.
pub fn read_cube<R: Read>(mut r: R, config: &RadarConfig) -> Result<RadarCube> {
    let mut header = [0u8; 20];
    r.read_exact(&mut header)
        .map_err(|_| Error::parse(0, "truncated cube header"))?;
    if &header[0..4] != CUBE_MAGIC {
        return Err(Error::parse(0, "bad cube magic"));
    }
    let field = |k: usize| u32::from_le_bytes(header[4 + 4 * k..8 + 4 * k].try_into().unwrap());
    let version = field(0);
    if version != CUBE_VERSION {
        return Err(Error::parse(0, format!("unsupported cube version {version}")));
    }
    let shape = (field(1) as usize, field(2) as usize, field(3) as usize);
    let want = (config.n_rx, config.n_chirps, config.n_samples);
    if shape != want {
        return Err(Error::parse(
            0,
            format!("cube shape {shape:?} does not match configured {want:?}"),
        ));
    }
    let n = shape.0 * shape.1 * shape.2;
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::parse(0, "truncated cube payload"))?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Ok(RadarCube {
        data,
        config: config.clone(),
    })
}

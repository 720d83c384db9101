//! Range, Doppler and angle FFTs with static clutter removal.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use super::PowerCube;
use crate::radar::RadarCube;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessOptions {
    pub angle_fft_size: usize,
    pub clutter_cleaning: bool,
    /// Hann taper on the range and Doppler axes.
    pub window: bool,
}

impl Default for ProcessOptions {
    fn default() -> Self {
        Self {
            angle_fft_size: 64,
            clutter_cleaning: true,
            window: true,
        }
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
        .collect()
}

/// Range FFT of every chirp, in place over antenna × chirp × sample storage.
fn range_fft(data: &mut [Complex64], n_samples: usize, window: bool, planner: &mut FftPlanner<f64>) {
    let fft = planner.plan_fft_forward(n_samples);
    if window {
        let w = hann(n_samples);
        for chirp in data.chunks_exact_mut(n_samples) {
            for (x, wk) in chirp.iter_mut().zip(&w) {
                *x *= wk;
            }
        }
    }
    fft.process(data);
}

/// Subtracts, per (antenna, range bin), the mean across chirps.
pub fn clean_clutter(data: &mut [Complex64], n_rx: usize, n_chirps: usize, n_bins: usize) {
    let scale = 1.0 / n_chirps as f64;
    for m in 0..n_rx {
        let block = &mut data[m * n_chirps * n_bins..(m + 1) * n_chirps * n_bins];
        for r in 0..n_bins {
            let mean: Complex64 = (0..n_chirps).map(|l| block[l * n_bins + r]).sum::<Complex64>() * scale;
            for l in 0..n_chirps {
                block[l * n_bins + r] -= mean;
            }
        }
    }
}

fn fft_shift<T: Copy>(v: &mut [T]) {
    let n = v.len();
    v.rotate_left(n - n / 2);
}

/// Range FFT → clutter cleaning → Doppler FFT (shifted) → zero-padded angle
/// FFT (shifted) → squared magnitude.
pub fn process_cube(cube: &RadarCube, angle_fft_size: usize) -> Result<PowerCube> {
    process_cube_with(
        cube,
        ProcessOptions {
            angle_fft_size,
            ..ProcessOptions::default()
        },
    )
}

pub fn process_cube_with(cube: &RadarCube, opts: ProcessOptions) -> Result<PowerCube> {
    let (ma, mc, ms) = cube.shape();
    if cube.data.len() != ma * mc * ms {
        return Err(Error::DimensionMismatch {
            expected: ma * mc * ms,
            actual: cube.data.len(),
        });
    }
    let na = opts.angle_fft_size;
    if na < ma {
        return Err(Error::Config(format!(
            "angle FFT size {na} smaller than {ma} receive antennas"
        )));
    }
    let mut planner = FftPlanner::new();
    let mut data = cube.data.clone();
    range_fft(&mut data, ms, opts.window, &mut planner);
    if opts.clutter_cleaning {
        clean_clutter(&mut data, ma, mc, ms);
    }

    let doppler = planner.plan_fft_forward(mc);
    let w = if opts.window { hann(mc) } else { vec![1.0; mc] };
    let mut line = vec![Complex64::new(0.0, 0.0); mc];
    for m in 0..ma {
        let block = &mut data[m * mc * ms..(m + 1) * mc * ms];
        for r in 0..ms {
            for l in 0..mc {
                line[l] = block[l * ms + r] * w[l];
            }
            doppler.process(&mut line);
            fft_shift(&mut line);
            for l in 0..mc {
                block[l * ms + r] = line[l];
            }
        }
    }

    let angle = planner.plan_fft_forward(na);
    let mut power = vec![0.0; na * mc * ms];
    let mut buf = vec![Complex64::new(0.0, 0.0); na];
    for d in 0..mc {
        for r in 0..ms {
            buf.fill(Complex64::new(0.0, 0.0));
            for m in 0..ma {
                buf[m] = data[(m * mc + d) * ms + r];
            }
            angle.process(&mut buf);
            fft_shift(&mut buf);
            for (a, v) in buf.iter().enumerate() {
                power[(a * mc + d) * ms + r] = v.norm_sqr();
            }
        }
    }
    Ok(PowerCube {
        power,
        n_angle: na,
        n_doppler: mc,
        n_range: ms,
        axes: super::CubeAxes::new(&cube.config, na),
    })
}

/// Range-FFT power per bin, summed over antennas and chirps (no clutter cleaning).
pub fn range_profile(cube: &RadarCube, window: bool) -> Vec<f64> {
    let (_, _, ms) = cube.shape();
    let mut data = cube.data.clone();
    range_fft(&mut data, ms, window, &mut FftPlanner::new());
    let mut profile = vec![0.0; ms];
    for chirp in data.chunks_exact(ms) {
        for (p, x) in profile.iter_mut().zip(chirp) {
            *p += x.norm_sqr();
        }
    }
    profile
}

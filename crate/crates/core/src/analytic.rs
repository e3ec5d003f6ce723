//! Closed-form and seeded random fields used as initial conditions and as
//! inputs for operator checks.

use crate::grid::{GridSpec, ScalarField, VectorField3};
use crate::spectral::{Spectrum, VectorSpectrum, Wavenumbers};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

/// Arnold–Beltrami–Childress field `(A sin kz + C cos ky, B sin kx + A cos kz,
/// C sin ky + B cos kx)` with `k = 2π/L`; satisfies `curl v = k v`.
pub fn abc_field(grid: GridSpec, a: f64, b: f64, c: f64) -> VectorField3 {
    let k = 2.0 * PI / grid.length();
    VectorField3::from_fn(grid, |x| {
        let (kx, ky, kz) = (k * x[0], k * x[1], k * x[2]);
        [
            a * kz.sin() + c * ky.cos(),
            b * kx.sin() + a * kz.cos(),
            c * ky.sin() + b * kx.cos(),
        ]
    })
}

/// Closed-form ABC value at an arbitrary point (matches [`abc_field`]).
pub fn abc_at(length: f64, a: f64, b: f64, c: f64, x: [f64; 3]) -> [f64; 3] {
    let k = 2.0 * PI / length;
    let (kx, ky, kz) = (k * x[0], k * x[1], k * x[2]);
    [
        a * kz.sin() + c * ky.cos(),
        b * kx.sin() + a * kz.cos(),
        c * ky.sin() + b * kx.cos(),
    ]
}

fn random_spectrum(grid: GridSpec, kmax: usize, rng: &mut ChaCha8Rng) -> Spectrum {
    assert!(kmax < grid.n() / 2, "kmax must stay below Nyquist");
    let wn = Wavenumbers::new(grid);
    let mut spec = Spectrum::zeros(grid);
    let n3 = grid.len() as f64;
    for (idx, m) in wn.modes() {
        let mi = [wn.index[0][m[0]], wn.index[1][m[1]], wn.index[2][m[2]]];
        if mi.iter().any(|v| v.unsigned_abs() as usize > kmax) {
            continue;
        }
        let k2 = (mi[0] * mi[0] + mi[1] * mi[1] + mi[2] * mi[2]) as f64;
        let amp = n3 / (1.0 + k2);
        let re: f64 = rng.gen_range(-1.0..1.0);
        let im: f64 = rng.gen_range(-1.0..1.0);
        spec.data_mut()[idx] = Complex64::new(re, im) * amp;
    }
    spec
}

/// Seeded random real field whose modes satisfy `|m_a| ≤ kmax` on every axis.
pub fn random_band_limited_scalar(grid: GridSpec, kmax: usize, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_spectrum(grid, kmax, &mut rng).to_field()
}

pub fn random_band_limited_vector(grid: GridSpec, kmax: usize, seed: u64) -> VectorField3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VectorSpectrum {
        components: [
            random_spectrum(grid, kmax, &mut rng),
            random_spectrum(grid, kmax, &mut rng),
            random_spectrum(grid, kmax, &mut rng),
        ],
    }
    .to_field()
}

/// Random band-limited, divergence-free, zero-mean vector field.
pub fn random_solenoidal(grid: GridSpec, kmax: usize, seed: u64) -> VectorField3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wn = Wavenumbers::new(grid);
    let mut spec = VectorSpectrum {
        components: [
            random_spectrum(grid, kmax, &mut rng),
            random_spectrum(grid, kmax, &mut rng),
            random_spectrum(grid, kmax, &mut rng),
        ],
    };
    for c in &mut spec.components {
        c.data_mut()[0] = Complex64::new(0.0, 0.0);
    }
    spec.project(&wn);
    spec.to_field()
}

/// Seeded random nonnegative band-limited field: `c + g` with `g` band
/// limited and `c` chosen so the minimum is `floor ≥ 0`.
pub fn random_nonnegative(grid: GridSpec, kmax: usize, seed: u64, floor: f64) -> ScalarField {
    let g = random_band_limited_scalar(grid, kmax, seed);
    let min = g.values().iter().cloned().fold(f64::INFINITY, f64::min);
    g.map(|v| v - min + floor)
}

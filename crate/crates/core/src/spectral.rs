//! Spectral differential operators on periodic grids.
//!
//! First derivatives drop the Nyquist mode on each axis (its derivative is
//! not representable as a real field); the Laplacian keeps it.

use crate::fft::{self, Fft3};
use crate::grid::{GridSpec, ScalarField, VectorField3};
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

/// Half spectrum of a real field, layout as in [`crate::fft`].
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: GridSpec,
    data: Vec<Complex64>,
}

/// Wavenumbers per axis: `derivative[a][m]` is the multiplier for `∂_a`
/// (Nyquist zeroed), `full[a][m]` the signed wavenumber used in `|k|^2`.
#[derive(Clone, Debug)]
pub struct Wavenumbers {
    pub derivative: [Vec<f64>; 3],
    pub full: [Vec<f64>; 3],
    pub index: [Vec<i64>; 3],
}

impl Wavenumbers {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.n();
        let nh = n / 2 + 1;
        let k0 = 2.0 * PI / grid.length();
        let signed = |m: usize| -> i64 {
            if m <= n / 2 {
                m as i64
            } else {
                m as i64 - n as i64
            }
        };
        let axis = |len: usize| -> (Vec<f64>, Vec<f64>, Vec<i64>) {
            let idx: Vec<i64> = (0..len).map(signed).collect();
            let full: Vec<f64> = idx.iter().map(|&m| k0 * m as f64).collect();
            let deriv: Vec<f64> = idx
                .iter()
                .map(|&m| {
                    if m.unsigned_abs() as usize == n / 2 {
                        0.0
                    } else {
                        k0 * m as f64
                    }
                })
                .collect();
            (deriv, full, idx)
        };
        let (dx, fx, ix) = axis(nh);
        let (dy, fy, iy) = axis(n);
        let (dz, fz, iz) = axis(n);
        Self {
            derivative: [dx, dy, dz],
            full: [fx, fy, fz],
            index: [ix, iy, iz],
        }
    }

    /// Iterate `(flat index, [mx, my, mz])` over the half spectrum.
    pub fn modes(&self) -> impl Iterator<Item = (usize, [usize; 3])> + '_ {
        let nh = self.full[0].len();
        let n = self.full[1].len();
        (0..n).flat_map(move |kz| {
            (0..n).flat_map(move |ky| (0..nh).map(move |kx| (kx + nh * (ky + n * kz), [kx, ky, kz])))
        })
    }

    #[inline]
    pub fn k_squared(&self, m: [usize; 3]) -> f64 {
        let (a, b, c) = (self.full[0][m[0]], self.full[1][m[1]], self.full[2][m[2]]);
        a * a + b * b + c * c
    }

    #[inline]
    pub fn k_derivative(&self, m: [usize; 3]) -> [f64; 3] {
        [
            self.derivative[0][m[0]],
            self.derivative[1][m[1]],
            self.derivative[2][m[2]],
        ]
    }

    /// 2/3-rule mask: keep the mode iff `3|m_a| < n` on every axis.
    #[inline]
    pub fn retained(&self, m: [usize; 3]) -> bool {
        let n = self.full[1].len() as i64;
        (0..3).all(|a| 3 * self.index[a][m[a]].abs() < n)
    }
}

fn with_plan<T>(grid: GridSpec, f: impl FnOnce(&Fft3) -> T) -> T {
    let p = fft::plan(grid.n());
    f(&p)
}

impl Spectrum {
    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.n();
        Self {
            grid,
            data: vec![Complex64::new(0.0, 0.0); (n / 2 + 1) * n * n],
        }
    }

    pub fn of(field: &ScalarField) -> Self {
        let grid = field.grid();
        let data = with_plan(grid, |p| p.forward(field.values()));
        Self { grid, data }
    }

    pub fn to_field(&self) -> ScalarField {
        let values = with_plan(self.grid, |p| p.inverse(&self.data));
        ScalarField::from_raw(self.grid, values)
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// `∂_axis` in spectral space.
    pub fn derivative(&self, axis: usize, wn: &Wavenumbers) -> Spectrum {
        let mut out = self.clone();
        for (idx, m) in wn.modes() {
            let k = wn.derivative[axis][m[axis]];
            out.data[idx] = self.data[idx] * Complex64::new(0.0, k);
        }
        out
    }

    pub fn laplacian(&self, wn: &Wavenumbers) -> Spectrum {
        let mut out = self.clone();
        for (idx, m) in wn.modes() {
            out.data[idx] = self.data[idx] * (-wn.k_squared(m));
        }
        out
    }

    /// Zero every mode outside the 2/3 band.
    pub fn dealias(&mut self, wn: &Wavenumbers) {
        for (idx, m) in wn.modes() {
            if !wn.retained(m) {
                self.data[idx] = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Mode-weighted `Σ |c|^2` over the full (Hermitian) spectrum.
    pub fn power(&self) -> f64 {
        let nh = self.grid.n() / 2 + 1;
        let n = self.grid.n();
        let mut acc = 0.0;
        for (idx, c) in self.data.iter().enumerate() {
            let kx = idx % nh;
            let w = if kx == 0 || (kx == nh - 1 && n % 2 == 0) {
                1.0
            } else {
                2.0
            };
            acc += w * c.norm_sqr();
        }
        acc
    }

    /// Evaluate the trigonometric interpolant at an arbitrary point.
    pub fn interpolate(&self, x: [f64; 3], wn: &Wavenumbers) -> f64 {
        let n = self.grid.n();
        let nh = n / 2 + 1;
        let phase = |axis: usize, len: usize| -> Vec<Complex64> {
            (0..len)
                .map(|m| Complex64::from_polar(1.0, wn.full[axis][m] * x[axis]))
                .collect()
        };
        let ex = phase(0, nh);
        let ey = phase(1, n);
        let ez = phase(2, n);
        let mut acc = 0.0;
        for kz in 0..n {
            for ky in 0..n {
                let eyz = ey[ky] * ez[kz];
                let base = nh * (ky + n * kz);
                for kx in 0..nh {
                    let w = if kx == 0 || kx == nh - 1 { 1.0 } else { 2.0 };
                    acc += w * (self.data[base + kx] * ex[kx] * eyz).re;
                }
            }
        }
        acc / (n * n * n) as f64
    }
}

/// Spectra of the three components of a vector field.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorSpectrum {
    pub components: [Spectrum; 3],
}

impl VectorSpectrum {
    pub fn of(v: &VectorField3) -> Self {
        Self {
            components: [
                Spectrum::of(v.component(0)),
                Spectrum::of(v.component(1)),
                Spectrum::of(v.component(2)),
            ],
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            components: [Spectrum::zeros(grid), Spectrum::zeros(grid), Spectrum::zeros(grid)],
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.components[0].grid()
    }

    pub fn to_field(&self) -> VectorField3 {
        VectorField3::from_components([
            self.components[0].to_field(),
            self.components[1].to_field(),
            self.components[2].to_field(),
        ])
    }

    pub fn curl(&self, wn: &Wavenumbers) -> VectorSpectrum {
        let grid = self.grid();
        let mut out = VectorSpectrum::zeros(grid);
        let [a, b, c] = &self.components;
        for (idx, m) in wn.modes() {
            let k = wn.k_derivative(m);
            let i = Complex64::new(0.0, 1.0);
            let (vx, vy, vz) = (a.data[idx], b.data[idx], c.data[idx]);
            out.components[0].data[idx] = i * (vz * k[1] - vy * k[2]);
            out.components[1].data[idx] = i * (vx * k[2] - vz * k[0]);
            out.components[2].data[idx] = i * (vy * k[0] - vx * k[1]);
        }
        out
    }

    pub fn divergence(&self, wn: &Wavenumbers) -> Spectrum {
        let mut out = Spectrum::zeros(self.grid());
        let i = Complex64::new(0.0, 1.0);
        for (idx, m) in wn.modes() {
            let k = wn.k_derivative(m);
            out.data[idx] = i
                * (self.components[0].data[idx] * k[0]
                    + self.components[1].data[idx] * k[1]
                    + self.components[2].data[idx] * k[2]);
        }
        out
    }

    /// Remove the gradient part: `v - k (k·v)/|k|^2` with the derivative
    /// wavenumbers, so the spectral divergence of the result vanishes.
    pub fn project(&mut self, wn: &Wavenumbers) {
        for (idx, m) in wn.modes() {
            let k = wn.k_derivative(m);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                continue;
            }
            let kv = self.components[0].data[idx] * k[0]
                + self.components[1].data[idx] * k[1]
                + self.components[2].data[idx] * k[2];
            for a in 0..3 {
                self.components[a].data[idx] -= kv * (k[a] / k2);
            }
        }
    }

    pub fn dealias(&mut self, wn: &Wavenumbers) {
        for c in &mut self.components {
            c.dealias(wn);
        }
    }
}

pub fn curl(v: &VectorField3) -> VectorField3 {
    let wn = Wavenumbers::new(v.grid());
    VectorSpectrum::of(v).curl(&wn).to_field()
}

pub fn divergence(v: &VectorField3) -> ScalarField {
    let wn = Wavenumbers::new(v.grid());
    VectorSpectrum::of(v).divergence(&wn).to_field()
}

pub fn gradient(s: &ScalarField) -> VectorField3 {
    let wn = Wavenumbers::new(s.grid());
    let spec = Spectrum::of(s);
    VectorField3::from_components([
        spec.derivative(0, &wn).to_field(),
        spec.derivative(1, &wn).to_field(),
        spec.derivative(2, &wn).to_field(),
    ])
}

pub fn laplacian(s: &ScalarField) -> ScalarField {
    let wn = Wavenumbers::new(s.grid());
    Spectrum::of(s).laplacian(&wn).to_field()
}

/// Divergence-free part of `v` (mean mode kept).
pub fn leray_project(v: &VectorField3) -> VectorField3 {
    let wn = Wavenumbers::new(v.grid());
    let mut spec = VectorSpectrum::of(v);
    spec.project(&wn);
    spec.to_field()
}

/// Full velocity-gradient tensor `g[i][j] = ∂_j v_i` from a spectrum.
pub fn gradient_tensor(v: &VectorSpectrum, wn: &Wavenumbers) -> [[ScalarField; 3]; 3] {
    let d = |i: usize, j: usize| v.components[i].derivative(j, wn).to_field();
    [
        [d(0, 0), d(0, 1), d(0, 2)],
        [d(1, 0), d(1, 1), d(1, 2)],
        [d(2, 0), d(2, 1), d(2, 2)],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{abc_field, random_band_limited_scalar, random_band_limited_vector};

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn curl_of_zero_is_zero() {
        let g = grid(16);
        assert_eq!(curl(&VectorField3::zeros(g)).max_abs(), 0.0);
    }

    #[test]
    fn curl_of_sin_x_in_z() {
        let g = grid(16);
        let v = VectorField3::from_fn(g, |x| [0.0, 0.0, x[0].sin()]);
        let c = curl(&v);
        let expect = VectorField3::from_fn(g, |x| [0.0, -x[0].cos(), 0.0]);
        assert!(c.sub(&expect).max_abs() < 1e-12);
    }

    #[test]
    fn abc_field_is_beltrami() {
        let g = grid(32);
        let v = abc_field(g, 1.0, 1.0, 1.0);
        let err = curl(&v).sub(&v).max_abs();
        assert!(err <= 1e-10, "curl(ABC) - ABC = {err}");
    }

    #[test]
    fn divergence_of_sin_x() {
        let g = grid(16);
        let v = VectorField3::from_fn(g, |x| [x[0].sin(), 0.0, 0.0]);
        let d = divergence(&v);
        let expect = ScalarField::from_fn(g, |x| x[0].cos());
        assert!((&d - &expect).max_abs() < 1e-12);
        let c = VectorField3::from_fn(g, |_| [1.0, -2.0, 3.5]);
        assert!(divergence(&c).max_abs() < 1e-13);
    }

    #[test]
    fn gradient_and_laplacian_of_cosine() {
        let g = grid(16);
        let s = ScalarField::from_fn(g, |x| x[0].cos());
        let gr = gradient(&s);
        let expect = VectorField3::from_fn(g, |x| [-x[0].sin(), 0.0, 0.0]);
        assert!(gr.sub(&expect).max_abs() < 1e-12);
        assert!((&laplacian(&s) + &s).max_abs() < 1e-12);
        let c = ScalarField::constant(g, 4.2);
        assert!(gradient(&c).max_abs() < 1e-13);
        assert!(laplacian(&c).max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_equals_div_grad_on_random_fields() {
        let g = grid(32);
        for seed in 0..5 {
            let s = random_band_limited_scalar(g, 10, seed);
            let lap = laplacian(&s);
            let dg = divergence(&gradient(&s));
            let rel = (&lap - &dg).max_abs() / lap.max_abs();
            assert!(rel <= 1e-11, "seed {seed}: {rel}");
        }
    }

    #[test]
    fn div_curl_and_curl_grad_vanish() {
        let g = grid(32);
        for seed in 0..5 {
            let v = random_band_limited_vector(g, 10, seed);
            let c = curl(&v);
            let scale = gradient_tensor(&VectorSpectrum::of(&c), &Wavenumbers::new(g))
                .iter()
                .flatten()
                .map(ScalarField::max_abs)
                .fold(0.0, f64::max);
            assert!(divergence(&c).max_abs() <= 1e-12 * scale);
            let s = random_band_limited_scalar(g, 10, seed + 100);
            let gs = gradient(&s);
            assert!(curl(&gs).max_abs() <= 1e-11 * gs.max_abs() * 10.0);
        }
    }

    #[test]
    fn projection_removes_gradients_and_is_idempotent() {
        let g = grid(32);
        let s = random_band_limited_scalar(g, 8, 7);
        let s_mean = s.integrate() / g.length().powi(3);
        let s = s.map(|v| v - s_mean);
        let p = leray_project(&gradient(&s));
        assert!(p.max_abs() <= 1e-12 * gradient(&s).max_abs());

        let v = random_band_limited_vector(g, 8, 3);
        let p1 = leray_project(&v);
        let p2 = leray_project(&p1);
        assert!(p2.sub(&p1).max_abs() <= 1e-12 * p1.max_abs());
        assert!(divergence(&p1).max_abs() <= 1e-12 * v.max_abs() * 10.0);

        let free = curl(&v);
        let pf = leray_project(&free);
        assert!(pf.sub(&free).max_abs() <= 1e-12 * free.max_abs());
    }

    #[test]
    fn projection_keeps_mean_mode() {
        let g = grid(16);
        let v = VectorField3::from_fn(g, |x| [1.0 + x[1].sin(), 2.0, x[0].cos()]);
        let p = leray_project(&v);
        let mean = p.component(0).integrate() / g.length().powi(3);
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_interpolation_is_exact_for_band_limited_fields() {
        let g = grid(16);
        let s = ScalarField::from_fn(g, |x| (x[0] + 2.0 * x[1]).sin() + (3.0 * x[2]).cos());
        let wn = Wavenumbers::new(g);
        let spec = Spectrum::of(&s);
        for p in [[0.3_f64, 1.7, 2.9], [5.1, 0.01, 4.4]] {
            let exact = (p[0] + 2.0 * p[1]).sin() + (3.0 * p[2]).cos();
            assert!((spec.interpolate(p, &wn) - exact).abs() < 1e-12);
        }
    }
}

//! Real-to-complex 3D FFT on cubic grids.
//!
//! The half spectrum is stored with `kx` fastest: index
//! `kx + nh * (ky + n * kz)` with `nh = n/2 + 1`. Only `kx ∈ [0, n/2]` is kept;
//! the remaining modes follow from conjugate symmetry.

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

pub struct Fft3 {
    n: usize,
    nh: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<Fft3>>> = RefCell::new(HashMap::new());
}

/// Cached plan for an `n^3` grid (per thread).
pub fn plan(n: usize) -> Rc<Fft3> {
    PLANS.with(|p| p.borrow_mut().entry(n).or_insert_with(|| Rc::new(Fft3::new(n))).clone())
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut real = RealFftPlanner::<f64>::new();
        let mut cplx = FftPlanner::<f64>::new();
        Self {
            n,
            nh: n / 2 + 1,
            r2c: real.plan_fft_forward(n),
            c2r: real.plan_fft_inverse(n),
            forward: cplx.plan_fft_forward(n),
            inverse: cplx.plan_fft_inverse(n),
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half(&self) -> usize {
        self.nh
    }

    #[inline]
    pub fn spectral_len(&self) -> usize {
        self.nh * self.n * self.n
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, real: &[f64]) -> Vec<Complex64> {
        let (n, nh) = (self.n, self.nh);
        assert_eq!(real.len(), n * n * n);
        let mut out = vec![Complex64::new(0.0, 0.0); self.spectral_len()];
        let mut row = self.r2c.make_input_vec();
        let mut scratch = self.r2c.make_scratch_vec();
        for r in 0..n * n {
            row.copy_from_slice(&real[r * n..(r + 1) * n]);
            self.r2c
                .process_with_scratch(&mut row, &mut out[r * nh..(r + 1) * nh], &mut scratch)
                .expect("r2c length mismatch");
        }
        self.transform_yz(&mut out, &*self.forward, true);
        out
    }

    /// Inverse transform normalized by `1/n^3`. The input is taken as the
    /// half spectrum of a real field; imaginary parts of the self-conjugate
    /// `kx = 0, n/2` columns are discarded.
    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        let (n, nh) = (self.n, self.nh);
        assert_eq!(spec.len(), self.spectral_len());
        let mut work = spec.to_vec();
        self.transform_yz(&mut work, &*self.inverse, false);
        let mut out = vec![0.0; n * n * n];
        let mut scratch = self.c2r.make_scratch_vec();
        let norm = 1.0 / (n * n * n) as f64;
        for r in 0..n * n {
            let row = &mut work[r * nh..(r + 1) * nh];
            row[0].im = 0.0;
            row[nh - 1].im = 0.0;
            let dst = &mut out[r * n..(r + 1) * n];
            self.c2r
                .process_with_scratch(row, dst, &mut scratch)
                .expect("c2r length mismatch");
            for v in dst.iter_mut() {
                *v *= norm;
            }
        }
        out
    }

    /// Complex transforms along y then z (forward) or z then y (inverse).
    fn transform_yz(&self, data: &mut [Complex64], fft: &dyn Fft<f64>, forward: bool) {
        if forward {
            self.along_y(data, fft);
            self.along_z(data, fft);
        } else {
            self.along_z(data, fft);
            self.along_y(data, fft);
        }
    }

    fn along_y(&self, data: &mut [Complex64], fft: &dyn Fft<f64>) {
        let (n, nh) = (self.n, self.nh);
        let plane = nh * n;
        let mut tmp = vec![Complex64::new(0.0, 0.0); plane];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for p in data.chunks_exact_mut(plane) {
            for ky in 0..n {
                for kx in 0..nh {
                    tmp[kx * n + ky] = p[kx + nh * ky];
                }
            }
            fft.process_with_scratch(&mut tmp, &mut scratch);
            for ky in 0..n {
                for kx in 0..nh {
                    p[kx + nh * ky] = tmp[kx * n + ky];
                }
            }
        }
    }

    fn along_z(&self, data: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.n;
        let m = self.nh * n;
        let mut tmp = vec![Complex64::new(0.0, 0.0); data.len()];
        for kz in 0..n {
            let src = &data[kz * m..(kz + 1) * m];
            for (r, v) in src.iter().enumerate() {
                tmp[r * n + kz] = *v;
            }
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(&mut tmp, &mut scratch);
        for kz in 0..n {
            let dst = &mut data[kz * m..(kz + 1) * m];
            for (r, v) in dst.iter_mut().enumerate() {
                *v = tmp[r * n + kz];
            }
        }
    }
}

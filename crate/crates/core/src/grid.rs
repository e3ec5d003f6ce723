//! Periodic uniform grids and the scalar/vector fields that live on them.
//!
//! Storage is x-fastest: the value at lattice index `(i, j, k)` sits at
//! `i + n * (j + n * k)`, with coordinates `x = i * dx` and so on.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// Uniform periodic lattice with `n` cells per axis on a cube of edge `length`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    length: f64,
}

impl GridSpec {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "cells per axis must be even and at least 8, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "domain length must be positive and finite, got {length}"
            )));
        }
        Ok(Self { n, length })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Volume of one grid cell, the quadrature weight.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        let dx = self.dx();
        dx * dx * dx
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    /// Flat index of a lattice point given possibly out-of-range integer
    /// coordinates, wrapped periodically.
    #[inline]
    pub fn wrapped_index(&self, i: i64, j: i64, k: i64) -> usize {
        let n = self.n as i64;
        self.index(
            i.rem_euclid(n) as usize,
            j.rem_euclid(n) as usize,
            k.rem_euclid(n) as usize,
        )
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        let dx = self.dx();
        [
            (idx % n) as f64 * dx,
            ((idx / n) % n) as f64 * dx,
            (idx / (n * n)) as f64 * dx,
        ]
    }

    /// Minimum-image displacement `x - origin` on the torus.
    #[inline]
    pub fn displacement(&self, x: [f64; 3], origin: [f64; 3]) -> [f64; 3] {
        let l = self.length;
        let mut d = [0.0; 3];
        for a in 0..3 {
            let mut t = x[a] - origin[a];
            t -= l * (t / l).round();
            d[a] = t;
        }
        d
    }

    /// Wrap a point into `[0, L)^3`.
    pub fn wrap(&self, x: [f64; 3]) -> [f64; 3] {
        let l = self.length;
        [x[0].rem_euclid(l), x[1].rem_euclid(l), x[2].rem_euclid(l)]
    }
}

/// Deterministic pairwise (cascade) summation.
///
/// The split points depend only on the slice length, so the result is
/// bitwise reproducible for a given input ordering.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Real scalar field on a periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("scalar field value at index {pos}")));
        }
        Ok(Self { grid, values })
    }

    /// Sample a closed-form function at every grid point.
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.coords(idx))).collect();
        Self { grid, values }
    }

    /// Construct without the finiteness scan; for values produced by the
    /// spectral operators from finite inputs.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Riemann sum `dx^3 * sum(values)`, exact for trigonometric polynomials
    /// below the Nyquist band.
    pub fn integrate(&self) -> f64 {
        self.grid.cell_volume() * pairwise_sum(&self.values)
    }

    /// `∫ self * other dx`.
    pub fn integrate_product(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let prod: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        self.grid.cell_volume() * pairwise_sum(&prod)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// `self += weight * other`.
    pub fn add_scaled(&mut self, weight: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += weight * b;
        }
    }
}

impl Add<&ScalarField> for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub<&ScalarField> for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.map(|a| a * rhs)
    }
}

/// Three scalar components on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField3 {
    components: [ScalarField; 3],
}

impl VectorField3 {
    pub fn new(x: ScalarField, y: ScalarField, z: ScalarField) -> Result<Self> {
        if x.grid() != y.grid() || x.grid() != z.grid() {
            return Err(Error::InvalidGrid("vector components must share one grid".into()));
        }
        Ok(Self { components: [x, y, z] })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            components: [
                ScalarField::zeros(grid),
                ScalarField::zeros(grid),
                ScalarField::zeros(grid),
            ],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        for idx in 0..grid.len() {
            let v = f(grid.coords(idx));
            for (c, val) in out.components.iter_mut().zip(v) {
                c.values[idx] = val;
            }
        }
        out
    }

    pub(crate) fn from_components(components: [ScalarField; 3]) -> Self {
        Self { components }
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.components[0].grid()
    }

    #[inline]
    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    #[inline]
    pub fn component_mut(&mut self, axis: usize) -> &mut ScalarField {
        &mut self.components[axis]
    }

    pub fn components(&self) -> &[ScalarField; 3] {
        &self.components
    }

    pub fn into_components(self) -> [ScalarField; 3] {
        self.components
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [f64; 3] {
        [
            self.components[0].values[idx],
            self.components[1].values[idx],
            self.components[2].values[idx],
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(ScalarField::max_abs).fold(0.0, f64::max)
    }

    /// Largest pointwise Euclidean magnitude.
    pub fn max_norm(&self) -> f64 {
        (0..self.grid().len()).map(|i| norm(self.at(i))).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(ScalarField::is_finite)
    }

    /// Pointwise `|v|^2`.
    pub fn norm_squared(&self) -> ScalarField {
        let grid = self.grid();
        let values = (0..grid.len())
            .map(|i| {
                let v = self.at(i);
                dot(v, v)
            })
            .collect();
        ScalarField::from_raw(grid, values)
    }

    /// Pointwise dot product.
    pub fn dot(&self, other: &VectorField3) -> ScalarField {
        let grid = self.grid();
        let values = (0..grid.len()).map(|i| dot(self.at(i), other.at(i))).collect();
        ScalarField::from_raw(grid, values)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            components: [
                &self.components[0] * s,
                &self.components[1] * s,
                &self.components[2] * s,
            ],
        }
    }

    pub fn add(&self, other: &VectorField3) -> Self {
        Self {
            components: [
                &self.components[0] + &other.components[0],
                &self.components[1] + &other.components[1],
                &self.components[2] + &other.components[2],
            ],
        }
    }

    pub fn sub(&self, other: &VectorField3) -> Self {
        Self {
            components: [
                &self.components[0] - &other.components[0],
                &self.components[1] - &other.components[1],
                &self.components[2] - &other.components[2],
            ],
        }
    }

    /// `½ ∫ |v|^2 dx`.
    pub fn energy(&self) -> f64 {
        0.5 * self.norm_squared().integrate()
    }
}

#[inline]
pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn box32() -> GridSpec {
        GridSpec::new(32, 2.0 * PI).unwrap()
    }

    #[test]
    fn rejects_odd_or_small_grids() {
        assert!(GridSpec::new(7, 1.0).is_err());
        assert!(GridSpec::new(9, 1.0).is_err());
        assert!(GridSpec::new(6, 1.0).is_err());
        assert!(GridSpec::new(16, 0.0).is_err());
        assert!(GridSpec::new(16, f64::NAN).is_err());
    }

    #[test]
    fn integrate_constant_is_box_volume() {
        let g = box32();
        let s = ScalarField::constant(g, 1.0);
        let vol = (2.0 * PI).powi(3);
        assert!((s.integrate() - vol).abs() < 1e-10 * vol);
    }

    #[test]
    fn integrate_sine_vanishes() {
        let g = box32();
        let s = ScalarField::from_fn(g, |x| x[0].sin());
        assert!(s.integrate().abs() < 1e-12);
    }

    #[test]
    fn integrate_sin_squared_is_half_volume() {
        let g = box32();
        let s = ScalarField::from_fn(g, |x| x[0].sin().powi(2));
        let half = 0.5 * (2.0 * PI).powi(3);
        assert!((s.integrate() - half).abs() < 1e-10 * half);
    }

    #[test]
    fn from_values_rejects_nan() {
        let g = GridSpec::new(8, 1.0).unwrap();
        let mut v = vec![0.0; g.len()];
        v[3] = f64::NAN;
        assert!(matches!(ScalarField::from_values(g, v), Err(Error::NonFinite(_))));
    }

    #[test]
    fn displacement_is_minimum_image() {
        let g = GridSpec::new(8, 10.0).unwrap();
        let d = g.displacement([9.5, 0.5, 5.0], [0.5, 9.5, 0.0]);
        assert!((d[0] + 1.0).abs() < 1e-12);
        assert!((d[1] - 1.0).abs() < 1e-12);
        assert!((d[2].abs() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_is_reproducible() {
        let v: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 1000) as f64 * 1e-3).collect();
        let a = pairwise_sum(&v);
        let b = pairwise_sum(&v);
        assert_eq!(a.to_bits(), b.to_bits());
        let naive: f64 = v.iter().sum();
        assert!((a - naive).abs() < 1e-9);
    }
}

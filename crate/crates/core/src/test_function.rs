//! Refined spatial test functions, their lattice windows, and the temporal
//! cutoff.
//!
//! A test function is a base profile (normally the radial smoothstep
//! `S_q(2 - r/R)`) multiplied by zero or more lattice windows `h_p`. All
//! derivatives are closed form, carried as [`Jet`]s.

use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, GridSpec, ScalarField};
use crate::profile::{Jet, Jet1, Smoothstep};

/// Default smoothstep order for the temporal cutoff.
pub const DEFAULT_TIME_ORDER: u32 = 4;

fn min_image(d: f64, length: f64) -> f64 {
    d - length * (d / length).round()
}

fn min_image3(x: [f64; 3], origin: [f64; 3], length: f64) -> [f64; 3] {
    [
        min_image(x[0] - origin[0], length),
        min_image(x[1] - origin[1], length),
        min_image(x[2] - origin[2], length),
    ]
}

fn wrap(x: f64, length: f64) -> f64 {
    let w = x.rem_euclid(length);
    if w >= length {
        0.0
    } else {
        w
    }
}

/// One factor `h_p = g_p / Σ_q g_q` of the lattice partition of unity.
///
/// `g_p` is the product over axes of the plateau `w(t) = S_q(2 - |t|/R')`,
/// translated to the lattice point `anchor + offset + 2R'p`. Local
/// coordinates are minimum-image displacements from `anchor`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeWindow {
    pub anchor: [f64; 3],
    pub offset: [f64; 3],
    pub r_prime: f64,
    pub index: [i64; 3],
    pub profile: Smoothstep,
}

impl LatticeWindow {
    fn plateau(&self, t: f64) -> Jet1 {
        let a = t.abs();
        let s = 2.0 - a / self.r_prime;
        Jet1 {
            v: self.profile.value(s),
            d1: -t.signum() * self.profile.d1(s) / self.r_prime,
            d2: self.profile.d2(s) / (self.r_prime * self.r_prime),
        }
    }

    /// `W(t) = Σ_m w(t - 2R'm)`, which lies in `[1, 2]`.
    pub fn periodized(&self, t: f64) -> Jet1 {
        let step = 2.0 * self.r_prime;
        let lo = ((t - step) / step).floor() as i64;
        let hi = ((t + step) / step).ceil() as i64;
        (lo..=hi).fold(Jet1::constant(0.0), |acc, m| acc + self.plateau(t - step * m as f64))
    }

    fn local(&self, x: [f64; 3], length: f64) -> [f64; 3] {
        let d = min_image3(x, self.anchor, length);
        [d[0] - self.offset[0], d[1] - self.offset[1], d[2] - self.offset[2]]
    }

    /// Lattice-point coordinate (local frame) along each axis.
    pub fn local_center(&self) -> [f64; 3] {
        let step = 2.0 * self.r_prime;
        [
            step * self.index[0] as f64,
            step * self.index[1] as f64,
            step * self.index[2] as f64,
        ]
    }

    pub fn center(&self, length: f64) -> [f64; 3] {
        let c = self.local_center();
        [
            wrap(self.anchor[0] + self.offset[0] + c[0], length),
            wrap(self.anchor[1] + self.offset[1] + c[1], length),
            wrap(self.anchor[2] + self.offset[2] + c[2], length),
        ]
    }

    pub fn eval(&self, x: [f64; 3], length: f64) -> Jet {
        let t = self.local(x, length);
        let c = self.local_center();
        let mut f = [Jet1::constant(0.0); 3];
        for a in 0..3 {
            let g = self.plateau(t[a] - c[a]);
            if g.v == 0.0 {
                return Jet::ZERO;
            }
            f[a] = g.div(self.periodized(t[a]));
        }
        Jet::separable(f)
    }
}

/// Base factor of a test function.
#[derive(Clone, Debug, PartialEq)]
pub enum Base {
    /// Identically zero.
    Zero,
    /// Identically one; has no compact support and never passes verification.
    Constant,
    /// `S_q(2 - |x - center|/radius)^power`.
    Radial {
        center: [f64; 3],
        radius: f64,
        profile: Smoothstep,
        power: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    center: [f64; 3],
    scale: f64,
    rho: f64,
    c0: f64,
    length: f64,
    base: Base,
    windows: Vec<LatticeWindow>,
}

/// Nonzero grid samples of a test function: flat indices and jets.
#[derive(Clone, Debug, Default)]
pub struct Samples {
    pub idx: Vec<usize>,
    pub jets: Vec<Jet>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    /// `∫ f ψ dx` restricted to the samples, in a fixed order.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        let v = f.values();
        let terms: Vec<f64> = self.idx.iter().zip(&self.jets).map(|(&i, j)| v[i] * j.v).collect();
        pairwise_sum(&terms) * f.grid().cell_volume()
    }

    /// `∫ g(i, jet) dx` for an arbitrary pointwise integrand.
    pub fn integrate_with(&self, grid: GridSpec, g: impl Fn(usize, &Jet) -> f64) -> f64 {
        let terms: Vec<f64> = self.idx.iter().zip(&self.jets).map(|(&i, j)| g(i, j)).collect();
        pairwise_sum(&terms) * grid.cell_volume()
    }
}

/// Measured refined-bound constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundsReport {
    /// `sup R|∇ψ|/ψ^rho`.
    pub grad: f64,
    /// `sup R^2|Δψ|/ψ^(2rho-1)`.
    pub lap: f64,
    /// Largest distance from the nominal center to the support.
    pub support_radius: f64,
    /// `2R` for radial functions, `2√3 R` for lattice pieces (cube corners).
    pub allowed_support_radius: f64,
    pub ok: bool,
}

impl BoundsReport {
    pub fn constant(&self) -> f64 {
        self.grad.max(self.lap)
    }
}

impl TestFunction {
    pub fn zero(length: f64, rho: f64, c0: f64) -> Self {
        Self {
            center: [0.0; 3],
            scale: 1.0,
            rho,
            c0,
            length,
            base: Base::Zero,
            windows: Vec::new(),
        }
    }

    /// The constant function 1 labelled with a scale; used to exercise the
    /// support check.
    pub fn constant_one(scale: f64, length: f64, rho: f64, c0: f64) -> Self {
        Self {
            center: [0.0; 3],
            scale,
            rho,
            c0,
            length,
            base: Base::Constant,
            windows: Vec::new(),
        }
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn base(&self) -> &Base {
        &self.base
    }

    pub fn windows(&self) -> &[LatticeWindow] {
        &self.windows
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.base, Base::Zero)
    }

    pub fn profile_order(&self) -> Option<u32> {
        match &self.base {
            Base::Radial { profile, .. } => Some(profile.order()),
            _ => None,
        }
    }

    /// Same function raised to `power`; bound constants must be re-measured.
    pub fn powf(&self, power: f64) -> Self {
        let mut out = self.clone();
        if let Base::Radial { power: p, .. } = &mut out.base {
            *p *= power;
        }
        out
    }

    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    /// Multiply by a lattice window; the result is a piece at scale `R'`
    /// centered on the lattice point.
    pub fn windowed(&self, window: LatticeWindow, c0: f64) -> Self {
        let mut out = self.clone();
        out.center = window.center(self.length);
        out.scale = window.r_prime;
        out.c0 = c0;
        out.windows.push(window);
        out
    }

    pub fn eval(&self, x: [f64; 3]) -> Jet {
        let mut jet = match &self.base {
            Base::Zero => return Jet::ZERO,
            Base::Constant => Jet::constant(1.0),
            Base::Radial {
                center,
                radius,
                profile,
                power,
            } => {
                let y = min_image3(x, *center, self.length);
                let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
                let s = 2.0 - r / radius;
                if s <= 0.0 {
                    return Jet::ZERO;
                }
                let base = if s >= 1.0 {
                    Jet::constant(1.0)
                } else {
                    let (d1, d2) = (profile.d1(s), profile.d2(s));
                    Jet {
                        v: profile.value(s),
                        g: y.map(|c| -d1 / radius * c / r),
                        l: d2 / (radius * radius) - 2.0 * d1 / (r * radius),
                    }
                };
                base.powf(*power)
            }
        };
        for w in &self.windows {
            if jet.v == 0.0 {
                return Jet::ZERO;
            }
            jet = jet * w.eval(x, self.length);
        }
        jet
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        self.eval(x).v
    }

    /// Per-axis closed interval (unwrapped coordinates) containing the support.
    pub fn support_box(&self) -> Option<[[f64; 2]; 3]> {
        let (c, r) = match &self.base {
            Base::Zero => return None,
            Base::Constant => {
                return Some([[0.0, self.length]; 3]);
            }
            Base::Radial { center, radius, .. } => (*center, 2.0 * radius),
        };
        let mut bx = [[c[0] - r, c[0] + r], [c[1] - r, c[1] + r], [c[2] - r, c[2] + r]];
        for w in &self.windows {
            // lattice point relative to `c`, unwrapped
            let a0 = min_image3(w.anchor, c, self.length);
            let lc = w.local_center();
            let d: [f64; 3] = std::array::from_fn(|a| a0[a] + w.offset[a] + lc[a]);
            let h = 2.0 * w.r_prime;
            for a in 0..3 {
                bx[a][0] = bx[a][0].max(c[a] + d[a] - h);
                bx[a][1] = bx[a][1].min(c[a] + d[a] + h);
                if bx[a][0] >= bx[a][1] {
                    return None;
                }
            }
        }
        Some(bx)
    }

    /// Upper bound on the distance from `center` to the support.
    pub fn support_radius(&self) -> f64 {
        match &self.base {
            Base::Zero => 0.0,
            Base::Constant => f64::INFINITY,
            Base::Radial { center, radius, .. } => {
                let d = min_image3(*center, self.center, self.length);
                let mut r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() + 2.0 * radius;
                if let Some(bx) = self.support_box() {
                    let mut far = 0.0;
                    for a in 0..3 {
                        let lo = min_image(bx[a][0] - self.center[a], self.length);
                        let hi = lo + (bx[a][1] - bx[a][0]);
                        far += lo.abs().max(hi.abs()).powi(2);
                    }
                    r = r.min(far.sqrt());
                }
                r
            }
        }
    }

    pub fn allowed_support_radius(&self) -> f64 {
        if self.windows.is_empty() {
            2.0 * self.scale
        } else {
            2.0 * 3f64.sqrt() * self.scale
        }
    }

    /// Grid points (flat indices, x-fastest traversal of the support box)
    /// with nonzero value.
    pub fn sample(&self, grid: GridSpec) -> Samples {
        let mut out = Samples::default();
        let Some(bx) = self.support_box() else {
            return out;
        };
        let dx = grid.dx();
        let n = grid.n() as i64;
        let range = |a: usize| -> (i64, i64) {
            let lo = (bx[a][0] / dx).ceil() as i64;
            let hi = (bx[a][1] / dx).floor() as i64;
            (lo, hi.min(lo + n - 1))
        };
        let (rx, ry, rz) = (range(0), range(1), range(2));
        for k in rz.0..=rz.1 {
            for j in ry.0..=ry.1 {
                for i in rx.0..=rx.1 {
                    let idx = grid.wrapped_index(i, j, k);
                    let jet = self.eval(grid.coords(idx));
                    if jet.v > 0.0 {
                        out.idx.push(idx);
                        out.jets.push(jet);
                    }
                }
            }
        }
        out
    }

    /// Values on the full grid.
    pub fn to_field(&self, grid: GridSpec) -> ScalarField {
        let mut f = ScalarField::zeros(grid);
        let s = self.sample(grid);
        let v = f.values_mut();
        for (&i, j) in s.idx.iter().zip(&s.jets) {
            v[i] = j.v;
        }
        f
    }

    /// `∫ f ψ dx` on the grid.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        self.sample(f.grid()).integrate(f)
    }

    fn ratios(&self, jet: &Jet) -> (f64, f64) {
        let r = self.scale;
        let g = r * jet.grad_norm() / jet.v.powf(self.rho);
        let l = r * r * jet.l.abs() / jet.v.powf(2.0 * self.rho - 1.0);
        (g, l)
    }

    /// Bound constants measured at the given samples.
    pub fn constants_at(&self, samples: &Samples) -> (f64, f64) {
        samples
            .jets
            .iter()
            .map(|j| self.ratios(j))
            .fold((0.0, 0.0), |(a, b), (g, l)| (a.max(g), b.max(l)))
    }

    fn report(&self, grad: f64, lap: f64) -> BoundsReport {
        let support_radius = self.support_radius();
        let allowed = self.allowed_support_radius();
        BoundsReport {
            grad,
            lap,
            support_radius,
            allowed_support_radius: allowed,
            ok: grad <= self.c0 && lap <= self.c0 && support_radius <= allowed * (1.0 + 1e-12),
        }
    }

    /// Bound constants on a cubic sampling lattice of spacing
    /// `scale / points_per_scale` over the support box.
    pub fn verify_bounds_sampled(&self, points_per_scale: usize) -> BoundsReport {
        let Some(bx) = self.support_box() else {
            return self.report(0.0, 0.0);
        };
        if matches!(self.base, Base::Constant) {
            return self.report(0.0, 0.0);
        }
        let h = self.scale / points_per_scale as f64;
        let counts = bx.map(|b| ((b[1] - b[0]) / h).ceil() as usize);
        let (mut g, mut l) = (0.0f64, 0.0f64);
        for k in 0..counts[2] {
            for j in 0..counts[1] {
                for i in 0..counts[0] {
                    let x = [
                        bx[0][0] + (i as f64 + 0.5) * h,
                        bx[1][0] + (j as f64 + 0.5) * h,
                        bx[2][0] + (k as f64 + 0.5) * h,
                    ];
                    let jet = self.eval(x);
                    if jet.v > 0.0 {
                        let (a, b) = self.ratios(&jet);
                        g = g.max(a);
                        l = l.max(b);
                    }
                }
            }
        }
        self.report(g, l)
    }
}

/// Constants of the radial profile `S_q(s)^power` on a dense 1D sample of
/// `s ∈ (0, 1)`; they do not depend on `R`.
pub fn radial_constants(profile: Smoothstep, power: f64, rho: f64) -> (f64, f64) {
    let ratios = |s: f64| -> (f64, f64) {
        let (v, d1, d2) = (profile.value(s), profile.d1(s), profile.d2(s));
        if v <= 0.0 {
            return (0.0, 0.0);
        }
        let f = v.powf(power);
        let f1 = power * v.powf(power - 1.0) * d1;
        let f2 = power * v.powf(power - 1.0) * d2 + power * (power - 1.0) * v.powf(power - 2.0) * d1 * d1;
        let lap = f2 - 2.0 * f1 / (2.0 - s);
        (f1.abs() / f.powf(rho), lap.abs() / f.powf(2.0 * rho - 1.0))
    };
    let n = 200_000;
    let (mut g, mut l) = (0.0f64, 0.0f64);
    let mut eval = |s: f64| {
        let (a, b) = ratios(s);
        g = g.max(a);
        l = l.max(b);
    };
    for i in 1..n {
        eval(i as f64 / n as f64);
    }
    for k in 0..600 {
        eval(10f64.powf(-6.0 + k as f64 * 0.01));
    }
    (g, l)
}

/// Canonical refined test function `S_q(2 - |x - center|/R)` with
/// `q = ceil(1/(1 - rho)) + 1`.
pub fn make_refined(center: [f64; 3], scale: f64, rho: f64, c0_target: f64, length: f64) -> Result<TestFunction> {
    make_refined_with_order(center, scale, rho, c0_target, length, Smoothstep::order_for_rho(rho))
}

pub fn make_refined_with_order(
    center: [f64; 3],
    scale: f64,
    rho: f64,
    c0_target: f64,
    length: f64,
    q: u32,
) -> Result<TestFunction> {
    if !(rho > 0.75 && rho < 1.0) {
        return Err(Error::InvalidConfig(format!("rho must lie in (3/4, 1), got {rho}")));
    }
    if !(c0_target > 1.0) {
        return Err(Error::InvalidConfig(format!("C0 must exceed 1, got {c0_target}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidConfig(format!("scale must be positive, got {scale}")));
    }
    let extent = 2.0 * scale + scale.powf(2.0 / 3.0);
    if extent >= length / 2.0 {
        return Err(Error::ScaleTooLarge {
            extent,
            half_box: length / 2.0,
        });
    }
    let profile = Smoothstep::new(q.max(2));
    let (g, l) = radial_constants(profile, 1.0, rho);
    let measured = g.max(l);
    if measured > c0_target {
        return Err(Error::BoundViolation {
            measured,
            target: c0_target,
        });
    }
    let center = center.map(|c| wrap(c, length));
    Ok(TestFunction {
        center,
        scale,
        rho,
        c0: c0_target,
        length,
        base: Base::Radial {
            center,
            radius: scale,
            profile,
            power: 1.0,
        },
        windows: Vec::new(),
    })
}

/// Check the refined bounds and the support condition. Plain radial
/// profiles use the dense 1D radial sample; anything else a 3D lattice
/// with 16 points per scale.
pub fn verify_bounds(tf: &TestFunction) -> BoundsReport {
    match tf.base() {
        Base::Radial { profile, power, .. } if tf.windows().is_empty() => {
            let (g, l) = radial_constants(*profile, *power, tf.rho());
            tf.report(g, l)
        }
        _ => tf.verify_bounds_sampled(16),
    }
}

/// Temporal cutoff `η(t) = S_q(3t/T - 1)`: zero on `[0, T/3]`, one on
/// `[2T/3, T]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemporalCutoff {
    t_final: f64,
    profile: Smoothstep,
}

impl TemporalCutoff {
    pub fn new(t_final: f64) -> Result<Self> {
        Self::with_order(t_final, DEFAULT_TIME_ORDER)
    }

    pub fn with_order(t_final: f64, q: u32) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "cutoff horizon must be positive, got {t_final}"
            )));
        }
        Ok(Self {
            t_final,
            profile: Smoothstep::new(q.max(2)),
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.profile.value(3.0 * t / self.t_final - 1.0)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        3.0 / self.t_final * self.profile.d1(3.0 * t / self.t_final - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn radial_constants_at_default_rho() {
        let (g, l) = radial_constants(Smoothstep::new(6), 1.0, 0.8);
        assert!((g - 10.90).abs() < 0.05, "{g}");
        assert!((l - 93.3).abs() < 0.5, "{l}");
    }

    #[test]
    fn closed_form_gradient_matches_differences() {
        let tf = make_refined([1.0, 2.0, 3.0], 0.7, 0.8, 100.0, 2.0 * PI).unwrap();
        let x = [1.9, 2.3, 2.6];
        let jet = tf.eval(x);
        let h = 1e-5;
        for a in 0..3 {
            let mut p = x;
            let mut m = x;
            p[a] += h;
            m[a] -= h;
            let fd = (tf.value(p) - tf.value(m)) / (2.0 * h);
            assert!((fd - jet.g[a]).abs() < 1e-7);
        }
        let mut lap = 0.0;
        for a in 0..3 {
            let mut p = x;
            let mut m = x;
            p[a] += 1e-4;
            m[a] -= 1e-4;
            lap += (tf.value(p) - 2.0 * jet.v + tf.value(m)) / 1e-8;
        }
        assert!((lap - jet.l).abs() < 1e-4);
    }

    #[test]
    fn window_periodization_is_between_one_and_two() {
        let w = LatticeWindow {
            anchor: [0.0; 3],
            offset: [0.0; 3],
            r_prime: 0.3,
            index: [0; 3],
            profile: Smoothstep::new(6),
        };
        for i in 0..1000 {
            let t = -1.5 + 3.0 * i as f64 / 1000.0;
            let s = w.periodized(t).v;
            assert!((1.0..=2.0 + 1e-15).contains(&s), "{t} {s}");
        }
    }

    #[test]
    fn temporal_cutoff_shape() {
        let eta = TemporalCutoff::new(3.0).unwrap();
        assert_eq!(eta.eval(0.0), 0.0);
        assert_eq!(eta.eval(1.0), 0.0);
        assert_eq!(eta.eval(2.0), 1.0);
        assert_eq!(eta.eval(3.0), 1.0);
        assert!(eta.eval(1.5) > 0.0 && eta.eval(1.5) < 1.0);
        assert!(TemporalCutoff::new(0.0).is_err());
    }
}

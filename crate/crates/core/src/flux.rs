//! Localized enstrophy fluxes, their dynamic decomposition, integral-scale
//! quantities and the ensemble-averaged flux harness.
//!
//! Every space-time integral has the form `∫∫ F(x,t) ψ(x) η(t)` (or with
//! `∇ψ`, `Δψ`, `η'`), so one pass over the snapshots accumulates the time
//! integrals of each density with trapezoid weights; spatial weights are
//! applied afterwards per test function.

use crate::ensemble::canonical_ensemble;
use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, GridSpec, ScalarField, VectorField3};
use crate::solver::{MhdState, SnapshotSource};
use crate::spectral::{gradient_tensor, VectorSpectrum, Wavenumbers};
use crate::test_function::{Samples, TemporalCutoff, TestFunction};
use serde::Serialize;

/// Fewest snapshots accepted for time quadrature.
pub const MIN_SNAPSHOTS: usize = 12;

/// Trapezoid weights for (possibly non-uniform) sample times.
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    (0..n)
        .map(|k| {
            let left = if k > 0 { times[k] - times[k - 1] } else { 0.0 };
            let right = if k + 1 < n { times[k + 1] - times[k] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// Time-integrated densities on the grid.
#[derive(Clone, Debug)]
pub struct TimeIntegrals {
    pub grid: GridSpec,
    pub duration: f64,
    pub nu: f64,
    pub eta_m: f64,
    pub rho: f64,
    /// `∫ η ½|ω|^2 u dt` and `∫ η ½|j|^2 u dt`.
    pub transport_omega: VectorField3,
    pub transport_j: VectorField3,
    /// `∫ η (u·∇)ω·ω dt` and `∫ η (u·∇)j·j dt`.
    pub convection_omega: ScalarField,
    pub convection_j: ScalarField,
    /// `∫ [(u·∇)ω·ω + (u·∇)j·j] dt` without the cutoff.
    pub convection_uncut: ScalarField,
    /// `∫ η ½|ω|^2 dt`, `∫ η ½|j|^2 dt`.
    pub heat_omega: ScalarField,
    pub heat_j: ScalarField,
    /// `∫ η' ½|ω|^2 dt`, `∫ η' ½|j|^2 dt`.
    pub dheat_omega: ScalarField,
    pub dheat_j: ScalarField,
    /// `∫ η |∇ω|^2 dt`, `∫ η |∇j|^2 dt`.
    pub grad_omega: ScalarField,
    pub grad_j: ScalarField,
    /// `∫ η (ω·∇)u·ω`, `∫ η (b·∇)j·ω`, `∫ η (j·∇)b·ω`.
    pub stretch_omega: ScalarField,
    pub cross_omega: ScalarField,
    pub twist_omega: ScalarField,
    /// `∫ η (ω·∇)b·j`, `∫ η (b·∇)ω·j`, `∫ η (j·∇)u·j`.
    pub stretch_j: ScalarField,
    pub cross_j: ScalarField,
    pub twist_j: ScalarField,
    /// `∫ η 2Σ_l (∇b_l × ∇u_l)·j dt`.
    pub gradient_product_j: ScalarField,
    /// `½|ω(T)|^2`, `½|j(T)|^2`.
    pub final_omega: ScalarField,
    pub final_j: ScalarField,
    /// `∫ η^(4rho-3) ½(|u|^2 + |b|^2) dt`.
    pub energy: ScalarField,
    /// `∫ η^(2rho-1) (|ω|^2 + |j|^2) dt`.
    pub enstrophy: ScalarField,
    /// `∫ (|ω|^2 + |j|^2) dt`.
    pub enstrophy_uncut: ScalarField,
}

/// Streaming accumulator for [`TimeIntegrals`]; states must arrive in the
/// order of `times`.
pub struct TimeIntegralsBuilder {
    times: Vec<f64>,
    weights: Vec<f64>,
    cutoff: TemporalCutoff,
    next: usize,
    acc: TimeIntegrals,
}

fn tens(g: &[[ScalarField; 3]; 3]) -> [[&[f64]; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| g[i][j].values()))
}

fn zeros(g: GridSpec) -> ScalarField {
    ScalarField::zeros(g)
}

impl TimeIntegralsBuilder {
    pub fn new(grid: GridSpec, times: Vec<f64>, cutoff: TemporalCutoff, rho: f64, nu: f64, eta_m: f64) -> Result<Self> {
        if times.len() < MIN_SNAPSHOTS {
            return Err(Error::TooFewSnapshots {
                required: MIN_SNAPSHOTS,
                found: times.len(),
            });
        }
        if !(rho > 0.75 && rho <= 1.0) {
            return Err(Error::InvalidConfig(format!("rho must lie in (3/4, 1], got {rho}")));
        }
        let weights = trapezoid_weights(&times);
        let duration = times[times.len() - 1] - times[0];
        let acc = TimeIntegrals {
            grid,
            duration,
            nu,
            eta_m,
            rho,
            transport_omega: VectorField3::zeros(grid),
            transport_j: VectorField3::zeros(grid),
            convection_omega: zeros(grid),
            convection_j: zeros(grid),
            convection_uncut: zeros(grid),
            heat_omega: zeros(grid),
            heat_j: zeros(grid),
            dheat_omega: zeros(grid),
            dheat_j: zeros(grid),
            grad_omega: zeros(grid),
            grad_j: zeros(grid),
            stretch_omega: zeros(grid),
            cross_omega: zeros(grid),
            twist_omega: zeros(grid),
            stretch_j: zeros(grid),
            cross_j: zeros(grid),
            twist_j: zeros(grid),
            gradient_product_j: zeros(grid),
            final_omega: zeros(grid),
            final_j: zeros(grid),
            energy: zeros(grid),
            enstrophy: zeros(grid),
            enstrophy_uncut: zeros(grid),
        };
        Ok(Self {
            times,
            weights,
            cutoff,
            next: 0,
            acc,
        })
    }

    pub fn push(&mut self, state: &MhdState) -> Result<()> {
        let k = self.next;
        if k >= self.times.len() {
            return Err(Error::InvalidConfig("more states than announced times".into()));
        }
        if (state.t - self.times[k]).abs() > 1e-12 * self.times[self.times.len() - 1].abs().max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "state time {} does not match expected {}",
                state.t, self.times[k]
            )));
        }
        let grid = self.acc.grid;
        if state.grid() != grid {
            return Err(Error::InvalidGrid("state grid differs from accumulator grid".into()));
        }
        let t_rel = state.t - self.times[0];
        let w = self.weights[k];
        let eta = self.cutoff.eval(t_rel);
        let deta = self.cutoff.derivative(t_rel);
        let rho = self.acc.rho;
        let we = w * eta;
        let w_energy = w * if eta > 0.0 { eta.powf(4.0 * rho - 3.0) } else { 0.0 };
        let w_ens = w * if eta > 0.0 { eta.powf(2.0 * rho - 1.0) } else { 0.0 };
        let w_d = w * deta;
        let last = k + 1 == self.times.len();

        let wn = Wavenumbers::new(grid);
        let us = VectorSpectrum::of(&state.u);
        let bs = VectorSpectrum::of(&state.b);
        let ws = us.curl(&wn);
        let js = bs.curl(&wn);
        let om = ws.to_field();
        let jj = js.to_field();
        let gu = gradient_tensor(&us, &wn);
        let gb = gradient_tensor(&bs, &wn);
        let gw = gradient_tensor(&ws, &wn);
        let gj = gradient_tensor(&js, &wn);

        let vals3 = |v: &VectorField3| -> [Vec<f64>; 3] { [0, 1, 2].map(|a| v.component(a).values().to_vec()) };
        let (u, b, o, c) = (vals3(&state.u), vals3(&state.b), vals3(&om), vals3(&jj));
        let (gu, gb, gw, gj) = (tens(&gu), tens(&gb), tens(&gw), tens(&gj));

        let a = &mut self.acc;
        for i in 0..grid.len() {
            let uu = [u[0][i], u[1][i], u[2][i]];
            let bb = [b[0][i], b[1][i], b[2][i]];
            let ww = [o[0][i], o[1][i], o[2][i]];
            let jv = [c[0][i], c[1][i], c[2][i]];
            // (v·∇)f · g with f given by its gradient tensor
            let adv = |v: [f64; 3], g: &[[&[f64]; 3]; 3], dot: [f64; 3]| -> f64 {
                (0..3)
                    .map(|r| dot[r] * (v[0] * g[r][0][i] + v[1] * g[r][1][i] + v[2] * g[r][2][i]))
                    .sum()
            };
            let w2 = ww[0] * ww[0] + ww[1] * ww[1] + ww[2] * ww[2];
            let j2 = jv[0] * jv[0] + jv[1] * jv[1] + jv[2] * jv[2];
            let conv_w = adv(uu, &gw, ww);
            let conv_j = adv(uu, &gj, jv);
            a.convection_uncut.values_mut()[i] += w * (conv_w + conv_j);
            if last {
                a.final_omega.values_mut()[i] = 0.5 * w2;
                a.final_j.values_mut()[i] = 0.5 * j2;
            }
            a.enstrophy_uncut.values_mut()[i] += w * (w2 + j2);
            if w_d != 0.0 {
                a.dheat_omega.values_mut()[i] += w_d * 0.5 * w2;
                a.dheat_j.values_mut()[i] += w_d * 0.5 * j2;
            }
            if we == 0.0 {
                continue;
            }
            for d in 0..3 {
                a.transport_omega.component_mut(d).values_mut()[i] += we * 0.5 * w2 * uu[d];
                a.transport_j.component_mut(d).values_mut()[i] += we * 0.5 * j2 * uu[d];
            }
            a.convection_omega.values_mut()[i] += we * conv_w;
            a.convection_j.values_mut()[i] += we * conv_j;
            a.heat_omega.values_mut()[i] += we * 0.5 * w2;
            a.heat_j.values_mut()[i] += we * 0.5 * j2;
            let (mut gw2, mut gj2) = (0.0, 0.0);
            for r in 0..3 {
                for s in 0..3 {
                    gw2 += gw[r][s][i] * gw[r][s][i];
                    gj2 += gj[r][s][i] * gj[r][s][i];
                }
            }
            a.grad_omega.values_mut()[i] += we * gw2;
            a.grad_j.values_mut()[i] += we * gj2;
            a.stretch_omega.values_mut()[i] += we * adv(ww, &gu, ww);
            a.cross_omega.values_mut()[i] += we * adv(bb, &gj, ww);
            a.twist_omega.values_mut()[i] += we * adv(jv, &gb, ww);
            a.stretch_j.values_mut()[i] += we * adv(ww, &gb, jv);
            a.cross_j.values_mut()[i] += we * adv(bb, &gw, jv);
            a.twist_j.values_mut()[i] += we * adv(jv, &gu, jv);
            let mut x = 0.0;
            for l in 0..3 {
                let db = [gb[l][0][i], gb[l][1][i], gb[l][2][i]];
                let du = [gu[l][0][i], gu[l][1][i], gu[l][2][i]];
                let cr = crate::grid::cross(db, du);
                x += cr[0] * jv[0] + cr[1] * jv[1] + cr[2] * jv[2];
            }
            a.gradient_product_j.values_mut()[i] += we * 2.0 * x;
            let e = 0.5 * (uu.iter().map(|v| v * v).sum::<f64>() + bb.iter().map(|v| v * v).sum::<f64>());
            a.energy.values_mut()[i] += w_energy * e;
            a.enstrophy.values_mut()[i] += w_ens * (w2 + j2);
        }
        self.next += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<TimeIntegrals> {
        if self.next != self.times.len() {
            return Err(Error::TooFewSnapshots {
                required: self.times.len(),
                found: self.next,
            });
        }
        Ok(self.acc)
    }
}

impl TimeIntegrals {
    pub fn from_series<S: SnapshotSource + ?Sized>(
        series: &S,
        cutoff: TemporalCutoff,
        rho: f64,
        nu: f64,
        eta_m: f64,
    ) -> Result<Self> {
        let mut b = TimeIntegralsBuilder::new(series.grid(), series.times(), cutoff, rho, nu, eta_m)?;
        for i in 0..series.len() {
            b.push(&*series.state(i)?)?;
        }
        b.finish()
    }

    /// `φ = -∫ η [(u·∇)ω·ω + (u·∇)j·j] dt`.
    pub fn flux_density(&self) -> ScalarField {
        let mut f = self.convection_omega.clone();
        f.add_scaled(1.0, &self.convection_j);
        f.map(|v| -v)
    }

    /// The same density without the temporal cutoff.
    pub fn flux_density_uncut(&self) -> ScalarField {
        self.convection_uncut.map(|v| -v)
    }

    /// Nonnegative density `½(|ω(T)|^2 + |j(T)|^2) + ∫ η (|∇ω|^2 + |∇j|^2) dt`.
    pub fn palinstrophy_density(&self) -> ScalarField {
        let mut p = self.final_omega.clone();
        p.add_scaled(1.0, &self.final_j);
        p.add_scaled(1.0, &self.grad_omega);
        p.add_scaled(1.0, &self.grad_j);
        p
    }

    /// Density multiplying `ψ` in `H + N + L + X`, and the one multiplying
    /// `Δψ`.
    fn remainder_densities(&self) -> (ScalarField, ScalarField) {
        let mut v = zeros(self.grid);
        for (f, c) in [
            (&self.dheat_omega, -1.0),
            (&self.dheat_j, -1.0),
            (&self.stretch_omega, -1.0),
            (&self.cross_omega, -1.0),
            (&self.twist_omega, 1.0),
            (&self.stretch_j, 1.0),
            (&self.cross_j, -1.0),
            (&self.twist_j, -1.0),
            (&self.gradient_product_j, -1.0),
        ] {
            v.add_scaled(c, f);
        }
        let mut l = zeros(self.grid);
        l.add_scaled(-self.nu, &self.heat_omega);
        l.add_scaled(-self.eta_m, &self.heat_j);
        (v, l)
    }
}

fn weighted(s: &Samples, grid: GridSpec, f: &ScalarField) -> f64 {
    let v = f.values();
    s.integrate_with(grid, |i, j| j.v * v[i])
}

fn weighted_lap(s: &Samples, grid: GridSpec, f: &ScalarField) -> f64 {
    let v = f.values();
    s.integrate_with(grid, |i, j| j.l * v[i])
}

fn weighted_grad(s: &Samples, grid: GridSpec, f: &VectorField3) -> f64 {
    let (x, y, z) = (
        f.component(0).values(),
        f.component(1).values(),
        f.component(2).values(),
    );
    s.integrate_with(grid, |i, j| j.g[0] * x[i] + j.g[1] * y[i] + j.g[2] * z[i])
}

/// Flux density from a series (see [`TimeIntegrals::flux_density`]).
pub fn flux_density<S: SnapshotSource + ?Sized>(series: &S, cutoff: TemporalCutoff) -> Result<ScalarField> {
    // diffusion coefficients and rho do not enter the flux density
    Ok(TimeIntegrals::from_series(series, cutoff, 1.0, 1.0, 1.0)?.flux_density())
}

/// Transport form `∫∫ ½(|ω|^2 + |j|^2) u·∇(ψη) dx dt`.
pub fn surface_flux(ti: &TimeIntegrals, tf: &TestFunction) -> f64 {
    let s = tf.sample(ti.grid);
    weighted_grad(&s, ti.grid, &ti.transport_omega) + weighted_grad(&s, ti.grid, &ti.transport_j)
}

/// Convection form `-∫∫ [(u·∇)ω·ω + (u·∇)j·j] ψη dx dt`.
pub fn convection_flux(ti: &TimeIntegrals, tf: &TestFunction) -> f64 {
    weighted(&tf.sample(ti.grid), ti.grid, &ti.flux_density())
}

/// Terms of one enstrophy balance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EquationTerms {
    /// Transport-form flux (left-hand side).
    pub lhs: f64,
    /// `∫ ½|·(T)|^2 ψ`.
    pub final_enstrophy: f64,
    /// Diffusivity times `∫∫ |∇·|^2 φ`.
    pub dissipation: f64,
    pub h: f64,
    pub n1: f64,
    pub l: f64,
    pub n2: f64,
}

impl EquationTerms {
    fn rhs(&self) -> f64 {
        self.final_enstrophy + self.dissipation + self.h + self.n1 + self.l + self.n2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TermBreakdown {
    pub omega: EquationTerms,
    pub j: EquationTerms,
    pub x: f64,
    /// `max(|LHS - RHS|)` over both balances over the largest term magnitude.
    pub identity_residual: f64,
}

impl TermBreakdown {
    pub fn rhs_omega(&self) -> f64 {
        self.omega.rhs()
    }

    pub fn rhs_j(&self) -> f64 {
        self.j.rhs() + self.x
    }

    /// `H + N + L + X` summed over both balances.
    pub fn remainder(&self) -> f64 {
        let t = |e: &EquationTerms| e.h + e.n1 + e.l + e.n2;
        t(&self.omega) + t(&self.j) + self.x
    }
}

/// Every term of the two localized enstrophy balances for one test
/// function. Requires `nu == eta_m`.
pub fn term_decomposition(ti: &TimeIntegrals, tf: &TestFunction) -> Result<TermBreakdown> {
    if ti.nu != ti.eta_m {
        return Err(Error::MismatchedDiffusion {
            nu: ti.nu,
            eta_m: ti.eta_m,
        });
    }
    let g = ti.grid;
    let s = tf.sample(g);
    let w = |f: &ScalarField| weighted(&s, g, f);
    let omega = EquationTerms {
        lhs: weighted_grad(&s, g, &ti.transport_omega),
        final_enstrophy: w(&ti.final_omega),
        dissipation: ti.nu * w(&ti.grad_omega),
        h: -w(&ti.dheat_omega) - ti.nu * weighted_lap(&s, g, &ti.heat_omega),
        n1: -w(&ti.stretch_omega),
        l: -w(&ti.cross_omega),
        n2: w(&ti.twist_omega),
    };
    let j = EquationTerms {
        lhs: weighted_grad(&s, g, &ti.transport_j),
        final_enstrophy: w(&ti.final_j),
        dissipation: ti.eta_m * w(&ti.grad_j),
        h: -w(&ti.dheat_j) - ti.eta_m * weighted_lap(&s, g, &ti.heat_j),
        n1: w(&ti.stretch_j),
        l: -w(&ti.cross_j),
        n2: -w(&ti.twist_j),
    };
    let x = -w(&ti.gradient_product_j);
    let mut out = TermBreakdown {
        omega,
        j,
        x,
        identity_residual: 0.0,
    };
    let scale = [
        omega.lhs,
        omega.final_enstrophy,
        omega.dissipation,
        omega.h,
        omega.n1,
        omega.l,
        omega.n2,
        j.lhs,
        j.final_enstrophy,
        j.dissipation,
        j.h,
        j.n1,
        j.l,
        j.n2,
        x,
    ]
    .iter()
    .fold(0.0f64, |m, v| m.max(v.abs()));
    let res = (omega.lhs - out.rhs_omega()).abs().max((j.lhs - out.rhs_j()).abs());
    out.identity_residual = if scale > 0.0 { res / scale } else { 0.0 };
    Ok(out)
}

/// Integral-scale energy, enstrophy and palinstrophy with the Kraichnan-type
/// scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScaleQuantities {
    pub e0: f64,
    pub big_e0: f64,
    pub p0: f64,
    /// `None` when `P0 = 0`.
    pub sigma0: Option<f64>,
}

pub fn integral_scale_quantities(ti: &TimeIntegrals, psi0: &TestFunction) -> ScaleQuantities {
    let g = ti.grid;
    let s = psi0.sample(g);
    let norm = 1.0 / (ti.duration * psi0.scale().powi(3));
    let rho = ti.rho;
    let pe = 4.0 * rho - 3.0;
    let pw = 2.0 * rho - 1.0;
    let (ev, wv) = (ti.energy.values(), ti.enstrophy.values());
    let e0 = norm * s.integrate_with(g, |i, j| j.v.powf(pe) * ev[i]);
    let big_e0 = norm * s.integrate_with(g, |i, j| j.v.powf(pw) * wv[i]);
    let p0 = norm * weighted(&s, g, &ti.palinstrophy_density());
    let mut q = ScaleQuantities {
        e0,
        big_e0,
        p0,
        sigma0: None,
    };
    q.sigma0 = kraichnan_scale(&q).ok();
    q
}

/// `σ0 = max{(E0/P0)^(1/2), (e0/P0)^(1/4)}`.
pub fn kraichnan_scale(q: &ScaleQuantities) -> Result<f64> {
    if !(q.p0 > 0.0) || !q.p0.is_finite() {
        return Err(Error::DegeneratePalinstrophy);
    }
    Ok((q.big_e0 / q.p0).sqrt().max((q.e0 / q.p0).powf(0.25)))
}

/// Whether `σ0 < β R0`.
pub fn kraichnan_scale_admissible(sigma0: f64, beta: f64, r0: f64) -> bool {
    sigma0 < beta * r0
}

/// `n` geometrically spaced scales from `lower` to `upper` inclusive.
pub fn geometric_scales(lower: f64, upper: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![upper],
        _ => {
            let r = (upper / lower).ln() / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|k| lower * (r * k as f64).exp()).collect();
            v[n - 1] = upper;
            v
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoremConfig {
    pub scales: Vec<f64>,
    pub k1: usize,
    pub k2: usize,
    pub beta: f64,
    /// Ensembles per scale: the centered lattice plus jittered ones.
    pub n_ensembles: usize,
    pub seed: u64,
    /// Reject scales outside `[σ0/β, R0]`.
    pub enforce_range: bool,
}

/// One ensemble at one scale.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleRow {
    pub scale: f64,
    pub ensemble: String,
    pub n_members: usize,
    /// `(1/n)(1/(T R^3)) Σ ∫ φ ψ_i`.
    pub phi_avg: f64,
    /// `(1/n) Σ (1/T) ∫∫ ½(|ω|^2+|j|^2) u·∇(ψ_i η)`.
    pub psi_avg: f64,
    /// Average of the nonnegative palinstrophy density, same normalization as `phi_avg`.
    pub p_avg: f64,
    /// Average of `H + N + L + X`, same normalization as `phi_avg`.
    pub remainder_avg: f64,
    /// `phi_avg / P0`.
    pub ratio: f64,
    /// Bound constant of the ensemble members.
    pub c0: f64,
    pub max_multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FluxReport {
    pub duration: f64,
    pub r0: f64,
    pub beta: f64,
    pub k1: usize,
    pub k2: usize,
    pub quantities: ScaleQuantities,
    pub sigma0: f64,
    pub assumption2: bool,
    pub rows: Vec<ScaleRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub all_positive: bool,
    /// `max(max ratio, 1/min ratio)` when every ratio is positive.
    pub k_star: Option<f64>,
    /// Largest `|⟨Ψ⟩_R - R^3⟨Φ⟩_R| / |⟨Ψ⟩_R|` over rows.
    pub psi_phi_residual: f64,
}

/// Ensemble-averaged fluxes over scales and ensembles, compared with `P0`.
pub fn verify_theorem(ti: &TimeIntegrals, psi0: &TestFunction, cfg: &TheoremConfig) -> Result<FluxReport> {
    let quantities = integral_scale_quantities(ti, psi0);
    let sigma0 = kraichnan_scale(&quantities)?;
    let r0 = psi0.scale();
    let lower = sigma0 / cfg.beta;
    if cfg.enforce_range {
        for &s in &cfg.scales {
            if s < lower * (1.0 - 1e-12) || s > r0 * (1.0 + 1e-12) {
                return Err(Error::ScaleOutOfRange {
                    scale: s,
                    lower,
                    upper: r0,
                });
            }
        }
    }
    let g = ti.grid;
    let t = ti.duration;
    let phi = ti.flux_density();
    let p = ti.palinstrophy_density();
    let (rest_v, rest_l) = ti.remainder_densities();
    let transport = ti.transport_omega.add(&ti.transport_j);
    let mut rows = Vec::new();
    for &scale in &cfg.scales {
        for e in 0..cfg.n_ensembles.max(1) {
            let (label, jitter) = if e == 0 {
                ("canonical".to_string(), None)
            } else {
                let seed = cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(e as u64);
                (format!("jitter-{e}"), Some(seed))
            };
            let ens = canonical_ensemble(psi0, scale, cfg.k1, cfg.k2, g, jitter)?;
            let n = ens.len() as f64;
            let (mut phis, mut psis, mut ps, mut rests) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for m in ens.members() {
                let s = m.sample(g);
                phis.push(weighted(&s, g, &phi));
                psis.push(weighted_grad(&s, g, &transport));
                ps.push(weighted(&s, g, &p));
                rests.push(weighted(&s, g, &rest_v) + weighted_lap(&s, g, &rest_l));
            }
            let norm = 1.0 / (n * t * scale.powi(3));
            let phi_avg = pairwise_sum(&phis) * norm;
            rows.push(ScaleRow {
                scale,
                ensemble: label,
                n_members: ens.len(),
                phi_avg,
                psi_avg: pairwise_sum(&psis) / (n * t),
                p_avg: pairwise_sum(&ps) * norm,
                remainder_avg: pairwise_sum(&rests) * norm,
                ratio: phi_avg / quantities.p0,
                c0: ens.c0(),
                max_multiplicity: ens.report().max_multiplicity,
            });
        }
    }
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let all_positive = rows.iter().all(|r| r.ratio > 0.0 && r.ratio.is_finite());
    let k_star = all_positive.then(|| max_ratio.max(1.0 / min_ratio));
    let psi_phi_residual = rows
        .iter()
        .map(|r| {
            let d = (r.psi_avg - r.scale.powi(3) * r.phi_avg).abs();
            if r.psi_avg != 0.0 {
                d / r.psi_avg.abs()
            } else {
                d
            }
        })
        .fold(0.0, f64::max);
    Ok(FluxReport {
        duration: t,
        r0,
        beta: cfg.beta,
        k1: cfg.k1,
        k2: cfg.k2,
        quantities,
        sigma0,
        assumption2: kraichnan_scale_admissible(sigma0, cfg.beta, r0),
        rows,
        min_ratio,
        max_ratio,
        all_positive,
        k_star,
        psi_phi_residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalityRow {
    pub r: f64,
    pub big_r: f64,
    /// Extremes of `⟨Ψ⟩_r/⟨Ψ⟩_R` over all ensemble pairs at the two scales.
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `(r/R)^3`.
    pub volume_ratio: f64,
    pub lower: f64,
    pub upper: f64,
    pub contained: bool,
}

/// Compare `⟨Ψ⟩_r/⟨Ψ⟩_R` with `[(r/R)^3/K*^2, K*^2 (r/R)^3]` for each pair of
/// scales present in the report. `slack` is a relative tolerance.
pub fn locality_ratios(report: &FluxReport, pairs: &[(f64, f64)], slack: f64) -> Vec<LocalityRow> {
    let at = |s: f64| -> Vec<f64> {
        report
            .rows
            .iter()
            .filter(|r| (r.scale - s).abs() <= 1e-12 * s.abs().max(1.0))
            .map(|r| r.psi_avg)
            .collect()
    };
    pairs
        .iter()
        .map(|&(r, big_r)| {
            let (a, b) = (at(r), at(big_r));
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for x in &a {
                for y in &b {
                    let q = x / y;
                    lo = lo.min(q);
                    hi = hi.max(q);
                }
            }
            let vol = (r / big_r).powi(3);
            let (lower, upper, contained) = match report.k_star {
                Some(k) => {
                    let (l, u) = (vol / (k * k), vol * k * k);
                    let ok = !a.is_empty() && !b.is_empty() && lo >= l * (1.0 - slack) && hi <= u * (1.0 + slack);
                    (l, u, ok)
                }
                None => (f64::NAN, f64::NAN, false),
            };
            LocalityRow {
                r,
                big_r,
                min_ratio: lo,
                max_ratio: hi,
                volume_ratio: vol,
                lower,
                upper,
                contained,
            }
        })
        .collect()
}

/// All ordered pairs `(r, R)` with `r ≤ R` among the distinct report scales.
pub fn scale_pairs(report: &FluxReport) -> Vec<(f64, f64)> {
    let mut scales: Vec<f64> = report.rows.iter().map(|r| r.scale).collect();
    scales.sort_by(|a, b| a.partial_cmp(b).unwrap());
    scales.dedup();
    let mut out = Vec::new();
    for (i, &r) in scales.iter().enumerate() {
        for &big in &scales[i..] {
            out.push((r, big));
        }
    }
    out
}

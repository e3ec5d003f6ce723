//! Sampled estimates of the constants in the coherence, smoothness,
//! localization and modulation hypotheses.

use crate::error::{Error, Result};
use crate::flux::trapezoid_weights;
use crate::grid::{cross, norm, GridSpec, ScalarField, VectorField3};
use crate::solver::{curls, SnapshotSource};
use crate::spectral::{gradient_tensor, VectorSpectrum, Wavenumbers};
use crate::test_function::TestFunction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Vectors shorter than this fraction of the snapshot rms are degenerate.
pub const DEGENERATE_FRACTION: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Interpolation {
    #[default]
    Trilinear,
    /// Exact trigonometric interpolant; `O(n^3)` per point.
    Spectral,
}

/// Periodic trilinear interpolation.
pub fn trilinear(f: &ScalarField, x: [f64; 3]) -> f64 {
    let g = f.grid();
    let dx = g.dx();
    let mut base = [0i64; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let s = x[a] / dx;
        let fl = s.floor();
        base[a] = fl as i64;
        frac[a] = s - fl;
    }
    let v = f.values();
    let mut acc = 0.0;
    for c in 0..8 {
        let o = [(c & 1) as i64, ((c >> 1) & 1) as i64, ((c >> 2) & 1) as i64];
        let mut w = 1.0;
        for a in 0..3 {
            w *= if o[a] == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if w != 0.0 {
            let idx = g.wrapped_index(base[0] + o[0], base[1] + o[1], base[2] + o[2]);
            acc += w * v[idx];
        }
    }
    acc
}

/// One sampled `(t, x, y)`; `x` is a grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub t_index: usize,
    pub x_index: usize,
    pub y: [f64; 3],
}

/// Where and how many `(t, x, y)` to draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SamplingConfig {
    /// Center of the analysis ball.
    pub center: [f64; 3],
    /// Radius of the ball holding `x`, normally `2R0 + R0^(2/3)`.
    pub x_radius: f64,
    /// Upper bound on `|y|`.
    pub r_max: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Seeded plan: `t` uniform over snapshots, `x` uniform over grid points of
/// the ball, `y` uniform in `B(0, r_max)`. Each sample consumes a fixed
/// number of draws, so a longer plan extends a shorter one.
pub fn sample_plan(grid: GridSpec, n_times: usize, cfg: &SamplingConfig) -> Vec<Sample> {
    let pool: Vec<usize> = (0..grid.len())
        .filter(|&i| norm(grid.displacement(grid.coords(i), cfg.center)) < cfg.x_radius)
        .collect();
    if pool.is_empty() || n_times == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_samples)
        .map(|_| {
            let t_index = rng.gen_range(0..n_times);
            let x_index = pool[rng.gen_range(0..pool.len())];
            // radius by inverse cdf, direction from a normalized cube draw
            let r = cfg.r_max * rng.gen::<f64>().cbrt();
            let mut d = [0.0; 3];
            loop {
                for c in d.iter_mut() {
                    *c = rng.gen_range(-1.0..1.0);
                }
                let l = norm(d);
                if l > 1e-3 && l <= 1.0 {
                    d = d.map(|c| c / l);
                    break;
                }
            }
            Sample {
                t_index,
                x_index,
                y: d.map(|c| c * r),
            }
        })
        .collect()
}

/// Result of one sampled pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Outcome {
    /// Gradient at `x` did not exceed `M`.
    BelowThreshold,
    /// A vector involved was below the degeneracy threshold.
    Degenerate,
    Value(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    /// Max over accepted samples; 0 when vacuous.
    pub value: f64,
    pub threshold: f64,
    pub n_drawn: usize,
    pub n_accepted: usize,
    pub n_below_threshold: usize,
    pub n_degenerate: usize,
    /// Accepted samples with `x + y` outside the analysis ball.
    pub n_excursions: usize,
    pub vacuous: bool,
    pub argmax: Option<Sample>,
}

fn summarize(plan: &[Sample], outcomes: &[Outcome], threshold: f64, grid: GridSpec, cfg: &SamplingConfig) -> Estimate {
    let mut e = Estimate {
        value: 0.0,
        threshold,
        n_drawn: plan.len(),
        n_accepted: 0,
        n_below_threshold: 0,
        n_degenerate: 0,
        n_excursions: 0,
        vacuous: true,
        argmax: None,
    };
    for (s, o) in plan.iter().zip(outcomes) {
        match *o {
            Outcome::BelowThreshold => e.n_below_threshold += 1,
            Outcome::Degenerate => {
                e.vacuous = false;
                e.n_degenerate += 1
            }
            Outcome::Value(v) => {
                e.vacuous = false;
                e.n_accepted += 1;
                let x = grid.coords(s.x_index);
                let xy = [x[0] + s.y[0], x[1] + s.y[1], x[2] + s.y[2]];
                if norm(grid.displacement(xy, cfg.center)) >= cfg.x_radius {
                    e.n_excursions += 1;
                }
                if e.argmax.is_none() || v > e.value {
                    e.value = v;
                    e.argmax = Some(*s);
                }
            }
        }
    }
    e
}

struct Snapshot {
    field: VectorField3,
    spectra: Option<(VectorSpectrum, Wavenumbers)>,
    grad_norm: ScalarField,
    rms: f64,
}

impl Snapshot {
    fn at(&self, x: [f64; 3], interp: Interpolation) -> [f64; 3] {
        match (&self.spectra, interp) {
            (Some((s, wn)), Interpolation::Spectral) => [0, 1, 2].map(|a| s.components[a].interpolate(x, wn)),
            _ => [0, 1, 2].map(|a| trilinear(self.field.component(a), x)),
        }
    }
}

/// Curl of `source` plus the Frobenius norm of `∇source`.
fn prepare(source: &VectorField3, interp: Interpolation) -> Snapshot {
    let grid = source.grid();
    let wn = Wavenumbers::new(grid);
    let s = VectorSpectrum::of(source);
    let curl = s.curl(&wn);
    let field = curl.to_field();
    let g = gradient_tensor(&s, &wn);
    let grad_norm = ScalarField::from_values(
        grid,
        (0..grid.len())
            .map(|i| {
                g.iter()
                    .flat_map(|row| row.iter())
                    .map(|c| c.values()[i] * c.values()[i])
                    .sum::<f64>()
                    .sqrt()
            })
            .collect(),
    )
    .expect("grid length");
    let rms = (field.norm_squared().values().iter().sum::<f64>() / grid.len() as f64).sqrt();
    Snapshot {
        field,
        spectra: (interp == Interpolation::Spectral).then_some((curl, wn)),
        grad_norm,
        rms,
    }
}

fn evaluate<S: SnapshotSource + ?Sized>(
    series: &S,
    plan: &[Sample],
    m: f64,
    interp: Interpolation,
    use_b: bool,
    pair: impl Fn([f64; 3], [f64; 3], f64, f64) -> Option<f64>,
) -> Result<Vec<Outcome>> {
    let grid = series.grid();
    let mut out = vec![Outcome::BelowThreshold; plan.len()];
    for t in 0..series.len() {
        let wanted: Vec<usize> = (0..plan.len()).filter(|&k| plan[k].t_index == t).collect();
        if wanted.is_empty() {
            continue;
        }
        let state = series.state(t)?;
        let snap = prepare(if use_b { &state.b } else { &state.u }, interp);
        let floor = DEGENERATE_FRACTION * snap.rms;
        for k in wanted {
            let s = plan[k];
            if !(snap.grad_norm.values()[s.x_index] > m) {
                continue;
            }
            let x = grid.coords(s.x_index);
            let at_x = snap.field.at(s.x_index);
            let at_xy = snap.at([x[0] + s.y[0], x[1] + s.y[1], x[2] + s.y[2]], interp);
            out[k] = match pair(at_x, at_xy, norm(s.y), floor) {
                Some(v) => Outcome::Value(v),
                None => Outcome::Degenerate,
            };
        }
    }
    Ok(out)
}

/// `|sin θ(a, b)|`.
pub fn sin_angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm(cross(a, b)) / (norm(a) * norm(b))
}

/// Per-sample values of `|sin θ(ω(x+y), ω(x))| / |y|^(1/2)` filtered by
/// `|∇u(x)| > m`.
pub fn coherence_outcomes<S: SnapshotSource + ?Sized>(
    series: &S,
    plan: &[Sample],
    m: f64,
    interp: Interpolation,
) -> Result<Vec<Outcome>> {
    evaluate(series, plan, m, interp, false, |wx, wxy, r, floor| {
        if norm(wx) < floor || norm(wxy) < floor || r == 0.0 {
            return None;
        }
        Some(sin_angle(wxy, wx) / r.sqrt())
    })
}

/// Per-sample values of `|j(x+y) - j(x)| / (|j(x+y)| |y|^(1/2))` filtered by
/// `|∇b(x)| > m`.
pub fn smoothness_outcomes<S: SnapshotSource + ?Sized>(
    series: &S,
    plan: &[Sample],
    m: f64,
    interp: Interpolation,
) -> Result<Vec<Outcome>> {
    evaluate(series, plan, m, interp, true, |jx, jxy, r, floor| {
        let mag = norm(jxy);
        if mag < floor || r == 0.0 {
            return None;
        }
        let d = [jxy[0] - jx[0], jxy[1] - jx[1], jxy[2] - jx[2]];
        Some(norm(d) / (mag * r.sqrt()))
    })
}

pub fn coherence_constant<S: SnapshotSource + ?Sized>(
    series: &S,
    m: f64,
    cfg: &SamplingConfig,
    interp: Interpolation,
) -> Result<Estimate> {
    check_sampling(m, cfg)?;
    let plan = sample_plan(series.grid(), series.len(), cfg);
    let out = coherence_outcomes(series, &plan, m, interp)?;
    Ok(summarize(&plan, &out, m, series.grid(), cfg))
}

/// Assumption holds iff the returned value is at most 1.
pub fn current_smoothness<S: SnapshotSource + ?Sized>(
    series: &S,
    m: f64,
    cfg: &SamplingConfig,
    interp: Interpolation,
) -> Result<Estimate> {
    check_sampling(m, cfg)?;
    let plan = sample_plan(series.grid(), series.len(), cfg);
    let out = smoothness_outcomes(series, &plan, m, interp)?;
    Ok(summarize(&plan, &out, m, series.grid(), cfg))
}

fn check_sampling(m: f64, cfg: &SamplingConfig) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidConfig(format!("threshold M must be positive, got {m}")));
    }
    if !(cfg.r_max > 0.0 && cfg.x_radius > 0.0) || cfg.n_samples == 0 {
        return Err(Error::InvalidConfig("sampling radii and count must be positive".into()));
    }
    Ok(())
}

/// Twice the space-time rms of `|∇u|` (or `|∇b|` when `magnetic`).
pub fn default_threshold<S: SnapshotSource + ?Sized>(series: &S, magnetic: bool) -> Result<f64> {
    let grid = series.grid();
    let wn = Wavenumbers::new(grid);
    let w = trapezoid_weights(&series.times());
    let mut acc = 0.0;
    for (i, wk) in w.iter().enumerate() {
        let state = series.state(i)?;
        let s = VectorSpectrum::of(if magnetic { &state.b } else { &state.u });
        // ∫|∇v|^2 dx equals the sum of component spectral powers times k^2
        let g = gradient_tensor(&s, &wn);
        let sq: f64 = g
            .iter()
            .flat_map(|row| row.iter())
            .map(|c| c.values().iter().map(|v| v * v).sum::<f64>())
            .sum();
        acc += wk * sq / grid.len() as f64;
    }
    let d = series.duration();
    Ok(if d > 0.0 { 2.0 * (acc / d).sqrt() } else { 0.0 })
}

/// `r_max = 2(σ0/β) + (σ0/β)^(2/3)`.
pub fn interaction_radius(sigma0: f64, beta: f64) -> f64 {
    let s = sigma0 / beta;
    2.0 * s + s.powf(2.0 / 3.0)
}

/// `∫∫ (|ω|^2 + |j|^2) dt` at each grid point.
pub fn enstrophy_time_integral<S: SnapshotSource + ?Sized>(series: &S) -> Result<ScalarField> {
    let grid = series.grid();
    let w = trapezoid_weights(&series.times());
    let mut acc = ScalarField::zeros(grid);
    for (i, wk) in w.iter().enumerate() {
        let (om, j) = curls(&*series.state(i)?);
        acc.add_scaled(*wk, &om.norm_squared());
        acc.add_scaled(*wk, &j.norm_squared());
    }
    Ok(acc)
}

/// Grid quadrature of `density` over `B(center, radius)` on the torus.
pub fn ball_integral(density: &ScalarField, center: [f64; 3], radius: f64) -> f64 {
    let g = density.grid();
    let n = g.n() as i64;
    let dx = g.dx();
    let span = (radius / dx).ceil() as i64 + 1;
    let v = density.values();
    let mut vals = Vec::new();
    if 2 * span + 1 > n {
        // ball reaches around the torus; visit each point once
        for (i, &x) in v.iter().enumerate() {
            if norm(g.displacement(g.coords(i), center)) < radius {
                vals.push(x);
            }
        }
    } else {
        let base = center.map(|c| (c / dx).round() as i64);
        for k in -span..=span {
            for j in -span..=span {
                for i in -span..=span {
                    let p = [base[0] + i, base[1] + j, base[2] + k];
                    let x = p.map(|c| c as f64 * dx);
                    if norm(g.displacement(x, center)) < radius {
                        vals.push(v[g.wrapped_index(p[0], p[1], p[2])]);
                    }
                }
            }
        }
    }
    crate::grid::pairwise_sum(&vals) * g.cell_volume()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Localization {
    pub radius: f64,
    pub max_value: f64,
    pub argmax: [f64; 3],
    pub n_centers: usize,
    pub c2: f64,
    /// `max_value < 1/C2`.
    pub satisfied: bool,
}

/// `n_centers^3` lattice over the cube around `B(center, 2R0)`; points
/// inside the ball are kept.
pub fn localization_centers(center: [f64; 3], r0: f64, n_centers: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    let h = if n_centers > 1 {
        4.0 * r0 / (n_centers - 1) as f64
    } else {
        0.0
    };
    for k in 0..n_centers {
        for j in 0..n_centers {
            for i in 0..n_centers {
                let off = [i, j, k].map(|a| if n_centers > 1 { -2.0 * r0 + h * a as f64 } else { 0.0 });
                if norm(off) <= 2.0 * r0 {
                    out.push([center[0] + off[0], center[1] + off[1], center[2] + off[2]]);
                }
            }
        }
    }
    out
}

pub fn localization_check<S: SnapshotSource + ?Sized>(
    series: &S,
    center: [f64; 3],
    r0: f64,
    radius: f64,
    n_centers: usize,
    c2: f64,
) -> Result<Localization> {
    if !(radius > 0.0) || n_centers == 0 || !(c2 > 0.0) {
        return Err(Error::InvalidConfig(
            "localization needs positive radius, centers and C2".into(),
        ));
    }
    let density = enstrophy_time_integral(series)?;
    let centers = localization_centers(center, r0, n_centers);
    let mut best = (f64::NEG_INFINITY, center);
    for c in &centers {
        let v = ball_integral(&density, *c, radius);
        if v > best.0 {
            best = (v, *c);
        }
    }
    Ok(Localization {
        radius,
        max_value: best.0.max(0.0),
        argmax: best.1,
        n_centers: centers.len(),
        c2,
        satisfied: best.0 < 1.0 / c2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Modulation {
    /// `∫|ω(T)|^2 ψ0 / sup_t ∫|ω(t)|^2 ψ0`; `None` when the sup vanishes.
    pub ratio_omega: Option<f64>,
    pub ratio_j: Option<f64>,
    pub holds: bool,
}

pub fn modulation_check<S: SnapshotSource + ?Sized>(series: &S, psi0: &TestFunction) -> Result<Modulation> {
    let s = psi0.sample(series.grid());
    let mut w_hist = Vec::with_capacity(series.len());
    let mut j_hist = Vec::with_capacity(series.len());
    for i in 0..series.len() {
        let (om, j) = curls(&*series.state(i)?);
        w_hist.push(s.integrate(&om.norm_squared()));
        j_hist.push(s.integrate(&j.norm_squared()));
    }
    let ratio = |h: &[f64]| {
        let sup = h.iter().cloned().fold(0.0, f64::max);
        (sup > 0.0).then(|| h[h.len() - 1] / sup)
    };
    let (ratio_omega, ratio_j) = (ratio(&w_hist), ratio(&j_hist));
    let ok = |r: Option<f64>| r.is_some_and(|v| v >= 0.5);
    Ok(Modulation {
        ratio_omega,
        ratio_j,
        holds: ok(ratio_omega) && ok(ratio_j),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionParams {
    pub center: [f64; 3],
    pub r0: f64,
    pub sigma0: f64,
    pub beta: f64,
    /// `None` selects twice the space-time gradient rms.
    pub m_u: Option<f64>,
    pub m_b: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub n_centers: usize,
    pub c2: f64,
    pub interpolation: Interpolation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub coherence: Estimate,
    pub smoothness: Estimate,
    /// Smoothness holds iff the max ratio is at most 1.
    pub smoothness_holds: bool,
    pub localization: Localization,
    pub modulation: Modulation,
    pub r_max: f64,
}

pub fn check_all<S: SnapshotSource + ?Sized>(
    series: &S,
    psi0: &TestFunction,
    p: &AssumptionParams,
) -> Result<AssumptionReport> {
    let r_max = interaction_radius(p.sigma0, p.beta);
    let cfg = SamplingConfig {
        center: p.center,
        x_radius: 2.0 * p.r0 + p.r0.powf(2.0 / 3.0),
        r_max,
        n_samples: p.n_samples,
        seed: p.seed,
    };
    // a vanishing gradient field makes M = 0; any positive M is then vacuous
    let pick = |m: Option<f64>, magnetic: bool| -> Result<f64> {
        let m = match m {
            Some(m) => m,
            None => default_threshold(series, magnetic)?,
        };
        Ok(m.max(f64::MIN_POSITIVE))
    };
    let coherence = coherence_constant(series, pick(p.m_u, false)?, &cfg, p.interpolation)?;
    let smoothness = current_smoothness(
        series,
        pick(p.m_b, true)?,
        &SamplingConfig {
            seed: p.seed.wrapping_add(1),
            ..cfg
        },
        p.interpolation,
    )?;
    let localization = localization_check(series, p.center, p.r0, r_max, p.n_centers, p.c2)?;
    let modulation = modulation_check(series, psi0)?;
    Ok(AssumptionReport {
        smoothness_holds: smoothness.value <= 1.0,
        coherence,
        smoothness,
        localization,
        modulation,
        r_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trilinear_is_exact_on_grid_and_linear_between() {
        let g = GridSpec::new(8, 8.0).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0] + 2.0 * x[1] - x[2]);
        assert!((trilinear(&f, g.coords(37)) - f.values()[37]).abs() < 1e-14);
        let v = trilinear(&f, [1.25, 2.5, 3.75]);
        assert!((v - (1.25 + 5.0 - 3.75)).abs() < 1e-12);
    }

    #[test]
    fn plans_extend_as_prefixes() {
        let g = GridSpec::new(8, 1.0).unwrap();
        let cfg = SamplingConfig {
            center: [0.5; 3],
            x_radius: 0.4,
            r_max: 0.1,
            n_samples: 20,
            seed: 9,
        };
        let long = sample_plan(g, 3, &cfg);
        let short = sample_plan(g, 3, &SamplingConfig { n_samples: 7, ..cfg });
        assert_eq!(&long[..7], &short[..]);
        assert!(long.iter().all(|s| norm(s.y) <= 0.1 && s.t_index < 3));
    }
}

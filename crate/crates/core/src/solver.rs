//! Pseudo-spectral solver for incompressible resistive MHD on the periodic box.
//!
//! The velocity equation is advanced in rotational form, `u × ω + j × b`,
//! with the pressure removed by projection; the induction equation as
//! `∇ × (u × b)`. Diffusion is integrated exactly by an integrating factor
//! and the remaining terms by classical RK4. Nonlinear products are
//! truncated with the 2/3 rule.

use crate::analytic::random_solenoidal;
use crate::error::{Error, Result};
use crate::grid::{cross, norm, GridSpec, VectorField3};
use crate::spectral::{VectorSpectrum, Wavenumbers};
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::f64::consts::PI;

/// Velocity and magnetic field at one instant. Pressure is never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct MhdState {
    pub t: f64,
    pub u: VectorField3,
    pub b: VectorField3,
}

impl MhdState {
    pub fn zero(grid: GridSpec) -> Self {
        Self {
            t: 0.0,
            u: VectorField3::zeros(grid),
            b: VectorField3::zeros(grid),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.u.grid()
    }

    /// `½ ∫ (|u|^2 + |b|^2) dx`.
    pub fn energy(&self) -> f64 {
        self.u.energy() + self.b.energy()
    }

    /// `∫ u·b dx`.
    pub fn cross_helicity(&self) -> f64 {
        self.u.dot(&self.b).integrate()
    }

    /// Largest of the relative spectral divergences of `u` and `b`.
    pub fn divergence_residual(&self) -> f64 {
        let wn = Wavenumbers::new(self.grid());
        relative_divergence(&VectorSpectrum::of(&self.u), &wn)
            .max(relative_divergence(&VectorSpectrum::of(&self.b), &wn))
    }
}

/// `‖k·v̂‖ / ‖|k| v̂‖` in the spectral 2-norm; zero for a constant field.
pub fn relative_divergence(v: &VectorSpectrum, wn: &Wavenumbers) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (idx, m) in wn.modes() {
        let k = wn.k_derivative(m);
        let c = [
            v.components[0].data()[idx],
            v.components[1].data()[idx],
            v.components[2].data()[idx],
        ];
        let kv = c[0] * k[0] + c[1] * k[1] + c[2] * k[2];
        num += kv.norm_sqr();
        den += wn.k_squared(m) * (c[0].norm_sqr() + c[1].norm_sqr() + c[2].norm_sqr());
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TimeStep {
    /// Upper bound on the step; each snapshot interval is split evenly.
    Fixed(f64),
    /// Advective Courant number `dt·max(|u|+|b|)/dx`, at most 0.5.
    Cfl(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nu: f64,
    pub eta_m: f64,
    pub time_step: TimeStep,
    pub t_final: f64,
    pub n_snapshots: usize,
    pub dealias: bool,
    /// Any field component above this magnitude is treated as blow-up.
    pub blowup_cap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nu: 1.0,
            eta_m: 1.0,
            time_step: TimeStep::Cfl(0.4),
            t_final: 1.0,
            n_snapshots: 48,
            dealias: true,
            blowup_cap: 1e8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.eta_m > 0.0 && self.eta_m.is_finite()) {
            return bad(format!("eta_m must be positive, got {}", self.eta_m));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!("final time must be positive, got {}", self.t_final));
        }
        if self.n_snapshots < 2 {
            return bad(format!("need at least 2 snapshots, got {}", self.n_snapshots));
        }
        match self.time_step {
            TimeStep::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => {
                bad(format!("time step must be positive, got {dt}"))
            }
            TimeStep::Cfl(c) if !(c > 0.0 && c <= 0.5) => bad(format!("CFL number must lie in (0, 0.5], got {c}")),
            _ => Ok(()),
        }
    }
}

/// Random access to a time-ordered sequence of states that need not be
/// held in memory.
pub trait SnapshotSource {
    fn grid(&self) -> GridSpec;
    fn times(&self) -> Vec<f64>;
    fn state(&self, i: usize) -> Result<Cow<'_, MhdState>>;

    fn len(&self) -> usize {
        self.times().len()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn duration(&self) -> f64 {
        let t = self.times();
        match (t.first(), t.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

impl SnapshotSource for SnapshotSeries {
    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn times(&self) -> Vec<f64> {
        SnapshotSeries::times(self)
    }

    fn state(&self, i: usize) -> Result<Cow<'_, MhdState>> {
        self.states
            .get(i)
            .map(Cow::Borrowed)
            .ok_or_else(|| Error::InvalidConfig(format!("no snapshot {i}")))
    }
}

/// Vorticity and current of a state.
pub fn curls(state: &MhdState) -> (VectorField3, VectorField3) {
    let wn = Wavenumbers::new(state.grid());
    (
        VectorSpectrum::of(&state.u).curl(&wn).to_field(),
        VectorSpectrum::of(&state.b).curl(&wn).to_field(),
    )
}

/// Time-ordered states over `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSeries {
    grid: GridSpec,
    states: Vec<MhdState>,
}

impl SnapshotSeries {
    pub fn new(states: Vec<MhdState>) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::InvalidConfig("snapshot series is empty".into()))?;
        let grid = first.grid();
        if states.iter().any(|s| s.grid() != grid) {
            return Err(Error::InvalidGrid("snapshots use different grids".into()));
        }
        if states.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidConfig(
                "snapshot times must be strictly increasing".into(),
            ));
        }
        Ok(Self { grid, states })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[MhdState] {
        &self.states
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    /// Length of the time window, `t_last - t_first`.
    pub fn duration(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.t) - self.states[0].t
    }

    pub fn last(&self) -> &MhdState {
        self.states.last().expect("non-empty series")
    }

    /// Vorticity and current of snapshot `i`, recomputed from `u` and `b`.
    pub fn derived(&self, i: usize) -> (VectorField3, VectorField3) {
        curls(&self.states[i])
    }
}

struct Integrator {
    grid: GridSpec,
    wn: Wavenumbers,
    k2: Vec<f64>,
    nu: f64,
    eta_m: f64,
    dealias: bool,
    cap: f64,
}

/// Nonlinear tendencies and the largest `|u| + |b|` seen while forming them.
struct Tendency {
    du: VectorSpectrum,
    db: VectorSpectrum,
    max_speed: f64,
}

impl Integrator {
    fn new(grid: GridSpec, cfg: &SolverConfig) -> Self {
        let wn = Wavenumbers::new(grid);
        let mut k2 = vec![0.0; (grid.n() / 2 + 1) * grid.n() * grid.n()];
        for (idx, m) in wn.modes() {
            k2[idx] = wn.k_squared(m);
        }
        Self {
            grid,
            wn,
            k2,
            nu: cfg.nu,
            eta_m: cfg.eta_m,
            dealias: cfg.dealias,
            cap: cfg.blowup_cap,
        }
    }

    fn tendency(&self, u: &VectorSpectrum, b: &VectorSpectrum, t: f64) -> Result<Tendency> {
        let uf = u.to_field();
        let bf = b.to_field();
        let wf = u.curl(&self.wn).to_field();
        let jf = b.curl(&self.wn).to_field();
        let n = self.grid.len();
        let mut lorentz = VectorField3::zeros(self.grid);
        let mut emf = VectorField3::zeros(self.grid);
        let mut max_speed: f64 = 0.0;
        let mut max_val: f64 = 0.0;
        for idx in 0..n {
            let (uu, bb, ww, jj) = (uf.at(idx), bf.at(idx), wf.at(idx), jf.at(idx));
            for v in uu.iter().chain(bb.iter()) {
                if !v.is_finite() {
                    return Err(Error::BlowUp {
                        time: t,
                        reason: "non-finite field value".into(),
                    });
                }
                max_val = max_val.max(v.abs());
            }
            max_speed = max_speed.max(norm(uu) + norm(bb));
            let f1 = cross(uu, ww);
            let f2 = cross(jj, bb);
            let g = cross(uu, bb);
            for a in 0..3 {
                lorentz.component_mut(a).values_mut()[idx] = f1[a] + f2[a];
                emf.component_mut(a).values_mut()[idx] = g[a];
            }
        }
        if max_val > self.cap {
            return Err(Error::BlowUp {
                time: t,
                reason: format!("field magnitude {max_val:.3e} exceeds cap {:.3e}", self.cap),
            });
        }
        let mut du = VectorSpectrum::of(&lorentz);
        let mut g = VectorSpectrum::of(&emf);
        if self.dealias {
            du.dealias(&self.wn);
            g.dealias(&self.wn);
        }
        du.project(&self.wn);
        let db = g.curl(&self.wn);
        Ok(Tendency { du, db, max_speed })
    }

    fn decay(&self, rate: f64, h: f64) -> Vec<f64> {
        self.k2.iter().map(|k2| (-rate * k2 * h).exp()).collect()
    }

    /// One integrating-factor RK4 step of length `h` from time `t`.
    fn step(
        &self,
        u: &VectorSpectrum,
        b: &VectorSpectrum,
        t: f64,
        h: f64,
    ) -> Result<(VectorSpectrum, VectorSpectrum, f64)> {
        let (eu_h, eu_half) = (self.decay(self.nu, h), self.decay(self.nu, 0.5 * h));
        let (eb_h, eb_half) = (self.decay(self.eta_m, h), self.decay(self.eta_m, 0.5 * h));

        // x_out = E ∘ (x + c·k)
        let stage = |x: &VectorSpectrum, k: &VectorSpectrum, c: f64, e: &[f64]| {
            let mut out = x.clone();
            for a in 0..3 {
                let o = out.components[a].data_mut();
                let kd = k.components[a].data();
                for i in 0..o.len() {
                    o[i] = (o[i] + kd[i] * c) * e[i];
                }
            }
            out
        };
        // x_out = E_full ∘ x + h·E_half ∘ k
        let third = |x: &VectorSpectrum, k: &VectorSpectrum, e_full: &[f64], e_half: &[f64]| {
            let mut out = x.clone();
            for a in 0..3 {
                let o = out.components[a].data_mut();
                let kd = k.components[a].data();
                for i in 0..o.len() {
                    o[i] = o[i] * e_full[i] + kd[i] * (h * e_half[i]);
                }
            }
            out
        };
        let finish = |x: &VectorSpectrum, k: [&VectorSpectrum; 4], e_full: &[f64], e_half: &[f64]| {
            let mut out = x.clone();
            for a in 0..3 {
                let o = out.components[a].data_mut();
                let (k1, k2, k3, k4) = (
                    k[0].components[a].data(),
                    k[1].components[a].data(),
                    k[2].components[a].data(),
                    k[3].components[a].data(),
                );
                for i in 0..o.len() {
                    o[i] = o[i] * e_full[i]
                        + (k1[i] * e_full[i] + (k2[i] + k3[i]) * (2.0 * e_half[i]) + k4[i]) * (h / 6.0);
                }
            }
            out
        };

        let a = self.tendency(u, b, t)?;
        let max_speed = a.max_speed;
        let u1 = stage(u, &a.du, 0.5 * h, &eu_half);
        let b1 = stage(b, &a.db, 0.5 * h, &eb_half);
        let bt = self.tendency(&u1, &b1, t + 0.5 * h)?;
        let zero = VectorSpectrum::zeros(self.grid);
        let mut u2 = stage(u, &zero, 0.0, &eu_half);
        let mut b2 = stage(b, &zero, 0.0, &eb_half);
        add_scaled(&mut u2, &bt.du, 0.5 * h);
        add_scaled(&mut b2, &bt.db, 0.5 * h);
        let ct = self.tendency(&u2, &b2, t + 0.5 * h)?;
        let u3 = third(u, &ct.du, &eu_h, &eu_half);
        let b3 = third(b, &ct.db, &eb_h, &eb_half);
        let dt = self.tendency(&u3, &b3, t + h)?;
        let mut un = finish(u, [&a.du, &bt.du, &ct.du, &dt.du], &eu_h, &eu_half);
        let bn = finish(b, [&a.db, &bt.db, &ct.db, &dt.db], &eb_h, &eb_half);
        un.project(&self.wn);
        Ok((un, bn, max_speed))
    }
}

fn add_scaled(x: &mut VectorSpectrum, k: &VectorSpectrum, c: f64) {
    for a in 0..3 {
        let o = x.components[a].data_mut();
        let kd = k.components[a].data();
        for i in 0..o.len() {
            o[i] += kd[i] * c;
        }
    }
}

fn max_speed(u: &VectorField3, b: &VectorField3) -> f64 {
    (0..u.grid().len())
        .map(|i| norm(u.at(i)) + norm(b.at(i)))
        .fold(0.0, f64::max)
}

fn step_length(cfg: &SolverConfig, grid: GridSpec, speed: f64, interval: f64) -> f64 {
    match cfg.time_step {
        TimeStep::Fixed(dt) => dt,
        TimeStep::Cfl(c) => {
            if speed > 0.0 {
                c * grid.dx() / speed
            } else {
                interval
            }
        }
    }
}

/// Advance one step. With `TimeStep::Cfl` the step is sized from the
/// current state.
pub fn step(state: &MhdState, cfg: &SolverConfig) -> Result<MhdState> {
    cfg.validate()?;
    let grid = state.grid();
    let h = step_length(cfg, grid, max_speed(&state.u, &state.b), cfg.t_final);
    let integ = Integrator::new(grid, cfg);
    let (u, b, _) = integ.step(&VectorSpectrum::of(&state.u), &VectorSpectrum::of(&state.b), state.t, h)?;
    Ok(MhdState {
        t: state.t + h,
        u: u.to_field(),
        b: b.to_field(),
    })
}

/// Integrate to `cfg.t_final`, handing each snapshot to `sink` as soon as it
/// is produced. Snapshot `k` sits at exactly `k·T/(n_snapshots-1)`.
pub fn run_streaming(init: &MhdState, cfg: &SolverConfig, mut sink: impl FnMut(&MhdState) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    let grid = init.grid();
    let integ = Integrator::new(grid, cfg);
    let intervals = cfg.n_snapshots - 1;
    let interval = cfg.t_final / intervals as f64;

    let mut u = VectorSpectrum::of(&init.u);
    let mut b = VectorSpectrum::of(&init.b);
    u.project(&integ.wn);
    let first = MhdState {
        t: 0.0,
        u: u.to_field(),
        b: b.to_field(),
    };
    let mut speed = max_speed(&first.u, &first.b);
    sink(&first)?;

    for k in 0..intervals {
        let t0 = k as f64 * interval;
        let target = step_length(cfg, grid, speed, interval);
        let steps = ((interval / target) - 1e-9).ceil().max(1.0) as usize;
        let h = interval / steps as f64;
        for s in 0..steps {
            let (un, bn, sp) = integ.step(&u, &b, t0 + s as f64 * h, h)?;
            u = un;
            b = bn;
            speed = sp;
        }
        let state = MhdState {
            t: (k + 1) as f64 * cfg.t_final / intervals as f64,
            u: u.to_field(),
            b: b.to_field(),
        };
        speed = speed.max(max_speed(&state.u, &state.b));
        sink(&state)?;
    }
    Ok(())
}

/// Integrate and collect every snapshot.
pub fn run(init: &MhdState, cfg: &SolverConfig) -> Result<SnapshotSeries> {
    let mut states = Vec::with_capacity(cfg.n_snapshots);
    run_streaming(init, cfg, |s| {
        states.push(s.clone());
        Ok(())
    })?;
    SnapshotSeries::new(states)
}

fn rms(v: &VectorField3) -> f64 {
    let vol = v.grid().length().powi(3);
    (v.norm_squared().integrate() / vol).sqrt()
}

/// Taylor–Green-type MHD initial condition.
///
/// `u ∝ (sin x cos y cos z, −cos x sin y cos z, 0)` and
/// `b ∝ (cos x sin y sin z, sin x cos y sin z, −2 sin x sin y cos z)` (in
/// units of `2π/L`), optionally perturbed by a seeded random solenoidal field
/// with `|m| ≤ 2` whose rms is `perturbation` times the base rms. Each field
/// is then scaled so its rms magnitude equals its amplitude, giving energy
/// `½ (amp_u^2 + amp_b^2) L^3`.
pub fn taylor_green_mhd_init(grid: GridSpec, amp_u: f64, amp_b: f64, perturbation: f64, seed: Option<u64>) -> MhdState {
    let k = 2.0 * PI / grid.length();
    let base_u = VectorField3::from_fn(grid, |x| {
        let (a, b, c) = (k * x[0], k * x[1], k * x[2]);
        [a.sin() * b.cos() * c.cos(), -a.cos() * b.sin() * c.cos(), 0.0]
    });
    let base_b = VectorField3::from_fn(grid, |x| {
        let (a, b, c) = (k * x[0], k * x[1], k * x[2]);
        [
            a.cos() * b.sin() * c.sin(),
            a.sin() * b.cos() * c.sin(),
            -2.0 * a.sin() * b.sin() * c.cos(),
        ]
    });
    let perturb = |base: VectorField3, salt: u64| -> VectorField3 {
        match seed {
            Some(s) if perturbation > 0.0 => {
                let p = random_solenoidal(grid, 2, s.wrapping_mul(2).wrapping_add(salt));
                let scale = perturbation * rms(&base) / rms(&p);
                base.add(&p.scale(scale))
            }
            _ => base,
        }
    };
    let normalize = |v: VectorField3, amp: f64| -> VectorField3 {
        if amp == 0.0 {
            return VectorField3::zeros(grid);
        }
        let wn = Wavenumbers::new(grid);
        let mut spec = VectorSpectrum::of(&v);
        spec.project(&wn);
        let v = spec.to_field();
        v.scale(amp / rms(&v))
    };
    MhdState {
        t: 0.0,
        u: normalize(perturb(base_u, 0), amp_u),
        b: normalize(perturb(base_b, 1), amp_b),
    }
}

/// Dissipation rate `nu ∫|ω|^2 + eta_m ∫|j|^2` of one state.
pub fn dissipation(state: &MhdState, nu: f64, eta_m: f64) -> f64 {
    let wn = Wavenumbers::new(state.grid());
    let w = VectorSpectrum::of(&state.u).curl(&wn).to_field();
    let j = VectorSpectrum::of(&state.b).curl(&wn).to_field();
    nu * w.norm_squared().integrate() + eta_m * j.norm_squared().integrate()
}

/// Worst relative violation of the energy balance
/// `dE/dt = -(nu ∫|ω|^2 + eta_m ∫|j|^2)` across snapshot intervals, with the
/// dissipation at each interval midpoint taken as the endpoint mean.
pub fn energy_balance_residual(series: &SnapshotSeries, cfg: &SolverConfig) -> f64 {
    let energies: Vec<f64> = series.states().iter().map(MhdState::energy).collect();
    let diss: Vec<f64> = series
        .states()
        .iter()
        .map(|s| dissipation(s, cfg.nu, cfg.eta_m))
        .collect();
    let mut worst: f64 = 0.0;
    for k in 0..series.len() - 1 {
        let dt = series.states()[k + 1].t - series.states()[k].t;
        let e_mid = 0.5 * (energies[k] + energies[k + 1]);
        if e_mid == 0.0 {
            continue;
        }
        let de = energies[k + 1] - energies[k];
        let d_mid = 0.5 * (diss[k] + diss[k + 1]);
        worst = worst.max((de + d_mid * dt).abs() / (e_mid * dt));
    }
    worst
}

/// `(1/L^3) Σ |û(k)|^2` in the dealiased band's outer shell relative to the
/// total: a cheap resolution indicator.
pub fn spectral_tail_fraction(v: &VectorField3) -> f64 {
    let grid = v.grid();
    let wn = Wavenumbers::new(grid);
    let spec = VectorSpectrum::of(v);
    let n = grid.n() as i64;
    let (mut tail, mut total) = (0.0, 0.0);
    for (idx, m) in wn.modes() {
        let w = if m[0] == 0 || m[0] == (grid.n() / 2) { 1.0 } else { 2.0 };
        let p: f64 = spec.components.iter().map(|c| c.data()[idx].norm_sqr()).sum::<f64>() * w;
        total += p;
        let kmax = (0..3).map(|a| wn.index[a][m[a]].abs()).max().unwrap_or(0);
        if 3 * kmax >= n - 6 {
            tail += p;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

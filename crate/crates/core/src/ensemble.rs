//! Lattice partitions of unity and (K1, K2)-ensembles of test functions.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::profile::Smoothstep;
use crate::test_function::{LatticeWindow, Samples, TestFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum grid points per `R'` for a lattice partition.
pub const MIN_POINTS_PER_SCALE: f64 = 8.0;

/// Validation slack for pointwise inequalities.
pub const POINTWISE_TOL: f64 = 1e-12;

/// Default global multiplicity.
pub const DEFAULT_K1: usize = 128;
/// Default local multiplicity.
pub const DEFAULT_K2: usize = 8;

/// Where the partition lattice sits: points `anchor + offset + 2R'p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeFrame {
    pub anchor: [f64; 3],
    pub offset: [f64; 3],
}

impl LatticeFrame {
    pub fn centered(anchor: [f64; 3]) -> Self {
        Self {
            anchor,
            offset: [0.0; 3],
        }
    }

    /// Offset drawn uniformly from `[0, 2R')^3`.
    pub fn jittered(anchor: [f64; 3], r_prime: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offset = [0; 3].map(|_| rng.gen_range(0.0..2.0 * r_prime));
        Self { anchor, offset }
    }
}

#[derive(Clone, Debug)]
pub struct Partition {
    pub pieces: Vec<TestFunction>,
    pub r_prime: f64,
    /// Largest `R'|∇ψ_p|/ψ_p^rho` over all pieces at grid points.
    pub c0_grad: f64,
    /// Largest `R'^2|Δψ_p|/ψ_p^(2rho-1)` over all pieces at grid points.
    pub c0_lap: f64,
}

impl Partition {
    pub fn c0_prime(&self) -> f64 {
        self.c0_grad.max(self.c0_lap)
    }
}

fn check_resolution(r_prime: f64, grid: GridSpec) -> Result<()> {
    let ppr = r_prime / grid.dx();
    if ppr < MIN_POINTS_PER_SCALE {
        return Err(Error::ResolutionTooCoarse {
            scale: r_prime,
            points_per_scale: ppr,
            required: MIN_POINTS_PER_SCALE,
        });
    }
    Ok(())
}

fn min_image(d: f64, length: f64) -> f64 {
    d - length * (d / length).round()
}

/// Split `psi` into the nonzero pieces `psi·h_p` of the lattice partition of
/// unity at scale `r_prime`. A piece is kept when the open support of `g_p`
/// meets the support of `psi`.
pub fn lattice_partition(psi: &TestFunction, r_prime: f64, grid: GridSpec, frame: LatticeFrame) -> Result<Partition> {
    if !(r_prime > 0.0 && r_prime < psi.scale()) {
        return Err(Error::InvalidConfig(format!(
            "partition scale {r_prime} must lie in (0, {})",
            psi.scale()
        )));
    }
    check_resolution(r_prime, grid)?;
    let mut part = Partition {
        pieces: Vec::new(),
        r_prime,
        c0_grad: 0.0,
        c0_lap: 0.0,
    };
    let Some(bx) = psi.support_box() else {
        return Ok(part);
    };
    let length = psi.length();
    let q = psi
        .profile_order()
        .unwrap_or_else(|| Smoothstep::order_for_rho(psi.rho()));
    let profile = Smoothstep::new(q);
    let step = 2.0 * r_prime;
    // support box in the lattice's local frame
    let local: [[f64; 2]; 3] = std::array::from_fn(|a| {
        let lo = min_image(bx[a][0] - frame.anchor[a], length) - frame.offset[a];
        [lo, lo + (bx[a][1] - bx[a][0])]
    });
    let ball = match psi.base() {
        crate::test_function::Base::Radial { center, radius, .. } => Some((*center, 2.0 * radius)),
        _ => None,
    };
    let ranges: [(i64, i64); 3] = std::array::from_fn(|a| {
        (
            ((local[a][0] - step) / step).floor() as i64,
            ((local[a][1] + step) / step).ceil() as i64,
        )
    });
    for pz in ranges[2].0..=ranges[2].1 {
        for py in ranges[1].0..=ranges[1].1 {
            for px in ranges[0].0..=ranges[0].1 {
                let p = [px, py, pz];
                // open cube (c - 2R', c + 2R') against the support box
                let mut clipped = [[0.0; 2]; 3];
                let mut empty = false;
                for a in 0..3 {
                    let c = step * p[a] as f64;
                    clipped[a] = [local[a][0].max(c - step), local[a][1].min(c + step)];
                    if clipped[a][0] >= clipped[a][1] {
                        empty = true;
                    }
                }
                if empty {
                    continue;
                }
                if let Some((center, radius)) = ball {
                    let mut d2 = 0.0;
                    for a in 0..3 {
                        let bc = min_image(center[a] - frame.anchor[a], length) - frame.offset[a];
                        let d = (clipped[a][0] - bc).max(bc - clipped[a][1]).max(0.0);
                        d2 += d * d;
                    }
                    if d2.sqrt() >= radius {
                        continue;
                    }
                }
                let window = LatticeWindow {
                    anchor: frame.anchor,
                    offset: frame.offset,
                    r_prime,
                    index: p,
                    profile,
                };
                let mut piece = psi.windowed(window, psi.c0());
                let (g, l) = piece.constants_at(&piece.sample(grid));
                part.c0_grad = part.c0_grad.max(g);
                part.c0_lap = part.c0_lap.max(l);
                piece = piece.with_c0(g.max(l));
                part.pieces.push(piece);
            }
        }
    }
    let c0 = part.c0_prime();
    for piece in &mut part.pieces {
        *piece = piece.clone().with_c0(c0);
    }
    Ok(part)
}

/// `Σ_p g_p` at a local lattice coordinate `t`: the product of the 1D
/// periodizations.
pub fn lattice_g_sum(r_prime: f64, q: u32, t: [f64; 3]) -> f64 {
    t.iter().map(|&x| lattice_w_sum(r_prime, q, x)).product()
}

/// One-dimensional periodization `W(t) = Σ_m w(t - 2R'm)`.
pub fn lattice_w_sum(r_prime: f64, q: u32, t: f64) -> f64 {
    LatticeWindow {
        anchor: [0.0; 3],
        offset: [0.0; 3],
        r_prime,
        index: [0; 3],
        profile: Smoothstep::new(q),
    }
    .periodized(t)
    .v
}

/// Outcome of checking an ensemble against its defining properties.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub n_members: usize,
    /// `(R0/R)^3` and `K1 (R0/R)^3`.
    pub count_bounds: (f64, f64),
    /// `max (ψ_i - ψ0)` over grid points and members.
    pub max_excess: f64,
    /// `max (ψ0 - Σψ_i)` over grid points.
    pub max_cover_deficit: f64,
    /// Most members nonzero at one grid point of `B(0, 2R0)`.
    pub max_multiplicity: usize,
    /// Largest measured bound constant over members.
    pub max_c0: f64,
    pub property1: bool,
    pub property2: bool,
    pub property3: bool,
    pub bounds: bool,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.property1 && self.property2 && self.property3 && self.bounds
    }
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    psi0: TestFunction,
    scale: f64,
    members: Vec<TestFunction>,
    parent_count: usize,
    parent_scale: f64,
    k1: usize,
    k2: usize,
    c0: f64,
    report: ValidationReport,
}

impl Ensemble {
    /// Build and validate on `grid`; fails with `InvalidEnsemble` if any
    /// property is violated.
    pub fn new(
        psi0: TestFunction,
        scale: f64,
        members: Vec<TestFunction>,
        k1: usize,
        k2: usize,
        c0: f64,
        grid: GridSpec,
    ) -> Result<Self> {
        let n = members.len();
        Self::with_parents(psi0, scale, members, n, scale, k1, k2, c0, grid)
    }

    #[allow(clippy::too_many_arguments)]
    fn with_parents(
        psi0: TestFunction,
        scale: f64,
        members: Vec<TestFunction>,
        parent_count: usize,
        parent_scale: f64,
        k1: usize,
        k2: usize,
        c0: f64,
        grid: GridSpec,
    ) -> Result<Self> {
        if k1 == 0 || k2 == 0 {
            return Err(Error::InvalidEnsemble("multiplicities must be positive".into()));
        }
        let report = validate(&psi0, scale, &members, k1, k2, c0, grid);
        if !report.ok() {
            return Err(Error::InvalidEnsemble(describe(&report)));
        }
        Ok(Self {
            psi0,
            scale,
            members,
            parent_count,
            parent_scale,
            k1,
            k2,
            c0,
            report,
        })
    }

    pub fn psi0(&self) -> &TestFunction {
        &self.psi0
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn members(&self) -> &[TestFunction] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self) -> usize {
        self.k2
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    /// Parent count and scale for the grouped normalization; equal to the
    /// ensemble's own for unrefined ensembles.
    pub fn parents(&self) -> (usize, f64) {
        (self.parent_count, self.parent_scale)
    }

    /// Grid samples of every member, for repeated averaging.
    pub fn sampled(&self, grid: GridSpec) -> SampledEnsemble {
        SampledEnsemble {
            grid,
            scale: self.scale,
            parent_count: self.parent_count,
            parent_scale: self.parent_scale,
            members: self.members.iter().map(|m| m.sample(grid)).collect(),
        }
    }
}

fn describe(r: &ValidationReport) -> String {
    let mut out = Vec::new();
    if !r.property1 {
        out.push(format!(
            "cover violated (excess {:.3e}, deficit {:.3e})",
            r.max_excess, r.max_cover_deficit
        ));
    }
    if !r.property2 {
        out.push(format!(
            "member count {} outside [{:.3}, {:.3}]",
            r.n_members, r.count_bounds.0, r.count_bounds.1
        ));
    }
    if !r.property3 {
        out.push(format!("local multiplicity {} too large", r.max_multiplicity));
    }
    if !r.bounds {
        out.push(format!("member bound constant {:.4} exceeds C0", r.max_c0));
    }
    out.join("; ")
}

/// Check cover, count, multiplicity and bound constants on the grid.
pub fn validate(
    psi0: &TestFunction,
    scale: f64,
    members: &[TestFunction],
    k1: usize,
    k2: usize,
    c0: f64,
    grid: GridSpec,
) -> ValidationReport {
    let base = psi0.to_field(grid);
    let b = base.values();
    let mut sum = vec![0.0; grid.len()];
    let mut mult = vec![0u32; grid.len()];
    let mut max_excess = f64::NEG_INFINITY;
    let mut max_c0: f64 = 0.0;
    for m in members {
        let s = m.sample(grid);
        for (&i, j) in s.idx.iter().zip(&s.jets) {
            max_excess = max_excess.max(j.v - b[i]);
            sum[i] += j.v;
            mult[i] += 1;
        }
        let (g, l) = m.constants_at(&s);
        max_c0 = max_c0.max(g).max(l);
    }
    let deficit = b.iter().zip(&sum).map(|(p, s)| p - s).fold(f64::NEG_INFINITY, f64::max);
    let c = psi0.center();
    let r2 = 2.0 * psi0.scale();
    let mut max_mult = 0usize;
    for (idx, &m) in mult.iter().enumerate() {
        if m as usize <= max_mult {
            continue;
        }
        let d = grid.displacement(grid.coords(idx), c);
        if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() <= r2 {
            max_mult = m as usize;
        }
    }
    let ratio = (psi0.scale() / scale).powi(3);
    let n = members.len();
    let bounds = (ratio, k1 as f64 * ratio);
    ValidationReport {
        n_members: n,
        count_bounds: bounds,
        max_excess: if members.is_empty() { 0.0 } else { max_excess },
        max_cover_deficit: deficit,
        max_multiplicity: max_mult,
        max_c0,
        property1: max_excess <= POINTWISE_TOL && deficit <= POINTWISE_TOL,
        property2: n as f64 >= bounds.0 * (1.0 - 1e-12) && n as f64 <= bounds.1 * (1.0 + 1e-12),
        property3: max_mult <= k2,
        bounds: max_c0 <= c0 * (1.0 + 1e-9),
    }
}

/// Ensemble at scale `R` obtained by partitioning `psi0`; `{psi0}` itself
/// when `R ≥ R0`. `jitter` shifts the lattice by a seeded offset.
pub fn canonical_ensemble(
    psi0: &TestFunction,
    scale: f64,
    k1: usize,
    k2: usize,
    grid: GridSpec,
    jitter: Option<u64>,
) -> Result<Ensemble> {
    if scale >= psi0.scale() * (1.0 - 1e-12) {
        return Ensemble::new(psi0.clone(), psi0.scale(), vec![psi0.clone()], k1, k2, psi0.c0(), grid);
    }
    let frame = match jitter {
        Some(seed) => LatticeFrame::jittered(psi0.center(), scale, seed),
        None => LatticeFrame::centered(psi0.center()),
    };
    let part = lattice_partition(psi0, scale, grid, frame)?;
    let c0 = part.c0_prime();
    Ensemble::new(psi0.clone(), scale, part.pieces, k1, k2, c0, grid)
}

/// Partition every member on one lattice anchored at the center of `psi0`.
/// The result is validated as a `(64 K1, 8 K2, C0')`-ensemble.
pub fn refine_ensemble(e: &Ensemble, r_prime: f64, grid: GridSpec, jitter: Option<u64>) -> Result<Ensemble> {
    let frame = match jitter {
        Some(seed) => LatticeFrame::jittered(e.psi0.center(), r_prime, seed),
        None => LatticeFrame::centered(e.psi0.center()),
    };
    let mut pieces = Vec::new();
    let mut c0: f64 = 0.0;
    for m in &e.members {
        let part = lattice_partition(m, r_prime, grid, frame)?;
        c0 = c0.max(part.c0_prime());
        pieces.extend(part.pieces);
    }
    let pieces = pieces.into_iter().map(|p| p.with_c0(c0)).collect();
    Ensemble::with_parents(
        e.psi0.clone(),
        r_prime,
        pieces,
        e.members.len(),
        e.scale,
        64 * e.k1,
        8 * e.k2,
        c0,
        grid,
    )
}

/// Pre-sampled members for repeated averaging on one grid.
#[derive(Clone, Debug)]
pub struct SampledEnsemble {
    grid: GridSpec,
    scale: f64,
    parent_count: usize,
    parent_scale: f64,
    members: Vec<Samples>,
}

impl SampledEnsemble {
    pub fn members(&self) -> &[Samples] {
        &self.members
    }

    fn total(&self, f: &ScalarField, delta: f64) -> f64 {
        assert_eq!(f.grid(), self.grid, "field and ensemble grids differ");
        let vals = f.values();
        let per: Vec<f64> = self
            .members
            .iter()
            .map(|s| {
                s.integrate_with(self.grid, |i, j| {
                    if delta == 1.0 {
                        vals[i] * j.v
                    } else {
                        vals[i] * j.v.powf(delta)
                    }
                })
            })
            .collect();
        crate::grid::pairwise_sum(&per)
    }

    /// `(1/n) Σ (1/R^3) ∫ f ψ_i`.
    pub fn average(&self, f: &ScalarField) -> f64 {
        self.total(f, 1.0) / (self.members.len() as f64 * self.scale.powi(3))
    }

    /// `(1/n) Σ (1/R^3) ∫ f ψ_i^delta`.
    pub fn delta_average(&self, f: &ScalarField, delta: f64) -> f64 {
        self.total(f, delta) / (self.members.len() as f64 * self.scale.powi(3))
    }

    /// Pieces grouped by parent: `(1/n_parent) Σ_parents (1/R^3) Σ_pieces ∫ f·piece`.
    pub fn grouped_average(&self, f: &ScalarField) -> f64 {
        self.total(f, 1.0) / (self.parent_count as f64 * self.parent_scale.powi(3))
    }
}

/// Same per-member sums as [`SampledEnsemble`], sampling one member at a time.
fn streamed_total(f: &ScalarField, e: &Ensemble, delta: f64) -> f64 {
    let grid = f.grid();
    let vals = f.values();
    let per: Vec<f64> = e
        .members
        .iter()
        .map(|m| {
            m.sample(grid).integrate_with(grid, |i, j| {
                if delta == 1.0 {
                    vals[i] * j.v
                } else {
                    vals[i] * j.v.powf(delta)
                }
            })
        })
        .collect();
    crate::grid::pairwise_sum(&per)
}

/// `⟨F⟩_R = (1/n) Σ (1/R^3) ∫ f ψ_i dx`.
pub fn ensemble_average(f: &ScalarField, e: &Ensemble) -> f64 {
    streamed_total(f, e, 1.0) / (e.len() as f64 * e.scale.powi(3))
}

/// Parent-grouped average of a refined ensemble.
pub fn grouped_average(f: &ScalarField, e: &Ensemble) -> f64 {
    streamed_total(f, e, 1.0) / (e.parent_count as f64 * e.parent_scale.powi(3))
}

/// `(1/n) Σ (1/R^3) ∫ f ψ_i^delta dx`.
pub fn delta_average(f: &ScalarField, e: &Ensemble, delta: f64) -> f64 {
    streamed_total(f, e, delta) / (e.len() as f64 * e.scale.powi(3))
}

/// `F0 = (1/R0^3) ∫ f ψ0 dx`.
pub fn large_scale_mean(f: &ScalarField, psi0: &TestFunction) -> f64 {
    psi0.integrate(f) / psi0.scale().powi(3)
}

/// `(1/R0^3) ∫ f ψ0^delta dx`.
pub fn delta_large_scale_mean(f: &ScalarField, psi0: &TestFunction, delta: f64) -> f64 {
    let s = psi0.sample(f.grid());
    let v = f.values();
    s.integrate_with(f.grid(), |i, j| v[i] * j.v.powf(delta)) / psi0.scale().powi(3)
}

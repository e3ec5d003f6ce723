//! The four pipeline stages. Each stage reads its inputs from and writes its
//! outputs to the run directory so stages can be rerun independently.

use crate::config::{InitKind, RunConfig};
use crate::error::CliError;
use crate::snapshot::{snapshot_name, write_snapshot, BlowUpInfo, Manifest, ManifestEntry, SnapshotDir};
use enstrophy_core::analytic::abc_field;
use enstrophy_core::assumptions::{check_all, AssumptionParams, AssumptionReport};
use enstrophy_core::ensemble::MIN_POINTS_PER_SCALE;
use enstrophy_core::flux::{
    geometric_scales, integral_scale_quantities, kraichnan_scale, locality_ratios, scale_pairs, term_decomposition,
    verify_theorem, FluxReport, LocalityRow, ScaleQuantities, TermBreakdown, TheoremConfig, TimeIntegrals,
};
use enstrophy_core::solver::{run_streaming, taylor_green_mhd_init, MhdState, SnapshotSource};
use enstrophy_core::test_function::{make_refined, TemporalCutoff, TestFunction};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub const SNAPSHOT_DIR: &str = "snapshots";
pub const FLUX_REPORT: &str = "flux_report.json";
pub const FLUX_TABLE: &str = "flux_table.csv";
pub const PLOT_DATA: &str = "flux_plot.dat";
pub const ASSUMPTIONS: &str = "assumptions.json";
pub const SUMMARY: &str = "summary.txt";

#[derive(Clone, Debug)]
pub struct Run {
    pub config: RunConfig,
    pub out: PathBuf,
    pub verbose: bool,
}

impl Run {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>) -> Self {
        Self {
            config,
            out: out.into(),
            verbose: false,
        }
    }

    pub fn snapshot_dir(&self) -> PathBuf {
        self.out.join(SNAPSHOT_DIR)
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn initial_state(cfg: &RunConfig) -> MhdState {
    let grid = cfg.grid();
    match cfg.init {
        InitKind::TaylorGreen => taylor_green_mhd_init(grid, cfg.amp_u, cfg.amp_b, cfg.perturbation, Some(cfg.seed)),
        InitKind::Abc => {
            let v = abc_field(grid, 1.0, 1.0, 1.0);
            MhdState {
                t: 0.0,
                u: v.scale(cfg.amp_u),
                b: v.scale(cfg.amp_b),
            }
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Run the solver and write one snapshot per state plus the manifest.
pub fn simulate(run: &Run) -> Result<Manifest, CliError> {
    let cfg = &run.config;
    let dir = run.snapshot_dir();
    std::fs::create_dir_all(&dir)?;
    let mut manifest = Manifest {
        n: cfg.n,
        length: cfg.length,
        nu: cfg.nu,
        eta_m: cfg.eta_m,
        t_final: cfg.t_final,
        seed: cfg.seed,
        snapshots: Vec::new(),
        complete: false,
        blowup: None,
    };
    let init = initial_state(cfg);
    let mut io_error = None;
    let result = run_streaming(&init, &cfg.solver(), |s| {
        let k = manifest.snapshots.len();
        let file = snapshot_name(k);
        if let Err(e) = write_snapshot(&dir.join(&file), s) {
            io_error = Some(e);
            return Err(enstrophy_core::Error::InvalidConfig("snapshot write failed".into()));
        }
        run.log(format!("snapshot {k:>4}  t = {:.6e}  E = {:.6e}", s.t, s.energy()));
        manifest.snapshots.push(ManifestEntry {
            file,
            time: s.t,
            energy: s.energy(),
        });
        Ok(())
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    match result {
        Ok(()) => {
            manifest.complete = true;
            manifest.write(&dir)?;
            Ok(manifest)
        }
        Err(enstrophy_core::Error::BlowUp { time, reason }) => {
            manifest.blowup = Some(BlowUpInfo {
                time,
                reason: reason.clone(),
            });
            manifest.write(&dir)?;
            Err(CliError::BlowUp { time, reason })
        }
        Err(e) => Err(e.into()),
    }
}

fn open_snapshots(run: &Run) -> Result<SnapshotDir, CliError> {
    let dir = SnapshotDir::open(&run.snapshot_dir())?;
    let m = dir.manifest();
    if let Some(b) = &m.blowup {
        return Err(CliError::BlowUp {
            time: b.time,
            reason: format!("{} (snapshots are incomplete)", b.reason),
        });
    }
    if !m.complete {
        return Err(CliError::Format("snapshot manifest marks the run incomplete".into()));
    }
    let c = &run.config;
    if m.n != c.n || m.length != c.length || m.nu != c.nu || m.eta_m != c.eta_m {
        return Err(CliError::Config(
            "snapshots were produced with a different grid or diffusivity than the config".into(),
        ));
    }
    Ok(dir)
}

pub fn integral_test_function(cfg: &RunConfig) -> Result<TestFunction, CliError> {
    Ok(make_refined(cfg.center, cfg.r0, cfg.rho, cfg.c0, cfg.length)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleRange {
    /// `σ0/β`.
    pub kraichnan_lower: f64,
    /// Smallest scale the grid resolves for a lattice partition.
    pub resolution_lower: f64,
    pub lower: f64,
    pub upper: f64,
    /// The admissible range was empty and only `R0` is reported.
    pub empty: bool,
    pub enforced: bool,
    pub scales: Vec<f64>,
}

pub fn scale_range(cfg: &RunConfig, sigma0: f64) -> ScaleRange {
    let kraichnan_lower = sigma0 / cfg.beta;
    let resolution_lower = MIN_POINTS_PER_SCALE * cfg.grid().dx();
    let lower = kraichnan_lower.max(resolution_lower);
    let empty = !(lower <= cfg.r0);
    let scales = if empty {
        vec![cfg.r0]
    } else {
        geometric_scales(lower, cfg.r0, cfg.n_scales)
    };
    ScaleRange {
        kraichnan_lower,
        resolution_lower,
        lower,
        upper: cfg.r0,
        empty,
        enforced: cfg.enforce_range && !empty,
        scales,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnosis {
    pub status: &'static str,
    pub scale_range: ScaleRange,
    pub report: FluxReport,
    pub locality: Vec<LocalityRow>,
    /// Integral-scale flux `Φ0 = (1/(T R0^3)) ∫∫ φ ψ0`, with and without the
    /// temporal cutoff inside `φ`.
    pub phi0: f64,
    pub phi0_without_cutoff: f64,
    pub decomposition: Option<TermBreakdown>,
}

#[derive(Serialize)]
struct DegenerateReport<'a> {
    status: &'static str,
    error: String,
    quantities: &'a ScaleQuantities,
}

#[derive(Serialize)]
struct TableRow {
    #[serde(rename = "R")]
    r: f64,
    n_members: usize,
    phi_avg: f64,
    psi_avg: f64,
    #[serde(rename = "P0")]
    p0: f64,
    #[serde(rename = "E0")]
    big_e0: f64,
    e0: f64,
    sigma0: f64,
    #[serde(rename = "ratio_phi_over_P0")]
    ratio: f64,
}

fn time_integrals(run: &Run, dir: &SnapshotDir) -> Result<TimeIntegrals, CliError> {
    let c = &run.config;
    run.log(format!("accumulating time integrals over {} snapshots", dir.len()));
    let cutoff = TemporalCutoff::new(dir.duration())?;
    Ok(TimeIntegrals::from_series(dir, cutoff, c.rho, c.nu, c.eta_m)?)
}

/// Integral-scale quantities and `σ0`; writes a degenerate flux report and
/// fails when `P0` vanishes.
fn kraichnan(run: &Run, ti: &TimeIntegrals, psi0: &TestFunction) -> Result<(ScaleQuantities, f64), CliError> {
    let q = integral_scale_quantities(ti, psi0);
    match kraichnan_scale(&q) {
        Ok(s) => Ok((q, s)),
        Err(e) => {
            let e: CliError = e.into();
            std::fs::create_dir_all(&run.out)?;
            write_json(
                &run.out.join(FLUX_REPORT),
                &DegenerateReport {
                    status: "degenerate",
                    error: e.to_string(),
                    quantities: &q,
                },
            )?;
            Err(e)
        }
    }
}

pub fn diagnose(run: &Run) -> Result<Diagnosis, CliError> {
    let cfg = &run.config;
    let dir = open_snapshots(run)?;
    let psi0 = integral_test_function(cfg)?;
    let ti = time_integrals(run, &dir)?;
    let (q, sigma0) = kraichnan(run, &ti, &psi0)?;
    let range = scale_range(cfg, sigma0);
    run.log(format!(
        "sigma0 = {sigma0:.6e}, scales {:?}{}",
        range.scales,
        if range.empty { " (admissible range empty)" } else { "" }
    ));
    let tc = TheoremConfig {
        scales: range.scales.clone(),
        k1: cfg.k1,
        k2: cfg.k2,
        beta: cfg.beta,
        n_ensembles: cfg.n_ensembles,
        seed: cfg.seed,
        enforce_range: range.enforced,
    };
    let report = verify_theorem(&ti, &psi0, &tc)?;
    let locality = locality_ratios(&report, &scale_pairs(&report), 2.0 * report.psi_phi_residual + 1e-12);
    let norm = 1.0 / (ti.duration * cfg.r0.powi(3));
    let phi0 = psi0.integrate(&ti.flux_density()) * norm;
    let phi0_without_cutoff = psi0.integrate(&ti.flux_density_uncut()) * norm;
    run.log(format!(
        "Phi0 = {phi0:.6e} (without temporal cutoff {phi0_without_cutoff:.6e})"
    ));
    let decomposition = (cfg.nu == cfg.eta_m)
        .then(|| term_decomposition(&ti, &psi0))
        .transpose()?;

    let d = Diagnosis {
        status: "ok",
        scale_range: range,
        report,
        locality,
        phi0,
        phi0_without_cutoff,
        decomposition,
    };
    std::fs::create_dir_all(&run.out)?;
    write_json(&run.out.join(FLUX_REPORT), &d)?;

    let mut w = csv::Writer::from_path(run.out.join(FLUX_TABLE))?;
    for r in &d.report.rows {
        w.serialize(TableRow {
            r: r.scale,
            n_members: r.n_members,
            phi_avg: r.phi_avg,
            psi_avg: r.psi_avg,
            p0: q.p0,
            big_e0: q.big_e0,
            e0: q.e0,
            sigma0,
            ratio: r.ratio,
        })?;
    }
    w.flush()?;

    let mut plot = String::from("# ln(R) ln(<Psi>_R) averaged over ensembles; nan where <Psi>_R <= 0\n");
    for &s in &d.scale_range.scales {
        let vals: Vec<f64> = d
            .report
            .rows
            .iter()
            .filter(|r| r.scale == s)
            .map(|r| r.psi_avg)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let y = if mean > 0.0 { mean.ln() } else { f64::NAN };
        plot.push_str(&format!("{:e} {:e}\n", s.ln(), y));
    }
    std::fs::write(run.out.join(PLOT_DATA), plot)?;
    Ok(d)
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub assumption: &'static str,
    pub holds: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionOutput {
    pub status: &'static str,
    pub sigma0: f64,
    pub beta: f64,
    pub r0: f64,
    pub report: AssumptionReport,
    pub verdicts: Vec<Verdict>,
    pub all_hold: bool,
}

fn verdicts(cfg: &RunConfig, sigma0: f64, rep: &AssumptionReport) -> Vec<Verdict> {
    let c = &rep.coherence;
    let coherence = if c.vacuous {
        Verdict {
            assumption: "coherence",
            holds: true,
            detail: format!("vacuous: no sampled point has |grad u| > M = {:e}", c.threshold),
        }
    } else {
        let holds = c.value.is_finite() && cfg.c1.map_or(true, |c1| c.value <= c1);
        let bound = cfg
            .c1
            .map_or("no C1 bound configured".to_string(), |c1| format!("C1 = {c1:e}"));
        Verdict {
            assumption: "coherence",
            holds,
            detail: format!(
                "estimate {:e} over {} accepted samples ({bound})",
                c.value, c.n_accepted
            ),
        }
    };
    let s = &rep.smoothness;
    let smoothness = Verdict {
        assumption: "current smoothness",
        holds: rep.smoothness_holds,
        detail: if s.vacuous {
            format!("vacuous: no sampled point has |grad b| > M = {:e}", s.threshold)
        } else {
            format!(
                "max ratio {:e} over {} accepted samples (must be <= 1)",
                s.value, s.n_accepted
            )
        },
    };
    let kraichnan = Verdict {
        assumption: "Kraichnan scale",
        holds: sigma0 < cfg.beta * cfg.r0,
        detail: format!("sigma0 = {sigma0:e} against beta R0 = {:e}", cfg.beta * cfg.r0),
    };
    let l = &rep.localization;
    let localization = Verdict {
        assumption: "localization",
        holds: l.satisfied,
        detail: format!(
            "max ball integral {:e} at radius {:e} over {} centers (must be < 1/C2 = {:e})",
            l.max_value,
            l.radius,
            l.n_centers,
            1.0 / l.c2
        ),
    };
    let m = &rep.modulation;
    let fmt = |r: Option<f64>| r.map_or("undefined".to_string(), |v| format!("{v:e}"));
    let modulation = Verdict {
        assumption: "modulation",
        holds: m.holds,
        detail: format!(
            "final/sup weighted enstrophy: omega {}, j {} (each must be >= 1/2)",
            fmt(m.ratio_omega),
            fmt(m.ratio_j)
        ),
    };
    vec![coherence, smoothness, kraichnan, localization, modulation]
}

/// Estimate the assumption constants. `sigma0` is recomputed from the
/// snapshots unless supplied.
pub fn assumptions(run: &Run, sigma0: Option<f64>) -> Result<AssumptionOutput, CliError> {
    let cfg = &run.config;
    let dir = open_snapshots(run)?;
    let psi0 = integral_test_function(cfg)?;
    let sigma0 = match sigma0 {
        Some(s) => s,
        None => {
            let ti = time_integrals(run, &dir)?;
            kraichnan_scale(&integral_scale_quantities(&ti, &psi0))?
        }
    };
    run.log(format!("sampling assumption constants with {} samples", cfg.n_samples));
    let params = AssumptionParams {
        center: cfg.center,
        r0: cfg.r0,
        sigma0,
        beta: cfg.beta,
        m_u: cfg.m_u,
        m_b: cfg.m_b,
        n_samples: cfg.n_samples,
        seed: cfg.seed,
        n_centers: cfg.n_centers,
        c2: cfg.c2,
        interpolation: cfg.interpolation,
    };
    let report = check_all(&dir, &psi0, &params)?;
    let verdicts = verdicts(cfg, sigma0, &report);
    let out = AssumptionOutput {
        status: "ok",
        sigma0,
        beta: cfg.beta,
        r0: cfg.r0,
        all_hold: verdicts.iter().all(|v| v.holds),
        report,
        verdicts,
    };
    std::fs::create_dir_all(&run.out)?;
    write_json(&run.out.join(ASSUMPTIONS), &out)?;
    Ok(out)
}

/// Render `summary.txt` from the JSON outputs present in the run directory.
pub fn report(out: &Path) -> Result<String, CliError> {
    let load = |name: &str| -> Result<Option<serde_json::Value>, CliError> {
        let p = out.join(name);
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&std::fs::read_to_string(p)?)?))
    };
    let text = crate::summary::render(load(FLUX_REPORT)?.as_ref(), load(ASSUMPTIONS)?.as_ref());
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(SUMMARY), &text)?;
    Ok(text)
}

/// Every stage in order. A degenerate diagnosis still produces a summary
/// before the error is returned.
pub fn run_all(run: &Run) -> Result<String, CliError> {
    simulate(run)?;
    let sigma0 = match diagnose(run) {
        Ok(d) => d.report.sigma0,
        Err(e @ CliError::Degenerate(_)) => {
            let _ = std::fs::remove_file(run.out.join(ASSUMPTIONS));
            report(&run.out)?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    assumptions(run, Some(sigma0))?;
    report(&run.out)
}

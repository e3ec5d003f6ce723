use enstrophy_core::analytic::{abc_at, abc_field, random_solenoidal};
use enstrophy_core::flux::*;
use enstrophy_core::profile::Smoothstep;
use enstrophy_core::solver::{run, taylor_green_mhd_init, MhdState, SnapshotSeries, SolverConfig, TimeStep};
use enstrophy_core::test_function::{make_refined, TemporalCutoff};
use enstrophy_core::{Error, GridSpec, VectorField3};
use std::f64::consts::PI;

fn synthetic(grid: GridSpec, n: usize, t_final: f64, amp: f64) -> SnapshotSeries {
    let u0 = random_solenoidal(grid, 3, 11);
    let b0 = random_solenoidal(grid, 3, 12);
    let states = (0..n)
        .map(|k| {
            let s = k as f64 / (n - 1) as f64;
            MhdState {
                t: s * t_final,
                u: u0.scale(amp * (1.0 + 0.3 * s)),
                b: b0.scale(amp * (1.0 - 0.2 * s)).add(&u0.scale(0.1 * amp * s)),
            }
        })
        .collect();
    SnapshotSeries::new(states).unwrap()
}

fn trapezoid_eta_sum(times: &[f64], cutoff: &TemporalCutoff, p: f64) -> f64 {
    let mut total = 0.0;
    for w in times.windows(2) {
        let f = |t: f64| {
            let e = cutoff.eval(t);
            if e > 0.0 {
                e.powf(p)
            } else {
                0.0
            }
        };
        total += 0.5 * (w[1] - w[0]) * (f(w[0]) + f(w[1]));
    }
    total
}

#[test]
fn transport_and_convection_forms_agree_at_64() {
    let g = GridSpec::new(64, 2.0 * PI).unwrap();
    let series = synthetic(g, 12, 1.0, 1.0);
    let ti = TimeIntegrals::from_series(&series, TemporalCutoff::new(1.0).unwrap(), 0.9, 0.01, 0.01).unwrap();
    let psi = make_refined([PI + 0.3, PI, PI - 0.2], 1.0, 0.9, 1e4, 2.0 * PI).unwrap();
    let a = surface_flux(&ti, &psi);
    let b = convection_flux(&ti, &psi);
    assert!((a - b).abs() <= 1e-6 * a.abs(), "{a} {b}");
}

#[test]
fn abc_flux_density_matches_closed_form() {
    // b = 0, u = ABC with unit coefficients: ω = u, so the density is
    // -(∫η) u·∇(|u|^2/2).
    let g = GridSpec::new(16, 2.0 * PI).unwrap();
    let u = abc_field(g, 1.0, 1.0, 1.0);
    let times: Vec<f64> = (0..13).map(|k| k as f64 / 12.0).collect();
    let states = times
        .iter()
        .map(|&t| MhdState {
            t,
            u: u.clone(),
            b: VectorField3::zeros(g),
        })
        .collect();
    let series = SnapshotSeries::new(states).unwrap();
    let cutoff = TemporalCutoff::new(1.0).unwrap();
    let phi = flux_density(&series, cutoff).unwrap();
    let eta_int = trapezoid_eta_sum(&times, &cutoff, 1.0);
    let mut worst: f64 = 0.0;
    for idx in 0..g.len() {
        let x = g.coords(idx);
        let v = abc_at(g.length(), 1.0, 1.0, 1.0, x);
        let grad = [
            v[1] * x[0].cos() - v[2] * x[0].sin(),
            -v[0] * x[1].sin() + v[2] * x[1].cos(),
            v[0] * x[2].cos() - v[1] * x[2].sin(),
        ];
        let expected = -eta_int * (v[0] * grad[0] + v[1] * grad[1] + v[2] * grad[2]);
        worst = worst.max((phi.values()[idx] - expected).abs());
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn decomposition_closes_and_improves_with_snapshot_density() {
    let g = GridSpec::new(32, 2.0 * PI).unwrap();
    let init = taylor_green_mhd_init(g, 1.0, 0.8, 0.2, Some(3));
    let psi = make_refined([PI + 0.3, PI, PI - 0.2], 1.0, 0.8, 100.0, 2.0 * PI).unwrap();
    let residual = |n_snapshots: usize| {
        let c = SolverConfig {
            nu: 0.05,
            eta_m: 0.05,
            time_step: TimeStep::Fixed(0.3 / 48.0),
            t_final: 0.3,
            n_snapshots,
            ..SolverConfig::default()
        };
        let s = run(&init, &c).unwrap();
        let ti = TimeIntegrals::from_series(&s, TemporalCutoff::new(0.3).unwrap(), 0.8, 0.05, 0.05).unwrap();
        let d = term_decomposition(&ti, &psi).unwrap();
        assert!((d.omega.lhs + d.j.lhs - surface_flux(&ti, &psi)).abs() < 1e-12);
        d.identity_residual
    };
    let coarse = residual(13);
    let fine = residual(25);
    assert!(fine < coarse / 2.0, "{coarse} {fine}");
    assert!(fine < 1e-3, "{fine}");
}

#[test]
fn decomposition_requires_equal_diffusivities() {
    let g = GridSpec::new(8, 2.0 * PI).unwrap();
    let series = synthetic(g, 12, 1.0, 1.0);
    let ti = TimeIntegrals::from_series(&series, TemporalCutoff::new(1.0).unwrap(), 0.8, 0.01, 0.02).unwrap();
    let psi = make_refined([PI; 3], 1.0, 0.8, 100.0, 2.0 * PI).unwrap();
    assert!(matches!(
        term_decomposition(&ti, &psi),
        Err(Error::MismatchedDiffusion { .. })
    ));
}

#[test]
fn too_few_snapshots_are_rejected() {
    let g = GridSpec::new(8, 2.0 * PI).unwrap();
    let series = synthetic(g, 11, 1.0, 1.0);
    let err = TimeIntegrals::from_series(&series, TemporalCutoff::new(1.0).unwrap(), 0.8, 1.0, 1.0).unwrap_err();
    assert!(matches!(
        err,
        Error::TooFewSnapshots {
            required: 12,
            found: 11
        }
    ));
}

#[test]
fn energy_mean_matches_radial_quadrature() {
    // constant u: e0 = ½|u|^2 (1/T)∫η^p dt (1/R0^3)∫ψ0^p dx with p = 4rho - 3
    let g = GridSpec::new(48, 2.0 * PI).unwrap();
    let rho = 0.8;
    let p = 4.0 * rho - 3.0;
    let times: Vec<f64> = (0..16).map(|k| k as f64 / 15.0).collect();
    let u = VectorField3::from_fn(g, |_| [1.0, -2.0, 0.5]);
    let states = times
        .iter()
        .map(|&t| MhdState {
            t,
            u: u.clone(),
            b: u.scale(0.5),
        })
        .collect();
    let series = SnapshotSeries::new(states).unwrap();
    let cutoff = TemporalCutoff::new(1.0).unwrap();
    let ti = TimeIntegrals::from_series(&series, cutoff, rho, 1.0, 1.0).unwrap();
    let r0 = 1.05;
    let psi = make_refined([PI; 3], r0, rho, 100.0, 2.0 * PI).unwrap();
    let q = integral_scale_quantities(&ti, &psi);
    // radial integral 4π∫ r^2 S(2 - r/R0)^p dr by midpoint rule
    let s = Smoothstep::new(Smoothstep::order_for_rho(rho));
    let m = 200_000;
    let h = 2.0 * r0 / m as f64;
    let radial: f64 = (0..m)
        .map(|i| {
            let r = (i as f64 + 0.5) * h;
            4.0 * PI * r * r * s.value(2.0 - r / r0).powf(p) * h
        })
        .sum();
    let kinetic = 0.5 * (1.0 + 4.0 + 0.25) * 1.25;
    let expected = kinetic * trapezoid_eta_sum(&times, &cutoff, p) * radial / r0.powi(3);
    // ψ^p behaves like s^1.2 at the support edge, which limits grid quadrature
    assert!((q.e0 - expected).abs() < 2e-4 * expected, "{} {expected}", q.e0);
    // constant fields carry no vorticity beyond FFT roundoff
    assert!(q.big_e0 < 1e-20 && q.p0 < 1e-20);
}

#[test]
fn kraichnan_scale_arithmetic() {
    let q = ScaleQuantities {
        e0: 16.0,
        big_e0: 4.0,
        p0: 1.0,
        sigma0: None,
    };
    assert_eq!(kraichnan_scale(&q).unwrap(), 2.0);
    let q = ScaleQuantities {
        e0: 1.0,
        big_e0: 9.0,
        p0: 1.0,
        sigma0: None,
    };
    assert_eq!(kraichnan_scale(&q).unwrap(), 3.0);
    let q = ScaleQuantities {
        e0: 1.0,
        big_e0: 1.0,
        p0: 0.0,
        sigma0: None,
    };
    assert!(matches!(kraichnan_scale(&q), Err(Error::DegeneratePalinstrophy)));
    assert!(kraichnan_scale_admissible(0.05, 0.1, 1.0));
    assert!(!kraichnan_scale_admissible(0.2, 0.1, 1.0));
}

#[test]
fn kraichnan_scale_is_invariant_under_amplitude_scaling() {
    // e0, E0 and P0 are all quadratic in (u, b).
    let g = GridSpec::new(16, 2.0 * PI).unwrap();
    let psi = make_refined([PI; 3], 1.0, 0.8, 100.0, 2.0 * PI).unwrap();
    let cutoff = TemporalCutoff::new(1.0).unwrap();
    let sigma = |amp: f64| {
        let ti = TimeIntegrals::from_series(&synthetic(g, 12, 1.0, amp), cutoff, 0.8, 1.0, 1.0).unwrap();
        let q = integral_scale_quantities(&ti, &psi);
        (q, q.sigma0.unwrap())
    };
    let (q1, s1) = sigma(1.0);
    let (q3, s3) = sigma(3.0);
    assert!((q3.p0 / q1.p0 - 9.0).abs() < 1e-10);
    assert!((q3.e0 / q1.e0 - 9.0).abs() < 1e-10);
    assert!((s3 - s1).abs() < 1e-12 * s1);
}

#[test]
fn geometric_scales_hit_endpoints() {
    let s = geometric_scales(0.25, 1.0, 3);
    assert_eq!(s.len(), 3);
    assert!((s[0] - 0.25).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-12 && s[2] == 1.0);
    assert_eq!(geometric_scales(0.1, 1.0, 1), vec![1.0]);
    assert!(geometric_scales(0.1, 1.0, 0).is_empty());
}

#[test]
fn theorem_harness_on_partitioned_ensembles() {
    let g = GridSpec::new(64, 2.0 * PI).unwrap();
    let series = synthetic(g, 12, 1.0, 1.0);
    let ti = TimeIntegrals::from_series(&series, TemporalCutoff::new(1.0).unwrap(), 0.8, 0.01, 0.01).unwrap();
    let psi = make_refined([PI; 3], 1.0, 0.8, 100.0, 2.0 * PI).unwrap();
    let cfg = TheoremConfig {
        scales: vec![0.9, 1.0],
        k1: 128,
        k2: 8,
        beta: 0.1,
        n_ensembles: 2,
        seed: 5,
        enforce_range: false,
    };
    let report = verify_theorem(&ti, &psi, &cfg).unwrap();
    assert_eq!(report.rows.len(), 4);
    let top = report.rows.iter().find(|r| r.scale == 1.0).unwrap();
    assert_eq!(top.n_members, 1);
    let direct = convection_flux(&ti, &psi);
    assert!((top.phi_avg - direct).abs() < 1e-12 * direct.abs());
    // pieces sum to psi0, so n R^3 ⟨Φ⟩_R is the same for every ensemble
    for r in &report.rows {
        let total = r.phi_avg * r.n_members as f64 * r.scale.powi(3);
        assert!(
            (total - direct).abs() < 1e-10 * direct.abs(),
            "{} {total} {direct}",
            r.ensemble
        );
        assert!((r.ratio - r.phi_avg / report.quantities.p0).abs() < 1e-15 * r.ratio.abs());
        assert!(r.p_avg > 0.0);
    }
    assert!(report.psi_phi_residual < 1e-4, "{}", report.psi_phi_residual);

    let strict = TheoremConfig {
        enforce_range: true,
        scales: vec![1e-3],
        ..cfg
    };
    assert!(matches!(
        verify_theorem(&ti, &psi, &strict),
        Err(Error::ScaleOutOfRange { .. })
    ));

    let rows = locality_ratios(&report, &[(1.0, 1.0), (0.9, 1.0)], 1e-6);
    assert_eq!(rows[0].min_ratio, 1.0);
    assert_eq!(rows[0].max_ratio, 1.0);
    if report.k_star.is_some() {
        assert!(rows[0].contained);
    }
}

use enstrophy_core::analytic::{abc_field, random_band_limited_scalar, random_band_limited_vector};
use enstrophy_core::solver::{run, MhdState, SolverConfig, TimeStep};
use enstrophy_core::spectral::{curl, divergence, gradient, laplacian, leray_project};
use enstrophy_core::{GridSpec, ScalarField, VectorField3};
use proptest::prelude::*;
use std::f64::consts::PI;

/// Fourth-order central difference divergence.
fn fd_divergence(v: &VectorField3) -> ScalarField {
    let g = v.grid();
    let n = g.n();
    let h = g.dx();
    let mut out = vec![0.0; g.len()];
    for k in 0..n as i64 {
        for j in 0..n as i64 {
            for i in 0..n as i64 {
                let mut d = 0.0;
                for axis in 0..3 {
                    let at = |s: i64| {
                        let mut p = [i, j, k];
                        p[axis] += s;
                        v.component(axis).values()[g.wrapped_index(p[0], p[1], p[2])]
                    };
                    d += (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
                }
                out[g.wrapped_index(i, j, k)] = d;
            }
        }
    }
    ScalarField::from_values(g, out).unwrap()
}

fn smooth_field(g: GridSpec) -> VectorField3 {
    VectorField3::from_fn(g, |x| {
        [
            (x[1] + 0.3).sin() * x[2].cos() + x[0].sin(),
            (2.0 * x[0]).cos() * x[2].sin() + x[1].cos() * x[0].sin(),
            (x[0] - x[1]).sin() + (2.0 * x[2]).cos(),
        ]
    })
}

#[test]
fn leray_output_passes_finite_difference_divergence_under_refinement() {
    let mut last = f64::INFINITY;
    for n in [16, 32, 64] {
        let g = GridSpec::new(n, 2.0 * PI).unwrap();
        let p = leray_project(&smooth_field(g));
        let r = fd_divergence(&p).max_abs() / p.max_abs();
        assert!(r < last / 8.0 || r < 1e-12, "n={n}: {r} vs {last}");
        last = r;
    }
    assert!(last < 1e-4, "{last}");
}

#[test]
fn div_curl_vanishes_on_twenty_random_fields() {
    let g = GridSpec::new(16, 2.0 * PI).unwrap();
    for seed in 0..20 {
        let v = random_band_limited_vector(g, 5, seed);
        let c = curl(&v);
        let scale = c.max_abs().max(1e-300) * 5.0;
        assert!(divergence(&c).max_abs() <= 1e-11 * scale, "seed {seed}");
    }
}

#[test]
fn abc_velocity_decays_like_exponential_at_unit_viscosity() {
    let g = GridSpec::new(32, 2.0 * PI).unwrap();
    let v = abc_field(g, 1.0, 1.0, 1.0);
    let init = MhdState {
        t: 0.0,
        u: v.clone(),
        b: VectorField3::zeros(g),
    };
    let cfg = SolverConfig {
        nu: 1.0,
        eta_m: 1.0,
        time_step: TimeStep::Fixed(1e-3),
        t_final: 0.1,
        n_snapshots: 2,
        ..SolverConfig::default()
    };
    let s = run(&init, &cfg).unwrap();
    let expected = v.scale((-0.1f64).exp());
    let err = s.last().u.sub(&expected).max_abs() / expected.max_abs();
    assert!(err <= 1e-6, "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn laplacian_is_div_grad(seed in 0u64..10_000) {
        let g = GridSpec::new(8, 3.0).unwrap();
        let s = random_band_limited_scalar(g, 2, seed);
        let a = laplacian(&s);
        let b = divergence(&gradient(&s));
        let d = a.zip_map(&b, |x, y| x - y).max_abs();
        prop_assert!(d <= 1e-11 * a.max_abs().max(1.0));
    }

    #[test]
    fn projection_is_idempotent(seed in 0u64..10_000) {
        let g = GridSpec::new(8, 2.0 * PI).unwrap();
        let p = leray_project(&random_band_limited_vector(g, 3, seed));
        let q = leray_project(&p);
        prop_assert!(q.sub(&p).max_abs() <= 1e-12 * p.max_abs().max(1.0));
    }

    #[test]
    fn integrate_is_linear(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = GridSpec::new(8, 1.5).unwrap();
        let f = random_band_limited_scalar(g, 3, seed);
        let h = random_band_limited_scalar(g, 3, seed + 1);
        let combo = f.zip_map(&h, |x, y| a * x + b * y);
        let lhs = combo.integrate();
        let rhs = a * f.integrate() + b * h.integrate();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (f.max_abs() + h.max_abs()) * g.length().powi(3) * 6.0);
    }
}

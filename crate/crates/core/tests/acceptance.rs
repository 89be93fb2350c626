//! Acceptance gate: one test per criterion, each printing a PASS/FAIL
//! line with the measured numbers next to the pinned tolerance. Fixtures
//! are shared through `OnceLock` so the expensive forward runs happen
//! once regardless of test order.
//!
//! Run with `--nocapture` to see the verdict lines of passing criteria.

use std::f64::consts::PI;
use std::sync::OnceLock;

use taterec_core::elliptic::extension_coefficient_identity_check;
use taterec_core::rays::{check_nontrapping, TrappingParams};
use taterec_core::reconstruct::{
    boundary_coefficients, coefficients_cos, coefficients_second_derivative, coefficients_sin,
    error_metrics, kernel_backprojection, reconstruct_operator_formula, reconstruct_sin,
    BoundaryCoefficientSeries, Reconstruction,
};
use taterec_core::spectral::{
    analytic_rectangle_basis, compute_eigenpairs, discrete_rectangle_eigenvalue,
    resolvable_mode_count, EigenOptions, SpectralBasis,
};
use taterec_core::wave_sim::{
    simulate_forward, SimOutput, SolverParams, StopReason, TimeHorizon,
};
use taterec_core::{
    build_observation_surface, make_grid, sample_phantom, sample_sound_speed, DomainSpec,
    ObservationSurface, PhantomSpec, Primitive, ScalarField, Sinogram, SoundSpeedField,
};

fn verdict(id: &str, pass: bool, detail: &str) {
    println!("criterion {id}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn unit_square() -> DomainSpec {
    DomainSpec::new(2, [0.0, 0.0], [1.0, 1.0]).unwrap()
}

/// The constant-speed round-trip fixture shared by criteria 3, 5-9:
/// Gaussian source inside the unit square, simulation box [-0.5, 1.5]^2
/// at h = 1/100, analytic basis up to the resolvability bound. The run
/// uses a deep energy stop so the record tail is quiet enough for the
/// decay diagnostics.
struct BaseFixture {
    domain: DomainSpec,
    surface: ObservationSurface,
    basis: SpectralBasis,
    phantom: PhantomSpec,
    f_ref: ScalarField,
    sim: SimOutput,
    series: BoundaryCoefficientSeries,
    recon: Reconstruction,
    err3: f64,
}

static BASE: OnceLock<BaseFixture> = OnceLock::new();

const BASE_ENERGY_STOP: f64 = 1e-6;

/// Sponge thickness for the shared 201^2 fixtures. A thicker, softer
/// layer than the library default: its reflections otherwise set a
/// resolution-independent error floor that hides the convergence the
/// refinement criteria look for.
const BASE_SPONGE_CELLS: usize = 48;

fn base_phantom() -> PhantomSpec {
    PhantomSpec::new(vec![Primitive::Gaussian {
        center: [0.48, 0.52],
        width: 0.06,
        amp: 1.0,
    }])
}

fn base() -> &'static BaseFixture {
    BASE.get_or_init(|| {
        let domain = unit_square();
        let sim_grid = make_grid(2, [-0.5, -0.5], [1.5, 1.5], [201, 201]).unwrap();
        let bgrid = make_grid(2, [0.0, 0.0], [1.0, 1.0], [101, 101]).unwrap();
        let surface = build_observation_surface(&domain, 100).unwrap();
        let phantom = base_phantom();
        let f0 = sample_phantom(&phantom, &sim_grid).unwrap();
        let speed = SoundSpeedField::constant(&sim_grid);
        let k = resolvable_mode_count(&domain, &bgrid, 1.0);
        assert_eq!(k, 183);
        let basis = analytic_rectangle_basis(&domain, &bgrid, &surface, k).unwrap();
        let horizon = TimeHorizon { t_max: None, energy_stop: BASE_ENERGY_STOP };
        let params =
            SolverParams { sponge_cells: BASE_SPONGE_CELLS, ..SolverParams::default() };
        let sim = simulate_forward(&f0, &speed, &domain, &surface, &params, &horizon).unwrap();
        let series = boundary_coefficients(&sim.sinogram, &basis).unwrap();
        let recon = reconstruct_sin(&sim.sinogram, &basis).unwrap();
        let f_ref = f0.restrict(&domain).unwrap();
        let err3 = error_metrics(&recon.field, &f_ref, &basis).unwrap().rel_l2;
        BaseFixture { domain, surface, basis, phantom, f_ref, sim, series, recon, err3 }
    })
}

/// Fine-scale basis at h = 1/200 (about 795 resolvable modes), shared by
/// the criterion-3 refinement and the discontinuous phantom.
struct FineFixture {
    surface: ObservationSurface,
    basis: SpectralBasis,
}

static FINE: OnceLock<FineFixture> = OnceLock::new();

fn fine() -> &'static FineFixture {
    FINE.get_or_init(|| {
        let domain = unit_square();
        let bgrid = make_grid(2, [0.0, 0.0], [1.0, 1.0], [201, 201]).unwrap();
        let surface = build_observation_surface(&domain, 200).unwrap();
        let k = resolvable_mode_count(&domain, &bgrid, 1.0);
        let basis = analytic_rectangle_basis(&domain, &bgrid, &surface, k).unwrap();
        FineFixture { surface, basis }
    })
}

/// Variable-speed fixture for criteria 4 and 9: the same source over a
/// smooth high-speed inclusion, with the eigenbasis computed numerically.
struct VariableFixture {
    sim: SimOutput,
    series: BoundaryCoefficientSeries,
    err4: f64,
}

static VARIABLE: OnceLock<VariableFixture> = OnceLock::new();

fn variable() -> &'static VariableFixture {
    VARIABLE.get_or_init(|| {
        let domain = unit_square();
        let sim_grid = make_grid(2, [-0.5, -0.5], [1.5, 1.5], [201, 201]).unwrap();
        let speed_spec = PhantomSpec::new(vec![Primitive::SmoothBump {
            center: [0.5, 0.5],
            radius: 0.2,
            amp: 0.3,
        }]);
        let speed = sample_sound_speed(&speed_spec, &sim_grid).unwrap();

        let report = check_nontrapping(&speed, &domain, &TrappingParams::default()).unwrap();
        assert!(
            report.is_nontrapping() && report.drift_failures == 0,
            "speed map must be certified nontrapping ({} trapped, {} drift failures)",
            report.trapped.len(),
            report.drift_failures
        );

        let f0 = sample_phantom(&base_phantom(), &sim_grid).unwrap();
        let horizon = TimeHorizon { t_max: None, energy_stop: BASE_ENERGY_STOP };
        let params =
            SolverParams { sponge_cells: BASE_SPONGE_CELLS, ..SolverParams::default() };
        let sim = simulate_forward(&f0, &speed, &domain, &base().surface, &params, &horizon)
            .unwrap();

        let mut opts = EigenOptions::new(183);
        opts.max_subspace = Some(700);
        let basis = compute_eigenpairs(&speed, &domain, &base().surface, &opts).unwrap();
        let series = boundary_coefficients(&sim.sinogram, &basis).unwrap();
        let recon = reconstruct_sin(&sim.sinogram, &basis).unwrap();
        let f_ref = f0.restrict(&domain).unwrap();
        let err4 = error_metrics(&recon.field, &f_ref, &basis).unwrap().rel_l2;
        VariableFixture { sim, series, err4 }
    })
}

#[test]
fn c01_interval_sine_route_recovers_the_expansion() {
    let domain = DomainSpec::new(1, [0.0, 0.0], [1.0, 0.0]).unwrap();
    let grid = make_grid(1, [0.0, 0.0], [1.0, 0.0], [257, 1]).unwrap();
    let surface = build_observation_surface(&domain, 1).unwrap();
    let basis = analytic_rectangle_basis(&domain, &grid, &surface, 20).unwrap();

    // f(x) = sin(2 pi x) on [0, 1], c = 1: on the line the solution is the
    // average of the two translates of the odd-extended data, so each
    // endpoint sees half the source profile passing by exactly once.
    let dt = 1e-4;
    let steps = 12_001;
    let mut values = vec![0.0; 2 * steps];
    for j in 0..steps {
        let t = j as f64 * dt;
        if t <= 1.0 {
            let v = 0.5 * (2.0 * PI * t).sin();
            values[j] = v;
            values[steps + j] = -v;
        }
    }
    let sino = Sinogram::from_values(surface, dt, steps, values).unwrap();

    let series = boundary_coefficients(&sino, &basis).unwrap();
    let coeffs = coefficients_sin(&series).coeffs;
    let mut worst = 0.0f64;
    for (k, c) in coeffs.iter().enumerate() {
        let truth = if k + 1 == 2 { 0.5 * 2.0f64.sqrt() } else { 0.0 };
        worst = worst.max((c - truth).abs());
    }
    verdict("01 interval sine route", worst <= 1e-6, &format!("max |f_k - truth| {worst:.3e} <= 1e-6"));
}

#[test]
fn c02_eigensolver_matches_the_rectangle_spectrum() {
    let domain = unit_square();
    let grid = make_grid(2, [0.0, 0.0], [1.0, 1.0], [129, 129]).unwrap();
    let surface = build_observation_surface(&domain, 128).unwrap();
    let speed = SoundSpeedField::constant(&grid);
    let basis = compute_eigenpairs(&speed, &domain, &surface, &EigenOptions::new(10)).unwrap();

    // The ten lowest (n, m) pairs, continuum and discrete.
    let mut modes: Vec<(usize, usize)> = Vec::new();
    for n in 1..=6usize {
        for m in 1..=6usize {
            modes.push((n, m));
        }
    }
    modes.sort_by(|a, b| {
        let ea = a.0 * a.0 + a.1 * a.1;
        let eb = b.0 * b.0 + b.1 * b.1;
        ea.cmp(&eb).then(a.cmp(b))
    });

    let mut worst_cont = 0.0f64;
    let mut worst_disc = 0.0f64;
    for (i, pair) in basis.pairs.iter().enumerate() {
        let (n, m) = modes[i];
        let cont = PI * ((n * n + m * m) as f64).sqrt();
        worst_cont = worst_cont.max((pair.lambda - cont).abs() / cont);
        let disc = discrete_rectangle_eigenvalue(&domain, &grid, n, m);
        let lam2 = pair.lambda * pair.lambda;
        worst_disc = worst_disc.max((lam2 - disc).abs() / disc);
    }
    verdict(
        "02 eigensolver accuracy",
        worst_cont <= 1e-2 && worst_disc <= 1e-8,
        &format!("continuum gap {worst_cont:.3e} <= 1e-2, discrete gap {worst_disc:.3e} <= 1e-8"),
    );
}

#[test]
fn c03_constant_speed_round_trip_converges() {
    let b = base();
    let err_base = b.err3;

    // Halve h and dt with the truncation held fixed, so the comparison
    // isolates discretization error: the finer grid would admit more
    // resolvable modes, but enlarging the basis changes the target.
    let domain = unit_square();
    let sim_grid = make_grid(2, [-0.5, -0.5], [1.5, 1.5], [401, 401]).unwrap();
    let bgrid = make_grid(2, [0.0, 0.0], [1.0, 1.0], [201, 201]).unwrap();
    let surface = build_observation_surface(&domain, 200).unwrap();
    let basis = analytic_rectangle_basis(&domain, &bgrid, &surface, b.basis.k()).unwrap();
    let f0 = sample_phantom(&b.phantom, &sim_grid).unwrap();
    let speed = SoundSpeedField::constant(&sim_grid);
    let horizon = TimeHorizon { t_max: None, energy_stop: BASE_ENERGY_STOP };
    // Twice the cells keeps the physical sponge geometry of the base run.
    let params =
        SolverParams { sponge_cells: 2 * BASE_SPONGE_CELLS, ..SolverParams::default() };
    let sim = simulate_forward(&f0, &speed, &domain, &surface, &params, &horizon).unwrap();
    let recon = reconstruct_sin(&sim.sinogram, &basis).unwrap();
    let f_ref = f0.restrict(&domain).unwrap();
    let err_fine = error_metrics(&recon.field, &f_ref, &basis).unwrap().rel_l2;

    // Both resolutions share the truncation floor of the fixed mode set,
    // so convergence is measured on the recoverable part: recovered
    // coefficients against the projected source.
    let mode_err = |recon: &Reconstruction, f_ref: &ScalarField, basis: &SpectralBasis| {
        let truth = basis.project(&f_ref.values);
        let scale = truth.iter().map(|a| a * a).sum::<f64>().sqrt();
        l2(&recon.coefficients.coeffs, &truth) / scale
    };
    let mode_base = mode_err(&b.recon, &b.f_ref, &b.basis);
    let mode_fine = mode_err(&recon, &f_ref, &basis);

    verdict(
        "03 constant-speed round trip",
        err_base <= 0.05 && err_fine <= 0.05 && mode_fine < mode_base,
        &format!(
            "rel L2 error {err_base:.4} <= 0.05 (refined {err_fine:.4}), recoverable-part error {mode_base:.2e} -> {mode_fine:.2e} decreases"
        ),
    );
}

#[test]
fn c04_variable_speed_round_trip() {
    let v = variable();
    verdict(
        "04 variable-speed round trip",
        v.err4 <= 0.10,
        &format!("rel L2 error {:.4} <= 0.10 with certified nontrapping speed", v.err4),
    );
}

#[test]
fn c05_the_three_routes_agree_and_tighten_with_dt() {
    let b = base();
    let gap = |series: &BoundaryCoefficientSeries| -> f64 {
        let s = coefficients_sin(series).coeffs;
        let c = coefficients_cos(series).coeffs;
        let g = coefficients_second_derivative(series).coeffs;
        l2(&s, &c).max(l2(&s, &g)).max(l2(&c, &g))
    };
    let gap_base = gap(&b.series);

    // Re-run the same fixture at half the time step over the same window.
    let sim_grid = make_grid(2, [-0.5, -0.5], [1.5, 1.5], [201, 201]).unwrap();
    let f0 = sample_phantom(&b.phantom, &sim_grid).unwrap();
    let speed = SoundSpeedField::constant(&sim_grid);
    let t_end = b.sim.n_steps as f64 * b.sim.dt;
    let params = SolverParams {
        dt: Some(0.5 * b.sim.dt),
        sponge_cells: BASE_SPONGE_CELLS,
        ..SolverParams::default()
    };
    let horizon = TimeHorizon { t_max: Some(t_end), ..TimeHorizon::default() };
    let sim =
        simulate_forward(&f0, &speed, &b.domain, &b.surface, &params, &horizon).unwrap();
    let series = boundary_coefficients(&sim.sinogram, &b.basis).unwrap();
    let gap_half = gap(&series);

    verdict(
        "05 three-route agreement",
        gap_base <= 1e-3 && gap_half * 3.0 <= gap_base,
        &format!("route gap {gap_base:.3e} <= 1e-3, halved-dt gap {gap_half:.3e} shrinks >= 3x"),
    );
}

#[test]
fn c06_reordering_identities() {
    let b = base();
    let op = reconstruct_operator_formula(&b.sim.sinogram, &b.basis).unwrap();
    let g2 = coefficients_second_derivative(&b.series);
    let scale = g2.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let coeff_gap = l2(&op.coefficients.coeffs, &g2.coeffs) / scale;

    // Probes on grid nodes, where bilinear sampling of the synthesized
    // field is exact.
    let probes = [[0.25, 0.25], [0.5, 0.5], [0.75, 0.5], [0.3, 0.7], [0.1, 0.9]];
    let kernel = kernel_backprojection(&b.sim.sinogram, &b.basis, &probes).unwrap();
    let fmax = b.recon.field.max_abs();
    let mut probe_gap = 0.0f64;
    for (p, kv) in probes.iter().zip(&kernel) {
        probe_gap = probe_gap.max((b.recon.field.interp(*p) - kv).abs() / fmax);
    }

    verdict(
        "06 reordering identities",
        coeff_gap <= 1e-9 && probe_gap <= 1e-9,
        &format!("operator vs g'' {coeff_gap:.3e}, kernel vs sine {probe_gap:.3e}, both <= 1e-9"),
    );
}

#[test]
fn c07_zero_data_reconstructs_to_exact_zero() {
    let b = base();
    let sino = Sinogram::zeros(b.surface.clone(), b.sim.dt, b.sim.sinogram.steps).unwrap();
    let sin = reconstruct_sin(&sino, &b.basis).unwrap();
    let op = reconstruct_operator_formula(&sino, &b.basis).unwrap();
    let series = boundary_coefficients(&sino, &b.basis).unwrap();
    let cos = coefficients_cos(&series);
    let g2 = coefficients_second_derivative(&series);
    let kernel = kernel_backprojection(&sino, &b.basis, &[[0.3, 0.3], [0.6, 0.8]]).unwrap();

    let all_zero = sin.field.values.iter().all(|v| *v == 0.0)
        && op.field.values.iter().all(|v| *v == 0.0)
        && sin.coefficients.coeffs.iter().all(|v| *v == 0.0)
        && op.coefficients.coeffs.iter().all(|v| *v == 0.0)
        && cos.coeffs.iter().all(|v| *v == 0.0)
        && g2.coeffs.iter().all(|v| *v == 0.0)
        && kernel.iter().all(|v| *v == 0.0);
    verdict("07 uniqueness at zero data", all_zero, "every route returns exact zeros");
}

#[test]
fn c08_exterior_sources_do_not_disturb_the_interior() {
    let b = base();
    let sim_grid = make_grid(2, [-0.5, -0.5], [1.5, 1.5], [201, 201]).unwrap();
    let mut primitives = b.phantom.primitives.clone();
    primitives.push(Primitive::SmoothBump { center: [1.10, 0.5], radius: 0.07, amp: 1.0 });
    let spec = PhantomSpec::new(primitives);
    let f0 = sample_phantom(&spec, &sim_grid).unwrap();
    let speed = SoundSpeedField::constant(&sim_grid);
    let horizon = TimeHorizon { t_max: None, energy_stop: BASE_ENERGY_STOP };
    // The default (thinner) sponge leaves room for the exterior bump,
    // whose support must sit in the live region to radiate at all.
    let params = SolverParams::default();
    let sim = simulate_forward(&f0, &speed, &b.domain, &b.surface, &params, &horizon).unwrap();
    let recon = reconstruct_sin(&sim.sinogram, &b.basis).unwrap();
    // The reference stays the interior source alone.
    let err = error_metrics(&recon.field, &b.f_ref, &b.basis).unwrap().rel_l2;

    verdict(
        "08 exterior support",
        err <= 2.0 * b.err3,
        &format!("rel L2 error {err:.4} <= 2 x baseline {:.4}", b.err3),
    );
}

#[test]
fn c09_energy_decay_and_quiet_tails() {
    let b = base();
    let v = variable();
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, sim, series) in
        [("constant", &b.sim, &b.series), ("variable", &v.sim, &v.series)]
    {
        let stopped_adaptively = sim.stop == StopReason::EnergyDecay;
        let ratio = sim.energy.last() / sim.energy.initial();
        let tail = series.tail_mass().iter().fold(0.0f64, |m, t| m.max(*t));
        pass &= stopped_adaptively && ratio <= 1e-3 && tail <= 1e-3;
        notes.push(format!(
            "{name}: E_end/E_0 {ratio:.2e} <= 1e-3 before the cap, worst tail {tail:.2e} <= 1e-3"
        ));
    }
    verdict("09 energy decay diagnostic", pass, &notes.join("; "));
}

#[test]
fn c10_discontinuous_phantom() {
    let domain = unit_square();
    let sim_grid = make_grid(2, [-0.25, -0.25], [1.25, 1.25], [301, 301]).unwrap();
    let disk =
        PhantomSpec::new(vec![Primitive::Disk { center: [0.5, 0.5], radius: 0.4, amp: 1.0 }]);
    let f0 = sample_phantom(&disk, &sim_grid).unwrap();
    let speed = SoundSpeedField::constant(&sim_grid);
    let fine = fine();
    let horizon = TimeHorizon { t_max: None, energy_stop: BASE_ENERGY_STOP };
    let params =
        SolverParams { sponge_cells: BASE_SPONGE_CELLS, ..SolverParams::default() };
    let sim = simulate_forward(&f0, &speed, &domain, &fine.surface, &params, &horizon).unwrap();
    let recon = reconstruct_sin(&sim.sinogram, &fine.basis).unwrap();
    let f_ref = f0.restrict(&domain).unwrap();
    let err = error_metrics(&recon.field, &f_ref, &fine.basis).unwrap().rel_l2;

    // Support smoke test: plateau average near the amplitude well inside
    // the disk, near zero well outside it.
    let grid = &fine.basis.grid;
    let (mut in_sum, mut in_n, mut out_sum, mut out_n) = (0.0, 0usize, 0.0, 0usize);
    for iy in 0..grid.counts[1] {
        for ix in 0..grid.counts[0] {
            let p = grid.node(ix, iy);
            let r = ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt();
            let v = recon.field.values[iy * grid.counts[0] + ix];
            if r <= 0.3 {
                in_sum += v;
                in_n += 1;
            } else if r >= 0.5 {
                out_sum += v.abs();
                out_n += 1;
            }
        }
    }
    let inside = in_sum / in_n as f64;
    let outside = out_sum / out_n as f64;

    verdict(
        "10 discontinuous phantom",
        err <= 0.15 && (inside - 1.0).abs() <= 0.1 && outside <= 0.1,
        &format!(
            "rel L2 error {err:.4} <= 0.15, plateau mean {inside:.3} within 0.1 of 1, exterior mean {outside:.3} <= 0.1"
        ),
    );
}

#[test]
fn c11_extension_identity_converges_at_second_order() {
    let domain = unit_square();
    let data_fn = |p: [f64; 2]| (2.0 * PI * p[0] + 0.7).sin() * (3.0 * PI * p[1] - 0.4).cos();
    let discrepancy = |cells: usize| -> f64 {
        let grid = make_grid(2, [0.0, 0.0], [1.0, 1.0], [cells + 1, cells + 1]).unwrap();
        let surface = build_observation_surface(&domain, cells).unwrap();
        let basis = analytic_rectangle_basis(&domain, &grid, &surface, 20).unwrap();
        let data: Vec<f64> = surface.detectors.iter().map(|d| data_fn(d.position)).collect();
        let checks = extension_coefficient_identity_check(&basis, &data).unwrap();
        checks
            .iter()
            .fold(0.0f64, |m, c| m.max((c.projection - c.trace_form).abs()))
    };
    let d0 = discrepancy(48);
    let d1 = discrepancy(96);
    let d2 = discrepancy(192);
    let order01 = (d0 / d1).log2();
    let order12 = (d1 / d2).log2();

    verdict(
        "11 extension identity order",
        order01 >= 1.8 && order12 >= 1.8,
        &format!(
            "discrepancies {d0:.3e} -> {d1:.3e} -> {d2:.3e}, orders {order01:.2}, {order12:.2} >= 1.8"
        ),
    );
}

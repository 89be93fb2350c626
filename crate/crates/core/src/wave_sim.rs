//! Forward acoustic simulation.
//!
//! Solves `p_tt + 2 sigma p_t = c^2 Lap p` on the full simulation grid with
//! a standard leapfrog scheme, `p(0) = f`, `p_t(0) = 0`, and records the
//! pressure trace at every detector of an observation surface. The damping
//! `sigma` is zero except in a sponge layer hugging the grid edge, where it
//! ramps up cubically; together with the Dirichlet condition at the outermost
//! nodes this absorbs outgoing waves so the grid edge does not echo back
//! into the reconstruction domain.
//!
//! The update is
//!
//! ```text
//! p+ = [2 p0 - (1 - sigma dt) p- + dt^2 c^2 Lap p0] / (1 + sigma dt)
//! ```
//!
//! started with the Taylor step `p1 = p0 + (dt^2/2) c^2 Lap p0`, which keeps
//! the scheme second order in time. With `sigma = 0` the recursion is
//! symmetric in time, so running it backwards from the last two slices
//! reproduces the initial state to roundoff — one of the tests below holds
//! the solver to that.

use crate::error::{Error, Result};
use crate::fields::{
    DomainSpec, Grid, ObservationSurface, ScalarField, Sinogram, SoundSpeedField,
};
use crate::par;

pub const DEFAULT_CFL: f64 = 0.5;
pub const DEFAULT_SPONGE_CELLS: usize = 32;
pub const DEFAULT_ENERGY_STOP: f64 = 1e-4;
/// Adaptive runs are capped at this many domain crossings.
pub const TIME_CAP_FACTOR: f64 = 10.0;
/// Initial data is "supported" wherever it exceeds this fraction of its peak.
pub const SUPPORT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Absorbing sponge layer at the grid edge (the default).
    Sponge,
    /// Plain Dirichlet wall at the grid edge; nothing is absorbed.
    Reflecting,
}

#[derive(Debug, Clone)]
pub struct SolverParams {
    /// Time step; `None` picks `cfl * h_min / c_max`.
    pub dt: Option<f64>,
    /// Courant fraction used both for the automatic step and as the
    /// stability check on an explicit one.
    pub cfl: f64,
    pub boundary: Boundary,
    /// Sponge thickness in multiples of the smallest grid spacing.
    pub sponge_cells: usize,
    /// Peak damping rate; `None` picks `20 c_max / thickness`, which gives
    /// an outgoing pulse a round-trip attenuation of about `e^-10`.
    pub sigma_max: Option<f64>,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            dt: None,
            cfl: DEFAULT_CFL,
            boundary: Boundary::Sponge,
            sponge_cells: DEFAULT_SPONGE_CELLS,
            sigma_max: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TimeHorizon {
    /// Fixed stop time. When set, the energy criterion is ignored.
    pub t_max: Option<f64>,
    /// Adaptive mode stops once the interior energy falls to this fraction
    /// of its initial value.
    pub energy_stop: f64,
}

impl Default for TimeHorizon {
    fn default() -> Self {
        TimeHorizon { t_max: None, energy_stop: DEFAULT_ENERGY_STOP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    FixedHorizon,
    EnergyDecay,
    TimeCap,
}

/// Interior energy samples along a run: entry 0 holds the energy of the
/// initial data at `t = 0`, later entries sit at half steps.
#[derive(Debug, Clone)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl EnergyTrace {
    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub sinogram: Sinogram,
    pub energy: EnergyTrace,
    pub dt: f64,
    /// Number of leapfrog updates taken (the sinogram holds one more sample).
    pub n_steps: usize,
    pub stop: StopReason,
}

/// One leapfrog update over the whole grid, parallel over grid rows when
/// the `parallel` feature is on. `c2dt2` is `c^2 dt^2` per node, `sigma_dt`
/// is `sigma dt` per node, and `inv_h2` holds `1/h^2` per axis. Outermost
/// nodes are pinned to zero.
pub fn leapfrog_step(
    p_next: &mut [f64],
    p_curr: &[f64],
    p_prev: &[f64],
    c2dt2: &[f64],
    sigma_dt: &[f64],
    counts: [usize; 2],
    dim: usize,
    inv_h2: [f64; 2],
) {
    par::for_each_row_mut(p_next, counts[0], |iy, row| {
        step_row(iy, row, p_curr, p_prev, c2dt2, sigma_dt, counts, dim, inv_h2)
    });
}

/// Sequential twin of [`leapfrog_step`]; both produce bit-identical output.
pub fn leapfrog_step_seq(
    p_next: &mut [f64],
    p_curr: &[f64],
    p_prev: &[f64],
    c2dt2: &[f64],
    sigma_dt: &[f64],
    counts: [usize; 2],
    dim: usize,
    inv_h2: [f64; 2],
) {
    par::for_each_row_mut_seq(p_next, counts[0], |iy, row| {
        step_row(iy, row, p_curr, p_prev, c2dt2, sigma_dt, counts, dim, inv_h2)
    });
}

#[allow(clippy::too_many_arguments)]
fn step_row(
    iy: usize,
    row: &mut [f64],
    p_curr: &[f64],
    p_prev: &[f64],
    c2dt2: &[f64],
    sigma_dt: &[f64],
    counts: [usize; 2],
    dim: usize,
    inv_h2: [f64; 2],
) {
    let nx = counts[0];
    if dim == 2 && (iy == 0 || iy + 1 == counts[1]) {
        row.fill(0.0);
        return;
    }
    let base = iy * nx;
    row[0] = 0.0;
    row[nx - 1] = 0.0;
    for ix in 1..nx - 1 {
        let i = base + ix;
        let mut lap = inv_h2[0] * (p_curr[i - 1] - 2.0 * p_curr[i] + p_curr[i + 1]);
        if dim == 2 {
            lap += inv_h2[1] * (p_curr[i - nx] - 2.0 * p_curr[i] + p_curr[i + nx]);
        }
        let sd = sigma_dt[i];
        row[ix] = (2.0 * p_curr[i] - (1.0 - sd) * p_prev[i] + c2dt2[i] * lap) / (1.0 + sd);
    }
}

fn taylor_first_step(
    p0: &[f64],
    c2dt2: &[f64],
    counts: [usize; 2],
    dim: usize,
    inv_h2: [f64; 2],
) -> Vec<f64> {
    let mut out = vec![0.0; p0.len()];
    par::for_each_row_mut(&mut out, counts[0], |iy, row| {
        let nx = counts[0];
        if dim == 2 && (iy == 0 || iy + 1 == counts[1]) {
            return;
        }
        let base = iy * nx;
        for ix in 1..nx - 1 {
            let i = base + ix;
            let mut lap = inv_h2[0] * (p0[i - 1] - 2.0 * p0[i] + p0[i + 1]);
            if dim == 2 {
                lap += inv_h2[1] * (p0[i - nx] - 2.0 * p0[i] + p0[i + nx]);
            }
            row[ix] = p0[i] + 0.5 * c2dt2[i] * lap;
        }
    });
    out
}

/// Discrete interior energy at the half step between two pressure slices:
///
/// ```text
/// E = int_B [ ((p - p_prev)/dt)^2 / c^2 + |grad (p + p_prev)/2|^2 ] dx
/// ```
///
/// with centered differences (one-sided where `B` touches the grid edge)
/// and trapezoid weights over the nodes of `B`.
pub fn interior_energy(
    speed: &SoundSpeedField,
    domain: &DomainSpec,
    p_curr: &[f64],
    p_prev: &[f64],
    dt: f64,
) -> Result<f64> {
    let grid = speed.grid();
    if p_curr.len() != grid.n_points() || p_prev.len() != grid.n_points() {
        return Err(Error::Mismatch("pressure slice length vs grid".into()));
    }
    let (lo, hi) = domain.aligned_indices(grid)?;
    let dim = grid.dim;
    let nx = grid.counts[0];
    let bx = hi[0] - lo[0] + 1;
    let by = if dim == 2 { hi[1] - lo[1] + 1 } else { 1 };
    let cell = if dim == 2 {
        grid.spacing[0] * grid.spacing[1]
    } else {
        grid.spacing[0]
    };
    let c = &speed.field.values;
    let grad_sq = |i: usize, ix: usize, iy: usize| -> f64 {
        let s = |j: usize| 0.5 * (p_curr[j] + p_prev[j]);
        let hx = grid.spacing[0];
        let dx = if ix == 0 {
            (s(i + 1) - s(i)) / hx
        } else if ix + 1 == grid.counts[0] {
            (s(i) - s(i - 1)) / hx
        } else {
            (s(i + 1) - s(i - 1)) / (2.0 * hx)
        };
        let mut g = dx * dx;
        if dim == 2 {
            let hy = grid.spacing[1];
            let dy = if iy == 0 {
                (s(i + nx) - s(i)) / hy
            } else if iy + 1 == grid.counts[1] {
                (s(i) - s(i - nx)) / hy
            } else {
                (s(i + nx) - s(i - nx)) / (2.0 * hy)
            };
            g += dy * dy;
        }
        g
    };
    let total = par::sum_chunked(bx * by, |from, to| {
        let mut acc = 0.0;
        for k in from..to {
            let kx = k % bx;
            let ky = k / bx;
            let ix = lo[0] + kx;
            let iy = if dim == 2 { lo[1] + ky } else { 0 };
            let i = iy * nx + ix;
            let mut w = if kx == 0 || kx + 1 == bx { 0.5 } else { 1.0 };
            if dim == 2 && (ky == 0 || ky + 1 == by) {
                w *= 0.5;
            }
            let vel = (p_curr[i] - p_prev[i]) / dt;
            acc += w * (vel * vel / (c[i] * c[i]) + grad_sq(i, ix, iy));
        }
        acc
    });
    Ok(total * cell)
}

/// Energy of the initial data (kinetic part is zero since `p_t(0) = 0`).
pub fn initial_energy(
    f0: &ScalarField,
    speed: &SoundSpeedField,
    domain: &DomainSpec,
) -> Result<f64> {
    interior_energy(speed, domain, &f0.values, &f0.values, 1.0)
}

/// Linear interpolation stencil for sampling the pressure at one detector.
struct SampleStencil {
    idx: [usize; 4],
    w: [f64; 4],
}

impl SampleStencil {
    fn build(grid: &Grid, pos: [f64; 2]) -> SampleStencil {
        let mut i0 = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for a in 0..grid.dim {
            let u = (pos[a] - grid.origin[a]) / grid.spacing[a];
            let cell = (u.floor() as isize).clamp(0, grid.counts[a] as isize - 2) as usize;
            i0[a] = cell;
            frac[a] = (u - cell as f64).clamp(0.0, 1.0);
        }
        let nx = grid.counts[0];
        if grid.dim == 1 {
            SampleStencil {
                idx: [i0[0], i0[0] + 1, 0, 0],
                w: [1.0 - frac[0], frac[0], 0.0, 0.0],
            }
        } else {
            let b = i0[1] * nx + i0[0];
            SampleStencil {
                idx: [b, b + 1, b + nx, b + nx + 1],
                w: [
                    (1.0 - frac[0]) * (1.0 - frac[1]),
                    frac[0] * (1.0 - frac[1]),
                    (1.0 - frac[0]) * frac[1],
                    frac[0] * frac[1],
                ],
            }
        }
    }

    fn sample(&self, p: &[f64]) -> f64 {
        self.w[0] * p[self.idx[0]]
            + self.w[1] * p[self.idx[1]]
            + self.w[2] * p[self.idx[2]]
            + self.w[3] * p[self.idx[3]]
    }
}

fn build_sigma(
    grid: &Grid,
    params: &SolverParams,
    c_max: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = grid.n_points();
    if params.boundary == Boundary::Reflecting || params.sponge_cells == 0 {
        return Ok((vec![0.0; n], 0.0));
    }
    let thickness = params.sponge_cells as f64 * grid.h_min();
    for a in 0..grid.dim {
        let extent = grid.extent_hi(a) - grid.origin[a];
        if 2.0 * thickness >= extent {
            return Err(Error::InvalidSpec(format!(
                "sponge layers ({thickness} each) overlap across axis {a} (extent {extent})"
            )));
        }
    }
    let sigma_max = match params.sigma_max {
        Some(s) if s.is_finite() && s >= 0.0 => s,
        Some(s) => return Err(Error::InvalidSpec(format!("bad sigma_max {s}"))),
        None => 20.0 * c_max / thickness,
    };
    let mut sigma = vec![0.0; n];
    for iy in 0..grid.counts[1] {
        for ix in 0..grid.counts[0] {
            let x = grid.node(ix, iy);
            let mut d = f64::INFINITY;
            for a in 0..grid.dim {
                d = d.min(x[a] - grid.origin[a]).min(grid.extent_hi(a) - x[a]);
            }
            let s = (thickness - d) / thickness;
            if s > 0.0 {
                let s = s.min(1.0);
                sigma[iy * grid.counts[0] + ix] = sigma_max * s * s * s;
            }
        }
    }
    Ok((sigma, sigma_max))
}

/// Runs the forward simulation and records the boundary traces.
pub fn simulate_forward(
    f0: &ScalarField,
    speed: &SoundSpeedField,
    domain: &DomainSpec,
    surface: &ObservationSurface,
    params: &SolverParams,
    horizon: &TimeHorizon,
) -> Result<SimOutput> {
    simulate_with_observer(f0, speed, domain, surface, params, horizon, &mut |_, _, _| {})
}

/// Same as [`simulate_forward`], but calls `observer(step, t, pressure)`
/// after every sample is available (including step 0), with `pressure` the
/// full-grid slice at `t = step * dt`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with_observer(
    f0: &ScalarField,
    speed: &SoundSpeedField,
    domain: &DomainSpec,
    surface: &ObservationSurface,
    params: &SolverParams,
    horizon: &TimeHorizon,
    observer: &mut dyn FnMut(usize, f64, &[f64]),
) -> Result<SimOutput> {
    let grid = &f0.grid;
    if grid != speed.grid() {
        return Err(Error::Mismatch("phantom grid vs sound-speed grid".into()));
    }
    if !f0.all_finite() {
        return Err(Error::NonFinite { step: 0 });
    }
    if surface.is_empty() {
        return Err(Error::Mismatch("observation surface has no detectors".into()));
    }
    for a in 0..grid.dim {
        let ok = (surface.domain.lo[a] - domain.lo[a]).abs() <= 1e-12
            && (surface.domain.hi[a] - domain.hi[a]).abs() <= 1e-12;
        if !ok {
            return Err(Error::Mismatch("surface domain vs reconstruction domain".into()));
        }
    }
    domain.aligned_indices(grid)?;
    if !(params.cfl > 0.0 && params.cfl <= 1.0) {
        return Err(Error::InvalidSpec(format!("cfl {} outside (0, 1]", params.cfl)));
    }
    let limit = params.cfl * grid.h_min() / speed.c_max;
    let dt = params.dt.unwrap_or(limit);
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidSpec(format!("bad dt {dt}")));
    }
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation {
            dt,
            limit,
            cfl: params.cfl,
            h_min: grid.h_min(),
            c_max: speed.c_max,
        });
    }
    if !(horizon.energy_stop > 0.0 && horizon.energy_stop < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "energy_stop {} outside (0, 1)",
            horizon.energy_stop
        )));
    }

    let (sigma, _) = build_sigma(grid, params, speed.c_max)?;
    let peak = f0.max_abs();
    if peak > 0.0 {
        let floor = SUPPORT_FLOOR * peak;
        for (i, &s) in sigma.iter().enumerate() {
            if s > 0.0 && f0.values[i].abs() > floor {
                return Err(Error::SupportInSponge);
            }
        }
    }

    let n = grid.n_points();
    let counts = grid.counts;
    let dim = grid.dim;
    let inv_h2 = [
        1.0 / (grid.spacing[0] * grid.spacing[0]),
        1.0 / (grid.spacing[1] * grid.spacing[1]),
    ];
    let c2dt2: Vec<f64> = speed
        .field
        .values
        .iter()
        .map(|c| c * c * dt * dt)
        .collect();
    let sigma_dt: Vec<f64> = sigma.iter().map(|s| s * dt).collect();

    // Termination plan.
    let n_target = match horizon.t_max {
        Some(t) => {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidSpec(format!("bad t_max {t}")));
            }
            let steps = (t / dt - 1e-9).ceil() as usize;
            if steps < 2 {
                return Err(Error::InvalidSpec(format!(
                    "t_max {t} shorter than two steps of dt {dt}"
                )));
            }
            Some(steps)
        }
        None => None,
    };
    let t_cap = TIME_CAP_FACTOR * domain.diameter() / speed.c_min;
    let n_cap = ((t_cap / dt - 1e-9).ceil() as usize).max(2);

    let e0 = initial_energy(f0, speed, domain)?;
    let stop_threshold = horizon.energy_stop * e0;

    let stencils: Vec<SampleStencil> = surface
        .detectors
        .iter()
        .map(|d| SampleStencil::build(grid, d.position))
        .collect();
    let mut det_rows: Vec<Vec<f64>> = vec![Vec::new(); stencils.len()];
    let record = |p: &[f64], rows: &mut Vec<Vec<f64>>| {
        for (s, row) in stencils.iter().zip(rows.iter_mut()) {
            row.push(s.sample(p));
        }
    };

    let mut prev = f0.values.clone();
    let mut curr = taylor_first_step(&prev, &c2dt2, counts, dim, inv_h2);
    let mut next = vec![0.0; n];

    observer(0, 0.0, &prev);
    record(&prev, &mut det_rows);
    let mut times = vec![0.0];
    let mut values = vec![e0];

    observer(1, dt, &curr);
    record(&curr, &mut det_rows);
    times.push(0.5 * dt);
    values.push(interior_energy(speed, domain, &curr, &prev, dt)?);

    let mut steps_done = 1usize;
    let stop = loop {
        if let Some(target) = n_target {
            if steps_done >= target {
                break StopReason::FixedHorizon;
            }
        } else {
            if steps_done >= 2 && *values.last().unwrap() <= stop_threshold {
                break StopReason::EnergyDecay;
            }
            if steps_done >= n_cap {
                break StopReason::TimeCap;
            }
        }
        leapfrog_step(&mut next, &curr, &prev, &c2dt2, &sigma_dt, counts, dim, inv_h2);
        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut curr, &mut next);
        steps_done += 1;
        if steps_done % 25 == 0 && !curr.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: steps_done });
        }
        observer(steps_done, steps_done as f64 * dt, &curr);
        record(&curr, &mut det_rows);
        times.push((steps_done as f64 - 0.5) * dt);
        values.push(interior_energy(speed, domain, &curr, &prev, dt)?);
    };
    if !curr.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { step: steps_done });
    }

    let samples = steps_done + 1;
    let mut flat = Vec::with_capacity(det_rows.len() * samples);
    for row in &det_rows {
        flat.extend_from_slice(row);
    }
    let sinogram = Sinogram::from_values(surface.clone(), dt, samples, flat)?;
    Ok(SimOutput {
        sinogram,
        energy: EnergyTrace { times, values },
        dt,
        n_steps: steps_done,
        stop,
    })
}

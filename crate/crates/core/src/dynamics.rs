//! Laplacians, the block state matrix and time integration of the
//! third-order error dynamics
//!
//! ```text
//! d/dt (z, ż, z̈) = [ 0      I      0  ] (z, ż, z̈)
//!                  [ 0      0      I  ]
//!                  [ -gx Lx -gv Lv -aI ]
//! ```
//!
//! The leader is vehicle 0 and lives inside the state. On the path
//! topology its Laplacian rows are zero, so a zero leader state stays zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PlatoonError, Result};
use crate::params::{check_asym, PlatoonParams, Topology};

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_OVERFLOW_GUARD: f64 = 1e12;

/// Nearest-neighbor Laplacian stored as three cyclic bands.
///
/// Row `i` has `lower[i]` at column `i-1`, `diag[i]` at `i` and `upper[i]` at
/// `i+1`, with indices taken modulo the order. On the path topology the
/// wrap-around entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    pub topology: Topology,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Laplacian {
    pub fn new(n_followers: usize, asym: f64, topology: Topology) -> Result<Self> {
        if n_followers < 1 {
            return Err(PlatoonError::NoFollowers);
        }
        check_asym("rho", asym)?;
        let n = n_followers + 1;
        let mut lower = vec![-(1.0 - asym); n];
        let diag = {
            let mut d = vec![1.0; n];
            if topology == Topology::Path {
                d[0] = 0.0;
            }
            d
        };
        let mut upper = vec![-asym; n];
        if topology == Topology::Path {
            lower[0] = 0.0;
            upper[0] = 0.0;
            lower[n - 1] = -1.0;
            upper[n - 1] = 0.0;
        }
        Ok(Self {
            topology,
            lower,
            diag,
            upper,
        })
    }

    pub fn order(&self) -> usize {
        self.diag.len()
    }

    /// `out[i] += scale * (L x)[i]`.
    #[inline]
    pub fn apply_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.order();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        if n == 1 {
            out[0] += scale * self.diag[0] * x[0];
            return;
        }
        out[0] += scale * (self.lower[0] * x[n - 1] + self.diag[0] * x[0] + self.upper[0] * x[1]);
        for i in 1..n - 1 {
            out[i] +=
                scale * (self.lower[i] * x[i - 1] + self.diag[i] * x[i] + self.upper[i] * x[i + 1]);
        }
        let k = n - 1;
        out[k] += scale * (self.lower[k] * x[k - 1] + self.diag[k] * x[k] + self.upper[k] * x[0]);
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, (i + n - 1) % n)] += self.lower[i];
            m[(i, i)] += self.diag[i];
            m[(i, (i + 1) % n)] += self.upper[i];
        }
        m
    }
}

/// Dense Laplacian of order `n_followers + 1`.
pub fn build_laplacian(n_followers: usize, asym: f64, topology: Topology) -> Result<DMatrix<f64>> {
    Laplacian::new(n_followers, asym, topology).map(|l| l.to_dense())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPair {
    pub l_x: Laplacian,
    pub l_v: Laplacian,
    pub topology: Topology,
}

impl LaplacianPair {
    pub fn new(params: &PlatoonParams, topology: Topology) -> Result<Self> {
        Ok(Self {
            l_x: Laplacian::new(params.n_followers, params.asym_x, topology)?,
            l_v: Laplacian::new(params.n_followers, params.asym_v, topology)?,
            topology,
        })
    }
}

/// The closed-loop system in structured form.
#[derive(Debug, Clone)]
pub struct PlatoonSystem {
    pub params: PlatoonParams,
    pub laplacians: LaplacianPair,
}

impl PlatoonSystem {
    pub fn new(params: PlatoonParams, topology: Topology) -> Result<Self> {
        params.validate()?;
        let laplacians = LaplacianPair::new(&params, topology)?;
        Ok(Self { params, laplacians })
    }

    pub fn topology(&self) -> Topology {
        self.laplacians.topology
    }

    pub fn n_vehicles(&self) -> usize {
        self.params.n_vehicles()
    }

    /// Order of the full state, 3(N+1).
    pub fn order(&self) -> usize {
        3 * self.n_vehicles()
    }

    /// Dense block matrix.
    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.n_vehicles();
        let p = &self.params;
        let mut m = DMatrix::zeros(3 * n, 3 * n);
        for i in 0..n {
            m[(i, n + i)] = 1.0;
            m[(n + i, 2 * n + i)] = 1.0;
            m[(2 * n + i, 2 * n + i)] = -p.friction;
        }
        let lx = self.laplacians.l_x.to_dense();
        let lv = self.laplacians.l_v.to_dense();
        m.view_mut((2 * n, 0), (n, n)).copy_from(&(-p.gain_x * lx));
        m.view_mut((2 * n, n), (n, n)).copy_from(&(-p.gain_v * lv));
        m
    }

    /// Time derivative of `(z, ż, z̈)` in O(N).
    pub fn derivative(&self, state: &StateVector, out: &mut StateVector) {
        let p = &self.params;
        out.z.copy_from_slice(&state.z_dot);
        out.z_dot.copy_from_slice(&state.z_ddot);
        for (o, &w) in out.z_ddot.iter_mut().zip(&state.z_ddot) {
            *o = -p.friction * w;
        }
        self.laplacians
            .l_x
            .apply_add(&state.z, -p.gain_x, &mut out.z_ddot);
        self.laplacians
            .l_v
            .apply_add(&state.z_dot, -p.gain_v, &mut out.z_ddot);
    }
}

/// Dense `3(N+1)` square system matrix.
pub fn assemble_system(params: &PlatoonParams, topology: Topology) -> Result<DMatrix<f64>> {
    PlatoonSystem::new(*params, topology).map(|s| s.assemble())
}

/// Error positions, velocities and accelerations of all vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub z: Vec<f64>,
    pub z_dot: Vec<f64>,
    pub z_ddot: Vec<f64>,
}

impl StateVector {
    pub fn zeros(n_vehicles: usize) -> Self {
        Self {
            z: vec![0.0; n_vehicles],
            z_dot: vec![0.0; n_vehicles],
            z_ddot: vec![0.0; n_vehicles],
        }
    }

    /// Platoon at rest while the leader starts moving with unit velocity.
    pub fn leader_step(n_followers: usize) -> Self {
        let mut s = Self::zeros(n_followers + 1);
        s.z_dot[1..].fill(-1.0);
        s
    }

    /// One agent displaced by `displacement`, everything else at rest.
    pub fn displaced_agent(n_followers: usize, agent: usize, displacement: f64) -> Result<Self> {
        let n = n_followers + 1;
        if agent >= n {
            return Err(PlatoonError::AgentOutOfRange {
                agent,
                n_vehicles: n,
            });
        }
        let mut s = Self::zeros(n);
        s.z[agent] = displacement;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let s = |v: &[f64]| v.iter().map(|x| alpha * x).collect();
        Self {
            z: s(&self.z),
            z_dot: s(&self.z_dot),
            z_ddot: s(&self.z_ddot),
        }
    }

    /// Stacked `(z, ż, z̈)`.
    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_iterator(
            3 * self.len(),
            self.z
                .iter()
                .chain(&self.z_dot)
                .chain(&self.z_ddot)
                .copied(),
        )
    }

    pub fn from_dvector(v: &DVector<f64>) -> Result<Self> {
        if !v.len().is_multiple_of(3) {
            return Err(PlatoonError::DimensionMismatch {
                expected: 3 * (v.len() / 3),
                got: v.len(),
            });
        }
        let n = v.len() / 3;
        let s = v.as_slice();
        Ok(Self {
            z: s[..n].to_vec(),
            z_dot: s[n..2 * n].to_vec(),
            z_ddot: s[2 * n..].to_vec(),
        })
    }

    fn axpy_from(&mut self, base: &StateVector, h: f64, k: &StateVector) {
        for (dst, (b, d)) in [
            (&mut self.z, (&base.z, &k.z)),
            (&mut self.z_dot, (&base.z_dot, &k.z_dot)),
            (&mut self.z_ddot, (&base.z_ddot, &k.z_ddot)),
        ] {
            for ((o, &b), &d) in dst.iter_mut().zip(b.iter()).zip(d.iter()) {
                *o = b + h * d;
            }
        }
    }

    fn max_abs_position(&self) -> f64 {
        self.z.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Integration step, s.
    pub dt: f64,
    /// Final time, s. The last sample is the first multiple of `dt` at or past it.
    pub t_end: f64,
    /// Record every `stride`-th step; the trace spacing is `stride * dt`.
    pub stride: usize,
    pub overflow_guard: f64,
}

impl SimOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            stride: 1,
            overflow_guard: DEFAULT_OVERFLOW_GUARD,
        }
    }

    pub fn with_stride(self, stride: usize) -> Self {
        Self { stride, ..self }
    }

    /// Stride that keeps roughly `max_samples` records over the horizon.
    pub fn with_max_samples(self, max_samples: usize) -> Self {
        let steps = (self.t_end / self.dt).ceil().max(1.0) as usize;
        let stride = steps.div_ceil(max_samples.max(1)).max(1);
        Self { stride, ..self }
    }
}

/// Time-sampled spacing errors `e_i = z_0 - z_i`.
///
/// `errors[i]` is the series for vehicle `i`; column 0 is identically zero
/// for leader-driven experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub params: PlatoonParams,
    pub topology: Topology,
    /// Sample spacing, s.
    pub dt: f64,
    pub t_end: f64,
    pub times: Vec<f64>,
    pub errors: Vec<Vec<f64>>,
    pub diverged: bool,
}

impl SimulationTrace {
    pub fn n_samples(&self) -> usize {
        self.times.len()
    }

    pub fn n_vehicles(&self) -> usize {
        self.errors.len()
    }

    pub fn last_vehicle(&self) -> &[f64] {
        &self.errors[self.errors.len() - 1]
    }

    pub fn sample(&self, k: usize) -> Vec<f64> {
        self.errors.iter().map(|e| e[k]).collect()
    }

    /// `x_i(t) = t - e_i(t)` for a unit-velocity leader whose error state is zero.
    pub fn absolute_positions(&self, vehicle: usize) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.errors[vehicle])
            .map(|(t, e)| t - e)
            .collect()
    }

    pub fn max_abs_error(&self, vehicle: usize) -> f64 {
        self.errors[vehicle]
            .iter()
            .fold(0.0f64, |m, e| m.max(e.abs()))
    }

    pub fn metadata(&self) -> TraceMetadata {
        TraceMetadata {
            n: self.params.n_followers,
            a: self.params.friction,
            gx: self.params.gain_x,
            gv: self.params.gain_v,
            rho_x: self.params.asym_x,
            rho_v: self.params.asym_v,
            topology: self.topology,
            dt: self.dt,
            t_end: self.t_end,
            diverged: self.diverged,
        }
    }
}

/// JSON sidecar written next to a trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    #[serde(rename = "N")]
    pub n: usize,
    pub a: f64,
    pub gx: f64,
    pub gv: f64,
    pub rho_x: f64,
    pub rho_v: f64,
    pub topology: Topology,
    pub dt: f64,
    pub t_end: f64,
    pub diverged: bool,
}

struct Rk4Workspace {
    k1: StateVector,
    k2: StateVector,
    k3: StateVector,
    k4: StateVector,
    tmp: StateVector,
}

impl Rk4Workspace {
    fn new(n: usize) -> Self {
        Self {
            k1: StateVector::zeros(n),
            k2: StateVector::zeros(n),
            k3: StateVector::zeros(n),
            k4: StateVector::zeros(n),
            tmp: StateVector::zeros(n),
        }
    }
}

/// One classical RK4 step in place.
fn rk4_step(system: &PlatoonSystem, x: &mut StateVector, h: f64, ws: &mut Rk4Workspace) {
    let Rk4Workspace {
        k1,
        k2,
        k3,
        k4,
        tmp,
    } = ws;
    system.derivative(x, k1);
    tmp.axpy_from(x, 0.5 * h, k1);
    system.derivative(tmp, k2);
    tmp.axpy_from(x, 0.5 * h, k2);
    system.derivative(tmp, k3);
    tmp.axpy_from(x, h, k3);
    system.derivative(tmp, k4);
    let w = h / 6.0;
    for (dst, (a, b, c, d)) in [
        (&mut x.z, (&k1.z, &k2.z, &k3.z, &k4.z)),
        (&mut x.z_dot, (&k1.z_dot, &k2.z_dot, &k3.z_dot, &k4.z_dot)),
        (
            &mut x.z_ddot,
            (&k1.z_ddot, &k2.z_ddot, &k3.z_ddot, &k4.z_ddot),
        ),
    ] {
        for i in 0..dst.len() {
            dst[i] += w * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]);
        }
    }
}

/// Integrates the closed loop from `initial`, returning the state at `t_end`
/// alongside the sampled trace.
pub fn simulate_with_state(
    system: &PlatoonSystem,
    initial: &StateVector,
    opts: &SimOptions,
) -> Result<(SimulationTrace, StateVector)> {
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(PlatoonError::InvalidParameter {
            name: "dt",
            value: opts.dt,
            reason: "must be positive",
        });
    }
    if !(opts.t_end > opts.dt) {
        return Err(PlatoonError::InvalidParameter {
            name: "t_end",
            value: opts.t_end,
            reason: "must exceed dt",
        });
    }
    if opts.stride == 0 {
        return Err(PlatoonError::InvalidParameter {
            name: "stride",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let n = system.n_vehicles();
    for len in [initial.z.len(), initial.z_dot.len(), initial.z_ddot.len()] {
        if len != n {
            return Err(PlatoonError::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }

    let steps = (opts.t_end / opts.dt - 1e-9).ceil() as usize;
    let n_records = steps / opts.stride + 1;
    let mut times = Vec::with_capacity(n_records);
    let mut errors: Vec<Vec<f64>> = (0..n).map(|_| Vec::with_capacity(n_records)).collect();
    let record = |x: &StateVector, t: f64, times: &mut Vec<f64>, errors: &mut Vec<Vec<f64>>| {
        times.push(t);
        let z0 = x.z[0];
        for (col, &zi) in errors.iter_mut().zip(&x.z) {
            col.push(z0 - zi);
        }
    };

    let mut x = initial.clone();
    let mut ws = Rk4Workspace::new(n);
    record(&x, 0.0, &mut times, &mut errors);
    let mut diverged = false;
    for step in 1..=steps {
        rk4_step(system, &mut x, opts.dt, &mut ws);
        let m = x.max_abs_position();
        if !(m <= opts.overflow_guard) {
            diverged = true;
            break;
        }
        if step % opts.stride == 0 {
            record(&x, step as f64 * opts.dt, &mut times, &mut errors);
        }
    }

    let trace = SimulationTrace {
        params: system.params,
        topology: system.topology(),
        dt: opts.dt * opts.stride as f64,
        t_end: opts.t_end,
        times,
        errors,
        diverged,
    };
    Ok((trace, x))
}

pub fn simulate(
    system: &PlatoonSystem,
    initial: &StateVector,
    opts: &SimOptions,
) -> Result<SimulationTrace> {
    simulate_with_state(system, initial, opts).map(|(t, _)| t)
}

//! Backward-Euler time stepping with Newton iterations, static solves and recording.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};

use super::energy::{ElasticModel, Triplets};
use super::network::{EdgeFrame, RodNetwork};
use super::DerError;
use crate::files::{self, FileError};
use crate::geometry::Vec3;

pub const GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonParams {
    /// Residual infinity-norm tolerance (N).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50 }
    }
}

/// Prescribed sinusoidal displacement of the grasp node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Actuation {
    pub node: usize,
    pub direction: [f64; 3],
    pub amplitude_m: f64,
    pub frequency_hz: f64,
    /// Nodes up to this many hops from the grasp node receive initial-guess hints.
    #[serde(default = "default_guess_hops")]
    pub guess_hops: usize,
    /// Fraction of the grasp increment given per hop.
    #[serde(default = "default_guess_decay")]
    pub guess_decay: f64,
}

fn default_guess_hops() -> usize {
    3
}

fn default_guess_decay() -> f64 {
    0.5
}

impl Actuation {
    pub fn new(node: usize, direction: Vec3, amplitude_m: f64, frequency_hz: f64) -> Self {
        Self {
            node,
            direction: direction.into(),
            amplitude_m,
            frequency_hz,
            guess_hops: default_guess_hops(),
            guess_decay: default_guess_decay(),
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt_s: f64,
    pub duration_s: f64,
    pub gravity_on: bool,
    pub actuation: Option<Actuation>,
    pub record: Vec<usize>,
    pub newton: NewtonParams,
    /// Each listed node and its direct neighbours are held at their initial positions.
    pub clamped_nodes: Vec<usize>,
    /// Nodes held at their initial positions (position only).
    pub pinned_nodes: Vec<usize>,
    /// Solve for static equilibrium under gravity before the first step.
    pub presettle: bool,
    /// Overrides the material damping coefficient when set.
    pub damping: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_s: 1e-3,
            duration_s: 1.0,
            gravity_on: true,
            actuation: None,
            record: Vec::new(),
            newton: NewtonParams::default(),
            clamped_nodes: vec![0],
            pinned_nodes: Vec::new(),
            presettle: true,
            damping: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, net: &RodNetwork) -> Result<(), DerError> {
        let bad = |m: String| Err(DerError::InvalidConfig(m));
        let n = net.node_count();
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) {
            return bad("dt_s must be positive".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return bad("duration_s must be non-negative".into());
        }
        if !(self.newton.tol.is_finite() && self.newton.tol > 0.0) || self.newton.max_iter == 0 {
            return bad("newton tol must be positive and max_iter at least 1".into());
        }
        if let Some(c) = self.damping {
            if !(c.is_finite() && c >= 0.0) {
                return bad("damping must be non-negative".into());
            }
        }
        for &v in self.record.iter().chain(&self.clamped_nodes).chain(&self.pinned_nodes) {
            if v >= n {
                return bad(format!("node {v} out of range (network has {n} nodes)"));
            }
        }
        if let Some(a) = &self.actuation {
            if a.node >= n {
                return bad(format!("actuated node {} out of range", a.node));
            }
            let d = Vec3::from(a.direction);
            if !(d.iter().all(|c| c.is_finite()) && d.norm() > 1e-12) {
                return bad("actuation direction must be a non-zero vector".into());
            }
            if !(a.amplitude_m.is_finite() && a.amplitude_m >= 0.0) {
                return bad("actuation amplitude must be non-negative".into());
            }
            if !(a.frequency_hz.is_finite() && a.frequency_hz > 0.0) {
                return bad("actuation frequency must be positive".into());
            }
            if !(a.guess_decay.is_finite() && (0.0..=1.0).contains(&a.guess_decay)) {
                return bad("guess_decay must lie in [0, 1]".into());
            }
            if self.fixed_nodes(net).contains(&a.node) {
                return bad(format!("actuated node {} is also held fixed", a.node));
            }
        }
        Ok(())
    }

    /// All nodes held at their initial position, ascending.
    pub fn fixed_nodes(&self, net: &RodNetwork) -> Vec<usize> {
        let mut out: Vec<usize> = self.pinned_nodes.clone();
        for &c in &self.clamped_nodes {
            out.push(c);
            out.extend(net.neighbours(c));
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn step_count(&self) -> usize {
        (self.duration_s / self.dt_s - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticState {
    /// Node positions `[x0, y0, z0, x1, …]`; there are no twist unknowns.
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub frames: Vec<EdgeFrame>,
    pub step: usize,
    pub time: f64,
}

impl ElasticState {
    pub fn at_rest(net: &RodNetwork) -> Self {
        Self {
            q: DVector::from_vec(net.rest_positions()),
            v: DVector::zeros(net.dof_count()),
            frames: net.rest_frames().to_vec(),
            step: 0,
            time: 0.0,
        }
    }

    pub fn node(&self, i: usize) -> Vec3 {
        Vec3::new(self.q[3 * i], self.q[3 * i + 1], self.q[3 * i + 2])
    }

    pub fn set_node(&mut self, i: usize, p: &Vec3) {
        for k in 0..3 {
            self.q[3 * i + k] = p[k];
        }
    }

    /// Carries every reference frame onto the current edge directions.
    pub fn transport_frames(&mut self, net: &RodNetwork) {
        for (k, e) in net.edges().iter().enumerate() {
            let v = self.node(e.b) - self.node(e.a);
            self.frames[k] = self.frames[k].transported(&v);
        }
    }

    /// Largest deviation of the frames from orthonormality and from their edges.
    pub fn frame_error(&self, net: &RodNetwork) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, e) in net.edges().iter().enumerate() {
            let t = (self.node(e.b) - self.node(e.a)).normalize();
            let f = &self.frames[k];
            for v in [
                f.m1.norm() - 1.0,
                f.m2.norm() - 1.0,
                f.m1.dot(&f.m2),
                f.m1.dot(&t),
                f.m2.dot(&t),
            ] {
                worst = worst.max(v.abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonStats {
    pub steps: usize,
    pub newton_iterations: usize,
    pub max_newton_iterations: usize,
    pub presettle_iterations: usize,
}

struct ActiveActuation {
    node: usize,
    direction: Vec3,
    amplitude: f64,
    frequency: f64,
    base: Vec3,
    guess: Vec<(usize, f64)>,
}

impl ActiveActuation {
    fn position(&self, t: f64) -> Vec3 {
        self.base + self.direction * (self.amplitude * (2.0 * std::f64::consts::PI * self.frequency * t).sin())
    }
}

/// Outcome of one Newton solve.
struct NewtonRun {
    iterations: usize,
}

/// A single simulation instance. Stepping is sequential by construction.
pub struct Simulator<'a> {
    net: &'a RodNetwork,
    model: &'a ElasticModel,
    dt: f64,
    damping: f64,
    newton: NewtonParams,
    mass_dof: DVector<f64>,
    gravity: DVector<f64>,
    free: Vec<usize>,
    free_index: Vec<usize>,
    actuation: Option<ActiveActuation>,
    actuation_spec: Option<Actuation>,
    pub state: ElasticState,
    pub stats: NewtonStats,
}

impl<'a> Simulator<'a> {
    pub fn new(net: &'a RodNetwork, model: &'a ElasticModel, config: &SimConfig) -> Result<Self, DerError> {
        Self::with_state(net, model, config, ElasticState::at_rest(net))
    }

    pub fn with_state(net: &'a RodNetwork, model: &'a ElasticModel, config: &SimConfig, state: ElasticState) -> Result<Self, DerError> {
        config.validate(net)?;
        if state.q.len() != net.dof_count() || state.v.len() != net.dof_count() || state.frames.len() != net.edges().len() {
            return Err(DerError::InvalidConfig("state does not match the network".into()));
        }
        let n = net.node_count();
        let mut constrained = vec![false; n];
        for v in config.fixed_nodes(net) {
            constrained[v] = true;
        }
        if let Some(a) = &config.actuation {
            constrained[a.node] = true;
        }
        let mut free = Vec::new();
        let mut free_index = vec![usize::MAX; 3 * n];
        for (v, &c) in constrained.iter().enumerate() {
            if !c {
                for k in 0..3 {
                    free_index[3 * v + k] = free.len();
                    free.push(3 * v + k);
                }
            }
        }
        let mass_dof = DVector::from_iterator(3 * n, net.masses().iter().flat_map(|&m| [m, m, m]));
        let g = if config.gravity_on { Vec3::from(GRAVITY) } else { Vec3::zeros() };
        let gravity = DVector::from_iterator(3 * n, net.masses().iter().flat_map(|&m| [m * g.x, m * g.y, m * g.z]));
        Ok(Self {
            net,
            model,
            dt: config.dt_s,
            damping: config.damping.unwrap_or(net.material().damping),
            newton: config.newton,
            mass_dof,
            gravity,
            free,
            free_index,
            actuation: None,
            actuation_spec: config.actuation.clone(),
            state,
            stats: NewtonStats::default(),
        })
    }

    pub fn network(&self) -> &RodNetwork {
        self.net
    }

    pub fn free_dof_count(&self) -> usize {
        self.free.len()
    }

    /// Static equilibrium under gravity and `extra` nodal forces, holding constrained nodes in place.
    /// Velocities are zeroed and frames re-referenced to the solution.
    pub fn settle(&mut self, extra: Option<&DVector<f64>>) -> Result<usize, DerError> {
        let mut f = self.gravity.clone();
        if let Some(x) = extra {
            f += x;
        }
        let mut total = 0;
        for _ in 0..8 {
            let anchor = self.state.q.clone();
            let q0 = self.state.q.clone();
            let frames = self.state.frames.clone();
            let residual0 = self.residual(&q0, 0.0, &anchor, &f, &frames)?;
            if total > 0 && inf_norm_free(&residual0, &self.free) < self.newton.tol {
                break;
            }
            let mut q = q0;
            let run = self.newton_solve(&mut q, 0.0, &anchor, &f, &frames, 0)?;
            total += run.iterations;
            self.state.q = q;
            self.state.transport_frames(self.net);
        }
        self.state.v.fill(0.0);
        self.stats.presettle_iterations += total;
        Ok(total)
    }

    /// Fixes the actuation base at the grasp node's current position.
    pub fn start_actuation(&mut self) {
        self.actuation = self.actuation_spec.as_ref().map(|a| {
            let hops = self.net.hop_distances(a.node);
            let guess = hops
                .iter()
                .enumerate()
                .filter(|&(v, &h)| h >= 1 && h <= a.guess_hops && self.free_index[3 * v] != usize::MAX)
                .map(|(v, &h)| (v, a.guess_decay.powi(h as i32)))
                .collect();
            ActiveActuation {
                node: a.node,
                direction: Vec3::from(a.direction).normalize(),
                amplitude: a.amplitude_m,
                frequency: a.frequency_hz,
                base: self.state.node(a.node),
                guess,
            }
        });
    }

    /// Advances one backward-Euler step.
    pub fn step(&mut self) -> Result<(), DerError> {
        if self.actuation.is_none() && self.actuation_spec.is_some() {
            self.start_actuation();
        }
        let dt = self.dt;
        let step = self.state.step + 1;
        let t_next = step as f64 * dt;
        let q_n = self.state.q.clone();
        let mut q = q_n.clone();
        if let Some(act) = &self.actuation {
            let old = self.state.node(act.node);
            let new = act.position(t_next);
            let delta = new - old;
            for k in 0..3 {
                q[3 * act.node + k] = new[k];
            }
            for &(v, f) in &act.guess {
                for k in 0..3 {
                    q[3 * v + k] += f * delta[k];
                }
            }
        }
        let a = 1.0 / (dt * dt) + self.damping / dt;
        let anchor = (&q_n + &self.state.v * dt) / (dt * dt * a) + &q_n * (self.damping / (dt * a));
        let frames = self.state.frames.clone();
        let f = self.gravity.clone();
        let run = self.newton_solve(&mut q, a, &anchor, &f, &frames, step)?;
        self.stats.steps += 1;
        self.stats.newton_iterations += run.iterations;
        self.stats.max_newton_iterations = self.stats.max_newton_iterations.max(run.iterations);
        self.state.v = (&q - &q_n) / dt;
        self.state.q = q;
        self.state.step = step;
        self.state.time = t_next;
        self.state.transport_frames(self.net);
        Ok(())
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.state.v.iter().zip(self.mass_dof.iter()).map(|(v, m)| m * v * v).sum::<f64>()
    }

    pub fn elastic_energy(&self) -> Result<f64, DerError> {
        self.model.energy(self.net, &self.state.q, &self.state.frames)
    }

    /// Kinetic plus elastic plus gravitational potential energy.
    pub fn mechanical_energy(&self) -> Result<f64, DerError> {
        Ok(self.kinetic_energy() + self.elastic_energy()? - self.gravity.dot(&self.state.q))
    }

    /// `a·M(q − anchor) + ∇E(q) − f`.
    fn residual(&self, q: &DVector<f64>, a: f64, anchor: &DVector<f64>, f: &DVector<f64>, frames: &[EdgeFrame]) -> Result<DVector<f64>, DerError> {
        let d = self.model.derivatives(self.net, q, frames, false)?;
        Ok(self.assemble_residual(q, a, anchor, f, d.grad))
    }

    fn assemble_residual(&self, q: &DVector<f64>, a: f64, anchor: &DVector<f64>, f: &DVector<f64>, grad: DVector<f64>) -> DVector<f64> {
        let mut r = grad - f;
        if a != 0.0 {
            r += (q - anchor).component_mul(&self.mass_dof) * a;
        }
        r
    }

    fn newton_solve(
        &self,
        q: &mut DVector<f64>,
        a: f64,
        anchor: &DVector<f64>,
        f: &DVector<f64>,
        frames: &[EdgeFrame],
        step: usize,
    ) -> Result<NewtonRun, DerError> {
        let mut history = Vec::new();
        let mut iterations = 0;
        loop {
            let d = self.model.derivatives(self.net, q, frames, true)?;
            let r = self.assemble_residual(q, a, anchor, f, d.grad);
            let norm = inf_norm_free(&r, &self.free);
            history.push(norm);
            if !norm.is_finite() {
                return Err(DerError::NewtonDivergence { step, residuals: history });
            }
            if iterations >= 1 && norm < self.newton.tol {
                return Ok(NewtonRun { iterations });
            }
            if iterations >= self.newton.max_iter {
                return Err(DerError::NewtonDivergence { step, residuals: history });
            }
            let rhs = DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| -r[i]));
            let dx = self
                .solve_linear(d.hess.as_ref().expect("requested"), a, &rhs)
                .ok_or(DerError::SingularSystem { step })?;
            let r2 = free_norm2(&r, &self.free);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..12 {
                let mut trial = q.clone();
                for (k, &i) in self.free.iter().enumerate() {
                    trial[i] += alpha * dx[k];
                }
                if let Ok(rt) = self.residual(&trial, a, anchor, f, frames) {
                    let n2 = free_norm2(&rt, &self.free);
                    if n2.is_finite() && (n2 <= r2 || accepted.is_none() && alpha < 1e-3) {
                        accepted = Some(trial);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            match accepted {
                Some(trial) => *q = trial,
                None => {
                    history.push(f64::INFINITY);
                    return Err(DerError::NewtonDivergence { step, residuals: history });
                }
            }
            iterations += 1;
        }
    }

    fn solve_linear(&self, hess: &Triplets, a: f64, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.free.len();
        if n == 0 {
            return Some(DVector::zeros(0));
        }
        let mut coo = CooMatrix::new(n, n);
        for &(r, c, v) in hess {
            let (fr, fc) = (self.free_index[r], self.free_index[c]);
            if fr != usize::MAX && fc != usize::MAX {
                coo.push(fr, fc, v);
            }
        }
        if a != 0.0 {
            for (k, &i) in self.free.iter().enumerate() {
                coo.push(k, k, a * self.mass_dof[i]);
            }
        }
        let csc = CscMatrix::from(&coo);
        if let Ok(chol) = CscCholesky::factor(&csc) {
            let x = chol.solve(rhs);
            if x.iter().all(|v| v.is_finite()) {
                return Some(x.column(0).into_owned());
            }
        }
        let mut dense = DMatrix::zeros(n, n);
        for (r, c, v) in csc.triplet_iter() {
            dense[(r, c)] += *v;
        }
        dense.lu().solve(rhs).filter(|x| x.iter().all(|v| v.is_finite()))
    }
}

fn inf_norm_free(r: &DVector<f64>, free: &[usize]) -> f64 {
    free.iter().fold(0.0, |m: f64, &i| if r[i].is_nan() { f64::NAN } else { m.max(r[i].abs()) })
}

fn free_norm2(r: &DVector<f64>, free: &[usize]) -> f64 {
    free.iter().map(|&i| r[i] * r[i]).sum()
}

/// Recorded node trajectories.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub nodes: Vec<usize>,
    pub times: Vec<f64>,
    /// `positions[k][j]` is node `nodes[j]` at `times[k]`.
    pub positions: Vec<Vec<[f64; 3]>>,
}

impl TimeSeries {
    pub fn new(nodes: Vec<usize>) -> Self {
        Self {
            nodes,
            ..Default::default()
        }
    }

    pub fn record(&mut self, state: &ElasticState) {
        self.times.push(state.time);
        self.positions.push(self.nodes.iter().map(|&v| state.node(v).into()).collect());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Trajectory of a recorded node.
    pub fn track(&self, node: usize) -> Option<Vec<Vec3>> {
        let j = self.nodes.iter().position(|&v| v == node)?;
        Some(self.positions.iter().map(|row| Vec3::from(row[j])).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s");
        for v in &self.nodes {
            out.push_str(&format!(",node{v}_x,node{v}_y,node{v}_z"));
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.positions) {
            out.push_str(&t.to_string());
            for p in row {
                for c in p {
                    out.push(',');
                    out.push_str(&c.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), FileError> {
        files::write_bytes(path, self.to_csv().as_bytes())
    }

    pub fn parse_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty CSV")?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"t_s") || (cols.len() - 1) % 3 != 0 {
            return Err("header must be t_s followed by x,y,z triples".into());
        }
        let mut nodes = Vec::new();
        for triple in cols[1..].chunks(3) {
            let id = triple[0]
                .strip_prefix("node")
                .and_then(|s| s.strip_suffix("_x"))
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| format!("bad column {}", triple[0]))?;
            nodes.push(id);
        }
        let mut series = TimeSeries::new(nodes);
        for (k, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| format!("row {}: {e}", k + 1))?;
            if vals.len() != cols.len() {
                return Err(format!("row {} has {} fields, expected {}", k + 1, vals.len(), cols.len()));
            }
            series.times.push(vals[0]);
            series.positions.push(vals[1..].chunks(3).map(|c| [c[0], c[1], c[2]]).collect());
        }
        Ok(series)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: TimeSeries,
    pub stats: NewtonStats,
    pub final_state: ElasticState,
}

/// Pre-settles (when configured and gravity is on), then integrates for the configured duration.
pub fn run(net: &RodNetwork, model: &ElasticModel, config: &SimConfig) -> Result<RunOutput, DerError> {
    let mut sim = Simulator::new(net, model, config)?;
    if config.presettle && config.gravity_on {
        sim.settle(None)?;
        sim.state.time = 0.0;
    }
    sim.start_actuation();
    let mut series = TimeSeries::new(config.record.clone());
    series.record(&sim.state);
    for _ in 0..config.step_count() {
        sim.step()?;
        series.record(&sim.state);
    }
    Ok(RunOutput {
        series,
        stats: sim.stats,
        final_state: sim.state,
    })
}

/// Static equilibrium from rest under gravity (when on) plus `extra` nodal forces.
pub fn static_solve(
    net: &RodNetwork,
    model: &ElasticModel,
    config: &SimConfig,
    extra: Option<&DVector<f64>>,
) -> Result<ElasticState, DerError> {
    let mut sim = Simulator::new(net, model, config)?;
    sim.settle(extra)?;
    Ok(sim.state)
}

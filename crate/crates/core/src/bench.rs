//! Material estimation, Euler–Bernoulli reference values, amplitude metrics and sweeps.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DVector, Matrix3, SymmetricEigen};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dersim::{self, Actuation, DerError, ElasticModel, NetworkFile, RodNetwork, SimConfig, Simulator, TimeSeries};
use crate::files::{self, FileError};
use crate::geometry::Vec3;
use crate::registry::{Registry, RegistryError};

/// First root of `1 + cos β cosh β = 0`.
pub const BETA1: f64 = 1.875104068711961;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("measurement window too short: need {needed_s} s after settling, have {available_s} s")]
    InsufficientWindow { needed_s: f64, available_s: f64 },
    #[error("node {0} is not in the recorded series")]
    NodeNotRecorded(usize),
    #[error("sweep point {point} failed: {source}")]
    Simulation {
        point: usize,
        #[source]
        source: DerError,
    },
    #[error(transparent)]
    Der(#[from] DerError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

fn positive(name: &str, v: f64) -> Result<(), BenchError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(BenchError::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// `ρ = m / (π r² L)`.
pub fn estimate_density(mass: f64, radius: f64, length: f64) -> Result<f64, BenchError> {
    positive("mass", mass)?;
    positive("radius", radius)?;
    positive("length", length)?;
    Ok(mass / (PI * radius * radius * length))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySample {
    pub mass_kg: f64,
    pub radius_m: f64,
    pub length_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub mean: f64,
    /// Population variance of the per-sample estimates.
    pub variance: f64,
}

pub fn estimate_density_batch(samples: &[DensitySample]) -> Result<DensityEstimate, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::InvalidParameter("no density samples".into()));
    }
    let rho: Vec<f64> = samples
        .iter()
        .map(|s| estimate_density(s.mass_kg, s.radius_m, s.length_m))
        .collect::<Result<_, _>>()?;
    let n = rho.len() as f64;
    let mean = rho.iter().sum::<f64>() / n;
    let variance = rho.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(DensityEstimate { mean, variance })
}

/// First clamped-free bending frequency `(β²/2π)·√(EI/(ρA L⁴))`.
pub fn cantilever_frequency(young: f64, density: f64, radius: f64, length: f64) -> Result<f64, BenchError> {
    positive("young modulus", young)?;
    positive("density", density)?;
    positive("radius", radius)?;
    positive("length", length)?;
    let ei = young * PI * radius.powi(4) / 4.0;
    let rho_a = density * PI * radius * radius;
    Ok(BETA1 * BETA1 / (2.0 * PI) * (ei / (rho_a * length.powi(4))).sqrt())
}

/// Inverse of [`cantilever_frequency`] in `E`.
pub fn estimate_young_modulus(frequency: f64, density: f64, radius: f64, length: f64) -> Result<f64, BenchError> {
    positive("frequency", frequency)?;
    positive("density", density)?;
    positive("radius", radius)?;
    positive("length", length)?;
    let w = 2.0 * PI * frequency / (BETA1 * BETA1);
    let rho_a = density * PI * radius * radius;
    let i = PI * radius.powi(4) / 4.0;
    Ok(w * w * rho_a * length.powi(4) / i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deflection {
    pub delta_m: f64,
    /// False when `δ/L > 0.1`, outside the small-deflection regime.
    pub small_deflection: bool,
}

/// Tip deflection `F L³ / (3 E I)` of an end-loaded cantilever.
pub fn cantilever_static_deflection(young: f64, radius: f64, length: f64, tip_force: f64) -> Result<Deflection, BenchError> {
    positive("young modulus", young)?;
    positive("radius", radius)?;
    positive("length", length)?;
    if !(tip_force.is_finite() && tip_force >= 0.0) {
        return Err(BenchError::InvalidParameter(format!("tip force must be non-negative, got {tip_force}")));
    }
    let i = PI * radius.powi(4) / 4.0;
    let delta = tip_force * length.powi(3) / (3.0 * young * i);
    Ok(Deflection {
        delta_m: delta,
        small_deflection: delta / length <= 0.1,
    })
}

/// Scalar oscillation amplitude of a node trajectory.
pub trait AmplitudeMetric: Send + Sync {
    fn name(&self) -> &str;
    fn amplitude(&self, track: &[Vec3]) -> f64;
}

fn mean_point(track: &[Vec3]) -> Vec3 {
    track.iter().fold(Vec3::zeros(), |a, p| a + p) / track.len() as f64
}

/// Unit direction of largest variance (x axis for a motionless track).
pub fn principal_axis(track: &[Vec3]) -> Vec3 {
    let mean = mean_point(track);
    let mut cov = Matrix3::zeros();
    for p in track {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imax();
    if eig.eigenvalues[k] > 0.0 {
        eig.eigenvectors.column(k).into_owned()
    } else {
        Vec3::x()
    }
}

/// Half peak-to-peak of the displacement along the first principal axis.
#[derive(Debug, Clone, Copy, Default)]
pub struct PrincipalAxis;

impl AmplitudeMetric for PrincipalAxis {
    fn name(&self) -> &str {
        "principal-axis"
    }

    fn amplitude(&self, track: &[Vec3]) -> f64 {
        if track.is_empty() {
            return 0.0;
        }
        let axis = principal_axis(track);
        let (lo, hi) = track
            .iter()
            .map(|p| p.dot(&axis))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
        0.5 * (hi - lo)
    }
}

/// Largest distance from the mean position.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxRadial;

impl AmplitudeMetric for MaxRadial {
    fn name(&self) -> &str {
        "max-radial"
    }

    fn amplitude(&self, track: &[Vec3]) -> f64 {
        if track.is_empty() {
            return 0.0;
        }
        let mean = mean_point(track);
        track.iter().map(|p| (p - mean).norm()).fold(0.0, f64::max)
    }
}

pub fn amplitude_metric_registry() -> Registry<dyn AmplitudeMetric> {
    let mut reg: Registry<dyn AmplitudeMetric> = Registry::new("amplitude metric");
    reg.register("principal-axis", |_| Ok(Box::new(PrincipalAxis) as Box<dyn AmplitudeMetric>))
        .expect("fresh registry");
    reg.register("max-radial", |_| Ok(Box::new(MaxRadial) as Box<dyn AmplitudeMetric>))
        .expect("fresh registry");
    reg
}

/// Amplitude of `node` over the part of the series after `settle_s`,
/// which must span at least `min_window_s`.
pub fn flower_amplitude(
    series: &TimeSeries,
    node: usize,
    settle_s: f64,
    min_window_s: f64,
    metric: &dyn AmplitudeMetric,
) -> Result<f64, BenchError> {
    let track = series.track(node).ok_or(BenchError::NodeNotRecorded(node))?;
    let start = series.times.first().copied().unwrap_or(0.0);
    let available = series.times.last().copied().unwrap_or(start) - start - settle_s;
    if available + 1e-9 < min_window_s {
        return Err(BenchError::InsufficientWindow {
            needed_s: min_window_s,
            available_s: available.max(0.0),
        });
    }
    let window: Vec<Vec3> = series
        .times
        .iter()
        .zip(track)
        .filter(|(t, _)| **t - start >= settle_s - 1e-12)
        .map(|(_, p)| p)
        .collect();
    Ok(metric.amplitude(&window))
}

/// Pearson correlation; `None` when either variable has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Least-squares `(slope, intercept)`; `None` when all `x` coincide.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Frequency of the largest non-DC spectral peak of a uniformly sampled signal,
/// using a Hann window, eightfold zero padding and parabolic peak interpolation.
pub fn dominant_frequency(samples: &[f64], dt: f64) -> Result<f64, BenchError> {
    positive("sample interval", dt)?;
    if samples.len() < 8 {
        return Err(BenchError::InvalidParameter("need at least 8 samples".into()));
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let padded = (n * 8).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos();
            Complex::new((x - mean) * w, 0.0)
        })
        .collect();
    buf.resize(padded, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let mag: Vec<f64> = buf[..padded / 2].iter().map(|c| c.norm()).collect();
    let mut k = 1;
    for i in 2..mag.len() - 1 {
        if mag[i] > mag[k] {
            k = i;
        }
    }
    let offset = if k + 1 < mag.len() {
        let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
        let den = a - 2.0 * b + c;
        if den != 0.0 {
            (0.5 * (a - c) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok((k as f64 + offset) / (padded as f64 * dt))
}

/// Cantilever comparison set-up shared by the static and modal checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CantileverSetup {
    pub young_pa: f64,
    pub density_kgm3: f64,
    pub radius_m: f64,
    pub length_m: f64,
    pub nodes: usize,
}

impl Default for CantileverSetup {
    fn default() -> Self {
        Self {
            young_pa: 5e9,
            density_kgm3: 900.0,
            radius_m: 0.003,
            length_m: 0.4,
            nodes: 50,
        }
    }
}

impl CantileverSetup {
    pub fn network(&self) -> Result<RodNetwork, BenchError> {
        let mat = dersim::MaterialParams {
            young_modulus: self.young_pa,
            density: self.density_kgm3,
            damping: 0.5,
        };
        Ok(RodNetwork::cantilever(self.length_m, self.nodes, self.radius_m, Vec3::x(), mat)?)
    }

    fn config(&self) -> SimConfig {
        SimConfig {
            gravity_on: false,
            presettle: false,
            clamped_nodes: vec![0],
            damping: Some(0.0),
            ..SimConfig::default()
        }
    }

    fn tip_load(&self, net: &RodNetwork, force: f64) -> DVector<f64> {
        let mut f = DVector::zeros(net.dof_count());
        f[3 * (net.node_count() - 1) + 2] = -force;
        f
    }

    /// Static tip deflection of the rod model under a downward tip force.
    pub fn der_tip_deflection(&self, force: f64) -> Result<f64, BenchError> {
        let net = self.network()?;
        let model = ElasticModel::default();
        let state = dersim::static_solve(&net, &model, &self.config(), Some(&self.tip_load(&net, force)))?;
        let tip = net.node_count() - 1;
        Ok(net.nodes()[tip].z - state.node(tip).z)
    }

    /// Releases the rod from its static shape under `force` and returns the
    /// dominant frequency of the undamped tip motion.
    pub fn der_ringdown_frequency(&self, force: f64, dt: f64, duration: f64) -> Result<f64, BenchError> {
        let net = self.network()?;
        let model = ElasticModel::default();
        let config = SimConfig {
            dt_s: dt,
            ..self.config()
        };
        let loaded = dersim::static_solve(&net, &model, &config, Some(&self.tip_load(&net, force)))?;
        let mut sim = Simulator::with_state(&net, &model, &config, loaded)?;
        let tip = net.node_count() - 1;
        let steps = (duration / dt).round() as usize;
        let mut z = Vec::with_capacity(steps + 1);
        z.push(sim.state.node(tip).z);
        for _ in 0..steps {
            sim.step()?;
            z.push(sim.state.node(tip).z);
        }
        dominant_frequency(&z, dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum SweepVariable {
    /// Actuation amplitudes in metres.
    AmplitudesM(Vec<f64>),
    /// Grasp nodes, ordered by distance from the root.
    GraspNodes(Vec<usize>),
}

fn default_metric() -> String {
    "principal-axis".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub network: NetworkFile,
    /// Base simulation config; `actuation` is the template for every point.
    pub sim: SimConfig,
    pub variable: SweepVariable,
    pub flower_node: usize,
    /// Defaults to 5 actuation periods.
    #[serde(default)]
    pub settle_s: Option<f64>,
    /// Defaults to 10 actuation periods.
    #[serde(default)]
    pub measure_s: Option<f64>,
    #[serde(default = "default_metric")]
    pub metric: String,
    /// Relative slack for the monotone-decrease flag.
    #[serde(default = "default_monotone_tol")]
    pub monotone_tol: f64,
}

fn default_monotone_tol() -> f64 {
    0.02
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self, FileError> {
        files::read_json(path)
    }

    fn template(&self) -> Result<&Actuation, BenchError> {
        self.sim
            .actuation
            .as_ref()
            .ok_or_else(|| BenchError::InvalidParameter("sweep needs an actuation template".into()))
    }

    pub fn windows(&self) -> Result<(f64, f64), BenchError> {
        let period = self.template()?.period();
        let settle = self.settle_s.unwrap_or(5.0 * period);
        let measure = self.measure_s.unwrap_or(10.0 * period);
        if settle + 1e-12 < period {
            return Err(BenchError::InvalidParameter(format!("settle time {settle} s is shorter than one period")));
        }
        if measure + 1e-12 < 3.0 * period {
            return Err(BenchError::InvalidParameter(format!("measure window {measure} s is shorter than three periods")));
        }
        Ok((settle, measure))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Swept value: amplitude (m) or grasp-node distance from the root along the rods (m).
    pub x: f64,
    pub grasp_node: usize,
    pub amplitude_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub variable: String,
    pub metric: String,
    pub points: Vec<SweepPoint>,
    /// `None` (serialized as null) when undefined.
    pub pearson_r: Option<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Set when the fit or correlation is undefined.
    pub degenerate: bool,
    pub monotone_decreasing: bool,
}

impl SweepResult {
    fn from_points(variable: &str, metric: &str, points: Vec<SweepPoint>, tol: f64) -> Self {
        let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.amplitude_m).collect();
        let r = pearson(&xs, &ys);
        let fit = linear_fit(&xs, &ys);
        let monotone = ys.windows(2).all(|w| w[1] <= w[0] * (1.0 + tol));
        Self {
            variable: variable.into(),
            metric: metric.into(),
            pearson_r: r,
            slope: fit.map(|f| f.0),
            intercept: fit.map(|f| f.1),
            degenerate: r.is_none() || fit.is_none(),
            monotone_decreasing: monotone,
            points,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,grasp_node,amplitude_m\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.x, p.grasp_node, p.amplitude_m));
        }
        out
    }

    /// A gnuplot script plotting the CSV written next to it.
    pub fn gnuplot_script(&self, csv_name: &str) -> String {
        let xlabel = if self.variable == "amplitude_m" {
            "grasp amplitude (m)"
        } else {
            "grasp distance from root (m)"
        };
        let mut s = String::new();
        s.push_str("set datafile separator ','\n");
        s.push_str("set key left top\n");
        s.push_str(&format!("set xlabel '{xlabel}'\n"));
        s.push_str("set ylabel 'flower amplitude (m)'\n");
        if let (Some(m), Some(b)) = (self.slope, self.intercept) {
            s.push_str(&format!("f(x) = {m:e}*x + {b:e}\n"));
            s.push_str(&format!(
                "plot '{csv_name}' every ::1 using 1:3 with linespoints title 'simulated', f(x) title 'fit r={}'\n",
                self.pearson_r.map(|r| format!("{r:.4}")).unwrap_or_else(|| "n/a".into())
            ));
        } else {
            s.push_str(&format!("plot '{csv_name}' every ::1 using 1:3 with linespoints title 'simulated'\n"));
        }
        s
    }
}

struct PreparedSweep {
    net: RodNetwork,
    metric: Box<dyn AmplitudeMetric>,
    settle: f64,
    measure: f64,
}

fn prepare(spec: &SweepSpec, min_points: usize) -> Result<PreparedSweep, BenchError> {
    let net = RodNetwork::from_file(spec.network.clone())?;
    let metric = amplitude_metric_registry().build_named(&spec.metric)?;
    let (settle, measure) = spec.windows()?;
    let count = match &spec.variable {
        SweepVariable::AmplitudesM(v) => v.len(),
        SweepVariable::GraspNodes(v) => v.len(),
    };
    if count < min_points {
        return Err(BenchError::InvalidParameter(format!("a sweep needs at least {min_points} points, got {count}")));
    }
    if spec.flower_node >= net.node_count() {
        return Err(BenchError::InvalidParameter(format!("flower node {} out of range", spec.flower_node)));
    }
    Ok(PreparedSweep {
        net,
        metric,
        settle,
        measure,
    })
}

fn simulate_point(spec: &SweepSpec, prep: &PreparedSweep, actuation: Actuation, point: usize) -> Result<f64, BenchError> {
    let config = SimConfig {
        duration_s: prep.settle + prep.measure,
        record: vec![spec.flower_node],
        actuation: Some(actuation),
        ..spec.sim.clone()
    };
    let model = ElasticModel::default();
    let out = dersim::run(&prep.net, &model, &config).map_err(|source| BenchError::Simulation { point, source })?;
    flower_amplitude(&out.series, spec.flower_node, prep.settle, prep.measure - 1e-9, prep.metric.as_ref())
}

/// One simulation per amplitude; correlation and fit of flower amplitude against grasp amplitude.
pub fn amplitude_sweep(spec: &SweepSpec) -> Result<SweepResult, BenchError> {
    let SweepVariable::AmplitudesM(amps) = &spec.variable else {
        return Err(BenchError::InvalidParameter("amplitude sweep needs `amplitudes_m`".into()));
    };
    let prep = prepare(spec, 3)?;
    let template = spec.template()?;
    let results: Vec<Result<f64, BenchError>> = amps
        .par_iter()
        .enumerate()
        .map(|(k, &a)| {
            simulate_point(
                spec,
                &prep,
                Actuation {
                    amplitude_m: a,
                    ..template.clone()
                },
                k,
            )
        })
        .collect();
    let mut points = Vec::with_capacity(amps.len());
    for (&a, r) in amps.iter().zip(results) {
        points.push(SweepPoint {
            x: a,
            grasp_node: template.node,
            amplitude_m: r?,
        });
    }
    Ok(SweepResult::from_points("amplitude_m", prep.metric.name(), points, spec.monotone_tol))
}

/// One simulation per grasp node at fixed actuation.
pub fn grasp_location_sweep(spec: &SweepSpec) -> Result<SweepResult, BenchError> {
    let SweepVariable::GraspNodes(nodes) = &spec.variable else {
        return Err(BenchError::InvalidParameter("grasp-location sweep needs `grasp_nodes`".into()));
    };
    let prep = prepare(spec, 3)?;
    let template = spec.template()?;
    let root_dist = prep.net.path_distances(0);
    for &g in nodes {
        if g >= prep.net.node_count() {
            return Err(BenchError::InvalidParameter(format!("grasp node {g} out of range")));
        }
    }
    if nodes.windows(2).any(|w| root_dist[w[1]] < root_dist[w[0]]) {
        return Err(BenchError::InvalidParameter("grasp nodes must be ordered by distance from the root".into()));
    }
    let results: Vec<Result<f64, BenchError>> = nodes
        .par_iter()
        .enumerate()
        .map(|(k, &g)| simulate_point(spec, &prep, Actuation { node: g, ..template.clone() }, k))
        .collect();
    let mut points = Vec::with_capacity(nodes.len());
    for (&g, r) in nodes.iter().zip(results) {
        points.push(SweepPoint {
            x: root_dist[g],
            grasp_node: g,
            amplitude_m: r?,
        });
    }
    Ok(SweepResult::from_points("grasp_distance_m", prep.metric.name(), points, spec.monotone_tol))
}

/// Runs whichever sweep the spec describes.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, BenchError> {
    match spec.variable {
        SweepVariable::AmplitudesM(_) => amplitude_sweep(spec),
        SweepVariable::GraspNodes(_) => grasp_location_sweep(spec),
    }
}

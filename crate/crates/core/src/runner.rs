//! Config-driven runs: scattering, false vacuum, threshold scans.
//!
//! A run directory holds `series.ndjson` (append-only records),
//! `manifest.json`, the latest `checkpoint-<step>.snap` with its
//! `checkpoint.json`, and the final snapshot.

use std::f64::consts::PI;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ising::{build_terms, energy, energy_density, group_velocity, IsingParams, RampSchedule, RampShape};
use crate::krylov::KrylovOptions;
use crate::lattice::{build_tree_topology, Boundary, LatticeGeometry, SiteCoord, TreeTopology};
use crate::measure::MeasurementContext;
use crate::observables::{
    baseline_subtract, bubble_radius, composite_correlators, long_range_correlators, magnetization_change,
    read_series, CorrelatorSuite, NdjsonWriter, TimeSeriesRecord,
};
use crate::snapshot::{load_snapshot, save_snapshot, SnapshotMeta};
use crate::tdvp::{FieldSchedule, TdvpEngine};
use crate::ttn::TtnState;
use crate::wavepacket::{build_packet_state, pad_for_evolution, WavePacketSpec, DEFAULT_CUTOFF};

pub const SERIES_FILE: &str = "series.ndjson";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub lx: usize,
    /// Defaults to `lx`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ly: Option<usize>,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
}

fn default_boundary() -> Boundary {
    Boundary::Periodic
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub j: f64,
    /// Field at the end of the ramp.
    pub g: f64,
    pub h: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { j: 1.0, g: 1.0, h: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub center: [i64; 2],
    /// Momentum in units of pi.
    pub k_over_pi: [f64; 2],
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
}

fn default_sigma() -> f64 {
    2.0
}

fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF
}

impl PacketConfig {
    pub fn spec(&self) -> WavePacketSpec {
        WavePacketSpec {
            center: SiteCoord::new(self.center[0], self.center[1]),
            k: (self.k_over_pi[0] * PI, self.k_over_pi[1] * PI),
            sigma: self.sigma,
            amplitude_cutoff: self.cutoff,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSection {
    pub dt: f64,
    /// Ramp duration; the field is constant afterwards.
    pub tau_prep: f64,
    pub ramp: RampShape,
    /// End time, counted from the start of the ramp.
    pub t_max: f64,
    pub measure_every: usize,
    pub chi: usize,
    pub seed: u64,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        Self {
            dt: 0.02,
            tau_prep: 10.0,
            ramp: RampShape::default(),
            t_max: 40.0,
            measure_every: 10,
            chi: 16,
            seed: 1,
            krylov_dim: 30,
            krylov_tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservablesConfig {
    pub energy: bool,
    pub energy_density: bool,
    pub z_field: bool,
    pub composite: bool,
    pub long_range: bool,
    /// Magnetization change and bubble radius; on by default for false
    /// vacuum runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub magnetization: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_p: Option<[i64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_q: Option<[i64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_m: Option<[i64; 2]>,
    /// Correlator baseline; the end of the ramp when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_time: Option<f64>,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        Self {
            energy: true,
            energy_density: true,
            z_field: false,
            composite: true,
            long_range: true,
            magnetization: None,
            probe_p: None,
            probe_q: None,
            probe_m: None,
            baseline_time: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Steps between checkpoints, 0 for none besides the end of the ramp.
    pub checkpoint_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("run"), checkpoint_every: 500 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    /// Decay if the magnetization slope exceeds this times `J`.
    pub slope_threshold: f64,
    /// Fit window starts this long (in units of `1/J`) after the collision.
    pub window_after_collision: f64,
    /// A prepared state with a larger fraction of flipped spins has left
    /// the false vacuum before any collision.
    pub max_prepared_flips: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { slope_threshold: 0.01, window_after_collision: 5.0, max_prepared_flips: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Overrides `model.g`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    pub h_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionConfig {
    pub k_over_pi: Vec<[f64; 2]>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub model: ModelConfig,
    /// Two packets at the axis probes moving towards each other when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packets: Option<Vec<PacketConfig>>,
    #[serde(default)]
    pub evolution: EvolutionSection,
    #[serde(default)]
    pub observables: ObservablesConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<DispersionConfig>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Value, path: &[&str], value: toml::Value) -> Result<()> {
    let (head, rest) = path.split_first().ok_or_else(|| cfg_err("empty override key"))?;
    let slot = match root {
        toml::Value::Table(t) => {
            if rest.is_empty() {
                t.insert(head.to_string(), value);
                return Ok(());
            }
            t.entry(head.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))
        }
        toml::Value::Array(a) => {
            let i: usize = head.parse().map_err(|_| cfg_err(format!("'{head}' is not an array index")))?;
            let len = a.len();
            let slot = a.get_mut(i).ok_or_else(|| cfg_err(format!("index {i} beyond array of {len}")))?;
            if rest.is_empty() {
                *slot = value;
                return Ok(());
            }
            slot
        }
        _ => return Err(cfg_err(format!("cannot descend into '{head}'"))),
    };
    set_path(slot, rest, value)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parse and apply `key.path=value` overrides; values are read as TOML
    /// and fall back to plain strings. Array elements are addressed by index.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc = toml::Value::Table(toml::from_str::<toml::Table>(text).map_err(|e| cfg_err(e.to_string()))?);
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| cfg_err(format!("override '{o}' is not key=value")))?;
            let path: Vec<&str> = key.trim().split('.').collect();
            set_path(&mut doc, &path, parse_override_value(raw.trim()))?;
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err(e.to_string()))
    }

    /// SHA-256 of the normalized config text, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let geom = self.geometry()?;
        let params = self.params()?;
        if params.j == 0.0 {
            return Err(cfg_err("model.j must be non-zero"));
        }
        let e = &self.evolution;
        if !(e.dt > 0.0 && e.dt.is_finite()) {
            return Err(cfg_err(format!("evolution.dt must be positive, got {}", e.dt)));
        }
        if !(e.tau_prep >= 0.0 && e.t_max >= e.tau_prep && e.t_max.is_finite()) {
            return Err(cfg_err("need 0 <= evolution.tau_prep <= evolution.t_max"));
        }
        if e.seed > i64::MAX as u64 {
            return Err(cfg_err("evolution.seed must fit a signed 64-bit integer"));
        }
        if e.chi == 0 || e.measure_every == 0 || e.krylov_dim < 2 || !(e.krylov_tol > 0.0) {
            return Err(cfg_err("chi, measure_every, krylov_dim and krylov_tol must be positive (krylov_dim >= 2)"));
        }
        for p in self.packets.iter().flatten() {
            p.spec().validate(&geom).map_err(|e| cfg_err(e.to_string()))?;
        }
        self.suite(&geom)?;
        let c = &self.classifier;
        if !(c.slope_threshold > 0.0 && c.window_after_collision >= 0.0) {
            return Err(cfg_err("classifier thresholds must be positive"));
        }
        if !(c.max_prepared_flips > 0.0 && c.max_prepared_flips <= 1.0) {
            return Err(cfg_err("classifier.max_prepared_flips must be in (0, 1]"));
        }
        if let Some(s) = &self.scan {
            if s.h_values.len() < 2 || s.h_values.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(cfg_err("scan.h_values needs at least two ascending values"));
            }
        }
        if let Some(d) = &self.dispersion {
            if d.k_over_pi.is_empty() || !(d.sigma > 0.0) {
                return Err(cfg_err("dispersion needs momenta and a positive sigma"));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<LatticeGeometry> {
        let g = &self.geometry;
        LatticeGeometry::rectangular(g.lx, g.ly.unwrap_or(g.lx), g.boundary).map_err(|e| cfg_err(e.to_string()))
    }

    /// Model parameters with `g` at its ramp target.
    pub fn params(&self) -> Result<IsingParams> {
        let m = &self.model;
        IsingParams::new(m.j, m.g, m.h).map_err(|e| cfg_err(e.to_string()))
    }

    /// The ramp, or `None` for a sudden switch (`tau_prep = 0`).
    pub fn ramp(&self) -> Result<Option<RampSchedule>> {
        if self.evolution.tau_prep == 0.0 {
            return Ok(None);
        }
        RampSchedule::new(self.model.g, self.evolution.tau_prep, self.evolution.ramp)
            .map(Some)
            .map_err(|e| cfg_err(e.to_string()))
    }

    pub fn field_schedule(&self) -> Result<FieldSchedule> {
        Ok(match self.ramp()? {
            Some(r) => FieldSchedule::Ramp(r),
            None => FieldSchedule::Constant(self.model.g),
        })
    }

    pub fn suite(&self, geom: &LatticeGeometry) -> Result<CorrelatorSuite> {
        let o = &self.observables;
        let d = CorrelatorSuite::for_geometry(geom).map_err(|e| cfg_err(e.to_string()))?;
        if o.probe_p.is_none() && o.probe_q.is_none() && o.probe_m.is_none() {
            return Ok(d);
        }
        let xy = |c: SiteCoord| [c.x, c.y];
        let p = o.probe_p.unwrap_or(xy(d.axis[0]));
        let q = o.probe_q.unwrap_or(xy(d.axis[1]));
        let m = o.probe_m.unwrap_or(xy(d.center));
        CorrelatorSuite::with_probes(geom, (p[0], p[1]), (q[0], q[1]), (m[0], m[1])).map_err(|e| cfg_err(e.to_string()))
    }

    /// Configured packets, or the default pair at the axis probes with
    /// momenta `+-(pi/2, pi/2)` and width 2.
    pub fn packets(&self) -> Result<Vec<PacketConfig>> {
        if let Some(p) = &self.packets {
            return Ok(p.clone());
        }
        let suite = self.suite(&self.geometry()?)?;
        let [p, q] = suite.axis;
        let pc = |c: SiteCoord, s: f64| PacketConfig {
            center: [c.x, c.y],
            k_over_pi: [0.5 * s, 0.5 * s],
            sigma: default_sigma(),
            cutoff: DEFAULT_CUTOFF,
        };
        Ok(vec![pc(p, 1.0), pc(q, -1.0)])
    }

    pub fn packet_specs(&self) -> Result<Vec<WavePacketSpec>> {
        Ok(self.packets()?.iter().map(PacketConfig::spec).collect())
    }

    pub fn baseline_time(&self) -> f64 {
        self.observables.baseline_time.unwrap_or(self.evolution.tau_prep)
    }

    fn steps_to(&self, t: f64) -> usize {
        (t / self.evolution.dt).round() as usize
    }
}

/// Time for two packets moving at the second-order group speed of the
/// first packet to close half their separation, with the speed following
/// the ramp.
pub fn collision_time(cfg: &ExperimentConfig) -> Result<f64> {
    let specs = cfg.packet_specs()?;
    if specs.len() < 2 {
        return Err(cfg_err("collision time needs two packets"));
    }
    let geom = cfg.geometry()?;
    let (dx, dy) = geom.displacement(specs[0].center, specs[1].center);
    travel_time(cfg, specs[0].k, 0.5 * dx.hypot(dy))
}

/// Probe-to-probe arrival estimates for `c_a`: the axis probe distance over
/// twice the group speed, and over the group speed alone (outgoing products
/// crossing the whole separation). Both follow the ramp.
pub fn arrival_estimates(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let specs = cfg.packet_specs()?;
    let k = specs.first().ok_or_else(|| cfg_err("arrival estimate needs a packet"))?.k;
    let geom = cfg.geometry()?;
    let suite = cfg.suite(&geom)?;
    let (dx, dy) = geom.displacement(suite.axis[0], suite.axis[1]);
    let d = dx.hypot(dy);
    Ok((travel_time(cfg, k, 0.5 * d)?, travel_time(cfg, k, d)?))
}

/// First time at which a packet with momentum `k` has covered `distance`
/// at the instantaneous second-order group speed.
pub fn travel_time(cfg: &ExperimentConfig, k: (f64, f64), distance: f64) -> Result<f64> {
    let params = cfg.params()?;
    let schedule = cfg.field_schedule()?;
    let speed = |g: f64| {
        let v = group_velocity(k, &params.with_g(g));
        v.0.hypot(v.1)
    };
    let n = 20_000;
    let tau = cfg.evolution.tau_prep;
    let h = tau / n as f64;
    let mut covered = 0.0;
    for i in (0..n).take_while(|_| tau > 0.0) {
        let v = speed(schedule.at((i as f64 + 0.5) * h)?);
        if covered + v * h >= distance {
            return Ok(i as f64 * h + (distance - covered) / v);
        }
        covered += v * h;
    }
    let v = speed(params.g);
    if !(v > 0.0) {
        return Err(Error::Scan("packets never meet: zero group speed".into()));
    }
    Ok(tau + (distance - covered) / v)
}

/// `pi J / 8`: the field at which the critical bubble costs the energy of
/// two magnons, `16 J`.
pub fn classical_threshold(j: f64) -> f64 {
    PI * j / 8.0
}

/// `A 2J r - B 2h r^2`.
pub fn bubble_energy(r: f64, j: f64, h: f64, a: f64, b: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidParams(format!("bubble radius must be non-negative, got {r}")));
    }
    Ok(a * 2.0 * j * r - b * 2.0 * h * r * r)
}

/// Maximizer `A J / (2 B h)` of [`bubble_energy`].
pub fn critical_radius(j: f64, h: f64, a: f64, b: f64) -> Result<f64> {
    if !(h > 0.0) || !(b > 0.0) {
        return Err(Error::InvalidParams("critical radius needs h > 0 and B > 0".into()));
    }
    Ok(a * j / (2.0 * b * h))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Build and dress the packets only.
    Prepare,
    Scatter,
    FalseVacuum,
}

impl RunMode {
    fn final_snapshot(self) -> &'static str {
        match self {
            RunMode::Prepare => "prepared.snap",
            RunMode::Scatter | RunMode::FalseVacuum => "final.snap",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: RunMode,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub steps_completed: usize,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub mode: RunMode,
    pub step: usize,
    pub t: f64,
    /// Series length in bytes at the checkpoint.
    pub series_len: u64,
    pub snapshot: String,
    /// All randomness is drawn from this seed before the first step.
    pub seed: u64,
    pub reference_z: Option<Vec<f64>>,
    pub config: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub steps: usize,
    pub t: f64,
    pub completed: bool,
    pub series: PathBuf,
    pub snapshot: Option<PathBuf>,
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&tmp, text + "\n")?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

struct Run {
    cfg: ExperimentConfig,
    mode: RunMode,
    dir: PathBuf,
    topo: Arc<TreeTopology>,
    engine: TdvpEngine,
    schedule: FieldSchedule,
    suite: CorrelatorSuite,
    magnetization: bool,
    n_prep: usize,
    n_total: usize,
    reference_z: Option<Vec<f64>>,
    manifest: Manifest,
    clock: Instant,
}

impl Run {
    fn new(cfg: ExperimentConfig, mode: RunMode) -> Result<Self> {
        cfg.validate()?;
        let geom = cfg.geometry()?;
        let topo = Arc::new(build_tree_topology(&geom)?);
        let terms = build_terms(cfg.params()?, &geom)?;
        let mut engine = TdvpEngine::new(topo.clone(), terms)?;
        engine.krylov = KrylovOptions { dim: cfg.evolution.krylov_dim, tol: cfg.evolution.krylov_tol };
        let n_prep = cfg.steps_to(cfg.evolution.tau_prep);
        let n_total = match mode {
            RunMode::Prepare => n_prep,
            _ => cfg.steps_to(cfg.evolution.t_max),
        };
        let manifest = Manifest {
            mode,
            config_hash: cfg.hash()?,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.evolution.seed,
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_clock_seconds: 0.0,
            steps_completed: 0,
            status: "running".into(),
            error: None,
        };
        Ok(Self {
            schedule: cfg.field_schedule()?,
            suite: cfg.suite(&geom)?,
            magnetization: cfg.observables.magnetization.unwrap_or(mode == RunMode::FalseVacuum),
            dir: cfg.output.dir.clone(),
            cfg,
            mode,
            topo,
            engine,
            n_prep,
            n_total,
            reference_z: None,
            manifest,
            clock: Instant::now(),
        })
    }

    fn t(&self, step: usize) -> f64 {
        step as f64 * self.cfg.evolution.dt
    }

    fn meta(&self, step: usize) -> Result<SnapshotMeta> {
        let p = self.cfg.params()?;
        Ok(SnapshotMeta {
            j: p.j,
            g: self.schedule.at(self.t(step))?,
            h: p.h,
            t: self.t(step),
            dt: self.cfg.evolution.dt,
            chi: self.cfg.evolution.chi as u64,
            seed: self.cfg.evolution.seed,
        })
    }

    fn measure(&self, state: &TtnState, step: usize) -> Result<Vec<TimeSeriesRecord>> {
        let t = self.t(step);
        let g = self.schedule.at(t)?;
        let o = &self.cfg.observables;
        let ctx = MeasurementContext::new(state)?;
        let terms = self.engine.terms();
        let mut out = vec![TimeSeriesRecord::scalar(t, "g", g), TimeSeriesRecord::scalar(t, "norm", state.norm())];
        if o.energy {
            out.push(TimeSeriesRecord::scalar(t, "energy", energy(&ctx, terms, g)?));
        }
        if o.energy_density {
            out.push(TimeSeriesRecord::field(t, "energy_density", energy_density(&ctx, terms, g)?));
        }
        let z = if o.z_field || self.magnetization { Some(ctx.z_field()?) } else { None };
        if o.z_field {
            out.push(TimeSeriesRecord::field(t, "z", z.clone().unwrap_or_default()));
        }
        if o.composite {
            let c = composite_correlators(&ctx)?;
            out.push(TimeSeriesRecord::scalar(t, "c3h", c.c3h));
            out.push(TimeSeriesRecord::scalar(t, "c3k", c.c3k));
            out.push(TimeSeriesRecord::scalar(t, "c4", c.c4));
        }
        if o.long_range {
            let c = long_range_correlators(&ctx, &self.suite)?;
            for (name, v) in [("c_a", c.c_a), ("c_o", c.c_o), ("c_ao", c.c_ao), ("c_a3", c.c_a3), ("c_o3", c.c_o3)] {
                out.push(TimeSeriesRecord::scalar(t, name, v));
            }
        }
        if let (true, Some(z)) = (self.magnetization, &z) {
            let flipped = z.iter().map(|x| 0.5 * (1.0 + x)).sum::<f64>() / z.len() as f64;
            out.push(TimeSeriesRecord::scalar(t, "flipped_fraction", flipped));
        }
        if let (Some(z), Some(r)) = (&z, &self.reference_z) {
            out.push(TimeSeriesRecord::scalar(t, "magnetization_change", magnetization_change(z, r)?));
            out.push(TimeSeriesRecord::scalar(t, "bubble_radius", bubble_radius(z, r)?));
        }
        Ok(out)
    }

    fn checkpoint(&self, state: &TtnState, step: usize, series_len: u64) -> Result<()> {
        let name = format!("checkpoint-{step}.snap");
        save_snapshot(&self.dir.join(&name), state, &self.meta(step)?)?;
        let path = self.dir.join(CHECKPOINT_FILE);
        let previous: Option<Checkpoint> = if path.exists() { read_json(&path).ok() } else { None };
        write_json(
            &path,
            &Checkpoint {
                version: 1,
                mode: self.mode,
                step,
                t: self.t(step),
                series_len,
                snapshot: name.clone(),
                seed: self.cfg.evolution.seed,
                reference_z: self.reference_z.clone(),
                config: self.cfg.to_toml()?,
            },
        )?;
        if let Some(p) = previous.filter(|p| p.snapshot != name) {
            let _ = fs::remove_file(self.dir.join(p.snapshot));
        }
        Ok(())
    }

    fn save_manifest(&mut self, steps: usize, status: &str, error: Option<String>) -> Result<()> {
        self.manifest.wall_clock_seconds += self.clock.elapsed().as_secs_f64();
        self.clock = Instant::now();
        self.manifest.steps_completed = steps;
        self.manifest.status = status.into();
        self.manifest.error = error;
        write_json(&self.dir.join(MANIFEST_FILE), &self.manifest)
    }

    /// Evolve from `start` (already measured) up to `n_total`, stopping
    /// early after `limit` steps.
    fn evolve(
        &mut self,
        state: &mut TtnState,
        start: usize,
        writer: &mut NdjsonWriter<File>,
        limit: Option<usize>,
    ) -> Result<usize> {
        let dt = self.cfg.evolution.dt;
        let every = self.cfg.evolution.measure_every;
        let ck = self.cfg.output.checkpoint_every;
        let stop = limit.map_or(self.n_total, |l| self.n_total.min(start + l));
        for k in start + 1..=stop {
            let g = self.schedule.at((k as f64 - 0.5) * dt)?;
            self.engine.step(state, dt, g)?;
            if k == self.n_prep && self.magnetization {
                self.reference_z = Some(MeasurementContext::new(state)?.z_field()?);
            }
            let checkpoint = k == self.n_prep || (ck > 0 && k % ck == 0);
            if checkpoint {
                state.normalize();
            }
            if k % every == 0 || k == self.n_total {
                writer.write_all(&self.measure(state, k)?)?;
            }
            if checkpoint {
                let len = writer.get_mut().stream_position()?;
                self.checkpoint(state, k, len)?;
            }
        }
        Ok(stop)
    }

    fn finish(&mut self, state: &TtnState, step: usize) -> Result<RunSummary> {
        let completed = step == self.n_total;
        let snapshot = if completed {
            let p = self.dir.join(self.mode.final_snapshot());
            save_snapshot(&p, state, &self.meta(step)?)?;
            Some(p)
        } else {
            None
        };
        self.save_manifest(step, if completed { "complete" } else { "interrupted" }, None)?;
        Ok(RunSummary {
            dir: self.dir.clone(),
            steps: step,
            t: self.t(step),
            completed,
            series: self.dir.join(SERIES_FILE),
            snapshot,
        })
    }

    fn drive(&mut self, state: &mut TtnState, start: usize, writer: &mut NdjsonWriter<File>, limit: Option<usize>) -> Result<RunSummary> {
        match self.evolve(state, start, writer, limit) {
            Ok(step) => self.finish(state, step),
            Err(e) => {
                let _ = self.save_manifest(start, "failed", Some(e.to_string()));
                Err(e)
            }
        }
    }
}

/// Run from scratch into `cfg.output.dir`, replacing any earlier series.
/// With `limit`, stop after that many steps (resumable from the last
/// checkpoint).
pub fn run(cfg: &ExperimentConfig, mode: RunMode, limit: Option<usize>) -> Result<RunSummary> {
    let mut run = Run::new(cfg.clone(), mode)?;
    fs::create_dir_all(&run.dir)?;
    let _ = fs::remove_file(run.dir.join(CHECKPOINT_FILE));
    run.save_manifest(0, "running", None)?;
    let mut writer = NdjsonWriter::new(File::create(run.dir.join(SERIES_FILE))?);
    let prepared = (|| -> Result<TtnState> {
        let e = &run.cfg.evolution;
        let (mut state, _) = build_packet_state(&run.cfg.packet_specs()?, &run.topo, e.chi, e.seed)?;
        pad_for_evolution(&mut state, e.chi, e.seed)?;
        if run.n_prep == 0 && run.magnetization {
            run.reference_z = Some(MeasurementContext::new(&state)?.z_field()?);
        }
        writer.write_all(&run.measure(&state, 0)?)?;
        Ok(state)
    })();
    let mut state = match prepared {
        Ok(s) => s,
        Err(e) => {
            let _ = run.save_manifest(0, "failed", Some(e.to_string()));
            return Err(e);
        }
    };
    run.drive(&mut state, 0, &mut writer, limit)
}

pub fn run_scattering(cfg: &ExperimentConfig) -> Result<RunSummary> {
    run(cfg, RunMode::Scatter, None)
}

pub fn run_false_vacuum(cfg: &ExperimentConfig) -> Result<RunSummary> {
    if !(cfg.model.h >= 0.0) {
        return Err(cfg_err("false vacuum runs need h >= 0"));
    }
    run(cfg, RunMode::FalseVacuum, None)
}

/// Build, pad and dress the packets; the dressed state is `prepared.snap`.
pub fn prepare(cfg: &ExperimentConfig) -> Result<RunSummary> {
    run(cfg, RunMode::Prepare, None)
}

/// Continue the run in `dir` from its last checkpoint.
pub fn resume(dir: &Path, limit: Option<usize>) -> Result<RunSummary> {
    let ck: Checkpoint = read_json(&dir.join(CHECKPOINT_FILE))?;
    if ck.version != 1 {
        return Err(Error::Format(format!("checkpoint version {}", ck.version)));
    }
    let mut cfg = ExperimentConfig::from_toml(&ck.config)?;
    cfg.output.dir = dir.to_path_buf();
    let mut run = Run::new(cfg, ck.mode)?;
    if let Ok(m) = read_json::<Manifest>(&dir.join(MANIFEST_FILE)) {
        run.manifest.started_unix = m.started_unix;
        run.manifest.wall_clock_seconds = m.wall_clock_seconds;
    }
    let (mut state, meta) = load_snapshot(&dir.join(&ck.snapshot))?;
    if meta.t != ck.t || !Arc::ptr_eq(state.topology(), &run.topo) && **state.topology() != *run.topo {
        return Err(Error::Format("checkpoint snapshot does not match its record".into()));
    }
    run.reference_z = ck.reference_z;
    let mut file = OpenOptions::new().write(true).open(dir.join(SERIES_FILE))?;
    file.set_len(ck.series_len)?;
    file.seek(SeekFrom::End(0))?;
    run.save_manifest(ck.step, "running", None)?;
    let mut writer = NdjsonWriter::new(file);
    run.drive(&mut state, ck.step, &mut writer, limit)
}

pub fn load_series(path: &Path) -> Result<Vec<TimeSeriesRecord>> {
    read_series(BufReader::new(File::open(path)?))
}

/// `(t, value)` pairs of one scalar observable.
pub fn scalar_series(series: &[TimeSeriesRecord], name: &str) -> Vec<(f64, f64)> {
    series.iter().filter(|r| r.name == name).filter_map(|r| r.value().map(|v| (r.t, v))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayClass {
    Stable,
    Decay,
    /// The false vacuum was already gone at the end of the preparation.
    PreparationDecay,
}

/// Least-squares slope of the points with `t` in `[t0, t1]`.
pub fn window_slope(points: &[(f64, f64)], t0: f64, t1: f64) -> Result<f64> {
    let w: Vec<(f64, f64)> = points.iter().copied().filter(|&(t, _)| t >= t0 && t <= t1).collect();
    if w.len() < 2 {
        return Err(Error::Scan(format!("fewer than two points in window [{t0}, {t1}]")));
    }
    let n = w.len() as f64;
    let (mt, my) = (w.iter().map(|p| p.0).sum::<f64>() / n, w.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = w.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Scan("window holds a single time".into()));
    }
    Ok(w.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Decay if the magnetization slope over the window exceeds
/// `threshold * j`.
pub fn classify_decay(points: &[(f64, f64)], t0: f64, t1: f64, threshold: f64, j: f64) -> Result<(DecayClass, f64)> {
    let s = window_slope(points, t0, t1)?;
    Ok((if s > threshold * j.abs() { DecayClass::Decay } else { DecayClass::Stable }, s))
}

/// Start of the classifier window: the collision time plus the configured
/// delay, or the end of the ramp plus the delay with fewer than two packets.
pub fn classifier_start(cfg: &ExperimentConfig) -> Result<f64> {
    let anchor = if cfg.packets()?.len() >= 2 { collision_time(cfg)? } else { cfg.evolution.tau_prep };
    Ok(anchor + cfg.classifier.window_after_collision / cfg.model.j.abs())
}

/// Classify a finished false vacuum run from its magnetization series.
/// Besides the late-window slope, a run counts as decayed if the mean slope
/// since the end of the preparation exceeds the threshold (a bubble that
/// already filled a small lattice), and as a preparation decay if the
/// prepared state has more than `max_prepared_flips` of its spins flipped.
/// The returned slope is the window slope.
pub fn classify_run(cfg: &ExperimentConfig, series: &[TimeSeriesRecord]) -> Result<(DecayClass, f64)> {
    let c = &cfg.classifier;
    let e = &cfg.evolution;
    let t0 = classifier_start(cfg)?;
    let m = scalar_series(series, "magnetization_change");
    let (class, s) = classify_decay(&m, t0, e.t_max, c.slope_threshold, cfg.model.j)?;
    let tol = 0.5 * e.dt * e.measure_every as f64;
    let prepared = scalar_series(series, "flipped_fraction").into_iter().find(|p| p.0 >= e.tau_prep - tol);
    if prepared.is_some_and(|p| p.1 > c.max_prepared_flips) {
        return Ok((DecayClass::PreparationDecay, s));
    }
    let mut since = m.iter().filter(|p| p.0 >= e.tau_prep - tol);
    let (first, last) = (since.next(), since.next_back());
    let mean = match (first, last) {
        (Some(a), Some(b)) if b.0 > a.0 => (b.1 - a.1) / (b.0 - a.0),
        _ => 0.0,
    };
    if class == DecayClass::Stable && mean > c.slope_threshold * cfg.model.j.abs() {
        return Ok((DecayClass::Decay, s));
    }
    Ok((class, s))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub h: f64,
    pub class: DecayClass,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub g: f64,
    pub entries: Vec<ScanEntry>,
    pub interval: (f64, f64),
    pub estimate: f64,
}

/// First transition from stable to either decay class in ascending `h`.
pub fn bracket(entries: &[ScanEntry]) -> Result<(f64, f64)> {
    entries
        .windows(2)
        .find(|w| w[0].class == DecayClass::Stable && w[1].class != DecayClass::Stable)
        .map(|w| (w[0].h, w[1].h))
        .ok_or_else(|| {
            let classes: Vec<String> = entries.iter().map(|e| format!("h={}: {:?}", e.h, e.class)).collect();
            Error::Scan(format!("no stable-to-decay transition: {}", classes.join(", ")))
        })
}

/// One false vacuum run per `h` (in parallel, each in `dir/h-<i>`), then
/// bracket the threshold. The result is also written to `dir/scan.json`.
pub fn threshold_scan(base: &ExperimentConfig) -> Result<ScanResult> {
    let scan = base.scan.clone().ok_or_else(|| cfg_err("missing [scan] section"))?;
    let g = scan.g.unwrap_or(base.model.g);
    let configs: Vec<ExperimentConfig> = scan
        .h_values
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let mut c = base.clone();
            c.model.g = g;
            c.model.h = h;
            c.scan = None;
            c.output.dir = base.output.dir.join(format!("h-{i:02}"));
            c
        })
        .collect();
    let entries = configs
        .par_iter()
        .map(|c| {
            let s = run_false_vacuum(c)?;
            let (class, slope) = classify_run(c, &load_series(&s.series)?)?;
            Ok(ScanEntry { h: c.model.h, class, slope })
        })
        .collect::<Result<Vec<_>>>()?;
    let interval = bracket(&entries);
    fs::create_dir_all(&base.output.dir)?;
    match interval {
        Ok(iv) => {
            let res = ScanResult { g, entries, interval: iv, estimate: 0.5 * (iv.0 + iv.1) };
            write_json(&base.output.dir.join("scan.json"), &res)?;
            Ok(res)
        }
        Err(e) => {
            write_json(&base.output.dir.join("scan.json"), &entries)?;
            Err(e)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakAnalysis {
    pub baseline_time: f64,
    pub peak_time: f64,
    pub peak_value: f64,
    /// Largest other local maximum over the peak value.
    pub runner_up_ratio: f64,
}

/// Dominant maximum of a baseline-subtracted scalar after the baseline time.
pub fn correlator_peak(series: &[TimeSeriesRecord], name: &str, baseline_time: f64, tolerance: f64) -> Result<PeakAnalysis> {
    let only: Vec<TimeSeriesRecord> = series.iter().filter(|r| r.name == name).cloned().collect();
    let rel = baseline_subtract(&only, baseline_time, tolerance)?;
    let pts: Vec<(f64, f64)> = scalar_series(&rel, name).into_iter().filter(|p| p.0 >= baseline_time).collect();
    if pts.len() < 3 {
        return Err(Error::Scan(format!("too few '{name}' records after t = {baseline_time}")));
    }
    let imax = (0..pts.len()).max_by(|&a, &b| pts[a].1.total_cmp(&pts[b].1)).expect("non-empty");
    let (tp, vp) = pts[imax];
    // Local maxima separated from the main peak by a dip below half their own height.
    let mut runner = 0.0f64;
    for i in 1..pts.len() - 1 {
        if pts[i].1 > 0.0 && pts[i].1 >= pts[i - 1].1 && pts[i].1 >= pts[i + 1].1 && i != imax {
            let (lo, hi) = if i < imax { (i, imax) } else { (imax, i) };
            let dip = pts[lo..=hi].iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            if dip < 0.5 * pts[i].1 {
                runner = runner.max(pts[i].1);
            }
        }
    }
    Ok(PeakAnalysis {
        baseline_time,
        peak_time: tp,
        peak_value: vp,
        runner_up_ratio: if vp > 0.0 { runner / vp } else { f64::INFINITY },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> ExperimentConfig {
        let text = format!(
            r#"
[geometry]
lx = 4
boundary = "periodic"

[model]
g = 1.0

[[packets]]
center = [1, 1]
k_over_pi = [0.5, 0.5]

[evolution]
dt = 0.05
tau_prep = 0.5
t_max = 1.0
measure_every = 4
chi = 4
seed = 3

[output]
dir = "{}"
checkpoint_every = 6
"#,
            dir.display()
        );
        ExperimentConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn classical_threshold_values() {
        let h = classical_threshold(1.0);
        assert_eq!(format!("{h:.2}"), "0.39");
        assert!((h - PI / 8.0).abs() < 1e-15);
        let (a, b) = (2.0 * PI, PI);
        let r = critical_radius(1.0, h, a, b).unwrap();
        assert!((r - 8.0 / PI).abs() < 1e-12);
        assert!((bubble_energy(r, 1.0, h, a, b).unwrap() - 16.0).abs() < 1e-12);
        assert!((bubble_energy(2.0 * r, 1.0, h, a, b).unwrap()).abs() < 1e-12);
        assert_eq!(bubble_energy(0.0, 1.0, h, a, b).unwrap(), 0.0);
        assert!(bubble_energy(-1.0, 1.0, h, a, b).is_err());
        assert!(critical_radius(1.0, 0.0, a, b).is_err());
    }

    #[test]
    fn overrides_and_validation() {
        let base = "[geometry]\nlx = 6\n";
        let c = ExperimentConfig::from_toml_with_overrides(
            base,
            &["model.h=0.25".into(), "geometry.boundary=open".into(), "output.dir=out/x".into()],
        )
        .unwrap();
        assert_eq!(c.model.h, 0.25);
        assert_eq!(c.geometry.boundary, Boundary::Open);
        assert_eq!(c.output.dir, PathBuf::from("out/x"));
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash().unwrap(), c.hash().unwrap());
        assert!(matches!(ExperimentConfig::from_toml("[geometry]\nlx = 6\nfoo = 1\n"), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml_with_overrides(base, &["evolution.dt=-1".into()]).is_err());
        assert!(ExperimentConfig::from_toml_with_overrides(base, &["scan.h_values=[0.3]".into()]).is_err());
        assert!(ExperimentConfig::from_toml("[geometry]\nlx = 5\n[[packets]]\ncenter = [0, 0]\nk_over_pi = [0.5, 0.5]\n").is_err());
    }

    #[test]
    fn default_packets_sit_on_axis_probes() {
        let c = ExperimentConfig::from_toml("[geometry]\nlx = 12\n").unwrap();
        let p = c.packets().unwrap();
        assert_eq!(p[0].center, [4, 4]);
        assert_eq!(p[1].center, [9, 9]);
        assert_eq!(p[0].k_over_pi, [0.5, 0.5]);
        assert_eq!(p[1].k_over_pi, [-0.5, -0.5]);
    }

    #[test]
    fn collision_time_constant_field() {
        let c = ExperimentConfig::from_toml_with_overrides(
            "[geometry]\nlx = 12\n",
            &["evolution.tau_prep=0".into(), "model.g=2.0".into()],
        )
        .unwrap();
        // Separation 5 sqrt(2) on the 12-site ring, speed sqrt(2).
        assert!((collision_time(&c).unwrap() - 2.5).abs() < 1e-12);
        let ramped = ExperimentConfig::from_toml_with_overrides("[geometry]\nlx = 12\n", &["model.g=2.0".into()]).unwrap();
        let t = collision_time(&ramped).unwrap();
        assert!(t > 2.5 && t < 12.5, "{t}");
    }

    #[test]
    fn classifier_on_canned_series() {
        let flat: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 1e-4 * (i as f64 * 0.7).sin())).collect();
        let rising: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 0.05 * i as f64)).collect();
        assert_eq!(classify_decay(&flat, 10.0, 49.0, 0.01, 1.0).unwrap().0, DecayClass::Stable);
        assert_eq!(classify_decay(&rising, 10.0, 49.0, 0.01, 1.0).unwrap().0, DecayClass::Decay);
        assert!(classify_decay(&rising, 60.0, 70.0, 0.01, 1.0).is_err());
        let e = |h, class| ScanEntry { h, class, slope: 0.0 };
        let entries = [e(0.1, DecayClass::Stable), e(0.2, DecayClass::Stable), e(0.3, DecayClass::Decay)];
        assert_eq!(bracket(&entries).unwrap(), (0.2, 0.3));
        assert!(matches!(bracket(&entries[..2]), Err(Error::Scan(_))));
    }

    fn fv_series(m: impl Fn(f64) -> f64, prepared: f64) -> Vec<TimeSeriesRecord> {
        let mut s = Vec::new();
        for i in 0..=80 {
            let t = i as f64 * 0.5;
            s.push(TimeSeriesRecord::scalar(t, "flipped_fraction", if t < 10.0 { 0.05 } else { prepared }));
            if t >= 10.0 {
                s.push(TimeSeriesRecord::scalar(t, "magnetization_change", m(t)));
            }
        }
        s
    }

    #[test]
    fn saturated_and_premature_decay() {
        let text = "[geometry]\nlx = 12\n[model]\ng = 1.5\nh = 0.6\n[evolution]\ndt = 0.1\nmeasure_every = 5\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let flat = fv_series(|_| 0.001, 0.08);
        assert_eq!(classify_run(&cfg, &flat).unwrap().0, DecayClass::Stable);
        // rises after the collision and saturates before the window opens
        let t0 = classifier_start(&cfg).unwrap();
        assert!(t0 > 12.0, "{t0}");
        let saturated = fv_series(|t| (0.5 * (t - 10.0)).clamp(0.0, 1.0), 0.08);
        assert_eq!(classify_run(&cfg, &saturated).unwrap().0, DecayClass::Decay);
        let premature = fv_series(|_| 0.0, 0.7);
        assert_eq!(classify_run(&cfg, &premature).unwrap().0, DecayClass::PreparationDecay);
        let e = |h, class| ScanEntry { h, class, slope: 0.0 };
        let entries = [e(0.5, DecayClass::Stable), e(0.6, DecayClass::PreparationDecay)];
        assert_eq!(bracket(&entries).unwrap(), (0.5, 0.6));
    }

    #[test]
    fn peak_finder() {
        let mut s: Vec<TimeSeriesRecord> = (0..100)
            .map(|i| {
                let t = i as f64 * 0.5;
                TimeSeriesRecord::scalar(t, "c_a", 0.3 + (-(t - 30.0).powi(2) / 4.0).exp())
            })
            .collect();
        s.push(TimeSeriesRecord::scalar(1.0, "other", 5.0));
        let p = correlator_peak(&s, "c_a", 10.0, 0.3).unwrap();
        assert_eq!(p.peak_time, 30.0);
        assert!((p.peak_value - 1.0).abs() < 1e-9);
        assert_eq!(p.runner_up_ratio, 0.0);

        let two = |t: f64| (-(t - 20.0).powi(2) / 2.0).exp() + 0.6 * (-(t - 32.0).powi(2) / 2.0).exp();
        let s: Vec<_> = (0..100).map(|i| TimeSeriesRecord::scalar(i as f64 * 0.5, "c_a", two(i as f64 * 0.5))).collect();
        let p = correlator_peak(&s, "c_a", 0.0, 0.1).unwrap();
        assert_eq!(p.peak_time, 20.0);
        assert!((p.runner_up_ratio - 0.6).abs() < 1e-6);

        // a wiggle on the rising edge is not a separate peak
        let wiggle = |t: f64| (-(t - 30.0).powi(2) / 8.0).exp() + if t == 25.0 { 0.05 } else { 0.0 };
        let s: Vec<_> = (0..100).map(|i| TimeSeriesRecord::scalar(i as f64 * 0.5, "c_a", wiggle(i as f64 * 0.5))).collect();
        assert_eq!(correlator_peak(&s, "c_a", 0.0, 0.1).unwrap().runner_up_ratio, 0.0);
    }

    #[test]
    fn interrupted_run_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let full = tiny(&dir.path().join("full"));
        let s = run(&full, RunMode::FalseVacuum, None).unwrap();
        assert!(s.completed && s.snapshot.is_some());
        let a = fs::read_to_string(&s.series).unwrap();
        let names: Vec<String> = load_series(&s.series).unwrap().into_iter().map(|r| r.name).collect();
        assert!(names.iter().any(|n| n == "bubble_radius"));

        let part = tiny(&dir.path().join("part"));
        let p = run(&part, RunMode::FalseVacuum, Some(15)).unwrap();
        assert!(!p.completed && p.steps == 15);
        let r = resume(&part.output.dir, None).unwrap();
        assert!(r.completed);
        let b = fs::read_to_string(&r.series).unwrap();
        let (ra, rb) = (load_series(&s.series).unwrap(), load_series(&r.series).unwrap());
        assert_eq!(ra.len(), rb.len());
        for (x, y) in ra.iter().zip(&rb) {
            assert_eq!((x.t, &x.name), (y.t, &y.name));
            match (&x.data, &y.data) {
                (crate::observables::RecordData::Value(u), crate::observables::RecordData::Value(v)) => {
                    assert!((u - v).abs() < 1e-10, "{} {u} {v}", x.name)
                }
                (crate::observables::RecordData::Field(u), crate::observables::RecordData::Field(v)) => {
                    assert!(u.iter().zip(v).all(|(u, v)| (u - v).abs() < 1e-10))
                }
                _ => panic!("record kinds differ"),
            }
        }
        let m: Manifest = read_json(&part.output.dir.join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.status, "complete");
        assert!(!a.is_empty() && !b.is_empty());
    }
}

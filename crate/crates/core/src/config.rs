//! Run configuration: TOML ingestion, schema and range validation, and the
//! byte-stable echo that artifacts are keyed on.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::forcing::{BoundaryData, InitKind, InitialJump, MacroProfile, SpatialProfile, TemporalProfile};
use crate::geometry::{CellGeometry, Conductivity, EpsilonDomain};
use crate::membrane::NewtonParams;
use crate::micro::SolverParams;
use crate::nonlinearity::{make_nonlinearity, regularize, Coefficients, Kind, Nonlinearity, NonlinearitySpec};
use crate::periodic::{validate_deltas, Method, PeriodicParams};

/// Why a configuration was rejected.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    /// Malformed text or a value of the wrong type.
    #[error("parse error: {0}")]
    Parse(String),
    /// Unknown key or a value outside its documented range.
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl ConfigError {
    fn invalid(field: &str, reason: impl std::fmt::Display) -> Self {
        ConfigError::Invalid(format!("`{field}`: {reason}"))
    }
}

impl From<crate::Error> for ConfigError {
    fn from(e: crate::Error) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub dimension: usize,
    pub inclusion_margin: f64,
    pub cell_resolution: usize,
    pub epsilon: f64,
    pub budget_mb: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            dimension: 2,
            inclusion_margin: 0.25,
            cell_resolution: 8,
            epsilon: 0.25,
            budget_mb: 1024.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConductivityConfig {
    pub sigma_int: f64,
    pub sigma_out: f64,
}

impl Default for ConductivityConfig {
    fn default() -> Self {
        ConductivityConfig {
            sigma_int: 2.0,
            sigma_out: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonlinearityConfig {
    /// `linear`, `coercive`, `noncoercive`, `cubic` or `combination`.
    pub kind: String,
    pub kappa: f64,
    /// `δ` in `f + δ s`; zero disables the shift.
    pub delta_shift: f64,
    /// Combination coefficients.
    pub linear: f64,
    pub tanh: f64,
    pub sin: f64,
    pub cubic: f64,
    pub sample_range: f64,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        NonlinearityConfig {
            kind: "noncoercive".into(),
            kappa: 1.0,
            delta_shift: 0.0,
            linear: 0.0,
            tanh: 0.0,
            sin: 0.0,
            cubic: 0.0,
            sample_range: crate::nonlinearity::DEFAULT_SAMPLE_RANGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsiConfig {
    /// `constant`, `affine` or `sines`.
    pub spatial: String,
    /// `constant`, `sine` or `offset_sine`.
    pub temporal: String,
    pub amplitude: f64,
    pub gradient: [f64; 2],
    pub offset: f64,
    pub wavenumber: f64,
    pub phase: f64,
    pub c0: f64,
    pub c1: f64,
}

impl Default for PsiConfig {
    fn default() -> Self {
        PsiConfig {
            spatial: "affine".into(),
            temporal: "sine".into(),
            amplitude: 1.0,
            gradient: [1.0, 0.0],
            offset: 0.0,
            wavenumber: 1.0,
            phase: std::f64::consts::FRAC_PI_4,
            c0: 0.5,
            c1: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Steps between CSV rows.
    pub stride: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            dt: 1e-3,
            horizon: 1.0,
            stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub linear_tol: f64,
    pub linear_max_iter: usize,
    pub jacobian_shift: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let n = NewtonParams::default();
        SolverConfig {
            newton_tol: n.tol,
            newton_max_iter: n.max_iter,
            linear_tol: n.linear_tol,
            linear_max_iter: n.linear_max_iter,
            jacobian_shift: n.jacobian_shift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// `zero`, `uniform`, `oscillating` or `random`.
    pub kind: String,
    pub amplitude: f64,
    /// `flat` or `bump`.
    pub profile: String,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            kind: "oscillating".into(),
            amplitude: 0.5,
            profile: "bump".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeriodicConfig {
    /// `picard` or `delta`.
    pub method: String,
    pub tol: f64,
    pub max_iters: usize,
    pub theta: f64,
    pub stall_window: usize,
    pub deltas: Vec<f64>,
}

impl Default for PeriodicConfig {
    fn default() -> Self {
        let p = PeriodicParams::default();
        PeriodicConfig {
            method: "picard".into(),
            tol: p.tol,
            max_iters: p.max_iter,
            theta: p.theta,
            stall_window: p.stall_window,
            deltas: vec![1e-1, 1e-2, 1e-3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayConfig {
    pub periods: usize,
    pub stride: usize,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig { periods: 50, stride: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacroConfig {
    pub resolution: usize,
    pub dimension: usize,
}

impl Default for MacroConfig {
    fn default() -> Self {
        MacroConfig {
            resolution: 4,
            dimension: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub epsilons: Vec<f64>,
    /// Time at which the bulk error is measured.
    pub time: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            epsilons: vec![0.5, 0.25, 0.125],
            time: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub alpha: f64,
    /// Seed for random initial jumps.
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub conductivity: ConductivityConfig,
    pub f: NonlinearityConfig,
    pub psi: PsiConfig,
    pub time: TimeConfig,
    pub solver: SolverConfig,
    pub init: InitConfig,
    pub periodic: PeriodicConfig,
    pub decay: DecayConfig,
    #[serde(rename = "macro")]
    pub macro_grid: MacroConfig,
    pub compare: CompareConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 1.0,
            seed: 0,
            geometry: GeometryConfig::default(),
            conductivity: ConductivityConfig::default(),
            f: NonlinearityConfig::default(),
            psi: PsiConfig::default(),
            time: TimeConfig::default(),
            solver: SolverConfig::default(),
            init: InitConfig::default(),
            periodic: PeriodicConfig::default(),
            decay: DecayConfig::default(),
            macro_grid: MacroConfig::default(),
            compare: CompareConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Rejects keys that the default configuration does not have.
fn check_keys(user: &toml::Table, known: &toml::Table, prefix: &str) -> Result<(), ConfigError> {
    for (key, value) in user {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match known.get(key) {
            None => return Err(ConfigError::invalid(&path, "unknown key")),
            Some(toml::Value::Table(k)) => match value {
                toml::Value::Table(u) => check_keys(u, k, &path)?,
                _ => return Err(ConfigError::Parse(format!("`{path}` must be a table"))),
            },
            Some(_) => {}
        }
    }
    Ok(())
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("{v} must be a positive finite number")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let known = toml::Table::try_from(RunConfig::default()).expect("default config serializes");
        check_keys(&table, &known, "")?;
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("alpha", self.alpha)?;
        let g = &self.geometry;
        if !(g.dimension == 1 || g.dimension == 2) {
            return Err(ConfigError::invalid("geometry.dimension", format!("{} not in {{1, 2}}", g.dimension)));
        }
        positive("geometry.budget_mb", g.budget_mb)?;
        self.domain()?;
        Conductivity::new(self.conductivity.sigma_int, self.conductivity.sigma_out)?;
        self.nonlinearity()?;
        if !(self.f.delta_shift >= 0.0 && self.f.delta_shift.is_finite()) {
            return Err(ConfigError::invalid("f.delta_shift", "must be ≥ 0"));
        }
        self.boundary_data()?;
        let sp = self.solver_params()?;
        sp.steps_per_period().map_err(|_| ConfigError::invalid("time.dt", "1/dt must be an integer"))?;
        positive("time.horizon", self.time.horizon)?;
        crate::micro::steps_for(self.time.horizon, sp.dt, "time.horizon")?;
        crate::micro::steps_for(self.compare.time, sp.dt, "compare.time")?;
        if self.time.stride == 0 {
            return Err(ConfigError::invalid("time.stride", "must be ≥ 1"));
        }
        if !(self.init.amplitude.is_finite()) {
            return Err(ConfigError::invalid("init.amplitude", "must be finite"));
        }
        self.initial_jump()?;
        self.periodic_params()?;
        self.method()?;
        validate_deltas(&self.periodic.deltas)?;
        if self.decay.periods == 0 || self.decay.stride == 0 {
            return Err(ConfigError::invalid("decay", "periods and stride must be ≥ 1"));
        }
        if self.macro_grid.resolution == 0 || self.macro_grid.resolution > 64 {
            return Err(ConfigError::invalid("macro.resolution", "must lie in [1, 64]"));
        }
        if self.macro_grid.dimension != g.dimension {
            return Err(ConfigError::invalid(
                "macro.dimension",
                format!("{} differs from geometry.dimension {}", self.macro_grid.dimension, g.dimension),
            ));
        }
        if self.compare.epsilons.is_empty() {
            return Err(ConfigError::invalid("compare.epsilons", "empty list"));
        }
        let cell = self.cell()?;
        for &e in &self.compare.epsilons {
            EpsilonDomain::new(&cell, e, g.budget_mb)
                .map_err(|err| ConfigError::invalid("compare.epsilons", err))?;
        }
        positive("compare.time", self.compare.time)?;
        if self.output.dir.is_empty() {
            return Err(ConfigError::invalid("output.dir", "empty path"));
        }
        Ok(())
    }

    pub fn cell(&self) -> Result<CellGeometry, ConfigError> {
        let g = &self.geometry;
        CellGeometry::new(g.dimension, g.inclusion_margin, g.cell_resolution).map_err(|e| match e {
            crate::Error::MisalignedResolution { .. } => ConfigError::invalid("geometry.cell_resolution", e),
            other => ConfigError::invalid("geometry.inclusion_margin", other),
        })
    }

    pub fn domain(&self) -> Result<EpsilonDomain, ConfigError> {
        self.domain_at(self.geometry.epsilon)
    }

    pub fn domain_at(&self, epsilon: f64) -> Result<EpsilonDomain, ConfigError> {
        EpsilonDomain::new(&self.cell()?, epsilon, self.geometry.budget_mb)
            .map_err(|e| ConfigError::invalid("geometry.epsilon", e))
    }

    pub fn conductivity(&self) -> Result<Conductivity, ConfigError> {
        Ok(Conductivity::new(self.conductivity.sigma_int, self.conductivity.sigma_out)?)
    }

    /// `f`, with `f.delta_shift` applied when positive.
    pub fn nonlinearity(&self) -> Result<Nonlinearity, ConfigError> {
        let c = &self.f;
        let kind = Kind::parse(&c.kind).ok_or_else(|| {
            ConfigError::invalid("f.kind", "expected linear, coercive, noncoercive, cubic or combination")
        })?;
        let mut spec = NonlinearitySpec::builtin(kind, c.kappa);
        if kind == Kind::Combination {
            spec = NonlinearitySpec::combination(Coefficients {
                linear: c.linear,
                tanh: c.tanh,
                sin: c.sin,
                cubic: c.cubic,
            });
        }
        spec.sample_range = c.sample_range;
        let f = make_nonlinearity(&spec)?;
        if c.delta_shift > 0.0 {
            Ok(regularize(&f, c.delta_shift)?)
        } else {
            Ok(f)
        }
    }

    pub fn boundary_data(&self) -> Result<BoundaryData, ConfigError> {
        let p = &self.psi;
        let spatial = match p.spatial.as_str() {
            "constant" => SpatialProfile::Constant,
            "affine" => SpatialProfile::Affine {
                gradient: p.gradient,
                offset: p.offset,
            },
            "sines" => SpatialProfile::Sines {
                wavenumber: p.wavenumber,
                phase: p.phase,
            },
            _ => return Err(ConfigError::invalid("psi.spatial", "expected constant, affine or sines")),
        };
        let temporal = match p.temporal.as_str() {
            "constant" => TemporalProfile::Constant,
            "sine" => TemporalProfile::Sine,
            "offset_sine" => TemporalProfile::OffsetSine { c0: p.c0, c1: p.c1 },
            _ => return Err(ConfigError::invalid("psi.temporal", "expected constant, sine or offset_sine")),
        };
        if !(p.gradient.iter().chain([&p.offset, &p.wavenumber, &p.phase, &p.c0, &p.c1]).all(|x| x.is_finite())) {
            return Err(ConfigError::invalid("psi", "coefficients must be finite"));
        }
        Ok(BoundaryData::new(p.amplitude, spatial, temporal)?)
    }

    pub fn solver_params(&self) -> Result<SolverParams, ConfigError> {
        let s = &self.solver;
        let mut p = SolverParams::new(self.time.dt).map_err(|e| ConfigError::invalid("time.dt", e))?;
        p.newton = NewtonParams {
            tol: s.newton_tol,
            max_iter: s.newton_max_iter,
            linear_tol: s.linear_tol,
            linear_max_iter: s.linear_max_iter,
            jacobian_shift: s.jacobian_shift,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn initial_jump(&self) -> Result<InitialJump, ConfigError> {
        let kind = InitKind::parse(&self.init.kind)
            .ok_or_else(|| ConfigError::invalid("init.kind", "expected zero, uniform, oscillating or random"))?;
        let profile = match self.init.profile.as_str() {
            "flat" => MacroProfile::Flat,
            "bump" => MacroProfile::Bump,
            _ => return Err(ConfigError::invalid("init.profile", "expected flat or bump")),
        };
        Ok(InitialJump::new(kind, self.init.amplitude, profile, self.seed))
    }

    pub fn periodic_params(&self) -> Result<PeriodicParams, ConfigError> {
        let c = &self.periodic;
        let p = PeriodicParams {
            tol: c.tol,
            max_iter: c.max_iters,
            theta: c.theta,
            stall_window: c.stall_window.max(1),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn method(&self) -> Result<Method, ConfigError> {
        match self.periodic.method.as_str() {
            "picard" => Ok(Method::Picard),
            "delta" => Ok(Method::DeltaSequence),
            _ => Err(ConfigError::invalid("periodic.method", "expected picard or delta")),
        }
    }

    /// Effective configuration as TOML; stable for equal configurations.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Self::echo`], hex encoded.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.echo().as_bytes()))
    }

    /// Hash of the fields that determine a periodic orbit.
    pub fn orbit_key(&self) -> String {
        let mut c = self.clone();
        c.time.horizon = 0.0;
        c.time.stride = 0;
        c.init = InitConfig::default();
        c.seed = 0;
        c.decay = DecayConfig::default();
        c.compare = CompareConfig::default();
        c.macro_grid = MacroConfig::default();
        c.output = OutputConfig::default();
        c.hash()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

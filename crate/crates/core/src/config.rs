//! TOML system configuration: parsing, validation with line-level
//! diagnostics, and assembly into ready-to-run models.
//!
//! A configuration file is either a full system description or a preset
//! reference:
//!
//! ```toml
//! preset = "immune"
//! [overrides]
//! kill_rate = 2.0
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Scale};
use crate::geometry::{SensitivityDomain, Weighting};
use crate::integrator::{IntegratorConfig, SimulationState, Splitting, Stepper};
use crate::kernels::{
    load_table_csv, normalize_transition, GainForm, KernelSet, LossForm, Pairing, RateForm, TableEntry,
    TabulatedTransition, TransitionForm,
};
use crate::model::{HomogeneousModel, Model};
use crate::scalar::Scalar;
use crate::state::{ActivityGrid, Boundary, DistributionField, ExitSegment, PhaseGrid, SpaceGrid, VelocityGrid};
use crate::transport::{SchemeId, TransportScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Spatial,
    Homogeneous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub space: SpaceSection,
    #[serde(default)]
    pub velocity: VelocitySection,
    #[serde(default)]
    pub activity: ActivitySection,
    #[serde(default)]
    pub sensitivity: SensitivitySection,
    #[serde(default)]
    pub transport: TransportSection,
    pub integrator: IntegratorSection,
    #[serde(default, rename = "kernel", skip_serializing_if = "Vec::is_empty")]
    pub kernels: Vec<KernelSpec>,
    #[serde(default, rename = "initial", skip_serializing_if = "Vec::is_empty")]
    pub initial: Vec<InitialSpec>,
    #[serde(default)]
    pub output: OutputSection,
    /// Where the text came from; used for diagnostics and relative paths.
    #[serde(skip)]
    pub origin: Origin,
}

#[derive(Debug, Clone, Default)]
pub struct Origin {
    pub base_dir: Option<PathBuf>,
    pub kernel_lines: Vec<usize>,
    pub initial_lines: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n: usize,
    #[serde(default)]
    pub m: usize,
    #[serde(default)]
    pub mode: Mode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
    #[serde(default = "one_usize")]
    pub nx: usize,
    #[serde(default = "one_usize")]
    pub ny: usize,
    #[serde(default = "periodic")]
    pub boundary: Boundary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exits: Vec<ExitSegment>,
}

impl Default for SpaceSection {
    fn default() -> Self {
        Self {
            lx: 1.0,
            ly: 1.0,
            nx: 1,
            ny: 1,
            boundary: Boundary::Periodic,
            exits: Vec::new(),
        }
    }
}

/// One velocity set. `rest = true` replaces it by a single resting node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySpec {
    #[serde(default = "four")]
    pub directions: usize,
    #[serde(default = "one_usize")]
    pub speeds: usize,
    #[serde(default = "one")]
    pub v_max: f64,
    /// Total weight of the velocity set.
    #[serde(default = "one")]
    pub measure: f64,
    #[serde(default)]
    pub rest: bool,
}

impl Default for VelocitySpec {
    fn default() -> Self {
        Self {
            directions: 4,
            speeds: 1,
            v_max: 1.0,
            measure: 1.0,
            rest: false,
        }
    }
}

impl VelocitySpec {
    fn grid<T: Scalar>(&self) -> Result<VelocityGrid<T>> {
        let g = if self.rest {
            VelocityGrid::at_rest()
        } else {
            VelocityGrid::uniform(self.directions, self.speeds, T::of(self.v_max))?
        };
        g.with_measure(T::of(self.measure))
    }
}

/// FS velocities inline; `[velocity.sfs]` overrides them for the SFS scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySection {
    #[serde(default = "four")]
    pub directions: usize,
    #[serde(default = "one_usize")]
    pub speeds: usize,
    #[serde(default = "one")]
    pub v_max: f64,
    #[serde(default = "one")]
    pub measure: f64,
    #[serde(default)]
    pub rest: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sfs: Option<VelocitySpec>,
}

impl Default for VelocitySection {
    fn default() -> Self {
        let d = VelocitySpec::default();
        Self {
            directions: d.directions,
            speeds: d.speeds,
            v_max: d.v_max,
            measure: d.measure,
            rest: d.rest,
            sfs: None,
        }
    }
}

impl VelocitySection {
    pub fn fs(&self) -> VelocitySpec {
        VelocitySpec {
            directions: self.directions,
            speeds: self.speeds,
            v_max: self.v_max,
            measure: self.measure,
            rest: self.rest,
        }
    }

    pub fn sfs(&self) -> VelocitySpec {
        self.sfs.clone().unwrap_or_else(|| self.fs())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivitySection {
    #[serde(default = "four")]
    pub nu: usize,
    #[serde(default = "four")]
    pub nw: usize,
    /// Raw range of `u`; initial profiles are given in raw units.
    #[serde(default = "unit_range")]
    pub u_range: [f64; 2],
    #[serde(default = "unit_range")]
    pub w_range: [f64; 2],
}

impl Default for ActivitySection {
    fn default() -> Self {
        Self {
            nu: 4,
            nw: 4,
            u_range: [0.0, 1.0],
            w_range: [0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    #[serde(default = "half_turn")]
    pub half_angle_deg: f64,
    #[serde(default = "one")]
    pub radius: f64,
    #[serde(default = "uniform_normalized")]
    pub weighting: Weighting,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            half_angle_deg: 180.0,
            radius: 1.0,
            weighting: Weighting::UniformNormalized,
        }
    }
}

impl DomainSpec {
    fn domain<T: Scalar>(&self) -> Result<SensitivityDomain<T>> {
        if self.half_angle_deg == 180.0 {
            return SensitivityDomain::new(T::PI(), T::of(self.radius), self.weighting);
        }
        SensitivityDomain::from_degrees(T::of(self.half_angle_deg), T::of(self.radius), self.weighting)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivitySection {
    #[serde(default)]
    pub fs: DomainSpec,
    #[serde(default)]
    pub sfs: DomainSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSection {
    #[serde(default)]
    pub scheme: SchemeId,
    /// Largest accepted CFL number.
    #[serde(default = "one")]
    pub cfl: f64,
}

impl Default for TransportSection {
    fn default() -> Self {
        Self {
            scheme: SchemeId::FirstOrderUpwind,
            cfl: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub splitting: SplittingName,
    #[serde(default)]
    pub stepper: Stepper,
    #[serde(default = "negativity_tolerance")]
    pub negativity_tolerance: f64,
    #[serde(default = "one_usize")]
    pub output_stride: usize,
}

/// Accepts `strang` so that it can be rejected with a clear message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplittingName {
    #[default]
    Lie,
    Strang,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Write a snapshot every this many steps; 0 disables snapshots.
    #[serde(default)]
    pub snapshot_stride: usize,
}

#[allow(clippy::derivable_impls)]
impl Default for OutputSection {
    fn default() -> Self {
        Self { snapshot_stride: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelType {
    Rate,
    Transition,
    Proliferation,
}

/// One `[[kernel]]` entry. Rates and transitions name a `pairing`;
/// proliferation entries name the test `scale` and use `gain`/`loss`
/// instead of `form`. `pair` is `[candidate or test, field]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(rename = "type")]
    pub kind: KernelType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing: Option<Pairing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
    pub pair: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    /// CSV file of table entries, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    /// Rescale every conditioning slice of the table to unit mass.
    #[serde(default, skip_serializing_if = "is_false")]
    pub normalize: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<TableEntry>,
}

impl KernelSpec {
    pub fn rate(pairing: Pairing, pair: [usize; 2], form: &str, params: &[(&str, f64)]) -> Self {
        Self::new(KernelType::Rate, Some(pairing), pair, Some(form), params)
    }

    pub fn transition(pairing: Pairing, pair: [usize; 2], form: &str, params: &[(&str, f64)]) -> Self {
        Self::new(KernelType::Transition, Some(pairing), pair, Some(form), params)
    }

    pub fn proliferation(
        scale: Scale,
        pair: [usize; 2],
        gain: Option<&str>,
        loss: Option<&str>,
        params: &[(&str, f64)],
    ) -> Self {
        let mut k = Self::new(KernelType::Proliferation, None, pair, None, params);
        k.scale = Some(scale);
        k.gain = gain.map(str::to_string);
        k.loss = loss.map(str::to_string);
        k
    }

    fn new(
        kind: KernelType,
        pairing: Option<Pairing>,
        pair: [usize; 2],
        form: Option<&str>,
        params: &[(&str, f64)],
    ) -> Self {
        Self {
            kind,
            pairing,
            scale: None,
            pair,
            form: form.map(str::to_string),
            gain: None,
            loss: None,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            table: None,
            normalize: false,
            entries: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

/// Activity profile of an initial population, in raw activity units.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "lowercase", deny_unknown_fields)]
pub enum ActivityProfile {
    #[default]
    Uniform,
    Gaussian {
        mean: f64,
        std: f64,
    },
    /// All mass on the node nearest `value`.
    Node {
        value: f64,
    },
}

/// One `[[initial]]` population: `density` per unit area inside `region`
/// (default everywhere), isotropic or on one velocity node, with the given
/// activity profile. Populations add up.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub scale: Scale,
    #[serde(default)]
    pub subsystem: usize,
    pub density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<usize>,
    #[serde(default)]
    pub activity: ActivityProfile,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn four() -> usize {
    4
}
fn half_turn() -> f64 {
    180.0
}
fn unit_range() -> [f64; 2] {
    [0.0, 1.0]
}
fn periodic() -> Boundary {
    Boundary::Periodic
}
fn uniform_normalized() -> Weighting {
    Weighting::UniformNormalized
}
fn negativity_tolerance() -> f64 {
    1e-10
}
fn is_false(b: &bool) -> bool {
    !*b
}

/// A preset reference with parameter overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetFile {
    pub preset: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

/// Everything needed to integrate the full system.
#[derive(Debug, Clone)]
pub struct SpatialSetup<T> {
    pub model: Model<T>,
    pub scheme: TransportScheme<T>,
    pub integrator: IntegratorConfig<T>,
    pub initial: SimulationState<T>,
}

/// Everything needed to integrate the homogeneous system.
#[derive(Debug, Clone)]
pub struct HomogeneousSetup<T> {
    pub model: HomogeneousModel<T>,
    pub integrator: IntegratorConfig<T>,
    pub initial: SimulationState<T>,
}

#[derive(Debug, Clone)]
pub enum Setup<T> {
    Spatial(SpatialSetup<T>),
    Homogeneous(HomogeneousSetup<T>),
}

impl SystemConfig {
    /// Parses a full system or a preset reference. Syntax and schema errors
    /// carry the line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Toml(e.to_string()))?;
        if table.contains_key("preset") {
            let p: PresetFile = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
            return crate::scenarios::preset_config(&p.preset, &p.overrides);
        }
        let mut cfg: SystemConfig = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.origin.kernel_lines = header_lines(text, "[[kernel]]");
        cfg.origin.initial_lines = header_lines(text, "[[initial]]");
        Ok(cfg)
    }

    /// Reads a config file and inlines referenced table files.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.origin.base_dir = path.parent().map(Path::to_path_buf);
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Replaces table file references by their entries, so that the
    /// serialized config is self-contained.
    pub fn resolve(&mut self) -> Result<()> {
        for k in 0..self.kernels.len() {
            if let Some(rel) = self.kernels[k].table.take() {
                let path = match &self.origin.base_dir {
                    Some(dir) if rel.is_relative() => dir.join(&rel),
                    _ => rel.clone(),
                };
                let entries = load_table_csv(&path).map_err(|e| self.at_kernel(k, e))?;
                self.kernels[k].entries.extend(entries);
            }
        }
        Ok(())
    }

    /// The resolved configuration as TOML; parsing it back yields the same
    /// configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    fn at_kernel(&self, k: usize, e: Error) -> Error {
        locate(&self.origin.kernel_lines, "[[kernel]]", k, e)
    }

    fn at_initial(&self, k: usize, e: Error) -> Error {
        locate(&self.origin.initial_lines, "[[initial]]", k, e)
    }

    pub fn mode(&self) -> Mode {
        self.system.mode
    }

    /// Checks everything that `build` would, without keeping the result.
    pub fn validate(&self) -> Result<()> {
        self.build::<f64>().map(|_| ())
    }

    pub fn build<T: Scalar>(&self) -> Result<Setup<T>> {
        match self.system.mode {
            Mode::Spatial => self.build_spatial().map(Setup::Spatial),
            Mode::Homogeneous => self.build_homogeneous().map(Setup::Homogeneous),
        }
    }

    pub fn integrator<T: Scalar>(&self) -> Result<IntegratorConfig<T>> {
        let s = &self.integrator;
        if s.splitting == SplittingName::Strang {
            return Err(Error::config(
                "integrator.splitting = \"strang\" is not supported; use \"lie\"",
            ));
        }
        let cfg = IntegratorConfig {
            dt: T::of(s.dt),
            t_end: T::of(s.t_end),
            splitting: Splitting::Lie,
            stepper: s.stepper,
            negativity_tolerance: T::of(s.negativity_tolerance),
            output_stride: s.output_stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn space<T: Scalar>(&self) -> Result<SpaceGrid<T>> {
        let s = &self.space;
        SpaceGrid::new(T::of(s.lx), T::of(s.ly), s.nx, s.ny, s.boundary)?.with_exits(s.exits.clone())
    }

    fn activity<T: Scalar>(&self, scale: Scale) -> Result<ActivityGrid<T>> {
        let (n, [lo, hi]) = match scale {
            Scale::Fs => (self.activity.nu, self.activity.u_range),
            Scale::Sfs => (self.activity.nw, self.activity.w_range),
        };
        ActivityGrid::with_raw_bounds(n, T::of(lo), T::of(hi))
    }

    /// Phase grids of both scales for the configured mode.
    pub fn grids<T: Scalar>(&self) -> Result<(PhaseGrid<T>, PhaseGrid<T>)> {
        let fs_act = self.activity::<T>(Scale::Fs)?;
        let sfs_act = self.activity::<T>(Scale::Sfs)?;
        match self.system.mode {
            Mode::Spatial => {
                let space = self.space()?;
                Ok((
                    PhaseGrid::new(space.clone(), self.velocity.fs().grid()?, fs_act),
                    PhaseGrid::new(space, self.velocity.sfs().grid()?, sfs_act),
                ))
            }
            Mode::Homogeneous => {
                let mut fs = PhaseGrid::homogeneous(self.activity.nu)?;
                let mut sfs = PhaseGrid::homogeneous(self.activity.nw)?;
                fs.activity = fs_act;
                sfs.activity = sfs_act;
                Ok((fs, sfs))
            }
        }
    }

    pub fn build_spatial<T: Scalar>(&self) -> Result<SpatialSetup<T>> {
        if self.system.mode != Mode::Spatial {
            return Err(Error::config(
                "system.mode is homogeneous; a spatial run needs mode = \"spatial\"",
            ));
        }
        let (fs, sfs) = self.grids::<T>()?;
        let kernels = self.kernel_set(&fs, &sfs)?;
        let model = Model::new(
            fs,
            self.sensitivity.fs.domain()?,
            sfs,
            self.sensitivity.sfs.domain()?,
            kernels,
        )?;
        let scheme = TransportScheme::upwind(T::of(self.transport.cfl))?;
        let integrator = self.integrator()?;
        scheme.check(integrator.dt, &model.fs.grid.space, &model.fs.grid.velocity)?;
        scheme.check(integrator.dt, &model.sfs.grid.space, &model.sfs.grid.velocity)?;
        let initial = self.initial_state(&model.fs.grid, &model.sfs.grid)?;
        Ok(SpatialSetup {
            model,
            scheme,
            integrator,
            initial,
        })
    }

    /// Homogeneous setup. Space, velocity and sensitivity sections are
    /// ignored, as are initial regions and headings.
    pub fn build_homogeneous<T: Scalar>(&self) -> Result<HomogeneousSetup<T>> {
        let mut cfg = self.clone();
        cfg.system.mode = Mode::Homogeneous;
        let (fs, sfs) = cfg.grids::<T>()?;
        let kernels = cfg.kernel_set(&fs, &sfs)?;
        let mut model = HomogeneousModel::new(cfg.activity.nu, cfg.activity.nw, kernels)?;
        model.fs.activity = fs.activity.clone();
        model.sfs.activity = sfs.activity.clone();
        let initial = cfg.initial_state(&model.fs, &model.sfs)?;
        Ok(HomogeneousSetup {
            model,
            integrator: cfg.integrator()?,
            initial,
        })
    }

    /// Kernel table for the given grids.
    pub fn kernel_set<T: Scalar>(&self, fs: &PhaseGrid<T>, sfs: &PhaseGrid<T>) -> Result<KernelSet<T>> {
        let (n, m) = (self.system.n, self.system.m);
        if n == 0 {
            return Err(Error::config("system.n must be at least 1"));
        }
        let mut set = KernelSet::new(n, m);
        for (k, spec) in self.kernels.iter().enumerate() {
            add_kernel(&mut set, spec, fs, sfs).map_err(|e| self.at_kernel(k, e))?;
        }
        Ok(set)
    }

    /// Initial distributions on the given grids.
    pub fn initial_state<T: Scalar>(&self, fs: &PhaseGrid<T>, sfs: &PhaseGrid<T>) -> Result<SimulationState<T>> {
        let mut f = DistributionField::zeros(self.system.n, fs);
        let mut phi = DistributionField::zeros(self.system.m, sfs);
        let homogeneous = self.system.mode == Mode::Homogeneous;
        for (k, spec) in self.initial.iter().enumerate() {
            let (field, grid) = match spec.scale {
                Scale::Fs => (&mut f, fs),
                Scale::Sfs => (&mut phi, sfs),
            };
            add_population(field, grid, spec, homogeneous).map_err(|e| self.at_initial(k, e))?;
        }
        Ok(SimulationState::new(f, phi))
    }
}

fn header_lines(text: &str, header: &str) -> Vec<usize> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with(header))
        .map(|(i, _)| i + 1)
        .collect()
}

fn locate(lines: &[usize], header: &str, k: usize, e: Error) -> Error {
    let e = match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    };
    match lines.get(k) {
        Some(line) => Error::config(format!("line {line}: {header} #{}: {e}", k + 1)),
        None => Error::config(format!("{header} #{}: {e}", k + 1)),
    }
}

/// Named parameters of one kernel entry, checked against the keys its form
/// accepts.
struct Params<'a> {
    map: &'a BTreeMap<String, f64>,
}

impl<'a> Params<'a> {
    fn check(map: &'a BTreeMap<String, f64>, what: &str, valid: &[&str]) -> Result<Self> {
        if let Some(bad) = map.keys().find(|k| !valid.contains(&k.as_str())) {
            return Err(Error::config(format!(
                "unknown parameter '{bad}' for {what}; valid keys: {}",
                if valid.is_empty() {
                    "(none)".to_string()
                } else {
                    valid.join(", ")
                }
            )));
        }
        Ok(Self { map })
    }

    fn req<T: Scalar>(&self, key: &str) -> Result<T> {
        self.map
            .get(key)
            .map(|v| T::of(*v))
            .ok_or_else(|| Error::config(format!("missing parameter '{key}'")))
    }

    fn opt<T: Scalar>(&self, key: &str, default: f64) -> T {
        T::of(self.map.get(key).copied().unwrap_or(default))
    }
}

fn add_kernel<T: Scalar>(
    set: &mut KernelSet<T>,
    spec: &KernelSpec,
    fs: &PhaseGrid<T>,
    sfs: &PhaseGrid<T>,
) -> Result<()> {
    let [c, h] = spec.pair;
    let grid = |s: Scale| if s == Scale::Fs { fs } else { sfs };
    let require_form = || spec.form.as_deref().ok_or_else(|| Error::config("missing 'form'"));
    let reject = |field: &str, present: bool| {
        if present {
            Err(Error::config(format!("'{field}' is not valid for this kernel type")))
        } else {
            Ok(())
        }
    };
    match spec.kind {
        KernelType::Rate | KernelType::Transition => {
            let pairing = spec.pairing.ok_or_else(|| Error::config("missing 'pairing'"))?;
            reject("scale", spec.scale.is_some())?;
            reject("gain", spec.gain.is_some())?;
            reject("loss", spec.loss.is_some())?;
            let form = require_form()?;
            if spec.kind == KernelType::Rate {
                reject("table", spec.table.is_some() || !spec.entries.is_empty())?;
                let rate = match form {
                    "constant" => RateForm::Constant {
                        alpha0: Params::check(&spec.params, "constant rate", &["alpha0"])?.req("alpha0")?,
                    },
                    "density-modulated" => {
                        let p = Params::check(&spec.params, "density-modulated rate", &["alpha0", "kappa"])?;
                        RateForm::DensityModulated {
                            alpha0: p.req("alpha0")?,
                            kappa: p.req("kappa")?,
                        }
                    }
                    other => {
                        return Err(Error::config(format!(
                            "unknown rate form '{other}'; valid forms: constant, density-modulated"
                        )))
                    }
                };
                return set.set_rate(pairing, c, h, rate);
            }
            let (cg, fg) = (grid(pairing.candidate()), grid(pairing.field()));
            if form != "tabulated" {
                reject("table", spec.table.is_some() || !spec.entries.is_empty())?;
            }
            let trans = match form {
                "identity" => {
                    Params::check(&spec.params, "identity transition", &[])?;
                    TransitionForm::Identity
                }
                "activity-consensus" => TransitionForm::ActivityConsensus {
                    mu: Params::check(&spec.params, "activity-consensus transition", &["mu"])?.req("mu")?,
                },
                "velocity-alignment" => {
                    let p = Params::check(
                        &spec.params,
                        "velocity-alignment transition",
                        &["lambda", "lambda_activity", "mu"],
                    )?;
                    TransitionForm::VelocityAlignment {
                        lambda: p.req("lambda")?,
                        lambda_activity: p.opt("lambda_activity", 0.0),
                        mu: p.opt("mu", 0.0),
                    }
                }
                "exit-steering" => {
                    let p = Params::check(
                        &spec.params,
                        "exit-steering transition",
                        &["strength", "exit_bias", "avoidance"],
                    )?;
                    TransitionForm::ExitSteering {
                        strength: p.req("strength")?,
                        exit_bias: p.opt("exit_bias", 1.0),
                        avoidance: p.opt("avoidance", 0.0),
                        exits: cg.space.exit_points(),
                    }
                }
                "intensity-relaxation" => {
                    let p = Params::check(&spec.params, "intensity-relaxation transition", &["rate", "rho_ref"])?;
                    TransitionForm::IntensityRelaxation {
                        rate: p.req("rate")?,
                        rho_ref: p.opt("rho_ref", 1.0),
                    }
                }
                "tabulated" => {
                    Params::check(&spec.params, "tabulated transition", &[])?;
                    if spec.entries.is_empty() {
                        return Err(Error::config("tabulated transition has no entries"));
                    }
                    let shape = [
                        cg.velocity.len(),
                        cg.activity.len(),
                        fg.velocity.len(),
                        fg.activity.len(),
                        cg.velocity.len(),
                        cg.activity.len(),
                    ];
                    let table = TabulatedTransition::from_entries(shape, &spec.entries)?;
                    let table = if spec.normalize {
                        normalize_transition(&table, cg)?
                    } else {
                        table
                    };
                    TransitionForm::Tabulated(table)
                }
                other => {
                    return Err(Error::config(format!(
                        "unknown transition form '{other}'; valid forms: identity, activity-consensus, \
                         velocity-alignment, exit-steering, intensity-relaxation, tabulated"
                    )))
                }
            };
            set.set_transition(pairing, c, h, trans)
        }
        KernelType::Proliferation => {
            let scale = spec.scale.ok_or_else(|| Error::config("missing 'scale' (fs or sfs)"))?;
            reject("pairing", spec.pairing.is_some())?;
            reject("form", spec.form.is_some())?;
            reject("table", spec.table.is_some() || !spec.entries.is_empty())?;
            if spec.gain.is_none() && spec.loss.is_none() {
                return Err(Error::config("proliferation kernel needs 'gain' and/or 'loss'"));
            }
            let mut valid: BTreeSet<&str> = BTreeSet::new();
            match spec.gain.as_deref() {
                Some("density-saturated") => {
                    valid.insert("p");
                    valid.insert("sigma");
                }
                Some("constant") | Some("activity-gated") => {
                    valid.insert("p");
                }
                Some(other) => {
                    return Err(Error::config(format!(
                        "unknown gain form '{other}'; valid forms: constant, density-saturated, activity-gated"
                    )))
                }
                None => {}
            }
            match spec.loss.as_deref() {
                Some("constant") | Some("activity-gated") => {
                    valid.insert("l");
                }
                Some(other) => {
                    return Err(Error::config(format!(
                        "unknown loss form '{other}'; valid forms: constant, activity-gated"
                    )))
                }
                None => {}
            }
            let valid: Vec<&str> = valid.into_iter().collect();
            let p = Params::check(&spec.params, "proliferation kernel", &valid)?;
            let gain = match spec.gain.as_deref() {
                Some("constant") => Some(GainForm::Constant { p: p.req("p")? }),
                Some("density-saturated") => Some(GainForm::DensitySaturated {
                    p: p.req("p")?,
                    sigma: p.req("sigma")?,
                }),
                Some(_) => Some(GainForm::ActivityGated { p: p.req("p")? }),
                None => None,
            };
            let loss = match spec.loss.as_deref() {
                Some("constant") => Some(LossForm::Constant { l: p.req("l")? }),
                Some(_) => Some(LossForm::ActivityGated { l: p.req("l")? }),
                None => None,
            };
            set.set_proliferation(scale, c, h, gain, loss)
        }
    }
}

fn add_population<T: Scalar>(
    field: &mut DistributionField<T>,
    grid: &PhaseGrid<T>,
    spec: &InitialSpec,
    homogeneous: bool,
) -> Result<()> {
    if spec.subsystem >= field.subsystems() {
        return Err(Error::config(format!(
            "subsystem {} out of range ({} {} subsystems)",
            spec.subsystem,
            field.subsystems(),
            spec.scale
        )));
    }
    if !(spec.density >= 0.0) || !spec.density.is_finite() {
        return Err(Error::config(format!("density {} must be >= 0", spec.density)));
    }
    let act = &grid.activity;
    let du = act.weight();
    let profile: Vec<T> = match spec.activity {
        ActivityProfile::Uniform => vec![T::one(); act.len()],
        ActivityProfile::Gaussian { mean, std } => {
            if !(std > 0.0) {
                return Err(Error::config(format!("activity std {std} must be > 0")));
            }
            let mean = act.normalize(T::of(mean))?;
            let std = T::of(std) / (act.raw_upper - act.raw_lower);
            let g: Vec<T> = act
                .nodes()
                .into_iter()
                .map(|u| (-(u - mean) * (u - mean) / (T::of(2.0) * std * std)).exp())
                .collect();
            let total: T = g.iter().copied().sum::<T>() * du;
            if !(total > T::zero()) {
                return Err(Error::config("activity profile vanishes on every node"));
            }
            g.into_iter().map(|x| x / total).collect()
        }
        ActivityProfile::Node { value } => {
            let k = act.nearest(act.normalize(T::of(value))?);
            (0..act.len())
                .map(|a| if a == k { T::one() / du } else { T::zero() })
                .collect()
        }
    };
    let vel = &grid.velocity;
    let heading = if homogeneous { None } else { spec.heading };
    let by_velocity: Vec<T> = match heading {
        None => vec![T::one() / vel.measure(); vel.len()],
        Some(k) if k < vel.len() => (0..vel.len())
            .map(|v| if v == k { T::one() / vel.weights[v] } else { T::zero() })
            .collect(),
        Some(k) => {
            return Err(Error::config(format!(
                "heading {k} out of range ({} velocity nodes)",
                vel.len()
            )))
        }
    };
    let rho = T::of(spec.density);
    for x in 0..grid.space.n_cells() {
        if !homogeneous {
            if let Some(r) = &spec.region {
                let [cx, cy] = grid.space.center(x);
                let inside = |p: T, [lo, hi]: [f64; 2]| p >= T::of(lo) && p <= T::of(hi);
                if !(inside(cx, r.x) && inside(cy, r.y)) {
                    continue;
                }
            }
        }
        for (v, gv) in by_velocity.iter().enumerate() {
            for (a, ha) in profile.iter().enumerate() {
                let old = field.get(spec.subsystem, x, v, a);
                field.set(spec.subsystem, x, v, a, old + rho * *gv * *ha);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[system]
n = 1
m = 1

[space]
lx = 4.0
ly = 4.0
nx = 4
ny = 4

[integrator]
dt = 0.5
t_end = 1.0

[[kernel]]
type = "rate"
pairing = "fs-fs"
pair = [0, 0]
form = "constant"
params = { alpha0 = 1.0 }

[[kernel]]
type = "transition"
pairing = "fs-fs"
pair = [0, 0]
form = "activity-consensus"
params = { mu = 0.5 }

[[initial]]
scale = "fs"
density = 2.0
activity = { profile = "gaussian", mean = 0.5, std = 0.2 }
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = SystemConfig::from_toml_str(SMALL).unwrap();
        assert_eq!(cfg.origin.kernel_lines, vec![16, 23]);
        let Setup::Spatial(s) = cfg.build::<f64>().unwrap() else {
            panic!("expected spatial")
        };
        let rho = crate::state::density(&s.initial.f, 0, &s.model.fs.grid);
        assert!(rho.iter().all(|r| (r - 2.0).abs() < 1e-14));
        assert_eq!(s.initial.phi.values().iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn manifest_round_trips() {
        let cfg = SystemConfig::from_toml_str(SMALL).unwrap();
        let text = cfg.to_toml().unwrap();
        let again = SystemConfig::from_toml_str(&text).unwrap();
        assert_eq!(again.to_toml().unwrap(), text);
    }

    #[test]
    fn missing_transition_names_the_pair() {
        let text = SMALL
            .replace("form = \"activity-consensus\"", "form = \"identity\"")
            .replace(
                "pairing = \"fs-fs\"\npair = [0, 0]\nform = \"identity\"\nparams = { mu = 0.5 }",
                "pairing = \"fs-fs\"\npair = [0, 0]\nform = \"identity\"",
            );
        let text = text.replacen("type = \"transition\"", "type = \"transition\"\n", 1);
        // drop the transition entry entirely
        let cut = text.find("[[kernel]]\ntype = \"transition\"").unwrap();
        let end = text[cut..].find("[[initial]]").unwrap() + cut;
        let text = format!("{}{}", &text[..cut], &text[end..]);
        let err = SystemConfig::from_toml_str(&text)
            .unwrap()
            .validate()
            .unwrap_err()
            .to_string();
        assert!(err.contains("A(0,0)") && err.contains("alpha(0,0)"), "{err}");
    }

    #[test]
    fn diagnostics_carry_lines() {
        let text = SMALL.replace("params = { mu = 0.5 }", "params = { mu = 0.5, nu = 1.0 }");
        let err = SystemConfig::from_toml_str(&text)
            .unwrap()
            .validate()
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("line 23") && err.contains("'nu'") && err.contains("valid keys: mu"),
            "{err}"
        );
        let err = SystemConfig::from_toml_str("[system]\nn = 1\nbogus = 2\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn strang_and_cfl_are_rejected() {
        let text = SMALL.replace("t_end = 1.0", "t_end = 1.0\nsplitting = \"strang\"");
        assert!(SystemConfig::from_toml_str(&text).unwrap().validate().is_err());
        let text = SMALL.replace("dt = 0.5", "dt = 2.0");
        let err = SystemConfig::from_toml_str(&text).unwrap().validate().unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }), "{err}");
    }

    #[test]
    fn homogeneous_build_ignores_space() {
        let cfg = SystemConfig::from_toml_str(SMALL).unwrap();
        let h = cfg.build_homogeneous::<f64>().unwrap();
        assert_eq!(h.initial.f.cells(), 1);
        assert!((h.initial.f.total_mass(0, &h.model.fs) - 2.0).abs() < 1e-14);
    }
}

//! Run configuration: one TOML file describing the envelope, grids,
//! tolerances, families and outputs of a verification run.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Family, ModelSpec};
use crate::trajectory::{Envelope, FrequencyProfile, DEFAULT_TOLERANCE};
use crate::verify::grid::{Geometry, Grid1D};

/// Margin by which envelopes extend past the time window, covering the
/// time-difference stencils.
pub const ENVELOPE_MARGIN: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSettings {
    pub profile: FrequencyProfile,
    #[serde(default)]
    pub t0: f64,
    /// Phase φ of the normalized initial data ε0 ∝ e^{iφ}.
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl Default for EnvelopeSettings {
    fn default() -> Self {
        EnvelopeSettings {
            profile: FrequencyProfile::Sinusoidal { a: 0.5, b: 0.1, c: 1.0 },
            t0: 0.0,
            phase: 0.0,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    pub t_min: f64,
    pub t_max: f64,
    pub nt: usize,
    /// Propagation runs over [t_min, propagation_t_max].
    pub propagation_t_max: f64,
    pub propagation_nt: usize,
    pub full_line: SpaceGrid,
    pub half_line: SpaceGrid,
}

impl Default for GridSettings {
    fn default() -> Self {
        let f = Grid1D::default_full_line();
        let h = Grid1D::default_half_line();
        GridSettings {
            t_min: f.t_min,
            t_max: f.t_max,
            nt: f.nt,
            propagation_t_max: 1.0,
            propagation_nt: 1001,
            full_line: SpaceGrid {
                x_min: f.x_min,
                x_max: f.x_max,
                nx: f.nx,
            },
            half_line: SpaceGrid {
                x_min: h.x_min,
                x_max: h.x_max,
                nx: h.nx,
            },
        }
    }
}

impl GridSettings {
    /// Space-time grid for a family's geometry.
    pub fn grid(&self, geometry: Geometry) -> Grid1D {
        let s = match geometry {
            Geometry::FullLine => self.full_line,
            Geometry::HalfLine => self.half_line,
        };
        Grid1D {
            x_min: s.x_min,
            x_max: s.x_max,
            nx: s.nx,
            t_min: self.t_min,
            t_max: self.t_max,
            nt: self.nt,
            geometry,
        }
    }

    pub fn propagation_grid(&self, geometry: Geometry) -> Grid1D {
        self.grid(geometry)
            .with_time(self.t_min, self.propagation_t_max, self.propagation_nt)
    }

    pub fn validate(&self) -> Result<()> {
        for g in [Geometry::FullLine, Geometry::HalfLine] {
            self.grid(g).validate().map_err(|e| cite("grid", e))?;
            self.propagation_grid(g).validate().map_err(|e| cite("grid", e))?;
        }
        if self.propagation_t_max > self.t_max {
            return Err(Error::Config(format!(
                "grid.propagation_t_max = {} lies beyond grid.t_max = {}",
                self.propagation_t_max, self.t_max
            )));
        }
        Ok(())
    }
}

/// Pass thresholds; every check compares one number against one of these.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub residual: f64,
    pub kernel: f64,
    pub scaling: f64,
    pub reality: f64,
    pub intertwining: f64,
    /// Lower bound the A + 1 control must exceed.
    pub intertwining_control: f64,
    pub l1_agreement: f64,
    pub potential: f64,
    pub imaginary_potential: f64,
    pub propagation: f64,
    /// Lower bound the wrong-potential control must exceed.
    pub propagation_control: f64,
    pub norm_drift: f64,
    pub sponge: f64,
    pub alpha_variance: f64,
    pub integral_cauchy: f64,
    pub order_window: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: 1e-5,
            kernel: 1e-12,
            scaling: 1e-12,
            reality: 1e-5,
            intertwining: 1e-4,
            intertwining_control: 0.5,
            l1_agreement: 1e-6,
            potential: 1e-6,
            imaginary_potential: 1e-8,
            propagation: 1e-4,
            propagation_control: 1e-1,
            norm_drift: 1e-10,
            sponge: 1e-8,
            alpha_variance: 1e-8,
            integral_cauchy: 1e-6,
            order_window: 0.5,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("residual", self.residual),
            ("kernel", self.kernel),
            ("scaling", self.scaling),
            ("reality", self.reality),
            ("intertwining", self.intertwining),
            ("intertwining_control", self.intertwining_control),
            ("l1_agreement", self.l1_agreement),
            ("potential", self.potential),
            ("imaginary_potential", self.imaginary_potential),
            ("propagation", self.propagation),
            ("propagation_control", self.propagation_control),
            ("norm_drift", self.norm_drift),
            ("sponge", self.sponge),
            ("alpha_variance", self.alpha_variance),
            ("integral_cauchy", self.integral_cauchy),
            ("order_window", self.order_window),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tolerances.{name} must be positive and finite (got {v})")));
            }
        }
        Ok(())
    }
}

/// Which optional parts of the suite run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSettings {
    /// Run the negative controls, whose pass condition is inverted.
    pub negative_controls: bool,
    /// Run the grid-refinement order study.
    pub refinement: bool,
    /// Every n-th time row enters residual gates.
    pub residual_time_stride: usize,
    /// Every n-th time row and m-th node enter the candidate-reading table.
    pub candidate_time_stride: usize,
    pub candidate_space_stride: usize,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            negative_controls: false,
            refinement: true,
            residual_time_stride: 50,
            candidate_time_stride: 100,
            candidate_space_stride: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSettings {
    /// Directory for reports and CSV grids (overridden by `--out`).
    pub dir: String,
    pub report: String,
    /// Nodes and time rows of exported potential grids.
    pub sample_nx: usize,
    pub sample_nt: usize,
    /// Time rows of exported propagation grids.
    pub propagation_rows: usize,
}

impl Default for OutputSettings {
    fn default() -> Self {
        OutputSettings {
            dir: "out".into(),
            report: "report.json".into(),
            sample_nx: 401,
            sample_nt: 21,
            propagation_rows: 11,
        }
    }
}

/// One family of the run, optionally with its own envelope phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyEntry {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
}

impl FamilyEntry {
    /// The entry with one parameter replaced, as given on a command line
    /// (`C=0.5`, `lambda=[0.3, 0.4]`). Keys match case-insensitively.
    pub fn with_param(&self, key: &str, value: &str) -> Result<Self> {
        let mut obj = match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => return Err(Error::Config("family entry is not a table".into())),
        };
        let name = obj
            .keys()
            .find(|k| k.eq_ignore_ascii_case(key))
            .cloned()
            .unwrap_or_else(|| key.to_ascii_lowercase());
        if name == "kind" {
            return Err(Error::Config("--param cannot change the family kind".into()));
        }
        let parsed: toml::Table = toml::from_str(&format!("v = {value}"))
            .map_err(|_| Error::Config(format!("--param {key}={value}: value is not a number or array")))?;
        let v = serde_json::to_value(&parsed["v"]).map_err(|e| Error::Config(e.to_string()))?;
        obj.insert(name, v);
        serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| Error::Config(format!("--param {key}={value}: {e}")))
    }

    pub fn new(family: Family) -> Self {
        FamilyEntry { family, phase: None }
    }

    pub fn with_phase(family: Family, phase: f64) -> Self {
        FamilyEntry {
            family,
            phase: Some(phase),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub envelope: EnvelopeSettings,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, rename = "family")]
    pub families: Vec<FamilyEntry>,
    #[serde(default)]
    pub checks: CheckSettings,
    #[serde(default)]
    pub output: OutputSettings,
}

/// The default catalog sweep. The phases keep γ = Re ε (orbit 1) and
/// δ = 2 Im ε (orbit 2) away from zero on the time window.
pub fn default_families() -> Vec<FamilyEntry> {
    vec![
        FamilyEntry::with_phase(Family::Osc1 { mu: 0.5, nu: 1.0 }, -1.09),
        FamilyEntry::with_phase(
            Family::Osc2 {
                lambda: Complex64::new(0.3, 0.4),
                airy_c1: 1.0,
                airy_c2: 0.0,
            },
            0.48,
        ),
        FamilyEntry::new(Family::Osc3Discrete { n: 0 }),
        FamilyEntry::new(Family::Osc3Discrete { n: 1 }),
        FamilyEntry::new(Family::Osc3Discrete { n: 2 }),
        FamilyEntry::new(Family::OscErf { c: 1.5 }),
        FamilyEntry::new(Family::OscErf { c: -2.0 }),
        FamilyEntry::new(Family::SingBroken { g: 2.0, p: 0 }),
        FamilyEntry::new(Family::SingBroken { g: 2.0, p: 1 }),
        FamilyEntry::new(Family::SingExact { g: 2.0, p: 0 }),
    ]
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            envelope: EnvelopeSettings::default(),
            grid: GridSettings::default(),
            tolerances: Tolerances::default(),
            families: default_families(),
            checks: CheckSettings::default(),
            output: OutputSettings::default(),
        }
    }
}

fn cite(field: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{field}: {m}")),
        Error::InvalidGrid(m) => Error::InvalidGrid(format!("{field}: {m}")),
        Error::InvalidModel(m) => Error::InvalidModel(format!("{field}: {m}")),
        other => Error::Config(format!("{field}: {other}")),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| cite(&path.display().to_string(), e))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Envelope for one family entry, covering the time window plus margin.
    pub fn envelope_for(&self, entry: &FamilyEntry) -> Result<Envelope> {
        let e = &self.envelope;
        let lo = (self.grid.t_min - ENVELOPE_MARGIN).min(e.t0);
        let hi = (self.grid.t_max + ENVELOPE_MARGIN).max(e.t0);
        Envelope::normalized(e.profile.clone(), e.t0, entry.phase.unwrap_or(e.phase), e.tolerance, lo, hi)
    }

    /// Validated model for one family entry; refuses windows with caustics.
    pub fn model(&self, entry: &FamilyEntry) -> Result<ModelSpec> {
        let env = self.envelope_for(entry)?;
        let spec = ModelSpec::new(entry.family.clone(), std::sync::Arc::new(env))?;
        spec.check_window(self.grid.t_min - ENVELOPE_MARGIN / 2.0, self.grid.t_max + ENVELOPE_MARGIN / 2.0)?;
        Ok(spec)
    }

    /// Check every constraint before anything runs.
    pub fn validate(&self) -> Result<()> {
        self.envelope.profile.validate().map_err(|e| cite("envelope.profile", e))?;
        if !(self.envelope.tolerance > 0.0 && self.envelope.tolerance < 1e-3) {
            return Err(Error::Config(format!(
                "envelope.tolerance must lie in (0, 1e-3) (got {})",
                self.envelope.tolerance
            )));
        }
        self.grid.validate()?;
        self.tolerances.validate()?;
        let c = &self.checks;
        if c.residual_time_stride == 0 || c.candidate_time_stride == 0 || c.candidate_space_stride == 0 {
            return Err(Error::Config("checks: strides must be at least 1".into()));
        }
        let o = &self.output;
        if o.sample_nx < 9 || o.sample_nt < 2 || o.propagation_rows < 2 {
            return Err(Error::Config(
                "output: sample_nx must be at least 9, sample_nt and propagation_rows at least 2".into(),
            ));
        }
        if self.families.is_empty() {
            return Err(Error::Config("at least one [[family]] entry is required".into()));
        }
        for (i, entry) in self.families.iter().enumerate() {
            let field = format!("family[{i}] ({})", entry.family.name());
            self.model(entry).map_err(|e| cite(&field, e))?;
        }
        Ok(())
    }
}

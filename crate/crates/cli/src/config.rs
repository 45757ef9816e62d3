//! Run configuration: JSON with a fixed schema, unknown keys rejected.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use transmedia::coordmaps::{CoordinateMap, Point3};
use transmedia::fields::{Grid, PhysicalConstants};

/// Overrides the configured output directory when set.
pub const OUT_DIR_ENV: &str = "TRANSMEDIA_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub map: MapConfig,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub constants: Units,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceConfig>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub modes: ModesConfig,
    #[serde(default)]
    pub solve: SolveConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    Identity,
    CylindricalCloak {
        #[serde(rename = "R1")]
        r1: f64,
        #[serde(rename = "R2")]
        r2: f64,
    },
    LensSlab {
        b: f64,
    },
    /// `x' = s(|x|²) x`, `s(u) = Σ c_n uⁿ`.
    RadialPolynomial {
        coeffs: Vec<f64>,
    },
}

impl MapConfig {
    pub fn build(&self) -> transmedia::Result<CoordinateMap> {
        match self {
            MapConfig::Identity => Ok(CoordinateMap::Identity),
            MapConfig::CylindricalCloak { r1, r2 } => CoordinateMap::cylindrical_cloak(*r1, *r2),
            MapConfig::LensSlab { b } => CoordinateMap::lens_slab(*b),
            MapConfig::RadialPolynomial { coeffs } => CoordinateMap::radial_polynomial(coeffs.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    pub eps: f64,
    pub mu: f64,
}

impl Default for Background {
    fn default() -> Self {
        Self { eps: 1.0, mu: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    #[default]
    Natural,
    Si,
}

impl Units {
    pub fn constants(self) -> PhysicalConstants {
        match self {
            Units::Natural => PhysicalConstants::natural(),
            Units::Si => PhysicalConstants::si(),
        }
    }
}

/// Cell-centred sample box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub counts: [usize; 3],
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lo: [-3.0, -3.0, 0.0],
            hi: [3.0, 3.0, 0.0],
            counts: [241, 241, 1],
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> transmedia::Result<Grid> {
        Grid::cell_centered(Point3::from(self.lo), Point3::from(self.hi), self.counts)
    }

    /// Sets every axis with more than one sample to `n` samples.
    pub fn resample(&mut self, n: usize) {
        for c in &mut self.counts {
            if *c > 1 {
                *c = n;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    /// Scalar `e^{ikR}/(4πR)` centred at `position` (primed coordinates).
    Spherical { position: [f64; 3], k: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative residual the FDFD solve must reach.
    pub solver: f64,
    /// Quadrature tolerance for single-mode norms.
    pub quad_tol: f64,
    /// Allowed deviation of the Gram matrices from `I` and `0`.
    pub gram_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solver: 1e-8,
            quad_tol: 1e-8,
            gram_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Wave vector of the transported plane wave used for residual checks.
    pub k: [f64; 3],
    /// Real polarization of that wave; must be transverse to `k`.
    pub pol: [f64; 3],
    /// Largest accepted relative Maxwell residual.
    pub residual_tol: f64,
    /// Points closer than this to a map interface are left out of the
    /// residual norm.
    pub interface_margin: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            k: [2.0 * std::f64::consts::PI, 0.0, 0.0],
            pol: [0.0, 0.6, 0.8],
            residual_tol: 0.05,
            interface_margin: 0.1,
        }
    }
}

/// One periodic-box mode: `n` wavelengths per side, real polarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxModeConfig {
    pub n: [i32; 3],
    pub pol: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModesConfig {
    /// Box side lengths.
    pub box_size: [f64; 3],
    pub counts: [usize; 3],
    pub modes: Vec<BoxModeConfig>,
    /// `(re, im)` amplitude per mode for the synthesize/extract round trip.
    pub coefficients: Vec<[f64; 2]>,
}

impl Default for ModesConfig {
    fn default() -> Self {
        let m = |n: [i32; 3], pol: [f64; 3]| BoxModeConfig { n, pol };
        Self {
            box_size: [2.0, 2.0, 2.0],
            counts: [8, 8, 8],
            modes: vec![
                m([1, 0, 0], [0.0, 1.0, 0.0]),
                m([-1, 0, 0], [0.0, 1.0, 0.0]),
                m([0, 1, 0], [0.0, 0.0, 1.0]),
                m([0, -1, 0], [1.0, 0.0, 0.0]),
                m([0, 0, 1], [1.0, 0.0, 0.0]),
                m([0, 0, -1], [0.0, 1.0, 0.0]),
                m([1, 1, 0], [0.0, 0.0, 1.0]),
                m([0, 1, 1], [1.0, 0.0, 0.0]),
            ],
            coefficients: vec![[2.0, 0.0], [0.0, 3.0]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    #[default]
    Auto,
    Direct,
    Bicgstab,
    Gmres,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Vacuum wavelength of the incident plane wave.
    pub wavelength: f64,
    /// Grid cells per vacuum wavelength.
    pub cells_per_wavelength: f64,
    /// Physical box is `[−half_width, half_width]²`.
    pub half_width: f64,
    /// Total-field box is `[−tf_half_width, tf_half_width]²`.
    pub tf_half_width: f64,
    pub direction: [f64; 2],
    pub pml_cells: usize,
    pub pml_reflection: f64,
    pub solver: SolverChoice,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            wavelength: 2.0,
            cells_per_wavelength: 40.0,
            half_width: 2.0,
            tf_half_width: 1.5,
            direction: [1.0, 0.0],
            pml_cells: 10,
            pml_reflection: 1e-6,
            solver: SolverChoice::Auto,
            max_iter: 20_000,
            restart: 300,
        }
    }
}

/// Parse failure with the offending key path and source position.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() || self.path == "." {
            "<root>"
        } else {
            &self.path
        };
        write!(
            f,
            "config error at `{path}` (line {}, column {}): {}",
            self.line, self.column, self.message
        )
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError {
                path,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        cfg.check().map_err(|(path, message)| ConfigError {
            path: path.to_string(),
            line: 0,
            column: 0,
            message,
        })?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    // Semantic checks that serde cannot express.
    fn check(&self) -> Result<(), (&'static str, String)> {
        self.map.build().map_err(|e| ("map", e.to_string()))?;
        let b = self.background;
        if !(b.eps.is_finite() && b.mu.is_finite() && b.eps != 0.0 && b.mu != 0.0) {
            return Err(("background", "eps and mu must be finite and non-zero".into()));
        }
        self.grid.build().map_err(|e| ("grid", e.to_string()))?;
        if let Some(SourceConfig::Spherical { k, position }) = &self.source {
            if !(*k > 0.0 && k.is_finite()) || position.iter().any(|v| !v.is_finite()) {
                return Err(("source", "k must be > 0 and position finite".into()));
            }
        }
        let t = self.tolerances;
        for (name, v) in [
            ("tolerances.solver", t.solver),
            ("tolerances.quad_tol", t.quad_tol),
            ("tolerances.gram_tol", t.gram_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err((name, format!("must be > 0, got {v}")));
            }
        }
        let m = &self.modes;
        if m.modes.is_empty() {
            return Err(("modes.modes", "at least one mode is required".into()));
        }
        if m.coefficients.len() > m.modes.len() {
            return Err(("modes.coefficients", "more coefficients than modes".into()));
        }
        let s = &self.solve;
        if !(s.wavelength > 0.0 && s.cells_per_wavelength > 0.0 && s.half_width > 0.0) {
            return Err(("solve", "wavelength, cells_per_wavelength and half_width must be > 0".into()));
        }
        if !(s.tf_half_width > 0.0 && s.tf_half_width < s.half_width) {
            return Err(("solve.tf_half_width", "must lie in (0, half_width)".into()));
        }
        Ok(())
    }
}

//! Run configuration: a sectioned `key = value` file.
//!
//! ```ini
//! [run]
//! seed = 7
//!
//! [geometry]
//! kind = disk          ; disk | square
//! size = 1.0           ; radius or side length
//!
//! [basis]
//! n_modes = 24
//!
//! [density]
//! profile = power_law  ; none | power_law | gaussian | constant
//! alpha = 1.0
//! eta = 0.0
//! delta = 0.01
//! truncate = false
//! boundary_levels = 12
//!
//! [initial]
//! preset = random_band ; zero | single_mode | random_band | file
//! mu_min = 0
//! mu_max = 60
//! w_norm = 1.0
//! smooth_eps = 0.01
//!
//! [model]
//! eps = 0.01
//!
//! [integrator]
//! scheme = if_rk4
//! dt = 1e-3
//! t_end = 1.0
//! sample_every = 10
//!
//! [monitors]
//! p_list = 2, 4, 8, 16
//! linf = true
//! weak_residual = true
//!
//! [output]
//! dir = out
//! snapshots = true
//! tensor_dump = false
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ini::Ini;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::{smooth_initial_field, DensityProfile, DensitySpec};
use crate::dynamics::{IntegratorConfig, Scheme, SpectralField};
use crate::error::{HmError, Result};
use crate::geometry::{BasisSet, Geometry};
use crate::monitors::MonitorSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    /// `None` means `n₀ ≡ 1`, i.e. no density coupling at all.
    pub spec: Option<DensitySpec>,
    pub delta: f64,
    pub truncate: bool,
    /// Boundary grading levels of the grid used to project `log n₀`.
    pub boundary_levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum InitialPreset {
    Zero,
    /// 1-based mode index.
    SingleMode {
        mode: usize,
        amplitude: f64,
    },
    RandomBand {
        mu_min: f64,
        mu_max: f64,
        w_norm: f64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    pub preset: InitialPreset,
    pub smooth_eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshots: bool,
    pub tensor_dump: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub n_modes: usize,
    pub density: DensityConfig,
    pub initial: InitialConfig,
    pub eps: f64,
    pub integrator: IntegratorConfig,
    pub monitors: MonitorSpec,
    pub output: OutputConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: Geometry::unit_disk(),
            n_modes: 24,
            density: DensityConfig {
                spec: None,
                delta: 0.0,
                truncate: false,
                boundary_levels: 0,
            },
            initial: InitialConfig {
                preset: InitialPreset::Zero,
                smooth_eps: None,
            },
            eps: 0.0,
            integrator: IntegratorConfig {
                scheme: Scheme::IfRk4,
                dt: 1e-3,
                t_end: 1.0,
                sample_every: 10,
            },
            monitors: MonitorSpec::default(),
            output: OutputConfig {
                dir: PathBuf::from("out"),
                snapshots: true,
                tensor_dump: false,
            },
            seed: 0,
        }
    }
}

/// Typed access to one INI section that tracks which keys were consumed.
struct Section<'a> {
    name: &'static str,
    props: Option<&'a ini::Properties>,
    used: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn new(ini: &'a Ini, name: &'static str) -> Self {
        Section {
            name,
            props: ini.section(Some(name)),
            used: BTreeSet::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<&'a str> {
        self.used.insert(key.to_string());
        self.props.and_then(|p| p.get(key)).map(str::trim)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        let name = self.name;
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| HmError::Config(format!("[{name}] {key} = '{v}' is not valid"))),
        }
    }

    fn get<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let name = self.name;
        self.parse(key)?
            .ok_or_else(|| HmError::Config(format!("[{name}] {key} is required")))
    }

    fn finish(self) -> Result<()> {
        if let Some(p) = self.props {
            for (k, _) in p.iter() {
                if !self.used.contains(k) {
                    return Err(HmError::Config(format!("unknown key '{k}' in [{}]", self.name)));
                }
            }
        }
        Ok(())
    }
}

const SECTIONS: [&str; 9] = [
    "run",
    "geometry",
    "basis",
    "density",
    "initial",
    "model",
    "integrator",
    "monitors",
    "output",
];

impl RunConfig {
    /// Loads and validates a config file; relative paths inside are
    /// resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| HmError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_str_in(&text, base)
    }

    pub fn from_str_in(text: &str, base: &Path) -> Result<RunConfig> {
        let ini = Ini::load_from_str(text).map_err(|e| HmError::Config(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for (name, props) in ini.iter() {
            match name {
                Some(n) if SECTIONS.contains(&n) => {
                    if !seen.insert(n) {
                        return Err(HmError::Config(format!("section [{n}] appears more than once")));
                    }
                }
                None if props.is_empty() => {}
                other => {
                    return Err(HmError::Config(format!("unknown section [{}]", other.unwrap_or(""))));
                }
            }
        }
        let d = RunConfig::default();

        let mut s = Section::new(&ini, "run");
        let seed = s.get("seed", d.seed)?;
        s.finish()?;

        let mut s = Section::new(&ini, "geometry");
        let kind: String = s.get("kind", "disk".to_string())?;
        let size: f64 = s.get("size", 1.0)?;
        s.finish()?;
        let geometry = match kind.as_str() {
            "disk" => Geometry::disk(size),
            "square" => Geometry::square(size),
            other => Err(HmError::Config(format!("unknown geometry '{other}'"))),
        }
        .map_err(|e| HmError::Config(e.to_string()))?;

        let mut s = Section::new(&ini, "basis");
        let n_modes = s.get("n_modes", d.n_modes)?;
        s.finish()?;

        let mut s = Section::new(&ini, "density");
        let profile: String = s.get("profile", "none".to_string())?;
        let eta: f64 = s.get("eta", 0.0)?;
        let profile = match profile.as_str() {
            "none" => None,
            "power_law" => Some(DensityProfile::PowerLaw {
                alpha: s.get("alpha", 1.0)?,
            }),
            "gaussian" => Some(DensityProfile::Gaussian {
                sigma: s.require("sigma")?,
            }),
            "constant" => Some(DensityProfile::Constant { c: s.get("c", 1.0)? }),
            other => return Err(HmError::Config(format!("unknown density profile '{other}'"))),
        };
        let spec = profile
            .map(|p| DensitySpec::new(p, eta))
            .transpose()
            .map_err(|e| HmError::Config(e.to_string()))?;
        let density = DensityConfig {
            spec,
            delta: s.get("delta", 0.0)?,
            truncate: s.get("truncate", false)?,
            boundary_levels: s.get(
                "boundary_levels",
                if spec.is_some_and(|s| s.is_singular()) { 12 } else { 0 },
            )?,
        };
        // unused keys for the chosen profile are tolerated
        for k in ["alpha", "sigma", "c"] {
            s.raw(k);
        }
        s.finish()?;

        let mut s = Section::new(&ini, "initial");
        let preset: String = s.get("preset", "zero".to_string())?;
        let preset = match preset.as_str() {
            "zero" => InitialPreset::Zero,
            "single_mode" => InitialPreset::SingleMode {
                mode: s.get("mode", 1)?,
                amplitude: s.get("amplitude", 1.0)?,
            },
            "random_band" => InitialPreset::RandomBand {
                mu_min: s.get("mu_min", 0.0)?,
                mu_max: s.require("mu_max")?,
                w_norm: s.get("w_norm", 1.0)?,
            },
            "file" => {
                let p: String = s.require("file")?;
                InitialPreset::File { path: base.join(p) }
            }
            other => return Err(HmError::Config(format!("unknown initial preset '{other}'"))),
        };
        for k in ["mode", "amplitude", "mu_min", "mu_max", "w_norm", "file"] {
            s.raw(k);
        }
        let initial = InitialConfig {
            preset,
            smooth_eps: s.parse("smooth_eps")?,
        };
        s.finish()?;

        let mut s = Section::new(&ini, "model");
        let eps = s.get("eps", d.eps)?;
        s.finish()?;

        let mut s = Section::new(&ini, "integrator");
        let scheme: String = s.get("scheme", "if_rk4".to_string())?;
        let integrator = IntegratorConfig {
            scheme: scheme.parse()?,
            dt: s.get("dt", d.integrator.dt)?,
            t_end: s.get("t_end", d.integrator.t_end)?,
            sample_every: s.get("sample_every", d.integrator.sample_every)?,
        };
        s.finish()?;

        let mut s = Section::new(&ini, "monitors");
        let p_list = match s.raw("p_list") {
            None => d.monitors.p_list.clone(),
            Some(v) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| HmError::Config(format!("[monitors] p_list entry '{x}' is not a number")))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let monitors = MonitorSpec {
            p_list,
            track_linf: s.get("linf", true)?,
            track_weak_residual: s.get("weak_residual", true)?,
            weak_test_modes: None,
        };
        s.finish()?;

        let mut s = Section::new(&ini, "output");
        let output = OutputConfig {
            dir: base.join(s.get("dir", "out".to_string())?),
            snapshots: s.get("snapshots", true)?,
            tensor_dump: s.get("tensor_dump", false)?,
        };
        s.finish()?;

        let cfg = RunConfig {
            geometry,
            n_modes,
            density,
            initial,
            eps,
            integrator,
            monitors,
            output,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every cross-field requirement before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(HmError::Config("n_modes must be at least 1".into()));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(HmError::Config(format!("eps must be non-negative, got {}", self.eps)));
        }
        let dc = &self.density;
        if !(dc.delta >= 0.0 && dc.delta.is_finite()) {
            return Err(HmError::Config(format!("delta must be non-negative, got {}", dc.delta)));
        }
        if let Some(spec) = dc.spec {
            if spec.eta == 0.0 && dc.delta == 0.0 {
                return Err(HmError::Config(
                    "eta = 0 requires delta > 0: a density that may vanish on the boundary must be \
                     regularised before it enters the coupling tensors"
                        .into(),
                ));
            }
        }
        if dc.truncate && dc.delta == 0.0 {
            return Err(HmError::Config("truncate = true requires delta > 0".into()));
        }
        self.integrator.validate().map_err(|e| HmError::Config(e.to_string()))?;
        self.monitors.validate()?;
        match &self.initial.preset {
            InitialPreset::SingleMode { mode, amplitude } => {
                if *mode == 0 || *mode > self.n_modes {
                    return Err(HmError::Config(format!(
                        "single_mode index {mode} outside 1..={}",
                        self.n_modes
                    )));
                }
                if !amplitude.is_finite() {
                    return Err(HmError::Config("amplitude must be finite".into()));
                }
            }
            InitialPreset::RandomBand { mu_min, mu_max, w_norm } => {
                if !(mu_min <= mu_max) || !(*w_norm >= 0.0) {
                    return Err(HmError::Config(
                        "random_band needs mu_min <= mu_max and w_norm >= 0".into(),
                    ));
                }
            }
            InitialPreset::File { path } => {
                if !path.is_file() {
                    return Err(HmError::Config(format!(
                        "initial data file {} does not exist",
                        path.display()
                    )));
                }
            }
            InitialPreset::Zero => {}
        }
        if let Some(e) = self.initial.smooth_eps {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(HmError::Config(format!("smooth_eps must be non-negative, got {e}")));
            }
        }
        Ok(())
    }

    /// Builds the initial state on `basis` from the configured preset.
    pub fn initial_state(&self, basis: &Arc<BasisSet>) -> Result<SpectralField> {
        let n = basis.len();
        let coeffs = match &self.initial.preset {
            InitialPreset::Zero => vec![0.0; n],
            InitialPreset::SingleMode { mode, amplitude } => {
                if *mode == 0 || *mode > n {
                    return Err(HmError::Config(format!("single_mode index {mode} outside 1..={n}")));
                }
                let mut c = vec![0.0; n];
                c[mode - 1] = *amplitude;
                c
            }
            InitialPreset::RandomBand { mu_min, mu_max, w_norm } => {
                random_band(basis, *mu_min, *mu_max, *w_norm, self.seed)?
            }
            InitialPreset::File { path } => read_coefficients(path, basis)?,
        };
        let state = SpectralField::new(basis.clone(), coeffs)?;
        match self.initial.smooth_eps {
            Some(e) => smooth_initial_field(&state, e),
            None => Ok(state),
        }
    }
}

/// Gaussian coefficients on the modes with `μ ∈ [mu_min, mu_max]`, scaled
/// to the requested W-norm.
pub fn random_band(basis: &BasisSet, mu_min: f64, mu_max: f64, w_norm: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c: Vec<f64> = basis
        .modes
        .iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if m.mu >= mu_min && m.mu <= mu_max {
                z
            } else {
                0.0
            }
        })
        .collect();
    let w2: f64 = c
        .iter()
        .zip(&basis.modes)
        .map(|(c, m)| ((1.0 + m.mu) + (1.0 + m.mu).powi(2)) * c * c)
        .sum();
    if w2 == 0.0 {
        if w_norm == 0.0 {
            return Ok(c);
        }
        return Err(HmError::Config(format!("no modes with mu in [{mu_min}, {mu_max}]")));
    }
    let s = w_norm / w2.sqrt();
    for v in &mut c {
        *v *= s;
    }
    Ok(c)
}

/// Coefficients from an `HMS1` snapshot or a plain text list.
fn read_coefficients(path: &Path, basis: &Arc<BasisSet>) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| HmError::io(path, e))?;
    if bytes.starts_with(b"HMS1") {
        return Ok(SpectralField::read_snapshot(path, basis.clone())?.coeffs);
    }
    let text = String::from_utf8(bytes).map_err(|_| HmError::Format {
        path: path.to_path_buf(),
        reason: "neither an HMS1 snapshot nor text".into(),
    })?;
    let c: Vec<f64> = text
        .split(|ch: char| ch.is_whitespace() || ch == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| HmError::Format {
                path: path.to_path_buf(),
                reason: format!("'{s}' is not a number"),
            })
        })
        .collect::<Result<_>>()?;
    if c.len() != basis.len() {
        return Err(HmError::Format {
            path: path.to_path_buf(),
            reason: format!("{} coefficients for {} modes", c.len(), basis.len()),
        });
    }
    Ok(c)
}

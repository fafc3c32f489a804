//! Run configuration, read from a JSON file and adjusted by command-line flags.

use std::path::{Path, PathBuf};

use achmetric::model::{random_torsion, ModelFile};
use achmetric::{JFamily, PhmModel, SolverOptions};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Solve,
    SweepJ,
    RescaleCheck,
    FlatCheck,
    Profile,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; when present it must agree with the subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub rescale: RescaleConfig,
    #[serde(default)]
    pub flat_check: FlatCheckConfig,
    #[serde(default)]
    pub profile: ProfileConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Complex matrices are row-major lists of `[re, im]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    FlatHeisenberg {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h: Option<Vec<[f64; 2]>>,
    },
    TorsionDeformed {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h: Option<Vec<[f64; 2]>>,
        a: Vec<[f64; 2]>,
    },
    Tanno {
        eps: f64,
    },
    Sl2Affine {
        n: usize,
        kappa: f64,
    },
    RandomTorsion {
        n: usize,
        norm: f64,
        #[serde(default)]
        seed: u64,
    },
    /// A model file; relative paths are resolved against the config file.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Rotation,
    Degenerating,
    Exponential { a: Vec<[f64; 2]>, b: Vec<[f64; 2]> },
    Linear { p0: Vec<[f64; 2]>, p1: Vec<[f64; 2]>, q0: Vec<[f64; 2]>, q1: Vec<[f64; 2]> },
}

/// Either explicit values or `points` equally spaced values on `[start, stop]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub family: FamilySpec,
    pub t: Grid,
    /// Allowed `max |L(t) − L(t₀)| / (1 + |L(t₀)|)`.
    #[serde(default = "default_sweep_tol")]
    pub tol: f64,
}

fn default_sweep_tol() -> f64 {
    1e-8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RescaleConfig {
    pub upsilon: Vec<f64>,
    pub tol: f64,
}

impl Default for RescaleConfig {
    fn default() -> Self {
        RescaleConfig { upsilon: vec![-0.3, 0.2, 0.5], tol: 1e-8 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatCheckConfig {
    pub n: Vec<usize>,
    pub tol: f64,
}

impl Default for FlatCheckConfig {
    fn default() -> Self {
        FlatCheckConfig { n: vec![1, 2, 3], tol: 1e-11 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub eps: Vec<f64>,
    pub eps0: f64,
    /// Allowed `|quadrature − series| / (1 + |series|)`.
    pub tol: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { eps: vec![-1e-2, -1e-3], eps0: -0.1, tol: 1e-6 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative to the working directory; stdout when absent.
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Values from the command line that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub tol: Option<f64>,
    pub trunc_extra: Option<i32>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        if let Some(ModelSpec::File { path: p }) = &mut cfg.model {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.out.is_some() {
            self.output.path = o.out.clone();
        }
        if o.format.is_some() {
            self.output.format = o.format;
        }
        if let Some(t) = o.tol {
            self.solver.tol = t;
        }
        if let Some(t) = o.trunc_extra {
            self.solver.trunc_extra = t;
        }
        if let (Some(s), Some(ModelSpec::RandomTorsion { seed, .. })) = (o.seed, &mut self.model) {
            *seed = s;
        }
    }

    /// Schema-level checks that serde cannot express.
    pub fn validate(&self, scenario: Scenario) -> Result<(), Failure> {
        if let Some(s) = self.scenario {
            if s != scenario {
                return Err(Failure::config(format!("config is for scenario {s:?}, command is {scenario:?}")));
            }
        }
        let o = &self.solver;
        if !(o.tol.is_finite() && o.tol > 0.0) {
            return Err(Failure::config(format!("solver.tol must be positive, got {}", o.tol)));
        }
        if o.trunc_extra < 3 {
            return Err(Failure::config(format!("solver.trunc_extra must be at least 3, got {}", o.trunc_extra)));
        }
        if scenario != Scenario::FlatCheck && self.model.is_none() {
            return Err(Failure::config("missing field `model`"));
        }
        let fmt = self.format(scenario);
        if fmt == Format::Csv && !matches!(scenario, Scenario::SweepJ | Scenario::Profile) {
            return Err(Failure::config(format!("csv output is only available for sweep-j and profile, not {scenario:?}")));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Failure::config(format!("{name} must be positive, got {v}")))
            }
        };
        match scenario {
            Scenario::SweepJ => {
                let sweep = self.sweep.as_ref().ok_or_else(|| Failure::config("missing field `sweep`"))?;
                positive("sweep.tol", sweep.tol)?;
                finite_grid("sweep.t", &sweep.t.values())?;
            }
            Scenario::RescaleCheck => {
                positive("rescale.tol", self.rescale.tol)?;
                finite_grid("rescale.upsilon", &self.rescale.upsilon)?;
            }
            Scenario::FlatCheck => {
                positive("flat_check.tol", self.flat_check.tol)?;
                if self.flat_check.n.is_empty() || self.flat_check.n.contains(&0) {
                    return Err(Failure::config("flat_check.n must be a nonempty list of positive dimensions"));
                }
            }
            Scenario::Profile => {
                positive("profile.tol", self.profile.tol)?;
                finite_grid("profile.eps", &self.profile.eps)?;
                finite_grid("profile.eps0", &[self.profile.eps0])?;
            }
            Scenario::Solve => {}
        }
        Ok(())
    }

    pub fn format(&self, scenario: Scenario) -> Format {
        self.output.format.unwrap_or(if scenario == Scenario::SweepJ { Format::Csv } else { Format::Json })
    }
}

fn finite_grid(name: &str, v: &[f64]) -> Result<(), Failure> {
    if v.is_empty() {
        return Err(Failure::config(format!("{name} must be nonempty")));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Failure::config(format!("{name} contains non-finite value {x}")));
    }
    Ok(())
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Range { start, stop, points } => match points {
                0 => Vec::new(),
                1 => vec![*start],
                p => (0..*p).map(|i| start + (stop - start) * i as f64 / (*p - 1) as f64).collect(),
            },
        }
    }
}

fn matrix(name: &str, n: usize, entries: &[[f64; 2]]) -> Result<DMatrix<Complex64>, Failure> {
    if entries.len() != n * n {
        return Err(Failure::config(format!("{name} needs {} entries, got {}", n * n, entries.len())));
    }
    Ok(DMatrix::from_row_iterator(n, n, entries.iter().map(|[re, im]| Complex64::new(*re, *im))))
}

fn levi(n: usize, h: &Option<Vec<[f64; 2]>>) -> Result<DMatrix<Complex64>, Failure> {
    match h {
        Some(h) => matrix("h", n, h),
        None => Ok(DMatrix::identity(n, n)),
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<PhmModel, Failure> {
        let model = match self {
            ModelSpec::FlatHeisenberg { n, h } => PhmModel::flat_heisenberg(*n, levi(*n, h)?),
            ModelSpec::TorsionDeformed { n, h, a } => PhmModel::torsion_deformed(*n, levi(*n, h)?, matrix("a", *n, a)?),
            ModelSpec::Tanno { eps } => PhmModel::tanno_example(*eps),
            ModelSpec::Sl2Affine { n, kappa } => PhmModel::sl2_affine(*n, *kappa),
            ModelSpec::RandomTorsion { n, norm, seed } => random_torsion(*n, *norm, *seed),
            ModelSpec::File { path } => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
                let file: ModelFile =
                    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
                PhmModel::from_file(&file)
            }
        };
        model.map_err(Failure::from)
    }
}

impl FamilySpec {
    pub fn build(&self, n: usize) -> Result<JFamily, Failure> {
        Ok(match self {
            FamilySpec::Rotation => JFamily::rotation(n),
            FamilySpec::Degenerating => JFamily::degenerating(n),
            FamilySpec::Exponential { a, b } => JFamily::Exponential { a: matrix("a", n, a)?, b: matrix("b", n, b)? },
            FamilySpec::Linear { p0, p1, q0, q1 } => JFamily::Linear {
                p0: matrix("p0", n, p0)?,
                p1: matrix("p1", n, p1)?,
                q0: matrix("q0", n, q0)?,
                q1: matrix("q1", n, q1)?,
            },
        })
    }
}

//! Run configuration (JSON, `version` 1).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use screenopt_core::domain::{
    exponential_density, fig1_joint_density, uniform_density, AversionDomain, Density, Grid, TypeDomain,
};
use screenopt_core::io::read_density;
use screenopt_core::objective::{assemble_classical, assemble_extended, CostSpec, QuadraticProgram};
use screenopt_core::solver::SolverConfig;

pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    #[serde(rename = "classical-1d")]
    Classical1d,
    #[serde(rename = "classical-2d")]
    Classical2d,
    Extended,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AversionSpec {
    pub kappa: f64,
    pub n_alpha: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform {},
    Exponential {
        rate: f64,
    },
    Fig1 {
        a: f64,
    },
    /// Path relative to the config file.
    Csv {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub fields: bool,
    pub contracts: bool,
    pub segmentation: bool,
    pub certificates: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            fields: true,
            contracts: true,
            segmentation: true,
            certificates: true,
        }
    }
}

/// Lift parameters. In 1D, `a` defaults to the fig1 kink and κ to the
/// aversion range; 2D certificates need `a`, `kappa` and `support`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSpec {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub support: Option<[f64; 2]>,
}

fn default_epsilon() -> f64 {
    1e-3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub problem: ProblemKind,
    pub domain: DomainSpec,
    /// Nodes per type axis.
    pub resolution: Vec<usize>,
    #[serde(default)]
    pub aversion: Option<AversionSpec>,
    pub density: DensitySpec,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub certificate: Option<CertificateSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// A validated configuration with its grid, density and program built.
pub struct Problem {
    pub config: RunConfig,
    pub grid: Grid,
    pub density: Density,
    pub qp: QuadraticProgram,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    /// Checks the configuration and builds everything the run needs.
    pub fn prepare(self, base: &Path) -> Result<Problem> {
        if self.version != VERSION {
            bail!("unsupported config version {} (expected {VERSION})", self.version);
        }
        let dim = self.domain.lo.len();
        let want = match self.problem {
            ProblemKind::Classical1d => Some(1),
            ProblemKind::Classical2d => Some(2),
            ProblemKind::Extended => None,
        };
        if want.is_some_and(|d| d != dim) {
            bail!(
                "problem {:?} needs a {}D domain, got {dim}D",
                self.problem,
                want.unwrap()
            );
        }
        if self.resolution.len() != dim {
            bail!("resolution lists {} axes, domain has {dim}", self.resolution.len());
        }
        let extended = self.problem == ProblemKind::Extended;
        if extended != self.aversion.is_some() {
            bail!("an aversion section is required for extended problems and only for them");
        }
        self.solver.validate()?;
        let domain = TypeDomain::new(self.domain.lo.clone(), self.domain.hi.clone())?;
        let mut n = self.resolution.clone();
        let aversion = match &self.aversion {
            Some(a) => {
                n.push(a.n_alpha);
                Some(AversionDomain::new(a.kappa)?)
            }
            None => None,
        };
        let grid = Grid::new(&domain, aversion, &n)?;
        let density = match &self.density {
            DensitySpec::Uniform {} => uniform_density(&grid),
            DensitySpec::Exponential { rate } => exponential_density(&grid, *rate)?,
            DensitySpec::Fig1 { a } => {
                if !(*a > 0.0 && *a < 1.0) {
                    bail!("fig1 needs a in (0, 1), got {a}");
                }
                if !extended {
                    bail!("the fig1 density lives on an extended grid");
                }
                fig1_joint_density(*a, &grid)?
            }
            DensitySpec::Csv { path } => {
                let full = base.join(path);
                let file = fs::File::open(&full).with_context(|| format!("opening density {}", full.display()))?;
                read_density(file, &grid)?
            }
        };
        let cost = CostSpec::new(self.lambda)?;
        let qp = if extended {
            assemble_extended(&grid, &density, cost)?
        } else {
            assemble_classical(&grid, &density, cost)?
        };
        if let Some(c) = &self.certificate {
            if !(c.epsilon.is_finite() && c.epsilon > 0.0) {
                bail!("certificate epsilon must be positive, got {}", c.epsilon);
            }
            if self.problem == ProblemKind::Classical2d && (c.a.is_none() || c.kappa.is_none() || c.support.is_none()) {
                bail!("2D certificates need a, kappa and support");
            }
        }
        Ok(Problem {
            config: self,
            grid,
            density,
            qp,
        })
    }
}

//! JSON problem configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use pcurve_core::fexpr::{parse, Var};
use pcurve_core::grid::{Domain, Field};
use pcurve_core::solver::{Problem, SolverConfig};
use pcurve_core::symfunc::PSpec;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub n: usize,
    pub p: usize,
    pub domain: DomainConfig,
    pub f: String,
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Expression in `x1..xn` / `r2` for a candidate subsolution.
    #[serde(default)]
    pub subsolution: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "lowercase")]
pub enum DomainConfig {
    Ball(BallParams),
    Ellipsoid(EllipsoidParams),
    Levelset(LevelSetParams),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallParams {
    pub radius: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipsoidParams {
    pub semi_axes: Vec<f64>,
}

/// `Ω = {phi < 0}` inside `[-half_width, half_width]ⁿ`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSetParams {
    pub phi: String,
    pub half_width: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub solution_csv: String,
    pub report_json: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            solution_csv: "solution.csv".into(),
            report_json: "report.json".into(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Config = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.solver.validate()?;
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<PSpec> {
        Ok(PSpec::new(self.n, self.p)?)
    }

    pub fn domain(&self) -> Result<Domain> {
        let dom = match &self.domain {
            DomainConfig::Ball(b) => Domain::ball(self.n, b.radius)?,
            DomainConfig::Ellipsoid(e) => {
                if e.semi_axes.len() != self.n {
                    bail!("ellipsoid has {} semi-axes but n = {}", e.semi_axes.len(), self.n);
                }
                Domain::ellipsoid(e.semi_axes.clone())?
            }
            DomainConfig::Levelset(l) => Domain::level_set(parse(&l.phi, self.n)?, l.half_width)?,
        };
        Ok(dom)
    }

    pub fn ball_radius(&self) -> Option<f64> {
        match &self.domain {
            DomainConfig::Ball(b) => Some(b.radius),
            _ => None,
        }
    }

    pub fn problem(&self, h: f64) -> Result<Problem> {
        let f = parse(&self.f, self.n).context("parsing f")?;
        Ok(Problem::new(self.spec()?, self.domain()?, f, h)?)
    }

    /// Nodal values of the configured subsolution, if any.
    pub fn subsolution_field(&self, prob: &Problem) -> Result<Option<Field>> {
        let Some(src) = &self.subsolution else {
            return Ok(None);
        };
        let e = parse(src, self.n).context("parsing subsolution")?;
        if e.vars().iter().any(|v| !matches!(v, Var::X(_) | Var::R2)) {
            bail!("subsolution may depend on x1..x{} and r2 only", self.n);
        }
        let mut nu = vec![0.0; self.n + 1];
        nu[self.n] = 1.0;
        let values = prob
            .grid()
            .nodes()
            .iter()
            .map(|nd| {
                let env = pcurve_core::fexpr::Env {
                    x: nd.x.clone(),
                    z: 0.0,
                    nu: nu.clone(),
                };
                e.eval(&env).context("evaluating subsolution")
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(Field { values }))
    }
}

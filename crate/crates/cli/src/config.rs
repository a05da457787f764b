//! Run configurations, parameter files and manifests.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use threshold_gms::distributions::TabulatedQuantile;
use threshold_gms::ladder::StopRule;
use threshold_gms::montecarlo::ReplicationPlan;
use threshold_gms::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub params: ModelParams,
    pub start: f64,
    pub horizon: f64,
    pub seed: u64,
    pub initial: Vec<f64>,
    pub snapshots: Vec<f64>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    pub params: Option<ModelParams>,
    pub grid: Option<String>,
    pub force_numeric: bool,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub params: ModelParams,
    pub plan: ReplicationPlan,
    /// Replications whose full ladder or species list is exported.
    pub export: usize,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub reps: usize,
    pub seed: u64,
    pub only: Option<String>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Simulate(SimulateConfig),
    Classify(ClassifyConfig),
    LadderMc(McConfig),
    LimitMc(McConfig),
    Validate(ValidateConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(config: RunConfig, outputs: Vec<String>) -> Self {
        Self { tool: env!("CARGO_PKG_NAME").into(), version: env!("CARGO_PKG_VERSION").into(), config, outputs }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// Loads model parameters; a tabulated law may name a `csv` file of `(u, x)`
/// rows instead of an inline `grid`, resolved relative to the parameter file.
pub fn load_params(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for key in ["fitness", "threshold"] {
        if let Some(law) = value.get_mut(key) {
            resolve_tabulated_csv(law, base)?;
        }
    }
    serde_json::from_value(value).with_context(|| format!("invalid parameters in {}", path.display()))
}

fn resolve_tabulated_csv(law: &mut Value, base: &Path) -> Result<()> {
    let Some(obj) = law.as_object_mut() else { return Ok(()) };
    if obj.get("family").and_then(Value::as_str) != Some("tabulated") {
        return Ok(());
    }
    let Some(csv) = obj.remove("csv") else { return Ok(()) };
    if obj.contains_key("grid") {
        bail!("tabulated law has both 'grid' and 'csv'");
    }
    let rel = csv.as_str().context("'csv' must be a path string")?;
    let file = base.join(rel);
    let reader = std::fs::File::open(&file).with_context(|| format!("opening {}", file.display()))?;
    let table = TabulatedQuantile::from_csv_reader(reader).with_context(|| format!("reading {}", file.display()))?;
    obj.insert("grid".into(), serde_json::to_value(table.grid())?);
    Ok(())
}

/// `a,b,l,m` for exponential fitness rate `a`, threshold rate `b`, birth rate
/// `l` and extinction rate `m`.
pub fn exponential_params(spec: &str) -> Result<ModelParams> {
    let v: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number '{s}'")))
        .collect::<Result<_>>()?;
    let [a, b, l, m] = v[..] else {
        bail!("--exponential needs four values alpha_star,alpha_dagger,lambda_star,lambda_dagger");
    };
    Ok(ModelParams::exponential(a, b, l, m)?)
}

/// Fitness values, one per line; blank lines, `#` comments and a leading
/// header line are skipped. Extra columns are ignored.
pub fn load_initial(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(x) if x.is_finite() && x >= 0.0 => out.push(x),
            Ok(x) => bail!("{}:{}: fitness must be finite and >= 0, got {x}", path.display(), i + 1),
            Err(_) if out.is_empty() && i == 0 => continue,
            Err(_) => bail!("{}:{}: not a number: '{field}'", path.display(), i + 1),
        }
    }
    Ok(out)
}

pub fn stop_rule(max_steps: Option<usize>, tail_tolerance: Option<f64>) -> StopRule {
    let mut s = StopRule::default();
    if let Some(m) = max_steps {
        s.max_steps = m;
    }
    if let Some(t) = tail_tolerance {
        s.tail_tolerance = t;
    }
    s
}

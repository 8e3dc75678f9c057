//! JSON run configuration.

use std::io::Read;
use std::path::{Path, PathBuf};

use qsopt::state::{prior_from_weights, PriorDistribution};
use qsopt::two_value::TwoValueSpec;
use qsopt::verify::{Check, CheckOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform,
    Weights(Vec<f64>),
    TwoValue { k: usize, p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Closed form for two-value (and uniform) priors above the dense limit,
    /// dense linear algebra otherwise.
    #[default]
    Auto,
    Dense,
    ClosedForm,
}

/// The two p rules of the `ratio-fig4` scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PRule {
    /// `p = (1 − 10⁻⁶)/K`
    #[default]
    NearMax,
    /// `p = 10⁻⁶`
    Tiny,
}

impl PRule {
    pub fn p(self, k: usize) -> f64 {
        match self {
            PRule::NearMax => (1.0 - 1e-6) / k as f64,
            PRule::Tiny => 1e-6,
        }
    }
}

/// Every field is optional in the file; each command fills in its defaults
/// and echoes the resolved values in its report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_rule: Option<PRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dlambda_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<Check>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<CheckOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_before_sweep: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

/// A prior after validation, keeping the two-value structure when there is one.
#[derive(Debug, Clone)]
pub enum ResolvedPrior {
    General(PriorDistribution),
    TwoValue(TwoValueSpec),
}

impl ResolvedPrior {
    pub fn distribution(&self) -> Result<PriorDistribution, CliError> {
        match self {
            ResolvedPrior::General(p) => Ok(p.clone()),
            ResolvedPrior::TwoValue(s) => Ok(s.prior()?),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            ResolvedPrior::General(p) => p.len(),
            ResolvedPrior::TwoValue(s) => s.n,
        }
    }
}

impl RunConfig {
    pub fn require_n(&self) -> Result<usize, CliError> {
        match (self.n, &self.prior) {
            (Some(n), _) => Ok(n),
            (None, Some(PriorSpec::Weights(w))) => Ok(w.len()),
            _ => Err(CliError::Config("`n` is required".into())),
        }
    }

    /// Validates the prior against `n`; a missing prior means uniform.
    pub fn resolve_prior(&self) -> Result<ResolvedPrior, CliError> {
        let n = self.require_n()?;
        match self.prior.as_ref().unwrap_or(&PriorSpec::Uniform) {
            PriorSpec::Uniform => Ok(ResolvedPrior::General(PriorDistribution::uniform(n)?)),
            PriorSpec::Weights(w) => {
                if w.len() != n {
                    return Err(CliError::Config(format!("prior.weights has {} entries but n = {n}", w.len())));
                }
                Ok(ResolvedPrior::General(prior_from_weights(w)?))
            }
            PriorSpec::TwoValue { k, p } => Ok(ResolvedPrior::TwoValue(TwoValueSpec::new(n, *k, *p)?)),
        }
    }

    /// Makes relative file paths relative to the config file's directory.
    pub fn rebase_paths(&mut self, base: &Path) {
        for path in [&mut self.psi_file, &mut self.phi_file, &mut self.psi_out, &mut self.phi_out].into_iter().flatten() {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

/// Parses a config document; errors name the line, column and field path.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let inner = e.inner();
        let field = e.path().to_string();
        let full = inner.to_string();
        let suffix = format!(" at line {} column {}", inner.line(), inner.column());
        CliError::Config(format!(
            "{origin}: line {} column {}, field `{}`: {}",
            inner.line(),
            inner.column(),
            if field.is_empty() { "." } else { &field },
            full.strip_suffix(&suffix).unwrap_or(&full),
        ))
    })?;
    de.end().map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
    Ok(cfg)
}

/// Reads the config from a file, from stdin for `-`, or returns the empty
/// config when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    if path == Path::new("-") {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text).map_err(|source| CliError::Io { path: path.into(), source })?;
        return parse_config(&text, "<stdin>");
    }
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    let mut cfg = parse_config(&text, &path.display().to_string())?;
    if let Some(dir) = path.parent() {
        cfg.rebase_paths(dir);
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_variants_parse() {
        let c = parse_config(r#"{"n": 4, "prior": "uniform"}"#, "t").unwrap();
        assert_eq!(c.prior, Some(PriorSpec::Uniform));
        let c = parse_config(r#"{"prior": {"weights": [1, 2, 1]}}"#, "t").unwrap();
        assert_eq!(c.require_n().unwrap(), 3);
        let c = parse_config(r#"{"n": 100, "prior": {"two_value": {"k": 10, "p": 0.05}}}"#, "t").unwrap();
        assert!(matches!(c.resolve_prior().unwrap(), ResolvedPrior::TwoValue(_)));
    }

    #[test]
    fn errors_locate_the_field() {
        let err = parse_config("{\n  \"n\": 4,\n  \"prior\": {\"two_value\": {\"k\": \"x\", \"p\": 0.1}}\n}", "cfg.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("prior.two_value.k"), "{msg}");
        let err = parse_config(r#"{"n": 4, "bogus": 1}"#, "cfg.json").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn weight_count_must_match() {
        let c = parse_config(r#"{"n": 4, "prior": {"weights": [1, 2, 1]}}"#, "t").unwrap();
        assert!(c.resolve_prior().is_err());
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let mut c = parse_config(r#"{"psi_file": "a.bin", "phi_out": "/abs/b.bin"}"#, "t").unwrap();
        c.rebase_paths(Path::new("/cfg"));
        assert_eq!(c.psi_file.unwrap(), PathBuf::from("/cfg/a.bin"));
        assert_eq!(c.phi_out.unwrap(), PathBuf::from("/abs/b.bin"));
    }
}

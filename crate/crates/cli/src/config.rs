//! Run configuration: a flat key=value file merged under command-line flags.

use std::path::{Path, PathBuf};

use sailprice::adadelta::AdadeltaConfig;
use sailprice::boosting::BoostConfig;
use sailprice::data::RegionScheme;
use sailprice::evaluation::{ModelFamily, ModelSpec};
use sailprice::kv::KeyValues;
use sailprice::linear::GdConfig;
use sailprice::analysis::DEFAULT_COUNTERFACTUAL_SAMPLE;

use crate::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const ALL_FAMILIES: [&str; 4] = ["ols", "gd", "adadelta", "gbr"];

/// Keys accepted in a config file.
const KNOWN_KEYS: &[&str] = &[
    "input",
    "output_dir",
    "seed",
    "model",
    "models",
    "regions",
    "standardize",
    "sample_size",
    "gd.learning_rate",
    "gd.lambda",
    "gd.max_iters",
    "gd.tol",
    "adadelta.rho",
    "adadelta.epsilon",
    "adadelta.lambda",
    "adadelta.max_iters",
    "adadelta.tol",
    "gbr.n_iters",
    "gbr.learning_rate",
    "gbr.lambda",
    "gbr.max_leaves",
    "gbr.max_depth",
    "gbr.min_samples_leaf",
    "gbr.tol",
];

/// Values given on the command line; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub model: Option<String>,
    pub regions: Option<String>,
    pub standardize: bool,
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Families in run order; `None` when neither flags nor file name any.
    pub families: Option<Vec<ModelFamily>>,
    pub regions: Option<RegionScheme>,
    pub standardize: bool,
    pub sample_size: usize,
    /// The config file, kept for per-family hyperparameters.
    pub file: KeyValues,
}

impl RunConfig {
    pub fn resolve(flags: &Overrides) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => read_config(path)?,
            None => KeyValues::default(),
        };
        for (k, _) in &file.entries {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(CliError::Usage(format!("unknown config key {k:?}")));
            }
        }
        let seed = match flags.seed {
            Some(s) => s,
            None => parsed(&file, "seed")?.unwrap_or(DEFAULT_SEED),
        };
        let names: Option<Vec<String>> = match (&flags.model, file.get("model"), file.get("models")) {
            (Some(m), _, _) => Some(vec![m.clone()]),
            (None, Some(m), _) => Some(vec![m.to_string()]),
            (None, None, Some(list)) => Some(
                list.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
            ),
            (None, None, None) => None,
        };
        let families = names
            .map(|names| names.iter().map(|n| family(n, &file)).collect::<Result<Vec<_>, _>>())
            .transpose()?;
        let regions = flags
            .regions
            .as_deref()
            .or(file.get("regions"))
            .map(|r| {
                r.parse::<RegionScheme>()
                    .map_err(|_| CliError::Usage(format!("--regions must be three or four, got {r:?}")))
            })
            .transpose()?;
        let standardize = flags.standardize || parsed::<bool>(&file, "standardize")?.unwrap_or(false);
        Ok(Self {
            input: flags.input.clone().or_else(|| file.get("input").map(PathBuf::from)),
            output_dir: flags
                .output_dir
                .clone()
                .or_else(|| file.get("output_dir").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out")),
            seed,
            families,
            regions,
            standardize,
            sample_size: parsed(&file, "sample_size")?.unwrap_or(DEFAULT_COUNTERFACTUAL_SAMPLE),
            file,
        })
    }

    /// The requested families, or `default` when none were named. An
    /// explicitly empty list is a usage error.
    pub fn families_or(&self, default: &[&str]) -> Result<Vec<ModelFamily>, CliError> {
        match &self.families {
            Some(f) if f.is_empty() => Err(CliError::Usage("no model families given".into())),
            Some(f) => Ok(f.clone()),
            None => default.iter().map(|n| family(n, &self.file)).collect(),
        }
    }

    pub fn require_input(&self) -> Result<&Path, CliError> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Usage("--input is required".into()))
    }

    pub fn split_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn synth_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    pub fn sampling_seed(&self) -> u64 {
        self.seed.wrapping_add(3)
    }

    /// `--standardize` forces scaling on; otherwise each family's default.
    pub fn spec_for(&self, family: &ModelFamily) -> ModelSpec {
        let mut spec = ModelSpec::new(family.clone());
        spec.regions = self.regions;
        spec.standardize |= self.standardize;
        spec
    }
}

fn read_config(path: &Path) -> Result<KeyValues, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    KeyValues::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn parsed<T: std::str::FromStr>(kv: &KeyValues, key: &str) -> Result<Option<T>, CliError> {
    kv.get_parsed(key).map_err(|e| CliError::Usage(e.to_string()))
}

fn set<T: std::str::FromStr>(kv: &KeyValues, key: &str, slot: &mut T) -> Result<(), CliError> {
    if let Some(v) = parsed(kv, key)? {
        *slot = v;
    }
    Ok(())
}

/// A family by name with hyperparameters from the config file.
pub fn family(name: &str, kv: &KeyValues) -> Result<ModelFamily, CliError> {
    Ok(match name {
        "ols" => ModelFamily::Ols,
        "gd" => {
            let mut c = GdConfig::default();
            set(kv, "gd.learning_rate", &mut c.learning_rate)?;
            set(kv, "gd.lambda", &mut c.l2_lambda)?;
            set(kv, "gd.max_iters", &mut c.max_iters)?;
            set(kv, "gd.tol", &mut c.tol)?;
            ModelFamily::Gd(c)
        }
        "adadelta" => {
            let mut c = AdadeltaConfig::default();
            set(kv, "adadelta.rho", &mut c.rho)?;
            set(kv, "adadelta.epsilon", &mut c.epsilon)?;
            set(kv, "adadelta.lambda", &mut c.l2_lambda)?;
            set(kv, "adadelta.max_iters", &mut c.max_iters)?;
            set(kv, "adadelta.tol", &mut c.tol)?;
            ModelFamily::Adadelta(c)
        }
        "gbr" => {
            let mut c = BoostConfig::default();
            set(kv, "gbr.n_iters", &mut c.n_iters)?;
            set(kv, "gbr.learning_rate", &mut c.learning_rate)?;
            set(kv, "gbr.lambda", &mut c.l2_lambda)?;
            set(kv, "gbr.max_leaves", &mut c.tree.max_leaves)?;
            set(kv, "gbr.max_depth", &mut c.tree.max_depth)?;
            set(kv, "gbr.min_samples_leaf", &mut c.tree.min_samples_leaf)?;
            set(kv, "gbr.tol", &mut c.tol)?;
            ModelFamily::Gbr(c)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown model family {other:?}; expected one of {}",
                ALL_FAMILIES.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn flags_win_over_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "seed=7\nmodel=gd\nregions=three\ngd.learning_rate=0.05\noutput_dir=elsewhere").unwrap();
        let flags = Overrides {
            seed: Some(9),
            config: Some(f.path().to_path_buf()),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(&flags).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(c.regions, Some(RegionScheme::ThreeRegion));
        match c.families.as_deref().unwrap() {
            [ModelFamily::Gd(g)] => assert_eq!(g.learning_rate, 0.05),
            other => panic!("{other:?}"),
        }
        assert_eq!((c.split_seed(), c.synth_seed(), c.sampling_seed()), (10, 11, 12));
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "colour=red").unwrap();
        let flags = Overrides {
            config: Some(f.path().to_path_buf()),
            ..Overrides::default()
        };
        assert!(matches!(RunConfig::resolve(&flags), Err(CliError::Usage(_))));
        let flags = Overrides {
            model: Some("svm".into()),
            ..Overrides::default()
        };
        assert!(matches!(RunConfig::resolve(&flags), Err(CliError::Usage(_))));
    }
}

//! Flat key-value experiment configuration with dotted sections.
//!
//! Grammar: one `key = value` pair per line, `#` starts a comment line,
//! blank lines are ignored. Unknown keys are errors, as are keys that do not
//! apply to the selected dataset kind or architecture.

use lp_core::architectures::{ArchKind, NetworkSpec, Supervision};
use lp_core::data::Dataset;
use lp_core::optimizer::TrainConfig;
use lp_core::{ActivationKind, ConstraintKind, LossKind, LpError, RegConfig};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub spec: NetworkSpec,
    pub constraint: ConstraintKind,
    pub train: TrainConfig,
    pub workers: usize,
    pub out_dir: PathBuf,
}

#[derive(Debug)]
pub enum DatasetConfig {
    Xor,
    TwoMoons { n: usize, noise: f64, seed: u64 },
    Parity { n: usize, seed: u64 },
    Csv {
        path: PathBuf,
        input_cols: Vec<usize>,
        target_cols: Vec<usize>,
        one_hot: Option<usize>,
    },
}

#[derive(Debug)]
pub struct Standardize(pub bool);

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, Standardize), LpError> {
        let text = std::fs::read_to_string(path)?;
        parse(&text, &path.display().to_string())
    }

    pub fn build_dataset(&self, standardize: bool) -> Result<Dataset, LpError> {
        let ds = match &self.dataset {
            DatasetConfig::Xor => lp_core::gen_xor(),
            DatasetConfig::TwoMoons { n, noise, seed } => {
                lp_core::gen_two_moons(*n, *noise, *seed)?
            }
            DatasetConfig::Parity { n, seed } => {
                lp_core::gen_parity_sequences(*n, self.spec.seq_len, *seed)?
            }
            DatasetConfig::Csv {
                path,
                input_cols,
                target_cols,
                one_hot,
            } => lp_core::load_csv(path, input_cols, target_cols, *one_hot)?,
        };
        Ok(if standardize { ds.standardized() } else { ds })
    }
}

struct Pairs {
    map: BTreeMap<String, (String, usize)>,
    consumed: std::cell::RefCell<Vec<String>>,
    path: String,
}

impl Pairs {
    fn get(&self, key: &str) -> Option<&str> {
        self.consumed.borrow_mut().push(key.to_string());
        self.map.get(key).map(|(v, _)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str, LpError> {
        self.get(key)
            .ok_or_else(|| config_err(&self.path, format!("missing required key '{key}'")))
    }

    fn forbid(&self, key: &str, why: &str) -> Result<(), LpError> {
        self.consumed.borrow_mut().push(key.to_string());
        if self.map.contains_key(key) {
            return Err(config_err(&self.path, format!("key '{key}' {why}")));
        }
        Ok(())
    }

    fn leftovers(&self) -> Vec<(String, usize)> {
        let consumed = self.consumed.borrow();
        self.map
            .iter()
            .filter(|(k, _)| !consumed.contains(k))
            .map(|(k, (_, line))| (k.clone(), *line))
            .collect()
    }
}

fn config_err(path: &str, msg: String) -> LpError {
    LpError::InvalidSpec(format!("{path}: {msg}"))
}

fn parse(text: &str, path: &str) -> Result<(ExperimentConfig, Standardize), LpError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(LpError::Parse {
                path: path.to_string(),
                line: line_no,
                msg: format!("expected 'key = value', got '{line}'"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), (value, line_no)).is_some() {
            return Err(LpError::Parse {
                path: path.to_string(),
                line: line_no,
                msg: format!("duplicate key '{key}'"),
            });
        }
    }
    let pairs = Pairs {
        map,
        consumed: std::cell::RefCell::new(Vec::new()),
        path: path.to_string(),
    };

    let dataset = parse_dataset(&pairs)?;
    let standardize = parse_bool(&pairs, "dataset.standardize")?.unwrap_or(false);
    let spec = parse_network(&pairs)?;
    let constraint = parse_constraint(&pairs)?;
    let train = parse_train(&pairs)?;
    let workers = parse_usize(&pairs, "parallel.workers")?.unwrap_or(1);
    let out_dir = PathBuf::from(pairs.get("output.dir").unwrap_or("."));

    let leftovers = pairs.leftovers();
    if let Some((key, line)) = leftovers.first() {
        return Err(LpError::Parse {
            path: path.to_string(),
            line: *line,
            msg: format!("unknown key '{key}'"),
        });
    }

    let config = ExperimentConfig {
        dataset,
        spec,
        constraint,
        train,
        workers,
        out_dir,
    };
    validate(&config, path)?;
    Ok((config, Standardize(standardize)))
}

fn parse_dataset(p: &Pairs) -> Result<DatasetConfig, LpError> {
    let kind = p.require("dataset.kind")?;
    match kind {
        "xor" => {
            for key in [
                "dataset.path",
                "dataset.input_cols",
                "dataset.target_cols",
                "dataset.one_hot",
                "dataset.n",
                "dataset.noise",
                "dataset.seed",
            ] {
                p.forbid(key, "does not apply to dataset.kind = xor")?;
            }
            Ok(DatasetConfig::Xor)
        }
        "two_moons" => {
            for key in [
                "dataset.path",
                "dataset.input_cols",
                "dataset.target_cols",
                "dataset.one_hot",
            ] {
                p.forbid(key, "does not apply to dataset.kind = two_moons")?;
            }
            Ok(DatasetConfig::TwoMoons {
                n: require_usize(p, "dataset.n")?,
                noise: parse_f64(p, "dataset.noise")?.unwrap_or(0.0),
                seed: parse_u64(p, "dataset.seed")?.unwrap_or(0),
            })
        }
        "parity" => {
            for key in [
                "dataset.path",
                "dataset.input_cols",
                "dataset.target_cols",
                "dataset.one_hot",
                "dataset.noise",
            ] {
                p.forbid(key, "does not apply to dataset.kind = parity")?;
            }
            Ok(DatasetConfig::Parity {
                n: require_usize(p, "dataset.n")?,
                seed: parse_u64(p, "dataset.seed")?.unwrap_or(0),
            })
        }
        "csv" => {
            for key in ["dataset.n", "dataset.noise", "dataset.seed"] {
                p.forbid(key, "does not apply to dataset.kind = csv")?;
            }
            Ok(DatasetConfig::Csv {
                path: PathBuf::from(p.require("dataset.path")?),
                input_cols: require_usize_list(p, "dataset.input_cols")?,
                target_cols: require_usize_list(p, "dataset.target_cols")?,
                one_hot: parse_usize(p, "dataset.one_hot")?,
            })
        }
        other => Err(config_err(
            &p.path,
            format!("dataset.kind '{other}' is not one of xor, two_moons, parity, csv"),
        )),
    }
}

fn parse_network(p: &Pairs) -> Result<NetworkSpec, LpError> {
    let arch = ArchKind::from_name(p.require("network.arch")?)?;
    let widths = require_usize_list(p, "network.widths")?;
    let activation = ActivationKind::from_name(p.require("network.activation")?)?;
    let loss = LossKind::from_name(p.require("network.loss")?)?;
    let mut spec = NetworkSpec::new(arch, widths, activation, loss);
    spec.bias = parse_bool(p, "network.bias")?.unwrap_or(false);
    if arch == ArchKind::Rnn {
        spec.seq_len = require_usize(p, "network.seq_len")?;
        spec.supervision = match p.get("network.supervision") {
            None | Some("final") => Supervision::FinalStep,
            Some("all_steps") => Supervision::AllSteps,
            Some(other) => {
                return Err(config_err(
                    &p.path,
                    format!("network.supervision '{other}' is not one of final, all_steps"),
                ))
            }
        };
    } else {
        p.forbid("network.seq_len", "applies to network.arch = rnn only")?;
        p.forbid("network.supervision", "applies to network.arch = rnn only")?;
    }
    Ok(spec)
}

fn parse_constraint(p: &Pairs) -> Result<ConstraintKind, LpError> {
    let kind = p.require("constraint.kind")?;
    match kind {
        "identity" => {
            p.forbid("constraint.epsilon", "does not apply to constraint.kind = identity")?;
            Ok(ConstraintKind::Identity)
        }
        "eps_abs" | "eps_lin" => {
            let eps = require_f64(p, "constraint.epsilon")?;
            ConstraintKind::from_name(kind, eps)
        }
        other => Err(config_err(
            &p.path,
            format!("constraint.kind '{other}' is not one of identity, eps_abs, eps_lin"),
        )),
    }
}

fn parse_train(p: &Pairs) -> Result<TrainConfig, LpError> {
    let defaults = TrainConfig::default();
    Ok(TrainConfig {
        eta_w: parse_f64(p, "train.eta_w")?.unwrap_or(defaults.eta_w),
        eta_x: parse_f64(p, "train.eta_x")?.unwrap_or(defaults.eta_x),
        eta_lambda: parse_f64(p, "train.eta_lambda")?.unwrap_or(defaults.eta_lambda),
        max_iters: parse_usize(p, "train.max_iters")?.unwrap_or(defaults.max_iters),
        target_residual: parse_f64(p, "train.target_residual")?
            .unwrap_or(defaults.target_residual),
        seed: parse_u64(p, "train.seed")?.unwrap_or(defaults.seed),
        reg: RegConfig {
            rho: parse_f64(p, "reg.rho")?.unwrap_or(0.0),
            alpha: parse_f64(p, "reg.alpha")?.unwrap_or(0.0),
        },
        log_every: parse_usize(p, "train.log_every")?.unwrap_or(defaults.log_every),
        batch_size: parse_usize(p, "train.batch_size")?,
    })
}

fn validate(config: &ExperimentConfig, path: &str) -> Result<(), LpError> {
    config.spec.validate()?;
    config.constraint.validate()?;
    config.train.validate()?;
    if config.workers == 0 {
        return Err(config_err(path, "parallel.workers must be >= 1".into()));
    }
    if config.workers > 1 {
        if matches!(config.spec.arch, ArchKind::Rnn | ArchKind::ResNetTilde) {
            return Err(config_err(
                path,
                format!(
                    "parallel.workers > 1 requires a nearest-neighbor graph; \
                     '{}' is not layer-partitionable",
                    config.spec.arch.name()
                ),
            ));
        }
        if config.train.batch_size.is_some() {
            return Err(config_err(
                path,
                "train.batch_size cannot be combined with parallel.workers > 1".into(),
            ));
        }
    }
    if matches!(config.dataset, DatasetConfig::Parity { .. }) && config.spec.arch != ArchKind::Rnn
    {
        return Err(config_err(
            path,
            "dataset.kind = parity produces sequences and needs network.arch = rnn".into(),
        ));
    }
    Ok(())
}

fn require_usize(p: &Pairs, key: &str) -> Result<usize, LpError> {
    parse_usize(p, key)?.ok_or_else(|| config_err(&p.path, format!("missing required key '{key}'")))
}

fn require_f64(p: &Pairs, key: &str) -> Result<f64, LpError> {
    parse_f64(p, key)?.ok_or_else(|| config_err(&p.path, format!("missing required key '{key}'")))
}

fn require_usize_list(p: &Pairs, key: &str) -> Result<Vec<usize>, LpError> {
    let raw = p.require(key)?;
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| config_err(&p.path, format!("key '{key}': '{s}' is not an integer")))
        })
        .collect()
}

fn parse_usize(p: &Pairs, key: &str) -> Result<Option<usize>, LpError> {
    p.get(key)
        .map(|v| {
            v.parse::<usize>()
                .map_err(|_| config_err(&p.path, format!("key '{key}': '{v}' is not an integer")))
        })
        .transpose()
}

fn parse_u64(p: &Pairs, key: &str) -> Result<Option<u64>, LpError> {
    p.get(key)
        .map(|v| {
            v.parse::<u64>()
                .map_err(|_| config_err(&p.path, format!("key '{key}': '{v}' is not an integer")))
        })
        .transpose()
}

fn parse_f64(p: &Pairs, key: &str) -> Result<Option<f64>, LpError> {
    p.get(key)
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| config_err(&p.path, format!("key '{key}': '{v}' is not a number")))
        })
        .transpose()
}

fn parse_bool(p: &Pairs, key: &str) -> Result<Option<bool>, LpError> {
    p.get(key)
        .map(|v| match v {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(config_err(
                &p.path,
                format!("key '{key}': '{other}' is not true/false"),
            )),
        })
        .transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    const XOR: &str = "\
# comment lines and blanks are ignored
dataset.kind = xor

network.arch = mlp
network.widths = 2,8,1
network.activation = tanh
network.loss = squared_error
constraint.kind = identity
";

    #[test]
    fn minimal_config_parses_with_defaults() {
        let (config, standardize) = parse(XOR, "test.cfg").unwrap();
        assert!(matches!(config.dataset, DatasetConfig::Xor));
        assert_eq!(config.spec.hidden_layers(), 1);
        assert_eq!(config.workers, 1);
        assert!(!standardize.0);
        assert_eq!(config.train.eta_lambda, 0.1);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = "dataset.kind = xor\nnetwork.arch = mlp\nnetwork.widths = 2,8,1\n\
network.activation = tanh\nnetwork.loss = squared_error\nconstraint.kind = identity\n\
train.type = sgd\n";
        let err = parse(text, "test.cfg").unwrap_err();
        assert!(err.to_string().contains("unknown key 'train.type'"), "{err}");
    }

    #[test]
    fn contextual_keys_are_rejected() {
        let text = "dataset.kind = xor\ndataset.noise = 0.1\nnetwork.arch = mlp\n\
network.widths = 2,8,1\nnetwork.activation = tanh\nnetwork.loss = squared_error\n\
constraint.kind = identity\n";
        let err = parse(text, "test.cfg").unwrap_err();
        assert!(err.to_string().contains("dataset.noise"), "{err}");

        let text = "dataset.kind = xor\nnetwork.arch = mlp\nnetwork.widths = 2,8,1\n\
network.activation = tanh\nnetwork.loss = squared_error\nconstraint.kind = identity\n\
constraint.epsilon = 0.2\n";
        let err = parse(text, "test.cfg").unwrap_err();
        assert!(err.to_string().contains("constraint.epsilon"), "{err}");
    }

    #[test]
    fn epsilon_is_required_for_eps_kinds() {
        let text = "dataset.kind = xor\nnetwork.arch = mlp\nnetwork.widths = 2,8,1\n\
network.activation = tanh\nnetwork.loss = squared_error\nconstraint.kind = eps_abs\n";
        let err = parse(text, "test.cfg").unwrap_err();
        assert!(err.to_string().contains("constraint.epsilon"), "{err}");
    }

    #[test]
    fn parallel_workers_reject_non_partitionable_archs() {
        let text = "dataset.kind = parity\ndataset.n = 8\nnetwork.arch = rnn\n\
network.seq_len = 3\nnetwork.widths = 1,4,1\nnetwork.activation = tanh\n\
network.loss = squared_error\nconstraint.kind = identity\nparallel.workers = 2\n";
        let err = parse(text, "test.cfg").unwrap_err();
        assert!(err.to_string().contains("nearest-neighbor"), "{err}");
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let text = "dataset.kind = xor\ndataset.kind = xor\n";
        let err = parse(text, "test.cfg").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }
}

//! TOML experiment files.
//!
//! ```toml
//! name = "grid-vs-line"          # optional prefix for configuration ids
//! output_dir = "runs"
//! qubit_cap = 24                 # optional, default 24
//! registers = 1                  # optional, for topologies without registers
//! entangler = "RZZ"              # or "CX"
//! layers = [1, 2, 3]             # a depth or a list of depths ...
//! seeds = { count = 10, base = 0 }   # or seeds = [1, 2, 3]
//!
//! [target]
//! kind = "univariate_gaussian"
//! mean = 0.65
//! variance = 0.04
//!
//! [topology]
//! kind = "grid2d"
//! rows = 3
//! cols = 3
//!
//! [schedule]                     # ... or a hierarchical schedule
//! stages = [{ active_per_register = 3, layers = 4 }, { active_per_register = 4, layers = 2 }]
//! epochs_per_stage = 500
//! arms = ["hierarchical", "scratch"]
//!
//! [train]
//! epochs = 1000
//! loss = "kl"
//! init = "uniform"
//! record_every = 10
//! adam = { lr = 0.01 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ansatz::{Entangler, HierarchySchedule, HierarchyStage, Topology, TopologyKind};
use crate::distributions::TargetSpec;
use crate::error::{QcbmError, Result};
use crate::statevec::DEFAULT_QUBIT_CAP;
use crate::trainer::{Experiment, Plan, TrainConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Depths {
    One(usize),
    Many(Vec<usize>),
}

impl Depths {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            Depths::One(d) => vec![*d],
            Depths::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range {
        count: usize,
        #[serde(default)]
        base: u64,
    },
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::List(vec![0])
    }
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { count, base } => (0..*count as u64).map(|i| base + i).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Hierarchical,
    Scratch,
}

fn default_arms() -> Vec<Arm> {
    vec![Arm::Hierarchical]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub stages: Vec<HierarchyStage>,
    #[serde(default)]
    pub epochs_per_stage: Option<usize>,
    #[serde(default = "default_arms")]
    pub arms: Vec<Arm>,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub target: TargetSpec,
    pub topology: TopologyKind,
    #[serde(default)]
    pub registers: Option<usize>,
    #[serde(default)]
    pub entangler: Entangler,
    #[serde(default)]
    pub layers: Option<Depths>,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub qubit_cap: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| QcbmError::config("toml", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| QcbmError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn qubit_cap(&self) -> usize {
        self.qubit_cap.unwrap_or(DEFAULT_QUBIT_CAP)
    }

    pub fn topology(&self) -> Result<Topology> {
        let topology =
            Topology::new(self.topology.clone()).map_err(|e| QcbmError::config("topology", e.to_string()))?;
        match self.registers {
            Some(r) => topology
                .with_registers(r)
                .map_err(|e| QcbmError::config("registers", e.to_string())),
            None => Ok(topology),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.target
            .validate()
            .map_err(|e| QcbmError::config("target", e.to_string()))?;
        let topology = self.topology()?;
        if self.target.dimensions() != topology.registers() {
            return Err(QcbmError::config(
                "target",
                format!(
                    "{} variable(s) but the topology has {} register(s)",
                    self.target.dimensions(),
                    topology.registers()
                ),
            ));
        }
        let cap = self.qubit_cap();
        if cap == 0 {
            return Err(QcbmError::config("qubit_cap", "must be >= 1"));
        }
        if topology.n_qubits() > cap {
            return Err(QcbmError::config(
                "topology",
                format!("{} qubits exceed the cap of {cap}", topology.n_qubits()),
            ));
        }
        self.train.validate()?;
        if let Some(m) = self.train.tv_resolution {
            if m * topology.registers() > cap {
                return Err(QcbmError::config(
                    "train.tv_resolution",
                    format!("{m} bits x {} registers exceed the cap of {cap}", topology.registers()),
                ));
            }
        }
        match (&self.layers, &self.schedule) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(QcbmError::config("layers", "give exactly one of `layers` and `schedule`"))
            }
            (Some(d), None) => {
                let d = d.to_vec();
                if d.is_empty() || d.contains(&0) {
                    return Err(QcbmError::config("layers", "need one or more depths, each >= 1"));
                }
            }
            (None, Some(s)) => {
                self.hierarchy(s)?;
                if s.arms.is_empty() {
                    return Err(QcbmError::config("schedule.arms", "must list at least one arm"));
                }
            }
        }
        if self.seeds.to_vec().is_empty() {
            return Err(QcbmError::config("seeds", "need at least one seed"));
        }
        Ok(())
    }

    fn hierarchy(&self, s: &ScheduleConfig) -> Result<HierarchySchedule> {
        let schedule = HierarchySchedule::new(s.stages.clone(), s.epochs_per_stage)
            .map_err(|e| QcbmError::config("schedule", e.to_string()))?;
        schedule
            .check_against(&self.topology()?)
            .map_err(|e| QcbmError::config("schedule", e.to_string()))?;
        Ok(schedule)
    }

    /// Named experiments in file order: one per depth, or one per arm.
    pub fn experiments(&self) -> Result<Vec<(String, Experiment)>> {
        let topology = self.topology()?;
        let prefix = self
            .name
            .clone()
            .unwrap_or_else(|| topology.kind().label());
        let train = TrainConfig {
            qubit_cap: self.qubit_cap(),
            ..self.train.clone()
        };
        let plans: Vec<(String, Plan)> = match (&self.layers, &self.schedule) {
            (Some(d), _) => d
                .to_vec()
                .into_iter()
                .map(|l| (format!("{prefix}-L{l}"), Plan::Layers(l)))
                .collect(),
            (None, Some(s)) => {
                let schedule = self.hierarchy(s)?;
                s.arms
                    .iter()
                    .map(|arm| match arm {
                        Arm::Hierarchical => (format!("{prefix}-hierarchical"), Plan::Hierarchical(schedule.clone())),
                        Arm::Scratch => (format!("{prefix}-scratch"), Plan::Scratch(schedule.clone())),
                    })
                    .collect()
            }
            (None, None) => return Err(QcbmError::config("layers", "give exactly one of `layers` and `schedule`")),
        };
        Ok(plans
            .into_iter()
            .map(|(id, plan)| {
                (
                    id,
                    Experiment {
                        target: self.target.clone(),
                        topology: topology.clone(),
                        entangler: self.entangler,
                        plan,
                        train: train.clone(),
                    },
                )
            })
            .collect())
    }

    /// SHA-256 over the canonical JSON form of every field that affects
    /// results. Formatting, key order and `output_dir` do not count.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

//! Adam, full-batch training loops, hierarchical staging and seed sweeps.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_circuit, expand_hierarchy, Circuit, Entangler, HierarchySchedule, Topology};
use crate::distributions::{
    coarse_grain, sample_target_with_cap, tv_at_resolution_with_cap, ProbabilityVector, TargetSpec,
};
use crate::error::{QcbmError, Result};
use crate::gradients::{LossKind, Simulator};
use crate::statevec::DEFAULT_QUBIT_CAP;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    hyper: AdamConfig,
}

impl AdamState {
    pub fn new(n_params: usize, hyper: AdamConfig) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            hyper,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn hyper(&self) -> AdamConfig {
        self.hyper
    }

    /// Appends zeroed moments for new parameter slots.
    pub fn grow(&mut self, n_params: usize) -> Result<()> {
        if n_params < self.m.len() {
            return Err(QcbmError::InvalidArgument(format!(
                "cannot shrink optimizer state from {} to {n_params} slots",
                self.m.len()
            )));
        }
        self.m.resize(n_params, 0.0);
        self.v.resize(n_params, 0.0);
        Ok(())
    }

    /// Bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(QcbmError::DimensionMismatch {
                expected: self.m.len(),
                found: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    state.step(params, grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Uniform angles in `[-π, π)`.
    #[default]
    Uniform,
    Zeros,
}

impl InitKind {
    pub fn sample(self, n_params: usize, seed: u64) -> Vec<f64> {
        match self {
            InitKind::Zeros => vec![0.0; n_params],
            InitKind::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n_params).map(|_| rng.random_range(-PI..PI)).collect()
            }
        }
    }
}

fn default_epochs() -> usize {
    1000
}

fn default_record_every() -> usize {
    10
}

fn default_cap() -> usize {
    DEFAULT_QUBIT_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: InitKind,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Bits per register at which TV is tracked; the target's full
    /// resolution when absent.
    #[serde(default)]
    pub tv_resolution: Option<usize>,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Adds `wall_ms` to every record. Off by default so that trajectories
    /// are reproducible byte for byte.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Largest register the simulator may allocate. Set from the
    /// experiment-level cap rather than per training section.
    #[serde(skip, default = "default_cap")]
    pub qubit_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: default_epochs(),
            loss: LossKind::Kl,
            seed: 0,
            init: InitKind::Uniform,
            record_every: default_record_every(),
            tv_resolution: None,
            adam: AdamConfig::default(),
            record_wall_time: false,
            qubit_cap: DEFAULT_QUBIT_CAP,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(QcbmError::config("train.epochs", "must be >= 1"));
        }
        if self.record_every == 0 {
            return Err(QcbmError::config("train.record_every", "must be >= 1"));
        }
        if self.tv_resolution == Some(0) {
            return Err(QcbmError::config("train.tv_resolution", "must be >= 1"));
        }
        let a = self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(QcbmError::config(
                "train.adam",
                "need lr > 0, 0 <= beta1, beta2 < 1 and epsilon > 0",
            ));
        }
        Ok(())
    }

    fn simulator(&self) -> Simulator {
        Simulator::new(self.qubit_cap)
    }
}

/// One recorded epoch. `epoch` counts optimizer steps taken in the stage,
/// so epoch 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: usize,
    pub epoch: usize,
    pub loss: f64,
    pub tv: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub stage: usize,
    pub entries: Vec<EpochRecord>,
    pub final_params: Vec<f64>,
}

impl TrainRecord {
    pub fn final_tv(&self) -> f64 {
        self.entries.last().map_or(f64::NAN, |e| e.tv)
    }

    pub fn final_loss(&self) -> f64 {
        self.entries.last().map_or(f64::NAN, |e| e.loss)
    }
}

/// What a training stage compares against.
struct StageTargets<'a> {
    loss: &'a ProbabilityVector,
    tv: &'a ProbabilityVector,
    tv_bits: usize,
}

fn run_stage(
    circuit: &Circuit,
    mut params: Vec<f64>,
    adam: &mut AdamState,
    targets: &StageTargets<'_>,
    config: &TrainConfig,
    epochs: usize,
    stage: usize,
    clock: Instant,
) -> Result<TrainRecord> {
    let sim = config.simulator();
    let mut entries = Vec::with_capacity(epochs / config.record_every + 2);
    for epoch in 0..=epochs {
        let (loss, q, grad) = if epoch < epochs {
            let e = sim.adjoint(circuit, &params, targets.loss, config.loss)?;
            (e.loss, e.probabilities, Some(e.gradient))
        } else {
            let q = sim.distribution(circuit, &params)?;
            (config.loss.value(q.values(), targets.loss.values()), q, None)
        };
        if epoch % config.record_every == 0 || epoch == epochs {
            let tv = tv_at_resolution_with_cap(targets.tv, &q, targets.tv_bits, config.qubit_cap)?;
            entries.push(EpochRecord {
                stage,
                epoch,
                loss,
                tv,
                wall_ms: config
                    .record_wall_time
                    .then(|| clock.elapsed().as_secs_f64() * 1e3),
            });
        }
        if let Some(g) = grad {
            adam.step(&mut params, &g)?;
        }
    }
    Ok(TrainRecord {
        stage,
        entries,
        final_params: params,
    })
}

fn full_bits(target: &ProbabilityVector) -> usize {
    target.register_shape().iter().copied().max().unwrap_or(0)
}

/// Full-batch Adam on `circuit` against `target`, which also serves as the
/// TV reference.
pub fn train(
    circuit: &Circuit,
    params0: &[f64],
    target: &ProbabilityVector,
    config: &TrainConfig,
) -> Result<TrainRecord> {
    config.validate()?;
    if params0.len() != circuit.n_params() {
        return Err(QcbmError::DimensionMismatch {
            expected: circuit.n_params(),
            found: params0.len(),
        });
    }
    if target.register_shape() != circuit.register_shape().as_slice() {
        return Err(QcbmError::ShapeMismatch {
            expected: circuit.register_shape(),
            found: target.register_shape().to_vec(),
        });
    }
    let mut adam = AdamState::new(circuit.n_params(), config.adam);
    let targets = StageTargets {
        loss: target,
        tv: target,
        tv_bits: config.tv_resolution.unwrap_or_else(|| full_bits(target)),
    };
    run_stage(
        circuit,
        params0.to_vec(),
        &mut adam,
        &targets,
        config,
        config.epochs,
        0,
        Instant::now(),
    )
}

fn full_target(spec: &TargetSpec, topology: &Topology, config: &TrainConfig) -> Result<ProbabilityVector> {
    if spec.dimensions() != topology.registers() {
        return Err(QcbmError::InvalidSchedule(format!(
            "target has {} variable(s) but the topology has {} register(s)",
            spec.dimensions(),
            topology.registers()
        )));
    }
    sample_target_with_cap(
        spec,
        &vec![topology.register_size(); topology.registers()],
        config.qubit_cap,
    )
}

/// Stage-wise training. Stage 1 starts from `config.init`; each later stage
/// expands the previous circuit (new qubits in `|+>`, new parameters zero)
/// and retrains every parameter against the target marginalized to the
/// active bits. TV is always reported against the full-resolution target.
pub fn train_hierarchical(
    schedule: &HierarchySchedule,
    topology: &Topology,
    entangler: Entangler,
    target: &TargetSpec,
    config: &TrainConfig,
) -> Result<Vec<TrainRecord>> {
    config.validate()?;
    schedule.check_against(topology)?;
    let p_full = full_target(target, topology, config)?;
    let size = topology.register_size();
    let tv_bits = config.tv_resolution.unwrap_or(size);
    let epochs = schedule.epochs_per_stage().unwrap_or(config.epochs);
    let clock = Instant::now();

    let first = schedule.stages()[0];
    let mut circuit = build_circuit(
        topology,
        first.layers,
        entangler,
        &topology.active_qubits(first.active_per_register)?,
    )?;
    let mut params = config.init.sample(circuit.n_params(), config.seed);
    let mut adam = AdamState::new(circuit.n_params(), config.adam);
    let mut records = Vec::with_capacity(schedule.stages().len());

    for (k, stage) in schedule.stages().iter().enumerate() {
        if k > 0 {
            let (next, next_params) = expand_hierarchy(&circuit, &params, topology, stage)?;
            circuit = next;
            params = next_params;
            adam.grow(circuit.n_params())?;
        }
        let drop = vec![size - stage.active_per_register; topology.registers()];
        let stage_target = coarse_grain(&p_full, &drop)?;
        let targets = StageTargets {
            loss: &stage_target,
            tv: &p_full,
            tv_bits,
        };
        let record = run_stage(&circuit, params, &mut adam, &targets, config, epochs, k, clock)?;
        params = record.final_params.clone();
        records.push(record);
    }
    Ok(records)
}

/// How an experiment builds and trains its circuit.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    /// A fixed-depth circuit over every qubit.
    Layers(usize),
    /// Stage-wise growth along the schedule.
    Hierarchical(HierarchySchedule),
    /// The final circuit of the schedule trained in one go from
    /// `config.init`, for as many epochs as all stages together.
    Scratch(HierarchySchedule),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub target: TargetSpec,
    pub topology: Topology,
    pub entangler: Entangler,
    pub plan: Plan,
    pub train: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub records: Vec<TrainRecord>,
    pub circuit: Circuit,
    pub final_params: Vec<f64>,
    pub final_tv: f64,
}

impl RunResult {
    pub fn entries(&self) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().flat_map(|r| r.entries.iter())
    }
}

impl Experiment {
    pub fn final_circuit(&self) -> Result<Circuit> {
        match &self.plan {
            Plan::Layers(layers) => {
                let all: Vec<usize> = (0..self.topology.n_qubits()).collect();
                build_circuit(&self.topology, *layers, self.entangler, &all)
            }
            Plan::Hierarchical(s) | Plan::Scratch(s) => {
                s.check_against(&self.topology)?;
                Ok(s.circuits(&self.topology, self.entangler)?.pop().unwrap())
            }
        }
    }

    /// One training run with `seed` replacing `train.seed`.
    pub fn run(&self, seed: u64) -> Result<RunResult> {
        let config = TrainConfig {
            seed,
            ..self.train.clone()
        };
        let (circuit, records) = match &self.plan {
            Plan::Hierarchical(schedule) => {
                let records =
                    train_hierarchical(schedule, &self.topology, self.entangler, &self.target, &config)?;
                (self.final_circuit()?, records)
            }
            Plan::Layers(_) | Plan::Scratch(_) => {
                let circuit = self.final_circuit()?;
                let config = match &self.plan {
                    Plan::Scratch(s) => TrainConfig {
                        epochs: s.epochs_per_stage().unwrap_or(config.epochs) * s.stages().len(),
                        ..config
                    },
                    _ => config,
                };
                let target = full_target(&self.target, &self.topology, &config)?;
                let params0 = config.init.sample(circuit.n_params(), seed);
                let record = train(&circuit, &params0, &target, &config)?;
                (circuit, vec![record])
            }
        };
        let last = records.last().unwrap();
        Ok(RunResult {
            seed,
            final_params: last.final_params.clone(),
            final_tv: last.final_tv(),
            circuit,
            records,
        })
    }

    /// Model distribution of a finished run.
    pub fn distribution(&self, run: &RunResult) -> Result<ProbabilityVector> {
        self.train.simulator().distribution(&run.circuit, &run.final_params)
    }
}

/// Spread of the final TV over seeds. Percentiles interpolate linearly
/// between order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config_id: String,
    pub n_seeds: usize,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
}

fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl SweepSummary {
    pub fn from_values(config_id: impl Into<String>, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(QcbmError::InvalidArgument("no values to summarize".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(SweepSummary {
            config_id: config_id.into(),
            n_seeds: sorted.len(),
            min: sorted[0],
            p25: percentile(&sorted, 25.0),
            median: percentile(&sorted, 50.0),
            p75: percentile(&sorted, 75.0),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Writes `config_id,n_seeds,min,p25,median,p75,max` rows.
pub fn write_summary_csv<W: std::io::Write>(rows: &[SweepSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub summary: SweepSummary,
    pub runs: Vec<RunResult>,
    /// Index into `runs` of the lowest final TV.
    pub best: usize,
}

impl SweepOutcome {
    pub fn best_run(&self) -> &RunResult {
        &self.runs[self.best]
    }
}

/// Runs every seed (in parallel on the current rayon pool) and summarizes
/// the final TVs. Results are ordered as `seeds`.
pub fn sweep(experiment: &Experiment, config_id: &str, seeds: &[u64]) -> Result<SweepOutcome> {
    if seeds.is_empty() {
        return Err(QcbmError::InvalidArgument("a sweep needs at least one seed".into()));
    }
    let runs: Vec<RunResult> = seeds
        .par_iter()
        .map(|&s| experiment.run(s))
        .collect::<Result<_>>()?;
    let finals: Vec<f64> = runs.iter().map(|r| r.final_tv).collect();
    let summary = SweepSummary::from_values(config_id, &finals)?;
    let best = (0..runs.len())
        .min_by(|&a, &b| finals[a].total_cmp(&finals[b]))
        .unwrap();
    Ok(SweepOutcome { summary, runs, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{HierarchyStage, TopologyKind};
    use crate::distributions::{sample_target, tv_at_resolution};
    use approx::assert_abs_diff_eq;

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut s = AdamState::new(3, AdamConfig::default());
        let mut p = vec![0.1, -0.2, 0.3];
        adam_step(&mut s, &mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut p = vec![0.0];
        adam_step(&mut s, &mut p, &[2.0]).unwrap();
        // m̂ = g, v̂ = g², step = lr * g / (|g| + ε)
        assert_abs_diff_eq!(p[0], -0.01 * 2.0 / (2.0 + 1e-8), epsilon = 1e-15);
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut theta = vec![1.0];
        let loss = |t: f64| 0.5 * t * t;
        let mut last = loss(theta[0]);
        for _ in 0..2 {
            let g = theta[0];
            adam_step(&mut s, &mut theta, &[g]).unwrap();
            assert!(loss(theta[0]) < last);
            last = loss(theta[0]);
        }
        assert!(adam_step(&mut s, &mut theta, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn adam_grow_keeps_old_moments() {
        let mut s = AdamState::new(2, AdamConfig::default());
        let mut p = vec![0.5, -0.5];
        s.step(&mut p, &[0.3, -0.7]).unwrap();
        let (m, v) = (s.first_moment().to_vec(), s.second_moment().to_vec());
        s.grow(4).unwrap();
        assert_eq!(&s.first_moment()[..2], &m[..]);
        assert_eq!(&s.second_moment()[..2], &v[..]);
        assert_eq!(&s.first_moment()[2..], &[0.0, 0.0]);
        assert!(s.grow(1).is_err());
    }

    #[test]
    fn percentiles() {
        let s = SweepSummary::from_values("x", &[0.3]).unwrap();
        assert_eq!((s.min, s.median, s.max), (0.3, 0.3, 0.3));
        let s = SweepSummary::from_values("x", &[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((s.min, s.p25, s.median, s.p75, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let s = SweepSummary::from_values("x", &[1.0, 2.0]).unwrap();
        assert_eq!((s.p25, s.median, s.p75), (1.25, 1.5, 1.75));
        assert!(SweepSummary::from_values("x", &[]).is_err());
    }

    #[test]
    fn summary_csv_layout() {
        let s = SweepSummary::from_values("grid-L1", &[0.5, 0.25]).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&[s], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "config_id,n_seeds,min,p25,median,p75,max\ngrid-L1,2,0.25,0.3125,0.375,0.4375,0.5\n"
        );
    }

    #[test]
    fn single_qubit_learns_delta() {
        let t = Topology::new(TopologyKind::Line { n: 1 }).unwrap();
        let c = build_circuit(&t, 1, Entangler::Rzz, &[0]).unwrap();
        let target = ProbabilityVector::univariate(vec![1.0, 0.0]).unwrap();
        let config = TrainConfig {
            epochs: 200,
            record_every: 50,
            ..TrainConfig::default()
        };
        let rec = train(&c, &[1.0], &target, &config).unwrap();
        assert!(rec.final_tv() < 1e-3, "TV = {}", rec.final_tv());
        let epochs: Vec<usize> = rec.entries.iter().map(|e| e.epoch).collect();
        assert_eq!(epochs, vec![0, 50, 100, 150, 200]);
    }

    #[test]
    fn small_steps_do_not_increase_loss() {
        let t = Topology::new(TopologyKind::Line { n: 2 }).unwrap();
        let c = build_circuit(&t, 2, Entangler::Rzz, &[0, 1]).unwrap();
        let target = ProbabilityVector::univariate(vec![0.1, 0.4, 0.4, 0.1]).unwrap();
        let config = TrainConfig {
            epochs: 10,
            record_every: 1,
            adam: AdamConfig {
                lr: 0.01,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let params0 = InitKind::Uniform.sample(c.n_params(), 4);
        let rec = train(&c, &params0, &target, &config).unwrap();
        for w in rec.entries.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12, "{} -> {}", w[0].loss, w[1].loss);
        }
    }

    #[test]
    fn train_rejects_bad_config() {
        let t = Topology::new(TopologyKind::Line { n: 1 }).unwrap();
        let c = build_circuit(&t, 1, Entangler::Rzz, &[0]).unwrap();
        let target = ProbabilityVector::univariate(vec![1.0, 0.0]).unwrap();
        let zero_epochs = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let err = train(&c, &[0.0], &target, &zero_epochs).unwrap_err();
        assert!(err.to_string().contains("train.epochs"));
        let wrong = ProbabilityVector::uniform(vec![2]).unwrap();
        assert!(train(&c, &[0.0], &wrong, &TrainConfig::default()).is_err());
    }

    fn gaussian() -> TargetSpec {
        TargetSpec::UnivariateGaussian {
            mean: 0.65,
            variance: 0.04,
            domain: [0.0, 1.0],
        }
    }

    #[test]
    fn hierarchical_stages_are_continuous() {
        let t = Topology::new(TopologyKind::Line { n: 3 }).unwrap();
        let sched = HierarchySchedule::new(
            vec![
                HierarchyStage { active_per_register: 2, layers: 2 },
                HierarchyStage { active_per_register: 3, layers: 1 },
            ],
            Some(40),
        )
        .unwrap();
        let config = TrainConfig {
            record_every: 7,
            seed: 3,
            ..TrainConfig::default()
        };
        let recs = train_hierarchical(&sched, &t, Entangler::Rzz, &gaussian(), &config).unwrap();
        assert_eq!(recs.len(), 2);
        let before = recs[0].entries.last().unwrap().tv;
        let after = recs[1].entries[0].tv;
        assert!((before - after).abs() < 1e-9, "{before} vs {after}");
        assert_eq!(recs[0].entries.last().unwrap().epoch, 40);
        assert_eq!(recs[1].stage, 1);
        // TV of stage 1 is measured at 3 bits, not 2.
        let p3 = sample_target(&gaussian(), &[3]).unwrap();
        let c1 = build_circuit(&t, 2, Entangler::Rzz, &[0, 1]).unwrap();
        let q1 = Simulator::default().distribution(&c1, &recs[0].final_params).unwrap();
        assert_abs_diff_eq!(tv_at_resolution(&p3, &q1, 3).unwrap(), before, epsilon = 1e-12);
    }

    #[test]
    fn single_stage_schedule_matches_plain_training() {
        let t = Topology::new(TopologyKind::Line { n: 3 }).unwrap();
        let sched = HierarchySchedule::new(
            vec![HierarchyStage { active_per_register: 3, layers: 2 }],
            None,
        )
        .unwrap();
        let config = TrainConfig {
            epochs: 30,
            seed: 11,
            ..TrainConfig::default()
        };
        let hier = Experiment {
            target: gaussian(),
            topology: t.clone(),
            entangler: Entangler::Rzz,
            plan: Plan::Hierarchical(sched),
            train: config.clone(),
        };
        let flat = Experiment {
            plan: Plan::Layers(2),
            ..hier.clone()
        };
        let a = hier.run(11).unwrap();
        let b = flat.run(11).unwrap();
        assert_eq!(a.records[0].entries, b.records[0].entries);
        assert_eq!(a.final_params, b.final_params);
    }

    #[test]
    fn sweep_is_deterministic() {
        let t = Topology::new(TopologyKind::Line { n: 3 }).unwrap();
        let exp = Experiment {
            target: gaussian(),
            topology: t,
            entangler: Entangler::Rzz,
            plan: Plan::Layers(1),
            train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
        };
        let a = sweep(&exp, "a", &[1, 2, 3]).unwrap();
        let b = sweep(&exp, "a", &[1, 2, 3]).unwrap();
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.best, b.best);
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.records[0].entries, y.records[0].entries);
        }
        let one = sweep(&exp, "one", &[5]).unwrap();
        assert_eq!(one.summary.min, one.summary.max);
        assert_eq!(one.summary.median, one.summary.min);
        assert!(sweep(&exp, "none", &[]).is_err());
    }
}

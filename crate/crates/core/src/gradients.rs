//! Forward simulation, amplitude-functional losses and their gradients.
//!
//! The adjoint pass differentiates any loss `L(q)` of the Born probabilities
//! `q_x = |c_x|^2`. With the boundary ket `b_x = dL/dq_x * c_x` we get
//! `dL/dθ_i = 2 Re <b_{i+1}| iG_i |ψ_i>`, where `ψ_i` is the state after gate
//! `i` and `b_{i+1}` the boundary ket pulled back through the later gates.
//! One forward sweep and one reverse sweep over two state vectors, plus a
//! scratch vector for each `iG_i ψ_i`, give every gradient element.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_circuit, Circuit, Entangler, Topology, TopologyKind};
use crate::distributions::{kl_values, sample_target, ProbabilityVector, TargetSpec, KL_EPSILON};
use crate::error::{QcbmError, Result};
use crate::statevec::{apply_inverse_pair, Gate, StateVector, DEFAULT_QUBIT_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    L2,
    #[default]
    Kl,
}

impl LossKind {
    /// `q` is the model, `p` the target.
    pub fn value(self, q: &[f64], p: &[f64]) -> f64 {
        match self {
            LossKind::L2 => q.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum(),
            LossKind::Kl => kl_values(p, q),
        }
    }

    pub fn dloss_dq(self, q: &[f64], p: &[f64]) -> Vec<f64> {
        match self {
            LossKind::L2 => q.iter().zip(p).map(|(a, b)| 2.0 * (a - b)).collect(),
            LossKind::Kl => q
                .iter()
                .zip(p)
                .map(|(qv, pv)| if *pv > 0.0 { -pv / qv.max(KL_EPSILON) } else { 0.0 })
                .collect(),
        }
    }
}

pub fn loss(q: &ProbabilityVector, p: &ProbabilityVector, kind: LossKind) -> Result<f64> {
    if q.register_shape() != p.register_shape() {
        return Err(QcbmError::ShapeMismatch {
            expected: p.register_shape().to_vec(),
            found: q.register_shape().to_vec(),
        });
    }
    Ok(kind.value(q.values(), p.values()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientMethod {
    Adjoint,
    FiniteDiff,
}

impl GradientMethod {
    pub fn name(self) -> &'static str {
        match self {
            GradientMethod::Adjoint => "adjoint",
            GradientMethod::FiniteDiff => "finite_diff",
        }
    }
}

/// Loss, model distribution and gradient at one parameter point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub probabilities: ProbabilityVector,
    pub gradient: Vec<f64>,
    /// Gate (or generator) applications to a state-sized vector.
    pub gate_applications: u64,
}

/// Simulation settings shared by the forward and gradient passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Simulator {
    pub qubit_cap: usize,
}

impl Default for Simulator {
    fn default() -> Self {
        Simulator {
            qubit_cap: DEFAULT_QUBIT_CAP,
        }
    }
}

fn angle(gate: &Gate, params: &[f64]) -> Option<f64> {
    gate.param_slot().map(|s| params[s])
}

fn check_params(circuit: &Circuit, params: &[f64]) -> Result<()> {
    if params.len() != circuit.n_params() {
        return Err(QcbmError::DimensionMismatch {
            expected: circuit.n_params(),
            found: params.len(),
        });
    }
    Ok(())
}

fn check_target(circuit: &Circuit, target: &ProbabilityVector) -> Result<()> {
    let shape = circuit.register_shape();
    if target.register_shape() != shape.as_slice() {
        return Err(QcbmError::ShapeMismatch {
            expected: shape,
            found: target.register_shape().to_vec(),
        });
    }
    Ok(())
}

impl Simulator {
    pub fn new(qubit_cap: usize) -> Self {
        Simulator { qubit_cap }
    }

    /// `|0...0>` evolved through every gate, on the compact register of the
    /// circuit's active qubits.
    pub fn forward(&self, circuit: &Circuit, params: &[f64]) -> Result<StateVector> {
        self.forward_counted(circuit, &circuit.compiled(), params).map(|(s, _)| s)
    }

    fn forward_counted(&self, circuit: &Circuit, ops: &[Gate], params: &[f64]) -> Result<(StateVector, u64)> {
        check_params(circuit, params)?;
        let mut psi = StateVector::zero_with_cap(circuit.n_active(), self.qubit_cap)?;
        for g in ops {
            psi.apply_gate(g, angle(g, params))?;
        }
        Ok((psi, ops.len() as u64))
    }

    /// Model distribution with the circuit's register shape.
    pub fn distribution(&self, circuit: &Circuit, params: &[f64]) -> Result<ProbabilityVector> {
        ProbabilityVector::from_state(&self.forward(circuit, params)?, circuit.register_shape())
    }

    pub fn evaluate_loss(
        &self,
        circuit: &Circuit,
        params: &[f64],
        target: &ProbabilityVector,
        kind: LossKind,
    ) -> Result<f64> {
        check_target(circuit, target)?;
        let psi = self.forward(circuit, params)?;
        Ok(kind.value(&psi.probabilities(), target.values()))
    }

    pub fn adjoint(
        &self,
        circuit: &Circuit,
        params: &[f64],
        target: &ProbabilityVector,
        kind: LossKind,
    ) -> Result<Evaluation> {
        check_target(circuit, target)?;
        let ops = circuit.compiled();
        let (mut psi, mut count) = self.forward_counted(circuit, &ops, params)?;
        let q = psi.probabilities();
        let loss = kind.value(&q, target.values());
        let mut gradient = vec![0.0; circuit.n_params()];

        if circuit.n_params() > 0 {
            let mut lambda = psi.clone();
            lambda.scale_by(&kind.dloss_dq(&q, target.values()))?;
            let mut scratch = psi.clone();
            for g in ops.iter().rev() {
                let theta = angle(g, params);
                // psi = ψ_i, lambda = b_{i+1}
                if let Some(slot) = g.param_slot() {
                    scratch.copy_from(&psi)?;
                    scratch.apply_generator(g)?;
                    count += 1;
                    gradient[slot] = 2.0 * lambda.inner_product(&scratch)?.re;
                }
                apply_inverse_pair(&mut psi, &mut lambda, g, theta)?;
                count += 2;
            }
        }

        Ok(Evaluation {
            loss,
            probabilities: ProbabilityVector::new(q, circuit.register_shape())?,
            gradient,
            gate_applications: count,
        })
    }

    /// Central differences `(L(θ+h) - L(θ-h)) / 2h`, one parameter at a time.
    pub fn finite_difference(
        &self,
        circuit: &Circuit,
        params: &[f64],
        target: &ProbabilityVector,
        kind: LossKind,
        h: f64,
    ) -> Result<(Vec<f64>, u64)> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(QcbmError::InvalidArgument(format!("step h = {h} must be positive")));
        }
        check_target(circuit, target)?;
        let ops = circuit.compiled();
        if circuit.n_params() == 0 {
            let (_, count) = self.forward_counted(circuit, &ops, params)?;
            return Ok((Vec::new(), count));
        }
        let mut shifted = params.to_vec();
        let mut count = 0;
        let eval = |theta: &[f64], count: &mut u64| -> Result<f64> {
            let (psi, c) = self.forward_counted(circuit, &ops, theta)?;
            *count += c;
            Ok(kind.value(&psi.probabilities(), target.values()))
        };
        let mut grad = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            shifted[i] = params[i] + h;
            let up = eval(&shifted, &mut count)?;
            shifted[i] = params[i] - h;
            let down = eval(&shifted, &mut count)?;
            shifted[i] = params[i];
            grad.push((up - down) / (2.0 * h));
        }
        Ok((grad, count))
    }
}

pub fn forward(circuit: &Circuit, params: &[f64]) -> Result<StateVector> {
    Simulator::default().forward(circuit, params)
}

pub fn adjoint_gradient(
    circuit: &Circuit,
    params: &[f64],
    target: &ProbabilityVector,
    kind: LossKind,
) -> Result<Vec<f64>> {
    Simulator::default().adjoint(circuit, params, target, kind).map(|e| e.gradient)
}

/// Default step for the finite-difference oracle.
pub const FD_STEP: f64 = 1e-5;

pub fn finite_difference_gradient(
    circuit: &Circuit,
    params: &[f64],
    target: &ProbabilityVector,
    kind: LossKind,
    h: f64,
) -> Result<Vec<f64>> {
    Simulator::default()
        .finite_difference(circuit, params, target, kind, h)
        .map(|(g, _)| g)
}

/// Closed-form gate-application counts of one gradient evaluation with
/// `G` gates and `M` parameterized gates:
///
/// * adjoint: `3G + M` (forward sweep, reverse sweep over ψ and the
///   boundary ket, one generator per parameter)
/// * finite differences: `2MG` (two forward sweeps per parameter)
///
/// A circuit without parameters costs one forward sweep either way.
pub fn count_gate_applications(circuit: &Circuit, method: GradientMethod) -> u64 {
    let g = circuit.gates().len() as u64;
    let m = circuit.parameterized_count() as u64;
    if m == 0 {
        return g;
    }
    match method {
        GradientMethod::Adjoint => 3 * g + m,
        GradientMethod::FiniteDiff => 2 * m * g,
    }
}

/// One row of the gradient benchmark CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub n_qubits: usize,
    pub layers: usize,
    pub n_params: usize,
    pub gate_applications: u64,
    pub wall_ms: f64,
    /// Gate applications relative to the adjoint method at the same size.
    pub ratio_vs_adjoint: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchSize {
    pub n_qubits: usize,
    pub layers: usize,
}

/// Times both gradient methods on line-connected RZZ circuits against a
/// Gaussian target. Wall time is the minimum over `repeats` runs. Fails if
/// a measured count disagrees with [`count_gate_applications`].
pub fn bench_gradients(sizes: &[BenchSize], repeats: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if sizes.is_empty() {
        return Err(QcbmError::InvalidArgument("no benchmark sizes given".into()));
    }
    let sim = Simulator::default();
    let target_spec = TargetSpec::UnivariateGaussian {
        mean: 0.65,
        variance: 0.04,
        domain: [0.0, 1.0],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for size in sizes {
        let topology = Topology::new(TopologyKind::Line { n: size.n_qubits })?;
        let all: Vec<usize> = (0..size.n_qubits).collect();
        let circuit = build_circuit(&topology, size.layers, Entangler::Rzz, &all)?;
        let target = sample_target(&target_spec, &[size.n_qubits])?;
        let params: Vec<f64> = (0..circuit.n_params())
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        let adjoint_count = count_gate_applications(&circuit, GradientMethod::Adjoint);
        for method in [GradientMethod::Adjoint, GradientMethod::FiniteDiff] {
            let mut best = f64::INFINITY;
            let mut measured = 0;
            for _ in 0..repeats.max(1) {
                let start = Instant::now();
                measured = match method {
                    GradientMethod::Adjoint => {
                        sim.adjoint(&circuit, &params, &target, LossKind::Kl)?.gate_applications
                    }
                    GradientMethod::FiniteDiff => {
                        sim.finite_difference(&circuit, &params, &target, LossKind::Kl, FD_STEP)?.1
                    }
                };
                best = best.min(start.elapsed().as_secs_f64() * 1e3);
            }
            let expected = count_gate_applications(&circuit, method);
            if measured != expected {
                return Err(QcbmError::InvalidArgument(format!(
                    "{} performed {measured} gate applications, expected {expected}",
                    method.name()
                )));
            }
            rows.push(BenchRow {
                method: method.name().to_string(),
                n_qubits: size.n_qubits,
                layers: size.layers,
                n_params: circuit.n_params(),
                gate_applications: measured,
                wall_ms: best,
                ratio_vs_adjoint: measured as f64 / adjoint_count as f64,
            });
        }
    }
    Ok(rows)
}

/// Writes `method,n_qubits,n_params,gate_applications,wall_ms` followed by
/// the `layers` and `ratio_vs_adjoint` columns.
pub fn write_bench_csv<W: std::io::Write>(rows: &[BenchRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "method",
        "n_qubits",
        "n_params",
        "gate_applications",
        "wall_ms",
        "layers",
        "ratio_vs_adjoint",
    ])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.n_qubits.to_string(),
            r.n_params.to_string(),
            r.gate_applications.to_string(),
            format!("{:.3}", r.wall_ms),
            r.layers.to_string(),
            format!("{:.3}", r.ratio_vs_adjoint),
        ])?;
    }
    w.flush()?;
    Ok(())
}

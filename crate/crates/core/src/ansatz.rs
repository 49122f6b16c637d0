//! Connectivity graphs, layered hardware-efficient circuits and their
//! hierarchical growth.
//!
//! Circuits are written against the full qubit numbering of their topology
//! but only touch an `active` subset. Simulation packs the active qubits into
//! a compact register in index order, so a stage with `a` active qubits per
//! register costs `2^(a * registers)` amplitudes no matter how large the final
//! circuit is.

use serde::{Deserialize, Serialize};

use crate::error::{QcbmError, Result};
use crate::statevec::Gate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterRegister {
    /// Corresponding qubits of consecutive registers (A-B, B-C, ...).
    #[default]
    Chain,
    /// Corresponding qubits of every pair of registers.
    FullTriangle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyKind {
    Line {
        n: usize,
    },
    Ring {
        n: usize,
    },
    #[serde(rename = "grid2d")]
    Grid2D {
        rows: usize,
        cols: usize,
    },
    AllToAll {
        n: usize,
    },
    /// `registers` copies of a `rows x cols` grid, linked position by position.
    MultiRegister {
        registers: usize,
        rows: usize,
        cols: usize,
        #[serde(default)]
        inter: InterRegister,
    },
}

impl TopologyKind {
    pub fn n_qubits(&self) -> usize {
        match *self {
            TopologyKind::Line { n } | TopologyKind::Ring { n } | TopologyKind::AllToAll { n } => n,
            TopologyKind::Grid2D { rows, cols } => rows * cols,
            TopologyKind::MultiRegister {
                registers,
                rows,
                cols,
                ..
            } => registers * rows * cols,
        }
    }

    /// Short label, e.g. `grid2d-3x3`.
    pub fn label(&self) -> String {
        match *self {
            TopologyKind::Line { n } => format!("line-{n}"),
            TopologyKind::Ring { n } => format!("ring-{n}"),
            TopologyKind::Grid2D { rows, cols } => format!("grid2d-{rows}x{cols}"),
            TopologyKind::AllToAll { n } => format!("all2all-{n}"),
            TopologyKind::MultiRegister {
                registers,
                rows,
                cols,
                inter,
            } => {
                let tag = match inter {
                    InterRegister::Chain => "chain",
                    InterRegister::FullTriangle => "tri",
                };
                format!("multi{registers}-{rows}x{cols}-{tag}")
            }
        }
    }
}

/// A connectivity graph with its register partition. Qubits of register `r`
/// are the contiguous block `r*size .. (r+1)*size`; inside a grid, qubits are
/// numbered row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    kind: TopologyKind,
    n_qubits: usize,
    registers: usize,
    edges: Vec<(usize, usize)>,
}

/// Builds the topology and checks it against an explicit qubit count.
pub fn build_topology(kind: &TopologyKind, n_qubits: usize) -> Result<Topology> {
    let topology = Topology::new(kind.clone())?;
    if topology.n_qubits != n_qubits {
        return Err(QcbmError::InvalidTopology(match kind {
            TopologyKind::Grid2D { rows, cols } => {
                format!("grid {rows}x{cols} has {} qubits, not {n_qubits}", rows * cols)
            }
            TopologyKind::MultiRegister { registers, .. } if n_qubits % registers != 0 => {
                format!("{n_qubits} qubits cannot be split into {registers} registers")
            }
            _ => format!("{} has {} qubits, not {n_qubits}", kind.label(), topology.n_qubits),
        }));
    }
    Ok(topology)
}

fn grid_edges(rows: usize, cols: usize, offset: usize, edges: &mut Vec<(usize, usize)>) {
    for r in 0..rows {
        for c in 0..cols {
            let q = offset + r * cols + c;
            if c + 1 < cols {
                edges.push((q, q + 1));
            }
            if r + 1 < rows {
                edges.push((q, q + cols));
            }
        }
    }
}

impl Topology {
    pub fn new(kind: TopologyKind) -> Result<Self> {
        let bad = |m: &str| Err(QcbmError::InvalidTopology(m.to_string()));
        let mut edges = Vec::new();
        let mut registers = 1;
        match kind {
            TopologyKind::Line { n } | TopologyKind::Ring { n } | TopologyKind::AllToAll { n }
                if n == 0 =>
            {
                return bad("qubit count must be >= 1");
            }
            TopologyKind::Line { n } => edges.extend((1..n).map(|q| (q - 1, q))),
            TopologyKind::Ring { n } => {
                edges.extend((1..n).map(|q| (q - 1, q)));
                if n > 2 {
                    edges.push((0, n - 1));
                }
            }
            TopologyKind::AllToAll { n } => {
                for a in 0..n {
                    edges.extend((a + 1..n).map(|b| (a, b)));
                }
            }
            TopologyKind::Grid2D { rows, cols } => {
                if rows == 0 || cols == 0 {
                    return bad("grid dimensions must be >= 1");
                }
                grid_edges(rows, cols, 0, &mut edges);
            }
            TopologyKind::MultiRegister {
                registers: k,
                rows,
                cols,
                inter,
            } => {
                if k == 0 || rows == 0 || cols == 0 {
                    return bad("register count and grid dimensions must be >= 1");
                }
                let size = rows * cols;
                for r in 0..k {
                    grid_edges(rows, cols, r * size, &mut edges);
                }
                for a in 0..k {
                    for b in a + 1..k {
                        if inter == InterRegister::Chain && b != a + 1 {
                            continue;
                        }
                        edges.extend((0..size).map(|p| (a * size + p, b * size + p)));
                    }
                }
                registers = k;
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Topology {
            n_qubits: kind.n_qubits(),
            kind,
            registers,
            edges,
        })
    }

    /// Reinterprets the qubits as `registers` equal contiguous blocks, e.g.
    /// an all-to-all graph carrying a three-variable target.
    pub fn with_registers(mut self, registers: usize) -> Result<Self> {
        if matches!(self.kind, TopologyKind::MultiRegister { registers: k, .. } if k != registers) {
            return Err(QcbmError::InvalidTopology(format!(
                "multi-register topology already has {} registers",
                self.registers
            )));
        }
        if registers == 0 || self.n_qubits % registers != 0 {
            return Err(QcbmError::InvalidTopology(format!(
                "{} qubits cannot be split into {registers} registers",
                self.n_qubits
            )));
        }
        self.registers = registers;
        Ok(self)
    }

    pub fn kind(&self) -> &TopologyKind {
        &self.kind
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn registers(&self) -> usize {
        self.registers
    }

    pub fn register_size(&self) -> usize {
        self.n_qubits / self.registers
    }

    /// Sorted `(a, b)` pairs with `a < b`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// The first `per_register` qubits of every register.
    pub fn active_qubits(&self, per_register: usize) -> Result<Vec<usize>> {
        if per_register == 0 || per_register > self.register_size() {
            return Err(QcbmError::InvalidSchedule(format!(
                "{per_register} active qubits per register is outside 1..={}",
                self.register_size()
            )));
        }
        let size = self.register_size();
        Ok((0..self.registers)
            .flat_map(|r| (0..per_register).map(move |p| r * size + p))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Entangler {
    #[default]
    #[serde(rename = "RZZ", alias = "rzz")]
    Rzz,
    #[serde(rename = "CX", alias = "cx")]
    Cx,
}

/// An ordered gate list whose parameterized gates own the slots
/// `0..n_params` in gate order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CircuitRepr", into = "CircuitRepr")]
pub struct Circuit {
    n_qubits: usize,
    registers: usize,
    active: Vec<usize>,
    entangler: Entangler,
    layers: usize,
    gates: Vec<Gate>,
    n_params: usize,
}

#[derive(Serialize, Deserialize)]
struct CircuitRepr {
    n_qubits: usize,
    #[serde(default = "one")]
    registers: usize,
    #[serde(default)]
    active: Option<Vec<usize>>,
    entangler: Entangler,
    #[serde(default)]
    layers: usize,
    gates: Vec<Gate>,
    n_params: usize,
}

fn one() -> usize {
    1
}

impl TryFrom<CircuitRepr> for Circuit {
    type Error = QcbmError;

    fn try_from(r: CircuitRepr) -> Result<Self> {
        let circuit = Circuit {
            active: r.active.unwrap_or_else(|| (0..r.n_qubits).collect()),
            n_qubits: r.n_qubits,
            registers: r.registers,
            entangler: r.entangler,
            layers: r.layers,
            gates: r.gates,
            n_params: r.n_params,
        };
        circuit.validate()?;
        Ok(circuit)
    }
}

impl From<Circuit> for CircuitRepr {
    fn from(c: Circuit) -> Self {
        CircuitRepr {
            n_qubits: c.n_qubits,
            registers: c.registers,
            active: Some(c.active),
            entangler: c.entangler,
            layers: c.layers,
            gates: c.gates,
            n_params: c.n_params,
        }
    }
}

impl Circuit {
    /// No gates, every qubit active.
    pub fn empty(n_qubits: usize) -> Self {
        Circuit {
            n_qubits,
            registers: 1,
            active: (0..n_qubits).collect(),
            entangler: Entangler::Rzz,
            layers: 0,
            gates: Vec::new(),
            n_params: 0,
        }
    }

    /// Checks slot numbering, target ranges and the register split.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(QcbmError::InvalidCircuit(m));
        if self.n_qubits == 0 || self.registers == 0 || self.n_qubits % self.registers != 0 {
            return bad(format!(
                "{} qubits cannot be split into {} registers",
                self.n_qubits, self.registers
            ));
        }
        if self.active.is_empty() {
            return bad("no active qubits".into());
        }
        if self.active.windows(2).any(|w| w[0] >= w[1]) {
            return bad("active qubits must be strictly increasing".into());
        }
        if *self.active.last().unwrap() >= self.n_qubits {
            return bad("active qubit out of range".into());
        }
        let mut next_slot = 0;
        for (i, g) in self.gates.iter().enumerate() {
            if let Some(q) = g.targets().iter().find(|q| self.active.binary_search(q).is_err()) {
                return bad(format!("gate {i} touches inactive qubit {q}"));
            }
            if let Some(slot) = g.param_slot() {
                if slot != next_slot {
                    return bad(format!("gate {i} has slot {slot}, expected {next_slot}"));
                }
                next_slot += 1;
            }
        }
        if next_slot != self.n_params {
            return bad(format!(
                "{next_slot} parameterized gates but n_params = {}",
                self.n_params
            ));
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn registers(&self) -> usize {
        self.registers
    }

    pub fn register_size(&self) -> usize {
        self.n_qubits / self.registers
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Active qubit count of every register; the register shape of the
    /// simulated distribution.
    pub fn register_shape(&self) -> Vec<usize> {
        let size = self.register_size();
        let mut shape = vec![0; self.registers];
        for &q in &self.active {
            shape[q / size] += 1;
        }
        shape
    }

    pub fn entangler(&self) -> Entangler {
        self.entangler
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn parameterized_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_parameterized()).count()
    }

    /// Gates relabeled onto the compact register of active qubits.
    pub fn compiled(&self) -> Vec<Gate> {
        let mut map = vec![usize::MAX; self.n_qubits];
        for (pos, &q) in self.active.iter().enumerate() {
            map[q] = pos;
        }
        self.gates.iter().map(|g| g.remapped(|q| map[q])).collect()
    }

    fn push_layers(&mut self, topology: &Topology, layers: usize) {
        let edges: Vec<(usize, usize)> = topology
            .edges()
            .iter()
            .copied()
            .filter(|(a, b)| self.active.binary_search(a).is_ok() && self.active.binary_search(b).is_ok())
            .collect();
        for _ in 0..layers {
            for &q in &self.active {
                self.gates.push(Gate::ry(q, self.n_params));
                self.n_params += 1;
            }
            for &(a, b) in &edges {
                match self.entangler {
                    Entangler::Rzz => {
                        self.gates.push(Gate::rzz(a, b, self.n_params));
                        self.n_params += 1;
                    }
                    Entangler::Cx => self.gates.push(Gate::cx(a, b)),
                }
            }
        }
        self.layers += layers;
    }
}

/// Per layer: `RY` on every active qubit in index order, then one entangler
/// on every edge with both ends active, in edge order.
pub fn build_circuit(
    topology: &Topology,
    layers: usize,
    entangler: Entangler,
    active: &[usize],
) -> Result<Circuit> {
    if active.is_empty() {
        return Err(QcbmError::InvalidCircuit("active qubit set is empty".into()));
    }
    if layers == 0 {
        return Err(QcbmError::InvalidCircuit("layers must be >= 1".into()));
    }
    let mut sorted = active.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&q) = sorted.iter().find(|&&q| q >= topology.n_qubits()) {
        return Err(QcbmError::QubitOutOfRange {
            qubit: q,
            n_qubits: topology.n_qubits(),
        });
    }
    let mut circuit = Circuit {
        n_qubits: topology.n_qubits(),
        registers: topology.registers(),
        active: sorted,
        entangler,
        layers: 0,
        gates: Vec::new(),
        n_params: 0,
    };
    circuit.push_layers(topology, layers);
    Ok(circuit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyStage {
    pub active_per_register: usize,
    pub layers: usize,
}

/// Stages of strictly growing active qubit counts. Every register grows by
/// the same amount at each stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchySchedule {
    stages: Vec<HierarchyStage>,
    epochs_per_stage: Option<usize>,
}

impl HierarchySchedule {
    pub fn new(stages: Vec<HierarchyStage>, epochs_per_stage: Option<usize>) -> Result<Self> {
        if stages.is_empty() {
            return Err(QcbmError::InvalidSchedule("schedule has no stages".into()));
        }
        if stages.iter().any(|s| s.layers == 0 || s.active_per_register == 0) {
            return Err(QcbmError::InvalidSchedule(
                "every stage needs >= 1 active qubit and >= 1 layer".into(),
            ));
        }
        if stages
            .windows(2)
            .any(|w| w[1].active_per_register <= w[0].active_per_register)
        {
            return Err(QcbmError::InvalidSchedule(
                "active qubit counts must strictly increase".into(),
            ));
        }
        if epochs_per_stage == Some(0) {
            return Err(QcbmError::InvalidSchedule("epochs_per_stage must be >= 1".into()));
        }
        Ok(HierarchySchedule {
            stages,
            epochs_per_stage,
        })
    }

    /// `start, start+1, ..., end` active qubits per register with
    /// `layers` new layers per stage.
    pub fn incremental(start: usize, end: usize, layers: usize, epochs_per_stage: Option<usize>) -> Result<Self> {
        Self::new(
            (start..=end)
                .map(|a| HierarchyStage {
                    active_per_register: a,
                    layers,
                })
                .collect(),
            epochs_per_stage,
        )
    }

    pub fn stages(&self) -> &[HierarchyStage] {
        &self.stages
    }

    pub fn epochs_per_stage(&self) -> Option<usize> {
        self.epochs_per_stage
    }

    pub fn total_layers(&self) -> usize {
        self.stages.iter().map(|s| s.layers).sum()
    }

    /// The last stage must activate every qubit of the topology.
    pub fn check_against(&self, topology: &Topology) -> Result<()> {
        let last = self.stages.last().unwrap().active_per_register;
        if last != topology.register_size() {
            return Err(QcbmError::InvalidSchedule(format!(
                "final stage activates {last} qubits per register but registers hold {}",
                topology.register_size()
            )));
        }
        Ok(())
    }

    /// The circuit of every stage, in order.
    pub fn circuits(&self, topology: &Topology, entangler: Entangler) -> Result<Vec<Circuit>> {
        let first = self.stages[0];
        let mut circuit = build_circuit(
            topology,
            first.layers,
            entangler,
            &topology.active_qubits(first.active_per_register)?,
        )?;
        let mut out = vec![circuit.clone()];
        for stage in &self.stages[1..] {
            let params = vec![0.0; circuit.n_params()];
            circuit = expand_hierarchy(&circuit, &params, topology, stage)?.0;
            out.push(circuit.clone());
        }
        Ok(out)
    }
}

/// Grows `prev` to the stage's active set: `H` on every newly activated
/// qubit, then the old gates, then `stage.layers` new layers over the
/// enlarged set. Old parameters are kept and new slots start at zero.
pub fn expand_hierarchy(
    prev: &Circuit,
    prev_params: &[f64],
    topology: &Topology,
    stage: &HierarchyStage,
) -> Result<(Circuit, Vec<f64>)> {
    if prev_params.len() != prev.n_params {
        return Err(QcbmError::DimensionMismatch {
            expected: prev.n_params,
            found: prev_params.len(),
        });
    }
    if topology.n_qubits() != prev.n_qubits || topology.registers() != prev.registers {
        return Err(QcbmError::InvalidSchedule(
            "topology does not match the circuit being expanded".into(),
        ));
    }
    if stage.layers == 0 {
        return Err(QcbmError::InvalidSchedule("stage adds no layers".into()));
    }
    if stage.active_per_register > topology.register_size() {
        return Err(QcbmError::InvalidSchedule(format!(
            "stage needs {} qubits per register but registers hold {}",
            stage.active_per_register,
            topology.register_size()
        )));
    }
    let active = topology.active_qubits(stage.active_per_register)?;
    if let Some(q) = prev.active.iter().find(|q| active.binary_search(q).is_err()) {
        return Err(QcbmError::InvalidSchedule(format!(
            "stage would deactivate qubit {q}"
        )));
    }
    let added: Vec<usize> = active
        .iter()
        .copied()
        .filter(|q| prev.active.binary_search(q).is_err())
        .collect();
    if added.is_empty() {
        return Err(QcbmError::InvalidSchedule("stage activates no new qubits".into()));
    }

    let mut gates: Vec<Gate> = added.iter().map(|&q| Gate::h(q)).collect();
    gates.extend(prev.gates.iter().cloned());
    let mut circuit = Circuit {
        n_qubits: prev.n_qubits,
        registers: prev.registers,
        active,
        entangler: prev.entangler,
        layers: prev.layers,
        gates,
        n_params: prev.n_params,
    };
    circuit.push_layers(topology, stage.layers);
    let mut params = prev_params.to_vec();
    params.resize(circuit.n_params, 0.0);
    Ok((circuit, params))
}

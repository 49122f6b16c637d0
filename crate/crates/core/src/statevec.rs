//! Dense state vectors and in-place gate kernels.
//!
//! Qubit 0 is the most significant bit of the basis index: a bitstring
//! `b_0 b_1 ... b_{n-1}` lives at index `sum_k b_k * 2^(n-1-k)`. Every gate
//! is applied by walking bit-masked index pairs, so no unitary matrix is
//! ever built.
//!
//! Gate conventions:
//!
//! * `RY(θ) = exp(-iθY/2) = [[cos θ/2, -sin θ/2], [sin θ/2, cos θ/2]]`
//! * `RZZ(θ) = exp(-iθ Z⊗Z / 2)`, a diagonal of `e^{∓iθ/2}` by parity
//! * `CX` is the controlled-NOT with `targets = [control, target]`
//! * `H` is the Hadamard
//!
//! The generators used by the adjoint pass match these: `U(θ) = exp(iGθ)` with
//! `G_RY = -Y/2` and `G_RZZ = -Z⊗Z/2`, so `dU/dθ = iG U`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QcbmError, Result};

/// Default cap on the number of simulated qubits. Two work vectors of
/// `2^24` complex doubles take about 512 MiB.
pub const DEFAULT_QUBIT_CAP: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    #[serde(rename = "RY")]
    Ry,
    #[serde(rename = "RZZ")]
    Rzz,
    #[serde(rename = "CX")]
    Cx,
    #[serde(rename = "H")]
    H,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Ry | GateKind::H => 1,
            GateKind::Rzz | GateKind::Cx => 2,
        }
    }

    pub fn is_parameterized(self) -> bool {
        matches!(self, GateKind::Ry | GateKind::Rzz)
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GateKind::Ry => "RY",
            GateKind::Rzz => "RZZ",
            GateKind::Cx => "CX",
            GateKind::H => "H",
        };
        f.write_str(s)
    }
}

/// A gate with its target qubits and, for parameterized kinds, the index of
/// its angle in the circuit's parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GateRepr", into = "GateRepr")]
pub struct Gate {
    kind: GateKind,
    targets: Vec<usize>,
    param_slot: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct GateRepr {
    kind: GateKind,
    targets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    param_slot: Option<usize>,
}

impl TryFrom<GateRepr> for Gate {
    type Error = QcbmError;

    fn try_from(r: GateRepr) -> Result<Self> {
        Gate::new(r.kind, r.targets, r.param_slot)
    }
}

impl From<Gate> for GateRepr {
    fn from(g: Gate) -> Self {
        GateRepr {
            kind: g.kind,
            targets: g.targets,
            param_slot: g.param_slot,
        }
    }
}

impl Gate {
    pub fn new(kind: GateKind, targets: Vec<usize>, param_slot: Option<usize>) -> Result<Self> {
        if targets.len() != kind.arity() {
            return Err(QcbmError::InvalidGate(format!(
                "{kind} takes {} target(s), got {}",
                kind.arity(),
                targets.len()
            )));
        }
        if kind.arity() == 2 && targets[0] == targets[1] {
            return Err(QcbmError::InvalidGate(format!(
                "{kind} targets must be distinct, got {:?}",
                targets
            )));
        }
        if kind.is_parameterized() != param_slot.is_some() {
            return Err(QcbmError::InvalidGate(if kind.is_parameterized() {
                format!("{kind} needs a parameter slot")
            } else {
                format!("{kind} cannot carry a parameter slot")
            }));
        }
        Ok(Gate {
            kind,
            targets,
            param_slot,
        })
    }

    pub fn ry(qubit: usize, slot: usize) -> Self {
        Gate {
            kind: GateKind::Ry,
            targets: vec![qubit],
            param_slot: Some(slot),
        }
    }

    /// Panics if `a == b`.
    pub fn rzz(a: usize, b: usize, slot: usize) -> Self {
        assert_ne!(a, b, "RZZ targets must be distinct");
        Gate {
            kind: GateKind::Rzz,
            targets: vec![a, b],
            param_slot: Some(slot),
        }
    }

    /// Panics if `control == target`.
    pub fn cx(control: usize, target: usize) -> Self {
        assert_ne!(control, target, "CX targets must be distinct");
        Gate {
            kind: GateKind::Cx,
            targets: vec![control, target],
            param_slot: None,
        }
    }

    pub fn h(qubit: usize) -> Self {
        Gate {
            kind: GateKind::H,
            targets: vec![qubit],
            param_slot: None,
        }
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn param_slot(&self) -> Option<usize> {
        self.param_slot
    }

    pub fn is_parameterized(&self) -> bool {
        self.kind.is_parameterized()
    }

    /// Same gate acting on relabeled qubits.
    pub fn remapped(&self, map: impl Fn(usize) -> usize) -> Gate {
        Gate {
            kind: self.kind,
            targets: self.targets.iter().map(|&q| map(q)).collect(),
            param_slot: self.param_slot,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

/// `|0...0>` on `n` qubits under the default cap.
pub fn zero_state(n: usize) -> Result<StateVector> {
    StateVector::zero(n)
}

pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<Complex64> {
    a.inner_product(b)
}

impl StateVector {
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::zero_with_cap(n_qubits, DEFAULT_QUBIT_CAP)
    }

    pub fn zero_with_cap(n_qubits: usize, cap: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(QcbmError::InvalidArgument(
                "a state needs at least one qubit".into(),
            ));
        }
        if n_qubits > cap {
            return Err(QcbmError::Capacity {
                requested: n_qubits,
                cap,
            });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. The length must be a power of two `>= 2`; no
    /// normalization is enforced.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QcbmError::InvalidArgument(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        Ok(StateVector {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `|amplitude_x|^2` for every basis index.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `<self|other> = sum_x conj(self_x) other_x`.
    pub fn inner_product(&self, other: &StateVector) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(QcbmError::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Overwrites this state with `other`'s amplitudes without reallocating.
    pub fn copy_from(&mut self, other: &StateVector) -> Result<()> {
        if self.n_qubits != other.n_qubits {
            return Err(QcbmError::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        self.amplitudes.copy_from_slice(&other.amplitudes);
        Ok(())
    }

    /// Replaces every amplitude `c_x` with `weights[x] * c_x`.
    pub fn scale_by(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.len() {
            return Err(QcbmError::DimensionMismatch {
                expected: self.len(),
                found: weights.len(),
            });
        }
        for (a, w) in self.amplitudes.iter_mut().zip(weights) {
            *a *= *w;
        }
        Ok(())
    }

    pub fn apply_gate(&mut self, gate: &Gate, theta: Option<f64>) -> Result<()> {
        let op = Op::resolve(gate, theta, self.n_qubits)?;
        op.apply([self.amplitudes.as_mut_slice()]);
        Ok(())
    }

    /// Applies `U(θ)^†`.
    pub fn apply_gate_inverse(&mut self, gate: &Gate, theta: Option<f64>) -> Result<()> {
        let op = Op::resolve(gate, theta.map(|t| -t), self.n_qubits)?;
        op.apply([self.amplitudes.as_mut_slice()]);
        Ok(())
    }

    /// Multiplies the state by `iG`, the derivative factor of a
    /// parameterized gate. Not unitary.
    pub fn apply_generator(&mut self, gate: &Gate) -> Result<()> {
        check_targets(gate, self.n_qubits)?;
        let n = self.n_qubits;
        let amps = self.amplitudes.as_mut_slice();
        match gate.kind {
            // iG = -iY/2 = [[0, -1/2], [1/2, 0]]
            GateKind::Ry => {
                kernel::real_2x2([amps], mask(n, gate.targets[0]), [[0.0, -0.5], [0.5, 0.0]])
            }
            // iG = -i(Z⊗Z)/2
            GateKind::Rzz => kernel::zz_phase(
                [amps],
                mask(n, gate.targets[0]),
                mask(n, gate.targets[1]),
                Complex64::new(0.0, -0.5),
                Complex64::new(0.0, 0.5),
            ),
            kind => return Err(QcbmError::NotParameterized(kind)),
        }
        Ok(())
    }
}

/// Applies `U(θ)^†` to two states of equal size in one sweep over the index
/// pairs. This is the backward step of the adjoint pass.
pub fn apply_inverse_pair(
    a: &mut StateVector,
    b: &mut StateVector,
    gate: &Gate,
    theta: Option<f64>,
) -> Result<()> {
    if a.n_qubits != b.n_qubits {
        return Err(QcbmError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let op = Op::resolve(gate, theta.map(|t| -t), a.n_qubits)?;
    op.apply([a.amplitudes.as_mut_slice(), b.amplitudes.as_mut_slice()]);
    Ok(())
}

#[inline]
fn mask(n_qubits: usize, qubit: usize) -> usize {
    1 << (n_qubits - 1 - qubit)
}

fn check_targets(gate: &Gate, n_qubits: usize) -> Result<()> {
    for &q in &gate.targets {
        if q >= n_qubits {
            return Err(QcbmError::QubitOutOfRange { qubit: q, n_qubits });
        }
    }
    Ok(())
}

/// A gate resolved against a register size and angle.
enum Op {
    Real2x2 { mask: usize, m: [[f64; 2]; 2] },
    ZzPhase { a: usize, b: usize, even: Complex64, odd: Complex64 },
    Cx { control: usize, target: usize },
}

impl Op {
    fn resolve(gate: &Gate, theta: Option<f64>, n_qubits: usize) -> Result<Op> {
        check_targets(gate, n_qubits)?;
        let t = &gate.targets;
        match (gate.kind.is_parameterized(), theta) {
            (true, None) => return Err(QcbmError::MissingAngle(gate.kind)),
            (false, Some(_)) => return Err(QcbmError::UnexpectedAngle(gate.kind)),
            _ => {}
        }
        Ok(match gate.kind {
            GateKind::Ry => {
                let (s, c) = (theta.unwrap_or_default() / 2.0).sin_cos();
                Op::Real2x2 {
                    mask: mask(n_qubits, t[0]),
                    m: [[c, -s], [s, c]],
                }
            }
            GateKind::H => {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                Op::Real2x2 {
                    mask: mask(n_qubits, t[0]),
                    m: [[r, r], [r, -r]],
                }
            }
            GateKind::Rzz => {
                let half = theta.unwrap_or_default() / 2.0;
                Op::ZzPhase {
                    a: mask(n_qubits, t[0]),
                    b: mask(n_qubits, t[1]),
                    even: Complex64::from_polar(1.0, -half),
                    odd: Complex64::from_polar(1.0, half),
                }
            }
            GateKind::Cx => Op::Cx {
                control: mask(n_qubits, t[0]),
                target: mask(n_qubits, t[1]),
            },
        })
    }

    fn apply<const N: usize>(&self, lanes: [&mut [Complex64]; N]) {
        match *self {
            Op::Real2x2 { mask, m } => kernel::real_2x2(lanes, mask, m),
            Op::ZzPhase { a, b, even, odd } => kernel::zz_phase(lanes, a, b, even, odd),
            Op::Cx { control, target } => kernel::cx(lanes, control, target),
        }
    }
}

/// Kernels over `N` equally sized amplitude arrays ("lanes"); every lane
/// receives the same transformation in the same pass.
mod kernel {
    use num_complex::Complex64;

    pub(super) fn real_2x2<const N: usize>(
        mut lanes: [&mut [Complex64]; N],
        mask: usize,
        m: [[f64; 2]; 2],
    ) {
        let len = lanes[0].len();
        let mut base = 0;
        while base < len {
            for i in base..base + mask {
                let j = i + mask;
                for lane in lanes.iter_mut() {
                    let (a, b) = (lane[i], lane[j]);
                    lane[i] = a * m[0][0] + b * m[0][1];
                    lane[j] = a * m[1][0] + b * m[1][1];
                }
            }
            base += mask << 1;
        }
    }

    pub(super) fn zz_phase<const N: usize>(
        mut lanes: [&mut [Complex64]; N],
        a: usize,
        b: usize,
        even: Complex64,
        odd: Complex64,
    ) {
        let len = lanes[0].len();
        for i in 0..len {
            let phase = if ((i & a) != 0) ^ ((i & b) != 0) { odd } else { even };
            for lane in lanes.iter_mut() {
                lane[i] *= phase;
            }
        }
    }

    pub(super) fn cx<const N: usize>(mut lanes: [&mut [Complex64]; N], control: usize, target: usize) {
        let len = lanes[0].len();
        for i in 0..len {
            if i & control != 0 && i & target == 0 {
                for lane in lanes.iter_mut() {
                    lane.swap(i, i | target);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_amps(state: &StateVector, expected: &[Complex64], tol: f64) {
        assert_eq!(state.len(), expected.len());
        for (a, e) in state.amplitudes().iter().zip(expected) {
            assert_abs_diff_eq!(a.re, e.re, epsilon = tol);
            assert_abs_diff_eq!(a.im, e.im, epsilon = tol);
        }
    }

    #[test]
    fn zero_state_examples() {
        assert_amps(&zero_state(1).unwrap(), &[c(1.0, 0.0), c(0.0, 0.0)], 0.0);
        assert_amps(
            &zero_state(2).unwrap(),
            &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            0.0,
        );
        let err = zero_state(25).unwrap_err();
        assert_eq!(err, QcbmError::Capacity { requested: 25, cap: 24 });
        assert!(err.to_string().contains("24"));
        assert!(zero_state(0).is_err());
        assert!(StateVector::zero_with_cap(5, 4).is_err());
    }

    #[test]
    fn ry_zero_is_identity() {
        let mut s = zero_state(2).unwrap();
        s.apply_gate(&Gate::h(0), None).unwrap();
        s.apply_gate(&Gate::ry(1, 0), Some(0.3)).unwrap();
        let before = s.clone();
        s.apply_gate(&Gate::ry(0, 0), Some(0.0)).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn hadamard_on_zero_is_plus() {
        let mut s = zero_state(1).unwrap();
        s.apply_gate(&Gate::h(0), None).unwrap();
        assert_amps(&s, &[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)], 1e-15);
    }

    #[test]
    fn ry_half_pi_on_zero() {
        let mut s = zero_state(1).unwrap();
        s.apply_gate(&Gate::ry(0, 0), Some(PI / 2.0)).unwrap();
        let v = (PI / 4.0).cos();
        assert_amps(&s, &[c(v, 0.0), c((PI / 4.0).sin(), 0.0)], 1e-15);
        assert_abs_diff_eq!(v, 0.7071, epsilon = 1e-4);
    }

    #[test]
    fn angle_presence_is_checked() {
        let mut s = zero_state(2).unwrap();
        assert_eq!(
            s.apply_gate(&Gate::ry(0, 0), None),
            Err(QcbmError::MissingAngle(GateKind::Ry))
        );
        assert_eq!(
            s.apply_gate(&Gate::cx(0, 1), Some(1.0)),
            Err(QcbmError::UnexpectedAngle(GateKind::Cx))
        );
        assert!(matches!(
            s.apply_gate(&Gate::h(2), None),
            Err(QcbmError::QubitOutOfRange { .. })
        ));
    }

    #[test]
    fn gate_constructor_rejects_bad_shapes() {
        assert!(Gate::new(GateKind::Rzz, vec![1, 1], Some(0)).is_err());
        assert!(Gate::new(GateKind::Cx, vec![0], None).is_err());
        assert!(Gate::new(GateKind::Ry, vec![0], None).is_err());
        assert!(Gate::new(GateKind::H, vec![0], Some(3)).is_err());
        assert!(Gate::new(GateKind::Rzz, vec![0, 2], Some(0)).is_ok());
    }

    #[test]
    fn gate_json_layout() {
        let g = Gate::rzz(0, 3, 7);
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, r#"{"kind":"RZZ","targets":[0,3],"param_slot":7}"#);
        let h = serde_json::to_string(&Gate::h(2)).unwrap();
        assert_eq!(h, r#"{"kind":"H","targets":[2]}"#);
        let back: Gate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Gate>(r#"{"kind":"CX","targets":[1,1]}"#).is_err());
    }

    #[test]
    fn generator_examples() {
        let mut s = zero_state(1).unwrap();
        s.apply_generator(&Gate::ry(0, 0)).unwrap();
        assert_amps(&s, &[c(0.0, 0.0), c(0.5, 0.0)], 1e-15);

        let mut s = zero_state(2).unwrap();
        s.apply_generator(&Gate::rzz(0, 1, 0)).unwrap();
        assert_amps(
            &s,
            &[c(0.0, -0.5), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            1e-15,
        );

        let mut s = zero_state(2).unwrap();
        assert_eq!(
            s.apply_generator(&Gate::cx(0, 1)),
            Err(QcbmError::NotParameterized(GateKind::Cx))
        );
        assert!(s.apply_generator(&Gate::h(0)).is_err());
    }

    #[test]
    fn probabilities_examples() {
        let s = StateVector::from_amplitudes(vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)])
            .unwrap();
        let p = s.probabilities();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-15);

        let s = StateVector::from_amplitudes(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(s.probabilities(), vec![1.0, 0.0]);

        let s = StateVector::from_amplitudes(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let p = s.probabilities();
        assert_abs_diff_eq!(p[0], 0.36, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.64, epsilon = 1e-15);
    }

    #[test]
    fn inner_product_examples() {
        let plus = StateVector::from_amplitudes(vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)])
            .unwrap();
        let zero = zero_state(1).unwrap();
        let mut one = zero_state(1).unwrap();
        one.apply_gate(&Gate::ry(0, 0), Some(PI)).unwrap();

        let n = inner_product(&plus, &plus).unwrap();
        assert_abs_diff_eq!(n.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(inner_product(&zero, &one).unwrap().norm(), 0.0, epsilon = 1e-15);
        let v = inner_product(&plus, &zero).unwrap();
        assert_abs_diff_eq!(v.re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);

        assert!(matches!(
            inner_product(&zero, &zero_state(2).unwrap()),
            Err(QcbmError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        let mut s = zero_state(2).unwrap();
        s.apply_gate(&Gate::h(0), None).unwrap();
        let p = s.probabilities();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 0.5, epsilon = 1e-15);
        assert_eq!(p[1], 0.0);
        assert_eq!(p[3], 0.0);
    }

    #[test]
    fn cx_flips_target_when_control_set() {
        // |10> -> |11>
        let mut s = zero_state(2).unwrap();
        s.apply_gate(&Gate::ry(0, 0), Some(PI)).unwrap();
        s.apply_gate(&Gate::cx(0, 1), None).unwrap();
        assert_abs_diff_eq!(s.probabilities()[3], 1.0, epsilon = 1e-15);
        // control clear: nothing happens
        let mut s = zero_state(2).unwrap();
        s.apply_gate(&Gate::cx(0, 1), None).unwrap();
        assert_eq!(s, zero_state(2).unwrap());
    }

    #[test]
    fn inverse_pair_matches_two_single_inverses() {
        let mut a = zero_state(3).unwrap();
        for q in 0..3 {
            a.apply_gate(&Gate::h(q), None).unwrap();
        }
        a.apply_gate(&Gate::ry(1, 0), Some(0.4)).unwrap();
        let mut b = a.clone();
        b.apply_gate(&Gate::rzz(0, 2, 0), Some(1.1)).unwrap();

        for (gate, theta) in [
            (Gate::ry(2, 0), Some(0.7)),
            (Gate::rzz(1, 2, 0), Some(-0.3)),
            (Gate::cx(2, 0), None),
            (Gate::h(1), None),
        ] {
            let (mut a1, mut b1) = (a.clone(), b.clone());
            a1.apply_gate_inverse(&gate, theta).unwrap();
            b1.apply_gate_inverse(&gate, theta).unwrap();
            let (mut a2, mut b2) = (a.clone(), b.clone());
            apply_inverse_pair(&mut a2, &mut b2, &gate, theta).unwrap();
            assert_eq!(a1, a2);
            assert_eq!(b1, b2);
        }
    }
}

//! Target distributions, the bitstring/domain mapping, resolution changes
//! and the KL / TV metrics.
//!
//! A multivariate bitstring is the concatenation `|b_A b_B b_C>` of its
//! registers, register A most significant. Inside a register the earlier
//! (lower-index) qubits are the more significant digits, so adding a
//! least-significant bit to every register refines each axis by a factor 2.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{QcbmError, Result};
use crate::statevec::{StateVector, DEFAULT_QUBIT_CAP};

/// Clamp applied to model probabilities inside `log` and `1/q`.
pub const KL_EPSILON: f64 = 1e-12;

/// Allowed deviation of `sum(values)` from 1 when building a vector.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-8;

/// Per-register digit layout of a global basis index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitLayout {
    register_bits: Vec<usize>,
}

impl BitLayout {
    pub fn new(register_bits: Vec<usize>) -> Self {
        BitLayout { register_bits }
    }

    pub fn register_bits(&self) -> &[usize] {
        &self.register_bits
    }

    pub fn total_bits(&self) -> usize {
        self.register_bits.iter().sum()
    }

    /// Writes the register digits of `index` into `digits`, register A first.
    pub fn split_into(&self, mut index: usize, digits: &mut [usize]) {
        for (r, &bits) in self.register_bits.iter().enumerate().rev() {
            digits[r] = index & ((1 << bits) - 1);
            index >>= bits;
        }
    }

    pub fn split(&self, index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.register_bits.len()];
        self.split_into(index, &mut digits);
        digits
    }

    pub fn join(&self, digits: &[usize]) -> usize {
        self.register_bits
            .iter()
            .zip(digits)
            .fold(0, |acc, (&bits, &d)| (acc << bits) | d)
    }
}

/// A normalized histogram over `2^resolution` bins.
///
/// Serialized as the histogram dump `{resolution, register_shape, values}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistogramRepr", into = "HistogramRepr")]
pub struct ProbabilityVector {
    values: Vec<f64>,
    register_shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct HistogramRepr {
    resolution: usize,
    register_shape: Vec<usize>,
    values: Vec<f64>,
}

impl TryFrom<HistogramRepr> for ProbabilityVector {
    type Error = QcbmError;

    fn try_from(r: HistogramRepr) -> Result<Self> {
        let total: usize = r.register_shape.iter().sum();
        if total != r.resolution {
            return Err(QcbmError::InvalidDistribution(format!(
                "resolution {} does not match register shape {:?}",
                r.resolution, r.register_shape
            )));
        }
        ProbabilityVector::new(r.values, r.register_shape)
    }
}

impl From<ProbabilityVector> for HistogramRepr {
    fn from(p: ProbabilityVector) -> Self {
        HistogramRepr {
            resolution: p.resolution(),
            register_shape: p.register_shape,
            values: p.values,
        }
    }
}

impl ProbabilityVector {
    pub fn new(values: Vec<f64>, register_shape: Vec<usize>) -> Result<Self> {
        if register_shape.is_empty() {
            return Err(QcbmError::InvalidDistribution(
                "register shape is empty".into(),
            ));
        }
        let bits: usize = register_shape.iter().sum();
        if bits >= usize::BITS as usize || values.len() != 1usize << bits {
            return Err(QcbmError::DimensionMismatch {
                expected: 1usize.checked_shl(bits as u32).unwrap_or(usize::MAX),
                found: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(QcbmError::InvalidDistribution(format!(
                "entry {bad} is not a non-negative number"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(QcbmError::InvalidDistribution(format!(
                "values sum to {sum}, not 1"
            )));
        }
        Ok(ProbabilityVector {
            values,
            register_shape,
        })
    }

    /// Single-register vector; the length must be a power of two.
    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        let len = values.len();
        if !len.is_power_of_two() {
            return Err(QcbmError::InvalidDistribution(format!(
                "length {len} is not a power of two"
            )));
        }
        Self::new(values, vec![len.trailing_zeros() as usize])
    }

    pub fn uniform(register_shape: Vec<usize>) -> Result<Self> {
        let n = 1usize << register_shape.iter().sum::<usize>();
        Self::new(vec![1.0 / n as f64; n], register_shape)
    }

    /// Born-rule distribution of a state, read with the given register split.
    pub fn from_state(state: &StateVector, register_shape: Vec<usize>) -> Result<Self> {
        let bits: usize = register_shape.iter().sum();
        if bits != state.n_qubits() {
            return Err(QcbmError::DimensionMismatch {
                expected: state.n_qubits(),
                found: bits,
            });
        }
        Self::new(state.probabilities(), register_shape)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn register_shape(&self) -> &[usize] {
        &self.register_shape
    }

    pub fn registers(&self) -> usize {
        self.register_shape.len()
    }

    /// Total bit count.
    pub fn resolution(&self) -> usize {
        self.register_shape.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> BitLayout {
        BitLayout::new(self.register_shape.clone())
    }

    /// One-dimensional marginal over the digits of `register`.
    pub fn marginal(&self, register: usize) -> Result<Vec<f64>> {
        if register >= self.registers() {
            return Err(QcbmError::InvalidArgument(format!(
                "register {register} out of range for {} registers",
                self.registers()
            )));
        }
        let layout = self.layout();
        let mut digits = vec![0; self.registers()];
        let mut out = vec![0.0; 1 << self.register_shape[register]];
        for (i, &v) in self.values.iter().enumerate() {
            layout.split_into(i, &mut digits);
            out[digits[register]] += v;
        }
        Ok(out)
    }

    /// Writes `index,value` rows.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([i.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    fn same_shape(&self, other: &ProbabilityVector) -> Result<()> {
        if self.register_shape != other.register_shape {
            return Err(QcbmError::ShapeMismatch {
                expected: self.register_shape.clone(),
                found: other.register_shape.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}

/// Closed-form target densities. Univariate targets live on `domain`;
/// the multivariate Gaussian is restricted to the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    UnivariateGaussian {
        mean: f64,
        variance: f64,
        #[serde(default = "unit_interval")]
        domain: [f64; 2],
    },
    GaussianMixture {
        components: Vec<MixtureComponent>,
        #[serde(default = "unit_interval")]
        domain: [f64; 2],
    },
    MultivariateGaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
}

impl TargetSpec {
    /// Number of variables, one register each.
    pub fn dimensions(&self) -> usize {
        match self {
            TargetSpec::MultivariateGaussian { mean, .. } => mean.len(),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(QcbmError::InvalidDistribution(m));
        let check_domain = |d: &[f64; 2]| {
            if !(d[0].is_finite() && d[1].is_finite() && d[0] < d[1]) {
                return bad(format!("domain {d:?} is not an increasing interval"));
            }
            Ok(())
        };
        match self {
            TargetSpec::UnivariateGaussian {
                mean,
                variance,
                domain,
            } => {
                check_domain(domain)?;
                if !mean.is_finite() {
                    return bad(format!("mean {mean} is not finite"));
                }
                if !(*variance > 0.0 && variance.is_finite()) {
                    return bad(format!("variance {variance} must be positive"));
                }
            }
            TargetSpec::GaussianMixture { components, domain } => {
                check_domain(domain)?;
                if components.is_empty() {
                    return bad("mixture has no components".into());
                }
                for c in components {
                    if !(c.weight >= 0.0) || !c.mean.is_finite() {
                        return bad(format!("bad mixture component {c:?}"));
                    }
                    if !(c.variance > 0.0 && c.variance.is_finite()) {
                        return bad(format!("variance {} must be positive", c.variance));
                    }
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("mixture weights sum to {total}, not 1"));
                }
            }
            TargetSpec::MultivariateGaussian { mean, covariance } => {
                mvn_precision(mean, covariance)?;
            }
        }
        Ok(())
    }
}

/// Validates `(mean, covariance)` and returns the precision matrix `Σ^-1`.
fn mvn_precision(mean: &[f64], covariance: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = mean.len();
    if k == 0 {
        return Err(QcbmError::InvalidDistribution("mean vector is empty".into()));
    }
    if covariance.len() != k || covariance.iter().any(|row| row.len() != k) {
        return Err(QcbmError::InvalidDistribution(format!(
            "covariance must be {k}x{k} to match the mean"
        )));
    }
    if mean.iter().chain(covariance.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(QcbmError::InvalidDistribution(
            "non-finite mean or covariance entry".into(),
        ));
    }
    let sigma = DMatrix::from_fn(k, k, |i, j| covariance[i][j]);
    for i in 0..k {
        for j in 0..i {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 {
                return Err(QcbmError::NotPositiveDefinite);
            }
        }
    }
    let chol = sigma.cholesky().ok_or(QcbmError::NotPositiveDefinite)?;
    Ok(chol.inverse())
}

fn gaussian_kernel(x: f64, mean: f64, variance: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// Midpoint of bin `digit` out of `2^bits` on `[lo, hi]`.
pub fn bin_midpoint(digit: usize, bits: usize, domain: [f64; 2]) -> f64 {
    domain[0] + (domain[1] - domain[0]) * (digit as f64 + 0.5) / (1u64 << bits) as f64
}

pub fn sample_target(spec: &TargetSpec, register_bits: &[usize]) -> Result<ProbabilityVector> {
    sample_target_with_cap(spec, register_bits, DEFAULT_QUBIT_CAP)
}

/// Evaluates the density at the bin midpoints of each register axis and
/// normalizes the result.
pub fn sample_target_with_cap(
    spec: &TargetSpec,
    register_bits: &[usize],
    cap: usize,
) -> Result<ProbabilityVector> {
    spec.validate()?;
    if register_bits.len() != spec.dimensions() {
        return Err(QcbmError::InvalidDistribution(format!(
            "target has {} variable(s) but {} register(s) were given",
            spec.dimensions(),
            register_bits.len()
        )));
    }
    let total: usize = register_bits.iter().sum();
    if total > cap {
        return Err(QcbmError::Capacity {
            requested: total,
            cap,
        });
    }
    if total == 0 {
        return Err(QcbmError::InvalidArgument("resolution must be >= 1 bit".into()));
    }

    let mut values: Vec<f64> = match spec {
        TargetSpec::UnivariateGaussian {
            mean,
            variance,
            domain,
        } => (0..1usize << total)
            .map(|d| gaussian_kernel(bin_midpoint(d, total, *domain), *mean, *variance))
            .collect(),
        TargetSpec::GaussianMixture { components, domain } => (0..1usize << total)
            .map(|d| {
                let x = bin_midpoint(d, total, *domain);
                components
                    .iter()
                    .map(|c| c.weight * gaussian_kernel(x, c.mean, c.variance))
                    .sum()
            })
            .collect(),
        TargetSpec::MultivariateGaussian { mean, covariance } => {
            let precision = mvn_precision(mean, covariance)?;
            let layout = BitLayout::new(register_bits.to_vec());
            let mu = DVector::from_column_slice(mean);
            let mut digits = vec![0; register_bits.len()];
            let mut x = DVector::zeros(mean.len());
            (0..1usize << total)
                .map(|i| {
                    layout.split_into(i, &mut digits);
                    for (r, (&d, &bits)) in digits.iter().zip(register_bits).enumerate() {
                        x[r] = bin_midpoint(d, bits, [0.0, 1.0]);
                    }
                    let diff = &x - &mu;
                    (-0.5 * diff.dot(&(&precision * &diff))).exp()
                })
                .collect()
        }
    };

    let norm: f64 = values.iter().sum();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(QcbmError::InvalidDistribution(
            "density vanishes on every grid point".into(),
        ));
    }
    values.iter_mut().for_each(|v| *v /= norm);
    ProbabilityVector::new(values, register_bits.to_vec())
}

/// Marginalizes out the `drop_bits[r]` least significant digits of every
/// register `r`.
pub fn coarse_grain(q: &ProbabilityVector, drop_bits: &[usize]) -> Result<ProbabilityVector> {
    if drop_bits.len() != q.registers() {
        return Err(QcbmError::DimensionMismatch {
            expected: q.registers(),
            found: drop_bits.len(),
        });
    }
    if let Some(r) = (0..drop_bits.len()).find(|&r| drop_bits[r] > q.register_shape[r]) {
        return Err(QcbmError::InvalidArgument(format!(
            "cannot drop {} bits from register {r} with {} bits",
            drop_bits[r], q.register_shape[r]
        )));
    }
    if drop_bits.iter().all(|&d| d == 0) {
        return Ok(q.clone());
    }
    // One bit at a time, so every addition pairs two bins. This keeps
    // coarse_grain(expand_uniform(q)) bit-exact.
    let mut shape = q.register_shape.clone();
    let mut values = q.values.clone();
    for (r, &drop) in drop_bits.iter().enumerate() {
        for _ in 0..drop {
            let offset: usize = shape[r + 1..].iter().sum();
            let low = (1usize << offset) - 1;
            values = (0..values.len() / 2)
                .map(|j| {
                    let i = ((j >> offset) << (offset + 1)) | (j & low);
                    values[i] + values[i | (1 << offset)]
                })
                .collect();
            shape[r] -= 1;
        }
    }
    // A register may shrink to zero bits; the layout still has that
    // register, holding a single digit.
    Ok(ProbabilityVector {
        values,
        register_shape: shape,
    })
}

pub fn expand_uniform(q: &ProbabilityVector, add_bits: &[usize]) -> Result<ProbabilityVector> {
    expand_uniform_with_cap(q, add_bits, DEFAULT_QUBIT_CAP)
}

/// Splits every bin evenly over `2^add_bits[r]` new least significant digits
/// per register: the distribution obtained by appending that many `|+>`
/// qubits to each register.
pub fn expand_uniform_with_cap(
    q: &ProbabilityVector,
    add_bits: &[usize],
    cap: usize,
) -> Result<ProbabilityVector> {
    if add_bits.len() != q.registers() {
        return Err(QcbmError::DimensionMismatch {
            expected: q.registers(),
            found: add_bits.len(),
        });
    }
    let added: usize = add_bits.iter().sum();
    if q.resolution() + added > cap {
        return Err(QcbmError::Capacity {
            requested: q.resolution() + added,
            cap,
        });
    }
    if added == 0 {
        return Ok(q.clone());
    }
    let new_shape: Vec<usize> = q
        .register_shape
        .iter()
        .zip(add_bits)
        .map(|(b, a)| b + a)
        .collect();
    let from = q.layout();
    let to = BitLayout::new(new_shape.clone());
    let share = 1.0 / (1u64 << added) as f64;
    let mut digits = vec![0; q.registers()];
    let values = (0..1usize << to.total_bits())
        .map(|i| {
            to.split_into(i, &mut digits);
            for (d, &add) in digits.iter_mut().zip(add_bits) {
                *d >>= add;
            }
            q.values[from.join(&digits)] * share
        })
        .collect();
    Ok(ProbabilityVector {
        values,
        register_shape: new_shape,
    })
}

/// `KL(p|q) = sum_{p_x > 0} p_x log(p_x / max(q_x, ε))`.
pub fn kl_divergence(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64> {
    p.same_shape(q)?;
    Ok(kl_values(p.values(), q.values()))
}

pub(crate) fn kl_values(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pv, _)| **pv > 0.0)
        .map(|(pv, qv)| pv * (pv / qv.max(KL_EPSILON)).ln())
        .sum()
}

/// `TV(p, q) = 1/2 sum |p_x - q_x|`.
pub fn tv_distance(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64> {
    p.same_shape(q)?;
    Ok(0.5 * p.values.iter().zip(&q.values).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

pub fn tv_at_resolution(
    p: &ProbabilityVector,
    q: &ProbabilityVector,
    bits_per_register: usize,
) -> Result<f64> {
    tv_at_resolution_with_cap(p, q, bits_per_register, DEFAULT_QUBIT_CAP)
}

/// `TV_m`: both vectors are brought to `m` bits in every register, by
/// marginalizing surplus digits or padding with uniform ones, and compared.
pub fn tv_at_resolution_with_cap(
    p: &ProbabilityVector,
    q: &ProbabilityVector,
    bits_per_register: usize,
    cap: usize,
) -> Result<f64> {
    if p.registers() != q.registers() {
        return Err(QcbmError::ShapeMismatch {
            expected: p.register_shape.clone(),
            found: q.register_shape.clone(),
        });
    }
    let total = bits_per_register * p.registers();
    if total > cap {
        return Err(QcbmError::Capacity {
            requested: total,
            cap,
        });
    }
    let p_m = to_resolution(p, bits_per_register, cap)?;
    let q_m = to_resolution(q, bits_per_register, cap)?;
    tv_distance(&p_m, &q_m)
}

/// Brings every register of `q` to `bits` digits.
pub fn to_resolution(q: &ProbabilityVector, bits: usize, cap: usize) -> Result<ProbabilityVector> {
    let drop: Vec<usize> = q.register_shape.iter().map(|&b| b.saturating_sub(bits)).collect();
    let add: Vec<usize> = q.register_shape.iter().map(|&b| bits.saturating_sub(b)).collect();
    let coarse = coarse_grain(q, &drop)?;
    expand_uniform_with_cap(&coarse, &add, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pv(values: &[f64]) -> ProbabilityVector {
        ProbabilityVector::univariate(values.to_vec()).unwrap()
    }

    fn gaussian(mean: f64, variance: f64) -> TargetSpec {
        TargetSpec::UnivariateGaussian {
            mean,
            variance,
            domain: [0.0, 1.0],
        }
    }

    fn paper_mvn() -> TargetSpec {
        TargetSpec::MultivariateGaussian {
            mean: vec![0.5, 0.3, 0.7],
            covariance: vec![
                vec![0.2, -0.1, -0.1],
                vec![-0.1, 0.1, 0.0],
                vec![-0.1, 0.0, 0.3],
            ],
        }
    }

    #[test]
    fn bit_layout_round_trip() {
        let layout = BitLayout::new(vec![2, 1, 3]);
        for i in 0..64 {
            assert_eq!(layout.join(&layout.split(i)), i);
        }
        // |b_A b_B b_C> = |10 1 011>
        assert_eq!(layout.split(0b10_1_011), vec![0b10, 0b1, 0b011]);
    }

    #[test]
    fn new_rejects_bad_vectors() {
        assert!(ProbabilityVector::univariate(vec![0.5, 0.4]).is_err());
        assert!(ProbabilityVector::univariate(vec![1.5, -0.5]).is_err());
        assert!(ProbabilityVector::univariate(vec![0.5, 0.25, 0.25]).is_err());
        assert!(ProbabilityVector::new(vec![0.25; 4], vec![1, 2]).is_err());
        assert!(ProbabilityVector::new(vec![0.25; 4], vec![1, 1]).is_ok());
    }

    #[test]
    fn symmetric_gaussian_one_bit_is_even() {
        let p = sample_target(&gaussian(0.5, 0.04), &[1]).unwrap();
        assert_abs_diff_eq!(p.values()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.values()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn connectivity_target_mode() {
        let p = sample_target(&gaussian(0.65, 0.04), &[9]).unwrap();
        assert_eq!(p.len(), 512);
        let mode = p
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(mode, 332);
        assert_abs_diff_eq!(p.values().iter().sum::<f64>(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn multivariate_marginals_match_brute_force() {
        let p = sample_target(&paper_mvn(), &[3, 3, 3]).unwrap();
        assert_eq!(p.len(), 512);

        // Independent oracle: explicit inverse of the 3x3 covariance by
        // cofactors and a triple loop over the grid.
        let s = [[0.2, -0.1, -0.1], [-0.1, 0.1, 0.0], [-0.1, 0.0, 0.3]];
        let det = s[0][0] * (s[1][1] * s[2][2] - s[1][2] * s[2][1])
            - s[0][1] * (s[1][0] * s[2][2] - s[1][2] * s[2][0])
            + s[0][2] * (s[1][0] * s[2][1] - s[1][1] * s[2][0]);
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                inv[i][j] = (s[r0][c0] * s[r1][c1] - s[r0][c1] * s[r1][c0]) / det;
            }
        }
        let mu = [0.5, 0.3, 0.7];
        let mut grid = vec![0.0; 512];
        for a in 0..8 {
            for b in 0..8 {
                for c in 0..8 {
                    let x = [(a as f64 + 0.5) / 8.0, (b as f64 + 0.5) / 8.0, (c as f64 + 0.5) / 8.0];
                    let d: Vec<f64> = (0..3).map(|k| x[k] - mu[k]).collect();
                    let mut quad = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            quad += d[i] * inv[i][j] * d[j];
                        }
                    }
                    grid[a * 64 + b * 8 + c] = (-0.5 * quad).exp();
                }
            }
        }
        let z: f64 = grid.iter().sum();
        for (got, want) in p.values().iter().zip(&grid) {
            assert_abs_diff_eq!(*got, want / z, epsilon = 1e-14);
        }

        let mut marginal_b = [0.0; 8];
        for a in 0..8 {
            for b in 0..8 {
                for c in 0..8 {
                    marginal_b[b] += grid[a * 64 + b * 8 + c] / z;
                }
            }
        }
        let mb = p.marginal(1).unwrap();
        for (x, y) in mb.iter().zip(&marginal_b) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-14);
        }
        let argmax = (0..8).max_by(|&i, &j| mb[i].total_cmp(&mb[j])).unwrap();
        // Bin 2 covers [0.25, 0.375), containing 0.3.
        assert_eq!(argmax, 2);
    }

    #[test]
    fn non_pd_covariance_is_rejected() {
        let spec = TargetSpec::MultivariateGaussian {
            mean: vec![0.5, 0.5],
            covariance: vec![vec![0.1, 0.2], vec![0.2, 0.1]],
        };
        let err = sample_target(&spec, &[2, 2]).unwrap_err();
        assert_eq!(err, QcbmError::NotPositiveDefinite);
        assert!(err.to_string().contains("positive-definite"));
    }

    #[test]
    fn target_validation() {
        assert!(sample_target(&gaussian(0.5, 0.0), &[3]).is_err());
        let mix = TargetSpec::GaussianMixture {
            components: vec![
                MixtureComponent { weight: 0.6, mean: 0.3, variance: 0.01 },
                MixtureComponent { weight: 0.3, mean: 0.7, variance: 0.01 },
            ],
            domain: [0.0, 1.0],
        };
        assert!(sample_target(&mix, &[4]).is_err());
        assert!(sample_target(&gaussian(0.5, 0.04), &[2, 2]).is_err());
        assert!(matches!(
            sample_target(&gaussian(0.5, 0.04), &[25]),
            Err(QcbmError::Capacity { .. })
        ));
    }

    #[test]
    fn mixture_is_bimodal() {
        let mix = TargetSpec::GaussianMixture {
            components: vec![
                MixtureComponent { weight: 0.5, mean: 0.25, variance: 0.005 },
                MixtureComponent { weight: 0.5, mean: 0.75, variance: 0.005 },
            ],
            domain: [0.0, 1.0],
        };
        let p = sample_target(&mix, &[5]).unwrap();
        let v = p.values();
        assert!(v[7] > v[15] && v[23] > v[15]);
        for i in 0..16 {
            assert_abs_diff_eq!(v[i], v[31 - i], epsilon = 1e-14);
        }
    }

    #[test]
    fn coarse_grain_examples() {
        let q = pv(&[0.5, 0.3, 0.1, 0.1]);
        let c = coarse_grain(&q, &[1]).unwrap();
        assert_abs_diff_eq!(c.values()[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(c.values()[1], 0.2, epsilon = 1e-15);
        assert_eq!(coarse_grain(&q, &[0]).unwrap(), q);
        assert!(coarse_grain(&q, &[3]).is_err());

        // Two registers of one bit each: drop the B digit.
        let (a, b, cc, d) = (0.1, 0.2, 0.3, 0.4);
        let q2 = ProbabilityVector::new(vec![a, b, cc, d], vec![1, 1]).unwrap();
        let g = coarse_grain(&q2, &[0, 1]).unwrap();
        assert_eq!(g.register_shape(), &[1, 0]);
        assert_abs_diff_eq!(g.values()[0], a + b, epsilon = 1e-15);
        assert_abs_diff_eq!(g.values()[1], cc + d, epsilon = 1e-15);
    }

    #[test]
    fn expand_uniform_examples() {
        let q = pv(&[0.8, 0.2]);
        let e = expand_uniform(&q, &[1]).unwrap();
        let want = [0.4, 0.4, 0.1, 0.1];
        for (x, y) in e.values().iter().zip(want) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-15);
        }
        assert_eq!(expand_uniform(&q, &[0]).unwrap(), q);
        assert!(matches!(
            expand_uniform_with_cap(&q, &[4], 4),
            Err(QcbmError::Capacity { .. })
        ));
    }

    #[test]
    fn metric_examples() {
        let p = pv(&[0.25, 0.25, 0.25, 0.25]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);

        let delta = pv(&[1.0, 0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(tv_distance(&delta, &p).unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(
            tv_distance(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            kl_divergence(&pv(&[1.0, 0.0]), &pv(&[0.5, 0.5])).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert!(tv_distance(&p, &pv(&[0.5, 0.5])).is_err());
        assert!(kl_divergence(&p, &pv(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn tv_at_resolution_examples() {
        // A single qubit matches a symmetric Gaussian at one bit exactly,
        // yet is far off at nine.
        let target9 = sample_target(&gaussian(0.5, 0.04), &[9]).unwrap();
        let q1 = pv(&[0.5, 0.5]);
        assert_abs_diff_eq!(tv_at_resolution(&target9, &q1, 1).unwrap(), 0.0, epsilon = 1e-12);
        let tv9 = tv_at_resolution(&target9, &q1, 9).unwrap();
        // direct: q1 expanded is uniform over 512 bins
        let uniform = ProbabilityVector::uniform(vec![9]).unwrap();
        assert_abs_diff_eq!(tv9, tv_distance(&target9, &uniform).unwrap(), epsilon = 1e-15);
        assert!(tv9 > 0.25, "TV_9 = {tv9}");

        let p9 = sample_target(&gaussian(0.65, 0.04), &[9]).unwrap();
        assert_eq!(
            tv_at_resolution(&p9, &target9, 9).unwrap(),
            tv_distance(&p9, &target9).unwrap()
        );

        let q = pv(&[0.5, 0.3, 0.1, 0.1]);
        let p = pv(&[0.7, 0.3]);
        assert_abs_diff_eq!(tv_at_resolution(&p, &q, 2).unwrap(), 0.15, epsilon = 1e-15);
        assert!(matches!(
            tv_at_resolution(&p, &q, 25),
            Err(QcbmError::Capacity { .. })
        ));
    }

    #[test]
    fn histogram_json_layout() {
        let p = ProbabilityVector::new(vec![0.5, 0.25, 0.125, 0.125], vec![1, 1]).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(
            json,
            r#"{"resolution":2,"register_shape":[1,1],"values":[0.5,0.25,0.125,0.125]}"#
        );
        assert_eq!(serde_json::from_str::<ProbabilityVector>(&json).unwrap(), p);
        let bad = r#"{"resolution":3,"register_shape":[1,1],"values":[0.5,0.25,0.125,0.125]}"#;
        assert!(serde_json::from_str::<ProbabilityVector>(bad).is_err());

        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "index,value\n0,0.5\n1,0.25\n2,0.125\n3,0.125\n"
        );
    }

    fn random_pv(shape: Vec<usize>) -> impl Strategy<Value = ProbabilityVector> {
        let n = 1usize << shape.iter().sum::<usize>();
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("all zero", move |raw| {
            let s: f64 = raw.iter().sum();
            (s > 1e-6).then(|| {
                ProbabilityVector::new(raw.iter().map(|v| v / s).collect(), shape.clone()).unwrap()
            })
        })
    }

    fn shapes() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..4, 1..4)
    }

    proptest! {
        #[test]
        fn coarse_grain_inverts_expand_uniform(
            (q, add) in shapes().prop_flat_map(|s| {
                let k = s.len();
                (random_pv(s), prop::collection::vec(0usize..3, k))
            })
        ) {
            let back = coarse_grain(&expand_uniform(&q, &add).unwrap(), &add).unwrap();
            prop_assert_eq!(back.register_shape(), q.register_shape());
            for (a, b) in back.values().iter().zip(q.values()) {
                // Halving and re-adding is exact in binary floating point.
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn coarsening_never_increases_tv(
            (p, q) in shapes().prop_flat_map(|s| (random_pv(s.clone()), random_pv(s)))
        ) {
            let max_bits = *p.register_shape().iter().max().unwrap();
            let mut last = f64::INFINITY;
            for m in (0..=max_bits).rev() {
                let tv = tv_at_resolution(&p, &q, m).unwrap();
                prop_assert!(tv <= last + 1e-12);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&tv));
                last = tv;
            }
        }

        #[test]
        fn sampled_targets_are_normalized(
            mean in 0.0f64..1.0, variance in 0.001f64..1.0, bits in 1usize..14
        ) {
            let p = sample_target(&gaussian(mean, variance), &[bits]).unwrap();
            let s: f64 = p.values().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-10);
        }

        #[test]
        fn expand_of_coarse_is_identity_only_for_blockwise_uniform(
            q in random_pv(vec![2, 2])
        ) {
            let blocky = expand_uniform(&coarse_grain(&q, &[1, 1]).unwrap(), &[1, 1]).unwrap();
            let again = expand_uniform(&coarse_grain(&blocky, &[1, 1]).unwrap(), &[1, 1]).unwrap();
            for (a, b) in again.values().iter().zip(blocky.values()) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }
    }
}

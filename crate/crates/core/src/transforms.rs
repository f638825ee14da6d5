//! Commutative slot transforms: the secret keys Alice and Bob apply to the payload.
//!
//! A [`SeparableTransform`] is the tensor product of one 2×2 factor per qubit
//! slot, slot 0 being the leftmost factor. Two transforms commute globally when
//! every pair of slot factors commutes.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::{self, QubitState, Unitary2};

/// Entrywise tolerance for commutator checks.
pub const COMMUTE_TOLERANCE: f64 = 1e-12;

/// Largest register the dense oracle will materialize.
pub const DENSE_MAX_QUBITS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransformError {
    #[error("transforms have incompatible lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("a transform needs at least one slot")]
    Empty,
    #[error("dense oracle limited to {DENSE_MAX_QUBITS} qubits, got {0}")]
    TooLargeForDense(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SlotFactor {
    /// Angle in radians, kept in `[0, 2π)`.
    Rotation(f64),
    PauliX,
    PauliY,
    PauliZ,
    Identity,
}

impl SlotFactor {
    pub fn rotation(theta: f64) -> Self {
        SlotFactor::Rotation(theta.rem_euclid(TAU))
    }

    pub fn as_unitary(&self) -> Unitary2 {
        match *self {
            SlotFactor::Rotation(theta) => Unitary2::rotation(theta),
            SlotFactor::PauliX => Unitary2::pauli_x(),
            SlotFactor::PauliY => Unitary2::pauli_y(),
            SlotFactor::PauliZ => Unitary2::pauli_z(),
            SlotFactor::Identity => Unitary2::IDENTITY,
        }
    }
}

/// Free-function form of [`SlotFactor::as_unitary`].
pub fn as_unitary(f: SlotFactor) -> Unitary2 {
    f.as_unitary()
}

/// `u · v`: apply `v`, then `u`.
pub fn compose(u: &Unitary2, v: &Unitary2) -> Unitary2 {
    u.mul(v)
}

pub fn commutes(a: SlotFactor, b: SlotFactor) -> bool {
    let (ua, ub) = (a.as_unitary(), b.as_unitary());
    compose(&ua, &ub).max_abs_diff(&compose(&ub, &ua)) <= COMMUTE_TOLERANCE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyPolicy {
    /// Every slot is a rotation with θ uniform over `[0, 2π)`.
    #[default]
    RotationsOnly,
    /// Slots drawn from rotations, Paulis and the identity. Pairs must be
    /// checked with [`validate_commuting`] before use.
    MixedValidated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableTransform {
    factors: Vec<SlotFactor>,
}

impl SeparableTransform {
    pub fn new(factors: Vec<SlotFactor>) -> Result<Self, TransformError> {
        if factors.is_empty() {
            return Err(TransformError::Empty);
        }
        let factors = factors
            .into_iter()
            .map(|f| match f {
                SlotFactor::Rotation(t) => SlotFactor::rotation(t),
                other => other,
            })
            .collect();
        Ok(Self { factors })
    }

    pub fn identity(n: usize) -> Result<Self, TransformError> {
        Self::new(vec![SlotFactor::Identity; n])
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factors(&self) -> &[SlotFactor] {
        &self.factors
    }

    pub fn unitaries(&self) -> Vec<Unitary2> {
        self.factors.iter().map(SlotFactor::as_unitary).collect()
    }
}

pub fn validate_commuting(
    a: &SeparableTransform,
    b: &SeparableTransform,
) -> Result<bool, TransformError> {
    if a.len() != b.len() {
        return Err(TransformError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.factors.iter().zip(&b.factors).all(|(x, y)| commutes(*x, *y)))
}

pub fn generate_key<R: Rng + ?Sized>(
    n: usize,
    policy: KeyPolicy,
    rng: &mut R,
) -> Result<SeparableTransform, TransformError> {
    if n == 0 {
        return Err(TransformError::Empty);
    }
    let factors = (0..n)
        .map(|_| match policy {
            KeyPolicy::RotationsOnly => SlotFactor::Rotation(rng.random_range(0.0..TAU)),
            KeyPolicy::MixedValidated => match rng.random_range(0..5u8) {
                0 => SlotFactor::Rotation(rng.random_range(0.0..TAU)),
                1 => SlotFactor::PauliX,
                2 => SlotFactor::PauliY,
                3 => SlotFactor::PauliZ,
                _ => SlotFactor::Identity,
            },
        })
        .collect();
    SeparableTransform::new(factors)
}

/// Applies slot `i`'s factor to qubit `i`.
pub fn apply_separable(
    t: &SeparableTransform,
    register: &[QubitState],
) -> Result<Vec<QubitState>, TransformError> {
    apply_unitaries(&t.unitaries(), register)
}

/// Applies the conjugate transpose of every slot factor.
pub fn apply_separable_dagger(
    t: &SeparableTransform,
    register: &[QubitState],
) -> Result<Vec<QubitState>, TransformError> {
    let daggers: Vec<_> = t.unitaries().iter().map(quantum::dagger).collect();
    apply_unitaries(&daggers, register)
}

fn apply_unitaries(
    us: &[Unitary2],
    register: &[QubitState],
) -> Result<Vec<QubitState>, TransformError> {
    if us.len() != register.len() {
        return Err(TransformError::LengthMismatch(us.len(), register.len()));
    }
    Ok(us.iter().zip(register).map(|(u, q)| quantum::apply(u, q)).collect())
}

/// Dense square complex matrix, row-major. Only used as a test oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let dim = self.dim * rhs.dim;
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                let a = self.get(i, j);
                for k in 0..rhs.dim {
                    for l in 0..rhs.dim {
                        data[(i * rhs.dim + k) * dim + j * rhs.dim + l] = a * rhs.get(k, l);
                    }
                }
            }
        }
        DenseMatrix { dim, data }
    }

    pub fn mul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.dim, rhs.dim);
        let dim = self.dim;
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for k in 0..dim {
                let a = self.get(i, k);
                for j in 0..dim {
                    data[i * dim + j] += a * rhs.get(k, j);
                }
            }
        }
        DenseMatrix { dim, data }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl From<&Unitary2> for DenseMatrix {
    fn from(u: &Unitary2) -> Self {
        let e = u.entries();
        DenseMatrix {
            dim: 2,
            data: vec![e[0][0], e[0][1], e[1][0], e[1][1]],
        }
    }
}

/// Left-to-right tensor product of the slot unitaries.
pub fn dense(t: &SeparableTransform) -> Result<DenseMatrix, TransformError> {
    if t.len() > DENSE_MAX_QUBITS {
        return Err(TransformError::TooLargeForDense(t.len()));
    }
    Ok(t.unitaries()
        .iter()
        .fold(DenseMatrix::identity(1), |acc, u| acc.kron(&DenseMatrix::from(u))))
}

/// Amplitudes of the product state `q0 ⊗ q1 ⊗ …` (qubit 0 most significant).
pub fn product_amplitudes(register: &[QubitState]) -> Result<Vec<Complex64>, TransformError> {
    if register.len() > DENSE_MAX_QUBITS {
        return Err(TransformError::TooLargeForDense(register.len()));
    }
    Ok(register.iter().fold(vec![Complex64::new(1.0, 0.0)], |acc, q| {
        acc.iter()
            .flat_map(|a| [a * q.alpha(), a * q.beta()])
            .collect()
    }))
}

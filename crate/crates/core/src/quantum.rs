//! Single-qubit statevector math.
//!
//! Every transform in the protocol is a tensor product of 2×2 factors, so an
//! n-qubit register evolves as n independent qubits. This module only ever
//! deals with one qubit at a time.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

/// Complex amplitude of a basis state.
pub type ComplexAmplitude = Complex64;

/// Tolerance for normalization and unitarity checks.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("amplitudes must be finite")]
    NonFinite,
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),
}

/// A normalized qubit `alpha|0⟩ + beta|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    alpha: ComplexAmplitude,
    beta: ComplexAmplitude,
}

impl QubitState {
    pub const ZERO: QubitState = QubitState {
        alpha: Complex64::new(1.0, 0.0),
        beta: Complex64::new(0.0, 0.0),
    };
    pub const ONE: QubitState = QubitState {
        alpha: Complex64::new(0.0, 0.0),
        beta: Complex64::new(1.0, 0.0),
    };

    pub fn new(alpha: ComplexAmplitude, beta: ComplexAmplitude) -> Result<Self, QuantumError> {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(QuantumError::NonFinite);
        }
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(QuantumError::NotNormalized(norm));
        }
        Ok(Self { alpha, beta })
    }

    /// Basis state `|bit⟩`.
    pub fn basis(bit: bool) -> Self {
        if bit {
            Self::ONE
        } else {
            Self::ZERO
        }
    }

    pub fn alpha(&self) -> ComplexAmplitude {
        self.alpha
    }

    pub fn beta(&self) -> ComplexAmplitude {
        self.beta
    }

    pub fn norm_sqr(&self) -> f64 {
        self.alpha.norm_sqr() + self.beta.norm_sqr()
    }

    /// Probability of observing 0 in the computational basis.
    pub fn prob_zero(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    fn renormalized(alpha: ComplexAmplitude, beta: ComplexAmplitude) -> Self {
        let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        Self {
            alpha: alpha / norm,
            beta: beta / norm,
        }
    }
}

/// A 2×2 unitary in row-major order `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2 {
    m: [[ComplexAmplitude; 2]; 2],
}

impl Unitary2 {
    pub const IDENTITY: Unitary2 = Unitary2 {
        m: [
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        ],
    };

    /// Checks `U†U = I` entrywise within [`NORM_TOLERANCE`].
    pub fn new(
        a: ComplexAmplitude,
        b: ComplexAmplitude,
        c: ComplexAmplitude,
        d: ComplexAmplitude,
    ) -> Result<Self, QuantumError> {
        let m = [[a, b], [c, d]];
        if m.iter().flatten().any(|z| !z.is_finite()) {
            return Err(QuantumError::NonFinite);
        }
        let u = Self { m };
        let dev = dagger(&u).mul(&u).max_abs_diff(&Self::IDENTITY);
        if dev > NORM_TOLERANCE {
            return Err(QuantumError::NotUnitary(dev));
        }
        Ok(u)
    }

    /// Real rotation `[[cos θ, −sin θ], [sin θ, cos θ]]`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            m: [
                [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
            ],
        }
    }

    pub fn pauli_x() -> Self {
        let (o, l) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
        Self { m: [[o, l], [l, o]] }
    }

    pub fn pauli_y() -> Self {
        let o = Complex64::new(0.0, 0.0);
        Self {
            m: [[o, Complex64::new(0.0, -1.0)], [Complex64::new(0.0, 1.0), o]],
        }
    }

    pub fn pauli_z() -> Self {
        let (o, l) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
        Self { m: [[l, o], [o, -l]] }
    }

    pub fn entry(&self, row: usize, col: usize) -> ComplexAmplitude {
        self.m[row][col]
    }

    pub fn entries(&self) -> [[ComplexAmplitude; 2]; 2] {
        self.m
    }

    /// Matrix product `self · rhs` (apply `rhs` first).
    pub fn mul(&self, rhs: &Unitary2) -> Unitary2 {
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.m[i][0] * rhs.m[0][j] + self.m[i][1] * rhs.m[1][j];
            }
        }
        Unitary2 { m: out }
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Unitary2) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }
}

/// Matrix-vector product, renormalized to absorb rounding drift.
pub fn apply(u: &Unitary2, s: &QubitState) -> QubitState {
    let a = u.m[0][0] * s.alpha + u.m[0][1] * s.beta;
    let b = u.m[1][0] * s.alpha + u.m[1][1] * s.beta;
    QubitState::renormalized(a, b)
}

/// Conjugate transpose.
pub fn dagger(u: &Unitary2) -> Unitary2 {
    let m = &u.m;
    Unitary2 {
        m: [
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ],
    }
}

/// `⟨s1|s2⟩`, conjugate-linear in the first argument.
pub fn inner_product(s1: &QubitState, s2: &QubitState) -> ComplexAmplitude {
    s1.alpha.conj() * s2.alpha + s1.beta.conj() * s2.beta
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementOutcome {
    pub bit: bool,
    pub collapsed: QubitState,
}

/// Computational-basis measurement following the Born rule.
pub fn measure<R: Rng + ?Sized>(s: &QubitState, rng: &mut R) -> MeasurementOutcome {
    let p0 = s.prob_zero();
    // Basis states must not consume randomness differently from superpositions,
    // so always draw.
    let draw: f64 = rng.random();
    let bit = draw >= p0;
    MeasurementOutcome {
        bit,
        collapsed: QubitState::basis(bit),
    }
}

/// Haar-ish random state used by tests and property checks.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R) -> QubitState {
    let theta: f64 = rng.random::<f64>() * std::f64::consts::PI;
    let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let alpha = Complex64::new((theta / 2.0).cos(), 0.0);
    let beta = Complex64::from_polar((theta / 2.0).sin(), phi);
    QubitState::renormalized(alpha, beta)
}

/// Random unitary `e^{iγ} [[a, −b*], [b, a*]]` with `|a|²+|b|²=1`.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R) -> Unitary2 {
    let s = random_state(rng);
    let (a, b) = (s.alpha, s.beta);
    let phase = Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU);
    Unitary2 {
        m: [[phase * a, -phase * b.conj()], [phase * b, phase * a.conj()]],
    }
}

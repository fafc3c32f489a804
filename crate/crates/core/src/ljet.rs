//! Truncated Laurent series in the defining function φ.
//!
//! A [`LaurentJet`] stores the coefficients of `φ^min_deg, …, φ^(trunc-1)`.
//! Everything from `φ^trunc` upward is unknown, and arithmetic keeps track of
//! how far each result can be trusted:
//!
//! ```text
//! trunc(a + b) = min(trunc(a), trunc(b))
//! trunc(a · b) = min(trunc(a) + min_deg(b), trunc(b) + min_deg(a))
//! trunc(a')    = trunc(a) - 1
//! ```
//!
//! All geometric quantities on the collar `M × (-1, 0)` of a homogeneous model
//! are jets of this kind, because their frame components depend on φ only.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Coefficients at or below this magnitude are treated as exact zeros when a
/// jet is normalized.
pub const ZERO_FLOOR: f64 = 1e-300;

/// Truncated Laurent series with complex coefficients.
#[derive(Clone, PartialEq)]
pub struct LaurentJet {
    min_deg: i32,
    coeffs: Vec<Complex64>,
    trunc: i32,
}

impl LaurentJet {
    /// Builds a jet from the coefficients of `φ^min_deg, φ^(min_deg+1), …`.
    ///
    /// The truncation is `min_deg + coeffs.len()`.
    pub fn new(min_deg: i32, coeffs: Vec<Complex64>) -> Self {
        let trunc = min_deg + coeffs.len() as i32;
        let mut jet = LaurentJet { min_deg, coeffs, trunc };
        jet.normalize();
        jet
    }

    /// Builds a jet from real coefficients.
    pub fn from_real(min_deg: i32, coeffs: &[f64]) -> Self {
        Self::new(min_deg, coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// The zero jet, known to be zero below `trunc`.
    pub fn zero(trunc: i32) -> Self {
        LaurentJet { min_deg: trunc, coeffs: Vec::new(), trunc }
    }

    /// `c · φ^deg`, known exactly below `trunc`.
    pub fn monomial(c: Complex64, deg: i32, trunc: i32) -> Self {
        if trunc <= deg {
            return Self::zero(trunc);
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); (trunc - deg) as usize];
        coeffs[0] = c;
        let mut jet = LaurentJet { min_deg: deg, coeffs, trunc };
        jet.normalize();
        jet
    }

    /// The constant `c`, known below `trunc`.
    pub fn constant(c: Complex64, trunc: i32) -> Self {
        Self::monomial(c, 0, trunc)
    }

    /// The constant one.
    pub fn one(trunc: i32) -> Self {
        Self::constant(Complex64::new(1.0, 0.0), trunc)
    }

    /// A power series `Σ c_k φ^k` (`k ≥ 0`) whose coefficients past the given
    /// list are exactly zero, known below `trunc`.
    pub fn polynomial(coeffs: &[Complex64], trunc: i32) -> Self {
        if trunc <= 0 {
            return Self::zero(trunc);
        }
        let mut full = vec![Complex64::new(0.0, 0.0); trunc as usize];
        for (dst, src) in full.iter_mut().zip(coeffs) {
            *dst = *src;
        }
        Self::new(0, full)
    }

    pub fn min_deg(&self) -> i32 {
        self.min_deg
    }

    pub fn trunc(&self) -> i32 {
        self.trunc
    }

    /// Retained coefficients, starting at `φ^min_deg`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Leading coefficient, or zero for the zero jet.
    pub fn leading(&self) -> Complex64 {
        self.coeffs.first().copied().unwrap_or_default()
    }

    /// Coefficient of `φ^k`.
    pub fn coefficient(&self, k: i32) -> Result<Complex64> {
        if k >= self.trunc {
            return Err(Error::OutOfWindow { order: k, trunc: self.trunc });
        }
        if k < self.min_deg {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(self.coeffs[(k - self.min_deg) as usize])
    }

    /// Coefficient of `φ^k`, zero outside the retained window.
    pub fn coeff_or_zero(&self, k: i32) -> Complex64 {
        self.coefficient(k).unwrap_or_default()
    }

    fn normalize(&mut self) {
        let skip = self.coeffs.iter().take_while(|c| c.norm() <= ZERO_FLOOR).count();
        if skip == self.coeffs.len() {
            self.coeffs.clear();
            self.min_deg = self.trunc;
        } else if skip > 0 {
            self.coeffs.drain(..skip);
            self.min_deg += skip as i32;
        }
    }

    /// Lowers the truncation to `trunc` (never raises it).
    pub fn truncate(&self, trunc: i32) -> Self {
        if trunc >= self.trunc {
            return self.clone();
        }
        if trunc <= self.min_deg {
            return Self::zero(trunc);
        }
        let keep = (trunc - self.min_deg) as usize;
        LaurentJet { min_deg: self.min_deg, coeffs: self.coeffs[..keep].to_vec(), trunc }
    }

    /// Re-reads the retained coefficients as an exact Laurent polynomial and
    /// widens the window to `trunc` with zeros.
    ///
    /// Only meaningful for jets that are known to be polynomials, such as the
    /// finite Taylor data produced by the solver.
    pub fn widen_polynomial(&self, trunc: i32) -> Self {
        if trunc <= self.trunc {
            return self.truncate(trunc);
        }
        if self.is_zero() {
            return Self::zero(trunc);
        }
        let mut coeffs = self.coeffs.clone();
        coeffs.resize((trunc - self.min_deg) as usize, Complex64::new(0.0, 0.0));
        LaurentJet { min_deg: self.min_deg, coeffs, trunc }
    }

    /// Multiplication by `φ^p`.
    pub fn shift(&self, p: i32) -> Self {
        LaurentJet { min_deg: self.min_deg + p, coeffs: self.coeffs.clone(), trunc: self.trunc + p }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut jet = LaurentJet {
            min_deg: self.min_deg,
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
            trunc: self.trunc,
        };
        jet.normalize();
        jet
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    /// Coefficientwise complex conjugate.
    pub fn conj(&self) -> Self {
        LaurentJet {
            min_deg: self.min_deg,
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
            trunc: self.trunc,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let trunc = self.trunc.min(other.trunc);
        let min_deg = self.min_deg.min(other.min_deg);
        if trunc <= min_deg {
            return Self::zero(trunc);
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); (trunc - min_deg) as usize];
        for jet in [self, other] {
            for (i, c) in jet.coeffs.iter().enumerate() {
                let deg = jet.min_deg + i as i32;
                if deg >= trunc {
                    break;
                }
                coeffs[(deg - min_deg) as usize] += c;
            }
        }
        let mut jet = LaurentJet { min_deg, coeffs, trunc };
        jet.normalize();
        jet
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        LaurentJet {
            min_deg: self.min_deg,
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
            trunc: self.trunc,
        }
    }

    /// Cauchy product.
    pub fn mul(&self, other: &Self) -> Self {
        let min_deg = self.min_deg + other.min_deg;
        let trunc = (self.trunc + other.min_deg).min(other.trunc + self.min_deg);
        let len = (trunc - min_deg).max(0) as usize;
        if len == 0 {
            return Self::zero(trunc);
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); len];
        for (i, a) in self.coeffs.iter().enumerate().take(len) {
            for (j, b) in other.coeffs.iter().enumerate().take(len - i) {
                coeffs[i + j] += a * b;
            }
        }
        let mut jet = LaurentJet { min_deg, coeffs, trunc };
        jet.normalize();
        jet
    }

    /// Multiplicative inverse.
    pub fn invert(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::LeadingZero);
        }
        let a = &self.coeffs;
        let len = a.len();
        let inv0 = a[0].inv();
        let mut b = vec![Complex64::new(0.0, 0.0); len];
        b[0] = inv0;
        for k in 1..len {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 1..=k {
                acc += a[i] * b[k - i];
            }
            b[k] = -acc * inv0;
        }
        Ok(Self::new(-self.min_deg, b))
    }

    /// Principal square root.
    ///
    /// The leading degree must be even and the leading coefficient positive
    /// up to an imaginary part of at most `1e-10` relative.
    pub fn sqrt(&self) -> Result<Self> {
        if self.is_zero() {
            return Ok(Self::zero(self.trunc.div_euclid(2)));
        }
        if self.min_deg.rem_euclid(2) != 0 {
            return Err(Error::OddLeadingDegree(self.min_deg));
        }
        let lead = self.coeffs[0];
        if lead.re <= 0.0 || lead.im.abs() > 1e-10 * lead.re {
            return Err(Error::NonPositiveLeading(lead));
        }
        let a = &self.coeffs;
        let len = a.len();
        let mut r = vec![Complex64::new(0.0, 0.0); len];
        r[0] = lead.sqrt();
        let two_r0 = r[0] * 2.0;
        for k in 1..len {
            let mut acc = a[k];
            for i in 1..k {
                acc -= r[i] * r[k - i];
            }
            r[k] = acc / two_r0;
        }
        Ok(Self::new(self.min_deg / 2, r))
    }

    /// Termwise `d/dφ`.
    pub fn differentiate(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * f64::from(self.min_deg + i as i32))
            .collect();
        let mut jet = LaurentJet { min_deg: self.min_deg - 1, coeffs, trunc: self.trunc - 1 };
        jet.normalize();
        jet
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest coefficient-wise deviation from `other` over the common window.
    pub fn max_diff(&self, other: &Self) -> f64 {
        self.sub(other).max_abs()
    }

    /// Evaluates the retained part at a real point `φ ≠ 0`.
    pub fn eval(&self, phi: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * phi + c;
        }
        acc * phi.powi(self.min_deg)
    }
}

impl fmt::Debug for LaurentJet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0 + O(φ^{})", self.trunc);
        }
        for (i, c) in self.coeffs.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({:.6e}{:+.6e}i)φ^{}", c.re, c.im, self.min_deg + i as i32)?;
        }
        write!(f, " + O(φ^{})", self.trunc)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait<&LaurentJet> for &LaurentJet {
            type Output = LaurentJet;
            fn $method(self, rhs: &LaurentJet) -> LaurentJet {
                LaurentJet::$method(self, rhs)
            }
        }
        impl $trait<LaurentJet> for LaurentJet {
            type Output = LaurentJet;
            fn $method(self, rhs: LaurentJet) -> LaurentJet {
                LaurentJet::$method(&self, &rhs)
            }
        }
        impl $trait<&LaurentJet> for LaurentJet {
            type Output = LaurentJet;
            fn $method(self, rhs: &LaurentJet) -> LaurentJet {
                LaurentJet::$method(&self, rhs)
            }
        }
        impl $trait<LaurentJet> for &LaurentJet {
            type Output = LaurentJet;
            fn $method(self, rhs: LaurentJet) -> LaurentJet {
                LaurentJet::$method(self, &rhs)
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl Neg for &LaurentJet {
    type Output = LaurentJet;
    fn neg(self) -> LaurentJet {
        LaurentJet::neg(self)
    }
}

impl Neg for LaurentJet {
    type Output = LaurentJet;
    fn neg(self) -> LaurentJet {
        LaurentJet::neg(&self)
    }
}

/// Wire form: `{min_deg, trunc, coeffs: [[re, im], ...]}`.
#[derive(Serialize, Deserialize)]
struct JetRepr {
    min_deg: i32,
    trunc: i32,
    coeffs: Vec<[f64; 2]>,
}

impl Serialize for LaurentJet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        JetRepr {
            min_deg: self.min_deg,
            trunc: self.trunc,
            coeffs: self.coeffs.iter().map(|c| [c.re, c.im]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LaurentJet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = JetRepr::deserialize(deserializer)?;
        if repr.min_deg + repr.coeffs.len() as i32 != repr.trunc {
            return Err(serde::de::Error::custom("coeffs length must equal trunc - min_deg"));
        }
        Ok(LaurentJet::new(
            repr.min_deg,
            repr.coeffs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect(),
        ))
    }
}

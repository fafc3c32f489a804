//! Homogeneous almost pseudohermitian models.
//!
//! A model is a contact Lie algebra presented in a complex frame
//! `(T, W_1..W_n, W_1̄..W_n̄)` by its structure constants `c_{JK}^L`
//! (`[E_J, E_K] = c_{JK}^L E_L`) together with the Levi matrix `h_{αβ̄}`.
//! Holomorphic and antiholomorphic frame vectors are independent slots; the
//! reality condition linking them is checked by [`PhmModel::validate`], never
//! imposed silently.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{hermitian_min_eigenvalue, singular_values};
use crate::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Residual tolerance for the structural checks.
pub const MODEL_TOL: f64 = 1e-12;

/// Conjugation on model indices: fixes `T`, swaps `W_α ↔ W_ᾱ`.
pub fn sigma(n: usize, j: usize) -> usize {
    if j == 0 {
        0
    } else {
        1 + hsigma(n, j - 1)
    }
}

/// Conjugation on horizontal indices `A ∈ 0..2n`.
pub fn hsigma(n: usize, a: usize) -> usize {
    (a + n) % (2 * n)
}

/// `+1` on holomorphic horizontal indices, `−1` on antiholomorphic ones.
pub fn hsign(n: usize, a: usize) -> f64 {
    if a < n {
        1.0
    } else {
        -1.0
    }
}

/// Display label of a model index: `T`, `W1`, …, `Wb1`, ….
pub fn label(n: usize, j: usize) -> String {
    match j {
        0 => "T".to_string(),
        j if j <= n => format!("W{j}"),
        j => format!("Wb{}", j - n),
    }
}

/// Inverse of [`label`].
pub fn parse_label(n: usize, s: &str) -> Option<usize> {
    if s == "T" {
        return Some(0);
    }
    let (offset, digits) = if let Some(rest) = s.strip_prefix("Wb") {
        (n, rest)
    } else {
        (0, s.strip_prefix('W')?)
    };
    let k: usize = digits.parse().ok()?;
    (1..=n).contains(&k).then_some(offset + k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhmModel {
    n: usize,
    c: Vec<Complex64>,
    h: DMatrix<Complex64>,
    vol_m: f64,
}

/// Outcome of [`PhmModel::validate`]; every field is a residual or a margin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub antisymmetry: f64,
    pub jacobi: f64,
    pub reality: f64,
    pub hermitian: f64,
    pub contact: f64,
    pub reeb: f64,
    /// Smallest eigenvalue of `h`.
    pub levi_min_eigenvalue: f64,
    /// Smallest singular value of `dθ` restricted to the horizontal frame.
    pub nondegeneracy: f64,
    pub tol: f64,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, value: f64| {
            if !(value <= self.tol) {
                out.push(format!("{name} residual {value:.3e}"));
            }
        };
        check("antisymmetry", self.antisymmetry);
        check("jacobi", self.jacobi);
        check("reality", self.reality);
        check("hermitian", self.hermitian);
        check("contact", self.contact);
        check("reeb", self.reeb);
        if !(self.levi_min_eigenvalue > self.tol) {
            out.push(format!("levi positivity: smallest eigenvalue {:.3e}", self.levi_min_eigenvalue));
        }
        if !(self.nondegeneracy > self.tol) {
            out.push(format!("dθ degenerate on H: smallest singular value {:.3e}", self.nondegeneracy));
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let failures = self.failures();
        if failures.is_empty() {
            write!(f, "all checks pass")
        } else {
            write!(f, "{}", failures.join("; "))
        }
    }
}

impl PhmModel {
    fn empty(n: usize, h: DMatrix<Complex64>, vol_m: f64) -> Self {
        let m = 2 * n + 1;
        PhmModel { n, c: vec![ZERO; m * m * m], h, vol_m }
    }

    fn check_dims(n: usize, h: &DMatrix<Complex64>) -> Result<()> {
        if n == 0 {
            return Err(Error::Dimension("CR dimension n must be positive".into()));
        }
        if h.nrows() != n || h.ncols() != n {
            return Err(Error::Dimension(format!("Levi matrix is {}x{}, expected {n}x{n}", h.nrows(), h.ncols())));
        }
        Ok(())
    }

    fn flat_brackets(n: usize, h: DMatrix<Complex64>) -> Self {
        let mut m = Self::empty(n, h, 1.0);
        for a in 0..n {
            for b in 0..n {
                let v = -I * m.h[(a, b)];
                m.set_bracket(1 + a, 1 + n + b, 0, v);
            }
        }
        m
    }

    fn finish(self) -> Result<Self> {
        let report = self.validate();
        if report.passed() {
            Ok(self)
        } else if report.jacobi > report.tol {
            Err(Error::JacobiViolation(report.jacobi))
        } else {
            Err(Error::InvalidModel(Box::new(report)))
        }
    }

    /// Flat Heisenberg model: `[W_α, W_β̄] = −i h_{αβ̄} T`, all else zero.
    pub fn flat_heisenberg(n: usize, h: DMatrix<Complex64>) -> Result<Self> {
        Self::check_dims(n, &h)?;
        let min_eig = hermitian_min_eigenvalue(&h);
        if !(min_eig > MODEL_TOL) {
            return Err(Error::NonPositiveLevi(min_eig));
        }
        Self::flat_brackets(n, h).finish()
    }

    /// Heisenberg model with pseudohermitian torsion:
    /// `[T, W_α] = a_α^β̄ W_β̄` with `a_α^β̄ = a_{αγ} h^{γβ̄}`, and the conjugate
    /// bracket `[T, W_ᾱ] = conj(a_α^β̄) W_β`.
    pub fn torsion_deformed(n: usize, h: DMatrix<Complex64>, a: DMatrix<Complex64>) -> Result<Self> {
        Self::check_dims(n, &h)?;
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Dimension(format!("torsion matrix is {}x{}, expected {n}x{n}", a.nrows(), a.ncols())));
        }
        let min_eig = hermitian_min_eigenvalue(&h);
        if !(min_eig > MODEL_TOL) {
            return Err(Error::NonPositiveLevi(min_eig));
        }
        let hinv = h.clone().try_inverse().ok_or(Error::NonPositiveLevi(min_eig))?;
        // h^{γβ̄} = (h⁻¹)_{βγ}
        let raised = &a * hinv.transpose();
        let mut m = Self::flat_brackets(n, h);
        for al in 0..n {
            for be in 0..n {
                let v = raised[(al, be)];
                m.set_bracket(0, 1 + al, 1 + n + be, v);
                m.set_bracket(0, 1 + n + al, 1 + be, v.conj());
            }
        }
        m.finish()
    }

    /// Validated model from a full structure-constant array laid out as
    /// `c[(J·m + K)·m + L]` with `m = 2n+1`.
    pub fn custom(n: usize, c: Vec<Complex64>, h: DMatrix<Complex64>, vol_m: f64) -> Result<Self> {
        Self::check_dims(n, &h)?;
        let m = 2 * n + 1;
        if c.len() != m * m * m {
            return Err(Error::Dimension(format!("structure constants have {} entries, expected {}", c.len(), m * m * m)));
        }
        if !(vol_m > 0.0 && vol_m.is_finite()) {
            return Err(Error::Dimension(format!("vol_M must be positive, got {vol_m}")));
        }
        PhmModel { n, c, h, vol_m }.finish()
    }

    /// Validated model from a bracket list `[E_J, E_K] ∋ value · E_L`.
    /// Each entry also fills the antisymmetric partner `[E_K, E_J]`;
    /// conjugate brackets are not filled in.
    pub fn from_brackets(
        n: usize,
        brackets: &[(usize, usize, usize, Complex64)],
        h: DMatrix<Complex64>,
        vol_m: f64,
    ) -> Result<Self> {
        Self::check_dims(n, &h)?;
        let m = 2 * n + 1;
        let mut model = Self::empty(n, h, vol_m);
        for &(j, k, l, v) in brackets {
            if j >= m || k >= m || l >= m {
                return Err(Error::Dimension(format!("bracket index ({j},{k},{l}) out of range")));
            }
            model.set_bracket(j, k, l, v);
        }
        Self::custom(n, model.c, model.h, vol_m)
    }

    /// Non-integrable model with nonzero Tanno tensor, `n = 2`, `h = I`.
    ///
    /// In the real basis `T, X_1, X_2, Y_1, Y_2` with `[X_k, Y_k] = −2T` and
    /// the extra bracket `[X_1, X_2] = ε Y_1`; with `W_k = (X_k − iY_k)/2` the
    /// brackets `[W_1,W_2]`, `[W_1,W_2̄]`, `[W_1̄,W_2]` all equal
    /// `(iε/4)(W_1 − W_1̄)`.
    pub fn tanno_example(eps: f64) -> Result<Self> {
        let n = 2;
        let mut m = Self::flat_brackets(n, DMatrix::identity(n, n));
        let v = Complex64::new(0.0, eps / 4.0);
        let (w1, w2, wb1, wb2) = (1, 2, 3, 4);
        for (j, k) in [(w1, w2), (w1, wb2), (wb1, w2), (wb1, wb2)] {
            m.set_bracket(j, k, w1, v);
            m.set_bracket(j, k, wb1, -v);
        }
        m.finish()
    }

    /// Validated model from real structure constants in a real basis
    /// `(T, X_1..X_n, Y_1..Y_n)`, presented in the complex frame
    /// `W_k = (X_k − iY_k)/2`. Each entry `(J, K, L, v)` sets
    /// `[E_J, E_K] ∋ v·E_L` and its antisymmetric partner. The Levi matrix is
    /// read off from the T-components of `[W_α, W_β̄]`.
    pub fn from_real(n: usize, brackets: &[(usize, usize, usize, f64)], vol_m: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("CR dimension n must be positive".into()));
        }
        let m = 2 * n + 1;
        let mut real = vec![ZERO; m * m * m];
        for &(j, k, l, v) in brackets {
            if j >= m || k >= m || l >= m {
                return Err(Error::Dimension(format!("bracket index ({j},{k},{l}) out of range")));
            }
            real[(j * m + k) * m + l] = Complex64::new(v, 0.0);
            real[(k * m + j) * m + l] = Complex64::new(-v, 0.0);
        }
        let mut s = DMatrix::from_element(m, m, ZERO);
        s[(0, 0)] = Complex64::new(1.0, 0.0);
        for k in 0..n {
            s[(1 + k, 1 + k)] = Complex64::new(0.5, 0.0);
            s[(1 + k, 1 + n + k)] = Complex64::new(0.0, -0.5);
            s[(1 + n + k, 1 + k)] = Complex64::new(0.5, 0.0);
            s[(1 + n + k, 1 + n + k)] = Complex64::new(0.0, 0.5);
        }
        let c = change_basis(&real, &s).expect("complexification is invertible");
        let h = DMatrix::from_fn(n, n, |a, b| I * c[((1 + a) * m + 1 + n + b) * m]);
        Self::custom(n, c, h, vol_m)
    }

    /// `sl(2,ℝ) ⊕ aff(ℝ)^{n−1}` with contact form `κ·H* + Σ_j S_j*`, where
    /// `[H, E] = 2E`, `[H, F] = −2F`, `[E, F] = H` and `[P_j, S_j] = S_j`.
    ///
    /// The Reeb field is `T = H/κ`, so `ad_T` is hyperbolic on the `sl(2)`
    /// plane and the pseudohermitian torsion has size `2/κ`. The horizontal
    /// frame is `X_1 = √(2/κ) E`, `Y_1 = −√(2/κ) F` and, for `j ≥ 2`,
    /// `X_j = √2 P_j`, `Y_j = −√2 (S_j − T)`, which gives `h = I`. For `n ≥ 2`
    /// the `(1,0)` brackets `[W_1, W_j]` have a `(0,1)` part, so the Tanno
    /// tensor is nonzero as well.
    pub fn sl2_affine(n: usize, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Dimension(format!("κ must be positive, got {kappa}")));
        }
        let t = 0;
        let x = |k: usize| k;
        let y = |k: usize| n + k;
        let r = 2.0 / kappa;
        let sq2 = std::f64::consts::SQRT_2;
        let mut br = vec![
            // [X_1, Y_1] = −(2/κ)[E, F] = −(2/κ)H = −2T
            (x(1), y(1), t, -2.0),
            (t, x(1), x(1), r),
            (t, y(1), y(1), -r),
        ];
        for j in 2..=n {
            // [X_j, Y_j] = −2[P_j, S_j − T] = −2S_j = √2 Y_j − 2T
            br.push((x(j), y(j), t, -2.0));
            br.push((x(j), y(j), y(j), sq2));
            // [E, S_j − T] = [T, E] = (2/κ)E and [F, S_j − T] = −(2/κ)F
            br.push((x(1), y(j), x(1), -sq2 * r));
            br.push((y(1), y(j), y(1), sq2 * r));
        }
        Self::from_real(n, &br, 1.0)
    }

    /// Same model with a different total volume.
    pub fn with_vol(mut self, vol_m: f64) -> Self {
        self.vol_m = vol_m;
        self
    }

    fn idx(&self, j: usize, k: usize, l: usize) -> usize {
        let m = self.dim();
        (j * m + k) * m + l
    }

    fn set_bracket(&mut self, j: usize, k: usize, l: usize, v: Complex64) {
        let a = self.idx(j, k, l);
        let b = self.idx(k, j, l);
        self.c[a] = v;
        self.c[b] = -v;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Real dimension of the model, `2n+1`.
    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    /// Structure constant `c_{JK}^L`.
    pub fn c(&self, j: usize, k: usize, l: usize) -> Complex64 {
        self.c[self.idx(j, k, l)]
    }

    pub fn structure_constants(&self) -> &[Complex64] {
        &self.c
    }

    pub fn h(&self) -> &DMatrix<Complex64> {
        &self.h
    }

    pub fn vol_m(&self) -> f64 {
        self.vol_m
    }

    /// The Levi form as a symmetric pairing on horizontal indices:
    /// `h_{α,β̄} = h_{β̄,α} = h_{αβ̄}`, zero on like-type pairs.
    pub fn levi_pairing(&self) -> DMatrix<Complex64> {
        let n = self.n;
        let mut p = DMatrix::from_element(2 * n, 2 * n, ZERO);
        for a in 0..n {
            for b in 0..n {
                p[(a, n + b)] = self.h[(a, b)];
                p[(n + b, a)] = self.h[(a, b)];
            }
        }
        p
    }

    fn scale(&self) -> f64 {
        1.0 + self.c.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> ValidationReport {
        let n = self.n;
        let m = self.dim();
        let scale = self.scale();

        let mut antisymmetry: f64 = 0.0;
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    antisymmetry = antisymmetry.max((self.c(j, k, l) + self.c(k, j, l)).norm());
                }
            }
        }

        let mut jacobi: f64 = 0.0;
        for j in 0..m {
            for k in j + 1..m {
                for l in k + 1..m {
                    for p in 0..m {
                        let mut acc = ZERO;
                        for q in 0..m {
                            acc += self.c(j, k, q) * self.c(q, l, p)
                                + self.c(k, l, q) * self.c(q, j, p)
                                + self.c(l, j, q) * self.c(q, k, p);
                        }
                        jacobi = jacobi.max(acc.norm());
                    }
                }
            }
        }

        let mut reality: f64 = 0.0;
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    let d = self.c(sigma(n, j), sigma(n, k), sigma(n, l)) - self.c(j, k, l).conj();
                    reality = reality.max(d.norm());
                }
            }
        }

        let hermitian = (&self.h - self.h.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);

        let pairing = self.levi_pairing();
        let mut contact: f64 = 0.0;
        let mut dtheta = DMatrix::from_element(2 * n, 2 * n, ZERO);
        for a in 0..2 * n {
            for b in 0..2 * n {
                let got = self.c(1 + a, 1 + b, 0);
                let want = -I * hsign(n, a) * pairing[(a, b)];
                contact = contact.max((got - want).norm());
                dtheta[(a, b)] = got;
            }
        }

        let mut reeb: f64 = 0.0;
        for j in 0..m {
            reeb = reeb.max(self.c(0, j, 0).norm());
        }

        ValidationReport {
            antisymmetry: antisymmetry / scale,
            jacobi: jacobi / (scale * scale),
            reality: reality / scale,
            hermitian,
            contact: contact / scale,
            reeb: reeb / scale,
            levi_min_eigenvalue: hermitian_min_eigenvalue(&self.h),
            nondegeneracy: singular_values(&dtheta).last().copied().unwrap_or(0.0),
            tol: MODEL_TOL,
        }
    }

    /// Presentation of the same algebra for the contact form `e^{2Υ}θ`:
    /// Reeb vector `e^{−2Υ}T`, Levi matrix `e^{2Υ}h`, volume `e^{2(n+1)Υ}vol_M`.
    pub fn rescale_contact_form(&self, upsilon: f64) -> Self {
        let m = self.dim();
        let s0 = (-2.0 * upsilon).exp();
        let factor = |j: usize| if j == 0 { s0 } else { 1.0 };
        let mut out = self.clone();
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    let i = self.idx(j, k, l);
                    out.c[i] = self.c[i] * (factor(j) * factor(k) / factor(l));
                }
            }
        }
        out.h = &self.h * Complex64::new((2.0 * upsilon).exp(), 0.0);
        out.vol_m = self.vol_m * (2.0 * (self.n as f64 + 1.0) * upsilon).exp();
        out
    }

    /// Re-presents the algebra in the frame `W'_α = P_α^β W_β + Q_α^β̄ W_β̄`
    /// (and conjugates), i.e. with a new almost CR structure `J`.
    pub fn apply_frame_change(&self, fc: &FrameChange) -> Result<Self> {
        let n = self.n;
        let m = self.dim();
        if fc.p.nrows() != n || fc.p.ncols() != n || fc.q.nrows() != n || fc.q.ncols() != n {
            return Err(Error::Dimension(format!("frame change blocks must be {n}x{n}")));
        }
        let mut s = DMatrix::from_element(m, m, ZERO);
        s[(0, 0)] = Complex64::new(1.0, 0.0);
        let big = fc.full_matrix();
        for a in 0..2 * n {
            for b in 0..2 * n {
                s[(1 + a, 1 + b)] = big[(a, b)];
            }
        }
        let c = change_basis(&self.c, &s)
            .ok_or_else(|| Error::IncompatibleJ("frame change is not invertible".into()))?;

        let mut h = DMatrix::from_element(n, n, ZERO);
        let mut like_type: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                h[(a, b)] = I * c[((1 + a) * m + 1 + n + b) * m];
                like_type = like_type.max(c[((1 + a) * m + 1 + b) * m].norm());
            }
        }
        if like_type > MODEL_TOL * self.scale() {
            return Err(Error::IncompatibleJ(format!(
                "dθ has a (2,0) part of size {like_type:.3e} in the new frame"
            )));
        }
        let min_eig = hermitian_min_eigenvalue(&h);
        if !(min_eig > MODEL_TOL) {
            return Err(Error::IncompatibleJ(format!("Levi matrix not positive definite (smallest eigenvalue {min_eig:.3e})")));
        }
        let out = PhmModel { n, c, h, vol_m: self.vol_m };
        let report = out.validate();
        if !report.passed() {
            return Err(Error::IncompatibleJ(report.to_string()));
        }
        Ok(out)
    }

    /// The model with almost CR structure `J_t` of the given family.
    pub fn deform_j(&self, family: &JFamily, t: f64) -> Result<Self> {
        self.apply_frame_change(&family.frame(self.n, t))
    }

    /// True when every `(1,0)`-`(1,0)` bracket lies in `span(T, W_α)`.
    pub fn is_integrable(&self, tol: f64) -> bool {
        let n = self.n;
        (0..n).all(|a| {
            (0..n).all(|b| (0..n).all(|g| self.c(1 + a, 1 + b, 1 + n + g).norm() <= tol))
        })
    }

    /// Serializable description in the model-file schema.
    pub fn to_file(&self) -> ModelFile {
        let n = self.n;
        let m = self.dim();
        let mut brackets = Vec::new();
        for j in 0..m {
            for k in j + 1..m {
                for l in 0..m {
                    let v = self.c(j, k, l);
                    if v != ZERO {
                        brackets.push(BracketEntry {
                            j: label(n, j),
                            k: label(n, k),
                            l: label(n, l),
                            re: v.re,
                            im: v.im,
                        });
                    }
                }
            }
        }
        ModelFile { n, vol_m: self.vol_m, h: self.h.transpose().iter().map(|v| [v.re, v.im]).collect(), brackets }
    }

    /// Validated model from the model-file schema.
    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let n = file.n;
        if file.h.len() != n * n {
            return Err(Error::Parse(format!("h has {} entries, expected {}", file.h.len(), n * n)));
        }
        let h = DMatrix::from_row_iterator(n, n, file.h.iter().map(|&[re, im]| Complex64::new(re, im)));
        let mut brackets = Vec::with_capacity(file.brackets.len());
        for e in &file.brackets {
            let get = |s: &str| parse_label(n, s).ok_or_else(|| Error::Parse(format!("unknown basis label {s:?}")));
            brackets.push((get(&e.j)?, get(&e.k)?, get(&e.l)?, Complex64::new(e.re, e.im)));
        }
        Self::from_brackets(n, &brackets, h, file.vol_m)
    }
}

/// Structure constants in the frame `E'_J = S_J^K E_K`:
/// `c'_{JK}^L = S_J^a S_K^b c_{ab}^d (S⁻¹)_d^L`. `None` if `S` is singular.
fn change_basis(c: &[Complex64], s: &DMatrix<Complex64>) -> Option<Vec<Complex64>> {
    let m = s.nrows();
    let sinv = s.clone().try_inverse()?;
    let mut tmp = vec![ZERO; m * m * m];
    for a in 0..m {
        for b in 0..m {
            for l in 0..m {
                let mut acc = ZERO;
                for d in 0..m {
                    acc += c[(a * m + b) * m + d] * sinv[(d, l)];
                }
                tmp[(a * m + b) * m + l] = acc;
            }
        }
    }
    let mut tmp2 = vec![ZERO; m * m * m];
    for j in 0..m {
        for b in 0..m {
            for l in 0..m {
                let mut acc = ZERO;
                for a in 0..m {
                    acc += s[(j, a)] * tmp[(a * m + b) * m + l];
                }
                tmp2[(j * m + b) * m + l] = acc;
            }
        }
    }
    let mut out = vec![ZERO; m * m * m];
    for j in 0..m {
        for k in 0..m {
            for l in 0..m {
                let mut acc = ZERO;
                for b in 0..m {
                    acc += s[(k, b)] * tmp2[(j * m + b) * m + l];
                }
                out[(j * m + k) * m + l] = acc;
            }
        }
    }
    Some(out)
}

/// Model-file schema: `{n, vol_M, h: [[re,im],...], brackets: [{J,K,L,re,im}]}`.
/// `h` is row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    #[serde(rename = "vol_M", default = "default_vol")]
    pub vol_m: f64,
    pub h: Vec<[f64; 2]>,
    pub brackets: Vec<BracketEntry>,
}

fn default_vol() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketEntry {
    #[serde(rename = "J")]
    pub j: String,
    #[serde(rename = "K")]
    pub k: String,
    #[serde(rename = "L")]
    pub l: String,
    pub re: f64,
    pub im: f64,
}

/// Constant change of `(1,0)` frame, `W'_α = P_α^β W_β + Q_α^β̄ W_β̄`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameChange {
    pub p: DMatrix<Complex64>,
    pub q: DMatrix<Complex64>,
}

impl FrameChange {
    pub fn identity(n: usize) -> Self {
        FrameChange { p: DMatrix::identity(n, n), q: DMatrix::zeros(n, n) }
    }

    /// The conjugation-equivariant `2n×2n` matrix `[[P, Q], [Q̄, P̄]]`.
    pub fn full_matrix(&self) -> DMatrix<Complex64> {
        let n = self.p.nrows();
        let mut big = DMatrix::from_element(2 * n, 2 * n, ZERO);
        for a in 0..n {
            for b in 0..n {
                big[(a, b)] = self.p[(a, b)];
                big[(a, n + b)] = self.q[(a, b)];
                big[(n + a, b)] = self.q[(a, b)].conj();
                big[(n + a, n + b)] = self.p[(a, b)].conj();
            }
        }
        big
    }

    pub fn inverse(&self) -> Result<Self> {
        let n = self.p.nrows();
        let inv = self
            .full_matrix()
            .try_inverse()
            .ok_or_else(|| Error::IncompatibleJ("frame change is not invertible".into()))?;
        Ok(FrameChange {
            p: inv.view((0, 0), (n, n)).into_owned(),
            q: inv.view((0, n), (n, n)).into_owned(),
        })
    }
}

/// One-parameter families of almost CR structures on a fixed contact algebra.
#[derive(Clone, Debug, PartialEq)]
pub enum JFamily {
    /// `P = P_0 + t P_1`, `Q = Q_0 + t Q_1`.
    Linear {
        p0: DMatrix<Complex64>,
        p1: DMatrix<Complex64>,
        q0: DMatrix<Complex64>,
        q1: DMatrix<Complex64>,
    },
    /// `exp(t [[a, b], [b̄, ā]])`. For `h = I`, `a` skew-Hermitian and `b`
    /// symmetric this is a real symplectic frame change and `h` is preserved.
    Exponential { a: DMatrix<Complex64>, b: DMatrix<Complex64> },
    /// `P = cos t · I`, `Q = sin t · b`.
    Rotation { b: DMatrix<Complex64> },
}

impl JFamily {
    /// `W' = W + t W̄` on `n = 1`; the Levi form `1 − t²` degenerates at `t = 1`.
    pub fn degenerating(n: usize) -> Self {
        JFamily::Linear {
            p0: DMatrix::identity(n, n),
            p1: DMatrix::zeros(n, n),
            q0: DMatrix::zeros(n, n),
            q1: DMatrix::identity(n, n),
        }
    }

    /// `W'_α = cos t · W_α + sin t · W_{σ(α)}̄` pairing `W_1 ↔ W_2̄`, `W_2 ↔ W_1̄`
    /// and so on; the Levi matrix becomes `cos 2t · h` when `h = I`.
    pub fn rotation(n: usize) -> Self {
        JFamily::Rotation { b: DMatrix::from_fn(n, n, |i, j| if i + j + 1 == n { Complex64::new(1.0, 0.0) } else { ZERO }) }
    }

    pub fn frame(&self, n: usize, t: f64) -> FrameChange {
        let tc = Complex64::new(t, 0.0);
        match self {
            JFamily::Linear { p0, p1, q0, q1 } => FrameChange { p: p0 + p1 * tc, q: q0 + q1 * tc },
            JFamily::Exponential { a, b } => {
                let gen = FrameChange { p: a.clone(), q: b.clone() }.full_matrix() * tc;
                let e = gen.exp();
                FrameChange { p: e.view((0, 0), (n, n)).into_owned(), q: e.view((0, n), (n, n)).into_owned() }
            }
            JFamily::Rotation { b } => FrameChange {
                p: DMatrix::identity(n, n) * Complex64::new(t.cos(), 0.0),
                q: b * Complex64::new(t.sin(), 0.0),
            },
        }
    }
}

/// Random symmetric complex matrix with Frobenius norm exactly `norm`.
pub fn random_symmetric(n: usize, norm: f64, rng: &mut impl Rng) -> DMatrix<Complex64> {
    let mut a = DMatrix::from_element(n, n, ZERO);
    for i in 0..n {
        for j in i..n {
            let v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let f = a.norm();
    if f > 0.0 {
        a *= Complex64::new(norm / f, 0.0);
    }
    a
}

/// Random Hermitian positive-definite matrix with eigenvalues in `[0.5, 1.5]`.
pub fn random_levi(n: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
    let x = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let herm = (&x + x.adjoint()) * Complex64::new(0.5, 0.0);
    let spread = herm.norm().max(1e-12);
    DMatrix::identity(n, n) + herm * Complex64::new(0.5 / spread, 0.0)
}

/// Random model with nonzero pseudohermitian torsion, reproducible from
/// `seed`. The torsion has size of order `norm`.
///
/// For `n = 1` this is [`PhmModel::torsion_deformed`] with random Levi matrix
/// and `‖a‖_F = norm`. For `n ≥ 2` the Heisenberg torsion family violates the
/// Jacobi identity, so [`PhmModel::sl2_affine`] with `κ = 2/norm` is used,
/// followed by a random real-symplectic change of `J` and a random
/// `GL(n, ℂ)` change of `(1,0)` frame (which makes `h` random).
pub fn random_torsion(n: usize, norm: f64, seed: u64) -> Result<PhmModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n == 1 {
        let h = random_levi(n, &mut rng);
        let a = random_symmetric(n, norm, &mut rng);
        return PhmModel::torsion_deformed(n, h, a);
    }
    let base = PhmModel::sl2_affine(n, 2.0 / norm)?;
    let b = random_symmetric(n, 0.4, &mut rng);
    let x = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let a = (&x - x.adjoint()) * Complex64::new(0.2, 0.0);
    let symplectic = JFamily::Exponential { a, b }.frame(n, 1.0);
    let y = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let p = DMatrix::identity(n, n) + y * Complex64::new(0.2, 0.0);
    base.apply_frame_change(&symplectic)?.apply_frame_change(&FrameChange { p, q: DMatrix::zeros(n, n) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_diff(a: &PhmModel, b: &PhmModel) -> f64 {
        a.structure_constants()
            .iter()
            .zip(b.structure_constants())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn flat_n1_brackets() {
        let m = PhmModel::flat_heisenberg(1, DMatrix::identity(1, 1)).unwrap();
        assert_eq!(m.c(1, 2, 0), cx(0.0, -1.0));
        assert_eq!(m.c(2, 1, 0), cx(0.0, 1.0));
        let nonzero = m.structure_constants().iter().filter(|v| v.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
        assert!(m.validate().passed());
    }

    #[test]
    fn flat_n2_has_two_pairings() {
        let m = PhmModel::flat_heisenberg(2, DMatrix::identity(2, 2)).unwrap();
        assert_eq!(m.c(1, 3, 0), cx(0.0, -1.0));
        assert_eq!(m.c(2, 4, 0), cx(0.0, -1.0));
        assert_eq!(m.c(1, 4, 0), cx(0.0, 0.0));
    }

    #[test]
    fn negative_levi_rejected() {
        let h = DMatrix::from_element(1, 1, cx(-1.0, 0.0));
        assert!(matches!(PhmModel::flat_heisenberg(1, h), Err(Error::NonPositiveLevi(_))));
    }

    #[test]
    fn zero_levi_fails_positivity() {
        let m = PhmModel::flat_brackets(1, DMatrix::zeros(1, 1));
        let r = m.validate();
        assert!(!r.passed());
        assert!(r.levi_min_eigenvalue <= 0.0);
    }

    #[test]
    fn wrong_contact_sign_detected() {
        let mut m = PhmModel::flat_heisenberg(1, DMatrix::identity(1, 1)).unwrap();
        m.set_bracket(1, 2, 0, cx(0.0, 1.0));
        let r = m.validate();
        assert!(r.contact > 0.5);
        assert!(!r.passed());
    }

    #[test]
    fn torsion_zero_is_flat() {
        let h = DMatrix::identity(2, 2);
        let a = PhmModel::torsion_deformed(2, h.clone(), DMatrix::zeros(2, 2)).unwrap();
        let b = PhmModel::flat_heisenberg(2, h).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn torsion_n1_validates() {
        let m = PhmModel::torsion_deformed(1, DMatrix::identity(1, 1), DMatrix::from_element(1, 1, cx(0.3, 0.0))).unwrap();
        let r = m.validate();
        assert!(r.passed(), "{r}");
        assert_eq!(m.c(0, 1, 2), cx(0.3, 0.0));
        assert_eq!(m.c(0, 2, 1), cx(0.3, 0.0));
    }

    #[test]
    fn asymmetric_torsion_breaks_jacobi() {
        let a = DMatrix::from_row_slice(2, 2, &[cx(0.0, 0.0), cx(1.0, 0.0), cx(0.0, 0.0), cx(0.0, 0.0)]);
        let r = PhmModel::torsion_deformed(2, DMatrix::identity(2, 2), a);
        assert!(matches!(r, Err(Error::JacobiViolation(_))));
    }

    #[test]
    fn custom_reproduces_constructors() {
        let h = DMatrix::from_row_slice(2, 2, &[cx(1.0, 0.0), cx(0.2, 0.1), cx(0.2, -0.1), cx(1.5, 0.0)]);
        let flat = PhmModel::flat_heisenberg(2, h.clone()).unwrap();
        let again = PhmModel::custom(2, flat.structure_constants().to_vec(), h.clone(), 1.0).unwrap();
        assert_eq!(flat, again);

        let h1 = DMatrix::from_element(1, 1, cx(1.3, 0.0));
        let tor = PhmModel::torsion_deformed(1, h1.clone(), DMatrix::from_element(1, 1, cx(0.1, 0.2))).unwrap();
        let again = PhmModel::custom(1, tor.structure_constants().to_vec(), h1, 1.0).unwrap();
        assert_eq!(tor, again);
    }

    #[test]
    fn custom_rejects_jacobi_violation() {
        // naive [W1, W2] = ε W1̄ with its conjugate
        let n = 2;
        let mut m = PhmModel::flat_brackets(n, DMatrix::identity(n, n));
        m.set_bracket(1, 2, 3, cx(0.5, 0.0));
        m.set_bracket(3, 4, 1, cx(0.5, 0.0));
        let r = PhmModel::custom(n, m.c.clone(), m.h.clone(), 1.0);
        assert!(matches!(r, Err(Error::JacobiViolation(_))));
    }

    #[test]
    fn tanno_example_is_valid_and_non_integrable() {
        let m = PhmModel::tanno_example(0.7).unwrap();
        assert!(m.validate().passed());
        assert!(!m.is_integrable(1e-12));
    }

    #[test]
    fn rescale_examples_and_composition() {
        let m = PhmModel::flat_heisenberg(1, DMatrix::identity(1, 1)).unwrap();
        assert_eq!(m.rescale_contact_form(0.0), m);
        let r = m.rescale_contact_form(0.5);
        let e = 1f64.exp();
        assert!((r.h()[(0, 0)] - cx(e, 0.0)).norm() < 1e-15);
        assert!((r.c(1, 2, 0) - cx(0.0, -e)).norm() < 1e-15);
        assert!(r.validate().passed());

        let t = random_torsion(2, 0.5, 7).unwrap();
        assert!(t.rescale_contact_form(0.2).validate().passed());
        let twice = t.rescale_contact_form(0.2).rescale_contact_form(-0.45);
        let once = t.rescale_contact_form(-0.25);
        assert!(max_diff(&twice, &once) < 1e-12);
        assert!((twice.vol_m() - once.vol_m()).abs() < 1e-12);
    }

    #[test]
    fn rotation_family() {
        let m = PhmModel::flat_heisenberg(2, DMatrix::identity(2, 2)).unwrap();
        let fam = JFamily::rotation(2);
        assert_eq!(m.deform_j(&fam, 0.0).unwrap(), m);
        let d = m.deform_j(&fam, 0.3).unwrap();
        assert!(d.validate().passed());
        assert!((d.h()[(0, 0)].re - 0.6f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn degenerating_family() {
        let m = PhmModel::flat_heisenberg(1, DMatrix::identity(1, 1)).unwrap();
        let fam = JFamily::degenerating(1);
        let d = m.deform_j(&fam, 0.5).unwrap();
        assert!((d.h()[(0, 0)].re - 0.75).abs() < 1e-12);
        assert!(matches!(m.deform_j(&fam, 1.0), Err(Error::IncompatibleJ(_))));
    }

    #[test]
    fn frame_change_round_trip() {
        let m = PhmModel::sl2_affine(2, 1.5).unwrap();
        let fam = JFamily::Exponential {
            a: DMatrix::from_row_slice(2, 2, &[cx(0.0, 0.3), cx(0.2, 0.1), cx(-0.2, 0.1), cx(0.0, -0.1)]),
            b: DMatrix::from_row_slice(2, 2, &[cx(0.1, 0.0), cx(0.05, 0.02), cx(0.05, 0.02), cx(-0.1, 0.1)]),
        };
        let fc = fam.frame(2, 0.4);
        let d = m.apply_frame_change(&fc).unwrap();
        let back = d.apply_frame_change(&fc.inverse().unwrap()).unwrap();
        assert!(max_diff(&back, &m) < 1e-12);
    }

    #[test]
    fn heisenberg_torsion_breaks_jacobi_beyond_n1() {
        let a = DMatrix::from_element(2, 2, cx(0.2, 0.1));
        let r = PhmModel::torsion_deformed(2, DMatrix::identity(2, 2), a);
        assert!(matches!(r, Err(Error::JacobiViolation(_))));
    }

    #[test]
    fn sl2_affine_models_validate() {
        for n in 1..=3 {
            let m = PhmModel::sl2_affine(n, 0.8).unwrap();
            assert!(m.validate().passed());
            assert_eq!(m.is_integrable(1e-12), n == 1);
            assert!((m.h() - DMatrix::<Complex64>::identity(n, n)).norm() < 1e-14);
        }
        for seed in 0..5 {
            assert!(random_torsion(2, 0.7, seed).unwrap().validate().passed());
        }
    }

    #[test]
    fn model_file_round_trip() {
        let m = random_torsion(2, 0.5, 3).unwrap().with_vol(2.5);
        let json = serde_json::to_string(&m.to_file()).unwrap();
        let file: ModelFile = serde_json::from_str(&json).unwrap();
        let back = PhmModel::from_file(&file).unwrap();
        assert!(max_diff(&back, &m) < 1e-15);
        assert_eq!(back.vol_m(), 2.5);
    }

    #[test]
    fn labels_round_trip() {
        for j in 0..7 {
            assert_eq!(parse_label(3, &label(3, j)), Some(j));
        }
        assert_eq!(parse_label(2, "W3"), None);
    }
}

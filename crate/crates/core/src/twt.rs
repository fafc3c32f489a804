//! Tanaka–Webster–Tanno connection of a homogeneous model.
//!
//! The connection forms `ω_A^B` (`∇W_A = ω_A^B ⊗ W_B`, `∇T = 0`) and the
//! torsion `A^B_C` are found by a linear solve of the first structure equation
//!
//! ```text
//! dθ^B = θ^A ∧ ω_A^B + A^B_C θ ∧ θ^C        (C of opposite type to B)
//! ```
//!
//! together with metric compatibility `ω_A^C h_CB + ω_B^C h_CA = 0`, the
//! vanishing conditions `ω_α^β̄(W_γ̄) = ω_α^β̄(T) = 0` (and conjugates) and
//! symmetry of the lowered torsion. For invariant forms
//! `dθ^B(X, Y) = −θ^B([X, Y])`, so every equation is linear with constant
//! coefficients.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::linalg::singular_values;
use crate::model::{hsigma, sigma, PhmModel};
use crate::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Connection forms, torsion and Tanno tensor of the TWT connection.
#[derive(Clone, Debug)]
pub struct TwtConnection {
    n: usize,
    /// `ω_A^B(E_J)` at `(A·2n + B)·m + J`.
    omega: Vec<Complex64>,
    /// `A^B_C` at `(B, C)`.
    torsion: DMatrix<Complex64>,
    hp: DMatrix<Complex64>,
    hp_inv: DMatrix<Complex64>,
    /// Largest residual of the assembled linear system.
    pub residual: f64,
}

/// Residuals of the defining properties of a [`TwtConnection`].
#[derive(Clone, Debug, Serialize)]
pub struct TwtInvariants {
    pub torsion_symmetry: f64,
    pub metric: f64,
    pub tanno_vanishing: f64,
}

impl TwtInvariants {
    pub fn max(&self) -> f64 {
        self.torsion_symmetry.max(self.metric).max(self.tanno_vanishing)
    }
}

struct Layout {
    n: usize,
    m: usize,
}

impl Layout {
    fn w(&self) -> usize {
        2 * self.n
    }
    fn omega(&self, a: usize, b: usize, j: usize) -> usize {
        (a * self.w() + b) * self.m + j
    }
    fn n_omega(&self) -> usize {
        self.w() * self.w() * self.m
    }
    fn torsion(&self, b: usize, c: usize) -> usize {
        self.n_omega() + b * self.w() + c
    }
    fn unknowns(&self) -> usize {
        self.n_omega() + self.w() * self.w()
    }
    fn same_type(&self, a: usize, b: usize) -> bool {
        (a < self.n) == (b < self.n)
    }
}

/// Solves for the TWT connection of a validated model.
pub fn solve_twt(model: &PhmModel) -> Result<TwtConnection> {
    let n = model.n();
    let m = model.dim();
    let lay = Layout { n, m };
    let w = lay.w();
    let hp = model.levi_pairing();
    let hp_inv = hp
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem("Levi pairing not invertible".into()))?;

    let mut rows: Vec<Vec<(usize, Complex64)>> = Vec::new();
    let mut rhs: Vec<Complex64> = Vec::new();

    // structure equations on every pair of frame vectors
    for j in 0..m {
        for k in j + 1..m {
            for b in 0..w {
                let mut row = Vec::new();
                if j >= 1 {
                    row.push((lay.omega(j - 1, b, k), Complex64::new(1.0, 0.0)));
                }
                if k >= 1 {
                    row.push((lay.omega(k - 1, b, j), Complex64::new(-1.0, 0.0)));
                }
                if j == 0 && k >= 1 && !lay.same_type(b, k - 1) {
                    row.push((lay.torsion(b, k - 1), Complex64::new(1.0, 0.0)));
                }
                rows.push(row);
                rhs.push(-model.c(j, k, b + 1));
            }
        }
    }
    // metric compatibility, all pairs
    for a in 0..w {
        for b in a..w {
            for j in 0..m {
                let mut row = Vec::new();
                for c in 0..w {
                    if hp[(c, b)] != ZERO {
                        row.push((lay.omega(a, c, j), hp[(c, b)]));
                    }
                    if hp[(c, a)] != ZERO {
                        row.push((lay.omega(b, c, j), hp[(c, a)]));
                    }
                }
                rows.push(row);
                rhs.push(ZERO);
            }
        }
    }
    // ω_α^β̄(W_γ̄) = ω_α^β̄(T) = 0 and conjugates
    for a in 0..w {
        for b in 0..w {
            if lay.same_type(a, b) {
                continue;
            }
            rows.push(vec![(lay.omega(a, b, 0), Complex64::new(1.0, 0.0))]);
            rhs.push(ZERO);
            for g in 0..w {
                if !lay.same_type(a, g) {
                    rows.push(vec![(lay.omega(a, b, g + 1), Complex64::new(1.0, 0.0))]);
                    rhs.push(ZERO);
                }
            }
        }
    }
    // torsion: only mixed type, symmetric once lowered
    for b in 0..w {
        for c in 0..w {
            if lay.same_type(b, c) {
                rows.push(vec![(lay.torsion(b, c), Complex64::new(1.0, 0.0))]);
                rhs.push(ZERO);
            }
        }
    }
    for c in 0..w {
        for d in c + 1..w {
            // A_{CD} = A^B_C h_{BD}
            let mut row = Vec::new();
            for b in 0..w {
                if hp[(b, d)] != ZERO {
                    row.push((lay.torsion(b, c), hp[(b, d)]));
                }
                if hp[(b, c)] != ZERO {
                    row.push((lay.torsion(b, d), -hp[(b, c)]));
                }
            }
            rows.push(row);
            rhs.push(ZERO);
        }
    }

    let nu = lay.unknowns();
    let mut a = DMatrix::from_element(rows.len(), nu, ZERO);
    for (r, row) in rows.iter().enumerate() {
        for &(col, v) in row {
            a[(r, col)] += v;
        }
    }
    let b = DVector::from_vec(rhs);

    let sv = singular_values(&a);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.get(nu - 1).copied().unwrap_or(0.0);
    if smin <= 1e-10 * smax {
        return Err(Error::SingularSystem(format!(
            "TWT system rank deficient (σ_min/σ_max = {:.3e})",
            smin / smax
        )));
    }
    let x = crate::linalg::least_squares(&a, &b)?;
    let residual = (&a * &x - &b).iter().map(|v| v.norm()).fold(0.0, f64::max);
    let scale = 1.0 + model.structure_constants().iter().map(|v| v.norm()).fold(0.0, f64::max);
    if residual > 1e-9 * scale {
        return Err(Error::SingularSystem(format!("TWT system inconsistent (residual {residual:.3e})")));
    }

    let omega = x.as_slice()[..lay.n_omega()].to_vec();
    let torsion = DMatrix::from_fn(w, w, |bb, cc| x[lay.torsion(bb, cc)]);
    Ok(TwtConnection { n, omega, torsion, hp, hp_inv, residual })
}

impl TwtConnection {
    pub fn n(&self) -> usize {
        self.n
    }

    fn m(&self) -> usize {
        2 * self.n + 1
    }

    /// `ω_A^B(E_J)` with horizontal `A, B` and model index `J`.
    pub fn omega(&self, a: usize, b: usize, j: usize) -> Complex64 {
        let w = 2 * self.n;
        self.omega[(a * w + b) * self.m() + j]
    }

    /// Mixed torsion `A^B_C`.
    pub fn torsion_mixed(&self, b: usize, c: usize) -> Complex64 {
        self.torsion[(b, c)]
    }

    /// Lowered torsion `A_{CD} = A^B_C h_{BD}`; `A_{αβ}` sits in the holomorphic block.
    pub fn torsion_lowered(&self) -> DMatrix<Complex64> {
        let w = 2 * self.n;
        DMatrix::from_fn(w, w, |c, d| (0..w).map(|b| self.torsion[(b, c)] * self.hp[(b, d)]).sum())
    }

    /// Tanno tensor `Q^B_{AC}`: `Q^β̄_{αγ} = 2i ω_α^β̄(W_γ)`,
    /// `Q^β_{ᾱγ̄} = −2i ω_ᾱ^β(W_γ̄)`, all other components zero.
    pub fn tanno(&self, b: usize, a: usize, c: usize) -> Complex64 {
        let n = self.n;
        let hol = |x: usize| x < n;
        if hol(a) && hol(c) && !hol(b) {
            2.0 * I * self.omega(a, b, c + 1)
        } else if !hol(a) && !hol(c) && hol(b) {
            -2.0 * I * self.omega(a, b, c + 1)
        } else {
            ZERO
        }
    }

    /// Largest `|Q|` component.
    pub fn tanno_norm(&self) -> f64 {
        let w = 2 * self.n;
        let mut out: f64 = 0.0;
        for b in 0..w {
            for a in 0..w {
                for c in 0..w {
                    out = out.max(self.tanno(b, a, c).norm());
                }
            }
        }
        out
    }

    pub fn levi_pairing(&self) -> &DMatrix<Complex64> {
        &self.hp
    }

    pub fn levi_pairing_inverse(&self) -> &DMatrix<Complex64> {
        &self.hp_inv
    }

    pub fn invariants(&self) -> TwtInvariants {
        let n = self.n;
        let w = 2 * n;
        let m = self.m();
        let low = self.torsion_lowered();
        let torsion_symmetry = (&low - low.transpose()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut metric: f64 = 0.0;
        for a in 0..w {
            for b in 0..w {
                for j in 0..m {
                    let v: Complex64 = (0..w)
                        .map(|c| self.omega(a, c, j) * self.hp[(c, b)] + self.omega(b, c, j) * self.hp[(c, a)])
                        .sum();
                    metric = metric.max(v.norm());
                }
            }
        }
        let mut tanno_vanishing: f64 = 0.0;
        for a in 0..w {
            for b in 0..w {
                if (a < n) == (b < n) {
                    continue;
                }
                tanno_vanishing = tanno_vanishing.max(self.omega(a, b, 0).norm());
                for g in 0..w {
                    if (a < n) != (g < n) {
                        tanno_vanishing = tanno_vanishing.max(self.omega(a, b, g + 1).norm());
                    }
                }
            }
        }
        TwtInvariants { torsion_symmetry, metric, tanno_vanishing }
    }
}

/// Curvature 2-forms `Ω_A^B` of the TWT connection on all frame pairs.
#[derive(Clone, Debug)]
pub struct TwtCurvature {
    n: usize,
    /// `Ω_A^B(E_J, E_K)` at `((A·2n + B)·m + J)·m + K`.
    omega: Vec<Complex64>,
}

impl TwtCurvature {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn omega(&self, a: usize, b: usize, j: usize, k: usize) -> Complex64 {
        let w = 2 * self.n;
        let m = w + 1;
        self.omega[((a * w + b) * m + j) * m + k]
    }

    /// `R_α^β_{ργ̄} = Ω_α^β(W_ρ, W_γ̄)`, all arguments in `0..n`.
    pub fn r(&self, alpha: usize, beta: usize, rho: usize, gamma: usize) -> Complex64 {
        let n = self.n;
        self.omega(alpha, beta, 1 + rho, 1 + n + gamma)
    }

    /// Largest deviation from antisymmetry in the two arguments.
    pub fn antisymmetry_residual(&self) -> f64 {
        let w = 2 * self.n;
        let m = w + 1;
        let mut out: f64 = 0.0;
        for a in 0..w {
            for b in 0..w {
                for j in 0..m {
                    for k in 0..m {
                        out = out.max((self.omega(a, b, j, k) + self.omega(a, b, k, j)).norm());
                    }
                }
            }
        }
        out
    }

    /// Largest deviation from `Ω_{σA}^{σB}(σE, σF) = conj Ω_A^B(E, F)`.
    pub fn reality_residual(&self) -> f64 {
        let n = self.n;
        let w = 2 * n;
        let m = w + 1;
        let mut out: f64 = 0.0;
        for a in 0..w {
            for b in 0..w {
                for j in 0..m {
                    for k in 0..m {
                        let lhs = self.omega(hsigma(n, a), hsigma(n, b), sigma(n, j), sigma(n, k));
                        out = out.max((lhs - self.omega(a, b, j, k).conj()).norm());
                    }
                }
            }
        }
        out
    }
}

/// `Ω_A^B = dω_A^B − ω_A^C ∧ ω_C^B` evaluated with `dω(X,Y) = −ω([X,Y])`.
pub fn curvature_forms(model: &PhmModel, conn: &TwtConnection) -> TwtCurvature {
    let n = model.n();
    let w = 2 * n;
    let m = model.dim();
    let mut omega = vec![ZERO; w * w * m * m];
    for a in 0..w {
        for b in 0..w {
            for j in 0..m {
                for k in 0..m {
                    let mut v = ZERO;
                    for g in 0..m {
                        v -= model.c(j, k, g) * conn.omega(a, b, g);
                    }
                    for c in 0..w {
                        v -= conn.omega(a, c, j) * conn.omega(c, b, k) - conn.omega(a, c, k) * conn.omega(c, b, j);
                    }
                    omega[((a * w + b) * m + j) * m + k] = v;
                }
            }
        }
    }
    TwtCurvature { n, omega }
}

/// How the lowered Tanno tensor `Q_{XYZ}` is formed from `Q^B_{AC}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TannoLowering {
    /// `Q_{XYZ} = h_{ZB} Q^B_{XY}`.
    Last,
    /// `Q_{XYZ} = h_{XB} Q^B_{YZ}`.
    First,
}

/// Dense tensor over horizontal indices with a fixed upper/lower pattern.
#[derive(Clone, Debug)]
struct HTensor {
    w: usize,
    upper: Vec<bool>,
    data: Vec<Complex64>,
}

impl HTensor {
    fn zeros(w: usize, upper: Vec<bool>) -> Self {
        let len = w.pow(upper.len() as u32);
        HTensor { w, upper, data: vec![ZERO; len] }
    }

    fn rank(&self) -> usize {
        self.upper.len()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.w + i)
    }

    fn get(&self, idx: &[usize]) -> Complex64 {
        self.data[self.offset(idx)]
    }

    fn set(&mut self, idx: &[usize], v: Complex64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    fn indices(&self) -> Vec<Vec<usize>> {
        let r = self.rank();
        let total = self.data.len();
        (0..total)
            .map(|mut flat| {
                let mut idx = vec![0; r];
                for slot in (0..r).rev() {
                    idx[slot] = flat % self.w;
                    flat /= self.w;
                }
                idx
            })
            .collect()
    }

    /// Contracts slot `slot` with a metric-type matrix `g`, flipping its variance.
    fn flip(&self, slot: usize, g: &DMatrix<Complex64>) -> Self {
        let mut upper = self.upper.clone();
        upper[slot] = !upper[slot];
        let mut out = HTensor::zeros(self.w, upper);
        for idx in out.indices() {
            let mut acc = ZERO;
            let mut src = idx.clone();
            for x in 0..self.w {
                if g[(idx[slot], x)] == ZERO {
                    continue;
                }
                src[slot] = x;
                acc += g[(idx[slot], x)] * self.get(&src);
            }
            out.set(&idx, acc);
        }
        out
    }

    fn raise(&self, slot: usize, conn: &TwtConnection) -> Self {
        assert!(!self.upper[slot]);
        self.flip(slot, conn.levi_pairing_inverse())
    }

    fn lower(&self, slot: usize, conn: &TwtConnection) -> Self {
        assert!(self.upper[slot]);
        self.flip(slot, conn.levi_pairing())
    }

    /// Covariant derivative along horizontal directions, appended as a new
    /// lower slot: `S_{…,D} = (∇_{W_D} S)_{…}`.
    fn covariant(&self, conn: &TwtConnection) -> Self {
        let mut upper = self.upper.clone();
        upper.push(false);
        let mut out = HTensor::zeros(self.w, upper);
        for idx in out.indices() {
            let (base, dir) = idx.split_at(self.rank());
            let j = dir[0] + 1;
            let mut acc = ZERO;
            let mut src = base.to_vec();
            for (slot, &up) in self.upper.iter().enumerate() {
                for x in 0..self.w {
                    src[slot] = x;
                    let s = self.get(&src);
                    if s == ZERO {
                        continue;
                    }
                    if up {
                        acc += s * conn.omega(x, base[slot], j);
                    } else {
                        acc -= s * conn.omega(base[slot], x, j);
                    }
                }
                src[slot] = base[slot];
            }
            out.set(&idx, acc);
        }
        out
    }
}

/// 2-form on the model frame accumulated from wedges of basis covectors.
struct TwoForm {
    m: usize,
    v: Vec<Complex64>,
}

impl TwoForm {
    fn new(m: usize) -> Self {
        TwoForm { m, v: vec![ZERO; m * m] }
    }

    /// Adds `c · x ∧ y` for covectors given by their frame components.
    fn add_wedge(&mut self, c: Complex64, x: &[Complex64], y: &[Complex64]) {
        if c == ZERO {
            return;
        }
        for j in 0..self.m {
            for k in 0..self.m {
                self.v[j * self.m + k] += c * (x[j] * y[k] - x[k] * y[j]);
            }
        }
    }

    fn get(&self, j: usize, k: usize) -> Complex64 {
        self.v[j * self.m + k]
    }
}

/// Outcome of comparing the closed-form curvature expansion with the
/// directly computed curvature forms.
#[derive(Clone, Debug, Serialize)]
pub struct BdReport {
    /// Largest deviation over all frame pairs of `Ω_α^β` and `Ω_α^β̄`, with
    /// the quadratic Tanno term included.
    pub residual: f64,
    /// Same, with the quadratic Tanno term left out.
    pub residual_without_quadratic: f64,
    /// Largest coefficient of the quadratic term
    /// `¼ Q^β̄_{αγ} Q^γ_{λ̄μ̄} θ^λ̄∧θ^μ̄` in `Ω_α^β̄`. It is needed on the
    /// `θ^λ̄∧θ^μ̄` slot and vanishes on integrable models.
    pub quadratic_tanno_term: f64,
    pub lowering: TannoLowering,
}

/// Evaluates the closed-form curvature expansion (in terms of `R`, `A`, `Q`
/// and their covariant derivatives) and returns the largest deviation from
/// `curvature_forms` over all frame pairs, for `Ω_α^β` and `Ω_α^β̄`.
///
/// See [`bd_report`] for the breakdown.
pub fn verify_bd(model: &PhmModel, conn: &TwtConnection, curv: &TwtCurvature) -> f64 {
    bd_report(model, conn, curv, TannoLowering::First).residual
}

/// Full comparison report for a given lowering convention of `Q`.
///
/// The lowered Tanno tensor `Q_{γμα}` appearing in the expansion is
/// `h_{γB} Q^B_{μα}` ([`TannoLowering::First`]); that is the convention under
/// which every slot agrees.
pub fn bd_report(model: &PhmModel, conn: &TwtConnection, curv: &TwtCurvature, lowering: TannoLowering) -> BdReport {
    let full = bd_deviation(model, curv, &bd_rhs(model, conn, curv, lowering, true));
    let without = bd_deviation(model, curv, &bd_rhs(model, conn, curv, lowering, false));
    let m = model.dim();
    let qq = quadratic_tanno(model, conn);
    let mut quadratic_tanno_term: f64 = 0.0;
    for f in &qq {
        for j in 0..m {
            for k in 0..m {
                quadratic_tanno_term = quadratic_tanno_term.max(f.get(j, k).norm());
            }
        }
    }
    BdReport { residual: full, residual_without_quadratic: without, quadratic_tanno_term, lowering }
}

fn bd_deviation(model: &PhmModel, curv: &TwtCurvature, rhs: &(Vec<TwoForm>, Vec<TwoForm>)) -> f64 {
    let (omb, ombb) = rhs;
    let n = model.n();
    let m = model.dim();
    let mut out: f64 = 0.0;
    for al in 0..n {
        for be in 0..n {
            for j in 0..m {
                for k in 0..m {
                    let d1 = omb[al * n + be].get(j, k) - curv.omega(al, be, j, k);
                    let d2 = ombb[al * n + be].get(j, k) - curv.omega(al, n + be, j, k);
                    out = out.max(d1.norm()).max(d2.norm());
                }
            }
        }
    }
    out
}

/// `¼ Q^β̄_{αγ} Q^γ_{λ̄μ̄} θ^λ̄∧θ^μ̄` for each `(α, β)`, indexed by `α·n + β`.
fn quadratic_tanno(model: &PhmModel, conn: &TwtConnection) -> Vec<TwoForm> {
    let n = model.n();
    let m = model.dim();
    let up = |a: usize| -> Vec<Complex64> {
        (0..m).map(|j| if j == a + 1 { Complex64::new(1.0, 0.0) } else { ZERO }).collect()
    };
    let mut out = Vec::with_capacity(n * n);
    for al in 0..n {
        for be in 0..n {
            let mut f = TwoForm::new(m);
            for la in 0..n {
                for mu in 0..n {
                    let mut v = ZERO;
                    for ga in 0..n {
                        v += conn.tanno(n + be, al, ga) * conn.tanno(ga, n + la, n + mu);
                    }
                    f.add_wedge(0.25 * v, &up(n + la), &up(n + mu));
                }
            }
            out.push(f);
        }
    }
    out
}

/// Right-hand sides of the curvature expansion for `Ω_α^β` and `Ω_α^β̄`,
/// indexed by `α·n + β`.
fn bd_rhs(
    model: &PhmModel,
    conn: &TwtConnection,
    curv: &TwtCurvature,
    lowering: TannoLowering,
    include_quadratic_tanno: bool,
) -> (Vec<TwoForm>, Vec<TwoForm>) {
    let n = model.n();
    let w = 2 * n;
    let m = model.dim();
    let hp = conn.levi_pairing();

    // coframe components: θ = e_0, θ^A = e_{A+1}, θ_A = h_{AB} θ^B
    let theta: Vec<Complex64> = (0..m).map(|j| if j == 0 { Complex64::new(1.0, 0.0) } else { ZERO }).collect();
    let up = |a: usize| -> Vec<Complex64> {
        (0..m).map(|j| if j == a + 1 { Complex64::new(1.0, 0.0) } else { ZERO }).collect()
    };
    let down = |a: usize| -> Vec<Complex64> { (0..m).map(|j| if j == 0 { ZERO } else { hp[(a, j - 1)] }).collect() };
    let bar = |a: usize| n + a;

    // torsion tensors
    let mut a_mixed = HTensor::zeros(w, vec![true, false]); // A^B_C
    for b in 0..w {
        for c in 0..w {
            a_mixed.set(&[b, c], conn.torsion_mixed(b, c));
        }
    }
    let a_low = a_mixed.lower(0, conn); // A_{BC} with the lowered index first
    // A_{CD} = A^B_C h_{BD}: swap to put C first
    let mut a_cd = HTensor::zeros(w, vec![false, false]);
    for c in 0..w {
        for d in 0..w {
            a_cd.set(&[c, d], a_low.get(&[d, c]));
        }
    }
    let a_upup = a_cd.raise(0, conn).raise(1, conn); // A^{μβ}
    let a_cd_d = a_cd.covariant(conn); // A_{αγ,D}
    let a_mixed_d = a_mixed.covariant(conn); // A^β_{γ̄,D}
    // A_γ^{β̄} = A_{γν} h^{νβ̄}
    let a_low_up = a_cd.raise(1, conn);
    let a_low_up_d = a_low_up.covariant(conn);

    // Tanno tensor Q^B_{AC}
    let mut q = HTensor::zeros(w, vec![true, false, false]);
    for b in 0..w {
        for a in 0..w {
            for c in 0..w {
                q.set(&[b, a, c], conn.tanno(b, a, c));
            }
        }
    }
    let lowered_first = q.lower(0, conn); // h_{XB} Q^B_{YZ} as [X,Y,Z]
    let q_low = match lowering {
        TannoLowering::First => lowered_first,
        TannoLowering::Last => {
            let mut t = HTensor::zeros(w, vec![false, false, false]);
            for x in 0..w {
                for y in 0..w {
                    for z in 0..w {
                        t.set(&[x, y, z], lowered_first.get(&[z, x, y]));
                    }
                }
            }
            t
        }
    };
    let q_low_d = q_low.covariant(conn); // Q_{XYZ,D}
    let q_low_last_up = q_low.raise(2, conn); // Q_{XY}^Z
    let q_low_last_up_d = q_low_last_up.covariant(conn);
    let q_d = q.covariant(conn); // Q^B_{AC,D}
    let q_last_up = q.raise(2, conn); // Q^B_A^C
    let q_first_up = q.raise(1, conn); // Q^{BA}_C

    let quadratic = include_quadratic_tanno.then(|| quadratic_tanno(model, conn));
    let mut omb = Vec::with_capacity(n * n);
    let mut ombb = Vec::with_capacity(n * n);
    for al in 0..n {
        for be in 0..n {
            // Ω_α^β
            let mut f = TwoForm::new(m);
            for rho in 0..n {
                for ga in 0..n {
                    f.add_wedge(curv.r(al, be, rho, ga), &up(rho), &up(bar(ga)));
                }
            }
            for ga in 0..n {
                f.add_wedge(I * conn.torsion_mixed(be, bar(ga)), &down(al), &up(bar(ga)));
                f.add_wedge(-I * a_cd.get(&[al, ga]), &up(ga), &up(be));
                // A_{αγ,}^β = A_{αγ,D} h^{Dβ}
                let mut deriv = ZERO;
                for d in 0..w {
                    deriv += a_cd_d.get(&[al, ga, d]) * conn.levi_pairing_inverse()[(d, be)];
                }
                let mut qa = ZERO;
                for mu in 0..n {
                    qa += q_low.get(&[ga, mu, al]) * a_upup.get(&[mu, be]);
                }
                f.add_wedge(deriv + 0.5 * I * qa, &up(ga), &theta);
                let mut qa2 = ZERO;
                for mu in 0..n {
                    qa2 += q_low_last_up.get(&[bar(ga), bar(mu), be]) * a_mixed.get(&[bar(mu), al]);
                }
                let d2 = a_mixed_d.get(&[be, bar(ga), al]);
                f.add_wedge(-(d2 - 0.5 * I * qa2), &up(bar(ga)), &theta);
            }
            for la in 0..n {
                for mu in 0..n {
                    let mut d = ZERO;
                    for x in 0..w {
                        d += q_low_d.get(&[la, mu, al, x]) * conn.levi_pairing_inverse()[(x, be)];
                    }
                    f.add_wedge(-0.25 * I * d, &up(la), &up(mu));
                    let d2 = q_low_last_up_d.get(&[bar(la), bar(mu), be, al]);
                    f.add_wedge(-0.25 * I * d2, &up(bar(la)), &up(bar(mu)));
                }
            }
            omb.push(f);

            // Ω_α^β̄
            let bb = bar(be);
            let mut f = TwoForm::new(m);
            for ga in 0..n {
                let mut d1 = ZERO;
                for x in 0..w {
                    d1 += a_cd_d.get(&[ga, al, x]) * conn.levi_pairing_inverse()[(x, bb)];
                }
                let d2 = a_low_up_d.get(&[ga, bb, al]);
                f.add_wedge(d1 - d2, &up(ga), &theta);
                let mut s = ZERO;
                for mu in 0..n {
                    s += a_cd.get(&[bar(ga), bar(mu)])
                        * (q_last_up.get(&[bar(mu), al, bb]) - q_first_up.get(&[bar(mu), bb, al]));
                }
                f.add_wedge(0.5 * I * s, &up(bar(ga)), &theta);
                for la in 0..n {
                    f.add_wedge(0.5 * I * q_d.get(&[bb, al, la, ga]), &up(la), &up(ga));
                    f.add_wedge(-0.5 * I * q_d.get(&[bb, al, ga, bar(la)]), &up(bar(la)), &up(ga));
                }
            }
            if let Some(q) = &quadratic {
                for (dst, src) in f.v.iter_mut().zip(&q[al * n + be].v) {
                    *dst += src;
                }
            }
            ombb.push(f);
        }
    }
    (omb, ombb)
}

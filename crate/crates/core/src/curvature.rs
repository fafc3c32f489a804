//! The ACH metric on the collar as a matrix of jets, its Levi-Civita
//! connection and curvature.
//!
//! Everything is expressed in the fixed frame `(∂_φ, T, W_1.., W_1̄..)` (collar
//! index 0 is `∂_φ`, written `∞` in the docs). Brackets in this frame are the
//! constant structure constants of the model and `[∂_φ, ·] = 0`, so the only
//! derivative that acts on coefficients is `∂_φ`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::linalg::{jet_inverse, JetMatrix};
use crate::ljet::LaurentJet;
use crate::model::{hsigma, PhmModel};
use crate::twt::TwtConnection;
use crate::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Extra window given to exact entries (monomials, structural zeros) so that
/// they never limit the precision of a product.
const EXACT_MARGIN: i32 = 8;

/// Tolerance for the boundary data `s(0) = 4`, `h̃(0) = h`.
const BOUNDARY_TOL: f64 = 1e-9;

/// Collar index of the horizontal index `A`.
#[inline]
pub fn collar_h(a: usize) -> usize {
    a + 2
}

/// Conjugation on collar indices (fixes `∂_φ` and `T`).
pub fn collar_sigma(n: usize, j: usize) -> usize {
    if j < 2 {
        j
    } else {
        collar_h(hsigma(n, j - 2))
    }
}

/// Structure constants extended by zero to the `∂_φ` slot.
fn cc(model: &PhmModel, j: usize, k: usize, l: usize) -> Complex64 {
    if j == 0 || k == 0 || l == 0 {
        Complex64::new(0.0, 0.0)
    } else {
        model.c(j - 1, k - 1, l - 1)
    }
}

fn max_abs_all<'a>(it: impl Iterator<Item = &'a LaurentJet>) -> f64 {
    it.map(LaurentJet::max_abs).fold(0.0, f64::max)
}

/// The metric `g = (2φ)⁻² dφ² + φ⁻² s θ² − φ⁻¹ h̃_AB θ̃^A θ̃^B` with
/// `θ̃^A = θ^A + φ η̃^A θ`, together with its inverse.
#[derive(Clone, Debug)]
pub struct MetricJet {
    n: usize,
    g: JetMatrix,
    ginv: JetMatrix,
    s: LaurentJet,
    h_tilde: JetMatrix,
    eta: Vec<LaurentJet>,
}

/// Builds the metric from the normal-form data.
///
/// `s`, `h_tilde` and `eta` are power series (no negative powers). The
/// boundary values must be `s(0) = 4` and `h̃(0) = ` the Levi pairing of the
/// model.
pub fn assemble_metric(model: &PhmModel, s: &LaurentJet, h_tilde: &JetMatrix, eta: &[LaurentJet]) -> Result<MetricJet> {
    let n = model.n();
    let w = 2 * n;
    if h_tilde.len() != w || h_tilde.iter().any(|r| r.len() != w) || eta.len() != w {
        return Err(Error::Dimension(format!("expected {w}×{w} h̃ and {w} η̃ entries")));
    }
    for jet in std::iter::once(s).chain(h_tilde.iter().flatten()).chain(eta) {
        if !jet.is_zero() && jet.min_deg() < 0 {
            return Err(Error::BoundaryMismatch("normal-form data must be power series".into()));
        }
    }
    let s0 = s.coeff_or_zero(0);
    if (s0 - Complex64::new(4.0, 0.0)).norm() > BOUNDARY_TOL {
        return Err(Error::BoundaryMismatch(format!("s(0) = {s0}, expected 4")));
    }
    let hp = model.levi_pairing();
    for a in 0..w {
        for b in 0..w {
            let v = h_tilde[a][b].coeff_or_zero(0);
            if (v - hp[(a, b)]).norm() > BOUNDARY_TOL {
                return Err(Error::BoundaryMismatch(format!("h̃({a},{b})(0) = {v}, expected {}", hp[(a, b)])));
            }
        }
    }

    let trunc = std::iter::once(s)
        .chain(h_tilde.iter().flatten())
        .chain(eta)
        .map(LaurentJet::trunc)
        .min()
        .unwrap_or(0);
    let exact = trunc + EXACT_MARGIN;
    let dim = w + 2;
    let zero = LaurentJet::zero(exact);
    let phi = LaurentJet::monomial(Complex64::new(1.0, 0.0), 1, exact);
    let phi_inv = LaurentJet::monomial(Complex64::new(1.0, 0.0), -1, exact);
    let phi_inv2 = LaurentJet::monomial(Complex64::new(1.0, 0.0), -2, exact);

    // h̃_AB η̃^B
    let low_eta: Vec<LaurentJet> = (0..w)
        .map(|a| (0..w).fold(LaurentJet::zero(exact), |acc, b| &acc + &(&h_tilde[a][b] * &eta[b])))
        .collect();
    let eta_sq = (0..w).fold(LaurentJet::zero(exact), |acc, a| &acc + &(&low_eta[a] * &eta[a]));

    let mut g = vec![vec![zero.clone(); dim]; dim];
    g[0][0] = LaurentJet::monomial(Complex64::new(0.25, 0.0), -2, exact - 2);
    g[1][1] = &(&phi_inv2 * s) - &(&phi * &eta_sq);
    for a in 0..w {
        let v = low_eta[a].neg();
        g[1][collar_h(a)] = v.clone();
        g[collar_h(a)][1] = v;
        for b in 0..w {
            g[collar_h(a)][collar_h(b)] = (&phi_inv * &h_tilde[a][b]).neg();
        }
    }

    // inverse by the block formula: the Schur complement of the horizontal
    // block in the (T, W) part is exactly φ⁻² s
    let h_inv = jet_inverse(h_tilde)?;
    let s_inv = s.invert()?;
    let phi2 = LaurentJet::monomial(Complex64::new(1.0, 0.0), 2, exact);
    let phi3 = LaurentJet::monomial(Complex64::new(1.0, 0.0), 3, exact);
    let phi4 = LaurentJet::monomial(Complex64::new(1.0, 0.0), 4, exact);
    let mut ginv = vec![vec![zero.clone(); dim]; dim];
    ginv[0][0] = LaurentJet::monomial(Complex64::new(4.0, 0.0), 2, exact + 2);
    ginv[1][1] = &phi2 * &s_inv;
    let p3s = &phi3 * &s_inv;
    let p4s = &phi4 * &s_inv;
    for a in 0..w {
        let v = (&p3s * &eta[a]).neg();
        ginv[1][collar_h(a)] = v.clone();
        ginv[collar_h(a)][1] = v;
        for b in 0..w {
            let first = (&phi * &h_inv[a][b]).neg();
            let second = &(&p4s * &eta[a]) * &eta[b];
            ginv[collar_h(a)][collar_h(b)] = &first + &second;
        }
    }

    Ok(MetricJet { n, g, ginv, s: s.clone(), h_tilde: h_tilde.clone(), eta: eta.to_vec() })
}

impl MetricJet {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of collar frame vectors, `2n + 2`.
    pub fn dim(&self) -> usize {
        2 * self.n + 2
    }

    pub fn g(&self, j: usize, k: usize) -> &LaurentJet {
        &self.g[j][k]
    }

    pub fn ginv(&self, j: usize, k: usize) -> &LaurentJet {
        &self.ginv[j][k]
    }

    pub fn matrix(&self) -> &JetMatrix {
        &self.g
    }

    pub fn inverse_matrix(&self) -> &JetMatrix {
        &self.ginv
    }

    pub fn s(&self) -> &LaurentJet {
        &self.s
    }

    pub fn h_tilde(&self) -> &JetMatrix {
        &self.h_tilde
    }

    pub fn eta(&self) -> &[LaurentJet] {
        &self.eta
    }

    /// `max |G_JK − G_KJ|` over coefficients.
    pub fn symmetry_residual(&self) -> f64 {
        let d = self.dim();
        let mut out: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                out = out.max(self.g[j][k].max_diff(&self.g[k][j]));
            }
        }
        out
    }

    /// `max |G_{σJ σK} − conj G_JK|` over coefficients.
    pub fn reality_residual(&self) -> f64 {
        let d = self.dim();
        let mut out: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                let sj = collar_sigma(self.n, j);
                let sk = collar_sigma(self.n, k);
                out = out.max(self.g[sj][sk].max_diff(&self.g[j][k].conj()));
            }
        }
        out
    }

    /// `max |G·G⁻¹ − 1|` over the coefficients retained in the product.
    pub fn inverse_residual(&self) -> f64 {
        let d = self.dim();
        let mut out: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                let mut acc = &self.g[j][0] * &self.ginv[0][k];
                for l in 1..d {
                    acc = &acc + &(&self.g[j][l] * &self.ginv[l][k]);
                }
                let target = if j == k { LaurentJet::one(acc.trunc()) } else { LaurentJet::zero(acc.trunc()) };
                out = out.max(acc.max_diff(&target));
            }
        }
        out
    }
}

/// Levi-Civita connection coefficients `∇_{E_J} E_K = Γ_{JK}^L E_L`.
#[derive(Clone, Debug)]
pub struct ConnectionJet {
    dim: usize,
    gamma: Vec<LaurentJet>,
}

impl ConnectionJet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Γ_{JK}^L`.
    pub fn gamma(&self, j: usize, k: usize, l: usize) -> &LaurentJet {
        &self.gamma[(j * self.dim + k) * self.dim + l]
    }

    /// `max |Γ_{JK}^L − Γ_{KJ}^L − c_{JK}^L|` over coefficients.
    pub fn torsion_residual(&self, model: &PhmModel) -> f64 {
        let d = self.dim;
        let mut out: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let diff = self.gamma(j, k, l) - self.gamma(k, j, l);
                    let c = cc(model, j, k, l);
                    let target = LaurentJet::constant(c, diff.trunc().max(1));
                    out = out.max(diff.max_diff(&target));
                }
            }
        }
        out
    }

    /// `max |E_J G_KL − Γ_{JK}^M G_ML − Γ_{JL}^M G_KM|` over coefficients.
    pub fn metric_residual(&self, mj: &MetricJet) -> f64 {
        let d = self.dim;
        let mut out: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let mut r = if j == 0 { mj.g[k][l].differentiate() } else { LaurentJet::zero(mj.g[k][l].trunc()) };
                    for m in 0..d {
                        r = &r - &(self.gamma(j, k, m) * &mj.g[m][l]);
                        r = &r - &(self.gamma(j, l, m) * &mj.g[k][m]);
                    }
                    out = out.max(r.max_abs());
                }
            }
        }
        out
    }
}

/// Levi-Civita connection by the Koszul formula in the fixed frame.
pub fn koszul(mj: &MetricJet, model: &PhmModel) -> Result<ConnectionJet> {
    let d = mj.dim();
    if model.n() != mj.n {
        return Err(Error::Dimension("metric and model have different n".into()));
    }
    let g = &mj.g;
    let dg: Vec<LaurentJet> = g.iter().flatten().map(LaurentJet::differentiate).collect();
    let dgk = |k: usize, l: usize| &dg[k * d + l];
    // G([E_J, E_K], E_L)
    let bracket = |j: usize, k: usize, l: usize| -> LaurentJet {
        let mut acc = LaurentJet::zero(g[0][l].trunc() + EXACT_MARGIN);
        for m in 1..d {
            let c = cc(model, j, k, m);
            if c != Complex64::new(0.0, 0.0) {
                acc = &acc + &g[m][l].scale(c);
            }
        }
        acc
    };
    // lowered Γ_{JKL} = G(∇_J E_K, E_L)
    let lowered: Vec<LaurentJet> = (0..d * d * d)
        .into_par_iter()
        .map(|idx| {
            let (j, k, l) = (idx / (d * d), (idx / d) % d, idx % d);
            let mut acc = &(&bracket(j, k, l) - &bracket(j, l, k)) - &bracket(k, l, j);
            if j == 0 {
                acc = &acc + dgk(k, l);
            }
            if k == 0 {
                acc = &acc + dgk(j, l);
            }
            if l == 0 {
                acc = &acc - dgk(j, k);
            }
            acc.scale_real(0.5)
        })
        .collect();
    let gamma: Vec<LaurentJet> = (0..d * d * d)
        .into_par_iter()
        .map(|idx| {
            let (j, k, p) = (idx / (d * d), (idx / d) % d, idx % d);
            let mut acc = &mj.ginv[p][0] * &lowered[(j * d + k) * d];
            for l in 1..d {
                acc = &acc + &(&mj.ginv[p][l] * &lowered[(j * d + k) * d + l]);
            }
            acc
        })
        .collect();
    Ok(ConnectionJet { dim: d, gamma })
}

/// Riemann, Ricci, scalar and Einstein tensors of a metric jet.
#[derive(Clone, Debug)]
pub struct CurvatureJet {
    dim: usize,
    /// `R_{JKL}^P` at `((J·d + K)·d + L)·d + P`, empty when only Ricci was computed.
    riem: Vec<LaurentJet>,
    ric: JetMatrix,
    scal: LaurentJet,
    ein: JetMatrix,
}

/// `R(E_J, E_K) E_L = R_{JKL}^P E_P`.
fn riemann_component(cj: &ConnectionJet, model: &PhmModel, j: usize, k: usize, l: usize, p: usize) -> LaurentJet {
    let d = cj.dim;
    let mut acc = LaurentJet::zero(cj.gamma(k, l, p).trunc() + EXACT_MARGIN);
    if j == 0 {
        acc = &acc + &cj.gamma(k, l, p).differentiate();
    }
    if k == 0 {
        acc = &acc - &cj.gamma(j, l, p).differentiate();
    }
    for m in 0..d {
        acc = &acc + &(cj.gamma(k, l, m) * cj.gamma(j, m, p));
        acc = &acc - &(cj.gamma(j, l, m) * cj.gamma(k, m, p));
        let c = cc(model, j, k, m);
        if c != Complex64::new(0.0, 0.0) {
            acc = &acc - &cj.gamma(m, l, p).scale(c);
        }
    }
    acc
}

fn finish(mj: &MetricJet, ric: JetMatrix, riem: Vec<LaurentJet>) -> CurvatureJet {
    let d = mj.dim();
    let n = mj.n as f64;
    let mut scal = &mj.ginv[0][0] * &ric[0][0];
    for k in 0..d {
        for l in 0..d {
            if k + l > 0 {
                scal = &scal + &(&mj.ginv[k][l] * &ric[k][l]);
            }
        }
    }
    let ein = (0..d)
        .map(|k| (0..d).map(|l| &ric[k][l] + &mj.g[k][l].scale_real(2.0 * (n + 2.0))).collect())
        .collect();
    CurvatureJet { dim: d, riem, ric, scal, ein }
}

/// Full curvature: Riemann, Ricci `Ric_KL = R_{JKL}^J`, scalar curvature and
/// `Ein = Ric + 2(n+2) g`.
pub fn curvature(cj: &ConnectionJet, mj: &MetricJet, model: &PhmModel) -> CurvatureJet {
    let d = cj.dim;
    let riem: Vec<LaurentJet> = (0..d * d * d * d)
        .into_par_iter()
        .map(|idx| {
            let (j, k, l, p) = (idx / (d * d * d), (idx / (d * d)) % d, (idx / d) % d, idx % d);
            riemann_component(cj, model, j, k, l, p)
        })
        .collect();
    let ric = (0..d)
        .map(|k| {
            (0..d)
                .map(|l| {
                    let mut acc = riem[(k * d + l) * d].clone();
                    for j in 1..d {
                        acc = &acc + &riem[((j * d + k) * d + l) * d + j];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    finish(mj, ric, riem)
}

/// Ricci, scalar and Einstein tensors without storing the Riemann tensor.
pub fn ricci(cj: &ConnectionJet, mj: &MetricJet, model: &PhmModel) -> CurvatureJet {
    let d = cj.dim;
    let flat: Vec<LaurentJet> = (0..d * d)
        .into_par_iter()
        .map(|idx| {
            let (k, l) = (idx / d, idx % d);
            let mut acc = riemann_component(cj, model, 0, k, l, 0);
            for j in 1..d {
                acc = &acc + &riemann_component(cj, model, j, k, l, j);
            }
            acc
        })
        .collect();
    let ric = flat.chunks(d).map(<[LaurentJet]>::to_vec).collect();
    finish(mj, ric, Vec::new())
}

impl CurvatureJet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_riemann(&self) -> bool {
        !self.riem.is_empty()
    }

    /// `R_{JKL}^P`; panics when only Ricci was computed.
    pub fn riem(&self, j: usize, k: usize, l: usize, p: usize) -> &LaurentJet {
        let d = self.dim;
        &self.riem[((j * d + k) * d + l) * d + p]
    }

    pub fn ric(&self, k: usize, l: usize) -> &LaurentJet {
        &self.ric[k][l]
    }

    pub fn scal(&self) -> &LaurentJet {
        &self.scal
    }

    pub fn ein(&self, k: usize, l: usize) -> &LaurentJet {
        &self.ein[k][l]
    }

    pub fn ein_matrix(&self) -> &JetMatrix {
        &self.ein
    }

    /// First Bianchi identity `R_{JKL}^P + R_{KLJ}^P + R_{LJK}^P = 0`.
    pub fn bianchi_residual(&self) -> f64 {
        if !self.has_riemann() {
            return 0.0;
        }
        let d = self.dim;
        let mut out: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    for p in 0..d {
                        let s = &(self.riem(j, k, l, p) + self.riem(k, l, j, p)) + self.riem(l, j, k, p);
                        out = out.max(s.max_abs());
                    }
                }
            }
        }
        out
    }

    /// `max |R_{JKL}^P + R_{KJL}^P|`.
    pub fn antisymmetry_residual(&self) -> f64 {
        if !self.has_riemann() {
            return 0.0;
        }
        let d = self.dim;
        let mut out: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    for p in 0..d {
                        out = out.max((self.riem(j, k, l, p) + self.riem(k, j, l, p)).max_abs());
                    }
                }
            }
        }
        out
    }

    /// `max |Ein_{σJ σK} − conj Ein_JK|`.
    pub fn reality_residual(&self, n: usize) -> f64 {
        let d = self.dim;
        let mut out: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                let e = &self.ein[collar_sigma(n, j)][collar_sigma(n, k)];
                out = out.max(e.max_diff(&self.ein[j][k].conj()));
            }
        }
        out
    }

    /// `max |Ein_JK − Ein_KJ|`.
    pub fn symmetry_residual(&self) -> f64 {
        let d = self.dim;
        let mut out: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                out = out.max(self.ein[j][k].max_diff(&self.ein[k][j]));
            }
        }
        out
    }
}

/// Levi-Civita connection matrix in the adapted frame
/// `F_∞ = ∂_φ, F_0 = T̃ = T − φ η̃^A W_A, F_A = W_A`:
/// `∇_{F_L} F_J = ψ_J^K(F_L) F_K`, stored at `(J·d + K)·d + L`.
pub fn adapted_connection(mj: &MetricJet, cj: &ConnectionJet) -> Vec<LaurentJet> {
    let d = mj.dim();
    let w = d - 2;
    let trunc = cj.gamma.iter().map(LaurentJet::trunc).min().unwrap_or(0) + EXACT_MARGIN;
    let phi = LaurentJet::monomial(Complex64::new(1.0, 0.0), 1, trunc);
    // P_J^b: F_J = P_J^b E_b
    let mut p = vec![vec![LaurentJet::zero(trunc); d]; d];
    for (j, row) in p.iter_mut().enumerate() {
        row[j] = LaurentJet::one(trunc);
    }
    for a in 0..w {
        p[1][collar_h(a)] = (&phi * &mj.eta[a]).neg();
    }
    let dp: Vec<Vec<LaurentJet>> = p.iter().map(|r| r.iter().map(LaurentJet::differentiate).collect()).collect();

    let mut out = Vec::with_capacity(d * d * d);
    for j in 0..d {
        for k in 0..d {
            for l in 0..d {
                // components V^c of ∇_{F_L} F_J in the fixed frame, then θ̃^K(V)
                let comp = |c: usize| -> LaurentJet {
                    let mut v = &p[l][0] * &dp[j][c];
                    for a in 0..d {
                        if p[l][a].is_zero() {
                            continue;
                        }
                        let mut inner = LaurentJet::zero(trunc);
                        for b in 0..d {
                            if !p[j][b].is_zero() {
                                inner = &inner + &(&p[j][b] * cj.gamma(a, b, c));
                            }
                        }
                        v = &v + &(&p[l][a] * &inner);
                    }
                    v
                };
                let val = if k < 2 {
                    comp(k)
                } else {
                    let a = k - 2;
                    &comp(k) + &(&(&phi * &mj.eta[a]) * &comp(1))
                };
                out.push(val);
            }
        }
    }
    out
}

/// The Levi-Civita connection matrix in the adapted frame evaluated from the
/// closed-form table in terms of `s, h̃, η̃` and the TWT data (`ω`, `A`, the
/// sign symbol `ε_A = ±1` on holomorphic / antiholomorphic indices). Layout as
/// in [`adapted_connection`].
///
/// On a homogeneous model all frame derivatives of `s, h̃, η̃` along `T̃` and
/// `W_A` vanish, so only `∂_φ` derivatives appear.
pub fn closed_form_connection(
    model: &PhmModel,
    twt: &TwtConnection,
    s: &LaurentJet,
    h_tilde: &JetMatrix,
    eta: &[LaurentJet],
    with_bracket_term: bool,
) -> Result<Vec<LaurentJet>> {
    let n = model.n();
    let w = 2 * n;
    let d = w + 2;
    let trunc = std::iter::once(s).chain(h_tilde.iter().flatten()).chain(eta).map(LaurentJet::trunc).min().unwrap_or(0);
    let exact = trunc + EXACT_MARGIN;
    let ccst = |v: Complex64| LaurentJet::constant(v, exact);
    let zero = LaurentJet::zero(exact);
    let phi = LaurentJet::monomial(Complex64::new(1.0, 0.0), 1, exact);
    let phi2 = &phi * &phi;
    let phi_inv = LaurentJet::monomial(Complex64::new(1.0, 0.0), -1, exact);
    let hp = model.levi_pairing();
    let eps = |a: usize| if a < n { 1.0 } else { -1.0 };

    let s_inv = s.invert()?;
    let ds = s.differentiate();
    let h_inv = jet_inverse(h_tilde)?;
    // ζ^A = η̃^A + φ ∂η̃^A
    let zeta: Vec<LaurentJet> = eta.iter().map(|e| e + &(&phi * &e.differentiate())).collect();
    // η̃ lowered with the Levi form
    let eta_low: Vec<LaurentJet> = (0..w)
        .map(|c| (0..w).fold(zero.clone(), |acc, dd| &acc + &eta[dd].scale(hp[(c, dd)])))
        .collect();
    // h̃_AB η̃^B
    let hz_eta: Vec<LaurentJet> =
        (0..w).map(|a| (0..w).fold(zero.clone(), |acc, b| &acc + &(&h_tilde[a][b] * &eta[b]))).collect();
    let hz: Vec<LaurentJet> =
        (0..w).map(|a| (0..w).fold(zero.clone(), |acc, b| &acc + &(&h_tilde[a][b] * &zeta[b]))).collect();
    // horizontal block of g and its inverse
    let gh: Vec<Vec<LaurentJet>> = h_tilde.iter().map(|r| r.iter().map(|x| (&phi_inv * x).neg()).collect()).collect();
    let gh_inv: Vec<Vec<LaurentJet>> = h_inv.iter().map(|r| r.iter().map(|x| (&phi * x).neg()).collect()).collect();
    let dgh: Vec<Vec<LaurentJet>> = gh.iter().map(|r| r.iter().map(LaurentJet::differentiate).collect()).collect();

    let om0 = |a: usize, b: usize| ccst(twt.omega(a, b, 0));
    let omc = |a: usize, b: usize, c: usize| twt.omega(a, b, c + 1);
    let tor = |b: usize, c: usize| twt.torsion_mixed(b, c);

    let mut psi = vec![zero.clone(); d * d * d];
    let idx = |j: usize, k: usize, l: usize| (j * d + k) * d + l;
    let (inf, t) = (0usize, 1usize);
    let hh = collar_h;

    // ψ_∞^∞ = −φ⁻¹ dφ
    psi[idx(inf, inf, inf)] = phi_inv.neg();
    // ψ_∞^0
    let a0 = &phi_inv.neg() + &(&s_inv * &ds).scale_real(0.5);
    psi[idx(inf, t, t)] = a0.clone();
    for a in 0..w {
        psi[idx(inf, t, hh(a))] = (&(&phi * &s_inv) * &hz[a]).scale_real(-0.5);
    }
    // ψ_∞^A
    for a in 0..w {
        psi[idx(inf, hh(a), t)] = zeta[a].scale_real(0.5);
        for c in 0..w {
            let mut acc = zero.clone();
            for b in 0..w {
                acc = &acc + &(&gh_inv[a][b] * &dgh[b][c]);
            }
            psi[idx(inf, hh(a), hh(c))] = acc.scale_real(0.5);
        }
    }
    // ψ_0^∞
    psi[idx(t, inf, t)] = &(&phi_inv * s).scale_real(4.0) - &ds.scale_real(2.0);
    for a in 0..w {
        psi[idx(t, inf, hh(a))] = (&phi * &hz[a]).scale_real(2.0);
    }
    // ψ_0^0
    psi[idx(t, t, inf)] = a0.clone();
    // X_C^D = −ω_C^D(T) + A^D_C + φ η̃^E ω_C^D(W_E) − φ η̃^E ω_E^D(W_C) + iφ² ε_C η̃^D η̃_C
    let x = |c: usize, dd: usize| -> LaurentJet {
        let mut acc = &om0(c, dd).neg() + &ccst(tor(dd, c));
        for e in 0..w {
            let coef = omc(c, dd, e) - omc(e, dd, c);
            if coef != Complex64::new(0.0, 0.0) {
                acc = &acc + &(&phi * &eta[e]).scale(coef);
            }
        }
        &acc + &(&(&phi2 * &eta[dd]) * &eta_low[c]).scale(I * eps(c))
    };
    let xm: Vec<Vec<LaurentJet>> = (0..w).map(|c| (0..w).map(|dd| x(c, dd)).collect()).collect();
    // ψ_0^A
    let s_phi_inv = &phi_inv * s;
    for a in 0..w {
        psi[idx(t, hh(a), inf)] = zeta[a].scale_real(-0.5);
        let mut th = zero.clone();
        for b in 0..w {
            let inner = (&phi * &eta_low[b]).scale(-I * eps(b));
            th = &th + &(&h_inv[a][b] * &inner);
        }
        psi[idx(t, hh(a), t)] = &s_phi_inv * &th;
        for c in 0..w {
            let mut acc = zero.clone();
            for b in 0..w {
                let mut inner = s_phi_inv.scale(-I * eps(c) * hp[(b, c)]);
                for dd in 0..w {
                    inner = &inner + &(&h_tilde[b][dd] * &xm[c][dd]);
                    inner = &inner + &(&h_tilde[c][dd] * &xm[b][dd]);
                }
                acc = &acc + &(&h_inv[a][b] * &inner);
            }
            psi[idx(t, hh(a), hh(c))] = acc.scale_real(0.5);
        }
    }
    // ψ_A^∞
    for a in 0..w {
        psi[idx(hh(a), inf, t)] = (&phi * &hz[a]).scale_real(2.0);
        for c in 0..w {
            psi[idx(hh(a), inf, hh(c))] = (&phi2 * &dgh[a][c]).scale_real(-2.0);
        }
    }
    // ψ_A^0
    for a in 0..w {
        psi[idx(hh(a), t, inf)] = (&(&phi * &s_inv) * &hz[a]).scale_real(-0.5);
        psi[idx(hh(a), t, t)] = (&phi * &eta_low[a]).scale(-I * eps(a));
        for c in 0..w {
            let mut acc = zero.clone();
            for b in 0..w {
                acc = &acc + &(&h_tilde[a][b] * &psi[idx(t, hh(b), hh(c))]);
            }
            psi[idx(hh(a), t, hh(c))] = &(&phi * &s_inv) * &acc;
        }
    }
    // ψ_A^B
    for a in 0..w {
        for b in 0..w {
            let mut acc = zero.clone();
            for c in 0..w {
                acc = &acc + &(&h_inv[b][c] * &(&phi_inv * &h_tilde[a][c]).differentiate());
            }
            psi[idx(hh(a), hh(b), inf)] = (&phi * &acc).scale_real(0.5);

            let mut th = &(&psi[idx(t, hh(b), hh(a))] + &om0(a, b)) - &ccst(tor(b, a));
            for c in 0..w {
                let coef = omc(c, b, a) - omc(a, b, c);
                if coef != Complex64::new(0.0, 0.0) {
                    th = &th + &(&phi * &eta[c]).scale(coef);
                }
            }
            th = &th - &(&(&phi2 * &eta[b]) * &eta_low[a]).scale(I * eps(a));
            psi[idx(hh(a), hh(b), t)] = th;

            for c in 0..w {
                let mut acc = zero.clone();
                for dd in 0..w {
                    let mut inner = zero.clone();
                    for e in 0..w {
                        let k1 = omc(dd, e, c) - omc(c, e, dd);
                        let k2 = omc(dd, e, a) - omc(a, e, dd);
                        let k3 = omc(c, e, a) - omc(a, e, c);
                        inner = &inner - &h_tilde[a][e].scale(k1);
                        inner = &inner - &h_tilde[c][e].scale(k2);
                        inner = &inner - &h_tilde[dd][e].scale(k3);
                    }
                    if with_bracket_term {
                        // T-components of the horizontal brackets, with
                        // T = T̃ + φ η̃^E W_E: c^0_{XY} = −i ε_X h_{XY}
                        let c0 = |x: usize, y: usize| -I * eps(x) * hp[(x, y)];
                        let k1 = c0(c, a);
                        let k2 = c0(c, dd);
                        let k3 = c0(a, dd);
                        let mut t3 = zero.clone();
                        if k1 != Complex64::new(0.0, 0.0) {
                            t3 = &t3 + &hz_eta[dd].scale(k1);
                        }
                        if k2 != Complex64::new(0.0, 0.0) {
                            t3 = &t3 - &hz_eta[a].scale(k2);
                        }
                        if k3 != Complex64::new(0.0, 0.0) {
                            t3 = &t3 - &hz_eta[c].scale(k3);
                        }
                        inner = &inner + &(&phi * &t3);
                    }
                    acc = &acc + &(&h_inv[b][dd] * &inner);
                }
                psi[idx(hh(a), hh(b), hh(c))] = acc.scale_real(0.5);
            }
        }
    }
    Ok(psi)
}

/// Comparison of the Koszul connection, moved to the adapted frame, with the
/// closed-form table.
#[derive(Clone, Debug, serde::Serialize)]
pub struct LeviCivitaReport {
    /// Largest coefficient deviation over all components, with the bracket
    /// term included in the horizontal block.
    pub residual: f64,
    /// Same, with the bracket term left out.
    pub residual_without_bracket_term: f64,
}

/// Largest coefficient deviation between the Koszul connection transported to
/// the adapted frame and the closed-form table, over all components.
///
/// The horizontal block `ψ_A^B(W_C)` of the table carries the contribution
/// `½ φ (h̃⁻¹)^{BD} (c^0_{CA} h̃_{DE} − c^0_{CD} h̃_{AE} − c^0_{AD} h̃_{CE}) η̃^E`
/// of the `T`-components `c^0_{XY} = −i ε_X h_{XY}` of horizontal brackets,
/// since `T = T̃ + φ η̃^E W_E`. Without it the two sides disagree at order
/// `φ η̃`; [`crosscheck_report`] gives both numbers.
pub fn crosscheck_connection_table(model: &PhmModel, twt: &TwtConnection, mj: &MetricJet, cj: &ConnectionJet) -> Result<f64> {
    Ok(crosscheck_report(model, twt, mj, cj)?.residual)
}

pub fn crosscheck_report(
    model: &PhmModel,
    twt: &TwtConnection,
    mj: &MetricJet,
    cj: &ConnectionJet,
) -> Result<LeviCivitaReport> {
    let koszul_side = adapted_connection(mj, cj);
    let table = closed_form_connection(model, twt, &mj.s, &mj.h_tilde, &mj.eta, true)?;
    let bare = closed_form_connection(model, twt, &mj.s, &mj.h_tilde, &mj.eta, false)?;
    Ok(LeviCivitaReport {
        residual: max_deviation(&koszul_side, &table),
        residual_without_bracket_term: max_deviation(&koszul_side, &bare),
    })
}

/// Largest coefficient deviation between two connection tables.
pub fn max_deviation(a: &[LaurentJet], b: &[LaurentJet]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.max_diff(y)).fold(0.0, f64::max)
}

/// Largest coefficient of any jet in a slice.
pub fn max_coefficient(jets: &[LaurentJet]) -> f64 {
    max_abs_all(jets.iter())
}

/// Boundary-value normal-form data of the complex hyperbolic model: `s ≡ 4`,
/// `h̃ ≡ h`, `η̃ ≡ 0`, each as a jet with window `trunc`.
pub fn flat_state(model: &PhmModel, trunc: i32) -> (LaurentJet, JetMatrix, Vec<LaurentJet>) {
    let w = 2 * model.n();
    let hp: DMatrix<Complex64> = model.levi_pairing();
    let s = LaurentJet::constant(Complex64::new(4.0, 0.0), trunc);
    let h = (0..w).map(|a| (0..w).map(|b| LaurentJet::constant(hp[(a, b)], trunc)).collect()).collect();
    let eta = vec![LaurentJet::zero(trunc); w];
    (s, h, eta)
}

//! Volume expansion of the solved metric and its log coefficient `L`.
//!
//! The Riemannian volume form is
//! `dv = (−φ)^{−n−2} λ(φ) dφ∧θ∧(dθ)^n` with `λ = √(s det h̃)/(2√(det h))`,
//! and `(−φ)^{−n−2} = (−1)^n φ^{−n−2}`, so in the series
//! `dv = φ^{−n−2}(v^(0) + v^(1) φ + …)` we have `v^(j) = (−1)^n λ_j`. Integrating
//! over `{ε₀ < φ < ε}` gives `c_j ε^{j−n−1}` for `j ≤ n` plus `L log(−ε)` with
//! `L = v^(n+1) vol_M`.

use num_complex::Complex64;
use serde::Serialize;

use crate::linalg::jet_det;
use crate::ljet::LaurentJet;
use crate::solver::SolverState;
use crate::{Error, Result};

/// Largest `|φ|` at which the truncated density is trusted numerically.
pub const PROFILE_WINDOW: f64 = 0.1;

/// `λ(φ)`, normalized so that `λ(0) = 1`.
pub fn density(state: &SolverState) -> Result<LaurentJet> {
    let det_h = jet_det(state.h_tilde())?;
    let det_hp = state.model().levi_pairing().determinant();
    if det_hp.norm() == 0.0 {
        return Err(Error::NonPositiveLevi(0.0));
    }
    let ratio = (state.s() * &det_h).scale(det_hp.inv());
    Ok(ratio.sqrt()?.scale_real(0.5))
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileRow {
    pub eps: f64,
    pub numeric: f64,
    pub series: f64,
    pub difference: f64,
    /// `difference / (1 + |series|)`.
    pub relative: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeReport {
    pub density: LaurentJet,
    /// `v^(0..=n+1)`.
    pub v: Vec<f64>,
    pub l: f64,
    pub vol_m: f64,
    /// Coefficients of `ε^{j−n−1}`, `j = 0..=n`.
    pub c: Vec<f64>,
    /// Largest imaginary part among the `v^(j)` before taking real parts.
    pub imag_residual: f64,
    pub b: Complex64,
    pub o: Vec<Complex64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<ProfileRow>>,
}

/// Density coefficients, `v^(j)`, `c_j` and `L`.
pub fn expansion(state: &SolverState) -> Result<VolumeReport> {
    let n = state.model().n() as i32;
    let lam = density(state)?;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let mut v = Vec::new();
    let mut imag_residual: f64 = 0.0;
    for j in 0..=n + 1 {
        let z = lam.coefficient(j)? * sign;
        imag_residual = imag_residual.max(z.im.abs());
        v.push(z.re);
    }
    let vol_m = state.model().vol_m();
    let c = (0..=n).map(|j| -v[j as usize] * vol_m / f64::from(n + 1 - j)).collect();
    let obs = state.obstructions()?;
    Ok(VolumeReport {
        density: lam,
        l: v[(n + 1) as usize] * vol_m,
        v,
        vol_m,
        c,
        imag_residual,
        b: obs.b,
        o: obs.o,
        profile: None,
    })
}

/// Compares the volume of `{ε₀ < φ < ε}` by quadrature of the truncated
/// density with the series `Σ c_j ε^{j−n−1} + L log(−ε) + V`, where `V` is
/// the constant fixed by `ε₀`.
pub fn numeric_profile(state: &SolverState, eps_list: &[f64], eps0: f64) -> Result<Vec<ProfileRow>> {
    for &e in eps_list.iter().chain(std::iter::once(&eps0)) {
        if !(e < 0.0) || e.abs() > PROFILE_WINDOW {
            return Err(Error::WindowTooLarge(e));
        }
    }
    let n = state.model().n() as i32;
    let lam = density(state)?;
    let vol_m = state.model().vol_m();
    let rep = expansion(state)?;
    let coeffs: Vec<f64> = (0..lam.trunc()).map(|j| lam.coeff_or_zero(j).re).collect();

    // exact antiderivative of φ^{−n−2} λ(φ)(−1)^n, termwise
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let antiderivative = |x: f64, singular_only: bool| -> f64 {
        let mut acc = 0.0;
        for (j, &lj) in coeffs.iter().enumerate() {
            let p = j as i32 - n - 1;
            let vj = sign * lj;
            if p == 0 {
                acc += vj * (-x).ln();
            } else if !singular_only || p < 0 {
                acc += vj * x.powi(p) / f64::from(p);
            }
        }
        acc * vol_m
    };
    let v_const = -antiderivative(eps0, false);
    let series_at = |e: f64| {
        let mut acc = rep.l * (-e).ln() + v_const;
        for (j, cj) in rep.c.iter().enumerate() {
            acc += cj * e.powi(j as i32 - n - 1);
        }
        acc
    };

    let mut rows = Vec::with_capacity(eps_list.len());
    for &e in eps_list {
        if e <= eps0 {
            return Err(Error::Dimension(format!("profile point {e} must lie above ε₀ = {eps0}")));
        }
        // u = log(−φ): dv = (−φ)^{−n−1} λ(φ) du on [log(−ε), log(−ε₀)]
        let f = |u: f64| {
            let t = u.exp();
            t.powi(-n - 1) * lam.eval(-t).re
        };
        let numeric = vol_m * adaptive_gk(&f, (-e).ln(), (-eps0).ln(), 1e-14, 40);
        let series = series_at(e);
        let difference = (numeric - series).abs();
        rows.push(ProfileRow { eps: e, numeric, series, difference, relative: difference / (1.0 + series.abs()) });
    }
    Ok(rows)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
// Gauss weights on the odd nodes (indices 1, 3, 5, 7 above)
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = K15_WEIGHTS[7] * fc;
    let mut g = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        k += K15_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G7_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod 7/15 with relative tolerance `rtol` on the total.
fn adaptive_gk(f: &impl Fn(f64) -> f64, a: f64, b: f64, rtol: f64, max_depth: u32) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: (f64, f64), atol: f64, depth: u32) -> f64 {
        let (val, err) = whole;
        if err <= atol || depth == 0 {
            return val;
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        rec(f, a, m, left, 0.5 * atol, depth - 1) + rec(f, m, b, right, 0.5 * atol, depth - 1)
    }
    let whole = gk15(f, a, b);
    let atol = rtol * whole.0.abs().max(f64::MIN_POSITIVE);
    rec(f, a, b, whole, atol, max_depth)
}

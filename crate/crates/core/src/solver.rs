//! Order-by-order solution of `Ein = Ric + 2(n+2) g = 0` for the normal-form
//! data `(s, h̃, η̃)`, and the obstruction tensors left over.
//!
//! Stage `k ≥ 1` fixes `s_k`, `h̃_k` and `η̃_{k−1}` from
//!
//! * `coeff_{k−2} Ein_00`,
//! * `coeff_{k−1} Ein_AB` for `A ≤ B`,
//! * `coeff_{k−1} Ein_0A`,
//!
//! and stage 0 fixes `η̃_0` from `coeff_0 Ein_0A`. The map from the stage
//! unknowns to these coefficients is affine; its linear part is found by
//! probing with unit vectors and the system is solved by LU, with a few chord
//! iterations to absorb the quadratic terms.
//!
//! On the flat model the diagonal factors are `2(k−n)(k+2)` for `η̃_k`,
//! `2k(k−n−1)` for `h̃_{αβ}` and `2(k²−(n+1)k−2)` for the trace-free part of
//! `h̃_{αβ̄}`, while `s` and the trace of `h̃` are coupled. So at the last
//! stage `k = n+1` the `η̃_n` and `h̃_{αβ}` blocks are singular: they are set to
//! zero and what their equations still show is reported as
//! [`StageReport::dropped_residual`]. It vanishes on integrable models but not
//! in general.
//!
//! The obstruction pair is `B = coeff_n Ein(T,T)` and
//! `O_A = coeff_{n+1} Ein(T, W_A)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{assemble_metric, collar_h, flat_state, koszul, ricci, CurvatureJet, MetricJet};
use crate::linalg::{least_squares, lu_solve, singular_values, JetMatrix};
use crate::ljet::LaurentJet;
use crate::model::PhmModel;
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Smallest-over-largest pivot below which a stage counts as singular.
pub const PIVOT_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Window of `s, h̃, η̃` above their leading degree is `n + trunc_extra`.
    pub trunc_extra: i32,
    /// Also fix the trace-free and `h̃_{αβ}` parts of `h̃` at order `n+2`.
    pub extend_tracefree: bool,
    /// Absolute tolerance for vanishing Einstein coefficients.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { trunc_extra: 7, extend_tracefree: false, tol: 1e-9 }
    }
}

/// The normal-form data `(s, h̃, η̃)` as jets.
#[derive(Clone, Debug)]
struct Data {
    s: LaurentJet,
    h: JetMatrix,
    eta: Vec<LaurentJet>,
}

impl Data {
    fn widen(&self, trunc: i32) -> Data {
        Data {
            s: self.s.widen_polynomial(trunc),
            h: self.h.iter().map(|r| r.iter().map(|x| x.widen_polynomial(trunc)).collect()).collect(),
            eta: self.eta.iter().map(|x| x.widen_polynomial(trunc)).collect(),
        }
    }
}

/// Unknown / equation layout of one stage: `s`, then `h̃_AB` for `A ≤ B`, then `η̃^A`.
#[derive(Clone, Debug)]
struct Layout {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl Layout {
    fn new(n: usize) -> Self {
        let w = 2 * n;
        let pairs = (0..w).flat_map(|a| (a..w).map(move |b| (a, b))).collect();
        Layout { n, pairs }
    }

    fn w(&self) -> usize {
        2 * self.n
    }

    fn len(&self) -> usize {
        1 + self.pairs.len() + self.w()
    }

    fn h0(&self) -> usize {
        1
    }

    fn eta0(&self) -> usize {
        1 + self.pairs.len()
    }

    /// Pair `p` couples a holomorphic with an antiholomorphic index.
    fn is_mixed(&self, p: usize) -> bool {
        let (a, b) = self.pairs[p];
        (a < self.n) != (b < self.n)
    }

    fn indices(&self, blocks: &[Block]) -> Vec<usize> {
        let mut out = Vec::new();
        for b in blocks {
            match b {
                Block::S => out.push(0),
                Block::H => out.extend(self.h0()..self.eta0()),
                Block::MixedH => out.extend((0..self.pairs.len()).filter(|&p| self.is_mixed(p)).map(|p| self.h0() + p)),
                Block::Eta => out.extend(self.eta0()..self.len()),
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Block {
    S,
    H,
    MixedH,
    Eta,
}

fn einstein(model: &PhmModel, d: &Data) -> Result<(MetricJet, CurvatureJet)> {
    let mj = assemble_metric(model, &d.s, &d.h, &d.eta)?;
    let cj = koszul(&mj, model)?;
    let cv = ricci(&cj, &mj, model);
    Ok((mj, cv))
}

/// The stage-`k` equation vector, in the layout order.
fn equations(lay: &Layout, cv: &CurvatureJet, k: i32) -> Result<DVector<Complex64>> {
    let mut e = Vec::with_capacity(lay.len());
    e.push(cv.ein(1, 1).coefficient(k - 2)?);
    for &(a, b) in &lay.pairs {
        e.push(cv.ein(collar_h(a), collar_h(b)).coefficient(k - 1)?);
    }
    for a in 0..lay.w() {
        e.push(cv.ein(1, collar_h(a)).coefficient(eta_order(k))?);
    }
    Ok(DVector::from_vec(e))
}

/// Order of the `η̃` unknown (and of the `Ein_0A` equation) at stage `k`.
/// Stage 0 and stage 1 both address `η̃_0`.
fn eta_order(k: i32) -> i32 {
    (k - 1).max(0)
}

/// Adds `u` to the stage-`k` coefficients, `u` in layout order.
fn apply(lay: &Layout, d: &Data, k: i32, u: &[Complex64]) -> Data {
    let trunc = d.s.trunc();
    let mono = |c: Complex64| LaurentJet::monomial(c, k, trunc);
    let mut out = d.clone();
    if u[0] != ZERO {
        out.s = &out.s + &mono(u[0]);
    }
    for (p, &(a, b)) in lay.pairs.iter().enumerate() {
        let c = u[lay.h0() + p];
        if c != ZERO {
            out.h[a][b] = &out.h[a][b] + &mono(c);
            if a != b {
                out.h[b][a] = &out.h[b][a] + &mono(c);
            }
        }
    }
    for a in 0..lay.w() {
        let c = u[lay.eta0() + a];
        if c != ZERO {
            out.eta[a] = &out.eta[a] + &LaurentJet::monomial(c, eta_order(k), trunc);
        }
    }
    out
}

/// Linear part of `u_k ↦ e_k` at `d`, by unit probes (columns in layout order).
fn probe(model: &PhmModel, lay: &Layout, d: &Data, k: i32) -> Result<DMatrix<Complex64>> {
    let (_, cv) = einstein(model, d)?;
    let base = equations(lay, &cv, k)?;
    // at k = 0 only η̃ is free; s(0) and h̃(0) are boundary data
    let first = if k == 0 { lay.eta0() } else { 0 };
    let cols: Vec<Result<DVector<Complex64>>> = (0..lay.len())
        .into_par_iter()
        .map(|i| {
            if i < first {
                return Ok(DVector::from_element(lay.len(), ZERO));
            }
            let mut u = vec![ZERO; lay.len()];
            u[i] = Complex64::new(1.0, 0.0);
            let (_, cv) = einstein(model, &apply(lay, d, k, &u))?;
            Ok(equations(lay, &cv, k)? - &base)
        })
        .collect();
    let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&cols))
}

fn select(m: &DMatrix<Complex64>, rows: &[usize], cols: &[usize]) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn max_abs(v: &DVector<Complex64>) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// What happened at one stage of the recursion.
#[derive(Clone, Debug, Serialize)]
pub struct StageReport {
    pub k: i32,
    pub unknowns: usize,
    pub pivot_ratio: f64,
    pub residual_before: f64,
    pub residual_after: f64,
    /// Largest stage equation left out of the system (the singular blocks at
    /// `k = n+1`). These must vanish on their own.
    pub dropped_residual: f64,
    pub iterations: usize,
}

/// A solved (or perturbed) approximately Einstein metric.
#[derive(Clone, Debug)]
pub struct SolverState {
    model: PhmModel,
    opts: SolverOptions,
    data: Data,
    solved_through: i32,
    metric: MetricJet,
    curvature: CurvatureJet,
    stages: Vec<StageReport>,
}

/// Solves one stage for the given unknown and equation blocks, iterating the
/// chord method with the probe matrix until the equations vanish.
fn solve_stage(
    model: &PhmModel,
    lay: &Layout,
    d: &Data,
    k: i32,
    blocks: &[Block],
) -> Result<(Data, StageReport)> {
    let idx = lay.indices(blocks);
    let m = probe(model, lay, d, k)?;
    let a = select(&m, &idx, &idx);
    let (_, cv) = einstein(model, d)?;
    let e = equations(lay, &cv, k)?;
    let e_act = DVector::from_iterator(idx.len(), idx.iter().map(|&i| e[i]));
    let residual_before = max_abs(&e_act);
    let pivot = crate::linalg::pivot_ratio(&a);
    if pivot < PIVOT_THRESHOLD {
        return Err(Error::SingularStage { stage: k, ratio: pivot });
    }
    let mut cur = d.clone();
    let mut res = e_act;
    let mut iterations = 0;
    let scale = 1.0 + residual_before;
    while iterations < 6 && max_abs(&res) > 1e-14 * scale {
        let step = lu_solve(&a, &(-&res), PIVOT_THRESHOLD).map_err(|_| Error::SingularStage { stage: k, ratio: pivot })?;
        let mut u = vec![ZERO; lay.len()];
        for (j, &i) in idx.iter().enumerate() {
            u[i] = step.x[j];
        }
        cur = apply(lay, &cur, k, &u);
        let (_, cv) = einstein(model, &cur)?;
        let e = equations(lay, &cv, k)?;
        res = DVector::from_iterator(idx.len(), idx.iter().map(|&i| e[i]));
        iterations += 1;
    }
    let dropped: Vec<usize> = (0..lay.len()).filter(|i| !idx.contains(i) && (k > 0 || *i >= lay.eta0())).collect();
    let (_, cv) = einstein(model, &cur)?;
    let e = equations(lay, &cv, k)?;
    let dropped_residual = dropped.iter().map(|&i| e[i].norm()).fold(0.0, f64::max);
    let report = StageReport {
        k,
        unknowns: idx.len(),
        pivot_ratio: pivot,
        residual_before,
        residual_after: max_abs(&res),
        dropped_residual,
        iterations,
    };
    Ok((cur, report))
}

/// `τ(X) = Σ (h⁻¹)^{BA} X_AB` in pair coordinates.
fn trace_weights(lay: &Layout, hp_inv: &DMatrix<Complex64>) -> Vec<Complex64> {
    lay.pairs
        .iter()
        .map(|&(a, b)| if a == b { hp_inv[(b, a)] } else { hp_inv[(b, a)] + hp_inv[(a, b)] })
        .collect()
}

/// Fixes the trace-free and `h̃_{αβ}` parts of `h̃` at order `n+2`; the trace
/// there is left at zero along with `s_{n+2}`.
fn extend_tracefree(model: &PhmModel, lay: &Layout, d: &Data) -> Result<(Data, StageReport)> {
    let n = lay.n;
    let k = n as i32 + 2;
    let hp = model.levi_pairing();
    let hp_inv = hp.clone().try_inverse().ok_or(Error::NonPositiveLevi(0.0))?;
    let tau = trace_weights(lay, &hp_inv);
    let hvec: Vec<Complex64> = lay.pairs.iter().map(|&(a, b)| hp[(a, b)]).collect();
    let np = lay.pairs.len();
    let two_n = Complex64::new(2.0 * n as f64, 0.0);
    // projector removing the trace direction: X ↦ X − τ(X)/(2n) h
    let proj = DMatrix::from_fn(np, np, |i, j| {
        let id = if i == j { Complex64::new(1.0, 0.0) } else { ZERO };
        id - hvec[i] * tau[j] / two_n
    });
    let m = probe(model, lay, d, k)?;
    let hidx = lay.indices(&[Block::H]);
    let l = select(&m, &hidx, &hidx);
    let mut a = DMatrix::from_element(np + 1, np, ZERO);
    a.view_mut((0, 0), (np, np)).copy_from(&(&proj * &l));
    for j in 0..np {
        a[(np, j)] = tau[j];
    }
    let sv = singular_values(&a);
    let ratio = sv.last().copied().unwrap_or(0.0) / sv.first().copied().unwrap_or(1.0);
    if ratio < PIVOT_THRESHOLD {
        return Err(Error::SingularStage { stage: k, ratio });
    }
    let (_, cv) = einstein(model, d)?;
    let e = equations(lay, &cv, k)?;
    let eh = DVector::from_iterator(np, hidx.iter().map(|&i| e[i]));
    let pe = &proj * &eh;
    let residual_before = max_abs(&pe);
    let mut rhs = DVector::from_element(np + 1, ZERO);
    rhs.rows_mut(0, np).copy_from(&(-&pe));
    let x = least_squares(&a, &rhs)?;
    let mut u = vec![ZERO; lay.len()];
    for (j, &i) in hidx.iter().enumerate() {
        u[i] = x[j];
    }
    let cur = apply(lay, d, k, &u);
    let (_, cv) = einstein(model, &cur)?;
    let e = equations(lay, &cv, k)?;
    let eh = DVector::from_iterator(np, hidx.iter().map(|&i| e[i]));
    let report = StageReport {
        k,
        unknowns: np,
        pivot_ratio: ratio,
        residual_before,
        residual_after: max_abs(&(&proj * &eh)),
        dropped_residual: 0.0,
        iterations: 1,
    };
    Ok((cur, report))
}

/// Runs the recursion through order `n+1` (or `n+2` for the trace-free part
/// with `extend_tracefree`).
pub fn solve(model: &PhmModel, opts: &SolverOptions) -> Result<SolverState> {
    let report = model.validate();
    if !report.passed() {
        return Err(Error::InvalidModel(Box::new(report)));
    }
    let n = model.n();
    let lay = Layout::new(n);
    let trunc = n as i32 + opts.trunc_extra.max(3);
    let (s, h, eta) = flat_state(model, trunc);
    let mut d = Data { s, h, eta };
    let mut stages = Vec::new();
    let top = n as i32 + 1;
    for k in 0..=top {
        let blocks: &[Block] = if k == 0 {
            &[Block::Eta]
        } else if k == top {
            &[Block::S, Block::MixedH]
        } else {
            &[Block::S, Block::H, Block::Eta]
        };
        let (next, rep) = solve_stage(model, &lay, &d, k, blocks)?;
        d = next;
        stages.push(rep);
    }
    let mut solved_through = top;
    if opts.extend_tracefree {
        let (next, rep) = extend_tracefree(model, &lay, &d)?;
        d = next;
        stages.push(rep);
        solved_through = top + 1;
    }
    let (metric, curvature) = einstein(model, &d)?;
    Ok(SolverState { model: model.clone(), opts: *opts, data: d, solved_through, metric, curvature, stages })
}

/// `B = coeff_n Ein(T,T)` and `O_A = coeff_{n+1} Ein(T, W_A)`.
#[derive(Clone, Debug, Serialize)]
pub struct Obstructions {
    pub b: Complex64,
    /// Indexed by horizontal `A`: `O_1..O_n, O_1̄..O_n̄`.
    pub o: Vec<Complex64>,
}

impl Obstructions {
    pub fn o_norm(&self) -> f64 {
        self.o.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Largest difference to another pair, over `B` and all `O_A`.
    pub fn max_diff(&self, other: &Obstructions) -> f64 {
        self.o.iter().zip(&other.o).map(|(a, b)| (a - b).norm()).fold((self.b - other.b).norm(), f64::max)
    }
}

/// Largest `|coeff_n Ein_{αβ}|` and `|coeff_n Ein_0A|`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LowerOrder {
    pub pure_h: f64,
    pub eta: f64,
}

/// One line of the order table: the first `φ`-order whose coefficient exceeds
/// the tolerance, for a class of Einstein components.
#[derive(Clone, Debug, Serialize)]
pub struct OrderRow {
    pub component: String,
    /// First order with a coefficient above tolerance, or the window end.
    pub order: i32,
    pub required: i32,
    /// Orders below this are known; `order == window` means "vanishes to window".
    pub window: i32,
    pub imposed: bool,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderTable {
    pub rows: Vec<OrderRow>,
    pub tol: f64,
}

impl OrderTable {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.ok)
    }

    pub fn row(&self, name: &str) -> Option<&OrderRow> {
        self.rows.iter().find(|r| r.component == name)
    }
}

fn first_order(jets: &[&LaurentJet], tol: f64) -> (i32, i32) {
    let window = jets.iter().map(|j| j.trunc()).min().unwrap_or(0);
    let start = jets.iter().filter(|j| !j.is_zero()).map(|j| j.min_deg()).min().unwrap_or(window);
    for k in start..window {
        if jets.iter().any(|j| j.coeff_or_zero(k).norm() > tol) {
            return (k, window);
        }
    }
    (window, window)
}

impl SolverState {
    /// Boundary data only (`s = 4`, `h̃ = h`, `η̃ = 0`), nothing solved. On a
    /// flat model this is already the exact solution.
    pub fn unsolved(model: &PhmModel, opts: &SolverOptions) -> Result<SolverState> {
        let trunc = model.n() as i32 + opts.trunc_extra.max(3);
        let (s, h, eta) = flat_state(model, trunc);
        let data = Data { s, h, eta };
        let (metric, curvature) = einstein(model, &data)?;
        Ok(SolverState { model: model.clone(), opts: *opts, data, solved_through: -1, metric, curvature, stages: Vec::new() })
    }

    pub fn model(&self) -> &PhmModel {
        &self.model
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn s(&self) -> &LaurentJet {
        &self.data.s
    }

    pub fn h_tilde(&self) -> &JetMatrix {
        &self.data.h
    }

    pub fn eta(&self) -> &[LaurentJet] {
        &self.data.eta
    }

    pub fn solved_through(&self) -> i32 {
        self.solved_through
    }

    pub fn trunc(&self) -> i32 {
        self.data.s.trunc()
    }

    pub fn metric(&self) -> &MetricJet {
        &self.metric
    }

    pub fn curvature(&self) -> &CurvatureJet {
        &self.curvature
    }

    pub fn stages(&self) -> &[StageReport] {
        &self.stages
    }

    pub fn obstructions(&self) -> Result<Obstructions> {
        let n = self.model.n();
        let cv = &self.curvature;
        let b = cv.ein(1, 1).coefficient(n as i32)?;
        let o = (0..2 * n).map(|a| cv.ein(1, collar_h(a)).coefficient(n as i32 + 1)).collect::<Result<Vec<_>>>()?;
        Ok(Obstructions { b, o })
    }

    /// The order-`n` equations that the last stage cannot address: the pure
    /// `Ein_{αβ}` and `Ein_0A`. Zero on integrable models.
    pub fn lower_order(&self) -> Result<LowerOrder> {
        let n = self.model.n();
        let cv = &self.curvature;
        let k = n as i32;
        let mut pure_h: f64 = 0.0;
        for a in 0..2 * n {
            for b in 0..2 * n {
                if (a < n) == (b < n) {
                    pure_h = pure_h.max(cv.ein(collar_h(a), collar_h(b)).coefficient(k)?.norm());
                }
            }
        }
        let mut eta: f64 = 0.0;
        for a in 0..2 * n {
            eta = eta.max(cv.ein(1, collar_h(a)).coefficient(k)?.norm());
        }
        Ok(LowerOrder { pure_h, eta })
    }

    /// Vanishing orders of the Einstein tensor by component class. The `∞`
    /// rows are never imposed by the solver.
    pub fn residual_orders(&self, tol: f64) -> OrderTable {
        let n = self.model.n() as i32;
        let w = 2 * self.model.n();
        let cv = &self.curvature;
        let hor: Vec<usize> = (0..w).map(collar_h).collect();
        let mut rows = Vec::new();
        let mut push = |name: &str, jets: Vec<&LaurentJet>, required: i32, imposed: bool| {
            let (order, window) = first_order(&jets, tol);
            rows.push(OrderRow { component: name.into(), order, required, window, imposed, ok: order >= required });
        };
        push("00", vec![cv.ein(1, 1)], n, true);
        push("0A", hor.iter().map(|&a| cv.ein(1, a)).collect(), n + 1, true);
        push("AB", hor.iter().flat_map(|&a| hor.iter().map(move |&b| cv.ein(a, b))).collect(), n + 1, true);
        push("inf,inf", vec![cv.ein(0, 0)], n, false);
        push("inf,0", vec![cv.ein(0, 1)], n, false);
        push("inf,A", hor.iter().map(|&a| cv.ein(0, a)).collect(), n, false);
        OrderTable { rows, tol }
    }

    /// Returns the state with `s += φ^{n+2} κ`, `h̃ += φ^{n+2} λ` (symmetrized)
    /// and `η̃ += φ^{n+1} μ`, curvature recomputed.
    pub fn gauge_perturb(&self, kappa: Complex64, lambda: &DMatrix<Complex64>, mu: &[Complex64]) -> Result<SolverState> {
        let n = self.model.n();
        let w = 2 * n;
        if lambda.nrows() != w || lambda.ncols() != w || mu.len() != w {
            return Err(Error::Dimension(format!("gauge perturbation needs a {w}×{w} λ and {w} μ")));
        }
        let trunc = self.trunc();
        let k = n as i32 + 2;
        let mut d = self.data.clone();
        d.s = &d.s + &LaurentJet::monomial(kappa, k, trunc);
        for a in 0..w {
            for b in 0..w {
                let v = (lambda[(a, b)] + lambda[(b, a)]) * 0.5;
                d.h[a][b] = &d.h[a][b] + &LaurentJet::monomial(v, k, trunc);
            }
            d.eta[a] = &d.eta[a] + &LaurentJet::monomial(mu[a], k - 1, trunc);
        }
        let (metric, curvature) = einstein(&self.model, &d)?;
        Ok(SolverState { data: d, metric, curvature, stages: self.stages.clone(), ..self.clone() })
    }

    /// Full curvature (with Riemann) of the current metric.
    pub fn full_curvature(&self) -> Result<CurvatureJet> {
        let cj = koszul(&self.metric, &self.model)?;
        Ok(crate::curvature::curvature(&cj, &self.metric, &self.model))
    }

    /// The Levi-Civita connection of the current metric.
    pub fn connection(&self) -> Result<crate::curvature::ConnectionJet> {
        koszul(&self.metric, &self.model)
    }
}

/// Which part of the stage unknowns a block factor refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    S,
    TraceH,
    TraceFreeH,
    PureH,
    Eta,
}

/// Diagonal block of the probe matrix after splitting the unknowns into
/// `s`, trace of `h̃`, trace-free `h̃_{αβ̄}`, `h̃_{αβ}` and `η̃`.
#[derive(Clone, Debug, Serialize)]
pub struct BlockFactor {
    pub kind: BlockKind,
    pub dim: usize,
    /// The scalar the block acts by.
    pub factor: Complex64,
    /// `factor` rescaled to `φ`-derivative normalization, i.e. divided by
    /// `k` for the `s` block (whose equation sits two orders lower).
    pub normalized: Complex64,
    /// Largest entry of the block minus `factor` times the identity.
    pub spread: f64,
    pub singular: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub k: i32,
    #[serde(skip)]
    pub matrix: DMatrix<Complex64>,
    pub pivot_ratio: f64,
    pub blocks: Vec<BlockFactor>,
    /// The coupled `(s, trace h̃)` block: unknowns `s_k` and `h̃_k = t·h`,
    /// equations `coeff_{k−2} Ein_00` and the trace of `coeff_{k−1} Ein_{αβ̄}`
    /// divided by `2n`.
    pub s_trace: [[Complex64; 2]; 2],
    pub s_trace_det: Complex64,
}

impl ProbeReport {
    pub fn block(&self, kind: BlockKind) -> Option<&BlockFactor> {
        self.blocks.iter().find(|b| b.kind == kind)
    }
}

/// Linear part of the stage-`k` map at `state` with block diagnostics.
/// Works for any `k ≥ 0`; the data are widened as needed.
pub fn probe_matrix(state: &SolverState, k: i32) -> Result<ProbeReport> {
    let model = &state.model;
    let n = model.n();
    let w = 2 * n;
    let lay = Layout::new(n);
    let trunc = state.trunc().max(k + state.opts.trunc_extra.max(3));
    let d = state.data.widen(trunc);
    let m = probe(model, &lay, &d, k)?;
    let scale = m.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1e-300);
    let singular = |f: Complex64| f.norm() <= PIVOT_THRESHOLD * scale;

    let hp = model.levi_pairing();
    let hp_inv = hp.clone().try_inverse().ok_or(Error::NonPositiveLevi(0.0))?;
    let mut blocks = Vec::new();

    let fs = m[(0, 0)];
    let kk = f64::from(k.max(1));
    blocks.push(BlockFactor { kind: BlockKind::S, dim: 1, factor: fs, normalized: fs / kk, spread: 0.0, singular: singular(fs) });

    // h̃ blocks
    let hidx = lay.indices(&[Block::H]);
    let l = select(&m, &hidx, &hidx);
    let mixed: Vec<usize> = (0..lay.pairs.len()).filter(|&p| (lay.pairs[p].0 < n) != (lay.pairs[p].1 < n)).collect();
    let pure: Vec<usize> = (0..lay.pairs.len()).filter(|&p| (lay.pairs[p].0 < n) == (lay.pairs[p].1 < n)).collect();
    let tau_all = trace_weights(&lay, &hp_inv);
    let tau: Vec<Complex64> = mixed.iter().map(|&p| tau_all[p]).collect();
    let hv: Vec<Complex64> = mixed.iter().map(|&p| hp[lay.pairs[p]]).collect();
    let km = select(&l, &mixed, &mixed);
    let two_n = Complex64::new(2.0 * n as f64, 0.0);
    let khv = &km * DVector::from_vec(hv.clone());
    let f_tr: Complex64 = tau.iter().zip(khv.iter()).map(|(t, x)| t * x).sum::<Complex64>() / two_n;
    let spread_tr = khv.iter().zip(&hv).map(|(x, h)| (x - f_tr * h).norm()).fold(0.0, f64::max);
    blocks.push(BlockFactor {
        kind: BlockKind::TraceH,
        dim: 1,
        factor: f_tr,
        normalized: f_tr,
        spread: spread_tr,
        singular: singular(f_tr),
    });
    if n >= 2 {
        let dim = mixed.len();
        let pi = DMatrix::from_fn(dim, dim, |i, j| hv[i] * tau[j] / two_n);
        let f_tf = (km.trace() - f_tr) / Complex64::new((dim - 1) as f64, 0.0);
        let model_op = (DMatrix::identity(dim, dim) - &pi) * f_tf + &pi * f_tr;
        let spread = (&km - model_op).iter().map(|x| x.norm()).fold(0.0, f64::max);
        blocks.push(BlockFactor {
            kind: BlockKind::TraceFreeH,
            dim: dim - 1,
            factor: f_tf,
            normalized: f_tf,
            spread,
            singular: singular(f_tf),
        });
    }
    let kp = select(&l, &pure, &pure);
    let dim = pure.len();
    let f_p = kp.trace() / Complex64::new(dim as f64, 0.0);
    let spread = (&kp - DMatrix::identity(dim, dim) * f_p).iter().map(|x| x.norm()).fold(0.0, f64::max);
    blocks.push(BlockFactor { kind: BlockKind::PureH, dim, factor: f_p, normalized: f_p, spread, singular: singular(f_p) });

    // η̃ block, with the index lowered by the Levi pairing undone
    let eidx = lay.indices(&[Block::Eta]);
    let ke = &hp_inv * select(&m, &eidx, &eidx);
    let f_e = ke.trace() / Complex64::new(w as f64, 0.0);
    let spread = (&ke - DMatrix::identity(w, w) * f_e).iter().map(|x| x.norm()).fold(0.0, f64::max);
    blocks.push(BlockFactor { kind: BlockKind::Eta, dim: w, factor: f_e, normalized: f_e, spread, singular: singular(f_e) });

    let h0 = lay.h0();
    let s_to_trace: Complex64 = mixed.iter().zip(&tau).map(|(&p, t)| t * m[(h0 + p, 0)]).sum::<Complex64>() / two_n;
    let trace_to_s: Complex64 = mixed.iter().zip(&hv).map(|(&p, h)| h * m[(0, h0 + p)]).sum();
    let s_trace = [[fs, trace_to_s], [s_to_trace, f_tr]];
    let s_trace_det = fs * f_tr - trace_to_s * s_to_trace;

    let pivot_ratio = crate::linalg::pivot_ratio(&m);
    Ok(ProbeReport { k, matrix: m, pivot_ratio, blocks, s_trace, s_trace_det })
}

/// Outcome of comparing the obstructions of a model with those of the same
/// model presented with contact form `e^{2Υ} θ`.
#[derive(Clone, Debug, Serialize)]
pub struct RescaleReport {
    pub upsilon: f64,
    pub b: Complex64,
    pub b_hat: Complex64,
    /// `|B̂ e^{2(n+2)Υ} − B|`.
    pub b_residual: f64,
    /// `max_A |Ô_A e^{2(n+2)Υ} − O_A|`.
    pub o_residual: f64,
    pub l: f64,
    pub l_hat: f64,
    /// `|L̂ − L| / max(1, |L|)`.
    pub l_relative: f64,
}

/// Solves on `model` and on `model.rescale_contact_form(Υ)` and compares the
/// obstructions (weight `e^{−2(n+2)Υ}`) and the log coefficient (invariant).
pub fn rescale_check(model: &PhmModel, upsilon: f64, opts: &SolverOptions) -> Result<RescaleReport> {
    let n = model.n() as f64;
    let a = solve(model, opts)?;
    let hat_model = model.rescale_contact_form(upsilon);
    let b = solve(&hat_model, opts)?;
    let oa = a.obstructions()?;
    let ob = b.obstructions()?;
    let weight = (2.0 * (n + 2.0) * upsilon).exp();
    let b_residual = (ob.b * weight - oa.b).norm();
    let o_residual = oa.o.iter().zip(&ob.o).map(|(x, y)| (y * weight - x).norm()).fold(0.0, f64::max);
    let l = crate::volume::expansion(&a)?.l;
    let l_hat = crate::volume::expansion(&b)?.l;
    Ok(RescaleReport {
        upsilon,
        b: oa.b,
        b_hat: ob.b,
        b_residual,
        o_residual,
        l,
        l_hat,
        l_relative: (l_hat - l).abs() / l.abs().max(1.0),
    })
}

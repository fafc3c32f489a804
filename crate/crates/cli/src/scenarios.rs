use achmetric::curvature::crosscheck_connection_table;
use achmetric::linalg::JetMatrix;
use achmetric::model::ModelFile;
use achmetric::solver::{rescale_check, solve, LowerOrder, OrderTable, RescaleReport, StageReport};
use achmetric::twt::{curvature_forms, solve_twt, verify_bd};
use achmetric::volume::{expansion, numeric_profile, ProfileRow};
use achmetric::{LaurentJet, PhmModel, SolverOptions, SolverState};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, Scenario};
use crate::{error_code, Failure};

/// Tolerance for the connection and structure-equation cross-checks.
const CROSSCHECK_TOL: f64 = 1e-10;
/// Tolerance for the constant term of the scalar curvature.
const SCAL_TOL: f64 = 1e-9;

pub struct Report {
    pub json: serde_json::Value,
    pub csv: Option<Vec<u8>>,
    pub pass: bool,
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    limit: f64,
    pass: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, limit: f64) -> Self {
        Check { name, value, limit, pass: value <= limit }
    }
}

fn to_json(v: impl Serialize) -> Result<serde_json::Value, Failure> {
    serde_json::to_value(v).map_err(|e| Failure::config(e.to_string()))
}

fn model(cfg: &RunConfig) -> Result<PhmModel, Failure> {
    cfg.model.as_ref().ok_or_else(|| Failure::config("missing field `model`"))?.build()
}

#[derive(Serialize)]
struct SolveReport<'a> {
    scenario: Scenario,
    model: ModelFile,
    integrable: bool,
    solver: SolverOptions,
    trunc: i32,
    solved_through: i32,
    s: &'a LaurentJet,
    h_tilde: &'a JetMatrix,
    eta: &'a [LaurentJet],
    stages: &'a [StageReport],
    residual_orders: OrderTable,
    lower_order: LowerOrder,
    b: Complex64,
    o: Vec<Complex64>,
    v: Vec<f64>,
    l: f64,
    vol_m: f64,
    c: Vec<f64>,
    checks: Vec<Check>,
    pass: bool,
}

pub fn run_solve(cfg: &RunConfig) -> Result<Report, Failure> {
    let m = model(cfg)?;
    let st = solve(&m, &cfg.solver)?;
    let vol = expansion(&st)?;
    let orders = st.residual_orders(cfg.solver.tol);
    let failing_rows = orders.rows.iter().filter(|r| !r.ok).count();

    let twt = solve_twt(&m)?;
    let bd = verify_bd(&m, &twt, &curvature_forms(&m, &twt));
    let lc = crosscheck_connection_table(&m, &twt, st.metric(), &st.connection()?)?;
    let nf = m.n() as f64;
    let scal0 = st.curvature().scal().coefficient(0)?;
    let scal_dev = (scal0 - Complex64::new(-4.0 * (nf + 2.0) * (nf + 1.0), 0.0)).norm();

    let checks = vec![
        Check::at_most("residual_orders_failing_rows", failing_rows as f64, 0.0),
        Check::at_most("volume_imaginary_part", vol.imag_residual, cfg.solver.tol),
        Check::at_most("connection_crosscheck", lc, CROSSCHECK_TOL),
        Check::at_most("structure_equation", bd, CROSSCHECK_TOL),
        Check::at_most("scalar_curvature_constant_term", scal_dev, SCAL_TOL),
    ];
    let pass = checks.iter().all(|c| c.pass);
    let report = SolveReport {
        scenario: Scenario::Solve,
        model: m.to_file(),
        integrable: m.is_integrable(1e-10),
        solver: cfg.solver,
        trunc: st.trunc(),
        solved_through: st.solved_through(),
        s: st.s(),
        h_tilde: st.h_tilde(),
        eta: st.eta(),
        stages: st.stages(),
        residual_orders: orders,
        lower_order: st.lower_order()?,
        b: vol.b,
        o: vol.o.clone(),
        v: vol.v.clone(),
        l: vol.l,
        vol_m: vol.vol_m,
        c: vol.c.clone(),
        checks,
        pass,
    };
    Ok(Report { json: to_json(&report)?, csv: None, pass })
}

/// Shortest round-trip form, with an exponent for very small or large values.
fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Order-table columns of the sweep, in table order.
const ORDER_COLUMNS: [&str; 6] = ["00", "0A", "AB", "inf,inf", "inf,0", "inf,A"];

#[derive(Clone, Serialize)]
struct PointResult {
    l: f64,
    re_b: f64,
    abs_o: f64,
    orders: Vec<i32>,
    orders_ok: bool,
}

#[derive(Serialize)]
struct SweepRow {
    index: usize,
    t: f64,
    #[serde(flatten)]
    result: Option<PointResult>,
    error_code: Option<u8>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepSummary {
    /// Grid index whose `L` is the reference.
    reference: Option<usize>,
    max_deviation: Option<f64>,
    limit: f64,
    failed_points: usize,
    pass: bool,
}

fn sweep_point(base: &PhmModel, family: &achmetric::JFamily, t: f64, opts: &SolverOptions) -> achmetric::Result<PointResult> {
    let m = base.deform_j(family, t)?;
    let st = solve(&m, opts)?;
    let vol = expansion(&st)?;
    let table = st.residual_orders(opts.tol);
    let orders = ORDER_COLUMNS.iter().map(|name| table.row(name).map_or(-1, |r| r.order)).collect();
    Ok(PointResult { l: vol.l, re_b: vol.b.re, abs_o: vol.o.iter().map(|x| x.norm()).fold(0.0, f64::max), orders, orders_ok: table.passed() })
}

pub fn sweep_j(cfg: &RunConfig) -> Result<Report, Failure> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| Failure::config("missing field `sweep`"))?;
    let base = model(cfg)?;
    let family = sweep.family.build(base.n())?;
    let grid = sweep.t.values();
    // rayon keeps the grid order in `collect`
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .enumerate()
        .map(|(index, &t)| match sweep_point(&base, &family, t, &cfg.solver) {
            Ok(r) => SweepRow { index, t, result: Some(r), error_code: None, error: None },
            Err(e) => SweepRow { index, t, result: None, error_code: Some(error_code(&e)), error: Some(e.to_string()) },
        })
        .collect();

    let ok: Vec<(usize, f64)> = rows.iter().filter_map(|r| r.result.as_ref().map(|p| (r.index, p.l))).collect();
    // L(0) when t = 0 is on the grid and solvable, otherwise the first solvable point
    let reference = rows
        .iter()
        .find(|r| r.t == 0.0 && r.result.is_some())
        .map(|r| r.index)
        .or_else(|| ok.first().map(|&(i, _)| i));
    let max_deviation = reference.map(|i| {
        let l0 = rows[i].result.as_ref().unwrap().l;
        ok.iter().map(|&(_, l)| (l - l0).abs()).fold(0.0, f64::max) / (1.0 + l0.abs())
    });
    let failed_points = rows.len() - ok.len();
    let pass = failed_points == 0 && max_deviation.is_some_and(|d| d <= sweep.tol);
    let summary = SweepSummary { reference, max_deviation, limit: sweep.tol, failed_points, pass };

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index", "t", "L", "re_B", "abs_O"];
    let order_names: Vec<String> = ORDER_COLUMNS.iter().map(|c| format!("ord_{}", c.replace(',', "_"))).collect();
    header.extend(order_names.iter().map(String::as_str));
    header.extend(["orders_ok", "error_code", "error"]);
    let csv_err = |e: csv::Error| Failure::config(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in &rows {
        let mut rec = vec![r.index.to_string(), num(r.t)];
        match &r.result {
            Some(p) => {
                rec.extend([num(p.l), num(p.re_b), num(p.abs_o)]);
                rec.extend(p.orders.iter().map(i32::to_string));
                rec.extend([p.orders_ok.to_string(), String::new(), String::new()]);
            }
            None => {
                rec.extend(std::iter::repeat_n(String::new(), 4 + ORDER_COLUMNS.len()));
                rec.push(r.error_code.unwrap_or(0).to_string());
                rec.push(r.error.clone().unwrap_or_default());
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    // summary row: `L` holds the relative deviation, `orders_ok` the verdict
    let mut rec = vec!["summary".to_string(), String::new()];
    rec.push(max_deviation.map(num).unwrap_or_default());
    rec.extend(std::iter::repeat_n(String::new(), 2 + ORDER_COLUMNS.len()));
    rec.extend([pass.to_string(), String::new(), format!("max |L(t) - L(t0)| / (1 + |L(t0)|); {failed_points} failed points")]);
    w.write_record(&rec).map_err(csv_err)?;
    let csv = w.into_inner().map_err(|e| Failure::config(e.to_string()))?;

    let json = to_json(serde_json::json!({
        "scenario": Scenario::SweepJ,
        "model": base.to_file(),
        "solver": cfg.solver,
        "family": sweep.family,
        "order_columns": ORDER_COLUMNS,
        "rows": rows,
        "summary": summary,
    }))?;
    Ok(Report { json, csv: Some(csv), pass })
}

#[derive(Serialize)]
struct RescaleRow {
    #[serde(flatten)]
    report: RescaleReport,
    o_scale: f64,
    pass: bool,
}

pub fn rescale(cfg: &RunConfig) -> Result<Report, Failure> {
    let m = model(cfg)?;
    let tol = cfg.rescale.tol;
    let o_scale = solve(&m, &cfg.solver)?.obstructions()?.o_norm();
    let rows = cfg
        .rescale
        .upsilon
        .iter()
        .map(|&u| {
            let report = rescale_check(&m, u, &cfg.solver)?;
            let pass = report.b_residual <= tol * (1.0 + report.b.norm())
                && report.o_residual <= tol * (1.0 + o_scale)
                && report.l_relative <= tol;
            Ok(RescaleRow { report, o_scale, pass })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let pass = rows.iter().all(|r| r.pass);
    let json = to_json(serde_json::json!({
        "scenario": Scenario::RescaleCheck,
        "model": m.to_file(),
        "solver": cfg.solver,
        "tol": tol,
        "rows": rows,
        "pass": pass,
    }))?;
    Ok(Report { json, csv: None, pass })
}

#[derive(Serialize)]
struct FlatRow {
    n: usize,
    s: f64,
    h_tilde: f64,
    eta: f64,
    einstein: f64,
    b: f64,
    o: f64,
    v: f64,
    pass: bool,
}

fn max_coeff(j: &LaurentJet) -> f64 {
    if j.is_zero() {
        0.0
    } else {
        j.max_abs()
    }
}

fn flat_row(n: usize, opts: &SolverOptions, tol: f64) -> Result<FlatRow, Failure> {
    let m = PhmModel::flat_heisenberg(n, DMatrix::identity(n, n))?;
    let st: SolverState = solve(&m, opts)?;
    let hp = m.levi_pairing();
    let four = LaurentJet::monomial(Complex64::new(4.0, 0.0), 0, st.trunc());
    let mut h_dev: f64 = 0.0;
    let mut eta: f64 = 0.0;
    for a in 0..2 * n {
        for b in 0..2 * n {
            h_dev = h_dev.max(st.h_tilde()[a][b].max_diff(&LaurentJet::monomial(hp[(a, b)], 0, st.trunc())));
        }
        eta = eta.max(max_coeff(&st.eta()[a]));
    }
    let einstein = st.curvature().ein_matrix().iter().flatten().map(max_coeff).fold(0.0, f64::max);
    let ob = st.obstructions()?;
    let v = expansion(&st)?.v[1..].iter().map(|x| x.abs()).fold(0.0, f64::max);
    let s = st.s().max_diff(&four);
    let pass = [s, h_dev, eta, einstein, ob.b.norm(), ob.o_norm(), v].iter().all(|&x| x <= tol);
    Ok(FlatRow { n, s, h_tilde: h_dev, eta, einstein, b: ob.b.norm(), o: ob.o_norm(), v, pass })
}

pub fn flat_check(cfg: &RunConfig) -> Result<Report, Failure> {
    let tol = cfg.flat_check.tol;
    let rows = cfg.flat_check.n.iter().map(|&n| flat_row(n, &cfg.solver, tol)).collect::<Result<Vec<_>, _>>()?;
    let pass = rows.iter().all(|r| r.pass);
    let json = to_json(serde_json::json!({
        "scenario": Scenario::FlatCheck,
        "solver": cfg.solver,
        "tol": tol,
        "rows": rows,
        "pass": pass,
    }))?;
    Ok(Report { json, csv: None, pass })
}

#[derive(Serialize)]
struct ProfileLine {
    #[serde(flatten)]
    row: ProfileRow,
    pass: bool,
}

pub fn profile(cfg: &RunConfig) -> Result<Report, Failure> {
    let m = model(cfg)?;
    let st = solve(&m, &cfg.solver)?;
    let p = &cfg.profile;
    let lines: Vec<ProfileLine> = numeric_profile(&st, &p.eps, p.eps0)?
        .into_iter()
        .map(|row| ProfileLine { pass: row.relative <= p.tol, row })
        .collect();
    let pass = lines.iter().all(|l| l.pass);

    let csv_err = |e: csv::Error| Failure::config(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["eps", "numeric", "series", "difference", "relative", "pass"]).map_err(csv_err)?;
    for l in &lines {
        let r = &l.row;
        let rec = [r.eps, r.numeric, r.series, r.difference, r.relative].map(num);
        w.write_record(rec.iter().map(String::as_str).chain([l.pass.to_string().as_str()])).map_err(csv_err)?;
    }
    let csv = w.into_inner().map_err(|e| Failure::config(e.to_string()))?;
    let json = to_json(serde_json::json!({
        "scenario": Scenario::Profile,
        "model": m.to_file(),
        "solver": cfg.solver,
        "eps0": p.eps0,
        "tol": p.tol,
        "rows": lines,
        "pass": pass,
    }))?;
    Ok(Report { json, csv: Some(csv), pass })
}

//! Stage execution for `run`. Each system fills a JSON object keyed by
//! stage name and a list of CSV tables.

use bc_debranges::bridge::{bridge_report, BridgeSettings};
use bc_debranges::debranges::{e_from_kernel, hb_check, standard_grid, EntireEvaluator};
use bc_debranges::discrete::{self, ConnectingMatrix, KreinFactor, ResponseVector};
use bc_debranges::validation::run_suite;
use bc_debranges::{dirac, wave, Complex64};
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, Output, System};
use crate::CliError;

/// A CSV file: header plus rows of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, cells: impl IntoIterator<Item = f64>) {
        self.rows.push(cells.into_iter().map(fmt_f64).collect());
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

/// Everything `run` produces before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub stages: Map<String, Value>,
    pub tables: Vec<Table>,
    /// Name of the first failed property when `validate` was requested.
    pub failure: Option<String>,
}

fn cx(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn cx_vec(v: &[Complex64]) -> Value {
    Value::Array(v.iter().map(|&z| cx(z)).collect())
}

pub fn execute(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome {
        stages: Map::new(),
        tables: Vec::new(),
        failure: None,
    };
    match cfg.system {
        System::Discrete => run_discrete(cfg, &mut out)?,
        System::Wave => run_wave(cfg, &mut out)?,
        System::Dirac => run_dirac(cfg, &mut out)?,
        System::Bridge => run_bridge(cfg, &mut out)?,
    }
    if cfg.wants(Output::Validate) {
        let module = match cfg.system {
            System::Discrete => "discrete",
            System::Wave => "wave",
            System::Dirac => "dirac",
            System::Bridge => "bridge",
        };
        let report = run_suite(seed, Some(module))?;
        if out.failure.is_none() {
            out.failure = report
                .first_failure()
                .map(|c| format!("criterion {} ({}): {}", c.id, c.name, c.detail));
        }
        out.stages.insert("validate".into(), serde_json::to_value(&report)?);
    }
    Ok(out)
}

/// Kernel values on all pairs of sample points, with the direct route when
/// one is available.
fn kernel_stage<K, D>(zs: &[Complex64], krein: K, direct: Option<D>, out: &mut Outcome)
where
    K: Fn(Complex64, Complex64) -> Complex64,
    D: Fn(Complex64, Complex64) -> Complex64,
{
    let mut table = Table::new(
        "kernel.csv",
        &["z_re", "z_im", "xi_re", "xi_im", "value_re", "value_im", "direct_re", "direct_im"],
    );
    let mut entries = Vec::new();
    for &z in zs {
        for &xi in zs {
            let k = krein(z, xi);
            let d = direct.as_ref().map(|f| f(z, xi));
            let dv = d.unwrap_or(Complex64::new(f64::NAN, f64::NAN));
            table.push([z.re, z.im, xi.re, xi.im, k.re, k.im, dv.re, dv.im]);
            entries.push(json!({
                "z": cx(z),
                "xi": cx(xi),
                "krein": cx(k),
                "direct": d.map(cx),
            }));
        }
    }
    out.stages.insert("kernel".into(), Value::Array(entries));
    out.tables.push(table);
}

fn hb_stage(zs: &[Complex64], e: &EntireEvaluator, out: &mut Outcome) -> Result<(), CliError> {
    let mut table = Table::new("hb.csv", &["lambda_re", "lambda_im", "value_re", "value_im"]);
    let mut samples = Vec::new();
    for &z in zs {
        let v = e.value(z);
        table.push([z.re, z.im, v.re, v.im]);
        samples.push(json!({"z": cx(z), "E": cx(v)}));
    }
    let check = hb_check(e, &standard_grid())?;
    out.stages.insert(
        "hb".into(),
        json!({"label": e.label(), "samples": samples, "check": check}),
    );
    out.tables.push(table);
    Ok(())
}

fn run_discrete(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<(), CliError> {
    let t = cfg.discrete_t();
    let zs = cfg.z_points();
    let b = match cfg.response {
        Some(_) => None,
        None => Some(cfg.discrete_potential()?),
    };
    let r = match (&cfg.response, &b) {
        (Some(v), _) => ResponseVector::new(v.clone())?,
        (None, Some(b)) => discrete::response(b, t)?,
        (None, None) => unreachable!(),
    };
    let c = ConnectingMatrix::from_response(&r, t)?;
    if cfg.wants(Output::Response) {
        let mut table = Table::new("response.csv", &["k", "r"]);
        for (k, &v) in r.as_slice().iter().enumerate() {
            table.push([k as f64, v]);
        }
        out.stages.insert("response".into(), json!({ "r": r.as_slice() }));
        out.tables.push(table);
    }
    if cfg.wants(Output::Connecting) {
        let m = c.matrix();
        let mut table = Table::new("connecting.csv", &["i", "j", "value"]);
        let rows: Vec<Vec<f64>> = (0..t).map(|i| (0..t).map(|j| m[(i, j)]).collect()).collect();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                table.push([i as f64, j as f64, v]);
            }
        }
        out.stages.insert("connecting".into(), json!({ "dim": t, "matrix": rows }));
        out.tables.push(table);
    }
    let needs_factor = [Output::Krein, Output::Kernel, Output::Hb].iter().any(|&o| cfg.wants(o));
    if needs_factor {
        let factor = KreinFactor::new(&c)?;
        if cfg.wants(Output::Krein) {
            let mut table = Table::new("krein.csv", &["z_re", "z_im", "index", "j_re", "j_im"]);
            let mut sols = Vec::new();
            for &z in &zs {
                let sol = factor.solve(z);
                for (k, v) in sol.j.iter().enumerate() {
                    table.push([z.re, z.im, k as f64, v.re, v.im]);
                }
                sols.push(json!({"z": cx(z), "j": cx_vec(&sol.j)}));
            }
            out.stages.insert("krein".into(), Value::Array(sols));
            out.tables.push(table);
        }
        if cfg.wants(Output::Kernel) {
            let direct = b.clone().map(|b| move |z, xi| discrete::kernel_direct(&b, t, z, xi));
            kernel_stage(&zs, |z, xi| factor.kernel(z, xi), direct, out);
        }
        if cfg.wants(Output::Hb) {
            let e = match &b {
                Some(b) => discrete::e_direct(b, t)?,
                None => e_from_kernel(&factor.evaluator())?.0,
            };
            hb_stage(&zs, &e, out)?;
        }
    }
    if cfg.wants(Output::Recover) {
        let rec = discrete::recover_potential(&c, t)?;
        out.stages.insert("recover".into(), json!({ "b": rec.as_slice() }));
    }
    Ok(())
}

fn run_wave(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<(), CliError> {
    let (t, m) = (cfg.horizon(), cfg.points());
    let zs = cfg.z_points();
    let q = cfg.scalar_potential()?;
    let (rk, c, factor) = wave::krein_pipeline(&q, t, m)?;
    let grid = c.grid();
    if cfg.wants(Output::Response) {
        let mut table = Table::new("response.csv", &["t", "r"]);
        for (k, &v) in rk.r().iter().enumerate() {
            table.push([k as f64 * rk.step(), v]);
        }
        out.stages.insert("response".into(), json!({ "step": rk.step(), "r": rk.r() }));
        out.tables.push(table);
    }
    if cfg.wants(Output::Connecting) {
        let mut table = Table::new("connecting.csv", &["i", "j", "value"]);
        let k = c.kernel();
        for i in 0..m {
            for j in 0..m {
                table.push([i as f64, j as f64, k[(i, j)]]);
            }
        }
        out.stages.insert(
            "connecting".into(),
            json!({ "dim": m, "step": grid.step(), "file": "connecting.csv" }),
        );
        out.tables.push(table);
    }
    if cfg.wants(Output::Krein) {
        let mut table = Table::new("krein.csv", &["z_re", "z_im", "s", "j_re", "j_im"]);
        let nodes = grid.nodes();
        let mut sols = Vec::new();
        for &z in &zs {
            let j = factor.solve(z);
            for (s, v) in nodes.iter().zip(&j) {
                table.push([z.re, z.im, *s, v.re, v.im]);
            }
            sols.push(json!({"z": cx(z), "j": cx_vec(&j)}));
        }
        out.stages.insert("krein".into(), Value::Array(sols));
        out.tables.push(table);
    }
    let steps = wave::default_ode_steps(t);
    if cfg.wants(Output::Kernel) {
        let direct = |z, xi| wave::kernel_direct_wave(&q, t, z, xi, steps);
        kernel_stage(&zs, |z, xi| factor.kernel(z, xi), Some(direct), out);
    }
    if cfg.wants(Output::Hb) {
        hb_stage(&zs, &wave::e_direct_wave(&q, t, steps), out)?;
    }
    Ok(())
}

fn run_dirac(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<(), CliError> {
    let (t, m) = (cfg.horizon(), cfg.points());
    let zs = cfg.z_points();
    let v = cfg.matrix_potential()?;
    let (rk, c, factor) = dirac::krein_pipeline(&v, t, m)?;
    let grid = c.grid();
    if cfg.wants(Output::Response) {
        let mut table = Table::new("response.csv", &["t", "r_re", "r_im"]);
        for (k, r) in rk.r.iter().enumerate() {
            table.push([k as f64 * rk.step, r.re, r.im]);
        }
        out.stages.insert("response".into(), json!({ "step": rk.step, "r": cx_vec(&rk.r) }));
        out.tables.push(table);
    }
    if cfg.wants(Output::Connecting) {
        let mut table = Table::new("connecting.csv", &["i", "j", "value_re", "value_im"]);
        let k = c.kernel();
        for i in 0..2 * m {
            for j in 0..2 * m {
                table.push([i as f64, j as f64, k[(i, j)].re, k[(i, j)].im]);
            }
        }
        out.stages.insert(
            "connecting".into(),
            json!({ "dim": 2 * m, "step": grid.step(), "file": "connecting.csv" }),
        );
        out.tables.push(table);
    }
    if cfg.wants(Output::Krein) {
        let mut table = Table::new(
            "krein.csv",
            &["z_re", "z_im", "s", "j1_re", "j1_im", "j2_re", "j2_im"],
        );
        let nodes = grid.nodes();
        let mut sols = Vec::new();
        for &z in &zs {
            let j = factor.solve(z);
            for (i, s) in nodes.iter().enumerate() {
                table.push([z.re, z.im, *s, j.f1[i].re, j.f1[i].im, j.f2[i].re, j.f2[i].im]);
            }
            sols.push(json!({"z": cx(z), "j1": cx_vec(&j.f1), "j2": cx_vec(&j.f2)}));
        }
        out.stages.insert("krein".into(), Value::Array(sols));
        out.tables.push(table);
    }
    let steps = wave::default_ode_steps(t);
    if cfg.wants(Output::Kernel) {
        let direct = |z, xi| dirac::kernel_direct_dirac(&v, t, z, xi, steps);
        kernel_stage(&zs, |z, xi| factor.kernel(z, xi), Some(direct), out);
    }
    if cfg.wants(Output::Hb) {
        hb_stage(&zs, &dirac::e_direct_dirac(&v, t, steps), out)?;
    }
    Ok(())
}

fn run_bridge(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<(), CliError> {
    let m = cfg.points();
    let settings = BridgeSettings {
        horizon: cfg.horizon(),
        levels: vec![m, 2 * m - 1],
        ..BridgeSettings::default()
    };
    let report = bridge_report(&cfg.scalar_potential()?, &settings)?;
    if cfg.wants(Output::Validate) && !report.pass() {
        let failed = [
            ("potential_map", report.potential_map.pass),
            ("response_relation", report.response_relation.pass),
            ("measure_relation", report.measure_relation.pass),
            ("isometry", report.isometry.refinement.pass),
        ]
        .into_iter()
        .find(|(_, ok)| !ok)
        .map_or("embedded_function", |(name, _)| name);
        out.failure = Some(format!("bridge check {failed}"));
    }
    out.stages.insert("bridge".into(), serde_json::to_value(&report)?);
    Ok(())
}

use crate::config::{parse_field, InvariantCmd, RuledCmd, RunConfig, SolveOp};
use crate::report::{file_digest, to_value, Output};
use conekahler::cone_geometry::{check_angle_condition, holder_norm_seeded, C64, MetricField, MetricKind};
use conekahler::elliptic::{
    closedness_k, continuity_path_apply, fredholm_solve, poincare_constant, solve_continuity_path, solve_k_bilaplacian,
    solve_laplace, Discretization, SolveReport,
};
use conekahler::error::{Error, Result};
use conekahler::he_flow::{flow_run, FlowGrid};
use conekahler::invariants::{average_scalar, futaki_invariants, EulerField, KahlerClassData};
use conekahler::io::{read_grid_function, write_grid_function, write_hermitian_field, BundleFile, MetricFile};
use conekahler::parabolic_bundles::{model_bundle_metric, stability_check_seeded, ParabolicBundle};
use conekahler::ruled::{
    approx_cscK_step, expansion_terms, scalar_curvature_at, AdiabaticMetric, BasePotential, FiberMetric, RuledPoint,
};
use serde_json::{json, Map, Value};
use std::path::Path;

/// Inputs recorded in the report; filled as they are resolved so that a
/// failing run still documents what it read.
pub type Inputs = Map<String, Value>;

pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub seed: u64,
    pub out: &'a mut Output,
    pub inputs: &'a mut Inputs,
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn read_function(path: &Path, metric: &MetricField) -> Result<Vec<f64>> {
    read_grid_function(open(path)?, &metric.surface).map_err(|e| match e {
        Error::InvalidConfig(_) => e,
        other => Error::InvalidConfig(format!("{}: {other}", path.display())),
    })
}

impl Run<'_> {
    fn metric(&mut self) -> Result<MetricField> {
        let cfg = self.cfg;
        let (file, dir) = match (&cfg.metric_file, &cfg.surface, &cfg.metric) {
            (Some(p), _, _) => (MetricFile::load(p)?, p.parent().unwrap_or(Path::new(".")).to_path_buf()),
            (None, Some(s), Some(m)) => (MetricFile { surface: s.clone(), metric: m.clone() }, ".".into()),
            _ => return Err(Error::InvalidConfig("no metric: pass --metric or give [surface] and [metric] tables".into())),
        };
        let mut recorded = file.clone();
        if let Some(p) = recorded.metric.potential.take() {
            self.inputs.insert("potential_sha256".into(), json!(file_digest(&dir.join(p))?));
        }
        self.inputs.insert("metric".into(), to_value(&recorded));
        file.build(&dir)
    }

    fn bundle(&mut self) -> Result<ParabolicBundle> {
        let spec = match (&self.cfg.bundle_file, &self.cfg.bundle) {
            (Some(p), _) => BundleFile::load(p)?.bundle,
            (None, Some(b)) => b.clone(),
            _ => return Err(Error::InvalidConfig("no bundle: pass --bundle or give a [bundle] table".into())),
        };
        self.inputs.insert("bundle".into(), to_value(&spec));
        spec.build()
    }

    fn record(&mut self, key: &str, v: Value) {
        self.inputs.insert(key.into(), v);
    }
}

pub fn geometry(run: &mut Run) -> Result<Value> {
    let m = run.metric()?;
    let p = run.cfg.geometry.clone();
    run.record("geometry", json!({ "alpha": p.alpha, "order": p.order, "collar": p.collar }));
    let (name, f) = match &p.function {
        Some(path) => {
            run.record("function_sha256", json!(file_digest(path)?));
            ("function", read_function(path, &m)?)
        }
        None => ("scalar_curvature", m.scalar.clone()),
    };
    let norm = holder_norm_seeded(&f, p.order, p.alpha, &m.surface, run.seed)?;
    let angles: Vec<Value> = m
        .surface
        .points
        .iter()
        .map(|pt| {
            let holds = if p.alpha < 1.0 { check_angle_condition(p.alpha, pt.beta).ok() } else { None };
            json!({ "at": to_value(&pt.at), "beta": pt.beta, "angle_condition": holds })
        })
        .collect();
    let finite: Vec<f64> = m.scalar.iter().copied().filter(|v| v.is_finite()).collect();
    let result = json!({
        "grid": { "n": m.surface.n, "m": m.surface.m },
        "volume": m.volume,
        "quasi_isometry": m.quasi_isometry,
        "christoffel_sup": m.christoffel_sup,
        "scalar_curvature": {
            "min": finite.iter().copied().fold(f64::INFINITY, f64::min),
            "max": finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            "mean": m.mean(&m.scalar),
        },
        "ricci_sup_outside_collar": m.ricci_sup(p.collar)?,
        "poincare_constant": poincare_constant(&m)?,
        "cone_points": angles,
        "norm_of": name,
        "norm": to_value(&norm),
    });
    run.out.sidecar("scalar", |w| write_grid_function(w, "scalar_curvature", &m.surface, &m.scalar))?;
    Ok(result)
}

fn sup_abs(u: &[f64]) -> f64 {
    u.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn solve_result(run: &mut Run, m: &MetricField, rep: &SolveReport) -> Result<Value> {
    let mut v = to_value(rep);
    if let Value::Object(map) = &mut v {
        map.remove("solution");
        map.remove("kernel_basis");
        map.insert("solution_sup".into(), json!(sup_abs(&rep.solution)));
    }
    run.out.sidecar("solution", |w| write_grid_function(w, "solution", &m.surface, &rep.solution))?;
    for (i, k) in rep.kernel_basis.iter().enumerate() {
        run.out.sidecar(&format!("kernel{i}"), |w| write_grid_function(w, &format!("kernel element {i}"), &m.surface, k))?;
    }
    Ok(v)
}

pub fn solve(run: &mut Run) -> Result<Value> {
    let p = run.cfg.solve.clone();
    let op = p.op.ok_or_else(|| Error::InvalidConfig("solve needs an operator (--op)".into()))?;
    let m = run.metric()?;
    run.record("solve", json!({ "op": op, "k": p.k, "t": p.t, "fredholm": to_value(&p.fredholm) }));
    let f = match &p.rhs {
        Some(path) => {
            run.record("rhs_sha256", json!(file_digest(path)?));
            read_function(path, &m)?
        }
        None => vec![0.0; m.surface.grid.len()],
    };
    match op {
        SolveOp::Laplace => {
            let rep = solve_laplace(&m, &f)?;
            solve_result(run, &m, &rep)
        }
        SolveOp::Bilap => {
            let k = match p.k {
                Some(k) => k,
                None => poincare_constant(&m)? + 1.1,
            };
            let rep = solve_k_bilaplacian(&m, k, &f)?;
            solve_result(run, &m, &rep)
        }
        SolveOp::Fredholm => {
            let rep = fredholm_solve(&m, &f, &p.fredholm)?;
            solve_result(run, &m, &rep)
        }
        SolveOp::Lich => {
            let (k, cp) = match p.k {
                Some(k) => (k, poincare_constant(&m)?),
                None => closedness_k(&m, &Discretization::new(&m)?, p.fredholm.collar, p.fredholm.k_margin)?,
            };
            let u = solve_continuity_path(&m, k, p.t, &f)?;
            let lu = continuity_path_apply(&m, k, p.t, &u)?;
            let res = lu.iter().zip(&f).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            run.out.sidecar("solution", |w| write_grid_function(w, "solution", &m.surface, &u))?;
            Ok(json!({ "k_used": k, "c_p": cp, "t": p.t, "residual_sup": res, "solution_sup": sup_abs(&u) }))
        }
    }
}

pub fn stability(run: &mut Run) -> Result<Value> {
    let b = run.bundle()?;
    Ok(to_value(&stability_check_seeded(&b, run.seed)?))
}

pub fn flow(run: &mut Run) -> Result<Value> {
    let opts = run.cfg.flow.clone();
    let b = run.bundle()?;
    let m = run.metric()?;
    run.record("flow", to_value(&opts));
    let r = flow_run(&b, &m, &opts)?;
    let grid = FlowGrid::new(&m, opts.nt, opts.ntheta)?;
    run.out.sidecar("field", |w| write_hermitian_field(w, "final metric", &grid, &r.final_field))?;
    Ok(to_value(&r))
}

/// Base potential matching a metric file, for the ruled surface over it.
fn base_of(m: &MetricField) -> BasePotential {
    match m.kind {
        MetricKind::Football => BasePotential::Football { beta: m.surface.profile.b0 },
        MetricKind::FlatCone => BasePotential::FlatCone { beta: m.surface.profile.b0 },
        MetricKind::ModelOmegaD => BasePotential::OmegaD { points: m.surface.points.clone(), delta: m.delta },
    }
}

fn loglog_slope(ks: &[f64], res: &[f64]) -> Option<f64> {
    if res.iter().any(|r| !(r.abs() > 0.0) || !r.is_finite()) {
        return None;
    }
    let x: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let y: Vec<f64> = res.iter().map(|r| r.abs().ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    Some(sxy / sxx)
}

pub fn ruled(run: &mut Run) -> Result<Value> {
    let p = run.cfg.ruled.clone();
    let cmd = p.cmd.ok_or_else(|| Error::InvalidConfig("ruled needs a command (--cmd)".into()))?;
    match cmd {
        RuledCmd::Expansion => {
            let have_metric = run.cfg.metric_file.is_some() || run.cfg.metric.is_some();
            let base = match (&p.base, have_metric) {
                (Some(b), _) => b.clone(),
                (None, true) => base_of(&run.metric()?),
                (None, false) => BasePotential::Round,
            };
            let have_bundle = run.cfg.bundle_file.is_some() || run.cfg.bundle.is_some();
            let fiber = if have_bundle { FiberMetric::Model(model_bundle_metric(&run.bundle()?)?) } else { FiberMetric::Identity(2) };
            if p.k_ladder.len() < 2 || p.k_ladder.iter().any(|k| !(*k >= 1.0)) {
                return Err(Error::InvalidConfig("a k ladder needs at least two values ≥ 1".into()));
            }
            run.record("ruled", json!({ "cmd": cmd, "k_ladder": p.k_ladder, "base": to_value(&base), "samples": to_value(&p.samples) }));
            let mut rows = Vec::new();
            for s in &p.samples {
                let v = [C64::new(s.v[0][0], s.v[0][1]), C64::new(s.v[1][0], s.v[1][1])];
                let pt = RuledPoint::new(C64::new(s.z[0], s.z[1]), &v)?;
                let (s0, s1) = expansion_terms(&base, &fiber, &pt)?;
                let mut ladder = Vec::new();
                let mut res = Vec::new();
                for &k in &p.k_ladder {
                    let sk = scalar_curvature_at(&AdiabaticMetric::new(k, base.clone(), fiber.clone())?, &pt)?;
                    let r = sk - s0 - s1 / k;
                    res.push(r);
                    ladder.push(json!({ "k": k, "scalar": sk, "residual": r }));
                }
                rows.push(json!({
                    "z": s.z, "v": s.v, "s0": s0, "s1": s1, "ladder": ladder,
                    "loglog_slope": loglog_slope(&p.k_ladder, &res),
                }));
            }
            Ok(json!({ "samples": rows }))
        }
        RuledCmd::Correct => {
            let b = run.bundle()?;
            let m = run.metric()?;
            run.record("ruled", json!({ "cmd": cmd, "approx": to_value(&p.approx) }));
            let class = KahlerClassData::for_surface(&m.surface, m.scale)?;
            let s_bar = average_scalar(&class)?;
            let step = approx_cscK_step(&m, &b, None, s_bar, &p.approx)?;
            if step.eta0.len() == m.surface.grid.len() {
                run.out.sidecar("eta0", |w| write_grid_function(w, "base correction", &m.surface, &step.eta0))?;
            }
            let mut v = to_value(&step);
            if let Value::Object(map) = &mut v {
                map.remove("eta0");
                map.insert("base_contraction".into(), json!(step.base_contraction()));
                map.insert("fiber_contraction".into(), json!(step.fiber_contraction()));
            }
            Ok(v)
        }
    }
}

pub fn invariants(run: &mut Run) -> Result<Value> {
    let p = run.cfg.invariants.clone();
    let cmd = p.cmd.ok_or_else(|| Error::InvalidConfig("invariants needs a command (--cmd)".into()))?;
    let m = run.metric()?;
    let class = KahlerClassData::for_surface(&m.surface, m.scale)?;
    match cmd {
        InvariantCmd::Avg => {
            run.record("invariants", json!({ "cmd": cmd }));
            let avg = average_scalar(&class)?;
            let mean = m.mean(&m.scalar);
            Ok(json!({
                "class": to_value(&class),
                "average_scalar": avg,
                "quadrature_mean": mean,
                "relative_difference": (mean - avg).abs() / avg.abs().max(f64::MIN_POSITIVE),
            }))
        }
        InvariantCmd::Futaki => {
            let field = p.field.unwrap_or_else(|| "z_dz".into());
            let scale = parse_field(&field)?;
            run.record("invariants", json!({ "cmd": cmd, "field": field }));
            let rep = futaki_invariants(&m, &EulerField { scale }, &class)?;
            Ok(json!({ "class": to_value(&class), "field_scale": scale, "futaki": to_value(&rep) }))
        }
    }
}

//! Command implementations.

use anyhow::Result;
use serde_json::json;

use tiltwalk_core::bellman::{self, ControlProblem, PolicySpec, SolveOptions};
use tiltwalk_core::effham;
use tiltwalk_core::env::{make_environment, nearest_feature, Environment, EnvSpec, FeatureKind};
use tiltwalk_core::tfe::{self, FreeEnergyQuery, FreeEnergyResult, Tolerances};
use tiltwalk_core::verify::{run_suite, VerifyConfig};
use tiltwalk_core::{walk, CoreError};

use crate::output::{emit, fmt_f64, json_num, parse_grid, Csv};
use crate::{
    BellmanArgs, EffhamArgs, EnvArgs, ExcursionArgs, Format, MethodArg, SimulateArgs, TfeArgs,
    VerifyArgs,
};

fn build_env(args: &EnvArgs) -> Result<Environment> {
    let spec = EnvSpec::parse(&args.env, args.window)?;
    Ok(make_environment(spec, args.seed)?)
}

fn method_of(arg: MethodArg) -> tfe::Method {
    match arg {
        MethodArg::DirectDp => tfe::Method::DirectDp,
        MethodArg::Implicit => tfe::Method::Implicit,
        MethodArg::Auto => tfe::Method::Auto,
    }
}

fn method_name(m: tfe::Method) -> &'static str {
    match m {
        tfe::Method::DirectDp => "direct-dp",
        tfe::Method::Implicit => "implicit",
        tfe::Method::Auto => "auto",
    }
}

fn result_json(res: &FreeEnergyResult, with_corrector: bool) -> serde_json::Value {
    let mut obj = json!({
        "lambda": json_num(res.lambda),
        "flat": res.flat,
        "method": method_name(res.method),
        "residual": json_num(res.residual),
        "dp_sequence": res.dp_sequence.iter().map(|(n, e)| json!([n, json_num(*e)])).collect::<Vec<_>>(),
        "boundary": res.boundary,
    });
    let map = obj.as_object_mut().unwrap();
    map.insert(
        "corrector".into(),
        match (&res.corrector, with_corrector) {
            (Some(profile), true) => {
                json!(profile.iter().map(|&f| json_num(f)).collect::<Vec<_>>())
            }
            _ => serde_json::Value::Null,
        },
    );
    if let Some(note) = &res.note {
        map.insert("note".into(), json!(note));
    }
    obj
}

pub fn run_tfe(args: TfeArgs) -> Result<i32> {
    let env = build_env(&args.env)?;
    let tolerances = Tolerances {
        root_tol: args.tol,
        ..Tolerances::default()
    };
    let solve_at = |theta: f64| -> Result<FreeEnergyResult> {
        let query = FreeEnergyQuery {
            beta: args.beta,
            theta,
            method: method_of(args.method),
            tolerances,
            horizon: args.n,
        };
        Ok(tfe::solve(&env, &query)?)
    };
    let thetas: Vec<f64> = match (&args.theta, &args.theta_grid) {
        (Some(t), None) => vec![*t],
        (None, Some(grid)) => parse_grid(grid)?,
        _ => {
            return Err(
                CoreError::InvalidParameter("provide exactly one of --theta / --theta-grid".into()).into(),
            )
        }
    };
    let single = thetas.len() == 1 && args.theta.is_some();
    match args.output.format {
        Format::Json => {
            let content = if single {
                let res = solve_at(thetas[0])?;
                serde_json::to_string_pretty(&result_json(&res, true))?
            } else {
                let mut arr = Vec::new();
                for &t in &thetas {
                    let res = solve_at(t)?;
                    let mut obj = result_json(&res, false);
                    obj.as_object_mut().unwrap().insert("theta".into(), json_num(t));
                    arr.push(obj);
                }
                serde_json::to_string_pretty(&serde_json::Value::Array(arr))?
            };
            emit(args.output.out.as_deref(), &content)?;
        }
        Format::Csv => {
            let mut csv = Csv::new(&["theta", "lambda", "flat", "method", "residual"]);
            for &t in &thetas {
                let res = solve_at(t)?;
                csv.push(vec![
                    fmt_f64(t),
                    fmt_f64(res.lambda),
                    res.flat.to_string(),
                    method_name(res.method).to_string(),
                    fmt_f64(res.residual),
                ]);
            }
            emit(args.output.out.as_deref(), &csv.render())?;
        }
    }
    Ok(0)
}

pub fn run_effham(args: EffhamArgs) -> Result<i32> {
    let env = build_env(&args.env)?;
    let tolerances = Tolerances {
        root_tol: args.tol,
        ..Tolerances::default()
    };
    let grid = parse_grid(&args.theta_grid)?;
    let mean_v = env.mean();
    let lambda_fn = |xi: f64| tfe::lambda_at(&env, args.beta, xi, &tolerances);
    let report = effham::classify(args.delta, args.beta, mean_v, lambda_fn)?;

    let mut rows: Vec<(f64, f64, f64)> = Vec::with_capacity(grid.len());
    for &theta in &grid {
        let k = effham::k_delta(theta, args.delta)?;
        let h = effham::effective_hamiltonian(
            args.delta,
            args.beta,
            mean_v,
            |xi: f64| tfe::lambda_at(&env, args.beta, xi, &tolerances),
            theta,
        )?;
        rows.push((theta, k, h));
    }
    match args.output.format {
        Format::Csv => {
            let mut csv = Csv::new(&["theta", "K_delta", "H_bar", "regime"]);
            for (theta, k, h) in &rows {
                csv.push(vec![
                    fmt_f64(*theta),
                    fmt_f64(*k),
                    fmt_f64(*h),
                    report.regime.to_string(),
                ]);
            }
            emit(args.output.out.as_deref(), &csv.render())?;
        }
        Format::Json => {
            let content = serde_json::to_string_pretty(&json!({
                "delta": json_num(report.delta),
                "beta": json_num(report.beta),
                "c": json_num(report.c),
                "regime": report.regime.to_string(),
                "theta_bar": report.theta_bar.map(json_num),
                "threshold_delta": json_num(report.threshold_delta),
                "convex": report.convex,
                "rows": rows.iter().map(|(t, k, h)| json!({
                    "theta": json_num(*t),
                    "K_delta": json_num(*k),
                    "H_bar": json_num(*h),
                })).collect::<Vec<_>>(),
            }))?;
            emit(args.output.out.as_deref(), &content)?;
        }
    }
    Ok(0)
}

pub fn run_bellman(args: BellmanArgs) -> Result<i32> {
    let env = build_env(&args.env)?;
    let problem = ControlProblem::new(args.delta, args.beta, args.theta, args.n).with_start(args.start);
    let table = bellman::solve(&env, &problem, &SolveOptions::default())?;
    if let Some(path) = &args.dump_table {
        let mut file = std::fs::File::create(path)?;
        table.write_slice(&mut file, args.n)?;
    }
    let value_per_n = table.value / args.n as f64;
    let h_bar = effham::effective_hamiltonian(
        args.delta,
        args.beta,
        env.mean(),
        |xi: f64| tfe::lambda_at(&env, args.beta, xi, &Tolerances::default()),
        args.theta,
    )
    .ok();
    let obj = json!({
        "delta": json_num(args.delta),
        "beta": json_num(args.beta),
        "theta": json_num(args.theta),
        "n": args.n,
        "start": args.start,
        "value": json_num(table.value),
        "value_per_n": json_num(value_per_n),
        "ties": table.ties,
        "h_bar_closed_form": h_bar.map(json_num),
    });
    let content = match args.output.format {
        Format::Json => serde_json::to_string_pretty(&obj)?,
        Format::Csv => {
            let mut csv = Csv::new(&["delta", "beta", "theta", "n", "value", "value_per_n"]);
            csv.push(vec![
                fmt_f64(args.delta),
                fmt_f64(args.beta),
                fmt_f64(args.theta),
                args.n.to_string(),
                fmt_f64(table.value),
                fmt_f64(value_per_n),
            ]);
            csv.render()
        }
    };
    emit(args.output.out.as_deref(), &content)?;
    Ok(0)
}

fn parse_policy(spec: &str, env: &Environment, problem: &ControlProblem) -> Result<PolicySpec> {
    if spec == "march-left" {
        return Ok(PolicySpec::MarchLeft);
    }
    if spec == "march-right" {
        return Ok(PolicySpec::MarchRight);
    }
    if let Some(rest) = spec.strip_prefix("valley:") {
        let mut h = None;
        let mut ell = None;
        for part in rest.split(',') {
            match part.split_once('=') {
                Some(("h", v)) => h = v.parse::<f64>().ok(),
                Some(("ell", v)) => ell = v.parse::<i64>().ok(),
                _ => {}
            }
        }
        let h = h.ok_or_else(|| CoreError::InvalidParameter(format!("policy `{spec}`: missing h")))?;
        let ell =
            ell.ok_or_else(|| CoreError::InvalidParameter(format!("policy `{spec}`: missing ell")))?;
        let radius = 4 * problem.horizon as i64 + env.len() as i64;
        let feature = nearest_feature(env, h, ell, problem.start, FeatureKind::Valley, radius)?;
        return Ok(PolicySpec::ValleyBangBang {
            x_star: feature.center(),
        });
    }
    if let Some(rest) = spec.strip_prefix("const:") {
        if let Some(("q", v)) = rest.split_once('=') {
            let q: f64 = v
                .parse()
                .map_err(|_| CoreError::InvalidParameter(format!("policy `{spec}`: bad q")))?;
            return Ok(PolicySpec::ConstantQ { q });
        }
    }
    Err(CoreError::InvalidParameter(format!(
        "unknown policy `{spec}` (march-left | march-right | valley:h=..,ell=.. | const:q=..)"
    ))
    .into())
}

pub fn run_simulate(args: SimulateArgs) -> Result<i32> {
    let env = build_env(&args.env)?;
    let problem = ControlProblem::new(args.delta, args.beta, args.theta, args.n).with_start(args.start);
    let policy = parse_policy(&args.policy, &env, &problem)?;
    let fixed = bellman::evaluate_policy(&env, &problem, &policy)?;
    let best = bellman::solve(&env, &problem, &SolveOptions::default())?;
    let obj = json!({
        "policy": args.policy,
        "policy_value": json_num(fixed.value),
        "optimal_value": json_num(best.value),
        "excess": json_num(fixed.value - best.value),
        "policy_value_per_n": json_num(fixed.value / args.n as f64),
        "optimal_value_per_n": json_num(best.value / args.n as f64),
    });
    let content = match args.output.format {
        Format::Json => serde_json::to_string_pretty(&obj)?,
        Format::Csv => {
            let mut csv = Csv::new(&["policy", "policy_value", "optimal_value", "excess"]);
            csv.push(vec![
                args.policy.clone(),
                fmt_f64(fixed.value),
                fmt_f64(best.value),
                fmt_f64(fixed.value - best.value),
            ]);
            csv.render()
        }
    };
    emit(args.output.out.as_deref(), &content)?;
    Ok(0)
}

pub fn run_excursion(args: ExcursionArgs) -> Result<i32> {
    if args.c.is_none() && args.xi.is_none() && args.lambda.is_none() && args.ell.is_none() {
        return Err(CoreError::InvalidParameter(
            "nothing to compute: pass --c, --ell, --m, --xi or --lambda".into(),
        )
        .into());
    }
    let mut obj = serde_json::Map::new();
    if let Some(c) = args.c {
        let spec = walk::ExcursionSpec {
            c,
            ell: args.ell,
            m: args.m.unwrap_or(0),
        };
        spec.validate()?;
        obj.insert("c".into(), json_num(c));
        obj.insert("j".into(), json_num(walk::excursion_j(c)?));
        if let Some(ell) = spec.ell {
            obj.insert("j_ell".into(), json_num(walk::excursion_j_ell(c, ell)?));
        }
        if let Some(m) = args.m {
            let mgf = walk::excursion_count_mgf(m, c, spec.ell)?;
            obj.insert("mgf_rate".into(), json_num(mgf));
            obj.insert("mgf_horizon".into(), json!(m));
        }
    }
    if let Some(ell) = args.ell {
        obj.insert(
            "confinement_closed_form".into(),
            json_num(walk::confinement_exponent(ell)?),
        );
        obj.insert(
            "confinement_spectral".into(),
            json_num(walk::confinement_exponent_spectral(ell)?),
        );
    }
    if let Some(xi) = args.xi {
        obj.insert("xi".into(), json_num(xi));
        obj.insert("rate".into(), json_num(walk::excursion_rate(xi)));
    }
    if let Some(lambda) = args.lambda {
        obj.insert("lambda".into(), json_num(lambda));
        obj.insert("tau1_transform".into(), json_num(walk::hitting_laplace_tau1(lambda)?));
        obj.insert(
            "excursion_transform".into(),
            json_num(walk::hitting_laplace_excursion(lambda)?),
        );
    }
    let value = serde_json::Value::Object(obj);
    let content = match args.output.format {
        Format::Json => serde_json::to_string_pretty(&value)?,
        Format::Csv => {
            let map = value.as_object().unwrap();
            let mut csv = Csv::new(&["quantity", "value"]);
            for (k, v) in map {
                csv.push(vec![k.clone(), v.to_string()]);
            }
            csv.render()
        }
    };
    emit(args.output.out.as_deref(), &content)?;
    Ok(0)
}

pub fn run_verify(args: VerifyArgs) -> Result<i32> {
    let cfg = VerifyConfig {
        seed: args.seed,
        tol_scale: args.tol_scale,
    };
    let results = run_suite(&args.suite, &cfg)?;
    let all_pass = results.iter().all(|r| r.pass);
    if args.json {
        let arr: Vec<_> = results
            .iter()
            .map(|r| {
                json!({
                    "suite": r.suite,
                    "name": r.name,
                    "pass": r.pass,
                    "detail": r.detail,
                })
            })
            .collect();
        let content = serde_json::to_string_pretty(&serde_json::Value::Array(arr))?;
        emit(args.out.as_deref(), &content)?;
    } else {
        let mut lines = String::new();
        for r in &results {
            let status = if r.pass { "PASS" } else { "FAIL" };
            let detail = if r.detail.is_empty() {
                String::new()
            } else {
                format!("  ({})", r.detail)
            };
            lines.push_str(&format!("[{status}] {:10} {}{}\n", r.suite, r.name, detail));
        }
        lines.push_str(&format!(
            "{} checks, {} failed\n",
            results.len(),
            results.iter().filter(|r| !r.pass).count()
        ));
        emit(args.out.as_deref(), &lines)?;
    }
    Ok(if all_pass { 0 } else { 2 })
}

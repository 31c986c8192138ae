use std::time::Instant;

use serde_json::{json, Value};
use sparsepc::linalg::PowerOptions;
use sparsepc::model_selection::{CvGrid, CvMethod};
use sparsepc::simulation::{aggregate, grid_cells, run_grid, AggregateRecord, SimSpec, TrialConfig, TrialRecord};
use sparsepc::{
    cv_select, deflate_components, eespca_first_pc, mean_center, pca_first_pc, reconstruction_error,
    sample_covariance, DataMatrix, Method, SparseComponent,
};

use crate::input::read_matrix;
use crate::output::{csv_writer, finish_csv, json_num, num, open, opt_num, sibling, write_json, Format};
use crate::{CliError, CvArgs, FitArgs, SimArgs, SolverArgs};

fn power_options(solver: &SolverArgs) -> PowerOptions {
    let d = PowerOptions::default();
    PowerOptions {
        tol: solver.tol.unwrap_or(d.tol),
        max_iter: solver.max_iter.unwrap_or(d.max_iter),
    }
}

fn cv_method(method: Method, solver: &SolverArgs) -> Option<CvMethod> {
    let base = match method {
        Method::Spc | Method::Spc1se => CvMethod::spc(),
        Method::TPower => CvMethod::tpower(),
        Method::Rifle => CvMethod::rifle(),
        Method::Pca | Method::Eespca => return None,
    };
    Some(base.with_solver(solver.tol, solver.max_iter))
}

fn check_solver(solver: &SolverArgs) -> Result<(), CliError> {
    if let Some(t) = solver.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Input(format!("--tol must be positive, got {t}")));
        }
    }
    if solver.max_iter == Some(0) {
        return Err(CliError::Input("--max-iter must be positive".into()));
    }
    Ok(())
}

/// Reads and, unless `no_center`, centers the input matrix. Problems with the
/// data itself (too few rows) are input errors.
fn load(path: &std::path::Path, no_center: bool) -> Result<(DataMatrix, Option<Vec<String>>), CliError> {
    let input = read_matrix(path)?;
    let bad = |e: sparsepc::Error| CliError::Input(format!("{}: {}: {e}", path.display(), e.name()));
    let x = if no_center {
        DataMatrix::trusted_centered(input.values).map_err(bad)?
    } else {
        mean_center(&DataMatrix::new(input.values).map_err(bad)?).map_err(bad)?
    };
    Ok((x, input.names))
}

/// Bad option values and too little data are the caller's input errors;
/// everything else is an algorithm failure.
fn classify(e: sparsepc::Error) -> CliError {
    match e {
        sparsepc::Error::InvalidParameter(_) | sparsepc::Error::TooFewSamples { .. } => {
            CliError::Input(format!("{}: {e}", e.name()))
        }
        e => CliError::Algorithm(e),
    }
}

fn component_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    check_solver(&args.solver)?;
    let tuned = cv_method(args.method, &args.solver);
    if tuned.is_none() && !args.values.is_empty() {
        return Err(CliError::Input(format!("--values does not apply to {}", args.method)));
    }
    if !args.values.is_empty() && args.values.len() != 1 && args.values.len() != args.components {
        return Err(CliError::Input(format!(
            "--values needs 1 or {} entries, got {}",
            args.components,
            args.values.len()
        )));
    }
    if args.out.format == Format::Csv && args.out.output.is_none() {
        return Err(CliError::Input("fit with --format csv writes two files and needs --output".into()));
    }
    let (x, names) = load(&args.input, args.no_center)?;
    let power = power_options(&args.solver);

    let components = deflate_components(&x, args.components, |residual, index| {
        let started = Instant::now();
        let mut c = match tuned {
            None => {
                let cov = sample_covariance(residual)?;
                if args.method == Method::Pca {
                    pca_first_pc(&cov, &power)?
                } else {
                    eespca_first_pc(&cov, &power)?
                }
            }
            Some(cvm) => {
                let value = match args.values.as_slice() {
                    [] => {
                        let grid = cvm.default_grid(residual.p());
                        let r = cv_select(&cvm, residual, &grid, args.nfolds, component_seed(args.seed, index))?;
                        if args.method == Method::Spc1se {
                            r.chosen_1se
                        } else {
                            r.chosen_min
                        }
                    }
                    [v] => *v,
                    vs => vs[index],
                };
                let mut c = cvm.fit(residual, value)?;
                c.method = args.method;
                c
            }
        };
        c.runtime = started.elapsed().as_secs_f64();
        Ok(c)
    })
    .map_err(classify)?;
    let mut components = components;
    if args.out.no_timing {
        for c in &mut components {
            c.runtime = 0.0;
        }
    }

    let variable = |j: usize| names.as_ref().map_or_else(|| (j + 1).to_string(), |n| n[j].clone());
    let support = |c: &SparseComponent| c.support.iter().map(|j| j + 1).collect::<Vec<_>>();
    let total = reconstruction_error(&x, &components);

    match args.out.format {
        Format::Json => {
            let comps: Vec<Value> = components
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    json!({
                        "component": i + 1,
                        "loadings": c.loadings.iter().map(|&v| json_num(v)).collect::<Vec<_>>(),
                        "support": support(c),
                        "support_size": c.support_size(),
                        "eigenvalue": json_num(c.eigenvalue),
                        "param": c.param.map(json_num),
                        "runtime": json_num(c.runtime),
                        "iterations": c.iterations,
                        "converged": c.converged,
                    })
                })
                .collect();
            let doc = json!({
                "method": args.method.tag(),
                "n": x.n(),
                "p": x.p(),
                "centered": !args.no_center,
                "variables": (0..x.p()).map(variable).collect::<Vec<_>>(),
                "components": comps,
                "reconstruction_error": json_num(total),
            });
            write_json(open(args.out.output.as_deref())?, &doc)
        }
        Format::Csv => {
            let path = args.out.output.as_deref().expect("checked above");
            let mut w = csv_writer(open(Some(path))?);
            let mut header = vec!["variable".to_string()];
            header.extend((1..=components.len()).map(|i| format!("pc{i}")));
            w.write_record(&header)?;
            for j in 0..x.p() {
                let mut row = vec![variable(j)];
                row.extend(components.iter().map(|c| num(c.loadings[j])));
                w.write_record(&row)?;
            }
            finish_csv(w)?;

            let mut w = csv_writer(open(Some(&sibling(path, "components")))?);
            w.write_record([
                "component",
                "eigenvalue",
                "support_size",
                "support",
                "param",
                "runtime",
                "iterations",
                "converged",
                "reconstruction_error",
            ])?;
            for (i, c) in components.iter().enumerate() {
                let support: Vec<String> = support(c).iter().map(|j| j.to_string()).collect();
                w.write_record([
                    (i + 1).to_string(),
                    num(c.eigenvalue),
                    c.support_size().to_string(),
                    support.join(";"),
                    opt_num(c.param),
                    num(c.runtime),
                    c.iterations.to_string(),
                    c.converged.to_string(),
                    num(reconstruction_error(&x, &components[..=i])),
                ])?;
            }
            finish_csv(w)
        }
    }
}

pub fn cv(args: &CvArgs) -> Result<(), CliError> {
    check_solver(&args.solver)?;
    let cvm = match args.method {
        Method::Spc | Method::TPower | Method::Rifle => cv_method(args.method, &args.solver).expect("tuned"),
        other => {
            return Err(CliError::Input(format!(
                "cv supports spc, tpower and rifle, not {other}"
            )))
        }
    };
    let (x, _) = load(&args.input, args.no_center)?;
    let grid = if args.values.is_empty() {
        cvm.default_grid(x.p())
    } else {
        CvGrid::custom(cvm.grid_kind(), args.values.clone())
            .map_err(|e| CliError::Input(format!("--values: {e}")))?
    };
    let r = cv_select(&cvm, &x, &grid, args.nfolds, args.seed).map_err(classify)?;

    match args.out.format {
        Format::Json => {
            let curve: Vec<Value> = grid
                .values()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    json!({
                        "candidate": json_num(v),
                        "mean_error": json_num(r.mean_error[i]),
                        "se_error": json_num(r.se_error[i]),
                    })
                })
                .collect();
            let doc = json!({
                "method": args.method.tag(),
                "nfolds": r.nfolds,
                "seed": args.seed,
                "curve": curve,
                "chosen_min": json_num(r.chosen_min),
                "chosen_1se": json_num(r.chosen_1se),
            });
            write_json(open(args.out.output.as_deref())?, &doc)
        }
        Format::Csv => {
            let mut w = csv_writer(open(args.out.output.as_deref())?);
            w.write_record(["candidate", "mean_error", "se_error", "chosen_min", "chosen_1se"])?;
            for (i, &v) in grid.values().iter().enumerate() {
                w.write_record([
                    num(v),
                    num(r.mean_error[i]),
                    num(r.se_error[i]),
                    (i == r.index_min).to_string(),
                    (i == r.index_1se).to_string(),
                ])?;
            }
            finish_csv(w)
        }
    }
}

fn sim_setup(args: &SimArgs) -> Result<(SimSpec, Vec<SimSpec>, TrialConfig), CliError> {
    check_solver(&args.solver)?;
    if args.method.is_empty() {
        return Err(CliError::Input("--method lists no methods".into()));
    }
    let base = SimSpec {
        n: args.n,
        p: args.p,
        b: args.b,
        rho: args.rho,
        reps: args.reps,
        seed: args.seed,
    };
    let vary = args.vary.map(|param| (param, args.values.as_slice()));
    let cells = grid_cells(&base, vary).map_err(|e| CliError::Input(format!("{}: {e}", e.name())))?;
    let mut methods = Vec::new();
    for &m in &args.method {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let config = TrialConfig {
        methods,
        nfolds: args.nfolds,
        tol: args.solver.tol,
        max_iter: args.solver.max_iter,
    };
    Ok((base, cells, config))
}

fn run(args: &SimArgs, base: &SimSpec, config: &TrialConfig) -> Result<Vec<TrialRecord>, CliError> {
    let vary = args.vary.map(|param| (param, args.values.as_slice()));
    Ok(run_grid(base, vary, config)?)
}

fn grid_failure(agg: &[AggregateRecord]) -> Result<(), CliError> {
    let failed: Vec<String> = agg
        .iter()
        .filter(|a| a.failed == a.trials)
        .map(|a| format!("n={} p={} b={} rho={} method={}", a.spec.n, a.spec.p, a.spec.b, a.spec.rho, a.method))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Grid(format!("every trial failed in: {}", failed.join("; "))))
    }
}

fn trial_json(r: &TrialRecord) -> Value {
    json!({
        "n": r.spec.n, "p": r.spec.p, "b": r.spec.b, "rho": json_num(r.spec.rho),
        "replicate": r.replicate + 1,
        "method": r.method.tag(),
        "sens": json_num(r.sens),
        "spec": json_num(r.spec_metric),
        "balacc": json_num(r.balacc),
        "recon_ratio": json_num(r.recon_ratio),
        "wall_time": json_num(r.wall_time),
        "chosen_param": r.chosen_param.map(json_num),
        "status": r.status.to_string(),
    })
}

fn summary_json(s: &sparsepc::simulation::Summary) -> Value {
    json!({ "mean": json_num(s.mean), "se": json_num(s.se) })
}

pub fn simulate(args: &SimArgs) -> Result<(), CliError> {
    let (base, _, config) = sim_setup(args)?;
    if args.out.format == Format::Csv && args.out.output.is_none() {
        return Err(CliError::Input("simulate with --format csv writes two files and needs --output".into()));
    }
    let mut records = run(args, &base, &config)?;
    if args.out.no_timing {
        for r in &mut records {
            r.wall_time = 0.0;
        }
    }
    let agg = aggregate(&records);

    match args.out.format {
        Format::Json => {
            let aggregate: Vec<Value> = agg
                .iter()
                .map(|a| {
                    json!({
                        "n": a.spec.n, "p": a.spec.p, "b": a.spec.b, "rho": json_num(a.spec.rho),
                        "method": a.method.tag(),
                        "trials": a.trials,
                        "failed": a.failed,
                        "sens": summary_json(&a.sens),
                        "spec": summary_json(&a.spec_metric),
                        "balacc": summary_json(&a.balacc),
                        "recon_ratio": summary_json(&a.recon_ratio),
                        "wall_time": summary_json(&a.wall_time),
                    })
                })
                .collect();
            let doc = json!({
                "trials": records.iter().map(trial_json).collect::<Vec<_>>(),
                "aggregate": aggregate,
            });
            write_json(open(args.out.output.as_deref())?, &doc)?;
        }
        Format::Csv => {
            let path = args.out.output.as_deref().expect("checked above");
            let mut w = csv_writer(open(Some(path))?);
            w.write_record([
                "n",
                "p",
                "b",
                "rho",
                "replicate",
                "method",
                "sens",
                "spec",
                "balacc",
                "recon_ratio",
                "wall_time",
                "chosen_param",
                "status",
            ])?;
            for r in &records {
                w.write_record([
                    r.spec.n.to_string(),
                    r.spec.p.to_string(),
                    r.spec.b.to_string(),
                    num(r.spec.rho),
                    (r.replicate + 1).to_string(),
                    r.method.tag().to_string(),
                    num(r.sens),
                    num(r.spec_metric),
                    num(r.balacc),
                    num(r.recon_ratio),
                    num(r.wall_time),
                    opt_num(r.chosen_param),
                    r.status.to_string(),
                ])?;
            }
            finish_csv(w)?;

            let mut w = csv_writer(open(Some(&sibling(path, "aggregate")))?);
            w.write_record([
                "n",
                "p",
                "b",
                "rho",
                "method",
                "trials",
                "failed",
                "sens_mean",
                "sens_se",
                "spec_mean",
                "spec_se",
                "balacc_mean",
                "balacc_se",
                "recon_ratio_mean",
                "recon_ratio_se",
                "wall_time_mean",
                "wall_time_se",
            ])?;
            for a in &agg {
                w.write_record([
                    a.spec.n.to_string(),
                    a.spec.p.to_string(),
                    a.spec.b.to_string(),
                    num(a.spec.rho),
                    a.method.tag().to_string(),
                    a.trials.to_string(),
                    a.failed.to_string(),
                    num(a.sens.mean),
                    num(a.sens.se),
                    num(a.spec_metric.mean),
                    num(a.spec_metric.se),
                    num(a.balacc.mean),
                    num(a.balacc.se),
                    num(a.recon_ratio.mean),
                    num(a.recon_ratio.se),
                    num(a.wall_time.mean),
                    num(a.wall_time.se),
                ])?;
            }
            finish_csv(w)?;
        }
    }
    grid_failure(&agg)
}

/// The cell with the smallest value of the varied parameter.
fn baseline_cell(args: &SimArgs, cells: &[SimSpec]) -> SimSpec {
    let Some(param) = args.vary else { return cells[0] };
    let key = |s: &SimSpec| match param {
        sparsepc::simulation::GridParam::N => s.n as f64,
        sparsepc::simulation::GridParam::P => s.p as f64,
        sparsepc::simulation::GridParam::B => s.b as f64,
        sparsepc::simulation::GridParam::Rho => s.rho,
    };
    *cells
        .iter()
        .min_by(|a, b| key(a).total_cmp(&key(b)))
        .expect("at least one cell")
}

/// Wall times for each method and cell, as ratios to the EESPCA time (or the
/// first listed method's time) at the smallest grid value. Trials run one at
/// a time so the timings do not compete for cores.
pub fn bench(args: &SimArgs) -> Result<(), CliError> {
    if args.out.no_timing {
        return Err(CliError::Input("bench reports timings; --no-timing does not apply".into()));
    }
    let (base, cells, config) = sim_setup(args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| CliError::Input(e.to_string()))?;
    let records = pool.install(|| run(args, &base, &config))?;
    let agg = aggregate(&records);

    let reference_method = if config.methods.contains(&Method::Eespca) {
        Method::Eespca
    } else {
        config.methods[0]
    };
    let reference_cell = baseline_cell(args, &cells);
    let reference = agg
        .iter()
        .find(|a| {
            a.method == reference_method
                && a.spec.n == reference_cell.n
                && a.spec.p == reference_cell.p
                && a.spec.b == reference_cell.b
                && a.spec.rho.to_bits() == reference_cell.rho.to_bits()
        })
        .map(|a| a.wall_time.mean)
        .unwrap_or(f64::NAN);

    let rows: Vec<(&AggregateRecord, f64)> = agg.iter().map(|a| (a, a.wall_time.mean / reference)).collect();
    match args.out.format {
        Format::Json => {
            let doc = json!({
                "reference_method": reference_method.tag(),
                "reference_time": json_num(reference),
                "rows": rows.iter().map(|(a, ratio)| json!({
                    "n": a.spec.n, "p": a.spec.p, "b": a.spec.b, "rho": json_num(a.spec.rho),
                    "method": a.method.tag(),
                    "trials": a.trials,
                    "failed": a.failed,
                    "time_mean": json_num(a.wall_time.mean),
                    "time_se": json_num(a.wall_time.se),
                    "time_ratio": json_num(*ratio),
                    "log10_ratio": json_num(ratio.log10()),
                })).collect::<Vec<_>>(),
            });
            write_json(open(args.out.output.as_deref())?, &doc)?;
        }
        Format::Csv => {
            let mut w = csv_writer(open(args.out.output.as_deref())?);
            w.write_record([
                "n",
                "p",
                "b",
                "rho",
                "method",
                "trials",
                "failed",
                "time_mean",
                "time_se",
                "time_ratio",
                "log10_ratio",
            ])?;
            for (a, ratio) in &rows {
                w.write_record([
                    a.spec.n.to_string(),
                    a.spec.p.to_string(),
                    a.spec.b.to_string(),
                    num(a.spec.rho),
                    a.method.tag().to_string(),
                    a.trials.to_string(),
                    a.failed.to_string(),
                    num(a.wall_time.mean),
                    num(a.wall_time.se),
                    num(*ratio),
                    num(ratio.log10()),
                ])?;
            }
            finish_csv(w)?;
        }
    }
    grid_failure(&agg)
}

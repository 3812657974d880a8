//! Subcommand implementations. Each writes its files under `out` (grids under
//! `grids`) and returns the lines to print.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pdmp_exit::exit::{
    bound_moment, mc_horizon_scan, mc_oracle, min_horizon, BoundInputs, CrossingTable, McReport,
    QTildeSource,
};
use pdmp_exit::quantization::{train_marginal, write_grid};
use pdmp_exit::{PdmpModel, QuantizedChain};

use crate::config::{ModelName, RunConfig, SizeSpec};
use crate::csv::{float, write_dat, Table};
use crate::error::{CliError, Result};
use crate::models::{grid_path, Selected};

pub type Report = Vec<String>;

fn out_path(config: &RunConfig, name: &str) -> PathBuf {
    config.out.join(format!("{}_{name}", config.model.as_str()))
}

/// The configured horizon, or the first `N` whose Monte Carlo estimate of
/// `P(τ > T_N)` falls below the threshold.
pub fn resolve_horizon(config: &RunConfig, models: &Selected) -> Result<usize> {
    if let Some(n) = config.horizon {
        return Ok(n);
    }
    let h = &config.horizon_search;
    let reference = models.reference.as_ref();
    let scan = mc_horizon_scan(reference, reference, h.cap, h.samples, config.seed)?;
    scan.select(h.threshold).ok_or_else(|| {
        CliError::Numeric(format!(
            "P(τ > T_N) stays above {} up to N = {}; raise horizon_search.cap",
            h.threshold, h.cap
        ))
    })
}

pub fn train(config: &RunConfig) -> Result<Report> {
    let models = Selected::from_config(config);
    let horizon = resolve_horizon(config, &models)?;
    let mut report = vec![format!("model {} horizon {horizon}", models.quantized.id())];
    for size in &config.sizes {
        let chain = train_marginal(
            models.quantized.as_ref(),
            horizon,
            size.as_slice(),
            &config.training,
            config.seed,
        )?;
        let path = grid_path(config, size);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        write_grid(&chain, &path).map_err(|e| io_error(&path, e))?;

        let mut table = Table::new(&["k", "points", "joint", "state", "time"]);
        for (k, step) in chain.steps.iter().enumerate() {
            let d = step.distortion;
            table.push(vec![
                k.to_string(),
                step.len().to_string(),
                float(d.joint),
                float(d.state),
                float(d.time),
            ]);
            report.push(format!(
                "{} step {k}: {} points, distortion joint {:.4e} state {:.4e} time {:.4e}",
                size.label(),
                step.len(),
                d.joint,
                d.state,
                d.time
            ));
        }
        table.write(&out_path(
            config,
            &format!("{}_distortion.csv", size.label()),
        ))?;
        report.push(format!("wrote {}", path.display()));
    }
    Ok(report)
}

fn io_error(path: &std::path::Path, e: pdmp_exit::Error) -> CliError {
    match e {
        pdmp_exit::Error::Io(source) => CliError::io(path, source),
        other => other.into(),
    }
}

/// Monte Carlo references, computed once per horizon.
struct References<'a> {
    config: &'a RunConfig,
    model: &'a dyn PdmpModel,
    s_grid: &'a [f64],
    cache: BTreeMap<usize, McReport>,
}

impl<'a> References<'a> {
    fn new(config: &'a RunConfig, models: &'a Selected, s_grid: &'a [f64]) -> Self {
        Self {
            config,
            model: models.reference.as_ref(),
            s_grid,
            cache: BTreeMap::new(),
        }
    }

    fn get(&mut self, horizon: usize) -> Result<&McReport> {
        if !self.cache.contains_key(&horizon) {
            let report = mc_oracle(
                self.model,
                self.model,
                horizon,
                self.config.mc_paths,
                self.s_grid,
                self.config.max_moment(),
                self.config.seed,
            )?;
            if report.degenerate {
                return Err(CliError::Numeric(format!(
                    "no Monte Carlo path exits within {horizon} jumps"
                )));
            }
            self.cache.insert(horizon, report);
        }
        Ok(&self.cache[&horizon])
    }
}

fn sup_error(values: &[f64], reference: impl Iterator<Item = f64>) -> f64 {
    values
        .iter()
        .zip(reference)
        .map(|(v, r)| (v - r).abs())
        .fold(0.0, f64::max)
}

/// Errors of one chain against the exact oracle when there is one, else Monte Carlo.
struct Evaluation {
    survival: pdmp_exit::exit::SurvivalCurve,
    sup_exact: Option<f64>,
    sup_mc: f64,
    moments: Vec<MomentRow>,
}

struct MomentRow {
    j: u32,
    p_hat: f64,
    mc: pdmp_exit::exit::Estimate,
    exact: Option<f64>,
    bound: String,
}

impl MomentRow {
    fn relative_error(&self) -> f64 {
        let reference = self.exact.unwrap_or(self.mc.value);
        (self.p_hat - reference).abs() / reference.abs()
    }
}

fn evaluate(
    config: &RunConfig,
    models: &Selected,
    chain: &QuantizedChain,
    refs: &mut References,
) -> Result<Evaluation> {
    let target = models.quantized.as_ref();
    let table = CrossingTable::new(chain, target);
    let survival = table.survival_curve(refs.s_grid)?;
    let mc = refs.get(chain.horizon)?;
    let exact = &models.reference;
    let sup_exact = exact.exact_survival(1.0).map(|_| {
        sup_error(
            &survival.normalized,
            survival.s.iter().map(|&s| exact.exact_survival(s).unwrap()),
        )
    });
    let sup_mc = sup_error(
        &survival.normalized,
        mc.survival.iter().map(|(_, e)| e.value),
    );
    let moments = config
        .moments
        .iter()
        .map(|&j| -> Result<MomentRow> {
            Ok(MomentRow {
                j,
                p_hat: table.fold(&table.r_mom(j)),
                mc: mc.moments[j as usize],
                exact: exact.exact_moment(j),
                bound: certified_bound(models, chain, mc, j)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Evaluation {
        survival,
        sup_exact,
        sup_mc,
        moments,
    })
}

/// Bound on `|p_{N,j} − p̂_{N,j}|`, or why it is not available.
fn certified_bound(
    models: &Selected,
    chain: &QuantizedChain,
    mc: &McReport,
    j: u32,
) -> Result<String> {
    let Some(constants) = models.quantized.bound_constants() else {
        return Ok("unavailable".into());
    };
    let inputs = BoundInputs::from_chain(&constants, chain)?;
    let (q_tilde, source) = match models.quantized.exact_q_tilde() {
        Some(q) => (q, QTildeSource::Exact),
        None => match mc.q_tilde {
            Some((_, e)) => (e.value, QTildeSource::MonteCarlo),
            None => return Ok("unavailable".into()),
        },
    };
    let report = bound_moment(&inputs, j, q_tilde, source)?;
    Ok(match report.first_uncertified {
        None => float(report.per_step[chain.horizon]),
        Some(k) => format!("uncertified_from_step_{k}"),
    })
}

fn load(config: &RunConfig, models: &Selected, size: &SizeSpec) -> Result<QuantizedChain> {
    models.load_chain(&grid_path(config, size))
}

pub fn survival(config: &RunConfig) -> Result<Report> {
    let models = Selected::from_config(config);
    let s_grid = config.s_grid();
    let mut refs = References::new(config, &models, &s_grid);
    let mut report = Report::new();
    for size in &config.sizes {
        let chain = load(config, &models, size)?;
        let eval = evaluate(config, &models, &chain, &mut refs)?;
        let mc = refs.get(chain.horizon)?;
        let curve = &eval.survival;
        let mut table = Table::new(&[
            "s",
            "p_raw",
            "p_clamped",
            "p_normalized",
            "mc_reference",
            "mc_stderr",
        ]);
        for (i, (_, e)) in mc.survival.iter().enumerate() {
            table.push(vec![
                float(curve.s[i]),
                float(curve.raw[i]),
                float(curve.clamped[i]),
                float(curve.normalized[i]),
                float(e.value),
                float(e.stderr),
            ]);
        }
        table.write(&out_path(config, &format!("{}_survival.csv", size.label())))?;
        if config.gnuplot {
            let pairs: Vec<_> = curve
                .s
                .iter()
                .copied()
                .zip(curve.normalized.iter().copied())
                .collect();
            write_dat(
                &out_path(config, &format!("{}_survival.dat", size.label())),
                &pairs,
            )?;
        }
        let mut line = format!(
            "{}: normalizer {:.6}, sup-error vs Monte Carlo {:.6}",
            size.label(),
            curve.normalizer,
            eval.sup_mc
        );
        if let Some(e) = eval.sup_exact {
            line.push_str(&format!(", sup-error vs exact {e:.6}"));
        }
        report.push(line);
    }
    Ok(report)
}

pub fn moments(config: &RunConfig) -> Result<Report> {
    let models = Selected::from_config(config);
    let s_grid = config.s_grid();
    let mut refs = References::new(config, &models, &s_grid);
    let mut report = Report::new();
    for size in &config.sizes {
        let chain = load(config, &models, size)?;
        let eval = evaluate(config, &models, &chain, &mut refs)?;
        let mut table = Table::new(&[
            "j",
            "p_hat",
            "mc_reference",
            "mc_stderr",
            "certified_bound_or_flag",
        ]);
        for m in &eval.moments {
            table.push(vec![
                m.j.to_string(),
                float(m.p_hat),
                float(m.mc.value),
                float(m.mc.stderr),
                m.bound.clone(),
            ]);
            let mut line = format!(
                "{} j={}: p_hat {:.6e}, Monte Carlo {:.6e} ± {:.2e}",
                size.label(),
                m.j,
                m.p_hat,
                m.mc.value,
                m.mc.stderr
            );
            if let Some(x) = m.exact {
                line.push_str(&format!(", exact {x:.6e}"));
            }
            line.push_str(&format!(
                ", relative error {:.4}%",
                100.0 * m.relative_error()
            ));
            report.push(line);
        }
        table.write(&out_path(config, &format!("{}_moments.csv", size.label())))?;
    }
    Ok(report)
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| {
        (a + (x - mx) * (y - my), b + (x - mx) * (x - mx))
    });
    sxy / sxx
}

pub fn convergence(config: &RunConfig) -> Result<Report> {
    if config.sizes.len() < 3 {
        return Err(CliError::config(
            "sizes: the convergence study needs at least three grid sizes",
        ));
    }
    let models = Selected::from_config(config);
    let s_grid = config.s_grid();
    let mut refs = References::new(config, &models, &s_grid);

    let mut names: Vec<String> = config
        .moments
        .iter()
        .map(|j| format!("moment_{j}"))
        .collect();
    names.push("survival_sup".into());
    let mut header = vec!["size"];
    header.extend(names.iter().map(String::as_str));
    let mut table = Table::new(&header);
    let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); names.len()];
    for size in &config.sizes {
        let chain = load(config, &models, size)?;
        let eval = evaluate(config, &models, &chain, &mut refs)?;
        let mut errors: Vec<f64> = eval.moments.iter().map(MomentRow::relative_error).collect();
        errors.push(eval.sup_exact.unwrap_or(eval.sup_mc));
        let mut row = vec![size.size().to_string()];
        row.extend(errors.iter().map(|&e| float(e)));
        table.push(row);
        for (s, &e) in series.iter_mut().zip(&errors) {
            s.push(((size.size() as f64).ln(), e.ln()));
        }
    }
    table.write(&out_path(config, "convergence.csv"))?;

    let mut slopes = Table::new(&["quantity", "slope"]);
    let mut report = Report::new();
    for (name, points) in names.iter().zip(&series) {
        let slope = fit_slope(points);
        slopes.push(vec![name.clone(), float(slope)]);
        report.push(format!("{name}: log-log slope {slope:.4}"));
        if config.gnuplot {
            write_dat(
                &out_path(config, &format!("convergence_{name}.dat")),
                points,
            )?;
        }
    }
    slopes.write(&out_path(config, "slopes.csv"))?;
    Ok(report)
}

pub fn horizon(config: &RunConfig) -> Result<Report> {
    let models = Selected::from_config(config);
    let reference = models.reference.as_ref();
    let h = &config.horizon_search;
    let mut report = Report::new();

    if let Some(n) = reference.certified_horizon() {
        report.push(format!("certificate: P(τ > T_{n}) = 0"));
    }
    let is_poisson = config.model == ModelName::Poisson;
    let c = h.c_lambda.or(is_poisson.then_some(1.0));
    let epsilon = h.epsilon.or(is_poisson.then_some(f64::INFINITY));
    let k = h.k.or_else(|| reference.exit_time_bound());
    match (c, epsilon, k) {
        (Some(c), Some(epsilon), Some(k)) => {
            let n = min_horizon(c, epsilon, k, h.delta)?;
            report.push(format!(
                "analytic: N = {n} gives P(T_N < {k}) <= {} (C_lambda = {c}, epsilon = {epsilon})",
                h.delta
            ));
        }
        _ => report
            .push("analytic: not available (set horizon_search.c_lambda, epsilon and k)".into()),
    }

    let scan = mc_horizon_scan(reference, reference, h.cap, h.samples, config.seed)?;
    let mut table = Table::new(&["n", "p_beyond", "stderr"]);
    for (n, e) in scan.beyond.iter().enumerate() {
        table.push(vec![n.to_string(), float(e.value), float(e.stderr)]);
    }
    table.write(&out_path(config, "horizon.csv"))?;
    report.push(match scan.select(h.threshold) {
        Some(n) => format!(
            "monte carlo: N = {n}, P(τ > T_N) = {:.6} ± {:.2e} < {}",
            scan.beyond[n].value, scan.beyond[n].stderr, h.threshold
        ),
        None => format!(
            "monte carlo: P(τ > T_N) stays above {} up to N = {}",
            h.threshold, h.cap
        ),
    });
    Ok(report)
}

pub fn mc(config: &RunConfig) -> Result<Report> {
    let models = Selected::from_config(config);
    let horizon = resolve_horizon(config, &models)?;
    let s_grid = config.s_grid();
    let reference = models.reference.as_ref();
    let mc = mc_oracle(
        reference,
        reference,
        horizon,
        config.mc_paths,
        &s_grid,
        config.max_moment(),
        config.seed,
    )?;

    let mut survival = Table::new(&["s", "p", "stderr", "exact"]);
    for &(s, e) in &mc.survival {
        let exact = reference
            .exact_survival(s)
            .map_or_else(|| "nan".into(), float);
        survival.push(vec![float(s), float(e.value), float(e.stderr), exact]);
    }
    survival.write(&out_path(config, "mc_survival.csv"))?;

    let mut moments = Table::new(&["j", "value", "stderr", "exact"]);
    for (j, e) in mc.moments.iter().enumerate() {
        let exact = reference
            .exact_moment(j as u32)
            .map_or_else(|| "nan".into(), float);
        moments.push(vec![j.to_string(), float(e.value), float(e.stderr), exact]);
    }
    moments.write(&out_path(config, "mc_moments.csv"))?;

    let mut q = Table::new(&["k", "q", "stderr"]);
    for (k, e) in mc.q.iter().enumerate() {
        q.push(vec![k.to_string(), float(e.value), float(e.stderr)]);
    }
    q.write(&out_path(config, "mc_q.csv"))?;

    let mut report = vec![format!(
        "{} paths, horizon {horizon}, P(τ > T_N) = {:.6} ± {:.2e}",
        mc.paths, mc.beyond_horizon.value, mc.beyond_horizon.stderr
    )];
    for (j, e) in mc.moments.iter().enumerate().skip(1) {
        report.push(format!(
            "E[τ^{j} | τ <= T_N] = {:.6e} ± {:.2e}",
            e.value, e.stderr
        ));
    }
    if let Some((k, e)) = mc.q_tilde {
        report.push(format!("q̃ = q_{k} = {:.6e} ± {:.2e}", e.value, e.stderr));
    }
    Ok(report)
}

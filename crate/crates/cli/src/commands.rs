//! Command implementations. Each returns an artifact; writing it is left to the caller.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use wqte_core::estimator::{fit_wqte, NuisanceConfig, Nuisances, ObservanceModel, Propensity, WqteFit};
use wqte_core::models::{positivity_diagnostics, EtaDesign, EtaModel, KnownPropensity, LogisticModel, StrataRule};
use wqte_core::simulation::{oracle_qte, run_experiment, simulate_datasets, strata_sizes, SimReport, SimScenario};
use wqte_core::variance::{
    band_inference, gradient_bootstrap, infer_asymptotic, pairs_bootstrap, pairs_inference, Bandwidth,
    BootstrapOptions, InferenceMethod, InferenceResult,
};
use wqte_core::{validate_dataset, Dataset, EstimatorVariant, GSpec, QuantileGrid};

use crate::args::{
    BandArgs, BandMethod, DataArgs, EstimateArgs, ModelArgs, OracleArgs, Preset, ScenarioArgs, SeMethod,
    SimulateArgs, ValidateArgs,
};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest_csv, parse_csv, sha256_hex, write_csv, Ingested, Schema};
use crate::output::{cell, Artifact, InputInfo, Provenance, Table};

/// Threshold for flagging extreme fitted propensities.
const POSITIVITY_THRESHOLD: f64 = 0.01;

/// Parses `a,b,c` or `start:stop:step`.
pub fn parse_grid(spec: &str) -> CliResult<QuantileGrid> {
    let num = |t: &str| {
        t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad quantile level `{t}` in `{spec}`")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Usage(format!("range must be start:stop:step, got `{spec}`")));
        }
        Ok(QuantileGrid::range(num(parts[0])?, num(parts[1])?, num(parts[2])?)?)
    } else {
        let taus = spec.split(',').map(num).collect::<CliResult<Vec<_>>>()?;
        Ok(QuantileGrid::new(taus)?)
    }
}

fn parse_bandwidth(spec: &str) -> CliResult<Bandwidth> {
    if spec.eq_ignore_ascii_case("silverman") {
        return Ok(Bandwidth::Silverman);
    }
    match spec.parse::<f64>() {
        Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
        _ => Err(CliError::Usage(format!("bandwidth must be `silverman` or a positive number, got `{spec}`"))),
    }
}

fn schema(data: &DataArgs) -> CliResult<Schema> {
    let map = match &data.map {
        Some(spec) => Schema::parse_map(spec)?,
        None => BTreeMap::new(),
    };
    Ok(Schema { map, covariates: data.covariates.clone() })
}

fn input_info(path: &Path, ing: &Ingested) -> InputInfo {
    InputInfo { path: path.display().to_string(), sha256: ing.sha256.clone(), records: Some(ing.dataset.len()) }
}

/// Model settings after defaults and names are resolved.
#[derive(Debug, Clone, Serialize)]
struct ResolvedModel {
    variant: EstimatorVariant,
    g: GSpec,
    taus: QuantileGrid,
    alpha: f64,
    map: BTreeMap<String, String>,
    covariates: Vec<String>,
    true_e: Option<Vec<f64>>,
    eta: EtaDesign,
    propensity_design: &'static str,
    mar_design: &'static str,
}

struct Prepared {
    ingested: Ingested,
    resolved: ResolvedModel,
    nuisance: NuisanceConfig,
    grid: QuantileGrid,
}

fn strata_rule(spec: &str, covariates: &[String]) -> CliResult<StrataRule> {
    let mut thresholds = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, t) = part
            .rsplit_once(':')
            .ok_or_else(|| CliError::Usage(format!("stratum cut must be column:threshold, got `{part}`")))?;
        let j = covariates
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Mapping(format!("stratum column `{name}` is not a covariate")))?;
        let t: f64 = t.parse().map_err(|_| CliError::Usage(format!("bad stratum threshold `{t}`")))?;
        thresholds.push((j, t));
    }
    if thresholds.is_empty() {
        return Err(CliError::Usage("empty --eta-strata".into()));
    }
    Ok(StrataRule { thresholds })
}

fn prepare(data: &DataArgs, model: &ModelArgs) -> CliResult<Prepared> {
    let variant: EstimatorVariant = model.variant.parse()?;
    let g: GSpec = model.g.parse()?;
    let grid = parse_grid(&model.taus)?;
    if !(model.alpha > 0.0 && model.alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {}", model.alpha)));
    }
    let schema = schema(data)?;
    let ingested = ingest_csv(&data.input, &schema)?;
    let p = ingested.dataset.p;

    let mut nuisance = NuisanceConfig::default();
    if let Some(spec) = &model.eta_strata {
        nuisance.eta =
            EtaDesign::Strata { rule: strata_rule(spec, &ingested.covariates)?, allow_census: model.allow_census };
    } else if model.allow_census {
        return Err(CliError::Usage("--allow-census applies only with --eta-strata".into()));
    }
    if let Some(coefs) = &model.true_e {
        if coefs.len() != p + 1 {
            return Err(CliError::Usage(format!(
                "--true-e needs {} coefficients (intercept and {p} covariates), got {}",
                p + 1,
                coefs.len()
            )));
        }
        nuisance.known_propensity = Some(KnownPropensity::logistic(coefs.clone()));
    } else if variant.propensity_known() {
        return Err(CliError::Usage("variant III needs --true-e".into()));
    }
    let resolved = ResolvedModel {
        variant,
        g,
        taus: grid.clone(),
        alpha: model.alpha,
        map: schema.map,
        covariates: ingested.covariates.clone(),
        true_e: model.true_e.clone(),
        eta: nuisance.eta.clone(),
        propensity_design: "intercept + covariates",
        mar_design: "intercept + z + covariates",
    };
    Ok(Prepared { ingested, resolved, nuisance, grid })
}

fn logistic_summary(m: &LogisticModel) -> Value {
    json!({
        "columns": m.column_names,
        "coefficients": m.fit.coefficients,
        "converged": m.fit.converged,
        "iterations": m.fit.iterations,
    })
}

fn nuisance_summary(n: &Nuisances, warnings: &mut Vec<String>) -> Value {
    let propensity = match &n.propensity {
        Propensity::Fitted(m) => {
            if !m.fit.converged {
                warnings.push("propensity model did not converge".into());
            }
            json!({ "kind": "fitted", "model": logistic_summary(m) })
        }
        Propensity::Known(k) => json!({ "kind": "known", "label": k.label() }),
    };
    let observance = match &n.observance {
        None => Value::Null,
        Some(ObservanceModel::DoubleSampling(EtaModel::Logistic(m))) => {
            json!({ "kind": "double_sampling_logistic", "model": logistic_summary(m) })
        }
        Some(ObservanceModel::DoubleSampling(EtaModel::Strata(m))) => json!({
            "kind": "double_sampling_strata",
            "strata": m.strata,
            "proportions": m.proportions,
            "counts": m.counts,
        }),
        Some(ObservanceModel::Mar(m)) => json!({ "kind": "mar_logistic", "model": logistic_summary(m) }),
    };
    json!({ "propensity": propensity, "observance": observance })
}

fn positivity(d: &Dataset, n: &Nuisances, warnings: &mut Vec<String>) -> CliResult<Option<Value>> {
    let Some(model) = n.propensity.fitted() else { return Ok(None) };
    let report = positivity_diagnostics(model, d, POSITIVITY_THRESHOLD)?;
    if report.below + report.above > 0 {
        warnings.push(format!(
            "{} records have fitted propensity outside [{c}, {}]",
            report.below + report.above,
            1.0 - POSITIVITY_THRESHOLD,
            c = POSITIVITY_THRESHOLD
        ));
    }
    Ok(Some(json!({
        "threshold": report.threshold,
        "below": report.below,
        "above": report.above,
        "min": report.min,
        "max": report.max,
    })))
}

fn curve_table(fit: &WqteFit, inf: Option<&InferenceResult>) -> Table {
    let mut t = Table::new(&[
        "tau",
        "beta0",
        "beta1",
        "beta",
        "se",
        "ci_lower",
        "ci_upper",
        "band_lower",
        "band_upper",
    ]);
    for (k, &tau) in fit.grid.taus().iter().enumerate() {
        let get = |v: Option<&Vec<f64>>| cell(v.map(|v| v[k]));
        t.push(vec![
            tau.to_string(),
            fit.beta0[k].to_string(),
            fit.beta1[k].to_string(),
            fit.beta[k].to_string(),
            get(inf.map(|i| &i.se)),
            get(inf.map(|i| &i.ci_lower)),
            get(inf.map(|i| &i.ci_upper)),
            get(inf.and_then(|i| i.band_lower.as_ref())),
            get(inf.and_then(|i| i.band_upper.as_ref())),
        ]);
    }
    t
}

fn fit_result(d: &Dataset, fit: &WqteFit, nuisances: &Nuisances, warnings: &mut Vec<String>) -> CliResult<Value> {
    let residuals: Vec<[f64; 2]> = fit.residuals.clone();
    Ok(json!({
        "n": d.len(),
        "phase_counts": d.phase_counts(),
        "beta0": fit.beta0,
        "beta1": fit.beta1,
        "beta": fit.beta,
        "residuals": residuals,
        "residual_bound": fit.residual_bound(),
        "total_weight": fit.total_omega(),
        "nuisances": nuisance_summary(nuisances, warnings),
        "positivity": positivity(d, nuisances, warnings)?,
    }))
}

fn require_seed(seed: Option<u64>, what: &str) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Usage(format!("{what} is stochastic and needs --seed")))
}

pub fn estimate(args: &EstimateArgs) -> CliResult<Artifact> {
    let prep = prepare(&args.data, &args.model)?;
    let bandwidth = parse_bandwidth(&args.bandwidth)?;
    let seed = match args.se {
        SeMethod::Pairs | SeMethod::Gradient => Some(require_seed(args.seed, "a bootstrap standard error")?),
        SeMethod::Asymptotic | SeMethod::None => None,
    };
    let d = &prep.ingested.dataset;
    let (variant, g, alpha) = (prep.resolved.variant, prep.resolved.g, prep.resolved.alpha);
    let (fit, nuisances) = fit_wqte(d, variant, g, &prep.nuisance, &prep.grid)?;
    let mut warnings = Vec::new();
    let inference = match (args.se, seed) {
        (SeMethod::Asymptotic, _) => Some(infer_asymptotic(d, &fit, &nuisances, bandwidth, alpha)?.0),
        (SeMethod::Pairs, Some(seed)) => {
            let opts = BootstrapOptions::new(args.replicates, seed);
            let reps = pairs_bootstrap(d, variant, g, &prep.nuisance, &prep.grid, &opts)?;
            Some(pairs_inference(&fit.beta, &reps, alpha)?)
        }
        (SeMethod::Gradient, Some(seed)) => {
            let reps = gradient_bootstrap(d, &fit, &prep.nuisance, &BootstrapOptions::new(args.replicates, seed))?;
            let mut inf = band_inference(&fit.beta, &reps, alpha, InferenceMethod::GradientBootstrap)?;
            inf.band_lower = None;
            inf.band_upper = None;
            inf.critical_value = None;
            Some(inf)
        }
        _ => None,
    };
    if let Some(inf) = &inference {
        warnings.extend(inf.warnings.iter().cloned());
    }
    let mut result = fit_result(d, &fit, &nuisances, &mut warnings)?;
    result["inference"] = serde_json::to_value(&inference).expect("serializable");
    let mut config = serde_json::to_value(&prep.resolved).expect("serializable");
    config["se"] = json!(args.se);
    config["bandwidth"] = json!(args.bandwidth);
    if seed.is_some() {
        config["replicates"] = json!(args.replicates);
    }
    Ok(Artifact {
        provenance: Provenance::new("estimate", seed, Some(input_info(&args.data.input, &prep.ingested)), config),
        table: Some(curve_table(&fit, inference.as_ref())),
        result,
        warnings,
    })
}

pub fn band(args: &BandArgs) -> CliResult<Artifact> {
    let prep = prepare(&args.data, &args.model)?;
    let d = &prep.ingested.dataset;
    let (variant, g, alpha) = (prep.resolved.variant, prep.resolved.g, prep.resolved.alpha);
    let (fit, nuisances) = fit_wqte(d, variant, g, &prep.nuisance, &prep.grid)?;
    let opts = BootstrapOptions::new(args.replicates, args.seed);
    let (reps, method) = match args.method {
        BandMethod::Gradient => (gradient_bootstrap(d, &fit, &prep.nuisance, &opts)?, InferenceMethod::GradientBootstrap),
        BandMethod::Pairs => {
            (pairs_bootstrap(d, variant, g, &prep.nuisance, &prep.grid, &opts)?, InferenceMethod::PairsBootstrap)
        }
    };
    let inf = band_inference(&fit.beta, &reps, alpha, method)?;
    let mut warnings = inf.warnings.clone();
    let mut result = fit_result(d, &fit, &nuisances, &mut warnings)?;
    result["rejects_zero_curve"] = json!(inf.rejects_zero_curve());
    result["inference"] = serde_json::to_value(&inf).expect("serializable");
    let mut config = serde_json::to_value(&prep.resolved).expect("serializable");
    config["method"] = json!(args.method);
    config["replicates"] = json!(args.replicates);
    Ok(Artifact {
        provenance: Provenance::new("band", Some(args.seed), Some(input_info(&args.data.input, &prep.ingested)), config),
        table: Some(curve_table(&fit, Some(&inf))),
        result,
        warnings,
    })
}

/// Scenario from file or preset with command-line overrides applied. The
/// digest of the scenario file, when one is used, is returned alongside.
fn resolve_scenario(args: &ScenarioArgs) -> CliResult<(SimScenario, Option<InputInfo>)> {
    let (mut s, info, file_seed) = match &args.scenario {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
            let raw: Value = serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
            let has_seed = raw.get("seed").is_some();
            let s: SimScenario = serde_json::from_value(raw)
                .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
            let info = InputInfo { path: path.display().to_string(), sha256: sha256_hex(&bytes), records: None };
            (s, Some(info), has_seed)
        }
        None => {
            let s = match args.preset {
                Preset::Homogeneous => SimScenario::homogeneous(),
                Preset::Heterogeneous => SimScenario::heterogeneous(),
            };
            (s, None, false)
        }
    };
    match (args.seed, file_seed) {
        (Some(seed), _) => s.seed = seed,
        (None, true) => {}
        (None, false) => return Err(CliError::Usage("simulation is stochastic and needs --seed".into())),
    }
    if args.paper_scale {
        s = s.paper_scale();
    }
    if let Some(n) = args.n {
        s.n = n;
    }
    if let Some(t) = &args.taus {
        s.grid = parse_grid(t)?;
    }
    if let Some(g) = &args.g {
        s.g = g.parse()?;
    }
    Ok((s, info))
}

fn summary_table(r: &SimReport) -> Table {
    let mut t = Table::new(&[
        "variant",
        "tau",
        "truth",
        "mean_estimate",
        "relative_bias_pct",
        "empirical_se",
        "asymptotic_se",
        "asymptotic_coverage",
        "pairs_se",
        "pairs_coverage",
        "gradient_se",
        "gradient_coverage",
    ]);
    for e in &r.estimators {
        for (k, &tau) in r.oracle.grid.taus().iter().enumerate() {
            let se = |i: &Option<wqte_core::simulation::IntervalSummary>| cell(i.as_ref().map(|i| i.mean_se[k]));
            let cov = |i: &Option<wqte_core::simulation::IntervalSummary>| cell(i.as_ref().map(|i| i.coverage[k]));
            t.push(vec![
                e.variant.tag().to_string(),
                tau.to_string(),
                r.oracle.beta[k].to_string(),
                e.mean_estimate[k].to_string(),
                e.relative_bias_pct[k].to_string(),
                e.empirical_se[k].to_string(),
                se(&e.asymptotic),
                cov(&e.asymptotic),
                se(&e.pairs),
                cov(&e.pairs),
                se(&e.gradient),
                cov(&e.gradient),
            ]);
        }
    }
    t
}

pub fn simulate(args: &SimulateArgs) -> CliResult<Artifact> {
    let (mut s, scenario_file) = resolve_scenario(&args.scenario)?;
    if let Some(r) = args.replications {
        s.replications = r;
    }
    if let Some(b) = args.replicates {
        s.bootstrap_replicates = b;
    }
    if let Some(a) = args.alpha {
        s.alpha = a;
    }
    if let Some(o) = args.oracle_draws {
        s.oracle_draws = o;
    }
    s.pairs_bootstrap |= args.pairs;
    if args.no_bands {
        s.gradient_bands = false;
    }
    s.validate()?;
    if let Some(dir) = &args.emit_data {
        emit_first_replicate(&s, dir)?;
    }
    let report = run_experiment(&s)?;
    let mut warnings = Vec::new();
    if report.total_shortfall > 0 {
        warnings.push(format!(
            "double-sampling strata fell short of their requested sizes by {} records in total",
            report.total_shortfall
        ));
    }
    for (tag, count) in &report.failures {
        warnings.push(format!("{count} replicates failed at {tag}"));
    }
    Ok(Artifact {
        provenance: Provenance::new("simulate", Some(s.seed), scenario_file, serde_json::to_value(&s).expect("serializable")),
        table: Some(summary_table(&report)),
        result: serde_json::to_value(&report).expect("serializable"),
        warnings,
    })
}

fn emit_first_replicate(s: &SimScenario, dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let sizes = strata_sizes(s)?;
    let (complete, observed, _) = simulate_datasets(s, &sizes, 0)?;
    for (name, d) in [("complete.csv", &complete), ("observed.csv", &observed)] {
        let path = dir.join(name);
        let file = std::fs::File::create(&path).map_err(|e| CliError::io(path.display(), e))?;
        write_csv(d, std::io::BufWriter::new(file))?;
    }
    Ok(())
}

pub fn oracle(args: &OracleArgs) -> CliResult<Artifact> {
    let (mut s, scenario_file) = resolve_scenario(&args.scenario)?;
    if let Some(d) = args.draws {
        s.oracle_draws = d;
    }
    s.validate()?;
    let o = oracle_qte(&s, &s.grid, s.oracle_draws, s.seed)?;
    let mut t = Table::new(&["tau", "beta0", "beta1", "beta"]);
    for (k, &tau) in o.grid.taus().iter().enumerate() {
        t.push(vec![
            tau.to_string(),
            o.beta0[k].to_string(),
            (o.beta0[k] + o.beta[k]).to_string(),
            o.beta[k].to_string(),
        ]);
    }
    Ok(Artifact {
        provenance: Provenance::new("oracle", Some(s.seed), scenario_file, serde_json::to_value(&s).expect("serializable")),
        table: Some(t),
        result: serde_json::to_value(&o).expect("serializable"),
        warnings: Vec::new(),
    })
}

pub fn validate(args: &ValidateArgs) -> CliResult<Artifact> {
    let schema = schema(&args.data)?;
    let path = &args.data.input;
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    let (d, covariates) = parse_csv(&bytes, &schema, false)?;
    let report = validate_dataset(&d);
    let input = InputInfo { path: path.display().to_string(), sha256: sha256_hex(&bytes), records: Some(d.len()) };
    let config = json!({ "map": schema.map, "covariates": covariates });
    Ok(Artifact {
        provenance: Provenance::new("validate", None, Some(input), config),
        table: None,
        result: json!({
            "valid": report.is_valid(),
            "phase_counts": d.phase_counts(),
            "violations": report.violations,
        }),
        warnings: Vec::new(),
    })
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use proxyfair::audit::{audit_dataset, AuditReport, PopulationRates};
use proxyfair::bias::{BiasInputs, Interval};
use proxyfair::data::{ingest_csv, write_csv, AuditDataset, CsvSchema};
use proxyfair::metrics::{MetricKind, MetricSpec};
use proxyfair::sensitivity::{
    contour_grid, run_sensitivity, ErrorCorrelation, RangeSpec, SensitivityConfig, SignConvention,
};
use proxyfair::simulate::{
    run_scenario_sweep, simulate_replication, write_sweep_csv, Membership, SimConfig, SweepAxis,
};
use proxyfair::utility::{
    group_utility_report, select_threshold, write_utility_csv, GroupUtilityParams, UtilityReportConfig,
};
use proxyfair::Error;

use crate::config::Layer;
use crate::output::{csv_preamble, emit, json_document};
use crate::{
    AuditArgs, BoundArgs, CliError, InputArgs, SensitivityArgs, SimArgs, SimulateArgs, SweepArgs, UtilityArgs,
};

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Core(Error::InvalidParameter(msg.into()))
}

fn parse_enum<T: serde::de::DeserializeOwned>(raw: &str, what: &str) -> Result<T, CliError> {
    serde_json::from_value(Value::String(raw.trim().to_ascii_lowercase()))
        .map_err(|_| invalid(format!("unknown {what} `{raw}`")))
}

/// `KEY=VALUE` pairs from repeated flags.
fn parse_pairs<T: std::str::FromStr>(items: &[String], flag: &str) -> Result<BTreeMap<String, T>, CliError> {
    items
        .iter()
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| invalid(format!("--{flag} expects KEY=VALUE, got `{item}`")))?;
            let v = v
                .trim()
                .parse()
                .map_err(|_| invalid(format!("--{flag}: cannot parse value in `{item}`")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn pick_pairs<T>(layer: &Layer, items: &[String], flag: &str) -> Result<BTreeMap<String, T>, CliError>
where
    T: std::str::FromStr + serde::de::DeserializeOwned,
{
    if items.is_empty() {
        Ok(layer.get(&flag.replace('-', "_"))?.unwrap_or_default())
    } else {
        parse_pairs(items, flag)
    }
}

fn load_dataset(layer: &Layer, args: &InputArgs) -> Result<(AuditDataset, Value), CliError> {
    let input: PathBuf = layer
        .pick_opt(args.input.clone(), "input")?
        .ok_or_else(|| invalid("an input CSV is required (--input)"))?;
    let outcome: Option<String> = layer.pick_opt(args.outcome_col.clone(), "outcome_col")?;
    let prediction: Option<String> = layer.pick_opt(args.prediction_col.clone(), "prediction_col")?;
    let score: Option<String> = layer.pick_opt(args.score_col.clone(), "score_col")?;
    let prob_cols: BTreeMap<String, String> = pick_pairs(layer, &args.prob_cols, "prob-cols")?;
    let true_group: Option<String> = layer.pick_opt(args.true_group_col.clone(), "true_group_col")?;
    let exhaustive = layer.pick_bool(args.exhaustive, "exhaustive")?;
    let threshold: f64 = layer.pick(args.threshold, "threshold", 0.5)?;

    let custom =
        outcome.is_some() || prediction.is_some() || score.is_some() || !prob_cols.is_empty() || true_group.is_some();
    let schema = if custom {
        CsvSchema {
            outcome: outcome.unwrap_or_else(|| "y".into()),
            prediction,
            score,
            prob_columns: prob_cols.into_iter().collect(),
            true_group,
            exhaustive,
        }
    } else {
        let mut rdr = proxyfair_reader(&input)?;
        let headers = rdr.headers().map_err(Error::from)?.clone();
        let mut s = CsvSchema::canonical(&headers.iter().collect::<Vec<_>>())?;
        s.exhaustive = exhaustive;
        s
    };
    let ds = ingest_csv(&input, Some(&schema), Some(threshold))?;
    let cfg = json!({
        "input": input.display().to_string(),
        "outcome_col": schema.outcome,
        "prediction_col": schema.prediction,
        "score_col": schema.score,
        "prob_cols": schema.prob_columns.iter().cloned().collect::<BTreeMap<_, _>>(),
        "true_group_col": schema.true_group,
        "exhaustive": exhaustive,
        "threshold": threshold,
    });
    Ok((ds, cfg))
}

fn proxyfair_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    let file = std::fs::File::open(path)?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file))
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Value::Object(x), Value::Object(y)) = (&mut a, b) {
        x.extend(y);
    }
    a
}

fn metric_list(layer: &Layer, flag: &[String], key: &str) -> Result<Vec<MetricKind>, CliError> {
    match layer.pick_list(flag.to_vec(), key)? {
        Some(names) => names.iter().map(|n| n.parse().map_err(CliError::Core)).collect(),
        None => Ok(MetricKind::ALL.to_vec()),
    }
}

fn group_list(layer: &Layer, flag: &[String], ds: &AuditDataset) -> Result<Vec<String>, CliError> {
    let groups = layer
        .pick_list(flag.to_vec(), "groups")?
        .unwrap_or_else(|| ds.group_ids().to_vec());
    for g in &groups {
        ds.group_index(g)?;
    }
    Ok(groups)
}

fn run_audit(config: Option<&Path>, args: &AuditArgs, command: &str) -> Result<(AuditReport, Value), CliError> {
    let layer = Layer::load(config, command)?;
    let (ds, input_cfg) = load_dataset(&layer, &args.input)?;
    let metrics = metric_list(&layer, &args.metrics, "metrics")?;
    let groups = group_list(&layer, &args.groups, &ds)?;
    let base_rate: Option<f64> = layer.pick_opt(args.base_rate, "base_rate")?;
    let h1_rate: Option<f64> = layer.pick_opt(args.h1_rate, "h1_rate")?;
    if base_rate.is_some() != h1_rate.is_some() {
        return Err(invalid("--base-rate and --h1-rate must be given together"));
    }

    // METRIC:GROUP=BASE,H1
    let entries: BTreeMap<String, Vec<f64>> = if args.population.is_empty() {
        layer.get("population")?.unwrap_or_default()
    } else {
        args.population
            .iter()
            .map(|item| {
                let (k, v) = item
                    .split_once('=')
                    .ok_or_else(|| invalid(format!("--population expects METRIC:GROUP=BASE,H1, got `{item}`")))?;
                let vals = v
                    .split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| invalid(format!("--population: bad number in `{item}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((k.to_string(), vals))
            })
            .collect::<Result<_, CliError>>()?
    };
    let mut population = BTreeMap::new();
    for (key, vals) in &entries {
        let (m, g) = key
            .split_once(':')
            .ok_or_else(|| invalid(format!("population key `{key}` must be METRIC:GROUP")))?;
        let [b, h] = vals[..] else {
            return Err(invalid(format!("population `{key}` needs exactly two values")));
        };
        population.insert(
            (m.parse::<MetricKind>()?, g.to_string()),
            PopulationRates {
                base_rate: b,
                h1_rate: h,
            },
        );
    }
    if let (Some(b), Some(h)) = (base_rate, h1_rate) {
        for &m in &metrics {
            for g in &groups {
                population.entry((m, g.clone())).or_insert(PopulationRates {
                    base_rate: b,
                    h1_rate: h,
                });
            }
        }
    }

    let report = audit_dataset(&ds, &metrics, &groups, &population)?;
    let cfg = merge(
        input_cfg,
        json!({
            "metrics": metrics,
            "groups": groups,
            "population": population
                .iter()
                .map(|((m, g), p)| (format!("{m}:{g}"), [p.base_rate, p.h1_rate]))
                .collect::<BTreeMap<_, _>>(),
        }),
    );
    Ok((report, cfg))
}

pub fn audit(config: Option<&Path>, args: AuditArgs) -> Result<(), CliError> {
    let (report, cfg) = run_audit(config, &args, "audit")?;
    let doc = json_document("audit", &cfg, json!({ "report": report }))?;
    emit(args.out.output.as_deref(), &doc)
}

pub fn bound(config: Option<&Path>, args: BoundArgs) -> Result<(), CliError> {
    let (report, cfg) = run_audit(config, &args.audit, "bound")?;
    let mut rows = Vec::new();
    for e in &report.entries {
        let Some(b) = e.bound else {
            return Err(invalid(format!(
                "bound for {} / group `{}` needs true group labels or --base-rate and --h1-rate",
                e.metric, e.group
            )));
        };
        for w in &e.warnings {
            eprintln!("warning: {} / group `{}`: {w}", e.metric, e.group);
        }
        rows.push(json!({
            "metric": e.metric,
            "group": e.group,
            "weighted": e.weighted.value,
            "bound": b,
            "interval": Interval::new((e.weighted.value - b).max(0.0), (e.weighted.value + b).min(1.0)),
            "source": e.bound_source,
            "assumption1": e.assumption1,
            "empirical_bias": e.empirical_bias,
            "warnings": e.warnings,
        }));
    }
    let doc = json_document("bound", &cfg, json!({ "bounds": rows }))?;
    emit(args.audit.out.output.as_deref(), &doc)
}

pub fn sensitivity(config: Option<&Path>, args: SensitivityArgs) -> Result<(), CliError> {
    let layer = Layer::load(config, "sensitivity")?;
    let (ds, input_cfg) = load_dataset(&layer, &args.input)?;
    let metric: MetricKind = layer
        .pick::<String>(args.metric.clone(), "metric", "fnr".into())?
        .parse()?;
    let spec = MetricSpec::of(metric);
    let group = match layer.pick_opt(args.group.clone(), "group")? {
        Some(g) => g,
        None if ds.group_ids().len() == 1 => ds.group_ids()[0].clone(),
        None => return Err(invalid("--group is required when the input has several groups")),
    };
    ds.group_index(&group)?;

    let (base_rate, base_source) = match layer.pick_opt(args.base_rate, "base_rate")? {
        Some(b) => (b, "given"),
        None if ds.has_labels() => (BiasInputs::from_sample(&ds, &spec, &group)?.base_rate, "sample"),
        None => return Err(invalid("--base-rate is required for inputs without true group labels")),
    };

    let levels: Option<Vec<f64>> = layer.pick_list(args.eps_rel.clone(), "eps_rel")?;
    let bounds = [
        layer.pick_opt(args.eps_lo, "eps_lo")?,
        layer.pick_opt(args.eps_hi, "eps_hi")?,
        layer.pick_opt(args.eps_prime_lo, "eps_prime_lo")?,
        layer.pick_opt(args.eps_prime_hi, "eps_prime_hi")?,
    ];
    let ranges: Vec<RangeSpec> = match (levels, bounds) {
        (Some(levels), _) => levels.into_iter().map(|level| RangeSpec::Relative { level }).collect(),
        (None, [Some(a), Some(b), Some(c), Some(d)]) => vec![RangeSpec::Absolute {
            eps: Interval::new(a, b),
            eps_prime: Interval::new(c, d),
        }],
        _ => {
            return Err(invalid(
                "give --eps-rel levels or all of --eps-lo, --eps-hi, --eps-prime-lo, --eps-prime-hi",
            ))
        }
    };

    let mut template = SensitivityConfig::new(ranges[0], base_rate);
    template.bootstrap_reps = layer.pick(args.reps, "reps", template.bootstrap_reps)?;
    template.alpha = layer.pick(args.alpha, "alpha", template.alpha)?;
    template.seed = layer.pick(args.seed, "seed", template.seed)?;
    template.grid_resolution = layer.pick(args.grid_resolution, "grid_resolution", template.grid_resolution)?;
    template.resample = !layer.pick_bool(args.no_resample, "no_resample")?;
    if let Some(c) = layer.pick_opt(args.correlation.clone(), "correlation")? {
        template.correlation = parse_enum::<ErrorCorrelation>(&c, "correlation")?;
    }
    if let Some(s) = layer.pick_opt(args.sign.clone(), "sign")? {
        template.sign = parse_enum::<SignConvention>(&s, "sign convention")?;
    }
    let grid_out: Option<PathBuf> = layer.pick_opt(args.grid_out.clone(), "grid_out")?;

    let mut results = Vec::new();
    let mut grid_csv = csv::Writer::from_writer(Vec::new());
    grid_csv
        .write_record(["range", "eps", "eps_prime", "bias", "corrected"])
        .map_err(Error::from)?;
    for range in &ranges {
        let cfg = SensitivityConfig {
            range: *range,
            ..template.clone()
        };
        let res = run_sensitivity(&ds, &spec, &group, &cfg)?;
        let label = match range {
            RangeSpec::Relative { level } => level.to_string(),
            RangeSpec::Absolute { .. } => "absolute".to_string(),
        };
        if grid_out.is_some() {
            for row in contour_grid(&ds, &spec, &group, &cfg)? {
                grid_csv
                    .write_record([
                        label.clone(),
                        row.eps.to_string(),
                        row.eps_prime.to_string(),
                        row.bias.to_string(),
                        row.corrected.to_string(),
                    ])
                    .map_err(Error::from)?;
            }
        }
        results.push(json!({ "range": range, "result": res }));
    }

    let cfg = merge(
        input_cfg,
        json!({
            "metric": metric,
            "group": group,
            "base_rate": base_rate,
            "base_rate_source": base_source,
            "ranges": ranges,
            "reps": template.bootstrap_reps,
            "alpha": template.alpha,
            "seed": template.seed,
            "grid_resolution": template.grid_resolution,
            "resample": template.resample,
            "correlation": template.correlation,
            "sign": template.sign,
        }),
    );
    if let Some(path) = grid_out {
        let mut bytes = csv_preamble("sensitivity", &cfg);
        bytes.extend(grid_csv.into_inner().map_err(|e| invalid(e.to_string()))?);
        emit(Some(&path), &bytes)?;
    }
    let doc = json_document("sensitivity", &cfg, json!({ "results": results }))?;
    emit(args.out.output.as_deref(), &doc)
}

fn sim_config(layer: &Layer, args: &SimArgs) -> Result<SimConfig, CliError> {
    let d = SimConfig::default();
    let membership = match layer.pick_opt(args.membership.clone(), "membership")? {
        Some(m) => parse_enum::<Membership>(&m, "membership mode")?,
        None => d.membership,
    };
    let metric = match layer.pick_opt::<String>(args.metric.clone(), "metric")? {
        Some(m) => m.parse()?,
        None => d.metric,
    };
    let cfg = SimConfig {
        beta1: layer.pick(args.beta1, "beta1", d.beta1)?,
        beta2: layer.pick(args.beta2, "beta2", d.beta2)?,
        beta3: layer.pick(args.beta3, "beta3", d.beta3)?,
        n_population: layer.pick(args.n_population, "n_population", d.n_population)?,
        n_sample: layer.pick(args.n_sample, "n_sample", d.n_sample)?,
        n_train: layer.pick(args.n_train, "n_train", d.n_train)?,
        threshold: layer.pick(args.threshold, "threshold", d.threshold)?,
        seed: layer.pick(args.seed, "seed", d.seed)?,
        replications: layer.pick(args.reps, "reps", d.replications)?,
        membership,
        metric,
        group: layer.pick(args.group, "group", d.group)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn simulate(config: Option<&Path>, args: SimulateArgs) -> Result<(), CliError> {
    let layer = Layer::load(config, "simulate")?;
    let sim = sim_config(&layer, &args.sim)?;
    let cfg = serde_json::to_value(&sim)?;
    let table = run_scenario_sweep(&sim, SweepAxis::Beta1, &[sim.beta1], sim.replications)?;
    let mut bytes = csv_preamble("simulate", &cfg);
    write_sweep_csv(&table, &mut bytes)?;
    emit(args.out.output.as_deref(), &bytes)?;

    if let Some(path) = layer.pick_opt::<PathBuf>(args.dataset_out.clone(), "dataset_out")? {
        let (pop, test, _) = simulate_replication(&sim, 0)?;
        let mut bytes = csv_preamble("simulate", &merge(cfg, json!({ "replication": 0 })));
        write_csv(&pop.dataset(&test)?, &mut bytes)?;
        emit(Some(&path), &bytes)?;
    }
    Ok(())
}

/// `LO:HI:STEP` (inclusive) or a comma-separated list.
pub fn parse_values(raw: &str) -> Result<Vec<f64>, CliError> {
    let bad = || invalid(format!("cannot parse sweep values `{raw}`"));
    if raw.contains(':') {
        let parts: Vec<f64> = raw
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let [lo, hi, step] = parts[..] else { return Err(bad()) };
        if step <= 0.0 || step.is_nan() || hi < lo {
            return Err(invalid(format!("sweep range `{raw}` needs LO <= HI and STEP > 0")));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        // rounding keeps 0.25 steps from printing as 0.25000000000000006
        Ok((0..n).map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12).collect())
    } else {
        raw.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    }
}

pub fn sweep(config: Option<&Path>, args: SweepArgs) -> Result<(), CliError> {
    let layer = Layer::load(config, "sweep")?;
    let sim = sim_config(&layer, &args.sim)?;
    let axis: SweepAxis = layer
        .pick_opt::<String>(args.axis.clone(), "axis")?
        .ok_or_else(|| invalid("--axis is required"))?
        .parse()?;
    let values = match (&args.values, layer.get::<toml::Value>("values")?) {
        (Some(raw), _) => parse_values(raw)?,
        (None, Some(toml::Value::String(raw))) => parse_values(&raw)?,
        (None, Some(v)) => v
            .try_into()
            .map_err(|e| CliError::Config(format!("config key `values`: {e}")))?,
        (None, None) => return Err(invalid("--values is required")),
    };
    let table = run_scenario_sweep(&sim, axis, &values, sim.replications)?;
    let cfg = merge(serde_json::to_value(&sim)?, json!({ "axis": axis, "values": values }));
    let mut bytes = csv_preamble("sweep", &cfg);
    write_sweep_csv(&table, &mut bytes)?;
    emit(args.out.output.as_deref(), &bytes)
}

pub fn utility(config: Option<&Path>, args: UtilityArgs) -> Result<(), CliError> {
    let layer = Layer::load(config, "utility")?;
    let (ds, input_cfg) = load_dataset(&layer, &args.input)?;
    let groups = group_list(&layer, &args.groups, &ds)?;
    let prevalence: BTreeMap<String, f64> = pick_pairs(&layer, &args.prevalence, "prevalence")?;
    let pos: BTreeMap<String, f64> = pick_pairs(&layer, &args.base_rate_pos, "base-rate-pos")?;
    let neg: BTreeMap<String, f64> = pick_pairs(&layer, &args.base_rate_neg, "base-rate-neg")?;
    let share: BTreeMap<String, f64> = pick_pairs(&layer, &args.share, "share")?;
    let overall: Option<f64> = layer.pick_opt(args.overall_prevalence, "overall_prevalence")?;

    let missing: Vec<&str> = groups
        .iter()
        .filter(|g| !prevalence.contains_key(*g))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPrevalence(missing.join(", ")).into());
    }
    let mut params = BTreeMap::new();
    for g in &groups {
        let p = prevalence[g];
        let derived = match (share.get(g), overall) {
            (Some(&s), Some(o)) => Some(GroupUtilityParams::from_population(p, o, s)?),
            _ => None,
        };
        let base_pos = pos.get(g).copied().or(derived.map(|d| d.base_rate_pos));
        let base_neg = neg.get(g).copied().or(derived.map(|d| d.base_rate_neg));
        let (Some(base_rate_pos), Some(base_rate_neg)) = (base_pos, base_neg) else {
            return Err(invalid(format!(
                "group `{g}` needs --base-rate-pos and --base-rate-neg, or --share with --overall-prevalence"
            )));
        };
        params.insert(
            g.clone(),
            GroupUtilityParams {
                prevalence: p,
                base_rate_pos,
                base_rate_neg,
            },
        );
    }

    let d = UtilityReportConfig::default();
    let report_cfg = UtilityReportConfig {
        levels: layer.pick_list(args.eps_rel.clone(), "eps_rel")?.unwrap_or(d.levels),
        r: layer.pick(args.r, "r", d.r)?,
        bootstrap_reps: layer.pick(args.reps, "reps", d.bootstrap_reps)?,
        alpha: layer.pick(args.alpha, "alpha", d.alpha)?,
        seed: layer.pick(args.seed, "seed", d.seed)?,
        resample: !layer.pick_bool(args.no_resample, "no_resample")?,
    };
    let report = group_utility_report(&ds, &groups, &params, &report_cfg)?;
    for g in &report.groups {
        for w in &g.warnings {
            eprintln!("warning: group `{}`: {w}", g.group);
        }
    }

    let threshold = if layer.pick_bool(args.select_threshold, "select_threshold")? {
        let scores: Option<Vec<f64>> = ds.records().iter().map(|r| r.score).collect();
        let scores = scores.ok_or_else(|| invalid("--select-threshold needs a score column"))?;
        let y: Vec<bool> = ds.records().iter().map(|r| r.y).collect();
        Some(select_threshold(&scores, &y, report_cfg.r)?)
    } else {
        None
    };

    let cfg = merge(
        input_cfg,
        json!({ "groups": groups, "params": params, "report": report_cfg }),
    );
    if let Some(path) = layer.pick_opt::<PathBuf>(args.csv_out.clone(), "csv_out")? {
        let mut bytes = csv_preamble("utility", &cfg);
        write_utility_csv(&report, &mut bytes)?;
        emit(Some(&path), &bytes)?;
    }
    let doc = json_document(
        "utility",
        &cfg,
        json!({ "groups": report.groups, "selected_threshold": threshold }),
    )?;
    emit(args.out.output.as_deref(), &doc)
}

use std::fs;
use std::path::Path;

use mmm_core::archive::read_archive;
use mmm_core::data::{load_dataset, Schema};
use mmm_core::diagnostics::{
    admissible_conditions, l1_fit_report, label_switch_monitor, score_correlation_summary, score_l1_error,
    score_odds_ratio_summary, tertile_rate_table, AdmissibilityRule, RateCell, RateTableConfig, SwitchMonitorConfig,
};
use mmm_core::simgen::Truth;
use mmm_core::{Error, Result};
use serde_json::{json, Map, Value};

use crate::{csv_err, ReportArgs};

type Writer = csv::Writer<fs::File>;

fn writer(path: &Path, header: &[&str]) -> Result<Writer> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    Ok(w)
}

fn row(w: &mut Writer, path: &Path, fields: Vec<String>) -> Result<()> {
    w.write_record(fields).map_err(csv_err(path))
}

fn finish(mut w: Writer, path: &Path) -> Result<()> {
    w.flush().map_err(crate::io_err(path))
}

fn epoch_label(labels: &Option<Vec<String>>, t: Option<usize>) -> String {
    match (t, labels) {
        (None, _) => String::new(),
        (Some(t), Some(l)) => l.get(t).cloned().unwrap_or_else(|| (t + 1).to_string()),
        (Some(t), None) => (t + 1).to_string(),
    }
}

/// One value per row of a single-column CSV with a header.
pub fn read_rates(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err(path))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let cell = rec.get(0).unwrap_or("");
        let v = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
            path: path.into(),
            row: i + 2,
            column: 1,
            message: format!("'{cell}' is not a rate"),
        })?;
        out.push(v);
    }
    Ok(out)
}

fn cell_fields(c: &Option<RateCell>) -> [String; 3] {
    match c {
        Some(c) => [c.median.to_string(), c.lower.to_string(), c.upper.to_string()],
        None => [String::new(), String::new(), String::new()],
    }
}

/// Writes the report tables into `a.out`:
///
/// * `marginal_l1.csv`, `bivariate_l1.csv`: posterior predictive L1 fit;
/// * `correlations.csv`, `switches.csv`;
/// * `admissibility.csv`, `rate_table.csv`, `odds_ratios.csv` on request;
/// * `summary.json`.
pub fn report(a: &ReportArgs) -> Result<()> {
    if a.quantiles.len() != 2 {
        return Err(Error::Argument("--quantiles takes two levels, e.g. 0.1,0.9".into()));
    }
    let q = (a.quantiles[0], a.quantiles[1]);
    if !(0.0..=1.0).contains(&q.0) || !(0.0..=1.0).contains(&q.1) || q.0 > q.1 {
        return Err(Error::Argument(format!("quantile levels {q:?} must be ordered within [0, 1]")));
    }
    let schema = Schema::load(&a.schema)?;
    let ds = load_dataset(&a.data, &schema)?;
    let (samples, manifest) = read_archive(&a.archive)?;
    let labels: Option<Vec<String>> = match &samples.meta.epochs {
        Some(_) => mmm_core::data::load_covariates(&a.data, &schema)?.map(|c| c.labels().to_vec()),
        None => None,
    };
    fs::create_dir_all(&a.out).map_err(crate::io_err(&a.out))?;
    let mut summary = Map::new();
    summary.insert("archive".into(), json!(a.archive.display().to_string()));
    summary.insert("draws".into(), json!(samples.draws.len()));
    summary.insert("variant".into(), json!(manifest.meta.variant));

    let fit = l1_fit_report(&samples, &ds, q)?;
    let path = a.out.join("marginal_l1.csv");
    let mut w = writer(&path, &["epoch", "variable", "l1"])?;
    for m in &fit.marginal {
        row(&mut w, &path, vec![epoch_label(&labels, m.epoch), ds.names()[m.variable].clone(), m.l1.to_string()])?;
    }
    finish(w, &path)?;
    let path = a.out.join("bivariate_l1.csv");
    let mut w = writer(&path, &["epoch", "first", "second", "l1"])?;
    for b in &fit.bivariate {
        let names = ds.names();
        row(
            &mut w,
            &path,
            vec![epoch_label(&labels, b.epoch), names[b.first].clone(), names[b.second].clone(), b.l1.to_string()],
        )?;
    }
    finish(w, &path)?;
    summary.insert("marginal_l1".into(), serde_json::to_value(fit.marginal_summary)?);
    summary.insert("bivariate_l1".into(), serde_json::to_value(fit.bivariate_summary)?);

    if samples.meta.groups > 1 {
        let corr = score_correlation_summary(&samples, a.level)?;
        let path = a.out.join("correlations.csv");
        let mut w =
            writer(&path, &["epoch", "first", "second", "mean", "sd", "lower", "upper", "interval_includes_zero"])?;
        for c in &corr {
            row(
                &mut w,
                &path,
                vec![
                    epoch_label(&labels, Some(c.epoch)),
                    (c.first + 1).to_string(),
                    (c.second + 1).to_string(),
                    c.mean.to_string(),
                    c.sd.to_string(),
                    c.lower.to_string(),
                    c.upper.to_string(),
                    c.interval_includes_zero.to_string(),
                ],
            )?;
        }
        finish(w, &path)?;
        summary.insert("correlations".into(), serde_json::to_value(&corr)?);
    }

    if samples.draws[0].kernels.is_some() {
        let sw = label_switch_monitor(&samples, SwitchMonitorConfig { pilot: a.pilot, max_switches: a.max_switches })?;
        let path = a.out.join("switches.csv");
        let mut w = writer(&path, &["group", "anchor_variable", "anchor_level", "switches", "flagged"])?;
        for s in &sw {
            row(
                &mut w,
                &path,
                vec![
                    (s.group + 1).to_string(),
                    ds.names()[s.anchor_variable].clone(),
                    (s.anchor_level + 1).to_string(),
                    s.switches.to_string(),
                    s.flagged.to_string(),
                ],
            )?;
        }
        finish(w, &path)?;
        summary.insert("label_switching".into(), serde_json::to_value(&sw)?);
    }

    if a.admissibility {
        let rule = AdmissibilityRule::new(a.c1, a.c2, a.threshold)?;
        let conds = admissible_conditions(&samples, &ds, &rule)?;
        let path = a.out.join("admissibility.csv");
        let mut w =
            writer(&path, &["variable", "level", "profile", "frequency", "posterior_probability", "admissible"])?;
        for c in &conds {
            row(
                &mut w,
                &path,
                vec![
                    ds.names()[c.variable].clone(),
                    (c.level + 1).to_string(),
                    (c.profile + 1).to_string(),
                    c.frequency.to_string(),
                    c.posterior_probability.to_string(),
                    c.admissible.to_string(),
                ],
            )?;
        }
        finish(w, &path)?;
        summary.insert("admissible_conditions".into(), json!(conds.iter().filter(|c| c.admissible).count()));
        summary.insert("rule".into(), json!({ "c1": a.c1, "c2": a.c2, "threshold": a.threshold }));
    }

    if let Some(rp) = &a.rates {
        let rates = read_rates(rp)?;
        if rates.len() != ds.n() {
            return Err(Error::Dimension(format!("{} rates for {} subjects", rates.len(), ds.n())));
        }
        let config = RateTableConfig { min_count: a.min_count, quantiles: q };
        let strata: Vec<(Option<usize>, Vec<usize>)> = match &samples.meta.epochs {
            Some(ep) => {
                let tt = ep.iter().copied().max().map_or(0, |m| m + 1);
                (0..tt).map(|t| (Some(t), (0..ds.n()).filter(|&i| ep[i] == t).collect())).collect()
            }
            None => vec![(None, (0..ds.n()).collect())],
        };
        let path = a.out.join("rate_table.csv");
        let mut w = writer(&path, &["epoch", "tertile_1", "tertile_2", "median", "lower", "upper"])?;
        let mut violations = Vec::new();
        for (t, subjects) in &strata {
            let table = tertile_rate_table(&samples, &rates, subjects, config)?;
            let e = epoch_label(&labels, *t);
            for (r, cells) in table.cells.iter().enumerate() {
                for (c, cell) in cells.iter().enumerate() {
                    let mut f = vec![e.clone(), (r + 1).to_string(), (c + 1).to_string()];
                    f.extend(cell_fields(cell));
                    row(&mut w, &path, f)?;
                }
            }
            for (r, cell) in table.rows.iter().enumerate() {
                let mut f = vec![e.clone(), (r + 1).to_string(), "all".into()];
                f.extend(cell_fields(cell));
                row(&mut w, &path, f)?;
            }
            for (c, cell) in table.columns.iter().enumerate() {
                let mut f = vec![e.clone(), "all".into(), (c + 1).to_string()];
                f.extend(cell_fields(cell));
                row(&mut w, &path, f)?;
            }
            violations.push(json!({ "epoch": e, "gradient_violations": table.gradient_violations() }));
        }
        finish(w, &path)?;
        summary.insert("rate_tables".into(), Value::Array(violations));
    }

    if let Some(pair) = &a.odds {
        let (g, v) = match pair[..] {
            [g, v] => (g, v),
            _ => return Err(Error::Argument("--odds takes two group ids, e.g. 2,1".into())),
        };
        if g == 0 || v == 0 {
            return Err(Error::Argument("--odds takes 1-based group ids".into()));
        }
        let ors = score_odds_ratio_summary(&samples, g - 1, v - 1, q)?;
        let path = a.out.join("odds_ratios.csv");
        let mut w = writer(&path, &["epoch", "mean", "sd", "median", "lower", "upper"])?;
        for o in &ors {
            row(
                &mut w,
                &path,
                vec![
                    epoch_label(&labels, Some(o.epoch)),
                    o.mean.to_string(),
                    o.sd.to_string(),
                    o.median.to_string(),
                    o.lower.to_string(),
                    o.upper.to_string(),
                ],
            )?;
        }
        finish(w, &path)?;
        summary.insert("odds_ratios".into(), serde_json::to_value(&ors)?);
    }

    if let Some(tp) = &a.truth {
        let truth = Truth::load(tp)?;
        let est = samples.lambda_mean()?;
        match truth.lambda() {
            Some(t) if t.len() == est.len() => {
                summary.insert("score_l1_error".into(), json!(score_l1_error(&est, &t, samples.meta.groups)?));
            }
            Some(_) => return Err(Error::Dimension("truth does not match the chain".into())),
            None => {
                summary.insert("score_l1_error".into(), Value::Null);
            }
        }
    }

    let path = a.out.join("summary.json");
    let text = serde_json::to_string_pretty(&Value::Object(summary))?;
    fs::write(&path, text + "\n").map_err(crate::io_err(&path))?;
    println!(
        "mean marginal L1 {:.4} over {} variables; tables in {}",
        fit.marginal_summary.mean,
        ds.p(),
        a.out.display()
    );
    Ok(())
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sailprice::analysis::{
    correlate_features, correlations_csv, fit_regional, hk_counterfactual, regional_csv, column_values,
};
use sailprice::boosting::trace_csv;
use sailprice::data::{Hull, Region, RegionScheme, SailboatRecord, TargetVector};
use sailprice::evaluation::{
    comparison_markdown, fit_model, make_split, metrics_csv, run_swap, swap_csv, FittedModel, SWAP_GAP_WARNING,
};
use sailprice::ingest::{generate_synthetic, load_csv, write_csv, SyntheticSpec};
use sailprice::kv::KeyValues;
use sailprice::metrics::EvalReport;
use sailprice::plots::{write_svg, FigureKind, FigureSpec, Series};

use crate::config::ALL_FAMILIES;
use crate::{CliError, RunConfig};

/// Rows in the default synthetic market.
pub const DEFAULT_SYNTH_ROWS: usize = 4000;

fn output_dir(config: &RunConfig) -> Result<&Path, CliError> {
    let dir = config.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn load(config: &RunConfig) -> Result<Vec<SailboatRecord>, CliError> {
    Ok(load_csv(config.require_input()?)?.0)
}

pub fn cmd_clean(config: &RunConfig) -> Result<(), CliError> {
    let (records, report) = load_csv(config.require_input()?)?;
    let dir = output_dir(config)?;
    let mut csv = Vec::new();
    write_csv(&records, &mut csv)?;
    write(dir, "cleaned.csv", &String::from_utf8_lossy(&csv))?;
    let lines = format!(
        "rows_in={}\ndropped_missing_region={}\ndropped_missing_technical={}\ndropped_malformed={}\nrows_out={}\n",
        report.rows_in,
        report.dropped_missing_region,
        report.dropped_missing_technical,
        report.dropped_malformed,
        report.rows_out
    );
    write(dir, "cleaning_report.txt", &lines)?;
    print!("{lines}");
    Ok(())
}

/// With `--input`, the file is a key=value synthetic spec applied over the
/// default market; the generator seed is always `seed + 2`.
pub fn cmd_synth(config: &RunConfig) -> Result<(), CliError> {
    let mut spec = SyntheticSpec::acceptance(DEFAULT_SYNTH_ROWS, config.synth_seed())?;
    if let Some(path) = &config.input {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let kv = KeyValues::parse(&text)?;
        if kv.get("seed").is_some() {
            return Err(CliError::Usage("synthetic specs take their seed from --seed".into()));
        }
        spec = spec.apply_kv(&kv)?;
    }
    if spec.n_rows == 0 {
        return Err(CliError::Data("n_rows must be positive".into()));
    }
    let records = generate_synthetic(&spec)?;
    let dir = output_dir(config)?;
    let mut csv = Vec::new();
    write_csv(&records, &mut csv)?;
    let path = write(dir, "synthetic.csv", &String::from_utf8_lossy(&csv))?;
    println!("wrote {} rows to {}", records.len(), path.display());
    Ok(())
}

fn residual_figure(dir: &Path, family: &str, actual: &TargetVector, predicted: &TargetVector) -> Result<(), CliError> {
    let points = predicted
        .values
        .iter()
        .zip(&actual.values)
        .map(|(p, a)| (*p, a - p))
        .collect();
    write_svg(&FigureSpec {
        kind: FigureKind::Residual,
        title: format!("{family}: test residuals"),
        x_label: "predicted price (USD)".into(),
        y_label: "actual - predicted (USD)".into(),
        series: vec![Series::Points {
            name: "test".into(),
            points,
        }],
        output_path: dir.join(format!("residuals_{family}.svg")),
    })?;
    Ok(())
}

/// Fits on half A of the seeded split and evaluates on both halves.
pub fn cmd_fit(config: &RunConfig) -> Result<(), CliError> {
    let records = load(config)?;
    let families = config.families_or(&["ols"])?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let plan = make_split(&ids, config.split_seed())?;
    let (train, test) = plan.partition(&records)?;
    let dir = output_dir(config)?;
    for family in &families {
        let spec = config.spec_for(family);
        let name = spec.name();
        let outcome = fit_model(&spec, &train)?;
        let mut reports = Vec::new();
        for (split, rows) in [("train", &train), ("test", &test)] {
            let actual = TargetVector::from_records(rows);
            let predicted = outcome.model.predict(rows)?;
            reports.push(EvalReport::evaluate(name, split, &actual.values, &predicted.values)?);
            if split == "test" {
                residual_figure(dir, name, &actual, &predicted)?;
            }
        }
        write(dir, &format!("model_{name}.txt"), &outcome.model.to_text())?;
        write(dir, &format!("metrics_{name}.csv"), &metrics_csv(&reports))?;
        write(dir, &format!("loss_trace_{name}.csv"), &trace_csv(&outcome.loss_trace))?;
        let test = &reports[1];
        println!("{name}: test n={} mse={:.6e} mae={:.2}", test.n, test.mse, test.mae);
    }
    Ok(())
}

/// Every family on the same split, plus the swap (train on B, test on A).
pub fn cmd_compare(config: &RunConfig) -> Result<(), CliError> {
    let records = load(config)?;
    let families = config.families_or(&ALL_FAMILIES)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let plan = make_split(&ids, config.split_seed())?;
    let mut swaps = Vec::new();
    for family in &families {
        swaps.push(run_swap(&records, &config.spec_for(family), &plan)?);
    }
    let forward: Vec<EvalReport> = swaps.iter().map(|s| s.forward.clone()).collect();
    let dir = output_dir(config)?;
    write(dir, "comparison.csv", &metrics_csv(&forward))?;
    write(dir, "swap.csv", &swap_csv(&swaps))?;
    let mut md = String::from("# Model comparison\n\nTrained on half A, tested on half B of the seeded split.\n\n");
    md.push_str(&comparison_markdown(&forward, &swaps));
    write(dir, "comparison.md", &md)?;
    for s in &swaps {
        println!(
            "{}: mse={:.6e} mae={:.2} swap gaps mse={:.2}% mae={:.2}%",
            s.forward.model_name,
            s.forward.mse,
            s.forward.mae,
            100.0 * s.relative_mse_gap,
            100.0 * s.relative_mae_gap
        );
        if s.flagged() {
            eprintln!(
                "warning: {} swap gap exceeds {:.0}%",
                s.forward.model_name,
                100.0 * SWAP_GAP_WARNING
            );
        }
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n.max(1) as f64
}

pub fn cmd_report(config: &RunConfig) -> Result<(), CliError> {
    let records = load(config)?;
    let scheme = config.regions.unwrap_or(RegionScheme::FourRegionHK);
    let family = match config.families_or(&["ols"])?.as_slice() {
        [f] if f.is_linear() => f.clone(),
        [f] => {
            return Err(CliError::Usage(format!(
                "report needs a linear model family, not {}",
                f.name()
            )))
        }
        _ => return Err(CliError::Usage("report takes a single model family".into())),
    };
    let has_hk = records.iter().any(|r| r.region == Region::HongKong);
    match scheme {
        RegionScheme::FourRegionHK if !has_hk => {
            return Err(CliError::Data(
                "four-region analysis requested but the data has no hong_kong listings; use --regions three".into(),
            ))
        }
        RegionScheme::ThreeRegion if has_hk => {
            return Err(CliError::Data(
                "the data has hong_kong listings, which the three-region scheme cannot encode; use --regions four"
                    .into(),
            ))
        }
        _ => {}
    }
    let dir = output_dir(config)?;
    let prices: Vec<f64> = records.iter().map(|r| r.listing_price).collect();
    let mut md = String::from("# Sailboat listing prices\n\n");
    let n_cat = records.iter().filter(|r| r.hull == Hull::Catamaran).count();
    let _ = writeln!(
        md,
        "{} listings ({} monohull, {} catamaran). Mean asking price {:.0} USD.\n",
        records.len(),
        records.len() - n_cat,
        n_cat,
        mean(prices.iter().copied())
    );

    // correlations
    let correlations = correlate_features(&records)?;
    write(dir, "correlations.csv", &correlations_csv(&correlations))?;
    md.push_str("## What moves the price\n\nCorrelation of each feature with asking price, and the slope of a one-variable trend line.\n\n| feature | r | trend slope (USD per unit) |\n|---|---:|---:|\n");
    for c in &correlations {
        let _ = writeln!(md, "| {} | {:.3} | {:.2} |", c.feature, c.pearson_r, c.trend_slope);
    }
    md.push('\n');
    for c in &correlations {
        let xs = column_values(&records, &c.feature)?;
        let name = format!("scatter_{}.svg", c.feature);
        write_svg(&FigureSpec {
            kind: FigureKind::ScatterTrend,
            title: format!("Price vs {}", c.feature),
            x_label: c.feature.clone(),
            y_label: "listing price (USD)".into(),
            series: vec![Series::Points {
                name: "listings".into(),
                points: xs.into_iter().zip(prices.iter().copied()).collect(),
            }],
            output_path: dir.join(&name),
        })?;
        let _ = writeln!(md, "![{}]({name})", c.feature);
    }

    // hull
    let hull_means: Vec<(String, f64)> = [Hull::Monohull, Hull::Catamaran]
        .into_iter()
        .filter(|h| records.iter().any(|r| r.hull == *h))
        .map(|h| {
            let m = mean(records.iter().filter(|r| r.hull == h).map(|r| r.listing_price));
            (h.name().to_string(), m)
        })
        .collect();
    write_svg(&FigureSpec {
        kind: FigureKind::Bar,
        title: "Mean price by hull type".into(),
        x_label: "hull".into(),
        y_label: "mean listing price (USD)".into(),
        series: vec![Series::Categories {
            name: "mean price".into(),
            values: hull_means.clone(),
        }],
        output_path: dir.join("hull_mean_price.svg"),
    })?;
    md.push_str("\n## Hull type\n\n| hull | mean price (USD) |\n|---|---:|\n");
    for (h, m) in &hull_means {
        let _ = writeln!(md, "| {h} | {m:.0} |");
    }
    md.push_str("\n![hull](hull_mean_price.svg)\n");

    // regions
    let effects = fit_regional(&records, &family, scheme, Region::Caribbean)?;
    write(dir, "regional_effects.csv", &regional_csv(&effects))?;
    write_svg(&FigureSpec {
        kind: FigureKind::Bar,
        title: "Regional price effect relative to the Caribbean".into(),
        x_label: "region".into(),
        y_label: "effect (USD)".into(),
        series: vec![Series::Categories {
            name: "effect".into(),
            values: effects.effects.iter().map(|(r, v)| (r.name().to_string(), *v)).collect(),
        }],
        output_path: dir.join("regional_effects.svg"),
    })?;
    let _ = writeln!(
        md,
        "\n## Regional effects\n\nPrice shift for an otherwise identical boat, from a {} fit on the technical features plus region indicators (base: {}).\n\n| region | effect (USD) |\n|---|---:|",
        family.name(),
        effects.base
    );
    for (r, v) in &effects.effects {
        let _ = writeln!(md, "| {r} | {v:.2} |");
    }
    md.push_str("\n![regions](regional_effects.svg)\n");

    // counterfactual
    if scheme == RegionScheme::FourRegionHK {
        let model = FittedModel::Linear(effects.model.clone());
        let cf = hk_counterfactual(&model, &records, config.sample_size, config.sampling_seed())?;
        write(dir, "counterfactual.csv", &cf.to_csv())?;
        let _ = writeln!(
            md,
            "\n## Listing in Hong Kong\n\n{} listings from other regions, priced as listed and as if listed in Hong Kong.\n\n| hull | boats | mean as listed (USD) | mean in Hong Kong (USD) | mean change (USD) |\n|---|---:|---:|---:|---:|",
            cf.rows.len()
        );
        let summaries = cf.summaries();
        for s in &summaries {
            let _ = writeln!(
                md,
                "| {} | {} | {:.0} | {:.0} | {:.2} |",
                s.hull, s.count, s.mean_original, s.mean_hk, s.mean_delta
            );
        }
        md.push('\n');
        for s in &summaries {
            let rows = cf.by_hull(s.hull);
            let name = format!("counterfactual_{}.svg", s.hull.name());
            let series = |label: &str, f: fn(&sailprice::analysis::CounterfactualRow) -> f64| Series::Points {
                name: label.into(),
                points: rows.iter().enumerate().map(|(i, r)| (i as f64, f(r))).collect(),
            };
            write_svg(&FigureSpec {
                kind: FigureKind::GroupedComparison,
                title: format!("{}: predicted price as listed vs in Hong Kong", s.hull),
                x_label: "sampled boat".into(),
                y_label: "predicted price (USD)".into(),
                series: vec![series("as listed", |r| r.pred_original), series("hong kong", |r| r.pred_hk)],
                output_path: dir.join(&name),
            })?;
            let _ = writeln!(md, "![{}]({name})", s.hull);
        }
    }
    write(dir, "report.md", &md)?;
    println!("wrote report to {}", dir.join("report.md").display());
    Ok(())
}

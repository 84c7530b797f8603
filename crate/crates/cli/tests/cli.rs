use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "id,make_variant,year,length_ft,beam_ft,draft_ft,displacement_lb,sail_area_sqft,waterline_ft,hull,region,gdp,gdp_per_capita,listing_price";

fn sailprice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sailprice")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn synth(dir: &Path, rows: usize) -> String {
    let spec = dir.join("spec.txt");
    fs::write(&spec, format!("n_rows = {rows}\n")).unwrap();
    let d = dir.to_str().unwrap();
    let out = sailprice(&["synth", "--input", spec.to_str().unwrap(), "--output-dir", d, "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("synthetic.csv").to_str().unwrap().to_string()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&sailprice(&["--help"])), 0);
    assert_eq!(code(&sailprice(&[])), 64);
    assert_eq!(code(&sailprice(&["fit", "--bogus"])), 64);
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), 80);
    let out = sailprice(&["fit", "--input", &input, "--model", "lasso", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("lasso"));
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sailprice(&["clean", "--input", "/nonexistent/boats.csv", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn clean_counts_and_empty_result() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("raw.csv");
    let good = "a,x,2010,40,13,6,20000,800,34,monohull,europe,,,250000";
    let body = [
        HEADER,
        good,
        "b,x,2010,40,13,6,20000,800,34,monohull,,,,250000",
        "c,x,2010,,13,6,20000,800,34,monohull,usa,,,250000",
        "d,x,2010,forty,13,6,20000,800,34,monohull,usa,,,250000",
    ]
    .join("\n");
    fs::write(&csv, body).unwrap();
    let d = dir.path().to_str().unwrap();
    let out = sailprice(&["clean", "--input", csv.to_str().unwrap(), "--output-dir", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("cleaning_report.txt")).unwrap();
    for line in ["rows_in=4", "dropped_missing_region=1", "dropped_missing_technical=1", "dropped_malformed=1", "rows_out=1"] {
        assert!(report.contains(line), "{report}");
    }

    fs::write(&csv, format!("{HEADER}\n{}", "b,x,2010,40,13,6,20000,800,34,monohull,,,,250000")).unwrap();
    let out = sailprice(&["clean", "--input", csv.to_str().unwrap(), "--output-dir", d]);
    assert_eq!(code(&out), 2);
}

#[test]
fn fit_writes_artifacts_with_monotone_boosting_trace() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), 300);
    let d = dir.path().to_str().unwrap();
    let out = sailprice(&["fit", "--input", &input, "--model", "gbr", "--output-dir", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model_gbr.txt", "metrics_gbr.csv", "loss_trace_gbr.csv", "residuals_gbr.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let trace = fs::read_to_string(dir.path().join("loss_trace_gbr.csv")).unwrap();
    let losses: Vec<f64> = trace.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(losses.len() > 1);
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));
    let metrics = fs::read_to_string(dir.path().join("metrics_gbr.csv")).unwrap();
    assert!(metrics.starts_with("model,split,n,mse,mae\n"));
    assert_eq!(metrics.lines().count(), 3);
}

#[test]
fn report_four_regions_needs_hong_kong() {
    let dir = tempfile::tempdir().unwrap();
    let full = fs::read_to_string(synth(dir.path(), 300)).unwrap();
    let csv = dir.path().join("three.csv");
    let rows: Vec<&str> = full.lines().filter(|l| !l.contains(",hong_kong,")).collect();
    fs::write(&csv, rows.join("\n")).unwrap();
    let d = dir.path().to_str().unwrap();
    let out = sailprice(&["report", "--input", csv.to_str().unwrap(), "--output-dir", d]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let out = sailprice(&["report", "--input", csv.to_str().unwrap(), "--output-dir", d, "--regions", "three"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("report.md").exists());
    assert!(!dir.path().join("counterfactual.csv").exists());
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), 120);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("input = {input}\nmodels =\n")).unwrap();
    let d = dir.path().to_str().unwrap();
    let out = sailprice(&["compare", "--config", cfg.to_str().unwrap(), "--output-dir", d]);
    assert_eq!(code(&out), 64);
    fs::write(&cfg, format!("input = {input}\nmodels = ols, gd\nfavourite_colour = red\n")).unwrap();
    let out = sailprice(&["compare", "--config", cfg.to_str().unwrap(), "--output-dir", d]);
    assert_eq!(code(&out), 64);
    fs::write(&cfg, format!("input = {input}\nmodels = ols, gd\n")).unwrap();
    let out = sailprice(&["compare", "--config", cfg.to_str().unwrap(), "--output-dir", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let swap = fs::read_to_string(dir.path().join("swap.csv")).unwrap();
    assert!(swap.contains("ols") && swap.contains("gd") && !swap.contains("gbr"));
}

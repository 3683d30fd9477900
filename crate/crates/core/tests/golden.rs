//! Frozen reference runs. Regenerate with `UPDATE_GOLDEN=1 cargo test --test golden`.

use std::path::PathBuf;

use metricforge::config::RunConfig;
use metricforge::par::ExecMode;
use metricforge::pipeline;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted from its golden copy");
}

#[test]
fn separable_reference_run() {
    let cfg = RunConfig::from_preset("separable").unwrap();
    let res = pipeline::run_pipeline(&cfg, ExecMode::default()).unwrap();
    check("separable_train_report.csv", &res.train_report.to_csv());
    check("separable_metrics.csv", &res.summary_csv());
}

#[test]
fn hard_reference_run() {
    let cfg = RunConfig::from_preset("hard").unwrap();
    let res = pipeline::run_pipeline(&cfg, ExecMode::default()).unwrap();
    check("hard_metrics.csv", &res.summary_csv());
}

//! The simulate command: scenario files in, plot-ready CSV plus a JSON
//! manifest out.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use varsig::{
    run_detection_accuracy, run_qq, AccuracyReport, ChangepointPlan, QqReport, Scenario,
};

use crate::report::Failure;
use crate::{SimulateArgs, StudyArg};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Study {
    Qq,
    Accuracy,
}

/// Named scenario sets shipped inside the binary.
const BUNDLES: &[(&str, Study, &[&str])] = &[
    (
        "fig4a",
        Study::Qq,
        &[
            include_str!("../scenarios/fig4a_h10.scn"),
            include_str!("../scenarios/fig4a_h20.scn"),
        ],
    ),
    (
        "table1",
        Study::Accuracy,
        &[include_str!("../scenarios/table1.scn")],
    ),
    (
        "fig8",
        Study::Qq,
        &[
            include_str!("../scenarios/fig8_n50.scn"),
            include_str!("../scenarios/fig8_n100.scn"),
        ],
    ),
];

fn resolve_runs(args: &SimulateArgs) -> Result<Vec<(Scenario, Study)>, Failure> {
    if let Some((_, study, texts)) = BUNDLES.iter().find(|(name, ..)| *name == args.scenario) {
        return texts
            .iter()
            .map(|text| Ok((Scenario::parse(text)?, *study)))
            .collect();
    }
    let path = Path::new(&args.scenario);
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::input(format!(
            "'{}' is not a bundled scenario and cannot be read as a file: {e}",
            args.scenario
        ))
    })?;
    let study = match args.study {
        StudyArg::Qq => Study::Qq,
        StudyArg::Accuracy => Study::Accuracy,
    };
    Ok(vec![(Scenario::parse(&text)?, study)])
}

#[derive(Serialize)]
struct QqSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    replicates: usize,
    detected: usize,
    tested: usize,
    skipped_no_detection: usize,
    skipped_window: usize,
    failed_inference: usize,
    ks_stat: f64,
    ks_p_value: f64,
    naive_ks_stat: f64,
    naive_ks_p_value: f64,
}

impl From<&QqReport> for QqSummary {
    fn from(r: &QqReport) -> Self {
        QqSummary {
            lambda: r.lambda,
            replicates: r.replicates,
            detected: r.detected,
            tested: r.tested,
            skipped_no_detection: r.skipped_no_detection,
            skipped_window: r.skipped_window,
            failed_inference: r.failed_inference,
            ks_stat: r.ks_stat,
            ks_p_value: r.ks_p_value,
            naive_ks_stat: r.naive_ks_stat,
            naive_ks_p_value: r.naive_ks_p_value,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: u32,
    command: &'static str,
    study: &'static str,
    scenario: &'a Scenario,
    artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    qq: Option<QqSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<&'a AccuracyReport>,
}

fn write_artifact(path: &PathBuf, content: String) -> Result<(), Failure> {
    std::fs::write(path, content)
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
    println!("{}", path.display());
    Ok(())
}

fn qq_study(scenario: &Scenario, out_dir: &Path) -> Result<(), Failure> {
    let report = run_qq(scenario)?;
    let mut csv = String::from("rank,p_value,expected,naive_p_value\n");
    for (i, (row, naive)) in report.rows.iter().zip(&report.naive_rows).enumerate() {
        writeln!(
            csv,
            "{},{},{},{}",
            i + 1,
            row.p_value,
            row.expected,
            naive.p_value
        )
        .expect("writing to a string cannot fail");
    }
    let csv_name = format!("{}.qq.csv", scenario.name);
    write_artifact(&out_dir.join(&csv_name), csv)?;
    emit_manifest(
        scenario,
        out_dir,
        Manifest {
            schema: 1,
            command: "simulate",
            study: "qq",
            scenario,
            artifacts: vec![csv_name],
            qq: Some(QqSummary::from(&report)),
            accuracy: None,
        },
    )
}

fn accuracy_study(scenario: &Scenario, radius: usize, out_dir: &Path) -> Result<(), Failure> {
    let report = run_detection_accuracy(scenario, radius)?;
    let locations: Vec<String> = match &scenario.changepoints {
        ChangepointPlan::Fixed(cps) => cps.iter().map(ToString::to_string).collect(),
        // Random truths move between replicates; only the index is stable.
        ChangepointPlan::Random(k) => vec![String::new(); *k],
    };
    let mut csv = String::from("stat,index,location,hit_rate\n");
    for row in &report.rows {
        let stat = match row.stat {
            varsig::StatKind::Cusum => "cusum",
            varsig::StatKind::Lr => "lr",
        };
        for (j, rate) in row.hit_rates.iter().enumerate() {
            writeln!(csv, "{stat},{j},{},{rate}", locations[j])
                .expect("writing to a string cannot fail");
        }
    }
    let csv_name = format!("{}.accuracy.csv", scenario.name);
    write_artifact(&out_dir.join(&csv_name), csv)?;
    emit_manifest(
        scenario,
        out_dir,
        Manifest {
            schema: 1,
            command: "simulate",
            study: "accuracy",
            scenario,
            artifacts: vec![csv_name],
            qq: None,
            accuracy: Some(&report),
        },
    )
}

fn emit_manifest(scenario: &Scenario, out_dir: &Path, manifest: Manifest) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Failure::config(format!("cannot serialize manifest: {e}")))?;
    text.push('\n');
    write_artifact(&out_dir.join(format!("{}.manifest.json", scenario.name)), text)
}

pub fn run(args: &SimulateArgs) -> Result<(), Failure> {
    let runs = resolve_runs(args)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| {
        Failure::input(format!("cannot create {}: {e}", args.out_dir.display()))
    })?;
    for (scenario, study) in &runs {
        match study {
            Study::Qq => qq_study(scenario, &args.out_dir)?,
            Study::Accuracy => accuracy_study(scenario, args.radius, &args.out_dir)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse_and_validate() {
        for (bundle, _, texts) in BUNDLES {
            for text in *texts {
                let scenario = Scenario::parse(text)
                    .unwrap_or_else(|e| panic!("bundle {bundle} is broken: {e}"));
                assert!(
                    scenario.name.starts_with(bundle),
                    "scenario '{}' does not match its bundle '{bundle}'",
                    scenario.name
                );
            }
        }
    }
}

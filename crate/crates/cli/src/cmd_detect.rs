//! The detect command and the detection plumbing shared with test.

use serde::Serialize;
use varsig::{Algorithm, DetectionResult, StopRule, TimeSeries};

use crate::report::{emit_json, Failure};
use crate::{input, DetectArgs, Method};

pub fn build_series(args: &DetectArgs) -> Result<(TimeSeries, &'static str), Failure> {
    let values = input::read_series(&args.input, args.column.as_deref())?;
    if args.center {
        Ok((TimeSeries::with_sample_mean(values)?, "sample-mean"))
    } else {
        let mu = args.mu.expect("the centering group requires --mu or --center");
        Ok((TimeSeries::new(values, mu)?, "given"))
    }
}

pub fn stop_rule(args: &DetectArgs) -> Result<StopRule, Failure> {
    let stop = match (args.lambda, args.count, args.penalty) {
        (Some(l), None, None) => StopRule::Threshold(l),
        (None, Some(k), None) => StopRule::Count(k),
        (None, None, Some(b)) => StopRule::Penalty(b),
        _ => unreachable!("the stop group admits exactly one flag"),
    };
    let is_penalty = matches!(stop, StopRule::Penalty(_));
    if (args.method == Method::LrPelt) != is_penalty {
        return Err(Failure::config(format!(
            "--penalty and --method lr-pelt go together; {} stops with --lambda or --count",
            args.method.name()
        )));
    }
    Ok(stop)
}

pub fn run_detector(
    series: &TimeSeries,
    method: Method,
    stop: StopRule,
    wbs_intervals: usize,
    seed: u64,
) -> varsig::Result<DetectionResult> {
    match method.algorithm() {
        Algorithm::Binseg => varsig::binary_segmentation(series, method.stat(), stop),
        Algorithm::Wbs => {
            varsig::wild_binary_segmentation(series, method.stat(), stop, wbs_intervals, seed)
        }
        Algorithm::Pelt => {
            let StopRule::Penalty(beta) = stop else {
                unreachable!("validated in stop_rule");
            };
            varsig::pelt(series, beta)
        }
    }
}

/// Intervals drawn by WBS matter to the output; echo the count only then.
pub fn wbs_echo(method: Method, wbs_intervals: usize) -> Option<usize> {
    (method.algorithm() == Algorithm::Wbs).then_some(wbs_intervals)
}

#[derive(Serialize)]
struct DetectOutput<'a> {
    schema: u32,
    command: &'static str,
    input: String,
    series_length: usize,
    mu: f64,
    mu_source: &'static str,
    method: &'static str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    wbs_intervals: Option<usize>,
    result: &'a DetectionResult,
}

pub fn run(args: &DetectArgs) -> Result<(), Failure> {
    let (series, mu_source) = build_series(args)?;
    let stop = stop_rule(args)?;
    let result = run_detector(&series, args.method, stop, args.wbs_intervals, args.seed)?;
    emit_json(
        &DetectOutput {
            schema: 1,
            command: "detect",
            input: args.input.display().to_string(),
            series_length: series.len(),
            mu: series.mu(),
            mu_source,
            method: args.method.name(),
            seed: args.seed,
            wbs_intervals: wbs_echo(args.method, args.wbs_intervals),
            result: &result,
        },
        args.output.as_deref(),
    )
}

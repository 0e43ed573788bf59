use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use trackfuse_core::batch::{
    summarize, sweep, with_random_failure_rates, ScenarioResult, SweepSummary,
};
use trackfuse_core::fusion::FusionOptions;
use trackfuse_core::hmm::{HmmParams, ObservableLayout, StateIndex};
use trackfuse_core::report::{run_trace, RunSummary};
use trackfuse_core::simulator::{evaluate_trace, simulate, Evaluation, ScenarioConfig};
use trackfuse_core::trace::TraceFile;
use trackfuse_core::Execution;

use crate::args::{EvaluateArgs, InspectArgs, ParamsArgs, RunArgs, SimulateArgs, SweepArgs};
use crate::report_csv;
use crate::CliError;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(CliError::io(path))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(CliError::io(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(CliError::json(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(CliError::json(path))?;
    w.write_all(b"\n").map_err(CliError::io(path))?;
    w.flush().map_err(CliError::io(path))
}

pub fn read_trace(path: &Path) -> Result<TraceFile, CliError> {
    TraceFile::read(open(path)?).map_err(|source| CliError::Trace {
        path: path.to_owned(),
        source,
    })
}

pub fn read_params(path: &Path) -> Result<HmmParams, CliError> {
    let params: HmmParams = read_json(path)?;
    params.validate()?;
    Ok(params)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub frames: usize,
    pub failure_episodes: usize,
    pub detector_tp: usize,
    pub detector_fp: usize,
    pub learning_invocations: usize,
}

pub fn simulate_cmd(args: &SimulateArgs) -> Result<SimulateSummary, CliError> {
    let mut config: ScenarioConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(frames) = args.frames {
        config.frames = frames;
    }
    config.engine = args.engine.apply(&config.engine);
    let sim = simulate(&config)?;
    let mut w = create(&args.out)?;
    sim.trace.write(&mut w).map_err(|source| CliError::Trace {
        path: args.out.clone(),
        source,
    })?;
    w.flush().map_err(CliError::io(&args.out))?;
    Ok(SimulateSummary {
        frames: sim.trace.len(),
        failure_episodes: sim.failure_episodes,
        detector_tp: sim.true_positives(),
        detector_fp: sim.false_positives(),
        learning_invocations: sim.learning_invocations,
    })
}

pub fn run_cmd(args: &RunArgs) -> Result<RunSummary, CliError> {
    let trace = read_trace(&args.trace)?;
    if trace.is_empty() {
        return Err(CliError::Invalid(format!(
            "{}: trace has no frames",
            args.trace.display()
        )));
    }
    let params = args.params.as_deref().map(read_params).transpose()?;
    let options = args.engine.apply(&FusionOptions::default());
    let report = run_trace(&trace, &options, params)?;
    let space = report.summary.final_params.state_space();
    let mut w = create(&args.out)?;
    report_csv::write(&mut w, &space, &report.outputs).map_err(CliError::csv(&args.out))?;
    w.flush().map_err(CliError::io(&args.out))?;
    if let Some(p) = &args.summary {
        write_json(p, &report.summary)?;
    }
    if let Some(p) = &args.params_out {
        write_json(p, &report.summary.final_params)?;
    }
    Ok(report.summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub frames: usize,
    pub threshold: f64,
    pub recall: f64,
    pub mean_iou: f64,
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<Metrics, CliError> {
    let boxes = report_csv::read_boxes(open(&args.report)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", args.report.display())))?;
    let trace = read_trace(&args.trace)?;
    let truth = trace.ground_truth().ok_or_else(|| {
        CliError::Invalid(format!(
            "{}: some frames lack gt_bbox",
            args.trace.display()
        ))
    })?;
    let Evaluation {
        recall,
        mean_iou,
        overlaps,
    } = evaluate_trace(&boxes, &truth, args.threshold)?;
    if let Some(p) = &args.overlaps {
        let mut w = csv::Writer::from_writer(create(p)?);
        w.write_record(["frame", "iou"]).map_err(CliError::csv(p))?;
        for (t, o) in overlaps.iter().enumerate() {
            w.write_record([t.to_string(), report_csv::num(*o)])
                .map_err(CliError::csv(p))?;
        }
        w.flush().map_err(CliError::io(p))?;
    }
    Ok(Metrics {
        frames: boxes.len(),
        threshold: args.threshold,
        recall,
        mean_iou,
    })
}

/// Readable dump of a parameter set: the transition matrix with state
/// labels, then every state's shapes.
pub fn render_params(params: &HmmParams) -> String {
    let space = params.state_space();
    let label = |i: usize| report_csv::state_label(&space, StateIndex(i));
    let n = params.num_states();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} trackers, {n} states, {} observables",
        space.trackers(),
        params.dims()
    );
    let _ = writeln!(s, "\ntransitions (row = from, C = correct, F = failed):");
    let width = space.trackers().max(8) + 1;
    let _ = write!(s, "{:>w$}", "", w = space.trackers() + 4);
    for j in 0..n {
        let _ = write!(s, "{:>width$}", label(j));
    }
    s.push('\n');
    for i in 0..n {
        let _ = write!(s, "{:>2} {:<w$} ", i, label(i), w = space.trackers());
        for &a in params.transitions.row(i) {
            let _ = write!(s, "{:>width$.6}", a);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "\nbeta shapes (p, q) per observable:");
    for i in 0..n {
        let _ = write!(s, "{:>2} {:<w$} ", i, label(i), w = space.trackers());
        let cells: Vec<String> = params
            .emissions
            .state_shapes(i)
            .iter()
            .map(|b| format!("({:.4}, {:.4})", b.p(), b.q()))
            .collect();
        let _ = writeln!(s, "{}", cells.join(" "));
    }
    s
}

pub fn inspect_cmd(args: &InspectArgs) -> Result<String, CliError> {
    Ok(render_params(&read_params(&args.params)?))
}

pub fn params_cmd(args: &ParamsArgs) -> Result<HmmParams, CliError> {
    let layout = ObservableLayout {
        arities: vec![args.arity; args.trackers],
        shared: args.shared,
    };
    let params = HmmParams::initial(&layout)?;
    write_json(&args.out, &params)?;
    Ok(params)
}

pub fn sweep_cmd(args: &SweepArgs) -> Result<(Vec<ScenarioResult>, SweepSummary), CliError> {
    if !(0.0 <= args.rate_min && args.rate_min < args.rate_max && args.rate_max <= 1.0) {
        return Err(CliError::Invalid(format!(
            "failure rate range [{}, {}) is empty or outside [0,1]",
            args.rate_min, args.rate_max
        )));
    }
    let mut base = ScenarioConfig {
        frames: args.frames,
        ..ScenarioConfig::default()
    };
    base.engine = args.engine.apply(&base.engine);
    let configs: Vec<ScenarioConfig> = (args.first_seed..args.first_seed + args.seeds)
        .map(|seed| with_random_failure_rates(&base, seed, args.rate_min..args.rate_max))
        .collect();
    let results = sweep(&configs, Execution::default())?;
    if let Some(p) = &args.out {
        let mut w = csv::Writer::from_writer(create(p)?);
        let channels = base.channels.len();
        let mut header = vec!["seed".to_string(), "engine".to_string()];
        header.extend((0..channels).map(|c| format!("channel_{c}")));
        header.push("learning_invocations".into());
        w.write_record(&header).map_err(CliError::csv(p))?;
        for r in &results {
            let mut row = vec![r.seed.to_string(), report_csv::num(r.engine_recall)];
            row.extend(r.channel_recalls.iter().copied().map(report_csv::num));
            row.push(r.learning_invocations.to_string());
            w.write_record(&row).map_err(CliError::csv(p))?;
        }
        w.flush().map_err(CliError::io(p))?;
    }
    let summary = summarize(&results);
    Ok((results, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_render_diagonal_first() {
        let params = HmmParams::initial(&ObservableLayout::uniform(2, 1)).unwrap();
        let text = render_params(&params);
        assert!(text.starts_with("2 trackers, 4 states, 2 observables"));
        let row0 = text
            .lines()
            .find(|l| l.trim_start().starts_with("0 CC "))
            .unwrap();
        let values: Vec<f64> = row0
            .split_whitespace()
            .skip(2)
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(values.len(), 4);
        assert!(values[0] > values[1] && values[0] > values[2] && values[0] > values[3]);
    }
}

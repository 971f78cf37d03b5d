//! Command implementations behind the `twouta` binary.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use twouta_core::algebra::Tolerance;
use twouta_core::elicitation::{run, ElicitationConfig};
use twouta_core::plot::{plot_data, PlotData};
use twouta_core::report::RunReport;
use twouta_core::scenario::{generate, GeneratorParams, Scenario};
use twouta_core::{AnswerSource, Error, Rational, ReplayTranscript, Transcript, UtaModel};

/// Failure of a command before any elicitation result exists.
#[derive(Debug)]
pub struct CliError(pub String);

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError(format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Ok(Scenario::from_json(&read_text(path)?)?)
}

pub fn load_transcript(path: &Path) -> Result<Transcript, CliError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    Ok(Transcript::read_jsonl(BufReader::new(file))?)
}

/// Parses `"2,3,1"` into interval counts.
pub fn parse_counts(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| CliError(format!("bad interval count {t:?}"))))
        .collect()
}

pub fn cmd_gen(params: &GeneratorParams, seed: u64) -> Result<Scenario, CliError> {
    Ok(generate(params, seed)?)
}

/// Output of one simulated run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub transcript: Transcript,
}

/// Runs the elicitation against the scenario's simulated pair, or against a
/// recorded transcript when `replay` is given. The verdict compares with
/// the scenario's models either way.
pub fn cmd_run(scenario: &Scenario, replay: Option<Transcript>, epsilon: Option<Rational>) -> Result<RunOutput, CliError> {
    let tolerance = match epsilon {
        Some(e) => Tolerance::new(e)?,
        None => Tolerance::exact(),
    };
    let config = ElicitationConfig { tolerance, ..ElicitationConfig::default() };
    let mut sim = scenario.simulated_pair();
    let mut replayed;
    let src: &mut dyn AnswerSource = match replay {
        Some(t) => {
            replayed = ReplayTranscript::new(t);
            &mut replayed
        }
        None => &mut sim,
    };
    let result = run(src, scenario.grid.clone(), config);
    let transcript = match &result {
        Ok(out) => out.transcript.clone(),
        Err(f) => f.transcript.clone(),
    };
    let report = RunReport::new(&scenario.grid, &result, Some(&scenario.models));
    Ok(RunOutput { report, transcript })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub seed: u64,
    pub report: RunReport,
}

/// Runs `count` generated scenarios with seeds `base_seed..base_seed + count`
/// in parallel; entries come back in seed order.
pub fn cmd_sweep(params: &GeneratorParams, base_seed: u64, count: u64) -> Result<Vec<SweepEntry>, CliError> {
    (base_seed..base_seed + count)
        .into_par_iter()
        .map(|seed| {
            let scenario = generate(params, seed)?;
            Ok(SweepEntry { seed, report: cmd_run(&scenario, None, None)?.report })
        })
        .collect()
}

/// Where plot models come from.
pub enum PlotSource {
    Scenario(PathBuf),
    Report(PathBuf),
}

pub fn cmd_plot(source: &PlotSource, plane: (usize, usize), levels: usize) -> Result<PlotData, CliError> {
    let (labels, models): (&str, Vec<UtaModel>) = match source {
        PlotSource::Scenario(p) => ("truth", load_scenario(p)?.models.to_vec()),
        PlotSource::Report(p) => {
            let report: RunReport =
                serde_json::from_str(&read_text(p)?).map_err(|e| CliError(format!("{}: {e}", p.display())))?;
            ("recovered", report.recovered_models()?)
        }
    };
    let labeled: Vec<(String, &UtaModel)> =
        models.iter().enumerate().map(|(k, m)| (format!("{labels} {}", k + 1), m)).collect();
    Ok(plot_data(&labeled, plane.0, plane.1, levels)?)
}

/// Parses `"0,1"` into a plane.
pub fn parse_plane(text: &str) -> Result<(usize, usize), CliError> {
    match parse_counts(text)?.as_slice() {
        [i, j] => Ok((*i, *j)),
        _ => Err(CliError(format!("plane must be two criteria indices, got {text:?}"))),
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

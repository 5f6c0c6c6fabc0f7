//! Command-line driver: one subcommand per pipeline stage over a workspace
//! directory with fixed per-stage subdirectories.

pub mod args;
pub mod error;
pub mod stages;
pub mod workspace;

use anyhow::Result;

use args::{Cli, Command, Format};
use workspace::Workspace;

/// Run one command under the workspace lock and return its stdout text.
pub fn run(cli: &Cli) -> Result<String> {
    let ws = Workspace::new(&cli.global.workspace);
    let _lock = ws.lock()?;
    let g = &cli.global;
    let outcome = match &cli.command {
        Command::Synth(a) => stages::synth(&ws, g, a),
        Command::Ingest(a) => stages::ingest(&ws, g, a),
        Command::Annotate(a) => stages::annotate(&ws, g, a),
        Command::SampleValidation(a) => stages::sample_validation(&ws, g, a),
        Command::ServeReview(a) => stages::serve_review(&ws, g, a),
        Command::SimulateReview(a) => stages::simulate_review(&ws, g, a),
        Command::BuildSplits(a) => stages::build_splits(&ws, g, a),
        Command::Train(a) => stages::train(&ws, g, a),
        Command::ExportExternal(a) => stages::export_external(&ws, g, a),
        Command::ImportPredictions(a) => stages::import_predictions(&ws, g, a),
        Command::Evaluate(a) => stages::evaluate(&ws, g, a),
        Command::Compare(a) => stages::compare(&ws, g, a),
        Command::Bench(a) => stages::bench(&ws, g, a),
        Command::Report(a) => stages::report(&ws, g, a),
        Command::Pipeline(a) => stages::pipeline(&ws, g, a),
    }?;
    Ok(match g.format {
        Format::Json => outcome.render_json() + "\n",
        Format::Table => outcome.render_table(),
    })
}

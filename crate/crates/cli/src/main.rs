//! `cerfuse` command-line tool: one subcommand per pipeline stage.

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod cmd;
mod inputs;
mod output;

/// Invalid combination of arguments; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "cerfuse", version, about = "Late fusion and compound-emotion mapping over per-modality prediction streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and align streams, report errors and dropped/imputed counts.
    Validate(cmd::validate::ValidateArgs),
    /// Learn multi-head fusion weights from labelled streams.
    MhpfTrain(cmd::mhpf::TrainArgs),
    /// Fuse streams with a trained model into a "fused" stream.
    MhpfPredict(cmd::mhpf::PredictArgs),
    /// Map a basic-emotion stream to compounds by pair-wise probability sums.
    Ppa(cmd::compound::PpaArgs),
    /// Build basic and compound feature prototypes from labelled features.
    PfsaBuild(cmd::compound::PfsaBuildArgs),
    /// Map features to compounds by prototype similarity.
    PfsaPredict(cmd::compound::PfsaPredictArgs),
    /// Expand segment predictions to per-frame predictions.
    Frames(cmd::frames::FramesArgs),
    /// Score predictions against gold labels (macro-F1, UAR, Average).
    Eval(cmd::eval::EvalArgs),
    /// Generate a synthetic multimodal dataset.
    Synth(cmd::synth::SynthArgs),
    /// Match features to label embeddings by cosine similarity.
    Zeroshot(cmd::zeroshot::ZeroshotArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => cmd::validate::run(a),
        Command::MhpfTrain(a) => cmd::mhpf::train(a),
        Command::MhpfPredict(a) => cmd::mhpf::predict(a),
        Command::Ppa(a) => cmd::compound::ppa(a),
        Command::PfsaBuild(a) => cmd::compound::pfsa_build(a),
        Command::PfsaPredict(a) => cmd::compound::pfsa_predict(a),
        Command::Frames(a) => cmd::frames::run(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Synth(a) => cmd::synth::run(a),
        Command::Zeroshot(a) => cmd::zeroshot::run(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

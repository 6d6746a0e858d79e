mod draw;
mod error;
mod eval;
mod simulate;
mod track;
mod visualize;

use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "orbit-sot", version, about = "Small-object tracking in satellite video")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG also works.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track one target through a frame directory, a scene, or a whole suite.
    Track(track::TrackArgs),
    /// Render synthetic scenes to disk.
    Simulate(simulate::SimulateArgs),
    /// Score predicted tracklets against ground truth.
    Eval(eval::EvalArgs),
    /// Draw predicted boxes, ground truth, points and trajectory onto the frames.
    Visualize(visualize::VisualizeArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(error::EXIT_USAGE),
            };
        }
    };

    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let result: Result<(), CliError> = match cli.command {
        Command::Track(a) => track::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Visualize(a) => visualize::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

use std::path::PathBuf;

use clap::Args;

use orbit_sot_core::io::{export_scene, load_scene_config};
use orbit_sot_core::simulator::{generate, standard_suite};

use crate::error::CliError;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Render the 20-scene standard suite, one directory per scene.
    #[arg(long, conflicts_with = "scene", required_unless_present = "scene")]
    suite: bool,
    /// Render a single scene description (JSON).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Suite seed.
    #[arg(long, env = "ORBIT_SOT_SEED", default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(short = 'o', long)]
    output: PathBuf,
}

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let configs = match &args.scene {
        Some(path) => vec![load_scene_config(path).map_err(CliError::input)?],
        None => standard_suite(args.seed),
    };
    let single = args.scene.is_some();
    for cfg in configs {
        let scene = generate(&cfg).map_err(CliError::input)?;
        let dir = if single { args.output.clone() } else { args.output.join(&cfg.name) };
        export_scene(&scene, &dir).map_err(CliError::input)?;
        println!("{}: {} frames -> {}", cfg.name, cfg.frame_count, dir.display());
    }
    Ok(())
}

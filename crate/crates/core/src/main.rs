use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use membrain::config::Region;
use membrain::placement::{place_inputs_from_image, ImageSource, Intensity};
use membrain::runner::run_to_dir;
use membrain::units::{self, TIME, VOLTAGE};
use membrain::{Error, PlexusGraph, Result, SimConfig};

/// Memristive plexus simulator.
#[derive(Parser)]
#[command(name = "membrain", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write traces, snapshots and a manifest.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, env = "MEMBRAIN_OUT", default_value = "out")]
        out: PathBuf,
        /// `key=value` override on a dotted config path, e.g. `neuron.v_th="0.6 V"`.
        #[arg(long = "override", short = 's', value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Also write the nodal system of the first step in coordinate form.
        #[arg(long)]
        dump_mna: bool,
    },
    /// Validate a configuration and print its normalized form.
    Validate {
        config: PathBuf,
        #[arg(long = "override", short = 's', value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Pick input electrodes from the brightest pixels of a PGM image.
    PlaceInputs {
        image: PathBuf,
        /// Number of input electrodes.
        #[arg(short, long)]
        k: usize,
        /// Node rectangle `col,row,width,height`; lower-left corner first.
        #[arg(long, value_parser = parse_region)]
        region: Region,
        /// Take the grid from this config instead of `--grid`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Grid size as `WIDTHxHEIGHT`.
        #[arg(long, default_value = "41x41", value_parser = parse_size)]
        grid: (usize, usize),
        #[arg(long, default_value = "1.5 V")]
        amplitude: String,
        #[arg(long, default_value = "0 ms")]
        t_start: String,
        #[arg(long, default_value = "1 ms")]
        t_stop: String,
        /// Write the `[[inputs]]` fragment here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a grid of seeds and parameter values.
    Sweep {
        config: PathBuf,
        #[arg(long, env = "MEMBRAIN_OUT", default_value = "out")]
        out: PathBuf,
        /// Comma-separated seeds; the config seed when absent.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// `key=v1,v2,...`; the sweep covers every combination.
        #[arg(long = "param", value_name = "KEY=V1,V2")]
        params: Vec<String>,
        #[arg(long = "override", short = 's', value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Parallel runs.
        #[arg(long, short, default_value_t = 1)]
        jobs: usize,
    },
}

fn parse_region(s: &str) -> std::result::Result<Region, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [col, row, width, height] => Ok(Region { col, row, width, height }),
        _ => Err("expected col,row,width,height".into()),
    }
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    Ok((
        w.parse().map_err(|e| format!("width: {e}"))?,
        h.parse().map_err(|e| format!("height: {e}"))?,
    ))
}

fn load_config(path: &Path, overrides: &[String]) -> Result<SimConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config {
        field: "<file>".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    SimConfig::from_toml_with_overrides(&text, overrides)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidArgument(_) => 2,
        e if e.is_numerical() => 3,
        Error::AtStep { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn cmd_run(config: &Path, out: &Path, overrides: &[String], dump_mna: bool) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    let report = run_to_dir(&cfg, out, dump_mna)?;
    eprintln!(
        "{} spikes, final mean g {:.4e}, written to {}",
        report.spikes,
        report.final_mean_g,
        out.display()
    );
    Ok(())
}

fn cmd_validate(config: &Path, overrides: &[String]) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    let resolved = cfg.resolve()?;
    print!("{}", cfg.to_toml());
    eprintln!(
        "ok: {} nodes, {} edges, {} neurons, {} inputs, {} steps",
        resolved.graph.node_count(),
        resolved.graph.edge_count(),
        resolved.neurons.len(),
        resolved.inputs.len(),
        resolved.steps
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_place_inputs(
    image: &Path,
    k: usize,
    region: &Region,
    config: Option<&Path>,
    grid: (usize, usize),
    amplitude: &str,
    t_start: &str,
    t_stop: &str,
    output: Option<&Path>,
) -> Result<()> {
    let quantity = |field: &str, text: &str, dim| units::parse(text, dim).map_err(|m| Error::Config { field: field.into(), message: m });
    let amplitude = quantity("amplitude", amplitude, &VOLTAGE)?;
    let t_start = quantity("t_start", t_start, &TIME)?;
    let t_stop = quantity("t_stop", t_stop, &TIME)?;
    let graph = match config {
        Some(path) => load_config(path, &[])?.build_graph()?,
        None => PlexusGraph::build_grid(grid.0, grid.1, membrain::graph::DEFAULT_CELL_SIZE_UM, 0.0, 0)?,
    };
    let img = Intensity::load(image)?;
    let mut placement = place_inputs_from_image(&img, k, &graph, region)?;
    placement.source = Some(ImageSource {
        path: image.display().to_string(),
        width: img.width,
        height: img.height,
    });
    let fragment = placement.to_config_fragment(amplitude, t_start, t_stop);
    match output {
        Some(path) => fs::write(path, fragment)?,
        None => std::io::stdout().write_all(fragment.as_bytes())?,
    }
    Ok(())
}

fn sweep_points(params: &[String]) -> Result<Vec<Vec<String>>> {
    let mut points = vec![Vec::new()];
    for p in params {
        let (key, values) = p.split_once('=').ok_or_else(|| Error::Config {
            field: p.clone(),
            message: "expected key=v1,v2,...".into(),
        })?;
        let mut next = Vec::new();
        for point in &points {
            for v in values.split(',') {
                let mut q: Vec<String> = point.clone();
                q.push(format!("{}={}", key.trim(), v.trim()));
                next.push(q);
            }
        }
        points = next;
    }
    Ok(points)
}

fn cmd_sweep(config: &Path, out: &Path, seeds: &[u64], params: &[String], overrides: &[String], jobs: usize) -> Result<()> {
    let base = load_config(config, overrides)?;
    let seeds = if seeds.is_empty() { vec![base.seed] } else { seeds.to_vec() };
    let mut runs = Vec::new();
    for &seed in &seeds {
        for point in sweep_points(params)? {
            let mut ov = overrides.to_vec();
            ov.push(format!("seed={seed}"));
            ov.extend(point.iter().cloned());
            // validate everything before starting
            let text = fs::read_to_string(config)?;
            let cfg = SimConfig::from_toml_with_overrides(&text, &ov)?;
            cfg.resolve()?;
            runs.push((seed, point, cfg));
        }
    }
    fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let results: Vec<String> = pool.install(|| {
        runs.par_iter()
            .enumerate()
            .map(|(i, (seed, point, cfg))| {
                let dir = out.join(format!("run_{i:04}"));
                let status = match run_to_dir(cfg, &dir, false) {
                    Ok(r) => format!("ok,{},{:e}", r.spikes, r.final_mean_g),
                    Err(e) => format!("\"{}\",,", e.to_string().replace('"', "'")),
                };
                format!("run_{i:04},{seed},\"{}\",{status}", point.join(" "))
            })
            .collect()
    });
    let mut csv = String::from("run,seed,params,status,spikes,final_mean_g\n");
    for line in &results {
        csv.push_str(line);
        csv.push('\n');
    }
    fs::write(out.join("sweep.csv"), csv)?;
    eprintln!("{} runs written to {}", results.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            out,
            overrides,
            dump_mna,
        } => cmd_run(config, out, overrides, *dump_mna),
        Command::Validate { config, overrides } => cmd_validate(config, overrides),
        Command::PlaceInputs {
            image,
            k,
            region,
            config,
            grid,
            amplitude,
            t_start,
            t_stop,
            output,
        } => cmd_place_inputs(
            image,
            *k,
            region,
            config.as_deref(),
            *grid,
            amplitude,
            t_start,
            t_stop,
            output.as_deref(),
        ),
        Command::Sweep {
            config,
            out,
            seeds,
            params,
            overrides,
            jobs,
        } => cmd_sweep(config, out, seeds, params, overrides, *jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

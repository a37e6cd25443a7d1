use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use celltrack::dtree::{evaluate_depths, read_model, train, write_model};
use celltrack::eval::evaluate;
use celltrack::io;
use celltrack::pairs::label_pairs;
use celltrack::pipeline::{detect_sequence, track_sequence};
use celltrack::synth::generate_sequence;
use celltrack::{DecisionTree, PipelineConfig, TrainConfig};

#[derive(Parser)]
#[command(name = "celltrack", version, about = "Track moving cells in grayscale image sequences")]
struct Cli {
    /// TOML settings file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective settings as TOML and exit.
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    /// Consecutive-frame classifier on full vectors.
    T1,
    /// Re-entry classifier on vectors without position entries.
    T2,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence and its ground truth.
    Synth {
        /// Output directory; frames go to `<out>/frames`, truth to `<out>/truth.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Label difference vectors from a synthetic sequence.
    Pairs {
        #[arg(long)]
        out: PathBuf,
        /// Frame gap between pair members; above 1 writes 21-column vectors.
        #[arg(long)]
        gap: Option<usize>,
        /// Skip pairs whose centroids are further apart than this.
        #[arg(long)]
        max_distance: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep tree depths with repeated splits, then save a tree.
    Train {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_enum)]
        variant: Variant,
        #[arg(long)]
        model: PathBuf,
        /// Also write the depth table here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Segment and track a directory of PGM frames.
    Track {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        t1: PathBuf,
        #[arg(long)]
        t2: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also draw the trajectories as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Score a trajectory file against ground truth.
    Eval {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("celltrack: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            PipelineConfig::from_toml(&text).with_context(|| format!("in {}", p.display()))
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn load_tree(path: &Path) -> Result<DecisionTree> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    read_model(&text).with_context(|| format!("loading model {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        bail!("no command given; see --help");
    };
    match command {
        Command::Synth {
            out,
            frames,
            cells,
            seed,
        } => {
            cfg.synth.frames = frames.unwrap_or(cfg.synth.frames);
            cfg.synth.n_cells = cells.unwrap_or(cfg.synth.n_cells);
            cfg.synth.seed = seed.unwrap_or(cfg.synth.seed);
            let seq = generate_sequence(&cfg.synth)?;
            io::write_frames(&out.join("frames"), &seq.frames)?;
            let mut w = create(&out.join("truth.csv"))?;
            io::write_truth_csv(&mut w, &seq.truth)?;
            w.flush()?;
            println!(
                "wrote {} frames of {}x{} with {} cells to {}",
                seq.frames.len(),
                cfg.synth.width,
                cfg.synth.height,
                cfg.synth.n_cells,
                out.display()
            );
        }
        Command::Pairs {
            out,
            gap,
            max_distance,
            seed,
        } => {
            cfg.pairs.gap = gap.unwrap_or(cfg.pairs.gap);
            cfg.pairs.max_distance = max_distance.or(cfg.pairs.max_distance);
            cfg.synth.seed = seed.unwrap_or(cfg.synth.seed);
            let seq = generate_sequence(&cfg.synth)?;
            let (_, dets) = detect_sequence(
                &seq.frames,
                cfg.segment.background_window,
                &cfg.segment.params(),
            )?;
            let (set, stats) = label_pairs(&dets, &seq.truth, &cfg.pairs)?;
            let mut w = create(&out)?;
            io::write_pairs_csv(&mut w, &set)?;
            w.flush()?;
            println!(
                "{} pairs ({} positive, {} negative) from {} regions, {} merged",
                set.len(),
                stats.positives,
                stats.negatives,
                stats.regions,
                stats.merged
            );
        }
        Command::Train {
            pairs,
            variant,
            model,
            report,
            runs,
        } => {
            let mut data = io::read_pairs_csv(open(&pairs)?)?;
            let label = match variant {
                Variant::T1 => {
                    if data.dim() != 23 {
                        bail!("T1 needs 23-column pairs, {} has {}", pairs.display(), data.dim());
                    }
                    "T1"
                }
                Variant::T2 => {
                    match data.dim() {
                        23 => data = data.drop_leading(2),
                        21 => {}
                        d => bail!("T2 needs 21 or 23 columns, {} has {d}", pairs.display()),
                    }
                    "T2"
                }
            };
            let p = cfg.protocol;
            let depths: Vec<usize> = (p.depths[0]..=p.depths[1]).collect();
            let table = evaluate_depths(
                label,
                &data,
                &depths,
                runs.unwrap_or(p.runs),
                p.train_fraction,
                p.seed,
                &cfg.train,
            )?;
            print!("{table}");
            if let Some(path) = report {
                let mut w = create(&path)?;
                write!(w, "{table}")?;
                w.flush()?;
            }
            let tree = train(
                &data,
                &TrainConfig {
                    max_depth: p.final_depth,
                    ..cfg.train
                },
            )?;
            let mut w = create(&model)?;
            w.write_all(write_model(&tree).as_bytes())?;
            w.flush()?;
            eprintln!(
                "saved depth-{} tree ({} nodes) to {}",
                tree.depth(),
                tree.root.node_count(),
                model.display()
            );
        }
        Command::Track {
            frames,
            t1,
            t2,
            out,
            svg,
        } => {
            let seq = io::read_frames(&frames)?;
            if seq.is_empty() {
                bail!("no .pgm frames in {}", frames.display());
            }
            let (t1, t2) = (load_tree(&t1)?, load_tree(&t2)?);
            let (rows, summary) = track_sequence(
                &seq,
                cfg.segment.background_window,
                &cfg.segment.params(),
                cfg.tracker,
                t1,
                t2,
            )?;
            let mut w = create(&out)?;
            io::write_trajectories_csv(&mut w, &rows)?;
            w.flush()?;
            if let Some(path) = svg {
                let mut w = create(&path)?;
                w.write_all(io::trajectories_svg(&rows, seq[0].width(), seq[0].height()).as_bytes())?;
                w.flush()?;
            }
            println!(
                "tracked {} frames: {} regions, {} cells, {} occluded points, {} exits",
                summary.frames, summary.regions, summary.cells, summary.occlusions, summary.exits
            );
        }
        Command::Eval {
            trajectories,
            truth,
        } => {
            let rows = io::read_trajectories_csv(open(&trajectories)?)?;
            let truth = io::read_truth_csv(open(&truth)?, cfg.synth.width, cfg.synth.height, None)?;
            let report = evaluate(&rows, &truth, 0, &cfg.eval)?;
            println!("{report}");
        }
    }
    Ok(())
}

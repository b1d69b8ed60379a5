mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use towerforge::{parse_rational, partition::parse_word, IntervalSet, Partition, RankOneSpec, Rational, PRESETS};

use config::{CylinderSpec, ExperimentConfig, Operation, Outputs, SystemRef};
use run::{read_file, CliError, CliResult};

#[derive(Parser)]
#[command(name = "towerforge", version, about = "Exact tower and partition experiments on rank-one systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SystemArgs {
    /// Built-in system; see `list-presets`.
    #[arg(long, default_value = "hajian-kakutani", conflicts_with = "spec")]
    preset: String,
    /// System spec file: `{"base": [...], "stages": [{"cuts": r, "spacers": [...]}]}`.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Stage depth.
    #[arg(long, default_value_t = 8)]
    depth: usize,
}

#[derive(Args, Clone, Default)]
struct OutputArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the experiment config here before running.
    #[arg(long)]
    save_config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PartitionArgs {
    /// Finite atoms, `;`-separated interval sets, e.g. `0/1:1/2;1/2:1/1`.
    #[arg(long, conflicts_with = "partition")]
    atoms: Option<String>,
    /// Partition file: `{"finite_atoms": [...]}`.
    #[arg(long)]
    partition: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Builds a K-standard tower with heights N or N+1.
    BuildTower {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long = "K", default_value = "0/1:1/1")]
        k: String,
        #[arg(long = "N")]
        n: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Builds a K-standard tower from N, then refines it to heights at least n.
    RefineTower {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long = "K", default_value = "0/1:1/1")]
        k: String,
        #[arg(long = "N")]
        initial_n: usize,
        #[arg(long = "n")]
        n: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Tests whether C is uniform relative to K.
    Uniformity {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long = "C")]
        c: String,
        #[arg(long = "K", default_value = "0/1:1/1")]
        k: String,
        #[arg(long, default_value = "1/10")]
        eps: String,
        /// Comma-separated hit thresholds to try.
        #[arg(long, default_value = "1,2,4,8,16,32,64,128,256,512,1024")]
        m_schedule: String,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Perturbs a partition into a uniform one and certifies the result.
    Uniformize {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        alpha: PartitionArgs,
        /// Coarser partition for refining mode, same syntax as `--atoms`.
        #[arg(long)]
        beta_atoms: Option<String>,
        #[arg(long, default_value = "1/10")]
        eps: String,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[arg(long, default_value_t = 2)]
        certify_n_max: usize,
        #[arg(long, default_value = "1/10")]
        certify_eps: String,
        #[arg(long, default_value = "1,2,4,8,16,32,64,128,256,512,1024")]
        m_schedule: String,
        #[arg(long, default_value_t = 24)]
        samples: usize,
        /// Step logs as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Final partition file.
        #[arg(long)]
        partition_out: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Enumerates the symbolic factor's language with exact cylinder measures.
    Subshift {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        alpha: PartitionArgs,
        #[arg(long, default_value_t = 6)]
        word_length: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compares ratio estimates on factor walks with exact cylinder measures.
    RadonCheck {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        alpha: PartitionArgs,
        /// Cylinder `w1.w2...[@lo]`, e.g. `2.2` or `1.2@-1`; repeatable.
        #[arg(long = "A", required = true, allow_hyphen_values = true)]
        cylinders: Vec<String>,
        #[arg(long, default_value_t = 24)]
        walks: usize,
        #[arg(long, default_value_t = 4096)]
        horizon: usize,
        #[arg(long, default_value = "1/20")]
        eps: String,
        #[arg(long, default_value_t = 8)]
        word_length: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Exports the canonical tower sequence as an ordered Bratteli diagram.
    ExportBratteli {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long)]
        vershik_level: Option<usize>,
        /// GraphViz rendering of the diagram.
        #[arg(long)]
        dot: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Hopf ratio tables for C relative to K.
    Stats {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long = "C")]
        c: String,
        #[arg(long = "K", default_value = "0/1:1/1")]
        k: String,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Comma-separated horizons; omitted means the largest feasible one per point.
        #[arg(long)]
        horizons: Option<String>,
        #[arg(long, default_value_t = 8)]
        digits: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Runs a saved experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lists the built-in systems.
    ListPresets,
}

fn set(s: &str) -> CliResult<IntervalSet> {
    Ok(IntervalSet::parse(s)?)
}

fn rational(s: &str) -> CliResult<Rational> {
    Ok(parse_rational(s)?)
}

fn list<T: std::str::FromStr>(s: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| CliError::Config(format!("malformed list entry `{x}`"))))
        .collect()
}

fn atoms(s: &str) -> CliResult<Partition> {
    let sets = s.split(';').map(set).collect::<CliResult<Vec<_>>>()?;
    Ok(Partition::with_null_atoms(sets)?)
}

fn partition(p: &PartitionArgs) -> CliResult<Partition> {
    match (&p.atoms, &p.partition) {
        (Some(a), _) => atoms(a),
        (None, Some(path)) => Ok(Partition::from_json(&read_file(path)?)?),
        (None, None) => atoms("0/1:1/1"),
    }
}

fn cylinder(s: &str) -> CliResult<CylinderSpec> {
    let (word, lo) = match s.split_once('@') {
        Some((w, lo)) => (w, lo.trim().parse().map_err(|_| CliError::Config(format!("malformed offset in `{s}`")))?),
        None => (s, 0),
    };
    let word = parse_word(&word.replace('.', " "))?;
    Ok(CylinderSpec { lo, word })
}

fn system_ref(s: &SystemArgs) -> CliResult<SystemRef> {
    match &s.spec {
        Some(path) => {
            let spec: RankOneSpec = serde_json::from_str(&read_file(path)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Ok(SystemRef::Spec(spec))
        }
        None => Ok(SystemRef::Preset(s.preset.clone())),
    }
}

fn experiment(system: &SystemArgs, operation: Operation, output: &OutputArgs, outputs: Outputs) -> CliResult<ExperimentConfig> {
    Ok(ExperimentConfig {
        system: system_ref(system)?,
        depth: system.depth,
        operation,
        outputs: Outputs {
            json: output.out.clone(),
            ..outputs
        },
    })
}

fn config_from(command: Command) -> CliResult<(ExperimentConfig, Option<PathBuf>)> {
    let (cfg, save) = match command {
        Command::BuildTower { system, k, n, output } => {
            let op = Operation::BuildTower { k: set(&k)?, n };
            (experiment(&system, op, &output, Outputs::default())?, output.save_config)
        }
        Command::RefineTower {
            system,
            k,
            initial_n,
            n,
            output,
        } => {
            let op = Operation::RefineTower {
                k: set(&k)?,
                initial_n,
                n,
            };
            (experiment(&system, op, &output, Outputs::default())?, output.save_config)
        }
        Command::Uniformity {
            system,
            c,
            k,
            eps,
            m_schedule,
            samples,
            output,
        } => {
            let op = Operation::Uniformity {
                c: set(&c)?,
                k: set(&k)?,
                epsilon: rational(&eps)?,
                m_schedule: list(&m_schedule)?,
                samples,
            };
            (experiment(&system, op, &output, Outputs::default())?, output.save_config)
        }
        Command::Uniformize {
            system,
            alpha,
            beta_atoms,
            eps,
            steps,
            certify_n_max,
            certify_eps,
            m_schedule,
            samples,
            log,
            partition_out,
            output,
        } => {
            let op = Operation::Uniformize {
                alpha: partition(&alpha)?,
                beta: beta_atoms.as_deref().map(atoms).transpose()?,
                epsilon: rational(&eps)?,
                steps,
                certify_n_max,
                certify_epsilon: rational(&certify_eps)?,
                m_schedule: list(&m_schedule)?,
                samples,
            };
            let outputs = Outputs {
                log,
                partition: partition_out,
                ..Outputs::default()
            };
            (experiment(&system, op, &output, outputs)?, output.save_config)
        }
        Command::Subshift {
            system,
            alpha,
            word_length,
            output,
        } => {
            let op = Operation::Subshift {
                alpha: partition(&alpha)?,
                word_length,
            };
            (experiment(&system, op, &output, Outputs::default())?, output.save_config)
        }
        Command::RadonCheck {
            system,
            alpha,
            cylinders,
            walks,
            horizon,
            eps,
            word_length,
            output,
        } => {
            let op = Operation::RadonCheck {
                alpha: partition(&alpha)?,
                cylinders: cylinders.iter().map(|c| cylinder(c)).collect::<CliResult<_>>()?,
                walks,
                horizon,
                epsilon: rational(&eps)?,
                word_length,
            };
            (experiment(&system, op, &output, Outputs::default())?, output.save_config)
        }
        Command::ExportBratteli {
            system,
            levels,
            vershik_level,
            dot,
            output,
        } => {
            let op = Operation::ExportBratteli { levels, vershik_level };
            let outputs = Outputs {
                dot,
                ..Outputs::default()
            };
            (experiment(&system, op, &output, outputs)?, output.save_config)
        }
        Command::Stats {
            system,
            c,
            k,
            samples,
            horizons,
            digits,
            csv,
            plot,
            output,
        } => {
            let op = Operation::Stats {
                c: set(&c)?,
                k: set(&k)?,
                samples,
                horizons: horizons.as_deref().map(list).transpose()?,
                digits,
            };
            let outputs = Outputs {
                csv,
                plot,
                ..Outputs::default()
            };
            (experiment(&system, op, &output, outputs)?, output.save_config)
        }
        Command::Run { config, out } => {
            let mut cfg: ExperimentConfig = serde_json::from_str(&read_file(&config)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
            if out.is_some() {
                cfg.outputs.json = out;
            }
            (cfg, None)
        }
        Command::ListPresets => unreachable!("handled before config assembly"),
    };
    Ok((cfg, save))
}

fn execute(command: Command) -> CliResult<()> {
    if let Command::ListPresets = command {
        let catalog: Vec<_> = PRESETS
            .iter()
            .map(|(name, about)| serde_json::json!({ "name": name, "description": about }))
            .collect();
        println!("{}", serde_json::to_string_pretty(&catalog).expect("catalog serializes"));
        return Ok(());
    }
    let (cfg, save) = config_from(command)?;
    if let Some(path) = save {
        let text = serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    let report = run::run(&cfg)?;
    if cfg.outputs.json.is_none() {
        print!("{report}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

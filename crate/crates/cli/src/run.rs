use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use towerforge::partition::Labeling;
use towerforge::symbolic::{hk_canonical_sequence, vershik_audit};
use towerforge::*;

use crate::config::{ExperimentConfig, Operation, SystemRef};

pub const MAX_DEPTH_VAR: &str = "TOWERFORGE_MAX_DEPTH";

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    UnknownPreset(String),
    DepthCap { requested: usize, cap: usize },
    Io { path: String, message: String },
    Config(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_depth_error() => 3,
            CliError::Core(Error::BudgetExceeded(_) | Error::NotRepresentable { .. }) => 3,
            CliError::Core(
                Error::BoundedOrbitDetected
                | Error::MaximalPath
                | Error::InconsistentTower { .. }
                | Error::NoReturnWithinBudget(_),
            ) => 1,
            CliError::Io { .. } => 1,
            _ => 2,
        }
    }

    fn kind(&self) -> String {
        match self {
            CliError::Core(e) => {
                let dbg = format!("{e:?}");
                dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
            }
            CliError::UnknownPreset(_) => "UnknownPreset".into(),
            CliError::DepthCap { .. } => "DepthCap".into(),
            CliError::Io { .. } => "Io".into(),
            CliError::Config(_) => "Config".into(),
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::UnknownPreset(p) => format!("unknown preset `{p}`; see list-presets"),
            CliError::DepthCap { requested, cap } => {
                format!("depth {requested} exceeds {MAX_DEPTH_VAR}={cap}")
            }
            CliError::Io { path, message } => format!("{path}: {message}"),
            CliError::Config(m) => m.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        json!({
            "error": self.kind(),
            "message": self.message(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn depth_cap() -> CliResult<Option<usize>> {
    match std::env::var(MAX_DEPTH_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{MAX_DEPTH_VAR} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn system(cfg: &ExperimentConfig) -> CliResult<RankOneSystem> {
    if let Some(cap) = depth_cap()? {
        if cfg.depth > cap {
            return Err(CliError::DepthCap {
                requested: cfg.depth,
                cap,
            });
        }
    }
    let spec = match &cfg.system {
        SystemRef::Preset(name) => {
            RankOneSpec::preset(name).ok_or_else(|| CliError::UnknownPreset(name.clone()))?
        }
        SystemRef::Spec(spec) => spec.clone(),
    };
    Ok(RankOneSystem::new(spec, cfg.depth)?)
}

/// Revalidates a partition read from a config.
fn checked(p: &Partition) -> CliResult<Partition> {
    Ok(Partition::with_null_atoms(p.finite_atoms().to_vec())?)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

/// Runs one experiment, writes its side artifacts and returns the report
/// text.
pub fn run(cfg: &ExperimentConfig) -> CliResult<String> {
    let sys = system(cfg)?;
    let depth = cfg.depth;
    let out = &cfg.outputs;
    let result = match &cfg.operation {
        Operation::BuildTower { k, n } => {
            let t = build_k_standard(&sys, k, *n, depth)?;
            let mut heights = t.heights();
            heights.sort_unstable();
            heights.dedup();
            json!({
                "heights": heights,
                "columns": t.columns.len(),
                "principal_mass": t.principal_mass().to_string(),
                "k_standard": to_value(&is_k_standard(&t, k)),
                "tower": to_value(&t),
            })
        }
        Operation::RefineTower { k, initial_n, n } => {
            let t1 = build_k_standard(&sys, k, *initial_n, depth)?;
            let t2 = refine_k_standard(&sys, &t1, k, *n, depth)?;
            let heights = t2.heights();
            json!({
                "min_height": heights.iter().min(),
                "max_height": heights.iter().max(),
                "refinement": to_value(&refines(&t2, &t1)),
                "coarse": to_value(&t1),
                "tower": to_value(&t2),
            })
        }
        Operation::Uniformity {
            c,
            k,
            epsilon,
            m_schedule,
            samples,
        } => {
            let points = sample_points(k, *samples);
            let v = uniformity_test(&sys, c, k, epsilon, m_schedule, &points, depth)?;
            json!({ "uniform": v.is_uniform(), "verdict": to_value(&v) })
        }
        Operation::Uniformize {
            alpha,
            beta,
            epsilon,
            steps,
            certify_n_max,
            certify_epsilon,
            m_schedule,
            samples,
        } => {
            let alpha = checked(alpha)?;
            let mode = match beta {
                Some(b) => UniformizeMode::Refining(checked(b)?),
                None => UniformizeMode::Initial,
            };
            let params = UniformizerParams::new(epsilon.clone(), *steps, alpha.alphabet_size())?;
            let run = uniformize(&sys, &alpha, &params, &mode, depth)?;
            let verdicts =
                certify(&sys, &run.alpha, *certify_n_max, certify_epsilon, m_schedule, *samples, depth)?;
            if let Some(p) = &out.log {
                let lines: String = run
                    .logs
                    .iter()
                    .map(|l| serde_json::to_string(l).expect("log serializes") + "\n")
                    .collect();
                write_file(p, &lines)?;
            }
            if let Some(p) = &out.partition {
                write_file(p, &(run.alpha.to_json() + "\n"))?;
            }
            let refines_beta = match &mode {
                UniformizeMode::Refining(b) => {
                    Some(run.alpha.is_finer_than(b) && run.alpha.k_set() == b.k_set())
                }
                UniformizeMode::Initial => None,
            };
            json!({
                "telescopes": run.telescopes(epsilon),
                "refines_beta": refines_beta,
                "certified": verdicts.values().all(|v| v.is_uniform()),
                "run": to_value(&run),
                "partition": to_value(&run.alpha),
                "certificate": to_value(&verdicts),
            })
        }
        Operation::Subshift { alpha, word_length } => {
            let alpha = checked(alpha)?;
            let model = build_subshift(&sys, &alpha, *word_length, depth)?;
            let words: Vec<Value> = (1..=*word_length)
                .map(|len| {
                    let entries: Vec<Value> = model
                        .words(len)
                        .map(|w| Ok(json!({ "word": w, "measure": to_value(&model.measure(w)?) })))
                        .collect::<Result<_>>()?;
                    Ok(json!({ "length": len, "count": entries.len(), "words": entries }))
                })
                .collect::<Result<_>>()?;
            json!({
                "alphabet": model.alphabet,
                "depth": model.depth,
                "audit": to_value(&model.audit()),
                "languages": words,
            })
        }
        Operation::RadonCheck {
            alpha,
            cylinders,
            walks,
            horizon,
            epsilon,
            word_length,
        } => {
            let alpha = checked(alpha)?;
            let model = build_subshift(&sys, &alpha, *word_length, depth)?;
            let k = CompactOpen::non_one_at_zero(alpha.alphabet_size())?;
            let a_list = cylinders
                .iter()
                .map(|c| CompactOpen::cylinder(c.lo, c.word.clone()))
                .collect::<Result<Vec<_>>>()?;
            let st = sys.stage(depth)?;
            let lab = Labeling::new(st, &alpha)?;
            let walks = sample_points(&alpha.k_set(), *walks)
                .iter()
                .map(|y| SymbolWalk::from_point(st, &lab, y))
                .collect::<Result<Vec<_>>>()?;
            let horizons: Vec<usize> = (1..=*horizon).collect();
            let criteria = measure_criteria_check(&walks, &k, &a_list, &horizons, epsilon, Some(&model))?;
            let detectors: Vec<Value> = walks
                .iter()
                .map(|w| to_value(&bounded_orbit_detect(w, &k, w.feasible_horizon(&[&k]))))
                .collect();
            json!({
                "consistent": criteria.iter().all(|c| c.consistent),
                "criteria": to_value(&criteria),
                "bounded_orbit": detectors,
            })
        }
        Operation::ExportBratteli { levels, vershik_level } => {
            let towers = hk_canonical_sequence(&sys, *levels)?;
            let d = export_bratteli(&towers)?;
            d.audit()?;
            if let Some(p) = &out.dot {
                write_file(p, &d.to_dot())?;
            }
            let audit = vershik_audit(&d, vershik_level.unwrap_or(*levels))?;
            let diagram: Value = serde_json::from_str(&d.to_json()).expect("diagram json");
            json!({
                "path_counts": d.path_counts().iter().map(|l| l.iter().map(|c| c.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "vershik": to_value(&audit),
                "diagram": diagram,
            })
        }
        Operation::Stats {
            c,
            k,
            samples,
            horizons,
            digits,
        } => {
            let points = sample_points(k, *samples);
            let plan = match horizons {
                Some(h) => HorizonPlan::Fixed(h.clone()),
                None => HorizonPlan::LargestFeasible,
            };
            let report = hopf_ratio_scan(&sys, c, k, &points, &plan, depth)?;
            if let Some(p) = &out.csv {
                write_file(p, &report.to_csv())?;
            }
            if let Some(p) = &out.plot {
                write_file(p, &report.plot_data(*digits))?;
            }
            to_value(&report)
        }
    };
    let report = json!({
        "tool": "towerforge",
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
        "config": to_value(cfg),
        "result": result,
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    if let Some(p) = &out.json {
        write_file(p, &text)?;
    }
    Ok(text)
}

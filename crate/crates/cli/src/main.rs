use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use tnsr_cli::eval::evaluate;
use tnsr_cli::service::{load_scene_dir, router, AppState, ServiceConfig};
use tnsr_cli::data_dir;
use tnsr_core::datagen::{
    generate_dataset, generate_grasp_splits, load_dataset, load_scene_file, scene_id, write_dataset, write_grasp_splits,
    DatasetConfig, GraspSplitConfig,
};
use tnsr_core::executor::{Dialogue, DialogueError};
use tnsr_core::parser::explain;
use tnsr_core::program::Program;
use tnsr_core::rng::scene_seed;
use tnsr_core::scene::{sample_scene, serialize_scene, SplitTag, SCENE_FILE_EXTENSION};
use tnsr_core::{execute, ConceptMemory, ExecConfig, Grammar, OracleGrounder, RelationThresholds, SamplerConfig, SceneGraph};

#[derive(Parser)]
#[command(name = "tnsr", version, about = "Scene reasoning: datasets, parsing, execution and a dialogue service")]
struct Cli {
    /// Print results and errors as JSON documents.
    #[arg(long, global = true)]
    json: bool,
    /// Master seed; overrides the seed in --config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration file for the command.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Scattered,
    Crowded,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Lexicon {
    Training,
    Extended,
}

#[derive(Subcommand)]
enum Command {
    /// Sample scene files.
    GenScenes {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, value_enum, default_value_t = Split::Scattered)]
        split: Split,
        #[arg(long, default_value_t = 4)]
        min_objects: usize,
        #[arg(long, default_value_t = 8)]
        max_objects: usize,
        /// Output directory [default: $TNSR_DATA_DIR/scenes].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a question/program/answer dataset.
    GenDataset {
        #[arg(long)]
        scenes: Option<usize>,
        /// Output directory [default: $TNSR_DATA_DIR/dataset].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the four grasping evaluation splits.
    GenGraspSplits {
        /// Output directory [default: $TNSR_DATA_DIR/grasp_splits].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a query and show tags, template, score matrix and program.
    Parse {
        text: String,
        #[arg(long, value_enum, default_value_t = Lexicon::Training)]
        lexicon: Lexicon,
    },
    /// Execute a program or a query on a scene and print the trace.
    Exec {
        /// Scene file, or the id of a scene under $TNSR_DATA_DIR.
        #[arg(long)]
        scene: String,
        #[arg(long, conflicts_with = "query", required_unless_present = "query")]
        program: Option<String>,
        #[arg(long)]
        query: Option<String>,
    },
    /// Accuracy of a stored dataset per question type.
    Eval {
        /// Dataset directory [default: $TNSR_DATA_DIR/dataset].
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Fraction of grounding scores to flip.
        #[arg(long, default_value_t = 0.0)]
        flip_rate: f64,
        /// Print the per-family breakdown too.
        #[arg(long)]
        families: bool,
    },
    /// Interactive query and clarification loop on one scene.
    Repl {
        #[arg(long)]
        scene: String,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Scene directory [default: $TNSR_DATA_DIR/scenes].
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Keep one JSON document per session here.
        #[arg(long)]
        sessions_dir: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct CliError {
    code: &'static str,
    message: String,
}

impl CliError {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

impl From<DialogueError> for CliError {
    fn from(e: DialogueError) -> Self {
        CliError::new("dialogue", e.response())
    }
}

type Res<T> = Result<T, CliError>;

/// Settings for parsing, execution and the service.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RuntimeConfig {
    thresholds: RelationThresholds,
    exec: ExecConfig,
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Res<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))
}

fn resolve_scene(arg: &str) -> Res<SceneGraph> {
    let direct = PathBuf::from(arg);
    let root = data_dir();
    let candidates = [
        direct.clone(),
        root.join("scenes").join(format!("{arg}{SCENE_FILE_EXTENSION}")),
        root.join("dataset").join("scenes").join(format!("{arg}{SCENE_FILE_EXTENSION}")),
    ];
    let path = candidates
        .iter()
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::new("unknown_scene", format!("no scene file or id `{arg}`")))?;
    load_scene_file(path).map_err(|e| CliError::new("scene", e.to_string()))
}

fn emit(json_mode: bool, doc: serde_json::Value, text: impl FnOnce() -> String) {
    if json_mode {
        println!("{}", serde_json::to_string_pretty(&doc).expect("serialisable"));
    } else {
        print!("{}", text());
    }
}

fn run(cli: Cli) -> Res<()> {
    let cfg_path = cli.config.as_deref();
    let root = data_dir();
    match cli.command {
        Command::GenScenes { count, split, min_objects, max_objects, out } => {
            let base = match split {
                Split::Scattered => SamplerConfig::scattered(min_objects, max_objects),
                Split::Crowded => SamplerConfig::crowded(min_objects, max_objects),
            };
            let sampler = if cfg_path.is_some() { read_config::<SamplerConfig>(cfg_path)? } else { base };
            let seed = cli.seed.unwrap_or(0);
            let out = out.unwrap_or_else(|| root.join("scenes"));
            std::fs::create_dir_all(&out).map_err(|e| CliError::new("io", format!("{}: {e}", out.display())))?;
            let mut ids = Vec::new();
            for i in 0..count {
                let scene = sample_scene(&sampler, scene_seed(seed, i as u64)).map_err(|e| CliError::new("sampler", e.to_string()))?;
                let id = scene_id(i);
                let path = out.join(format!("{id}{SCENE_FILE_EXTENSION}"));
                std::fs::write(&path, serialize_scene(&scene)).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
                ids.push(id);
            }
            emit(cli.json, json!({"out": out, "scene_ids": ids}), || format!("wrote {count} scenes to {}\n", out.display()));
        }
        Command::GenDataset { scenes, out } => {
            let mut cfg: DatasetConfig = read_config(cfg_path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(n) = scenes {
                cfg.num_scenes = n;
            }
            let out = out.unwrap_or_else(|| root.join("dataset"));
            let data = generate_dataset(&cfg).map_err(|e| CliError::new("datagen", e.to_string()))?;
            write_dataset(&out, &data).map_err(|e| CliError::new("io", e.to_string()))?;
            emit(cli.json, json!({"out": out, "stats": data.stats}), || {
                format!(
                    "wrote {} samples over {} scenes to {} (rejection rate {:.3})\n",
                    data.stats.samples,
                    data.stats.scenes,
                    out.display(),
                    data.stats.rejection_rate
                )
            });
        }
        Command::GenGraspSplits { out } => {
            let mut cfg: GraspSplitConfig = read_config(cfg_path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = out.unwrap_or_else(|| root.join("grasp_splits"));
            let splits = generate_grasp_splits(&cfg).map_err(|e| CliError::new("datagen", e.to_string()))?;
            write_grasp_splits(&out, &splits).map_err(|e| CliError::new("io", e.to_string()))?;
            let sizes: Vec<(String, usize)> = splits.splits.iter().map(|s| (s.name.clone(), s.pairs.len())).collect();
            emit(cli.json, json!({"out": out, "pairs": splits.pairs().count(), "splits": sizes}), || {
                let parts: Vec<String> = sizes.iter().map(|(n, k)| format!("{n}={k}")).collect();
                format!("wrote {} pairs ({}) to {}\n", splits.pairs().count(), parts.join(" "), out.display())
            });
        }
        Command::Parse { text, lexicon } => {
            let training = ConceptMemory::training();
            let memory = if lexicon == Lexicon::Extended { Arc::new(training.extended()) } else { training };
            let e = explain(&text, &memory, &Grammar::builtin())
                .map_err(|e| CliError::new("parse", format!("{e}; {}", e.response())))?;
            emit(cli.json, serde_json::to_value(&e).expect("serialisable"), || e.render());
        }
        Command::Exec { scene, program, query } => {
            let rc: RuntimeConfig = read_config(cfg_path)?;
            let scene = resolve_scene(&scene)?;
            let g = OracleGrounder::new(ConceptMemory::training(), rc.thresholds);
            let program = match (program, query) {
                (Some(p), _) => Program::parse_text(&p).map_err(|e| CliError::new("program", e.to_string()))?,
                (None, Some(q)) => tnsr_core::parse(&q, &ConceptMemory::training(), &Grammar::builtin())
                    .map_err(|e| CliError::new("parse", format!("{e}; {}", e.response())))?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            program.typecheck().map_err(|e| CliError::new("type", e.to_string()))?;
            let trace = execute(&program, &scene, &g, &rc.exec);
            emit(cli.json, serde_json::to_value(&trace).expect("serialisable"), || trace.render());
        }
        Command::Eval { dataset, flip_rate, families } => {
            if !(0.0..=1.0).contains(&flip_rate) {
                return Err(CliError::new("argument", "--flip-rate must be in [0, 1]"));
            }
            let dir = dataset.unwrap_or_else(|| root.join("dataset"));
            let data = load_dataset(&dir).map_err(|e| CliError::new("dataset", e.to_string()))?;
            let report = evaluate(&data, flip_rate, cli.seed.unwrap_or(0));
            emit(cli.json, serde_json::to_value(&report).expect("serialisable"), || {
                let mut out = report.table();
                if families {
                    for (f, c) in &report.families {
                        out.push_str(&format!("  {f:<16} {:>6.1}  ({}/{})\n", c.accuracy().unwrap_or(0.0), c.correct, c.total));
                    }
                }
                out
            });
        }
        Command::Repl { scene } => {
            let rc: RuntimeConfig = read_config(cfg_path)?;
            repl(resolve_scene(&scene)?, rc, cli.json)?;
        }
        Command::Serve { port, scenes, sessions_dir } => {
            let rc: RuntimeConfig = read_config(cfg_path)?;
            let dir = scenes.unwrap_or_else(|| root.join("scenes"));
            let scenes = if dir.is_dir() {
                load_scene_dir(&dir).map_err(|m| CliError::new("scene", m))?
            } else {
                eprintln!("scene directory {} not found; serving inline scenes only", dir.display());
                Default::default()
            };
            let config = ServiceConfig { thresholds: rc.thresholds, exec: rc.exec, sessions_dir };
            let state = AppState::new(scenes, config).map_err(|e| CliError::new("io", e.to_string()))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::new("io", e.to_string()))?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
                    .await
                    .map_err(|e| CliError::new("io", format!("bind port {port}: {e}")))?;
                eprintln!("listening on http://{}", listener.local_addr().map_err(|e| CliError::new("io", e.to_string()))?);
                axum::serve(listener, router(Arc::new(state)))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(|e| CliError::new("io", e.to_string()))
            })?;
        }
    }
    Ok(())
}

fn repl(scene: SceneGraph, rc: RuntimeConfig, json_mode: bool) -> Res<()> {
    let g = OracleGrounder::new(ConceptMemory::training(), rc.thresholds);
    let grammar = Grammar::builtin();
    let mut d = Dialogue::new(scene);
    let stdin = io::stdin();
    let mut stdout = io::stdout();
    let tag = match d.scene.split_tag {
        SplitTag::Scattered => "scattered",
        SplitTag::Crowded => "crowded",
    };
    if !json_mode {
        println!("scene with {} objects ({tag}); :trace shows the last trace, :quit exits", d.scene.len());
    }
    loop {
        if !json_mode {
            print!("> ");
            stdout.flush().ok();
        }
        let mut line = String::new();
        if stdin.lock().read_line(&mut line).map_err(|e| CliError::new("io", e.to_string()))? == 0 {
            break;
        }
        let line = line.trim();
        match line {
            "" => continue,
            ":quit" | ":q" => break,
            ":trace" => {
                if let Some(t) = &d.trace {
                    print!("{}", t.render());
                }
                continue;
            }
            _ => {}
        }
        let result = if d.pending.is_some() {
            d.feedback(line, &g, &rc.exec).map(|_| ())
        } else {
            d.query(line, &grammar, &g, &rc.exec).map(|_| ())
        };
        let reply = d.transcript.last().map(|t| t.text.clone()).unwrap_or_default();
        if json_mode {
            let doc = json!({
                "input": line,
                "ok": result.is_ok(),
                "response": reply,
                "program": d.program.as_ref().map(|p| p.to_text()),
                "pending": d.pending.is_some(),
                "trace": result.is_ok().then_some(&d.trace),
            });
            println!("{doc}");
        } else {
            if result.is_ok() {
                if let Some(p) = &d.program {
                    println!("program: {p}");
                }
            }
            println!("{reply}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_mode = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json_mode {
                println!("{}", json!({"error": {"code": e.code, "message": e.message}}));
            } else {
                eprintln!("error: {}", e.message);
            }
            ExitCode::FAILURE
        }
    }
}

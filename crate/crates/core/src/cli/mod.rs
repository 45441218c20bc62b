//! The `ptts` command line: subcommands over a flat dotted-key config.
//!
//! Exit codes: 0 success, 2 usage (bad flags, config or tags), 3 missing
//! dependency (checkpoint or corpus), 4 data (I/O, parse, numeric or
//! failed verification).

mod commands;
pub mod config;

pub use commands::{
    cmd_ablate, cmd_corpus, cmd_curate, cmd_selfcheck, cmd_synth, cmd_train, train_ar, training_records, AblationReport,
    AblationRow, Stage, SynthMeta, SynthRequest, TrainReport,
};
pub use config::{ConfigMap, RunConfig, KEYS, SEED_ENV};

use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DEPENDENCY: i32 = 3;
pub const EXIT_DATA: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Vocab { .. } => EXIT_USAGE,
        Error::Dependency(_) => EXIT_DEPENDENCY,
        _ => EXIT_DATA,
    }
}

fn with_config_keys(mut cmd: Command) -> Command {
    cmd = cmd.arg(Arg::new("config").long("config").value_name("FILE").help("key=value config file"));
    for (key, default, help) in KEYS {
        let help = if default.is_empty() { help.to_string() } else { format!("{help} [default: {default}]") };
        cmd = cmd.arg(Arg::new(*key).long(*key).value_name("V").help(help).hide(true));
    }
    cmd
}

pub fn command() -> Command {
    let path = |id: &'static str, help: &'static str| Arg::new(id).long(id).value_name("PATH").help(help).required(true);
    Command::new("ptts")
        .about("Desk-scale TTS stack: curation, training, synthesis, ablation, verification")
        .after_help("Every config key is also a flag: --seed=7, --policy.min_snr_db=20, --ar.d_model=96 ...")
        .subcommand_required(true)
        .subcommand(with_config_keys(Command::new("corpus").about("write the synthetic corpus")))
        .subcommand(with_config_keys(
            Command::new("curate")
                .about("annotate and filter a manifest")
                .arg(path("in", "input manifest"))
                .arg(path("out", "output manifest")),
        ))
        .subcommand(with_config_keys(
            Command::new("train")
                .about("train one stage: tokenizer, ar or cfm")
                .arg(Arg::new("stage").required(true).value_parser(["tokenizer", "ar", "cfm"]))
                .arg(Arg::new("steps").long("steps").value_name("N").value_parser(clap::value_parser!(usize))),
        ))
        .subcommand(with_config_keys(
            Command::new("synth")
                .about("text plus reference audio to WAV and mel tensor")
                .arg(Arg::new("text").long("text").required(true))
                .arg(path("ref", "reference WAV"))
                .arg(Arg::new("lang").long("lang"))
                .arg(Arg::new("emo").long("emo"))
                .arg(path("out-wav", "output WAV"))
                .arg(path("out-mel", "output mel tensor")),
        ))
        .subcommand(with_config_keys(
            Command::new("ablate")
                .about("train full / no_spk / no_both per seed and report")
                .arg(Arg::new("out").long("out").value_name("CSV")),
        ))
        .subcommand(with_config_keys(Command::new("selfcheck").about("run the 64-bit verification suites")))
        .arg(Arg::new("quiet").long("quiet").short('q').action(ArgAction::SetTrue).global(true))
}

fn config_of(m: &ArgMatches) -> Result<RunConfig, Error> {
    let overrides: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|(k, _, _)| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect();
    let file = m.get_one::<String>("config").map(PathBuf::from);
    let cfg = RunConfig::load(file.as_deref(), &overrides)?;
    crate::numerics::set_parallel_matmul(cfg.parallel_matmul);
    Ok(cfg)
}

fn arg(m: &ArgMatches, id: &str) -> PathBuf {
    PathBuf::from(m.get_one::<String>(id).expect("required by clap"))
}

fn dispatch(name: &str, m: &ArgMatches) -> Result<i32, Error> {
    let cfg = config_of(m)?;
    match name {
        "corpus" => {
            let records = cmd_corpus(&cfg)?;
            println!("wrote {} records to {}", records.len(), cfg.corpus_manifest.display());
        }
        "curate" => {
            let summary = cmd_curate(&cfg, &arg(m, "in"), &arg(m, "out"))?;
            print!("{summary}");
        }
        "train" => {
            let stage = Stage::parse(m.get_one::<String>("stage").expect("required"))?;
            let r = cmd_train(&cfg, stage, m.get_one::<usize>("steps").copied())?;
            println!("checkpoint {}", r.checkpoint.display());
            println!("loss log {}", r.loss_log.display());
            println!("initial loss {:.6}", r.initial_loss);
            println!("final loss {:.6}", r.final_loss);
        }
        "synth" => {
            let req = SynthRequest {
                text: m.get_one::<String>("text").expect("required").clone(),
                reference: arg(m, "ref"),
                lang: m.get_one::<String>("lang").cloned(),
                emo: m.get_one::<String>("emo").cloned(),
                out_wav: arg(m, "out-wav"),
                out_mel: arg(m, "out-mel"),
            };
            let meta = cmd_synth(&cfg, &req)?;
            println!("{} tokens, {} mel frames{}", meta.tokens.len(), meta.frames, if meta.truncated { " (truncated)" } else { "" });
        }
        "ablate" => {
            let out = m.get_one::<String>("out").map(PathBuf::from).unwrap_or_else(|| cfg.reports.join("ablation.csv"));
            let r = cmd_ablate(&cfg, &out)?;
            print!("{}", std::fs::read_to_string(&r.csv)?);
            println!("equal step budget: {}", r.equal_budget);
        }
        "selfcheck" => {
            let checks = cmd_selfcheck(&cfg)?;
            for c in &checks {
                println!("{} {:<22} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(EXIT_DATA);
            }
        }
        _ => unreachable!("clap rejects unknown subcommands"),
    }
    Ok(EXIT_OK)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match dispatch(name, sub) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

//! `hftkin`: runs, lists and validates experiment recipes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use hft_kinetics::recipe::{
    builtin_recipe, parse_recipe, Recipe, RunError, BUILTIN_RECIPES,
};
use hft_kinetics::report::emit_report;
use hft_kinetics::{par, recipe};
use sha2::{Digest, Sha256};

/// Overrides the output root of every run.
const OUTPUT_ENV: &str = "HFTKIN_OUTPUT_DIR";
const DEFAULT_OUTPUT_ROOT: &str = "output";

const EXIT_CONFIG: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "hftkin", version, about = "Trend-following HFT order-book experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a recipe file, or a built-in recipe by name, and write its reports.
    Run { recipe: String },
    /// List the built-in recipes.
    ListRecipes,
    /// Check a recipe without running it.
    Validate { recipe: String },
}

fn exit_code(e: &RunError) -> u8 {
    match e {
        RunError::Config(_) => EXIT_CONFIG,
        RunError::Model(_) => EXIT_MODEL,
        RunError::Io(_) => EXIT_IO,
    }
}

/// Reads the recipe text. A path that does not exist falls back to a
/// built-in recipe of that name.
fn recipe_text(arg: &str) -> Result<String, RunError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(text) = builtin_recipe(arg) {
            return Ok(text.to_string());
        }
    }
    fs::read_to_string(path)
        .map_err(|e| RunError::Io(std::io::Error::new(e.kind(), format!("{arg}: {e}"))))
}

fn load(arg: &str) -> Result<(Recipe, String), RunError> {
    let text = recipe_text(arg)?;
    let r = parse_recipe(&text)?;
    Ok((r, text))
}

fn output_dir(r: &Recipe) -> PathBuf {
    match std::env::var_os(OUTPUT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(&r.name),
        _ => r
            .output_dir
            .clone()
            .unwrap_or_else(|| Path::new(DEFAULT_OUTPUT_ROOT).join(&r.name)),
    }
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn manifest(r: &Recipe, text: &str, seconds: f64, files: &[String]) -> String {
    let seeds: Vec<String> = r.replica_seeds().iter().map(|s| s.to_string()).collect();
    let mut m = String::from("key\tvalue\n");
    let mut kv = |k: &str, v: &str| {
        let _ = writeln!(m, "{k}\t{v}");
    };
    kv("recipe", &r.name);
    kv("model", r.model.kind().label());
    kv("recipe_sha256", &sha256_hex(text));
    kv("base_seed", &r.base_seed().to_string());
    kv("replica_seeds", &seeds.join(","));
    kv("hftkin_version", env!("CARGO_PKG_VERSION"));
    kv("parallel", &par::PARALLEL.to_string());
    kv("wall_time_s", &format!("{seconds:.3}"));
    kv("reports", &files.join(","));
    m
}

fn run(arg: &str) -> Result<(), RunError> {
    let (r, text) = load(arg)?;
    let dir = output_dir(&r);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("recipe.toml"), &text)?;
    eprintln!(
        "running {} ({}, {} replicas) into {}",
        r.name,
        r.model.kind().label(),
        r.replicas,
        dir.display()
    );
    let t0 = Instant::now();
    let analyses = recipe::run_recipe(&r, Some(&dir))?;
    let files = emit_report(&analyses, &dir)?;
    let seconds = t0.elapsed().as_secs_f64();
    fs::write(dir.join("manifest.tsv"), manifest(&r, &text, seconds, &files))?;
    eprintln!("wrote {} reports in {seconds:.1}s", files.len());
    Ok(())
}

fn validate(arg: &str) -> Result<(), RunError> {
    let (r, _) = load(arg)?;
    println!(
        "{}: ok ({}, {} replicas)",
        r.name,
        r.model.kind().label(),
        r.replicas
    );
    Ok(())
}

fn list() {
    for (name, text) in BUILTIN_RECIPES {
        let description = parse_recipe(text).map(|r| r.description).unwrap_or_default();
        println!("{name}\t{description}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { recipe } => run(recipe),
        Command::Validate { recipe } => validate(recipe),
        Command::ListRecipes => {
            list();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                RunError::Config(c) => {
                    eprintln!("error: invalid recipe");
                    for v in &c.violations {
                        eprintln!("  {v}");
                    }
                }
                e => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

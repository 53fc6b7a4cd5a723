use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use itl_core::alexandroff::{
    analyze, evaluate, falsifying_valuation, find_countermodel, random_system, system_from_json,
    system_to_json,
};
use itl_core::moments::enumerate_irreducibles;
use itl_core::quasimodel::moment_to_dot;
use itl_core::{
    decide, extract_quasimodel, verify_certificate, Caps, Certificate, DecideOptions, Error,
    FiniteSystem, Formula, SigmaContext, Valuation, Verdict,
};
use serde_json::json;

const OK: u8 = 0;
const FAILS: u8 = 1;
const USAGE: u8 = 2;
const LIMIT: u8 = 3;
const INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(name = "itl", version, about = "Decide intuitionistic temporal formulas and check finite dynamical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Args)]
struct Options {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    /// Maximum number of irreducible moments per profile.
    #[arg(long, default_value_t = 50_000, value_parser = clap::value_parser!(u64).range(1..), global = true)]
    max_moments: u64,
    /// Maximum number of formula evaluations in a model search.
    #[arg(long, default_value_t = 1 << 20, value_parser = clap::value_parser!(u64).range(1..), global = true)]
    max_valuations: u64,
    /// Worker threads for the decision procedure.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), global = true)]
    threads: Option<u64>,
    /// Time limit for the decision procedure, in seconds.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), global = true)]
    timeout: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Dot,
}

#[derive(Subcommand)]
enum Command {
    /// Decide validity over dynamical systems.
    Decide {
        formula: String,
        /// Also write the certificate of a falsifiable formula here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a formula on a system under its stored valuation.
    Check { system: PathBuf, formula: String },
    /// Check a formula on a system under every valuation.
    Valid { system: PathBuf, formula: String },
    /// Search small systems for a countermodel.
    Countermodel {
        formula: String,
        #[arg(long, default_value_t = 3)]
        max_points: usize,
    },
    /// Report minimality, recurrence and connectedness.
    Analyze { system: PathBuf },
    /// Extract the quasimodel simulated by a system.
    Extract { system: PathBuf, formula: String },
    /// Verify a certificate against a formula.
    Verify { certificate: PathBuf, formula: String },
    /// Enumerate the irreducible moments of a formula's closure.
    Enumerate {
        #[arg(long)]
        sigma: String,
    },
    /// Generate a random system.
    RandomSystem {
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::CapExceeded(_) => LIMIT,
            Error::Invariant(_) | Error::Precondition(_) => INVARIANT,
            _ => USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: USAGE,
        message: message.into(),
    }
}

fn parse(text: &str) -> Result<Formula, Failure> {
    Formula::parse(text).map_err(|e| usage(format!("cannot parse {text:?}: {e}")))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load_system(path: &Path) -> Result<(FiniteSystem, Valuation), Failure> {
    system_from_json(&read(path)?)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn point_names(x: &FiniteSystem, s: itl_core::PointSet) -> Vec<String> {
    s.iter().map(|i| x.poset().names()[i].clone()).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let o = &cli.opts;
    match &cli.command {
        Command::Decide { formula, out } => cmd_decide(o, formula, out.as_deref()),
        Command::Check { system, formula } => {
            let (x, val) = load_system(system)?;
            let phi = parse(formula)?;
            let truth = evaluate(&x, &val, &phi)?;
            let failing = point_names(&x, itl_core::PointSet(x.poset().all().0 & !truth.0));
            match o.format {
                Format::Json => println!("{}", json!({"formula": phi.to_string(), "holds": failing.is_empty(), "failing": failing})),
                _ if failing.is_empty() => println!("holds"),
                _ => println!("fails at {}", failing.join(", ")),
            }
            Ok(if failing.is_empty() { OK } else { FAILS })
        }
        Command::Valid { system, formula } => {
            let (x, _) = load_system(system)?;
            let phi = parse(formula)?;
            match falsifying_valuation(&x, &phi, o.max_valuations)? {
                None => {
                    match o.format {
                        Format::Json => println!("{}", json!({"formula": phi.to_string(), "valid": true})),
                        _ => println!("valid"),
                    }
                    Ok(OK)
                }
                Some((val, point)) => {
                    let name = &x.poset().names()[point];
                    match o.format {
                        Format::Json => {
                            let system: serde_json::Value = serde_json::from_str(&system_to_json(&x, &val)).unwrap();
                            println!("{}", json!({"formula": phi.to_string(), "valid": false, "point": name, "system": system}));
                        }
                        _ => {
                            println!("fails at {name} under");
                            for (atom, s) in &val {
                                println!("  {atom} = {{{}}}", point_names(&x, *s).join(", "));
                            }
                        }
                    }
                    Ok(FAILS)
                }
            }
        }
        Command::Countermodel { formula, max_points } => {
            let phi = parse(formula)?;
            if *max_points == 0 || *max_points > 4 {
                return Err(usage("--max-points must be between 1 and 4"));
            }
            match find_countermodel(&phi, *max_points, o.max_valuations)? {
                None => {
                    match o.format {
                        Format::Json => println!("{}", json!({"formula": phi.to_string(), "countermodel": null})),
                        _ => println!("no countermodel with at most {max_points} points"),
                    }
                    Ok(OK)
                }
                Some(cm) => {
                    let point = &cm.system.poset().names()[cm.point];
                    let system = system_to_json(&cm.system, &cm.valuation);
                    match o.format {
                        Format::Json => {
                            let system: serde_json::Value = serde_json::from_str(&system).unwrap();
                            println!("{}", json!({"formula": phi.to_string(), "point": point, "countermodel": system}));
                        }
                        _ => println!("countermodel falsifying at {point}:\n{system}"),
                    }
                    Ok(FAILS)
                }
            }
        }
        Command::Analyze { system } => {
            let (x, _) = load_system(system)?;
            let a = analyze(&x);
            match o.format {
                Format::Json => println!("{}", serde_json::to_string(&a).unwrap()),
                _ => println!(
                    "minimal: {}\nrecurrent: {}\nconnected: {}",
                    a.minimal, a.recurrent, a.connected
                ),
            }
            Ok(OK)
        }
        Command::Extract { system, formula } => {
            let (x, val) = load_system(system)?;
            let phi = parse(formula)?.eliminate_exists();
            let sigma = SigmaContext::new(&phi)?;
            let q = extract_quasimodel(&x, &val, &sigma)?;
            let falsifiers = q.falsifiers(sigma.top().unwrap());
            match o.format {
                Format::Json => println!("{}", q.to_json()),
                Format::Dot => print!("{}", q.to_dot()),
                Format::Text => {
                    println!("{} worlds, {} successor edges", q.len(), q.s_edges.len());
                    for (i, m) in q.worlds.iter().enumerate() {
                        println!("world {i}:\n{}", m.render(&sigma));
                    }
                    if falsifiers.is_empty() {
                        println!("no world falsifies {phi}");
                    } else {
                        println!("worlds falsifying {phi}: {falsifiers:?}");
                    }
                }
            }
            Ok(if falsifiers.is_empty() { OK } else { FAILS })
        }
        Command::Verify { certificate, formula } => {
            let phi = parse(formula)?;
            let cert = Certificate::from_json(&read(certificate)?)?;
            let result = verify_certificate(&cert, &phi);
            match (o.format, &result) {
                (Format::Json, Ok(())) => println!("{}", json!({"verified": true})),
                (Format::Json, Err(v)) => println!(
                    "{}",
                    json!({"verified": false, "clause": v.clause.to_string(), "message": v.message})
                ),
                (_, Ok(())) => println!("verified"),
                (_, Err(v)) => println!("rejected: {v}"),
            }
            Ok(if result.is_ok() { OK } else { FAILS })
        }
        Command::Enumerate { sigma } => {
            let phi = parse(sigma)?.eliminate_exists();
            let s = SigmaContext::new(&phi)?;
            let caps = Caps {
                max_moments: o.max_moments as usize,
                ..Caps::default()
            };
            let store = enumerate_irreducibles(&s, &caps);
            let max_height = store.ids().map(|id| store.height(id)).max().unwrap_or(0);
            match o.format {
                Format::Json => println!(
                    "{}",
                    json!({
                        "sigma": s.formulas().iter().map(|f| f.to_string()).collect::<Vec<_>>(),
                        "types": s.enumerate_types().len(),
                        "irreducibles": store.len(),
                        "max_height": max_height,
                        "complete": store.is_complete(),
                    })
                ),
                Format::Dot => {
                    for id in store.ids() {
                        print!("{}", moment_to_dot(&s, &store.moment(id)));
                    }
                }
                Format::Text => {
                    println!("sigma: {} formulas", s.len());
                    for (i, f) in s.formulas().iter().enumerate() {
                        println!("  {i}: {f}");
                    }
                    println!("types: {}", s.enumerate_types().len());
                    println!("irreducibles: {}", store.len());
                    println!("max height: {max_height}");
                    if let Some(reason) = store.incomplete_reason() {
                        println!("incomplete: {reason}");
                    }
                }
            }
            Ok(if store.is_complete() { OK } else { LIMIT })
        }
        Command::RandomSystem { points, seed } => {
            if *points == 0 || *points > 64 {
                return Err(usage("the number of points must be between 1 and 64"));
            }
            println!("{}", system_to_json(&random_system(*points, *seed), &Valuation::new()));
            Ok(OK)
        }
    }
}

fn cmd_decide(o: &Options, formula: &str, out: Option<&Path>) -> Result<u8, Failure> {
    let phi = parse(formula)?;
    let opts = DecideOptions {
        caps: Caps {
            max_moments: o.max_moments as usize,
            ..Caps::default()
        },
        threads: o.threads.map(|t| t as usize),
        timeout: o.timeout.map(Duration::from_secs),
    };
    let d = decide(&phi, &opts)?;
    let stats = serde_json::to_value(&d.stats).unwrap();
    match &d.verdict {
        Verdict::Valid => {
            if !d.stats.complete {
                return Err(Failure {
                    code: INVARIANT,
                    message: "VALID reported without a complete search".into(),
                });
            }
            match o.format {
                Format::Json => println!("{}", json!({"verdict": "VALID", "stats": stats})),
                _ => println!("VALID"),
            }
            Ok(OK)
        }
        Verdict::ResourceLimit(reason) => {
            match o.format {
                Format::Json => println!("{}", json!({"verdict": "RESOURCE_LIMIT", "reason": reason, "stats": stats})),
                _ => println!("RESOURCE_LIMIT: {reason}"),
            }
            Ok(LIMIT)
        }
        Verdict::Falsifiable(cert) => {
            let text = cert.to_json();
            let reread = Certificate::from_json(&text)?;
            if let Err(v) = verify_certificate(&reread, &phi) {
                return Err(Failure {
                    code: INVARIANT,
                    message: format!("certificate failed self-verification: {v}"),
                });
            }
            if let Some(path) = out {
                fs::write(path, format!("{text}\n"))
                    .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
            }
            match o.format {
                Format::Json => println!("{text}"),
                Format::Dot => print!("{}", cert.quasimodel.to_dot()),
                Format::Text => {
                    let q = &cert.quasimodel;
                    println!("FALSIFIABLE");
                    println!(
                        "certificate: {} worlds, {} successor edges, witness world {}",
                        q.len(),
                        q.s_edges.len(),
                        cert.witness
                    );
                    println!("{}", q.worlds[cert.witness].render(&q.sigma));
                }
            }
            Ok(FAILS)
        }
    }
}

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use clx::admissibility::{self, Engine, Verdict};
use clx::formula::{parse, parse_rule_with, Formula, Rule};
use clx::kripke::Model;
use clx::logic::{LogicSpec, ParamMode};
use clx::projective::{self, Projectivity};
use clx::rules::{self, BasisCaps, BasisKind};
use clx::typecore::{self, TypeError};

#[derive(Parser)]
#[command(name = "clx", version, about = "Decision procedures for cluster-extensible transitive modal logics")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Preset name or path to a logic JSON file.
    #[arg(long, global = true, default_value = "K4")]
    logic: String,
    /// Finite parameter set, comma separated; parameters are infinite otherwise.
    #[arg(long, global = true, value_delimiter = ',')]
    params: Option<Vec<String>>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    A,
    B,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Mc,
    Sc,
    Indep,
    IndepSc,
}

#[derive(Subcommand)]
enum Command {
    /// Is the formula a theorem of the logic?
    Taut { formula: String },
    /// Does the formula follow from the premises?
    Consequence {
        formula: String,
        #[arg(long = "from")]
        premises: Vec<String>,
    },
    /// Print a small countermodel, if any.
    Countermodel {
        formula: String,
        #[arg(long = "from")]
        premises: Vec<String>,
    },
    /// Is the model's frame a frame of the logic?
    FrameCheck { model: PathBuf },
    /// Exclusion basis, base, and classification of the logic.
    LogicInfo,
    /// Axioms over K4.
    Axioms,
    /// Projectivity, with a unifier or a failing extension.
    Projective { formula: String },
    /// The projective approximation.
    Approx { formula: String },
    /// A complete set of unifiers of the conjunction of the formulas.
    Unify { formulas: Vec<String> },
    /// Admissibility of a rule `Γ / Δ`.
    Admissible {
        rule: String,
        #[arg(long, value_enum, default_value_t = EngineArg::Both)]
        engine: EngineArg,
        /// Write the refuting model here when the rule is not admissible.
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
    /// Check a model certifying non-admissibility.
    Certify { rule: String, model: PathBuf },
    /// Emit a basis of admissible rules.
    Basis {
        #[arg(long, value_enum, default_value_t = KindArg::Mc)]
        kind: KindArg,
        /// Largest n when branching is unbounded.
        #[arg(long, default_value_t = 3)]
        max_n: usize,
        /// Number of parameters used when parameters are infinite.
        #[arg(long, default_value_t = 1)]
        max_params: usize,
    },
    /// The PExt rule instances for the subformulas of the given formulas.
    Pext { formulas: Vec<String> },
}

/// Failures mapped to exit codes.
enum Failure {
    Input(String),
    Cap(String),
}

impl From<TypeError> for Failure {
    fn from(e: TypeError) -> Self {
        match e {
            TypeError::ResourceCap(s) => Failure::Cap(s),
            other => Failure::Input(other.to_string()),
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

struct Ctx {
    logic: LogicSpec,
    declared: BTreeSet<String>,
    json: bool,
}

impl Ctx {
    fn formula(&self, text: &str) -> Result<Formula, Failure> {
        parse(text, &self.declared).map_err(input)
    }

    fn formulas(&self, texts: &[String]) -> Result<Vec<Formula>, Failure> {
        texts.iter().map(|t| self.formula(t)).collect()
    }

    fn rule(&self, text: &str) -> Result<Rule, Failure> {
        parse_rule_with(text, &self.declared).map_err(input)
    }

    fn emit(&self, text: String, value: Value) {
        use std::io::Write;
        let out = if self.json { serde_json::to_string_pretty(&value).unwrap() } else { text };
        // a closed pipe (`clx basis | head`) is not an error worth reporting
        let _ = writeln!(std::io::stdout().lock(), "{out}");
    }
}

fn load_logic(common: &Common) -> Result<LogicSpec, Failure> {
    let mut logic = match LogicSpec::preset(&common.logic) {
        Ok(l) => l,
        Err(_) => {
            let text = std::fs::read_to_string(&common.logic)
                .map_err(|e| Failure::Input(format!("'{}' is neither a preset nor a readable file: {e}", common.logic)))?;
            LogicSpec::from_json(&text).map_err(input)?
        }
    };
    if let Some(ps) = &common.params {
        let ps: Vec<String> = ps.iter().map(|p| p.trim_start_matches('$').to_string()).filter(|p| !p.is_empty()).collect();
        logic = logic.with_params(ParamMode::Finite(ps));
    }
    Ok(logic)
}

fn load_model(path: &PathBuf) -> Result<Model, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Model::from_json(&text).map_err(input)
}

fn model_value(m: &Model) -> Value {
    serde_json::from_str(&m.to_json()).unwrap()
}

fn yes(b: bool) -> u8 {
    if b {
        0
    } else {
        1
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let logic = load_logic(&cli.common)?;
    let declared: BTreeSet<String> = logic.declared_params().map(|p| p.iter().cloned().collect()).unwrap_or_default();
    let cx = Ctx { logic, declared, json: cli.common.format == Format::Json };
    let logic = &cx.logic;
    match cli.command {
        Command::Taut { formula } => {
            let f = cx.formula(&formula)?;
            let ok = typecore::tautology(logic, &f)?;
            cx.emit(if ok { "valid" } else { "not valid" }.into(), json!({ "formula": f.to_string(), "valid": ok }));
            Ok(yes(ok))
        }
        Command::Consequence { formula, premises } => {
            let f = cx.formula(&formula)?;
            let g = cx.formulas(&premises)?;
            let ok = typecore::consequence(logic, &g, &f)?;
            cx.emit(if ok { "follows" } else { "does not follow" }.into(), json!({ "valid": ok }));
            Ok(yes(ok))
        }
        Command::Countermodel { formula, premises } => {
            let f = cx.formula(&formula)?;
            let g = cx.formulas(&premises)?;
            match typecore::countermodel(logic, &g, &f)? {
                None => {
                    cx.emit("valid; no countermodel".into(), json!({ "valid": true, "model": null }));
                    Ok(0)
                }
                Some(m) => {
                    let (b, bound, depth, cluster, branching) = typecore::countermodel_bounds(&g, &f);
                    cx.emit(
                        m.to_json(),
                        json!({
                            "valid": false,
                            "model": model_value(&m),
                            "bounds": { "b": b, "size": bound.to_string(), "depth": depth, "cluster": cluster, "branching": branching },
                        }),
                    );
                    Ok(1)
                }
            }
        }
        Command::FrameCheck { model } => {
            let m = load_model(&model)?;
            let ok = logic.is_l_frame(&m);
            let types: Vec<String> = (0..m.len()).map(|u| m.type_of(u).to_string()).collect();
            cx.emit(
                format!("{} frame of {}", if ok { "a" } else { "not a" }, logic.display_name()),
                json!({ "l_frame": ok, "point_types": types }),
            );
            Ok(yes(ok))
        }
        Command::LogicInfo => {
            let xcb: Vec<String> = logic.xcb.iter().map(|t| t.to_string()).collect();
            let base: Vec<String> = logic.base().iter().map(|t| t.to_string()).collect();
            let branching = logic.bounded_branching();
            let utype = admissibility::unification_type(logic);
            let directed = admissibility::directed(logic)?;
            let finite = rules::has_finite_basis(logic);
            let text = format!(
                "logic {}\nxcb {{{}}}\nbase {{{}}}\nlinear {}\nbounded branching {}\nunification {}\ndirected {}\nfinite basis {}",
                logic.display_name(),
                xcb.join(", "),
                base.join(", "),
                logic.is_linear(),
                branching.map(|b| b.to_string()).unwrap_or_else(|| "unbounded".into()),
                utype,
                directed,
                finite
            );
            cx.emit(
                text,
                json!({
                    "logic": logic.to_json(),
                    "xcb": xcb,
                    "base": base,
                    "linear": logic.is_linear(),
                    "bounded_branching": branching,
                    "unification_type": utype.to_string(),
                    "directed": directed,
                    "finite_basis": finite,
                }),
            );
            Ok(0)
        }
        Command::Axioms => {
            let ax: Vec<String> = logic.axiomatize().iter().map(|f| f.to_string()).collect();
            cx.emit(format!("K4 plus\n{}", ax.join("\n")), json!({ "over": "K4", "axioms": ax }));
            Ok(0)
        }
        Command::Projective { formula } => {
            let f = cx.formula(&formula)?;
            match projective::projective(logic, &f)? {
                Projectivity::Projective(u) => {
                    cx.emit(format!("projective\nunifier {u}"), json!({ "projective": true, "unifier": u.to_json() }));
                    Ok(0)
                }
                Projectivity::NotProjective { config, model } => {
                    let t = projective::config_type(&config);
                    cx.emit(
                        format!("not projective: extension of type {t} fails\n{}", model.to_json()),
                        json!({ "projective": false, "extension_type": t.to_string(), "model": model_value(&model) }),
                    );
                    Ok(1)
                }
            }
        }
        Command::Approx { formula } => {
            let f = cx.formula(&formula)?;
            let members = projective::projective_approximation(logic, &f)?;
            let text: Vec<String> = members.iter().map(|m| m.formula.to_string()).collect();
            let items: Vec<Value> = members
                .iter()
                .map(|m| json!({ "formula": m.formula.to_string(), "unifier": m.unifier.to_json() }))
                .collect();
            cx.emit(if text.is_empty() { "empty (not unifiable)".into() } else { text.join("\n") }, json!({ "members": items }));
            Ok(yes(!members.is_empty()))
        }
        Command::Unify { formulas } => {
            let g = cx.formulas(&formulas)?;
            let us = admissibility::unify(logic, &g)?;
            let text: Vec<String> = us.iter().map(|(f, u)| format!("{f}\n  {u}")).collect();
            let items: Vec<Value> =
                us.iter().map(|(f, u)| json!({ "formula": f.to_string(), "unifier": u.to_json() })).collect();
            cx.emit(if text.is_empty() { "not unifiable".into() } else { text.join("\n") }, json!({ "unifiers": items }));
            Ok(yes(!us.is_empty()))
        }
        Command::Admissible { rule, engine, certificate } => {
            let r = cx.rule(&rule)?;
            let engine = match engine {
                EngineArg::A => Engine::A,
                EngineArg::B => Engine::B,
                EngineArg::Both => Engine::Both,
            };
            let d = admissibility::admissible(logic, &r, engine).map_err(|e| match e {
                admissibility::AdmError::Type(t) => Failure::from(t),
                other => Failure::Input(other.to_string()),
            })?;
            if let (Some(path), Some(m)) = (&certificate, &d.model) {
                std::fs::write(path, m.to_json() + "\n").map_err(input)?;
            }
            let mut text = d.verdict.to_string();
            if let Some(u) = &d.unifier {
                text.push_str(&format!("\nunifier of the premises refuting every conclusion: {u}"));
            }
            if let (Some(path), Some(_)) = (&certificate, &d.model) {
                text.push_str(&format!("\ncertificate written to {}", path.display()));
            }
            cx.emit(text, d.to_json());
            match d.verdict {
                Verdict::Admissible => Ok(0),
                Verdict::NotAdmissible => Ok(1),
                Verdict::Undecided(why) => Err(Failure::Cap(why)),
            }
        }
        Command::Certify { rule, model } => {
            let r = cx.rule(&rule)?;
            let m = load_model(&model)?;
            let rep = admissibility::check_certificate(logic, &r, &m)?;
            let text = format!(
                "{}\nL-frame {}\npremises valid {}\nconclusions refuted {}\npseudoextensible {}\nsize {} (bound {})",
                if rep.ok() { "certificate accepted" } else { "certificate rejected" },
                rep.l_frame,
                rep.premises_valid,
                rep.conclusions_refuted,
                rep.pseudoextensible,
                rep.size,
                rep.size_bound
            );
            cx.emit(text, rep.to_json());
            Ok(yes(rep.ok()))
        }
        Command::Basis { kind, max_n, max_params } => {
            if max_n == 0 && logic.bounded_branching().is_none() {
                return Err(Failure::Input("--max-n must be positive".into()));
            }
            let kind = match kind {
                KindArg::Mc => BasisKind::MultiConclusion,
                KindArg::Sc => BasisKind::SingleConclusion,
                KindArg::Indep => BasisKind::Independent,
                KindArg::IndepSc => BasisKind::IndependentSingle,
            };
            let mut lines = Vec::new();
            let mut items = Vec::new();
            for (id, r) in rules::basis(logic, kind, BasisCaps { max_n, max_params }) {
                lines.push(format!("{id}: {r}"));
                items.push(rules::id_json(&id, &r));
            }
            cx.emit(lines.join("\n"), json!({ "finite": rules::has_finite_basis(logic), "rules": items }));
            Ok(0)
        }
        Command::Pext { formulas } => {
            let g = cx.formulas(&formulas)?;
            let rs = rules::pext_rules(logic, &g).map_err(|e| Failure::Cap(e.to_string()))?;
            let lines: Vec<String> = rs.iter().map(|r| r.to_string()).collect();
            cx.emit(lines.join("\n"), json!({ "rules": lines }));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Cap(msg)) => {
            eprintln!("undecided: {msg}");
            ExitCode::from(3)
        }
    }
}

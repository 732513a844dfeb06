//! Command-line surface: fixture generation, K-data computation,
//! reconstruction, verification and the number-field decision pipeline.
//! Every run that reaches a verdict writes a canonical JSON report.

use clap::{Parser, Subcommand};
use profinitek::bostconnes::tower::builtin_rationals;
use profinitek::bostconnes::{
    build_invariant_family, build_truncated_conjugacy, family_from_value, family_to_value,
    field_from_value, field_to_value, match_families, ConjugacyError, MatchVerdict,
};
use profinitek::completions::{cofinal_equivalent, CofinalVerdict};
use profinitek::fixtures::{
    chain_from_value, chain_to_value, ksubgroup_from_value, ksubgroup_to_value, read_fixture,
    sha256_hex, to_canonical_string, write_fixture,
};
use profinitek::gen::seeded_fixture;
use profinitek::kgroups::k_from_chain;
use profinitek::recon::{reconstruct_appendix, reconstruct_pro_n};
use profinitek::report::RunReport;
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "profinitek",
    version,
    about = "Exact reconstruction of profinite completions from K-group data",
    disable_help_subcommand = true
)]
struct Cli {
    /// Output format for verdict summaries on stdout
    #[arg(long, global = true, default_value = "json", value_parser = ["json", "tsv"])]
    format: String,
    /// Report file path (defaults to `<out>.report.json` or `report.json`)
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded regular completion chain fixture
    GenCompletion {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        /// Comma-separated primes of the completion
        #[arg(long, default_value = "2")]
        primes: String,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        /// Largest torsion exponent drawn by the generator
        #[arg(long, default_value_t = 3)]
        max_exp: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the K-data of a chain fixture
    Kdata {
        #[arg(long)]
        input: PathBuf,
        /// Highest exterior degree stored (defaults to the ambient rank)
        #[arg(long)]
        max_degree: Option<usize>,
        /// Drop the provenance tag, simulating invariant-only data
        #[arg(long, default_value_t = false)]
        strip_provenance: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a completion chain from a K-data dump
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "section3", value_parser = ["section3", "appendix", "both"])]
        method: String,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long, default_value_t = 6)]
        budget: usize,
        #[arg(long, default_value_t = 2)]
        coeff_bound: i64,
        /// Optional ground-truth chain for a cofinality verdict
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cofinality verdict between two chain fixtures
    Verify {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long, default_value_t = 3)]
        depth: usize,
    },
    /// Emit the built-in rational-field tower fixture
    GenFieldQ {
        /// Marked support primes
        #[arg(long, default_value = "2,5,7")]
        s: String,
        /// Modulus pool primes (disjoint from the support)
        #[arg(long, default_value = "3,11")]
        pool: String,
        #[arg(long, default_value_t = 3)]
        depth: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Load and validate a tower fixture
    LoadField {
        #[arg(long)]
        input: PathBuf,
    },
    /// Build the invariant family of a field over a modulus pool
    InvariantFamily {
        #[arg(long)]
        field: PathBuf,
        /// Comma-separated pool labels (may be empty)
        #[arg(long, default_value = "")]
        pool: String,
        #[arg(long, default_value_t = 2)]
        depth: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decide matching of two invariant families under a prime bijection
    Match {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        /// Bijection as `a=b,c=d`; defaults to the positional pairing
        #[arg(long)]
        chi: Option<String>,
        #[arg(long, default_value_t = 2)]
        coeff_bound: i64,
    },
    /// Certify a truncated conjugacy of two fields' semigroup actions
    Conjugacy {
        #[arg(long)]
        left_field: PathBuf,
        #[arg(long)]
        right_field: PathBuf,
        #[arg(long)]
        chi: Option<String>,
        /// Level cap: comma-separated pool labels
        #[arg(long, default_value = "")]
        cap: String,
        #[arg(long, default_value_t = 2)]
        m: u32,
        #[arg(long, default_value_t = 2)]
        e: u32,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors go to stderr with the conventional exit code
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(64);
            }
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn parse_primes(s: &str) -> Result<BTreeSet<u64>, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("bad prime `{t}`: {e}")))
        .collect()
}

fn parse_labels(s: &str) -> Vec<String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().to_string())
        .collect()
}

fn parse_u64_list(s: &str) -> Result<Vec<u64>, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("bad prime `{t}`: {e}")))
        .collect()
}

fn emit(report: &RunReport, format: &str, path: &std::path::Path) -> Result<(), String> {
    report
        .write(path)
        .map_err(|e| format!("cannot write report {}: {e}", path.display()))?;
    match format {
        "tsv" => print!("{}", report.to_tsv()),
        _ => print!("{}", to_canonical_string(&report.to_value())),
    }
    Ok(())
}

fn report_path(explicit: &Option<PathBuf>, out_hint: Option<&PathBuf>) -> PathBuf {
    if let Some(p) = explicit {
        return p.clone();
    }
    match out_hint {
        Some(out) => {
            let mut s = out.as_os_str().to_os_string();
            s.push(".report.json");
            PathBuf::from(s)
        }
        None => PathBuf::from("report.json"),
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let started = Instant::now();
    match cli.command {
        Command::GenCompletion { seed, rank, primes, depth, max_exp, out } => {
            let primes = parse_primes(&primes)?;
            if primes.is_empty() {
                return Err("at least one prime is required".into());
            }
            let (spec, chain) = seeded_fixture(seed, rank, &primes, depth, max_exp);
            let hash = write_fixture(&out, &chain_to_value(&chain))
                .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
            let mut report = RunReport::new("gen-completion");
            report
                .parameter("seed", seed)
                .parameter("rank", rank as u64)
                .parameter("depth", depth as u64)
                .parameter("max_exp", max_exp)
                .parameter(
                    "primes",
                    primes.iter().map(|&p| p.to_string()).collect::<Vec<_>>().join(","),
                );
            for (p, ps) in &spec.per_prime {
                report.certificate(
                    &format!("structure_p{p}"),
                    format!("d_p={}, torsion_exponents={:?}", ps.d_p, ps.torsion_exponents),
                );
            }
            report.verdict("generated", true);
            report.fixture_hash("out", hash);
            report.timing("total", started.elapsed().as_secs_f64() * 1e3);
            emit(&report, &cli.format, &report_path(&cli.report, Some(&out)))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Kdata { input, max_degree, strip_provenance, out } => {
            let chain = chain_from_value(&read_fixture(&input).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let max_degree = max_degree.unwrap_or(chain.ambient_rank());
            let k = k_from_chain(&chain, max_degree);
            let mut value = ksubgroup_to_value(&k);
            if strip_provenance {
                let stripped = ksubgroup_from_value(&value, true).map_err(|e| e.to_string())?;
                value = ksubgroup_to_value(&stripped);
            }
            let hash = write_fixture(&out, &value)
                .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
            let mut report = RunReport::new("kdata");
            report
                .parameter("input", input.display().to_string())
                .parameter("max_degree", max_degree as u64)
                .parameter("strip_provenance", strip_provenance);
            report.verdict("computed", true);
            report.certificate("certified", k.is_certified() && !strip_provenance);
            report.fixture_hash(
                "input",
                sha256_hex(&std::fs::read(&input).map_err(|e| e.to_string())?),
            );
            report.fixture_hash("out", hash);
            report.timing("total", started.elapsed().as_secs_f64() * 1e3);
            emit(&report, &cli.format, &report_path(&cli.report, Some(&out)))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Reconstruct { input, method, depth, budget, coeff_bound, truth, out } => {
            let k = ksubgroup_from_value(&read_fixture(&input).map_err(|e| e.to_string())?, false)
                .map_err(|e| e.to_string())?;
            let mut report = RunReport::new("reconstruct");
            report
                .parameter("input", input.display().to_string())
                .parameter("method", method.clone())
                .parameter("depth", depth as u64)
                .parameter("budget", budget as u64)
                .parameter("coeff_bound", coeff_bound);
            let mut chains = Vec::new();
            if method == "section3" || method == "both" {
                let t0 = Instant::now();
                let c = reconstruct_pro_n(&k, depth, coeff_bound, budget)
                    .map_err(|e| format!("section3 reconstruction failed: {e}"))?;
                report.timing("section3", t0.elapsed().as_secs_f64() * 1e3);
                chains.push(("section3", c));
            }
            if method == "appendix" || method == "both" {
                let t0 = Instant::now();
                let c = reconstruct_appendix(&k, depth)
                    .map_err(|e| format!("appendix reconstruction failed: {e}"))?;
                report.timing("appendix", t0.elapsed().as_secs_f64() * 1e3);
                chains.push(("appendix", c));
            }
            let mut exit = ExitCode::SUCCESS;
            if chains.len() == 2 {
                let probe = chains
                    .iter()
                    .map(|(_, c)| c.depth())
                    .min()
                    .unwrap_or(1)
                    .saturating_sub(1)
                    .max(1);
                let v = cofinal_equivalent(&chains[0].1, &chains[1].1, probe);
                report.verdict("cross", verdict_str(&v));
                if !v.is_equivalent() {
                    exit = ExitCode::from(2);
                }
            }
            if let Some(truth_path) = truth {
                let truth_chain =
                    chain_from_value(&read_fixture(&truth_path).map_err(|e| e.to_string())?)
                        .map_err(|e| e.to_string())?;
                let probe = depth.min(3);
                for (name, c) in &chains {
                    let v = cofinal_equivalent(c, &truth_chain, probe);
                    report.verdict(&format!("truth_{name}"), verdict_str(&v));
                    if !v.is_equivalent() {
                        exit = ExitCode::from(2);
                    }
                }
                report.fixture_hash(
                    "truth",
                    sha256_hex(&std::fs::read(&truth_path).map_err(|e| e.to_string())?),
                );
            }
            for (name, c) in &chains {
                report.certificate(
                    &format!("{name}_levels"),
                    format!(
                        "depth={}, indices={:?}",
                        c.depth(),
                        (1..=c.depth()).map(|k| c.level_index(k).to_string()).collect::<Vec<_>>()
                    ),
                );
            }
            report.certificate("input_certified", k.is_certified());
            let primary = &chains[0].1;
            let hash = write_fixture(&out, &chain_to_value(primary))
                .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
            report.fixture_hash("out", hash);
            if chains.len() == 2 {
                let mut alt = out.as_os_str().to_os_string();
                alt.push(".appendix.json");
                let alt = PathBuf::from(alt);
                let hash = write_fixture(&alt, &chain_to_value(&chains[1].1))
                    .map_err(|e| format!("cannot write {}: {e}", alt.display()))?;
                report.fixture_hash("out_appendix", hash);
            }
            report.fixture_hash(
                "input",
                sha256_hex(&std::fs::read(&input).map_err(|e| e.to_string())?),
            );
            report.timing("total", started.elapsed().as_secs_f64() * 1e3);
            emit(&report, &cli.format, &report_path(&cli.report, Some(&out)))?;
            Ok(exit)
        }
        Command::Verify { left, right, depth } => {
            let a = chain_from_value(&read_fixture(&left).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let b = chain_from_value(&read_fixture(&right).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            if a.ambient_rank() != b.ambient_rank() {
                return Err("chains live in different ambient ranks".into());
            }
            let v = cofinal_equivalent(&a, &b, depth);
            let mut report = RunReport::new("verify");
            report
                .parameter("left", left.display().to_string())
                .parameter("right", right.display().to_string())
                .parameter("depth", depth as u64);
            report.verdict("cofinal", verdict_str(&v));
            if let CofinalVerdict::Equivalent { forward, backward } = &v {
                report.certificate("forward_witnesses", format!("{forward:?}"));
                report.certificate("backward_witnesses", format!("{backward:?}"));
            }
            report.fixture_hash("left", sha256_hex(&std::fs::read(&left).map_err(|e| e.to_string())?));
            report.fixture_hash("right", sha256_hex(&std::fs::read(&right).map_err(|e| e.to_string())?));
            report.timing("total", started.elapsed().as_secs_f64() * 1e3);
            emit(&report, &cli.format, &report_path(&cli.report, None))?;
            Ok(if v.is_equivalent() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::GenFieldQ { s, pool, depth, out } => {
            let s = parse_u64_list(&s)?;
            let pool = parse_u64_list(&pool)?;
            let field = builtin_rationals(&s, &pool, depth).map_err(|e| e.to_string())?;
            let hash = write_fixture(&out, &field_to_value(&field))
                .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
            let mut report = RunReport::new("gen-field-q");
            report
                .parameter("s", s.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","))
                .parameter("pool", pool.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","))
                .parameter("depth", depth);
            report.verdict("generated", true);
            report.certificate("tower_entries", field.tower.len() as u64);
            report.fixture_hash("out", hash);
            report.timing("total", started.elapsed().as_secs_f64() * 1e3);
            emit(&report, &cli.format, &report_path(&cli.report, Some(&out)))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::LoadField { input } => {
            let field = field_from_value(&read_fixture(&input).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let mut report = RunReport::new("load-field");
            report.parameter("input", input.display().to_string());
            report.verdict("valid", true);
            report.certificate("label", field.label.clone());
            report.certificate("h1", field.h1.to_string());
            report.certificate("tower_entries", field.tower.len() as u64);
            report.fixture_hash(
                "input",
                sha256_hex(&std::fs::read(&input).map_err(|e| e.to_string())?),
            );
            report.timing("total", started.elapsed().as_secs_f64() * 1e3);
            emit(&report, &cli.format, &report_path(&cli.report, None))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::InvariantFamily { field, pool, depth, out } => {
            let f = field_from_value(&read_fixture(&field).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let pool = parse_labels(&pool);
            let family = build_invariant_family(&f, &pool, depth).map_err(|e| e.to_string())?;
            let hash = write_fixture(&out, &family_to_value(&family))
                .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
            let mut report = RunReport::new("invariant-family");
            report
                .parameter("field", field.display().to_string())
                .parameter("pool", pool.join(","))
                .parameter("depth", depth);
            report.verdict("built", true);
            report.certificate("levels", family.levels.len() as u64);
            report.fixture_hash("out", hash);
            report.timing("total", started.elapsed().as_secs_f64() * 1e3);
            emit(&report, &cli.format, &report_path(&cli.report, Some(&out)))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Match { left, right, chi, coeff_bound } => {
            let fam_l = family_from_value(&read_fixture(&left).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let fam_r = family_from_value(&read_fixture(&right).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let chi = bijection(&chi, &fam_l.truncation.labels(), &fam_r.truncation.labels())?;
            let verdict =
                match_families(&fam_l, &fam_r, &chi, coeff_bound).map_err(|e| e.to_string())?;
            let mut report = RunReport::new("match");
            report
                .parameter("left", left.display().to_string())
                .parameter("right", right.display().to_string())
                .parameter("coeff_bound", coeff_bound)
                .parameter(
                    "chi",
                    chi.iter().map(|(a, b)| format!("{a}={b}")).collect::<Vec<_>>().join(","),
                );
            let exit = match &verdict {
                MatchVerdict::Conjugacy(data) => {
                    report.verdict("match", "conjugacy-data");
                    report.certificate("h", data.h.to_string());
                    for (f, lm) in &data.levels {
                        let key = if f.is_empty() { "root".to_string() } else { f.join("_") };
                        report.certificate(
                            &format!("level_{key}"),
                            format!(
                                "transported_equal={}, witnesses_fwd={:?}, witnesses_bwd={:?}",
                                lm.transported_equal, lm.forward_witnesses, lm.backward_witnesses
                            ),
                        );
                    }
                    ExitCode::SUCCESS
                }
                MatchVerdict::Mismatch { stage, detail } => {
                    report.verdict("match", format!("mismatch:{stage}"));
                    report.certificate("detail", detail.clone());
                    ExitCode::from(2)
                }
            };
            report.fixture_hash("left", sha256_hex(&std::fs::read(&left).map_err(|e| e.to_string())?));
            report.fixture_hash("right", sha256_hex(&std::fs::read(&right).map_err(|e| e.to_string())?));
            report.timing("total", started.elapsed().as_secs_f64() * 1e3);
            emit(&report, &cli.format, &report_path(&cli.report, None))?;
            Ok(exit)
        }
        Command::Conjugacy { left_field, right_field, chi, cap, m, e } => {
            let fk = field_from_value(&read_fixture(&left_field).map_err(|er| er.to_string())?)
                .map_err(|er| er.to_string())?;
            let fl = field_from_value(&read_fixture(&right_field).map_err(|er| er.to_string())?)
                .map_err(|er| er.to_string())?;
            let chi = bijection(&chi, &fk.prime_labels(), &fl.prime_labels())?;
            let cap = parse_labels(&cap);
            let mut report = RunReport::new("conjugacy");
            report
                .parameter("left_field", left_field.display().to_string())
                .parameter("right_field", right_field.display().to_string())
                .parameter("cap", cap.join(","))
                .parameter("m", m)
                .parameter("e", e)
                .parameter(
                    "chi",
                    chi.iter().map(|(a, b)| format!("{a}={b}")).collect::<Vec<_>>().join(","),
                );
            let exit = match build_truncated_conjugacy(&fk, &fl, &chi, &cap, m, e) {
                Ok((_, cert)) => {
                    report.verdict("conjugacy", "certified");
                    report.certificate("states", cert.states as u64);
                    report.certificate("action_checks", cert.action_checks as u64);
                    report.certificate("transition_checks", cert.transition_checks as u64);
                    ExitCode::SUCCESS
                }
                Err(ConjugacyError::EquivarianceFailure { state, generator }) => {
                    report.verdict("conjugacy", "equivariance-failure");
                    report.certificate("state", state);
                    report.certificate("generator", generator);
                    ExitCode::from(2)
                }
                Err(ConjugacyError::PhiIllDefined(f, mv, detail)) => {
                    report.verdict("conjugacy", "mismatch:quotient-map");
                    report.certificate("detail", format!("F={f:?}, m={mv:?}: {detail}"));
                    ExitCode::from(2)
                }
                Err(other) => return Err(other.to_string()),
            };
            report.timing("total", started.elapsed().as_secs_f64() * 1e3);
            emit(&report, &cli.format, &report_path(&cli.report, None))?;
            Ok(exit)
        }
    }
}

fn verdict_str(v: &CofinalVerdict) -> String {
    match v {
        CofinalVerdict::Equivalent { .. } => "equivalent".into(),
        CofinalVerdict::NotEquivalent { level, .. } => format!("not-equivalent@{level}"),
    }
}

/// Parses `a=b,c=d`, or falls back to the positional pairing of the two
/// declared prime lists.
fn bijection(
    spec: &Option<String>,
    left: &[String],
    right: &[String],
) -> Result<BTreeMap<String, String>, String> {
    match spec {
        Some(s) => {
            let mut out = BTreeMap::new();
            for pair in s.split(',').filter(|t| !t.trim().is_empty()) {
                let mut it = pair.splitn(2, '=');
                let a = it.next().unwrap_or("").trim();
                let b = it.next().ok_or_else(|| format!("bad pair `{pair}`"))?.trim();
                out.insert(a.to_string(), b.to_string());
            }
            Ok(out)
        }
        None => {
            if left.len() != right.len() {
                return Err("prime lists have different lengths; pass --chi".into());
            }
            Ok(left.iter().cloned().zip(right.iter().cloned()).collect())
        }
    }
}

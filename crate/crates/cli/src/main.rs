//! `subdyn`: batch front end for the subdyn library. Parses JSON inputs,
//! dispatches to the library modules, and emits a JSON report. Exit codes:
//! 0 = certified/true, 1 = falsified/false (witness in the report),
//! 2 = inconclusive (budget or search range exhausted), 3 = input error.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use num::rational::BigRational;
use num::BigInt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use subdyn_core::chabauty::{ball_signature, chabauty_dist, env_contains, ChabautyDist};
use subdyn_core::irs::{
    check_cover, condition, env_measure, induce, intersect_irs, restrict, stabilizer_irs,
    AtomicIRS, FiniteAction, IrsError,
};
use subdyn_core::projdyn::{
    canonical_fixed_data, cartan, contraction_data, double_coset_free_family, is_very_proximal,
    pingpong_certify, synthesize_coset_element, Arena, Ball, CartanField, Constants,
    CosetGroupSpec, CosetRequest, HBall, Mat, PadicField, PingPongOutcome, ProjError,
    ProjHyperplane, ProjPoint, ProximalityOutcome, RealField, ValuedField,
};
use subdyn_core::recurrence::{build_tower, recurrence_bound, verify_bound, FiniteMPSystem};
use subdyn_core::stabtop::{
    in_recurrent_subbasis, independent_tuple, intersection_element, IntersectionTrace,
    StabtopError,
};
use subdyn_core::stallings::CoreGraph;
use subdyn_core::words::Word;

// ---------------------------------------------------------------------------
// Command line shape.
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(name = "subdyn", version, about = "subgroup algebra and projective dynamics")]
struct Cli {
    /// RNG seed for every sampled check; echoed in the report.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Override the p-adic working precision (digits).
    #[arg(long, global = true)]
    precision: Option<u32>,
    /// Override the real comparison tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Sampling budget for falsifiers and certifications.
    #[arg(long, global = true, default_value_t = 2000)]
    budget: usize,
    /// Write the JSON report to this path instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Omit the timestamp for byte-identical reruns.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Free-group subgroup algebra on JSON subgroup descriptors.
    #[command(subcommand)]
    Fg(FgCmd),
    /// Finite-precision Chabauty topology.
    #[command(subcommand)]
    Chabauty(ChabautyCmd),
    /// Finitely supported invariant random subgroups.
    #[command(subcommand)]
    Irs(IrsCmd),
    /// Stabilizer-topology constructions.
    #[command(subcommand)]
    Stabtop(StabtopCmd),
    /// Quantitative Poincare recurrence on finite systems.
    #[command(subcommand)]
    Recur(RecurCmd),
    /// Projective dynamics over R and Q_p.
    #[command(subcommand)]
    Projdyn(ProjdynCmd),
}

#[derive(Subcommand)]
enum FgCmd {
    /// Membership of a word in a subgroup.
    Contains {
        file: PathBuf,
        #[arg(long)]
        word: String,
    },
    /// Intersection of two subgroups (Howson).
    Intersect { file1: PathBuf, file2: PathBuf },
    /// Index of a subgroup (null when infinite).
    Index { file: PathBuf },
    /// Free rank of a subgroup.
    Rank { file: PathBuf },
    /// A free basis of a subgroup.
    Basis { file: PathBuf },
    /// Conjugate subgroup g^{-1} H g.
    Conjugate {
        file: PathBuf,
        #[arg(long)]
        word: String,
    },
}

#[derive(Subcommand)]
enum ChabautyCmd {
    /// Truncated dyadic Chabauty distance.
    Dist {
        file1: PathBuf,
        file2: PathBuf,
        #[arg(long, default_value_t = 6)]
        radius: usize,
    },
    /// Ball signature: sorted member words up to the radius.
    Signature {
        file: PathBuf,
        #[arg(long, default_value_t = 4)]
        radius: usize,
    },
    /// Whether the envelope of Sigma contains D (Sigma <= D).
    Env { d: PathBuf, sigma: PathBuf },
}

#[derive(Subcommand)]
enum IrsCmd {
    /// Stabilizer distribution of a finite measure-preserving action.
    Build { action: PathBuf },
    /// Restrict a distribution to a subgroup (atomwise intersection).
    Restrict { irs: PathBuf, sigma: PathBuf },
    /// Induce a Sigma-invariant distribution back up to the whole group.
    Induce { irs: PathBuf, sigma: PathBuf },
    /// Atomwise intersection of two distributions.
    Intersect { irs1: PathBuf, irs2: PathBuf },
    /// Envelope measure of a subgroup.
    Env { irs: PathBuf, sigma: PathBuf },
    /// Whether the envelopes of the family cover the support.
    Cover {
        irs: PathBuf,
        family: Vec<PathBuf>,
    },
    /// Condition on the envelope event of a subgroup.
    Condition { irs: PathBuf, sigma: PathBuf },
}

#[derive(Subcommand)]
enum StabtopCmd {
    /// Nontrivial element of a finite intersection of subgroups.
    IntersectElement {
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 30)]
        bound: usize,
    },
    /// One free-rank-J tuple, one element per subgroup.
    Independent {
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 8)]
        power_bound: usize,
    },
    /// Membership of Delta in the recurrent sub-basis of a family.
    SubbasisCheck {
        delta: PathBuf,
        family: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RecurInput {
    sys: PathBuf,
    /// Base set A as comma-separated 0-indexed points.
    #[arg(long = "A")]
    a: String,
}

#[derive(Subcommand)]
enum RecurCmd {
    /// Kakutani-Rokhlin tower over the base set.
    Tower {
        #[command(flatten)]
        input: RecurInput,
    },
    /// Least n with tower tail mass below eps.
    Bound {
        #[command(flatten)]
        input: RecurInput,
        #[arg(long)]
        eps: String,
    },
    /// Verify the recurrence display for every window start N <= nmax.
    Verify {
        #[command(flatten)]
        input: RecurInput,
        #[arg(long)]
        eps: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        nmax: usize,
    },
}

#[derive(Subcommand)]
enum ProjdynCmd {
    /// Sorted absolute Cartan components of a matrix.
    Cartan { file: PathBuf },
    /// Contraction estimate, attracting direction, repelling hyperplane.
    Contract { file: PathBuf },
    /// Certify (r, eps)-very-proximality.
    Proximal {
        file: PathBuf,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        eps: f64,
    },
    /// Canonical fixed data by power iteration.
    Fixdata {
        file: PathBuf,
        #[arg(long, default_value_t = 500)]
        maxiter: usize,
    },
    /// Certify a ping-pong tuple (canonical or explicit arenas).
    Pingpong { file: PathBuf },
    /// Synthesize one element of a prescribed double coset.
    Synthesize { file: PathBuf },
    /// Synthesize and jointly certify a free family in double cosets.
    Family { file: PathBuf },
}

// ---------------------------------------------------------------------------
// Report plumbing.
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    fn code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }
    fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "certified",
            Verdict::Fail => "falsified",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

struct CliError(String);

impl<E: Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

type Outcome = Result<(Verdict, Value), CliError>;

fn main() {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match run(&cli) {
        Ok((verdict, result)) => {
            let mut report = json!({
                "tool": "subdyn",
                "version": env!("CARGO_PKG_VERSION"),
                "command": argv.join(" "),
                "seed": cli.seed,
                "budget": cli.budget,
                "constants": {
                    "c": Constants::default().c,
                    "c1": Constants::default().c1,
                    "c2": Constants::default().c2,
                },
                "verdict": verdict.label(),
                "result": result,
            });
            if let Some(t) = cli.tolerance {
                report["tolerance"] = json!(t);
            }
            if let Some(p) = cli.precision {
                report["precision"] = json!(p);
            }
            if !cli.no_timestamp {
                let now = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                report["timestamp"] = json!(now);
            }
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            match &cli.out {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, text + "\n") {
                        eprintln!("{{\"error\": \"cannot write report: {e}\"}}");
                        std::process::exit(3);
                    }
                }
                None => println!("{text}"),
            }
            std::process::exit(verdict.code());
        }
        Err(CliError(msg)) => {
            eprintln!("{}", json!({ "error": msg }));
            std::process::exit(3);
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    match &cli.command {
        Command::Fg(cmd) => run_fg(cmd),
        Command::Chabauty(cmd) => run_chabauty(cmd),
        Command::Irs(cmd) => run_irs(cmd),
        Command::Stabtop(cmd) => run_stabtop(cmd),
        Command::Recur(cmd) => run_recur(cmd),
        Command::Projdyn(cmd) => run_projdyn(cmd, cli, &mut rng),
    }
}

// ---------------------------------------------------------------------------
// JSON input formats. Unknown keys are rejected everywhere.
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubgroupJson {
    rank: usize,
    generators: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionJson {
    rank: usize,
    points: usize,
    weights: Vec<String>,
    perms: std::collections::BTreeMap<String, Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IrsJson {
    atoms: Vec<AtomJson>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomJson {
    subgroup: SubgroupJson,
    weight: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldJson {
    #[serde(rename = "type")]
    kind: String,
    p: Option<u32>,
    digits: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixJson {
    field: FieldJson,
    n: usize,
    entries: Vec<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BallJson {
    center: Vec<String>,
    radius: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HBallJson {
    functional: Vec<String>,
    radius: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArenaJson {
    attract: BallJson,
    attract_inv: BallJson,
    repel: HBallJson,
    repel_inv: HBallJson,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PingPongJson {
    field: FieldJson,
    n: usize,
    elements: Vec<Vec<Vec<String>>>,
    /// Very-proximality parameters for canonically derived arenas.
    r: Option<f64>,
    eps: Option<f64>,
    /// Explicit arenas, overriding the canonical derivation.
    arenas: Option<Vec<ArenaJson>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthesizeJson {
    field: FieldJson,
    n: usize,
    bp: Vec<Vec<String>>,
    bq: Vec<Vec<String>>,
    x: Option<Vec<Vec<String>>>,
    y: Option<Vec<Vec<String>>>,
    gamma: Option<Vec<Vec<String>>>,
    r: f64,
    eps: f64,
    lmax: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupSpecJson {
    gens: Vec<String>,
    b: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestJson {
    p: usize,
    q: usize,
    gamma: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyJson {
    field: FieldJson,
    n: usize,
    rho: Vec<Vec<Vec<String>>>,
    groups: Vec<GroupSpecJson>,
    gammas: Vec<String>,
    requests: Vec<RequestJson>,
    r: f64,
    eps: f64,
    lmax: usize,
    retries: Option<usize>,
}

// ---------------------------------------------------------------------------
// Parsing helpers.
// ---------------------------------------------------------------------------

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError(format!("{}: {e}", path.display())))
}

fn parse_rat(s: &str) -> Result<BigRational, CliError> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n = BigInt::from_str(num).map_err(|e| CliError(format!("bad rational {s:?}: {e}")))?;
    let d = BigInt::from_str(den).map_err(|e| CliError(format!("bad rational {s:?}: {e}")))?;
    if d == BigInt::from(0) {
        return Err(CliError(format!("bad rational {s:?}: zero denominator")));
    }
    Ok(BigRational::new(n, d))
}

fn rat_str(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn load_subgroup(path: &Path) -> Result<CoreGraph, CliError> {
    let raw: SubgroupJson = read_json(path)?;
    subgroup_from_json(&raw)
}

fn subgroup_from_json(raw: &SubgroupJson) -> Result<CoreGraph, CliError> {
    let gens = raw
        .generators
        .iter()
        .map(|s| Word::parse(raw.rank, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CoreGraph::from_generators(raw.rank, &gens)?)
}

fn subgroup_json(g: &CoreGraph) -> Value {
    json!({
        "rank": g.rank_ambient(),
        "generators": g.basis().iter().map(|w| w.to_string()).collect::<Vec<_>>(),
    })
}

fn load_irs(path: &Path) -> Result<AtomicIRS, CliError> {
    let raw: IrsJson = read_json(path)?;
    if raw.atoms.is_empty() {
        return Err(CliError(format!("{}: empty atom list", path.display())));
    }
    let rank = raw.atoms[0].subgroup.rank;
    let atoms = raw
        .atoms
        .iter()
        .map(|a| Ok((subgroup_from_json(&a.subgroup)?, parse_rat(&a.weight)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(AtomicIRS::new(rank, atoms)?)
}

fn irs_json(mu: &AtomicIRS) -> Value {
    json!({
        "atoms": mu
            .atoms()
            .iter()
            .map(|(g, w)| json!({ "subgroup": subgroup_json(g), "weight": rat_str(w) }))
            .collect::<Vec<_>>(),
    })
}

fn load_action(path: &Path) -> Result<FiniteAction, CliError> {
    let raw: ActionJson = read_json(path)?;
    let weights = raw
        .weights
        .iter()
        .map(|w| parse_rat(w))
        .collect::<Result<Vec<_>, _>>()?;
    let mut perms = Vec::with_capacity(raw.rank);
    for i in 0..raw.rank {
        let key = ((b'a' + i as u8) as char).to_string();
        let perm = raw
            .perms
            .get(&key)
            .ok_or_else(|| CliError(format!("missing permutation for generator {key:?}")))?;
        perms.push(perm_from_json(perm, raw.points)?);
    }
    Ok(FiniteAction::new(raw.rank, weights, perms)?)
}

/// Permutations in JSON are 1-indexed images; internally 0-indexed.
fn perm_from_json(perm: &[usize], points: usize) -> Result<Vec<usize>, CliError> {
    if perm.len() != points {
        return Err(CliError(format!(
            "permutation length {} does not match points {points}",
            perm.len()
        )));
    }
    perm.iter()
        .map(|&x| {
            if (1..=points).contains(&x) {
                Ok(x - 1)
            } else {
                Err(CliError(format!("permutation image {x} out of 1..={points}")))
            }
        })
        .collect()
}

fn load_system(path: &Path) -> Result<FiniteMPSystem, CliError> {
    let raw: ActionJson = read_json(path)?;
    let weights = raw
        .weights
        .iter()
        .map(|w| parse_rat(w))
        .collect::<Result<Vec<_>, _>>()?;
    let t = raw
        .perms
        .get("T")
        .ok_or_else(|| CliError("system format requires the single permutation key \"T\"".into()))?;
    if raw.perms.len() != 1 {
        return Err(CliError("system format admits only the permutation key \"T\"".into()));
    }
    Ok(FiniteMPSystem::new(weights, perm_from_json(t, raw.points)?)?)
}

fn parse_set(s: &str, points: usize) -> Result<BTreeSet<usize>, CliError> {
    let mut out = BTreeSet::new();
    for part in s.split(',') {
        let x: usize = part
            .trim()
            .parse()
            .map_err(|e| CliError(format!("bad set element {part:?}: {e}")))?;
        if x >= points {
            return Err(CliError(format!("set element {x} out of 0..{points}")));
        }
        out.insert(x);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// fg / chabauty.
// ---------------------------------------------------------------------------

fn run_fg(cmd: &FgCmd) -> Outcome {
    match cmd {
        FgCmd::Contains { file, word } => {
            let g = load_subgroup(file)?;
            let w = Word::parse(g.rank_ambient(), word)?;
            let hit = g.contains(&w)?;
            let verdict = if hit { Verdict::Pass } else { Verdict::Fail };
            Ok((verdict, json!({ "contains": hit, "word": w.to_string() })))
        }
        FgCmd::Intersect { file1, file2 } => {
            let g1 = load_subgroup(file1)?;
            let g2 = load_subgroup(file2)?;
            let k = g1.intersect(&g2)?;
            Ok((Verdict::Pass, json!({ "intersection": subgroup_json(&k) })))
        }
        FgCmd::Index { file } => {
            let g = load_subgroup(file)?;
            Ok((Verdict::Pass, json!({ "index": g.index() })))
        }
        FgCmd::Rank { file } => {
            let g = load_subgroup(file)?;
            Ok((Verdict::Pass, json!({ "rank": g.free_rank() })))
        }
        FgCmd::Basis { file } => {
            let g = load_subgroup(file)?;
            Ok((
                Verdict::Pass,
                json!({ "basis": g.basis().iter().map(|w| w.to_string()).collect::<Vec<_>>() }),
            ))
        }
        FgCmd::Conjugate { file, word } => {
            let g = load_subgroup(file)?;
            let w = Word::parse(g.rank_ambient(), word)?;
            let c = g.conjugate_subgroup(&w)?;
            Ok((Verdict::Pass, json!({ "conjugate": subgroup_json(&c) })))
        }
    }
}

fn run_chabauty(cmd: &ChabautyCmd) -> Outcome {
    match cmd {
        ChabautyCmd::Dist { file1, file2, radius } => {
            let g1 = load_subgroup(file1)?;
            let g2 = load_subgroup(file2)?;
            let d = chabauty_dist(&g1, &g2, *radius)?;
            let result = match &d {
                ChabautyDist::DifferAt { radius, dist } => {
                    json!({ "differ_at": radius, "dist": rat_str(dist) })
                }
                ChabautyDist::AgreeUpTo { rmax } => {
                    json!({ "agree_up_to": rmax, "dist_at_most": rat_str(&d.upper_bound()) })
                }
            };
            Ok((Verdict::Pass, result))
        }
        ChabautyCmd::Signature { file, radius } => {
            let g = load_subgroup(file)?;
            let sig = ball_signature(&g, *radius)?;
            Ok((
                Verdict::Pass,
                json!({
                    "radius": sig.radius,
                    "words": sig.words.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
                }),
            ))
        }
        ChabautyCmd::Env { d, sigma } => {
            let dd = load_subgroup(d)?;
            let ss = load_subgroup(sigma)?;
            let hit = env_contains(&dd, &ss)?;
            let verdict = if hit { Verdict::Pass } else { Verdict::Fail };
            Ok((verdict, json!({ "env_contains": hit })))
        }
    }
}

// ---------------------------------------------------------------------------
// irs.
// ---------------------------------------------------------------------------

fn run_irs(cmd: &IrsCmd) -> Outcome {
    match cmd {
        IrsCmd::Build { action } => {
            let a = load_action(action)?;
            let mu = stabilizer_irs(&a)?;
            let invariant = mu.is_invariant()?;
            let verdict = if invariant { Verdict::Pass } else { Verdict::Fail };
            Ok((verdict, json!({ "irs": irs_json(&mu), "invariant": invariant })))
        }
        IrsCmd::Restrict { irs, sigma } => {
            let mu = load_irs(irs)?;
            let s = load_subgroup(sigma)?;
            let nu = restrict(&mu, &s)?;
            Ok((Verdict::Pass, json!({ "irs": irs_json(&nu) })))
        }
        IrsCmd::Induce { irs, sigma } => {
            let mu = load_irs(irs)?;
            let s = load_subgroup(sigma)?;
            let nu = induce(&mu, &s)?;
            let invariant = nu.is_invariant()?;
            let verdict = if invariant { Verdict::Pass } else { Verdict::Fail };
            Ok((verdict, json!({ "irs": irs_json(&nu), "invariant": invariant })))
        }
        IrsCmd::Intersect { irs1, irs2 } => {
            let mu1 = load_irs(irs1)?;
            let mu2 = load_irs(irs2)?;
            let nu = intersect_irs(&mu1, &mu2)?;
            Ok((Verdict::Pass, json!({ "irs": irs_json(&nu) })))
        }
        IrsCmd::Env { irs, sigma } => {
            let mu = load_irs(irs)?;
            let s = load_subgroup(sigma)?;
            let m = env_measure(&mu, &s)?;
            Ok((Verdict::Pass, json!({ "measure": rat_str(&m) })))
        }
        IrsCmd::Cover { irs, family } => {
            let mu = load_irs(irs)?;
            let fam = family
                .iter()
                .map(|p| load_subgroup(p))
                .collect::<Result<Vec<_>, _>>()?;
            match check_cover(&mu, &fam)? {
                None => Ok((Verdict::Pass, json!({ "covered": true }))),
                Some(atom) => Ok((
                    Verdict::Fail,
                    json!({ "covered": false, "uncovered_atom": subgroup_json(&atom) }),
                )),
            }
        }
        IrsCmd::Condition { irs, sigma } => {
            let mu = load_irs(irs)?;
            let s = load_subgroup(sigma)?;
            match condition(&mu, |g| env_contains(g, &s).unwrap_or(false)) {
                Ok((mass, nu)) => Ok((
                    Verdict::Pass,
                    json!({ "mass": rat_str(&mass), "irs": irs_json(&nu) }),
                )),
                Err(IrsError::NullEvent) => {
                    Ok((Verdict::Fail, json!({ "error": "the envelope event has measure zero" })))
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// stabtop.
// ---------------------------------------------------------------------------

fn trace_json(t: &IntersectionTrace) -> Value {
    match t {
        IntersectionTrace::Base(w) => json!({ "base": w.to_string() }),
        IntersectionTrace::Step { w, u, n, m, left, right } => json!({
            "w": w.to_string(),
            "u": u.to_string(),
            "n": n,
            "m": m,
            "left": trace_json(left),
            "right": trace_json(right),
        }),
    }
}

fn run_stabtop(cmd: &StabtopCmd) -> Outcome {
    match cmd {
        StabtopCmd::IntersectElement { files, bound } => {
            if files.is_empty() {
                return Err(CliError("at least one subgroup file required".into()));
            }
            let deltas = files
                .iter()
                .map(|p| load_subgroup(p))
                .collect::<Result<Vec<_>, _>>()?;
            match intersection_element(&deltas, *bound) {
                Ok((v, trace)) => Ok((
                    Verdict::Pass,
                    json!({ "element": v.to_string(), "trace": trace_json(&trace) }),
                )),
                Err(StabtopError::BoundExhausted(b)) => Ok((
                    Verdict::Inconclusive,
                    json!({ "error": format!("exponent bound {b} exhausted") }),
                )),
                Err(e) => Err(e.into()),
            }
        }
        StabtopCmd::Independent { files, power_bound } => {
            if files.is_empty() {
                return Err(CliError("at least one subgroup file required".into()));
            }
            let deltas = files
                .iter()
                .map(|p| load_subgroup(p))
                .collect::<Result<Vec<_>, _>>()?;
            match independent_tuple(&deltas, *power_bound) {
                Ok(w) => Ok((
                    Verdict::Pass,
                    json!({
                        "elements": w.elements.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                        "rank": w.rank_check,
                    }),
                )),
                Err(StabtopError::BoundExhausted(b)) => Ok((
                    Verdict::Inconclusive,
                    json!({ "error": format!("power bound {b} exhausted") }),
                )),
                Err(e) => Err(e.into()),
            }
        }
        StabtopCmd::SubbasisCheck { delta, family } => {
            let d = load_subgroup(delta)?;
            let fam = family
                .iter()
                .map(|p| load_subgroup(p))
                .collect::<Result<Vec<_>, _>>()?;
            let hit = in_recurrent_subbasis(&d, &fam)?;
            let verdict = if hit { Verdict::Pass } else { Verdict::Fail };
            Ok((verdict, json!({ "in_subbasis": hit })))
        }
    }
}

// ---------------------------------------------------------------------------
// recur.
// ---------------------------------------------------------------------------

fn run_recur(cmd: &RecurCmd) -> Outcome {
    match cmd {
        RecurCmd::Tower { input } => {
            let s = load_system(&input.sys)?;
            let a = parse_set(&input.a, s.points())?;
            let tower = build_tower(&s, &a)?;
            Ok((
                Verdict::Pass,
                json!({
                    "levels": tower
                        .levels
                        .iter()
                        .map(|(m, v)| json!({
                            "return_time": m,
                            "cells": v.iter().collect::<Vec<_>>(),
                            "mass": rat_str(&s.measure(v)),
                        }))
                        .collect::<Vec<_>>(),
                    "max_return": tower.max_return(),
                }),
            ))
        }
        RecurCmd::Bound { input, eps } => {
            let s = load_system(&input.sys)?;
            let a = parse_set(&input.a, s.points())?;
            let eps = parse_rat(eps)?;
            let n = recurrence_bound(&s, &a, &eps)?;
            Ok((Verdict::Pass, json!({ "n": n, "eps": rat_str(&eps) })))
        }
        RecurCmd::Verify { input, eps, n, nmax } => {
            let s = load_system(&input.sys)?;
            let a = parse_set(&input.a, s.points())?;
            let eps = parse_rat(eps)?;
            let ok = verify_bound(&s, &a, *n, &eps, 0..=*nmax);
            let verdict = if ok { Verdict::Pass } else { Verdict::Fail };
            Ok((verdict, json!({ "verified": ok, "n": n, "window_starts": [0, nmax] })))
        }
    }
}

// ---------------------------------------------------------------------------
// projdyn: field dispatch and element serialization.
// ---------------------------------------------------------------------------

trait ElemJson {
    fn json(&self) -> Value;
}

impl ElemJson for f64 {
    fn json(&self) -> Value {
        json!(self)
    }
}

impl ElemJson for BigRational {
    fn json(&self) -> Value {
        Value::String(rat_str(self))
    }
}

enum AnyField {
    Real(RealField),
    Padic(PadicField),
}

fn make_field(raw: &FieldJson, cli: &Cli) -> Result<AnyField, CliError> {
    match raw.kind.as_str() {
        "real" => {
            let tolerance = cli.tolerance.unwrap_or(1e-9);
            Ok(AnyField::Real(RealField { tolerance }))
        }
        "padic" => {
            let p = raw.p.ok_or_else(|| CliError("padic field requires \"p\"".into()))?;
            let digits = cli
                .precision
                .or(raw.digits)
                .ok_or_else(|| CliError("padic field requires \"digits\"".into()))?;
            if p < 2 {
                return Err(CliError("padic prime must be at least 2".into()));
            }
            Ok(AnyField::Padic(PadicField::new(p, digits)))
        }
        other => Err(CliError(format!("unknown field type {other:?}"))),
    }
}

macro_rules! with_field {
    ($any:expr, $f:ident, $body:expr) => {
        match $any {
            AnyField::Real($f) => $body,
            AnyField::Padic($f) => $body,
        }
    };
}

fn parse_mat<F: CartanField>(
    field: &F,
    n: usize,
    entries: &[Vec<String>],
) -> Result<Mat<F>, CliError> {
    if entries.len() != n || entries.iter().any(|r| r.len() != n) {
        return Err(CliError(format!("matrix entries are not {n}x{n}")));
    }
    let rows = entries
        .iter()
        .map(|r| r.iter().map(|s| parse_rat(s)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Mat::from_rationals(field, &rows))
}

fn vec_json<E: ElemJson>(v: &[E]) -> Value {
    Value::Array(v.iter().map(|x| x.json()).collect())
}

fn point_json<F: ValuedField>(p: &ProjPoint<F>) -> Value
where
    F::Elem: ElemJson,
{
    vec_json(&p.coords)
}

fn hyperplane_json<F: ValuedField>(h: &ProjHyperplane<F>) -> Value
where
    F::Elem: ElemJson,
{
    vec_json(&h.functional)
}

fn mat_json<F: ValuedField>(m: &Mat<F>) -> Value
where
    F::Elem: ElemJson,
{
    Value::Array(m.entries.iter().map(|r| vec_json(r)).collect())
}

fn parse_vec<F: ValuedField>(field: &F, raw: &[String], n: usize) -> Result<Vec<F::Elem>, CliError> {
    if raw.len() != n {
        return Err(CliError(format!("expected {n} coordinates, got {}", raw.len())));
    }
    raw.iter()
        .map(|s| Ok(field.from_rational(&parse_rat(s)?)))
        .collect()
}

fn arena_from_json<F: ValuedField>(
    field: &F,
    raw: &ArenaJson,
    n: usize,
) -> Result<Arena<F>, CliError> {
    let ball = |b: &BallJson| -> Result<Ball<F>, CliError> {
        Ok(Ball {
            center: ProjPoint::new(field, &parse_vec(field, &b.center, n)?),
            radius: b.radius,
        })
    };
    let hball = |h: &HBallJson| -> Result<HBall<F>, CliError> {
        Ok(HBall {
            center: ProjHyperplane::new(field, &parse_vec(field, &h.functional, n)?),
            radius: h.radius,
        })
    };
    Ok(Arena {
        attract: ball(&raw.attract)?,
        attract_inv: ball(&raw.attract_inv)?,
        repel: hball(&raw.repel)?,
        repel_inv: hball(&raw.repel_inv)?,
    })
}

fn margins_json(margins: &[(String, f64)]) -> Value {
    Value::Array(
        margins
            .iter()
            .map(|(desc, m)| json!({ "check": desc, "margin": m }))
            .collect(),
    )
}

fn pingpong_outcome_json<F: ValuedField>(outcome: &PingPongOutcome<F>) -> (Verdict, Value)
where
    F::Elem: ElemJson,
{
    match outcome {
        PingPongOutcome::Certified { margins } => {
            (Verdict::Pass, json!({ "certified": true, "margins": margins_json(margins) }))
        }
        PingPongOutcome::Overlap { pair, description, margin } => (
            Verdict::Fail,
            json!({
                "certified": false,
                "overlap": { "pair": [pair.0, pair.1], "check": description, "margin": margin },
            }),
        ),
        PingPongOutcome::Falsified { element, witness } => (
            Verdict::Fail,
            json!({
                "certified": false,
                "falsified": { "element": element, "witness": point_json(witness) },
            }),
        ),
    }
}

fn proj_inconclusive(e: ProjError) -> Outcome {
    match e {
        ProjError::RangeExhausted | ProjError::SearchExhausted | ProjError::NoConvergence(_) => {
            Ok((Verdict::Inconclusive, json!({ "error": e.to_string() })))
        }
        other => Err(other.into()),
    }
}

fn run_projdyn(cmd: &ProjdynCmd, cli: &Cli, rng: &mut ChaCha8Rng) -> Outcome {
    let constants = Constants::default();
    match cmd {
        ProjdynCmd::Cartan { file } => {
            let raw: MatrixJson = read_json(file)?;
            let any = make_field(&raw.field, cli)?;
            with_field!(&any, f, {
                let m = parse_mat(f, raw.n, &raw.entries)?;
                let abs = cartan(f, &m)?;
                Ok((Verdict::Pass, json!({ "abs_values": abs })))
            })
        }
        ProjdynCmd::Contract { file } => {
            let raw: MatrixJson = read_json(file)?;
            let any = make_field(&raw.field, cli)?;
            with_field!(&any, f, {
                let m = parse_mat(f, raw.n, &raw.entries)?;
                match contraction_data(f, &m, constants.c) {
                    Ok(d) => Ok((
                        Verdict::Pass,
                        json!({
                            "eps_est": d.eps_est,
                            "ratio": d.ratio,
                            "attracting": point_json(&d.v),
                            "repelling": hyperplane_json(&d.h),
                        }),
                    )),
                    Err(ProjError::NotContracting) => Ok((
                        Verdict::Fail,
                        json!({ "error": "no Cartan gap at working precision" }),
                    )),
                    Err(e) => Err(e.into()),
                }
            })
        }
        ProjdynCmd::Proximal { file, r, eps } => {
            let raw: MatrixJson = read_json(file)?;
            let any = make_field(&raw.field, cli)?;
            with_field!(&any, f, {
                let m = parse_mat(f, raw.n, &raw.entries)?;
                match is_very_proximal(f, &m, *r, *eps, cli.budget, rng, &constants)? {
                    ProximalityOutcome::Certified(c) => Ok((
                        Verdict::Pass,
                        json!({
                            "certified": true,
                            "r": c.r,
                            "eps": c.eps,
                            "mode": format!("{:?}", c.mode),
                            "margins": c.margins,
                            "max_image_dist": c.max_image_dist,
                            "attracting": point_json(&c.v),
                            "repelling": hyperplane_json(&c.h),
                            "attracting_inv": point_json(&c.v_inv),
                            "repelling_inv": hyperplane_json(&c.h_inv),
                        }),
                    )),
                    ProximalityOutcome::Falsified { reason, witness } => Ok((
                        Verdict::Fail,
                        json!({
                            "certified": false,
                            "reason": reason,
                            "witness": witness.as_ref().map(point_json),
                        }),
                    )),
                }
            })
        }
        ProjdynCmd::Fixdata { file, maxiter } => {
            let raw: MatrixJson = read_json(file)?;
            let any = make_field(&raw.field, cli)?;
            with_field!(&any, f, {
                let m = parse_mat(f, raw.n, &raw.entries)?;
                let tol = f.tol();
                match canonical_fixed_data(f, &m, tol, *maxiter) {
                    Ok((v, h)) => Ok((
                        Verdict::Pass,
                        json!({
                            "fixed_point": point_json(&v),
                            "fixed_hyperplane": hyperplane_json(&h),
                            "tolerance": tol,
                        }),
                    )),
                    Err(e) => proj_inconclusive(e),
                }
            })
        }
        ProjdynCmd::Pingpong { file } => {
            let raw: PingPongJson = read_json(file)?;
            let any = make_field(&raw.field, cli)?;
            with_field!(&any, f, {
                let mats = raw
                    .elements
                    .iter()
                    .map(|e| parse_mat(f, raw.n, e))
                    .collect::<Result<Vec<_>, _>>()?;
                let arenas: Vec<Arena<_>> = match &raw.arenas {
                    Some(list) => {
                        if list.len() != mats.len() {
                            return Err(CliError(
                                "arena count does not match element count".into(),
                            ));
                        }
                        list.iter()
                            .map(|a| arena_from_json(f, a, raw.n))
                            .collect::<Result<Vec<_>, _>>()?
                    }
                    None => {
                        let (r, eps) = match (raw.r, raw.eps) {
                            (Some(r), Some(eps)) => (r, eps),
                            _ => {
                                return Err(CliError(
                                    "canonical arenas require \"r\" and \"eps\"".into(),
                                ))
                            }
                        };
                        let mut out = Vec::with_capacity(mats.len());
                        for (i, m) in mats.iter().enumerate() {
                            match is_very_proximal(f, m, r, eps, cli.budget, rng, &constants)? {
                                ProximalityOutcome::Certified(c) => {
                                    out.push(Arena::canonical(&c))
                                }
                                ProximalityOutcome::Falsified { reason, witness } => {
                                    return Ok((
                                        Verdict::Fail,
                                        json!({
                                            "certified": false,
                                            "element": i,
                                            "reason": reason,
                                            "witness": witness.as_ref().map(point_json),
                                        }),
                                    ))
                                }
                            }
                        }
                        out
                    }
                };
                let tuple: Vec<_> = mats.into_iter().zip(arenas).collect();
                let outcome = pingpong_certify(f, &tuple, cli.budget, rng)?;
                Ok(pingpong_outcome_json(&outcome))
            })
        }
        ProjdynCmd::Synthesize { file } => {
            let raw: SynthesizeJson = read_json(file)?;
            let any = make_field(&raw.field, cli)?;
            with_field!(&any, f, {
                let bp = parse_mat(f, raw.n, &raw.bp)?;
                let bq = parse_mat(f, raw.n, &raw.bq)?;
                let opt = |e: &Option<Vec<Vec<String>>>| -> Result<Mat<_>, CliError> {
                    match e {
                        Some(rows) => parse_mat(f, raw.n, rows),
                        None => Ok(Mat::identity(f, raw.n)),
                    }
                };
                let (x, y, gamma) = (opt(&raw.x)?, opt(&raw.y)?, opt(&raw.gamma)?);
                let mut cert = |m: &Mat<_>, name: &str| match is_very_proximal(
                    f, m, raw.r, raw.eps, cli.budget, rng, &constants,
                ) {
                    Ok(ProximalityOutcome::Certified(c)) => Ok(c),
                    Ok(ProximalityOutcome::Falsified { reason, .. }) => Err(CliError(format!(
                        "{name} is not ({}, {})-very proximal: {reason}",
                        raw.r, raw.eps
                    ))),
                    Err(e) => Err(e.into()),
                };
                let cp = cert(&bp, "bp")?;
                let cq = cert(&bq, "bq")?;
                match synthesize_coset_element(
                    f, &bp, &cp, &bq, &cq, &x, &y, &gamma, 0..=raw.lmax, &constants,
                ) {
                    Ok(s) => Ok((
                        Verdict::Pass,
                        json!({
                            "l1": s.l1,
                            "l2": s.l2,
                            "eps_f": s.eps_f,
                            "margins": s.margins,
                            "f": mat_json(&s.f),
                        }),
                    )),
                    Err(e) => proj_inconclusive(e),
                }
            })
        }
        ProjdynCmd::Family { file } => {
            let raw: FamilyJson = read_json(file)?;
            let any = make_field(&raw.field, cli)?;
            let rank = raw.rho.len();
            let groups = raw
                .groups
                .iter()
                .map(|g| {
                    Ok(CosetGroupSpec {
                        gens: g
                            .gens
                            .iter()
                            .map(|s| Word::parse(rank, s))
                            .collect::<Result<Vec<_>, _>>()?,
                        b: Word::parse(rank, &g.b)?,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let gammas = raw
                .gammas
                .iter()
                .map(|s| Word::parse(rank, s))
                .collect::<Result<Vec<_>, _>>()?;
            let requests: Vec<CosetRequest> = raw
                .requests
                .iter()
                .map(|r| CosetRequest { p: r.p, q: r.q, gamma: r.gamma })
                .collect();
            with_field!(&any, f, {
                let rho = raw
                    .rho
                    .iter()
                    .map(|e| parse_mat(f, raw.n, e))
                    .collect::<Result<Vec<_>, _>>()?;
                let family = double_coset_free_family(
                    f,
                    &rho,
                    &groups,
                    &gammas,
                    &requests,
                    raw.r,
                    raw.eps,
                    0..=raw.lmax,
                    cli.budget,
                    raw.retries.unwrap_or(12),
                    rng,
                    &constants,
                )?;
                let members: Vec<Value> = family
                    .members
                    .iter()
                    .map(|m| {
                        json!({
                            "request": { "p": m.request.p, "q": m.request.q, "gamma": m.request.gamma },
                            "word": m.word.to_string(),
                            "l1": m.synthesis.l1,
                            "l2": m.synthesis.l2,
                            "eps_f": m.synthesis.eps_f,
                            "margins": m.synthesis.margins,
                            "f": mat_json(&m.synthesis.f),
                        })
                    })
                    .collect();
                let failures: Vec<Value> = family
                    .failures
                    .iter()
                    .map(|(req, why)| {
                        json!({
                            "request": { "p": req.p, "q": req.q, "gamma": req.gamma },
                            "reason": why,
                        })
                    })
                    .collect();
                let (verdict, outcome) = match &family.outcome {
                    Some(o) => {
                        let (v, j) = pingpong_outcome_json(o);
                        // A certificate with dropped requests is not a full
                        // answer to the command.
                        let v = if v == Verdict::Pass && !failures.is_empty() {
                            Verdict::Inconclusive
                        } else {
                            v
                        };
                        (v, j)
                    }
                    None => (Verdict::Inconclusive, json!({ "certified": false })),
                };
                Ok((
                    verdict,
                    json!({ "members": members, "failures": failures, "outcome": outcome }),
                ))
            })
        }
    }
}

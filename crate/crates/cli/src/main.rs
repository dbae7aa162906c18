use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbs_mcast::harness::{
    default_densities, read_csv, run_experiment, summarize, write_csv, write_json, ExperimentConfig, MemberCount,
};
use rbs_mcast::keyexchange::{DhParams, MemberId, MemberState, Negotiator};
use rbs_mcast::partition::{RegionKey, STANDARD_BUDGETS};
use rbs_mcast::savi::{SaviRule, SaviTable, Verdict};
use rbs_mcast::topology::{generate_topology, Topology, TopologyConfig};

#[derive(Parser)]
#[command(name = "rbs-mcast", version, about = "Campus multicast domain partitioning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a campus topology and write it as JSON.
    GenTopo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        counts: Counts,
    },
    /// Run the dynamic vs fixed partition sweep and write per-trial rows.
    Run(RunArgs),
    /// Summarize a results CSV per (density, budget) cell.
    Compare {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Walk through a group key exchange and check every member recovers the key.
    Keydemo {
        #[arg(long, default_value_t = 8)]
        members: u32,
        #[arg(long, default_value_t = 256)]
        p_bits: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Members to drop in a follow-up rekey.
        #[arg(long, default_value_t = 1)]
        depart: u32,
    },
    /// Check packets against a SAVI binding table.
    Savi {
        /// One JSON rule per line.
        #[arg(long)]
        rules: PathBuf,
        /// `src,dst,sport,dport`; may be repeated.
        #[arg(long, required = true)]
        check: Vec<String>,
    },
}

#[derive(Args)]
struct Counts {
    #[arg(long)]
    core: Option<u32>,
    #[arg(long)]
    core_edge: Option<u32>,
    #[arg(long)]
    secondary_edge: Option<u32>,
    #[arg(long)]
    user_access: Option<u32>,
    #[arg(long)]
    devices: Option<u32>,
}

impl Counts {
    fn config(&self, seed: u64) -> TopologyConfig {
        let mut c = TopologyConfig::default().seed(seed);
        c.num_core = self.core.unwrap_or(c.num_core);
        c.num_core_edge = self.core_edge.unwrap_or(c.num_core_edge);
        c.num_secondary_edge = self.secondary_edge.unwrap_or(c.num_secondary_edge);
        c.num_user_access = self.user_access.unwrap_or(c.num_user_access);
        c.num_user_device = self.devices.unwrap_or(c.num_user_device);
        c
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Region {
    SecondaryEdge,
    CoreEdge,
}

#[derive(Args)]
struct RunArgs {
    /// Reuse one topology file for every trial.
    #[arg(long, conflicts_with = "gen")]
    topo: Option<PathBuf>,
    /// Generate a fresh topology per trial (the default).
    #[arg(long)]
    gen: bool,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long, value_delimiter = ',')]
    densities: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<u64>>,
    #[arg(long, conflicts_with = "course_sample")]
    members: Option<usize>,
    /// Draw each trial's member count from the course-size table (the default).
    #[arg(long)]
    course_sample: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Region::SecondaryEdge)]
    region: Region,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    counts: Counts,
}

fn gen_topo(seed: u64, out: &PathBuf, counts: &Counts) -> Result<()> {
    let topo = generate_topology(&counts.config(seed)).context("generating topology")?;
    fs::write(out, topo.to_json()).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} nodes and {} links to {}", topo.node_count(), topo.link_count(), out.display());
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let fixed_topology = match &args.topo {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(Topology::from_json(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        None => None,
    };
    let config = ExperimentConfig {
        topology: args.counts.config(args.seed),
        fixed_topology,
        densities: args.densities.clone().unwrap_or_else(default_densities),
        budgets: args.budgets.clone().unwrap_or_else(|| STANDARD_BUDGETS.to_vec()),
        members: args.members.map_or(MemberCount::CourseSample, MemberCount::Exactly),
        trials: args.trials,
        seed: args.seed,
        region_key: match args.region {
            Region::SecondaryEdge => RegionKey::SecondaryEdge,
            Region::CoreEdge => RegionKey::CoreEdge,
        },
    };
    let rows = run_experiment(&config)?;
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_csv(&rows, BufWriter::new(file))?;
    if let Some(path) = &args.json {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_json(&rows, BufWriter::new(file))?;
    }
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn compare(input: &PathBuf) -> Result<()> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let rows = read_csv(BufReader::new(file))?;
    let cells = summarize(&rows);
    ensure!(!cells.is_empty(), "{} has no paired dynamic/fixed rows", input.display());
    let mut out = io::stdout().lock();
    writeln!(out, "density  budget  trials  j_dynamic  j_fixed  reduction_%  util_dynamic  util_fixed")?;
    for c in &cells {
        writeln!(
            out,
            "{:>7.2}  {:>6}  {:>6}  {:>9.3}  {:>7.3}  {:>11.2}  {:>12.3}  {:>10.3}",
            c.density,
            c.budget,
            c.trials,
            c.mean_j_dynamic,
            c.mean_j_fixed,
            c.mean_reduction_pct,
            c.mean_util_dynamic,
            c.mean_util_fixed
        )?;
    }
    Ok(())
}

fn keydemo(members: u32, p_bits: u64, seed: u64, depart: u32) -> Result<()> {
    ensure!(members >= 1, "need at least one member");
    ensure!(depart < members, "cannot drop all {members} members");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = DhParams::generate(p_bits, &mut rng);
    let mut negotiator = Negotiator::setup(params.clone(), &mut rng);
    let mut states = Vec::new();
    for i in 0..members {
        let m = MemberState::generate(&params, negotiator.public_value(), &mut rng)?;
        negotiator.register(MemberId(i), m.public_value())?;
        states.push(m);
    }
    let function = negotiator.distribute(&mut rng)?;
    let y = negotiator.group_key().clone().into();
    for (i, m) in states.iter().enumerate() {
        ensure!(m.recover(&function)? == y, "member {i} recovered the wrong key");
    }
    println!("prime: {p_bits} bits, generator {}", params.generator());
    println!("knots: {} ({} members plus decoys)", function.knots().len(), members);
    println!("all {members} members recovered the group key");

    let departed: Vec<MemberId> = (members - depart..members).map(MemberId).collect();
    let function = negotiator.rekey(&departed, &mut rng)?;
    let y = negotiator.group_key().clone().into();
    for (i, m) in states.iter().enumerate() {
        let leaving = departed.contains(&MemberId(i as u32));
        let got = m.recover(&function).ok();
        if leaving {
            ensure!(got.as_ref() != Some(&y), "departed member {i} still recovers the key");
        } else {
            ensure!(got.as_ref() == Some(&y), "member {i} lost the key after rekey");
        }
    }
    println!("rekey after {depart} departures: remaining members agree, departed members do not");
    Ok(())
}

fn savi(rules: &PathBuf, checks: &[String]) -> Result<()> {
    let file = File::open(rules).with_context(|| format!("opening {}", rules.display()))?;
    let table = SaviTable::load_jsonl(BufReader::new(file)).with_context(|| format!("loading {}", rules.display()))?;
    for c in checks {
        let packet: SaviRule = c.parse().with_context(|| format!("bad packet {c:?}"))?;
        let verdict = match table.validate(&packet) {
            Verdict::Allow => "ALLOW",
            Verdict::Deny => "DENY",
        };
        println!("{verdict} {packet}");
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenTopo { seed, out, counts } => gen_topo(seed, &out, &counts),
        Command::Run(args) => {
            if args.trials == 0 {
                bail!("--trials must be at least 1");
            }
            run(&args)
        }
        Command::Compare { input } => compare(&input),
        Command::Keydemo { members, p_bits, seed, depart } => keydemo(members, p_bits, seed, depart),
        Command::Savi { rules, check } => savi(&rules, &check),
    }
}

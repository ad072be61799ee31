use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use wsn_fusion::fusion::FusionModel;
use wsn_fusion::metrics::{compare_runs, write_comparison_json, write_rounds_csv, write_summary_json};
use wsn_fusion::sim::write_heads_csv;
use wsn_fusion::verify::{
    backprop_gradients, run_grad_check, run_mst_check, GradCheckOptions, MstCheckOptions,
};
use wsn_fusion::{run_simulation, Protocol, SimConfig, SimError};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "wsn-fusion", version, about = "Clustered WSN simulator with MST routing and MLP data fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write rounds.csv and summary.json.
    Run(RunArgs),
    /// Run the clustered protocol and the direct-transmission baseline with the same seed.
    Compare(CompareArgs),
    /// Check backpropagation against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Check Prim's MST against exhaustive spanning-tree enumeration.
    Mstcheck(MstcheckArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted key=value config override, repeatable.
    #[arg(long = "override", value_name = "K=V")]
    overrides: Vec<String>,
    /// Load the fusion network instead of training it.
    #[arg(long)]
    model_in: Option<PathBuf>,
    /// Save the fusion network used by the run.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Orphan nodes with no cluster head within r_cluster.
    #[arg(long)]
    strict_radius: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Run the clustered protocol on both sides (debugging aid; all deltas are zero).
    #[arg(long, hide = true)]
    same_model: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    nets: usize,
    /// Perturb the analytic gradient to confirm the check can fail.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Args)]
struct MstcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    clusters: usize,
    #[arg(long, default_value_t = 4)]
    min_size: usize,
    #[arg(long, default_value_t = 8)]
    max_size: usize,
}

fn exit_code(err: &SimError) -> u8 {
    match err {
        SimError::Config(_) | SimError::Parse { .. } => EXIT_CONFIG,
        SimError::Io { .. } => EXIT_IO,
        _ => EXIT_FAILURE,
    }
}

fn resolve_config(common: &CommonArgs) -> Result<SimConfig, SimError> {
    let base = match &common.config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::default(),
    };
    let mut cfg = base.with_overrides(&common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.strict_radius {
        cfg.strict_radius = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out_dir(dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: String) -> Result<(), SimError> {
    std::fs::write(path, text).map_err(|e| SimError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_model(common: &CommonArgs) -> Result<Option<FusionModel>, SimError> {
    common.model_in.as_deref().map(FusionModel::load).transpose()
}

fn cmd_run(args: &RunArgs) -> Result<(), SimError> {
    let common = &args.common;
    let cfg = resolve_config(common)?;
    let model = load_model(common)?;
    prepare_out_dir(&common.out)?;

    let run = run_simulation(&cfg, model)?;
    write_rounds_csv(&run.rounds, &common.out.join("rounds.csv"))?;
    write_summary_json(&run.summary, &common.out.join("summary.json"))?;
    write_text(&common.out.join("config.json"), cfg.to_json_pretty() + "\n")?;
    if cfg.protocol == Protocol::Proposed {
        write_heads_csv(&run.heads, &common.out.join("cluster_heads.csv"))?;
    }
    if let (Some(path), Some(model)) = (&common.model_out, &run.model) {
        model.save(path)?;
    }
    println!("{}", serde_json::to_string(&run.summary).expect("summary serializes"));
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<(), SimError> {
    let common = &args.common;
    let cfg = resolve_config(common)?;
    let model = load_model(common)?;
    prepare_out_dir(&common.out)?;

    let proposed_cfg = SimConfig { protocol: Protocol::Proposed, ..cfg.clone() };
    let baseline_cfg = SimConfig {
        protocol: if args.same_model { Protocol::Proposed } else { Protocol::Direct },
        ..cfg.clone()
    };
    let baseline_model = if args.same_model { model.clone() } else { None };

    let (proposed, baseline) = std::thread::scope(|s| {
        let b = s.spawn(|| run_simulation(&baseline_cfg, baseline_model));
        let p = run_simulation(&proposed_cfg, model);
        (p, b.join().expect("baseline run panicked"))
    });
    let (proposed, baseline) = (proposed?, baseline?);

    let out = &common.out;
    write_rounds_csv(&proposed.rounds, &out.join("proposed_rounds.csv"))?;
    write_rounds_csv(&baseline.rounds, &out.join("baseline_rounds.csv"))?;
    write_summary_json(&proposed.summary, &out.join("proposed_summary.json"))?;
    write_summary_json(&baseline.summary, &out.join("baseline_summary.json"))?;
    write_text(&out.join("config.json"), cfg.to_json_pretty() + "\n")?;
    let comparison = compare_runs(&proposed.summary, &baseline.summary)?;
    write_comparison_json(&comparison, &out.join("comparison.json"))?;
    if let (Some(path), Some(model)) = (&common.model_out, &proposed.model) {
        model.save(path)?;
    }
    println!("{}", serde_json::to_string(&comparison).expect("comparison serializes"));
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> ExitCode {
    let opts = GradCheckOptions { seed: args.seed, nets: args.nets, ..Default::default() };
    let report = if args.inject_fault {
        run_grad_check(&opts, |net, x, t| {
            let mut g = backprop_gradients(net, x, t);
            g.layers[0].d_biases[0] += 1e-2;
            g
        })
    } else {
        run_grad_check(&opts, backprop_gradients)
    };
    println!(
        "{}",
        json!({
            "nets": report.nets,
            "entries": report.entries,
            "max_rel_error": report.max_rel_error,
            "passed": report.passed(),
        })
    );
    if report.passed() {
        return ExitCode::SUCCESS;
    }
    for f in &report.failures {
        eprintln!(
            "gradient mismatch: net {} layer {} {:?}[{}]: analytic {:e} vs numeric {:e}",
            f.net, f.layer, f.kind, f.index, f.analytic, f.numeric
        );
    }
    ExitCode::from(EXIT_FAILURE)
}

fn cmd_mstcheck(args: &MstcheckArgs) -> ExitCode {
    if args.min_size == 0 || args.min_size > args.max_size {
        eprintln!("error: need 1 <= min-size <= max-size");
        return ExitCode::from(EXIT_CONFIG);
    }
    let opts = MstCheckOptions {
        seed: args.seed,
        clusters: args.clusters,
        min_size: args.min_size,
        max_size: args.max_size,
        ..Default::default()
    };
    let report = run_mst_check(&opts);
    println!(
        "{}",
        json!({
            "clusters": report.clusters,
            "max_abs_diff": report.max_abs_diff,
            "passed": report.passed(),
        })
    );
    if report.passed() {
        return ExitCode::SUCCESS;
    }
    for m in &report.mismatches {
        let coords: Vec<String> = m.points.iter().map(|p| format!("({}, {})", p.x, p.y)).collect();
        eprintln!(
            "cluster {}: prim {} vs enumeration {} at [{}]",
            m.cluster,
            m.prim,
            m.oracle,
            coords.join(", ")
        );
    }
    ExitCode::from(EXIT_FAILURE)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Gradcheck(args) => return cmd_gradcheck(args),
        Command::Mstcheck(args) => return cmd_mstcheck(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

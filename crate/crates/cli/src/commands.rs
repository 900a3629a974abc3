use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use episcope::episode_protocol::{self, AggregateReport, DatasetIndex};
use episcope::fid::{self, FeatureSet};
use episcope::latent_blend::{self, BlendParams, LatentVec};
use episcope::mc_oracle::{self, SimConfig};
use episcope::planner::{self, CostModel};
use episcope::variance_model::{self, AccuracyPrior, EvalDesign};
use episcope::rng;

use crate::args::*;
use crate::CliError;

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Variance(a) => variance(a),
        Command::Plan(PlanCommand::Episodes(a)) => plan_episodes(a),
        Command::Plan(PlanCommand::Cost(a)) => plan_cost(a),
        Command::Plan(PlanCommand::Table(a)) => plan_table(a),
        Command::Simulate(a) => simulate(a),
        Command::Episodes(EpisodesCommand::Sample(a)) => episodes_sample(a),
        Command::Episodes(EpisodesCommand::Aggregate(a)) => episodes_aggregate(a),
        Command::Fid(a) => fid(a),
        Command::Blend(a) => blend(a),
    }
}

fn prior(args: &PriorArgs) -> Result<AccuracyPrior, CliError> {
    AccuracyPrior::new(args.a, args.sigma).map_err(|e| CliError::Usage(format!("--a/--sigma: {e}")))
}

fn design(kp: u64, kq: u64) -> Result<EvalDesign, CliError> {
    EvalDesign::new(kp, kq).map_err(|e| CliError::Usage(format!("--kp/--kq: {e}")))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn variance(args: VarianceArgs) -> Result<(), CliError> {
    let report = variance_model::variance_report(&prior(&args.prior)?, &design(args.kp, args.kq)?)?;
    if args.json {
        return print_json(&report);
    }
    println!("exact_var       {:e}", report.exact_var);
    println!("approx_var      {:e}", report.approx_var);
    println!("asymptote_var   {:e}", report.asymptote_var);
    println!("ci95_halfwidth  {:.2} points", report.ci95_halfwidth * 100.0);
    Ok(())
}

fn plan_episodes(args: PlanEpisodesArgs) -> Result<(), CliError> {
    let p = prior(&args.prior)?;
    let kp = match (args.target_var, args.target_ci) {
        (Some(v), _) => planner::min_episodes_for_variance(&p, args.kq, v)
            .map_err(|e| CliError::Usage(format!("--target-var: {e}")))?,
        (None, Some(hw)) => planner::min_episodes_for_ci(&p, args.kq, hw)
            .map_err(|e| CliError::Usage(format!("--target-ci: {e}")))?,
        (None, None) => return Err(CliError::Usage("one of --target-var or --target-ci is required".into())),
    };
    println!("{kp}");
    Ok(())
}

fn plan_cost(args: PlanCostArgs) -> Result<(), CliError> {
    let p = prior(&args.prior)?;
    let cost = CostModel::new(args.cost_episode, args.cost_query)
        .map_err(|e| CliError::Usage(format!("--cost-episode/--cost-query: {e}")))?;
    let plan = planner::min_cost_design(&p, &cost, args.target_var, args.kq_max)?;
    print_json(&plan)
}

fn plan_table(args: PlanTableArgs) -> Result<(), CliError> {
    let cells = planner::tradeoff_table(&prior(&args.prior)?, &args.kp_list, &args.kq_list)?;
    planner::write_tradeoff_csv(&cells, output(args.out.as_deref())?)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let config = SimConfig::new(prior(&args.prior)?, design(args.kp, args.kq)?, args.reps, args.seed)
        .map_err(|e| CliError::Usage(format!("--a/--sigma/--reps: {e}")))?;
    let report = mc_oracle::simulate(&config)?;
    if args.json {
        return print_json(&report);
    }
    println!("replications      {}", report.replications);
    println!("empirical_mean    {:.6}", report.empirical_mean);
    println!("theoretical_mean  {:.6}", report.theoretical_mean);
    println!("empirical_var     {:e}", report.empirical_var);
    println!("theoretical_var   {:e}", report.theoretical_var);
    match report.rel_var_error {
        Some(e) => println!("rel_var_error     {e:.5}"),
        None => println!("rel_var_error     undefined (theoretical variance is 0)"),
    }
    Ok(())
}

fn episodes_sample(args: SampleArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.index)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", args.index.display())))?;
    let index = DatasetIndex::from_json_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", args.index.display())))?;
    let episodes = episode_protocol::sample_episodes(&index, args.ways, args.shots, args.queries, args.count, args.seed)?;
    episode_protocol::write_episodes_jsonl(&episodes, output(args.out.as_deref())?)?;
    Ok(())
}

#[derive(Serialize)]
struct AggregateOutput {
    #[serde(flatten)]
    report: AggregateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    prior: Option<AccuracyPrior>,
}

fn episodes_aggregate(args: AggregateArgs) -> Result<(), CliError> {
    let results = episode_protocol::read_results_csv(open(&args.results)?)
        .map_err(|e| CliError::Runtime(format!("{}: {}", args.results.display(), e)))?;
    let report = episode_protocol::aggregate(&results)?;
    let prior = if args.prior {
        Some(episode_protocol::prior_from_results(&results)?)
    } else {
        None
    };
    if args.json {
        return print_json(&AggregateOutput { report, prior });
    }
    println!("episodes  {}", report.episodes);
    println!("accuracy  {report}");
    println!("std       {:.2}", report.std_acc * 100.0);
    if let Some(p) = prior {
        println!("prior     --a {} --sigma {}", p.mean(), p.std());
    }
    Ok(())
}

fn fid(args: FidArgs) -> Result<(), CliError> {
    let a = fid::load_features(&args.a)?;
    let b = fid::load_features(&args.b)?;
    let d = fid::fid(&a, &b)?;
    if args.json {
        return print_json(&serde_json::json!({ "fid": d }));
    }
    println!("{d}");
    Ok(())
}

#[derive(Serialize)]
struct BlendRecord {
    index: usize,
    values: Vec<f64>,
}

fn blend(args: BlendArgs) -> Result<(), CliError> {
    let features = fid::load_features(&args.latents)?;
    let latents = (0..features.len())
        .map(|i| LatentVec::new(features.row(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let params = BlendParams::new(args.alpha).map_err(|e| CliError::Usage(format!("--alpha: {e}")))?;

    let mut records = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let (index, out) = latent_blend::sample_blend(&latents, params, rng::sequence_seed(args.seed, i as u64))?;
        records.push(BlendRecord {
            index,
            values: out.into_inner(),
        });
    }

    let mut out = output(args.out.as_deref())?;
    if args.json {
        serde_json::to_writer_pretty(&mut out, &records).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(out)?;
        out.flush()?;
        return Ok(());
    }
    let rows: Vec<Vec<f64>> = records.into_iter().map(|r| r.values).collect();
    let set = FeatureSet::from_vecs(&rows)?;
    match args.format {
        VectorFormat::Csv => fid::write_features_csv(&set, out)?,
        VectorFormat::Fsfe => fid::write_features_binary(&set, out)?,
    }
    Ok(())
}

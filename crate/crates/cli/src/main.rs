//! Single command-line entry point wiring fixtures, configs, and the
//! library crates into reproducible runs. Identical invocations produce
//! identical output files, except for measured wall-clock fields.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use agentsim::{run_episode_from_state, BrowserState, PromptTemplate};
use gcg::{optimize_trigger, TargetSpec, Trigger, TriggerResult};
use harness::{
    inject_trigger, make_contexts, read_eval_report, read_sweep_csv, run_twti, sweep, twui_eval,
    uwti_eval, write_eval_report, write_sweep_csv, GoalSet, Scenario, SweepParam, Timing,
};
use microlm::{load_checkpoint, save_checkpoint, train_lm, ModelConfig, ModelParams, Vocab};

#[derive(Parser)]
#[command(name = "trigbench", version, about = "Adversarial-trigger attacks on a simulated web agent")]
struct Cli {
    /// Configuration file for the subcommand (scenario, sweep, train, or
    /// simulate config; report input file for `report`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run seed. Required for optimize, evaluate, sweep, and train-lm;
    /// overrides any seed present in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Prompt template file; defaults to the built-in v1 template.
    #[arg(long, global = true)]
    template: Option<PathBuf>,

    #[arg(long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a vocab from a corpus directory and train the micro LM.
    TrainLm,
    /// Optimize a trigger for a scenario and write the result JSON.
    Optimize,
    /// Evaluate a scenario (optimizing first unless --trigger is given).
    Evaluate {
        /// Previously written trigger result to evaluate instead of
        /// re-optimizing.
        #[arg(long)]
        trigger: Option<PathBuf>,
    },
    /// Run a hyperparameter sweep and write the CSV.
    Sweep,
    /// Run one browser episode and print the trace.
    Simulate,
    /// Summarize a report JSON or sweep CSV into plot-ready columns.
    Report,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outputs) => {
            for path in outputs {
                println!("{}", path.display());
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}

fn need_config(cli: &Cli) -> Result<&Path> {
    cli.config
        .as_deref()
        .context("missing required flag --config")
}

fn need_seed(cli: &Cli) -> Result<u64> {
    cli.seed.context("missing required flag --seed")
}

fn load_template(cli: &Cli) -> Result<PromptTemplate> {
    Ok(match &cli.template {
        Some(path) => PromptTemplate::load(path)?,
        None => PromptTemplate::v1(),
    })
}

fn status(cli: &Cli, msg: &str) {
    if !cli.quiet {
        eprintln!("{msg}");
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output dir {}", cli.out.display()))?;
    match &cli.command {
        Command::TrainLm => cmd_train_lm(&cli),
        Command::Optimize => cmd_optimize(&cli),
        Command::Evaluate { trigger } => cmd_evaluate(&cli, trigger.as_deref()),
        Command::Sweep => cmd_sweep(&cli),
        Command::Simulate => cmd_simulate(&cli),
        Command::Report => cmd_report(&cli),
    }
}

#[derive(serde::Deserialize)]
struct TrainConfig {
    corpus_dir: PathBuf,
    steps: usize,
    lr: f64,
    model: ModelConfig,
}

fn cmd_train_lm(cli: &Cli) -> Result<Vec<PathBuf>> {
    let config_path = need_config(cli)?;
    let seed = need_seed(cli)?;
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let mut config: TrainConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", config_path.display()))?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    if config.corpus_dir.is_relative() {
        config.corpus_dir = base.join(&config.corpus_dir);
    }

    let mut paths: Vec<PathBuf> = fs::read_dir(&config.corpus_dir)
        .with_context(|| format!("reading corpus dir {}", config.corpus_dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().and_then(|e| e.to_str()) == Some("txt"));
    paths.sort();
    if paths.is_empty() {
        bail!("corpus dir {} holds no .txt documents", config.corpus_dir.display());
    }
    let corpus: Vec<String> = paths
        .iter()
        .map(|p| fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<_>>()?;
    status(cli, &format!("{} corpus documents", corpus.len()));

    let vocab = Vocab::learn(&corpus, config.model.vocab_size);
    status(cli, &format!("learned vocab of {} tokens", vocab.size()));
    let params: ModelParams<f32> = ModelParams::init_random(config.model.clone(), vocab, seed);
    let (trained, report) = train_lm(params, &corpus, config.steps, config.lr, seed)?;
    status(
        cli,
        &format!(
            "trained {} steps: mean loss {:.4} -> {:.4}",
            report.steps, report.initial_mean_loss, report.final_mean_loss
        ),
    );

    let out = cli.out.join("agent-lm.ckpt");
    save_checkpoint(&trained, &out)?;
    Ok(vec![out])
}

fn load_scenario_and_model(cli: &Cli) -> Result<(Scenario, ModelParams<f32>)> {
    let config_path = need_config(cli)?;
    let scenario = Scenario::load(config_path)?;
    let params = load_checkpoint::<f32>(scenario.checkpoint())
        .with_context(|| format!("loading checkpoint {}", scenario.checkpoint().display()))?;
    Ok((scenario, params))
}

fn scenario_target(scenario: &Scenario) -> TargetSpec {
    match scenario {
        Scenario::Twti(s) => TargetSpec::literal(&s.target),
        Scenario::Twui(s) => TargetSpec::literal(&s.target),
        Scenario::Uwti(s) => TargetSpec {
            template: s.target.clone(),
        },
    }
}

fn with_seed(scenario: &mut Scenario, seed: u64) {
    match scenario {
        Scenario::Twti(s) => s.gcg.seed = seed,
        Scenario::Twui(s) => s.gcg.seed = seed,
        Scenario::Uwti(s) => s.gcg.seed = seed,
    }
}

fn cmd_optimize(cli: &Cli) -> Result<Vec<PathBuf>> {
    let seed = need_seed(cli)?;
    let template = load_template(cli)?;
    let (mut scenario, params) = load_scenario_and_model(cli)?;
    with_seed(&mut scenario, seed);

    let contexts = make_contexts(&scenario, GoalSet::Train, &template, &params.vocab)?;
    status(
        cli,
        &format!("optimizing over {} training contexts", contexts.n()),
    );
    let target = scenario_target(&scenario);
    let result = optimize_trigger(&params, &contexts, &target, scenario.gcg())?;
    status(
        cli,
        &format!(
            "success={} loss={:.4} iterations={}",
            result.success, result.best_loss, result.iterations_used
        ),
    );

    let out = cli.out.join("trigger_result.json");
    fs::write(&out, serde_json::to_string_pretty(&result)? + "\n")?;
    Ok(vec![out])
}

fn cmd_evaluate(cli: &Cli, trigger_path: Option<&Path>) -> Result<Vec<PathBuf>> {
    let seed = need_seed(cli)?;
    let template = load_template(cli)?;
    let (mut scenario, params) = load_scenario_and_model(cli)?;
    with_seed(&mut scenario, seed);

    let preset: Option<(Trigger, Timing)> = match trigger_path {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let result: TriggerResult = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            let timing = Timing {
                wall_seconds: result.wall_clock_seconds,
                iterations: result.iterations_used,
            };
            Some((result.best_trigger, timing))
        }
        None => None,
    };

    match scenario {
        Scenario::Twti(ref s) => {
            if preset.is_some() {
                bail!("--trigger applies to twui/uwti scenarios; twti runs end to end");
            }
            let outcome = run_twti(&params, s, &template)?;
            status(
                cli,
                &format!(
                    "success={} episode_hit={} retokenization_consistent={}",
                    outcome.result.success,
                    outcome.episode_target_hit,
                    outcome.retokenization_consistent
                ),
            );
            let out = cli.out.join("trigger_result.json");
            fs::write(&out, serde_json::to_string_pretty(&outcome.result)? + "\n")?;
            let row_out = cli.out.join("run_row.csv");
            write_sweep_csv(&[outcome.row], &row_out)?;
            Ok(vec![out, row_out])
        }
        Scenario::Twui(ref s) => {
            let report = match preset {
                Some((trigger, timing)) => twui_eval(&params, s, &template, &trigger, timing)?,
                None => harness::run_twui(&params, s, &template)?,
            };
            status(
                cli,
                &format!(
                    "asr={:.3} asr_v={:.3} baseline={:.3}",
                    report.asr, report.asr_v, report.baseline_asr
                ),
            );
            let out = cli.out.join("eval_report.json");
            write_eval_report(&report, &out)?;
            Ok(vec![out])
        }
        Scenario::Uwti(ref s) => {
            let (test, train) = match preset {
                Some((trigger, timing)) => uwti_eval(&params, s, &template, &trigger, timing)?,
                None => harness::run_uwti(&params, s, &template)?,
            };
            status(
                cli,
                &format!(
                    "test asr={:.3} asr_v={:.3} | train asr={:.3} asr_v={:.3}",
                    test.asr, test.asr_v, train.asr, train.asr_v
                ),
            );
            let out = cli.out.join("eval_report.json");
            write_eval_report(&test, &out)?;
            let out_train = cli.out.join("eval_report_train.json");
            write_eval_report(&train, &out_train)?;
            Ok(vec![out, out_train])
        }
    }
}

#[derive(serde::Deserialize)]
struct SweepConfig {
    scenario: PathBuf,
    goals: PathBuf,
    parameter: SweepParam,
    values: Vec<String>,
    runs_per_value: usize,
}

fn cmd_sweep(cli: &Cli) -> Result<Vec<PathBuf>> {
    let seed = need_seed(cli)?;
    let template = load_template(cli)?;
    let config_path = need_config(cli)?;
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let mut config: SweepConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", config_path.display()))?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    for p in [&mut config.scenario, &mut config.goals] {
        if p.is_relative() {
            *p = base.join(&p);
        }
    }

    let scenario = Scenario::load(&config.scenario)?;
    let Scenario::Twti(mut twti) = scenario else {
        bail!("sweeps run over a twti scenario");
    };
    twti.gcg.seed = seed;
    let params = load_checkpoint::<f32>(&twti.checkpoint)
        .with_context(|| format!("loading checkpoint {}", twti.checkpoint.display()))?;
    let goals = harness::read_goals(&config.goals)?;
    status(
        cli,
        &format!(
            "sweeping {} over {:?} ({} runs per value)",
            config.parameter.name(),
            config.values,
            config.runs_per_value
        ),
    );
    let rows = sweep(
        &params,
        &twti,
        &goals,
        config.parameter,
        &config.values,
        config.runs_per_value,
        &template,
    )?;
    let out = cli
        .out
        .join(format!("sweep_{}.csv", config.parameter.name()));
    write_sweep_csv(&rows, &out)?;
    Ok(vec![out])
}

#[derive(serde::Deserialize)]
struct SimulateConfig {
    checkpoint: PathBuf,
    site_html: PathBuf,
    goal: String,
    #[serde(default)]
    trigger: Option<String>,
    #[serde(default)]
    locator: Option<String>,
    #[serde(default)]
    inject_mode: Option<harness::InjectMode>,
    #[serde(default)]
    sink_bids: Vec<String>,
    #[serde(default = "default_sim_steps")]
    max_steps: usize,
}

fn default_sim_steps() -> usize {
    3
}

fn cmd_simulate(cli: &Cli) -> Result<Vec<PathBuf>> {
    let template = load_template(cli)?;
    let config_path = need_config(cli)?;
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let mut config: SimulateConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", config_path.display()))?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    for p in [&mut config.checkpoint, &mut config.site_html] {
        if p.is_relative() {
            *p = base.join(&p);
        }
    }

    let params = load_checkpoint::<f32>(&config.checkpoint)
        .with_context(|| format!("loading checkpoint {}", config.checkpoint.display()))?;
    let mut html = fs::read_to_string(&config.site_html)
        .with_context(|| format!("reading {}", config.site_html.display()))?;
    if let Some(trigger) = &config.trigger {
        let locator = config
            .locator
            .as_deref()
            .context("simulate config with a trigger needs a locator")?;
        let mode = config
            .inject_mode
            .unwrap_or(harness::InjectMode::VisibleText);
        html = inject_trigger(&html, locator, trigger, mode)?;
    }

    let state = BrowserState::single_page("page:start", &html, &config.sink_bids);
    let trace = run_episode_from_state(&params, state, &config.goal, config.max_steps, &template)?;

    let mut rendered = String::new();
    for (i, step) in trace.steps.iter().enumerate() {
        rendered.push_str(&format!(
            "step {}: response={:?} parsed={} applied={}{}\n",
            i + 1,
            step.response,
            step.parsed
                .as_ref()
                .map(|a| a.to_string())
                .unwrap_or_else(|| "NotAnAction".into()),
            step.applied,
            step.apply_error
                .as_ref()
                .map(|e| format!(" error={e}"))
                .unwrap_or_default(),
        ));
    }
    rendered.push_str(&format!(
        "final: url={} tab_open={} messages={:?} sink={:?}\n",
        trace.final_state.current_url,
        trace.final_state.tab_open,
        trace.final_state.message_log,
        trace.final_state.sink,
    ));
    print!("{rendered}");

    let out = cli.out.join("trace.txt");
    fs::write(&out, rendered)?;
    Ok(vec![out])
}

fn cmd_report(cli: &Cli) -> Result<Vec<PathBuf>> {
    let input = need_config(cli)?;
    let is_csv = input.extension().and_then(|e| e.to_str()) == Some("csv");
    if is_csv {
        let rows = read_sweep_csv(input)?;
        // aggregate per (param, value): plot-ready time/iteration columns
        let mut grouped: std::collections::BTreeMap<(String, String), Vec<&harness::SweepRow>> =
            std::collections::BTreeMap::new();
        for r in &rows {
            grouped.entry((r.param.clone(), r.value.clone())).or_default().push(r);
        }
        let mut out_text =
            String::from("param,value,runs,success_rate,mean_seconds,median_iterations,mean_seconds_per_iteration\n");
        println!("{:<14} {:>14} {:>6} {:>9} {:>12} {:>12} {:>10}", "param", "value", "runs", "success", "mean_s", "med_iters", "s_per_iter");
        for ((param, value), rows) in &grouped {
            let n = rows.len() as f64;
            let success = rows.iter().filter(|r| r.success).count() as f64 / n;
            let mean_s: f64 = rows.iter().map(|r| r.seconds).sum::<f64>() / n;
            let mut iters: Vec<usize> = rows.iter().map(|r| r.iterations).collect();
            iters.sort_unstable();
            let median = iters[iters.len() / 2];
            let spi: f64 = rows
                .iter()
                .map(|r| r.seconds / r.iterations.max(1) as f64)
                .sum::<f64>()
                / n;
            println!("{param:<14} {value:>14} {:>6} {success:>9.2} {mean_s:>12.2} {median:>12} {spi:>10.3}", rows.len());
            out_text.push_str(&format!(
                "{param},{value},{},{success:.4},{mean_s:.4},{median},{spi:.6}\n",
                rows.len()
            ));
        }
        let out = cli.out.join("sweep_summary.csv");
        fs::write(&out, out_text)?;
        return Ok(vec![out]);
    }

    let report = read_eval_report(input)?;
    println!(
        "scenario {}: asr={:.3} asr_v={:.3} baseline_asr={:.3} ({} outcomes, {} iterations)",
        report.scenario_id,
        report.asr,
        report.asr_v,
        report.baseline_asr,
        report.outcomes.len(),
        report.timing.iterations
    );
    let mut classes = std::collections::BTreeMap::new();
    for o in &report.outcomes {
        if let Some(c) = &o.failure_class {
            *classes.entry(format!("{c:?}")).or_insert(0usize) += 1;
        }
    }
    if !classes.is_empty() {
        println!("failure clusters: {classes:?}");
    }
    let mut out_text = String::from("index,invoked_target,verbatim_match\n");
    for (i, o) in report.outcomes.iter().enumerate() {
        out_text.push_str(&format!(
            "{i},{},{}\n",
            o.invoked_target as u8, o.verbatim_match as u8
        ));
    }
    let out = cli.out.join("outcome_columns.csv");
    fs::write(&out, out_text)?;
    Ok(vec![out])
}

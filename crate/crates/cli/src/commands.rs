use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use gsboost::enumerate::{growth_report, report_row, write_report};
use gsboost::gs::{build_matrix, format_arrays, parse_arrays, segment_sums, verify_hadamard};
use gsboost::model::checkpoint::write_atomic;
use gsboost::run::{read_csv, write_csv, write_jsonl, RunConfig, RunState, Stage};
use gsboost::symmetry::{canonicalize, dedup_with_counts, stabilizer_order};
use gsboost::{Error, Exec};
use log::{info, warn};

use crate::args::RunArgs;

pub enum Failure {
    /// Input checked and found wanting (exit 1).
    Verification(String),
    /// Bad flags, configuration or input files (exit 2).
    Usage(anyhow::Error),
    /// Anything that failed while working (exit 1).
    Runtime(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn classify(e: Error) -> Failure {
    match e {
        Error::Config { .. }
        | Error::InvalidOrder(_)
        | Error::InfeasibleSegmentSums { .. }
        | Error::Unsupported(_)
        | Error::Parse { .. }
        | Error::SegmentLength { .. }
        | Error::InvalidEntry { .. }
        | Error::NotSquare { .. } => Failure::Usage(e.into()),
        other => Failure::Runtime(other.into()),
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(usage)?;
        return Ok(s);
    }
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(usage)
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let base = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display())).map_err(usage)?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display())).map_err(usage)?
        }
        None => RunConfig::default(),
    };
    let cfg = args.overlay(base);
    cfg.validate().map_err(classify)?;
    Ok(cfg)
}

fn write_outputs(dir: &Path, state: &RunState) -> Result<(), Failure> {
    write_atomic(&dir.join("archive.txt"), format_arrays(&state.archive).as_bytes()).map_err(runtime)?;
    let mut csv = Vec::new();
    write_csv(&state.stats, &mut csv).map_err(runtime)?;
    write_atomic(&dir.join("stats.csv"), &csv).map_err(runtime)?;
    let mut jsonl = Vec::new();
    write_jsonl(&state.stats, &mut jsonl).map_err(runtime)?;
    write_atomic(&dir.join("stats.jsonl"), &jsonl).map_err(runtime)
}

pub fn run(args: &RunArgs) -> Outcome {
    let exec = Exec::default();
    let mut state = match &args.resume {
        Some(path) => {
            let mut s = RunState::restore(path, exec)
                .with_context(|| format!("cannot resume from {}", path.display()))
                .map_err(usage)?;
            if let Some(g) = args.generations {
                s.config.generations = g;
            }
            // Anything else would desynchronize the random streams of the run.
            let same = |c: &RunConfig| toml::to_string(c).map_err(runtime);
            if args.config.is_some() || same(&args.overlay(s.config.clone()))? != same(&s.config)? {
                return Err(usage(anyhow!("only --generations can change when resuming")));
            }
            info!("resumed {} at generation {} ({:?})", path.display(), s.generation, s.stage);
            s
        }
        None => RunState::new(load_config(args)?, exec).map_err(classify)?,
    };
    let out = &args.out;
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).with_context(|| format!("cannot create {}", ckpt_dir.display())).map_err(usage)?;
    let resolved = toml::to_string(&state.config).map_err(runtime)?;
    write_atomic(&out.join("config.toml"), resolved.as_bytes()).map_err(runtime)?;

    while !state.is_finished() {
        let start = Instant::now();
        if state.stage == Stage::Trained {
            state.select().map_err(classify)?;
        }
        let ckpt = ckpt_dir.join(format!("gen-{:03}.ckpt", state.generation));
        state.checkpoint(&ckpt).map_err(runtime)?;
        let previous = state.stats.last().map(|r| r.score_selected_mean);
        let row = state.train().map_err(classify)?.clone();
        state.checkpoint(&ckpt).map_err(runtime)?;
        write_outputs(out, &state)?;
        let report = state.reports.last().cloned().unwrap_or_default();
        info!(
            "gen {}: loss {:.4}, sample score {:.4}, selected score {:.4}, hadamard {:.3}/{:.3}, archive {} (+{}){} in {:.1}s",
            row.gen,
            row.loss_train,
            row.score_sample_mean,
            row.score_selected_mean,
            row.hadamard_ratio_sample,
            row.hadamard_ratio_selected,
            row.archive_size,
            report.new_hadamards,
            report.constraint_ratio_sample.map(|r| format!(", raw samples on constraint {r:.3}")).unwrap_or_default(),
            start.elapsed().as_secs_f64(),
        );
        if let Some(prev) = previous {
            if row.score_selected_mean > prev {
                warn!("mean selected score rose from {prev:.4} to {:.4}", row.score_selected_mean);
            }
        }
    }
    write_outputs(out, &state)?;
    println!("{} Hadamard arrays archived in {}", state.archive.len(), out.join("archive.txt").display());
    Ok(())
}

pub fn verify(file: &Path) -> Outcome {
    let arrays = parse_arrays(&read_input(file)?).map_err(classify)?;
    let mut failed = 0;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for (idx, a) in arrays.iter().enumerate() {
        let ok = verify_hadamard(&build_matrix(a));
        failed += usize::from(!ok);
        let s = segment_sums(a).0;
        writeln!(
            w,
            "{idx}\tn={}\thadamard={}\tscore={}\tsums={},{},{},{}\tstabilizer={}",
            a.n(),
            if ok { "yes" } else { "no" },
            a.score(),
            s[0],
            s[1],
            s[2],
            s[3],
            stabilizer_order(a)
        )
        .map_err(runtime)?;
    }
    if failed > 0 {
        return Err(Failure::Verification(format!("{failed} of {} arrays are not Hadamard", arrays.len())));
    }
    Ok(())
}

pub fn canon(file: &Path, out: Option<&Path>, counts: Option<&Path>) -> Outcome {
    let arrays = parse_arrays(&read_input(file)?).map_err(classify)?;
    let classes = dedup_with_counts(&arrays, Exec::default());
    let reps: Vec<_> = classes.iter().map(|(a, _)| a.clone()).collect();
    let text = format_arrays(&reps);
    match out {
        Some(p) => write_atomic(p, text.as_bytes()).map_err(runtime)?,
        None => print!("{text}"),
    }
    for (idx, (_, c)) in classes.iter().enumerate() {
        eprintln!("class {idx}: {c}");
    }
    eprintln!("{} arrays in {} classes", arrays.len(), classes.len());
    if let Some(p) = counts {
        let mut body = String::from("index,count\n");
        for (idx, (_, c)) in classes.iter().enumerate() {
            body.push_str(&format!("{idx},{c}\n"));
        }
        write_atomic(p, body.as_bytes()).map_err(runtime)?;
    }
    Ok(())
}

pub fn enumerate(orders: &[usize], report: Option<&Path>, arrays: Option<&Path>) -> Outcome {
    for &n in orders {
        gsboost::enumerate::check_order(n).map_err(classify)?;
    }
    let mut rows = Vec::new();
    let mut problems = Vec::new();
    for &n in orders {
        let (row, e) = report_row(n, Exec::default()).map_err(classify)?;
        info!("n = {n}: {} arrays, {} classes, {} candidates, {:.2}s", row.count, row.orbit_count, e.candidates, row.seconds);
        if e.disagreements > 0 || e.matrix_failures > 0 {
            problems.push(format!("n = {n}: {} checker disagreements, {} matrix failures", e.disagreements, e.matrix_failures));
        }
        if let Some(prefix) = arrays {
            let mut canon: Vec<_> = e.arrays.unwrap_or_default().iter().map(canonicalize).collect();
            canon.sort();
            canon.dedup();
            let path = PathBuf::from(format!("{}-{n}.txt", prefix.display()));
            write_atomic(&path, format_arrays(&canon).as_bytes()).map_err(runtime)?;
        }
        rows.push(row);
    }
    write_report(&rows, std::io::stdout().lock()).map_err(runtime)?;
    if let Some(p) = report {
        let mut buf = Vec::new();
        write_report(&rows, &mut buf).map_err(runtime)?;
        write_atomic(p, &buf).map_err(runtime)?;
    }
    let counts: Vec<(usize, u64)> = rows.iter().map(|r| (r.n, r.count)).collect();
    if counts.len() >= 2 {
        match growth_report(&counts) {
            Ok(base) => eprintln!("growth base {base:.4} per unit of n"),
            Err(e) => warn!("no growth fit: {e}"),
        }
    }
    if !problems.is_empty() {
        return Err(Failure::Verification(problems.join("\n")));
    }
    Ok(())
}

pub const SERIES: [&str; 4] = ["score_sample", "score_selected", "hadamard_ratio_sample", "hadamard_ratio_selected"];

pub fn stats(dir: &Path, out: Option<&Path>) -> Outcome {
    if !dir.is_dir() {
        return Err(usage(anyhow!("run directory {} does not exist", dir.display())));
    }
    let path = dir.join("stats.csv");
    let file = fs::File::open(&path).with_context(|| format!("cannot open {}", path.display())).map_err(usage)?;
    let rows = read_csv(file).map_err(classify)?;
    let out = out.unwrap_or(dir);
    fs::create_dir_all(out).map_err(runtime)?;
    for name in SERIES {
        let mut body = format!("gen,{name}\n");
        for r in &rows {
            let v = match name {
                "score_sample" => r.score_sample_mean,
                "score_selected" => r.score_selected_mean,
                "hadamard_ratio_sample" => r.hadamard_ratio_sample,
                _ => r.hadamard_ratio_selected,
            };
            let v = if v.is_finite() { v.to_string() } else { String::new() };
            body.push_str(&format!("{},{v}\n", r.gen));
        }
        write_atomic(&out.join(format!("{name}.csv")), body.as_bytes()).map_err(runtime)?;
    }
    eprintln!("{} generations written to {}", rows.len(), out.display());
    Ok(())
}

use serde::Serialize;

use sepnet::separability::{bell_number, count_gk, enumerate_set_partitions, MAX_COUNT_QUBITS};
use sepnet::{classify, measure_gme, train_trials, PartitionSpec};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::OutputDir;

/// Largest register whose partitions `count` lists one by one.
const LIST_PARTITIONS_UP_TO: usize = 5;

/// File-name form of a partition: `free`, or `1-2_3` for `1,2|3`.
fn file_label(spec: &PartitionSpec) -> String {
    if spec.is_free() {
        "free".into()
    } else {
        spec.block_text().replace(',', "-").replace('|', "_")
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
    bytes.push(b'\n');
    bytes
}

#[derive(Serialize)]
struct TrialSummary {
    trial: usize,
    seed: u64,
    final_fidelity: Option<f64>,
    iterations: Option<usize>,
    reinitialized: bool,
    trace: Option<String>,
    error: Option<String>,
}

#[derive(Serialize)]
struct LearnerSummary {
    spec: PartitionSpec,
    mean: Option<f64>,
    spread: Option<f64>,
    trials: Vec<TrialSummary>,
}

#[derive(Serialize)]
struct LearnSummary<'a> {
    target: &'a str,
    seed: u64,
    learners: Vec<LearnerSummary>,
}

/// Population mean and spread.
fn mean_spread(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    Some((mean, var.sqrt()))
}

pub fn learn(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let (label, target) = cfg.target()?;
    let specs = cfg.learner_specs(target.n_visible())?;
    let protocol = cfg.protocol()?;
    let out = OutputDir::create(&cfg.output_dir)?;

    let mut learners = Vec::with_capacity(specs.len());
    let mut failed = 0;
    for spec in &specs {
        let outcomes = train_trials(&target, spec, &protocol, cfg.seed)?;
        let mut trials = Vec::with_capacity(outcomes.len());
        let mut finals = Vec::new();
        for (k, (seed, outcome)) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(trace) => {
                    let name = format!("trace_{}_trial{k}.csv", file_label(spec));
                    out.write(&name, trace.to_csv().as_bytes())?;
                    finals.push(trace.final_fidelity());
                    trials.push(TrialSummary {
                        trial: k,
                        seed,
                        final_fidelity: Some(trace.final_fidelity()),
                        iterations: Some(trace.iterations()),
                        reinitialized: trace.reinitialized,
                        trace: Some(name),
                        error: None,
                    });
                }
                Err(e) => {
                    log::error!("learner {spec}, trial {k}: {e}");
                    failed += 1;
                    trials.push(TrialSummary {
                        trial: k,
                        seed,
                        final_fidelity: None,
                        iterations: None,
                        reinitialized: false,
                        trace: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        let stats = mean_spread(&finals);
        match stats {
            Some((m, s)) => println!(
                "{:<16} mean F = {m:.4}  spread = {s:.4}  ({} trials)",
                spec.to_string(),
                finals.len()
            ),
            None => println!("{:<16} no trial succeeded", spec.to_string()),
        }
        learners.push(LearnerSummary {
            spec: spec.clone(),
            mean: stats.map(|x| x.0),
            spread: stats.map(|x| x.1),
            trials,
        });
    }
    let summary = LearnSummary {
        target: &label,
        seed: cfg.seed,
        learners,
    };
    out.write("summary.json", &to_json(&summary))?;
    if failed > 0 {
        return Err(CliError::Learning(format!(
            "{failed} trial(s) failed; see summary.json"
        )));
    }
    Ok(())
}

pub fn classify_cmd(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let (label, target) = cfg.target()?;
    let specs = cfg.learner_specs(target.n_visible())?;
    let protocol = cfg.protocol()?;
    let out = OutputDir::create(&cfg.output_dir)?;

    let report = classify(&target, &label, &specs, &protocol, cfg.seed)?;
    out.write("report.json", &to_json(&report))?;
    println!("target: {label}");
    print!("{}", report.table());
    for note in &report.notes {
        println!("note: {note}");
    }
    Ok(())
}

pub fn measure(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("measure needs a \"sweep\" section".into()))?;
    if sweep.values.is_empty() {
        return Err(CliError::Config("sweep has no values".into()));
    }
    let protocol = cfg.protocol()?;

    // Validate every grid point before spending time on training.
    let mut points = Vec::with_capacity(sweep.values.len());
    for &p in &sweep.values {
        let (_, target) = cfg.family_member(p)?;
        let restricted: Vec<PartitionSpec> = cfg
            .learner_specs(target.n_visible())?
            .into_iter()
            .filter(|s| !s.is_free())
            .collect();
        let [spec] = restricted.as_slice() else {
            return Err(CliError::Config(format!(
                "measure needs exactly one segmented learner, got {}",
                restricted.len()
            )));
        };
        points.push((p, target, spec.clone()));
    }
    let out = OutputDir::create(&cfg.output_dir)?;

    let mut csv = String::from("p,R,E,alpha_oracle\n");
    for (p, target, spec) in &points {
        let m = measure_gme(target, spec, &protocol, cfg.seed)?;
        println!(
            "p = {p:<6} R = {:.4}  E = {:.4}  alpha = {:.4}",
            m.relative_fidelity, m.gme, m.alpha_oracle
        );
        csv.push_str(&format!(
            "{p},{},{},{}\n",
            m.relative_fidelity, m.gme, m.alpha_oracle
        ));
    }
    out.write("measure.csv", csv.as_bytes())?;
    Ok(())
}

pub fn count(n: usize, k: Option<usize>) -> Result<(), CliError> {
    if n == 0 || n > MAX_COUNT_QUBITS {
        return Err(CliError::Config(format!(
            "n must be in 1..={MAX_COUNT_QUBITS}, got {n}"
        )));
    }
    if let Some(k) = k {
        if k == 0 || k > n {
            return Err(CliError::Config(format!("k must be in 1..={n}, got {k}")));
        }
    }
    println!("n = {n}");
    println!("{:>3}  {:>24}", "K", "G_K");
    let ks: Vec<usize> = match k {
        Some(k) => vec![k],
        None => (1..=n).collect(),
    };
    for &k in &ks {
        println!("{k:>3}  {:>24}", count_gk(n, k)?);
    }
    println!("B_{n} = {}", bell_number(n)?);
    if n <= LIST_PARTITIONS_UP_TO {
        println!("partitions:");
        for p in enumerate_set_partitions(n, k)? {
            println!("  {}", p.block_text());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_plain_file_names() {
        assert_eq!(file_label(&PartitionSpec::free(3)), "free");
        assert_eq!(
            file_label(&PartitionSpec::parse("1,2|3", 3).unwrap()),
            "1-2_3"
        );
    }

    #[test]
    fn population_spread() {
        let (m, s) = mean_spread(&[1.0, 3.0]).unwrap();
        assert_eq!((m, s), (2.0, 1.0));
        assert!(mean_spread(&[]).is_none());
    }
}

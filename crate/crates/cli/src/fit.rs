use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use mmm_core::archive::{read_archive, read_checkpoint, write_archive};
use mmm_core::data::{default_hyperparams, load_covariates, load_dataset, Hyperparams, Schema};
use mmm_core::gibbs::{drive, ChainConfig, ChainMeta, ChainSamples, GibbsSampler, RetainFields, SweepOrder, Sweeper};
use mmm_core::spatiotemporal::{SpaceTimeCovariates, StHyper, StSampler};
use mmm_core::{Error, Result};
use serde_json::{json, Map, Value};

use crate::{Field, FitArgs, Order, Variant};

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(crate::io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

fn covariates(a: &FitArgs, schema: &Schema) -> Result<SpaceTimeCovariates> {
    load_covariates(&a.data, schema)?.ok_or_else(|| {
        Error::Config("the spatiotemporal variant needs epoch_column and coordinate_columns in the schema".into())
    })
}

fn run_info(a: &FitArgs, started: SystemTime, wall: f64) -> Map<String, Value> {
    let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut m = Map::new();
    m.insert("data".into(), json!(a.data.display().to_string()));
    m.insert("schema".into(), json!(a.schema.display().to_string()));
    m.insert("rng".into(), json!("ChaCha8, one stream per (seed, iteration, step, index)"));
    m.insert("started_unix".into(), json!(secs(started)));
    m.insert("wall_seconds".into(), json!(wall));
    m.insert("resumed".into(), json!(a.resume));
    m
}

fn retain(fields: &[Field]) -> RetainFields {
    RetainFields {
        kernels: fields.contains(&Field::Kernels),
        lambda: fields.contains(&Field::Lambda),
        z: fields.contains(&Field::Z),
        omega: fields.contains(&Field::Omega),
    }
}

/// Runs (or resumes) a chain and writes its archive with a checkpoint.
pub fn fit(a: &FitArgs) -> Result<()> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let schema = Schema::load(&a.schema)?;
    let ds = load_dataset(&a.data, &schema)?;
    let part = schema.partition()?;

    let (config, hyper, st_hyper, mut samples, checkpoint) = if a.resume {
        let (samples, m) = read_archive(&a.out)?;
        let cp = read_checkpoint(&a.out, &m)?;
        if m.meta.dataset_digest != ds.digest() {
            return Err(Error::Validation("archive was fitted on a different dataset".into()));
        }
        if a.iterations < cp.next_iteration {
            return Err(Error::Config(format!(
                "--iterations {} is below the {} sweeps already run",
                a.iterations, cp.next_iteration
            )));
        }
        let config = ChainConfig { iterations: a.iterations, ..m.config };
        (config, m.hyper, m.st_hyper, samples, Some(cp))
    } else {
        let config = ChainConfig {
            iterations: a.iterations,
            burn_in: a.burn_in,
            thin: a.thin,
            seed: a.seed,
            retain: retain(&a.retain),
            order: match a.order {
                Order::MeanFirst => SweepOrder::MeanFirst,
                Order::AsPrinted => SweepOrder::AsPrinted,
            },
        };
        config.validate()?;
        let hyper: Hyperparams = match &a.hyper {
            Some(p) => read_json(p)?,
            None => default_hyperparams(&ds, &part),
        };
        let st_hyper = match a.variant {
            Variant::Plain => None,
            Variant::Spatiotemporal => Some(match &a.st_hyper {
                Some(p) => read_json(p)?,
                None => StHyper::default_for(part.groups()),
            }),
        };
        let variant = if st_hyper.is_some() { "spatiotemporal" } else { "plain" };
        let meta = ChainMeta::new(&ds, &part, &config, variant);
        (config, hyper, st_hyper, ChainSamples { meta, draws: Vec::new() }, None)
    };
    samples.meta.iterations = config.iterations;

    match &st_hyper {
        None => {
            let mut s = match checkpoint {
                Some(cp) => {
                    GibbsSampler::from_state(ds, part, hyper.clone(), config.seed, cp.state, cp.next_iteration)?
                }
                None => GibbsSampler::new(ds, part, hyper.clone(), config.seed)?,
            }
            .with_order(config.order);
            drive(&mut s, &config, &mut samples)?;
            let run = run_info(a, started, clock.elapsed().as_secs_f64());
            write_archive(&a.out, &samples, &config, &hyper, None, run, Some((s.iteration(), s.state(), None, None)))?;
        }
        Some(sth) => {
            let cov = covariates(a, &schema)?;
            samples.meta.epochs = Some(cov.time_id().to_vec());
            let mut s = match checkpoint {
                Some(cp) => {
                    let (block, adaptation) = cp
                        .block
                        .zip(cp.adaptation)
                        .ok_or_else(|| Error::Validation("checkpoint lacks the space-time state".into()))?;
                    StSampler::from_state(
                        ds,
                        part,
                        hyper.clone(),
                        sth.clone(),
                        cov,
                        config.seed,
                        cp.state,
                        block,
                        adaptation,
                        cp.next_iteration,
                    )?
                }
                None => StSampler::new(ds, part, hyper.clone(), sth.clone(), cov, config.seed)?,
            }
            .with_adaptation(config.burn_in);
            drive(&mut s, &config, &mut samples)?;
            let run = run_info(a, started, clock.elapsed().as_secs_f64());
            let cp = Some((s.iteration(), s.state(), Some(s.block()), Some(s.adaptation())));
            write_archive(&a.out, &samples, &config, &hyper, Some(sth), run, cp)?;
        }
    }
    println!(
        "{} draws retained from {} sweeps -> {} ({:.1} s)",
        samples.draws.len(),
        config.iterations,
        a.out.display(),
        clock.elapsed().as_secs_f64()
    );
    Ok(())
}

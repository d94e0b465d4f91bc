use mmm_core::data::Schema;
use mmm_core::simgen::{generate, Scenario, ScenarioSpec};
use mmm_core::Result;

use crate::SimulateArgs;

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let spec = ScenarioSpec {
        n: a.n,
        group_size: a.group_size,
        levels: a.levels,
        ..ScenarioSpec::new(Scenario::parse(&a.scenario)?, a.seed)
    };
    let (ds, truth) = generate(&spec)?;
    std::fs::create_dir_all(&a.out).map_err(crate::io_err(&a.out))?;
    ds.write_csv(&a.out.join("dataset.csv"))?;
    Schema::for_dataset(&ds, &spec.partition()).save(&a.out.join("schema.json"))?;
    truth.save(&a.out.join("truth.json"))?;
    println!(
        "scenario {}: n = {}, p = {}, d = {}, seed {} -> {}",
        a.scenario,
        ds.n(),
        ds.p(),
        a.levels,
        a.seed,
        a.out.display()
    );
    Ok(())
}

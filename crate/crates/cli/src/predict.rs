use std::path::Path;

use mmm_core::archive::read_archive;
use mmm_core::data::{load_covariates, Schema};
use mmm_core::spatiotemporal::{predict_zeta, write_grid_csv};
use mmm_core::{Error, Result};

use crate::{csv_err, PredictArgs};

/// Grid points from a CSV with `x` and `y` columns.
pub fn read_grid(path: &Path) -> Result<Vec<[f64; 2]>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.into(),
            row: 1,
            column: 0,
            message: format!("missing column '{name}'"),
        })
    };
    let (xc, yc) = (col("x")?, col("y")?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let get = |c: usize| {
            let cell = rec.get(c).unwrap_or("");
            cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                path: path.into(),
                row: i + 2,
                column: c + 1,
                message: format!("'{cell}' is not a coordinate"),
            })
        };
        out.push([get(xc)?, get(yc)?]);
    }
    Ok(out)
}

pub fn predict_grid(a: &PredictArgs) -> Result<()> {
    let schema = Schema::load(&a.schema)?;
    let cov = load_covariates(&a.data, &schema)?
        .ok_or_else(|| Error::Config("the schema names no epoch and coordinate columns".into()))?;
    let (samples, manifest) = read_archive(&a.archive)?;
    let sth = manifest.st_hyper.ok_or_else(|| Error::Config("the archive holds a plain fit".into()))?;
    let grid = read_grid(&a.grid)?;
    let preds = predict_zeta(&grid, &cov, &samples, sth.nugget)?;
    let file = std::fs::File::create(&a.out).map_err(crate::io_err(&a.out))?;
    write_grid_csv(std::io::BufWriter::new(file), &preds, cov.labels())?;
    println!("{} predictions -> {}", preds.len(), a.out.display());
    Ok(())
}

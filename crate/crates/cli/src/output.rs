use std::collections::HashMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self(path.to_path_buf()))
    }

    pub fn file(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.0.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    pub fn json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        serde_json::to_writer_pretty(self.file(name)?, value)?;
        Ok(())
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.file(name)?);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Prediction {
    pub user: String,
    pub item: String,
    pub prediction: f64,
}

/// Long `user,item,<value>` file keyed by `(user, item)`; the value column
/// may have any name.
pub fn read_cells(path: &Path) -> Result<HashMap<(String, String), f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut cells = HashMap::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() < 3 {
            anyhow::bail!("{}: line {} has fewer than 3 fields", path.display(), k + 2);
        }
        let value: f64 = record[2]
            .parse()
            .with_context(|| format!("{}: line {}: `{}` is not a number", path.display(), k + 2, &record[2]))?;
        cells.insert((record[0].to_owned(), record[1].to_owned()), value);
    }
    Ok(cells)
}

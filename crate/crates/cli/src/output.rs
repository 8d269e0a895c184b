use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use svm_clt::{Error, Result};

use crate::config::Config;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'a str,
    command: &'a str,
    config: &'a Config,
    result: &'a T,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Input(format!("cannot write {}: {e}", path.display()))
}

/// Destination directory for every file a run produces.
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn create_file(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        Ok((path, BufWriter::new(file)))
    }

    pub fn json<T: Serialize>(
        &self,
        name: &str,
        command: &str,
        config: &Config,
        result: &T,
    ) -> Result<()> {
        let (path, w) = self.create_file(name)?;
        let envelope = Envelope {
            version: VERSION,
            command,
            config,
            result,
        };
        serde_json::to_writer_pretty(w, &envelope).map_err(|e| io_err(&path, e))
    }

    /// Writes a header and rows of numbers in shortest round-trip form.
    pub fn csv<S: AsRef<str>>(&self, name: &str, header: &[S], rows: &[Vec<f64>]) -> Result<()> {
        let (path, w) = self.create_file(name)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(header.iter().map(|h| h.as_ref()))
            .map_err(|e| io_err(&path, e))?;
        for row in rows {
            wr.write_record(row.iter().map(|v| format!("{v:?}")))
                .map_err(|e| io_err(&path, e))?;
        }
        wr.flush().map_err(|e| io_err(&path, e))
    }

    pub fn measure(&self, name: &str, m: &svm_clt::FiniteMeasure) -> Result<()> {
        let (_, w) = self.create_file(name)?;
        m.write_csv(w)
    }
}

/// `x1, …, xd` column names.
pub fn coordinate_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_round_trip_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(&dir.path().join("nested/out")).unwrap();
        out.csv(
            "t.csv",
            &coordinate_header(2),
            &[vec![0.1 + 0.2, 1e-300], vec![-0.0, 3.0]],
        )
        .unwrap();
        let text = fs::read_to_string(out.path("t.csv")).unwrap();
        assert_eq!(text, "x1,x2\n0.30000000000000004,1e-300\n-0.0,3.0\n");
    }

    #[test]
    fn json_envelope_has_four_fields() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path()).unwrap();
        let cfg: Config = toml::from_str("seed = 4").unwrap();
        out.json("r.json", "solve", &cfg, &[1.5, 2.0]).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.path("r.json")).unwrap()).unwrap();
        assert_eq!(v["version"], VERSION);
        assert_eq!(v["command"], "solve");
        assert_eq!(v["config"]["seed"], 4);
        assert_eq!(v["result"][0], 1.5);
        assert_eq!(v.as_object().unwrap().len(), 4);
    }
}

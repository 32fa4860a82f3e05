//! Artifact files: the JSON summary, nodal field dumps and energy traces.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use heteroclinic::{CylinderGrid, Field, GridFunction, TraceEntry};

use crate::error::CliError;

/// Bumped whenever a JSON key or a CSV column changes.
pub const SCHEMA_VERSION: u32 = 1;

pub struct Sink {
    dir: PathBuf,
    gzip: bool,
    written: Vec<String>,
}

impl Sink {
    pub fn new(dir: &Path, gzip: bool) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            gzip,
            written: Vec::new(),
        })
    }

    /// File names written so far, in order.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn open(&mut self, name: &str) -> Result<Box<dyn Write>, CliError> {
        let name = if self.gzip {
            format!("{name}.gz")
        } else {
            name.to_string()
        };
        let file = BufWriter::new(File::create(self.dir.join(&name))?);
        self.written.push(name);
        Ok(if self.gzip {
            Box::new(GzEncoder::new(file, Compression::default()))
        } else {
            Box::new(file)
        })
    }

    /// `x,y[,z],u,residual,A`, one node per row in storage order.
    pub fn field(
        &mut self,
        name: &str,
        u: &Field,
        residual: &GridFunction,
        a: &GridFunction,
    ) -> Result<(), CliError> {
        let grid = u.grid();
        let mut w = self.open(name)?;
        let header = match grid.cross().dim() {
            1 => "x,y,u,residual,A",
            _ => "x,y,z,u,residual,A",
        };
        writeln!(w, "{header}")?;
        let nc = grid.cross_count();
        for (i, x) in grid.x().iter().enumerate() {
            for c in 0..nc {
                write!(w, "{x}")?;
                for y in grid.y(c) {
                    write!(w, ",{y}")?;
                }
                writeln!(w, ",{},{},{}", u.at(i, c), residual.at(i, c), a.at(i, c))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `iteration,J,grad_norm`.
    pub fn trace(&mut self, name: &str, trace: &[TraceEntry]) -> Result<(), CliError> {
        let mut w = self.open(name)?;
        writeln!(w, "iteration,J,grad_norm")?;
        for t in trace {
            writeln!(w, "{},{},{}", t.iteration, t.energy, t.gradient_norm)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Always uncompressed.
    pub fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        text.push('\n');
        std::fs::write(self.dir.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Reads the `u` column of a field dump (plain or `.gz`) onto `grid`.
pub fn read_field(path: &Path, grid: &Arc<CylinderGrid>) -> Result<Field, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Config(format!("seed field {}: {e}", path.display())))?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let bad = |msg: String| CliError::Config(format!("seed field {}: {msg}", path.display()));
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
    let col = header
        .split(',')
        .position(|h| h.trim() == "u")
        .ok_or_else(|| bad("no `u` column".into()))?;
    let mut values = Vec::with_capacity(grid.len());
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cell = line
            .split(',')
            .nth(col)
            .ok_or_else(|| bad(format!("line {}: missing `u`", n + 2)))?;
        let v: f64 = cell
            .trim()
            .parse()
            .map_err(|e| bad(format!("line {}: {e}", n + 2)))?;
        values.push(v);
    }
    if values.len() != grid.len() {
        return Err(bad(format!(
            "{} values for a grid of {} nodes",
            values.len(),
            grid.len()
        )));
    }
    Field::new(grid.clone(), values).map_err(|e| bad(e.to_string()))
}

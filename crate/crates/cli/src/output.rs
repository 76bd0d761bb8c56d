//! Plot-ready CSV emission and the JSON plot manifest.

use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Serialize)]
pub struct Series {
    pub column: String,
    pub label: String,
}

/// One figure: a CSV file and how to draw it.
#[derive(Debug, Clone, Serialize)]
pub struct Plot {
    pub file: String,
    pub title: String,
    pub x: Series,
    pub x_scale: Scale,
    pub y: Vec<Series>,
    pub y_scale: Scale,
}

/// Collects written files and plots for one output directory.
#[derive(Debug)]
pub struct Output<'a> {
    dir: &'a Path,
    pub files: Vec<String>,
    pub plots: Vec<Plot>,
}

#[derive(Serialize)]
struct PlotManifest<'a> {
    schema_version: u32,
    plots: &'a [Plot],
}

impl<'a> Output<'a> {
    pub fn new(dir: &'a Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir,
            files: Vec::new(),
            plots: Vec::new(),
        })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        lddc_core::io::write_json_file(&self.dir.join(name), value)?;
        self.files.push(name.to_owned());
        Ok(())
    }

    pub fn table(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl Iterator<Item = Vec<f64>>,
    ) -> Result<(), CliError> {
        lddc_core::io::write_table_file(&self.dir.join(name), header, rows)?;
        self.files.push(name.to_owned());
        Ok(())
    }

    /// Registers a plot of columns of a CSV already written.
    pub fn plot(
        &mut self,
        file: &str,
        title: &str,
        x: (&str, &str, Scale),
        y: &[(&str, &str)],
        y_scale: Scale,
    ) {
        let series = |(column, label): (&str, &str)| Series {
            column: column.to_owned(),
            label: label.to_owned(),
        };
        self.plots.push(Plot {
            file: file.to_owned(),
            title: title.to_owned(),
            x: series((x.0, x.1)),
            x_scale: x.2,
            y: y.iter().map(|&s| series(s)).collect(),
            y_scale,
        });
    }

    /// Writes `plots.json` if any plot was registered.
    pub fn finish(mut self) -> Result<Vec<String>, CliError> {
        if !self.plots.is_empty() {
            let plots = std::mem::take(&mut self.plots);
            self.json(
                "plots.json",
                &PlotManifest {
                    schema_version: 1,
                    plots: &plots,
                },
            )?;
        }
        Ok(self.files)
    }
}

/// JSON has no infinity; unbounded diagnostics are written as `f64::MAX`.
pub fn finite(x: f64) -> f64 {
    if x.is_nan() {
        f64::MAX
    } else {
        x.clamp(-f64::MAX, f64::MAX)
    }
}

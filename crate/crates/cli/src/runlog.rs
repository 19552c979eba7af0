use std::path::Path;
use std::time::Instant;

use koopgait::io::{write_atomic, MODEL_VERSION, SEQUENCE_VERSION};

/// Reproducibility record of one invocation.
///
/// Everything except the effective training configuration is written as `#`
/// comment lines; the log itself is valid `--config` input.
pub struct RunLog {
    command: &'static str,
    started: Instant,
    notes: Vec<(String, String)>,
    config_echo: Vec<String>,
    config: Vec<(&'static str, String)>,
    exit_code: Option<u8>,
    wall_seconds: f64,
}

impl RunLog {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            notes: Vec::new(),
            config_echo: Vec::new(),
            config: Vec::new(),
            exit_code: None,
            wall_seconds: 0.0,
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn echo_config(&mut self, text: &str) {
        self.config_echo.extend(text.lines().map(str::to_string));
    }

    pub fn set_config(&mut self, config: Vec<(&'static str, String)>) {
        self.config = config;
    }

    pub fn finish(&mut self, exit_code: u8) {
        self.exit_code = Some(exit_code);
        self.wall_seconds = self.started.elapsed().as_secs_f64();
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# koopgait run log\n");
        out.push_str(&format!("# command: {}\n", self.command));
        let args: Vec<String> = std::env::args().collect();
        out.push_str(&format!("# argv: {}\n", args.join(" ")));
        out.push_str(&format!("# tool_version: {}\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("# sequence_format: {SEQUENCE_VERSION}\n"));
        out.push_str(&format!("# model_format: {MODEL_VERSION}\n"));
        for (k, v) in &self.notes {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        if !self.config_echo.is_empty() {
            out.push_str("# config file:\n");
            for line in &self.config_echo {
                out.push_str(&format!("#   {line}\n"));
            }
        }
        if let Some(code) = self.exit_code {
            out.push_str(&format!("# exit_code: {code}\n"));
        }
        out.push_str(&format!("# wall_time_s: {:.3}\n", self.wall_seconds));
        for (k, v) in &self.config {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> koopgait::Result<()> {
        write_atomic(&dir.join(format!("{}.log", self.command)), self.render().as_bytes())
    }
}

pub mod eval;
pub mod forecast;
pub mod gen;
pub mod gradcheck;
pub mod smooth;
pub mod train;

use std::path::{Path, PathBuf};

use koopgait::io::{apply_train_config, read_model, read_text, write_atomic, ModelBundle};
use koopgait::train::TrainConfig;

use crate::failure::Failure;
use crate::runlog::RunLog;
use crate::GlobalArgs;

/// Settings shared by every subcommand: the training configuration after applying
/// defaults, then `--config`, then `--seed`.
pub struct Context {
    pub config: TrainConfig,
    pub out_dir: PathBuf,
    pub plot: bool,
}

impl Context {
    pub fn new(global: &GlobalArgs, log: &mut RunLog) -> Result<Self, Failure> {
        let mut config = TrainConfig::default();
        if let Some(path) = &global.config {
            let text = read_text(path).map_err(|e| Failure::at(path, e))?;
            log.echo_config(&text);
            apply_train_config(&text, &mut config).map_err(|e| Failure::at(path, e))?;
        }
        if let Some(seed) = global.seed {
            config.seed = seed;
        }
        log.note("seed", config.seed);
        log.set_config(config.to_key_values());
        log.note("out_dir", global.out_dir.display());
        Ok(Self { config, out_dir: global.out_dir.clone(), plot: global.plot })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf, Failure> {
        let path = self.path(name);
        write_atomic(&path, contents).map_err(|e| Failure::runtime(e.to_string()))?;
        Ok(path)
    }
}

pub fn load_model(path: &Path) -> Result<ModelBundle, Failure> {
    read_model(path).map_err(|e| Failure::at(path, e))
}

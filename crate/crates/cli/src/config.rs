//! Run configuration: defaults, a flat `key = value` file format, and
//! command-line overrides layered on top.

use std::fmt;
use std::net::Ipv4Addr;
use std::path::PathBuf;

use flowlens_core::baselines::{ACTIVITY_FOREST, APP_FOREST, SVM_EPOCHS, SVM_LAMBDA};
use flowlens_core::nn::ADAM_LR;
use flowlens_core::preprocess::{DELAY_CAP_SECS, SIZE_CAP};

/// Everything a subcommand can read from the config file. Command-line
/// flags override individual fields after the file is applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Where synth and ingest write, and where train/eval/profile look for
    /// inputs by default.
    pub data_dir: PathBuf,
    /// Where train writes bundles and eval/profile look for them.
    pub model_dir: PathBuf,
    /// Where eval, profile, and gradcheck write reports.
    pub out_dir: PathBuf,
    /// Root seed; every component derives a named substream from it.
    pub seed: u64,
    /// Multiplier on the dataset's per-class stream counts.
    pub scale: f64,
    /// Held-out fraction of the seeded split; train fits the rest. Zero
    /// trains on everything and makes eval score everything.
    pub holdout: f64,
    pub size_cap: u32,
    pub delay_cap: f64,
    pub n_batches: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub tau: f64,
    pub gate_depth: usize,
    pub app_trees: usize,
    pub app_depth: usize,
    pub activity_trees: usize,
    pub activity_depth: usize,
    pub svm_lambda: f64,
    pub svm_epochs: usize,
    /// Laplace smoothing for the trait models.
    pub alpha: f64,
    /// Users in the synthetic population; zero skips user generation.
    pub users: usize,
    pub events_per_user: usize,
    /// Device address used by synth and as the ingest default.
    pub device_ip: Ipv4Addr,
    /// Optional JSON file mapping trait names to label sets; when absent,
    /// profile training derives the sets from the ground-truth file.
    pub traits_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            model_dir: PathBuf::from("models"),
            out_dir: PathBuf::from("out"),
            seed: 0,
            scale: 0.25,
            holdout: 0.2,
            size_cap: SIZE_CAP,
            delay_cap: DELAY_CAP_SECS,
            n_batches: 2000,
            batch_size: 50,
            lr: ADAM_LR,
            tau: 0.5,
            gate_depth: 1,
            app_trees: APP_FOREST.0,
            app_depth: APP_FOREST.1,
            activity_trees: ACTIVITY_FOREST.0,
            activity_depth: ACTIVITY_FOREST.1,
            svm_lambda: SVM_LAMBDA,
            svm_epochs: SVM_EPOCHS,
            alpha: 1.0,
            users: 30,
            events_per_user: 200,
            device_ip: Ipv4Addr::new(10, 0, 0, 2),
            traits_path: None,
        }
    }
}

/// A config line that could not be applied, with its 1-based line number.
#[derive(Debug)]
pub struct ConfigError {
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}: {}", self.line, self.reason)
    }
}

impl RunConfig {
    /// Apply a flat config file: one `key = value` per line, `#` starts a
    /// comment, blank lines are ignored. Unknown keys are errors so typos
    /// surface instead of silently using defaults.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError {
                line,
                reason: format!("expected `key = value`, got {content:?}"),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|reason| ConfigError { line, reason })?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: fmt::Display,
        {
            value.parse().map_err(|e| format!("bad value for {key}: {e}"))
        }
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value),
            "model_dir" => self.model_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => self.seed = parse(key, value)?,
            "scale" => self.scale = parse(key, value)?,
            "holdout" => self.holdout = parse(key, value)?,
            "size_cap" => self.size_cap = parse(key, value)?,
            "delay_cap" => self.delay_cap = parse(key, value)?,
            "n_batches" => self.n_batches = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "gate_depth" => self.gate_depth = parse(key, value)?,
            "app_trees" => self.app_trees = parse(key, value)?,
            "app_depth" => self.app_depth = parse(key, value)?,
            "activity_trees" => self.activity_trees = parse(key, value)?,
            "activity_depth" => self.activity_depth = parse(key, value)?,
            "svm_lambda" => self.svm_lambda = parse(key, value)?,
            "svm_epochs" => self.svm_epochs = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "users" => self.users = parse(key, value)?,
            "events_per_user" => self.events_per_user = parse(key, value)?,
            "device_ip" => self.device_ip = parse(key, value)?,
            "traits_path" => self.traits_path = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_module_constants() {
        let c = RunConfig::default();
        assert_eq!(c.n_batches, 2000);
        assert_eq!(c.batch_size, 50);
        assert_eq!(c.app_trees, 50);
        assert_eq!(c.app_depth, 15);
        assert_eq!(c.size_cap, 2048);
        assert_eq!(c.delay_cap, 1.0);
        assert_eq!(c.lr, 1e-3);
    }

    #[test]
    fn parses_comments_blanks_and_overrides() {
        let mut c = RunConfig::default();
        c.apply_file(
            "# full-line comment\n\
             \n\
             seed = 42\n\
             scale = 0.5   # trailing comment\n\
             data_dir = /tmp/caps\n\
             device_ip = 192.168.1.9\n",
        )
        .unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.scale, 0.5);
        assert_eq!(c.data_dir, PathBuf::from("/tmp/caps"));
        assert_eq!(c.device_ip, Ipv4Addr::new(192, 168, 1, 9));
        assert_eq!(c.n_batches, 2000);
    }

    #[test]
    fn unknown_key_is_rejected_with_line_number() {
        let mut c = RunConfig::default();
        let err = c.apply_file("seed = 1\nbatchs = 7\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.reason.contains("batchs"), "{}", err.reason);
    }

    #[test]
    fn bad_value_and_missing_equals_are_rejected() {
        let mut c = RunConfig::default();
        assert_eq!(c.apply_file("seed = pony\n").unwrap_err().line, 1);
        assert_eq!(c.apply_file("\njust words\n").unwrap_err().line, 2);
    }

    #[test]
    fn first_equals_splits_key_from_value() {
        let mut c = RunConfig::default();
        c.apply_file("data_dir = /tmp/a=b\n").unwrap();
        assert_eq!(c.data_dir, PathBuf::from("/tmp/a=b"));
    }
}

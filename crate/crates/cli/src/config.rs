//! Run configuration: defaults, overridden by a `key = value` file,
//! overridden by command-line flags. Every resolved value is recorded so
//! the full configuration can be logged and saved next to the outputs.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use radcloud_core::fmcw::RadarConfig;
use radcloud_core::kv::KvMap;

/// Non-radar keys a config file may set.
pub const RUN_KEYS: &[&str] = &[
    "seed",
    "frames",
    "frames_per_trajectory",
    "recipes",
    "trajectories",
    "noise_std",
    "scatterer_spacing_m",
    "epochs",
    "batch_size",
    "lr",
    "lr_decay",
    "max_steps",
    "base_channels",
    "depth",
    "threshold",
    "split",
    "fps",
    "loss_rate",
    "duration_s",
    "transport",
    "pool_frames",
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub radar: RadarConfig,
    file: KvMap,
    resolved: Vec<(String, String)>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let map: KvMap = text.parse().with_context(|| format!("parsing config {}", p.display()))?;
                let known: Vec<&str> = RadarConfig::KEYS.iter().chain(RUN_KEYS).copied().collect();
                map.reject_unknown(&known).with_context(|| format!("config {}", p.display()))?;
                map
            }
            None => KvMap::new(),
        };
        let radar = RadarConfig::from_kv(&file).context("radar configuration")?;
        Ok(Self { radar, file, resolved: Vec::new() })
    }

    /// Flag value if given, else the config file value, else `default`.
    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.file.parse_opt(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn record(&mut self, key: &str, value: &dyn Display) {
        let v = value.to_string();
        match self.resolved.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = v,
            None => self.resolved.push((key.to_owned(), v)),
        }
    }

    /// Radar parameters followed by every run setting read so far.
    pub fn resolved_text(&self) -> String {
        let mut s = self.radar.to_string();
        for (k, v) in &self.resolved {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn log(&self, command: &str) {
        for line in self.resolved_text().lines() {
            log::info!("[{command}] {line}");
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("resolved.cfg");
        std::fs::write(&path, self.resolved_text()).with_context(|| format!("writing {}", path.display()))
    }
}

/// Comma-separated list value.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<T>().map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl<T: Display> Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_flag_file_default() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "epochs = 7\nlr = 0.01\nn_chirps = 40\n").unwrap();
        let mut rc = RunConfig::load(Some(&p)).unwrap();
        assert_eq!(rc.value("epochs", None, 3usize).unwrap(), 7);
        assert_eq!(rc.value("epochs", Some(9usize), 3).unwrap(), 9);
        assert_eq!(rc.value("batch_size", None, 4usize).unwrap(), 4);
        let text = rc.resolved_text();
        assert!(text.contains("epochs = 9") && text.contains("batch_size = 4") && text.contains("n_chirps = 40"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "epoch = 7\n").unwrap();
        assert!(RunConfig::load(Some(&p)).is_err());
    }

    #[test]
    fn lists() {
        let l: List<u32> = "1, 2,3".parse().unwrap();
        assert_eq!(l.0, vec![1, 2, 3]);
        assert_eq!(l.to_string(), "1,2,3");
    }
}

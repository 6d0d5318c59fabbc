//! `--config` files: a JSON object overriding any default.
//!
//! ```json
//! { "session": { "age": 45, "tick_hz": 60 }, "rider": { "p_max_w": 350 } }
//! ```
//!
//! `session` takes any [`SessionConfig`] field, `rider` any [`RiderModel`]
//! field and `policy` any [`RiderPolicy`] field. Unknown keys are errors.

use std::path::Path;

use cardioloop_core::rider_sim::{RiderModel, RiderPolicy};
use cardioloop_core::session::SessionConfig;
use serde::Deserialize;

use crate::exit::{CliResult, Failure, OrExit, CONFIG, NO_INPUT};

/// Seed used when neither `--seed` nor the config file sets one.
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    session: Option<serde_json::Value>,
    rider: RiderModel,
    policy: Option<RiderPolicy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub session: SessionConfig,
    pub rider: RiderModel,
    /// Policy parameters from the file, if it set any.
    pub policy: Option<RiderPolicy>,
    pub seed: u64,
}

impl Settings {
    /// Defaults, then the file, then `--seed`. Explicit `seeds` in the file
    /// win over the default seed but not over `--seed`.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> CliResult<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .or_exit_with(NO_INPUT, || format!("cannot read config {}", p.display()))?;
                serde_json::from_str::<FileConfig>(&text)
                    .or_exit_with(CONFIG, || format!("invalid config {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        let file_sets_seeds = file.session.as_ref().is_some_and(|s| s.get("seeds").is_some());
        let session: SessionConfig = match file.session {
            Some(v) => serde_json::from_value(v).or_exit_with(CONFIG, || "invalid `session` in config".into())?,
            None => SessionConfig::default(),
        };
        let session = match seed {
            None if file_sets_seeds => session,
            _ => session.with_seed(seed.unwrap_or(DEFAULT_SEED)),
        };
        let seed = seed.unwrap_or(DEFAULT_SEED);
        session.validate().map_err(|e| Failure::new(CONFIG, e))?;
        file.rider.validate().map_err(|e| Failure::new(CONFIG, e))?;
        Ok(Self {
            session,
            rider: file.rider,
            policy: file.policy,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn load(json: &str, seed: Option<u64>) -> CliResult<Settings> {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(json.as_bytes()).unwrap();
        Settings::load(Some(f.path()), seed)
    }

    #[test]
    fn defaults_without_a_file() {
        let s = Settings::load(None, None).unwrap();
        assert_eq!(s.seed, DEFAULT_SEED);
        assert_eq!(s.session, SessionConfig::default().with_seed(DEFAULT_SEED));
    }

    #[test]
    fn file_overrides_selected_fields() {
        let s = load(r#"{"session":{"age":45},"rider":{"p_max_w":350}}"#, Some(9)).unwrap();
        assert_eq!(s.session.age, 45);
        assert_eq!(s.session.tick_hz, 50);
        assert_eq!(s.rider.p_max_w, 350.0);
        assert_eq!(s.session.seeds, SessionConfig::default().with_seed(9).seeds);
    }

    #[test]
    fn explicit_seeds_in_the_file_beat_the_default_seed_only() {
        let json = r#"{"session":{"seeds":{"adaptation":5,"rider":6,"ecg":7}}}"#;
        assert_eq!(load(json, None).unwrap().session.seeds.rider, 6);
        assert_ne!(load(json, Some(DEFAULT_SEED)).unwrap().session.seeds.rider, 6);
    }

    #[test]
    fn bad_files_exit_with_config_status() {
        assert_eq!(load(r#"{"sesion":{}}"#, None).unwrap_err().code, CONFIG);
        assert_eq!(load(r#"{"session":{"tick_hz":0}}"#, None).unwrap_err().code, CONFIG);
        assert_eq!(load("not json", None).unwrap_err().code, CONFIG);
        let missing = Settings::load(Some(Path::new("/no/such/config.json")), None);
        assert_eq!(missing.unwrap_err().code, NO_INPUT);
    }
}

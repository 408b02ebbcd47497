//! Service configuration.

use std::path::PathBuf;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub port: u16,
    pub data_dir: PathBuf,
    pub session_ttl: Duration,
    pub max_upload_bytes: usize,
    pub lease_sweep_interval: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            data_dir: PathBuf::from("./labelforge-data"),
            session_ttl: Duration::from_secs(12 * 3600),
            max_upload_bytes: 50 * 1024 * 1024,
            lease_sweep_interval: Duration::from_secs(60),
        }
    }
}

/// Environment variables read by [`ServiceConfig::apply_env`].
pub const ENV_PORT: &str = "LABELFORGE_PORT";
pub const ENV_DATA_DIR: &str = "LABELFORGE_DATA_DIR";
pub const ENV_SESSION_TTL: &str = "LABELFORGE_SESSION_TTL_SECONDS";
pub const ENV_MAX_UPLOAD: &str = "LABELFORGE_MAX_UPLOAD_BYTES";
pub const ENV_LEASE_SWEEP: &str = "LABELFORGE_LEASE_SWEEP_SECONDS";

impl ServiceConfig {
    /// Overrides fields from `LABELFORGE_*` variables looked up through
    /// `lookup`. Returns every variable that failed to parse.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();
        let mut number = |name: &str| -> Option<u64> {
            let raw = lookup(name)?;
            match raw.trim().parse::<u64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    errors.push(format!("{name}: not a non-negative integer: {raw:?}"));
                    None
                }
            }
        };
        if let Some(port) = number(ENV_PORT) {
            self.port = port.try_into().unwrap_or(0);
        }
        if let Some(ttl) = number(ENV_SESSION_TTL) {
            self.session_ttl = Duration::from_secs(ttl);
        }
        if let Some(cap) = number(ENV_MAX_UPLOAD) {
            self.max_upload_bytes = cap.try_into().unwrap_or(usize::MAX);
        }
        if let Some(sweep) = number(ENV_LEASE_SWEEP) {
            self.lease_sweep_interval = Duration::from_secs(sweep);
        }
        if let Some(dir) = lookup(ENV_DATA_DIR) {
            self.data_dir = PathBuf::from(dir);
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();
        if self.port == 0 {
            errors.push("port must be between 1 and 65535".to_string());
        }
        if self.data_dir.as_os_str().is_empty() {
            errors.push("data directory must not be empty".to_string());
        }
        if self.session_ttl.is_zero() {
            errors.push("session TTL must be positive".to_string());
        }
        if self.max_upload_bytes == 0 {
            errors.push("upload size cap must be positive".to_string());
        }
        if self.lease_sweep_interval.is_zero() {
            errors.push("lease sweep interval must be positive".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn env_overrides_and_validation() {
        let vars: HashMap<&str, &str> = [(ENV_PORT, "9000"), (ENV_LEASE_SWEEP, "5")].into();
        let mut config = ServiceConfig::default();
        config.apply_env(|k| vars.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(config.port, 9000);
        assert_eq!(config.lease_sweep_interval, Duration::from_secs(5));
        assert!(config.validate().is_ok());
    }

    #[test]
    fn bad_values_are_reported() {
        let vars: HashMap<&str, &str> = [(ENV_PORT, "x"), (ENV_SESSION_TTL, "-1")].into();
        let mut config = ServiceConfig::default();
        let errors = config.apply_env(|k| vars.get(k).map(|v| v.to_string())).unwrap_err();
        assert_eq!(errors.len(), 2);

        let config = ServiceConfig {
            port: 0,
            max_upload_bytes: 0,
            ..Default::default()
        };
        assert_eq!(config.validate().unwrap_err().len(), 2);
    }
}

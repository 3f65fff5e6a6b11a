use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Identity of a run within a benchmark sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepMembership {
    pub exp_name: String,
    pub job_index: usize,
    pub total_jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: String,
    pub exp_name: String,
    pub algo_id: String,
    pub env_id: String,
    pub seed: u64,
    /// Full hyperparameter snapshot.
    pub config: serde_json::Value,
    /// The exact command line.
    pub invocation: String,
    /// UTC, RFC 3339.
    pub start_time: String,
    /// SHA-256 of the algorithm source file.
    pub code_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepMembership>,
}

/// Hex SHA-256 of `source`.
pub fn code_version(source: &str) -> String {
    Sha256::digest(source.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Zero-padded UTC timestamp with microseconds plus four random hex chars,
/// e.g. `20261017T093015123456Z-3fa9`. Lexicographic order is time order.
pub fn new_run_id() -> String {
    let now = chrono::Utc::now();
    format!("{}-{:04x}", now.format("%Y%m%dT%H%M%S%6fZ"), rand::random::<u16>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_ids_sort_by_time() {
        let a = new_run_id();
        std::thread::sleep(std::time::Duration::from_millis(2));
        let b = new_run_id();
        assert!(a < b);
        assert_eq!(a.len(), "20261017T093015123456Z-3fa9".len());
    }

    #[test]
    fn code_version_is_hex_sha256() {
        let v = code_version("abc");
        assert_eq!(v, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}

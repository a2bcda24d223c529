//! Case-file and user-file ingestion.
//!
//! Cases are JSON documents with `buses`, `lines`, `demand`, and `horizon`.
//! Cost coefficients use the half-quadratic convention
//! `C(g) = 1/2 a g^2 + b g + c`, so a curve printed as `0.05 g^2 + 5 g + 100`
//! is entered with `a = 0.1`. Users come as CSV with header
//! `user_id,bus_id,t1,...,tT`.

use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::model::{NetworkInstance, UserProfile};

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json { message: String, line: usize, column: usize },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad users file: {0}")]
    BadUsers(String),
}

impl From<serde_json::Error> for CaseError {
    fn from(err: serde_json::Error) -> Self {
        CaseError::Json { line: err.line(), column: err.column(), message: err.to_string() }
    }
}

/// Parses a case from JSON text.
pub fn parse_case(text: &str) -> Result<NetworkInstance, CaseError> {
    Ok(serde_json::from_str(text)?)
}

/// Loads a case file.
pub fn load_case(path: &Path) -> Result<NetworkInstance, CaseError> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    parse_case(&text)
}

/// Canonical JSON form: pretty-printed with the declared field order and a
/// trailing newline. Deserializing and re-serializing a canonical file is
/// byte-idempotent.
pub fn canonical_json(instance: &NetworkInstance) -> String {
    let mut out = serde_json::to_string_pretty(instance).expect("case serialization");
    out.push('\n');
    out
}

/// Writes a case file in canonical form.
pub fn save_case(instance: &NetworkInstance, path: &Path) -> Result<(), CaseError> {
    std::fs::write(path, canonical_json(instance))?;
    Ok(())
}

/// Parses users from CSV text with header `user_id,bus_id,t1,...,tT`.
pub fn parse_users(text: &str, horizon: usize) -> Result<Vec<UserProfile>, CaseError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    {
        let headers = reader.headers()?;
        if headers.len() != horizon + 2 {
            return Err(CaseError::BadUsers(format!(
                "expected {} columns (user_id, bus_id, t1..t{horizon}), found {}",
                horizon + 2,
                headers.len()
            )));
        }
        if headers.get(0) != Some("user_id") || headers.get(1) != Some("bus_id") {
            return Err(CaseError::BadUsers(
                "header must start with user_id,bus_id".into(),
            ));
        }
    }
    let mut users = Vec::new();
    for record in reader.records() {
        let record = record?;
        let user_id = record
            .get(0)
            .ok_or_else(|| CaseError::BadUsers("missing user_id".into()))?
            .to_string();
        let bus_id: usize = record
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CaseError::BadUsers(format!("user {user_id}: bad bus_id")))?;
        let mut load = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let v: f64 = record
                .get(2 + t)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| {
                    CaseError::BadUsers(format!("user {user_id}: bad load at t{}", t + 1))
                })?;
            if v < 0.0 {
                return Err(CaseError::BadUsers(format!(
                    "user {user_id}: negative load at t{}",
                    t + 1
                )));
            }
            load.push(v);
        }
        users.push(UserProfile { user_id, bus_id, load });
    }
    Ok(users)
}

/// Loads a users CSV.
pub fn load_users(path: &Path, horizon: usize) -> Result<Vec<UserProfile>, CaseError> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    parse_users(&text, horizon)
}

/// Writes users in the documented CSV schema.
pub fn write_users(users: &[UserProfile], horizon: usize, path: &Path) -> Result<(), CaseError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["user_id".to_string(), "bus_id".to_string()];
    header.extend((1..=horizon).map(|t| format!("t{t}")));
    writer.write_record(&header)?;
    for user in users {
        let mut record = vec![user.user_id.clone(), user.bus_id.to_string()];
        record.extend(user.load.iter().map(|v| format!("{v}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

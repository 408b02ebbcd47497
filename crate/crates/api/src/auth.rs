//! Accounts, password hashing and session tokens.

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use chrono::{DateTime, Utc};
use labelforge_core::{Coder, Role};
use rand::distr::{Alphanumeric, SampleString};
use rand::RngCore;

use crate::store::{Session, Store, StoreError, StoredUser};

pub const GENERATED_PASSWORD_LEN: usize = 20;
const TOKEN_BYTES: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum AccountError {
    #[error("invalid username: {0}")]
    InvalidUsername(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("password hashing failed: {0}")]
    Hash(String),
}

pub fn validate_username(username: &str) -> Result<(), AccountError> {
    let ok = !username.is_empty()
        && username.chars().count() <= 64
        && username
            .chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '-' | '_' | '.' | '@'));
    if ok {
        Ok(())
    } else {
        Err(AccountError::InvalidUsername(format!(
            "{username:?} (1-64 letters, digits, '-', '_', '.', '@')"
        )))
    }
}

pub fn hash_password(password: &str) -> Result<String, AccountError> {
    let mut salt = [0u8; 16];
    rand::rng().fill_bytes(&mut salt);
    let salt = SaltString::encode_b64(&salt).map_err(|e| AccountError::Hash(e.to_string()))?;
    Argon2::default()
        .hash_password(password.as_bytes(), &salt)
        .map(|h| h.to_string())
        .map_err(|e| AccountError::Hash(e.to_string()))
}

pub fn verify_password(password: &str, hash: &str) -> bool {
    PasswordHash::new(hash)
        .map(|parsed| Argon2::default().verify_password(password.as_bytes(), &parsed).is_ok())
        .unwrap_or(false)
}

pub fn generate_password() -> String {
    Alphanumeric.sample_string(&mut rand::rng(), GENERATED_PASSWORD_LEN)
}

/// Creates an account with a generated password and returns both.
pub fn create_account(store: &Store, username: &str, role: Role, now: DateTime<Utc>) -> Result<(Coder, String), AccountError> {
    validate_username(username)?;
    let password = generate_password();
    let coder = Coder::new(username, role);
    store.insert_user(&StoredUser {
        coder: coder.clone(),
        password_hash: hash_password(&password)?,
        created_at: now,
    })?;
    Ok((coder, password))
}

pub fn new_session(coder: &Coder, ttl: std::time::Duration, now: DateTime<Utc>) -> Session {
    let mut bytes = [0u8; TOKEN_BYTES];
    rand::rng().fill_bytes(&mut bytes);
    let token = bytes.iter().map(|b| format!("{b:02x}")).collect();
    Session {
        token,
        coder_id: coder.id,
        expires_at: now + chrono::Duration::from_std(ttl).unwrap_or(chrono::Duration::MAX),
    }
}

use sha2::{Digest, Sha256};

/// `sha256:<hex>` of a configuration document.
pub fn config_digest(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

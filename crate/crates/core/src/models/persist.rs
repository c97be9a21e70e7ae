//! Versioned binary container for fitted models.
//!
//! Layout: 4-byte magic `CBND`, little-endian `u16` format version, then a
//! CBOR document `{ "kind": <string>, "payload": <model> }`.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"CBND";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("container holds `{found}`, expected `{expected}`")]
    WrongKind { expected: String, found: String },
    #[error("encoding error: {0}")]
    Encode(String),
    #[error("decoding error: {0}")]
    Decode(String),
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    kind: String,
    payload: T,
}

pub fn write_model<T: Serialize, W: Write>(mut w: W, kind: &str, model: &T) -> Result<(), PersistError> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    ciborium::into_writer(&Envelope { kind: kind.to_string(), payload: model }, &mut w)
        .map_err(|e| PersistError::Encode(e.to_string()))?;
    Ok(())
}

pub fn read_model<T: DeserializeOwned, R: Read>(mut r: R, kind: &str) -> Result<T, PersistError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(PersistError::BadMagic);
    }
    let mut version = [0u8; 2];
    r.read_exact(&mut version)?;
    let version = u16::from_le_bytes(version);
    if version != FORMAT_VERSION {
        return Err(PersistError::UnsupportedVersion(version));
    }
    let env: Envelope<T> = ciborium::from_reader(r).map_err(|e| PersistError::Decode(e.to_string()))?;
    if env.kind != kind {
        return Err(PersistError::WrongKind { expected: kind.to_string(), found: env.kind });
    }
    Ok(env.payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit_regressor, LearnerSpec, Matrix};

    #[test]
    fn forest_survives_a_round_trip() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|v| v.cos()).collect();
        let m = fit_regressor(&LearnerSpec::random_forest(5), &Matrix::column(&xs), &ys).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, "regressor", &m).unwrap();
        assert_eq!(&buf[..4], MAGIC);
        let back: crate::models::FittedRegressor = read_model(buf.as_slice(), "regressor").unwrap();
        assert_eq!(back, m);
        assert!(matches!(
            read_model::<crate::models::FittedRegressor, _>(buf.as_slice(), "classifier"),
            Err(PersistError::WrongKind { .. })
        ));
        buf[4] = 9;
        assert!(matches!(
            read_model::<crate::models::FittedRegressor, _>(buf.as_slice(), "regressor"),
            Err(PersistError::UnsupportedVersion(9))
        ));
        assert!(matches!(
            read_model::<crate::models::FittedRegressor, _>(&b"nope.."[..], "regressor"),
            Err(PersistError::BadMagic)
        ));
    }
}

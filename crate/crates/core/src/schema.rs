//! JSON helpers that report the offending field on schema errors.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn from_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            Error::Json(inner)
        } else {
            Error::Schema {
                field,
                message: inner.to_string(),
            }
        }
    })
}

pub fn read<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    from_str(&std::fs::read_to_string(path)?)
}

pub fn to_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    std::fs::write(path, to_string(value)?)?;
    Ok(())
}

/// Fails with a schema error unless `found` equals `expected`.
pub fn check_version(found: u32, expected: u32) -> Result<()> {
    if found != expected {
        return Err(Error::Schema {
            field: "schema_version".into(),
            message: format!("found {found}, this build reads {expected}"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    #[allow(dead_code)]
    struct Outer {
        inner: Vec<Inner>,
    }

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    #[allow(dead_code)]
    struct Inner {
        value: u32,
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = from_str::<Outer>(r#"{"inner": [{"value": 1}, {"value": "x"}]}"#).unwrap_err();
        match err {
            Error::Schema { field, .. } => assert_eq!(field, "inner[1].value"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(from_str::<Outer>("{"), Err(Error::Json(_))));
    }
}

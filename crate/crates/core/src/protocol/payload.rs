use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// An opaque JSON tree carried by MESSAGE and RELAY frames.
///
/// The hub never interprets it. The text is kept exactly as received except
/// that insignificant whitespace is dropped, so key order and number spelling
/// survive relaying.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Payload(String);

impl Payload {
    /// Empty JSON object.
    pub fn empty() -> Self {
        Self("{}".to_owned())
    }

    /// Parses and compacts arbitrary JSON text.
    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        let raw: &RawValue = serde_json::from_str(text)?;
        Ok(Self::from_raw(raw))
    }

    pub(crate) fn from_raw(raw: &RawValue) -> Self {
        Self(compact(raw.get()))
    }

    pub fn from_value(value: &serde_json::Value) -> Self {
        Self(value.to_string())
    }

    /// Serializes any value as a payload.
    pub fn encode<T: Serialize + ?Sized>(value: &T) -> Result<Self, serde_json::Error> {
        serde_json::to_string(value).map(Self)
    }

    pub fn decode<T: DeserializeOwned>(&self) -> Result<T, serde_json::Error> {
        serde_json::from_str(&self.0)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::from_str(&self.0).expect("payload holds valid JSON")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for Payload {
    fn default() -> Self {
        Self::empty()
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Payload({})", self.0)
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Payload {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        // Invariant: self.0 is valid compact JSON.
        let raw = RawValue::from_string(self.0.clone()).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

/// Strips whitespace outside string literals. Input must be valid JSON.
fn compact(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    for c in text.chars() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
        } else if c == '"' {
            in_string = true;
            out.push(c);
        } else if !matches!(c, ' ' | '\t' | '\n' | '\r') {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_keeps_strings_and_order() {
        let p = Payload::parse("{ \"z\" : 1 ,\n \"a\": \"x y\\\" }\" , \"n\": 1.50e3 }").unwrap();
        assert_eq!(p.as_str(), r#"{"z":1,"a":"x y\" }","n":1.50e3}"#);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Payload::parse("{").is_err());
        assert!(Payload::parse("").is_err());
    }

    #[test]
    fn scalar_payloads_are_allowed() {
        assert_eq!(Payload::parse(" 42 ").unwrap().as_str(), "42");
        assert_eq!(Payload::parse("null").unwrap().as_str(), "null");
    }
}

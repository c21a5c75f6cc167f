use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Deserialize;

use super::GatewayError;

/// Canned replies keyed by role tag, consumed in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(transparent)]
pub struct Script {
    replies: HashMap<String, Vec<String>>,
}

impl Script {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn from_pairs<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, Vec<V>)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self {
            replies: pairs
                .into_iter()
                .map(|(k, v)| (k.into(), v.into_iter().map(Into::into).collect()))
                .collect(),
        }
    }

    pub fn reply(&self, role_tag: &str, index: usize) -> Option<&str> {
        self.replies.get(role_tag)?.get(index).map(String::as_str)
    }
}

/// Per-session cursor over a [`Script`].
///
/// Each role tag has its own call counter, so concurrent agents do not
/// perturb each other's replies.
#[derive(Debug)]
pub struct ScriptedProvider {
    script: Arc<Script>,
    counters: Mutex<HashMap<String, usize>>,
}

impl ScriptedProvider {
    pub fn new(script: Arc<Script>) -> Self {
        Self {
            script,
            counters: Mutex::new(HashMap::new()),
        }
    }

    pub fn next_reply(&self, role_tag: &str) -> Result<String, GatewayError> {
        let mut counters = self.counters.lock().expect("script counters poisoned");
        let index = counters.entry(role_tag.to_owned()).or_insert(0);
        let reply = self
            .script
            .reply(role_tag, *index)
            .ok_or_else(|| GatewayError::ScriptExhausted {
                role_tag: role_tag.to_owned(),
                index: *index,
            })?
            .to_owned();
        *index += 1;
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replies_in_order_then_exhausted() {
        let p = ScriptedProvider::new(Arc::new(Script::from_pairs([("manager", vec!["a", "b"])])));
        assert_eq!(p.next_reply("manager").unwrap(), "a");
        assert_eq!(p.next_reply("manager").unwrap(), "b");
        assert!(matches!(
            p.next_reply("manager"),
            Err(GatewayError::ScriptExhausted { index: 2, .. })
        ));
        assert!(matches!(
            p.next_reply("other"),
            Err(GatewayError::ScriptExhausted { index: 0, .. })
        ));
    }

    #[test]
    fn role_tags_are_independent() {
        let p = ScriptedProvider::new(Arc::new(Script::from_pairs([
            ("a", vec!["a0", "a1"]),
            ("b", vec!["b0"]),
        ])));
        assert_eq!(p.next_reply("a").unwrap(), "a0");
        assert_eq!(p.next_reply("b").unwrap(), "b0");
        assert_eq!(p.next_reply("a").unwrap(), "a1");
    }

    #[test]
    fn parses_json_map() {
        let s = Script::from_json(r#"{"manager": ["x"]}"#).unwrap();
        assert_eq!(s.reply("manager", 0), Some("x"));
    }
}

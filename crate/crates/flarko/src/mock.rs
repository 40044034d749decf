//! Deterministic stand-in for a chat model.
//!
//! Selection calls pick a hash-ranked subset of the candidate lines;
//! generation calls rank the ISINs found in the prompt, preferring those
//! the investor has traded. Output depends only on the seed, the instance,
//! the stage and the prompt text, so runs are reproducible under any
//! thread schedule.

use std::collections::BTreeSet;

use flarko_core::llm::{CallContext, CallStage, ChatMessage, GenerationConfig};
use flarko_core::market::is_isin;

use crate::gateway::{Transport, TransportError};

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer, so keys differing in one trailing digit spread out
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockTransport {
    pub seed: u64,
    /// Most entities a selection call returns.
    pub max_select: usize,
}

impl MockTransport {
    pub fn new(seed: u64) -> Self {
        Self { seed, max_select: 5 }
    }

    fn select(&self, call: &CallContext<'_>, messages: &[ChatMessage]) -> String {
        let system = messages.first().map_or("", |m| m.content.as_str());
        let user = messages.last().map_or("", |m| m.content.as_str());
        let candidates: Vec<&str> = user
            .split_once("Candidates:")
            .map(|(_, rest)| rest.lines().map(str::trim).filter(|l| !l.is_empty()).collect())
            .unwrap_or_default();
        if candidates.is_empty() {
            return String::new();
        }
        let seed = self.seed.to_le_bytes();
        let key = fnv1a(&[&seed, call.instance_id.as_bytes(), call.stage.as_str().as_bytes(), system.as_bytes()]);
        let k = 1 + (key as usize) % self.max_select.max(1).min(candidates.len());
        let mut ranked: Vec<(u64, usize)> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (fnv1a(&[&key.to_le_bytes(), c.as_bytes()]), i))
            .collect();
        ranked.sort_unstable();
        let mut chosen: Vec<usize> = ranked.iter().take(k).map(|&(_, i)| i).collect();
        chosen.sort_unstable();
        chosen.iter().map(|&i| candidates[i]).collect::<Vec<_>>().join("\n")
    }

    fn recommend(&self, call: &CallContext<'_>, messages: &[ChatMessage]) -> String {
        let isins_in = |text: &str| -> BTreeSet<String> {
            text.split(|c: char| !c.is_ascii_alphanumeric())
                .filter(|w| is_isin(w))
                .map(str::to_string)
                .collect()
        };
        let personal = messages.first().map(|m| isins_in(&m.content)).unwrap_or_default();
        let market: BTreeSet<String> = messages.iter().flat_map(|m| isins_in(&m.content)).collect();
        let seed = self.seed.to_le_bytes();
        let key = fnv1a(&[&seed, call.instance_id.as_bytes()]).to_le_bytes();
        let mut ranked: Vec<(bool, u64, &String)> = market
            .iter()
            .map(|i| (!personal.contains(i), fnv1a(&[&key, i.as_bytes()]), i))
            .collect();
        ranked.sort();
        // one slot stays open for something the investor has not traded
        let mut out: Vec<&String> = ranked.iter().filter(|r| !r.0).take(2).map(|r| r.2).collect();
        out.extend(ranked.iter().filter(|r| r.0).map(|r| r.2).take(3 - out.len()));
        if out.len() < 3 {
            out.extend(ranked.iter().filter(|r| !r.0).skip(2).map(|r| r.2).take(3 - out.len()));
        }
        out.iter().enumerate().map(|(n, i)| format!("{}. {i}", n + 1)).collect::<Vec<_>>().join("\n")
    }
}

impl Transport for MockTransport {
    fn send(&self, call: &CallContext<'_>, _: &GenerationConfig, messages: &[ChatMessage]) -> Result<String, TransportError> {
        Ok(match call.stage {
            CallStage::Ptr | CallStage::Mr => self.select(call, messages),
            CallStage::Generation => self.recommend(call, messages),
        })
    }
}

//! Multicast source validation against an exact-match quadruple table.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::net::Ipv6Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SaviError {
    #[error("malformed IPv6 address `{0}`")]
    Address(String),
    #[error("port {0} out of range 0-65535")]
    Port(i64),
    #[error("malformed port `{0}`")]
    PortText(String),
    #[error("expected src,dst,sport,dport but got `{0}`")]
    Quadruple(String),
    #[error("line {line}: {source}")]
    Line { line: usize, source: Box<SaviError> },
    #[error("rules file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rules file: {0}")]
    Io(#[from] std::io::Error),
}

/// Source address, destination group address, source port, destination port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SaviRule {
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
    pub sport: u16,
    pub dport: u16,
}

fn parse_addr(s: &str) -> Result<Ipv6Addr, SaviError> {
    s.trim().parse().map_err(|_| SaviError::Address(s.trim().to_string()))
}

fn check_port(p: i64) -> Result<u16, SaviError> {
    u16::try_from(p).map_err(|_| SaviError::Port(p))
}

fn parse_port(s: &str) -> Result<u16, SaviError> {
    let n: i64 = s.trim().parse().map_err(|_| SaviError::PortText(s.trim().to_string()))?;
    check_port(n)
}

impl SaviRule {
    pub fn new(src: Ipv6Addr, dst: Ipv6Addr, sport: u16, dport: u16) -> Self {
        Self { src, dst, sport, dport }
    }

    pub fn parse(src: &str, dst: &str, sport: i64, dport: i64) -> Result<Self, SaviError> {
        Ok(Self { src: parse_addr(src)?, dst: parse_addr(dst)?, sport: check_port(sport)?, dport: check_port(dport)? })
    }
}

/// `src,dst,sport,dport`.
impl FromStr for SaviRule {
    type Err = SaviError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').collect();
        let [src, dst, sport, dport] = parts[..] else {
            return Err(SaviError::Quadruple(s.to_string()));
        };
        Ok(Self { src: parse_addr(src)?, dst: parse_addr(dst)?, sport: parse_port(sport)?, dport: parse_port(dport)? })
    }
}

impl fmt::Display for SaviRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.src, self.dst, self.sport, self.dport)
    }
}

#[derive(Serialize, Deserialize)]
struct WireRule {
    src: String,
    dst: String,
    sport: i64,
    dport: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Allow,
    Deny,
}

#[derive(Debug, Clone, Default)]
pub struct SaviTable {
    rules: HashSet<SaviRule>,
}

impl SaviTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` if the rule was already present.
    pub fn install(&mut self, rule: SaviRule) -> bool {
        self.rules.insert(rule)
    }

    pub fn remove(&mut self, rule: &SaviRule) -> bool {
        self.rules.remove(rule)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn validate(&self, packet: &SaviRule) -> Verdict {
        if self.rules.contains(packet) {
            Verdict::Allow
        } else {
            Verdict::Deny
        }
    }

    /// One `{"src","dst","sport","dport"}` object per line; blank lines skipped.
    pub fn load_jsonl<R: BufRead>(reader: R) -> Result<Self, SaviError> {
        let mut table = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let wrap = |e: SaviError| SaviError::Line { line: i + 1, source: Box::new(e) };
            let wire: WireRule = serde_json::from_str(&line).map_err(|e| wrap(e.into()))?;
            let rule = SaviRule::parse(&wire.src, &wire.dst, wire.sport, wire.dport).map_err(wrap)?;
            table.install(rule);
        }
        Ok(table)
    }

    /// Rules sorted, one JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut rules: Vec<&SaviRule> = self.rules.iter().collect();
        rules.sort();
        rules
            .into_iter()
            .map(|r| {
                let wire = WireRule {
                    src: r.src.to_string(),
                    dst: r.dst.to_string(),
                    sport: r.sport.into(),
                    dport: r.dport.into(),
                };
                serde_json::to_string(&wire).expect("rule serializes") + "\n"
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule() -> SaviRule {
        "2001:db8::1,ff3e::8000:1,5004,5004".parse().unwrap()
    }

    #[test]
    fn default_deny() {
        assert_eq!(SaviTable::new().validate(&rule()), Verdict::Deny);
    }

    #[test]
    fn exact_match_only() {
        let mut t = SaviTable::new();
        let r = rule();
        assert!(t.install(r));
        assert_eq!(t.validate(&r), Verdict::Allow);
        assert_eq!(t.validate(&SaviRule { sport: r.sport + 1, ..r }), Verdict::Deny);
        assert_eq!(t.validate(&SaviRule { dport: r.dport - 1, ..r }), Verdict::Deny);
        assert_eq!(t.validate(&SaviRule { src: "2001:db8::2".parse().unwrap(), ..r }), Verdict::Deny);
    }

    #[test]
    fn idempotent_install_and_remove() {
        let mut t = SaviTable::new();
        assert!(t.install(rule()));
        assert!(!t.install(rule()));
        assert_eq!(t.len(), 1);
        assert!(t.remove(&rule()));
        assert_eq!(t.validate(&rule()), Verdict::Deny);
        assert!(!t.remove(&rule()));
    }

    #[test]
    fn malformed_input() {
        assert!(matches!(SaviRule::parse("10.0.0.1", "ff02::1", 1, 1), Err(SaviError::Address(_))));
        assert!(matches!(SaviRule::parse("::1", "ff02::1", 65536, 1), Err(SaviError::Port(65536))));
        assert!(matches!(SaviRule::parse("::1", "ff02::1", 1, -1), Err(SaviError::Port(-1))));
        assert!(matches!("::1,ff02::1,1".parse::<SaviRule>(), Err(SaviError::Quadruple(_))));
        assert!(matches!("::1,ff02::1,x,1".parse::<SaviRule>(), Err(SaviError::PortText(_))));
    }

    #[test]
    fn jsonl_round_trip() {
        let text = "{\"src\":\"2001:db8::1\",\"dst\":\"ff3e::1\",\"sport\":1,\"dport\":2}\n\n\
                    {\"src\":\"2001:db8::2\",\"dst\":\"ff3e::1\",\"sport\":3,\"dport\":4}\n";
        let t = SaviTable::load_jsonl(text.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        let again = SaviTable::load_jsonl(t.to_jsonl().as_bytes()).unwrap();
        assert_eq!(again.to_jsonl(), t.to_jsonl());
        let bad = "{\"src\":\"2001:db8::1\",\"dst\":\"ff3e::1\",\"sport\":70000,\"dport\":2}\n";
        assert!(matches!(SaviTable::load_jsonl(bad.as_bytes()), Err(SaviError::Line { line: 1, .. })));
    }
}

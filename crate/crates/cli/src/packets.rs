//! Packet files: one packet per line as whitespace-separated `name=value`
//! pairs. Names are packet fields, state variables, or `table:<name>` for
//! the action index a table picks. `#` starts a comment.

use pipecat::ir::Program;
use pipecat::sim::MatchOutcomes;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PacketLine {
    pub line: usize,
    pub fields: Vec<(String, u64)>,
    pub state: Vec<(String, u64)>,
    pub outcomes: MatchOutcomes,
}

fn number(s: &str) -> Option<u64> {
    match s.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16).ok(),
        None => s.parse().ok(),
    }
}

pub fn parse_packets(src: &str, p: &Program) -> Result<Vec<PacketLine>, String> {
    let mut out = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let mut pkt = PacketLine {
            line: i + 1,
            ..Default::default()
        };
        for tok in text.split_whitespace() {
            let (name, val) = tok
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected name=value, got `{tok}`", i + 1))?;
            let v =
                number(val).ok_or_else(|| format!("line {}: `{val}` is not a number", i + 1))?;
            if let Some(t) = name.strip_prefix("table:") {
                if p.table(t).is_none() {
                    return Err(format!("line {}: unknown table `{t}`", i + 1));
                }
                pkt.outcomes.insert(t.to_string(), v as usize);
            } else if p.is_state(name) {
                pkt.state.push((name.to_string(), v));
            } else if p.field(name).is_some() {
                pkt.fields.push((name.to_string(), v));
            } else {
                return Err(format!("line {}: unknown name `{name}`", i + 1));
            }
        }
        out.push(pkt);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fields_state_and_outcomes() {
        let p = pipecat::ir::parse(
            "header pkt { bit<8> a; } register bit<8> s = 0; action x() { } \
             table t { key = { pkt.a; } actions = { x; } } control c { t.apply(); }",
        )
        .unwrap();
        let pk = parse_packets("# comment\n\npkt.a=3 s=0x1f table:t=1\n", &p).unwrap();
        assert_eq!(pk.len(), 1);
        assert_eq!(pk[0].line, 3);
        assert_eq!(pk[0].fields, vec![("pkt.a".into(), 3)]);
        assert_eq!(pk[0].state, vec![("s".into(), 31)]);
        assert_eq!(pk[0].outcomes["t"], 1);
        assert!(parse_packets("pkt.b=1", &p).is_err());
        assert!(parse_packets("pkt.a", &p).is_err());
    }
}

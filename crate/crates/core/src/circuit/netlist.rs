use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::units::{format_literal, parse_literal};
use crate::{Error, Result};

/// Default MOS channel length when a netlist omits `L=`.
pub const DEFAULT_CHANNEL_LENGTH: f64 = 45e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Nmos,
    Pmos,
    Resistor,
    Capacitor,
    Inductor,
    Vsource,
    Isource,
    Balun,
    Varactor,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 9] = [
        ComponentKind::Nmos,
        ComponentKind::Pmos,
        ComponentKind::Resistor,
        ComponentKind::Capacitor,
        ComponentKind::Inductor,
        ComponentKind::Vsource,
        ComponentKind::Isource,
        ComponentKind::Balun,
        ComponentKind::Varactor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ComponentKind::Nmos => "nmos",
            ComponentKind::Pmos => "pmos",
            ComponentKind::Resistor => "resistor",
            ComponentKind::Capacitor => "capacitor",
            ComponentKind::Inductor => "inductor",
            ComponentKind::Vsource => "vsource",
            ComponentKind::Isource => "isource",
            ComponentKind::Balun => "balun",
            ComponentKind::Varactor => "varactor",
        }
    }

    /// Number of terminals, in declaration order: MOS `d g s`, balun
    /// `in out ref`, everything else two.
    pub fn terminal_count(self) -> usize {
        match self {
            ComponentKind::Nmos | ComponentKind::Pmos | ComponentKind::Balun => 3,
            _ => 2,
        }
    }

    pub fn is_mos(self) -> bool {
        matches!(self, ComponentKind::Nmos | ComponentKind::Pmos)
    }

    pub fn is_source(self) -> bool {
        matches!(self, ComponentKind::Vsource | ComponentKind::Isource)
    }

    /// Numeric attributes this kind accepts, with the default used when the
    /// attribute is omitted (`None` means required).
    pub fn attributes(self) -> &'static [(&'static str, Option<f64>)] {
        match self {
            ComponentKind::Nmos | ComponentKind::Pmos => {
                &[("W", None), ("L", Some(DEFAULT_CHANNEL_LENGTH))]
            }
            ComponentKind::Resistor => &[("R", None)],
            ComponentKind::Capacitor => &[("C", None)],
            ComponentKind::Inductor => &[("L", None)],
            ComponentKind::Vsource => &[("V", Some(0.0))],
            ComponentKind::Isource => &[("I", Some(0.0))],
            ComponentKind::Balun => &[("Lp", None), ("Ls", None), ("Lm", None)],
            ComponentKind::Varactor => &[("W", None)],
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComponentKind {
    type Err = ();

    fn from_str(s: &str) -> core::result::Result<Self, ()> {
        ComponentKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

/// Excitation of an independent source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    #[default]
    Dc,
    Ac,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Literal(f64),
    Symbol(String),
}

impl AttrValue {
    pub fn symbol(&self) -> Option<&str> {
        match self {
            AttrValue::Symbol(s) => Some(s),
            AttrValue::Literal(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDecl {
    pub id: String,
    pub kind: ComponentKind,
    pub terminals: Vec<String>,
    /// Every attribute of the kind, defaults filled in.
    pub attrs: BTreeMap<String, AttrValue>,
    /// Present for sources only.
    pub source: Option<SourceKind>,
    /// 1-based source line, 0 when built programmatically.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    /// Typical magnitude of the parameter in SI units.
    pub scale: f64,
}

impl ParamSpec {
    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }

    pub fn clip(&self, value: f64) -> f64 {
        value.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    pub name: String,
    pub components: Vec<ComponentDecl>,
    /// Free parameters in declaration order.
    pub parameters: Vec<ParamSpec>,
    pub constants: BTreeMap<String, f64>,
}

impl Netlist {
    pub fn parameter(&self, name: &str) -> Option<&ParamSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn is_declared(&self, symbol: &str) -> bool {
        self.parameter(symbol).is_some() || self.constants.contains_key(symbol)
    }

    /// Nets in first-appearance order.
    pub fn nets(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.components {
            for t in &c.terminals {
                if !out.contains(&t.as_str()) {
                    out.push(t);
                }
            }
        }
        out
    }

    /// Equality that ignores source line numbers.
    pub fn structurally_eq(&self, other: &Netlist) -> bool {
        self.name == other.name
            && self.parameters == other.parameters
            && self.constants == other.constants
            && self.components.len() == other.components.len()
            && self.components.iter().zip(&other.components).all(|(a, b)| {
                a.id == b.id
                    && a.kind == b.kind
                    && a.terminals == b.terminals
                    && a.attrs == b.attrs
                    && a.source == b.source
            })
    }

    /// Renders the netlist in the text format accepted by [`parse_netlist`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, ".title {}", self.name);
        for p in &self.parameters {
            let _ = writeln!(
                out,
                ".param {} {} {} {}",
                p.name,
                format_literal(p.lower),
                format_literal(p.upper),
                format_literal(p.scale)
            );
        }
        for (name, value) in &self.constants {
            let _ = writeln!(out, ".const {} {}", name, format_literal(*value));
        }
        for c in &self.components {
            let _ = write!(out, "{} {}", c.id, c.kind);
            for t in &c.terminals {
                let _ = write!(out, " {t}");
            }
            for (k, v) in &c.attrs {
                match v {
                    AttrValue::Literal(x) => {
                        let _ = write!(out, " {k}={}", format_literal(*x));
                    }
                    AttrValue::Symbol(s) => {
                        let _ = write!(out, " {k}={s}");
                    }
                }
            }
            if let Some(src) = c.source {
                let _ = write!(out, " src={}", if src == SourceKind::Ac { "ac" } else { "dc" });
            }
            out.push('\n');
        }
        out
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn is_net_name(s: &str) -> bool {
    !s.is_empty()
        && !s.contains('=')
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '+' | '-'))
}

fn error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Whitespace-separated tokens with their 1-based columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

fn literal(line: usize, column: usize, text: &str) -> Result<f64> {
    parse_literal(text).ok_or_else(|| error(line, column, format!("expected a number, got `{text}`")))
}

/// Parses the line-based netlist format.
///
/// ```text
/// .title rc
/// .param R1 100 600 1k
/// .const VDD 1.1
/// R1 resistor n1 n2 R=R1
/// M1 nmos d g s W=W1 L=45n
/// V1 vsource vdd 0 V=VDD src=dc
/// ```
pub fn parse_netlist(text: &str) -> Result<Netlist> {
    let mut netlist = Netlist {
        name: String::new(),
        components: Vec::new(),
        parameters: Vec::new(),
        constants: BTreeMap::new(),
    };
    // (line, column, symbol) of every symbolic reference, checked at the end.
    let mut references: Vec<(usize, usize, String)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks = tokens(content);
        let Some(&(col0, head)) = toks.first() else { continue };

        if let Some(directive) = head.strip_prefix('.') {
            match directive.to_ascii_lowercase().as_str() {
                "title" => {
                    if toks.len() != 2 {
                        return Err(error(line_no, col0, ".title takes one name"));
                    }
                    netlist.name = toks[1].1.to_string();
                }
                "param" => {
                    if toks.len() != 5 {
                        return Err(error(line_no, col0, ".param takes NAME MIN MAX SCALE"));
                    }
                    let (c, name) = toks[1];
                    if !is_identifier(name) {
                        return Err(error(line_no, c, format!("bad parameter name `{name}`")));
                    }
                    if netlist.is_declared(name) {
                        return Err(error(line_no, c, format!("`{name}` declared twice")));
                    }
                    let lower = literal(line_no, toks[2].0, toks[2].1)?;
                    let upper = literal(line_no, toks[3].0, toks[3].1)?;
                    let scale = literal(line_no, toks[4].0, toks[4].1)?;
                    if lower > upper {
                        return Err(error(line_no, toks[2].0, format!("`{name}`: MIN exceeds MAX")));
                    }
                    if scale <= 0.0 {
                        return Err(error(line_no, toks[4].0, format!("`{name}`: SCALE must be positive")));
                    }
                    netlist.parameters.push(ParamSpec {
                        name: name.to_string(),
                        lower,
                        upper,
                        scale,
                    });
                }
                "const" => {
                    if toks.len() != 3 {
                        return Err(error(line_no, col0, ".const takes NAME VALUE"));
                    }
                    let (c, name) = toks[1];
                    if !is_identifier(name) {
                        return Err(error(line_no, c, format!("bad constant name `{name}`")));
                    }
                    if netlist.is_declared(name) {
                        return Err(error(line_no, c, format!("`{name}` declared twice")));
                    }
                    let value = literal(line_no, toks[2].0, toks[2].1)?;
                    netlist.constants.insert(name.to_string(), value);
                }
                _ => return Err(error(line_no, col0, format!("unknown directive `{head}`"))),
            }
            continue;
        }

        if !is_identifier(head) {
            return Err(error(line_no, col0, format!("bad component id `{head}`")));
        }
        if netlist.components.iter().any(|c| c.id == head) {
            return Err(error(line_no, col0, format!("component `{head}` declared twice")));
        }
        let Some(&(kcol, kind_text)) = toks.get(1) else {
            return Err(error(line_no, col0, "missing component kind"));
        };
        let kind: ComponentKind = kind_text
            .parse()
            .map_err(|_| error(line_no, kcol, format!("unknown component kind `{kind_text}`")))?;

        let rest = &toks[2..];
        let n_terms = rest.iter().take_while(|(_, t)| !t.contains('=')).count();
        if n_terms != kind.terminal_count() {
            return Err(error(
                line_no,
                kcol,
                format!(
                    "{kind} `{head}` needs {} terminals, got {n_terms}",
                    kind.terminal_count()
                ),
            ));
        }
        let mut terminals = Vec::with_capacity(n_terms);
        for &(c, t) in &rest[..n_terms] {
            if !is_net_name(t) {
                return Err(error(line_no, c, format!("bad net name `{t}`")));
            }
            terminals.push(t.to_string());
        }

        let mut attrs = BTreeMap::new();
        let mut source = kind.is_source().then_some(SourceKind::Dc);
        for &(c, tok) in &rest[n_terms..] {
            let Some((key, value)) = tok.split_once('=') else {
                return Err(error(line_no, c, format!("expected key=value, got `{tok}`")));
            };
            if key == "src" {
                if !kind.is_source() {
                    return Err(error(line_no, c, format!("{kind} takes no `src`")));
                }
                source = Some(match value.to_ascii_lowercase().as_str() {
                    "dc" => SourceKind::Dc,
                    "ac" => SourceKind::Ac,
                    _ => return Err(error(line_no, c, format!("src must be dc or ac, got `{value}`"))),
                });
                continue;
            }
            if !kind.attributes().iter().any(|(k, _)| *k == key) {
                return Err(error(line_no, c, format!("{kind} has no attribute `{key}`")));
            }
            if attrs.contains_key(key) {
                return Err(error(line_no, c, format!("attribute `{key}` given twice")));
            }
            let v = if let Some(x) = parse_literal(value) {
                AttrValue::Literal(x)
            } else if is_identifier(value) {
                references.push((line_no, c + key.len() + 1, value.to_string()));
                AttrValue::Symbol(value.to_string())
            } else {
                return Err(error(line_no, c, format!("bad value `{value}` for `{key}`")));
            };
            attrs.insert(key.to_string(), v);
        }
        for &(key, default) in kind.attributes() {
            if attrs.contains_key(key) {
                continue;
            }
            match default {
                Some(d) => {
                    attrs.insert(key.to_string(), AttrValue::Literal(d));
                }
                None => {
                    return Err(error(line_no, col0, format!("{kind} `{head}` needs `{key}=`")));
                }
            }
        }
        netlist.components.push(ComponentDecl {
            id: head.to_string(),
            kind,
            terminals,
            attrs,
            source,
            line: line_no,
        });
    }

    for (line, column, symbol) in references {
        if !netlist.is_declared(&symbol) {
            return Err(error(line, column, format!("undeclared symbol `{symbol}`")));
        }
    }
    if netlist.components.is_empty() {
        return Err(error(1, 1, "netlist declares no components"));
    }
    Ok(netlist)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_resistor() {
        let n = parse_netlist(".param R1 100 600 1k\nR1 resistor n1 n2 R=R1\n").unwrap();
        assert_eq!(n.components.len(), 1);
        assert_eq!(n.parameters.len(), 1);
        assert_eq!(n.components[0].attrs["R"], AttrValue::Symbol("R1".into()));
    }

    #[test]
    fn mos_line() {
        let n = parse_netlist(".param W1 1u 10u 1u\nM1 nmos d g s W=W1 L=45n").unwrap();
        let m = &n.components[0];
        assert_eq!(m.kind, ComponentKind::Nmos);
        assert_eq!(m.terminals, ["d", "g", "s"]);
        assert_eq!(m.attrs["L"], AttrValue::Literal(45e-9));
    }

    #[test]
    fn terminal_count_error_reports_line() {
        let err = parse_netlist("R1 resistor n1").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err:?}");
    }

    #[test]
    fn undeclared_symbol() {
        let err = parse_netlist("\nC1 capacitor a b C=C9").unwrap_err();
        match err {
            Error::Parse { line, column, message } => {
                assert_eq!((line, column), (2, 20));
                assert!(message.contains("C9"));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn unknown_kind_and_attribute() {
        assert!(parse_netlist("X1 diode a b").is_err());
        assert!(parse_netlist("R1 resistor a b C=1").is_err());
        assert!(parse_netlist("R1 resistor a b").is_err());
        assert!(parse_netlist("R1 resistor a b R=1 src=ac").is_err());
    }

    #[test]
    fn defaults_and_sources() {
        let n = parse_netlist("V1 vsource in 0 src=ac\nI1 isource a 0 I=1m").unwrap();
        assert_eq!(n.components[0].source, Some(SourceKind::Ac));
        assert_eq!(n.components[0].attrs["V"], AttrValue::Literal(0.0));
        assert_eq!(n.components[1].source, Some(SourceKind::Dc));
    }

    #[test]
    fn comments_and_blank_lines() {
        let n = parse_netlist("# header\n\n.title t # name\nR1 resistor a b R=1k # load\n").unwrap();
        assert_eq!(n.name, "t");
        assert_eq!(n.components[0].attrs["R"], AttrValue::Literal(1e3));
    }

    #[test]
    fn round_trip() {
        let text = ".title amp\n.param W1 1u 20u 1u\n.const VDD 1.1\n\
                    V1 vsource vdd 0 V=VDD\nM1 nmos out in 0 W=W1\nR1 resistor vdd out R=1.5k\n\
                    B1 balun out o2 0 Lp=1n Ls=2n Lm=0.5n\n";
        let n = parse_netlist(text).unwrap();
        let again = parse_netlist(&n.to_text()).unwrap();
        assert!(n.structurally_eq(&again));
    }
}

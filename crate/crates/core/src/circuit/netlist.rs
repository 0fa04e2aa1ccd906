use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::device::CompactModelParams;
use crate::error::{Error, Result};

/// Name of the reference node.
pub const GROUND: &str = "0";

/// Piecewise-linear voltage, `(t s, v V)` with strictly increasing `t`.
/// Held constant before the first and after the last point.
#[derive(Debug, Clone, PartialEq)]
pub struct Pwl {
    points: Vec<(f64, f64)>,
}

impl Pwl {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("PWL source needs at least one point".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Validation("PWL times must increase strictly".into()));
        }
        Ok(Self { points })
    }

    pub fn dc(v: f64) -> Self {
        Self { points: vec![(0.0, v)] }
    }

    pub fn at(&self, t: f64) -> f64 {
        let p = &self.points;
        if t <= p[0].0 {
            return p[0].1;
        }
        let k = p.partition_point(|&(ti, _)| ti <= t);
        if k == p.len() {
            return p[k - 1].1;
        }
        let (t0, v0) = p[k - 1];
        let (t1, v1) = p[k];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Times where the slope changes.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Resistor {
        name: String,
        a: String,
        b: String,
        ohms: f64,
    },
    Capacitor {
        name: String,
        a: String,
        b: String,
        farads: f64,
    },
    Source {
        name: String,
        pos: String,
        neg: String,
        wave: Pwl,
    },
    Transistor {
        name: String,
        drain: String,
        gate: String,
        source: String,
        params: Box<CompactModelParams>,
        /// Channel temperature used for the whole run, K.
        temperature: f64,
    },
}

impl Element {
    pub fn name(&self) -> &str {
        match self {
            Element::Resistor { name, .. }
            | Element::Capacitor { name, .. }
            | Element::Source { name, .. }
            | Element::Transistor { name, .. } => name,
        }
    }

    pub fn nodes(&self) -> Vec<&str> {
        match self {
            Element::Resistor { a, b, .. } | Element::Capacitor { a, b, .. } => vec![a, b],
            Element::Source { pos, neg, .. } => vec![pos, neg],
            Element::Transistor {
                drain, gate, source, ..
            } => vec![drain, gate, source],
        }
    }

    /// Ω for resistors, F for capacitors.
    pub fn value(&self) -> Option<f64> {
        match self {
            Element::Resistor { ohms, .. } => Some(*ohms),
            Element::Capacitor { farads, .. } => Some(*farads),
            _ => None,
        }
    }
}

/// Flat list of uniquely named elements. Node `0` is ground.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Netlist {
    elements: Vec<Element>,
}

impl Netlist {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn add(&mut self, element: Element) -> Result<()> {
        if self.get(element.name()).is_some() {
            return Err(Error::Validation(format!("duplicate element name `{}`", element.name())));
        }
        let bad_value = match &element {
            Element::Resistor { ohms, .. } => !(*ohms > 0.0 && ohms.is_finite()),
            Element::Capacitor { farads, .. } => !(*farads >= 0.0 && farads.is_finite()),
            Element::Transistor { temperature, .. } => !(*temperature > 0.0),
            Element::Source { .. } => false,
        };
        if bad_value {
            return Err(Error::Validation(format!("element `{}` has an invalid value", element.name())));
        }
        if element.nodes().iter().any(|n| n.is_empty()) {
            return Err(Error::Validation(format!("element `{}` has an empty node name", element.name())));
        }
        self.elements.push(element);
        Ok(())
    }

    pub fn resistor(&mut self, name: &str, a: &str, b: &str, ohms: f64) -> Result<()> {
        self.add(Element::Resistor {
            name: name.into(),
            a: a.into(),
            b: b.into(),
            ohms,
        })
    }

    pub fn capacitor(&mut self, name: &str, a: &str, b: &str, farads: f64) -> Result<()> {
        self.add(Element::Capacitor {
            name: name.into(),
            a: a.into(),
            b: b.into(),
            farads,
        })
    }

    pub fn source(&mut self, name: &str, pos: &str, neg: &str, wave: Pwl) -> Result<()> {
        self.add(Element::Source {
            name: name.into(),
            pos: pos.into(),
            neg: neg.into(),
            wave,
        })
    }

    pub fn transistor(
        &mut self,
        name: &str,
        drain: &str,
        gate: &str,
        source: &str,
        params: &CompactModelParams,
        temperature: f64,
    ) -> Result<()> {
        self.add(Element::Transistor {
            name: name.into(),
            drain: drain.into(),
            gate: gate.into(),
            source: source.into(),
            params: Box::new(params.clone()),
            temperature,
        })
    }

    pub fn get(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name() == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(Element::value)
    }

    pub fn nodes(&self) -> BTreeSet<&str> {
        self.elements.iter().flat_map(|e| e.nodes()).collect()
    }

    /// Appends all elements of `other`.
    pub fn extend(&mut self, other: &Netlist) -> Result<()> {
        for e in &other.elements {
            self.add(e.clone())?;
        }
        Ok(())
    }

    /// Renames nodes through `map`; unmapped nodes keep their names.
    pub fn map_nodes(&self, map: impl Fn(&str) -> String) -> Netlist {
        let elements = self
            .elements
            .iter()
            .map(|e| {
                let mut e = e.clone();
                match &mut e {
                    Element::Resistor { a, b, .. } | Element::Capacitor { a, b, .. } => {
                        *a = map(a);
                        *b = map(b);
                    }
                    Element::Source { pos, neg, .. } => {
                        *pos = map(pos);
                        *neg = map(neg);
                    }
                    Element::Transistor {
                        drain, gate, source, ..
                    } => {
                        *drain = map(drain);
                        *gate = map(gate);
                        *source = map(source);
                    }
                }
                e
            })
            .collect();
        Netlist { elements }
    }

    /// SPICE-style text of the resistors and capacitors, four significant
    /// digits. Other element kinds have no card here and are skipped.
    pub fn to_spice(&self, title: &str) -> String {
        let mut out = String::new();
        for line in title.lines() {
            let _ = writeln!(out, "* {line}");
        }
        for e in &self.elements {
            match e {
                Element::Resistor { name, a, b, ohms } => {
                    let _ = writeln!(out, "{name} {a} {b} {ohms:.3e}");
                }
                Element::Capacitor { name, a, b, farads } => {
                    let _ = writeln!(out, "{name} {a} {b} {farads:.3e}");
                }
                _ => {}
            }
        }
        out.push_str(".end\n");
        out
    }

    /// Reads resistor and capacitor cards. `file` is used in error messages.
    pub fn parse_spice(text: &str, file: &str) -> Result<Netlist> {
        let mut net = Netlist::new();
        for (n, raw) in text.lines().enumerate() {
            let err = |reason: String| Error::Parse {
                file: file.to_string(),
                line: n + 1,
                reason,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('*') {
                continue;
            }
            if line.eq_ignore_ascii_case(".end") {
                break;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 4 {
                return Err(err(format!("expected `<name> <node> <node> <value>`, got `{line}`")));
            }
            let value = parse_value(tokens[3]).ok_or_else(|| err(format!("bad value `{}`", tokens[3])))?;
            let added = match tokens[0].chars().next().map(|c| c.to_ascii_uppercase()) {
                Some('R') => net.resistor(tokens[0], tokens[1], tokens[2], value),
                Some('C') => net.capacitor(tokens[0], tokens[1], tokens[2], value),
                _ => return Err(err(format!("unsupported element `{}`", tokens[0]))),
            };
            added.map_err(|e| err(e.to_string()))?;
        }
        Ok(net)
    }
}

/// Number with an optional SPICE scale suffix (`f p n u m k meg g t`) and
/// trailing unit letters.
fn parse_value(token: &str) -> Option<f64> {
    if let Ok(v) = token.parse::<f64>() {
        return Some(v);
    }
    let lower = token.to_ascii_lowercase();
    let split = lower
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e')
        .or_else(|| {
            // An `e` not followed by a digit or sign starts a suffix.
            lower.char_indices().find_map(|(i, c)| {
                let next = lower[i + 1..].chars().next();
                (c == 'e' && !matches!(next, Some('0'..='9' | '+' | '-'))).then_some(i)
            })
        })?;
    let (num, suffix) = lower.split_at(split);
    let base: f64 = num.parse().ok()?;
    let scale = if suffix.starts_with("meg") {
        1e6
    } else {
        match suffix.chars().next()? {
            'f' => 1e-15,
            'p' => 1e-12,
            'n' => 1e-9,
            'u' => 1e-6,
            'm' => 1e-3,
            'k' => 1e3,
            'g' => 1e9,
            't' => 1e12,
            _ => 1.0,
        }
    };
    Some(base * scale)
}

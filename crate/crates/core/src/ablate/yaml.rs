//! Natural-language stripping for Ansible YAML.
//!
//! The document is rebuilt from the parser's event stream (which carries no
//! comments) and written back out in block style.

use std::collections::{HashMap, HashSet};

use yaml_rust2::parser::{Event, MarkedEventReceiver, Parser, Tag};
use yaml_rust2::scanner::{Marker, TScalarStyle};

use super::AblateError;

#[derive(Debug, Clone, PartialEq)]
struct Props {
    anchor: usize,
    tag: Option<Tag>,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Scalar {
        value: String,
        style: TScalarStyle,
        props: Props,
    },
    Seq {
        items: Vec<Node>,
        props: Props,
    },
    Map {
        entries: Vec<(Node, Node)>,
        props: Props,
    },
    Alias(usize),
}

enum Frame {
    Seq(Vec<Node>, Props),
    Map(Vec<(Node, Node)>, Option<Node>, Props),
}

#[derive(Default)]
struct Builder {
    stack: Vec<Frame>,
    docs: Vec<Node>,
}

impl Builder {
    fn add(&mut self, node: Node) {
        match self.stack.last_mut() {
            None => self.docs.push(node),
            Some(Frame::Seq(items, _)) => items.push(node),
            Some(Frame::Map(entries, pending, _)) => match pending.take() {
                None => *pending = Some(node),
                Some(key) => entries.push((key, node)),
            },
        }
    }
}

impl MarkedEventReceiver for Builder {
    fn on_event(&mut self, ev: Event, _mark: Marker) {
        match ev {
            Event::Scalar(value, style, anchor, tag) => self.add(Node::Scalar {
                value,
                style,
                props: Props { anchor, tag },
            }),
            Event::Alias(id) => self.add(Node::Alias(id)),
            Event::SequenceStart(anchor, tag) => {
                self.stack.push(Frame::Seq(Vec::new(), Props { anchor, tag }))
            }
            Event::MappingStart(anchor, tag) => {
                self.stack
                    .push(Frame::Map(Vec::new(), None, Props { anchor, tag }))
            }
            Event::SequenceEnd | Event::MappingEnd => {
                let node = match self.stack.pop() {
                    Some(Frame::Seq(items, props)) => Node::Seq { items, props },
                    Some(Frame::Map(entries, _, props)) => Node::Map { entries, props },
                    None => return,
                };
                self.add(node);
            }
            _ => {}
        }
    }
}

fn parse(text: &str) -> Result<Vec<Node>, AblateError> {
    let mut builder = Builder::default();
    Parser::new_from_str(text)
        .load(&mut builder, true)
        .map_err(|e| AblateError::Yaml {
            message: e.info().to_string(),
            line: e.marker().line(),
            col: e.marker().col(),
        })?;
    Ok(builder.docs)
}

fn collect_anchors(node: &Node, out: &mut HashSet<usize>) {
    match node {
        Node::Scalar { props, .. } => {
            out.insert(props.anchor);
        }
        Node::Seq { items, props } => {
            out.insert(props.anchor);
            items.iter().for_each(|n| collect_anchors(n, out));
        }
        Node::Map { entries, props } => {
            out.insert(props.anchor);
            for (k, v) in entries {
                collect_anchors(k, out);
                collect_anchors(v, out);
            }
        }
        Node::Alias(_) => {}
    }
}

fn prune(node: &mut Node, keys: &HashSet<&str>, removed: &mut HashSet<usize>) {
    match node {
        Node::Seq { items, .. } => items.iter_mut().for_each(|n| prune(n, keys, removed)),
        Node::Map { entries, .. } => {
            entries.retain(|(k, v)| {
                let drop = matches!(k, Node::Scalar { value, .. } if keys.contains(value.as_str()));
                if drop {
                    collect_anchors(k, removed);
                    collect_anchors(v, removed);
                }
                !drop
            });
            for (k, v) in entries.iter_mut() {
                prune(k, keys, removed);
                prune(v, keys, removed);
            }
        }
        Node::Scalar { .. } | Node::Alias(_) => {}
    }
}

fn dangling(node: &Node, removed: &HashSet<usize>) -> Option<usize> {
    match node {
        Node::Alias(id) if removed.contains(id) => Some(*id),
        Node::Seq { items, .. } => items.iter().find_map(|n| dangling(n, removed)),
        Node::Map { entries, .. } => entries
            .iter()
            .find_map(|(k, v)| dangling(k, removed).or_else(|| dangling(v, removed))),
        _ => None,
    }
}

fn is_control(c: char) -> bool {
    (c.is_control() && c != '\t') || matches!(c, '\u{2028}' | '\u{2029}' | '\u{feff}')
}

/// Whether `value`, read as a plain scalar in block context, yields itself.
fn plain_safe(value: &str) -> bool {
    let Some(first) = value.chars().next() else {
        return false;
    };
    if value.starts_with(char::is_whitespace)
        || value.ends_with(char::is_whitespace)
        || value.chars().any(|c| c == '\n' || is_control(c))
        || value.contains(": ")
        || value.contains(" #")
        || value.ends_with(':')
        || value.starts_with("---")
        || value.starts_with("...")
    {
        return false;
    }
    if "-?:".contains(first) {
        return value
            .chars()
            .nth(1)
            .is_some_and(|c| !c.is_whitespace());
    }
    !",[]{}#&*!|>'\"%@`".contains(first)
}

fn double_quoted(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\0' => out.push_str("\\0"),
            '\u{85}' => out.push_str("\\N"),
            '\u{2028}' => out.push_str("\\L"),
            '\u{2029}' => out.push_str("\\P"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                out.push_str(&format!("\\x{:02x}", c as u32))
            }
            c if is_control(c) => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn single_quoted(value: &str) -> Option<String> {
    if value.chars().any(|c| c == '\n' || is_control(c)) {
        return None;
    }
    Some(format!("'{}'", value.replace('\'', "''")))
}

/// Literal block form, when it round-trips.
fn literal_lines(value: &str) -> Option<(String, Vec<&str>)> {
    if value.chars().any(|c| c != '\n' && is_control(c)) {
        return None;
    }
    let body = value.trim_end_matches('\n');
    let trailing = value.len() - body.len();
    let lines: Vec<&str> = body.split('\n').collect();
    let first = lines.iter().find(|l| !l.is_empty())?;
    if first.starts_with([' ', '\t'])
        || lines
            .iter()
            .any(|l| !l.is_empty() && l.trim_start_matches(' ').is_empty())
    {
        return None;
    }
    let header = match trailing {
        0 => "|-",
        1 => "|",
        _ => "|+",
    };
    let mut out = lines;
    out.extend(std::iter::repeat_n("", trailing.saturating_sub(1)));
    Some((header.to_string(), out))
}

enum Rendered<'a> {
    Inline(String),
    Block(String, Vec<&'a str>),
}

fn render_scalar(value: &str, style: TScalarStyle, key: bool) -> Rendered<'_> {
    match style {
        TScalarStyle::Plain if value.is_empty() => Rendered::Inline(String::new()),
        TScalarStyle::Plain if plain_safe(value) => Rendered::Inline(value.to_string()),
        TScalarStyle::SingleQuoted => match single_quoted(value) {
            Some(s) => Rendered::Inline(s),
            None => Rendered::Inline(double_quoted(value)),
        },
        TScalarStyle::Literal | TScalarStyle::Folded if !key => match literal_lines(value) {
            Some((header, lines)) => Rendered::Block(header, lines),
            None => Rendered::Inline(double_quoted(value)),
        },
        _ => Rendered::Inline(double_quoted(value)),
    }
}

struct Emitter {
    anchors: HashMap<usize, usize>,
    lines: Vec<String>,
}

fn pad(n: usize) -> String {
    " ".repeat(n)
}

fn join(parts: &[&str]) -> String {
    parts
        .iter()
        .filter(|p| !p.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}

impl Emitter {
    fn props(&mut self, props: &Props) -> String {
        let mut parts = Vec::new();
        if props.anchor != 0 {
            let next = self.anchors.len() + 1;
            let n = *self.anchors.entry(props.anchor).or_insert(next);
            parts.push(format!("&a{n}"));
        }
        if let Some(tag) = &props.tag {
            parts.push(match (tag.handle.as_str(), tag.suffix.as_str()) {
                ("tag:yaml.org,2002:", s) => format!("!!{s}"),
                ("!", s) => format!("!{s}"),
                ("", "!") => "!".to_string(),
                (h, s) => format!("!<{h}{s}>"),
            });
        }
        parts.join(" ")
    }

    fn alias(&self, id: usize) -> Result<String, AblateError> {
        self.anchors
            .get(&id)
            .map(|n| format!("*a{n}"))
            .ok_or(AblateError::DanglingAlias)
    }

    fn key(&mut self, node: &Node) -> Result<String, AblateError> {
        match node {
            Node::Scalar {
                value,
                style,
                props,
            } => {
                let props = self.props(props);
                let Rendered::Inline(text) = render_scalar(value, *style, true) else {
                    unreachable!("keys are always inline")
                };
                Ok(format!("{}:", join(&[&props, &text])))
            }
            Node::Alias(id) => Ok(format!("{} :", self.alias(*id)?)),
            _ => Err(AblateError::ComplexKey),
        }
    }

    /// Emits `node` after `prefix` (a key or a dash) whose own indentation is
    /// `indent`.
    fn value(&mut self, prefix: String, node: &Node, indent: usize, dash: bool) -> Result<(), AblateError> {
        match node {
            Node::Alias(id) => {
                let alias = self.alias(*id)?;
                self.lines.push(join(&[&prefix, &alias]));
            }
            Node::Scalar {
                value,
                style,
                props,
            } => {
                let props = self.props(props);
                match render_scalar(value, *style, false) {
                    Rendered::Inline(text) => self.lines.push(join(&[&prefix, &props, &text])),
                    Rendered::Block(header, body) => {
                        self.lines.push(join(&[&prefix, &props, &header]));
                        for line in body {
                            self.lines.push(if line.is_empty() {
                                String::new()
                            } else {
                                format!("{}{line}", pad(indent + 2))
                            });
                        }
                    }
                }
            }
            Node::Seq { items, props } if items.is_empty() => {
                let props = self.props(props);
                self.lines.push(join(&[&prefix, &props, "[]"]));
            }
            Node::Map { entries, props } if entries.is_empty() => {
                let props = self.props(props);
                self.lines.push(join(&[&prefix, &props, "{}"]));
            }
            Node::Seq { props, .. } | Node::Map { props, .. } => {
                let props = self.props(props);
                let compact = dash && props.is_empty();
                let start = self.lines.len();
                if !compact {
                    self.lines.push(join(&[&prefix, &props]));
                }
                let first = self.lines.len();
                match node {
                    Node::Seq { items, .. } => self.seq(items, indent + 2)?,
                    Node::Map { entries, .. } => self.map(entries, indent + 2)?,
                    _ => unreachable!(),
                }
                if compact {
                    let line = &mut self.lines[first];
                    *line = format!("{}{}", prefix, &line[indent + 1..]);
                }
                debug_assert!(self.lines.len() > start);
            }
        }
        Ok(())
    }

    fn seq(&mut self, items: &[Node], indent: usize) -> Result<(), AblateError> {
        for item in items {
            self.value(format!("{}-", pad(indent)), item, indent, true)?;
        }
        Ok(())
    }

    fn map(&mut self, entries: &[(Node, Node)], indent: usize) -> Result<(), AblateError> {
        for (k, v) in entries {
            let key = self.key(k)?;
            self.value(format!("{}{key}", pad(indent)), v, indent, false)?;
        }
        Ok(())
    }

    fn document(&mut self, node: &Node, index: usize) -> Result<(), AblateError> {
        let header = if index > 0 { "---" } else { "" };
        match node {
            Node::Seq { items, props } if !items.is_empty() => {
                let props = self.props(props);
                let h = join(&[header, &props]);
                if !h.is_empty() {
                    self.lines.push(if props.is_empty() { h } else { join(&["---", &props]) });
                }
                self.seq(items, 0)
            }
            Node::Map { entries, props } if !entries.is_empty() => {
                let props = self.props(props);
                let h = join(&[header, &props]);
                if !h.is_empty() {
                    self.lines.push(if props.is_empty() { h } else { join(&["---", &props]) });
                }
                self.map(entries, 0)
            }
            Node::Scalar { value, props, .. } if value.is_empty() && props.anchor == 0 && props.tag.is_none() => {
                if index > 0 {
                    self.lines.push("---".to_string());
                }
                Ok(())
            }
            _ => {
                if index > 0 {
                    self.value("---".to_string(), node, 0, false)
                } else {
                    let at = self.lines.len();
                    self.value(String::new(), node, 0, false)?;
                    if self.lines[at].starts_with('|') || self.lines[at].starts_with(['&', '!']) {
                        self.lines[at] = format!("--- {}", self.lines[at]);
                    }
                    Ok(())
                }
            }
        }
    }
}

/// Removes comments and every mapping entry whose key is in `nl_keys`, at any
/// depth, and re-serializes the rest in block style with key order kept.
pub fn strip_ansible_nl(body: &str, nl_keys: &[String]) -> Result<String, AblateError> {
    let mut docs = parse(body)?;
    let keys: HashSet<&str> = nl_keys.iter().map(String::as_str).collect();
    let mut removed = HashSet::new();
    for doc in &mut docs {
        prune(doc, &keys, &mut removed);
    }
    removed.remove(&0);
    if docs.iter().any(|d| dangling(d, &removed).is_some()) {
        return Err(AblateError::DanglingAlias);
    }
    let mut emitter = Emitter {
        anchors: HashMap::new(),
        lines: Vec::new(),
    };
    for (i, doc) in docs.iter().enumerate() {
        emitter.document(doc, i)?;
    }
    let mut out = emitter.lines.join("\n");
    if body.ends_with('\n') && !out.is_empty() {
        out.push('\n');
    }
    Ok(out)
}

/// Keys of every mapping at any depth, for structural checks.
pub fn mapping_keys(body: &str) -> Result<Vec<String>, AblateError> {
    fn walk(node: &Node, out: &mut Vec<String>) {
        match node {
            Node::Seq { items, .. } => items.iter().for_each(|n| walk(n, out)),
            Node::Map { entries, .. } => {
                for (k, v) in entries {
                    if let Node::Scalar { value, .. } = k {
                        out.push(value.clone());
                    }
                    walk(k, out);
                    walk(v, out);
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    for doc in parse(body)? {
        walk(&doc, &mut out);
    }
    Ok(out)
}
